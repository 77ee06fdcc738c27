//! Switched-affine model of a p-cell flying-capacitor converter on an RL load.
//!
//! The continuous state is always ordered `[I, Vc1, ..., Vc(p-1)]`. Each cell
//! has a binary switch `S_j`; the model is driven by the derived inputs
//! `u_j = S_{j+1} - S_j` (j < p) and `u_p = S_p`.

use std::fmt;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{FlycapError, Result};

/// Physical constants of the converter and its load.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterParams {
    /// Source voltage E (V).
    pub source_voltage: f64,
    /// Load resistance R (Ω).
    pub resistance: f64,
    /// Load inductance L (H).
    pub inductance: f64,
    /// Flying capacitances c_1..c_(p-1) (F).
    pub capacitances: Vec<f64>,
}

impl ConverterParams {
    pub fn new(source_voltage: f64, resistance: f64, inductance: f64, capacitances: Vec<f64>) -> Result<Self> {
        let params = Self {
            source_voltage,
            resistance,
            inductance,
            capacitances,
        };
        params.validate()?;
        Ok(params)
    }

    /// Three-cell converter used throughout the reference scenarios:
    /// E = 150 V, c1 = c2 = 40 µF, R = 131 Ω, L = 10 mH.
    pub fn three_cell_reference() -> Self {
        Self {
            source_voltage: 150.0,
            resistance: 131.0,
            inductance: 10e-3,
            capacitances: vec![40e-6, 40e-6],
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("plant.E", self.source_voltage)?;
        positive("plant.R", self.resistance)?;
        positive("plant.L", self.inductance)?;
        if self.capacitances.is_empty() {
            return Err(FlycapError::invalid("plant.p", "a converter needs at least 2 cells"));
        }
        for (j, &c) in self.capacitances.iter().enumerate() {
            positive(&format!("plant.c{}", j + 1), c)?;
        }
        Ok(())
    }

    /// Number of commutation cells p.
    pub fn cells(&self) -> usize {
        self.capacitances.len() + 1
    }

    /// Dimension of the continuous state (equal to p).
    pub fn state_dim(&self) -> usize {
        self.cells()
    }

    pub fn with_resistance(&self, resistance: f64) -> Self {
        Self {
            resistance,
            ..self.clone()
        }
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(FlycapError::invalid(
            name,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

/// Switch states of all cells together with the derived discrete inputs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModeVector {
    switches: Vec<u8>,
    inputs: Vec<i8>,
}

impl ModeVector {
    /// Builds the mode from a binary switch vector `[S_1, ..., S_p]`.
    pub fn from_switches(switches: &[u8]) -> Result<Self> {
        if switches.len() < 2 {
            return Err(FlycapError::UnsupportedCellCount {
                required: 2,
                got: switches.len(),
            });
        }
        if let Some((position, &value)) = switches.iter().enumerate().find(|(_, &s)| s > 1) {
            return Err(FlycapError::NonBinarySwitch { position, value });
        }
        let p = switches.len();
        let mut inputs = Vec::with_capacity(p);
        for j in 0..p - 1 {
            inputs.push(switches[j + 1] as i8 - switches[j] as i8);
        }
        inputs.push(switches[p - 1] as i8);
        Ok(Self {
            switches: switches.to_vec(),
            inputs,
        })
    }

    /// Inverse of the input transform: recovers the switches by accumulating
    /// backwards from `S_p = u_p`.
    pub fn from_inputs(inputs: &[i8]) -> Result<Self> {
        let switches = switches_from_inputs(inputs)?;
        Self::from_switches(&switches)
    }

    /// Mode with index `index` in the ordering of the three-cell mode table:
    /// the switch vector read as a binary number with `S_1` most significant.
    pub fn from_index(index: usize, cells: usize) -> Result<Self> {
        if !(2..=16).contains(&cells) || index >= 1 << cells {
            return Err(FlycapError::invalid(
                "mode index",
                format!("{index} is not a valid mode for {cells} cells"),
            ));
        }
        let switches: Vec<u8> = (0..cells).map(|j| ((index >> (cells - 1 - j)) & 1) as u8).collect();
        Self::from_switches(&switches)
    }

    pub fn switches(&self) -> &[u8] {
        &self.switches
    }

    pub fn inputs(&self) -> &[i8] {
        &self.inputs
    }

    pub fn cells(&self) -> usize {
        self.switches.len()
    }

    /// `u_j` as a float, with `j` 1-based as in the model equations.
    pub fn u(&self, j: usize) -> f64 {
        self.inputs[j - 1] as f64
    }

    /// Source input `u_p = S_p`.
    pub fn source_input(&self) -> f64 {
        self.inputs[self.inputs.len() - 1] as f64
    }

    /// Capacitor inputs `u_1..u_(p-1)`.
    pub fn capacitor_inputs(&self) -> &[i8] {
        &self.inputs[..self.inputs.len() - 1]
    }

    pub fn index(&self) -> usize {
        self.switches.iter().fold(0usize, |acc, &s| (acc << 1) | s as usize)
    }
}

impl fmt::Display for ModeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, s) in self.switches.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "]")
    }
}

/// Derives the discrete inputs from a switch vector of a `cells`-cell converter.
pub fn derive_inputs(switches: &[u8], cells: usize) -> Result<ModeVector> {
    if switches.len() != cells {
        return Err(FlycapError::Dimension {
            what: "switch vector",
            expected: cells,
            got: switches.len(),
        });
    }
    ModeVector::from_switches(switches)
}

pub fn switches_from_inputs(inputs: &[i8]) -> Result<Vec<u8>> {
    let p = inputs.len();
    if p < 2 {
        return Err(FlycapError::UnsupportedCellCount { required: 2, got: p });
    }
    let mut switches = vec![0i8; p];
    switches[p - 1] = inputs[p - 1];
    for j in (0..p - 1).rev() {
        switches[j] = switches[j + 1] - inputs[j];
    }
    if switches.iter().any(|&s| !(0..=1).contains(&s)) {
        return Err(FlycapError::InconsistentInputs(inputs.to_vec()));
    }
    Ok(switches.into_iter().map(|s| s as u8).collect())
}

/// Continuous plant state at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Load current I (A).
    pub current: f64,
    /// Capacitor voltages Vc1..Vc(p-1) (V).
    pub voltages: Vec<f64>,
    /// Time (s).
    pub time: f64,
}

impl PlantState {
    pub fn new(current: f64, voltages: Vec<f64>, time: f64) -> Self {
        Self {
            current,
            voltages,
            time,
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.voltages.len() + 1);
        v[0] = self.current;
        for (j, &vc) in self.voltages.iter().enumerate() {
            v[j + 1] = vc;
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.current.is_finite() && self.voltages.iter().all(|v| v.is_finite())
    }
}

fn check_dims(x: &PlantState, mode: &ModeVector, params: &ConverterParams) -> Result<()> {
    let p = params.cells();
    if mode.cells() != p {
        return Err(FlycapError::Dimension {
            what: "mode vector",
            expected: p,
            got: mode.cells(),
        });
    }
    if x.voltages.len() != p - 1 {
        return Err(FlycapError::Dimension {
            what: "capacitor voltages",
            expected: p - 1,
            got: x.voltages.len(),
        });
    }
    Ok(())
}

/// Time derivative of the state, ordered like the state.
pub fn dynamics(x: &PlantState, mode: &ModeVector, params: &ConverterParams) -> Result<DVector<f64>> {
    check_dims(x, mode, params)?;
    let inputs: Vec<f64> = mode.inputs().iter().map(|&u| u as f64).collect();
    dynamics_with_inputs(x, &inputs, params)
}

/// Same as [`dynamics`] for an arbitrary real input vector `[u_1, ..., u_p]`,
/// including combinations no switch vector produces.
pub fn dynamics_with_inputs(x: &PlantState, inputs: &[f64], params: &ConverterParams) -> Result<DVector<f64>> {
    let p = params.cells();
    if inputs.len() != p {
        return Err(FlycapError::Dimension {
            what: "input vector",
            expected: p,
            got: inputs.len(),
        });
    }
    if x.voltages.len() != p - 1 {
        return Err(FlycapError::Dimension {
            what: "capacitor voltages",
            expected: p - 1,
            got: x.voltages.len(),
        });
    }
    let l = params.inductance;
    let mut dx = DVector::zeros(p);
    let mut di = -params.resistance / l * x.current + params.source_voltage / l * inputs[p - 1];
    for (j, (&vc, &c)) in x.voltages.iter().zip(&params.capacitances).enumerate() {
        di -= vc / l * inputs[j];
        dx[j + 1] = x.current / c * inputs[j];
    }
    dx[0] = di;
    Ok(dx)
}

/// Matrices of the switched-affine form `dx/dt = A(u) x + B(u)`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
}

impl SystemMatrices {
    pub fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

pub fn system_matrices(mode: &ModeVector, params: &ConverterParams) -> Result<SystemMatrices> {
    let inputs: Vec<f64> = mode.inputs().iter().map(|&u| u as f64).collect();
    system_matrices_with_inputs(&inputs, params)
}

pub fn system_matrices_with_inputs(inputs: &[f64], params: &ConverterParams) -> Result<SystemMatrices> {
    let p = params.cells();
    if inputs.len() != p {
        return Err(FlycapError::Dimension {
            what: "input vector",
            expected: p,
            got: inputs.len(),
        });
    }
    let l = params.inductance;
    let mut a = DMatrix::zeros(p, p);
    a[(0, 0)] = -params.resistance / l;
    for j in 1..p {
        let uj = inputs[j - 1];
        a[(0, j)] = -uj / l;
        a[(j, 0)] = uj / params.capacitances[j - 1];
    }
    let mut b = DVector::zeros(p);
    b[0] = params.source_voltage / l * inputs[p - 1];
    let mut c = RowDVector::zeros(p);
    c[0] = 1.0;
    Ok(SystemMatrices { a, b, c })
}

/// A coordinate of the continuous state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateCoord {
    Current,
    /// Capacitor voltage `Vc_j`, 1-based.
    Voltage(usize),
}

impl StateCoord {
    /// Position in the state vector.
    pub fn index(self) -> usize {
        match self {
            StateCoord::Current => 0,
            StateCoord::Voltage(j) => j,
        }
    }

    pub fn from_index(index: usize) -> Self {
        if index == 0 {
            StateCoord::Current
        } else {
            StateCoord::Voltage(index)
        }
    }
}

impl fmt::Display for StateCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateCoord::Current => write!(f, "I"),
            StateCoord::Voltage(j) => write!(f, "Vc{j}"),
        }
    }
}

/// Direction a capacitor voltage moves in a mode, for positive load current.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoltageTrend {
    Constant,
    Increasing,
    Decreasing,
}

impl VoltageTrend {
    fn from_input(u: i8) -> Self {
        match u.signum() {
            0 => VoltageTrend::Constant,
            1 => VoltageTrend::Increasing,
            _ => VoltageTrend::Decreasing,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            VoltageTrend::Constant => "~",
            VoltageTrend::Increasing => "up",
            VoltageTrend::Decreasing => "down",
        }
    }
}

/// Coordinates that can be recovered from the current while the converter
/// stays in `mode`: I always, and `Vc_j` exactly when `u_j != 0`.
pub fn observable_coordinates(mode: &ModeVector) -> Vec<StateCoord> {
    std::iter::once(StateCoord::Current)
        .chain(
            mode.capacitor_inputs()
                .iter()
                .enumerate()
                .filter(|(_, &u)| u != 0)
                .map(|(j, _)| StateCoord::Voltage(j + 1)),
        )
        .collect()
}

/// One row of the three-cell mode table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeRow {
    pub index: usize,
    pub mode: ModeVector,
    pub trends: Vec<VoltageTrend>,
    pub observable: Vec<StateCoord>,
}

/// The 2^p switching modes with their inputs, voltage trends and observable
/// states. Only the three-cell table is supported.
pub fn mode_table(cells: usize) -> Result<Vec<ModeRow>> {
    if cells != 3 {
        return Err(FlycapError::UnsupportedCellCount {
            required: 3,
            got: cells,
        });
    }
    (0..1usize << cells)
        .map(|index| {
            let mode = ModeVector::from_index(index, cells)?;
            let trends = mode
                .capacitor_inputs()
                .iter()
                .map(|&u| VoltageTrend::from_input(u))
                .collect();
            let observable = observable_coordinates(&mode);
            Ok(ModeRow {
                index,
                mode,
                trends,
                observable,
            })
        })
        .collect()
}
