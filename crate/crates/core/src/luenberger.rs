//! Switched Luenberger observer for the three-cell converter.
//!
//! The output error `e1` is injected into the current estimate with gain
//! `kappa0` and into each capacitor estimate through input-weighted gains.
//! Unlike the sliding-mode observer, the `-R/L` term uses the estimated
//! current, so measurement noise enters only through the injections.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

use crate::converter::{ConverterParams, ModeVector};
use crate::error::{FlycapError, Result};

/// Relative tolerance for the semidefiniteness checks.
pub const CERT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuenbergerGains {
    /// `kappa0 .. kappa6`.
    pub kappa: [f64; 7],
}

impl LuenbergerGains {
    pub fn new(kappa: [f64; 7]) -> Result<Self> {
        let g = Self { kappa };
        g.validate()?;
        Ok(g)
    }

    /// Gains with `[[k1, k3], [k2, k4]] = -g I` and no `u3` injection.
    ///
    /// For any `g > 0` these are certified by [`natural_certificate`],
    /// which is then `diag(1, 1/(L g), 1/(L g))`.
    pub fn diagonal_family(kappa0: f64, g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(FlycapError::invalid(
                "luenberger.g",
                format!("must be finite and > 0, got {g}"),
            ));
        }
        Self::new([kappa0, -g, 0.0, 0.0, -g, 0.0, 0.0])
    }

    /// Shipped gains: `kappa0 = R/L` of the reference plant and `g = 2e5`.
    pub fn reference() -> Self {
        Self {
            kappa: [13_100.0, -2e5, 0.0, 0.0, -2e5, 0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, k) in self.kappa.iter().enumerate() {
            if !k.is_finite() {
                return Err(FlycapError::invalid(format!("luenberger.kappa{i}"), "must be finite"));
            }
        }
        if self.kappa[0] <= 0.0 {
            return Err(FlycapError::invalid(
                "luenberger.kappa0",
                format!("must be > 0, got {}", self.kappa[0]),
            ));
        }
        Ok(())
    }

    /// Injection vectors `K0..K3`.
    pub fn injection_vectors(&self) -> [[f64; 3]; 4] {
        let k = &self.kappa;
        [
            [k[0], 0.0, 0.0],
            [0.0, k[1], k[2]],
            [0.0, k[3], k[4]],
            [0.0, k[5], k[6]],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LuenbergerState {
    pub i_hat: f64,
    pub v_hat: [f64; 2],
}

impl LuenbergerState {
    pub fn new(i_hat: f64, v_hat: [f64; 2]) -> Self {
        Self { i_hat, v_hat }
    }

    pub fn is_finite(&self) -> bool {
        self.i_hat.is_finite() && self.v_hat.iter().all(|v| v.is_finite())
    }
}

fn require_three_cells(params: &ConverterParams) -> Result<()> {
    if params.cells() != 3 {
        return Err(FlycapError::UnsupportedCellCount {
            required: 3,
            got: params.cells(),
        });
    }
    Ok(())
}

pub fn luenberger_step(
    st: &LuenbergerState,
    i_meas: f64,
    mode: &ModeVector,
    params: &ConverterParams,
    gains: &LuenbergerGains,
    dt: f64,
) -> Result<LuenbergerState> {
    require_three_cells(params)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FlycapError::NonPositiveStep(dt));
    }
    if mode.cells() != 3 {
        return Err(FlycapError::Dimension {
            what: "mode vector",
            expected: 3,
            got: mode.cells(),
        });
    }
    let k = &gains.kappa;
    let (u1, u2, u3) = (mode.u(1), mode.u(2), mode.u(3));
    let l = params.inductance;
    let e1 = i_meas - st.i_hat;
    let di = -(params.resistance / l) * st.i_hat + (params.source_voltage / l) * u3
        - st.v_hat[0] / l * u1
        - st.v_hat[1] / l * u2
        + k[0] * e1;
    let dv1 = u1 / params.capacitances[0] * i_meas + (k[1] * u1 + k[3] * u2 + k[5] * u3) * e1;
    let dv2 = u2 / params.capacitances[1] * i_meas + (k[2] * u1 + k[4] * u2 + k[6] * u3) * e1;
    Ok(LuenbergerState {
        i_hat: st.i_hat + dt * di,
        v_hat: [st.v_hat[0] + dt * dv1, st.v_hat[1] + dt * dv2],
    })
}

/// Error-dynamics matrices `A~0..A~3`, so that `de/dt = (A~0 + sum u_i A~i) e`
/// when the plant and observer share the nominal resistance.
pub fn error_matrices(params: &ConverterParams, gains: &LuenbergerGains) -> Result<[Matrix3<f64>; 4]> {
    require_three_cells(params)?;
    let l = params.inductance;
    let k = &gains.kappa;
    let mut a0 = Matrix3::zeros();
    a0[(0, 0)] = -params.resistance / l - k[0];
    let mut a1 = Matrix3::zeros();
    a1[(0, 1)] = -1.0 / l;
    a1[(1, 0)] = -k[1];
    a1[(2, 0)] = -k[2];
    let mut a2 = Matrix3::zeros();
    a2[(0, 2)] = -1.0 / l;
    a2[(1, 0)] = -k[3];
    a2[(2, 0)] = -k[4];
    let mut a3 = Matrix3::zeros();
    a3[(1, 0)] = -k[5];
    a3[(2, 0)] = -k[6];
    Ok([a0, a1, a2, a3])
}

/// Candidate `P~ = blockdiag(1, -G^-1 / L)` with `G = [[k1, k3], [k2, k4]]`.
///
/// This choice cancels every cross term between the current error and the
/// voltage errors. It is symmetric positive definite exactly when `G` is
/// symmetric negative definite; `None` if `G` is singular or not symmetric.
pub fn natural_certificate(params: &ConverterParams, gains: &LuenbergerGains) -> Option<Matrix3<f64>> {
    let k = &gains.kappa;
    let g = nalgebra::Matrix2::new(k[1], k[3], k[2], k[4]);
    if k[2] != k[3] {
        return None;
    }
    let m = -g.try_inverse()? / params.inductance;
    let mut p = Matrix3::zeros();
    p[(0, 0)] = 1.0;
    p.fixed_view_mut::<2, 2>(1, 1).copy_from(&m);
    Some(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub p_min_eigenvalue: f64,
    /// Largest eigenvalue of `A~i^T P + P A~i`, i = 0..3.
    pub form_max_eigenvalues: [f64; 4],
    /// Largest eigenvalue of the form for each of the 8 modes, by mode index.
    pub mode_max_eigenvalues: Vec<f64>,
    pub p_positive: bool,
    pub forms_ok: [bool; 4],
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.p_positive && self.forms_ok.iter().all(|&b| b)
    }

    /// Worst margin over the four forms; `<= 0` up to tolerance when certified.
    pub fn worst_form_eigenvalue(&self) -> f64 {
        self.form_max_eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn sym_eigenvalues(m: &Matrix3<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(*m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Negative semidefinite test for `A^T P + P A`.
///
/// Rounding in the products is of the order of `|A| |P|`, so the tolerance is
/// relative to the larger of that scale and the largest eigenvalue magnitude.
fn form_check(a: &Matrix3<f64>, p: &Matrix3<f64>) -> (f64, bool) {
    let form = a.transpose() * p + p * a;
    let form = (form + form.transpose()) * 0.5;
    let ev = sym_eigenvalues(&form);
    let max = *ev.last().expect("3 eigenvalues");
    let scale = ev
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(a.norm() * p.norm());
    (max, max <= CERT_TOLERANCE * scale)
}

/// Checks `P~ > 0` and `A~i^T P~ + P~ A~i <= 0` for i = 0..3.
pub fn certify_gains(
    gains: &LuenbergerGains,
    params: &ConverterParams,
    candidate: &DMatrix<f64>,
) -> Result<CertificationReport> {
    if candidate.nrows() != 3 || candidate.ncols() != 3 {
        return Err(FlycapError::Dimension {
            what: "candidate P",
            expected: 3,
            got: candidate.nrows().max(candidate.ncols()),
        });
    }
    let p = Matrix3::from_iterator(candidate.iter().copied());
    let asym = (p - p.transpose()).abs().max();
    if asym > 1e-12 * p.abs().max().max(f64::MIN_POSITIVE) {
        return Err(FlycapError::NonSymmetric { asymmetry: asym });
    }
    let mats = error_matrices(params, gains)?;

    let p_ev = sym_eigenvalues(&p);
    let p_min = p_ev[0];
    let p_max = p_ev[2];
    let p_positive = p_min > CERT_TOLERANCE * p_max.abs();

    let mut form_max_eigenvalues = [0.0; 4];
    let mut forms_ok = [false; 4];
    for (i, a) in mats.iter().enumerate() {
        let (max, ok) = form_check(a, &p);
        form_max_eigenvalues[i] = max;
        forms_ok[i] = ok;
    }
    let mode_max_eigenvalues = (0..8)
        .map(|idx| {
            let m = ModeVector::from_index(idx, 3).expect("index below 8");
            let a = mats[0] + mats[1] * m.u(1) + mats[2] * m.u(2) + mats[3] * m.u(3);
            form_check(&a, &p).0
        })
        .collect();

    Ok(CertificationReport {
        p_min_eigenvalue: p_min,
        form_max_eigenvalues,
        mode_max_eigenvalues,
        p_positive,
        forms_ok,
    })
}
