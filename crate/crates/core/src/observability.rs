//! Observability of the switched-affine converter model.
//!
//! Two tools live here: the classical observability matrix of a single mode,
//! which is never full rank for a converter with at least three cells, and a
//! checker for observability of a function z of the state along a hybrid time
//! trajectory, built from per-interval coordinate projections.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::converter::{
    dynamics, mode_table, observable_coordinates, system_matrices, ConverterParams, ModeVector, PlantState, StateCoord,
};
use crate::error::{FlycapError, Result};
use crate::switching::HybridTimeTrajectory;

/// Relative singular-value threshold for numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityReport {
    /// Rows `C, CA, ..., CA^(p-1)`.
    pub matrix: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub observable_subspace_dim: usize,
}

/// Numerical rank: singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> (usize, Vec<f64>) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, Vec::new());
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let max = sv.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return (0, sv);
    }
    let rank = sv.iter().filter(|&&s| s > tol * max).count();
    (rank, sv)
}

pub fn observability_matrix(mode: &ModeVector, params: &ConverterParams) -> Result<ObservabilityReport> {
    let sm = system_matrices(mode, params)?;
    let p = params.cells();
    let mut matrix = DMatrix::zeros(p, p);
    let mut row = sm.c.clone();
    for k in 0..p {
        matrix.set_row(k, &row);
        row = &row * &sm.a;
    }
    let (rank, singular_values) = numerical_rank(&matrix, RANK_TOLERANCE);
    Ok(ObservabilityReport {
        matrix,
        singular_values,
        rank,
        observable_subspace_dim: rank,
    })
}

/// Selection of some coordinates of z: one unit row per selected coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    /// Selected positions within z, increasing.
    selected: Vec<usize>,
    dim: usize,
}

impl Projection {
    pub fn new(mut selected: Vec<usize>, dim: usize) -> Result<Self> {
        selected.sort_unstable();
        selected.dedup();
        if let Some(&bad) = selected.iter().find(|&&i| i >= dim) {
            return Err(FlycapError::invalid(
                "projection",
                format!("row selects position {bad} of a {dim}-dimensional function"),
            ));
        }
        Ok(Self { selected, dim })
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Positions eliminated by the projection.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.dim).filter(|i| !self.selected.contains(i)).collect()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.selected.len(), self.dim);
        for (r, &c) in self.selected.iter().enumerate() {
            m[(r, c)] = 1.0;
        }
        m
    }

    fn render(&self) -> String {
        if self.selected.is_empty() {
            return "(empty)".into();
        }
        self.selected
            .iter()
            .map(|&c| {
                let row: Vec<&str> = (0..self.dim).map(|i| if i == c { "1" } else { "0" }).collect();
                format!("[{}]", row.join(" "))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// The projection condition that failed, if any.
#[derive(Debug, Clone, PartialEq)]
pub enum FailedCondition {
    /// A projection selects a coordinate that is not observable in its interval.
    UnobservableSelection { interval: usize, coord: StateCoord },
    /// The stacked projections do not span z.
    StackedRank { rank: usize, required: usize },
    /// An eliminated coordinate moves inside its interval.
    ComplementNotConstant { interval: usize, coord: StateCoord },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail(FailedCondition),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalAnalysis {
    pub start: f64,
    pub end: f64,
    pub mode: ModeVector,
    /// Observable coordinates of the full state in this mode.
    pub observable: Vec<StateCoord>,
    pub projection: Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZObservabilityReport {
    pub z: Vec<StateCoord>,
    pub intervals: Vec<IntervalAnalysis>,
    pub stacked_rank: usize,
    pub verdict: Verdict,
}

impl ZObservabilityReport {
    /// Witness projections, one per interval (only meaningful on PASS).
    pub fn projections(&self) -> Vec<&Projection> {
        self.intervals.iter().map(|iv| &iv.projection).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let z: Vec<String> = self.z.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "z = [{}]", z.join(", "));
        for (i, iv) in self.intervals.iter().enumerate() {
            let obs: Vec<String> = iv.observable.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                out,
                "interval {i}: [{}, {}) mode {} u={:?} observable {{{}}} P = {}",
                crate::format::sig9(iv.start),
                crate::format::sig9(iv.end),
                iv.mode,
                iv.mode.inputs(),
                obs.join(", "),
                iv.projection.render()
            );
        }
        let _ = writeln!(out, "stacked projection rank: {} / {}", self.stacked_rank, self.z.len());
        match &self.verdict {
            Verdict::Pass => {
                let _ = writeln!(out, "verdict: PASS");
            }
            Verdict::Fail(reason) => {
                let msg = match reason {
                    FailedCondition::UnobservableSelection { interval, coord } => {
                        format!("{coord} is projected in interval {interval} but not observable there")
                    }
                    FailedCondition::StackedRank { rank, required } => {
                        format!("stacked projection rank {rank} < dim(z) = {required}")
                    }
                    FailedCondition::ComplementNotConstant { interval, coord } => {
                        format!("eliminated coordinate {coord} is not constant in interval {interval}")
                    }
                };
                let _ = writeln!(out, "verdict: FAIL ({msg})");
            }
        }
        out
    }
}

/// Default observed function: every capacitor voltage.
pub fn default_z(params: &ConverterParams) -> Vec<StateCoord> {
    (1..params.cells()).map(StateCoord::Voltage).collect()
}

/// Checks the sufficient projection conditions for z to be observable along
/// `traj`:
/// (a) each interval's projection keeps only coordinates observable in its mode,
/// (b) the stacked projections have rank dim(z),
/// (c) the eliminated coordinates have zero derivative in their interval.
pub fn z_observability_check(
    traj: &HybridTimeTrajectory,
    z: &[StateCoord],
    params: &ConverterParams,
) -> Result<ZObservabilityReport> {
    if traj.is_empty() {
        return Err(FlycapError::EmptyTrajectory);
    }
    let p = params.cells();
    if traj.cells() != p {
        return Err(FlycapError::Dimension {
            what: "trajectory modes",
            expected: p,
            got: traj.cells(),
        });
    }
    if z.is_empty() {
        return Err(FlycapError::invalid(
            "z",
            "the observed function needs at least one coordinate",
        ));
    }
    let mut z_sorted = z.to_vec();
    z_sorted.sort();
    z_sorted.dedup();
    for &coord in &z_sorted {
        match coord {
            StateCoord::Current => return Err(FlycapError::CurrentInObservedFunction),
            StateCoord::Voltage(j) if j == 0 || j >= p => {
                return Err(FlycapError::UnknownCoordinate(coord.to_string()))
            }
            _ => {}
        }
    }
    let dim = z_sorted.len();

    let mut intervals = Vec::with_capacity(traj.len());
    let mut verdict = Verdict::Pass;
    let mut covered = vec![false; dim];

    for (i, iv) in traj.intervals().iter().enumerate() {
        let observable = observable_coordinates(&iv.mode);
        let selected: Vec<usize> = z_sorted
            .iter()
            .enumerate()
            .filter(|(_, c)| observable.contains(c))
            .map(|(k, _)| k)
            .collect();
        let projection = Projection::new(selected, dim)?;

        if verdict.is_pass() {
            if let Some(&k) = projection
                .selected()
                .iter()
                .find(|&&k| !observable.contains(&z_sorted[k]))
            {
                verdict = Verdict::Fail(FailedCondition::UnobservableSelection {
                    interval: i,
                    coord: z_sorted[k],
                });
            }
        }
        if verdict.is_pass() {
            // probe the vector field with nonzero current and voltages: the
            // eliminated coordinates must not move for any state
            let probe = PlantState::new(1.0, vec![1.0; p - 1], iv.start);
            let dx = dynamics(&probe, &iv.mode, params)?;
            if let Some(k) = projection
                .complement()
                .into_iter()
                .find(|&k| dx[z_sorted[k].index()] != 0.0)
            {
                verdict = Verdict::Fail(FailedCondition::ComplementNotConstant {
                    interval: i,
                    coord: z_sorted[k],
                });
            }
        }
        for &k in projection.selected() {
            covered[k] = true;
        }
        intervals.push(IntervalAnalysis {
            start: iv.start,
            end: iv.end,
            mode: iv.mode.clone(),
            observable,
            projection,
        });
    }

    let stacked = stack(intervals.iter().map(|iv| &iv.projection), dim);
    let (stacked_rank, _) = numerical_rank(&stacked, RANK_TOLERANCE);
    debug_assert_eq!(stacked_rank, covered.iter().filter(|&&c| c).count());
    if verdict.is_pass() && stacked_rank < dim {
        verdict = Verdict::Fail(FailedCondition::StackedRank {
            rank: stacked_rank,
            required: dim,
        });
    }
    Ok(ZObservabilityReport {
        z: z_sorted,
        intervals,
        stacked_rank,
        verdict,
    })
}

fn stack<'a>(projections: impl Iterator<Item = &'a Projection>, dim: usize) -> DMatrix<f64> {
    let rows: Vec<DMatrix<f64>> = projections.map(Projection::matrix).collect();
    let total: usize = rows.iter().map(|m| m.nrows()).sum();
    let mut out = DMatrix::zeros(total, dim);
    let mut r = 0;
    for m in rows {
        for i in 0..m.nrows() {
            out.set_row(r, &m.row(i));
            r += 1;
        }
    }
    out
}

/// Text table of all modes with their observability-matrix rank.
pub fn rank_table(params: &ConverterParams) -> Result<String> {
    let rows = mode_table(params.cells())?;
    let mut out = String::from("mode  [S1,S2,S3]  u1  u2  rank(O)  observable\n");
    for row in rows {
        let report = observability_matrix(&row.mode, params)?;
        let obs: Vec<String> = row.observable.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            out,
            "{:>4}  {:<10}  {:>2}  {:>2}  {:>7}  {}",
            row.index,
            row.mode.to_string(),
            row.mode.inputs()[0],
            row.mode.inputs()[1],
            report.rank,
            obs.join(",")
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::system_matrices_with_inputs;

    fn params() -> ConverterParams {
        ConverterParams::three_cell_reference()
    }

    fn traj(modes: &[[u8; 3]]) -> HybridTimeTrajectory {
        let modes = modes.iter().map(|s| ModeVector::from_switches(s).unwrap()).collect();
        HybridTimeTrajectory::from_modes(modes, 1e-4).unwrap()
    }

    #[test]
    fn rank_two_for_coupled_inputs() {
        // the matrices only depend on u1, u2, so [0,1,0] carries u = (1, -1)
        let report = observability_matrix(&ModeVector::from_switches(&[0, 1, 0]).unwrap(), &params()).unwrap();
        assert_eq!(report.rank, 2);
        let sm = system_matrices_with_inputs(&[1.0, -1.0, 1.0], &params()).unwrap();
        let o = DMatrix::from_rows(&[sm.c.clone(), &sm.c * &sm.a, &sm.c * &sm.a * &sm.a]);
        assert_eq!(numerical_rank(&o, RANK_TOLERANCE).0, 2);
    }

    #[test]
    fn zero_inputs_leave_only_current() {
        let report = observability_matrix(&ModeVector::from_switches(&[0, 0, 0]).unwrap(), &params()).unwrap();
        assert_eq!(report.rank, 1);
    }

    #[test]
    fn second_row_matches_closed_form() {
        let m = ModeVector::from_switches(&[1, 0, 1]).unwrap();
        let o = observability_matrix(&m, &params()).unwrap().matrix;
        let (r, l, c) = (131.0, 0.01, 40e-6);
        assert_eq!(o.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        assert!((o[(1, 0)] + r / l).abs() < 1e-9);
        assert!((o[(1, 1)] - 1.0 / l).abs() < 1e-9);
        // third row: (R/L)^2 - sum u_i^2/(L c_i), R u_i / L^2
        let third0 = (r / l) * (r / l) - 2.0 / (l * c);
        assert!((o[(2, 0)] - third0).abs() < 1e-6 * third0.abs());
        assert!((o[(2, 1)] - -r / (l * l)).abs() < 1e-6);
    }

    #[test]
    fn two_mode_example_passes() {
        let report = z_observability_check(&traj(&[[1, 0, 0], [1, 1, 0]]), &default_z(&params()), &params()).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        let p: Vec<&[usize]> = report.projections().iter().map(|p| p.selected()).collect();
        assert_eq!(p, vec![&[0usize][..], &[1usize][..]]);
        assert_eq!(
            report.projections()[0].matrix(),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0])
        );
        assert_eq!(
            report.projections()[1].matrix(),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0])
        );
    }

    #[test]
    fn idle_modes_fail() {
        for s in [[0, 0, 0], [1, 1, 1]] {
            let report = z_observability_check(&traj(&[s]), &default_z(&params()), &params()).unwrap();
            assert_eq!(
                report.verdict,
                Verdict::Fail(FailedCondition::StackedRank { rank: 0, required: 2 })
            );
        }
    }

    #[test]
    fn mode_two_alone_passes() {
        let report = z_observability_check(&traj(&[[0, 1, 0]]), &default_z(&params()), &params()).unwrap();
        assert!(report.verdict.is_pass());
        assert_eq!(report.projections()[0].selected(), &[0, 1]);
    }

    #[test]
    fn current_in_z_is_rejected() {
        let err = z_observability_check(&traj(&[[0, 1, 0]]), &[StateCoord::Current], &params()).unwrap_err();
        assert_eq!(err, FlycapError::CurrentInObservedFunction);
        assert!(z_observability_check(&traj(&[[0, 1, 0]]), &[StateCoord::Voltage(3)], &params()).is_err());
    }

    #[test]
    fn single_voltage_function() {
        let z = [StateCoord::Voltage(2)];
        let report = z_observability_check(&traj(&[[0, 0, 1]]), &z, &params()).unwrap();
        assert!(report.verdict.is_pass());
        let report = z_observability_check(&traj(&[[0, 1, 1]]), &z, &params()).unwrap();
        assert!(!report.verdict.is_pass());
    }

    #[test]
    fn report_mentions_verdict() {
        let text = z_observability_check(&traj(&[[0, 0, 0]]), &default_z(&params()), &params())
            .unwrap()
            .render();
        assert!(text.contains("verdict: FAIL"));
        assert!(rank_table(&params()).unwrap().lines().count() == 9);
    }
}
