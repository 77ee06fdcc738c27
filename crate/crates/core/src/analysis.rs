//! Lyapunov certificate for the sliding-mode observer and the persistence of
//! excitation test for the reduced-order voltage error.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};

use crate::converter::ModeVector;
use crate::error::{FlycapError, Result};
use crate::format::sig9;
use crate::sosml::{sign, SosmlParams};
use crate::switching::HybridTimeTrajectory;

/// Positive definiteness: smallest eigenvalue above this fraction of the largest.
pub const PD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition16 {
    pub margin: f64,
    pub pass: bool,
}

pub fn check_condition16(prm: &SosmlParams) -> Condition16 {
    let margin = prm.condition_margin();
    Condition16 {
        margin,
        pass: margin > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovMatrices {
    pub p: Matrix3<f64>,
    pub omega1: Matrix3<f64>,
    pub omega2: Matrix3<f64>,
    /// Diagonal bound on the `l`-derivative term.
    pub q: Matrix3<f64>,
    /// `lambda_min(Omega1) / sqrt(lambda_max(P))`.
    pub gamma1: f64,
    /// `gamma2 / F`: the perturbation bound F is unknown, only its coefficient is reported.
    pub gamma2_per_f: f64,
    pub gamma3: f64,
    pub gamma4: f64,
}

/// Ascending eigenvalues of a symmetric 3x3 matrix.
pub fn eigenvalues3(m: &Matrix3<f64>) -> [f64; 3] {
    let mut ev: Vec<f64> = SymmetricEigen::new(*m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    [ev[0], ev[1], ev[2]]
}

pub fn is_positive_definite(m: &Matrix3<f64>) -> bool {
    let [min, _, max] = eigenvalues3(m);
    max > 0.0 && min > PD_TOLERANCE * max
}

pub fn build_matrices(prm: &SosmlParams) -> LyapunovMatrices {
    let (l0, a0, kl, ka) = (prm.lambda0, prm.alpha0, prm.k_lambda0, prm.k_alpha0);
    #[rustfmt::skip]
    let p = Matrix3::new(
        4.0 * a0 + l0 * l0, l0 * kl,            -l0,
        l0 * kl,            kl * kl + 2.0 * ka, -kl,
        -l0,                -kl,                2.0,
    ) * 0.5;
    #[rustfmt::skip]
    let omega1 = Matrix3::new(
        l0 * l0 + 2.0 * a0, 0.0,                      -l0,
        0.0,                2.0 * ka + 5.0 * kl * kl, -3.0 * kl,
        -l0,                -3.0 * kl,                1.0,
    ) * (l0 / 2.0);
    #[rustfmt::skip]
    let omega2 = Matrix3::new(
        a0 + 2.0 * l0 * l0, 0.0,           0.0,
        0.0,                ka + kl * kl,  -kl,
        0.0,                -kl,           1.0,
    ) * kl;
    let q = Matrix3::from_diagonal(&Vector3::new(
        4.0 * a0 + l0 * l0 + l0 * kl + l0 / 2.0,
        2.0 * ka * kl * kl + l0 * kl + kl / 2.0,
        (l0 + kl) / 2.0,
    ));

    let [p_min, _, p_max] = eigenvalues3(&p);
    let [o1_min, _, _] = eigenvalues3(&omega1);
    let [o2_min, _, _] = eigenvalues3(&omega2);
    let q_max = q.diagonal().max();
    let q1 = Vector3::new(-l0, -kl, 2.0);

    LyapunovMatrices {
        p,
        omega1,
        omega2,
        q,
        gamma1: o1_min / p_max.sqrt(),
        gamma2_per_f: q1.norm() / p_min.sqrt(),
        gamma3: o2_min / p_max,
        gamma4: q_max / (2.0 * p_min),
    }
}

impl LyapunovMatrices {
    pub fn all_positive_definite(&self) -> bool {
        is_positive_definite(&self.p) && is_positive_definite(&self.omega1) && is_positive_definite(&self.omega2)
    }

    /// Rows `name,i,j,value` for the matrices, then eigenvalues and gammas.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,i,j,value\n");
        for (name, m) in [
            ("P", &self.p),
            ("Omega1", &self.omega1),
            ("Omega2", &self.omega2),
            ("Q", &self.q),
        ] {
            for i in 0..3 {
                for j in 0..3 {
                    let _ = writeln!(out, "{name},{},{},{}", i + 1, j + 1, sig9(m[(i, j)]));
                }
            }
        }
        for (name, m) in [("P", &self.p), ("Omega1", &self.omega1), ("Omega2", &self.omega2)] {
            for (k, ev) in eigenvalues3(m).iter().enumerate() {
                let _ = writeln!(out, "eig_{name},{},,{}", k + 1, sig9(*ev));
            }
        }
        let _ = writeln!(out, "gamma1,,,{}", sig9(self.gamma1));
        let _ = writeln!(out, "gamma2_per_F,,,{}", sig9(self.gamma2_per_f));
        let _ = writeln!(out, "gamma3,,,{}", sig9(self.gamma3));
        let _ = writeln!(out, "gamma4,,,{}", sig9(self.gamma4));
        out
    }
}

/// Quadratic form bounded above by `zeta^T Q zeta`.
pub fn delta_omega(zeta: &Vector3<f64>, prm: &SosmlParams) -> f64 {
    let (l0, a0, kl, ka) = (prm.lambda0, prm.alpha0, prm.k_lambda0, prm.k_alpha0);
    let (z1, z2, z3) = (zeta[0], zeta[1], zeta[2]);
    (4.0 * a0 + l0 * l0) * z1 * z1 + 2.0 * l0 * kl * z1 * z2 + 2.0 * ka * kl * kl * z2 * z2
        - l0 * z1 * z3
        - kl * z2 * z3
}

/// Change of variables `(sqrt(l |e1|) sign(e1), l e1, phi1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaState {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
}

impl ZetaState {
    pub fn new(e1: f64, l: f64, phi1: f64) -> Self {
        Self {
            zeta1: l.sqrt() * e1.abs().sqrt() * sign(e1),
            zeta2: l * e1,
            zeta3: phi1,
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.zeta1, self.zeta2, self.zeta3)
    }

    pub fn e1_from_zeta2(&self, l: f64) -> f64 {
        self.zeta2 / l
    }

    pub fn e1_from_zeta1(&self, l: f64) -> f64 {
        self.zeta1 * self.zeta1 / l * sign(self.zeta1)
    }
}

pub fn lyapunov_value(zeta: &ZetaState, p: &Matrix3<f64>) -> f64 {
    let z = zeta.as_vector();
    (z.transpose() * p * z)[(0, 0)]
}

/// `V(zeta)` for each sample of `(e1, l, phi1)`.
pub fn lyapunov_series(e1: &[f64], l: &[f64], phi1: &[f64], prm: &SosmlParams) -> Result<Vec<f64>> {
    if e1.is_empty() {
        return Err(FlycapError::EmptySeries);
    }
    if l.len() != e1.len() || phi1.len() != e1.len() {
        return Err(FlycapError::MissingAccumulators);
    }
    let p = build_matrices(prm).p;
    Ok(e1
        .iter()
        .zip(l)
        .zip(phi1)
        .map(|((&e, &l), &phi)| lyapunov_value(&ZetaState::new(e, l, phi), &p))
        .collect())
}

/// `V(zeta)` along a simulated scenario; needs the sliding-mode channel.
pub fn lyapunov_along_trajectory(ts: &crate::sim::TimeSeries, prm: &SosmlParams) -> Result<Vec<f64>> {
    let ch = ts.sosml.as_ref().ok_or(FlycapError::MissingAccumulators)?;
    lyapunov_series(&ch.e1, &ch.l, &ch.phi1, prm)
}

/// Regressor `sqrt(scale) * (u_1, .., u_(p-1))`.
pub fn psi(mode: &ModeVector, scale: f64) -> DVector<f64> {
    let s = scale.sqrt();
    DVector::from_iterator(
        mode.cells() - 1,
        mode.capacitor_inputs().iter().map(|&u| s * f64::from(u)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeReport {
    /// Minimum over window starts of the smallest Gram eigenvalue.
    pub min_eigenvalue: f64,
    /// Window start attaining the minimum.
    pub worst_start: f64,
    pub worst_gram: DMatrix<f64>,
    pub window: f64,
    pub starts_checked: usize,
}

impl PeReport {
    pub fn is_persistently_exciting(&self) -> bool {
        self.min_eigenvalue > 0.0
    }
}

/// Gram integral of `psi psi^T` over every window `[t, t + window]` inside
/// the trajectory.
///
/// The Gram matrix is piecewise linear in the start time, so its smallest
/// eigenvalue is concave between breakpoints and the minimum is attained where
/// either window edge meets an interval boundary. Those starts, plus both ends
/// of the admissible range, are evaluated exactly.
pub fn pe_check(traj: &HybridTimeTrajectory, window: f64, scale: f64) -> Result<PeReport> {
    if traj.is_empty() {
        return Err(FlycapError::EmptyTrajectory);
    }
    if !(window > 0.0) || !window.is_finite() {
        return Err(FlycapError::invalid(
            "window",
            format!("must be finite and > 0, got {window}"),
        ));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(FlycapError::invalid(
            "scale",
            format!("must be finite and > 0, got {scale}"),
        ));
    }
    let span = traj.span();
    let t0 = traj.t_ini();
    if window > span * (1.0 + 1e-12) {
        return Err(FlycapError::WindowTooLong { window, span });
    }
    let last_start = (traj.t_end() - window).max(t0);
    let n = traj.cells() - 1;

    // prefix integrals of u u^T at each boundary
    let intervals = traj.intervals();
    let mut bounds = Vec::with_capacity(intervals.len() + 1);
    let mut prefix = Vec::with_capacity(intervals.len() + 1);
    let mut acc = DMatrix::zeros(n, n);
    bounds.push(t0);
    prefix.push(acc.clone());
    let outer: Vec<DMatrix<f64>> = intervals
        .iter()
        .map(|iv| {
            let u = psi(&iv.mode, 1.0);
            &u * u.transpose()
        })
        .collect();
    for (iv, uu) in intervals.iter().zip(&outer) {
        acc += uu * iv.duration();
        bounds.push(iv.end);
        prefix.push(acc.clone());
    }
    let cumulative = |t: f64| -> DMatrix<f64> {
        let t = t.clamp(t0, traj.t_end());
        // index of the interval containing t
        let k = bounds
            .partition_point(|&b| b <= t)
            .saturating_sub(1)
            .min(intervals.len() - 1);
        &prefix[k] + &outer[k] * (t - bounds[k])
    };

    let mut starts = vec![t0, last_start];
    for &b in &bounds {
        for s in [b, b - window] {
            if s > t0 && s < last_start {
                starts.push(s);
            }
        }
    }
    starts.sort_by(f64::total_cmp);
    starts.dedup();

    let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
    for &s in &starts {
        let gram = (cumulative(s + window) - cumulative(s)) * scale;
        let min = min_sym_eigenvalue(&gram);
        if best.as_ref().is_none_or(|(m, _, _)| min < *m) {
            best = Some((min, s, gram));
        }
    }
    let (min_eigenvalue, worst_start, worst_gram) = best.expect("at least one start");
    Ok(PeReport {
        min_eigenvalue,
        worst_start,
        worst_gram,
        window,
        starts_checked: starts.len(),
    })
}

fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    // an exactly zero Gram matrix reports exactly zero
    if m.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        min
    }
}
