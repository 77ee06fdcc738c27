//! Adaptive-gain second-order sliding-mode observer with linear terms.
//!
//! The correction `mu(e1)` is a super-twisting law augmented with
//! proportional and integral terms, all scaled by a nondecreasing gain `l(t)`.
//! Once the current error sits inside the dead zone the injection is routed
//! to the capacitor estimates through `k_j = -kappa * u_j`.

use crate::converter::{ConverterParams, ModeVector};
use crate::error::{FlycapError, Result};

/// `sign` with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SosmlParams {
    pub lambda0: f64,
    pub alpha0: f64,
    pub k_lambda0: f64,
    pub k_alpha0: f64,
    /// Growth rate of `l(t)` outside the dead zone (1/s).
    pub adaptation_rate: f64,
    pub kappa: f64,
    pub l_init: f64,
    /// Dead-zone half width on the current error (A).
    pub eps_dz: f64,
}

impl SosmlParams {
    /// Gains used in the reference simulations. They violate the sufficient
    /// stability condition; see [`SosmlParams::condition_margin`].
    pub fn published() -> Self {
        Self {
            lambda0: 2.0,
            alpha0: 4.0,
            k_lambda0: 2.5,
            k_alpha0: 20.0,
            adaptation_rate: 6e5,
            kappa: 20.0,
            l_init: 1.0,
            eps_dz: 1e-3,
        }
    }

    /// Same as [`published`](Self::published) with `k_alpha0` raised to 40,
    /// which satisfies the stability condition with margin 215.
    pub fn certified() -> Self {
        Self {
            k_alpha0: 40.0,
            ..Self::published()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sosml.lambda0", self.lambda0),
            ("sosml.alpha0", self.alpha0),
            ("sosml.k_lambda0", self.k_lambda0),
            ("sosml.k_alpha0", self.k_alpha0),
            ("sosml.k", self.adaptation_rate),
            ("sosml.kappa", self.kappa),
            ("sosml.l_init", self.l_init),
            ("sosml.eps_dz", self.eps_dz),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(FlycapError::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// `4 a0 ka0 - 8 kl0^2 a0 - 9 l0^2 kl0^2`; positive means the gains are certified.
    pub fn condition_margin(&self) -> f64 {
        let kl2 = self.k_lambda0 * self.k_lambda0;
        4.0 * self.alpha0 * self.k_alpha0 - 8.0 * kl2 * self.alpha0 - 9.0 * self.lambda0 * self.lambda0 * kl2
    }

    /// The four time-varying gains `(lambda, alpha, k_lambda, k_alpha)` at scale `l`.
    pub fn gains_at(&self, l: f64) -> [f64; 4] {
        [
            self.lambda0 * l.sqrt(),
            self.alpha0 * l,
            self.k_lambda0 * l,
            self.k_alpha0 * l * l,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosmlState {
    pub i_hat: f64,
    pub v_hat: Vec<f64>,
    /// Running integral of `sign(e1)`.
    pub sigma_sign: f64,
    /// Running integral of `e1`.
    pub sigma_lin: f64,
    pub l: f64,
    pub last_mu: f64,
    /// Whether the last step ended inside the dead zone.
    pub in_dead_zone: bool,
}

impl SosmlState {
    pub fn new(i_hat: f64, v_hat: Vec<f64>, prm: &SosmlParams) -> Self {
        Self {
            i_hat,
            v_hat,
            sigma_sign: 0.0,
            sigma_lin: 0.0,
            l: prm.l_init,
            last_mu: 0.0,
            in_dead_zone: false,
        }
    }

    /// `alpha(t) * sigma_sign + k_alpha(t) * sigma_lin`, the integral part of `mu`.
    pub fn integral_injection(&self, prm: &SosmlParams) -> f64 {
        let [_, alpha, _, k_alpha] = prm.gains_at(self.l);
        alpha * self.sigma_sign + k_alpha * self.sigma_lin
    }

    pub fn is_finite(&self) -> bool {
        self.i_hat.is_finite()
            && self.v_hat.iter().all(|v| v.is_finite())
            && self.sigma_sign.is_finite()
            && self.sigma_lin.is_finite()
            && self.l.is_finite()
            && self.last_mu.is_finite()
    }
}

/// Correction term for the current error `e1` using the accumulators and `l` held in `st`.
pub fn mu(e1: f64, st: &SosmlState, prm: &SosmlParams) -> f64 {
    let [lambda, alpha, k_lambda, k_alpha] = prm.gains_at(st.l);
    lambda * e1.abs().sqrt() * sign(e1) + alpha * st.sigma_sign + k_lambda * e1 + k_alpha * st.sigma_lin
}

/// One forward-Euler step of the observer.
///
/// The gain `l` and the accumulators are advanced first, and `mu` is evaluated
/// with the updated values. The measured current enters both the `-R/L` term
/// and the capacitor equations.
pub fn observer_step(
    st: &SosmlState,
    i_meas: f64,
    mode: &ModeVector,
    params: &ConverterParams,
    prm: &SosmlParams,
    dt: f64,
) -> Result<SosmlState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FlycapError::NonPositiveStep(dt));
    }
    let p = params.cells();
    if mode.cells() != p {
        return Err(FlycapError::Dimension {
            what: "mode vector",
            expected: p,
            got: mode.cells(),
        });
    }
    if st.v_hat.len() != p - 1 {
        return Err(FlycapError::Dimension {
            what: "voltage estimates",
            expected: p - 1,
            got: st.v_hat.len(),
        });
    }

    let e1 = i_meas - st.i_hat;
    let inside = e1.abs() <= prm.eps_dz;
    let mut next = st.clone();
    if !inside {
        next.l += prm.adaptation_rate * dt;
    }
    next.sigma_sign += sign(e1) * dt;
    next.sigma_lin += e1 * dt;
    let m = mu(e1, &next, prm);
    next.last_mu = m;
    next.in_dead_zone = inside;

    let l_ind = params.inductance;
    let mut di = -(params.resistance / l_ind) * i_meas + (params.source_voltage / l_ind) * mode.source_input() + m;
    for (j, v) in st.v_hat.iter().enumerate() {
        let u = mode.u(j + 1);
        di -= v / l_ind * u;
        let k_j = if inside { -prm.kappa * u } else { 0.0 };
        next.v_hat[j] = v + dt * (u / params.capacitances[j] * i_meas + k_j * m);
    }
    next.i_hat = st.i_hat + dt * di;
    Ok(next)
}

/// Value the correction takes in the sliding regime: `-sum(u_j e_{j+1}) / L`.
pub fn equivalent_injection(voltage_errors: &[f64], mode: &ModeVector, params: &ConverterParams) -> Result<f64> {
    let p = params.cells();
    if voltage_errors.len() != p - 1 {
        return Err(FlycapError::Dimension {
            what: "voltage errors",
            expected: p - 1,
            got: voltage_errors.len(),
        });
    }
    if mode.cells() != p {
        return Err(FlycapError::Dimension {
            what: "mode vector",
            expected: p,
            got: mode.cells(),
        });
    }
    Ok(-voltage_errors
        .iter()
        .enumerate()
        .map(|(j, e)| mode.u(j + 1) * e)
        .sum::<f64>()
        / params.inductance)
}
