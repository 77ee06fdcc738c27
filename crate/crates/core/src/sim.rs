//! Fixed-step scenario engine.
//!
//! Each step reads the PWM mode at `t_n`, samples the noisy current
//! measurement, records the state, advances the observers with that
//! measurement and finally advances the plant by one explicit Euler step
//! using the actual (possibly perturbed) load resistance.

use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::{build_matrices, lyapunov_value, ZetaState};
use crate::converter::{dynamics_with_inputs, ConverterParams, ModeVector, PlantState};
use crate::error::{FlycapError, Result};
use crate::format::sig9;
use crate::luenberger::{luenberger_step, LuenbergerGains, LuenbergerState};
use crate::sosml::{observer_step, SosmlParams, SosmlState};
use crate::switching::PwmConfig;

/// Any state magnitude above this aborts the run.
pub const OVERFLOW_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    /// Uniform on `[-amplitude, amplitude]`.
    Uniform,
    /// Zero-mean normal with standard deviation `amplitude`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::None,
            amplitude: 0.02,
            seed: 0,
        }
    }
}

/// Step change of the plant's load resistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadVariation {
    pub t_switch: f64,
    pub r_factor: f64,
}

impl Default for LoadVariation {
    fn default() -> Self {
        Self {
            t_switch: 0.0,
            r_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: ConverterParams,
    pub pwm: PwmConfig,
    pub sosml: Option<SosmlParams>,
    pub luenberger: Option<LuenbergerGains>,
    pub t_end: f64,
    pub dt: f64,
    pub x0: PlantState,
    /// Initial estimates shared by both observers.
    pub observer_x0: PlantState,
    pub noise: NoiseConfig,
    pub load: LoadVariation,
    /// Error threshold (V) for convergence times.
    pub settle_threshold: f64,
    /// Start of the steady-state RMSE window; defaults to the load switch time.
    pub steady_from: Option<f64>,
}

impl ScenarioConfig {
    /// Reference converter, published sliding-mode gains, shipped Luenberger
    /// gains, `Vc(0) = (5, 10)` V, zero estimates, no noise, 0.1 s at 5 µs.
    pub fn nominal() -> Self {
        let params = ConverterParams::three_cell_reference();
        Self {
            pwm: PwmConfig::default_for(3),
            params,
            sosml: Some(SosmlParams::published()),
            luenberger: Some(LuenbergerGains::reference()),
            t_end: 0.1,
            dt: 5e-6,
            x0: PlantState::new(0.0, vec![5.0, 10.0], 0.0),
            observer_x0: PlantState::new(0.0, vec![0.0, 0.0], 0.0),
            noise: NoiseConfig::default(),
            load: LoadVariation::default(),
            settle_threshold: 0.5,
            steady_from: None,
        }
    }

    /// [`nominal`](Self::nominal) with uniform 0.02 A measurement noise and
    /// the load resistance raised by 50% at 0.05 s.
    pub fn noisy_loadstep(seed: u64) -> Self {
        Self {
            noise: NoiseConfig {
                kind: NoiseKind::Uniform,
                amplitude: 0.02,
                seed,
            },
            load: LoadVariation {
                t_switch: 0.05,
                r_factor: 1.5,
            },
            ..Self::nominal()
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }

    pub fn steady_window_start(&self) -> f64 {
        self.steady_from.unwrap_or(self.load.t_switch)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.cells() != 3 {
            return Err(FlycapError::UnsupportedCellCount {
                required: 3,
                got: self.params.cells(),
            });
        }
        if self.pwm.cells() != 3 {
            return Err(FlycapError::invalid("pwm.duty", "needs one duty ratio per cell"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FlycapError::invalid(
                "sim.dt",
                format!("must be finite and > 0, got {}", self.dt),
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(FlycapError::invalid(
                "sim.t_end",
                format!("must be finite and > 0, got {}", self.t_end),
            ));
        }
        if self.steps() > 100_000_000 {
            return Err(FlycapError::invalid("sim.t_end", "more than 1e8 steps requested"));
        }
        if let Some(s) = &self.sosml {
            s.validate()?;
        }
        if let Some(g) = &self.luenberger {
            g.validate()?;
        }
        for (name, st) in [("init", &self.x0), ("observer", &self.observer_x0)] {
            if st.voltages.len() != 2 {
                return Err(FlycapError::Dimension {
                    what: if name == "init" {
                        "initial voltages"
                    } else {
                        "initial estimates"
                    },
                    expected: 2,
                    got: st.voltages.len(),
                });
            }
            if !st.is_finite() {
                return Err(FlycapError::invalid(
                    format!("{name}.I"),
                    "initial values must be finite",
                ));
            }
        }
        if !(self.noise.amplitude >= 0.0 && self.noise.amplitude.is_finite()) {
            return Err(FlycapError::invalid(
                "noise.amplitude",
                format!("must be finite and >= 0, got {}", self.noise.amplitude),
            ));
        }
        if !(self.load.r_factor > 0.0 && self.load.r_factor.is_finite()) {
            return Err(FlycapError::invalid(
                "load.R_factor",
                format!("must be finite and > 0, got {}", self.load.r_factor),
            ));
        }
        if !(self.load.t_switch >= 0.0 && self.load.t_switch.is_finite()) {
            return Err(FlycapError::invalid("load.t_switch", "must be finite and >= 0"));
        }
        if !(self.settle_threshold > 0.0 && self.settle_threshold.is_finite()) {
            return Err(FlycapError::invalid(
                "metrics.settle_threshold",
                "must be finite and > 0",
            ));
        }
        if let Some(s) = self.steady_from {
            if !(s >= 0.0 && s < self.t_end) {
                return Err(FlycapError::invalid("metrics.steady_from", "must lie in [0, t_end)"));
            }
        }
        Ok(())
    }
}

/// Per-step record of one observer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObserverChannel {
    pub i_hat: Vec<f64>,
    pub v_hat: Vec<[f64; 2]>,
    /// True errors `x - x_hat`.
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub e3: Vec<f64>,
    /// Correction applied over `[t_n, t_n + dt)`.
    pub mu: Vec<f64>,
    /// Sliding-mode only: gain scale, perturbation state and Lyapunov value.
    pub l: Vec<f64>,
    pub phi1: Vec<f64>,
    pub v_lyap: Vec<f64>,
    pub in_dead_zone: Vec<bool>,
}

impl ObserverChannel {
    fn with_capacity(n: usize) -> Self {
        Self {
            i_hat: Vec::with_capacity(n),
            v_hat: Vec::with_capacity(n),
            e1: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            e3: Vec::with_capacity(n),
            mu: Vec::with_capacity(n),
            ..Self::default()
        }
    }

    /// `sqrt(e2^2 + e3^2)` per step.
    pub fn voltage_error_norm(&self) -> Vec<f64> {
        self.e2.iter().zip(&self.e3).map(|(a, b)| a.hypot(*b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    pub t: Vec<f64>,
    pub modes: Vec<ModeVector>,
    pub current: Vec<f64>,
    pub voltages: Vec<[f64; 2]>,
    /// Current as seen by the observers.
    pub measured: Vec<f64>,
    pub sosml: Option<ObserverChannel>,
    pub luenberger: Option<ObserverChannel>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_plant_state(&self) -> Option<[f64; 3]> {
        let n = self.len().checked_sub(1)?;
        Some([self.current[n], self.voltages[n][0], self.voltages[n][1]])
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = "t,S1,S2,S3,u1,u2,u3,I,Vc1,Vc2".split(',').map(String::from).collect();
        if self.sosml.is_some() {
            for c in ["Ihat", "Vc1hat", "Vc2hat", "e1", "e2", "e3", "l", "mu", "V_lyap"] {
                cols.push(format!("{c}_sosml"));
            }
        }
        if self.luenberger.is_some() {
            for c in ["Ihat", "Vc1hat", "Vc2hat", "e1", "e2", "e3", "mu"] {
                cols.push(format!("{c}_luen"));
            }
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        let mut line = String::with_capacity(256);
        for n in 0..self.len() {
            line.clear();
            line.push_str(&sig9(self.t[n]));
            let m = &self.modes[n];
            for s in m.switches() {
                let _ = write!(line, ",{s}");
            }
            for u in m.inputs() {
                let _ = write!(line, ",{u}");
            }
            for v in [self.current[n], self.voltages[n][0], self.voltages[n][1]] {
                let _ = write!(line, ",{}", sig9(v));
            }
            if let Some(ch) = &self.sosml {
                for v in [
                    ch.i_hat[n],
                    ch.v_hat[n][0],
                    ch.v_hat[n][1],
                    ch.e1[n],
                    ch.e2[n],
                    ch.e3[n],
                    ch.l[n],
                    ch.mu[n],
                    ch.v_lyap[n],
                ] {
                    let _ = write!(line, ",{}", sig9(v));
                }
            }
            if let Some(ch) = &self.luenberger {
                for v in [
                    ch.i_hat[n],
                    ch.v_hat[n][0],
                    ch.v_hat[n][1],
                    ch.e1[n],
                    ch.e2[n],
                    ch.e3[n],
                    ch.mu[n],
                ] {
                    let _ = write!(line, ",{}", sig9(v));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

struct NoiseSource {
    rng: ChaCha8Rng,
    cfg: NoiseConfig,
    normal: Option<Normal<f64>>,
}

impl NoiseSource {
    fn new(cfg: NoiseConfig) -> Result<Self> {
        let normal = match cfg.kind {
            NoiseKind::Gaussian => Some(
                Normal::new(0.0, cfg.amplitude).map_err(|e| FlycapError::invalid("noise.amplitude", e.to_string()))?,
            ),
            _ => None,
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            normal,
        })
    }

    fn sample(&mut self) -> f64 {
        let a = self.cfg.amplitude;
        match self.cfg.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Uniform if a == 0.0 => 0.0,
            NoiseKind::Uniform => self.rng.random_range(-a..=a),
            NoiseKind::Gaussian => self.normal.as_ref().map_or(0.0, |n| n.sample(&mut self.rng)),
        }
    }
}

fn guard(step: usize, time: f64, what: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
        return Err(FlycapError::NumericalAbort {
            step,
            time,
            detail: format!("{what} reached {v:e}"),
        });
    }
    Ok(())
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let steps = cfg.steps();
    let n = steps + 1;
    let params = &cfg.params;
    let dt = cfg.dt;
    let mut noise = NoiseSource::new(cfg.noise)?;
    let p_lyap = cfg.sosml.as_ref().map(|prm| build_matrices(prm).p);

    let mut ts = TimeSeries {
        dt,
        t: Vec::with_capacity(n),
        modes: Vec::with_capacity(n),
        current: Vec::with_capacity(n),
        voltages: Vec::with_capacity(n),
        measured: Vec::with_capacity(n),
        sosml: cfg.sosml.map(|_| {
            let mut ch = ObserverChannel::with_capacity(n);
            ch.l.reserve(n);
            ch.phi1.reserve(n);
            ch.v_lyap.reserve(n);
            ch.in_dead_zone.reserve(n);
            ch
        }),
        luenberger: cfg.luenberger.map(|_| ObserverChannel::with_capacity(n)),
    };

    let mut i = cfg.x0.current;
    let mut v = [cfg.x0.voltages[0], cfg.x0.voltages[1]];
    let obs = &cfg.observer_x0;
    let mut sosml = cfg
        .sosml
        .as_ref()
        .map(|prm| SosmlState::new(obs.current, obs.voltages.clone(), prm));
    let mut luen = cfg
        .luenberger
        .map(|_| LuenbergerState::new(obs.current, [obs.voltages[0], obs.voltages[1]]));

    let l_ind = params.inductance;
    let r_nom = params.resistance;
    for step in 0..n {
        let t = step as f64 * dt;
        let mode = cfg.pwm.mode_at(t);
        let r_act = if t >= cfg.load.t_switch {
            r_nom * cfg.load.r_factor
        } else {
            r_nom
        };
        let y = i + noise.sample();
        ts.t.push(t);
        ts.current.push(i);
        ts.voltages.push(v);
        ts.measured.push(y);
        let (u1, u2) = (mode.u(1), mode.u(2));

        if let (Some(st), Some(prm), Some(ch), Some(p)) =
            (sosml.as_mut(), cfg.sosml.as_ref(), ts.sosml.as_mut(), p_lyap.as_ref())
        {
            let (e1, e2, e3) = (i - st.i_hat, v[0] - st.v_hat[0], v[1] - st.v_hat[1]);
            // everything driving de1/dt besides the correction
            let d = -(u1 * e2 + u2 * e3) / l_ind + (r_nom * y - r_act * i) / l_ind;
            let phi1 = d - st.integral_injection(prm);
            ch.i_hat.push(st.i_hat);
            ch.v_hat.push([st.v_hat[0], st.v_hat[1]]);
            ch.e1.push(e1);
            ch.e2.push(e2);
            ch.e3.push(e3);
            ch.l.push(st.l);
            ch.phi1.push(phi1);
            ch.v_lyap.push(lyapunov_value(&ZetaState::new(e1, st.l, phi1), p));
            let next = observer_step(st, y, &mode, params, prm, dt)?;
            ch.mu.push(next.last_mu);
            ch.in_dead_zone.push(next.in_dead_zone);
            *st = next;
            guard(
                step,
                t,
                "sliding-mode estimate",
                &[st.i_hat, st.v_hat[0], st.v_hat[1], st.l, st.last_mu],
            )?;
        }
        if let (Some(st), Some(gains), Some(ch)) = (luen.as_mut(), cfg.luenberger.as_ref(), ts.luenberger.as_mut()) {
            ch.i_hat.push(st.i_hat);
            ch.v_hat.push(st.v_hat);
            ch.e1.push(i - st.i_hat);
            ch.e2.push(v[0] - st.v_hat[0]);
            ch.e3.push(v[1] - st.v_hat[1]);
            ch.mu.push(gains.kappa[0] * (y - st.i_hat));
            *st = luenberger_step(st, y, &mode, params, gains, dt)?;
            guard(step, t, "Luenberger estimate", &[st.i_hat, st.v_hat[0], st.v_hat[1]])?;
        }
        ts.modes.push(mode);

        if step < steps {
            let inputs = [u1, u2, ts.modes[step].source_input()];
            let plant = ConverterParams {
                resistance: r_act,
                ..params.clone()
            };
            let dx = dynamics_with_inputs(&PlantState::new(i, v.to_vec(), t), &inputs, &plant)?;
            i += dt * dx[0];
            v[0] += dt * dx[1];
            v[1] += dt * dx[2];
            guard(step, t, "plant state", &[i, v[0], v[1]])?;
        }
    }
    Ok(ts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMetrics {
    /// First time after which `|e|` stays below the threshold; `None` if it never settles.
    pub convergence_time: Option<f64>,
    /// RMSE from the convergence time to the end.
    pub rmse: Option<f64>,
    pub max_post_settle: Option<f64>,
}

pub fn channel_metrics(t: &[f64], e: &[f64], threshold: f64) -> Result<ChannelMetrics> {
    if e.is_empty() {
        return Err(FlycapError::EmptySeries);
    }
    if t.len() != e.len() {
        return Err(FlycapError::Dimension {
            what: "error channel",
            expected: t.len(),
            got: e.len(),
        });
    }
    let first = match e.iter().rposition(|x| !(x.abs() < threshold)) {
        None => 0,
        Some(k) if k + 1 == e.len() => {
            return Ok(ChannelMetrics {
                convergence_time: None,
                rmse: None,
                max_post_settle: None,
            })
        }
        Some(k) => k + 1,
    };
    let tail = &e[first..];
    let rmse = (tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64).sqrt();
    let max = tail.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(ChannelMetrics {
        convergence_time: Some(t[first]),
        rmse: Some(rmse),
        max_post_settle: Some(max),
    })
}

/// RMSE of the voltage-error norm over `t >= from`.
pub fn steady_state_rmse(ts: &TimeSeries, ch: &ObserverChannel, from: f64) -> Result<f64> {
    let start = ts.t.partition_point(|&t| t < from);
    if start >= ts.len() {
        return Err(FlycapError::EmptySeries);
    }
    let n = ts.len() - start;
    let ss: f64 = (start..ts.len())
        .map(|k| ch.e2[k] * ch.e2[k] + ch.e3[k] * ch.e3[k])
        .sum();
    Ok((ss / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverMetrics {
    pub name: &'static str,
    pub e1: ChannelMetrics,
    pub e2: ChannelMetrics,
    pub e3: ChannelMetrics,
    pub steady_rmse: f64,
    pub final_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub threshold: f64,
    pub steady_from: f64,
    pub observers: Vec<ObserverMetrics>,
}

pub fn metrics(ts: &TimeSeries, settle_threshold: f64, steady_from: f64) -> Result<Metrics> {
    if ts.is_empty() {
        return Err(FlycapError::EmptySeries);
    }
    let mut observers = Vec::new();
    for (name, ch) in [("sosml", &ts.sosml), ("luenberger", &ts.luenberger)] {
        let Some(ch) = ch else { continue };
        observers.push(ObserverMetrics {
            name,
            e1: channel_metrics(&ts.t, &ch.e1, settle_threshold)?,
            e2: channel_metrics(&ts.t, &ch.e2, settle_threshold)?,
            e3: channel_metrics(&ts.t, &ch.e3, settle_threshold)?,
            steady_rmse: steady_state_rmse(ts, ch, steady_from)?,
            final_l: ch.l.last().copied(),
        });
    }
    Ok(Metrics {
        threshold: settle_threshold,
        steady_from,
        observers,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "never".to_string(), sig9)
}

impl Metrics {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "settle threshold: {} V", sig9(self.threshold));
        let _ = writeln!(out, "steady window starts at: {} s", sig9(self.steady_from));
        for o in &self.observers {
            let _ = writeln!(out, "[{}]", o.name);
            for (ch, m) in [("e1", &o.e1), ("e2", &o.e2), ("e3", &o.e3)] {
                let _ = writeln!(
                    out,
                    "{ch}: convergence_time={} rmse_post={} max_post={}",
                    opt(m.convergence_time),
                    opt(m.rmse),
                    opt(m.max_post_settle)
                );
            }
            let _ = writeln!(out, "steady_rmse_voltage={}", sig9(o.steady_rmse));
            if let Some(l) = o.final_l {
                let _ = writeln!(out, "final_l={}", sig9(l));
            }
        }
        out
    }

    /// One row per observer: name, convergence times, RMSE.
    pub fn comparison_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>14} {:>14} {:>14}\n",
            "observer", "t_conv(e2)", "t_conv(e3)", "rmse_steady"
        );
        for o in &self.observers {
            let _ = writeln!(
                out,
                "{:<12} {:>14} {:>14} {:>14}",
                o.name,
                opt(o.e2.convergence_time),
                opt(o.e3.convergence_time),
                sig9(o.steady_rmse)
            );
        }
        out
    }
}
