//! Phase-shifted PWM switching signals and hybrid time trajectories.
//!
//! Each cell compares a rising sawtooth carrier against its duty ratio; the
//! carrier of cell j (0-based) lags cell 0 by `j * phase_shift` periods and
//! the switch is on while the carrier is strictly below the duty ratio.
//! By default the modulator is digital: the comparison is re-evaluated every
//! `update_period` seconds and held in between, so the switching signal does
//! not depend on the integration step of the simulator.

use std::fmt::Write as _;

use crate::converter::ModeVector;
use crate::error::{FlycapError, Result};

/// Tolerance used when snapping a time onto the modulator grid.
const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PwmConfig {
    carrier_frequency: f64,
    duty: Vec<f64>,
    phase_shift: f64,
    update_period: Option<f64>,
}

impl PwmConfig {
    /// `update_period = None` selects an ideal analog comparator.
    pub fn new(carrier_frequency: f64, duty: Vec<f64>, phase_shift: f64, update_period: Option<f64>) -> Result<Self> {
        if !(carrier_frequency.is_finite() && carrier_frequency > 0.0) {
            return Err(FlycapError::invalid(
                "pwm.f_chop",
                format!("must be > 0, got {carrier_frequency}"),
            ));
        }
        if duty.len() < 2 {
            return Err(FlycapError::invalid(
                "pwm.duty",
                "one duty ratio per cell is required (at least 2 cells)",
            ));
        }
        for (j, &d) in duty.iter().enumerate() {
            if !(0.0..=1.0).contains(&d) {
                return Err(FlycapError::invalid(
                    format!("pwm.duty{}", j + 1),
                    format!("must lie in [0, 1], got {d}"),
                ));
            }
        }
        if !(0.0..1.0).contains(&phase_shift) {
            return Err(FlycapError::invalid(
                "pwm.phase_shift",
                format!("must lie in [0, 1), got {phase_shift}"),
            ));
        }
        if let Some(ts) = update_period {
            if !(ts.is_finite() && ts > 0.0) {
                return Err(FlycapError::invalid(
                    "pwm.update_period",
                    format!("must be > 0, got {ts}"),
                ));
            }
        }
        Ok(Self {
            carrier_frequency,
            duty,
            phase_shift,
            update_period,
        })
    }

    /// 5 kHz carriers, duty 0.5 on every cell, phase shift 1/p and a 5 µs
    /// modulator update period.
    pub fn default_for(cells: usize) -> Self {
        Self {
            carrier_frequency: 5_000.0,
            duty: vec![0.5; cells.max(2)],
            phase_shift: 1.0 / cells.max(2) as f64,
            update_period: Some(5e-6),
        }
    }

    pub fn carrier_frequency(&self) -> f64 {
        self.carrier_frequency
    }

    pub fn period(&self) -> f64 {
        1.0 / self.carrier_frequency
    }

    pub fn duty(&self) -> &[f64] {
        &self.duty
    }

    pub fn phase_shift(&self) -> f64 {
        self.phase_shift
    }

    pub fn update_period(&self) -> Option<f64> {
        self.update_period
    }

    pub fn cells(&self) -> usize {
        self.duty.len()
    }

    /// Carrier value of cell `j` (0-based) at time `t`, in [0, 1).
    pub fn carrier(&self, t: f64, j: usize) -> f64 {
        (self.carrier_frequency * t - j as f64 * self.phase_shift).rem_euclid(1.0)
    }

    fn sample_index(&self, t: f64, ts: f64) -> i64 {
        (t / ts + GRID_SNAP).floor() as i64
    }

    fn analog_mode_at(&self, t: f64) -> ModeVector {
        let switches: Vec<u8> = self
            .duty
            .iter()
            .enumerate()
            .map(|(j, &d)| u8::from(self.carrier(t, j) < d))
            .collect();
        ModeVector::from_switches(&switches).expect("binary switches of at least two cells")
    }

    /// Switching mode applied at time `t`.
    pub fn mode_at(&self, t: f64) -> ModeVector {
        match self.update_period {
            Some(ts) => self.analog_mode_at(self.sample_index(t, ts) as f64 * ts),
            None => self.analog_mode_at(t),
        }
    }

    /// Switching instants strictly inside `(t_ini, t_end)`, unsorted.
    fn candidate_edges(&self, t_ini: f64, t_end: f64) -> Vec<f64> {
        let f = self.carrier_frequency;
        let mut edges = Vec::new();
        match self.update_period {
            Some(ts) => {
                let first = self.sample_index(t_ini, ts) + 1;
                let mut k = first;
                loop {
                    let t = k as f64 * ts;
                    if t >= t_end - GRID_SNAP * ts {
                        break;
                    }
                    if t > t_ini {
                        edges.push(t);
                    }
                    k += 1;
                }
            }
            None => {
                for (j, &d) in self.duty.iter().enumerate() {
                    if d <= 0.0 || d >= 1.0 {
                        continue;
                    }
                    let offset = j as f64 * self.phase_shift;
                    for phase in [offset, offset + d] {
                        let phase = phase.rem_euclid(1.0);
                        let m_lo = (f * t_ini - phase).floor() as i64;
                        let m_hi = (f * t_end - phase).ceil() as i64;
                        for m in m_lo..=m_hi {
                            let t = (m as f64 + phase) / f;
                            if t > t_ini && t < t_end {
                                edges.push(t);
                            }
                        }
                    }
                }
            }
        }
        edges
    }
}

/// Convenience wrapper matching the operation name used in reports.
pub fn pwm_mode_at(t: f64, cfg: &PwmConfig) -> ModeVector {
    cfg.mode_at(t)
}

/// Interval `[start, end)` with a constant switching mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeInterval {
    pub start: f64,
    pub end: f64,
    pub mode: ModeVector,
}

impl ModeInterval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Ordered, contiguous sequence of constant-mode intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTimeTrajectory {
    intervals: Vec<ModeInterval>,
}

impl HybridTimeTrajectory {
    pub fn new(intervals: Vec<ModeInterval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(FlycapError::EmptyTrajectory);
        }
        let cells = intervals[0].mode.cells();
        for (i, iv) in intervals.iter().enumerate() {
            if !(iv.start.is_finite() && iv.end.is_finite()) || iv.start >= iv.end {
                return Err(FlycapError::InvalidTrajectory(format!(
                    "interval {i} has start {} >= end {}",
                    iv.start, iv.end
                )));
            }
            if iv.mode.cells() != cells {
                return Err(FlycapError::InvalidTrajectory(format!(
                    "interval {i} has {} cells, expected {cells}",
                    iv.mode.cells()
                )));
            }
            if i > 0 && intervals[i - 1].end != iv.start {
                return Err(FlycapError::InvalidTrajectory(format!(
                    "interval {i} starts at {} but interval {} ends at {}",
                    iv.start,
                    i - 1,
                    intervals[i - 1].end
                )));
            }
        }
        Ok(Self { intervals })
    }

    /// Trajectory visiting `modes` in order, each for `dwell` seconds from t = 0.
    pub fn from_modes(modes: Vec<ModeVector>, dwell: f64) -> Result<Self> {
        if !(dwell.is_finite() && dwell > 0.0) {
            return Err(FlycapError::invalid("dwell", format!("must be > 0, got {dwell}")));
        }
        let intervals = modes
            .into_iter()
            .enumerate()
            .map(|(i, mode)| ModeInterval {
                start: i as f64 * dwell,
                end: (i + 1) as f64 * dwell,
                mode,
            })
            .collect();
        Self::new(intervals)
    }

    pub fn intervals(&self) -> &[ModeInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn t_ini(&self) -> f64 {
        self.intervals[0].start
    }

    pub fn t_end(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].end
    }

    pub fn span(&self) -> f64 {
        self.t_end() - self.t_ini()
    }

    pub fn cells(&self) -> usize {
        self.intervals[0].mode.cells()
    }

    /// The ordered list of modes, one per interval.
    pub fn inputs(&self) -> Vec<&ModeVector> {
        self.intervals.iter().map(|iv| &iv.mode).collect()
    }

    /// Mode active at `t`, or `None` outside `[t_ini, t_end)`.
    pub fn mode_at(&self, t: f64) -> Option<&ModeVector> {
        if t < self.t_ini() || t >= self.t_end() {
            return None;
        }
        let idx = self.intervals.partition_point(|iv| iv.end <= t);
        self.intervals.get(idx).map(|iv| &iv.mode)
    }

    /// Appends `other`, which must start where `self` ends. Equal modes on
    /// both sides of the seam are merged so the result stays maximal.
    pub fn concat(mut self, other: HybridTimeTrajectory) -> Result<Self> {
        if other.t_ini() != self.t_end() {
            return Err(FlycapError::InvalidTrajectory(format!(
                "cannot append a trajectory starting at {} to one ending at {}",
                other.t_ini(),
                self.t_end()
            )));
        }
        let mut rest = other.intervals.into_iter();
        if let Some(first) = rest.next() {
            let last = self.intervals.last_mut().expect("non-empty");
            if last.mode == first.mode {
                last.end = first.end;
            } else {
                self.intervals.push(first);
            }
        }
        self.intervals.extend(rest);
        Self::new(self.intervals)
    }

    /// CSV export: `t_start,t_end,S1..Sp,u1..up`.
    pub fn to_csv(&self) -> String {
        let p = self.cells();
        let mut out = String::from("t_start,t_end");
        for j in 1..=p {
            let _ = write!(out, ",S{j}");
        }
        for j in 1..=p {
            let _ = write!(out, ",u{j}");
        }
        out.push('\n');
        for iv in &self.intervals {
            let _ = write!(out, "{},{}", crate::format::sig9(iv.start), crate::format::sig9(iv.end));
            for s in iv.mode.switches() {
                let _ = write!(out, ",{s}");
            }
            for u in iv.mode.inputs() {
                let _ = write!(out, ",{u}");
            }
            out.push('\n');
        }
        out
    }
}

/// Maximal constant-mode segments of the PWM signal over `[t_ini, t_end]`.
pub fn trajectory_from_pwm(cfg: &PwmConfig, t_ini: f64, t_end: f64) -> Result<HybridTimeTrajectory> {
    if !(t_ini.is_finite() && t_end.is_finite()) || t_ini >= t_end {
        return Err(FlycapError::DegenerateWindow {
            start: t_ini,
            end: t_end,
        });
    }
    let mut bounds = cfg.candidate_edges(t_ini, t_end);
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();
    let mut points = Vec::with_capacity(bounds.len() + 2);
    points.push(t_ini);
    points.extend(bounds);
    points.push(t_end);

    let mut intervals: Vec<ModeInterval> = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mode = cfg.mode_at(0.5 * (a + b));
        match intervals.last_mut() {
            Some(last) if last.mode == mode => last.end = b,
            _ => intervals.push(ModeInterval { start: a, end: b, mode }),
        }
    }
    HybridTimeTrajectory::new(intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn analog_default() -> PwmConfig {
        PwmConfig::new(5_000.0, vec![0.5; 3], 1.0 / 3.0, None).unwrap()
    }

    #[test]
    fn zero_duty_never_switches_on() {
        let cfg = PwmConfig::new(5_000.0, vec![0.0; 3], 1.0 / 3.0, Some(5e-6)).unwrap();
        for k in 0..400 {
            assert_eq!(cfg.mode_at(k as f64 * 1.3e-6).switches(), &[0, 0, 0]);
        }
        let traj = trajectory_from_pwm(&cfg, 0.0, 1e-3).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.intervals()[0].mode.switches(), &[0, 0, 0]);
    }

    #[test]
    fn mode_at_origin_follows_carrier_phases() {
        // carriers at t = 0 are 0, 2/3 and 1/3: cell 2 is off at duty 0.5
        assert_eq!(PwmConfig::default_for(3).mode_at(0.0).switches(), &[1, 0, 1]);
        assert_eq!(analog_default().mode_at(0.0).switches(), &[1, 0, 1]);
    }

    #[test]
    fn one_period_visits_every_informative_mode() {
        // enumerate at 5 µs over one 200 µs period
        for cfg in [PwmConfig::default_for(3), analog_default()] {
            let seen: BTreeSet<Vec<u8>> = (0..40)
                .map(|k| cfg.mode_at(k as f64 * 5e-6).switches().to_vec())
                .collect();
            let informative: BTreeSet<Vec<u8>> = (0..8)
                .map(|i| ModeVector::from_index(i, 3).unwrap())
                .filter(|m| m.capacitor_inputs().iter().any(|&u| u != 0))
                .map(|m| m.switches().to_vec())
                .collect();
            assert_eq!(seen, informative);
        }
    }

    #[test]
    fn six_intervals_per_period() {
        // oracle: count level changes of each carrier-vs-duty comparison on a
        // fine grid; every cell rises once and falls once per period
        let cfg = analog_default();
        let n = 120_000;
        let mut changes = 0;
        let mut prev: Option<Vec<u8>> = None;
        for k in 0..n {
            let t = (k as f64 + 0.5) * 200e-6 / n as f64;
            let s = cfg.mode_at(t).switches().to_vec();
            if let Some(p) = &prev {
                changes += p.iter().zip(&s).filter(|(a, b)| a != b).count();
            }
            prev = Some(s);
        }
        // the rise of cell 1 at t = 0 is on the window boundary
        assert_eq!(changes + 1, 6);
        for cfg in [PwmConfig::default_for(3), analog_default()] {
            let traj = trajectory_from_pwm(&cfg, 0.0, 200e-6).unwrap();
            assert_eq!(traj.len(), 6);
        }
    }

    #[test]
    fn digital_intervals_sit_on_the_update_grid() {
        let traj = trajectory_from_pwm(&PwmConfig::default_for(3), 0.0, 200e-6).unwrap();
        let lengths: Vec<i64> = traj
            .intervals()
            .iter()
            .map(|iv| (iv.duration() / 5e-6).round() as i64)
            .collect();
        assert_eq!(lengths, vec![7, 7, 6, 7, 7, 6]);
    }

    #[test]
    fn concatenation_matches_single_window() {
        for cfg in [PwmConfig::default_for(3), analog_default()] {
            let t = 1.0 / 5_000.0;
            let a = trajectory_from_pwm(&cfg, 0.0, t).unwrap();
            let b = trajectory_from_pwm(&cfg, t, 2.0 * t).unwrap();
            let whole = trajectory_from_pwm(&cfg, 0.0, 2.0 * t).unwrap();
            assert_eq!(a.concat(b).unwrap(), whole);
        }
    }

    #[test]
    fn degenerate_window_is_rejected() {
        let cfg = PwmConfig::default_for(3);
        assert!(matches!(
            trajectory_from_pwm(&cfg, 1e-3, 1e-3),
            Err(FlycapError::DegenerateWindow { .. })
        ));
    }

    #[test]
    fn trajectory_structure_is_validated() {
        let m = ModeVector::from_switches(&[0, 1, 0]).unwrap();
        assert!(HybridTimeTrajectory::new(vec![]).is_err());
        let gap = vec![
            ModeInterval {
                start: 0.0,
                end: 1.0,
                mode: m.clone(),
            },
            ModeInterval {
                start: 1.5,
                end: 2.0,
                mode: m.clone(),
            },
        ];
        assert!(HybridTimeTrajectory::new(gap).is_err());
        let reversed = vec![ModeInterval {
            start: 1.0,
            end: 1.0,
            mode: m,
        }];
        assert!(HybridTimeTrajectory::new(reversed).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PwmConfig::new(0.0, vec![0.5; 3], 0.3, None).is_err());
        assert!(PwmConfig::new(5e3, vec![0.5, 1.2, 0.5], 0.3, None).is_err());
        assert!(PwmConfig::new(5e3, vec![0.5; 3], 1.0, None).is_err());
        assert!(PwmConfig::new(5e3, vec![0.5; 3], 0.3, Some(0.0)).is_err());
        assert!(PwmConfig::new(5e3, vec![1.0, 0.0, 0.25], 0.0, None).is_ok());
    }

    #[test]
    fn csv_export_has_one_row_per_interval() {
        let traj = trajectory_from_pwm(&PwmConfig::default_for(3), 0.0, 200e-6).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t_start,t_end,S1,S2,S3,u1,u2,u3"));
        assert_eq!(lines.next(), Some("0,3.5e-05,1,0,1,-1,1,1"));
        assert_eq!(csv.lines().count(), 7);
    }
}
