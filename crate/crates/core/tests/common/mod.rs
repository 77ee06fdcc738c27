//! Helpers shared by the integration tests.
//!
//! `oracle` is a deliberately plain re-implementation of the nominal
//! scenario: integer sample counting for the modulator, scalar state, no
//! library types. It exists to cross-check the library, so it must not call
//! into `flycap`.

#![allow(dead_code)]

pub mod oracle {
    pub const E: f64 = 150.0;
    pub const R: f64 = 131.0;
    pub const L: f64 = 0.01;
    pub const C: f64 = 40e-6;
    /// Samples per carrier period: 200 us at 5 us.
    const SAMPLES_PER_PERIOD: usize = 40;
    pub const SAMPLE: f64 = 5e-6;

    /// Switch states at modulator sample `k`: duty 1/2, carriers shifted by a third.
    pub fn switches(k: usize) -> [u8; 3] {
        let phase = (k % SAMPLES_PER_PERIOD) as f64 / SAMPLES_PER_PERIOD as f64;
        let mut s = [0u8; 3];
        for (j, sj) in s.iter_mut().enumerate() {
            let c = (phase - j as f64 / 3.0).rem_euclid(1.0);
            *sj = u8::from(c < 0.5);
        }
        s
    }

    pub struct Run {
        pub dt: f64,
        pub t: Vec<f64>,
        pub e1: Vec<f64>,
        pub e2: Vec<f64>,
        pub e3: Vec<f64>,
        pub l: Vec<f64>,
        pub plant: [f64; 3],
    }

    fn sgn(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// Nominal scenario with the published gains. `substeps` integration steps
    /// per modulator sample.
    pub fn nominal(substeps: usize, t_end: f64) -> Run {
        let dt = SAMPLE / substeps as f64;
        let n = (t_end / dt).round() as usize;
        let (l0, a0, kl0, ka0, k, kappa, eps) = (2.0, 4.0, 2.5, 20.0, 6e5, 20.0, 1e-3);

        let (mut i, mut v1, mut v2) = (0.0f64, 5.0f64, 10.0f64);
        let (mut ih, mut vh1, mut vh2) = (0.0f64, 0.0f64, 0.0f64);
        let (mut ss, mut sl, mut l) = (0.0f64, 0.0f64, 1.0f64);
        let mut run = Run {
            dt,
            t: Vec::with_capacity(n + 1),
            e1: Vec::with_capacity(n + 1),
            e2: Vec::with_capacity(n + 1),
            e3: Vec::with_capacity(n + 1),
            l: Vec::with_capacity(n + 1),
            plant: [0.0; 3],
        };
        for step in 0..=n {
            let s = switches(step / substeps);
            let u1 = s[1] as f64 - s[0] as f64;
            let u2 = s[2] as f64 - s[1] as f64;
            let u3 = s[2] as f64;
            run.t.push(step as f64 * dt);
            run.e1.push(i - ih);
            run.e2.push(v1 - vh1);
            run.e3.push(v2 - vh2);
            run.l.push(l);

            // observer, fed with the exact current
            let e1 = i - ih;
            let inside = e1.abs() <= eps;
            if !inside {
                l += k * dt;
            }
            ss += sgn(e1) * dt;
            sl += e1 * dt;
            let m = l0 * l.sqrt() * e1.abs().sqrt() * sgn(e1) + a0 * l * ss + kl0 * l * e1 + ka0 * l * l * sl;
            let (k1, k2) = if inside { (-kappa * u1, -kappa * u2) } else { (0.0, 0.0) };
            let dih = -R / L * i + E / L * u3 - vh1 / L * u1 - vh2 / L * u2 + m;
            let dvh1 = u1 / C * i + k1 * m;
            let dvh2 = u2 / C * i + k2 * m;

            if step < n {
                let di = -R / L * i + E / L * u3 - v1 / L * u1 - v2 / L * u2;
                let dv1 = u1 / C * i;
                let dv2 = u2 / C * i;
                i += dt * di;
                v1 += dt * dv1;
                v2 += dt * dv2;
            }
            ih += dt * dih;
            vh1 += dt * dvh1;
            vh2 += dt * dvh2;
        }
        run.plant = [i, v1, v2];
        run
    }

    /// First time after which `|e|` stays strictly below `threshold`.
    pub fn settle_time(t: &[f64], e: &[f64], threshold: f64) -> Option<f64> {
        let last_bad = e.iter().rposition(|x| x.abs() >= threshold);
        match last_bad {
            None => Some(t[0]),
            Some(idx) if idx + 1 < t.len() => Some(t[idx + 1]),
            Some(_) => None,
        }
    }
}
