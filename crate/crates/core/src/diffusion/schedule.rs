use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the noise schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    Linear,
}

/// Serialized form of a schedule; the tables are rebuilt on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDescriptor {
    pub kind: ScheduleKind,
    pub steps: usize,
}

impl Default for ScheduleDescriptor {
    fn default() -> Self {
        Self { kind: ScheduleKind::Cosine, steps: 1000 }
    }
}

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;

/// Per-step noise tables indexed by `t` in `[0, steps)`.
///
/// `variance[t]` is the ancestral reverse-step variance
/// `sigma_t^2 = beta[t] (1 - alpha_bar[t-1]) / (1 - alpha_bar[t])` with
/// `alpha_bar[-1] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    kind: ScheduleKind,
    pub alpha_bar: Vec<f64>,
    pub beta: Vec<f64>,
    pub variance: Vec<f64>,
}

fn cosine_f(t: f64, steps: f64) -> f64 {
    let a = (t / steps + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2;
    a.cos().powi(2)
}

impl DiffusionSchedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::BadSteps(steps));
        }
        let n = steps as f64;
        let beta: Vec<f64> = match kind {
            ScheduleKind::Cosine => (0..steps)
                .map(|t| (1.0 - cosine_f(t as f64 + 1.0, n) / cosine_f(t as f64, n)).min(MAX_BETA))
                .collect(),
            ScheduleKind::Linear => {
                let scale = 1000.0 / n;
                let (lo, hi) = (1e-4 * scale, 0.02 * scale);
                (0..steps).map(|t| (lo + (hi - lo) * t as f64 / (n - 1.0)).min(MAX_BETA)).collect()
            }
        };
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        let variance = (0..steps)
            .map(|t| {
                let prev = if t == 0 { 1.0 } else { alpha_bar[t - 1] };
                beta[t] * (1.0 - prev) / (1.0 - alpha_bar[t])
            })
            .collect();
        Ok(Self { kind, alpha_bar, beta, variance })
    }

    pub fn from_descriptor(d: &ScheduleDescriptor) -> Result<Self> {
        Self::new(d.kind, d.steps)
    }

    pub fn descriptor(&self) -> ScheduleDescriptor {
        ScheduleDescriptor { kind: self.kind, steps: self.steps() }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.variance[t].sqrt()
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    /// `alpha_bar[t - 1]`, with 1 before the first step.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Evenly strided subset of step indices, ascending: `floor(i * T / S)`.
    pub fn substeps(&self, count: usize) -> Result<Vec<usize>> {
        if count == 0 || count > self.steps() {
            return Err(Error::InvalidInput(format!(
                "substep count {count} outside [1, {}]",
                self.steps()
            )));
        }
        Ok((0..count).map(|i| i * self.steps() / count).collect())
    }
}

/// Builds a schedule of the given shape.
pub fn make_schedule(kind: ScheduleKind, steps: usize) -> Result<DiffusionSchedule> {
    DiffusionSchedule::new(kind, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_two_steps() {
        let s = make_schedule(ScheduleKind::Linear, 2).unwrap();
        assert_eq!(s.alpha_bar.len(), 2);
        assert!(s.alpha_bar[0] > s.alpha_bar[1] && s.alpha_bar[1] > 0.0);
        assert!(matches!(make_schedule(ScheduleKind::Cosine, 1), Err(Error::BadSteps(1))));
    }

    #[test]
    fn cosine_first_step_close_to_one() {
        let s = make_schedule(ScheduleKind::Cosine, 1000).unwrap();
        let f = |t: f64| (((t / 1000.0 + 0.008) / 1.008) * std::f64::consts::PI / 2.0).cos().powi(2);
        assert!((s.alpha_bar[0] - f(1.0) / f(0.0)).abs() < 1e-15);
        assert!(s.alpha_bar[0] > 0.999);
        assert!(s.alpha_bar[999] < 1e-3);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn sigma_identity() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
            let s = make_schedule(kind, 100).unwrap();
            for t in 0..100 {
                let prev = if t == 0 { 1.0 } else { s.alpha_bar[t - 1] };
                let expect = s.beta[t] * (1.0 - prev) / (1.0 - s.alpha_bar[t]);
                assert_eq!(s.variance[t], expect);
                assert!((s.beta[t] - (1.0 - s.alpha_bar[t] / prev)).abs() < 1e-12);
            }
            assert_eq!(s.variance[0], 0.0);
        }
    }

    #[test]
    fn strided_substeps() {
        let s = make_schedule(ScheduleKind::Cosine, 1000).unwrap();
        let sub = s.substeps(50).unwrap();
        assert_eq!(sub.len(), 50);
        assert_eq!(sub[0], 0);
        assert_eq!(sub[49], 980);
        assert!(s.substeps(1001).is_err());
    }
}
