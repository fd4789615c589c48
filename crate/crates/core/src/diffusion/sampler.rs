use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::schedule::DiffusionSchedule;
use crate::error::{Error, Result};

/// A network predicting the clean sample from a noisy one.
pub trait Denoiser {
    type Cond;

    /// Returns the `x0` estimate for `x_t` at step `t`; same length as `x_t`.
    fn denoise(&self, x_t: &[f64], cond: &Self::Cond, t: usize) -> Result<Vec<f64>>;
}

/// A forward-noised sample together with the draw that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyState {
    pub x_t: Vec<f64>,
    pub t: usize,
    pub epsilon: Vec<f64>,
}

pub fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn check_step(sched: &DiffusionSchedule, t: usize) -> Result<()> {
    if t >= sched.steps() {
        return Err(Error::BadStep { step: t, reason: "beyond the last diffusion step" });
    }
    Ok(())
}

/// `x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps` with seeded `eps`.
pub fn forward_noise(x0: &[f64], t: usize, sched: &DiffusionSchedule, seed: u64) -> Result<NoisyState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    forward_noise_with(x0, t, sched, &mut rng)
}

pub fn forward_noise_with(x0: &[f64], t: usize, sched: &DiffusionSchedule, rng: &mut ChaCha8Rng) -> Result<NoisyState> {
    check_step(sched, t)?;
    let epsilon = standard_normal(rng, x0.len());
    let (a, b) = (sched.alpha_bar[t].sqrt(), (1.0 - sched.alpha_bar[t]).sqrt());
    let x_t = x0.iter().zip(&epsilon).map(|(x, e)| a * x + b * e).collect();
    Ok(NoisyState { x_t, t, epsilon })
}

/// Noise direction implied by an `x0` estimate.
pub fn implied_noise(x_t: &[f64], x0_pred: &[f64], t: usize, sched: &DiffusionSchedule) -> Vec<f64> {
    let (a, b) = (sched.alpha_bar[t].sqrt(), (1.0 - sched.alpha_bar[t]).sqrt());
    x_t.iter().zip(x0_pred).map(|(x, p)| (x - a * p) / b).collect()
}

/// Generalized reverse step from `t` to `t_prev` (`None` is the clean end).
///
/// `eta = 1` with `t_prev = t - 1` is the ancestral step; `eta = 0` is
/// deterministic. `noise` must be supplied when the step variance is positive.
pub fn ddim_step(
    x_t: &[f64],
    x0_pred: &[f64],
    t: usize,
    t_prev: Option<usize>,
    eta: f64,
    sched: &DiffusionSchedule,
    noise: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_step(sched, t)?;
    if x_t.len() != x0_pred.len() {
        return Err(Error::ShapeMismatch(format!("x_t has {} values, x0 {}", x_t.len(), x0_pred.len())));
    }
    let Some(tp) = t_prev else {
        return Ok(x0_pred.to_vec());
    };
    if tp >= t {
        return Err(Error::BadStep { step: t, reason: "previous step must be earlier" });
    }
    let (ab_t, ab_p) = (sched.alpha_bar[t], sched.alpha_bar[tp]);
    let var = eta * eta * (1.0 - ab_p) / (1.0 - ab_t) * (1.0 - ab_t / ab_p);
    Ok(step_with_variance(x_t, x0_pred, t, ab_p, var, sched, noise))
}

fn step_with_variance(
    x_t: &[f64],
    x0_pred: &[f64],
    t: usize,
    ab_p: f64,
    var: f64,
    sched: &DiffusionSchedule,
    noise: Option<&[f64]>,
) -> Vec<f64> {
    let eps = implied_noise(x_t, x0_pred, t, sched);
    let (c0, c1) = (ab_p.sqrt(), (1.0 - ab_p - var).max(0.0).sqrt());
    let sd = var.sqrt();
    eps.iter()
        .zip(x0_pred)
        .enumerate()
        .map(|(i, (e, p))| {
            let z = match noise {
                Some(n) if sd > 0.0 => sd * n[i],
                _ => 0.0,
            };
            c0 * p + c1 * e + z
        })
        .collect()
}

/// Mean of the ancestral reverse step:
/// `sqrt(alpha_bar_{t-1}) x0 + sqrt(1 - alpha_bar_{t-1} - sigma_t^2) eps`.
pub fn reverse_mean(x_t: &[f64], x0_pred: &[f64], t: usize, sched: &DiffusionSchedule) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::BadStep { step: 0, reason: "the reverse mean needs t >= 1" });
    }
    check_step(sched, t)?;
    if x_t.len() != x0_pred.len() {
        return Err(Error::ShapeMismatch(format!("x_t has {} values, x0 {}", x_t.len(), x0_pred.len())));
    }
    Ok(step_with_variance(x_t, x0_pred, t, sched.alpha_bar[t - 1], sched.variance[t], sched, None))
}

fn checked<D: Denoiser + ?Sized>(den: &D, x: &[f64], cond: &D::Cond, t: usize) -> Result<Vec<f64>> {
    let out = den.denoise(x, cond, t)?;
    if out.len() != x.len() {
        return Err(Error::ShapeMismatch(format!("denoiser returned {} values for {}", out.len(), x.len())));
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("denoiser output at step {t}")));
    }
    Ok(out)
}

/// Strided DDIM sampling from seeded Gaussian noise of length `len`.
pub fn ddim_sample<D: Denoiser + ?Sized>(
    den: &D,
    cond: &D::Cond,
    len: usize,
    sched: &DiffusionSchedule,
    substeps: usize,
    eta: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidInput(format!("eta {eta} outside [0, 1]")));
    }
    let taus = sched.substeps(substeps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = standard_normal(&mut rng, len);
    for i in (0..taus.len()).rev() {
        let t = taus[i];
        let x0 = checked(den, &x, cond, t)?;
        let prev = i.checked_sub(1).map(|j| taus[j]);
        let noise = (eta > 0.0 && prev.is_some()).then(|| standard_normal(&mut rng, len));
        x = ddim_step(&x, &x0, t, prev, eta, sched, noise.as_deref())?;
    }
    Ok(x)
}

/// Full-length ancestral sampling through [`reverse_mean`].
pub fn ancestral_sample<D: Denoiser + ?Sized>(
    den: &D,
    cond: &D::Cond,
    len: usize,
    sched: &DiffusionSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = standard_normal(&mut rng, len);
    for t in (1..sched.steps()).rev() {
        let x0 = checked(den, &x, cond, t)?;
        let mean = reverse_mean(&x, &x0, t, sched)?;
        let sd = sched.sigma(t);
        let z = standard_normal(&mut rng, len);
        x = mean.iter().zip(&z).map(|(m, z)| m + sd * z).collect();
    }
    checked(den, &x, cond, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::{make_schedule, ScheduleKind};
    use rand::Rng;

    struct Fixed(Vec<f64>);

    impl Denoiser for Fixed {
        type Cond = ();
        fn denoise(&self, _: &[f64], _: &(), _: usize) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    /// Posterior-mean denoiser for 1-D data drawn from N(m, s^2).
    struct GaussianOracle<'a> {
        m: f64,
        s2: f64,
        sched: &'a DiffusionSchedule,
    }

    impl Denoiser for GaussianOracle<'_> {
        type Cond = ();
        fn denoise(&self, x: &[f64], _: &(), t: usize) -> Result<Vec<f64>> {
            let ab = self.sched.alpha_bar[t];
            let gain = ab.sqrt() * self.s2 / (ab * self.s2 + 1.0 - ab);
            Ok(x.iter().map(|v| self.m + gain * (v - ab.sqrt() * self.m)).collect())
        }
    }

    #[test]
    fn forward_noise_is_seeded() {
        let s = make_schedule(ScheduleKind::Cosine, 1000).unwrap();
        let x0 = vec![0.3; 16];
        let a = forward_noise(&x0, 500, &s, 9).unwrap();
        assert_eq!(a, forward_noise(&x0, 500, &s, 9).unwrap());
        let near = forward_noise(&x0, 0, &s, 9).unwrap();
        let scale = (1.0 - s.alpha_bar[0]).sqrt();
        for (x, e) in near.x_t.iter().zip(&near.epsilon) {
            assert!((x - 0.3).abs() <= scale * e.abs() + 1e-3);
        }
        assert!(forward_noise(&x0, 1000, &s, 9).is_err());
    }

    #[test]
    fn forward_variance_matches() {
        let s = make_schedule(ScheduleKind::Cosine, 1000).unwrap();
        let n = 10_000;
        let st = forward_noise(&vec![0.0; n], 400, &s, 3).unwrap();
        let var = st.x_t.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let expect = 1.0 - s.alpha_bar[400];
        assert!((var / expect - 1.0).abs() < 0.05);
    }

    #[test]
    fn reverse_mean_coefficients() {
        let s = make_schedule(ScheduleKind::Linear, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = 20;
        let (ab, abp, v) = (s.alpha_bar[t], s.alpha_bar[t - 1], s.variance[t]);
        let cx = (1.0 - abp - v).sqrt() / (1.0 - ab).sqrt();
        let cp = abp.sqrt() - cx * ab.sqrt();
        let mu = reverse_mean(&x, &p, t, &s).unwrap();
        for i in 0..8 {
            assert!((mu[i] - (cx * x[i] + cp * p[i])).abs() < 1e-12);
        }
        assert!(matches!(reverse_mean(&x, &p, 0, &s), Err(Error::BadStep { step: 0, .. })));
    }

    #[test]
    fn reverse_mean_with_zero_implied_noise() {
        let s = make_schedule(ScheduleKind::Cosine, 100).unwrap();
        let p = vec![0.7, -1.1];
        let t = 30;
        let x: Vec<f64> = p.iter().map(|v| v * s.alpha_bar[t].sqrt()).collect();
        let mu = reverse_mean(&x, &p, t, &s).unwrap();
        for i in 0..2 {
            assert!((mu[i] - s.alpha_bar[t - 1].sqrt() * p[i]).abs() < 1e-12);
        }
        let ddim = ddim_step(&x, &p, t, Some(t - 1), 1.0, &s, None).unwrap();
        assert_eq!(mu, ddim);
    }

    #[test]
    fn fixed_target_is_reached() {
        let s = make_schedule(ScheduleKind::Cosine, 1000).unwrap();
        let g = vec![0.5, -2.0, 3.0];
        for seed in 0..4 {
            let out = ddim_sample(&Fixed(g.clone()), &(), 3, &s, 50, 0.0, seed).unwrap();
            for (a, b) in out.iter().zip(&g) {
                assert!((a - b).abs() < 1e-4);
            }
        }
        let a = ddim_sample(&Fixed(g.clone()), &(), 3, &s, 50, 0.0, 1).unwrap();
        let b = ddim_sample(&Fixed(g.clone()), &(), 3, &s, 50, 0.0, 1).unwrap();
        assert_eq!(a, b);
        assert!(ddim_sample(&Fixed(g), &(), 3, &s, 50, 1.5, 1).is_err());
    }

    #[test]
    fn full_stride_eta_one_matches_data_moments() {
        let s = make_schedule(ScheduleKind::Cosine, 200).unwrap();
        let oracle = GaussianOracle { m: 1.0, s2: 0.25, sched: &s };
        let n = 10_000;
        let ddim = ddim_sample(&oracle, &(), n, &s, 200, 1.0, 11).unwrap();
        let anc = ancestral_sample(&oracle, &(), n, &s, 12).unwrap();
        for xs in [ddim, anc] {
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - 1.0).abs() < 3.0 * (0.25f64 / n as f64).sqrt(), "mean {mean}");
            assert!((var - 0.25).abs() < 3.0 * 0.25 * (2.0 / n as f64).sqrt(), "var {var}");
        }
    }
}
