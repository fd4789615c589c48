//! Toy denoiser and coordinator networks with exact gradients.

mod attention;
pub mod coordinator;
pub mod denoiser;
pub mod embed;
pub mod layout;

pub use coordinator::{
    coordinate, coordinator_forward, join_pair, refine_multi, refine_pair, split_pair, CoordinatorArch,
    CoordinatorParams,
};
pub use denoiser::{
    denoise, denoiser_forward, step_embedding, Conditioning, DenoiserArch, DenoiserParams, COND_TOKENS, PAIR_DIM,
};
pub use embed::{sinusoidal, time_embedding, TIME_EMBED_DIM};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interleave::{TextEmbedding, TEXT_DIM};
    use crate::motion::FEATURE_DIM;
    use crate::nn::{eval, finite_difference, grad, relative_error, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn text(seed: u64) -> TextEmbedding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TextEmbedding::new("probe", (0..TEXT_DIM).map(|_| rng.gen_range(-0.1..0.1)).collect())
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn perturb(values: &mut [f64], seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        values.iter_mut().for_each(|v| *v += scale * rng.gen_range(-1.0..1.0));
    }

    #[test]
    fn parameter_counts_match_formula() {
        for (l, w, h) in [(1, 8, 2), (4, 128, 4), (2, 32, 4)] {
            let arch = DenoiserArch { layers: l, width: w, heads: h };
            assert_eq!(DenoiserParams::init(arch, 0).unwrap().values.len(), arch.param_count());
            let arch = CoordinatorArch { layers: l, width: w, heads: h };
            assert_eq!(CoordinatorParams::init(arch, 0).unwrap().values.len(), arch.param_count());
        }
        let base = DenoiserArch { layers: 1, width: 16, heads: 2 }.param_count();
        let more = DenoiserArch { layers: 2, width: 16, heads: 2 }.param_count();
        assert_eq!(more - base, 8 * 16 * 16 + 11 * 16);
        assert!(DenoiserArch { layers: 1, width: 10, heads: 4 }.validate().is_err());
    }

    #[test]
    fn fresh_denoiser_predicts_zero() {
        let p = DenoiserParams::init(DenoiserArch { layers: 2, width: 16, heads: 2 }, 1).unwrap();
        let cond = Conditioning::new(text(1), Some(0), Some(10));
        let x = noise(12 * PAIR_DIM, 2);
        let out = denoise(&p, &x, &cond, 500).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
        assert_eq!(out.len(), x.len());
    }

    #[test]
    fn denoiser_is_deterministic_and_sensitive_to_timing() {
        let mut p = DenoiserParams::init(DenoiserArch { layers: 2, width: 16, heads: 2 }, 3).unwrap();
        perturb(&mut p.values, 4, 0.05);
        let x = noise(12 * PAIR_DIM, 5);
        let a = Conditioning::new(text(2), Some(0), Some(6));
        let b = Conditioning::new(text(2), Some(4), Some(0));
        let out_a = denoise(&p, &x, &a, 10).unwrap();
        assert_eq!(out_a, denoise(&p, &x, &a, 10).unwrap());
        let diff: f64 = out_a.iter().zip(denoise(&p, &x, &b, 10).unwrap()).map(|(u, v)| (u - v).abs()).sum();
        assert!(diff > 0.0);
        assert!(denoise(&p, &x[..PAIR_DIM - 1], &a, 10).is_err());
    }

    #[test]
    fn fresh_coordinator_is_identity() {
        let p = CoordinatorParams::init(CoordinatorArch { layers: 2, width: 16, heads: 2 }, 6).unwrap();
        let pair = noise(10 * PAIR_DIM, 7);
        let (ux, uy) = split_pair(&pair).unwrap();
        assert_eq!(join_pair(&ux, &uy).unwrap(), pair);
        assert_eq!(coordinate(&p, &ux, &uy, &text(3)).unwrap(), ux);
        let (px, py) = refine_pair(&pair, &p, &text(3)).unwrap();
        assert_eq!((px, py), (ux.clone(), uy.clone()));
        let many = vec![ux.clone(), uy.clone(), noise(10 * FEATURE_DIM, 8)];
        assert_eq!(refine_multi(&many, &p, &text(3), 3).unwrap(), many);
    }

    #[test]
    fn two_agent_multi_refinement_is_refine_pair() {
        let mut p = CoordinatorParams::init(CoordinatorArch { layers: 2, width: 16, heads: 2 }, 9).unwrap();
        perturb(&mut p.values, 10, 0.05);
        let pair = noise(8 * PAIR_DIM, 11);
        let (ux, uy) = split_pair(&pair).unwrap();
        let (px, py) = refine_pair(&pair, &p, &text(4)).unwrap();
        assert_ne!(px, ux);
        let multi = refine_multi(&[ux.clone(), uy.clone()], &p, &text(4), 1).unwrap();
        assert_eq!(multi, vec![px.clone(), py.clone()]);
        // Swapping which character goes first changes the second output.
        let swapped_y = coordinate(&p, &uy, &ux, &text(4)).unwrap();
        assert_ne!(swapped_y, py);
    }

    #[test]
    fn denoiser_gradient_matches_finite_differences() {
        let arch = DenoiserArch { layers: 1, width: 8, heads: 2 };
        let mut p = DenoiserParams::init(arch, 12).unwrap();
        perturb(&mut p.values, 13, 0.1);
        let x = Tensor::new(5, PAIR_DIM, noise(5 * PAIR_DIM, 14)).unwrap();
        let target = Tensor::new(5, PAIR_DIM, noise(5 * PAIR_DIM, 15)).unwrap();
        let cond = Conditioning::new(text(5), Some(2), Some(0));
        let build = |g: &mut crate::nn::Graph| {
            let xi = g.input(x.clone());
            let ti = g.input(target.clone());
            let out = denoiser_forward(g, &arch, xi, &cond, 7)?;
            g.masked_mse(out, ti, &[true, true, false, true, true])
        };
        let (_, gr) = grad(&p.values, build).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..32 {
            let i = rng.gen_range(0..p.values.len());
            let fd = finite_difference(&p.values, i, 1e-6, |v| eval(v, build)).unwrap();
            assert!(relative_error(gr[i], fd, 1e-6) < 1e-4, "{i}: {} vs {fd}", gr[i]);
        }
    }

    #[test]
    fn coordinator_gradient_matches_finite_differences() {
        let arch = CoordinatorArch { layers: 2, width: 8, heads: 2 };
        let mut p = CoordinatorParams::init(arch, 17).unwrap();
        perturb(&mut p.values, 18, 0.1);
        let a = Tensor::new(4, FEATURE_DIM, noise(4 * FEATURE_DIM, 19)).unwrap();
        let b = Tensor::new(4, FEATURE_DIM, noise(4 * FEATURE_DIM, 20)).unwrap();
        let t = text(6);
        let build = |g: &mut crate::nn::Graph| {
            let (ai, bi) = (g.input(a.clone()), g.input(b.clone()));
            let out = coordinator_forward(g, &arch, ai, bi, &t)?;
            let d = g.sub(out, bi)?;
            Ok(g.rms(d))
        };
        let (_, gr) = grad(&p.values, build).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..32 {
            let i = rng.gen_range(0..p.values.len());
            let fd = finite_difference(&p.values, i, 1e-6, |v| eval(v, build)).unwrap();
            assert!(relative_error(gr[i], fd, 1e-6) < 1e-4, "{i}: {} vs {fd}", gr[i]);
        }
    }
}
