//! Closed-form and fitted epsilon predictors used to verify the diffusion
//! machinery, plus standard DDPM ancestral sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{IsoError, Result};

use super::{DiffusionSchedule, EpsilonPredictor};

/// Bayes-optimal noise predictor for scalar data x0 ~ N(mu, sigma2).
///
/// eps*(x_t, t) = (x_t - sqrt(ab) E[x0|x_t]) / sqrt(1 - ab) with
/// E[x0|x_t] = mu + (sqrt(ab) sigma2 / (ab sigma2 + 1 - ab)) (x_t - sqrt(ab) mu).
/// Ignores mask, context and conditioning.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianPredictor {
    pub mu: f64,
    pub sigma2: f64,
    pub schedule: DiffusionSchedule,
}

impl AnalyticGaussianPredictor {
    pub fn new(mu: f64, sigma2: f64, schedule: DiffusionSchedule) -> Self {
        assert!(sigma2 >= 0.0);
        Self {
            mu,
            sigma2,
            schedule,
        }
    }

    pub fn posterior_mean_x0(&self, x_t: f64, t: usize) -> f64 {
        let ab = self.schedule.alpha_bar[t];
        let gain = ab.sqrt() * self.sigma2 / (ab * self.sigma2 + 1.0 - ab);
        self.mu + gain * (x_t - ab.sqrt() * self.mu)
    }
}

impl EpsilonPredictor for AnalyticGaussianPredictor {
    fn predict(
        &self,
        x_t: &[f64],
        _mask: &[f64],
        _masked_context: &[f64],
        t: usize,
        _cond: &[f64],
    ) -> Vec<f64> {
        let ab = self.schedule.alpha_bar[t];
        if ab >= 1.0 {
            return vec![0.0; x_t.len()];
        }
        let sb = (1.0 - ab).sqrt();
        x_t.iter()
            .map(|&x| (x - ab.sqrt() * self.posterior_mean_x0(x, t)) / sb)
            .collect()
    }
}

/// Per-t-bin linear predictor eps_hat(x_t) = a x_t + b fitted by closed-form
/// least squares over Monte Carlo (x0, eps, x_t) triples.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub coefficients: Vec<(f64, f64)>,
    pub t_count: usize,
}

impl LinearPredictor {
    pub fn bin_of(&self, t: usize) -> usize {
        t * self.coefficients.len() / self.t_count
    }
}

impl EpsilonPredictor for LinearPredictor {
    fn predict(
        &self,
        x_t: &[f64],
        _mask: &[f64],
        _masked_context: &[f64],
        t: usize,
        _cond: &[f64],
    ) -> Vec<f64> {
        let (a, b) = self.coefficients[self.bin_of(t)];
        x_t.iter().map(|&x| a * x + b).collect()
    }
}

/// Monte Carlo (t, x_t, eps) triples for one bin of schedule indices.
pub(crate) fn sample_bin_triples(
    dataset: &[f64],
    schedule: &DiffusionSchedule,
    bin_indices: &[usize],
    samples: usize,
    rng: &mut impl Rng,
) -> Vec<(f64, f64)> {
    let mut triples = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x0 = dataset[rng.gen_range(0..dataset.len())];
        let t = bin_indices[rng.gen_range(0..bin_indices.len())];
        let ab = schedule.alpha_bar[t];
        let e: f64 = StandardNormal.sample(rng);
        let x_t = ab.sqrt() * x0 + (1.0 - ab).sqrt() * e;
        triples.push((x_t, e));
    }
    triples
}

pub(crate) fn least_squares(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    let denom = sxx - sx * sx / n;
    if denom.abs() < 1e-12 {
        (0.0, sy / n)
    } else {
        let a = (sxy - sx * sy / n) / denom;
        (a, (sy - a * sx) / n)
    }
}

/// Fits one (a, b) pair per t-bin from `samples_per_bin` Monte Carlo triples.
/// Deterministic given the seed.
pub fn fit_linear_predictor(
    dataset: &[f64],
    schedule: &DiffusionSchedule,
    t_bins: usize,
    samples_per_bin: usize,
    seed: u64,
) -> Result<LinearPredictor> {
    assert!(t_bins >= 1);
    if dataset.is_empty() {
        return Err(IsoError::ShapeMismatch("empty dataset".into()));
    }
    let t_count = schedule.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coefficients = Vec::with_capacity(t_bins);
    for bin in 0..t_bins {
        let indices: Vec<usize> = (0..t_count).filter(|t| t * t_bins / t_count == bin).collect();
        if indices.is_empty() || samples_per_bin == 0 {
            return Err(IsoError::DegenerateBin(bin));
        }
        let triples = sample_bin_triples(dataset, schedule, &indices, samples_per_bin, &mut rng);
        coefficients.push(least_squares(&triples));
    }
    Ok(LinearPredictor {
        coefficients,
        t_count,
    })
}

/// Standard DDPM ancestral sampling of `n` scalar samples from pure noise.
pub fn ancestral_sample(
    predictor: &dyn EpsilonPredictor,
    schedule: &DiffusionSchedule,
    seed: u64,
    n: usize,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_count = schedule.len();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x: f64 = StandardNormal.sample(&mut rng);
        for t in (0..t_count).rev() {
            let ab = schedule.alpha_bar[t];
            let ab_prev = if t > 0 { schedule.alpha_bar[t - 1] } else { 1.0 };
            let alpha = ab / ab_prev;
            let eps_pred = predictor.predict(&[x], &[1.0], &[0.0], t, &[])[0];
            let mean = (x - (1.0 - alpha) / (1.0 - ab).sqrt() * eps_pred) / alpha.sqrt();
            if t > 0 {
                let var = (1.0 - alpha) * (1.0 - ab_prev) / (1.0 - ab);
                let z: f64 = StandardNormal.sample(&mut rng);
                x = mean + var.sqrt() * z;
            } else {
                x = mean;
            }
        }
        out.push(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn zero_variance_posterior_is_prior_mean() {
        let schedule = DiffusionSchedule::default_desk();
        let p = AnalyticGaussianPredictor::new(2.5, 0.0, schedule);
        for t in [0, 50, 199] {
            for x in [-3.0, 0.0, 4.2] {
                assert_relative_eq!(p.posterior_mean_x0(x, t), 2.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unit_gaussian_prior_gives_sqrt_one_minus_ab_times_xt() {
        let schedule = DiffusionSchedule::default_desk();
        let p = AnalyticGaussianPredictor::new(0.0, 1.0, schedule.clone());
        for t in [0, 37, 120, 199] {
            let ab = schedule.alpha_bar[t];
            let want = (1.0 - ab).sqrt();
            for x in [-2.0, 0.5, 3.0] {
                let eps = p.predict(&[x], &[1.0], &[0.0], t, &[])[0];
                assert_relative_eq!(eps, want * x, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn near_one_alpha_limit_posterior_approaches_xt_over_sqrt_ab() {
        let schedule = DiffusionSchedule::new(vec![1.0 - 1e-9]);
        let p = AnalyticGaussianPredictor::new(1.0, 4.0, schedule);
        let x_t = 2.0;
        let got = p.posterior_mean_x0(x_t, 0);
        let want = x_t / (1.0f64 - 1e-9).sqrt();
        assert!((got - want).abs() < 1e-6, "got {got} want {want}");
    }

    #[test]
    fn fitted_coefficients_match_analytic_on_unit_gaussian() {
        // One bin per schedule index so the analytic per-bin slope is
        // exactly sqrt(1 - alpha_bar_t).
        let schedule = DiffusionSchedule::linear(8, 0.95, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dataset: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fitted = fit_linear_predictor(&dataset, &schedule, 8, 100_000, 17).unwrap();
        for (t, &(a, b)) in fitted.coefficients.iter().enumerate() {
            let want = (1.0 - schedule.alpha_bar[t]).sqrt();
            assert!((a - want).abs() < 1e-2, "t={t} a={a} want={want}");
            assert!(b.abs() < 1e-2, "t={t} b={b}");
        }
    }

    #[test]
    fn constant_dataset_residual_vanishes_with_samples() {
        // With sigma2 = 0, eps = (x_t - sqrt(ab) c)/sqrt(1-ab) exactly.
        let schedule = DiffusionSchedule::linear(4, 0.9, 0.1);
        let dataset = vec![2.0];
        let mut last = f64::INFINITY;
        for samples in [1_000usize, 100_000] {
            let fitted = fit_linear_predictor(&dataset, &schedule, 4, samples, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(500);
            let mut rss = 0.0;
            let m = 20_000;
            for _ in 0..m {
                let t = rng.gen_range(0..4);
                let ab = schedule.alpha_bar[t];
                let e: f64 = StandardNormal.sample(&mut rng);
                let x_t = ab.sqrt() * 2.0 + (1.0 - ab).sqrt() * e;
                let pred = fitted.predict(&[x_t], &[1.0], &[0.0], t, &[])[0];
                rss += (pred - e) * (pred - e);
            }
            let mse = rss / m as f64;
            assert!(mse <= last * 1.0001 + 1e-12);
            last = mse;
        }
        assert!(last < 1e-6, "residual MSE {last}");
    }

    #[test]
    fn fitted_coefficients_minimize_empirical_mse() {
        let schedule = DiffusionSchedule::linear(6, 0.9, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let dataset: Vec<f64> = (0..5_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Refit on a frozen batch so optimality is exact, then perturb.
        for bin in 0..6 {
            let mut batch_rng = ChaCha8Rng::seed_from_u64(900 + bin as u64);
            let triples =
                sample_bin_triples(&dataset, &schedule, &[bin], 20_000, &mut batch_rng);
            let (a, b) = least_squares(&triples);
            let loss = |aa: f64, bb: f64| {
                triples
                    .iter()
                    .map(|&(x, y)| {
                        let r = y - (aa * x + bb);
                        r * r
                    })
                    .sum::<f64>()
                    / triples.len() as f64
            };
            let base = loss(a, b);
            for delta in [-0.05, 0.05] {
                assert!(loss(a + delta, b) > base);
                assert!(loss(a, b + delta) > base);
            }
        }
    }

    #[test]
    fn degenerate_bin_errors() {
        let schedule = DiffusionSchedule::linear(2, 0.9, 0.1);
        // More bins than schedule steps leaves empty bins.
        assert!(matches!(
            fit_linear_predictor(&[1.0], &schedule, 5, 10, 0),
            Err(IsoError::DegenerateBin(_))
        ));
    }

    #[test]
    fn ancestral_sampling_recovers_target_moments() {
        let schedule = DiffusionSchedule::linear(200, 0.9999, 1e-4);
        let p = AnalyticGaussianPredictor::new(3.0, 4.0, schedule.clone());
        let samples = ancestral_sample(&p, &schedule, 123, 10_000);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        assert!((mean - 3.0).abs() < 0.1, "mean {mean}");
        assert!((var - 4.0).abs() < 0.3, "var {var}");
    }

    #[test]
    fn single_step_schedule_matches_x_pred_formula() {
        let schedule = DiffusionSchedule::new(vec![0.3]);
        // Predictor returning a fixed value lets the one-step update be
        // checked against (x_T - sqrt(1-ab) eps_pred) / sqrt(ab).
        let fixed = |_: &[f64], _: &[f64], _: &[f64], _: usize, _: &[f64]| vec![0.25];
        let got = ancestral_sample(&fixed, &schedule, 9, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in got {
            let x_t: f64 = StandardNormal.sample(&mut rng);
            let want = (x_t - (1.0f64 - 0.3).sqrt() * 0.25) / 0.3f64.sqrt();
            assert_relative_eq!(g, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn ancestral_sampling_is_deterministic_per_seed() {
        let schedule = DiffusionSchedule::default_desk();
        let p = AnalyticGaussianPredictor::new(0.0, 1.0, schedule.clone());
        let a = ancestral_sample(&p, &schedule, 5, 50);
        let b = ancestral_sample(&p, &schedule, 5, 50);
        assert_eq!(a, b);
        let c = ancestral_sample(&p, &schedule, 6, 50);
        assert_ne!(a, c);
    }

}
