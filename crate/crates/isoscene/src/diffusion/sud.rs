//! Step-unrolled denoising: the inpainting training step that re-noises a
//! gradient-free first-pass prediction and supervises the second pass
//! against the recomputed noise target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{IsoError, Result};

use super::{
    forward_diffuse, make_training_mask, DiffusionSchedule, EpsilonPredictor,
};

/// Pseudo-foreground mask: one contiguous blob covering 20-60% of pixels.
pub fn pseudo_foreground_mask(pixels: usize, rng: &mut impl Rng) -> Vec<f64> {
    blob_mask(pixels, 0.2, 0.6, rng)
}

/// Random-shape mask: one contiguous blob covering 40-90% of pixels.
pub fn random_shape_mask(pixels: usize, rng: &mut impl Rng) -> Vec<f64> {
    blob_mask(pixels, 0.4, 0.9, rng)
}

fn blob_mask(pixels: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Vec<f64> {
    if pixels <= 1 {
        let _ = rng.gen::<f64>();
        return vec![1.0; pixels];
    }
    let frac = rng.gen_range(lo..hi);
    let len = ((pixels as f64 * frac).round() as usize).clamp(1, pixels);
    let start = rng.gen_range(0..=pixels - len);
    let mut m = vec![0.0; pixels];
    for v in &mut m[start..start + len] {
        *v = 1.0;
    }
    m
}

/// Intermediate quantities of one training step, exposed for verification.
#[derive(Debug, Clone, Serialize)]
pub struct SudDiagnostics {
    pub t: usize,
    pub alpha_bar: f64,
    pub eps: Vec<f64>,
    pub mask: Vec<f64>,
    pub x_t: Vec<f64>,
    pub x_hat_pred: Option<Vec<f64>>,
    pub x_hat_t: Option<Vec<f64>>,
    pub eps_bar: Option<Vec<f64>>,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SudStepConfig {
    pub unroll: bool,
    pub seed: u64,
}

fn masked_context(x0: &[f64], mask: &[f64]) -> Vec<f64> {
    let pixels = mask.len();
    x0.iter()
        .enumerate()
        .map(|(i, x)| (1.0 - mask[i % pixels]) * x)
        .collect()
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

/// One inpainting training step. Samples t and eps from the seed, builds the
/// training mask m = m_pfg * m_random * m_bg, and evaluates either the
/// standard denoising loss or the unrolled variant.
///
/// `first_pass` is the gradient-free predictor of the unrolled branch; when
/// `None` the main predictor is reused. The first pass receives a full
/// pseudo-foreground mask and no conditioning.
pub fn sud_training_step(
    predictor: &dyn EpsilonPredictor,
    first_pass: Option<&dyn EpsilonPredictor>,
    x0: &[f64],
    m_bg: &[f64],
    cond: &[f64],
    schedule: &DiffusionSchedule,
    config: SudStepConfig,
) -> Result<(f64, SudDiagnostics)> {
    if x0.is_empty() || m_bg.is_empty() || x0.len() % m_bg.len() != 0 {
        return Err(IsoError::ShapeMismatch(format!(
            "x0 of {} elements with background mask of {} pixels",
            x0.len(),
            m_bg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let t = schedule.snap_uniform(rng.gen::<f64>());
    let ab = schedule.alpha_bar_at(t)?;
    let eps: Vec<f64> = (0..x0.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let pixels = m_bg.len();
    let m_pfg = pseudo_foreground_mask(pixels, &mut rng);
    let m_random = random_shape_mask(pixels, &mut rng);
    let mask = make_training_mask(&m_pfg, &m_random, m_bg)?;
    let x_t = forward_diffuse(x0, t, &eps, schedule)?;

    if config.unroll {
        if ab <= 0.0 || ab >= 1.0 {
            return Err(IsoError::DegenerateScheduleStep(ab));
        }
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        let m_hat = pseudo_foreground_mask(pixels, &mut rng);
        let fp = first_pass.unwrap_or(predictor);
        // No gradients: the output is a constant w.r.t. any parameter fit.
        let eps_hat_pred = fp.predict(&x_t, &m_hat, &masked_context(x0, &m_hat), t, &[]);
        let x_hat_pred: Vec<f64> = x_t
            .iter()
            .zip(&eps_hat_pred)
            .map(|(x, e)| (x - sb * e) / sa)
            .collect();
        let x_hat_t: Vec<f64> = x_hat_pred
            .iter()
            .zip(&eps)
            .map(|(x, e)| sa * x + sb * e)
            .collect();
        let eps_bar: Vec<f64> = x_hat_t
            .iter()
            .zip(x0)
            .map(|(x, x0i)| (x - sa * x0i) / sb)
            .collect();
        let eps_bar_pred = predictor.predict(&x_hat_t, &mask, &masked_context(x0, &mask), t, cond);
        let loss = mean_sq_diff(&eps_bar, &eps_bar_pred);
        Ok((
            loss,
            SudDiagnostics {
                t,
                alpha_bar: ab,
                eps,
                mask,
                x_t,
                x_hat_pred: Some(x_hat_pred),
                x_hat_t: Some(x_hat_t),
                eps_bar: Some(eps_bar),
                loss,
            },
        ))
    } else {
        let eps_pred = predictor.predict(&x_t, &mask, &masked_context(x0, &mask), t, cond);
        let loss = mean_sq_diff(&eps, &eps_pred);
        Ok((
            loss,
            SudDiagnostics {
                t,
                alpha_bar: ab,
                eps,
                mask,
                x_t,
                x_hat_pred: None,
                x_hat_t: None,
                eps_bar: None,
                loss,
            },
        ))
    }
}

/// Desk-scale trainer: closed-form per-bin linear refits over Monte Carlo
/// batches of scalar samples, with the unrolled step enabled after a
/// configurable fraction of the epochs.
#[derive(Debug, Clone)]
pub struct SudTrainerConfig {
    pub t_bins: usize,
    pub samples_per_epoch: usize,
    pub epochs: usize,
    /// Fraction of epochs after which the unrolled branch activates.
    pub unroll_start: f64,
    pub unroll: bool,
    pub seed: u64,
}

impl Default for SudTrainerConfig {
    fn default() -> Self {
        Self {
            t_bins: 8,
            samples_per_epoch: 20_000,
            epochs: 30,
            unroll_start: 0.5,
            unroll: false,
            seed: 0,
        }
    }
}

pub struct SudTrainer {
    pub config: SudTrainerConfig,
    pub schedule: DiffusionSchedule,
    /// Per-bin (slope, intercept) of the epsilon prediction.
    pub coefficients: Vec<(f64, f64)>,
    pub loss_curve: Vec<f64>,
}

impl SudTrainer {
    pub fn new(schedule: DiffusionSchedule, config: SudTrainerConfig) -> Self {
        let bins = config.t_bins;
        Self {
            config,
            schedule,
            coefficients: vec![(0.0, 0.0); bins],
            loss_curve: Vec::new(),
        }
    }

    fn bin_of(&self, t: usize) -> usize {
        t * self.config.t_bins / self.schedule.len()
    }

    /// Runs all epochs over scalar draws from `dataset`; returns the final
    /// epoch's mean loss. Deterministic for a fixed config.
    pub fn train(&mut self, dataset: &[f64]) -> Result<f64> {
        assert!(!dataset.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let bins = self.config.t_bins;
        let unroll_from = (self.config.epochs as f64 * self.config.unroll_start).ceil() as usize;
        for epoch in 0..self.config.epochs {
            let unroll = self.config.unroll && epoch >= unroll_from;
            // Accumulate least-squares sums per bin for (input, target) pairs.
            let mut acc = vec![[0.0f64; 5]; bins]; // sx, sy, sxx, sxy, n
            let mut batch = Vec::with_capacity(self.config.samples_per_epoch);
            for _ in 0..self.config.samples_per_epoch {
                let x0 = dataset[rng.gen_range(0..dataset.len())];
                let t = schedule_snap(&self.schedule, rng.gen::<f64>());
                let ab = self.schedule.alpha_bar_at(t)?;
                let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
                let e: f64 = StandardNormal.sample(&mut rng);
                let x_t = sa * x0 + sb * e;
                let (input, target) = if unroll {
                    if ab <= 0.0 || ab >= 1.0 {
                        return Err(IsoError::DegenerateScheduleStep(ab));
                    }
                    let bin = self.bin_of(t);
                    let (a, b) = self.coefficients[bin];
                    // First pass, treated as a constant in the refit.
                    let eps_hat = a * x_t + b;
                    let x_pred = (x_t - sb * eps_hat) / sa;
                    let x_hat_t = sa * x_pred + sb * e;
                    let eps_bar = (x_hat_t - sa * x0) / sb;
                    (x_hat_t, eps_bar)
                } else {
                    (x_t, e)
                };
                let bin = self.bin_of(t);
                let s = &mut acc[bin];
                s[0] += input;
                s[1] += target;
                s[2] += input * input;
                s[3] += input * target;
                s[4] += 1.0;
                batch.push((bin, input, target));
            }
            for (bin, s) in acc.iter().enumerate() {
                if s[4] == 0.0 {
                    return Err(IsoError::DegenerateBin(bin));
                }
                let n = s[4];
                let denom = s[2] - s[0] * s[0] / n;
                let (a, b) = if denom.abs() < 1e-12 {
                    (0.0, s[1] / n)
                } else {
                    let a = (s[3] - s[0] * s[1] / n) / denom;
                    (a, (s[1] - a * s[0]) / n)
                };
                self.coefficients[bin] = (a, b);
            }
            let loss: f64 = batch
                .iter()
                .map(|&(bin, x, y)| {
                    let (a, b) = self.coefficients[bin];
                    let r = y - (a * x + b);
                    r * r
                })
                .sum::<f64>()
                / batch.len() as f64;
            self.loss_curve.push(loss);
        }
        Ok(*self.loss_curve.last().unwrap())
    }
}

fn schedule_snap(schedule: &DiffusionSchedule, u: f64) -> usize {
    schedule.snap_uniform(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::Rng;

    fn zero_predictor() -> impl EpsilonPredictor {
        |x_t: &[f64], _: &[f64], _: &[f64], _: usize, _: &[f64]| vec![0.0; x_t.len()]
    }

    #[test]
    fn perfect_first_pass_reproduces_forward_quantities() {
        let schedule = DiffusionSchedule::default_desk();
        let x0: Vec<f64> = (0..8).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let m_bg = vec![1.0; 8];
        let config = SudStepConfig {
            unroll: true,
            seed: 99,
        };
        // First run captures the drawn eps; second run injects it as a
        // perfect first pass (same seed, same draws).
        let p = zero_predictor();
        let (_, diag0) =
            sud_training_step(&p, None, &x0, &m_bg, &[], &schedule, config).unwrap();
        let eps = diag0.eps.clone();
        let perfect = move |_: &[f64], _: &[f64], _: &[f64], _: usize, _: &[f64]| eps.clone();
        let (_, diag) =
            sud_training_step(&p, Some(&perfect), &x0, &m_bg, &[], &schedule, config).unwrap();
        let x_hat_pred = diag.x_hat_pred.unwrap();
        let x_hat_t = diag.x_hat_t.unwrap();
        let eps_bar = diag.eps_bar.unwrap();
        for i in 0..8 {
            assert!((x_hat_pred[i] - x0[i]).abs() < 1e-9);
            assert!((x_hat_t[i] - diag.x_t[i]).abs() < 1e-9);
            assert!((eps_bar[i] - diag0.eps[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn eps_bar_closed_form_holds_for_any_first_pass() {
        let schedule = DiffusionSchedule::default_desk();
        let mut rng = StdRng::seed_from_u64(4);
        let p = zero_predictor();
        for trial in 0..1000u64 {
            let x0: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = rng.gen_range(-2.0..2.0);
            let b = rng.gen_range(-1.0..1.0);
            let fp = move |x_t: &[f64], _: &[f64], _: &[f64], _: usize, _: &[f64]| {
                x_t.iter().map(|x| a * x + b).collect::<Vec<f64>>()
            };
            let (_, diag) = sud_training_step(
                &p,
                Some(&fp),
                &x0,
                &[1.0; 4],
                &[],
                &schedule,
                SudStepConfig {
                    unroll: true,
                    seed: trial,
                },
            )
            .unwrap();
            let ab = diag.alpha_bar;
            let k = (ab / (1.0 - ab)).sqrt();
            let x_hat_pred = diag.x_hat_pred.unwrap();
            let eps_bar = diag.eps_bar.unwrap();
            for i in 0..4 {
                let want = diag.eps[i] + k * (x_hat_pred[i] - x0[i]);
                assert!(
                    (eps_bar[i] - want).abs() < 1e-9,
                    "trial {trial}: {} vs {want}",
                    eps_bar[i]
                );
            }
        }
    }

    #[test]
    fn unroll_false_with_perfect_second_predictor_is_zero_loss() {
        let schedule = DiffusionSchedule::default_desk();
        let x0 = vec![0.5, -0.5];
        let zero = zero_predictor();
        let config = SudStepConfig {
            unroll: false,
            seed: 7,
        };
        let (_, diag) =
            sud_training_step(&zero, None, &x0, &[1.0; 2], &[], &schedule, config).unwrap();
        let eps = diag.eps.clone();
        let perfect = move |_: &[f64], _: &[f64], _: &[f64], _: usize, _: &[f64]| eps.clone();
        let (loss, _) =
            sud_training_step(&perfect, None, &x0, &[1.0; 2], &[], &schedule, config).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn degenerate_schedule_steps_error_in_unroll_branch() {
        for ab in [1.0, 1e-300] {
            let schedule = DiffusionSchedule::new(vec![ab]);
            let p = zero_predictor();
            let r = sud_training_step(
                &p,
                None,
                &[0.0],
                &[1.0],
                &[],
                &schedule,
                SudStepConfig {
                    unroll: true,
                    seed: 0,
                },
            );
            if ab >= 1.0 {
                assert!(matches!(r, Err(IsoError::DegenerateScheduleStep(_))));
            } else {
                // Numerically nonzero but representable alpha still divides.
                assert!(r.is_ok() || matches!(r, Err(IsoError::DegenerateScheduleStep(_))));
            }
        }
    }

    #[test]
    fn training_masks_are_binary_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let m = pseudo_foreground_mask(64, &mut rng);
            assert!(m.iter().all(|&v| v == 0.0 || v == 1.0));
            let cover = m.iter().sum::<f64>() / 64.0;
            assert!((0.15..=0.65).contains(&cover), "cover = {cover}");
        }
        assert_eq!(pseudo_foreground_mask(1, &mut rng), vec![1.0]);
    }

    #[test]
    fn trainer_is_deterministic() {
        let dataset: Vec<f64> = (0..500).map(|i| (i as f64 / 250.0) - 1.0).collect();
        let mk = || {
            let mut t = SudTrainer::new(
                DiffusionSchedule::default_desk(),
                SudTrainerConfig {
                    epochs: 4,
                    samples_per_epoch: 2000,
                    unroll: true,
                    unroll_start: 0.5,
                    seed: 5,
                    ..Default::default()
                },
            );
            t.train(&dataset).unwrap();
            (t.coefficients.clone(), t.loss_curve.clone())
        };
        assert_eq!(mk(), mk());
    }

    #[test]
    fn constant_dataset_both_branches_converge_to_zero_loss() {
        // With a point-mass dataset, eps is an exact linear function of x_t,
        // so standard and unrolled refits share the same zero-loss optimum.
        let dataset = vec![1.5];
        let schedule = DiffusionSchedule::linear(50, 0.99, 0.02);
        let mut standard = SudTrainer::new(
            schedule.clone(),
            SudTrainerConfig {
                epochs: 6,
                samples_per_epoch: 10_000,
                t_bins: 50,
                unroll: false,
                seed: 2,
                ..Default::default()
            },
        );
        let loss_std = standard.train(&dataset).unwrap();
        let mut unrolled = SudTrainer::new(
            schedule,
            SudTrainerConfig {
                epochs: 6,
                samples_per_epoch: 10_000,
                t_bins: 50,
                unroll: true,
                unroll_start: 0.3,
                seed: 2,
                ..Default::default()
            },
        );
        let loss_unr = unrolled.train(&dataset).unwrap();
        assert!(loss_std < 1e-6, "standard loss {loss_std}");
        assert!(loss_unr < 1e-6, "unrolled loss {loss_unr}");
    }

    #[test]
    fn gaussian_dataset_unrolled_fixed_point_loss_is_higher() {
        // The self-referential unrolled target is strictly harder than the
        // standard one for non-degenerate Gaussian data; the converged loss
        // ratio sits near 2.7 (frozen from an independent numpy simulation of
        // the same refit dynamics).
        let mut rng = StdRng::seed_from_u64(10);
        let dataset: Vec<f64> = (0..4000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let schedule = DiffusionSchedule::default_desk();
        let mut standard = SudTrainer::new(
            schedule.clone(),
            SudTrainerConfig {
                epochs: 8,
                unroll: false,
                seed: 3,
                ..Default::default()
            },
        );
        let loss_std = standard.train(&dataset).unwrap();
        let mut unrolled = SudTrainer::new(
            schedule,
            SudTrainerConfig {
                epochs: 40,
                unroll: true,
                unroll_start: 0.2,
                seed: 3,
                ..Default::default()
            },
        );
        let loss_unr = unrolled.train(&dataset).unwrap();
        let ratio = loss_unr / loss_std;
        assert!((1.8..=3.6).contains(&ratio), "ratio = {ratio}");
    }

}
