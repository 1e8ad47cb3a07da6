//! Noise schedules, forward diffusion, inpainting input assembly and losses,
//! and training-mask construction.
//!
//! Sample grids are flat `f64` slices; a C-channel sample over P pixels is
//! stored channel-major with length C*P, and masks have length P.

pub mod oracle;
pub mod sud;

pub use oracle::{
    ancestral_sample, fit_linear_predictor, AnalyticGaussianPredictor, LinearPredictor,
};
pub use sud::{sud_training_step, SudDiagnostics, SudStepConfig, SudTrainer, SudTrainerConfig};

use serde::{Deserialize, Serialize};

use crate::error::{IsoError, Result};

/// Cumulative noise schedule: alpha_bar[t] in (0, 1], non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(alpha_bar: Vec<f64>) -> Self {
        assert!(!alpha_bar.is_empty());
        for w in alpha_bar.windows(2) {
            assert!(w[1] <= w[0], "alpha_bar must be non-increasing");
        }
        assert!(alpha_bar.iter().all(|&a| a > 0.0 && a <= 1.0));
        Self { alpha_bar }
    }

    /// Linear alpha_bar ramp from `start` down to `end` over `t_count` steps.
    pub fn linear(t_count: usize, start: f64, end: f64) -> Self {
        assert!(t_count >= 1);
        let alpha_bar = (0..t_count)
            .map(|t| {
                if t_count == 1 {
                    start
                } else {
                    start + (end - start) * t as f64 / (t_count - 1) as f64
                }
            })
            .collect();
        Self::new(alpha_bar)
    }

    /// Default desk-scale schedule: T = 200, alpha_bar 0.9999 -> 0.01.
    pub fn default_desk() -> Self {
        Self::linear(200, 0.9999, 0.01)
    }

    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }

    pub fn alpha_bar_at(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or(IsoError::TimeStepOutOfRange {
                t,
                limit: self.len(),
            })
    }

    /// Nearest discrete index for a continuous draw u in [0, 1).
    pub fn snap_uniform(&self, u: f64) -> usize {
        let t = (u * self.len() as f64).floor() as usize;
        t.min(self.len() - 1)
    }
}

/// One inpainting training sample: clean grid, binary mask, conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintSample {
    pub x0: Vec<f64>,
    pub mask: Vec<f64>,
    pub cond: Vec<f64>,
}

/// Noise predictor contract; the input layout matches
/// [`assemble_inpaint_input`] split back into its parts.
pub trait EpsilonPredictor {
    fn predict(&self, x_t: &[f64], mask: &[f64], masked_context: &[f64], t: usize, cond: &[f64])
        -> Vec<f64>;
}

impl<F> EpsilonPredictor for F
where
    F: Fn(&[f64], &[f64], &[f64], usize, &[f64]) -> Vec<f64>,
{
    fn predict(
        &self,
        x_t: &[f64],
        mask: &[f64],
        masked_context: &[f64],
        t: usize,
        cond: &[f64],
    ) -> Vec<f64> {
        self(x_t, mask, masked_context, t, cond)
    }
}

fn check_shapes(x0: &[f64], eps: &[f64]) -> Result<()> {
    if x0.len() != eps.len() {
        return Err(IsoError::ShapeMismatch(format!(
            "x0 has {} elements, eps has {}",
            x0.len(),
            eps.len()
        )));
    }
    Ok(())
}

fn check_mask(sample_len: usize, mask: &[f64]) -> Result<()> {
    if mask.is_empty() || sample_len % mask.len() != 0 {
        return Err(IsoError::ShapeMismatch(format!(
            "mask of {} pixels does not broadcast over {} sample elements",
            mask.len(),
            sample_len
        )));
    }
    Ok(())
}

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
pub fn forward_diffuse(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    check_shapes(x0, eps)?;
    let ab = schedule.alpha_bar_at(t)?;
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0
        .iter()
        .zip(eps)
        .map(|(x, e)| sa * x + sb * e)
        .collect())
}

/// y_t = cat(x_t, m, E((1-m) * x0)) with E the identity encoder.
/// Channel count of the bundle is 2C + 1 for C-channel samples.
pub fn assemble_inpaint_input(x_t: &[f64], mask: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    check_shapes(x_t, x0)?;
    check_mask(x_t.len(), mask)?;
    let pixels = mask.len();
    let mut bundle = Vec::with_capacity(x_t.len() * 2 + pixels);
    bundle.extend_from_slice(x_t);
    bundle.extend_from_slice(mask);
    bundle.extend(
        x0.iter()
            .enumerate()
            .map(|(i, x)| (1.0 - mask[i % pixels]) * x),
    );
    Ok(bundle)
}

/// Partial forward process: noised inside the mask, clean outside.
/// x_hat_t = m * (sqrt(ab) x0 + sqrt(1-ab) eps) + (1-m) * x0.
pub fn partial_noised(
    x0: &[f64],
    mask: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    check_shapes(x0, eps)?;
    check_mask(x0.len(), mask)?;
    let noised = forward_diffuse(x0, t, eps, schedule)?;
    let pixels = mask.len();
    Ok(x0
        .iter()
        .zip(&noised)
        .enumerate()
        .map(|(i, (x, n))| {
            let m = mask[i % pixels];
            m * n + (1.0 - m) * x
        })
        .collect())
}

/// Full inpainting loss: mean over all elements of (eps - eps_pred)^2 with
/// the predictor fed y_t = cat(x_t, m, E((1-m) x0)).
pub fn full_loss(
    predictor: &dyn EpsilonPredictor,
    x0: &[f64],
    mask: &[f64],
    t: usize,
    eps: &[f64],
    cond: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<f64> {
    check_shapes(x0, eps)?;
    check_mask(x0.len(), mask)?;
    let x_t = forward_diffuse(x0, t, eps, schedule)?;
    let pixels = mask.len();
    let ctx: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, x)| (1.0 - mask[i % pixels]) * x)
        .collect();
    let pred = predictor.predict(&x_t, mask, &ctx, t, cond);
    check_shapes(&pred, eps)?;
    let sum: f64 = eps
        .iter()
        .zip(&pred)
        .map(|(e, p)| (e - p) * (e - p))
        .sum();
    Ok(sum / eps.len() as f64)
}

/// Partial inpainting loss: masked mean-squared noise-prediction error with
/// the predictor fed y_hat_t = cat(x_hat_t, m, E(m * x0)).
pub fn partial_loss(
    predictor: &dyn EpsilonPredictor,
    x0: &[f64],
    mask: &[f64],
    t: usize,
    eps: &[f64],
    cond: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<f64> {
    check_shapes(x0, eps)?;
    check_mask(x0.len(), mask)?;
    let pixels = mask.len();
    let mask_count: f64 = mask.iter().sum();
    if mask_count == 0.0 {
        return Err(IsoError::EmptySupervisionRegion);
    }
    let x_hat_t = partial_noised(x0, mask, t, eps, schedule)?;
    let ctx: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, x)| mask[i % pixels] * x)
        .collect();
    let pred = predictor.predict(&x_hat_t, mask, &ctx, t, cond);
    check_shapes(&pred, eps)?;
    let channels = x0.len() / pixels;
    let sum: f64 = eps
        .iter()
        .zip(&pred)
        .enumerate()
        .map(|(i, (e, p))| {
            let m = mask[i % pixels];
            let d = m * (e - p);
            d * d
        })
        .sum();
    Ok(sum / (mask_count * channels as f64))
}

/// m = m_pfg * m_random * m_bg, elementwise. Empty intersections are legal;
/// callers decide whether to resample.
pub fn make_training_mask(m_pfg: &[f64], m_random: &[f64], m_bg: &[f64]) -> Result<Vec<f64>> {
    if m_pfg.len() != m_random.len() || m_pfg.len() != m_bg.len() {
        return Err(IsoError::ShapeMismatch(format!(
            "mask lengths {} / {} / {}",
            m_pfg.len(),
            m_random.len(),
            m_bg.len()
        )));
    }
    Ok(m_pfg
        .iter()
        .zip(m_random)
        .zip(m_bg)
        .map(|((a, b), c)| a * b * c)
        .collect())
}
