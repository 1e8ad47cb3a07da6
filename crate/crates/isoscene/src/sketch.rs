//! One-hot sketch maps, category dropout, and the sketch-aware loss weight
//! map omega = max(0.1, G(f(S))) with its weighted MSE objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IsoError, Result};
use crate::grid::Grid;

/// Multi-category binary sketch; channels may overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchMap {
    pub channels: Vec<Grid<bool>>,
    pub category_names: Vec<String>,
}

impl SketchMap {
    pub fn new(channels: Vec<Grid<bool>>, category_names: Vec<String>) -> Self {
        assert!(!channels.is_empty());
        assert_eq!(channels.len(), category_names.len());
        let (w, h) = (channels[0].width, channels[0].height);
        assert!(channels.iter().all(|c| c.width == w && c.height == h));
        Self {
            channels,
            category_names,
        }
    }

    pub fn width(&self) -> usize {
        self.channels[0].width
    }

    pub fn height(&self) -> usize {
        self.channels[0].height
    }
}

/// Per-pixel loss weights, clamped to [0.1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SalWeightMap {
    pub weights: Grid<f64>,
}

/// Per-pixel boolean any over sketch channels.
pub fn channel_max(sketch: &SketchMap) -> Grid<bool> {
    Grid::from_fn(sketch.width(), sketch.height(), |x, y| {
        sketch.channels.iter().any(|c| *c.get(x, y))
    })
}

/// Normalized 1D Gaussian taps for an odd kernel width.
fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur with replicate padding.
pub(crate) fn gaussian_blur(field: &Grid<f64>, size: usize, sigma: f64) -> Grid<f64> {
    let taps = gaussian_taps(size, sigma);
    let half = (size / 2) as isize;
    let (w, h) = (field.width as isize, field.height as isize);
    let horizontal = Grid::from_fn(field.width, field.height, |x, y| {
        let mut acc = 0.0;
        for (k, tap) in taps.iter().enumerate() {
            let sx = (x as isize + k as isize - half).clamp(0, w - 1) as usize;
            acc += tap * field.get(sx, y);
        }
        acc
    });
    Grid::from_fn(field.width, field.height, |x, y| {
        let mut acc = 0.0;
        for (k, tap) in taps.iter().enumerate() {
            let sy = (y as isize + k as isize - half).clamp(0, h - 1) as usize;
            acc += tap * horizontal.get(x, sy);
        }
        acc
    })
}

pub const SAL_KERNEL_SIZE: usize = 11;
pub const SAL_FLOOR: f64 = 0.1;

/// omega = max(0.1, G(f(S))) with a normalized 11x11 Gaussian kernel.
pub fn sal_weights(sketch: &SketchMap, sigma: f64) -> SalWeightMap {
    assert!(sigma > 0.0);
    let support = channel_max(sketch).map(|&b| if b { 1.0 } else { 0.0 });
    let blurred = gaussian_blur(&support, SAL_KERNEL_SIZE, sigma);
    SalWeightMap {
        weights: blurred.map(|&v| v.max(SAL_FLOOR)),
    }
}

/// Mean over elements of (omega * (eps - eps_pred))^2; omega broadcasts
/// across leading channels of the flattened sample grids.
pub fn sal_loss(eps_true: &[f64], eps_pred: &[f64], omega: &SalWeightMap) -> Result<f64> {
    if eps_true.len() != eps_pred.len() {
        return Err(IsoError::ShapeMismatch(format!(
            "eps_true has {} elements, eps_pred has {}",
            eps_true.len(),
            eps_pred.len()
        )));
    }
    let n_pix = omega.weights.data.len();
    if n_pix == 0 || eps_true.len() % n_pix != 0 {
        return Err(IsoError::ShapeMismatch(format!(
            "{} sample elements do not broadcast over {} weight pixels",
            eps_true.len(),
            n_pix
        )));
    }
    let sum: f64 = eps_true
        .iter()
        .zip(eps_pred)
        .enumerate()
        .map(|(i, (t, p))| {
            let w = omega.weights.data[i % n_pix];
            let e = w * (t - p);
            e * e
        })
        .sum();
    Ok(sum / eps_true.len() as f64)
}

/// Keeps each channel independently with probability `keep_prob`; dropped
/// channels are zeroed. An all-dropped result is permitted.
pub fn dropout_categories(sketch: &SketchMap, keep_prob: f64, seed: u64) -> SketchMap {
    assert!((0.0..=1.0).contains(&keep_prob));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = sketch
        .channels
        .iter()
        .map(|c| {
            if rng.gen::<f64>() < keep_prob {
                c.clone()
            } else {
                Grid::filled(c.width, c.height, false)
            }
        })
        .collect();
    SketchMap {
        channels,
        category_names: sketch.category_names.clone(),
    }
}
