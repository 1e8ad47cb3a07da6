//! Foreground removal: fills object pixels with plausible background by
//! nearest-neighbor seeding plus iterative neighbor diffusion.

use std::collections::VecDeque;

use crate::error::{IsoError, Result};
use crate::grid::{Grid, MaskGrid};
use crate::scene::{IsometricFrame, SEMANTIC_VOID};

const RELAX_OMEGA: f64 = 1.9;
const RELAX_TOL: f64 = 1e-11;
const RELAX_MAX_SWEEPS: usize = 20_000;

/// Nearest-source BFS: every target pixel gets the value of its closest
/// source pixel (4-connected, deterministic scan-order tie-break).
fn nearest_fill<T: Copy>(
    values: &mut Grid<T>,
    source: &MaskGrid,
    target: &MaskGrid,
) -> bool {
    let (w, h) = (values.width, values.height);
    let mut dist = Grid::filled(w, h, u32::MAX);
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if *source.get(x, y) {
                dist.set(x, y, 0);
                queue.push_back((x, y));
            }
        }
    }
    if queue.is_empty() {
        return false;
    }
    while let Some((x, y)) = queue.pop_front() {
        let d = *dist.get(x, y);
        let v = *values.get(x, y);
        for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if *dist.get(nx, ny) == u32::MAX && *target.get(nx, ny) {
                dist.set(nx, ny, d + 1);
                values.set(nx, ny, v);
                queue.push_back((nx, ny));
            }
        }
    }
    true
}

/// Gauss-Seidel relaxation of `values` over `target` pixels toward the
/// local neighbor mean, with `available` pixels as fixed boundary data.
fn relax(values: &mut Grid<f64>, target: &MaskGrid, available: &MaskGrid) {
    let (w, h) = (values.width, values.height);
    let targets: Vec<(usize, usize)> = target
        .iter_coords()
        .filter(|&(x, y)| *target.get(x, y))
        .collect();
    for _ in 0..RELAX_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for &(x, y) in &targets {
            let mut sum = 0.0;
            let mut count = 0.0;
            for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if *target.get(nx, ny) || *available.get(nx, ny) {
                    sum += *values.get(nx, ny);
                    count += 1.0;
                }
            }
            if count == 0.0 {
                continue;
            }
            let old = *values.get(x, y);
            let new = old + RELAX_OMEGA * (sum / count - old);
            values.set(x, y, new);
            max_change = max_change.max((new - old).abs());
        }
        if max_change < RELAX_TOL {
            break;
        }
    }
}

/// Replaces foreground pixels with background estimates: depth and color
/// are seeded from the nearest background pixel and smoothed by neighbor
/// diffusion; semantic labels take the nearest background label. Unmasked
/// pixels are untouched and the result carries no instances.
pub fn complete_basemap(frame: &IsometricFrame, fg_mask: &MaskGrid) -> Result<IsometricFrame> {
    if !fg_mask.same_shape(&frame.semantic) {
        return Err(IsoError::ShapeMismatch(
            "foreground mask and frame differ".into(),
        ));
    }
    let (w, h) = (fg_mask.width, fg_mask.height);
    let bg_valid = Grid::from_fn(w, h, |x, y| {
        !*fg_mask.get(x, y) && *frame.depth.valid.get(x, y)
    });
    if !bg_valid.data.iter().any(|&v| v) {
        return Err(IsoError::NoBackgroundContext);
    }

    let mut out = frame.clone();
    out.instances.clear();

    // Only masked pixels are rewritten; the background label source also
    // excludes void pixels so no foreground or void label survives inside
    // the mask.
    nearest_fill(&mut out.depth.values, &bg_valid, fg_mask);
    relax(&mut out.depth.values, fg_mask, &bg_valid);
    let label_src = Grid::from_fn(w, h, |x, y| {
        *bg_valid.get(x, y) && *frame.semantic.get(x, y) != SEMANTIC_VOID
    });
    nearest_fill(&mut out.semantic, &label_src, fg_mask);

    for ch in 0..3 {
        let mut plane = frame.color.map(|c| c[ch] as f64);
        nearest_fill(&mut plane, &bg_valid, fg_mask);
        relax(&mut plane, fg_mask, &bg_valid);
        for (i, &v) in plane.data.iter().enumerate() {
            if fg_mask.data[i] {
                out.color.data[i][ch] = v as f32;
            }
        }
    }
    for (i, &m) in fg_mask.data.iter().enumerate() {
        if m {
            out.depth.valid.data[i] = true;
        }
    }
    Ok(out)
}
