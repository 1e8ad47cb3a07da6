//! Object recovery: footprints and heights from instance masks via
//! ground-plane rectification.

use nalgebra::Vector2;

use crate::camera::{height_pixels_per_unit, GroundRectifyMap, IsometricCamera};
use crate::error::{IsoError, Result};
use crate::grid::MaskGrid;
use crate::scene::{Footprint, Heightmap, IsometricFrame, ObjectPlacement};

/// Inclusive pixel bounding box (x0, y0, x1, y1) of the set pixels.
pub fn mask_bbox(mask: &MaskGrid) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for (x, y) in mask.iter_coords() {
        if !*mask.get(x, y) {
            continue;
        }
        bbox = Some(match bbox {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    bbox
}

/// Axis-aligned ground rectangle for one instance.
///
/// The far corner comes from the per-axis maxima of the rectified mask
/// (pixels taken as unit squares). The image bounding box rectifies to a
/// parallelogram whose sides run diagonally; sliding along them from the
/// maxima (minimum intersection with the lines x = x1 and y = y1) yields
/// the near corner.
pub fn estimate_footprint(
    mask: &MaskGrid,
    bbox_px: [f64; 4],
    rect: &GroundRectifyMap,
) -> Result<Footprint> {
    let [bx0, by0, bx1, by1] = bbox_px;
    if bx1 <= bx0 || by1 <= by0 {
        return Err(IsoError::DegenerateBbox);
    }
    // Sub-pixel support margin: the silhouette boundary lies between the
    // outermost covered pixel center and its uncovered neighbor, so expand
    // the center maxima by a quarter pixel after rectification.
    let hx = 0.0 * (rect.forward[0][0].abs() + rect.forward[0][1].abs());
    let hy = 0.0 * (rect.forward[1][0].abs() + rect.forward[1][1].abs());
    let mut x1 = f64::NEG_INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    let mut any = false;
    for (px, py) in mask.iter_coords() {
        if !*mask.get(px, py) {
            continue;
        }
        any = true;
        let g = rect.rectify(Vector2::new(px as f64 + 0.5, py as f64 + 0.5));
        x1 = x1.max(g.x + hx);
        y1 = y1.max(g.y + hy);
    }
    if !any {
        return Err(IsoError::EmptyMask);
    }

    let corners = [
        rect.rectify(Vector2::new(bx0, by0)),
        rect.rectify(Vector2::new(bx1, by0)),
        rect.rectify(Vector2::new(bx1, by1)),
        rect.rectify(Vector2::new(bx0, by1)),
    ];
    // Slide along the parallelogram sides (as segments, not infinite
    // lines: a non-adjacent side's extension can cross closer in).
    let mut x2 = f64::INFINITY;
    let mut y2 = f64::INFINITY;
    for k in 0..4 {
        let p = corners[k];
        let d = corners[(k + 1) % 4] - p;
        if d.y.abs() > 1e-12 {
            let t = (y1 - p.y) / d.y;
            if (-0.05..=1.05).contains(&t) {
                x2 = x2.min(p.x + t * d.x);
            }
        }
        if d.x.abs() > 1e-12 {
            let t = (x1 - p.x) / d.x;
            if (-0.05..=1.05).contains(&t) {
                y2 = y2.min(p.y + t * d.y);
            }
        }
    }
    if !(x2 < x1 && y2 < y1) {
        return Err(IsoError::DegenerateBbox);
    }
    Ok(Footprint::new([x2, y2], [x1, y1]))
}

/// Sub-pixel screen row of the silhouette apex on one vertical end of the
/// mask. Box silhouettes terminate in a wedge whose two boundary edges
/// both run at slope √3 in image space, so the covered width grows by
/// 2√3 pixels per row away from the apex. Each of the first few rows
/// yields an apex estimate (row centre minus width / 2√3); averaging them
/// beats the half-pixel quantisation of the raw extreme row.
fn apex_row(mask: &MaskGrid, from_top: bool) -> Option<f64> {
    let slope = 2.0 * 3.0_f64.sqrt();
    let mut widths = Vec::new();
    let rows: Vec<usize> = if from_top {
        (0..mask.height).collect()
    } else {
        (0..mask.height).rev().collect()
    };
    for r in rows {
        let w = (0..mask.width).filter(|&c| *mask.get(c, r)).count();
        if w == 0 {
            if widths.is_empty() {
                continue;
            }
            break;
        }
        match widths.last() {
            // Stop once the wedge flattens out (past the side corners) or
            // the width shrinks (occlusion by another instance).
            Some(&(_, prev)) if !(w > prev && (w - prev) as f64 <= slope + 2.0) => break,
            _ => {}
        }
        widths.push((r, w));
        if widths.len() == 4 {
            break;
        }
    }
    if widths.is_empty() {
        return None;
    }
    let sign = if from_top { -1.0 } else { 1.0 };
    let sum: f64 = widths
        .iter()
        .map(|&(r, w)| r as f64 + 0.5 + sign * w as f64 / slope)
        .sum();
    Some(sum / widths.len() as f64)
}

/// Metric height of an instance from its silhouette alone.
///
/// The vertical span between the top apex (back corner of the top face)
/// and the bottom apex (front ground corner) equals the extruded height
/// plus the footprint diagonal; the horizontal span between the left and
/// right extremes measures that same diagonal with no height term. For a
/// camera with pixel scale s this gives
/// h = (√6·(y_bottom − y_top) − √2·(x_right − x_left)) / 2s,
/// which sidesteps the noisy back-corner reconstruction entirely.
pub fn estimate_height(mask: &MaskGrid, cam: &IsometricCamera) -> Result<f64> {
    let (x0, y0, x1, y1) = mask_bbox(mask).ok_or(IsoError::EmptyMask)?;
    let top_y = apex_row(mask, true).unwrap_or(y0 as f64);
    let bot_y = apex_row(mask, false).unwrap_or((y1 + 1) as f64);
    let span_x = (x1 + 1 - x0) as f64;
    let s = cam.pixels_per_world_unit;
    let h = (6.0_f64.sqrt() * (bot_y - top_y) - 2.0_f64.sqrt() * span_x) / (2.0 * s);
    if h * height_pixels_per_unit(cam) < -1.0 {
        return Err(IsoError::InconsistentExtrusion);
    }
    Ok(h.max(0.0))
}

#[derive(Debug, Clone)]
pub struct PlacementOutcome {
    pub placements: Vec<ObjectPlacement>,
    /// Human-readable notes for instances that had to be skipped.
    pub diagnostics: Vec<String>,
}

/// Base elevation e solving H(anchor + e·(1,1)) = e for a footprint
/// estimated at elevation zero. The anchor sits just outside the
/// footprint's far corner: the ground there is visible next to the
/// object's contact edge, whereas the heightmap directly under the object
/// is inpainted and biased by whatever stands behind it. The lowest
/// crossing is taken: scanning up from the terrain minimum avoids latching
/// onto a higher surface that intersects the same diagonal.
fn solve_base_elevation(raw: &Footprint, heightmap: &Heightmap) -> f64 {
    let g = |e: f64| {
        let x = raw.max[0] + e + 0.2;
        let y = raw.max[1] + e + 0.2;
        heightmap.elevation_at(x, y) - e
    };
    let (lo, hi) = heightmap.values.min_max();
    let (e_lo, e_hi) = (heightmap.datum + lo, heightmap.datum + hi);
    let step = (heightmap.cell_size * 0.5).max(1e-6);
    let mut prev_e = e_lo;
    let mut prev_g = g(prev_e);
    let mut e = e_lo;
    while e < e_hi + step {
        e += step;
        let cur = g(e);
        if prev_g > 0.0 && cur <= 0.0 {
            // Bisect the bracket.
            let (mut a, mut b) = (prev_e, e);
            for _ in 0..40 {
                let mid = 0.5 * (a + b);
                if g(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return 0.5 * (a + b);
        }
        prev_e = e;
        prev_g = cur;
    }
    // No crossing (flat terrain at the scan boundary): sample directly.
    let c = raw.center();
    heightmap.elevation_at(c[0], c[1])
}

fn asset_for_category(category: &str) -> String {
    match category {
        "tree" => "tree".to_string(),
        "bridge" => "bridge".to_string(),
        _ => "box".to_string(),
    }
}

/// Footprint + height + base elevation for every instance in the frame.
///
/// An object resting at elevation e rectifies to a rectangle shifted by
/// (-e, -e), so the footprint is corrected iteratively against the
/// heightmap until the sampled base elevation stabilizes. Failing
/// instances are skipped with a diagnostic rather than aborting.
pub fn build_placements(
    frame: &IsometricFrame,
    heightmap: &Heightmap,
    rect: &GroundRectifyMap,
    cam: &IsometricCamera,
) -> PlacementOutcome {
    let mut out = PlacementOutcome {
        placements: Vec::new(),
        diagnostics: Vec::new(),
    };
    for inst in &frame.instances {
        let result = (|| -> Result<ObjectPlacement> {
            let (x0, y0, x1, y1) = mask_bbox(&inst.mask).ok_or(IsoError::EmptyMask)?;
            let bbox = [x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64];
            let raw = estimate_footprint(&inst.mask, bbox, rect)?;
            let height = estimate_height(&inst.mask, cam)?;
            let elevation = solve_base_elevation(&raw, heightmap);
            Ok(ObjectPlacement {
                instance_id: inst.id,
                category: inst.category.clone(),
                footprint: raw.translated(elevation, elevation),
                height,
                base_elevation: elevation,
                asset_ref: asset_for_category(&inst.category),
            })
        })();
        match result {
            Ok(p) => out.placements.push(p),
            Err(e) => out
                .diagnostics
                .push(format!("instance {}: {}", inst.id, e)),
        }
    }
    out
}
