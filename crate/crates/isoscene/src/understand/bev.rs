//! Top-down extraction: heightmap from unprojected depth, water lowering
//! and splatmap recovery from the BEV semantic raster.

use std::collections::{BTreeMap, VecDeque};

use crate::camera::{unproject_depth, DepthMap, IsometricCamera};
use crate::error::{IsoError, Result};
use crate::grid::{Grid, MaskGrid};
use crate::scene::{Heightmap, Splatmap, WaterRegion, SEMANTIC_VOID};

/// Heightmap plus the top-down depth raster it was derived from, related
/// cell-for-cell by `values = d_max - bev_depth`.
#[derive(Debug, Clone)]
pub struct BevExtraction {
    pub heightmap: Heightmap,
    /// Top-down depth: distance below the Z = 0 reference plane.
    pub bev_depth: Grid<f64>,
    pub d_max: f64,
    pub semantic: Grid<u8>,
    /// Cells that received at least one unprojected point (the rest were
    /// filled by neighbor diffusion).
    pub observed: MaskGrid,
}

pub(crate) fn diffuse_holes(values: &mut Grid<f64>, observed: &MaskGrid) {
    let (w, h) = (values.width, values.height);
    let holes = Grid::from_fn(w, h, |x, y| !*observed.get(x, y));
    if !holes.data.iter().any(|&v| v) {
        return;
    }
    // Nearest-observed seeding, then neighbor-mean relaxation.
    let mut dist = Grid::filled(w, h, u32::MAX);
    let mut queue = VecDeque::new();
    for (x, y) in observed.iter_coords() {
        if *observed.get(x, y) {
            dist.set(x, y, 0);
            queue.push_back((x, y));
        }
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
            if *dist.get(nx, ny) == u32::MAX && *holes.get(nx, ny) {
                dist.set(nx, ny, d + 1);
                values.set(nx, ny, v);
                queue.push_back((nx, ny));
            }
        }
    }
    let hole_cells: Vec<(usize, usize)> = holes
        .iter_coords()
        .filter(|&(x, y)| *holes.get(x, y))
        .collect();
    for _ in 0..5_000 {
        let mut max_change = 0.0f64;
        for &(x, y) in &hole_cells {
            let mut sum = 0.0;
            let mut count = 0.0;
            for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                sum += *values.get(nx as usize, ny as usize);
                count += 1.0;
            }
            let old = *values.get(x, y);
            let new = old + 1.9 * (sum / count - old);
            values.set(x, y, new);
            max_change = max_change.max((new - old).abs());
        }
        if max_change < 1e-11 {
            break;
        }
    }
}

fn nearest_label_fill(labels: &mut Grid<u8>, observed: &MaskGrid) {
    let (w, h) = (labels.width, labels.height);
    let mut dist = Grid::filled(w, h, u32::MAX);
    let mut queue = VecDeque::new();
    for (x, y) in observed.iter_coords() {
        if *observed.get(x, y) && *labels.get(x, y) != SEMANTIC_VOID {
            dist.set(x, y, 0);
            queue.push_back((x, y));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let d = *dist.get(x, y);
        let v = *labels.get(x, y);
        for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if *dist.get(nx, ny) == u32::MAX && *labels.get(nx, ny) == SEMANTIC_VOID {
                dist.set(nx, ny, d + 1);
                labels.set(nx, ny, v);
                queue.push_back((nx, ny));
            }
        }
    }
}

/// Unprojects every valid depth pixel, splats the points onto a top-down
/// grid keeping the highest surface per cell, fills unobserved cells by
/// neighbor diffusion and converts top-down depth to height above the
/// lowest cell.
pub fn extract_bev(
    depth: &DepthMap,
    semantic: &Grid<u8>,
    cam: &IsometricCamera,
    cell_size: f64,
) -> Result<BevExtraction> {
    if cell_size <= 0.0 {
        return Err(IsoError::Config("cell_size must be positive".into()));
    }
    let points = unproject_depth(depth, cam);
    if points.is_empty() {
        return Err(IsoError::EmptyPointSet);
    }
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for p in &points {
        min_x = min_x.min(p.position.x);
        max_x = max_x.max(p.position.x);
        min_y = min_y.min(p.position.y);
        max_y = max_y.max(p.position.y);
    }
    let origin = [min_x, min_y];
    let w = ((max_x - min_x) / cell_size).round() as usize + 1;
    let h = ((max_y - min_y) / cell_size).round() as usize + 1;

    let mut z = Grid::filled(w, h, f64::NEG_INFINITY);
    let mut labels = Grid::filled(w, h, SEMANTIC_VOID);
    let mut observed = Grid::filled(w, h, false);
    for p in &points {
        let i = (((p.position.x - origin[0]) / cell_size).round() as usize).min(w - 1);
        let j = (((p.position.y - origin[1]) / cell_size).round() as usize).min(h - 1);
        if p.position.z > *z.get(i, j) {
            z.set(i, j, p.position.z);
            labels.set(i, j, *semantic.get(p.pixel.0, p.pixel.1));
            observed.set(i, j, true);
        }
    }
    diffuse_holes(&mut z, &observed);
    nearest_label_fill(&mut labels, &observed);

    // Top-down depth below Z = 0; deepest cell defines the datum so
    // heights are exactly d_max - d.
    let bev_depth = z.map(|&v| -v);
    let (_, d_max) = bev_depth.min_max();
    let values = bev_depth.map(|&d| d_max - d);
    Ok(BevExtraction {
        heightmap: Heightmap {
            values,
            cell_size,
            datum: -d_max,
            origin,
        },
        bev_depth,
        d_max,
        semantic: labels,
        observed,
    })
}

/// Heightmap-only wrapper around [`extract_bev`].
pub fn extract_heightmap(
    depth: &DepthMap,
    cam: &IsometricCamera,
    cell_size: f64,
) -> Result<Heightmap> {
    let void = Grid::filled(depth.values.width, depth.values.height, SEMANTIC_VOID);
    Ok(extract_bev(depth, &void, cam, cell_size)?.heightmap)
}

/// Lowest terrain height on the outside rim of a region: the level any
/// contained water surface cannot exceed.
pub fn region_water_level(heightmap: &Heightmap, region: &WaterRegion) -> Result<f64> {
    let (w, h) = (heightmap.values.width, heightmap.values.height);
    let cell = heightmap.cell_size;
    let inside = Grid::from_fn(w, h, |i, j| {
        region.contains(
            heightmap.origin[0] + i as f64 * cell,
            heightmap.origin[1] + j as f64 * cell,
        )
    });
    if !inside.data.iter().any(|&v| v) {
        return Err(IsoError::EmptyRegionBoundary);
    }
    let mut level = f64::INFINITY;
    for j in 0..h {
        for i in 0..w {
            if *inside.get(i, j) {
                continue;
            }
            let rim = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| {
                let (ni, nj) = (i as i64 + dx, j as i64 + dy);
                ni >= 0
                    && nj >= 0
                    && ni < w as i64
                    && nj < h as i64
                    && *inside.get(ni as usize, nj as usize)
            });
            if rim {
                level = level.min(heightmap.datum + heightmap.values.get(i, j));
            }
        }
    }
    if level.is_finite() {
        Ok(level)
    } else {
        Err(IsoError::EmptyRegionBoundary)
    }
}

/// Clamps terrain inside each region to `bed_offset` below the region's
/// water level. Idempotent and never raises terrain.
pub fn lower_water(
    heightmap: &Heightmap,
    regions: &[WaterRegion],
    bed_offset: f64,
) -> Result<Heightmap> {
    let mut out = heightmap.clone();
    let cell = heightmap.cell_size;
    for region in regions {
        let level = region_water_level(heightmap, region)?;
        let ceiling = level - bed_offset - heightmap.datum;
        for (i, j) in heightmap.values.iter_coords() {
            let x = heightmap.origin[0] + i as f64 * cell;
            let y = heightmap.origin[1] + j as f64 * cell;
            if region.contains(x, y) {
                let v = *out.values.get(i, j);
                out.values.set(i, j, v.min(ceiling));
            }
        }
    }
    Ok(out)
}

/// One-hot splatmap from a BEV label raster, feathered onto the simplex.
/// The channel order follows ascending label values in the table.
pub fn extract_splatmap(
    semantic: &Grid<u8>,
    table: &BTreeMap<u8, String>,
    feather_sigma: f64,
) -> Result<Splatmap> {
    let mut channel_categories = Vec::new();
    let mut channel_of = BTreeMap::new();
    for (&label, category) in table {
        let idx = channel_categories
            .iter()
            .position(|c| c == category)
            .unwrap_or_else(|| {
                channel_categories.push(category.clone());
                channel_categories.len() - 1
            });
        channel_of.insert(label, idx);
    }
    let (w, h) = (semantic.width, semantic.height);
    let mut channels = vec![Grid::filled(w, h, 0.0); channel_categories.len()];
    for (i, &label) in semantic.data.iter().enumerate() {
        let k = channel_of
            .get(&label)
            .ok_or_else(|| IsoError::UnmappedLabel(label.to_string()))?;
        channels[*k].data[i] = 1.0;
    }
    let mut splat = Splatmap {
        channels,
        channel_categories,
    };
    if feather_sigma > 0.0 {
        splat.feather(feather_sigma);
    }
    Ok(splat)
}
