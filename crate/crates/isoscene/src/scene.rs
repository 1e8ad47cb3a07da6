//! Shared scene data model: compiled scene descriptors, rendered frames,
//! heightmaps, splatmaps and object placements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::camera::{DepthMap, IsometricCamera};
use crate::grid::{Grid, MaskGrid};

/// Terrain elevation grid. Values are meters above `datum`; grid vertex
/// (i, j) sits at world position `origin + (i, j) * cell_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heightmap {
    pub values: Grid<f64>,
    pub cell_size: f64,
    pub datum: f64,
    pub origin: [f64; 2],
}

impl Heightmap {
    /// Absolute elevation at world (x, y), bilinearly interpolated and
    /// clamped to the grid border.
    pub fn elevation_at(&self, x: f64, y: f64) -> f64 {
        let gx = (x - self.origin[0]) / self.cell_size;
        let gy = (y - self.origin[1]) / self.cell_size;
        self.datum + self.values.sample_bilinear(gx, gy)
    }

    pub fn extent(&self) -> [f64; 2] {
        [
            (self.values.width - 1) as f64 * self.cell_size,
            (self.values.height - 1) as f64 * self.cell_size,
        ]
    }
}

/// Per-cell simplex weights that alpha-composite K tiled textures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splatmap {
    pub channels: Vec<Grid<f64>>,
    pub channel_categories: Vec<String>,
}

impl Splatmap {
    pub fn width(&self) -> usize {
        self.channels[0].width
    }

    pub fn height(&self) -> usize {
        self.channels[0].height
    }

    /// Rescales every pixel's channel vector onto the simplex.
    pub fn renormalize(&mut self) {
        let (w, h) = (self.width(), self.height());
        for y in 0..h {
            for x in 0..w {
                let sum: f64 = self.channels.iter().map(|c| *c.get(x, y)).sum();
                if sum > 0.0 {
                    for c in &mut self.channels {
                        let v = *c.get(x, y) / sum;
                        c.set(x, y, v);
                    }
                }
            }
        }
    }

    /// Softens channel boundaries with a 5x5 normalized Gaussian and
    /// restores the simplex invariant.
    pub fn feather(&mut self, sigma: f64) {
        for c in &mut self.channels {
            *c = crate::sketch::gaussian_blur(c, 5, sigma);
        }
        self.renormalize();
    }

    pub fn weights_at(&self, x: usize, y: usize) -> Vec<f64> {
        self.channels.iter().map(|c| *c.get(x, y)).collect()
    }

    pub fn dominant_channel(&self, x: usize, y: usize) -> usize {
        let mut best = 0;
        let mut best_w = f64::NEG_INFINITY;
        for (k, c) in self.channels.iter().enumerate() {
            let w = *c.get(x, y);
            if w > best_w {
                best_w = w;
                best = k;
            }
        }
        best
    }
}

/// Ground-plane rectangle [min.x, max.x] x [min.y, max.y] in world meters.
/// Yaw is fixed by the rectification frame (axis-aligned in world).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub yaw: f64,
}

impl Footprint {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        assert!(min[0] <= max[0] && min[1] <= max[1]);
        Self { min, max, yaw: 0.0 }
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn extents(&self) -> [f64; 2] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }

    pub fn area(&self) -> f64 {
        let e = self.extents();
        e[0] * e[1]
    }

    pub fn iou(&self, other: &Footprint) -> f64 {
        let ix = (self.max[0].min(other.max[0]) - self.min[0].max(other.min[0])).max(0.0);
        let iy = (self.max[1].min(other.max[1]) - self.min[1].max(other.min[1])).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Footprint {
        Footprint {
            min: [self.min[0] + dx, self.min[1] + dy],
            max: [self.max[0] + dx, self.max[1] + dy],
            yaw: self.yaw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPlacement {
    pub instance_id: u32,
    pub category: String,
    pub footprint: Footprint,
    pub height: f64,
    pub base_elevation: f64,
    pub asset_ref: String,
}

/// Water body: ground-plane polygon plus surface level in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterRegion {
    pub polygon: Vec<[f64; 2]>,
    pub water_level: f64,
}

impl WaterRegion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        point_in_polygon(&self.polygon, x, y)
    }
}

pub fn point_in_polygon(polygon: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = polygon.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (polygon[i][0], polygon[i][1]);
        let (xj, yj) = (polygon[j][0], polygon[j][1]);
        if ((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// The compiled scene: the pipeline's final product and the fixture
/// generator's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub terrain: Heightmap,
    pub water_regions: Vec<WaterRegion>,
    pub objects: Vec<ObjectPlacement>,
    pub splat: Splatmap,
    pub texture_assignments: BTreeMap<String, String>,
    pub rng_seed: u64,
}

/// One labeled binary mask of a rendered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMask {
    pub id: u32,
    pub category: String,
    pub mask: MaskGrid,
}

/// Aligned rasters from one isometric viewpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct IsometricFrame {
    pub color: Grid<[f32; 3]>,
    pub depth: DepthMap,
    /// Per-pixel index into `categories`; `SEMANTIC_VOID` where uncovered.
    pub semantic: Grid<u8>,
    pub categories: Vec<String>,
    pub instances: Vec<InstanceMask>,
    pub camera: IsometricCamera,
}

pub const SEMANTIC_VOID: u8 = u8::MAX;

impl IsometricFrame {
    pub fn category_id(&self, name: &str) -> Option<u8> {
        self.categories.iter().position(|c| c == name).map(|i| i as u8)
    }

    /// Union of all instance masks.
    pub fn foreground_mask(&self) -> MaskGrid {
        let mut m = Grid::filled(self.color.width, self.color.height, false);
        for inst in &self.instances {
            for (i, &v) in inst.mask.data.iter().enumerate() {
                if v {
                    m.data[i] = true;
                }
            }
        }
        m
    }
}

/// Fixed per-category flat-shading palette; doubles as the sketch color code.
pub fn category_color(category: &str) -> [f32; 3] {
    match category {
        "water" => [0.20, 0.40, 0.85],
        "building" => [0.85, 0.75, 0.20],
        "bridge" => [0.90, 0.55, 0.15],
        "road" => [0.55, 0.55, 0.55],
        "tree" => [0.10, 0.50, 0.15],
        "grass" => [0.35, 0.62, 0.25],
        "rock" => [0.52, 0.48, 0.44],
        "sand" => [0.80, 0.72, 0.52],
        _ => [0.70, 0.30, 0.70],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footprint_iou_and_geometry() {
        let a = Footprint::new([0.0, 0.0], [4.0, 6.0]);
        assert_eq!(a.center(), [2.0, 3.0]);
        assert_eq!(a.extents(), [4.0, 6.0]);
        assert_eq!(a.iou(&a), 1.0);
        let b = a.translated(2.0, 0.0);
        // overlap 2x6 = 12, union 24 + 24 - 12 = 36
        assert!((a.iou(&b) - 12.0 / 36.0).abs() < 1e-12);
        let far = a.translated(100.0, 0.0);
        assert_eq!(a.iou(&far), 0.0);
    }

    #[test]
    fn polygon_containment() {
        let rect = vec![[1.0, 1.0], [5.0, 1.0], [5.0, 3.0], [1.0, 3.0]];
        assert!(point_in_polygon(&rect, 3.0, 2.0));
        assert!(!point_in_polygon(&rect, 0.5, 2.0));
        assert!(!point_in_polygon(&rect, 3.0, 3.5));
    }

    #[test]
    fn heightmap_sampling_uses_origin_and_datum() {
        let hm = Heightmap {
            values: Grid::from_fn(5, 5, |x, y| (x + y) as f64),
            cell_size: 2.0,
            datum: 10.0,
            origin: [4.0, 6.0],
        };
        assert_eq!(hm.elevation_at(4.0, 6.0), 10.0);
        assert_eq!(hm.elevation_at(6.0, 6.0), 11.0);
        assert_eq!(hm.elevation_at(5.0, 6.0), 10.5);
        assert_eq!(hm.extent(), [8.0, 8.0]);
    }

    #[test]
    fn splatmap_renormalizes_to_simplex() {
        let mut splat = Splatmap {
            channels: vec![Grid::filled(3, 3, 0.5), Grid::filled(3, 3, 1.5)],
            channel_categories: vec!["grass".into(), "rock".into()],
        };
        splat.renormalize();
        for y in 0..3 {
            for x in 0..3 {
                let sum: f64 = splat.weights_at(x, y).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(splat.dominant_channel(1, 1), 1);
    }
}
