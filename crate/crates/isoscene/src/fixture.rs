//! Deterministic synthetic-scene generation and rendering: ground-truth
//! frames from a known descriptor, used as the round-trip oracle for the
//! scene-understanding pipeline.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{self, DepthMap, IsometricCamera};
use crate::error::{IsoError, Result};
use crate::grid::Grid;
use crate::scene::{
    category_color, Footprint, Heightmap, InstanceMask, IsometricFrame, ObjectPlacement,
    SceneDescriptor, Splatmap, WaterRegion, SEMANTIC_VOID,
};

pub const WATER_BED_DROP: f64 = 0.5;
pub const WATER_SURFACE_MARGIN: f64 = 0.15;
const OBJECT_FLATTEN_MARGIN: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    /// Terrain grid vertices per side.
    pub terrain_cells: usize,
    /// Meters per grid cell.
    pub cell_size: f64,
    /// Constant elevation added under all bumps.
    pub base_height: f64,
    pub bump_count: usize,
    pub bump_amplitude: [f64; 2],
    pub bump_radius: [f64; 2],
    pub object_count: usize,
    pub object_size: [f64; 2],
    pub object_height: [f64; 2],
    pub water_region: bool,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            terrain_cells: 96,
            cell_size: 0.5,
            base_height: 0.0,
            bump_count: 4,
            bump_amplitude: [1.5, 4.0],
            bump_radius: [10.0, 16.0],
            object_count: 3,
            object_size: [3.0, 7.0],
            object_height: [2.0, 6.0],
            water_region: false,
        }
    }
}

impl FixtureConfig {
    pub fn extent(&self) -> f64 {
        (self.terrain_cells.saturating_sub(1)) as f64 * self.cell_size
    }

    fn validate(&self) -> Result<()> {
        if self.terrain_cells < 2 || self.cell_size <= 0.0 {
            return Err(IsoError::EmptySceneDomain);
        }
        if self.terrain_cells < 16 {
            return Err(IsoError::Config(format!(
                "terrain grid {0}x{0} is below the 16x16 minimum",
                self.terrain_cells
            )));
        }
        if self.object_count > 8 {
            return Err(IsoError::Config(
                "at most 8 fixture objects are supported".into(),
            ));
        }
        Ok(())
    }
}

fn cos_bump(dist: f64, radius: f64, amplitude: f64) -> f64 {
    if dist >= radius {
        return 0.0;
    }
    let c = (std::f64::consts::FRAC_PI_2 * dist / radius).cos();
    amplitude * c * c
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Deterministic random scene: seeded cosine-bump terrain, axis-aligned box
/// objects and an optional water basin. Identical (seed, config) inputs
/// yield identical descriptors.
pub fn generate_random_scene(seed: u64, config: &FixtureConfig) -> Result<SceneDescriptor> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.terrain_cells;
    let extent = config.extent();
    let cell = config.cell_size;

    // Terrain: sum of seeded cosine bumps over a constant base.
    struct Bump {
        center: [f64; 2],
        radius: f64,
        amplitude: f64,
    }
    let bumps: Vec<Bump> = (0..config.bump_count)
        .map(|_| Bump {
            center: [
                rng.gen_range(0.2..0.8) * extent,
                rng.gen_range(0.2..0.8) * extent,
            ],
            radius: rng.gen_range(config.bump_radius[0]..=config.bump_radius[1]),
            amplitude: rng.gen_range(config.bump_amplitude[0]..=config.bump_amplitude[1]),
        })
        .collect();
    let mut values = Grid::from_fn(n, n, |i, j| {
        let (x, y) = (i as f64 * cell, j as f64 * cell);
        config.base_height
            + bumps
                .iter()
                .map(|b| {
                    let d = ((x - b.center[0]).powi(2) + (y - b.center[1]).powi(2)).sqrt();
                    cos_bump(d, b.radius, b.amplitude)
                })
                .sum::<f64>()
    });

    // Optional water basin in the low corner quadrant; the bed is cut flat
    // below the lowest boundary height so the surface visibly covers it.
    let mut water_regions = Vec::new();
    if config.water_region {
        let x0 = rng.gen_range(0.08..0.12) * extent;
        let y0 = rng.gen_range(0.08..0.12) * extent;
        let x1 = x0 + rng.gen_range(0.18..0.26) * extent;
        let y1 = y0 + rng.gen_range(0.18..0.26) * extent;
        let inside = |x: f64, y: f64| x > x0 && x < x1 && y > y0 && y < y1;
        let mut boundary_min = f64::INFINITY;
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (i as f64 * cell, j as f64 * cell);
                if !inside(x, y) {
                    continue;
                }
                // Boundary ring: inside cells with an outside 4-neighbor.
                let ring = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| {
                    let xx = (i as i64 + dx) as f64 * cell;
                    let yy = (j as i64 + dy) as f64 * cell;
                    !inside(xx, yy)
                });
                if ring {
                    boundary_min = boundary_min.min(*values.get(i, j));
                }
            }
        }
        if boundary_min.is_finite() {
            let bed = boundary_min - WATER_BED_DROP;
            for j in 0..n {
                for i in 0..n {
                    let (x, y) = (i as f64 * cell, j as f64 * cell);
                    if inside(x, y) {
                        values.set(i, j, bed);
                    }
                }
            }
            water_regions.push(WaterRegion {
                polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
                water_level: boundary_min - WATER_SURFACE_MARGIN,
            });
        }
    }

    // Objects: one box per free placement zone, never inside the water
    // basin (the basin occupies the low corner, zone 0 is skipped when
    // water is enabled).
    let mut objects = Vec::new();
    let zones = 3usize;
    let mut zone_ids: Vec<usize> = (if config.water_region { 1 } else { 0 }..zones * zones).collect();
    for i in (1..zone_ids.len()).rev() {
        let j = rng.gen_range(0..=i);
        zone_ids.swap(i, j);
    }
    for k in 0..config.object_count.min(zone_ids.len()) {
        let zone = zone_ids[k];
        let (zx, zy) = (zone % zones, zone / zones);
        let zone_w = extent / zones as f64;
        let w = rng.gen_range(config.object_size[0]..=config.object_size[1]);
        let d = rng.gen_range(config.object_size[0]..=config.object_size[1]);
        let h = rng.gen_range(config.object_height[0]..=config.object_height[1]);
        let cx = (zx as f64 + 0.5) * zone_w + rng.gen_range(-0.12..0.12) * zone_w;
        let cy = (zy as f64 + 0.5) * zone_w + rng.gen_range(-0.12..0.12) * zone_w;
        let footprint = Footprint::new(
            [cx - 0.5 * w, cy - 0.5 * d],
            [cx + 0.5 * w, cy + 0.5 * d],
        );
        objects.push(ObjectPlacement {
            instance_id: k as u32,
            category: "building".into(),
            footprint,
            height: h,
            base_elevation: 0.0, // fixed after flattening below
            asset_ref: "box".into(),
        });
    }

    // Flatten terrain under each footprint with a smooth blend skirt. The
    // pad takes the local terrain maximum so nothing nearby stands above
    // the object's base and buries its contact edge.
    for obj in &mut objects {
        let mut base = f64::NEG_INFINITY;
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (i as f64 * cell, j as f64 * cell);
                let dx = (obj.footprint.min[0] - x).max(x - obj.footprint.max[0]).max(0.0);
                let dy = (obj.footprint.min[1] - y).max(y - obj.footprint.max[1]).max(0.0);
                if (dx * dx + dy * dy).sqrt() < OBJECT_FLATTEN_MARGIN {
                    base = base.max(*values.get(i, j));
                }
            }
        }
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (i as f64 * cell, j as f64 * cell);
                let dx = (obj.footprint.min[0] - x).max(x - obj.footprint.max[0]).max(0.0);
                let dy = (obj.footprint.min[1] - y).max(y - obj.footprint.max[1]).max(0.0);
                let outside = (dx * dx + dy * dy).sqrt();
                if outside < OBJECT_FLATTEN_MARGIN {
                    let w = smoothstep(1.0 - outside / OBJECT_FLATTEN_MARGIN);
                    let v = *values.get(i, j);
                    values.set(i, j, v * (1.0 - w) + base * w);
                }
            }
        }
        obj.base_elevation = base;
    }

    let terrain = Heightmap {
        values,
        cell_size: cell,
        datum: 0.0,
        origin: [0.0, 0.0],
    };

    // Splat: water / rock-by-slope-or-height / grass, one-hot then feathered.
    let splat = splat_from_terrain(&terrain, &water_regions);

    let mut texture_assignments = BTreeMap::new();
    for cat in &splat.channel_categories {
        texture_assignments.insert(cat.clone(), format!("{cat}_0"));
    }

    Ok(SceneDescriptor {
        terrain,
        water_regions,
        objects,
        splat,
        texture_assignments,
        rng_seed: seed,
    })
}

/// One-hot terrain splat (grass / rock / water) softened to the simplex.
pub fn splat_from_terrain(terrain: &Heightmap, water: &[WaterRegion]) -> Splatmap {
    let n = terrain.values.width;
    let m = terrain.values.height;
    let cell = terrain.cell_size;
    let categories: Vec<String> = vec!["grass".into(), "rock".into(), "water".into()];
    let mut channels = vec![Grid::filled(n, m, 0.0); 3];
    for j in 0..m {
        for i in 0..n {
            let (x, y) = (i as f64 * cell, j as f64 * cell);
            let in_water = water.iter().any(|w| w.contains(x, y));
            let k = if in_water {
                2
            } else {
                let i0 = i.saturating_sub(1);
                let i1 = (i + 1).min(n - 1);
                let j0 = j.saturating_sub(1);
                let j1 = (j + 1).min(m - 1);
                let dzdx = (terrain.values.get(i1, j) - terrain.values.get(i0, j))
                    / ((i1 - i0).max(1) as f64 * cell);
                let dzdy = (terrain.values.get(i, j1) - terrain.values.get(i, j0))
                    / ((j1 - j0).max(1) as f64 * cell);
                let slope = (dzdx * dzdx + dzdy * dzdy).sqrt();
                if slope > 0.28 || *terrain.values.get(i, j) > 2.5 {
                    1
                } else {
                    0
                }
            };
            channels[k].set(i, j, 1.0);
        }
    }
    let mut splat = Splatmap {
        channels,
        channel_categories: categories,
    };
    splat.feather(1.0);
    splat
}

fn splat_color(splat: &Splatmap, i: usize, j: usize) -> [f32; 3] {
    let mut c = [0.0f32; 3];
    for (k, cat) in splat.channel_categories.iter().enumerate() {
        let w = *splat.channels[k].get(i, j) as f32;
        let pc = category_color(cat);
        for d in 0..3 {
            c[d] += w * pc[d];
        }
    }
    c
}

struct RasterTri {
    v: [Vector3<f64>; 3],
    color: [[f32; 3]; 3],
    semantic: u8,
    instance: Option<u32>,
}

fn box_triangles(
    footprint: &Footprint,
    z0: f64,
    z1: f64,
    color: [f32; 3],
    semantic: u8,
    instance: Option<u32>,
    out: &mut Vec<RasterTri>,
) {
    let [x0, y0] = footprint.min;
    let [x1, y1] = footprint.max;
    let corners = [
        Vector3::new(x0, y0, z0),
        Vector3::new(x1, y0, z0),
        Vector3::new(x1, y1, z0),
        Vector3::new(x0, y1, z0),
        Vector3::new(x0, y0, z1),
        Vector3::new(x1, y0, z1),
        Vector3::new(x1, y1, z1),
        Vector3::new(x0, y1, z1),
    ];
    // No bottom face: it would be coplanar with the flattened terrain pad
    // and z-fight it, speckling the instance raster along rounding noise.
    const FACES: [[usize; 4]; 5] = [
        [4, 5, 6, 7], // top
        [0, 1, 5, 4],
        [1, 2, 6, 5],
        [2, 3, 7, 6],
        [3, 0, 4, 7],
    ];
    for f in FACES {
        for tri in [[f[0], f[1], f[2]], [f[0], f[2], f[3]]] {
            out.push(RasterTri {
                v: [corners[tri[0]], corners[tri[1]], corners[tri[2]]],
                color: [color; 3],
                semantic,
                instance,
            });
        }
    }
}

struct RasterOutput {
    color: Grid<[f32; 3]>,
    depth: DepthMap,
    semantic: Grid<u8>,
    instance: Grid<Option<u32>>,
}

fn rasterize(
    tris: &[RasterTri],
    cam: &IsometricCamera,
    plane_offset: f64,
) -> RasterOutput {
    let (w, h) = (cam.image_width, cam.image_height);
    let mut out = RasterOutput {
        color: Grid::filled(w, h, [0.0, 0.0, 0.0]),
        depth: DepthMap::new(w, h, plane_offset),
        semantic: Grid::filled(w, h, SEMANTIC_VOID),
        instance: Grid::filled(w, h, None),
    };
    let mut zbuf = Grid::filled(w, h, f64::INFINITY);
    for tri in tris {
        let p: Vec<Vector2<f64>> = tri.v.iter().map(|v| camera::project(*v, cam)).collect();
        let d: Vec<f64> = tri.v.iter().map(|v| camera::point_depth(*v, plane_offset)).collect();
        let area = (p[1] - p[0]).perp(&(p[2] - p[0]));
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max);
        let x_lo = (min_x - 0.5).floor().max(0.0) as usize;
        let x_hi = ((max_x + 0.5).ceil() as i64).clamp(0, w as i64) as usize;
        let y_lo = (min_y - 0.5).floor().max(0.0) as usize;
        let y_hi = ((max_y + 0.5).ceil() as i64).clamp(0, h as i64) as usize;
        let inv_area = 1.0 / area;
        for py in y_lo..y_hi {
            for px in x_lo..x_hi {
                let q = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
                let l0 = (p[1] - q).perp(&(p[2] - q)) * inv_area;
                let l1 = (p[2] - q).perp(&(p[0] - q)) * inv_area;
                let l2 = 1.0 - l0 - l1;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let depth = l0 * d[0] + l1 * d[1] + l2 * d[2];
                if depth >= *zbuf.get(px, py) {
                    continue;
                }
                zbuf.set(px, py, depth);
                let mut c = [0.0f32; 3];
                for k in 0..3 {
                    c[k] = (l0 * tri.color[0][k] as f64
                        + l1 * tri.color[1][k] as f64
                        + l2 * tri.color[2][k] as f64) as f32;
                }
                out.color.set(px, py, c);
                out.depth.values.set(px, py, depth);
                out.depth.valid.set(px, py, true);
                out.semantic.set(px, py, tri.semantic);
                out.instance.set(px, py, tri.instance);
            }
        }
    }
    out
}

/// Highest elevation of any scene surface.
pub fn scene_max_z(scene: &SceneDescriptor) -> f64 {
    let (_, terrain_max) = scene.terrain.values.min_max();
    let obj_max = scene
        .objects
        .iter()
        .map(|o| o.base_elevation + o.height)
        .fold(f64::NEG_INFINITY, f64::max);
    let water_max = scene
        .water_regions
        .iter()
        .map(|w| w.water_level)
        .fold(f64::NEG_INFINITY, f64::max);
    terrain_max.max(obj_max).max(water_max).max(0.0)
}

/// Camera that covers the whole scene in the given image size.
pub fn camera_for_scene(
    scene: &SceneDescriptor,
    image_width: usize,
    image_height: usize,
) -> IsometricCamera {
    let [ex, ey] = scene.terrain.extent();
    IsometricCamera::fit_bounds(
        Vector3::new(ex, ey, scene_max_z(scene)),
        image_width,
        image_height,
        8.0,
    )
}

/// Z-buffer orthographic rasterization of the scene into aligned color,
/// depth, semantic and instance rasters.
pub fn render_isometric(scene: &SceneDescriptor, cam: &IsometricCamera) -> Result<IsometricFrame> {
    let [ex, ey] = scene.terrain.extent();
    let z_max = scene_max_z(scene);
    let (z_min, _) = scene.terrain.values.min_max();
    for corner in 0..8 {
        let p = Vector3::new(
            if corner & 1 != 0 { ex } else { 0.0 },
            if corner & 2 != 0 { ey } else { 0.0 },
            if corner & 4 != 0 { z_max } else { z_min },
        );
        let q = camera::project(p, cam);
        if q.x < 0.0 || q.y < 0.0 || q.x > cam.image_width as f64 || q.y > cam.image_height as f64 {
            return Err(IsoError::SceneNotCovered);
        }
    }
    let plane_offset = ((ex + ey + z_max) / 3.0_f64.sqrt()).ceil() + 10.0;

    // Frame category table: splat channels first, then object categories.
    let mut categories = scene.splat.channel_categories.clone();
    for obj in &scene.objects {
        if !categories.contains(&obj.category) {
            categories.push(obj.category.clone());
        }
    }
    let cat_id = |name: &str| -> u8 {
        categories.iter().position(|c| c == name).unwrap() as u8
    };

    let mut tris = Vec::new();
    let terrain = &scene.terrain;
    let n = terrain.values.width;
    let m = terrain.values.height;
    let cell = terrain.cell_size;
    let vertex = |i: usize, j: usize| {
        Vector3::new(
            i as f64 * cell,
            j as f64 * cell,
            terrain.datum + *terrain.values.get(i, j),
        )
    };
    for j in 0..m - 1 {
        for i in 0..n - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let v: Vec<Vector3<f64>> = corners.iter().map(|&(a, b)| vertex(a, b)).collect();
            let c: Vec<[f32; 3]> = corners
                .iter()
                .map(|&(a, b)| splat_color(&scene.splat, a, b))
                .collect();
            let semantic = cat_id(
                &scene.splat.channel_categories[scene.splat.dominant_channel(i, j)],
            );
            tris.push(RasterTri {
                v: [v[0], v[1], v[2]],
                color: [c[0], c[1], c[2]],
                semantic,
                instance: None,
            });
            tris.push(RasterTri {
                v: [v[0], v[2], v[3]],
                color: [c[0], c[2], c[3]],
                semantic,
                instance: None,
            });
        }
    }
    for region in &scene.water_regions {
        let wc = category_color("water");
        let sem = cat_id("water");
        let poly = &region.polygon;
        for k in 1..poly.len() - 1 {
            tris.push(RasterTri {
                v: [
                    Vector3::new(poly[0][0], poly[0][1], region.water_level),
                    Vector3::new(poly[k][0], poly[k][1], region.water_level),
                    Vector3::new(poly[k + 1][0], poly[k + 1][1], region.water_level),
                ],
                color: [wc; 3],
                semantic: sem,
                instance: None,
            });
        }
    }
    for (idx, obj) in scene.objects.iter().enumerate() {
        box_triangles(
            &obj.footprint,
            obj.base_elevation,
            obj.base_elevation + obj.height,
            category_color(&obj.category),
            cat_id(&obj.category),
            Some(idx as u32),
            &mut tris,
        );
    }

    let raster = rasterize(&tris, cam, plane_offset);
    let instances = scene
        .objects
        .iter()
        .enumerate()
        .map(|(idx, obj)| InstanceMask {
            id: obj.instance_id,
            category: obj.category.clone(),
            mask: raster.instance.map(|v| *v == Some(idx as u32)),
        })
        .collect();

    Ok(IsometricFrame {
        color: raster.color,
        depth: raster.depth,
        semantic: raster.semantic,
        categories,
        instances,
        camera: cam.clone(),
    })
}

/// Top-down rendering of terrain only: splat-composited color plus the
/// exact height raster (the heightmap oracle).
pub fn render_bev(scene: &SceneDescriptor) -> (Grid<[f32; 3]>, Grid<f64>) {
    let n = scene.terrain.values.width;
    let m = scene.terrain.values.height;
    let color = Grid::from_fn(n, m, |i, j| splat_color(&scene.splat, i, j));
    let height = scene
        .terrain
        .values
        .map(|&v| scene.terrain.datum + v);
    (color, height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::unproject_depth;

    fn flat_config() -> FixtureConfig {
        FixtureConfig {
            bump_count: 0,
            object_count: 0,
            water_region: false,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = FixtureConfig {
            water_region: true,
            ..Default::default()
        };
        let a = generate_random_scene(7, &cfg).unwrap();
        let b = generate_random_scene(7, &cfg).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
    }

    #[test]
    fn zero_objects_and_differing_seeds() {
        let cfg = flat_config();
        let scene = generate_random_scene(7, &cfg).unwrap();
        assert!(scene.objects.is_empty());

        let cfg = FixtureConfig::default();
        let a = generate_random_scene(7, &cfg).unwrap();
        let b = generate_random_scene(8, &cfg).unwrap();
        let max_diff = a
            .terrain
            .values
            .data
            .iter()
            .zip(&b.terrain.values.data)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 0.0);
    }

    #[test]
    fn invalid_configs_error() {
        let mut cfg = FixtureConfig::default();
        cfg.terrain_cells = 0;
        assert!(matches!(
            generate_random_scene(1, &cfg),
            Err(IsoError::EmptySceneDomain)
        ));
        cfg.terrain_cells = 8;
        assert!(matches!(
            generate_random_scene(1, &cfg),
            Err(IsoError::Config(_))
        ));
    }

    #[test]
    fn flat_terrain_depth_is_affine_in_pixels() {
        let scene = generate_random_scene(3, &flat_config()).unwrap();
        let cam = camera_for_scene(&scene, 256, 256);
        let frame = render_isometric(&scene, &cam).unwrap();
        // Least-squares plane fit d = a px + b py + c over valid pixels.
        let mut rows = Vec::new();
        for y in 0..256 {
            for x in 0..256 {
                if *frame.depth.valid.get(x, y) {
                    rows.push((x as f64 + 0.5, y as f64 + 0.5, *frame.depth.values.get(x, y)));
                }
            }
        }
        assert!(rows.len() > 10_000);
        // Normal equations for [a b c].
        let mut ata = [[0.0f64; 3]; 3];
        let mut atb = [0.0f64; 3];
        for &(x, y, d) in &rows {
            let r = [x, y, 1.0];
            for i in 0..3 {
                for j in 0..3 {
                    ata[i][j] += r[i] * r[j];
                }
                atb[i] += r[i] * d;
            }
        }
        let m = nalgebra::Matrix3::from_fn(|i, j| ata[i][j]);
        let b = nalgebra::Vector3::new(atb[0], atb[1], atb[2]);
        let sol = m.lu().solve(&b).unwrap();
        let max_resid = rows
            .iter()
            .map(|&(x, y, d)| (d - (sol[0] * x + sol[1] * y + sol[2])).abs())
            .fold(0.0, f64::max);
        assert!(max_resid < 1e-6, "max residual {max_resid}");
    }

    #[test]
    fn flat_ground_unprojects_to_z_zero() {
        let scene = generate_random_scene(3, &flat_config()).unwrap();
        let cam = camera_for_scene(&scene, 256, 256);
        let frame = render_isometric(&scene, &cam).unwrap();
        let pts = unproject_depth(&frame.depth, &cam);
        assert!(!pts.is_empty());
        for p in pts {
            assert!(p.position.z.abs() < 1e-6, "z = {}", p.position.z);
        }
    }

    #[test]
    fn single_cube_renders_one_instance_and_top_height() {
        let mut scene = generate_random_scene(5, &flat_config()).unwrap();
        scene.objects.push(ObjectPlacement {
            instance_id: 0,
            category: "building".into(),
            footprint: Footprint::new([20.0, 20.0], [22.0, 22.0]),
            height: 2.0,
            base_elevation: 0.0,
            asset_ref: "box".into(),
        });
        let cam = camera_for_scene(&scene, 512, 512);
        let frame = render_isometric(&scene, &cam).unwrap();
        assert_eq!(frame.instances.len(), 1);
        let mask = &frame.instances[0].mask;
        assert!(mask.data.iter().filter(|&&v| v).count() > 0);

        // Top-face points of the cube unproject to Z = 2 +- 1e-3.
        let pts = unproject_depth(&frame.depth, &cam);
        let mut top = 0.0f64;
        for p in &pts {
            if *mask.get(p.pixel.0, p.pixel.1) {
                top = top.max(p.position.z);
            }
        }
        assert!((top - 2.0).abs() < 1e-3, "top = {top}");
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = generate_random_scene(11, &FixtureConfig::default()).unwrap();
        let cam = camera_for_scene(&scene, 256, 256);
        let a = render_isometric(&scene, &cam).unwrap();
        let b = render_isometric(&scene, &cam).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_outside_frustum_errors() {
        let scene = generate_random_scene(11, &FixtureConfig::default()).unwrap();
        let cam = IsometricCamera::new(50.0, 64, 64, [32.0, 32.0]);
        assert!(matches!(
            render_isometric(&scene, &cam),
            Err(IsoError::SceneNotCovered)
        ));
    }

    #[test]
    fn bev_height_raster_is_exact() {
        // Flat terrain at a constant base height.
        let cfg = FixtureConfig {
            base_height: 3.0,
            ..flat_config()
        };
        let scene = generate_random_scene(2, &cfg).unwrap();
        let (_, height) = render_bev(&scene);
        assert!(height.data.iter().all(|&v| (v - 3.0).abs() < 1e-12));

        // One bump of known amplitude peaks at that amplitude.
        let cfg = FixtureConfig {
            bump_count: 1,
            bump_amplitude: [5.0, 5.0],
            bump_radius: [12.0, 12.0],
            object_count: 0,
            ..Default::default()
        };
        let scene = generate_random_scene(2, &cfg).unwrap();
        let (_, height) = render_bev(&scene);
        let max = height.data.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        assert!((max - 5.0).abs() < 0.05, "peak = {max}");
    }

    #[test]
    fn water_bed_sits_below_surface() {
        let cfg = FixtureConfig {
            water_region: true,
            object_count: 0,
            ..Default::default()
        };
        let scene = generate_random_scene(13, &cfg).unwrap();
        assert_eq!(scene.water_regions.len(), 1);
        let region = &scene.water_regions[0];
        let (_, height) = render_bev(&scene);
        let cell = scene.terrain.cell_size;
        let mut checked = 0;
        for j in 0..height.height {
            for i in 0..height.width {
                let (x, y) = (i as f64 * cell, j as f64 * cell);
                if region.contains(x, y) {
                    assert!(*height.get(i, j) < region.water_level);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn instance_masks_are_disjoint_and_semantic_consistent() {
        let scene = generate_random_scene(21, &FixtureConfig::default()).unwrap();
        let cam = camera_for_scene(&scene, 384, 384);
        let frame = render_isometric(&scene, &cam).unwrap();
        let mut owner = Grid::filled(384, 384, -1i32);
        for (k, inst) in frame.instances.iter().enumerate() {
            let cat = frame.category_id(&inst.category).unwrap();
            for (i, &v) in inst.mask.data.iter().enumerate() {
                if v {
                    assert_eq!(owner.data[i], -1, "overlapping instance masks");
                    owner.data[i] = k as i32;
                    assert_eq!(frame.semantic.data[i], cat);
                }
            }
        }
    }

    #[test]
    fn rendered_pole_height_matches_projection_constant() {
        let mut scene = generate_random_scene(5, &flat_config()).unwrap();
        scene.objects.push(ObjectPlacement {
            instance_id: 0,
            category: "building".into(),
            footprint: Footprint::new([23.8, 23.8], [24.2, 24.2]),
            height: 5.0,
            base_elevation: 0.0,
            asset_ref: "box".into(),
        });
        let cam = camera_for_scene(&scene, 512, 512);
        let frame = render_isometric(&scene, &cam).unwrap();
        let mask = &frame.instances[0].mask;
        let mut y_min = usize::MAX;
        let mut y_max = 0;
        for y in 0..512 {
            for x in 0..512 {
                if *mask.get(x, y) {
                    y_min = y_min.min(y);
                    y_max = y_max.max(y);
                }
            }
        }
        let rows = (y_max - y_min + 1) as f64;
        let s = cam.pixels_per_world_unit;
        // Vertical extent = height plus the projected footprint diagonal.
        // The silhouette tapers to wedge corners at both ends, so the
        // covered-row count can undershoot by up to a pixel per end.
        let expected = s * (2.0 * 5.0 + 0.4 + 0.4) / 6.0_f64.sqrt();
        assert!(
            (rows - expected).abs() <= 2.5,
            "rows = {rows}, expected = {expected}"
        );
    }
}
