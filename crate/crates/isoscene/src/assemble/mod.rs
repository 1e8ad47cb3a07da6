//! Turns a heightmap, splatmap and object placements into renderable
//! geometry: terrain mesh, blended ground texture, scattered props and
//! positioned proxy meshes, exported as a binary glTF bundle.

mod gltf;

pub use gltf::{export_scene, validate_glb, GlbSummary, SceneBundle};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IsoError, Result};
use crate::grid::Grid;
use crate::scene::{category_color, Heightmap, ObjectPlacement, Splatmap};

/// Indexed triangle mesh with per-vertex normals and UVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshData {
    pub positions: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub uvs: Vec<[f32; 2]>,
    pub indices: Vec<u32>,
}

impl MeshData {
    /// Index bounds, unit normals, finite coordinates.
    pub fn self_check(&self, name: &str) -> Result<()> {
        if self.normals.len() != self.positions.len() || self.uvs.len() != self.positions.len() {
            return Err(IsoError::MeshCheck(format!(
                "{name}: attribute counts disagree"
            )));
        }
        if self.indices.len() % 3 != 0 {
            return Err(IsoError::MeshCheck(format!(
                "{name}: index count not a multiple of 3"
            )));
        }
        for &i in &self.indices {
            if i as usize >= self.positions.len() {
                return Err(IsoError::MeshCheck(format!("{name}: index {i} out of range")));
            }
        }
        for p in &self.positions {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(IsoError::MeshCheck(format!("{name}: non-finite position")));
            }
        }
        for n in &self.normals {
            let len = (n[0] as f64).hypot(n[1] as f64).hypot(n[2] as f64);
            if !len.is_finite() || (len - 1.0).abs() > 1e-6 {
                return Err(IsoError::MeshCheck(format!(
                    "{name}: normal length {len} not unit"
                )));
            }
        }
        Ok(())
    }

    /// Axis-aligned unit cube proxy: x, y centered, base at z = 0.
    pub fn unit_box() -> MeshData {
        let faces: [([f32; 3], [[f32; 3]; 4]); 6] = [
            (
                [0.0, 0.0, -1.0],
                [
                    [-0.5, -0.5, 0.0],
                    [0.5, -0.5, 0.0],
                    [0.5, 0.5, 0.0],
                    [-0.5, 0.5, 0.0],
                ],
            ),
            (
                [0.0, 0.0, 1.0],
                [
                    [-0.5, -0.5, 1.0],
                    [-0.5, 0.5, 1.0],
                    [0.5, 0.5, 1.0],
                    [0.5, -0.5, 1.0],
                ],
            ),
            (
                [-1.0, 0.0, 0.0],
                [
                    [-0.5, -0.5, 0.0],
                    [-0.5, 0.5, 0.0],
                    [-0.5, 0.5, 1.0],
                    [-0.5, -0.5, 1.0],
                ],
            ),
            (
                [1.0, 0.0, 0.0],
                [
                    [0.5, -0.5, 0.0],
                    [0.5, -0.5, 1.0],
                    [0.5, 0.5, 1.0],
                    [0.5, 0.5, 0.0],
                ],
            ),
            (
                [0.0, -1.0, 0.0],
                [
                    [-0.5, -0.5, 0.0],
                    [-0.5, -0.5, 1.0],
                    [0.5, -0.5, 1.0],
                    [0.5, -0.5, 0.0],
                ],
            ),
            (
                [0.0, 1.0, 0.0],
                [
                    [-0.5, 0.5, 0.0],
                    [0.5, 0.5, 0.0],
                    [0.5, 0.5, 1.0],
                    [-0.5, 0.5, 1.0],
                ],
            ),
        ];
        let mut mesh = MeshData {
            positions: Vec::new(),
            normals: Vec::new(),
            uvs: Vec::new(),
            indices: Vec::new(),
        };
        for (normal, quad) in faces {
            let base = mesh.positions.len() as u32;
            for (k, p) in quad.iter().enumerate() {
                mesh.positions.push(*p);
                mesh.normals.push(normal);
                mesh.uvs.push([(k == 1 || k == 2) as u8 as f32, (k >= 2) as u8 as f32]);
            }
            mesh.indices
                .extend([base, base + 1, base + 2, base, base + 2, base + 3]);
        }
        mesh
    }
}

/// Regular-grid terrain surface; vertex Z from the heightmap, normals by
/// central differences (one-sided at the border).
pub fn terrain_mesh(heightmap: &Heightmap) -> Result<MeshData> {
    let w = heightmap.values.width;
    let h = heightmap.values.height;
    if w < 2 || h < 2 {
        return Err(IsoError::GridTooSmall);
    }
    let cell = heightmap.cell_size;
    let mut mesh = MeshData {
        positions: Vec::with_capacity(w * h),
        normals: Vec::with_capacity(w * h),
        uvs: Vec::with_capacity(w * h),
        indices: Vec::with_capacity((w - 1) * (h - 1) * 6),
    };
    let z = |i: usize, j: usize| heightmap.datum + heightmap.values.get(i, j);
    for j in 0..h {
        for i in 0..w {
            let x = heightmap.origin[0] + i as f64 * cell;
            let y = heightmap.origin[1] + j as f64 * cell;
            mesh.positions.push([x as f32, y as f32, z(i, j) as f32]);
            let (i0, i1) = (i.saturating_sub(1), (i + 1).min(w - 1));
            let (j0, j1) = (j.saturating_sub(1), (j + 1).min(h - 1));
            let dzdx = (z(i1, j) - z(i0, j)) / ((i1 - i0) as f64 * cell);
            let dzdy = (z(i, j1) - z(i, j0)) / ((j1 - j0) as f64 * cell);
            let inv = 1.0 / (dzdx * dzdx + dzdy * dzdy + 1.0).sqrt();
            mesh.normals
                .push([(-dzdx * inv) as f32, (-dzdy * inv) as f32, inv as f32]);
            mesh.uvs
                .push([i as f32 / (w - 1) as f32, j as f32 / (h - 1) as f32]);
        }
    }
    for j in 0..h - 1 {
        for i in 0..w - 1 {
            let a = (j * w + i) as u32;
            let b = a + 1;
            let c = a + w as u32;
            let d = c + 1;
            mesh.indices.extend([a, b, d, a, d, c]);
        }
    }
    Ok(mesh)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRule {
    pub asset_kind: String,
    /// Expected instances per square meter.
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryAssets {
    pub tiles: Vec<Grid<[f32; 3]>>,
    /// World-space edge length of one tile repeat, meters.
    pub tile_world_size: f64,
    pub scatter: Vec<ScatterRule>,
}

/// Category-keyed texture tiles, scatter rules and proxy meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureTileLibrary {
    pub categories: BTreeMap<String, CategoryAssets>,
    pub meshes: BTreeMap<String, MeshData>,
}

impl TextureTileLibrary {
    /// Built-in library: one constant-color tile per category from the
    /// shared palette, a unit-box proxy, and modest scatter on grass/rock.
    pub fn palette(categories: &[String]) -> TextureTileLibrary {
        let mut lib = TextureTileLibrary {
            categories: BTreeMap::new(),
            meshes: BTreeMap::new(),
        };
        for cat in categories {
            let color = category_color(cat);
            let scatter = match cat.as_str() {
                "grass" => vec![ScatterRule {
                    asset_kind: "grass_tuft".into(),
                    density: 0.05,
                }],
                "rock" => vec![ScatterRule {
                    asset_kind: "stone".into(),
                    density: 0.02,
                }],
                _ => Vec::new(),
            };
            lib.categories.insert(
                cat.clone(),
                CategoryAssets {
                    tiles: vec![Grid::filled(8, 8, color)],
                    tile_world_size: 4.0,
                    scatter,
                },
            );
        }
        lib.meshes.insert("box".into(), MeshData::unit_box());
        lib.meshes.insert("grass_tuft".into(), prop_box(0.3, 0.4));
        lib.meshes.insert("stone".into(), prop_box(0.5, 0.3));
        lib
    }

    fn assets(&self, category: &str) -> Result<&CategoryAssets> {
        let assets = self
            .categories
            .get(category)
            .ok_or_else(|| IsoError::MissingTile(category.to_string()))?;
        if assets.tiles.is_empty() {
            return Err(IsoError::MissingTile(category.to_string()));
        }
        Ok(assets)
    }
}

fn prop_box(footprint: f64, height: f64) -> MeshData {
    let mut mesh = MeshData::unit_box();
    for p in &mut mesh.positions {
        p[0] *= footprint as f32;
        p[1] *= footprint as f32;
        p[2] *= height as f32;
    }
    mesh
}

fn sample_tile(tile: &Grid<[f32; 3]>, u: f64, v: f64) -> [f64; 3] {
    // Wrapped bilinear sample; (u, v) in tile repeats.
    let fx = u.rem_euclid(1.0) * tile.width as f64 - 0.5;
    let fy = v.rem_euclid(1.0) * tile.height as f64 - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let (tx, ty) = (fx - x0, fy - y0);
    let wrap = |v: f64, n: usize| (v.rem_euclid(n as f64)) as usize;
    let mut out = [0.0f64; 3];
    for (dx, dy, w) in [
        (0.0, 0.0, (1.0 - tx) * (1.0 - ty)),
        (1.0, 0.0, tx * (1.0 - ty)),
        (0.0, 1.0, (1.0 - tx) * ty),
        (1.0, 1.0, tx * ty),
    ] {
        let c = tile.get(wrap(x0 + dx, tile.width), wrap(y0 + dy, tile.height));
        for d in 0..3 {
            out[d] += w * c[d] as f64;
        }
    }
    out
}

fn hash64(parts: &[u64]) -> u64 {
    // FNV-1a over the little-endian bytes of each part.
    let mut h = 0xcbf29ce484222325u64;
    for part in parts {
        for b in part.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn hash_str(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Alpha-composites tiled category textures under the splat weights:
/// color(p) = sum_k splat_k(p) * tile_k(p mod tile_size).
pub fn composite_texture(
    splat: &Splatmap,
    library: &TextureTileLibrary,
    out_width: usize,
    out_height: usize,
    cell_size: f64,
) -> Result<Grid<[f32; 3]>> {
    assert!(out_width > 0 && out_height > 0);
    let mut assets = Vec::new();
    for cat in &splat.channel_categories {
        assets.push(library.assets(cat)?);
    }
    let world_w = splat.width() as f64 * cell_size;
    let world_h = splat.height() as f64 * cell_size;
    let mut out = Grid::filled(out_width, out_height, [0.0f32; 3]);
    for (x, y) in out.iter_coords().collect::<Vec<_>>() {
        // Pixel centers span the splat grid; world position drives tiling.
        let sx = (x as f64 + 0.5) / out_width as f64 * splat.width() as f64 - 0.5;
        let sy = (y as f64 + 0.5) / out_height as f64 * splat.height() as f64 - 0.5;
        let wx = (x as f64 + 0.5) / out_width as f64 * world_w;
        let wy = (y as f64 + 0.5) / out_height as f64 * world_h;
        let mut color = [0.0f64; 3];
        for (k, a) in assets.iter().enumerate() {
            let weight = splat.channels[k].sample_bilinear(sx, sy);
            if weight <= 0.0 {
                continue;
            }
            let u = wx / a.tile_world_size;
            let v = wy / a.tile_world_size;
            let tile = if a.tiles.len() == 1 {
                &a.tiles[0]
            } else {
                let cell = hash64(&[
                    u.floor() as i64 as u64,
                    v.floor() as i64 as u64,
                    hash_str(&splat.channel_categories[k]),
                ]);
                &a.tiles[(cell % a.tiles.len() as u64) as usize]
            };
            let c = sample_tile(tile, u, v);
            for d in 0..3 {
                color[d] += weight * c[d];
            }
        }
        out.set(x, y, [color[0] as f32, color[1] as f32, color[2] as f32]);
    }
    Ok(out)
}

/// One scattered prop: a small mesh instance on the terrain surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterInstance {
    pub asset_kind: String,
    pub position: [f64; 3],
    pub yaw: f64,
    pub scale: f64,
}

const SCATTER_CELL: f64 = 1.0;

/// Jittered-grid prop scattering. Each (cell, category, rule) pair draws a
/// seeded hash; the cell spawns iff the draw falls below density * cell
/// area and the cell's dominant splat channel matches the category.
pub fn scatter_vegetation(
    splat: &Splatmap,
    heightmap: &Heightmap,
    library: &TextureTileLibrary,
    seed: u64,
) -> Vec<ScatterInstance> {
    let [ex, ey] = heightmap.extent();
    let nx = (ex / SCATTER_CELL).floor().max(0.0) as i64;
    let ny = (ey / SCATTER_CELL).floor().max(0.0) as i64;
    let cell_area = SCATTER_CELL * SCATTER_CELL;
    let mut out = Vec::new();
    for (k, cat) in splat.channel_categories.iter().enumerate() {
        let Some(assets) = library.categories.get(cat) else {
            continue;
        };
        for (rule_idx, rule) in assets.scatter.iter().enumerate() {
            let p = (rule.density * cell_area).clamp(0.0, 1.0);
            if p == 0.0 {
                continue;
            }
            let tag = hash64(&[hash_str(cat), rule_idx as u64]);
            for cj in 0..ny {
                for ci in 0..nx {
                    let h = hash64(&[ci as u64, cj as u64, tag, seed]);
                    if (h as f64 / u64::MAX as f64) >= p {
                        continue;
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(h);
                    let x = heightmap.origin[0] + (ci as f64 + rng.gen::<f64>()) * SCATTER_CELL;
                    let y = heightmap.origin[1] + (cj as f64 + rng.gen::<f64>()) * SCATTER_CELL;
                    let gx = ((x - heightmap.origin[0]) / heightmap.cell_size).round() as usize;
                    let gy = ((y - heightmap.origin[1]) / heightmap.cell_size).round() as usize;
                    let gx = gx.min(splat.width() - 1);
                    let gy = gy.min(splat.height() - 1);
                    if splat.dominant_channel(gx, gy) != k {
                        continue;
                    }
                    out.push(ScatterInstance {
                        asset_kind: rule.asset_kind.clone(),
                        position: [x, y, heightmap.elevation_at(x, y)],
                        yaw: rng.gen::<f64>() * std::f64::consts::TAU,
                        scale: 0.8 + rng.gen::<f64>() * 0.4,
                    });
                }
            }
        }
    }
    out
}

/// A proxy mesh positioned in the world: scale, then yaw about +Z, then
/// translate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub instance_id: u32,
    pub mesh_key: String,
    pub translation: [f64; 3],
    pub yaw: f64,
    pub scale: [f64; 3],
}

impl PlacedObject {
    /// World-space AABB of the transformed mesh.
    pub fn world_aabb(&self, mesh: &MeshData) -> ([f64; 3], [f64; 3]) {
        let (s, c) = self.yaw.sin_cos();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &mesh.positions {
            let x = p[0] as f64 * self.scale[0];
            let y = p[1] as f64 * self.scale[1];
            let z = p[2] as f64 * self.scale[2];
            let w = [
                c * x - s * y + self.translation[0],
                s * x + c * y + self.translation[1],
                z + self.translation[2],
            ];
            for d in 0..3 {
                lo[d] = lo[d].min(w[d]);
                hi[d] = hi[d].max(w[d]);
            }
        }
        (lo, hi)
    }
}

/// Resolves placements against the proxy-mesh library. Unknown categories
/// fall back to the unit box and record a diagnostic instead of failing.
pub fn place_objects(
    placements: &[ObjectPlacement],
    library: &TextureTileLibrary,
) -> (Vec<PlacedObject>, Vec<String>) {
    let mut placed = Vec::new();
    let mut diagnostics = Vec::new();
    for p in placements {
        let mesh_key = if library.meshes.contains_key(&p.asset_ref) {
            p.asset_ref.clone()
        } else {
            diagnostics.push(format!(
                "instance {}: no proxy mesh for '{}', using box fallback",
                p.instance_id, p.asset_ref
            ));
            "box".to_string()
        };
        let [cx, cy] = p.footprint.center();
        let [ex, ey] = p.footprint.extents();
        placed.push(PlacedObject {
            instance_id: p.instance_id,
            mesh_key,
            translation: [cx, cy, p.base_elevation],
            yaw: p.footprint.yaw,
            scale: [ex, ey, p.height],
        });
    }
    (placed, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{self, FixtureConfig};
    use crate::scene::Footprint;

    fn flat_heightmap(w: usize, h: usize, cell: f64) -> Heightmap {
        Heightmap {
            values: Grid::filled(w, h, 2.0),
            cell_size: cell,
            datum: -1.0,
            origin: [0.0, 0.0],
        }
    }

    #[test]
    fn flat_terrain_has_straight_up_normals() {
        let mesh = terrain_mesh(&flat_heightmap(5, 7, 0.5)).unwrap();
        assert_eq!(mesh.positions.len(), 35);
        assert_eq!(mesh.indices.len(), 4 * 6 * 6);
        for n in &mesh.normals {
            assert_eq!(*n, [0.0, 0.0, 1.0]);
        }
        mesh.self_check("flat").unwrap();
    }

    #[test]
    fn three_by_three_counts() {
        let mesh = terrain_mesh(&flat_heightmap(3, 3, 1.0)).unwrap();
        assert_eq!(mesh.positions.len(), 9);
        assert_eq!(mesh.indices.len() / 3, 8);
    }

    #[test]
    fn inclined_plane_normal_is_analytic() {
        let (sx, sy) = (0.3, -0.15);
        let hm = Heightmap {
            values: Grid::from_fn(9, 9, |i, j| sx * i as f64 * 0.5 + sy * j as f64 * 0.5),
            cell_size: 0.5,
            datum: 0.0,
            origin: [0.0, 0.0],
        };
        let mesh = terrain_mesh(&hm).unwrap();
        let inv = 1.0 / (sx * sx + sy * sy + 1.0f64).sqrt();
        let expect = [-sx * inv, -sy * inv, inv];
        for n in &mesh.normals {
            for d in 0..3 {
                assert!((n[d] as f64 - expect[d]).abs() < 1e-6);
            }
        }
        mesh.self_check("incline").unwrap();
    }

    #[test]
    fn sub_grid_heightmap_is_rejected() {
        assert!(matches!(
            terrain_mesh(&flat_heightmap(1, 5, 1.0)),
            Err(IsoError::GridTooSmall)
        ));
    }

    fn two_channel_splat(w: usize, h: usize, w0: f64) -> Splatmap {
        Splatmap {
            channels: vec![Grid::filled(w, h, w0), Grid::filled(w, h, 1.0 - w0)],
            channel_categories: vec!["grass".into(), "rock".into()],
        }
    }

    #[test]
    fn one_hot_splat_reproduces_single_tile() {
        let lib = TextureTileLibrary::palette(&["grass".into(), "rock".into()]);
        let splat = two_channel_splat(16, 16, 1.0);
        let img = composite_texture(&splat, &lib, 32, 32, 0.5).unwrap();
        let grass = category_color("grass");
        for c in img.data {
            assert_eq!(c, grass);
        }
    }

    #[test]
    fn even_blend_averages_constant_tiles() {
        let lib = TextureTileLibrary::palette(&["grass".into(), "rock".into()]);
        let splat = two_channel_splat(16, 16, 0.5);
        let img = composite_texture(&splat, &lib, 16, 16, 0.5).unwrap();
        let a = category_color("grass");
        let b = category_color("rock");
        for c in img.data {
            for d in 0..3 {
                assert!((c[d] - 0.5 * (a[d] + b[d])).abs() <= 1.0 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn missing_tile_is_an_error() {
        let lib = TextureTileLibrary::palette(&["grass".into()]);
        let splat = two_channel_splat(8, 8, 0.5);
        assert!(matches!(
            composite_texture(&splat, &lib, 8, 8, 0.5),
            Err(IsoError::MissingTile(cat)) if cat == "rock"
        ));
    }

    #[test]
    fn fixture_composite_matches_bev_colors() {
        let scene = fixture::generate_random_scene(11, &FixtureConfig::default()).unwrap();
        let lib = TextureTileLibrary::palette(&scene.splat.channel_categories);
        let (bev_color, _) = fixture::render_bev(&scene);
        let w = scene.splat.width();
        let h = scene.splat.height();
        let img = composite_texture(&scene.splat, &lib, w, h, scene.terrain.cell_size).unwrap();
        let mut mae = 0.0f64;
        for (x, y) in img.iter_coords() {
            let a = img.get(x, y);
            let b = bev_color.get(x, y);
            for d in 0..3 {
                mae += (a[d] - b[d]).abs() as f64;
            }
        }
        mae /= (w * h * 3) as f64;
        assert!(mae <= 2.0 / 255.0, "mae {mae}");
    }

    #[test]
    fn zero_density_scatters_nothing() {
        let mut lib = TextureTileLibrary::palette(&["grass".into()]);
        lib.categories.get_mut("grass").unwrap().scatter[0].density = 0.0;
        let hm = flat_heightmap(21, 21, 1.0);
        let splat = Splatmap {
            channels: vec![Grid::filled(21, 21, 1.0)],
            channel_categories: vec!["grass".into()],
        };
        assert!(scatter_vegetation(&splat, &hm, &lib, 3).is_empty());
    }

    #[test]
    fn scatter_count_tracks_density() {
        let mut lib = TextureTileLibrary::palette(&["grass".into()]);
        lib.categories.get_mut("grass").unwrap().scatter[0].density = 0.1;
        let hm = flat_heightmap(101, 101, 1.0);
        let splat = Splatmap {
            channels: vec![Grid::filled(101, 101, 1.0)],
            channel_categories: vec!["grass".into()],
        };
        for seed in 0..20u64 {
            let n = scatter_vegetation(&splat, &hm, &lib, seed).len() as f64;
            assert!((n - 1000.0).abs() <= 100.0, "seed {seed}: {n}");
        }
    }

    #[test]
    fn scatter_is_deterministic_and_on_surface() {
        let scene = fixture::generate_random_scene(5, &FixtureConfig::default()).unwrap();
        let lib = TextureTileLibrary::palette(&scene.splat.channel_categories);
        let a = scatter_vegetation(&scene.splat, &scene.terrain, &lib, 42);
        let b = scatter_vegetation(&scene.splat, &scene.terrain, &lib, 42);
        assert_eq!(a, b);
        assert!(!a.is_empty());
        for inst in &a {
            let truth = scene.terrain.elevation_at(inst.position[0], inst.position[1]);
            assert!((inst.position[2] - truth).abs() <= 1e-3);
        }
        let c = scatter_vegetation(&scene.splat, &scene.terrain, &lib, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn placed_building_has_requested_extents() {
        let lib = TextureTileLibrary::palette(&["grass".into()]);
        let placement = ObjectPlacement {
            instance_id: 0,
            category: "building".into(),
            footprint: Footprint::new([10.0, 20.0], [14.0, 26.0]),
            height: 3.0,
            base_elevation: 1.5,
            asset_ref: "box".into(),
        };
        let (placed, diags) = place_objects(&[placement], &lib);
        assert!(diags.is_empty());
        let (lo, hi) = placed[0].world_aabb(&lib.meshes["box"]);
        for (d, expect) in [(0usize, 4.0), (1, 6.0), (2, 3.0)] {
            assert!((hi[d] - lo[d] - expect).abs() <= 1e-6);
        }
        assert!((lo[2] - 1.5).abs() <= 1e-6);
    }

    #[test]
    fn unknown_category_falls_back_to_box() {
        let lib = TextureTileLibrary::palette(&["grass".into()]);
        let placement = ObjectPlacement {
            instance_id: 7,
            category: "statue".into(),
            footprint: Footprint::new([0.0, 0.0], [1.0, 1.0]),
            height: 1.0,
            base_elevation: 0.0,
            asset_ref: "statue".into(),
        };
        let (placed, diags) = place_objects(&[placement], &lib);
        assert_eq!(placed[0].mesh_key, "box");
        assert_eq!(diags.len(), 1);
        assert!(diags[0].contains("instance 7"));
    }

    #[test]
    fn disjoint_footprints_give_disjoint_ground_aabbs() {
        let lib = TextureTileLibrary::palette(&["grass".into()]);
        let mk = |min: [f64; 2], max: [f64; 2]| ObjectPlacement {
            instance_id: 0,
            category: "building".into(),
            footprint: Footprint::new(min, max),
            height: 2.0,
            base_elevation: 0.0,
            asset_ref: "box".into(),
        };
        let (placed, _) = place_objects(
            &[mk([0.0, 0.0], [3.0, 3.0]), mk([5.0, 5.0], [8.0, 9.0])],
            &lib,
        );
        let (lo0, hi0) = placed[0].world_aabb(&lib.meshes["box"]);
        let (lo1, hi1) = placed[1].world_aabb(&lib.meshes["box"]);
        let disjoint = hi0[0] < lo1[0] || hi1[0] < lo0[0] || hi0[1] < lo1[1] || hi1[1] < lo0[1];
        assert!(disjoint);
    }
}
