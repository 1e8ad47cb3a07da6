//! Deterministic binary glTF 2.0 writer plus a structural validator used
//! by the exporter's self-check and the test suite.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::json;

use crate::error::{IsoError, Result};
use crate::io;
use crate::scene::SceneDescriptor;

use super::{MeshData, PlacedObject, ScatterInstance};

/// Everything the exporter writes: geometry, instances and the scene
/// descriptor that produced them.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub terrain: MeshData,
    pub objects: Vec<PlacedObject>,
    pub scatter: Vec<ScatterInstance>,
    /// Proxy meshes by key; must contain "box".
    pub meshes: BTreeMap<String, MeshData>,
    pub descriptor: SceneDescriptor,
    pub diagnostics: Vec<String>,
}

const GLB_MAGIC: u32 = 0x46546C67;
const CHUNK_JSON: u32 = 0x4E4F534A;
const CHUNK_BIN: u32 = 0x004E4942;

struct BinBuilder {
    bytes: Vec<u8>,
    views: Vec<serde_json::Value>,
    accessors: Vec<serde_json::Value>,
}

impl BinBuilder {
    fn push_vec_attr(&mut self, data: &[[f32; 3]], with_bounds: bool) -> usize {
        let offset = self.bytes.len();
        for v in data {
            for c in v {
                self.bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        self.views.push(json!({
            "buffer": 0,
            "byteOffset": offset,
            "byteLength": data.len() * 12,
            "target": 34962,
        }));
        let mut acc = json!({
            "bufferView": self.views.len() - 1,
            "componentType": 5126,
            "count": data.len(),
            "type": "VEC3",
        });
        if with_bounds {
            let mut lo = [f32::INFINITY; 3];
            let mut hi = [f32::NEG_INFINITY; 3];
            for v in data {
                for d in 0..3 {
                    lo[d] = lo[d].min(v[d]);
                    hi[d] = hi[d].max(v[d]);
                }
            }
            acc["min"] = json!(lo);
            acc["max"] = json!(hi);
        }
        self.accessors.push(acc);
        self.accessors.len() - 1
    }

    fn push_uvs(&mut self, data: &[[f32; 2]]) -> usize {
        let offset = self.bytes.len();
        for v in data {
            for c in v {
                self.bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        self.views.push(json!({
            "buffer": 0,
            "byteOffset": offset,
            "byteLength": data.len() * 8,
            "target": 34962,
        }));
        self.accessors.push(json!({
            "bufferView": self.views.len() - 1,
            "componentType": 5126,
            "count": data.len(),
            "type": "VEC2",
        }));
        self.accessors.len() - 1
    }

    fn push_indices(&mut self, data: &[u32]) -> usize {
        let offset = self.bytes.len();
        for i in data {
            self.bytes.extend_from_slice(&i.to_le_bytes());
        }
        self.views.push(json!({
            "buffer": 0,
            "byteOffset": offset,
            "byteLength": data.len() * 4,
            "target": 34963,
        }));
        self.accessors.push(json!({
            "bufferView": self.views.len() - 1,
            "componentType": 5125,
            "count": data.len(),
            "type": "SCALAR",
        }));
        self.accessors.len() - 1
    }
}

fn node_json(name: &str, mesh: usize, t: [f64; 3], yaw: f64, scale: [f64; 3]) -> serde_json::Value {
    let (s, c) = (yaw * 0.5).sin_cos();
    json!({
        "name": name,
        "mesh": mesh,
        "translation": [t[0] as f32, t[1] as f32, t[2] as f32],
        "rotation": [0.0, 0.0, s as f32, c as f32],
        "scale": [scale[0] as f32, scale[1] as f32, scale[2] as f32],
    })
}

fn build_glb(bundle: &SceneBundle) -> Result<Vec<u8>> {
    bundle.terrain.self_check("terrain")?;

    // Mesh slot 0 is the terrain; proxy meshes follow in key order, only
    // the ones actually referenced.
    let mut used: Vec<&str> = Vec::new();
    fn resolve<'a>(meshes: &BTreeMap<String, MeshData>, key: &'a str) -> &'a str {
        if meshes.contains_key(key) {
            key
        } else {
            "box"
        }
    }
    for obj in &bundle.objects {
        used.push(resolve(&bundle.meshes, &obj.mesh_key));
    }
    for inst in &bundle.scatter {
        used.push(resolve(&bundle.meshes, &inst.asset_kind));
    }
    used.sort_unstable();
    used.dedup();
    let mut mesh_index = BTreeMap::new();
    for key in &used {
        let mesh = bundle
            .meshes
            .get(*key)
            .ok_or_else(|| IsoError::MeshCheck(format!("missing proxy mesh '{key}'")))?;
        mesh.self_check(key)?;
        mesh_index.insert(key.to_string(), mesh_index.len() + 1);
    }

    let mut bin = BinBuilder {
        bytes: Vec::new(),
        views: Vec::new(),
        accessors: Vec::new(),
    };
    let mut meshes_json = Vec::new();
    let mut emit_mesh = |bin: &mut BinBuilder, name: &str, mesh: &MeshData| {
        let pos = bin.push_vec_attr(&mesh.positions, true);
        let nrm = bin.push_vec_attr(&mesh.normals, false);
        let uv = bin.push_uvs(&mesh.uvs);
        let idx = bin.push_indices(&mesh.indices);
        meshes_json.push(json!({
            "name": name,
            "primitives": [{
                "attributes": {"POSITION": pos, "NORMAL": nrm, "TEXCOORD_0": uv},
                "indices": idx,
                "mode": 4,
            }],
        }));
    };
    emit_mesh(&mut bin, "terrain", &bundle.terrain);
    for key in &used {
        emit_mesh(&mut bin, key, &bundle.meshes[*key]);
    }

    let mut nodes = vec![json!({"name": "terrain", "mesh": 0})];
    for obj in &bundle.objects {
        nodes.push(node_json(
            &format!("object_{}", obj.instance_id),
            mesh_index[resolve(&bundle.meshes, &obj.mesh_key)],
            obj.translation,
            obj.yaw,
            obj.scale,
        ));
    }
    for (i, inst) in bundle.scatter.iter().enumerate() {
        nodes.push(node_json(
            &format!("scatter_{i}"),
            mesh_index[resolve(&bundle.meshes, &inst.asset_kind)],
            inst.position,
            inst.yaw,
            [inst.scale; 3],
        ));
    }
    let node_ids: Vec<usize> = (0..nodes.len()).collect();

    while bin.bytes.len() % 4 != 0 {
        bin.bytes.push(0);
    }
    let doc = json!({
        "asset": {"version": "2.0", "generator": "isoscene"},
        "buffers": [{"byteLength": bin.bytes.len()}],
        "bufferViews": bin.views,
        "accessors": bin.accessors,
        "meshes": meshes_json,
        "nodes": nodes,
        "scenes": [{"name": "scene", "nodes": node_ids}],
        "scene": 0,
    });
    let mut doc_bytes = serde_json::to_vec(&doc)?;
    while doc_bytes.len() % 4 != 0 {
        doc_bytes.push(b' ');
    }

    let total = 12 + 8 + doc_bytes.len() + 8 + bin.bytes.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&GLB_MAGIC.to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(doc_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&doc_bytes);
    out.extend_from_slice(&(bin.bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
    out.extend_from_slice(&bin.bytes);
    Ok(out)
}

/// Writes the full bundle: `scene.glb`, `scene.json`, `heightmap.png`,
/// per-channel splat PNGs and `diagnostics.json`. The geometry self-check
/// runs before anything touches disk.
pub fn export_scene(dir: &Path, bundle: &SceneBundle) -> Result<()> {
    let glb = build_glb(bundle)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scene.glb"), &glb)?;
    io::write_descriptor(&dir.join("scene.json"), &bundle.descriptor)?;
    io::write_heightmap_png(&dir.join("heightmap.png"), &bundle.descriptor.terrain)?;
    io::write_splatmap(dir, &bundle.descriptor.splat)?;
    io::write_json(&dir.join("diagnostics.json"), &bundle.diagnostics)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlbSummary {
    pub node_count: usize,
    pub mesh_count: usize,
    pub triangle_count: usize,
}

fn bad(msg: impl ToString) -> IsoError {
    IsoError::MeshCheck(msg.to_string())
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let chunk = bytes
        .get(at..at + 4)
        .ok_or_else(|| bad("glb truncated"))?;
    Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
}

/// Parses a GLB byte stream and re-runs the structural checks: chunk
/// layout, accessor ranges, index bounds, unit normals, finite positions.
pub fn validate_glb(bytes: &[u8]) -> Result<GlbSummary> {
    if read_u32(bytes, 0)? != GLB_MAGIC || read_u32(bytes, 4)? != 2 {
        return Err(bad("not a glb v2 container"));
    }
    if read_u32(bytes, 8)? as usize != bytes.len() {
        return Err(bad("glb length field mismatch"));
    }
    let json_len = read_u32(bytes, 12)? as usize;
    if read_u32(bytes, 16)? != CHUNK_JSON {
        return Err(bad("first chunk is not JSON"));
    }
    let json_end = 20 + json_len;
    let doc: serde_json::Value = serde_json::from_slice(
        bytes.get(20..json_end).ok_or_else(|| bad("glb truncated"))?,
    )
    .map_err(|e| bad(format!("glb JSON chunk: {e}")))?;
    let bin_len = read_u32(bytes, json_end)? as usize;
    if read_u32(bytes, json_end + 4)? != CHUNK_BIN {
        return Err(bad("second chunk is not BIN"));
    }
    let bin = bytes
        .get(json_end + 8..json_end + 8 + bin_len)
        .ok_or_else(|| bad("glb truncated"))?;

    let views = doc["bufferViews"]
        .as_array()
        .ok_or_else(|| bad("missing bufferViews"))?;
    let accessors = doc["accessors"]
        .as_array()
        .ok_or_else(|| bad("missing accessors"))?;
    let slice_of = |acc_idx: usize| -> Result<(&[u8], usize, &str)> {
        let acc = accessors.get(acc_idx).ok_or_else(|| bad("accessor index"))?;
        let view = views
            .get(acc["bufferView"].as_u64().unwrap_or(u64::MAX) as usize)
            .ok_or_else(|| bad("bufferView index"))?;
        let off = view["byteOffset"].as_u64().unwrap_or(0) as usize;
        let len = view["byteLength"].as_u64().unwrap_or(0) as usize;
        let data = bin
            .get(off..off + len)
            .ok_or_else(|| bad("bufferView outside BIN chunk"))?;
        let count = acc["count"].as_u64().ok_or_else(|| bad("accessor count"))? as usize;
        let ty = acc["type"].as_str().unwrap_or("");
        Ok((data, count, ty))
    };
    let read_f32 = |data: &[u8], i: usize| f32::from_le_bytes(data[i * 4..i * 4 + 4].try_into().unwrap());

    let meshes = doc["meshes"].as_array().ok_or_else(|| bad("missing meshes"))?;
    let mut triangle_count = 0usize;
    for mesh in meshes {
        for prim in mesh["primitives"].as_array().ok_or_else(|| bad("primitives"))? {
            let pos_idx = prim["attributes"]["POSITION"]
                .as_u64()
                .ok_or_else(|| bad("POSITION accessor"))? as usize;
            let (pos, vcount, pty) = slice_of(pos_idx)?;
            if pty != "VEC3" || pos.len() < vcount * 12 {
                return Err(bad("POSITION accessor shape"));
            }
            for i in 0..vcount * 3 {
                if !read_f32(pos, i).is_finite() {
                    return Err(bad("non-finite position"));
                }
            }
            let nrm_idx = prim["attributes"]["NORMAL"]
                .as_u64()
                .ok_or_else(|| bad("NORMAL accessor"))? as usize;
            let (nrm, ncount, _) = slice_of(nrm_idx)?;
            if ncount != vcount {
                return Err(bad("normal count mismatch"));
            }
            for i in 0..ncount {
                let n = [
                    read_f32(nrm, 3 * i) as f64,
                    read_f32(nrm, 3 * i + 1) as f64,
                    read_f32(nrm, 3 * i + 2) as f64,
                ];
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if (len - 1.0).abs() > 1e-6 {
                    return Err(bad(format!("normal length {len}")));
                }
            }
            let idx_idx = prim["indices"].as_u64().ok_or_else(|| bad("indices"))? as usize;
            let (idx, icount, _) = slice_of(idx_idx)?;
            if icount % 3 != 0 || idx.len() < icount * 4 {
                return Err(bad("index accessor shape"));
            }
            for i in 0..icount {
                let v = u32::from_le_bytes(idx[i * 4..i * 4 + 4].try_into().unwrap());
                if v as usize >= vcount {
                    return Err(bad(format!("index {v} out of range")));
                }
            }
            triangle_count += icount / 3;
        }
    }
    let nodes = doc["nodes"].as_array().ok_or_else(|| bad("missing nodes"))?;
    for node in nodes {
        let mesh = node["mesh"].as_u64().ok_or_else(|| bad("node without mesh"))? as usize;
        if mesh >= meshes.len() {
            return Err(bad("node mesh index out of range"));
        }
    }
    Ok(GlbSummary {
        node_count: nodes.len(),
        mesh_count: meshes.len(),
        triangle_count,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{
        place_objects, scatter_vegetation, terrain_mesh, TextureTileLibrary,
    };
    use super::*;
    use crate::fixture::{self, FixtureConfig};
    use tempfile::tempdir;

    fn fixture_bundle(seed: u64) -> SceneBundle {
        let scene = fixture::generate_random_scene(seed, &FixtureConfig::default()).unwrap();
        let lib = TextureTileLibrary::palette(&scene.splat.channel_categories);
        let terrain = terrain_mesh(&scene.terrain).unwrap();
        let (objects, diagnostics) = place_objects(&scene.objects, &lib);
        let scatter = scatter_vegetation(&scene.splat, &scene.terrain, &lib, scene.rng_seed);
        SceneBundle {
            terrain,
            objects,
            scatter,
            meshes: lib.meshes,
            descriptor: scene,
            diagnostics,
        }
    }

    #[test]
    fn minimal_flat_scene_glb_validates() {
        let scene = fixture::generate_random_scene(
            1,
            &FixtureConfig {
                bump_count: 0,
                object_count: 0,
                water_region: false,
                ..Default::default()
            },
        )
        .unwrap();
        let lib = TextureTileLibrary::palette(&scene.splat.channel_categories);
        let bundle = SceneBundle {
            terrain: terrain_mesh(&scene.terrain).unwrap(),
            objects: Vec::new(),
            scatter: Vec::new(),
            meshes: lib.meshes,
            descriptor: scene,
            diagnostics: Vec::new(),
        };
        let glb = build_glb(&bundle).unwrap();
        let summary = validate_glb(&glb).unwrap();
        assert_eq!(summary.node_count, 1);
    }

    #[test]
    fn export_twice_is_byte_identical() {
        let bundle = fixture_bundle(21);
        let a = build_glb(&bundle).unwrap();
        let b = build_glb(&bundle).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn node_count_matches_instances() {
        let bundle = fixture_bundle(22);
        let summary = validate_glb(&build_glb(&bundle).unwrap()).unwrap();
        assert_eq!(
            summary.node_count,
            1 + bundle.objects.len() + bundle.scatter.len()
        );
        assert!(!bundle.objects.is_empty());
        assert!(!bundle.scatter.is_empty());
    }

    #[test]
    fn broken_normals_fail_before_write() {
        let mut bundle = fixture_bundle(23);
        bundle.terrain.normals[7] = [0.5, 0.0, 0.0];
        let dir = tempdir().unwrap();
        match export_scene(dir.path(), &bundle) {
            Err(IsoError::MeshCheck(msg)) => assert!(msg.contains("terrain")),
            other => panic!("expected mesh check failure, got {other:?}"),
        }
        assert!(!dir.path().join("scene.glb").exists());
    }

    #[test]
    fn export_writes_full_bundle() {
        let bundle = fixture_bundle(24);
        let dir = tempdir().unwrap();
        export_scene(dir.path(), &bundle).unwrap();
        for name in ["scene.glb", "scene.json", "heightmap.png", "splat.json", "diagnostics.json"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let glb = fs::read(dir.path().join("scene.glb")).unwrap();
        validate_glb(&glb).unwrap();
    }
}
