//! File formats: PNG rasters with JSON sidecars and JSON documents for
//! descriptors, placements and diagnostics. All writers are deterministic.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::camera::{DepthMap, IsometricCamera};
use crate::error::{IsoError, Result};
use crate::grid::{Grid, MaskGrid};
use crate::scene::{Heightmap, InstanceMask, IsometricFrame, SceneDescriptor, Splatmap};
use crate::sketch::SketchMap;

fn parse_err(path: &Path, message: impl ToString) -> IsoError {
    IsoError::Parse {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

pub fn write_color_png(path: &Path, color: &Grid<[f32; 3]>) -> Result<()> {
    let img: RgbImage = ImageBuffer::from_fn(color.width as u32, color.height as u32, |x, y| {
        let c = color.get(x as usize, y as usize);
        Rgb([
            (c[0].clamp(0.0, 1.0) * 255.0).round() as u8,
            (c[1].clamp(0.0, 1.0) * 255.0).round() as u8,
            (c[2].clamp(0.0, 1.0) * 255.0).round() as u8,
        ])
    });
    img.save(path)?;
    Ok(())
}

pub fn read_color_png(path: &Path) -> Result<Grid<[f32; 3]>> {
    let img = image::open(path).map_err(|e| parse_err(path, e))?.to_rgb8();
    Ok(Grid::from_fn(
        img.width() as usize,
        img.height() as usize,
        |x, y| {
            let p = img.get_pixel(x as u32, y as u32);
            [
                p[0] as f32 / 255.0,
                p[1] as f32 / 255.0,
                p[2] as f32 / 255.0,
            ]
        },
    ))
}

/// Depth sidecar: quantization range plus the camera-plane offset. Code
/// value 0 marks invalid pixels; valid depths occupy 1..=65535.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub min: f64,
    pub max: f64,
    pub plane_offset: f64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, &v) in depth.values.data.iter().enumerate() {
        if depth.valid.data[i] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let span = (hi - lo).max(1e-12);
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(
        depth.values.width as u32,
        depth.values.height as u32,
        |x, y| {
            let (x, y) = (x as usize, y as usize);
            if !*depth.valid.get(x, y) {
                return Luma([0u16]);
            }
            let t = (depth.values.get(x, y) - lo) / span;
            Luma([1 + (t.clamp(0.0, 1.0) * 65534.0).round() as u16])
        },
    );
    img.save(path)?;
    write_json(
        &sidecar_path(path),
        &DepthSidecar {
            min: lo,
            max: hi,
            plane_offset: depth.plane_offset,
        },
    )
}

pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let sidecar: DepthSidecar = read_json(&sidecar_path(path))?;
    let img = image::open(path).map_err(|e| parse_err(path, e))?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut depth = DepthMap::new(w, h, sidecar.plane_offset);
    let span = (sidecar.max - sidecar.min).max(1e-12);
    for y in 0..h {
        for x in 0..w {
            let code = img.get_pixel(x as u32, y as u32)[0];
            if code == 0 {
                continue;
            }
            let t = (code - 1) as f64 / 65534.0;
            depth.values.set(x, y, sidecar.min + t * span);
            depth.valid.set(x, y, true);
        }
    }
    Ok(depth)
}

pub fn write_semantic_png(path: &Path, semantic: &Grid<u8>) -> Result<()> {
    let img = GrayImage::from_fn(semantic.width as u32, semantic.height as u32, |x, y| {
        Luma([*semantic.get(x as usize, y as usize)])
    });
    img.save(path)?;
    Ok(())
}

pub fn read_semantic_png(path: &Path) -> Result<Grid<u8>> {
    let img = image::open(path).map_err(|e| parse_err(path, e))?.to_luma8();
    Ok(Grid::from_fn(
        img.width() as usize,
        img.height() as usize,
        |x, y| img.get_pixel(x as u32, y as u32)[0],
    ))
}

pub fn write_mask_png(path: &Path, mask: &MaskGrid) -> Result<()> {
    let img = GrayImage::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([if *mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    img.save(path)?;
    Ok(())
}

pub fn read_mask_png(path: &Path) -> Result<MaskGrid> {
    let img = image::open(path).map_err(|e| parse_err(path, e))?.to_luma8();
    Ok(Grid::from_fn(
        img.width() as usize,
        img.height() as usize,
        |x, y| img.get_pixel(x as u32, y as u32)[0] >= 128,
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceEntry {
    id: u32,
    category: String,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameManifest {
    camera: IsometricCamera,
    categories: Vec<String>,
    instances: Vec<InstanceEntry>,
}

/// Writes a frame as `color.png`, `depth.png` (+ `depth.json`),
/// `semantic.png`, one mask PNG per instance and a `frame.json` manifest.
pub fn write_frame(dir: &Path, frame: &IsometricFrame) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_color_png(&dir.join("color.png"), &frame.color)?;
    write_depth_png(&dir.join("depth.png"), &frame.depth)?;
    write_semantic_png(&dir.join("semantic.png"), &frame.semantic)?;
    let mut instances = Vec::new();
    for inst in &frame.instances {
        let file = format!("instance_{}.png", inst.id);
        write_mask_png(&dir.join(&file), &inst.mask)?;
        instances.push(InstanceEntry {
            id: inst.id,
            category: inst.category.clone(),
            file,
        });
    }
    write_json(
        &dir.join("frame.json"),
        &FrameManifest {
            camera: frame.camera.clone(),
            categories: frame.categories.clone(),
            instances,
        },
    )
}

pub fn read_frame(dir: &Path) -> Result<IsometricFrame> {
    let manifest: FrameManifest = read_json(&dir.join("frame.json"))?;
    let color = read_color_png(&dir.join("color.png"))?;
    let depth = read_depth_png(&dir.join("depth.png"))?;
    let semantic = read_semantic_png(&dir.join("semantic.png"))?;
    if !color.same_shape(&semantic) || !color.same_shape(&depth.values) {
        return Err(parse_err(dir, "frame rasters disagree in size"));
    }
    let mut instances = Vec::new();
    for entry in manifest.instances {
        let mask = read_mask_png(&dir.join(&entry.file))?;
        if !mask.same_shape(&color) {
            return Err(parse_err(&dir.join(&entry.file), "instance mask size mismatch"));
        }
        instances.push(InstanceMask {
            id: entry.id,
            category: entry.category,
            mask,
        });
    }
    Ok(IsometricFrame {
        color,
        depth,
        semantic,
        categories: manifest.categories,
        instances,
        camera: manifest.camera,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeightmapSidecar {
    pub datum: f64,
    pub cell_size: f64,
    pub origin: [f64; 2],
    pub min: f64,
    pub max: f64,
}

pub fn write_heightmap_png(path: &Path, hm: &Heightmap) -> Result<()> {
    let (lo, hi) = hm.values.min_max();
    let span = (hi - lo).max(1e-12);
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(hm.values.width as u32, hm.values.height as u32, |x, y| {
            let t = (hm.values.get(x as usize, y as usize) - lo) / span;
            Luma([(t.clamp(0.0, 1.0) * 65535.0).round() as u16])
        });
    img.save(path)?;
    write_json(
        &sidecar_path(path),
        &HeightmapSidecar {
            datum: hm.datum,
            cell_size: hm.cell_size,
            origin: hm.origin,
            min: lo,
            max: hi,
        },
    )
}

pub fn read_heightmap_png(path: &Path) -> Result<Heightmap> {
    let sidecar: HeightmapSidecar = read_json(&sidecar_path(path))?;
    let img = image::open(path).map_err(|e| parse_err(path, e))?.to_luma16();
    let span = (sidecar.max - sidecar.min).max(1e-12);
    let values = Grid::from_fn(img.width() as usize, img.height() as usize, |x, y| {
        sidecar.min + img.get_pixel(x as u32, y as u32)[0] as f64 / 65535.0 * span
    });
    Ok(Heightmap {
        values,
        cell_size: sidecar.cell_size,
        datum: sidecar.datum,
        origin: sidecar.origin,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplatManifest {
    channel_categories: Vec<String>,
    files: Vec<String>,
}

/// Writes `splat_<k>.png` per channel plus `splat.json`.
pub fn write_splatmap(dir: &Path, splat: &Splatmap) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (k, ch) in splat.channels.iter().enumerate() {
        let file = format!("splat_{k}.png");
        let img = GrayImage::from_fn(ch.width as u32, ch.height as u32, |x, y| {
            Luma([(ch.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
        });
        img.save(dir.join(&file))?;
        files.push(file);
    }
    write_json(
        &dir.join("splat.json"),
        &SplatManifest {
            channel_categories: splat.channel_categories.clone(),
            files,
        },
    )
}

pub fn read_splatmap(dir: &Path) -> Result<Splatmap> {
    let manifest: SplatManifest = read_json(&dir.join("splat.json"))?;
    if manifest.files.len() != manifest.channel_categories.len() {
        return Err(parse_err(&dir.join("splat.json"), "channel/file count mismatch"));
    }
    let mut channels = Vec::new();
    for file in &manifest.files {
        let path = dir.join(file);
        let img = image::open(&path).map_err(|e| parse_err(&path, e))?.to_luma8();
        channels.push(Grid::from_fn(
            img.width() as usize,
            img.height() as usize,
            |x, y| img.get_pixel(x as u32, y as u32)[0] as f64 / 255.0,
        ));
    }
    let mut splat = Splatmap {
        channels,
        channel_categories: manifest.channel_categories,
    };
    splat.renormalize();
    Ok(splat)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SketchManifest {
    categories: Vec<String>,
}

/// One PNG per channel named `<category>.png` plus a category-order manifest.
pub fn write_sketch(dir: &Path, sketch: &SketchMap) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (k, name) in sketch.category_names.iter().enumerate() {
        write_mask_png(&dir.join(format!("{name}.png")), &sketch.channels[k])?;
    }
    write_json(
        &dir.join("sketch.json"),
        &SketchManifest {
            categories: sketch.category_names.clone(),
        },
    )
}

pub fn read_sketch(dir: &Path) -> Result<SketchMap> {
    let manifest: SketchManifest = read_json(&dir.join("sketch.json"))?;
    let mut channels = Vec::new();
    for name in &manifest.categories {
        channels.push(read_mask_png(&dir.join(format!("{name}.png")))?);
    }
    Ok(SketchMap {
        channels,
        category_names: manifest.categories,
    })
}

pub fn write_descriptor(path: &Path, scene: &SceneDescriptor) -> Result<()> {
    write_json(path, scene)
}

pub fn read_descriptor(path: &Path) -> Result<SceneDescriptor> {
    read_json(path)
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}
