//! Subcommand orchestration: `fixture`, `understand`, `assemble`,
//! `pipeline` and `diffusion-lab`. Exit codes: 0 success, 2 config error,
//! 3 input parse error, 4 stage failure. Errors are reported as JSON on
//! stderr so downstream tooling never has to scrape log text.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::assemble::{
    composite_texture, place_objects, scatter_vegetation, terrain_mesh, CategoryAssets,
    MeshData, ScatterRule, SceneBundle, TextureTileLibrary,
};
use crate::config::PipelineConfig;
use crate::diffusion::oracle::{ancestral_sample, fit_linear_predictor};
use crate::diffusion::sud::{SudTrainer, SudTrainerConfig};
use crate::diffusion::DiffusionSchedule;
use crate::error::{IsoError, Result};
use crate::fixture;
use crate::grid::Grid;
use crate::io;
use crate::scene::{ObjectPlacement, SceneDescriptor, WaterRegion};
use crate::sketch::{sal_weights, SketchMap};
use crate::understand::{
    complete_basemap, extract_splatmap, lower_water, recover_terrain,
};

#[derive(Parser)]
#[command(name = "isoscene", version, about = "Isometric frame to 3D scene compiler")]
struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene plus rendered frame and BEV truth.
    Fixture,
    /// Recover heightmap, splatmap and object placements from a frame.
    Understand {
        /// Directory holding a rendered frame (frame.json et al.).
        #[arg(long)]
        frame: PathBuf,
    },
    /// Compile understanding outputs into a glTF scene bundle.
    Assemble {
        /// Directory with heightmap/splat/placement artifacts.
        #[arg(long = "in")]
        input: PathBuf,
        /// Asset library manifest (JSON); defaults to the built-in palette.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// fixture -> understand -> assemble in one run.
    Pipeline {
        /// Use an existing frame directory instead of generating a fixture.
        #[arg(long)]
        frame: Option<PathBuf>,
    },
    /// Train the desk-scale denoiser and emit metrics JSON.
    DiffusionLab {
        #[arg(long = "schedule-T")]
        schedule_t: Option<usize>,
        #[arg(long)]
        unroll: bool,
        #[arg(long)]
        unroll_start: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        sal_sigma: Option<f64>,
    },
}

fn exit_code(err: &IsoError) -> i32 {
    match err {
        IsoError::Config(_) => 2,
        IsoError::Parse { .. } => 3,
        IsoError::Stage { source, .. } => exit_code(source),
        _ => 4,
    }
}

fn report(stage: &str, err: &IsoError) {
    eprintln!(
        "{}",
        json!({"stage": stage, "error": err.to_string()})
    );
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match PipelineConfig::from_file(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                report("config", &e);
                return exit_code(&e);
            }
        },
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Cmd::DiffusionLab {
        schedule_t,
        unroll,
        unroll_start,
        samples,
        ..
    } = &cli.cmd
    {
        if let Some(t) = schedule_t {
            cfg.schedule_t = *t;
        }
        if *unroll {
            cfg.unroll = true;
        }
        if let Some(f) = unroll_start {
            cfg.unroll_start = *f;
        }
        if let Some(n) = samples {
            cfg.samples = *n;
        }
    }
    if let Err(e) = cfg.validate() {
        report("config", &e);
        return exit_code(&e);
    }

    let result: (&str, Result<()>) = match &cli.cmd {
        Cmd::Fixture => ("fixture", cmd_fixture(&cfg, &cfg.out_dir)),
        Cmd::Understand { frame } => ("understand", cmd_understand(&cfg, frame, &cfg.out_dir)),
        Cmd::Assemble { input, manifest } => (
            "assemble",
            cmd_assemble(&cfg, input, manifest.as_deref(), &cfg.out_dir),
        ),
        Cmd::Pipeline { frame } => ("pipeline", cmd_pipeline(&cfg, frame.as_deref())),
        Cmd::DiffusionLab { sal_sigma, .. } => (
            "diffusion-lab",
            cmd_diffusion_lab(&cfg, sal_sigma.unwrap_or(cfg.sal_sigma), &cfg.out_dir),
        ),
    };
    match result.1 {
        Ok(()) => 0,
        Err(e) => {
            report(result.0, &e);
            exit_code(&e)
        }
    }
}

/// Renders the fixture scene and writes the frame, ground-truth descriptor
/// and BEV references under `out`.
pub fn cmd_fixture(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let scene = fixture::generate_random_scene(cfg.seed, &cfg.fixture)?;
    let cam = fixture::camera_for_scene(&scene, cfg.frame_width, cfg.frame_height);
    let frame = fixture::render_isometric(&scene, &cam)?;
    let (bev_color, _) = fixture::render_bev(&scene);
    fs::create_dir_all(out)?;
    io::write_frame(&out.join("frame"), &frame)?;
    io::write_descriptor(&out.join("scene.json"), &scene)?;
    io::write_color_png(&out.join("bev_color.png"), &bev_color)?;
    io::write_heightmap_png(&out.join("bev_height.png"), &scene.terrain)?;
    Ok(())
}

/// Connected water-labeled BEV components become rectangular regions; the
/// fixture's basins are axis-aligned, so a bounding rectangle is faithful.
fn detect_water_regions(
    semantic: &Grid<u8>,
    table: &BTreeMap<u8, String>,
    cell_size: f64,
    origin: [f64; 2],
) -> Vec<WaterRegion> {
    let water: Vec<u8> = table
        .iter()
        .filter(|(_, name)| name.as_str() == "water")
        .map(|(&l, _)| l)
        .collect();
    if water.is_empty() {
        return Vec::new();
    }
    let (w, h) = (semantic.width, semantic.height);
    let mut seen = Grid::filled(w, h, false);
    let mut regions = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if *seen.get(sx, sy) || !water.contains(semantic.get(sx, sy)) {
                continue;
            }
            let mut queue = vec![(sx, sy)];
            seen.set(sx, sy, true);
            let (mut i0, mut j0, mut i1, mut j1) = (sx, sy, sx, sy);
            let mut count = 0usize;
            while let Some((x, y)) = queue.pop() {
                count += 1;
                i0 = i0.min(x);
                i1 = i1.max(x);
                j0 = j0.min(y);
                j1 = j1.max(y);
                let mut push = |nx: usize, ny: usize, seen: &mut Grid<bool>| {
                    if !*seen.get(nx, ny) && water.contains(semantic.get(nx, ny)) {
                        seen.set(nx, ny, true);
                        queue.push((nx, ny));
                    }
                };
                if x > 0 {
                    push(x - 1, y, &mut seen);
                }
                if x + 1 < w {
                    push(x + 1, y, &mut seen);
                }
                if y > 0 {
                    push(x, y - 1, &mut seen);
                }
                if y + 1 < h {
                    push(x, y + 1, &mut seen);
                }
            }
            if count < 4 {
                continue; // speckle, not a basin
            }
            let half = cell_size * 0.5;
            let x0 = origin[0] + i0 as f64 * cell_size - half;
            let x1 = origin[0] + i1 as f64 * cell_size + half;
            let y0 = origin[1] + j0 as f64 * cell_size - half;
            let y1 = origin[1] + j1 as f64 * cell_size + half;
            regions.push(WaterRegion {
                polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
                water_level: 0.0, // recomputed from the rim during lowering
            });
        }
    }
    regions
}

/// Frame -> basemap completion -> BEV heightmap -> water lowering ->
/// splatmap -> placements. Per-instance failures are diagnostics, not
/// fatal errors.
pub fn cmd_understand(cfg: &PipelineConfig, frame_dir: &Path, out: &Path) -> Result<()> {
    let frame = io::read_frame(frame_dir)?;
    let fg = frame.foreground_mask();
    let completed = complete_basemap(&frame, &fg)?;
    let (bev, outcome) = recover_terrain(&frame, &completed.semantic, cfg.bev_cell_size)?;

    let mut table = BTreeMap::new();
    for &label in &bev.semantic.data {
        table.entry(label).or_insert_with(|| {
            frame
                .categories
                .get(label as usize)
                .cloned()
                .unwrap_or_else(|| format!("label{label}"))
        });
    }

    let mut diagnostics = Vec::new();
    let regions = detect_water_regions(
        &bev.semantic,
        &table,
        bev.heightmap.cell_size,
        bev.heightmap.origin,
    );
    let heightmap = match lower_water(&bev.heightmap, &regions, cfg.water_bed_offset) {
        Ok(hm) => hm,
        Err(e) => {
            diagnostics.push(format!("water lowering skipped: {e}"));
            bev.heightmap.clone()
        }
    };
    let splat = extract_splatmap(&bev.semantic, &table, cfg.splat_feather)?;
    diagnostics.extend(outcome.diagnostics);

    fs::create_dir_all(out)?;
    io::write_heightmap_png(&out.join("heightmap.png"), &heightmap)?;
    io::write_splatmap(out, &splat)?;
    io::write_json(&out.join("placements.json"), &outcome.placements)?;
    io::write_json(&out.join("water.json"), &regions)?;
    io::write_json(&out.join("diagnostics.json"), &diagnostics)?;
    Ok(())
}

#[derive(serde::Deserialize)]
struct ManifestCategory {
    #[serde(default)]
    color: Option<[f32; 3]>,
    #[serde(default)]
    tile_files: Vec<PathBuf>,
    #[serde(default = "default_tile_size")]
    tile_world_size: f64,
    #[serde(default)]
    scatter: Vec<ScatterRule>,
}

fn default_tile_size() -> f64 {
    4.0
}

#[derive(serde::Deserialize)]
struct AssetManifest {
    categories: BTreeMap<String, ManifestCategory>,
    #[serde(default)]
    meshes: BTreeMap<String, PathBuf>,
}

/// JSON asset manifest -> texture/mesh library. Relative paths resolve
/// against the manifest's directory; the "box" proxy is always available.
pub fn load_asset_manifest(path: &Path) -> Result<TextureTileLibrary> {
    let manifest: AssetManifest = io::read_json_file(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lib = TextureTileLibrary::palette(&[]);
    for (name, entry) in manifest.categories {
        let mut tiles = Vec::new();
        for file in &entry.tile_files {
            tiles.push(io::read_color_png(&base.join(file))?);
        }
        if tiles.is_empty() {
            let color = entry
                .color
                .unwrap_or_else(|| crate::scene::category_color(&name));
            tiles.push(Grid::filled(8, 8, color));
        }
        lib.categories.insert(
            name,
            CategoryAssets {
                tiles,
                tile_world_size: entry.tile_world_size,
                scatter: entry.scatter,
            },
        );
    }
    for (key, file) in manifest.meshes {
        let mesh: MeshData = io::read_json_file(&base.join(file))?;
        lib.meshes.insert(key, mesh);
    }
    Ok(lib)
}

fn library_for(
    cfg: &PipelineConfig,
    manifest: Option<&Path>,
    categories: &[String],
) -> Result<(TextureTileLibrary, BTreeMap<String, String>)> {
    let explicit = manifest.or(cfg.asset_manifest.as_deref());
    let mut assignments = BTreeMap::new();
    let lib = match explicit {
        Some(path) => {
            if !path.exists() {
                return Err(IsoError::Config(format!(
                    "asset manifest not found: {}",
                    path.display()
                )));
            }
            let mut lib = load_asset_manifest(path)?;
            for cat in categories {
                if !lib.categories.contains_key(cat) {
                    // Fill gaps from the palette so missing entries do not abort.
                    let fallback = TextureTileLibrary::palette(std::slice::from_ref(cat));
                    lib.categories
                        .insert(cat.clone(), fallback.categories[cat].clone());
                }
                assignments.insert(cat.clone(), format!("manifest:{}", path.display()));
            }
            lib
        }
        None => {
            for cat in categories {
                assignments.insert(cat.clone(), "palette".to_string());
            }
            TextureTileLibrary::palette(categories)
        }
    };
    Ok((lib, assignments))
}

/// Understanding artifacts -> terrain mesh, composite ground texture,
/// scatter and placed proxies, exported as a glTF bundle under `out`.
pub fn cmd_assemble(
    cfg: &PipelineConfig,
    input: &Path,
    manifest: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let heightmap = io::read_heightmap_png(&input.join("heightmap.png"))?;
    let splat = io::read_splatmap(input)?;
    let placements: Vec<ObjectPlacement> = io::read_json_file(&input.join("placements.json"))?;
    let water_path = input.join("water.json");
    let water_regions: Vec<WaterRegion> = if water_path.exists() {
        io::read_json_file(&water_path)?
    } else {
        Vec::new()
    };

    let (lib, texture_assignments) = library_for(cfg, manifest, &splat.channel_categories)?;
    let terrain = terrain_mesh(&heightmap)?;
    let tex_w = splat.width() * 2;
    let tex_h = splat.height() * 2;
    let texture = composite_texture(&splat, &lib, tex_w, tex_h, heightmap.cell_size)?;
    let scatter = scatter_vegetation(&splat, &heightmap, &lib, cfg.seed);
    let (objects, diagnostics) = place_objects(&placements, &lib);

    let descriptor = SceneDescriptor {
        terrain: heightmap,
        water_regions,
        objects: placements,
        splat,
        texture_assignments,
        rng_seed: cfg.seed,
    };
    let bundle = SceneBundle {
        terrain,
        objects,
        scatter,
        meshes: lib.meshes,
        descriptor,
        diagnostics,
    };
    crate::assemble::export_scene(out, &bundle)?;
    io::write_color_png(&out.join("ground_texture.png"), &texture)?;
    Ok(())
}

/// All three stages in sequence under one output directory; the first
/// failing stage aborts the run.
pub fn cmd_pipeline(cfg: &PipelineConfig, frame: Option<&Path>) -> Result<()> {
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    let frame_dir = match frame {
        Some(dir) => dir.to_path_buf(),
        None => {
            let fixture_out = out.join("fixture");
            cmd_fixture(cfg, &fixture_out)
                .map_err(|e| stage_error("fixture", e))?;
            fixture_out.join("frame")
        }
    };
    let understand_out = out.join("understand");
    cmd_understand(cfg, &frame_dir, &understand_out)
        .map_err(|e| stage_error("understand", e))?;
    cmd_assemble(cfg, &understand_out, None, &out.join("scene"))
        .map_err(|e| stage_error("assemble", e))?;
    Ok(())
}

fn stage_error(stage: &str, err: IsoError) -> IsoError {
    IsoError::Stage {
        stage: stage.to_string(),
        source: Box::new(err),
    }
}

/// Trains the desk-scale denoiser, fits the per-bin linear predictor and
/// draws ancestral samples; everything lands in `metrics.json`.
pub fn cmd_diffusion_lab(cfg: &PipelineConfig, sal_sigma: f64, out: &Path) -> Result<()> {
    let schedule =
        DiffusionSchedule::linear(cfg.schedule_t, cfg.alpha_bar_start, cfg.alpha_bar_end);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let dataset: Vec<f64> = (0..4096)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z
        })
        .collect();

    let trainer_cfg = SudTrainerConfig {
        samples_per_epoch: cfg.samples,
        unroll: cfg.unroll,
        unroll_start: cfg.unroll_start,
        seed: cfg.seed,
        ..Default::default()
    };
    let mut trainer = SudTrainer::new(schedule.clone(), trainer_cfg);
    let final_loss = trainer.train(&dataset)?;

    let fitted = fit_linear_predictor(&dataset, &schedule, 8, cfg.samples.max(1000), cfg.seed)?;
    let draws = ancestral_sample(&fitted, &schedule, cfg.seed.wrapping_add(1), 2000);
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);

    // Small synthetic sketch so the metrics also record the loss-weight
    // field statistics at the requested blur width.
    let sketch = SketchMap::new(
        vec![Grid::from_fn(32, 32, |x, y| {
            (x as i32 - 16).pow(2) + (y as i32 - 16).pow(2) < 64
        })],
        vec!["water".into()],
    );
    let omega = sal_weights(&sketch, sal_sigma);
    let (omega_min, omega_max) = omega.weights.min_max();

    let metrics = json!({
        "schedule_t": cfg.schedule_t,
        "unroll": cfg.unroll,
        "unroll_start": cfg.unroll_start,
        "samples": cfg.samples,
        "seed": cfg.seed,
        "final_loss": final_loss,
        "loss_curve": trainer.loss_curve,
        "trained_coefficients": trainer.coefficients,
        "fitted_coefficients": fitted.coefficients,
        "sampling": {"n": draws.len(), "mean": mean, "variance": var},
        "sal": {"sigma": sal_sigma, "omega_min": omega_min, "omega_max": omega_max},
    });
    fs::create_dir_all(out)?;
    io::write_json(&out.join("metrics.json"), &metrics)?;
    Ok(())
}
