//! Scene understanding: turns rendered isometric frames back into terrain,
//! splat and object-placement estimates.

mod basemap;
mod bev;
mod objects;

pub use basemap::complete_basemap;
pub use bev::{
    extract_bev, extract_heightmap, extract_splatmap, lower_water, region_water_level,
    BevExtraction,
};
pub use objects::{
    build_placements, estimate_footprint, estimate_height, mask_bbox, PlacementOutcome,
};

use crate::camera::ground_rectify_map;
use crate::error::Result;
use crate::grid::Grid;
use crate::scene::IsometricFrame;

/// Ground recovery for a frame with objects: unprojects only the pixels
/// that show actual ground, recovers object placements, then restores the
/// cells hidden behind each instance. Occluded cells under a recovered
/// footprint are pinned to the object's base elevation — an object rests
/// on locally flat ground, which neighbor diffusion alone cannot infer —
/// and the remaining shadow cells are re-diffused with those pads as
/// extra boundary data.
pub fn recover_terrain(
    frame: &IsometricFrame,
    semantic: &Grid<u8>,
    cell_size: f64,
) -> Result<(BevExtraction, PlacementOutcome)> {
    let fg = frame.foreground_mask();
    let mut ground = frame.depth.clone();
    for (x, y) in fg.iter_coords() {
        if *fg.get(x, y) {
            ground.valid.set(x, y, false);
        }
    }
    let mut bev = extract_bev(&ground, semantic, &frame.camera, cell_size)?;
    let rect = ground_rectify_map(&frame.camera);
    let placements = build_placements(frame, &bev.heightmap, &rect, &frame.camera);

    let hm = &mut bev.heightmap;
    let mut anchored = bev.observed.clone();
    let coords: Vec<(usize, usize)> = anchored.iter_coords().collect();
    for p in &placements.placements {
        for &(i, j) in &coords {
            if *bev.observed.get(i, j) {
                continue;
            }
            let x = hm.origin[0] + i as f64 * cell_size;
            let y = hm.origin[1] + j as f64 * cell_size;
            let f = &p.footprint;
            if x >= f.min[0] && x <= f.max[0] && y >= f.min[1] && y <= f.max[1] {
                hm.values.set(i, j, p.base_elevation - hm.datum);
                anchored.set(i, j, true);
            }
        }
    }
    bev::diffuse_holes(&mut hm.values, &anchored);
    Ok((bev, placements))
}
