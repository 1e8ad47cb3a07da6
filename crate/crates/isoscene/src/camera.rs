//! Isometric (orthographic) camera model, ground-plane rectification and
//! depth unprojection.
//!
//! The camera looks along -(1,1,1)/sqrt(3) toward the origin with +Z as world
//! up and image y growing downward. Under this projection the three world
//! axes render with equal pixel length and pairwise 120 degree angles, and
//! the ground plane (Z = 0) maps to the image by an invertible affine map.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, MaskGrid};

/// Image-right basis vector of the camera, world coords.
pub const CAM_RIGHT: [f64; 3] = [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2, 0.0];

/// View direction (camera forward), world coords: -(1,1,1)/sqrt(3).
pub fn forward_axis() -> Vector3<f64> {
    -Vector3::new(1.0, 1.0, 1.0) / 3.0_f64.sqrt()
}

fn right_axis() -> Vector3<f64> {
    Vector3::new(1.0, -1.0, 0.0) / 2.0_f64.sqrt()
}

fn up_axis() -> Vector3<f64> {
    Vector3::new(-1.0, -1.0, 2.0) / 6.0_f64.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometricCamera {
    pub pixels_per_world_unit: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub principal_point: [f64; 2],
}

impl IsometricCamera {
    pub fn new(
        pixels_per_world_unit: f64,
        image_width: usize,
        image_height: usize,
        principal_point: [f64; 2],
    ) -> Self {
        assert!(pixels_per_world_unit > 0.0);
        Self {
            pixels_per_world_unit,
            image_width,
            image_height,
            principal_point,
        }
    }

    /// Smallest camera covering the world-space axis-aligned box
    /// [0,extent.x] x [0,extent.y] x [0,extent.z] inside the given image,
    /// with a margin in pixels.
    pub fn fit_bounds(
        extent: Vector3<f64>,
        image_width: usize,
        image_height: usize,
        margin_px: f64,
    ) -> Self {
        let mut lo = Vector2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vector2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let probe = Self::new(1.0, image_width, image_height, [0.0, 0.0]);
        for corner in 0..8 {
            let p = Vector3::new(
                if corner & 1 != 0 { extent.x } else { 0.0 },
                if corner & 2 != 0 { extent.y } else { 0.0 },
                if corner & 4 != 0 { extent.z } else { 0.0 },
            );
            let q = project(p, &probe);
            lo = lo.inf(&q);
            hi = hi.sup(&q);
        }
        let span = hi - lo;
        let sx = (image_width as f64 - 2.0 * margin_px) / span.x;
        let sy = (image_height as f64 - 2.0 * margin_px) / span.y;
        let scale = sx.min(sy);
        let center = (lo + hi) * 0.5 * scale;
        Self::new(
            scale,
            image_width,
            image_height,
            [
                image_width as f64 * 0.5 - center.x,
                image_height as f64 * 0.5 - center.y,
            ],
        )
    }
}

/// Forward-axis depth raster aligned with a rendered image.
///
/// `plane_offset` is the distance from the world origin to the image plane
/// along +(1,1,1)/sqrt(3); depth is measured from that plane along the view
/// direction so that world point recovery is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub values: Grid<f64>,
    pub valid: MaskGrid,
    pub plane_offset: f64,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, plane_offset: f64) -> Self {
        Self {
            values: Grid::filled(width, height, 0.0),
            valid: Grid::filled(width, height, false),
            plane_offset,
        }
    }
}

/// Affine map between image pixels and ground-plane world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundRectifyMap {
    /// image px -> ground (X, Y), row-major 2x3.
    pub forward: [[f64; 3]; 2],
    /// ground (X, Y) -> image px, row-major 2x3.
    pub inverse: [[f64; 3]; 2],
}

fn apply_affine(m: &[[f64; 3]; 2], p: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(
        m[0][0] * p.x + m[0][1] * p.y + m[0][2],
        m[1][0] * p.x + m[1][1] * p.y + m[1][2],
    )
}

impl GroundRectifyMap {
    /// Image pixel -> ground-plane (X, Y) in world units.
    pub fn rectify(&self, pixel: Vector2<f64>) -> Vector2<f64> {
        apply_affine(&self.forward, pixel)
    }

    /// Ground-plane (X, Y) -> image pixel.
    pub fn unrectify(&self, ground: Vector2<f64>) -> Vector2<f64> {
        apply_affine(&self.inverse, ground)
    }
}

/// Orthographic projection of a world point to pixel coordinates.
pub fn project(point: Vector3<f64>, cam: &IsometricCamera) -> Vector2<f64> {
    let s = cam.pixels_per_world_unit;
    Vector2::new(
        cam.principal_point[0] + s * point.dot(&right_axis()),
        cam.principal_point[1] - s * point.dot(&up_axis()),
    )
}

/// Forward-axis depth of a world point for a camera plane at `plane_offset`.
pub fn point_depth(point: Vector3<f64>, plane_offset: f64) -> f64 {
    let g = Vector3::new(1.0, 1.0, 1.0) / 3.0_f64.sqrt();
    plane_offset - point.dot(&g)
}

/// Ground rectification: pixel of (X, Y, 0) maps back to exactly (X, Y).
///
/// Composition of the 45 degree view rotation and anisotropic scaling;
/// exact for ground-plane points, affine everywhere.
pub fn ground_rectify_map(cam: &IsometricCamera) -> GroundRectifyMap {
    let s = cam.pixels_per_world_unit;
    let (cx, cy) = (cam.principal_point[0], cam.principal_point[1]);
    // Pixel of (X, Y, 0): px = cx + s(X-Y)/sqrt(2), py = cy + s(X+Y)/sqrt(6).
    let a = s / 2.0_f64.sqrt();
    let b = s / 6.0_f64.sqrt();
    // Invert: X = ((px-cx)/a + (py-cy)/b)/2, Y = ((py-cy)/b - (px-cx)/a)/2.
    let forward = [
        [0.5 / a, 0.5 / b, -0.5 * (cx / a + cy / b)],
        [-0.5 / a, 0.5 / b, 0.5 * (cx / a - cy / b)],
    ];
    let inverse = [[a, -a, cx], [b, b, cy]];
    GroundRectifyMap { forward, inverse }
}

/// Vertical image pixels per world height unit: pixels_per_world_unit * 2/sqrt(6).
pub fn height_pixels_per_unit(cam: &IsometricCamera) -> f64 {
    cam.pixels_per_world_unit * 2.0 / 6.0_f64.sqrt()
}

/// One unprojected sample: a world point plus the pixel it came from, so
/// callers can attach attributes from aligned rasters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnprojectedPoint {
    pub position: Vector3<f64>,
    pub pixel: (usize, usize),
}

/// World point for one pixel at the given forward-axis depth.
pub fn unproject_pixel(
    px: f64,
    py: f64,
    depth: f64,
    plane_offset: f64,
    cam: &IsometricCamera,
) -> Vector3<f64> {
    let s = cam.pixels_per_world_unit;
    let a = (px - cam.principal_point[0]) / s;
    let b = -(py - cam.principal_point[1]) / s;
    let g = Vector3::new(1.0, 1.0, 1.0) / 3.0_f64.sqrt();
    let origin = a * right_axis() + b * up_axis() + plane_offset * g;
    origin + depth * forward_axis()
}

/// One 3D point per valid depth pixel. An empty validity mask yields an
/// empty point set.
pub fn unproject_depth(depth: &DepthMap, cam: &IsometricCamera) -> Vec<UnprojectedPoint> {
    let mut points = Vec::new();
    for y in 0..depth.values.height {
        for x in 0..depth.values.width {
            if !*depth.valid.get(x, y) {
                continue;
            }
            let d = *depth.values.get(x, y);
            let position =
                unproject_pixel(x as f64 + 0.5, y as f64 + 0.5, d, depth.plane_offset, cam);
            points.push(UnprojectedPoint {
                position,
                pixel: (x, y),
            });
        }
    }
    points
}
