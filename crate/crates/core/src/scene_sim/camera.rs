//! Pinhole projection and silhouette rendering.

use serde::{Deserialize, Serialize};

use super::{Lighting, SceneConfig, SceneFrame, Vehicle};
use crate::error::{Error, Result};
use crate::grid::{GrayGrid, MaskGrid};

/// Closest depth (meters) a point may have and still be projected.
const MIN_DEPTH: f64 = 1e-3;

/// Camera at `(0, 0, height)` looking along +y with the image x axis along
/// world +x and the image y axis pointing down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub focal: f64,
    pub height: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    pub fn from_config(cfg: &SceneConfig) -> Self {
        Self {
            focal: cfg.focal_length,
            height: cfg.camera_height,
            cx: cfg.image_width as f64 / 2.0,
            cy: cfg.image_height as f64 / 2.0,
        }
    }

    pub fn project(&self, p: [f64; 3]) -> Result<(f64, f64)> {
        let depth = p[1];
        if depth < MIN_DEPTH {
            return Err(Error::Projection(format!(
                "point ({:.2}, {:.2}, {:.2}) is behind the camera",
                p[0], p[1], p[2]
            )));
        }
        Ok((
            self.cx + self.focal * p[0] / depth,
            self.cy + self.focal * (self.height - p[2]) / depth,
        ))
    }
}

/// Axis-aligned box in pixel coordinates, stored as center and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBBox {
    pub x_c: f64,
    pub y_c: f64,
    pub w: f64,
    pub h: f64,
}

impl PixelBBox {
    pub fn from_edges(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x_c: (x0 + x1) / 2.0,
            y_c: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// `(x0, y0, x1, y1)`.
    pub fn edges(&self) -> (f64, f64, f64, f64) {
        (
            self.x_c - self.w / 2.0,
            self.y_c - self.h / 2.0,
            self.x_c + self.w / 2.0,
            self.y_c + self.h / 2.0,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, y0, x1, y1) = self.edges();
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }
}

pub fn project_corners(vehicle: &Vehicle, camera: &Camera) -> Result<[(f64, f64); 8]> {
    let mut out = [(0.0, 0.0); 8];
    for (slot, corner) in out.iter_mut().zip(vehicle.corners()) {
        *slot = camera.project(corner)?;
    }
    Ok(out)
}

fn hull_bbox(points: &[(f64, f64)], width: f64, height: f64) -> Result<PixelBBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(u, v) in points {
        x0 = x0.min(u);
        y0 = y0.min(v);
        x1 = x1.max(u);
        y1 = y1.max(v);
    }
    let (x0, y0) = (x0.max(0.0), y0.max(0.0));
    let (x1, y1) = (x1.min(width), y1.min(height));
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::Projection("vehicle does not intersect the image".into()));
    }
    Ok(PixelBBox::from_edges(x0, y0, x1, y1))
}

/// Axis-aligned hull of the transmitter's projected corners, clipped to the image.
pub fn project_bbox(frame: &SceneFrame, cfg: &SceneConfig) -> Result<PixelBBox> {
    let camera = Camera::from_config(cfg);
    let pts = project_corners(&frame.transmitter, &camera)?;
    hull_bbox(&pts, cfg.image_width as f64, cfg.image_height as f64)
}

/// Counter-clockwise convex hull (monotone chain); collinear points dropped.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_convex(hull: &[(f64, f64)], x: f64, y: f64) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0) >= 0.0
    })
}

/// Calls `paint(x, y)` for every pixel whose center lies inside the
/// vehicle's projected silhouette.
fn for_each_silhouette_pixel(
    vehicle: &Vehicle,
    camera: &Camera,
    width: usize,
    height: usize,
    mut paint: impl FnMut(usize, usize),
) -> Result<()> {
    let pts = project_corners(vehicle, camera)?;
    let hull = convex_hull(&pts);
    let Ok(bbox) = hull_bbox(&pts, width as f64, height as f64) else {
        return Ok(());
    };
    let (x0, y0, x1, y1) = bbox.edges();
    let xs = (x0.floor() as usize)..(x1.ceil() as usize).min(width);
    for y in (y0.floor() as usize)..(y1.ceil() as usize).min(height) {
        for x in xs.clone() {
            if inside_convex(&hull, x as f64 + 0.5, y as f64 + 0.5) {
                paint(x, y);
            }
        }
    }
    Ok(())
}

/// Filled silhouette of the transmitter only.
pub fn render_mask(frame: &SceneFrame, cfg: &SceneConfig) -> Result<MaskGrid> {
    let camera = Camera::from_config(cfg);
    let (w, h) = (cfg.image_width, cfg.image_height);
    // surfaces the behind-camera / off-image errors of the transmitter itself
    project_bbox(frame, cfg)?;
    let mut mask = MaskGrid::filled(w, h, 0);
    for_each_silhouette_pixel(&frame.transmitter, &camera, w, h, |x, y| mask.set(x, y, 1))?;
    Ok(mask)
}

/// Background intensity at image row `y`: a vertical gradient whose level
/// depends on lighting.
pub fn background_level(y: usize, height: usize, lighting: Lighting) -> f32 {
    let t = (y as f32 + 0.5) / height as f32;
    match lighting {
        Lighting::Day => 0.85 - 0.45 * t,
        Lighting::Night => 0.30 - 0.22 * t,
    }
}

/// Background gradient plus every vehicle silhouette at its own gray level,
/// painted far to near. The transmitter is not distinguished.
pub fn render_raster(frame: &SceneFrame, cfg: &SceneConfig) -> Result<GrayGrid> {
    project_bbox(frame, cfg)?;
    let vehicles: Vec<&Vehicle> = std::iter::once(&frame.transmitter)
        .chain(&frame.distractors)
        .collect();
    render_vehicles(&vehicles, cfg)
}

/// Raster of an arbitrary vehicle set over the lighting background.
pub fn render_vehicles(vehicles: &[&Vehicle], cfg: &SceneConfig) -> Result<GrayGrid> {
    let camera = Camera::from_config(cfg);
    let (w, h) = (cfg.image_width, cfg.image_height);
    let mut raster = GrayGrid::filled(w, h, 0.0);
    for y in 0..h {
        let level = background_level(y, h, cfg.lighting);
        raster.data_mut()[y * w..(y + 1) * w].fill(level);
    }
    let mut order = vehicles.to_vec();
    order.sort_by(|a, b| b.range().total_cmp(&a.range()));
    for v in order {
        let gray = v.gray as f32;
        for_each_silhouette_pixel(v, &camera, w, h, |x, y| raster.set(x, y, gray))?;
    }
    Ok(raster)
}
