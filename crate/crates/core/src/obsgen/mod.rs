//! Synthetic observations: per-pixel mask, descriptor image and camera-from-local frame image
//! rendered from a model at a ground-truth pose, with noise, outliers and occluders.

pub mod raster;

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use raster::{rasterize, ZBuffer};

use crate::error::{Error, Result};
use crate::rotkit::{CameraIntrinsics, Pose, Rotation};
use crate::symmodel::{SymModel, SymmetrySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub fx_px: f64,
    pub fy_px: f64,
    pub cx_px: f64,
    pub cy_px: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl CameraConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics<f64>> {
        CameraIntrinsics::new(self.fx_px, self.fy_px, self.cx_px, self.cy_px, self.width_px, self.height_px)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseConfig {
    /// Object-to-camera rotation as a rotation vector.
    pub rotation_rotvec_rad: [f64; 3],
    pub translation_m: [f64; 3],
}

impl PoseConfig {
    pub fn from_pose(p: &Pose<f64>) -> Self {
        Self { rotation_rotvec_rad: p.rotation.to_axis_angle().into(), translation_m: p.translation.into() }
    }

    pub fn pose(&self) -> Pose<f64> {
        Pose::new(Rotation::from_axis_angle(&Vector3::from(self.rotation_rotvec_rad)), Vector3::from(self.translation_m))
    }
}

fn default_crop() -> u32 {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub camera: CameraConfig,
    pub gt_pose: PoseConfig,
    #[serde(default = "default_crop")]
    pub crop_width_px: u32,
    #[serde(default = "default_crop")]
    pub crop_height_px: u32,
    /// Angle of the descriptor perturbation on the unit hypersphere.
    #[serde(default)]
    pub noise_desc_rad: f64,
    /// Scale of the folded-normal rotation angle applied to local frames.
    #[serde(default)]
    pub noise_frame_rad: f64,
    /// Width of the silhouette band whose pixels are randomly toggled.
    #[serde(default)]
    pub noise_mask_px: u32,
    /// Polygon in crop pixel coordinates; pixels whose centers fall inside are removed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occluder_polygon_px: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub outlier_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.intrinsics()?;
        let noise = [self.noise_desc_rad, self.noise_frame_rad];
        if noise.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("noise levels must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return Err(Error::InvalidArgument("outlier_rate must lie in [0, 1)".into()));
        }
        if self.crop_width_px == 0 || self.crop_height_px == 0 {
            return Err(Error::InvalidArgument("crop size must be positive".into()));
        }
        if self.gt_pose.translation_m.iter().chain(&self.gt_pose.rotation_rotvec_rad).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("gt_pose must be finite".into()));
        }
        if let Some(poly) = &self.occluder_polygon_px {
            if poly.len() < 3 || poly.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("occluder polygon needs >= 3 finite vertices".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash_hex(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Crop intrinsics and top-left corner for a crop centered on the projected object origin.
pub fn crop_for(camera: &CameraIntrinsics<f64>, pose: &Pose<f64>, width: u32, height: u32) -> Result<(CameraIntrinsics<f64>, [i64; 2])> {
    let c = camera.project_camera_point(&pose.translation).map_err(|_| Error::ObjectOutOfFrame)?;
    let x0 = (c.x - width as f64 / 2.0).round() as i64;
    let y0 = (c.y - height as f64 / 2.0).round() as i64;
    Ok((camera.crop(x0, y0, width, height), [x0, y0]))
}

/// Every mesh vertex must project inside both the full image and the crop.
fn check_in_frame(model: &SymModel, camera: &CameraIntrinsics<f64>, crop: &CameraIntrinsics<f64>, pose: &Pose<f64>) -> Result<()> {
    for v in model.mesh().vertices() {
        let p = pose.transform(v);
        if p.z <= 0.0 {
            return Err(Error::NonPositiveDepth(p.z));
        }
        for k in [camera, crop] {
            let q = k.project_camera_point(&p)?;
            if !(q.x >= 0.0 && q.y >= 0.0 && q.x < k.width as f64 && q.y < k.height as f64) {
                return Err(Error::ObjectOutOfFrame);
            }
        }
    }
    Ok(())
}

/// Binary crop mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    pub width: u32,
    pub height: u32,
    pub crop_origin: [i64; 2],
    pub data: Vec<bool>,
}

impl MaskImage {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

pub fn render_mask_only(model: &SymModel, camera: &CameraIntrinsics<f64>, pose: &Pose<f64>, crop: [u32; 2]) -> Result<MaskImage> {
    let (kc, origin) = crop_for(camera, pose, crop[0], crop[1])?;
    check_in_frame(model, camera, &kc, pose)?;
    let zb = rasterize(model.mesh(), &kc, pose)?;
    Ok(MaskImage { width: kc.width, height: kc.height, crop_origin: origin, data: zb.triangle.iter().map(|&t| t != raster::NO_TRIANGLE).collect() })
}

/// Model point indices visible under `pose` through `camera`.
pub fn visible_points(model: &SymModel, camera: &CameraIntrinsics<f64>, pose: &Pose<f64>) -> Result<Vec<usize>> {
    raster::visible_point_indices(model.mesh(), model.points(), camera, pose)
}

/// Hidden evaluation data attached to an observation; per-mask-pixel vectors follow `Observation::pixels`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub pose: Pose<f64>,
    pub symmetry: SymmetrySpec,
    /// Nearest model point to the surface hit, `None` for pixels added by mask noise.
    pub points: Vec<Option<usize>>,
    /// Object-frame surface hit point.
    pub surface_points: Vec<Option<Vector3<f64>>>,
    pub outlier: Vec<bool>,
    /// Rendered mask before mask noise and occlusion.
    pub clean_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    camera: CameraIntrinsics<f64>,
    crop_origin: [i64; 2],
    dim: usize,
    pixels: Vec<[u32; 2]>,
    lookup: Vec<u32>,
    descriptors: Vec<f64>,
    frames: Vec<Rotation<f64>>,
    gt: GroundTruth,
}

const NONE: u32 = u32::MAX;

impl Observation {
    /// Assembles an observation; `pixels` must be distinct and inside the crop.
    pub fn from_parts(
        camera: CameraIntrinsics<f64>,
        crop_origin: [i64; 2],
        pixels: Vec<[u32; 2]>,
        descriptors: Vec<f64>,
        frames: Vec<Rotation<f64>>,
        gt: GroundTruth,
    ) -> Result<Self> {
        let n = pixels.len();
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        if frames.len() != n || descriptors.len() % n != 0 || gt.points.len() != n || gt.surface_points.len() != n || gt.outlier.len() != n {
            return Err(Error::InvalidArgument("per-pixel channel lengths disagree".into()));
        }
        let (w, h) = (camera.width, camera.height);
        let mut lookup = vec![NONE; (w * h) as usize];
        for (i, &[u, v]) in pixels.iter().enumerate() {
            if u >= w || v >= h {
                return Err(Error::InvalidArgument(format!("pixel ({u}, {v}) outside the crop")));
            }
            let slot = &mut lookup[(v * w + u) as usize];
            if *slot != NONE {
                return Err(Error::InvalidArgument(format!("duplicate pixel ({u}, {v})")));
            }
            *slot = i as u32;
        }
        let dim = descriptors.len() / n;
        Ok(Self { camera, crop_origin, dim, pixels, lookup, descriptors, frames, gt })
    }

    /// Crop intrinsics.
    pub fn camera(&self) -> &CameraIntrinsics<f64> {
        &self.camera
    }

    pub fn crop_origin(&self) -> [i64; 2] {
        self.crop_origin
    }

    pub fn width(&self) -> u32 {
        self.camera.width
    }

    pub fn height(&self) -> u32 {
        self.camera.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mask pixels `(u, v)` in row-major order.
    pub fn pixels(&self) -> &[[u32; 2]] {
        &self.pixels
    }

    pub fn mask_len(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixel_index(&self, u: u32, v: u32) -> Option<usize> {
        if u >= self.width() || v >= self.height() {
            return None;
        }
        let i = self.lookup[(v * self.width() + u) as usize];
        (i != NONE).then_some(i as usize)
    }

    pub fn in_mask(&self, u: u32, v: u32) -> bool {
        self.pixel_index(u, v).is_some()
    }

    /// Mask pixel index under continuous image location `(x, y)` (nearest pixel).
    pub fn pixel_at(&self, x: f64, y: f64) -> Option<usize> {
        if !(x >= 0.0 && y >= 0.0 && x < self.width() as f64 && y < self.height() as f64) {
            return None;
        }
        self.pixel_index(x.floor() as u32, y.floor() as u32)
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        &self.descriptors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frame(&self, i: usize) -> &Rotation<f64> {
        &self.frames[i]
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.gt
    }

    pub fn mask_image(&self) -> MaskImage {
        MaskImage {
            width: self.width(),
            height: self.height(),
            crop_origin: self.crop_origin,
            data: self.lookup.iter().map(|&i| i != NONE).collect(),
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Rotation with uniform axis and folded-normal angle of scale `sigma`.
pub fn frame_noise(rng: &mut ChaCha8Rng, sigma: f64) -> Rotation<f64> {
    let axis = Vector3::from_vec(random_unit(rng, 3));
    let angle = (rng.sample::<f64, _>(StandardNormal) * sigma).abs();
    Rotation::about_axis(&axis, angle)
}

/// Rotates `d` by a folded-normal angle of scale `sigma` toward a uniform tangent direction.
pub fn perturb_descriptor(rng: &mut ChaCha8Rng, d: &[f64], sigma: f64) -> Vec<f64> {
    let g = random_unit(rng, d.len());
    let angle = (rng.sample::<f64, _>(StandardNormal) * sigma).abs();
    let proj: f64 = g.iter().zip(d).map(|(a, b)| a * b).sum();
    let mut t: Vec<f64> = g.iter().zip(d).map(|(a, b)| a - proj * b).collect();
    let tn = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if tn < 1e-12 {
        return d.to_vec();
    }
    t.iter_mut().for_each(|x| *x /= tn);
    let (s, c) = angle.sin_cos();
    d.iter().zip(&t).map(|(a, b)| c * a + s * b).collect()
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[(i + n - 1) % n];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

struct RawPixel {
    descriptor: Vec<f64>,
    frame: Rotation<f64>,
    point: Option<usize>,
    surface: Option<Vector3<f64>>,
    outlier: bool,
}

const STREAM_DESC: u64 = 1;
const STREAM_FRAME: u64 = 2;
const STREAM_MASK: u64 = 3;
const STREAM_OUTLIER: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

pub fn render(model: &SymModel, config: &ScenarioConfig) -> Result<Observation> {
    config.validate()?;
    let camera = config.camera.intrinsics()?;
    let pose = config.gt_pose.pose();
    let (kc, origin) = crop_for(&camera, &pose, config.crop_width_px, config.crop_height_px)?;
    check_in_frame(model, &camera, &kc, &pose)?;
    let zb = rasterize(model.mesh(), &kc, &pose)?;
    let (w, h) = (kc.width, kc.height);
    let inv = pose.inverse();
    let r_gt = pose.rotation;

    let mut rng_desc = stream(config.seed, STREAM_DESC);
    let mut rng_frame = stream(config.seed, STREAM_FRAME);
    let mut rng_out = stream(config.seed, STREAM_OUTLIER);
    let mut raw: Vec<Option<RawPixel>> = Vec::with_capacity((w * h) as usize);
    for v in 0..h {
        for u in 0..w {
            let idx = (v * w + u) as usize;
            if zb.triangle[idx] == raster::NO_TRIANGLE {
                raw.push(None);
                continue;
            }
            let ray = Vector3::new((u as f64 + 0.5 - kc.cx) / kc.fx, (v as f64 + 0.5 - kc.cy) / kc.fy, 1.0);
            let hit = inv.transform(&(ray * zb.depth[idx]));
            let hx = model.nearest(&hit);
            let mut descriptor = if config.noise_desc_rad > 0.0 {
                perturb_descriptor(&mut rng_desc, model.descriptor(hx), config.noise_desc_rad)
            } else {
                model.descriptor(hx).to_vec()
            };
            let clean = r_gt * model.frame(hx).inverse();
            let mut frame = if config.noise_frame_rad > 0.0 { frame_noise(&mut rng_frame, config.noise_frame_rad) * clean } else { clean };
            let outlier = config.outlier_rate > 0.0 && rng_out.random::<f64>() < config.outlier_rate;
            if outlier {
                descriptor = random_unit(&mut rng_out, model.dim());
                frame = Rotation::random(&mut rng_out);
            }
            raw.push(Some(RawPixel { descriptor, frame, point: Some(hx), surface: Some(hit), outlier }));
        }
    }
    let clean_mask: Vec<bool> = raw.iter().map(Option::is_some).collect();
    if !clean_mask.iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }

    let mut mask = clean_mask.clone();
    if config.noise_mask_px > 0 {
        perturb_mask(&mut mask, w, h, config.noise_mask_px, &mut stream(config.seed, STREAM_MASK));
    }
    if let Some(poly) = &config.occluder_polygon_px {
        for v in 0..h {
            for u in 0..w {
                if point_in_polygon(poly, u as f64 + 0.5, v as f64 + 0.5) {
                    mask[(v * w + u) as usize] = false;
                }
            }
        }
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::EmptyMaskAfterOcclusion);
    }
    let source = nearest_source(&clean_mask, w, h);

    let mut pixels = Vec::new();
    let mut descriptors = Vec::new();
    let mut frames = Vec::new();
    let mut gt_points = Vec::new();
    let mut gt_surface = Vec::new();
    let mut gt_outlier = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let idx = (v * w + u) as usize;
            if !mask[idx] {
                continue;
            }
            pixels.push([u, v]);
            match &raw[idx] {
                Some(p) => {
                    descriptors.extend_from_slice(&p.descriptor);
                    frames.push(p.frame);
                    gt_points.push(p.point);
                    gt_surface.push(p.surface);
                    gt_outlier.push(p.outlier);
                }
                None => {
                    let p = raw[source[idx]].as_ref().expect("source is a rendered pixel");
                    descriptors.extend_from_slice(&p.descriptor);
                    frames.push(p.frame);
                    gt_points.push(None);
                    gt_surface.push(None);
                    gt_outlier.push(false);
                }
            }
        }
    }
    let gt = GroundTruth {
        pose,
        symmetry: model.symmetry().clone(),
        points: gt_points,
        surface_points: gt_surface,
        outlier: gt_outlier,
        clean_mask,
    };
    Observation::from_parts(kc, origin, pixels, descriptors, frames, gt)
}

/// Toggles each pixel within `band` pixels (chessboard distance) of the silhouette with probability 1/2.
fn perturb_mask(mask: &mut [bool], w: u32, h: u32, band: u32, rng: &mut ChaCha8Rng) {
    let (wi, hi) = (w as i64, h as i64);
    let at = |u: i64, v: i64| (v * wi + u) as usize;
    let mut dist = vec![u32::MAX; mask.len()];
    let mut queue = VecDeque::new();
    for v in 0..hi {
        for u in 0..wi {
            let m = mask[at(u, v)];
            let edge = [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(du, dv)| {
                let (x, y) = (u + du, v + dv);
                x >= 0 && y >= 0 && x < wi && y < hi && mask[at(x, y)] != m
            });
            if edge {
                dist[at(u, v)] = 0;
                queue.push_back((u, v));
            }
        }
    }
    while let Some((u, v)) = queue.pop_front() {
        let d = dist[at(u, v)];
        if d + 1 >= band {
            continue;
        }
        for dv in -1..=1 {
            for du in -1..=1 {
                let (x, y) = (u + du, v + dv);
                if x >= 0 && y >= 0 && x < wi && y < hi && dist[at(x, y)] == u32::MAX {
                    dist[at(x, y)] = d + 1;
                    queue.push_back((x, y));
                }
            }
        }
    }
    for (i, d) in dist.iter().enumerate() {
        if *d < band && rng.random::<bool>() {
            mask[i] = !mask[i];
        }
    }
}

/// For every pixel, the index of the nearest `true` pixel of `mask` (8-connected BFS order).
fn nearest_source(mask: &[bool], w: u32, h: u32) -> Vec<usize> {
    let (wi, hi) = (w as i64, h as i64);
    let mut src = vec![usize::MAX; mask.len()];
    let mut queue = VecDeque::new();
    for (i, &m) in mask.iter().enumerate() {
        if m {
            src[i] = i;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (u, v) = ((i as i64) % wi, (i as i64) / wi);
        for dv in -1..=1 {
            for du in -1..=1 {
                let (x, y) = (u + du, v + dv);
                if x >= 0 && y >= 0 && x < wi && y < hi {
                    let j = (y * wi + x) as usize;
                    if src[j] == usize::MAX {
                        src[j] = src[i];
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    src
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_test() {
        let sq = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        assert!(point_in_polygon(&sq, 1.0, 1.0));
        assert!(!point_in_polygon(&sq, 3.0, 1.0));
        let l = [[0.0, 0.0], [4.0, 0.0], [4.0, 1.0], [1.0, 1.0], [1.0, 4.0], [0.0, 4.0]];
        assert!(point_in_polygon(&l, 0.5, 3.0));
        assert!(!point_in_polygon(&l, 3.0, 3.0));
    }

    #[test]
    fn descriptor_perturbation_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_unit(&mut rng, 16);
        for _ in 0..100 {
            let p = perturb_descriptor(&mut rng, &d, 0.1);
            let n: f64 = p.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
            let c: f64 = p.iter().zip(&d).map(|(a, b)| a * b).sum();
            assert!(c <= 1.0 + 1e-12 && c.min(1.0).acos() < 0.6);
        }
    }

    #[test]
    fn mask_band_only_touches_boundary() {
        let (w, h) = (20u32, 20u32);
        let mut mask = vec![false; 400];
        for v in 5..15 {
            for u in 5..15 {
                mask[v * 20 + u] = true;
            }
        }
        let orig = mask.clone();
        perturb_mask(&mut mask, w, h, 1, &mut ChaCha8Rng::seed_from_u64(2));
        let changed: Vec<usize> = (0..400).filter(|&i| mask[i] != orig[i]).collect();
        assert!(!changed.is_empty());
        for i in changed {
            let (u, v) = (i % 20, i / 20);
            let ring = |a: usize| a == 4 || a == 5 || a == 14 || a == 15;
            assert!(ring(u) || ring(v), "({u},{v})");
        }
        let src = nearest_source(&orig, w, h);
        assert_eq!(src[0], 5 * 20 + 5);
    }
}
