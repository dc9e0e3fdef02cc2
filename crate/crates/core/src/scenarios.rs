//! Bundled objects and viewing setups used by the acceptance runs and the CLI.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obsgen::{crop_for, CameraConfig, PoseConfig, ScenarioConfig};
use crate::rotkit::{CameraIntrinsics, Pose, Rotation};
use crate::symmodel::{build_symmodel, mesh, SymModel, SymmetrySpec, TriMesh, DEFAULT_DESCRIPTOR_DIM};

pub const DEFAULT_MODEL_POINTS: usize = 3000;

/// Hex prism dimensions shared by the plain and marked variants.
pub const PRISM_RADIUS_M: f64 = 0.04;
pub const PRISM_HEIGHT_M: f64 = 0.05;
pub const MARKER_HALF_M: [f64; 3] = [0.015, 0.018, 0.018];
pub const MARKER_OFFSET_M: f64 = 0.014;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundledObject {
    MarkedCube,
    HexPrism,
    Cylinder,
    MarkedPrism,
}

impl BundledObject {
    pub const ALL: [BundledObject; 4] = [Self::MarkedCube, Self::HexPrism, Self::Cylinder, Self::MarkedPrism];

    pub fn name(self) -> &'static str {
        match self {
            Self::MarkedCube => "marked_cube",
            Self::HexPrism => "hex_prism",
            Self::Cylinder => "cylinder",
            Self::MarkedPrism => "marked_prism",
        }
    }

    pub fn mesh(self) -> Result<TriMesh> {
        match self {
            Self::MarkedCube => mesh::cube_with_marker(0.06, 0.3),
            Self::HexPrism => mesh::hex_prism(PRISM_RADIUS_M, PRISM_HEIGHT_M),
            Self::Cylinder => mesh::cylinder(0.03, 0.07, 256),
            Self::MarkedPrism => {
                mesh::prism_with_marker(PRISM_RADIUS_M, PRISM_HEIGHT_M, Vector3::from(MARKER_HALF_M), MARKER_OFFSET_M)
            }
        }
    }

    /// Declared symmetry of the descriptor field. The marked prism keeps the 6-fold field so that
    /// only the marker's geometry can break the ambiguity.
    pub fn symmetry(self) -> SymmetrySpec {
        match self {
            Self::MarkedCube => SymmetrySpec::asymmetric(),
            Self::HexPrism | Self::MarkedPrism => SymmetrySpec::discrete(Vector3::z(), 6).expect("valid"),
            Self::Cylinder => SymmetrySpec::continuous(Vector3::z()).expect("valid"),
        }
    }

    pub fn build_model(self, max_points: usize, seed: u64) -> Result<SymModel> {
        build_symmodel(self.mesh()?, self.symmetry(), max_points, DEFAULT_DESCRIPTOR_DIM, seed)
    }
}

pub fn default_camera() -> CameraConfig {
    CameraConfig { fx_px: 600.0, fy_px: 600.0, cx_px: 320.0, cy_px: 240.0, width_px: 640, height_px: 480 }
}

/// Oblique view that shows the top cap and three side faces.
pub fn default_gt_pose() -> Pose<f64> {
    let tilt = Rotation::about_axis(&Vector3::x(), 2.55);
    let spin = Rotation::about_axis(&Vector3::z(), 0.35);
    Pose::new(tilt * spin, Vector3::new(0.01, -0.005, 0.7))
}

pub fn scenario(object: BundledObject, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        camera: default_camera(),
        gt_pose: PoseConfig::from_pose(&default_gt_pose()),
        crop_width_px: 128,
        crop_height_px: 128,
        noise_desc_rad: 0.0,
        noise_frame_rad: 0.0,
        noise_mask_px: 0,
        occluder_polygon_px: None,
        outlier_rate: 0.0,
        seed: seed ^ object as u64,
    }
}

/// Same view and occluder with every noise source and outliers switched off.
pub fn noiseless(cfg: &ScenarioConfig) -> ScenarioConfig {
    ScenarioConfig { noise_desc_rad: 0.0, noise_frame_rad: 0.0, noise_mask_px: 0, outlier_rate: 0.0, ..cfg.clone() }
}

/// `n` copies of `base` with uniformly random object rotations; translation and noise are kept.
pub fn random_views(base: &ScenarioConfig, n: usize, seed: u64) -> Vec<ScenarioConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let pose = Pose::new(Rotation::random(&mut rng), base.gt_pose.pose().translation);
            ScenarioConfig { gt_pose: PoseConfig::from_pose(&pose), seed: base.seed.wrapping_add(i as u64), ..base.clone() }
        })
        .collect()
}

/// Marked prism with an occluder hiding the top cap and every symmetric image of the marker.
pub fn occluded_marked_prism(seed: u64) -> Result<ScenarioConfig> {
    let mut cfg = scenario(BundledObject::MarkedPrism, seed);
    let camera = cfg.camera.intrinsics()?;
    let pose = cfg.gt_pose.pose();
    let (kc, _) = crop_for(&camera, &pose, cfg.crop_width_px, cfg.crop_height_px)?;
    cfg.occluder_polygon_px = Some(cap_occluder(&kc, &pose, 1.5)?);
    Ok(cfg)
}

/// Convex polygon (crop pixels) covering the prism's top cap and the marker at all six
/// azimuths, grown by `margin_px`.
pub fn cap_occluder(k: &CameraIntrinsics<f64>, pose: &Pose<f64>, margin_px: f64) -> Result<Vec<[f64; 2]>> {
    let marker = mesh::prism_with_marker(PRISM_RADIUS_M, PRISM_HEIGHT_M, Vector3::from(MARKER_HALF_M), MARKER_OFFSET_M)?;
    let top = PRISM_HEIGHT_M / 2.0;
    let mut pts = Vec::new();
    for i in 0..6 {
        let s = Rotation::about_axis(&Vector3::z(), std::f64::consts::TAU * i as f64 / 6.0);
        for v in marker.vertices().iter().filter(|v| v.z >= top - 1e-12) {
            let q = k.project_camera_point(&pose.transform(&s.rotate(v)))?;
            pts.push(q);
        }
    }
    let hull = convex_hull(&pts);
    if hull.len() < 3 {
        return Err(Error::InvalidArgument("occluder hull is degenerate".into()));
    }
    let c = hull.iter().fold(Vector2::zeros(), |a, p| a + p) / hull.len() as f64;
    Ok(hull
        .iter()
        .map(|p| {
            let d = p - c;
            let q = p + d.normalize() * margin_px;
            [q.x, q.y]
        })
        .collect())
}

/// Andrew's monotone chain; counter-clockwise in a y-up frame, no collinear points.
fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut p: Vec<Vector2<f64>> = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for q in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(*q);
        }
        hull.pop();
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obsgen::{point_in_polygon, render};

    #[test]
    fn hull_of_square_with_interior() {
        let pts: Vec<Vector2<f64>> =
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]].iter().map(|p| Vector2::new(p[0], p[1])).collect();
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn bundled_scenarios_render() {
        for obj in BundledObject::ALL {
            let model = obj.build_model(600, 1).unwrap();
            let obs = render(&model, &scenario(obj, 1)).unwrap();
            assert!(obs.mask_len() > 2000, "{}: {}", obj.name(), obs.mask_len());
        }
    }

    #[test]
    fn occluder_hides_cap() {
        let cfg = occluded_marked_prism(3).unwrap();
        let poly = cfg.occluder_polygon_px.clone().unwrap();
        let k = cfg.camera.intrinsics().unwrap();
        let pose = cfg.gt_pose.pose();
        let (kc, _) = crop_for(&k, &pose, 128, 128).unwrap();
        let q = kc.project_camera_point(&pose.transform(&Vector3::new(0.0, 0.0, PRISM_HEIGHT_M / 2.0))).unwrap();
        assert!(point_in_polygon(&poly, q.x, q.y));
        let model = BundledObject::MarkedPrism.build_model(600, 1).unwrap();
        assert!(render(&model, &cfg).unwrap().mask_len() > 1000);
    }
}
