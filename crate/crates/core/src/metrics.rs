//! Ground-truth pose sets and set-level precision/recall under projective and surface distances.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::ScoreContext;
use crate::obsgen::{Observation, PoseConfig};
use crate::rotkit::{d_ang, CameraIntrinsics, Pose};
use crate::symmodel::{SymModel, SymmetryKind, SymmetrySpec};

pub const DEFAULT_ORBIT_STEP_DEG: f64 = 1.0;
pub const SUBSAMPLE_SIZE: usize = 1000;
pub const SUBSAMPLE_SEED: u64 = 0x4d53_5344;
/// Score tolerance for calling two symmetry images equivalent on an observation.
pub const EQUIVALENCE_TOL: f64 = 1e-3;
pub const DEFAULT_MSPD_FRACTION: f64 = 0.05;
pub const DEFAULT_MSSD_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct GtPoseSet {
    pub poses: Vec<Pose<f64>>,
    pub symmetry: SymmetrySpec,
    pub occlusion_aware: bool,
    pub step_deg: f64,
}

impl GtPoseSet {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn to_doc(&self) -> GtPoseSetDoc {
        GtPoseSetDoc {
            poses: self.poses.iter().map(PoseConfig::from_pose).collect(),
            symmetry: self.symmetry.clone(),
            occlusion_aware: self.occlusion_aware,
            step_deg: self.step_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtPoseSetDoc {
    pub poses: Vec<PoseConfig>,
    pub symmetry: SymmetrySpec,
    pub occlusion_aware: bool,
    pub step_deg: f64,
}

/// Symmetry images of `gt_pose`. With `obs`, an image of a discrete group is kept only if its
/// descriptor score on the observation matches that of `gt_pose` within [`EQUIVALENCE_TOL`].
/// Continuous orbits are kept whole: ring-sampled models are symmetric only up to the ring
/// spacing, so scores of off-grid orbit samples drift by more than the tolerance.
pub fn gt_pose_set(
    model: &SymModel,
    gt_pose: &Pose<f64>,
    symmetry: &SymmetrySpec,
    obs: Option<&Observation>,
    step_deg: f64,
) -> Result<GtPoseSet> {
    if !(step_deg > 0.0) {
        return Err(Error::InvalidArgument("orbit step must be positive".into()));
    }
    let images: Vec<Pose<f64>> =
        symmetry.elements(step_deg.to_radians(), 10_000).iter().map(|s| gt_pose.with_object_rotation(s)).collect();
    let poses = match obs {
        Some(_) if matches!(symmetry.kind, SymmetryKind::Continuous { .. }) => images,
        None => images,
        Some(obs) => {
            let ctx = ScoreContext::new(obs, model);
            let reference = ctx.score(gt_pose)?.gamma_desc;
            let keep: Vec<bool> = images
                .par_iter()
                .enumerate()
                .map(|(i, p)| i == 0 || ctx.score(p).is_ok_and(|s| (s.gamma_desc - reference).abs() <= EQUIVALENCE_TOL))
                .collect();
            images.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
        }
    };
    Ok(GtPoseSet { poses, symmetry: symmetry.clone(), occlusion_aware: obs.is_some(), step_deg })
}

/// Deterministic subsample of model points used by the distances.
pub fn metric_points(model: &SymModel) -> Vec<Vector3<f64>> {
    let n = model.len();
    if n <= SUBSAMPLE_SIZE {
        return model.points().to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
    let mut idx = rand::seq::index::sample(&mut rng, n, SUBSAMPLE_SIZE).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| *model.point(i)).collect()
}

/// Maximum reprojection displacement in pixels. Points behind either camera count as infinite.
pub fn mspd_points(points: &[Vector3<f64>], k: &CameraIntrinsics<f64>, a: &Pose<f64>, b: &Pose<f64>) -> f64 {
    points
        .iter()
        .map(|x| match (k.project_camera_point(&a.transform(x)), k.project_camera_point(&b.transform(x))) {
            (Ok(p), Ok(q)) => (p - q).norm(),
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Maximum 3D displacement in meters.
pub fn mssd_points(points: &[Vector3<f64>], a: &Pose<f64>, b: &Pose<f64>) -> f64 {
    points.iter().map(|x| (a.transform(x) - b.transform(x)).norm()).fold(0.0, f64::max)
}

pub fn mspd(model: &SymModel, k: &CameraIntrinsics<f64>, a: &Pose<f64>, b: &Pose<f64>) -> f64 {
    mspd_points(&metric_points(model), k, a, b)
}

pub fn mssd(model: &SymModel, a: &Pose<f64>, b: &Pose<f64>) -> f64 {
    mssd_points(&metric_points(model), a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrThresholds {
    pub mspd_px: f64,
    pub mssd_m: f64,
    pub mspd_curve_px: Vec<f64>,
    pub mssd_curve_m: Vec<f64>,
}

impl PrThresholds {
    /// 5% of the crop diagonal and of the object diameter, with curves spanning 0.5x..4x.
    pub fn defaults(model: &SymModel, k: &CameraIntrinsics<f64>) -> Self {
        let mspd_px = DEFAULT_MSPD_FRACTION * k.diagonal();
        let mssd_m = DEFAULT_MSSD_FRACTION * model.diameter();
        let scales = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0];
        Self {
            mspd_px,
            mssd_m,
            mspd_curve_px: scales.iter().map(|s| s * mspd_px).collect(),
            mssd_curve_m: scales.iter().map(|s| s * mssd_m).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrReport {
    pub precision_mpd: f64,
    pub recall_mpd: f64,
    pub precision_msd: f64,
    pub recall_msd: f64,
    pub curve_mpd: Vec<PrPoint>,
    pub curve_msd: Vec<PrPoint>,
    pub thresholds: PrThresholds,
    pub predicted: usize,
    pub ground_truth: usize,
    pub subsample_seed: u64,
}

/// Nearest-neighbor distances between two pose sets under a pairwise distance.
struct PairDistances {
    /// For each prediction, distance to its nearest GT pose.
    pred_to_gt: Vec<f64>,
    /// For each GT pose, distance to its nearest prediction.
    gt_to_pred: Vec<f64>,
}

fn pair_distances(pred: &[Pose<f64>], gt: &[Pose<f64>], dist: impl Fn(&Pose<f64>, &Pose<f64>) -> f64 + Sync) -> PairDistances {
    let m: Vec<Vec<f64>> = pred.par_iter().map(|p| gt.iter().map(|g| dist(p, g)).collect()).collect();
    let pred_to_gt = m.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let gt_to_pred =
        (0..gt.len()).map(|j| m.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min)).collect();
    PairDistances { pred_to_gt, gt_to_pred }
}

fn pr_at(d: &PairDistances, threshold: f64) -> PrPoint {
    let frac = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|&&x| x <= threshold).count() as f64 / v.len() as f64
        }
    };
    PrPoint { threshold, precision: frac(&d.pred_to_gt), recall: frac(&d.gt_to_pred) }
}

/// Nearest-neighbor precision and recall. An empty prediction scores 0 / 0.
pub fn pr_report(
    predicted: &[Pose<f64>],
    gt: &GtPoseSet,
    model: &SymModel,
    k: &CameraIntrinsics<f64>,
    thresholds: &PrThresholds,
) -> Result<PrReport> {
    if gt.is_empty() {
        return Err(Error::EmptyGt);
    }
    let pts = metric_points(model);
    let dp = pair_distances(predicted, &gt.poses, |a, b| mspd_points(&pts, k, a, b));
    let ds = pair_distances(predicted, &gt.poses, |a, b| mssd_points(&pts, a, b));
    let p = pr_at(&dp, thresholds.mspd_px);
    let s = pr_at(&ds, thresholds.mssd_m);
    Ok(PrReport {
        precision_mpd: p.precision,
        recall_mpd: p.recall,
        precision_msd: s.precision,
        recall_msd: s.recall,
        curve_mpd: thresholds.mspd_curve_px.iter().map(|&t| pr_at(&dp, t)).collect(),
        curve_msd: thresholds.mssd_curve_m.iter().map(|&t| pr_at(&ds, t)).collect(),
        thresholds: thresholds.clone(),
        predicted: predicted.len(),
        ground_truth: gt.len(),
        subsample_seed: SUBSAMPLE_SEED,
    })
}

impl PrReport {
    /// `metric,threshold,precision,recall` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,threshold,precision,recall\n");
        for (name, curve) in [("mpd_px", &self.curve_mpd), ("msd_m", &self.curve_msd)] {
            for p in curve {
                s.push_str(&format!("{name},{},{},{}\n", p.threshold, p.precision, p.recall));
            }
        }
        s
    }
}

/// Single-linkage clusters of poses: rotations within `max_angle` radians and translations within
/// `max_translation` meters are linked. Clusters are listed by their smallest member index.
pub fn cluster_modes(poses: &[Pose<f64>], max_angle: f64, max_translation: f64) -> Vec<Vec<usize>> {
    let n = poses.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let close = d_ang(&poses[i].rotation, &poses[j].rotation) <= max_angle
                && (poses[i].translation - poses[j].translation).norm() <= max_translation;
            if close {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}
