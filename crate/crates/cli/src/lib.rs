pub mod manifest;
pub mod svg;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use posedistrib_core::error::NoPoseDiagnostics;
use posedistrib_core::estimator::{
    diagnostics, estimate_from_hypotheses, Estimate, EstimatorParams, PoseDistributionDoc, Provenance, ScoreContext,
};
use posedistrib_core::matcher::match_all;
use posedistrib_core::metrics::{gt_pose_set, DEFAULT_MSPD_FRACTION, DEFAULT_MSSD_FRACTION, pr_report, GtPoseSet, PrReport, PrThresholds};
use posedistrib_core::obsgen::{render, Observation, ScenarioConfig};
use posedistrib_core::rotkit::Rotation;
use posedistrib_core::scenarios::{self, noiseless, occluded_marked_prism, random_views, BundledObject};
use posedistrib_core::symmodel::{build_symmodel, eval_losses, Losses, SymModel, DEFAULT_DESCRIPTOR_DIM};
use posedistrib_core::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use manifest::{manifest_hash, MetricConfig, RunManifest};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_POSE: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Exit code for an error chain: validation, no pose, or I/O.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NoPoseFound(_) => EXIT_NO_POSE,
                Error::Io(_) => EXIT_IO,
                _ => EXIT_VALIDATION,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_OTHER
}

/// Command-line overrides applied on top of the manifest and scenario files.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid_level: Option<u32>,
    pub tau_desc: Option<f64>,
    pub tau_dens: Option<usize>,
    pub tau_score: Option<f64>,
    pub noise_desc_rad: Option<f64>,
    pub noise_frame_rad: Option<f64>,
    pub noise_mask_px: Option<u32>,
    pub outlier_rate: Option<f64>,
}

impl Overrides {
    fn apply(&self, m: &mut RunManifest, s: &mut ScenarioConfig) {
        if let Some(v) = self.seed {
            m.seed = v;
        }
        m.estimator.seed = m.seed;
        let e = &mut m.estimator;
        e.grid_level = self.grid_level.unwrap_or(e.grid_level);
        e.tau_desc = self.tau_desc.unwrap_or(e.tau_desc);
        e.tau_dens = self.tau_dens.unwrap_or(e.tau_dens);
        e.tau_score = self.tau_score.unwrap_or(e.tau_score);
        s.noise_desc_rad = self.noise_desc_rad.unwrap_or(s.noise_desc_rad);
        s.noise_frame_rad = self.noise_frame_rad.unwrap_or(s.noise_frame_rad);
        s.noise_mask_px = self.noise_mask_px.unwrap_or(s.noise_mask_px);
        s.outlier_rate = self.outlier_rate.unwrap_or(s.outlier_rate);
    }
}

/// A manifest with its files loaded and overrides applied.
pub struct Loaded {
    pub manifest: RunManifest,
    pub base_dir: PathBuf,
    pub model: SymModel,
    pub scenario: ScenarioConfig,
    pub model_sha256: String,
    pub scenario_sha256: String,
    pub hash: String,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())).into())
}

pub fn load(manifest_path: &Path, overrides: &Overrides) -> Result<Loaded> {
    let (mut manifest, base_dir) = RunManifest::load(manifest_path)?;
    let model_path = manifest.resolve(&base_dir, &manifest.model_path);
    let scenario_path = manifest.resolve(&base_dir, &manifest.scenario_path);
    let bytes = std::fs::read(&model_path).with_context(|| format!("reading model {}", model_path.display()))?;
    let model = SymModel::from_bytes(&bytes).context("loading model")?;
    let mut scenario: ScenarioConfig = read_json(&scenario_path)?;
    overrides.apply(&mut manifest, &mut scenario);
    manifest.validate()?;
    scenario.validate()?;
    let model_sha256 = hex::encode(Sha256::digest(&bytes));
    let scenario_sha256 = scenario.hash_hex();
    let hash = manifest_hash(&manifest, &model_sha256, &scenario_sha256);
    Ok(Loaded { manifest, base_dir, model, scenario, model_sha256, scenario_sha256, hash })
}

impl Loaded {
    pub fn render(&self) -> Result<Observation> {
        render(&self.model, &self.scenario).context("rendering observation")
    }

    pub fn gt_set(&self) -> Result<GtPoseSet> {
        let m = &self.manifest.metrics;
        let clean = if m.occlusion_aware { Some(render(&self.model, &noiseless(&self.scenario))?) } else { None };
        Ok(gt_pose_set(&self.model, &self.scenario.gt_pose.pose(), self.model.symmetry(), clean.as_ref(), m.orbit_step_deg)?)
    }

    pub fn thresholds(&self, obs: &Observation) -> PrThresholds {
        let m = &self.manifest.metrics;
        let d = PrThresholds::defaults(&self.model, obs.camera());
        let sp = m.mspd_fraction_of_crop_diagonal / DEFAULT_MSPD_FRACTION;
        let ss = m.mssd_fraction_of_diameter / DEFAULT_MSSD_FRACTION;
        PrThresholds {
            mspd_px: d.mspd_px * sp,
            mssd_m: d.mssd_m * ss,
            mspd_curve_px: d.mspd_curve_px.iter().map(|t| t * sp).collect(),
            mssd_curve_m: d.mssd_curve_m.iter().map(|t| t * ss).collect(),
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { scenario_sha256: self.scenario_sha256.clone(), model_sha256: self.model_sha256.clone() }
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.manifest.output_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.manifest.resolve(&self.base_dir, p),
            (None, None) => PathBuf::from("posedistrib_out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    NoPoseFound,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionFile {
    pub manifest_sha256: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<NoPoseDiagnostics>,
    pub distribution: PoseDistributionDoc,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportFile<'a, T: Serialize> {
    pub manifest_sha256: &'a str,
    #[serde(flatten)]
    pub body: &'a T,
}

/// Text artifacts of one run, keyed by file name.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutputs {
    pub files: Vec<(String, String)>,
    pub no_pose: Option<NoPoseDiagnostics>,
    pub report: PrReport,
    pub poses: usize,
}

impl RunOutputs {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, content) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

fn csv_with_hash(hash: &str, body: &str) -> String {
    format!("# manifest_sha256={hash}\n{body}")
}

/// Runs estimation on precomputed matches.
fn estimate(ctx: &ScoreContext, obs: &Observation, loaded: &Loaded, h: posedistrib_core::matcher::RotationHypothesisSet, params: &EstimatorParams) -> Result<Estimate> {
    let mut e = estimate_from_hypotheses(ctx, obs, &loaded.model, h, params)?;
    e.distribution.provenance = loaded.provenance();
    Ok(e)
}

/// Full pipeline in memory: observation, matching, estimation, metrics and plots.
pub fn run(loaded: &Loaded, dump_stages: bool) -> Result<RunOutputs> {
    let obs = loaded.render()?;
    let params = loaded.manifest.estimator;
    let matched = match_all(&obs, &loaded.model, params.tau_desc)?;
    let ctx = ScoreContext::with_cache(&obs, &loaded.model, matched.log_partition);
    let est = estimate(&ctx, &obs, loaded, matched.hypotheses, &params)?;
    let gt = loaded.gt_set()?;
    let th = loaded.thresholds(&obs);
    let dist = &est.distribution;
    let report = pr_report(&dist.pose_list(), &gt, &loaded.model, obs.camera(), &th)?;
    let no_pose = dist.poses.is_empty().then(|| diagnostics(&est.stages, &params));
    let hash = loaded.hash.as_str();

    let mut files = Vec::new();
    let dfile = DistributionFile {
        manifest_sha256: hash.to_string(),
        status: if no_pose.is_some() { RunStatus::NoPoseFound } else { RunStatus::Ok },
        diagnostics: no_pose.clone(),
        distribution: dist.to_doc(),
    };
    files.push(("distribution.json".to_string(), json(&dfile)));
    files.push(("pr_report.json".to_string(), json(&ReportFile { manifest_sha256: hash, body: &report })));
    files.push(("pr_curves.csv".to_string(), csv_with_hash(hash, &report.to_csv())));
    files.push(("gt_set.json".to_string(), json(&ReportFile { manifest_sha256: hash, body: &gt.to_doc() })));

    let gt_rot: Vec<Rotation<f64>> = gt.poses.iter().map(|p| p.rotation).collect();
    let initial = est.stages.initial.rotations();
    let pruned: Vec<Rotation<f64>> = est.stages.pruned.iter().map(|b| b.hypothesis.rotation).collect();
    let finals = dist.rotations();
    let gammas: Vec<f64> = dist.poses.iter().map(|p| p.score.gamma).collect();
    let banner = no_pose.as_ref().map(|d| {
        format!("no pose found (max density {}, max inliers {}, groups {})", d.max_density, d.max_inliers, d.groups)
    });
    let title = format!("hypotheses {} / pruned {} / poses {}", initial.len(), pruned.len(), finals.len());
    let main = svg::Plot {
        title: &title,
        manifest_sha256: hash,
        layers: if no_pose.is_some() {
            Vec::new()
        } else {
            vec![
                svg::Layer { label: "initial", rotations: &initial, weights: None },
                svg::Layer { label: "pruned", rotations: &pruned, weights: None },
                svg::Layer { label: "final", rotations: &finals, weights: Some(&gammas) },
            ]
        },
        ground_truth: &gt_rot,
        banner: banner.as_deref(),
    };
    files.push(("mollweide.svg".to_string(), main.render()));
    if dump_stages {
        let stages: [(&str, &[Rotation<f64>], Option<&[f64]>); 3] =
            [("initial", &initial, None), ("pruned", &pruned, None), ("final", &finals, Some(&gammas))];
        for (name, rots, w) in stages {
            let t = format!("{name}: {} rotations", rots.len());
            let plot = svg::Plot {
                title: &t,
                manifest_sha256: hash,
                layers: vec![svg::Layer { label: name, rotations: rots, weights: w }],
                ground_truth: &gt_rot,
                banner: None,
            };
            files.push((format!("stage_{name}.svg"), plot.render()));
        }
    }
    Ok(RunOutputs { files, no_pose, poses: dist.poses.len(), report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    K,
    TauCorr,
    TauDens,
    TauScore,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::K => "k",
            Self::TauCorr => "tau_corr",
            Self::TauDens => "tau_dens",
            Self::TauScore => "tau_score",
        }
    }

    pub fn apply(self, p: &EstimatorParams, v: f64) -> Result<EstimatorParams> {
        let whole = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v)
            } else {
                Err(Error::InvalidArgument(format!("{} takes whole numbers, got {v}", self.name())))
            }
        };
        let mut p = *p;
        match self {
            Self::K => p.grid_level = whole(v)? as u32,
            Self::TauCorr => p.tau_desc = v,
            Self::TauDens => p.tau_dens = whole(v)? as usize,
            Self::TauScore => p.tau_score = v,
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub precision_mpd: f64,
    pub recall_mpd: f64,
    pub precision_msd: f64,
    pub recall_msd: f64,
    pub poses: usize,
}

/// Re-estimates once per value with everything else held fixed.
pub fn sweep(loaded: &Loaded, axis: SweepAxis, values: &[f64]) -> Result<(Vec<SweepRow>, String)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()).into());
    }
    let params: Vec<EstimatorParams> =
        values.iter().map(|&v| axis.apply(&loaded.manifest.estimator, v)).collect::<Result<_>>()?;
    let obs = loaded.render()?;
    let gt = loaded.gt_set()?;
    let th = loaded.thresholds(&obs);
    let mut cached = None;
    let mut rows = Vec::with_capacity(values.len());
    for (&value, p) in values.iter().zip(&params) {
        let fresh;
        let (ctx, h) = if axis == SweepAxis::TauCorr {
            let m = match_all(&obs, &loaded.model, p.tau_desc)?;
            fresh = (ScoreContext::with_cache(&obs, &loaded.model, m.log_partition), m.hypotheses);
            (&fresh.0, fresh.1.clone())
        } else {
            if cached.is_none() {
                let m = match_all(&obs, &loaded.model, p.tau_desc)?;
                cached = Some((ScoreContext::with_cache(&obs, &loaded.model, m.log_partition), m.hypotheses));
            }
            let c = cached.as_ref().expect("filled above");
            (&c.0, c.1.clone())
        };
        let est = estimate(ctx, &obs, loaded, h, p)?;
        let r = pr_report(&est.distribution.pose_list(), &gt, &loaded.model, obs.camera(), &th)?;
        rows.push(SweepRow {
            value,
            precision_mpd: r.precision_mpd,
            recall_mpd: r.recall_mpd,
            precision_msd: r.precision_msd,
            recall_msd: r.recall_msd,
            poses: est.distribution.poses.len(),
        });
    }
    let mut csv = format!("{},P_MPD,R_MPD,P_MSD,R_MSD,poses\n", axis.name());
    for r in &rows {
        csv.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{}\n",
            r.value, r.precision_mpd, r.recall_mpd, r.precision_msd, r.recall_msd, r.poses
        ));
    }
    Ok((rows, csv_with_hash(&loaded.hash, &csv)))
}

/// Writes a self-contained run directory for a bundled object and returns the manifest path.
pub fn bundle(object: BundledObject, occluded: bool, dir: &Path, max_points: usize, seed: u64) -> Result<PathBuf> {
    if occluded && object != BundledObject::MarkedPrism {
        return Err(Error::InvalidArgument("only the marked prism has an occluded variant".into()).into());
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mesh = object.mesh()?;
    let model = build_symmodel(mesh.clone(), object.symmetry(), max_points, DEFAULT_DESCRIPTOR_DIM, seed)?;
    let scenario = if occluded { occluded_marked_prism(seed)? } else { scenarios::scenario(object, seed) };
    std::fs::write(dir.join("mesh.ply"), mesh.to_ply())?;
    std::fs::write(dir.join("symmetry.json"), json(&object.symmetry()))?;
    model.save(&dir.join("model.bin"))?;
    std::fs::write(dir.join("scenario.json"), json(&scenario))?;
    let manifest = RunManifest {
        model_path: "model.bin".into(),
        scenario_path: "scenario.json".into(),
        estimator: EstimatorParams::default(),
        metrics: MetricConfig::default(),
        output_dir: None,
        seed,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, json(&manifest))?;
    Ok(path)
}

/// Losses over `renders` random object rotations of the scenario's view.
pub fn losses_on_views(model: &SymModel, base: &ScenarioConfig, renders: usize, seed: u64) -> Result<Losses> {
    if renders == 0 {
        return Err(Error::InvalidArgument("need at least one render".into()).into());
    }
    let views = random_views(base, renders, seed);
    let obs: Vec<Observation> = views.iter().map(|v| render(model, v)).collect::<posedistrib_core::Result<_>>()?;
    Ok(eval_losses(model, &obs)?)
}
