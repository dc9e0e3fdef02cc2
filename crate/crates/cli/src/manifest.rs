use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use posedistrib_core::estimator::EstimatorParams;
use posedistrib_core::metrics::{DEFAULT_MSPD_FRACTION, DEFAULT_MSSD_FRACTION, DEFAULT_ORBIT_STEP_DEG};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub mspd_fraction_of_crop_diagonal: f64,
    pub mssd_fraction_of_diameter: f64,
    pub orbit_step_deg: f64,
    /// Keep only symmetry images that score like the ground truth on a noiseless render.
    pub occlusion_aware: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            mspd_fraction_of_crop_diagonal: DEFAULT_MSPD_FRACTION,
            mssd_fraction_of_diameter: DEFAULT_MSSD_FRACTION,
            orbit_step_deg: DEFAULT_ORBIT_STEP_DEG,
            occlusion_aware: true,
        }
    }
}

/// Everything a run needs. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_path: PathBuf,
    pub scenario_path: PathBuf,
    #[serde(default)]
    pub estimator: EstimatorParams,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| posedistrib_core::Error::Format(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((m, base))
    }

    pub fn resolve(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn validate(&self) -> posedistrib_core::Result<()> {
        self.estimator.validate()?;
        let m = &self.metrics;
        if !(m.mspd_fraction_of_crop_diagonal > 0.0 && m.mssd_fraction_of_diameter > 0.0 && m.orbit_step_deg > 0.0) {
            return Err(posedistrib_core::Error::InvalidArgument("metric thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Hash of the effective manifest together with the bytes it points at.
pub fn manifest_hash(manifest: &RunManifest, model_sha256: &str, scenario_sha256: &str) -> String {
    #[derive(Serialize)]
    struct Keyed<'a> {
        manifest: &'a RunManifest,
        model_sha256: &'a str,
        scenario_sha256: &'a str,
    }
    let bytes = serde_json::to_vec(&Keyed { manifest, model_sha256, scenario_sha256 }).expect("manifest serializes");
    hex::encode(Sha256::digest(bytes))
}
