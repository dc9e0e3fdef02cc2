//! Pose scoring: descriptor agreement of visible projected points plus mask agreement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::dot;
use crate::obsgen::{visible_points, Observation};
use crate::rotkit::Pose;
use crate::symmodel::SymModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseScore {
    pub gamma: f64,
    pub gamma_desc: f64,
    pub gamma_mask: f64,
    pub visible: usize,
    pub on_mask: usize,
}

/// Observation plus the per-pixel log-partition cache of the softmax similarity.
pub struct ScoreContext<'a> {
    obs: &'a Observation,
    model: &'a SymModel,
    log_partition: Vec<f64>,
    log_n: f64,
}

impl<'a> ScoreContext<'a> {
    pub fn new(obs: &'a Observation, model: &'a SymModel) -> Self {
        let log_partition = (0..obs.mask_len())
            .into_par_iter()
            .map(|i| crate::symmodel::log_partition(model, obs.descriptor(i)))
            .collect();
        Self::with_cache(obs, model, log_partition)
    }

    /// Uses a cache computed during matching (`MatchOutput::log_partition`).
    pub fn with_cache(obs: &'a Observation, model: &'a SymModel, log_partition: Vec<f64>) -> Self {
        assert_eq!(log_partition.len(), obs.mask_len(), "cache must cover every mask pixel");
        Self { obs, model, log_partition, log_n: (model.len() as f64).ln() }
    }

    /// Softmax log-similarity of mask pixel `i` to model point `x`, offset by `ln |P|` so that a
    /// uniform descriptor field scores zero.
    pub fn similarity(&self, i: usize, x: usize) -> f64 {
        dot(self.obs.descriptor(i), self.model.descriptor(x)) - self.log_partition[i] + self.log_n
    }

    /// Descriptor term averages over visible points landing on mask pixels (the only pixels
    /// carrying descriptors); mask term averages over all visible points.
    pub fn score(&self, pose: &Pose<f64>) -> Result<PoseScore> {
        let k = self.obs.camera();
        let vis = visible_points(self.model, k, pose)?;
        if vis.is_empty() {
            return Err(Error::NoVisiblePoints);
        }
        let mut sum = 0.0;
        let mut on_mask = 0usize;
        for &x in &vis {
            let p = pose.transform(self.model.point(x));
            let Ok(q) = k.project_camera_point(&p) else { continue };
            if let Some(i) = self.obs.pixel_at(q.x, q.y) {
                sum += self.similarity(i, x);
                on_mask += 1;
            }
        }
        let gamma_desc = if on_mask > 0 { sum / on_mask as f64 } else { 0.0 };
        let gamma_mask = on_mask as f64 / vis.len() as f64;
        Ok(PoseScore { gamma: gamma_desc + gamma_mask, gamma_desc, gamma_mask, visible: vis.len(), on_mask })
    }
}

/// One-shot scoring; builds the log-partition cache for every mask pixel.
pub fn score_pose(obs: &Observation, model: &SymModel, pose: &Pose<f64>) -> Result<PoseScore> {
    ScoreContext::new(obs, model).score(pose)
}
