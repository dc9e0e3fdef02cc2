//! Many-to-many 2D-3D matching by descriptor similarity and per-correspondence rotation hypotheses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obsgen::Observation;
use crate::rotkit::{compose_frames, Rotation};
use crate::symmodel::SymModel;

pub const DEFAULT_TAU_DESC: f64 = 0.65;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// Crop pixel `(u, v)`.
    pub pixel: [u32; 2],
    /// Model point index.
    pub point: usize,
    /// Raw descriptor dot product.
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationHypothesis {
    pub rotation: Rotation<f64>,
    pub source: Correspondence,
}

/// Hypotheses sorted by pixel (row-major) then point index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RotationHypothesisSet {
    pub hypotheses: Vec<RotationHypothesis>,
}

impl RotationHypothesisSet {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn rotations(&self) -> Vec<Rotation<f64>> {
        self.hypotheses.iter().map(|h| h.rotation).collect()
    }
}

/// Keep-threshold relative to the best value: `best − (1 − tau)·|best|` (equals `tau·best` for positive best).
pub fn relative_threshold(best: f64, tau: f64) -> f64 {
    best - (1.0 - tau) * best.abs()
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau_desc must lie in (0, 1], got {tau}")));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-pixel similarity statistics shared by matching and scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSimilarity {
    pub matches: Vec<Correspondence>,
    /// `log Σ_Y exp(ψ_d(x)·P_d(Y))` over all model points.
    pub log_partition: f64,
}

fn match_index(obs: &Observation, model: &SymModel, i: usize, tau: f64) -> PixelSimilarity {
    let q = obs.descriptor(i);
    let pixel = obs.pixels()[i];
    let dots: Vec<f64> = model.descriptors().chunks_exact(model.dim()).map(|row| dot(q, row)).collect();
    let best = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_partition = best + dots.iter().map(|x| (x - best).exp()).sum::<f64>().ln();
    let thr = relative_threshold(best, tau);
    let matches = dots
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= thr)
        .map(|(point, &similarity)| Correspondence { pixel, point, similarity })
        .collect();
    PixelSimilarity { matches, log_partition }
}

/// `S(I, x)`: all model points whose similarity is at least the `tau_desc` fraction of the best.
pub fn match_pixel(obs: &Observation, model: &SymModel, x: [u32; 2], tau_desc: f64) -> Result<Vec<Correspondence>> {
    check_tau(tau_desc)?;
    let i = obs.pixel_index(x[0], x[1]).ok_or(Error::PixelOffMask(x[0], x[1]))?;
    Ok(match_index(obs, model, i, tau_desc).matches)
}

pub fn hypotheses_for_pixel(obs: &Observation, model: &SymModel, matches: &[Correspondence]) -> Vec<RotationHypothesis> {
    matches
        .iter()
        .filter_map(|c| {
            let i = obs.pixel_index(c.pixel[0], c.pixel[1])?;
            Some(RotationHypothesis { rotation: compose_frames(obs.frame(i), model.frame(c.point)), source: *c })
        })
        .collect()
}

/// Matching result for a whole observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutput {
    pub hypotheses: RotationHypothesisSet,
    /// Log-partition per mask pixel, in `Observation::pixels` order.
    pub log_partition: Vec<f64>,
}

pub fn match_all(obs: &Observation, model: &SymModel, tau_desc: f64) -> Result<MatchOutput> {
    check_tau(tau_desc)?;
    if obs.mask_len() == 0 {
        return Err(Error::EmptyMask);
    }
    if obs.dim() != model.dim() {
        return Err(Error::InvalidArgument("observation and model descriptor dimensions differ".into()));
    }
    let per: Vec<PixelSimilarity> = (0..obs.mask_len()).into_par_iter().map(|i| match_index(obs, model, i, tau_desc)).collect();
    let mut hypotheses = Vec::new();
    let mut log_partition = Vec::with_capacity(per.len());
    for p in per {
        hypotheses.extend(hypotheses_for_pixel(obs, model, &p.matches));
        log_partition.push(p.log_partition);
    }
    Ok(MatchOutput { hypotheses: RotationHypothesisSet { hypotheses }, log_partition })
}

/// `H_R(I)`: union of per-pixel hypotheses over the mask.
pub fn all_hypotheses(obs: &Observation, model: &SymModel, tau_desc: f64) -> Result<RotationHypothesisSet> {
    Ok(match_all(obs, model, tau_desc)?.hypotheses)
}
