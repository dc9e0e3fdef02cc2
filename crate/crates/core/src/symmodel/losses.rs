//! Training objectives evaluated on analytic fields and synthetic observations.

use serde::{Deserialize, Serialize};

use super::SymModel;
use crate::error::{Error, Result};
use crate::obsgen::Observation;
use crate::rotkit::d_ang;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    /// Negated mean log-softmax similarity of each pixel to its ground-truth point.
    pub l_desc: f64,
    /// Mean rotation error of the composed frames, radians.
    pub l_lf_rad: f64,
    pub pixels: usize,
}

/// `log Σ_Y exp(q·d_Y)` over all model points.
pub(crate) fn log_partition(model: &SymModel, q: &[f64]) -> f64 {
    let d = model.dim();
    let dots: Vec<f64> = model.descriptors().chunks_exact(d).map(|row| dot(q, row)).collect();
    let m = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + dots.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Averages over mask pixels that carry a ground-truth point.
pub fn eval_losses(model: &SymModel, observations: &[Observation]) -> Result<Losses> {
    let mut sim_sum = 0.0;
    let mut ang_sum = 0.0;
    let mut n = 0usize;
    for obs in observations {
        if obs.dim() != model.dim() {
            return Err(Error::InvalidArgument("observation and model descriptor dimensions differ".into()));
        }
        let gt = obs.ground_truth();
        for (i, hx) in gt.points.iter().enumerate() {
            let Some(hx) = *hx else { continue };
            let q = obs.descriptor(i);
            sim_sum += dot(q, model.descriptor(hx)) - log_partition(model, q);
            ang_sum += d_ang(&gt.pose.rotation, &(*obs.frame(i) * *model.frame(hx)));
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(Losses { l_desc: -sim_sum / n as f64, l_lf_rad: ang_sum / n as f64, pixels: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obsgen::render;
    use crate::scenarios::{scenario, BundledObject};

    #[test]
    fn noiseless_frames_are_exact() {
        let model = BundledObject::HexPrism.build_model(800, 2).unwrap();
        let obs = render(&model, &scenario(BundledObject::HexPrism, 2)).unwrap();
        let l = eval_losses(&model, std::slice::from_ref(&obs)).unwrap();
        assert!(l.l_lf_rad < 1e-6);
        assert_eq!(l.pixels, obs.mask_len());
        assert!(l.l_desc > 0.0);
    }

    #[test]
    fn noise_raises_both_losses() {
        let model = BundledObject::MarkedCube.build_model(800, 2).unwrap();
        let clean = render(&model, &scenario(BundledObject::MarkedCube, 2)).unwrap();
        let mut cfg = scenario(BundledObject::MarkedCube, 2);
        cfg.noise_frame_rad = 0.1;
        cfg.noise_desc_rad = 0.3;
        let noisy = render(&model, &cfg).unwrap();
        let a = eval_losses(&model, &[clean]).unwrap();
        let b = eval_losses(&model, &[noisy]).unwrap();
        assert!(b.l_lf_rad > 0.05 && b.l_desc > a.l_desc);
    }

    #[test]
    fn dimension_mismatch() {
        let model = BundledObject::MarkedCube.build_model(400, 2).unwrap();
        let other = crate::symmodel::build_symmodel(
            BundledObject::MarkedCube.mesh().unwrap(),
            BundledObject::MarkedCube.symmetry(),
            400,
            16,
            2,
        )
        .unwrap();
        let obs = render(&other, &scenario(BundledObject::MarkedCube, 2)).unwrap();
        assert!(matches!(eval_losses(&model, &[obs]), Err(Error::InvalidArgument(_))));
    }
}
