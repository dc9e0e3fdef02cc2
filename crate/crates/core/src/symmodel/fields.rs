//! Symmetry declarations, the symmetry-canonical descriptor field and the equivariant local-frame field.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotkit::{d_ang, Rotation};

/// Symmetry class; axes pass through the object origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymmetryKind {
    Asymmetric,
    Discrete { axis: [f64; 3], n: u32 },
    Continuous { axis: [f64; 3] },
}

/// Declared proper symmetry group of an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySpec {
    #[serde(flatten)]
    pub kind: SymmetryKind,
    /// Additional generators as rotation vectors (radians).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_rotvecs: Vec<[f64; 3]>,
}

impl SymmetrySpec {
    pub fn asymmetric() -> Self {
        Self { kind: SymmetryKind::Asymmetric, extra_rotvecs: Vec::new() }
    }

    pub fn discrete(axis: Vector3<f64>, n: u32) -> Result<Self> {
        let s = Self { kind: SymmetryKind::Discrete { axis: unit(axis)?.into(), n }, extra_rotvecs: Vec::new() };
        s.validate()?;
        Ok(s)
    }

    pub fn continuous(axis: Vector3<f64>) -> Result<Self> {
        Ok(Self { kind: SymmetryKind::Continuous { axis: unit(axis)?.into() }, extra_rotvecs: Vec::new() })
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            SymmetryKind::Asymmetric => {}
            SymmetryKind::Discrete { axis, n } => {
                if *n < 2 {
                    return Err(Error::InvalidArgument(format!("discrete symmetry needs n >= 2, got {n}")));
                }
                check_unit(axis)?;
            }
            SymmetryKind::Continuous { axis } => check_unit(axis)?,
        }
        if self.extra_rotvecs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite extra symmetry".into()));
        }
        Ok(())
    }

    pub fn axis(&self) -> Option<Vector3<f64>> {
        match &self.kind {
            SymmetryKind::Asymmetric => None,
            SymmetryKind::Discrete { axis, .. } | SymmetryKind::Continuous { axis } => Some(Vector3::from(*axis)),
        }
    }

    /// Fold count; `None` for continuous, `Some(1)` for asymmetric.
    pub fn order(&self) -> Option<u32> {
        match &self.kind {
            SymmetryKind::Asymmetric => Some(1),
            SymmetryKind::Discrete { n, .. } => Some(*n),
            SymmetryKind::Continuous { .. } => None,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self.kind, SymmetryKind::Asymmetric) || !self.extra_rotvecs.is_empty()
    }

    /// Group elements, identity first. Continuous groups are discretized at `step` radians.
    /// Extra generators are closed under composition (capped at `limit` elements).
    pub fn elements(&self, step: f64, limit: usize) -> Vec<Rotation<f64>> {
        let mut out = vec![Rotation::identity()];
        match &self.kind {
            SymmetryKind::Asymmetric => {}
            SymmetryKind::Discrete { axis, n } => {
                let a = Vector3::from(*axis);
                out.extend((1..*n).map(|i| Rotation::about_axis(&a, TAU * i as f64 / *n as f64)));
            }
            SymmetryKind::Continuous { axis } => {
                let a = Vector3::from(*axis);
                let m = (TAU / step).round().max(1.0) as usize;
                out.extend((1..m).map(|i| Rotation::about_axis(&a, TAU * i as f64 / m as f64)));
            }
        }
        if self.extra_rotvecs.is_empty() {
            return out;
        }
        let gens: Vec<Rotation<f64>> =
            self.extra_rotvecs.iter().map(|v| Rotation::from_axis_angle(&Vector3::from(*v))).collect();
        let mut frontier = out.clone();
        while !frontier.is_empty() && out.len() < limit {
            let mut next = Vec::new();
            for f in &frontier {
                for g in &gens {
                    let c = *g * *f;
                    if !out.iter().any(|e| d_ang(e, &c) < 1e-9) {
                        out.push(c);
                        next.push(c);
                        if out.len() >= limit {
                            break;
                        }
                    }
                }
            }
            frontier = next;
        }
        out
    }
}

fn unit(v: Vector3<f64>) -> Result<Vector3<f64>> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidArgument("symmetry axis must be a non-zero finite vector".into()));
    }
    Ok(v / n)
}

fn check_unit(a: &[f64; 3]) -> Result<()> {
    let n = Vector3::from(*a).norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("symmetry axis must be unit-norm (|a| = {n})")));
    }
    Ok(())
}

/// Orthonormal basis `(e1, e2)` completing `a` to a right-handed frame.
pub(crate) fn axis_basis(a: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (helper - a * a.dot(&helper)).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

/// Cylindrical coordinates `(r, h, alpha)` of `x` about `a`.
pub(crate) fn cylindrical(a: &Vector3<f64>, x: &Vector3<f64>) -> (f64, f64, f64) {
    let (e1, e2) = axis_basis(a);
    let (u, v) = (x.dot(&e1), x.dot(&e2));
    ((u * u + v * v).sqrt(), x.dot(a), v.atan2(u).rem_euclid(TAU))
}

/// Random Fourier feature embedding of symmetry-quotient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    symmetry: SymmetrySpec,
    dim: usize,
    length_scale: f64,
    seed: u64,
    weights: Vec<f64>,
    phases: Vec<f64>,
}

impl DescriptorField {
    pub fn new(symmetry: SymmetrySpec, dim: usize, length_scale: f64, seed: u64) -> Result<Self> {
        symmetry.validate()?;
        if dim == 0 || !(length_scale > 0.0) {
            return Err(Error::InvalidArgument("descriptor dimension and length scale must be positive".into()));
        }
        let q = quotient_dim(&symmetry);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6465_7363_7269_7074);
        let weights = (0..dim * q).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let phases = (0..dim).map(|_| rng.random::<f64>() * TAU).collect();
        Ok(Self { symmetry, dim, length_scale, seed, weights, phases })
    }

    /// Rebuilds a field from persisted parameters.
    pub fn from_parts(
        symmetry: SymmetrySpec,
        length_scale: f64,
        seed: u64,
        weights: Vec<f64>,
        phases: Vec<f64>,
    ) -> Result<Self> {
        let dim = phases.len();
        if dim == 0 || weights.len() != dim * quotient_dim(&symmetry) || !(length_scale > 0.0) {
            return Err(Error::Format("inconsistent descriptor field parameters".into()));
        }
        Ok(Self { symmetry, dim, length_scale, seed, weights, phases })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn symmetry(&self) -> &SymmetrySpec {
        &self.symmetry
    }

    /// Coordinates of `x` on the quotient by the symmetry group (meters).
    pub fn quotient(&self, x: &Vector3<f64>) -> Vec<f64> {
        match &self.symmetry.kind {
            SymmetryKind::Asymmetric => vec![x.x, x.y, x.z],
            SymmetryKind::Discrete { axis, n } => {
                let (r, h, alpha) = cylindrical(&Vector3::from(*axis), x);
                let nf = *n as f64;
                let ang = (nf * alpha).rem_euclid(TAU);
                vec![r, h, r / nf * ang.cos(), r / nf * ang.sin()]
            }
            SymmetryKind::Continuous { axis } => {
                let (r, h, _) = cylindrical(&Vector3::from(*axis), x);
                vec![r, h]
            }
        }
    }

    /// Unit descriptor of `x`.
    pub fn descriptor(&self, x: &Vector3<f64>) -> Vec<f64> {
        let u = self.quotient(x);
        let q = u.len();
        let mut out: Vec<f64> = (0..self.dim)
            .map(|j| {
                let w = &self.weights[j * q..(j + 1) * q];
                let arg: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() / self.length_scale;
                (arg + self.phases[j]).cos()
            })
            .collect();
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        } else {
            out[0] = 1.0;
        }
        out
    }
}

fn quotient_dim(s: &SymmetrySpec) -> usize {
    match s.kind {
        SymmetryKind::Asymmetric => 3,
        SymmetryKind::Discrete { .. } => 4,
        SymmetryKind::Continuous { .. } => 2,
    }
}

pub fn canonical_descriptor(field: &DescriptorField, x: &Vector3<f64>) -> Vec<f64> {
    field.descriptor(x)
}

/// `R_{L_X <- O}`: rows are the local axes expressed in the object frame.
pub fn canonical_local_frame(symmetry: &SymmetrySpec, x: &Vector3<f64>, diameter: f64) -> Result<Rotation<f64>> {
    let Some(a) = symmetry.axis() else {
        return Ok(Rotation::identity());
    };
    let perp = x - a * a.dot(x);
    let r = perp.norm();
    if r < 1e-6 * diameter {
        return Err(Error::OnAxisPoint(r));
    }
    let ex = perp / r;
    let ey = a.cross(&ex);
    let m = Matrix3::from_rows(&[ex.transpose(), ey.transpose(), a.transpose()]);
    Ok(Rotation::from_matrix(&m))
}

/// Folded-normal mean factor `E|N(0,1)|`.
pub fn folded_normal_mean() -> f64 {
    (2.0 / PI).sqrt()
}
