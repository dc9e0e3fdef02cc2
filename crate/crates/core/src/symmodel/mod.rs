//! Discretized symmetry-aware object model: evenly sampled surface points, each carrying a
//! symmetry-canonical descriptor and an equivariant local frame.

pub mod fields;
pub mod index;
mod losses;
pub mod mesh;
mod persist;
pub mod sampling;

use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use fields::{canonical_descriptor, canonical_local_frame, DescriptorField, SymmetryKind, SymmetrySpec};
pub use index::PointIndex;
pub use losses::{eval_losses, Losses};
pub(crate) use losses::log_partition;
pub use mesh::TriMesh;
pub use persist::MODEL_FORMAT_VERSION;
pub use sampling::{ideal_spacing, sample_surface};

use crate::error::{Error, Result};
use crate::rotkit::{d_ang, Rotation};

pub const MAX_MODEL_POINTS: usize = 50_000;
pub const DEFAULT_DESCRIPTOR_DIM: usize = 128;

#[derive(Debug, Clone)]
pub struct SymModel {
    mesh: TriMesh,
    field: DescriptorField,
    points: Vec<Vector3<f64>>,
    descriptors: Vec<f64>,
    frames: Vec<Rotation<f64>>,
    spacing: f64,
    seed: u64,
    index: PointIndex,
}

impl PartialEq for SymModel {
    fn eq(&self, o: &Self) -> bool {
        self.mesh == o.mesh
            && self.field == o.field
            && self.points == o.points
            && self.descriptors == o.descriptors
            && self.frames == o.frames
            && self.spacing == o.spacing
            && self.seed == o.seed
    }
}

pub fn build_symmodel(
    mesh: TriMesh,
    symmetry: SymmetrySpec,
    max_points: usize,
    descriptor_dim: usize,
    seed: u64,
) -> Result<SymModel> {
    symmetry.validate()?;
    if !symmetry.extra_rotvecs.is_empty() {
        return Err(Error::InvalidArgument(
            "extra symmetry generators are not supported by the analytic fields".into(),
        ));
    }
    if max_points == 0 || max_points > MAX_MODEL_POINTS {
        return Err(Error::InvalidArgument(format!("max_points must be in 1..={MAX_MODEL_POINTS}")));
    }
    let area = mesh.area();
    if !(area > 0.0) {
        return Err(Error::DegenerateMesh("zero total area".into()));
    }
    let spacing = ideal_spacing(area, max_points);
    let points = match &symmetry.kind {
        SymmetryKind::Asymmetric => sample_surface(&mesh, max_points, seed)?,
        SymmetryKind::Discrete { axis, n } => sample_discrete(&mesh, &Vector3::from(*axis), *n, max_points, seed)?,
        SymmetryKind::Continuous { axis } => sample_rings(&mesh, &Vector3::from(*axis), max_points, spacing, seed)?,
    };
    if points.is_empty() {
        return Err(Error::DegenerateMesh("no surface points could be sampled".into()));
    }
    let field = DescriptorField::new(symmetry, descriptor_dim, spacing, seed)?;
    SymModel::assemble(mesh, field, points, spacing, seed)
}

/// Samples with the fundamental wedge replicated by the group so that symmetric regions carry
/// exactly symmetric point sets; points in asymmetric regions are kept as sampled.
fn sample_discrete(mesh: &TriMesh, axis: &Vector3<f64>, n: u32, max_points: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    let tol = 1e-9 * mesh.diameter();
    let on_axis = 1e-6 * mesh.diameter();
    let wedge = TAU / n as f64;
    let group: Vec<Rotation<f64>> = (0..n).map(|i| Rotation::about_axis(axis, wedge * i as f64)).collect();
    let mut target = max_points;
    for _ in 0..8 {
        let raw = sample_surface(mesh, target, seed)?;
        let mut out = Vec::with_capacity(raw.len() + n as usize);
        for x in &raw {
            let (r, _, alpha) = fields::cylindrical(axis, x);
            if r < on_axis {
                continue;
            }
            let m = ((alpha / wedge).floor() as u32).min(n - 1);
            if m == 0 {
                out.push(*x);
                for g in &group[1..] {
                    let y = g.rotate(x);
                    if mesh.distance_to_surface(&y) <= tol {
                        out.push(y);
                    }
                }
            } else {
                let back = group[(n - m) as usize].rotate(x);
                if mesh.distance_to_surface(&back) > tol {
                    out.push(*x);
                }
            }
        }
        if out.len() <= max_points {
            return Ok(out);
        }
        let shrink = max_points as f64 / out.len() as f64;
        target = ((target as f64 * shrink).floor() as usize).saturating_sub(1).max(1);
    }
    Err(Error::DegenerateMesh("could not meet the point budget after symmetrization".into()))
}

/// Surface of revolution sampling: an even 1-D sampling of the meridian profile, each profile
/// sample swept into a ring of points spaced about `spacing` apart.
fn sample_rings(mesh: &TriMesh, axis: &Vector3<f64>, max_points: usize, spacing: f64, seed: u64) -> Result<Vec<Vector3<f64>>> {
    let (e1, e2) = fields::axis_basis(axis);
    let on_axis = 1e-6 * mesh.diameter();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cands = sampling::area_weighted(mesh, 5 * max_points.max(200), &mut rng);
    let area = mesh.area();
    let cyl: Vec<(f64, f64, f64)> = cands.iter().map(|x| fields::cylindrical(axis, x)).collect();
    let per = area / cands.len() as f64;
    let length: f64 = cyl.iter().map(|&(r, _, _)| per / (TAU * r.max(spacing / 4.0))).sum();
    let mut k = ((length / spacing).round() as usize).max(1);
    let pool = cands.len().min(80 * k);
    let profile: Vec<Vector3<f64>> = cyl[..pool].iter().map(|&(r, h, _)| Vector3::new(r, h, 0.0)).collect();
    let ring_size = |r: f64| ((TAU * r / spacing).round() as usize).max(1);
    for _ in 0..8 {
        let keep = sampling::eliminate(&profile, k, spacing / 2.0);
        let total: usize = keep.iter().filter(|&&i| cyl[i].0 >= on_axis).map(|&i| ring_size(cyl[i].0)).sum();
        if total <= max_points {
            let mut out = Vec::with_capacity(total);
            for &i in &keep {
                let (r, h, alpha) = cyl[i];
                if r < on_axis {
                    continue;
                }
                let m = ring_size(r);
                for j in 0..m {
                    let t = alpha + TAU * j as f64 / m as f64;
                    out.push((e1 * t.cos() + e2 * t.sin()) * r + axis * h);
                }
            }
            return Ok(out);
        }
        k = ((k as f64 * max_points as f64 / total as f64).floor() as usize).saturating_sub(1).max(1);
    }
    Err(Error::DegenerateMesh("could not meet the point budget for ring sampling".into()))
}

/// Worst-case deviations found by [`SymModel::symmetry_consistency`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    /// Max |descriptor(nearest(S·X)) − descriptor(X)| over components.
    pub max_descriptor_error: f64,
    /// Max d_ang(frame(nearest(S·X)), frame(X)·S⁻¹), radians.
    pub max_frame_error: f64,
    /// Points whose frame error exceeded `frame_tolerance(X)`.
    pub frame_violations: usize,
    pub checked: usize,
}

impl SymModel {
    fn assemble(mesh: TriMesh, field: DescriptorField, points: Vec<Vector3<f64>>, spacing: f64, seed: u64) -> Result<Self> {
        let symmetry = field.symmetry().clone();
        let frames = points
            .iter()
            .map(|x| canonical_local_frame(&symmetry, x, mesh.diameter()))
            .collect::<Result<Vec<_>>>()?;
        let mut descriptors = Vec::with_capacity(points.len() * field.dim());
        for x in &points {
            descriptors.extend(field.descriptor(x));
        }
        Ok(Self::from_raw(mesh, field, points, descriptors, frames, spacing, seed))
    }

    pub(crate) fn from_raw(
        mesh: TriMesh,
        field: DescriptorField,
        points: Vec<Vector3<f64>>,
        descriptors: Vec<f64>,
        frames: Vec<Rotation<f64>>,
        spacing: f64,
        seed: u64,
    ) -> Self {
        let index = PointIndex::new(&points, spacing);
        Self { mesh, field, points, descriptors, frames, spacing, seed, index }
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn symmetry(&self) -> &SymmetrySpec {
        self.field.symmetry()
    }

    pub fn field(&self) -> &DescriptorField {
        &self.field
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Vector3<f64> {
        &self.points[i]
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        let d = self.field.dim();
        &self.descriptors[i * d..(i + 1) * d]
    }

    /// Row-major `len() × dim()` descriptor matrix.
    pub fn descriptors(&self) -> &[f64] {
        &self.descriptors
    }

    pub fn frame(&self, i: usize) -> &Rotation<f64> {
        &self.frames[i]
    }

    pub fn frames(&self) -> &[Rotation<f64>] {
        &self.frames
    }

    /// Nominal sampling spacing (meters).
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn diameter(&self) -> f64 {
        self.mesh.diameter()
    }

    pub fn index(&self) -> &PointIndex {
        &self.index
    }

    pub fn nearest(&self, x: &Vector3<f64>) -> usize {
        self.index.nearest(x).expect("model has points")
    }

    /// Frame tolerance for point `x`: `2·spacing/diameter`, widened to `2·spacing/r` for
    /// continuous symmetries where ring neighbours sit `spacing` apart along a ring of radius `r`.
    pub fn frame_tolerance(&self, x: &Vector3<f64>) -> f64 {
        let base = 2.0 * self.spacing / self.diameter();
        match &self.symmetry().kind {
            SymmetryKind::Continuous { axis } => {
                let (r, _, _) = fields::cylindrical(&Vector3::from(*axis), x);
                base.max(2.0 * self.spacing / r)
            }
            _ => base,
        }
    }

    /// Checks descriptor and frame consistency under every element of the symmetry group
    /// (continuous groups at `step` radians).
    pub fn symmetry_consistency(&self, step: f64) -> ConsistencyReport {
        let group = self.symmetry().elements(step, 4096);
        let mut rep = ConsistencyReport { max_descriptor_error: 0.0, max_frame_error: 0.0, frame_violations: 0, checked: 0 };
        for s in &group[1..] {
            let sinv = s.inverse();
            for (i, x) in self.points.iter().enumerate() {
                let j = self.nearest(&s.rotate(x));
                let de = self
                    .descriptor(i)
                    .iter()
                    .zip(self.descriptor(j))
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let fe = d_ang(&self.frames[j], &(self.frames[i] * sinv));
                rep.max_descriptor_error = rep.max_descriptor_error.max(de);
                rep.max_frame_error = rep.max_frame_error.max(fe);
                if fe > self.frame_tolerance(x) {
                    rep.frame_violations += 1;
                }
                rep.checked += 1;
            }
        }
        rep
    }
}
