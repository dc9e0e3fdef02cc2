//! Z-buffer rasterization by exact ray casting through pixel centers, and point visibility.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::rotkit::{CameraIntrinsics, Pose};
use crate::symmodel::TriMesh;

pub const NO_TRIANGLE: u32 = u32::MAX;

/// Per-pixel nearest depth (camera z, meters) and triangle id.
#[derive(Debug, Clone, PartialEq)]
pub struct ZBuffer {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub triangle: Vec<u32>,
}

impl ZBuffer {
    pub fn covered(&self, u: u32, v: u32) -> bool {
        self.triangle[(v * self.width + u) as usize] != NO_TRIANGLE
    }
}

/// Ray `t·d` from the camera center against triangle `abc`; returns `t` (camera depth when `d.z = 1`).
pub(crate) fn ray_triangle(d: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, slack: f64) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv = 1.0 / det;
    let s = -a;
    let u = s.dot(&p) * inv;
    if u < -slack || u > 1.0 + slack {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < -slack || u + v > 1.0 + slack {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

pub(crate) fn camera_vertices(mesh: &TriMesh, pose: &Pose<f64>) -> Result<Vec<Vector3<f64>>> {
    mesh.vertices()
        .iter()
        .map(|v| {
            let p = pose.transform(v);
            if p.z > 0.0 {
                Ok(p)
            } else {
                Err(Error::NonPositiveDepth(p.z))
            }
        })
        .collect()
}

pub fn rasterize(mesh: &TriMesh, k: &CameraIntrinsics<f64>, pose: &Pose<f64>) -> Result<ZBuffer> {
    let cam = camera_vertices(mesh, pose)?;
    let (w, h) = (k.width, k.height);
    let mut zb = ZBuffer {
        width: w,
        height: h,
        depth: vec![f64::INFINITY; (w * h) as usize],
        triangle: vec![NO_TRIANGLE; (w * h) as usize],
    };
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let [a, b, c] = tri.map(|i| cam[i as usize]);
        let pa = Vector2::new(k.fx * a.x / a.z + k.cx, k.fy * a.y / a.z + k.cy);
        let pb = Vector2::new(k.fx * b.x / b.z + k.cx, k.fy * b.y / b.z + k.cy);
        let pc = Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
        let lo = pa.inf(&pb).inf(&pc);
        let hi = pa.sup(&pb).sup(&pc);
        let u0 = (lo.x - 0.5).ceil().max(0.0);
        let v0 = (lo.y - 0.5).ceil().max(0.0);
        let u1 = (hi.x - 0.5).floor().min(w as f64 - 1.0);
        let v1 = (hi.y - 0.5).floor().min(h as f64 - 1.0);
        if u0 > u1 || v0 > v1 {
            continue;
        }
        for v in v0 as u32..=v1 as u32 {
            for u in u0 as u32..=u1 as u32 {
                let d = Vector3::new((u as f64 + 0.5 - k.cx) / k.fx, (v as f64 + 0.5 - k.cy) / k.fy, 1.0);
                if let Some(t) = ray_triangle(&d, &a, &b, &c, 1e-12) {
                    let idx = (v * w + u) as usize;
                    if t < zb.depth[idx] {
                        zb.depth[idx] = t;
                        zb.triangle[idx] = ti as u32;
                    }
                }
            }
        }
    }
    Ok(zb)
}

/// Largest canvas edge used for visibility tests (pixels).
const MAX_CANVAS: f64 = 4096.0;

/// Indices of model points not hidden by the mesh itself under `pose`, seen through `k`.
/// The test runs on a canvas covering the whole projected mesh, so points projecting outside
/// `k`'s image are still classified.
pub fn visible_point_indices(
    mesh: &TriMesh,
    points: &[Vector3<f64>],
    k: &CameraIntrinsics<f64>,
    pose: &Pose<f64>,
) -> Result<Vec<usize>> {
    let cam = camera_vertices(mesh, pose)?;
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for p in &cam {
        let q = Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    if !(hi.x - lo.x < MAX_CANVAS && hi.y - lo.y < MAX_CANVAS) {
        return Err(Error::InvalidArgument("projected object too large for visibility canvas".into()));
    }
    let x0 = lo.x.floor() as i64 - 2;
    let y0 = lo.y.floor() as i64 - 2;
    let cw = (hi.x.ceil() as i64 - x0 + 3) as u32;
    let ch = (hi.y.ceil() as i64 - y0 + 3) as u32;
    let canvas = k.crop(x0, y0, cw, ch);
    let zb = rasterize(mesh, &canvas, pose)?;
    let eps = 1e-4 * mesh.diameter();
    let loose = 2e-2 * mesh.diameter();
    let mut out = Vec::new();
    let mut cands: Vec<u32> = Vec::with_capacity(9);
    for (i, x) in points.iter().enumerate() {
        let p = pose.transform(x);
        if p.z <= 0.0 {
            continue;
        }
        let d = p / p.z;
        let u = canvas.fx * d.x + canvas.cx;
        let v = canvas.fy * d.y + canvas.cy;
        let (pu, pv) = (u.floor() as i64, v.floor() as i64);
        cands.clear();
        for dv in -1..=1 {
            for du in -1..=1 {
                let (qu, qv) = (pu + du, pv + dv);
                if qu >= 0 && qv >= 0 && (qu as u32) < cw && (qv as u32) < ch {
                    let t = zb.triangle[(qv as u32 * cw + qu as u32) as usize];
                    if t != NO_TRIANGLE && !cands.contains(&t) {
                        cands.push(t);
                    }
                }
            }
        }
        let mut front = f64::INFINITY;
        let mut found = false;
        for &t in &cands {
            let [a, b, c] = mesh.triangles()[t as usize].map(|j| cam[j as usize]);
            if let Some(depth) = ray_triangle(&d, &a, &b, &c, 1e-9) {
                found = true;
                front = front.min(depth);
            }
        }
        let visible = if found {
            p.z <= front + eps
        } else if pu >= 0 && pv >= 0 && (pu as u32) < cw && (pv as u32) < ch {
            p.z <= zb.depth[(pv as u32 * cw + pu as u32) as usize] + loose
        } else {
            true
        };
        if visible {
            out.push(i);
        }
    }
    Ok(out)
}
