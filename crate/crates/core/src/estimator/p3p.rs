//! Minimal three-point absolute pose via Grunert's quartic in the depth ratio.

use nalgebra::{Matrix3, Matrix4, Schur, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::real::{lit, Real};
use crate::rotkit::{CameraIntrinsics, Pose, Rotation};

/// Real roots of `c[0]·x⁴ + … + c[4]`, Newton-polished, ascending.
pub(crate) fn real_quartic_roots<T: Real>(c: [T; 5]) -> Vec<T> {
    let scale = c.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return Vec::new();
    }
    let c = c.map(|v| v / scale);
    let lead = c.iter().position(|v| v.abs() > lit(1e-12)).unwrap_or(4);
    let deg = 4 - lead;
    let p = &c[lead..];
    let mut roots: Vec<T> = match deg {
        0 => Vec::new(),
        1 => vec![-p[1] / p[0]],
        _ => {
            // companion matrix of the monic polynomial, padded to 4x4
            let mut m = Matrix4::<T>::zeros();
            for i in 0..deg {
                m[(0, i)] = -p[i + 1] / p[0];
            }
            for i in 1..deg {
                m[(i, i - 1)] = T::one();
            }
            let Some(schur) = Schur::try_new(m, T::default_epsilon(), 500) else {
                return Vec::new();
            };
            let ev = schur.complex_eigenvalues();
            (0..deg)
                .filter_map(|i| {
                    let z = ev[i];
                    (z.im.abs() <= lit::<T>(1e-6) * (T::one() + z.re.abs())).then_some(z.re)
                })
                .collect()
        }
    };
    let eval = |x: T| c.iter().fold((T::zero(), T::zero()), |(f, df), &a| (f * x + a, df * x + f));
    for r in roots.iter_mut() {
        // near a double root the derivative vanishes; only accept steps that shrink |f|
        for _ in 0..8 {
            let (f, df) = eval(*r);
            if df == T::zero() {
                break;
            }
            let next = *r - f / df;
            if eval(next).0.abs() >= f.abs() {
                break;
            }
            *r = next;
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    roots.dedup_by(|a, b| (*a - *b).abs() <= lit::<T>(1e-10) * (T::one() + b.abs()));
    roots
}

/// Rigid transform `q_i = R·p_i + t` from three (or more) pairs (Kabsch).
pub(crate) fn absolute_orientation<T: Real>(p: &[Vector3<T>], q: &[Vector3<T>]) -> Pose<T> {
    let n: T = lit(p.len() as f64);
    let cp = p.iter().fold(Vector3::zeros(), |a, v| a + v) / n;
    let cq = q.iter().fold(Vector3::zeros(), |a, v| a + v) / n;
    let mut h = Matrix3::<T>::zeros();
    for (a, b) in p.iter().zip(q) {
        h += (b - cq) * (a - cp).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut d = Matrix3::<T>::identity();
    if (u * vt).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    let r = u * d * vt;
    let rot = Rotation::from_matrix(&r);
    Pose::new(rot, cq - rot.rotate(&cp))
}

/// Up to four poses mapping `points` (object frame) onto `pixels` (continuous image coordinates).
pub fn p3p_solve<T: Real>(k: &CameraIntrinsics<T>, points: &[Vector3<T>; 3], pixels: &[Vector2<T>; 3]) -> Result<Vec<Pose<T>>> {
    let [p1, p2, p3] = *points;
    let span = (p2 - p1).norm().max((p3 - p1).norm()).max((p3 - p2).norm());
    if span == T::zero() || (p2 - p1).cross(&(p3 - p1)).norm() <= lit::<T>(1e-10) * span * span {
        return Err(Error::CollinearPoints);
    }
    let j = pixels.map(|x| k.ray(&x));
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        if (j[a] - j[b]).norm() <= lit(1e-12) {
            return Err(Error::InvalidArgument("pixels must be distinct".into()));
        }
    }
    let a2 = (p2 - p3).norm_squared();
    let b2 = (p1 - p3).norm_squared();
    let c2 = (p1 - p2).norm_squared();
    let ca = j[1].dot(&j[2]);
    let cb = j[0].dot(&j[2]);
    let cg = j[0].dot(&j[1]);
    let one = T::one();
    let two: T = lit(2.0);
    let four: T = lit(4.0);
    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let coeffs = [
        (amc - one) * (amc - one) - four * c2 / b2 * ca * ca,
        four * (amc * (one - amc) * cb - (one - apc) * ca * cg + two * c2 / b2 * ca * ca * cb),
        two * (amc * amc - one + two * amc * amc * cb * cb + two * (b2 - c2) / b2 * ca * ca - four * apc * ca * cb * cg
            + two * (b2 - a2) / b2 * cg * cg),
        four * (-amc * (one + amc) * cb + two * a2 / b2 * cg * cg * cb - (one - apc) * ca * cg),
        (one + amc) * (one + amc) - four * a2 / b2 * cg * cg,
    ];
    let mut poses = Vec::new();
    for v in real_quartic_roots(coeffs) {
        if v <= T::zero() {
            continue;
        }
        let s1sq = b2 / (one + v * v - two * v * cb);
        if !(s1sq > T::zero()) {
            continue;
        }
        let s1 = s1sq.sqrt();
        let den = two * (cg - v * ca);
        let mut us = Vec::new();
        if den.abs() > lit(1e-5) {
            us.push(((amc - one) * v * v - two * amc * cb * v + one + amc) / den);
        } else {
            // u² − 2u·cγ + 1 − c²/s1² = 0
            let disc = cg * cg - one + c2 / s1sq;
            if disc >= T::zero() {
                us.push(cg + disc.sqrt());
                us.push(cg - disc.sqrt());
            }
        }
        for u in us {
            if u <= T::zero() {
                continue;
            }
            let mut s = Vector3::new(s1, u * s1, v * s1);
            polish_depths(&mut s, [a2, b2, c2], [ca, cb, cg]);
            if s.iter().any(|x| *x <= T::zero()) {
                continue;
            }
            let q = [j[0] * s[0], j[1] * s[1], j[2] * s[2]];
            let pose = absolute_orientation(points, &q);
            let dup = poses.iter().any(|p: &Pose<T>| {
                crate::rotkit::d_ang(&p.rotation, &pose.rotation) < lit(1e-9) && (p.translation - pose.translation).norm() < lit::<T>(1e-9) * span
            });
            if !dup {
                poses.push(pose);
            }
        }
    }
    let tol = lit::<T>(1e-6).max(lit::<T>(1e3) * T::default_epsilon() * (T::one() + lit(k.width.max(k.height) as f64)));
    poses.retain(|pose| {
        points.iter().zip(pixels).all(|(x, px)| match k.project_camera_point(&pose.transform(x)) {
            Ok(pr) => (pr - px).norm() <= tol,
            Err(_) => false,
        })
    });
    if poses.is_empty() {
        return Err(Error::NoRealSolution);
    }
    Ok(poses)
}

/// Newton steps on the three law-of-cosines equations for the depths.
fn polish_depths<T: Real>(s: &mut Vector3<T>, [a2, b2, c2]: [T; 3], [ca, cb, cg]: [T; 3]) {
    let two: T = lit(2.0);
    for _ in 0..4 {
        let (s1, s2, s3) = (s[0], s[1], s[2]);
        let f = Vector3::new(
            s2 * s2 + s3 * s3 - two * s2 * s3 * ca - a2,
            s1 * s1 + s3 * s3 - two * s1 * s3 * cb - b2,
            s1 * s1 + s2 * s2 - two * s1 * s2 * cg - c2,
        );
        let jac = Matrix3::new(
            T::zero(),
            two * (s2 - s3 * ca),
            two * (s3 - s2 * ca),
            two * (s1 - s3 * cb),
            T::zero(),
            two * (s3 - s1 * cb),
            two * (s1 - s2 * cg),
            two * (s2 - s1 * cg),
            T::zero(),
        );
        match jac.lu().solve(&f) {
            Some(step) if step.iter().all(|v| v.is_finite()) => *s -= step,
            _ => break,
        }
    }
}
