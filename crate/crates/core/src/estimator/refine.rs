//! Levenberg-Marquardt minimization of squared reprojection error over six pose parameters.

use nalgebra::{Matrix6, Vector2, Vector3, Vector6};

use crate::real::{lit, Real};
use crate::rotkit::{CameraIntrinsics, Pose, Rotation};

/// Sum of squared reprojection errors (px²); `None` if any point is behind the camera.
pub fn reprojection_cost<T: Real>(k: &CameraIntrinsics<T>, pose: &Pose<T>, points: &[Vector3<T>], pixels: &[Vector2<T>]) -> Option<T> {
    let mut acc = T::zero();
    for (x, px) in points.iter().zip(pixels) {
        let p = k.project_camera_point(&pose.transform(x)).ok()?;
        acc += (p - px).norm_squared();
    }
    Some(acc)
}

/// Refines `pose` with left-multiplicative rotation updates; never returns a worse pose.
pub fn refine_pose<T: Real>(
    k: &CameraIntrinsics<T>,
    pose: &Pose<T>,
    points: &[Vector3<T>],
    pixels: &[Vector2<T>],
    max_iterations: usize,
) -> Pose<T> {
    let Some(mut cost) = reprojection_cost(k, pose, points, pixels) else {
        return *pose;
    };
    let mut best = *pose;
    let mut lambda: T = lit(1e-3);
    for _ in 0..max_iterations {
        let mut jtj = Matrix6::<T>::zeros();
        let mut jtr = Vector6::<T>::zeros();
        for (x, px) in points.iter().zip(pixels) {
            let rx = best.rotation.rotate(x);
            let p = rx + best.translation;
            let iz = T::one() / p.z;
            let r = Vector2::new(k.fx * p.x * iz + k.cx - px.x, k.fy * p.y * iz + k.cy - px.y);
            // d(projection)/d(camera point)
            let du = Vector3::new(k.fx * iz, T::zero(), -k.fx * p.x * iz * iz);
            let dv = Vector3::new(T::zero(), k.fy * iz, -k.fy * p.y * iz * iz);
            // d(camera point)/d(omega) = -[R x]_x, so row·(-[Rx]_x) = (Rx × row)
            let (cu, cv) = (rx.cross(&du), rx.cross(&dv));
            let ju = Vector6::new(cu.x, cu.y, cu.z, du.x, du.y, du.z);
            let jv = Vector6::new(cv.x, cv.y, cv.z, dv.x, dv.y, dv.z);
            jtj += ju * ju.transpose() + jv * jv.transpose();
            jtr += ju * r.x + jv * r.y;
        }
        let mut improved = false;
        for _ in 0..8 {
            let mut a = jtj;
            for i in 0..6 {
                a[(i, i)] += lambda * (jtj[(i, i)] + T::default_epsilon());
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-jtr))) else {
                lambda *= lit(10.0);
                continue;
            };
            let w = Vector3::new(delta[0], delta[1], delta[2]);
            let cand = Pose::new(Rotation::from_axis_angle(&w) * best.rotation, best.translation + Vector3::new(delta[3], delta[4], delta[5]));
            match reprojection_cost(k, &cand, points, pixels) {
                Some(c) if c < cost => {
                    let gain = cost - c;
                    best = cand;
                    cost = c;
                    lambda = (lambda / lit(10.0)).max(lit(1e-12));
                    improved = gain > T::default_epsilon() * (T::one() + cost);
                    break;
                }
                _ => lambda *= lit(10.0),
            }
        }
        if !improved {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotkit::d_ang;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn converges_from_perturbed_start() {
        let k = CameraIntrinsics::new(600.0, 600.0, 64.0, 64.0, 128, 128).unwrap();
        let gt = Pose::new(Rotation::about_axis(&Vector3::new(1.0, 2.0, 0.5).normalize(), 0.9), Vector3::new(0.01, 0.02, 0.7));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vector3<f64>> =
            (0..40).map(|_| Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))).collect();
        let px: Vec<Vector2<f64>> = pts.iter().map(|x| k.project_camera_point(&gt.transform(x)).unwrap()).collect();
        let start = Pose::new(Rotation::about_axis(&Vector3::x(), 0.05) * gt.rotation, gt.translation + Vector3::new(0.005, -0.004, 0.02));
        let out = refine_pose(&k, &start, &pts, &px, 20);
        assert!(d_ang(&out.rotation, &gt.rotation) < 1e-9);
        assert!((out.translation - gt.translation).norm() < 1e-9);
        assert!(reprojection_cost(&k, &out, &pts, &px).unwrap() < 1e-12);
    }
}
