//! Uniform-grid spatial index over a fixed point set.

use nalgebra::Vector3;

#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Vector3<f64>>,
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    items: Vec<u32>,
}

const MAX_DIM: usize = 128;

impl PointIndex {
    /// `cell_hint` is the preferred cell edge (typically the sampling spacing).
    pub fn new(points: &[Vector3<f64>], cell_hint: f64) -> Self {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vector3::zeros();
            hi = Vector3::zeros();
        }
        let extent = hi - lo;
        let mut cell = if cell_hint > 0.0 { cell_hint } else { 1.0 };
        cell = cell.max(extent.max() / MAX_DIM as f64).max(1e-12);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize + 1).min(MAX_DIM + 1));
        let ncell = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; ncell + 1];
        let keys: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = Self::cell_of_raw(&lo, cell, &dims, p);
                (c[2] * dims[1] + c[1]) * dims[0] + c[0]
            })
            .collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        Self { points: points.to_vec(), origin: lo, cell, dims, starts: counts, items }
    }

    fn cell_of_raw(origin: &Vector3<f64>, cell: f64, dims: &[usize; 3], p: &Vector3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - origin[a]) / cell).floor();
            if c.is_nan() || c < 0.0 {
                0
            } else {
                (c as usize).min(dims[a] - 1)
            }
        })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn bucket(&self, c: [usize; 3]) -> &[u32] {
        let k = (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0];
        &self.items[self.starts[k] as usize..self.starts[k + 1] as usize]
    }

    /// Index of the closest point (ties broken by lower index). `None` only when empty.
    pub fn nearest(&self, q: &Vector3<f64>) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let c = Self::cell_of_raw(&self.origin, self.cell, &self.dims, q);
        let mut best: Option<(f64, usize)> = None;
        let max_ring = *self.dims.iter().max().unwrap_or(&1);
        for ring in 0..=max_ring {
            let r = ring as i64;
            for dz in -r..=r {
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        let cc = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                        if (0..3).any(|a| cc[a] < 0 || cc[a] >= self.dims[a] as i64) {
                            continue;
                        }
                        for &i in self.bucket(cc.map(|v| v as usize)) {
                            let d = (self.points[i as usize] - q).norm_squared();
                            let cand = (d, i as usize);
                            if best.is_none_or(|b| cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1)) {
                                best = Some(cand);
                            }
                        }
                    }
                }
            }
            if let Some((d, _)) = best {
                let reach = ring as f64 * self.cell;
                if d.sqrt() <= reach {
                    break;
                }
            }
        }
        best.map(|b| b.1)
    }

    /// Indices of all points within `radius` of `q`, ascending.
    pub fn within(&self, q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.points.is_empty() {
            return out;
        }
        let lo = Self::cell_of_raw(&self.origin, self.cell, &self.dims, &(q - Vector3::repeat(radius)));
        let hi = Self::cell_of_raw(&self.origin, self.cell, &self.dims, &(q + Vector3::repeat(radius)));
        let r2 = radius * radius;
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    for &i in self.bucket([x, y, z]) {
                        if (self.points[i as usize] - q).norm_squared() <= r2 {
                            out.push(i as usize);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vector3<f64>> =
            (0..2000).map(|_| Vector3::new(rng.random(), rng.random::<f64>() * 0.2, rng.random::<f64>() * 3.0)).collect();
        let idx = PointIndex::new(&pts, 0.05);
        for _ in 0..500 {
            let q = Vector3::new(rng.random::<f64>() * 2.0 - 0.5, rng.random::<f64>() - 0.4, rng.random::<f64>() * 4.0 - 0.5);
            let brute = (0..pts.len())
                .min_by(|&a, &b| (pts[a] - q).norm_squared().total_cmp(&(pts[b] - q).norm_squared()))
                .unwrap();
            assert_eq!(idx.nearest(&q), Some(brute));
            let r = 0.15;
            let want: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= r).collect();
            assert_eq!(idx.within(&q, r), want);
        }
    }

    #[test]
    fn empty_index() {
        let idx = PointIndex::new(&[], 1.0);
        assert_eq!(idx.nearest(&Vector3::zeros()), None);
        assert!(idx.within(&Vector3::zeros(), 1.0).is_empty());
    }
}
