//! Even surface sampling by weighted sample elimination over area-weighted candidates.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::TriMesh;
use crate::error::{Error, Result};

/// Candidate pool size relative to the requested count.
const OVERSAMPLE: usize = 5;

/// Ideal nearest-neighbour distance of `n` points on area `area` in a hexagonal packing.
pub fn ideal_spacing(area: f64, n: usize) -> f64 {
    (2.0 * area / (3f64.sqrt() * n.max(1) as f64)).sqrt()
}

/// `max_points` blue-noise points on the mesh surface, deterministic in `seed`.
pub fn sample_surface(mesh: &TriMesh, max_points: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    let area = mesh.area();
    if !(area > 0.0) {
        return Err(Error::DegenerateMesh("zero total area".into()));
    }
    if max_points == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cand = area_weighted(mesh, OVERSAMPLE * max_points, &mut rng);
    let r_max = (area / (2.0 * 3f64.sqrt() * max_points as f64)).sqrt();
    let keep = eliminate(&cand, max_points, r_max);
    Ok(keep.into_iter().map(|i| cand[i]).collect())
}

pub(crate) fn area_weighted(mesh: &TriMesh, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let ntri = mesh.triangles().len();
    let mut cdf = Vec::with_capacity(ntri);
    let mut acc = 0.0;
    for t in 0..ntri {
        acc += mesh.triangle_area(t);
        cdf.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let t = cdf.partition_point(|&c| c <= u).min(ntri - 1);
            let [a, b, c] = mesh.triangle(t);
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect()
}

#[derive(PartialEq)]
struct Entry {
    weight: f64,
    idx: usize,
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight.total_cmp(&other.weight).then(other.idx.cmp(&self.idx))
    }
}

/// Weighted sample elimination (Yuksel 2015). Returns ascending indices of `target` survivors.
pub(crate) fn eliminate(points: &[Vector3<f64>], target: usize, r_max: f64) -> Vec<usize> {
    if points.len() <= target {
        return (0..points.len()).collect();
    }
    let reach = 2.0 * r_max;
    let ratio = target as f64 / points.len() as f64;
    let r_min = r_max * (1.0 - ratio.powf(1.5)) * 0.65;
    let key = |p: &Vector3<f64>| -> (i64, i64, i64) {
        ((p.x / reach).floor() as i64, (p.y / reach).floor() as i64, (p.z / reach).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let weight = |d: f64| (1.0 - d.max(r_min) / reach).powi(8);
    let neighbors = |i: usize, out: &mut Vec<(usize, f64)>| {
        out.clear();
        let p = &points[i];
        let (cx, cy, cz) = key(p);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &j in bucket {
                            if j != i {
                                let d = (points[j] - p).norm();
                                if d < reach {
                                    out.push((j, weight(d)));
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    let mut w = vec![0.0; points.len()];
    let mut buf = Vec::new();
    for (i, wi) in w.iter_mut().enumerate() {
        neighbors(i, &mut buf);
        *wi = buf.iter().map(|&(_, x)| x).sum();
    }
    let mut heap: BinaryHeap<Entry> = w.iter().enumerate().map(|(idx, &weight)| Entry { weight, idx }).collect();
    let mut removed = vec![false; points.len()];
    let mut alive = points.len();
    while alive > target {
        let Some(Entry { weight, idx }) = heap.pop() else { break };
        if removed[idx] || weight != w[idx] {
            continue;
        }
        removed[idx] = true;
        alive -= 1;
        neighbors(idx, &mut buf);
        for &(j, x) in &buf {
            if !removed[j] {
                w[j] -= x;
                heap.push(Entry { weight: w[j], idx: j });
            }
        }
    }
    (0..points.len()).filter(|&i| !removed[i]).collect()
}
