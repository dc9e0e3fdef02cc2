//! Equi-volumetric partition of SO(3) built from HEALPix on the sphere times a
//! uniform discretization of the Hopf fiber angle.
//!
//! A rotation `R` is located by the direction `R·e_z` (a HEALPix pixel with
//! `nside = 2^k`) and the fiber angle `ψ = 2·atan2(q_z, q_w)` (one of `6·2^k`
//! slices). Haar measure factors into sphere area times `dψ`, so every cell has
//! volume `1 / (72·8^k)` of the group.

pub mod healpix;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{lit, to_f64, Real};
use crate::rotkit::Rotation;

pub const MAX_LEVEL: u32 = 8;

pub type CellIndex = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct So3Grid {
    level: u32,
}

/// Builds the partition at subdivision level `k`.
pub fn build_grid(k: u32) -> Result<So3Grid> {
    if k > MAX_LEVEL {
        return Err(Error::LevelTooLarge(k, MAX_LEVEL));
    }
    Ok(So3Grid { level: k })
}

impl So3Grid {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn nside(&self) -> u64 {
        1 << self.level
    }

    /// Number of fiber slices, `6·2^k`.
    pub fn psi_slices(&self) -> u64 {
        6 << self.level
    }

    pub fn sphere_pixels(&self) -> u64 {
        healpix::npix(self.level)
    }

    /// `72·8^k`.
    pub fn cell_count(&self) -> u64 {
        self.sphere_pixels() * self.psi_slices()
    }

    /// Typical angular extent of a cell (radians).
    pub fn cell_spacing(&self) -> f64 {
        std::f64::consts::FRAC_PI_3 / self.nside() as f64
    }

    fn split(&self, cell: CellIndex) -> (u64, u64) {
        (cell / self.psi_slices(), cell % self.psi_slices())
    }

    fn join(&self, pix: u64, slice: u64) -> CellIndex {
        pix * self.psi_slices() + slice
    }

    /// Bin index `ζ(R)`.
    pub fn bin_of<T: Real>(&self, r: &Rotation<T>) -> CellIndex {
        let [w, x, y, z] = r.to_quaternion();
        let two: T = lit(2.0);
        // third column of the rotation matrix
        let dx = two * (x * z + w * y);
        let dy = two * (y * z - w * x);
        let north = two * (x * x + y * y); // 1 - dz
        let south = two * (w * w + z * z); // 1 + dz
        let dz = T::one() - north;
        let one_minus_abs = if dz >= T::zero() { north } else { south };
        let phi = dy.atan2(dx);
        let pix = healpix::pixel_of(self.level, dz, one_minus_abs, phi);

        let mut u = to_f64(two * z.atan2(w)) / std::f64::consts::TAU;
        u -= u.floor();
        if u >= 1.0 {
            u = 0.0;
        }
        // u·6 is scaled by an exact power of two per level
        let slice = ((u * 6.0 * self.nside() as f64).floor() as u64).min(self.psi_slices() - 1);
        self.join(pix, slice)
    }

    /// Cell-center rotation.
    pub fn representative<T: Real>(&self, cell: CellIndex) -> Rotation<T> {
        let (pix, slice) = self.split(cell);
        let (z, phi) = healpix::pixel_center(self.level, pix);
        let psi_f = (slice as f64 + 0.5) * std::f64::consts::TAU / self.psi_slices() as f64;
        let theta = z.clamp(-1.0, 1.0).acos();
        // R = Rz(phi) Ry(theta) Rz(psi_f - phi)
        let rz1 = Rotation::<T>::about_axis(&Vector3::z(), lit(phi));
        let ry = Rotation::<T>::about_axis(&Vector3::y(), lit(theta));
        let rz2 = Rotation::<T>::about_axis(&Vector3::z(), lit(psi_f - phi));
        rz1 * ry * rz2
    }

    /// Enclosing cell one level coarser.
    pub fn parent(&self, cell: CellIndex) -> Option<CellIndex> {
        if self.level == 0 {
            return None;
        }
        let coarse = So3Grid { level: self.level - 1 };
        let (pix, slice) = self.split(cell);
        Some(coarse.join(pix >> 2, slice >> 1))
    }

    /// The eight cells one level finer.
    pub fn children(&self, cell: CellIndex) -> Vec<CellIndex> {
        let fine = So3Grid { level: self.level + 1 };
        let (pix, slice) = self.split(cell);
        let mut out = Vec::with_capacity(8);
        for p in 0..4 {
            for s in 0..2 {
                out.push(fine.join((pix << 2) + p, (slice << 1) + s));
            }
        }
        out
    }

    /// 1-ring: neighboring sphere pixels (and the pixel itself) times adjacent slices, minus the cell.
    pub fn neighbors(&self, cell: CellIndex) -> Vec<CellIndex> {
        let (pix, slice) = self.split(cell);
        let n = self.psi_slices();
        let mut pixels = healpix::neighbors(self.level, pix);
        pixels.push(pix);
        let mut out = Vec::with_capacity(27);
        for p in pixels {
            for ds in [n - 1, 0, 1] {
                let c = self.join(p, (slice + ds) % n);
                if c != cell {
                    out.push(c);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Connected components of `cells` under [`So3Grid::neighbors`], each sorted, ordered by smallest member.
    pub fn connected_components(&self, cells: &[CellIndex]) -> Vec<Vec<CellIndex>> {
        let set: BTreeSet<CellIndex> = cells.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let mut comps = Vec::new();
        for &start in &set {
            if !seen.insert(start) {
                continue;
            }
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(c) = queue.pop_front() {
                for nb in self.neighbors(c) {
                    if set.contains(&nb) && seen.insert(nb) {
                        comp.push(nb);
                        queue.push_back(nb);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn bins_of<T: Real>(&self, rotations: &[Rotation<T>]) -> Vec<CellIndex> {
        rotations.par_iter().map(|r| self.bin_of(r)).collect()
    }
}

/// Hypothesis counts per cell, `Q(H, G_k, i)`. Cells absent from the map have count zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityHistogram {
    grid: So3Grid,
    counts: BTreeMap<CellIndex, usize>,
}

impl DensityHistogram {
    pub fn from_bins(grid: So3Grid, bins: &[CellIndex]) -> Self {
        let mut sorted = bins.to_vec();
        sorted.par_sort_unstable();
        let mut counts = BTreeMap::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            counts.insert(sorted[i], j - i);
            i = j;
        }
        Self { grid, counts }
    }

    pub fn grid(&self) -> So3Grid {
        self.grid
    }

    pub fn count(&self, cell: CellIndex) -> usize {
        self.counts.get(&cell).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn max_count(&self) -> usize {
        self.counts.values().copied().max().unwrap_or(0)
    }

    /// Non-zero cells in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = (CellIndex, usize)> + '_ {
        self.counts.iter().map(|(&c, &n)| (c, n))
    }

    pub fn occupied(&self) -> usize {
        self.counts.len()
    }

    /// Re-aggregates into the parent level.
    pub fn coarsen(&self) -> Option<DensityHistogram> {
        let coarse = build_grid(self.grid.level.checked_sub(1)?).ok()?;
        let mut counts = BTreeMap::new();
        for (&c, &n) in &self.counts {
            *counts.entry(self.grid.parent(c)?).or_insert(0) += n;
        }
        Some(DensityHistogram { grid: coarse, counts })
    }
}

/// `Q` for a list of hypotheses.
pub fn density<T: Real>(grid: &So3Grid, hypotheses: &[Rotation<T>]) -> DensityHistogram {
    DensityHistogram::from_bins(*grid, &grid.bins_of(hypotheses))
}
