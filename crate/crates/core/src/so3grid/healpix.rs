//! Nested-scheme HEALPix on the unit sphere, restricted to `nside = 2^order`.
//!
//! Face-local coordinates are computed independently of the order and scaled by
//! powers of two, so `pixel(order + 1) >> 2 == pixel(order)` holds exactly.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::real::{lit, to_f64, Real};

const JRLL: [i64; 12] = [2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4];
const JPLL: [i64; 12] = [1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7];

const NB_XOFFSET: [i64; 8] = [-1, -1, 0, 1, 1, 1, 0, -1];
const NB_YOFFSET: [i64; 8] = [0, 1, 1, 1, 0, -1, -1, -1];
const NB_FACEARRAY: [[i64; 12]; 9] = [
    [8, 9, 10, 11, -1, -1, -1, -1, 10, 11, 8, 9],
    [5, 6, 7, 4, 8, 9, 10, 11, 9, 10, 11, 8],
    [-1, -1, -1, -1, 5, 6, 7, 4, -1, -1, -1, -1],
    [4, 5, 6, 7, 11, 8, 9, 10, 11, 8, 9, 10],
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
    [1, 2, 3, 0, 0, 1, 2, 3, 5, 6, 7, 4],
    [-1, -1, -1, -1, 7, 4, 5, 6, -1, -1, -1, -1],
    [3, 0, 1, 2, 3, 0, 1, 2, 4, 5, 6, 7],
    [2, 3, 0, 1, -1, -1, -1, -1, 0, 1, 2, 3],
];
const NB_SWAPARRAY: [[u8; 3]; 9] = [[0, 0, 3], [0, 0, 6], [0, 0, 0], [0, 0, 5], [0, 0, 0], [5, 0, 0], [0, 0, 0], [6, 0, 0], [3, 0, 0]];

pub fn npix(order: u32) -> u64 {
    12 << (2 * order)
}

fn spread_bits(v: u64) -> u64 {
    let mut out = 0;
    for b in 0..32 {
        out |= ((v >> b) & 1) << (2 * b);
    }
    out
}

fn compress_bits(v: u64) -> u64 {
    let mut out = 0;
    for b in 0..32 {
        out |= ((v >> (2 * b)) & 1) << b;
    }
    out
}

fn xyf_to_nest(order: u32, ix: i64, iy: i64, face: i64) -> u64 {
    ((face as u64) << (2 * order)) + spread_bits(ix as u64) + (spread_bits(iy as u64) << 1)
}

fn nest_to_xyf(order: u32, pix: u64) -> (i64, i64, i64) {
    let face = (pix >> (2 * order)) as i64;
    let ipf = pix & ((1u64 << (2 * order)) - 1);
    (compress_bits(ipf) as i64, compress_bits(ipf >> 1) as i64, face)
}

/// Pixel containing the direction with cosine colatitude `z` and longitude `phi`.
///
/// `one_minus_abs_z` must equal `1 - |z|`; callers pass it separately so that it
/// keeps full precision near the poles.
pub fn pixel_of<T: Real>(order: u32, z: T, one_minus_abs_z: T, phi: T) -> u64 {
    let nside = 1i64 << order;
    let ns: T = lit(nside as f64);
    let two_pi = T::two_pi();
    let mut tt = (phi % two_pi + two_pi) % two_pi * lit::<T>(2.0 / PI);
    if tt >= lit(4.0) {
        tt -= lit(4.0);
    }
    let za = z.abs();
    let (ix, iy, face) = if za <= lit(2.0 / 3.0) {
        let a = lit::<T>(0.5) + tt - lit::<T>(0.75) * z;
        let b = lit::<T>(0.5) + tt + lit::<T>(0.75) * z;
        let jp = to_f64((ns * a).floor()) as i64;
        let jm = to_f64((ns * b).floor()) as i64;
        let ifp = jp >> order;
        let ifm = jm >> order;
        let face = if ifp == ifm {
            ifp | 4
        } else if ifp < ifm {
            ifp
        } else {
            ifm + 8
        };
        (jm & (nside - 1), nside - (jp & (nside - 1)) - 1, face)
    } else {
        let ntt = (to_f64(tt.floor()) as i64).min(3);
        let tp = tt - lit(ntt as f64);
        let s = (lit::<T>(3.0) * one_minus_abs_z).sqrt();
        let jp = (to_f64((ns * (tp * s)).floor()) as i64).min(nside - 1);
        let jm = (to_f64((ns * ((T::one() - tp) * s)).floor()) as i64).min(nside - 1);
        if z >= T::zero() {
            (nside - jm - 1, nside - jp - 1, ntt)
        } else {
            (jp, jm, ntt + 8)
        }
    };
    xyf_to_nest(order, ix, iy, face)
}

/// Center of a pixel as `(z, phi)` with `phi` in `[0, 2π)`.
pub fn pixel_center(order: u32, pix: u64) -> (f64, f64) {
    let nside = 1i64 << order;
    let (ix, iy, face) = nest_to_xyf(order, pix);
    let jr = JRLL[face as usize] * nside - ix - iy - 1;
    let fact2 = 1.0 / (3.0 * (nside * nside) as f64);
    let (nr, z, kshift) = if jr < nside {
        (jr, 1.0 - (jr * jr) as f64 * fact2, 0)
    } else if jr > 3 * nside {
        let nr = 4 * nside - jr;
        (nr, (nr * nr) as f64 * fact2 - 1.0, 0)
    } else {
        (nside, (2 * nside - jr) as f64 * 2.0 / (3.0 * nside as f64), (jr - nside) & 1)
    };
    let mut jp = (JPLL[face as usize] * nr + ix - iy + 1 + kshift) / 2;
    if jp > 4 * nside {
        jp -= 4 * nside;
    }
    if jp < 1 {
        jp += 4 * nside;
    }
    let phi = (jp as f64 - (kshift + 1) as f64 * 0.5) * (FRAC_PI_2 / nr as f64);
    (z, phi)
}

/// The 7 or 8 pixels sharing an edge or corner with `pix`.
pub fn neighbors(order: u32, pix: u64) -> Vec<u64> {
    let nside = 1i64 << order;
    let (ix, iy, face) = nest_to_xyf(order, pix);
    let mut out = Vec::with_capacity(8);
    for k in 0..8 {
        let mut x = ix + NB_XOFFSET[k];
        let mut y = iy + NB_YOFFSET[k];
        let mut nbnum = 4i64;
        if x < 0 {
            x += nside;
            nbnum -= 1;
        } else if x >= nside {
            x -= nside;
            nbnum += 1;
        }
        if y < 0 {
            y += nside;
            nbnum -= 3;
        } else if y >= nside {
            y -= nside;
            nbnum += 3;
        }
        let f = NB_FACEARRAY[nbnum as usize][face as usize];
        if f < 0 {
            continue;
        }
        let bits = NB_SWAPARRAY[nbnum as usize][(face >> 2) as usize];
        if bits & 1 != 0 {
            x = nside - x - 1;
        }
        if bits & 2 != 0 {
            y = nside - y - 1;
        }
        if bits & 4 != 0 {
            std::mem::swap(&mut x, &mut y);
        }
        out.push(xyf_to_nest(order, x, y, f));
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub fn direction(z: f64, phi: f64) -> [f64; 3] {
    let st = (1.0 - z * z).max(0.0).sqrt();
    [st * phi.cos(), st * phi.sin(), z]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hash(order: u32, z: f64, phi: f64) -> u64 {
        pixel_of(order, z, 1.0 - z.abs(), phi)
    }

    fn angle(a: [f64; 3], b: [f64; 3]) -> f64 {
        (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn centers_round_trip() {
        for order in 0..6 {
            for pix in 0..npix(order) {
                let (z, phi) = pixel_center(order, pix);
                assert_eq!(hash(order, z, phi), pix, "order {order} pix {pix}");
            }
        }
    }

    #[test]
    fn nested_hierarchy() {
        let mut state = 12345u64;
        for _ in 0..20000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let z = ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let phi = ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 * PI;
            for order in 0..7 {
                assert_eq!(hash(order + 1, z, phi) >> 2, hash(order, z, phi));
            }
        }
    }

    #[test]
    fn neighbors_are_symmetric_and_close() {
        for order in 0..5 {
            let nside = (1u64 << order) as f64;
            let spacing = (4.0 * PI / (12.0 * nside * nside)).sqrt();
            let mut seven = 0;
            for pix in 0..npix(order) {
                let nb = neighbors(order, pix);
                assert!(nb.len() == 7 || nb.len() == 8 || order == 0);
                if nb.len() == 7 {
                    seven += 1;
                }
                let (z, phi) = pixel_center(order, pix);
                for &q in &nb {
                    assert_ne!(q, pix);
                    assert!(neighbors(order, q).contains(&pix), "order {order}: {q} not reciprocal to {pix}");
                    let (zq, pq) = pixel_center(order, q);
                    assert!(angle(direction(z, phi), direction(zq, pq)) < 2.5 * spacing);
                }
            }
            if order > 0 {
                // 8 vertices where only three faces meet, 3 corner pixels each
                assert_eq!(seven, 24);
            }
        }
    }
}
