//! Triangle meshes, bundled primitives and ASCII PLY input/output.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    diameter: f64,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::DegenerateMesh("mesh has no triangles".into()));
        }
        let n = vertices.len() as u32;
        if triangles.iter().flatten().any(|&i| i >= n) {
            return Err(Error::DegenerateMesh("triangle index out of range".into()));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::DegenerateMesh("non-finite vertex".into()));
        }
        let mut diameter: f64 = 0.0;
        for (i, a) in vertices.iter().enumerate() {
            for b in &vertices[i + 1..] {
                diameter = diameter.max((a - b).norm());
            }
        }
        if diameter <= 0.0 {
            return Err(Error::DegenerateMesh("zero diameter".into()));
        }
        Ok(Self { vertices, triangles, diameter })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    /// Maximum pairwise vertex distance (meters).
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn triangle(&self, t: usize) -> [Vector3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges.values().all(|&c| c == 2)
    }

    /// Distance from `p` to the closest point of the surface.
    pub fn distance_to_surface(&self, p: &Vector3<f64>) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// SHA-256 over vertex and index bytes.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.vertices {
            for c in v.iter() {
                h.update(c.to_le_bytes());
            }
        }
        for t in &self.triangles {
            for i in t {
                h.update(i.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Concatenates meshes; each part keeps its own (closed) connectivity.
    pub fn merge(parts: &[TriMesh]) -> Result<TriMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for p in parts {
            let off = vertices.len() as u32;
            vertices.extend_from_slice(&p.vertices);
            triangles.extend(p.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
        }
        TriMesh::new(vertices, triangles)
    }

    pub fn to_ply(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ply\nformat ascii 1.0");
        let _ = writeln!(s, "element vertex {}", self.vertices.len());
        let _ = writeln!(s, "property double x\nproperty double y\nproperty double z");
        let _ = writeln!(s, "element face {}", self.triangles.len());
        let _ = writeln!(s, "property list uchar int vertex_indices\nend_header");
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    /// Parses ASCII PLY with a `vertex` element (x, y, z among its scalar properties)
    /// and a `face` element whose polygons are fan-triangulated.
    pub fn from_ply<R: BufRead>(reader: R) -> Result<TriMesh> {
        let mut lines = reader.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of PLY".into()))?
                .map_err(Error::from)
        };
        if next()?.trim() != "ply" {
            return Err(Error::Format("missing ply magic".into()));
        }
        let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
        loop {
            let line = next()?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                ["format", fmt, ..] if *fmt != "ascii" => {
                    return Err(Error::Format(format!("unsupported PLY format {fmt}")));
                }
                ["element", name, count] => {
                    let count = count.parse().map_err(|_| Error::Format("bad element count".into()))?;
                    elements.push((name.to_string(), count, Vec::new()));
                }
                ["property", "list", _, _, name] => {
                    if let Some(e) = elements.last_mut() {
                        e.2.push(format!("list:{name}"));
                    }
                }
                ["property", _, name] => {
                    if let Some(e) = elements.last_mut() {
                        e.2.push(name.to_string());
                    }
                }
                ["end_header"] => break,
                _ => {}
            }
        }
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (name, count, props) in &elements {
            for _ in 0..*count {
                let line = next()?;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad number {t:?}"))))
                    .collect::<Result<_>>()?;
                match name.as_str() {
                    "vertex" => {
                        let idx = |p: &str| {
                            props.iter().position(|q| q == p).ok_or_else(|| Error::Format(format!("vertex lacks {p}")))
                        };
                        let (ix, iy, iz) = (idx("x")?, idx("y")?, idx("z")?);
                        let get = |i: usize| vals.get(i).copied().ok_or_else(|| Error::Format("short vertex row".into()));
                        vertices.push(Vector3::new(get(ix)?, get(iy)?, get(iz)?));
                    }
                    "face" => {
                        let n = *vals.first().ok_or_else(|| Error::Format("empty face row".into()))? as usize;
                        if vals.len() < n + 1 || n < 3 {
                            return Err(Error::Format("malformed face".into()));
                        }
                        let idx: Vec<u32> = vals[1..=n].iter().map(|&v| v as u32).collect();
                        for k in 1..n - 1 {
                            triangles.push([idx[0], idx[k], idx[k + 1]]);
                        }
                    }
                    _ => {}
                }
            }
        }
        TriMesh::new(vertices, triangles)
    }
}

pub fn closest_point_on_triangle(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    // Ericson, Real-Time Collision Detection, 5.1.5
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Closed prism over a regular `segments`-gon about the z axis, centered at the origin.
/// Vertex `k` of each ring sits at azimuth `k·2π/segments`.
pub fn regular_prism(circumradius: f64, height: f64, segments: usize) -> Result<TriMesh> {
    if segments < 3 || circumradius <= 0.0 || height <= 0.0 {
        return Err(Error::InvalidArgument("prism needs >= 3 segments and positive size".into()));
    }
    let h = height / 2.0;
    let mut v = Vec::with_capacity(2 * segments + 2);
    for k in 0..segments {
        let a = TAU * k as f64 / segments as f64;
        v.push(Vector3::new(circumradius * a.cos(), circumradius * a.sin(), -h));
    }
    for k in 0..segments {
        let a = TAU * k as f64 / segments as f64;
        v.push(Vector3::new(circumradius * a.cos(), circumradius * a.sin(), h));
    }
    let bottom = (2 * segments) as u32;
    let top = bottom + 1;
    v.push(Vector3::new(0.0, 0.0, -h));
    v.push(Vector3::new(0.0, 0.0, h));
    let s = segments as u32;
    let mut t = Vec::with_capacity(4 * segments);
    for k in 0..s {
        let k1 = (k + 1) % s;
        t.push([k, k1, s + k1]);
        t.push([k, s + k1, s + k]);
        t.push([bottom, k1, k]);
        t.push([top, s + k, s + k1]);
    }
    TriMesh::new(v, t)
}

/// Faceted cylinder about z (continuous symmetry up to faceting).
pub fn cylinder(radius: f64, height: f64, segments: usize) -> Result<TriMesh> {
    regular_prism(radius, height, segments)
}

pub fn hex_prism(circumradius: f64, height: f64) -> Result<TriMesh> {
    regular_prism(circumradius, height, 6)
}

/// Closed axis-aligned box.
pub fn cuboid(center: Vector3<f64>, half: Vector3<f64>) -> Result<TriMesh> {
    let mut v = Vec::with_capacity(8);
    for i in 0..8 {
        let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
        v.push(center + Vector3::new(s(0) * half.x, s(1) * half.y, s(2) * half.z));
    }
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let mut t = Vec::with_capacity(12);
    for q in quads {
        t.push([q[0], q[1], q[2]]);
        t.push([q[0], q[2], q[3]]);
    }
    TriMesh::new(v, t)
}

/// Cube of edge `side` with a small box covering the `(+,+,+)` corner.
pub fn cube_with_marker(side: f64, marker_fraction: f64) -> Result<TriMesh> {
    let h = side / 2.0;
    let m = side * marker_fraction / 2.0;
    let cube = cuboid(Vector3::zeros(), Vector3::new(h, h, h))?;
    let marker = cuboid(Vector3::new(h, h, h), Vector3::new(m, m, m))?;
    TriMesh::merge(&[cube, marker])
}

/// Hexagonal prism with a flat box standing on the top cap, off the axis,
/// centered at azimuth 0 and `offset` from the axis.
pub fn prism_with_marker(
    circumradius: f64,
    height: f64,
    marker_half: Vector3<f64>,
    offset: f64,
) -> Result<TriMesh> {
    let prism = hex_prism(circumradius, height)?;
    let center = Vector3::new(offset, 0.0, height / 2.0 + marker_half.z);
    let marker = cuboid(center, marker_half)?;
    TriMesh::merge(&[prism, marker])
}

/// Icosphere with `subdivisions` rounds of 4-way splitting.
pub fn icosphere(radius: f64, subdivisions: u32) -> Result<TriMesh> {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vector3<f64>> = [
        [-1.0, p, 0.0],
        [1.0, p, 0.0],
        [-1.0, -p, 0.0],
        [1.0, -p, 0.0],
        [0.0, -1.0, p],
        [0.0, 1.0, p],
        [0.0, -1.0, -p],
        [0.0, 1.0, -p],
        [p, 0.0, -1.0],
        [p, 0.0, 1.0],
        [-p, 0.0, -1.0],
        [-p, 0.0, 1.0],
    ]
    .iter()
    .map(|c| Vector3::new(c[0], c[1], c[2]).normalize())
    .collect();
    let mut t: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, v: &mut Vec<Vector3<f64>>| -> u32 {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(((v[a as usize] + v[b as usize]) / 2.0).normalize());
                (v.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(t.len() * 4);
        for [a, b, c] in t {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        t = next;
    }
    TriMesh::new(v.into_iter().map(|x| x * radius).collect(), t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_watertight() {
        assert!(cylinder(0.05, 0.1, 64).unwrap().is_watertight());
        assert!(hex_prism(0.05, 0.08).unwrap().is_watertight());
        assert!(cube_with_marker(0.1, 0.2).unwrap().is_watertight());
        assert!(prism_with_marker(0.05, 0.06, Vector3::new(0.01, 0.01, 0.004), 0.025).unwrap().is_watertight());
        assert!(icosphere(1.0, 2).unwrap().is_watertight());
    }

    #[test]
    fn areas_match_closed_forms() {
        let r = 0.05;
        let h = 0.08;
        let hex = hex_prism(r, h).unwrap();
        let expected = 6.0 * r * h + 2.0 * 1.5 * 3f64.sqrt() * r * r;
        assert!((hex.area() - expected).abs() < 1e-12);
        let cube = cuboid(Vector3::zeros(), Vector3::new(0.5, 0.5, 0.5)).unwrap();
        assert!((cube.area() - 6.0).abs() < 1e-12);
        assert!((cube.diameter() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ply_round_trip() {
        let m = prism_with_marker(0.05, 0.06, Vector3::new(0.01, 0.01, 0.004), 0.025).unwrap();
        let text = m.to_ply();
        let back = TriMesh::from_ply(text.as_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash_hex(), m.hash_hex());
    }

    #[test]
    fn ply_quads_and_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment unit square\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 1\n1 0 0 1\n1 1 0 1\n0 1 0 1\n4 0 1 2 3\n";
        let m = TriMesh::from_ply(text.as_bytes()).unwrap();
        assert_eq!(m.triangles().len(), 2);
        assert!((m.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(TriMesh::new(vec![Vector3::zeros()], vec![[0, 0, 0]]).is_err());
        assert!(TriMesh::new(vec![Vector3::zeros(), Vector3::x()], vec![[0, 1, 2]]).is_err());
        assert!(TriMesh::from_ply("ply\nformat binary_little_endian 1.0\nend_header\n".as_bytes()).is_err());
    }

    #[test]
    fn closest_point_cases() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(1.0, 0.0, 0.0);
        let c = Vector3::new(0.0, 1.0, 0.0);
        let inside = closest_point_on_triangle(&Vector3::new(0.2, 0.2, 3.0), &a, &b, &c);
        assert!((inside - Vector3::new(0.2, 0.2, 0.0)).norm() < 1e-12);
        let corner = closest_point_on_triangle(&Vector3::new(-1.0, -1.0, 0.0), &a, &b, &c);
        assert!((corner - a).norm() < 1e-12);
        let edge = closest_point_on_triangle(&Vector3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((edge - Vector3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
    }
}
