//! Binary model file: magic, version, JSON header, then little-endian blobs.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DescriptorField, SymModel, SymmetrySpec, TriMesh};
use crate::error::{Error, Result};
use crate::rotkit::Rotation;

const MAGIC: &[u8; 8] = b"SYMMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    symmetry: SymmetrySpec,
    seed: u64,
    descriptor_dim: usize,
    length_scale_m: f64,
    spacing_m: f64,
    diameter_m: f64,
    mesh_sha256: String,
    vertex_count: usize,
    triangle_count: usize,
    point_count: usize,
    field_weight_count: usize,
}

fn put_f64(buf: &mut Vec<u8>, vals: impl IntoIterator<Item = f64>) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Format("truncated model file".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

fn vec3s(flat: Vec<f64>) -> Vec<Vector3<f64>> {
    flat.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

impl SymModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            symmetry: self.symmetry().clone(),
            seed: self.seed,
            descriptor_dim: self.dim(),
            length_scale_m: self.field.length_scale(),
            spacing_m: self.spacing,
            diameter_m: self.diameter(),
            mesh_sha256: self.mesh.hash_hex(),
            vertex_count: self.mesh.vertices().len(),
            triangle_count: self.mesh.triangles().len(),
            point_count: self.points.len(),
            field_weight_count: self.field.weights().len(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        put_f64(&mut buf, self.mesh.vertices().iter().flat_map(|v| [v.x, v.y, v.z]));
        for t in self.mesh.triangles() {
            for i in t {
                buf.extend_from_slice(&i.to_le_bytes());
            }
        }
        put_f64(&mut buf, self.points.iter().flat_map(|v| [v.x, v.y, v.z]));
        put_f64(&mut buf, self.descriptors.iter().copied());
        put_f64(
            &mut buf,
            self.frames.iter().flat_map(|f| {
                let q = f.unit_quaternion();
                [q.w, q.i, q.j, q.k]
            }),
        );
        put_f64(&mut buf, self.field.weights().iter().copied());
        put_f64(&mut buf, self.field.phases().iter().copied());
        buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut c = Cursor { data, pos: 0 };
        if c.take(8)? != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = c.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let hlen = c.u32()? as usize;
        let h: Header = serde_json::from_slice(c.take(hlen)?)?;
        h.symmetry.validate()?;
        let vertices = vec3s(c.f64s(3 * h.vertex_count)?);
        let tri_flat = c.u32s(3 * h.triangle_count)?;
        let triangles = tri_flat.chunks_exact(3).map(|t| [t[0], t[1], t[2]]).collect();
        let mesh = TriMesh::new(vertices, triangles)?;
        if mesh.hash_hex() != h.mesh_sha256 {
            return Err(Error::Format("mesh hash mismatch".into()));
        }
        let points = vec3s(c.f64s(3 * h.point_count)?);
        let descriptors = c.f64s(h.point_count * h.descriptor_dim)?;
        let frames = c
            .f64s(4 * h.point_count)?
            .chunks_exact(4)
            .map(|q| Rotation::from_unit_quaternion(UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3]))))
            .collect();
        let weights = c.f64s(h.field_weight_count)?;
        let phases = c.f64s(h.descriptor_dim)?;
        if c.pos != data.len() {
            return Err(Error::Format("trailing bytes in model file".into()));
        }
        let field = DescriptorField::from_parts(h.symmetry, h.length_scale_m, h.seed, weights, phases)?;
        Ok(SymModel::from_raw(mesh, field, points, descriptors, frames, h.spacing_m, h.seed))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        Self::from_bytes(&data)
    }

    /// SHA-256 of the serialized model.
    pub fn hash_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmodel::{build_symmodel, mesh::hex_prism};

    #[test]
    fn round_trip_and_corruption() {
        let m = build_symmodel(hex_prism(0.05, 0.08).unwrap(), SymmetrySpec::discrete(Vector3::z(), 6).unwrap(), 500, 16, 3)
            .unwrap();
        let bytes = m.to_bytes();
        let back = SymModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        assert!(SymModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SymModel::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(SymModel::from_bytes(&extra).is_err());
    }
}
