//! Triangle meshes, connected components and area-weighted surface sampling.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::obj::{self, ObjError};
use crate::union_find::DisjointSet;

/// Point count drawn from each mesh for shape conditioning.
pub const SAMPLE_COUNT: usize = 8192;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("every triangle has zero area")]
    DegenerateTriangleOnly,
    #[error("{points} points but {normals} normals")]
    LengthMismatch { points: usize, normals: usize },
    #[error("normal {index} has norm {norm}")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error(transparent)]
    Obj(#[from] ObjError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn load(path: &Path) -> Result<Self, MeshError> {
        Ok(obj::read_obj(path)?.mesh)
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Vertex sets of the vertex-sharing connected components. Vertices not
    /// referenced by any triangle are dropped.
    pub fn components(&self) -> Vec<Vec<Vec3>> {
        let mut ds = DisjointSet::new(self.vertices.len());
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            ds.union(t[0], t[1]);
            ds.union(t[0], t[2]);
            for &v in t {
                used[v] = true;
            }
        }
        ds.components()
            .into_iter()
            .filter(|c| used[c[0]])
            .map(|c| c.into_iter().map(|i| self.vertices[i]).collect())
            .collect()
    }
}

/// Oriented surface samples of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSample {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
    source: String,
}

impl MeshSample {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>, source: impl Into<String>) -> Result<Self, MeshError> {
        if points.len() != normals.len() {
            return Err(MeshError::LengthMismatch {
                points: points.len(),
                normals: normals.len(),
            });
        }
        for (index, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(MeshError::NonUnitNormal { index, norm });
            }
        }
        Ok(Self {
            points,
            normals,
            source: source.into(),
        })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps points through `f`; normals are rotated by `rotate` and renormalized.
    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3, rotate: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
            normals: self
                .normals
                .iter()
                .map(|n| {
                    let r = rotate(n);
                    let len = r.norm();
                    if len == 1.0 {
                        r
                    } else {
                        r / len
                    }
                })
                .collect(),
            source: self.source.clone(),
        }
    }

    /// Reorders samples; `order[i]` is the source index of output sample `i`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            points: order.iter().map(|&i| self.points[i]).collect(),
            normals: order.iter().map(|&i| self.normals[i]).collect(),
            source: self.source.clone(),
        }
    }
}

/// Area-weighted uniform sampling of the mesh surface, deterministic per seed.
/// Normals follow the stored winding (`(b - a) x (c - a)`).
pub fn sample_mesh(mesh: &TriMesh, count: usize, seed: u64, source: &str) -> Result<MeshSample, MeshError> {
    if mesh.triangles.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let areas: Vec<f64> = (0..mesh.triangles.len()).map(|t| mesh.triangle_area(t)).collect();
    let picker = WeightedIndex::new(&areas).map_err(|_| MeshError::DegenerateTriangleOnly)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let t = picker.sample(&mut rng);
        let [a, b, c] = mesh.triangle(t);
        let s = rng.random::<f64>().sqrt();
        let r = rng.random::<f64>();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r)) + c * (s * r));
        normals.push((b - a).cross(&(c - a)).normalize());
    }
    MeshSample::new(points, normals, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_square() -> TriMesh {
        TriMesh {
            vertices: vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            normals: vec![],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    #[test]
    fn planar_square_samples() {
        let s = sample_mesh(&unit_square(), 4, 7, "square").unwrap();
        assert_eq!(s.len(), 4);
        for (p, n) in s.points().iter().zip(s.normals()) {
            assert_eq!(p.z, 0.0);
            assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
            assert_eq!(*n, Vec3::new(0.0, 0.0, 1.0));
        }
        assert_eq!(s, sample_mesh(&unit_square(), 4, 7, "square").unwrap());
    }

    #[test]
    fn empty_and_degenerate() {
        assert!(matches!(
            sample_mesh(&TriMesh::default(), 4, 0, ""),
            Err(MeshError::EmptyMesh)
        ));
        let flat = TriMesh {
            vertices: vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            normals: vec![],
            triangles: vec![[0, 1, 2]],
        };
        assert!(matches!(
            sample_mesh(&flat, 4, 0, ""),
            Err(MeshError::DegenerateTriangleOnly)
        ));
    }

    #[test]
    fn sample_invariants_checked() {
        assert!(matches!(
            MeshSample::new(vec![Vec3::zeros()], vec![], ""),
            Err(MeshError::LengthMismatch { .. })
        ));
        assert!(matches!(
            MeshSample::new(vec![Vec3::zeros()], vec![Vec3::new(0.0, 0.0, 2.0)], ""),
            Err(MeshError::NonUnitNormal { .. })
        ));
    }

    #[test]
    fn components_by_shared_vertices() {
        let mut m = unit_square();
        let base = m.vertices.len();
        m.vertices.extend([Vec3::new(5.0, 0.0, 0.0), Vec3::new(6.0, 0.0, 0.0), Vec3::new(5.0, 1.0, 0.0)]);
        m.triangles.push([base, base + 1, base + 2]);
        let comps = m.components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].len(), 4);
        assert_eq!(comps[1].len(), 3);
    }
}
