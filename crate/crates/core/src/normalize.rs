use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::mesh::MeshSample;
use crate::skeleton::Skeleton;

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("mesh has no points")]
    EmptyMesh,
    #[error("mesh bounding box has zero longest extent")]
    DegenerateExtent,
}

/// `normalized = (p - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormalizationTransform {
    pub const IDENTITY: Self = Self {
        center: [0.0; 3],
        scale: 1.0,
    };

    /// Centers the bounding box of `points` and maps its longest half-extent to 1.
    pub fn fit(points: &[Vec3]) -> Result<Self, NormalizeError> {
        let bb = Aabb::from_points(points).ok_or(NormalizeError::EmptyMesh)?;
        let half = bb.extent().max() * 0.5;
        if !(half > 0.0) {
            return Err(NormalizeError::DegenerateExtent);
        }
        let c = bb.center();
        Ok(Self {
            center: [c.x, c.y, c.z],
            scale: half,
        })
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p - self.center()) / self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p * self.scale + self.center()
    }

    pub fn apply_skeleton(&self, s: &Skeleton) -> Skeleton {
        s.map_positions(|p| self.apply(p))
    }

    pub fn invert_skeleton(&self, s: &Skeleton) -> Skeleton {
        s.map_positions(|p| self.invert(p))
    }

    pub fn apply_mesh(&self, m: &MeshSample) -> MeshSample {
        m.transformed(|p| self.apply(p), |n| *n)
    }

    pub fn invert_mesh(&self, m: &MeshSample) -> MeshSample {
        m.transformed(|p| self.invert(p), |n| *n)
    }
}

/// Maps mesh and skeleton into `[-1, 1]^3` using the mesh bounding box.
pub fn normalize(
    skeleton: &Skeleton,
    mesh: &MeshSample,
) -> Result<(Skeleton, MeshSample, NormalizationTransform), NormalizeError> {
    let t = NormalizationTransform::fit(mesh.points())?;
    Ok((t.apply_skeleton(skeleton), t.apply_mesh(mesh), t))
}
