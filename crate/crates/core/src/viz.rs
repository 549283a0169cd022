//! OBJ export for inspecting skeletons in a mesh viewer.

use crate::geometry::{Aabb, Vec3};
use crate::mesh::TriMesh;
use crate::obj::{write_mesh, ObjWriter};
use crate::skeleton::{Coarse, Skeleton};

const COARSE_ORDER: [Coarse; 5] = [Coarse::Main, Coarse::Hair, Coarse::Cloth, Coarse::Other, Coarse::Auxiliary];
const OCTAHEDRON_FACES: [[usize; 3]; 8] = [
    [0, 2, 4],
    [2, 1, 4],
    [1, 3, 4],
    [3, 0, 4],
    [2, 0, 5],
    [1, 2, 5],
    [3, 1, 5],
    [0, 3, 5],
];

/// Joints become octahedra, bones become `l` records between joint centers.
/// Labeled joints are split into one object per coarse group; unlabeled ones
/// go to an object named `Skeleton`. The mesh, if given, follows as `Mesh`.
pub fn export_viz(skeleton: &Skeleton, mesh: Option<&TriMesh>) -> String {
    let positions = skeleton.positions();
    let bbox = Aabb::from_points(&positions).expect("non-empty skeleton");
    let r = (0.01 * bbox.diagonal()).max(1e-3);

    let mut w = ObjWriter::new();
    w.comment(&format!("{} joints, {} bones", skeleton.len(), skeleton.bone_count()));
    let centers: Vec<usize> = positions.iter().map(|p| w.vertex(p)).collect();

    let group_of = |j: usize| skeleton.joint(j).label.map(|l| l.coarse);
    let mut groups: Vec<(String, Vec<usize>)> = COARSE_ORDER
        .iter()
        .map(|c| {
            let members = (0..skeleton.len()).filter(|&j| group_of(j) == Some(*c)).collect();
            (c.name().to_string(), members)
        })
        .collect();
    groups.push(("Skeleton".into(), (0..skeleton.len()).filter(|&j| group_of(j).is_none()).collect()));

    for (name, members) in groups.iter().filter(|(_, m)| !m.is_empty()) {
        w.object(name);
        for &j in members {
            let p = positions[j];
            let base = w.vertex_count();
            for axis in [Vec3::x(), Vec3::y(), Vec3::z()] {
                w.vertex(&(p + axis * r));
                w.vertex(&(p - axis * r));
            }
            // Vertex order: +x, -x, +y, -y, +z, -z.
            for f in OCTAHEDRON_FACES {
                w.face(&[base + f[0], base + f[1], base + f[2]]);
            }
            if let Some(parent) = skeleton.joint(j).parent.filter(|&p| p < skeleton.len()) {
                w.line(centers[parent], centers[j]);
            }
        }
    }
    if let Some(mesh) = mesh {
        w.object("Mesh");
        write_mesh(&mut w, mesh);
    }
    w.finish()
}
