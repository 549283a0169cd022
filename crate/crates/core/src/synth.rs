//! Procedural rigs for tests and demos: labeled humanoids, tetrapods and
//! random trees with tube meshes, optionally carrying planted defects.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{LABELS_SUFFIX, MESH_SUFFIX, SKELETON_SUFFIX};
use crate::geometry::{Aabb, Vec3};
use crate::groups::{Annotation, Taxonomy};
use crate::json::{self, JsonFileError};
use crate::mesh::TriMesh;
use crate::normalize::NormalizationTransform;
use crate::obj::mesh_to_obj;
use crate::skeleton::{Category, Joint, Skeleton, SkeletonError};
use crate::tokenizer::has_quantization_collision;

pub const MANIFEST_FILE: &str = "manifest.json";

const TUBE_SIDES: usize = 6;

// (name, parent index, rest position)
const HUMANOID_MAIN: [(&str, Option<usize>, [f64; 3]); 22] = [
    ("pelvis", None, [0.0, 0.0, 0.0]),
    ("spine", Some(0), [0.0, 0.25, 0.0]),
    ("neck", Some(1), [0.0, 0.5, 0.0]),
    ("head", Some(2), [0.0, 0.65, 0.02]),
    ("left_clavicle", Some(1), [0.08, 0.45, 0.0]),
    ("left_upper_arm", Some(4), [0.2, 0.44, 0.0]),
    ("left_forearm", Some(5), [0.4, 0.42, 0.01]),
    ("left_hand", Some(6), [0.55, 0.41, 0.02]),
    ("right_clavicle", Some(1), [-0.08, 0.45, 0.0]),
    ("right_upper_arm", Some(8), [-0.2, 0.44, 0.0]),
    ("right_forearm", Some(9), [-0.4, 0.42, 0.01]),
    ("right_hand", Some(10), [-0.55, 0.41, 0.02]),
    ("left_fingers", Some(7), [0.63, 0.4, 0.03]),
    ("right_fingers", Some(11), [-0.63, 0.4, 0.03]),
    ("left_thigh", Some(0), [0.1, -0.05, 0.0]),
    ("left_shin", Some(14), [0.11, -0.45, 0.01]),
    ("left_foot", Some(15), [0.12, -0.85, 0.0]),
    ("left_toes", Some(16), [0.12, -0.88, 0.12]),
    ("right_thigh", Some(0), [-0.1, -0.05, 0.0]),
    ("right_shin", Some(18), [-0.11, -0.45, 0.01]),
    ("right_foot", Some(19), [-0.12, -0.85, 0.0]),
    ("right_toes", Some(20), [-0.12, -0.88, 0.12]),
];

// (attachment joint, fine label name)
const HUMANOID_AUX: [(usize, &str); 8] = [
    (3, "hair_strand"),
    (3, "hair_braid"),
    (0, "skirt"),
    (5, "sleeve"),
    (9, "sleeve"),
    (2, "cape"),
    (3, "ribbon"),
    (1, "backpack"),
];

const TETRAPOD_MAIN: [(&str, Option<usize>, [f64; 3]); 19] = [
    ("pelvis", None, [0.0, 0.0, 0.0]),
    ("spine", Some(0), [0.2, 0.05, 0.0]),
    ("chest", Some(1), [0.4, 0.05, 0.0]),
    ("neck", Some(2), [0.55, 0.2, 0.0]),
    ("head", Some(3), [0.65, 0.3, 0.0]),
    ("jaw", Some(4), [0.72, 0.22, 0.0]),
    ("tail", Some(0), [-0.25, 0.05, 0.0]),
    ("front_left_upper_leg", Some(2), [0.4, -0.1, 0.1]),
    ("front_left_lower_leg", Some(7), [0.41, -0.3, 0.1]),
    ("front_left_foot", Some(8), [0.43, -0.45, 0.1]),
    ("front_right_upper_leg", Some(2), [0.4, -0.1, -0.1]),
    ("front_right_lower_leg", Some(10), [0.41, -0.3, -0.1]),
    ("front_right_foot", Some(11), [0.43, -0.45, -0.1]),
    ("hind_left_upper_leg", Some(0), [0.0, -0.1, 0.1]),
    ("hind_left_lower_leg", Some(13), [-0.02, -0.3, 0.1]),
    ("hind_left_foot", Some(14), [0.0, -0.45, 0.1]),
    ("hind_right_upper_leg", Some(0), [0.0, -0.1, -0.1]),
    ("hind_right_lower_leg", Some(16), [-0.02, -0.3, -0.1]),
    ("hind_right_foot", Some(17), [0.0, -0.45, -0.1]),
];

const TETRAPOD_AUX: [(usize, &str); 12] = [
    (4, "left_ear"),
    (4, "right_ear"),
    (4, "left_horn"),
    (4, "right_horn"),
    (2, "left_wing"),
    (2, "right_wing"),
    (1, "dorsal_fin"),
    (2, "left_pectoral_fin"),
    (2, "right_pectoral_fin"),
    (3, "mane"),
    (4, "rein"),
    (1, "saddle"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    Cycle,
    Forest,
    TooFewJoints,
    Drift,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DefectRates {
    pub cycle: f64,
    pub forest: f64,
    pub too_few_joints: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub count: usize,
    pub categories: Vec<Category>,
    /// Inclusive joint-count range. Humanoids and tetrapods never drop below
    /// their full main template unless the range forces it.
    pub joints: (usize, usize),
    #[serde(default)]
    pub defects: DefectRates,
}

impl SynthSpec {
    pub fn clean(count: usize) -> Self {
        Self {
            count,
            categories: vec![Category::Humanoid, Category::Tetrapod, Category::Other],
            joints: (5, 60),
            defects: DefectRates::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("count must be at least 1")]
    EmptyCount,
    #[error("no categories requested")]
    NoCategories,
    #[error("joint range {0:?} is empty or below 2")]
    BadJointRange((usize, usize)),
    #[error("defect rates sum to {0}, above 1")]
    BadDefectRates(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Json(#[from] JsonFileError),
}

/// A generated rig. `skeleton` carries labels for humanoids and tetrapods.
#[derive(Debug, Clone)]
pub struct Rig {
    pub skeleton: Skeleton,
    pub mesh: TriMesh,
}

fn jitter(rng: &mut impl Rng, amount: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-amount..=amount),
        rng.random_range(-amount..=amount),
        rng.random_range(-amount..=amount),
    )
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = jitter(rng, 1.0);
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

struct Builder {
    positions: Vec<Vec3>,
    parents: Vec<Option<usize>>,
    fine: Vec<Option<u16>>,
}

impl Builder {
    fn push(&mut self, p: Vec3, parent: Option<usize>, fine: Option<u16>) -> usize {
        self.positions.push(p);
        self.parents.push(parent);
        self.fine.push(fine);
        self.positions.len() - 1
    }

    fn chain(&mut self, rng: &mut impl Rng, from: usize, len: usize, fine: u16) {
        let mut dir = random_unit(rng);
        let mut at = from;
        for _ in 0..len {
            dir = (dir + jitter(rng, 0.35)).normalize();
            let p = self.positions[at] + dir * rng.random_range(0.03..0.07);
            at = self.push(p, Some(at), Some(fine));
        }
    }

    fn finish(self, category: Category) -> Skeleton {
        let mut s = Skeleton::from_parents(&self.positions, &self.parents, category).expect("generated skeleton");
        if let Some(tax) = Taxonomy::for_category(category) {
            for (j, f) in self.fine.iter().enumerate() {
                s.set_label(j, f.and_then(|f| tax.label(f)));
            }
        }
        s
    }
}

fn templated(
    rng: &mut impl Rng,
    n: usize,
    category: Category,
    main: &[(&str, Option<usize>, [f64; 3])],
    aux: &[(usize, &str)],
) -> Skeleton {
    let tax = Taxonomy::for_category(category).expect("templated category");
    let scale = rng.random_range(0.8..1.25);
    let mut b = Builder {
        positions: Vec::new(),
        parents: Vec::new(),
        fine: Vec::new(),
    };
    for &(name, parent, p) in main.iter().take(n) {
        let pos = Vec3::from(p) * scale + jitter(rng, 0.015);
        b.push(pos, parent, tax.fine_of(name));
    }
    let mut remaining = n.saturating_sub(main.len());
    while remaining > 0 {
        let &(attach, name) = aux.choose(rng).expect("aux table");
        let len = rng.random_range(1..=8usize).min(remaining);
        b.chain(rng, attach, len, tax.fine_of(name).expect("aux label"));
        remaining -= len;
    }
    b.finish(category)
}

fn random_tree(rng: &mut impl Rng, n: usize) -> Skeleton {
    let mut b = Builder {
        positions: Vec::new(),
        parents: Vec::new(),
        fine: Vec::new(),
    };
    b.push(Vec3::zeros(), None, None);
    for i in 1..n {
        let parent = rng.random_range(i.saturating_sub(8)..i);
        let p = b.positions[parent] + random_unit(rng) * rng.random_range(0.05..0.12);
        b.push(p, Some(parent), None);
    }
    b.finish(Category::Other)
}

/// A skeleton with `n` joints in its raw (unnormalized) frame.
pub fn synth_skeleton(rng: &mut impl Rng, category: Category, n: usize) -> Skeleton {
    match category {
        Category::Humanoid => templated(rng, n, category, &HUMANOID_MAIN, &HUMANOID_AUX),
        Category::Tetrapod => templated(rng, n, category, &TETRAPOD_MAIN, &TETRAPOD_AUX),
        Category::Other => random_tree(rng, n),
    }
}

/// A normalized labeled skeleton whose joints occupy distinct quantization cells.
pub fn collision_free_skeleton(rng: &mut impl Rng, category: Category, n: usize, resolution: u32) -> Skeleton {
    loop {
        let s = synth_skeleton(rng, category, n);
        let t = NormalizationTransform::fit(&s.positions()).expect("non-degenerate skeleton");
        // Fitting can overshoot the unit cube by an ulp.
        let s = t.apply_skeleton(&s).map_positions(|p| p.map(|c| c.clamp(-1.0, 1.0)));
        if !has_quantization_collision(&s, resolution).unwrap_or(true) {
            return s;
        }
    }
}

/// One hexagonal tube per bone, radius proportional to the skeleton extent.
pub fn tube_mesh(skeleton: &Skeleton) -> TriMesh {
    let positions = skeleton.positions();
    let bbox = Aabb::from_points(&positions).expect("non-empty skeleton");
    let radius = 0.01 * bbox.extent().max().max(1e-3);
    let mut mesh = TriMesh::default();
    for (parent, child) in skeleton.bones() {
        let a = positions[parent];
        let c = positions[child];
        let axis = c - a;
        if axis.norm() < 1e-12 {
            continue;
        }
        let axis = axis.normalize();
        let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let u = axis.cross(&helper).normalize();
        let v = axis.cross(&u);
        let base = mesh.vertices.len();
        for end in [a, c] {
            for s in 0..TUBE_SIDES {
                let theta = std::f64::consts::TAU * s as f64 / TUBE_SIDES as f64;
                mesh.vertices.push(end + (u * theta.cos() + v * theta.sin()) * radius);
            }
        }
        for s in 0..TUBE_SIDES {
            let s1 = (s + 1) % TUBE_SIDES;
            let (i0, i1) = (base + s, base + s1);
            let (j0, j1) = (i0 + TUBE_SIDES, i1 + TUBE_SIDES);
            mesh.triangles.push([i0, i1, j1]);
            mesh.triangles.push([i0, j1, j0]);
        }
    }
    mesh
}

pub fn synth_rig(rng: &mut impl Rng, category: Category, n: usize) -> Rig {
    let skeleton = synth_skeleton(rng, category, n);
    let mesh = tube_mesh(&skeleton);
    Rig { skeleton, mesh }
}

fn descendants(children: &[Vec<usize>], j: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = children[j].clone();
    while let Some(c) = stack.pop() {
        out.push(c);
        stack.extend(&children[c]);
    }
    out
}

/// Breaks the rig in the requested way. The mesh is left untouched.
pub fn plant_defect(rig: &mut Rig, defect: Defect, rng: &mut impl Rng) {
    let s = &rig.skeleton;
    let root = s.root();
    let mut joints: Vec<Joint> = s.joints().to_vec();
    match defect {
        Defect::Cycle => {
            let children = s.children();
            let inner: Vec<usize> = (0..s.len()).filter(|&j| j != root && !children[j].is_empty()).collect();
            if let Some(&j) = inner.choose(rng) {
                let below = descendants(&children, j);
                joints[j].parent = below.choose(rng).copied();
            } else {
                let others: Vec<usize> = (0..s.len()).filter(|&j| j != root).collect();
                let (a, b) = (others[0], others[1]);
                joints[a].parent = Some(b);
                joints[b].parent = Some(a);
            }
        }
        Defect::Forest => {
            let others: Vec<usize> = (0..s.len()).filter(|&j| j != root).collect();
            let j = *others.choose(rng).expect("at least two joints");
            joints[j].parent = None;
        }
        Defect::Drift => {
            let bbox = Aabb::from_points(&rig.mesh.vertices).expect("mesh vertices");
            let leaf = *s.leaves().choose(rng).expect("a leaf");
            let p = joints[leaf].position - bbox.center();
            let dir = if p.norm() > 1e-9 { p.normalize() } else { Vec3::x() };
            joints[leaf].position = bbox.center() + dir * bbox.diagonal();
        }
        // Regenerated by the caller with four joints.
        Defect::TooFewJoints => return,
    }
    rig.skeleton = Skeleton::new(joints, root, s.category()).expect("defect keeps ids");
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    pub category: Category,
    pub joints: usize,
    pub defect: Option<Defect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub spec: SynthSpec,
    pub items: Vec<ManifestItem>,
}

impl SynthManifest {
    pub fn load(dir: &Path) -> Result<Self, JsonFileError> {
        json::read(&dir.join(MANIFEST_FILE))
    }
}

/// Writes `<id>.skel.json` (unlabeled), `<id>.obj` and, for labeled rigs,
/// `<id>.labels.json`.
pub fn write_rig(dir: &Path, id: &str, rig: &Rig) -> Result<(), SynthError> {
    let mut bare = rig.skeleton.clone();
    bare.clear_labels();
    bare.save(&dir.join(format!("{id}{SKELETON_SUFFIX}")))?;
    let obj = dir.join(format!("{id}{MESH_SUFFIX}"));
    fs::write(&obj, mesh_to_obj(&rig.mesh)).map_err(|source| SynthError::Io { path: obj, source })?;
    if rig.skeleton.is_labeled() {
        let ann = Annotation::from_pairs(
            rig.skeleton
                .joints()
                .iter()
                .filter_map(|j| j.label.map(|l| (j.id, l.fine))),
        );
        let path = dir.join(format!("{id}{LABELS_SUFFIX}"));
        fs::write(&path, ann.to_json()).map_err(|source| SynthError::Io { path, source })?;
    }
    Ok(())
}

/// Generates a corpus into `dir`. Defects are assigned by quota,
/// `round(rate * count)` items each, to a seeded selection of rigs.
pub fn synth_corpus(dir: &Path, spec: &SynthSpec, seed: u64) -> Result<SynthManifest, SynthError> {
    if spec.count == 0 {
        return Err(SynthError::EmptyCount);
    }
    if spec.categories.is_empty() {
        return Err(SynthError::NoCategories);
    }
    let (lo, hi) = spec.joints;
    if lo < 2 || lo > hi {
        return Err(SynthError::BadJointRange(spec.joints));
    }
    let d = spec.defects;
    let total = d.cycle + d.forest + d.too_few_joints + d.drift;
    if total > 1.0 + 1e-12 || [d.cycle, d.forest, d.too_few_joints, d.drift].iter().any(|r| *r < 0.0) {
        return Err(SynthError::BadDefectRates(total));
    }
    fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.to_owned(),
        source,
    })?;

    let mut planted: Vec<Option<Defect>> = vec![None; spec.count];
    let mut order: Vec<usize> = (0..spec.count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut cursor = order.into_iter();
    for (defect, rate) in [
        (Defect::Cycle, d.cycle),
        (Defect::Forest, d.forest),
        (Defect::TooFewJoints, d.too_few_joints),
        (Defect::Drift, d.drift),
    ] {
        let quota = (rate * spec.count as f64).round() as usize;
        for i in cursor.by_ref().take(quota) {
            planted[i] = Some(defect);
        }
    }

    let mut items = Vec::with_capacity(spec.count);
    for (i, defect) in planted.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let category = spec.categories[i % spec.categories.len()];
        let n = match defect {
            Some(Defect::TooFewJoints) => 4,
            _ => rng.random_range(lo.max(5)..=hi.max(5)),
        };
        let mut rig = synth_rig(&mut rng, category, n);
        if let Some(defect) = defect {
            plant_defect(&mut rig, defect, &mut rng);
        }
        let id = format!("rig_{i:05}");
        write_rig(dir, &id, &rig)?;
        items.push(ManifestItem {
            id,
            category,
            joints: n,
            defect,
        });
    }
    let manifest = SynthManifest {
        seed,
        spec: spec.clone(),
        items,
    };
    json::write(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
