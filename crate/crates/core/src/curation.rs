//! Corpus filtering, stratified train/test splitting and geometric augmentation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::{Rotation3, Unit};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::mesh::{MeshSample, TriMesh};
use crate::normalize::{normalize, NormalizeError};
use crate::skeleton::{validate_tree, Category, Skeleton};

pub const DEFAULT_MIN_JOINTS: usize = 5;
pub const DEFAULT_MARGIN: f64 = 0.05;
/// Held-out share per stratum (1,491 of 82,633 shapes).
pub const DEFAULT_TEST_FRACTION: f64 = 0.018;

pub const SKELETON_SUFFIX: &str = ".skel.json";
pub const LABELS_SUFFIX: &str = ".labels.json";
pub const MESH_SUFFIX: &str = ".obj";

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("mesh has no components")]
    EmptyMesh,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainmentResult {
    pub pass: bool,
    pub offending: Vec<usize>,
}

/// Checks that every leaf joint lies within `margin * diagonal` of the mesh,
/// where the diagonal is that of the whole mesh's bounding box.
///
/// A leaf inside the bounding box of a component counts as contained;
/// otherwise its distance to the nearest component point is compared.
pub fn check_terminal_containment(
    skeleton: &Skeleton,
    components: &[Vec<Vec3>],
    margin: f64,
) -> Result<ContainmentResult, CurationError> {
    let boxes: Vec<Aabb> = components.iter().filter_map(|c| Aabb::from_points(c)).collect();
    if boxes.is_empty() {
        return Err(CurationError::EmptyMesh);
    }
    let whole = Aabb::from_points(components.iter().flatten()).expect("non-empty");
    let limit = margin * whole.diagonal();
    let offending: Vec<usize> = skeleton
        .leaves()
        .into_iter()
        .filter(|&leaf| {
            let p = skeleton.position(leaf);
            if boxes.iter().any(|b| b.contains(&p)) {
                return false;
            }
            let nearest = components
                .iter()
                .flatten()
                .map(|q| (p - q).norm())
                .fold(f64::INFINITY, f64::min);
            nearest > limit
        })
        .collect();
    Ok(ContainmentResult {
        pass: offending.is_empty(),
        offending,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    ParseError,
    NotTree,
    TooFewJoints,
    Drift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationRules {
    pub min_joints: usize,
    pub margin: f64,
}

impl Default for CurationRules {
    fn default() -> Self {
        Self {
            min_joints: DEFAULT_MIN_JOINTS,
            margin: DEFAULT_MARGIN,
        }
    }
}

/// Every rule the skeleton fails, in primary-reason order.
pub fn check_skeleton(skeleton: &Skeleton, mesh: Option<&TriMesh>, rules: &CurationRules) -> Vec<RejectReason> {
    let mut out = Vec::new();
    if !validate_tree(skeleton).is_ok() {
        out.push(RejectReason::NotTree);
    }
    if skeleton.len() < rules.min_joints {
        out.push(RejectReason::TooFewJoints);
    }
    if let Some(mesh) = mesh {
        match check_terminal_containment(skeleton, &mesh.components(), rules.margin) {
            Ok(r) if r.pass => {}
            _ => out.push(RejectReason::Drift),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedItem {
    pub id: String,
    pub category: Category,
    pub joints: usize,
    pub bones: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: RejectReason,
    pub all_reasons: Vec<RejectReason>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub total: usize,
    pub accepted: usize,
    pub items: Vec<AcceptedItem>,
    pub rejections: Vec<Rejection>,
    /// Bone count → number of accepted files.
    pub histogram: BTreeMap<usize, usize>,
    pub warnings: Vec<String>,
}

impl CurationReport {
    pub fn accepted_ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.id.as_str()).collect()
    }
}

enum Outcome {
    Accepted(AcceptedItem, Option<String>),
    Rejected(Rejection),
}

fn check_file(dir: &Path, id: &str, rules: &CurationRules) -> Outcome {
    let reject = |reason, detail: String| {
        Outcome::Rejected(Rejection {
            id: id.to_string(),
            reason,
            all_reasons: vec![reason],
            detail,
        })
    };
    let skeleton = match Skeleton::load(&dir.join(format!("{id}{SKELETON_SUFFIX}"))) {
        Ok(s) => s,
        Err(e) => return reject(RejectReason::ParseError, e.to_string()),
    };
    let mesh_path = dir.join(format!("{id}{MESH_SUFFIX}"));
    let mut warning = None;
    let mesh = if mesh_path.exists() {
        match TriMesh::load(&mesh_path) {
            Ok(m) if !m.triangles.is_empty() => Some(m),
            Ok(_) => return reject(RejectReason::ParseError, "mesh has no faces".into()),
            Err(e) => return reject(RejectReason::ParseError, e.to_string()),
        }
    } else {
        warning = Some(format!("{id}: no mesh, containment check skipped"));
        None
    };
    let reasons = check_skeleton(&skeleton, mesh.as_ref(), rules);
    if reasons.is_empty() {
        Outcome::Accepted(
            AcceptedItem {
                id: id.to_string(),
                category: skeleton.category(),
                joints: skeleton.len(),
                bones: skeleton.bone_count(),
            },
            warning,
        )
    } else {
        let detail = match reasons[0] {
            RejectReason::NotTree => format!("{:?}", validate_tree(&skeleton).violations),
            RejectReason::TooFewJoints => format!("{} joints", skeleton.len()),
            _ => String::new(),
        };
        Outcome::Rejected(Rejection {
            id: id.to_string(),
            reason: reasons[0],
            all_reasons: reasons,
            detail,
        })
    }
}

/// Ids of every `<id>.skel.json` file in `dir`, sorted.
pub fn list_skeleton_ids(dir: &Path) -> Result<Vec<String>, CurationError> {
    let io = |source| CurationError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let name = entry.map_err(io)?.file_name();
        if let Some(id) = name.to_string_lossy().strip_suffix(SKELETON_SUFFIX) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Applies tree validation, the minimum-joint rule and terminal containment
/// (when a mesh is present) to every skeleton in `dir`. Per-file problems are
/// recorded in the report, never returned as errors.
pub fn filter_corpus(dir: &Path, rules: &CurationRules) -> Result<CurationReport, CurationError> {
    let ids = list_skeleton_ids(dir)?;
    let outcomes: Vec<Outcome> = ids.par_iter().map(|id| check_file(dir, id, rules)).collect();
    let mut report = CurationReport {
        total: ids.len(),
        accepted: 0,
        items: Vec::new(),
        rejections: Vec::new(),
        histogram: BTreeMap::new(),
        warnings: Vec::new(),
    };
    for o in outcomes {
        match o {
            Outcome::Accepted(item, warning) => {
                *report.histogram.entry(item.bones).or_default() += 1;
                report.items.push(item);
                if let Some(w) = warning {
                    warn!("{w}");
                    report.warnings.push(w);
                }
            }
            Outcome::Rejected(r) => report.rejections.push(r),
        }
    }
    report.accepted = report.items.len();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub category: Category,
    /// Inclusive joint-count interval; `None` is unbounded.
    pub min_joints: usize,
    pub max_joints: Option<usize>,
    #[serde(default)]
    pub test_fraction: Option<f64>,
}

impl Stratum {
    fn contains(&self, category: Category, joints: usize) -> bool {
        category == self.category && joints >= self.min_joints && self.max_joints.is_none_or(|m| joints <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub strata: Vec<Stratum>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// Joint-count strata [5, 50], [51, 150], [151, inf) for every category.
    pub fn by_category_and_size(seed: u64) -> Self {
        let mut strata = Vec::new();
        for category in [Category::Humanoid, Category::Tetrapod, Category::Other] {
            for (lo, hi) in [(5, Some(50)), (51, Some(150)), (151, None)] {
                strata.push(Stratum {
                    category,
                    min_joints: lo,
                    max_joints: hi,
                    test_fraction: None,
                });
            }
        }
        Self {
            strata,
            test_fraction: DEFAULT_TEST_FRACTION,
            seed,
        }
    }

    /// Checks that each category's intervals tile `[5, inf)` with no gap or overlap.
    pub fn validate(&self) -> Result<(), SplitError> {
        let fractions = std::iter::once(self.test_fraction).chain(self.strata.iter().filter_map(|s| s.test_fraction));
        for f in fractions {
            if !(f > 0.0 && f < 1.0) {
                return Err(SplitError::BadFraction(f));
            }
        }
        let mut by_cat: BTreeMap<Category, Vec<&Stratum>> = BTreeMap::new();
        for s in &self.strata {
            by_cat.entry(s.category).or_default().push(s);
        }
        for (cat, mut list) in by_cat {
            list.sort_by_key(|s| s.min_joints);
            let mut next = DEFAULT_MIN_JOINTS;
            for (i, s) in list.iter().enumerate() {
                if s.min_joints != next {
                    return Err(SplitError::InvalidStrata(format!(
                        "{cat}: interval starting at {} leaves a gap or overlap at {next}",
                        s.min_joints
                    )));
                }
                match s.max_joints {
                    Some(m) if m >= s.min_joints => next = m + 1,
                    Some(_) => return Err(SplitError::InvalidStrata(format!("{cat}: empty interval"))),
                    None if i + 1 == list.len() => {}
                    None => return Err(SplitError::InvalidStrata(format!("{cat}: unbounded interval is not last"))),
                }
            }
            if list.last().is_some_and(|s| s.max_joints.is_some()) {
                return Err(SplitError::InvalidStrata(format!("{cat}: last interval must be unbounded")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("invalid strata: {0}")]
    InvalidStrata(String),
    #[error("item {0} matches no stratum")]
    Unmapped(String),
    #[error("test fraction {0} is outside (0, 1)")]
    BadFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub stratum: usize,
    pub total: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub strata: Vec<StratumSummary>,
    /// Strata that contribute nothing to the test set.
    pub empty_strata: Vec<usize>,
}

/// Per-stratum seeded shuffle; `round(fraction * size)` items go to test.
pub fn stratified_split(items: &[AcceptedItem], spec: &SplitSpec) -> Result<SplitResult, SplitError> {
    spec.validate()?;
    let mut members: Vec<Vec<&str>> = vec![Vec::new(); spec.strata.len()];
    for item in items {
        let s = spec
            .strata
            .iter()
            .position(|s| s.contains(item.category, item.joints))
            .ok_or_else(|| SplitError::Unmapped(item.id.clone()))?;
        members[s].push(&item.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut result = SplitResult {
        train: Vec::new(),
        test: Vec::new(),
        strata: Vec::new(),
        empty_strata: Vec::new(),
    };
    for (i, mut ids) in members.into_iter().enumerate() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let fraction = spec.strata[i].test_fraction.unwrap_or(spec.test_fraction);
        let n_test = (fraction * ids.len() as f64).round() as usize;
        if n_test == 0 {
            warn!("stratum {i} contributes nothing to the test set ({} items)", ids.len());
            result.empty_strata.push(i);
        }
        result.strata.push(StratumSummary {
            stratum: i,
            total: ids.len(),
            test: n_test,
        });
        result.test.extend(ids[..n_test].iter().map(|s| s.to_string()));
        result.train.extend(ids[n_test..].iter().map(|s| s.to_string()));
    }
    result.train.sort();
    result.test.sort();
    Ok(result)
}

/// Ranges for random similarity transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentOps {
    pub scale: (f64, f64),
    /// Per-axis translation range.
    pub translation: (f64, f64),
    /// Rotation about a uniformly random axis by an angle in `[-max, max]`.
    pub max_rotation_deg: f64,
}

impl AugmentOps {
    pub const IDENTITY: Self = Self {
        scale: (1.0, 1.0),
        translation: (0.0, 0.0),
        max_rotation_deg: 0.0,
    };
}

impl Default for AugmentOps {
    fn default() -> Self {
        Self {
            scale: (0.8, 1.2),
            translation: (-0.1, 0.1),
            max_rotation_deg: 30.0,
        }
    }
}

/// `p -> scale * R p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: Rotation3<f64>,
    pub scale: f64,
    pub translation: Vec3,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            scale: 1.0,
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn sample(ops: &AugmentOps, rng: &mut impl Rng) -> Self {
        let range = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo.min(hi)..=lo.max(hi))
            }
        };
        let scale = range(rng, ops.scale);
        let translation = Vec3::new(
            range(rng, ops.translation),
            range(rng, ops.translation),
            range(rng, ops.translation),
        );
        let rotation = if ops.max_rotation_deg == 0.0 {
            Rotation3::identity()
        } else {
            let axis = loop {
                let v = Vec3::new(
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                );
                let n = v.norm();
                if n > 1e-3 && n <= 1.0 {
                    break Unit::new_normalize(v);
                }
            };
            let max = ops.max_rotation_deg.to_radians();
            Rotation3::from_axis_angle(&axis, rng.random_range(-max..=max))
        };
        Self {
            rotation,
            scale,
            translation,
        }
    }

    pub fn apply_pair(&self, skeleton: &Skeleton, mesh: &MeshSample) -> (Skeleton, MeshSample) {
        let s = skeleton.map_positions(|p| self.apply(p));
        let m = mesh.transformed(|p| self.apply(p), |n| self.rotation * n);
        (s, m)
    }
}

/// Applies one random similarity transform to skeleton and mesh, then re-normalizes.
pub fn augment(
    skeleton: &Skeleton,
    mesh: &MeshSample,
    ops: &AugmentOps,
    seed: u64,
) -> Result<(Skeleton, MeshSample), NormalizeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Similarity::sample(ops, &mut rng);
    let (s, m) = t.apply_pair(skeleton, mesh);
    let (s, m, _) = normalize(&s, &m)?;
    Ok((s, m))
}
