//! Skeleton data model: joints with explicit parent links, optional semantic
//! labels, and tree validation.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coarse {
    Main,
    Hair,
    Cloth,
    Other,
    Auxiliary,
}

impl Coarse {
    pub fn name(self) -> &'static str {
        match self {
            Coarse::Main => "Main",
            Coarse::Hair => "Hair",
            Coarse::Cloth => "Cloth",
            Coarse::Other => "Other",
            Coarse::Auxiliary => "Auxiliary",
        }
    }
}

impl fmt::Display for Coarse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticLabel {
    pub coarse: Coarse,
    pub fine: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Humanoid,
    Tetrapod,
    Other,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Humanoid => "humanoid",
            Category::Tetrapod => "tetrapod",
            Category::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub id: usize,
    pub position: Vec3,
    pub parent: Option<usize>,
    pub label: Option<SemanticLabel>,
}

impl Joint {
    pub fn new(id: usize, position: Vec3, parent: Option<usize>) -> Self {
        Self {
            id,
            position,
            parent,
            label: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("skeleton has no joints")]
    Empty,
    #[error("joint at index {index} has id {id}; ids must be 0..k in order")]
    NonContiguousIds { index: usize, id: usize },
    #[error("joint {0} has a non-finite position")]
    NonFinite(usize),
    #[error("root {root} is not a joint index (k = {len})")]
    RootOutOfRange { root: usize, len: usize },
    #[error(transparent)]
    Io(#[from] json::JsonFileError),
}

/// A skeleton as stored on disk. Structural validity is checked separately by
/// [`validate_tree`] so that corrupted rigs remain representable.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
    root: usize,
    category: Category,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>, root: usize, category: Category) -> Result<Self, SkeletonError> {
        if joints.is_empty() {
            return Err(SkeletonError::Empty);
        }
        for (index, j) in joints.iter().enumerate() {
            if j.id != index {
                return Err(SkeletonError::NonContiguousIds { index, id: j.id });
            }
            if !j.position.iter().all(|c| c.is_finite()) {
                return Err(SkeletonError::NonFinite(index));
            }
        }
        if root >= joints.len() {
            return Err(SkeletonError::RootOutOfRange {
                root,
                len: joints.len(),
            });
        }
        Ok(Self {
            joints,
            root,
            category,
        })
    }

    /// Builds a skeleton from positions and a parent array; the root is the
    /// first parentless joint (or 0).
    pub fn from_parents(
        positions: &[Vec3],
        parents: &[Option<usize>],
        category: Category,
    ) -> Result<Self, SkeletonError> {
        assert_eq!(positions.len(), parents.len());
        let joints = positions
            .iter()
            .zip(parents)
            .enumerate()
            .map(|(i, (p, parent))| Joint::new(i, *p, *parent))
            .collect();
        let root = parents.iter().position(Option::is_none).unwrap_or(0);
        Self::new(joints, root, category)
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint(&self, id: usize) -> &Joint {
        &self.joints[id]
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn with_category(mut self, category: Category) -> Self {
        self.category = category;
        self
    }

    pub fn position(&self, id: usize) -> Vec3 {
        self.joints[id].position
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.joints.iter().map(|j| j.position).collect()
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        self.joints.iter().map(|j| j.parent).collect()
    }

    /// One (parent, child) pair per joint whose parent is a valid index.
    pub fn bones(&self) -> Vec<(usize, usize)> {
        self.joints
            .iter()
            .filter_map(|j| match j.parent {
                Some(p) if p < self.joints.len() && p != j.id => Some((p, j.id)),
                _ => None,
            })
            .collect()
    }

    pub fn bone_count(&self) -> usize {
        self.bones().len()
    }

    /// Child lists indexed by joint id, children in ascending id.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.joints.len()];
        for (p, c) in self.bones() {
            out[p].push(c);
        }
        out
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.children()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_labeled(&self) -> bool {
        self.joints.iter().all(|j| j.label.is_some())
    }

    pub fn set_label(&mut self, id: usize, label: Option<SemanticLabel>) {
        self.joints[id].label = label;
    }

    pub fn clear_labels(&mut self) {
        for j in &mut self.joints {
            j.label = None;
        }
    }

    /// Applies `f` to every joint position, leaving topology and labels intact.
    pub fn map_positions(&self, mut f: impl FnMut(&Vec3) -> Vec3) -> Self {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.position = f(&j.position);
        }
        out
    }

    /// Re-indexes joints so that old joint `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.joints.len());
        let mut joints = vec![None; self.joints.len()];
        for (old, j) in self.joints.iter().enumerate() {
            let new = perm[old];
            joints[new] = Some(Joint {
                id: new,
                position: j.position,
                parent: j.parent.map(|p| if p < perm.len() { perm[p] } else { p }),
                label: j.label,
            });
        }
        Self {
            joints: joints.into_iter().map(Option::unwrap).collect(),
            root: perm[self.root],
            category: self.category,
        }
    }

    pub fn load(path: &Path) -> Result<Self, SkeletonError> {
        let file: SkeletonFile = json::read(path)?;
        file.into_skeleton()
    }

    pub fn save(&self, path: &Path) -> Result<(), SkeletonError> {
        json::write(path, &SkeletonFile::from(self))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        json::to_pretty(&SkeletonFile::from(self))
    }

    pub fn from_json(s: &str) -> Result<Self, SkeletonError> {
        let file: SkeletonFile = serde_json::from_str(s).map_err(json::JsonFileError::from)?;
        file.into_skeleton()
    }
}

/// On-disk record. Field order is part of the file format.
#[derive(Debug, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub joints: Vec<JointRecord>,
    pub root: usize,
    pub category: Category,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JointRecord {
    pub id: usize,
    #[serde(serialize_with = "json::serialize_vec3_sig9")]
    pub position: [f64; 3],
    pub parent: Option<usize>,
    pub label: Option<SemanticLabel>,
}

impl From<&Skeleton> for SkeletonFile {
    fn from(s: &Skeleton) -> Self {
        Self {
            joints: s
                .joints
                .iter()
                .map(|j| JointRecord {
                    id: j.id,
                    position: [j.position.x, j.position.y, j.position.z],
                    parent: j.parent,
                    label: j.label,
                })
                .collect(),
            root: s.root,
            category: s.category,
        }
    }
}

impl SkeletonFile {
    pub fn into_skeleton(mut self) -> Result<Skeleton, SkeletonError> {
        self.joints.sort_by_key(|j| j.id);
        let joints = self
            .joints
            .into_iter()
            .map(|r| Joint {
                id: r.id,
                position: Vec3::from(r.position),
                parent: r.parent,
                label: r.label,
            })
            .collect();
        Skeleton::new(joints, self.root, self.category)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TreeViolation {
    Cycle,
    Forest,
    MultiRoot,
    DanglingParent,
    SelfParent,
}

/// All structural violations found in a skeleton; empty means a valid tree.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationResult {
    pub violations: Vec<TreeViolation>,
}

impl ValidationResult {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, v: TreeViolation) -> bool {
        self.violations.contains(&v)
    }
}

/// Reports every way the parent relation fails to be a single rooted tree.
///
/// Self and dangling parent links are reported and then ignored for the
/// cycle and connectivity analysis. `MultiRoot` covers both several
/// parentless joints and a declared root that is not the parentless joint.
pub fn validate_tree(skeleton: &Skeleton) -> ValidationResult {
    let k = skeleton.len();
    let mut violations = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::with_capacity(k);
    for j in skeleton.joints() {
        parent.push(match j.parent {
            Some(p) if p == j.id => {
                violations.push(TreeViolation::SelfParent);
                None
            }
            Some(p) if p >= k => {
                violations.push(TreeViolation::DanglingParent);
                None
            }
            p => p,
        });
    }

    let parentless: Vec<usize> = skeleton
        .joints()
        .iter()
        .filter(|j| j.parent.is_none())
        .map(|j| j.id)
        .collect();
    if parentless.len() > 1 || (parentless.len() == 1 && parentless[0] != skeleton.root()) {
        violations.push(TreeViolation::MultiRoot);
    }

    // Pointer chasing with per-walk stamps: meeting the current stamp again is a cycle.
    let mut stamp = vec![0usize; k];
    for start in 0..k {
        if stamp[start] != 0 {
            continue;
        }
        let walk = start + 1;
        let mut cur = Some(start);
        while let Some(c) = cur {
            if stamp[c] == walk {
                violations.push(TreeViolation::Cycle);
                break;
            }
            if stamp[c] != 0 {
                break;
            }
            stamp[c] = walk;
            cur = parent[c];
        }
    }

    let mut adj = vec![Vec::new(); k];
    for (c, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            adj[p].push(c);
            adj[c].push(p);
        }
    }
    let mut seen = vec![false; k];
    let mut components = 0;
    for s in 0..k {
        if seen[s] {
            continue;
        }
        components += 1;
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    if components > 1 {
        violations.push(TreeViolation::Forest);
    }

    violations.sort();
    violations.dedup();
    ValidationResult { violations }
}
