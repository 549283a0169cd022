//! Semantic label taxonomy, annotation ingestion and partition of a labeled
//! skeleton into ordered coarse groups.
//!
//! The fine → coarse tables are configuration. The built-in humanoid (29
//! categories) and tetrapod (31 categories) tables carry placeholder names and
//! can be replaced with [`Taxonomy::load`].

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::geometry::cmp_zyx;
use crate::json::{self, JsonFileError};
use crate::skeleton::{Category, Coarse, SemanticLabel, Skeleton};

const HUMANOID_TABLE: &str = include_str!("../data/humanoid_taxonomy.json");
const TETRAPOD_TABLE: &str = include_str!("../data/tetrapod_taxonomy.json");

pub const HUMANOID_ORDER: [Coarse; 4] = [Coarse::Main, Coarse::Hair, Coarse::Cloth, Coarse::Other];
pub const TETRAPOD_ORDER: [Coarse; 2] = [Coarse::Main, Coarse::Auxiliary];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub fine: u16,
    pub name: String,
    pub coarse: Coarse,
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy entry {index} has fine id {fine}; ids must be 0..n in order")]
    NonContiguous { index: usize, fine: u16 },
    #[error("taxonomy is empty")]
    Empty,
    #[error(transparent)]
    Json(#[from] JsonFileError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    entries: Vec<TaxonomyEntry>,
}

impl Taxonomy {
    pub fn from_entries(mut entries: Vec<TaxonomyEntry>) -> Result<Self, TaxonomyError> {
        if entries.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        entries.sort_by_key(|e| e.fine);
        for (index, e) in entries.iter().enumerate() {
            if e.fine as usize != index {
                return Err(TaxonomyError::NonContiguous { index, fine: e.fine });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        Self::from_entries(json::read(path)?)
    }

    pub fn humanoid() -> Self {
        Self::builtin(HUMANOID_TABLE)
    }

    pub fn tetrapod() -> Self {
        Self::builtin(TETRAPOD_TABLE)
    }

    fn builtin(text: &str) -> Self {
        let entries = serde_json::from_str(text).expect("built-in taxonomy parses");
        Self::from_entries(entries).expect("built-in taxonomy is contiguous")
    }

    /// Built-in table for a category; "other" skeletons carry no labels.
    pub fn for_category(category: Category) -> Option<Self> {
        match category {
            Category::Humanoid => Some(Self::humanoid()),
            Category::Tetrapod => Some(Self::tetrapod()),
            Category::Other => None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    pub fn coarse_of(&self, fine: u16) -> Option<Coarse> {
        self.entries.get(fine as usize).map(|e| e.coarse)
    }

    pub fn label(&self, fine: u16) -> Option<SemanticLabel> {
        self.coarse_of(fine).map(|coarse| SemanticLabel { coarse, fine })
    }

    pub fn fine_of(&self, name: &str) -> Option<u16> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.fine)
    }
}

/// Joint-id → fine-id annotation, kept as raw entries so duplicate keys survive parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Annotation {
    pub entries: Vec<(String, u16)>,
}

impl Annotation {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, u16)>) -> Self {
        Self {
            entries: pairs.into_iter().map(|(j, f)| (j.to_string(), f)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, JsonFileError> {
        json::read(path)
    }

    /// Serializes as a JSON object in entry order.
    pub fn to_json(&self) -> String {
        let body: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| format!("  {}: {v}", serde_json::to_string(k).expect("string key")))
            .collect();
        format!("{{\n{}\n}}\n", body.join(",\n"))
    }
}

impl<'de> Deserialize<'de> for Annotation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = Annotation;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from joint id to fine label id")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Annotation, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, u16>()? {
                    entries.push((k, v));
                }
                Ok(Annotation { entries })
            }
        }
        d.deserialize_map(EntriesVisitor)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("joint {0} has no label")]
    MissingLabel(usize),
    #[error("joint {joint}: fine id {fine} is outside the taxonomy (0..{size})")]
    UnknownFineId { joint: usize, fine: u16, size: usize },
    #[error("joint {0} is labeled more than once")]
    DuplicateLabel(usize),
    #[error("annotation names joint {0}, which does not exist")]
    UnknownJoint(usize),
    #[error("annotation key {0:?} is not a joint id")]
    BadKey(String),
}

/// Attaches labels from `annotation`, which must cover every joint exactly once.
pub fn ingest_labels(
    skeleton: &Skeleton,
    annotation: &Annotation,
    taxonomy: &Taxonomy,
) -> Result<Skeleton, LabelError> {
    let k = skeleton.len();
    let mut fine = vec![None; k];
    for (key, f) in &annotation.entries {
        let joint: usize = key.trim().parse().map_err(|_| LabelError::BadKey(key.clone()))?;
        if joint >= k {
            return Err(LabelError::UnknownJoint(joint));
        }
        if fine[joint].is_some() {
            return Err(LabelError::DuplicateLabel(joint));
        }
        fine[joint] = Some(*f);
    }
    let mut out = skeleton.clone();
    for (joint, f) in fine.into_iter().enumerate() {
        let f = f.ok_or(LabelError::MissingLabel(joint))?;
        let label = taxonomy.label(f).ok_or(LabelError::UnknownFineId {
            joint,
            fine: f,
            size: taxonomy.len(),
        })?;
        out.set_label(joint, Some(label));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Group {
    pub coarse: Coarse,
    /// Ascending joint ids.
    pub members: Vec<usize>,
    pub root: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupPlan {
    pub groups: Vec<Group>,
    pub category: Category,
}

impl GroupPlan {
    /// Group index of every joint.
    pub fn assignment(&self, joint_count: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; joint_count];
        for (g, group) in self.groups.iter().enumerate() {
            for &m in &group.members {
                out[m] = g;
            }
        }
        out
    }

    pub fn main(&self) -> &Group {
        &self.groups[0]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("joint {0} has no semantic label")]
    UnlabeledJoint(usize),
    #[error("joint {joint} has coarse label {coarse}, which is not used for {category} skeletons")]
    ForeignCoarse {
        joint: usize,
        coarse: Coarse,
        category: Category,
    },
    #[error("the skeleton root must carry a Main label")]
    RootNotMain,
}

/// The fixed group order for a category.
pub fn group_order(category: Category) -> &'static [Coarse] {
    match category {
        Category::Humanoid => &HUMANOID_ORDER,
        Category::Tetrapod => &TETRAPOD_ORDER,
        Category::Other => &HUMANOID_ORDER[..1],
    }
}

/// Partitions joints by coarse label in the category's group order, empty
/// groups omitted. "Other" skeletons form a single group rooted at the
/// skeleton root.
pub fn plan_groups(skeleton: &Skeleton) -> Result<GroupPlan, GroupError> {
    let category = skeleton.category();
    if category == Category::Other {
        return Ok(GroupPlan {
            groups: vec![Group {
                coarse: Coarse::Main,
                members: (0..skeleton.len()).collect(),
                root: skeleton.root(),
            }],
            category,
        });
    }
    let order = group_order(category);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
    for j in skeleton.joints() {
        let label = j.label.ok_or(GroupError::UnlabeledJoint(j.id))?;
        let slot = order
            .iter()
            .position(|c| *c == label.coarse)
            .ok_or(GroupError::ForeignCoarse {
                joint: j.id,
                coarse: label.coarse,
                category,
            })?;
        buckets[slot].push(j.id);
    }
    if !buckets[0].contains(&skeleton.root()) {
        return Err(GroupError::RootNotMain);
    }
    let main_members = buckets[0].clone();
    let groups = order
        .iter()
        .zip(buckets)
        .filter(|(_, members)| !members.is_empty())
        .map(|(&coarse, members)| {
            let root = if coarse == Coarse::Main {
                skeleton.root()
            } else {
                select_group_root(&members, &main_members, skeleton)
            };
            Group { coarse, members, root }
        })
        .collect();
    Ok(GroupPlan { groups, category })
}

fn candidate_cmp(skeleton: &Skeleton, a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| cmp_zyx(&skeleton.position(a.1), &skeleton.position(b.1)))
        .then_with(|| a.1.cmp(&b.1))
}

/// Picks the root of an auxiliary group: adjacency to the Main group first,
/// proximity second. Ties go to the smaller (z, y, x) position, then id.
pub fn select_group_root(members: &[usize], main: &[usize], skeleton: &Skeleton) -> usize {
    assert!(!members.is_empty() && !main.is_empty());
    let main_set: HashSet<usize> = main.iter().copied().collect();
    let adjacent = members.iter().filter_map(|&m| {
        let p = skeleton.joint(m).parent?;
        main_set
            .contains(&p)
            .then(|| ((skeleton.position(m) - skeleton.position(p)).norm(), m))
    });
    if let Some(best) = adjacent.min_by(|a, b| candidate_cmp(skeleton, *a, *b)) {
        return best.1;
    }
    members
        .iter()
        .map(|&m| {
            let pm = skeleton.position(m);
            let d = main
                .iter()
                .map(|&g| (pm - skeleton.position(g)).norm())
                .fold(f64::INFINITY, f64::min);
            (d, m)
        })
        .min_by(|a, b| candidate_cmp(skeleton, *a, *b))
        .expect("non-empty members")
        .1
}
