//! Skeleton comparison: threshold-matched precision / recall / accuracy / F1
//! and the three symmetric Chamfer distances (joint-joint, joint-bone,
//! bone-bone).
//!
//! Accuracy is the symmetric matched fraction
//! `(matched pred + matched gt) / (|pred| + |gt|)`. Chamfer distances average
//! both directions with weight 1/2. All distances are measured in the shared
//! normalized frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_segment_distance, Aabb, Vec3};
use crate::skeleton::Skeleton;

pub const DEFAULT_TAU_MATCH: f64 = 0.01;
pub const DEFAULT_B2B_SPACING: f64 = 0.005;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("skeleton has no joints")]
    EmptySkeleton,
    #[error("skeleton has no bones")]
    NoBones,
}

/// Static kd-tree over a point set answering exact nearest-neighbour queries.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    /// Point indices arranged so every subslice's middle element splits it.
    order: Vec<usize>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self {
            points: points.to_vec(),
            order,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(distance, index)` of the nearest stored point.
    pub fn nearest(&self, q: &Vec3) -> Option<(f64, usize)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(q, &self.order, 0, &mut best);
        Some((best.0.sqrt(), best.1))
    }

    fn search(&self, q: &Vec3, slice: &[usize], depth: usize, best: &mut (f64, usize)) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let idx = slice[mid];
        let p = &self.points[idx];
        let d = (q - p).norm_squared();
        if d < best.0 || (d == best.0 && idx < best.1) {
            *best = (d, idx);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(q, near, depth + 1, best);
        if diff * diff <= best.0 {
            self.search(q, far, depth + 1, best);
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], depth: usize) {
    if order.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}

/// Bone segments with bounding boxes for pruned closest-segment queries.
#[derive(Debug, Clone)]
pub struct SegmentSet {
    segments: Vec<(Vec3, Vec3)>,
    boxes: Vec<Aabb>,
}

impl SegmentSet {
    pub fn from_skeleton(s: &Skeleton) -> Self {
        Self::new(
            s.bones()
                .into_iter()
                .map(|(p, c)| (s.position(p), s.position(c)))
                .collect(),
        )
    }

    pub fn new(segments: Vec<(Vec3, Vec3)>) -> Self {
        let boxes = segments
            .iter()
            .map(|(a, b)| Aabb::from_points([a, b]).expect("two points"))
            .collect();
        Self { segments, boxes }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Distance from `q` to the closest segment. A segment is skipped when its
    /// box is already farther than the best exact distance found.
    pub fn nearest_distance(&self, q: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        let mut best_sq = f64::INFINITY;
        for (seg, bb) in self.segments.iter().zip(&self.boxes) {
            if bb.distance_squared(q) > best_sq {
                continue;
            }
            let d = point_segment_distance(q, &seg.0, &seg.1);
            if d < best {
                best = d;
                best_sq = d * d;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn matched_count(from: &[Vec3], to: &KdTree, tau: f64) -> usize {
    from.iter()
        .filter(|p| to.nearest(p).is_some_and(|(d, _)| d < tau))
        .count()
}

/// A joint is matched when some joint of the other set lies strictly within `tau`.
pub fn classify_joints(pred: &[Vec3], gt: &[Vec3], tau: f64) -> Result<Classification, MetricsError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptySkeleton);
    }
    let gt_tree = KdTree::new(gt);
    let pred_tree = KdTree::new(pred);
    let mp = matched_count(pred, &gt_tree, tau);
    let mg = matched_count(gt, &pred_tree, tau);
    let precision = mp as f64 / pred.len() as f64;
    let recall = mg as f64 / gt.len() as f64;
    Ok(Classification {
        precision,
        recall,
        accuracy: (mp + mg) as f64 / (pred.len() + gt.len()) as f64,
        f1: f1_score(precision, recall),
    })
}

fn mean_nearest(from: &[Vec3], to: &KdTree) -> f64 {
    from.iter().map(|p| to.nearest(p).expect("non-empty").0).sum::<f64>() / from.len() as f64
}

/// Symmetric Chamfer distance between two point sets.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySkeleton);
    }
    let ta = KdTree::new(a);
    let tb = KdTree::new(b);
    Ok(0.5 * mean_nearest(a, &tb) + 0.5 * mean_nearest(b, &ta))
}

pub fn cd_j2j(pred: &[Vec3], gt: &[Vec3]) -> Result<f64, MetricsError> {
    chamfer(pred, gt)
}

pub fn cd_j2b(pred: &Skeleton, gt: &Skeleton) -> Result<f64, MetricsError> {
    let pred_bones = SegmentSet::from_skeleton(pred);
    let gt_bones = SegmentSet::from_skeleton(gt);
    if pred_bones.is_empty() || gt_bones.is_empty() {
        return Err(MetricsError::NoBones);
    }
    let dir = |joints: &Skeleton, bones: &SegmentSet| {
        joints
            .joints()
            .iter()
            .map(|j| bones.nearest_distance(&j.position))
            .sum::<f64>()
            / joints.len() as f64
    };
    Ok(0.5 * dir(pred, &gt_bones) + 0.5 * dir(gt, &pred_bones))
}

/// Points along every bone at `spacing` arc length, both endpoints included.
/// Zero-length bones contribute one point.
pub fn sample_bones(s: &Skeleton, spacing: f64) -> Vec<Vec3> {
    assert!(spacing > 0.0);
    let mut out = Vec::new();
    for (p, c) in s.bones() {
        let a = s.position(p);
        let b = s.position(c);
        let len = (b - a).norm();
        if len == 0.0 {
            out.push(a);
            continue;
        }
        let steps = (len / spacing).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            out.push(a + (b - a) * t);
        }
    }
    out
}

pub fn cd_b2b(pred: &Skeleton, gt: &Skeleton, spacing: f64) -> Result<f64, MetricsError> {
    if pred.bone_count() == 0 || gt.bone_count() == 0 {
        return Err(MetricsError::NoBones);
    }
    chamfer(&sample_bones(pred, spacing), &sample_bones(gt, spacing))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub tau_match: f64,
    pub b2b_spacing: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tau_match: DEFAULT_TAU_MATCH,
            b2b_spacing: DEFAULT_B2B_SPACING,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub cd_j2j: f64,
    pub cd_j2b: f64,
    pub cd_b2b: f64,
    pub tau_match: f64,
    /// `(|pred joints|, |gt joints|)`.
    pub counts: (usize, usize),
}

pub fn evaluate(pred: &Skeleton, gt: &Skeleton, cfg: &EvalConfig) -> Result<EvalReport, MetricsError> {
    let pj = pred.positions();
    let gj = gt.positions();
    let c = classify_joints(&pj, &gj, cfg.tau_match)?;
    Ok(EvalReport {
        precision: c.precision,
        recall: c.recall,
        accuracy: c.accuracy,
        f1: c.f1,
        cd_j2j: cd_j2j(&pj, &gj)?,
        cd_j2b: cd_j2b(pred, gt)?,
        cd_b2b: cd_b2b(pred, gt, cfg.b2b_spacing)?,
        tau_match: cfg.tau_match,
        counts: (pj.len(), gj.len()),
    })
}

/// Component-wise mean of several reports; counts are summed.
pub fn mean_report(reports: &[EvalReport]) -> Option<EvalReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(EvalReport {
        precision: avg(|r| r.precision),
        recall: avg(|r| r.recall),
        accuracy: avg(|r| r.accuracy),
        f1: avg(|r| r.f1),
        cd_j2j: avg(|r| r.cd_j2j),
        cd_j2b: avg(|r| r.cd_j2b),
        cd_b2b: avg(|r| r.cd_b2b),
        tau_match: first.tau_match,
        counts: reports
            .iter()
            .fold((0, 0), |acc, r| (acc.0 + r.counts.0, acc.1 + r.counts.1)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Category;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn bone(a: Vec3, b: Vec3) -> Skeleton {
        Skeleton::from_parents(&[a, b], &[None, Some(0)], Category::Other).unwrap()
    }

    #[test]
    fn identity_is_perfect() {
        let pts = vec![v(0.0, 0.0, 0.0), v(0.1, 0.2, 0.3), v(-0.4, 0.0, 0.5)];
        let c = classify_joints(&pts, &pts, 0.01).unwrap();
        assert_eq!((c.precision, c.recall, c.accuracy, c.f1), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(cd_j2j(&pts, &pts).unwrap(), 0.0);
    }

    #[test]
    fn shifted_by_two_tau_misses_everything() {
        let gt = vec![v(0.0, 0.0, 0.0), v(0.5, 0.0, 0.0)];
        let pred: Vec<Vec3> = gt.iter().map(|p| p + v(0.02, 0.0, 0.0)).collect();
        let c = classify_joints(&pred, &gt, 0.01).unwrap();
        assert_eq!((c.precision, c.recall, c.accuracy, c.f1), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn half_recall_example() {
        let gt: Vec<Vec3> = (0..10).map(|i| v(i as f64 * 0.1, 0.0, 0.0)).collect();
        let pred: Vec<Vec3> = gt[..5].iter().map(|p| p + v(0.0, 0.005, 0.0)).collect();
        let c = classify_joints(&pred, &gt, 0.01).unwrap();
        assert_eq!(c.precision, 1.0);
        assert_eq!(c.recall, 0.5);
        assert!((c.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_is_strict() {
        let c = classify_joints(&[v(0.0, 0.0, 0.0)], &[v(0.5, 0.0, 0.0)], 0.5).unwrap();
        assert_eq!(c.precision, 0.0);
    }

    #[test]
    fn single_pair_j2j() {
        let d = cd_j2j(&[v(0.0, 0.0, 0.0)], &[v(0.1, 0.0, 0.0)]).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn j2b_on_segment_and_clamped() {
        let seg = SegmentSet::new(vec![(v(-1.0, 0.0, 0.0), v(1.0, 0.0, 0.0))]);
        assert!(seg.nearest_distance(&v(0.3, 0.0, 0.0)) < 1e-15);
        assert_eq!(seg.nearest_distance(&v(1.0, 0.0, 0.0)), 0.0);
        assert_eq!(seg.nearest_distance(&v(0.0, 1.0, 0.0)), 1.0);
        assert!((seg.nearest_distance(&v(2.0, 1.0, 0.0)) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parallel_bones_b2b() {
        let a = bone(v(0.0, 0.0, 0.0), v(0.3, 0.0, 0.0));
        let b = bone(v(0.0, 0.2, 0.0), v(0.3, 0.2, 0.0));
        let d = cd_b2b(&a, &b, 0.005).unwrap();
        assert!((d - 0.2).abs() < 1e-12, "{d}");
        assert_eq!(cd_b2b(&a, &a, 0.005).unwrap(), 0.0);
    }

    #[test]
    fn bone_sampling_counts() {
        let a = bone(v(0.0, 0.0, 0.0), v(0.1, 0.0, 0.0));
        assert_eq!(sample_bones(&a, 0.005).len(), 21);
        let z = bone(v(0.0, 0.0, 0.0), v(0.0, 0.0, 0.0));
        assert_eq!(sample_bones(&z, 0.005).len(), 1);
    }

    #[test]
    fn errors() {
        assert_eq!(classify_joints(&[], &[Vec3::zeros()], 0.01), Err(MetricsError::EmptySkeleton));
        let single = Skeleton::from_parents(&[Vec3::zeros()], &[None], Category::Other).unwrap();
        let b = bone(Vec3::zeros(), Vec3::x());
        assert_eq!(cd_j2b(&single, &b), Err(MetricsError::NoBones));
        assert_eq!(cd_b2b(&b, &single, 0.005), Err(MetricsError::NoBones));
    }

    #[test]
    fn kdtree_matches_scan() {
        let pts: Vec<Vec3> = (0..200)
            .map(|i| {
                let t = i as f64;
                v((t * 0.37).sin(), (t * 0.11).cos(), (t * 0.07).sin())
            })
            .collect();
        let tree = KdTree::new(&pts);
        for i in 0..50 {
            let q = v((i as f64 * 0.3).cos(), 0.1 * i as f64 - 2.0, 0.2);
            let scan = pts.iter().map(|p| (q - p).norm()).fold(f64::INFINITY, f64::min);
            assert_eq!(tree.nearest(&q).unwrap().0, scan);
        }
    }

    #[test]
    fn mean_report_averages() {
        let r = EvalReport {
            precision: 1.0,
            recall: 0.0,
            accuracy: 0.5,
            f1: 0.0,
            cd_j2j: 0.2,
            cd_j2b: 0.1,
            cd_b2b: 0.1,
            tau_match: 0.01,
            counts: (3, 4),
        };
        let mut s = r;
        s.precision = 0.0;
        let m = mean_report(&[r, s]).unwrap();
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.counts, (6, 8));
        assert!(mean_report(&[]).is_none());
    }
}
