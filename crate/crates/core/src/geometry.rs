use std::cmp::Ordering;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Returns `None` for an empty iterator.
    pub fn from_points<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Vec3>,
    {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut bb = Aabb { min: first, max: first };
        for p in iter {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

/// Lexicographic (z, y, x) comparison used for every spatial ordering in the codec.
pub fn cmp_zyx(a: &Vec3, b: &Vec3) -> Ordering {
    a.z.total_cmp(&b.z)
        .then_with(|| a.y.total_cmp(&b.y))
        .then_with(|| a.x.total_cmp(&b.x))
}

/// Closest point on segment `[a, b]` to `p`, clamped to the endpoints.
pub fn closest_point_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = (p - a).dot(&ab) / len2;
    if t <= 0.0 {
        *a
    } else if t >= 1.0 {
        *b
    } else {
        a + ab * t
    }
}

pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    (p - closest_point_on_segment(p, a, b)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_perpendicular_and_clamped() {
        let a = Vec3::new(-1.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(point_segment_distance(&Vec3::new(0.0, 1.0, 0.0), &a, &b), 1.0);
        let d = point_segment_distance(&Vec3::new(2.0, 1.0, 0.0), &a, &b);
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_segment_is_a_point() {
        let a = Vec3::new(1.0, 1.0, 1.0);
        assert_eq!(point_segment_distance(&Vec3::new(1.0, 1.0, 2.0), &a, &a), 1.0);
    }

    #[test]
    fn zyx_order_prefers_z() {
        let a = Vec3::new(5.0, 5.0, 0.0);
        let b = Vec3::new(0.0, 0.0, 1.0);
        assert_eq!(cmp_zyx(&a, &b), Ordering::Less);
        assert_eq!(cmp_zyx(&Vec3::new(0.0, 1.0, 1.0), &b), Ordering::Greater);
    }

    #[test]
    fn aabb_basics() {
        let pts = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 1.0, -1.0)];
        let bb = Aabb::from_points(&pts).unwrap();
        assert_eq!(bb.center(), Vec3::new(1.0, 0.5, -0.5));
        assert!(bb.contains(&Vec3::new(1.0, 0.5, 0.0)));
        assert_eq!(bb.distance_squared(&Vec3::new(3.0, 0.5, 0.0)), 1.0);
        assert!(Aabb::from_points(&[]).is_none());
    }
}
