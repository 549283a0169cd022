use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelrig::mesh::TriMesh;
use skelrig::skeleton::{validate_tree, Joint, TreeViolation};
use skelrig::{dequantize, normalize, quantize, sample_mesh, Category, MeshSample, NormalizationTransform, Skeleton, Vec3};

/// Independent oracle: a parent array is a tree iff exactly one joint is
/// parentless, it is the declared root, no link is self or dangling, and
/// union-find over the k-1 edges merges everything without a redundant edge.
fn oracle_is_tree(parents: &[Option<usize>], root: usize) -> bool {
    let k = parents.len();
    let mut uf: Vec<usize> = (0..k).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let roots: Vec<usize> = (0..k).filter(|&i| parents[i].is_none()).collect();
    if roots != [root] {
        return false;
    }
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if p >= k || p == i {
                return false;
            }
            let (a, b) = (find(&mut uf, i), find(&mut uf, p));
            if a == b {
                return false;
            }
            uf[a] = b;
        }
    }
    true
}

fn oracle_components(parents: &[Option<usize>]) -> usize {
    let k = parents.len();
    let mut uf: Vec<usize> = (0..k).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            x = uf[x];
        }
        x
    }
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            if p < k && p != i {
                let (a, b) = (find(&mut uf, i), find(&mut uf, p));
                uf[a] = b;
            }
        }
    }
    (0..k).filter(|&i| find(&mut uf, i) == i).count()
}

fn random_tree_parents(rng: &mut impl Rng, k: usize) -> Vec<Option<usize>> {
    (0..k).map(|i| if i == 0 { None } else { Some(rng.random_range(0..i)) }).collect()
}

fn build(parents: &[Option<usize>], root: usize) -> Skeleton {
    let joints = parents
        .iter()
        .enumerate()
        .map(|(i, &p)| Joint::new(i, Vec3::new(i as f64, 0.0, 0.0), p))
        .collect();
    Skeleton::new(joints, root, Category::Other).unwrap()
}

#[test]
fn validate_tree_agrees_with_union_find_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut valid = 0;
    for trial in 0..1000 {
        let k = rng.random_range(1..40);
        let mut parents = random_tree_parents(&mut rng, k);
        // Shuffle ids so roots are not always joint 0.
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut shuffled = vec![None; k];
        for (i, p) in parents.iter().enumerate() {
            shuffled[perm[i]] = p.map(|p| perm[p]);
        }
        parents = shuffled;
        let mut root = perm[0];
        if trial % 2 == 1 {
            match rng.random_range(0..5) {
                0 if k > 1 => {
                    let j = rng.random_range(0..k);
                    parents[j] = Some(rng.random_range(0..k));
                }
                1 if k > 1 => {
                    let j = rng.random_range(0..k);
                    parents[j] = None;
                }
                2 => {
                    let j = rng.random_range(0..k);
                    parents[j] = Some(k + rng.random_range(0..3));
                }
                3 => {
                    let j = rng.random_range(0..k);
                    parents[j] = Some(j);
                }
                _ => root = rng.random_range(0..k),
            }
        }
        let s = build(&parents, root);
        let r = validate_tree(&s);
        let expected = oracle_is_tree(&parents, root);
        assert_eq!(r.is_ok(), expected, "trial {trial}: {parents:?} root {root} -> {:?}", r.violations);
        assert_eq!(
            r.has(TreeViolation::Forest),
            oracle_components(&parents) > 1,
            "trial {trial}: {parents:?}"
        );
        if expected {
            valid += 1;
            assert_eq!(s.bone_count(), k - 1);
        }
    }
    assert!(valid >= 500);
}

#[test]
fn two_disjoint_chains() {
    let parents = [None, Some(0), Some(1), None, Some(3), Some(4)];
    let r = validate_tree(&build(&parents, 0));
    assert!(r.has(TreeViolation::Forest) && r.has(TreeViolation::MultiRoot));
    assert_eq!(oracle_components(&parents), 2);
}

#[test]
fn quantization_error_within_half_bin() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let half = 1.0 / 256.0;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let p = Vec3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        );
        let q = dequantize(quantize(&p, 256).unwrap(), 256);
        worst = worst.max((q - p).amax());
    }
    assert!(worst <= half, "{worst}");
    for edge in [-1.0, 1.0] {
        let p = Vec3::repeat(edge);
        assert!((dequantize(quantize(&p, 256).unwrap(), 256) - p).amax() <= half);
    }
}

fn random_pair(rng: &mut impl Rng) -> (Skeleton, MeshSample) {
    let scale = rng.random_range(0.1..50.0);
    let shift = Vec3::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
    let pt = |rng: &mut ChaCha8Rng| {
        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.7)) * scale + shift
    };
    let mut r2 = ChaCha8Rng::seed_from_u64(rng.random());
    let points: Vec<Vec3> = (0..200).map(|_| pt(&mut r2)).collect();
    let normals = vec![Vec3::y(); points.len()];
    let joints: Vec<Vec3> = (0..10).map(|_| pt(&mut r2) * 0.9 + shift * 0.1).collect();
    let parents: Vec<Option<usize>> = (0..10).map(|i: usize| i.checked_sub(1)).collect();
    (
        Skeleton::from_parents(&joints, &parents, Category::Other).unwrap(),
        MeshSample::new(points, normals, "random").unwrap(),
    )
}

#[test]
fn normalize_round_trip_and_idempotence() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let (s, m) = random_pair(&mut rng);
        let (ns, nm, t) = normalize(&s, &m).unwrap();
        let back = t.invert_skeleton(&ns);
        for (a, b) in back.positions().iter().zip(s.positions()) {
            assert!((a - b).amax() < 1e-9 * b.amax().max(1.0));
        }
        let back_m = t.invert_mesh(&nm);
        for (a, b) in back_m.points().iter().zip(m.points()) {
            assert!((a - b).amax() < 1e-9 * b.amax().max(1.0));
        }
        let mut extent: f64 = 0.0;
        for p in nm.points() {
            extent = extent.max(p.amax());
        }
        assert!((extent - 1.0).abs() < 1e-12);
        let (ns2, nm2, _) = normalize(&ns, &nm).unwrap();
        for (a, b) in ns2.positions().iter().zip(ns.positions()) {
            assert!((a - b).amax() < 1e-9);
        }
        for (a, b) in nm2.points().iter().zip(nm.points()) {
            assert!((a - b).amax() < 1e-9);
        }
        assert_eq!(ns.parents(), s.parents());
    }
}

#[test]
fn fit_agrees_with_bbox_formula() {
    let pts = [Vec3::new(2.0, 4.0, -1.0), Vec3::new(6.0, 5.0, 0.0)];
    let t = NormalizationTransform::fit(&pts).unwrap();
    assert_eq!(t.scale, 2.0);
    assert_eq!(t.center(), Vec3::new(4.0, 4.5, -0.5));
}

fn cube() -> TriMesh {
    let mut vertices = Vec::new();
    for i in 0..8 {
        vertices.push(Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64));
    }
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriMesh {
        vertices,
        normals: vec![],
        triangles,
    }
}

fn uv_sphere(stacks: usize, slices: usize) -> TriMesh {
    let mut vertices = vec![Vec3::new(0.0, 0.0, 1.0)];
    for i in 1..stacks {
        let phi = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let theta = std::f64::consts::TAU * j as f64 / slices as f64;
            vertices.push(Vec3::new(phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, -1.0));
    let south = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * slices + j % slices;
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
        triangles.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            triangles.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
            triangles.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
        }
    }
    TriMesh {
        vertices,
        normals: vec![],
        triangles,
    }
}

#[test]
fn cube_sampling_count() {
    let s = sample_mesh(&cube(), 8192, 3, "cube").unwrap();
    assert_eq!(s.len(), 8192);
    for (p, n) in s.points().iter().zip(s.normals()) {
        assert!(p.amax() <= 1.0 + 1e-12 && p.min() >= -1e-12);
        assert!((n.norm() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn sphere_normals_cancel() {
    let s = sample_mesh(&uv_sphere(24, 48), 8192, 11, "sphere").unwrap();
    let mean: Vec3 = s.normals().iter().sum::<Vec3>() / s.len() as f64;
    assert!(mean.norm() < 0.05, "{}", mean.norm());
    // Outward facing: normals agree with position direction.
    let outward = s.points().iter().zip(s.normals()).filter(|(p, n)| p.dot(n) > 0.0).count();
    assert!(outward == s.len() || outward == 0);
}

#[test]
fn sampling_is_seeded() {
    let a = sample_mesh(&cube(), 500, 5, "c").unwrap();
    assert_eq!(a, sample_mesh(&cube(), 500, 5, "c").unwrap());
    assert_ne!(a, sample_mesh(&cube(), 500, 6, "c").unwrap());
}

proptest! {
    #[test]
    fn json_round_trip(k in 1usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parents = random_tree_parents(&mut rng, k);
        let pos: Vec<Vec3> = (0..k)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let s = Skeleton::from_parents(&pos, &parents, Category::Tetrapod).unwrap();
        let back = Skeleton::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(back.parents(), s.parents());
        prop_assert_eq!(back.root(), s.root());
        for (a, b) in back.positions().iter().zip(s.positions()) {
            prop_assert!((a - b).amax() <= 1e-8 * b.amax().max(1e-300));
        }
        // Serialization is a fixed point after one pass.
        prop_assert_eq!(back.to_json(), Skeleton::from_json(&back.to_json()).unwrap().to_json());
    }

    #[test]
    fn quantize_bins_in_range(x in -1.0f64..=1.0, y in -1.0f64..=1.0, z in -1.0f64..=1.0, res in 2u32..1024) {
        let q = quantize(&Vec3::new(x, y, z), res).unwrap();
        prop_assert!(q.iter().all(|&b| b < res));
        let back = dequantize(q, res);
        prop_assert!((back - Vec3::new(x, y, z)).amax() <= 1.0 / res as f64 + 1e-15);
    }
}
