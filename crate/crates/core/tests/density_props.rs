use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use skelrig::density::{argmax_lowest, grad_check, grad_check_detailed, softplus, DensityBinner, DensityGrads, DensityParams};

fn random_embeddings(rng: &mut impl Rng, k: usize, c: usize) -> Vec<Vec<f64>> {
    (0..k).map(|_| (0..c).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn default_binner(seed: u64, width: usize) -> DensityBinner {
    DensityBinner::default_levels(width, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn random_binner(rng: &mut impl Rng, k: usize, c: usize) -> DensityBinner {
    DensityBinner::from_params(DensityParams {
        k,
        e0: 0.0,
        ek: 400.0,
        delta_raw: (0..k - 1).map(|_| rng.random_range(0.0..5.0)).collect(),
        embeddings: random_embeddings(rng, k, c),
        tau: rng.random_range(1.0..20.0),
    })
    .unwrap()
}

fn sigmoid_oracle(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Direct evaluation of the sigmoid-difference formula with plain division.
fn probs_oracle(b: &DensityBinner, n: f64) -> Vec<f64> {
    let raw: Vec<f64> = b
        .bin_edges()
        .iter()
        .map(|&(l, r)| sigmoid_oracle((n - l) / b.tau()) - sigmoid_oracle((n - r) / b.tau()))
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

#[test]
fn default_levels_reproduce_boundaries() {
    let b = default_binner(0, 8);
    let c = b.cutpoints();
    assert!((c[0] - 50.0).abs() < 1e-9 && (c[1] - 150.0).abs() < 1e-9, "{c:?}");
    // Increment parameterization: softplus(delta_2) = 100.
    assert!((softplus(b.delta()[1]) - 100.0).abs() < 1e-9);
    assert_eq!(b.density_vector(30.0, true), b.level_embedding(0));
    assert_eq!(b.level(100.0), 1);
    assert_eq!(b.level(300.0), 2);
}

#[test]
fn probabilities_match_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..2000 {
        let k = rng.random_range(2..6);
        let b = random_binner(&mut rng, k, 4);
        let n = rng.random_range(0.0..400.0);
        for (a, o) in b.soft_probs(n).iter().zip(probs_oracle(&b, n)) {
            assert!((a - o).abs() < 1e-12);
        }
    }
    // At a cutpoint the two neighbours differ only by the far-edge terms.
    let b = default_binner(0, 2);
    let p = b.soft_probs(50.0);
    let o = probs_oracle(&b, 50.0);
    assert!((p[0] - o[0]).abs() < 1e-12 && (p[1] - o[1]).abs() < 1e-12);
    assert!((p[0] - p[1]).abs() < 1e-4);
}

#[test]
fn sums_to_one_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut b = default_binner(2, 4);
    for _ in 0..10_000 {
        let n = rng.random_range(-500.0..1000.0);
        b.set_tau(10f64.powf(rng.random_range(-3.0..3.0)));
        let p = b.soft_probs(n);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() <= 1e-12, "n={n} tau={} sum={s}", b.tau());
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn cutpoints_monotone_for_random_deltas() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let k = rng.random_range(2..8);
        let b = DensityBinner::from_params(DensityParams {
            k,
            e0: 0.0,
            ek: 400.0,
            delta_raw: (0..k - 1).map(|_| rng.random_range(-40.0..8.0)).collect(),
            embeddings: vec![vec![0.0]; k],
            tau: 5.0,
        })
        .unwrap();
        let c = b.cutpoints();
        assert!(c[0] > 0.0);
        assert!(c.windows(2).all(|w| w[0] < w[1]), "{c:?}");
        assert!(*c.last().unwrap() < 400.0);
    }
}

#[test]
fn monotone_after_random_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut b = random_binner(&mut rng, 4, 6);
    for _ in 0..1000 {
        let grads = DensityGrads {
            delta: (0..3).map(|_| rng.random_range(-50.0..50.0)).collect(),
            embeddings: random_embeddings(&mut rng, 4, 6),
            tau: rng.random_range(-1.0..1.0),
            n: 0.0,
        };
        b.apply_gradients(&grads, rng.random_range(0.0..2.0), true);
        let c = b.cutpoints();
        assert!(c[0] > 0.0 && c.windows(2).all(|w| w[0] < w[1]) && *c.last().unwrap() < 400.0, "{c:?}");
        assert!(b.tau() > 0.0);
    }
}

#[test]
fn soft_vector_inside_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = DensityBinner::with_cutpoints(0.0, 400.0, &[50.0, 150.0], random_embeddings(&mut rng, 3, 8), 5.0).unwrap();
    // Barycentric weights from a least-squares solve of [E^T; 1] w = [v; 1].
    let mut a = DMatrix::zeros(9, 3);
    for (k, e) in b.embeddings().iter().enumerate() {
        for (c, x) in e.iter().enumerate() {
            a[(c, k)] = *x;
        }
        a[(8, k)] = 1.0;
    }
    let svd = a.clone().svd(true, true);
    for _ in 0..1000 {
        let n = rng.random_range(0.0..400.0);
        let v = b.density_vector(n, false);
        let mut rhs = DVector::from_vec(v.clone());
        rhs = rhs.push(1.0);
        let w = svd.solve(&rhs, 1e-14).unwrap();
        let residual = (&a * &w - &rhs).amax();
        assert!(residual < 1e-10, "{residual}");
        assert!(w.iter().all(|&x| x >= -1e-10), "{w}");
    }
}

#[test]
fn cold_limit_is_indicator() {
    let mut b = default_binner(6, 2);
    b.set_tau(1e-3);
    for (n, k) in [(10.0, 0), (49.9, 0), (50.1, 1), (149.0, 1), (151.0, 2), (399.0, 2)] {
        let p = b.soft_probs(n);
        for (i, x) in p.iter().enumerate() {
            let want = if i == k { 1.0 } else { 0.0 };
            assert!((x - want).abs() < 1e-9, "n={n} {p:?}");
        }
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let b = random_binner(&mut rng, 3, 8);
        worst = worst.max(grad_check(&b, rng.random_range(5.0..400.0), 1e-5));
    }
    assert!(worst < 1e-4, "{worst}");
    // Cutpoints spread across the whole count range.
    for _ in 0..500 {
        let mut cuts = [rng.random_range(1.0..399.0), rng.random_range(1.0..399.0)];
        cuts.sort_by(f64::total_cmp);
        cuts[1] += 0.5;
        let emb = random_embeddings(&mut rng, 3, 8);
        let b = DensityBinner::with_cutpoints(0.0, 400.0, &cuts, emb, rng.random_range(1.0..20.0)).unwrap();
        let r = grad_check_detailed(&b, rng.random_range(5.0..400.0), 1e-5);
        assert!(r.max_relative < 1e-4 && r.max_absolute < 1e-8, "{r:?}");
    }
}

/// Wide-temperature limit of dL/dDelta_i for L = u . F: probabilities tend to
/// bin widths over the span, so only bin i and the last bin move.
fn hot_limit(b: &DensityBinner, upstream: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = b.embeddings().iter().map(|e| e.iter().zip(upstream).map(|(x, u)| x * u).sum()).collect();
    let (e0, ek) = b.edges();
    let last = *g.last().unwrap();
    b.delta()
        .iter()
        .enumerate()
        .map(|(i, &d)| sigmoid_oracle(d) * (g[i] - last) / (ek - e0))
        .collect()
}

#[test]
fn temperature_sweep_converges_to_width_limit() {
    let mut b = DensityBinner::with_cutpoints(0.0, 400.0, &[50.0, 150.0], vec![vec![1.0], vec![-2.0], vec![3.0]], 5.0).unwrap();
    let upstream = [1.0];
    let limit = hot_limit(&b, &upstream);
    let mut gaps = Vec::new();
    for tau in [50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0, 12800.0] {
        b.set_tau(tau);
        let g = b.backward(120.0, &upstream).delta;
        let gap = g.iter().zip(&limit).map(|(a, l)| (a - l).abs()).fold(0.0, f64::max);
        gaps.push(gap);
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(*gaps.last().unwrap() < 1e-6, "{gaps:?}");
    assert!(limit.iter().all(|l| l.abs() > 1e-3));
}

proptest! {
    #[test]
    fn argmax_ignores_positive_scale(n in 0.0f64..400.0, scale in 1e-6f64..1e6) {
        let p = default_binner(8, 2).soft_probs(n);
        let scaled: Vec<f64> = p.iter().map(|x| x * scale).collect();
        prop_assert_eq!(argmax_lowest(&p), argmax_lowest(&scaled));
    }

    #[test]
    fn params_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_binner(&mut rng, 3, 5);
        let back = DensityBinner::from_params(serde_json::from_str(&serde_json::to_string(&b.params()).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(back.cutpoints(), b.cutpoints());
    }
}
