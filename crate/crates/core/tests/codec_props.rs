use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelrig::groups::plan_groups;
use skelrig::skeleton::Coarse;
use skelrig::synth::{collision_free_skeleton, synth_skeleton};
use skelrig::tokenizer::{decode, encode, sequence_stats, TokenSequence, Vocabulary};
use skelrig::{Category, Skeleton, Vec3};

const RES: u32 = 256;

/// Maps every decoded joint to the source joint at the nearest position
/// (brute force), then requires that map to be a bijection carrying the root
/// to the root and every parent edge to a parent edge.
fn check_isomorphic(src: &Skeleton, dec: &Skeleton, tol: f64) -> Result<f64, String> {
    if src.len() != dec.len() {
        return Err(format!("joint count {} vs {}", dec.len(), src.len()));
    }
    let sp = src.positions();
    let mut map = Vec::with_capacity(dec.len());
    let mut worst: f64 = 0.0;
    for p in dec.positions() {
        let (best, d) = sp
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (p - q).amax()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        worst = worst.max(d);
        map.push(best);
    }
    let mut seen = vec![false; src.len()];
    for &m in &map {
        if std::mem::replace(&mut seen[m], true) {
            return Err(format!("source joint {m} matched twice"));
        }
    }
    if map[dec.root()] != src.root() {
        return Err("root moved".into());
    }
    for j in dec.joints() {
        let expect = src.joint(map[j.id]).parent;
        if j.parent.map(|p| map[p]) != expect {
            return Err(format!("joint {} has wrong parent", j.id));
        }
    }
    if worst > tol {
        return Err(format!("position error {worst}"));
    }
    Ok(worst)
}

fn corpus(seed: u64, count: usize, lo: usize, hi: usize) -> Vec<Skeleton> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cats = [Category::Humanoid, Category::Tetrapod, Category::Other];
    (0..count)
        .map(|i| {
            let n = rng.random_range(lo..=hi);
            collision_free_skeleton(&mut rng, cats[i % 3], n, RES)
        })
        .collect()
}

#[test]
fn round_trip_over_synthetic_corpus() {
    for (i, s) in corpus(17, 150, 5, 120).iter().enumerate() {
        let plan = plan_groups(s).unwrap();
        let seq = encode(s, &plan, Vocabulary::new(RES)).unwrap();
        let dec = decode(&seq).unwrap();
        check_isomorphic(s, &dec.skeleton, 1.0 / 256.0).unwrap_or_else(|e| panic!("item {i}: {e}"));
    }
}

#[test]
fn length_and_order_laws() {
    let vocab = Vocabulary::new(RES);
    for s in corpus(3, 120, 5, 200) {
        let plan = plan_groups(&s).unwrap();
        let seq = encode(&s, &plan, vocab).unwrap();
        assert_eq!(seq.len(), 2 + plan.groups.len() + 6 * s.len());
        let stats = sequence_stats(&seq).unwrap();
        assert_eq!((stats.joints, stats.groups, stats.length), (s.len(), plan.groups.len(), seq.len()));
        // Block boundaries sit exactly where the plan says.
        let groups: Vec<usize> = (0..seq.len()).filter(|&i| seq.tokens[i] == vocab.group()).collect();
        let mut at = 1;
        for (g, group) in plan.groups.iter().enumerate() {
            assert_eq!(groups[g], at);
            at += 1 + 6 * group.members.len();
        }
        if s.category() == Category::Humanoid {
            assert_eq!(plan.groups[0].coarse, Coarse::Main);
            let main_end = 2 + 6 * plan.groups[0].members.len();
            assert!(seq.tokens[..main_end].iter().filter(|&&t| t == vocab.group()).count() == 1);
        }
        assert_eq!(encode(&s, &plan, vocab).unwrap().tokens, seq.tokens);
    }
}

fn position_sets(s: &Skeleton) -> Vec<(Coarse, Vec<[u64; 3]>, [u64; 3])> {
    let key = |p: Vec3| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
    let plan = plan_groups(s).unwrap();
    plan.groups
        .iter()
        .map(|g| {
            let mut members: Vec<[u64; 3]> = g.members.iter().map(|&m| key(s.position(m))).collect();
            members.sort();
            (g.coarse, members, key(s.position(g.root)))
        })
        .collect()
}

#[test]
fn plan_and_tokens_ignore_joint_ids() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vocab = Vocabulary::new(RES);
    for s in corpus(5, 60, 5, 90) {
        let mut perm: Vec<usize> = (0..s.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let p = s.permute(&perm);
        assert_eq!(position_sets(&s), position_sets(&p));
        let a = encode(&s, &plan_groups(&s).unwrap(), vocab).unwrap();
        let b = encode(&p, &plan_groups(&p).unwrap(), vocab).unwrap();
        assert_eq!(a.tokens, b.tokens);
    }
}

#[test]
fn tetrapod_plans_have_at_most_two_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [5, 19, 25, 80] {
        let s = synth_skeleton(&mut rng, Category::Tetrapod, n);
        let plan = plan_groups(&s).unwrap();
        assert!(plan.groups.len() <= 2);
        let mut all: Vec<usize> = plan.groups.iter().flat_map(|g| g.members.clone()).collect();
        all.sort();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn file_round_trip() {
    let s = &corpus(2, 1, 30, 30)[0];
    let seq = encode(s, &plan_groups(s).unwrap(), Vocabulary::new(RES)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.tok");
    seq.save(&path).unwrap();
    let back = TokenSequence::load(&path).unwrap();
    assert_eq!(back.tokens, seq.tokens);
    assert_eq!(back.vocab, seq.vocab);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]
    #[test]
    fn decode_survives_any_stream(tokens in prop::collection::vec(0u32..260, 0..400)) {
        let seq = TokenSequence::new(tokens, Vocabulary::new(RES));
        if let Ok(d) = decode(&seq) {
            prop_assert_eq!(d.blocks.len(), d.skeleton.len());
            prop_assert!(skelrig::skeleton::validate_tree(&d.skeleton).is_ok());
        }
    }

    #[test]
    fn decode_survives_structured_noise(seed in any::<u64>(), edits in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(5..60);
        let s = collision_free_skeleton(&mut rng, Category::Humanoid, n, RES);
        let mut seq = encode(&s, &plan_groups(&s).unwrap(), Vocabulary::new(RES)).unwrap();
        for _ in 0..edits {
            let len = seq.tokens.len();
            match rng.random_range(0..3) {
                0 => { let i = rng.random_range(0..len); seq.tokens[i] = rng.random_range(0..260); }
                1 => { let i = rng.random_range(0..len); seq.tokens.remove(i); }
                _ => { let i = rng.random_range(0..=len); seq.tokens.insert(i, rng.random_range(0..260)); }
            }
            if seq.tokens.is_empty() { break; }
        }
        if let Ok(d) = decode(&seq) {
            prop_assert!(skelrig::skeleton::validate_tree(&d.skeleton).is_ok());
        }
    }
}
