use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelrig::density::DensityBinner;
use skelrig::groups::plan_groups;
use skelrig::synth::synth_rig;
use skelrig::tokenizer::{encode, has_quantization_collision, TokenSequence, Vocabulary};
use skelrig::{sample_mesh, Category, MeshSample, NormalizationTransform, Skeleton, TriMesh};

use crate::error::{ModelError, Result};
use crate::model::{ClsKind, ConditionBundle};
use crate::shape::ShapeEncoder;
use crate::train::TrainExample;

#[derive(Debug, Clone)]
pub struct PreparedRig {
    /// Skeleton in the normalized frame.
    pub skeleton: Skeleton,
    pub sample: MeshSample,
    pub sequence: TokenSequence,
    pub transform: NormalizationTransform,
    pub example: TrainExample,
}

fn data<E: std::fmt::Display>(e: E) -> ModelError {
    ModelError::Data(e.to_string())
}

/// Normalizes by the mesh vertex box, samples the surface, encodes the
/// skeleton and builds the conditioning. The density vector uses the hard
/// level of the bone count; `bone_count` is kept for binner training.
pub fn example_from_rig(
    skeleton: &Skeleton,
    mesh: &TriMesh,
    encoder: &ShapeEncoder,
    binner: &DensityBinner,
    vocab: Vocabulary,
    seed: u64,
    source: &str,
) -> Result<PreparedRig> {
    let transform = NormalizationTransform::fit(&mesh.vertices).map_err(data)?;
    let sample = sample_mesh(mesh, encoder.config().points, seed, source).map_err(data)?;
    let sample = transform.apply_mesh(&sample);
    let skeleton = transform.apply_skeleton(skeleton);
    let plan = plan_groups(&skeleton).map_err(data)?;
    let sequence = encode(&skeleton, &plan, vocab).map_err(data)?;
    let bones = skeleton.bone_count() as f64;
    let bundle = ConditionBundle::new(
        encoder.encode(&sample)?,
        ClsKind::for_skeleton(&skeleton),
        binner.density_vector(bones, true),
    );
    let example = TrainExample {
        tokens: sequence.tokens.clone(),
        bundle,
        bone_count: Some(bones),
    };
    Ok(PreparedRig {
        skeleton,
        sample,
        sequence,
        transform,
        example,
    })
}

/// Synthetic rigs cycling through the three categories, with joint counts
/// drawn from `joints` and no quantization collisions.
pub fn toy_examples(
    count: usize,
    joints: (usize, usize),
    seed: u64,
    encoder: &ShapeEncoder,
    binner: &DensityBinner,
) -> Result<Vec<PreparedRig>> {
    let cats = [Category::Humanoid, Category::Other, Category::Tetrapod];
    let vocab = Vocabulary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = out.len();
        let n = rng.random_range(joints.0..=joints.1);
        let rig = synth_rig(&mut rng, cats[i % cats.len()], n);
        let t = NormalizationTransform::fit(&rig.mesh.vertices).map_err(data)?;
        if has_quantization_collision(&t.apply_skeleton(&rig.skeleton), vocab.resolution()).map_err(data)? {
            continue;
        }
        out.push(example_from_rig(
            &rig.skeleton,
            &rig.mesh,
            encoder,
            binner,
            vocab,
            seed.wrapping_add(i as u64),
            &format!("toy_{i}"),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::ShapeEncoderConfig;

    #[test]
    fn examples_are_consistent() {
        let enc = ShapeEncoder::new(ShapeEncoderConfig {
            width: 16,
            points: 256,
            ..Default::default()
        });
        let binner = DensityBinner::default_levels(16, &mut ChaCha8Rng::seed_from_u64(0));
        let set = toy_examples(6, (5, 9), 1, &enc, &binner).unwrap();
        for p in &set {
            assert_eq!(p.sequence.tokens, p.example.tokens);
            assert_eq!(p.example.bundle.shape.len(), 16);
            assert_eq!(p.example.bone_count, Some(p.skeleton.bone_count() as f64));
            assert!(p.skeleton.positions().iter().all(|q| q.amax() <= 1.0 + 1e-9));
        }
        assert_eq!(set[0].skeleton.category(), Category::Humanoid);
        assert_eq!(set[1].example.bundle.cls, ClsKind::NonHumanoid);
    }
}
