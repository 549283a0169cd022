use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use skelrig::mesh::SAMPLE_COUNT;
use skelrig::MeshSample;

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeEncoderConfig {
    pub width: usize,
    pub hidden: usize,
    pub points: usize,
    pub seed: u64,
}

impl Default for ShapeEncoderConfig {
    fn default() -> Self {
        Self {
            width: 128,
            hidden: 64,
            points: SAMPLE_COUNT,
            seed: 0x5eed,
        }
    }
}

/// Frozen random point-wise MLP over (position, normal) followed by max
/// pooling. The model learns a projection on top of it.
#[derive(Debug, Clone)]
pub struct ShapeEncoder {
    cfg: ShapeEncoderConfig,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

impl ShapeEncoder {
    pub fn new(cfg: ShapeEncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut normal = |r: usize, c: usize, std: f64| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal) * std);
        let w1 = normal(6, cfg.hidden, 1.0);
        let b1 = normal(cfg.hidden, 1, 0.5).column(0).into_owned();
        let w2 = normal(cfg.hidden, cfg.width, 1.0 / (cfg.hidden as f64).sqrt());
        let b2 = normal(cfg.width, 1, 0.1).column(0).into_owned();
        Self { cfg, w1, b1, w2, b2 }
    }

    pub fn config(&self) -> &ShapeEncoderConfig {
        &self.cfg
    }

    pub fn width(&self) -> usize {
        self.cfg.width
    }

    pub fn encode(&self, sample: &MeshSample) -> Result<Vec<f64>> {
        if sample.len() != self.cfg.points {
            return Err(ModelError::PointCountMismatch {
                expected: self.cfg.points,
                got: sample.len(),
            });
        }
        let x = DMatrix::from_fn(sample.len(), 6, |i, c| {
            if c < 3 {
                sample.points()[i][c]
            } else {
                sample.normals()[i][c - 3]
            }
        });
        let mut h = x * &self.w1;
        for mut row in h.row_iter_mut() {
            row += self.b1.transpose();
            row.apply(|v| *v = v.max(0.0));
        }
        let f = h * &self.w2;
        Ok((0..self.cfg.width)
            .map(|c| f.column(c).max() + self.b2[c])
            .collect())
    }

    /// Encodes and checks the result against the model width.
    pub fn encode_for(&self, sample: &MeshSample, model_width: usize) -> Result<Vec<f64>> {
        if self.cfg.width != model_width {
            return Err(ModelError::WidthMismatch {
                field: "shape",
                expected: model_width,
                got: self.cfg.width,
            });
        }
        self.encode(sample)
    }
}
