use candle_core::{Tensor, Var, D};
use candle_nn::ops::log_softmax;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use skelrig::density::{DensityBinner, DensityGrads};

use crate::config::TrainConfig;
use crate::error::{ModelError, Result};
use crate::model::{ConditionBundle, Item, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    /// Full sequence, BOS through EOS.
    pub tokens: Vec<u32>,
    pub bundle: ConditionBundle,
    /// Bone count routed through the density binner when one is attached;
    /// otherwise `bundle.density` is used as given.
    pub bone_count: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchStats {
    /// Mean cross-entropy over non-PAD targets.
    pub loss: f64,
    pub correct: usize,
    pub total: usize,
}

impl BatchStats {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub tokens: usize,
}

struct Pass {
    loss: Tensor,
    stats: BatchStats,
}

/// Teacher-forced pass: inputs are `tokens[..n-1]`, targets `tokens[1..]`.
fn run_batch(model: &Model, batch: &[&TrainExample], densities: &[Option<Tensor>]) -> Result<Pass> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let pad = model.vocab().pad();
    let items = batch
        .iter()
        .zip(densities)
        .map(|(ex, dens)| {
            if ex.tokens.len() < 2 {
                return Err(ModelError::ShortSequence);
            }
            Ok(Item {
                embeds: model.token_embeddings(&ex.tokens[..ex.tokens.len() - 1])?,
                bundle: &ex.bundle,
                density: dens.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let logits = model.forward_batch(&items)?;
    let t_max = logits.dim(1)?;

    let mut targets = Vec::with_capacity(batch.len() * t_max);
    let mut mask = Vec::with_capacity(batch.len() * t_max);
    for ex in batch {
        for i in 0..t_max {
            let tgt = ex.tokens.get(i + 1).copied().unwrap_or(pad);
            targets.push(tgt);
            mask.push(if tgt == pad { 0f32 } else { 1.0 });
        }
    }
    let total = mask.iter().filter(|&&m| m > 0.0).count();
    if total == 0 {
        return Err(ModelError::ShortSequence);
    }
    let dev = model.device();
    let shape = (batch.len(), t_max);
    let target_t = Tensor::from_vec(targets.clone(), shape, dev)?;
    let mask_t = Tensor::from_vec(mask.clone(), shape, dev)?;
    let logp = log_softmax(&logits, D::Minus1)?;
    let picked = logp.gather(&target_t.unsqueeze(2)?, 2)?.squeeze(2)?;
    let loss = ((picked * mask_t)?.sum_all()? * (-1.0 / total as f64))?;

    let pred = logits.argmax(D::Minus1)?.flatten_all()?.to_vec1::<u32>()?;
    let correct = pred
        .iter()
        .zip(&targets)
        .zip(&mask)
        .filter(|((p, t), m)| **m > 0.0 && p == t)
        .count();
    let value = loss.to_scalar::<f32>()? as f64;
    Ok(Pass {
        loss,
        stats: BatchStats {
            loss: value,
            correct,
            total,
        },
    })
}

/// Loss and next-token accuracy without updating anything.
pub fn evaluate(model: &Model, data: &[TrainExample], batch_size: usize) -> Result<BatchStats> {
    let mut sum = 0.0;
    let mut out = BatchStats {
        loss: 0.0,
        correct: 0,
        total: 0,
    };
    for chunk in data.chunks(batch_size.max(1)) {
        let batch: Vec<&TrainExample> = chunk.iter().collect();
        let s = run_batch(model, &batch, &vec![None; batch.len()])?.stats;
        sum += s.loss * s.total as f64;
        out.correct += s.correct;
        out.total += s.total;
    }
    if out.total == 0 {
        return Err(ModelError::EmptyBatch);
    }
    out.loss = sum / out.total as f64;
    Ok(out)
}

fn accumulate(into: &mut DensityGrads, g: &DensityGrads) {
    for (a, b) in into.delta.iter_mut().zip(&g.delta) {
        *a += b;
    }
    for (ra, rb) in into.embeddings.iter_mut().zip(&g.embeddings) {
        for (a, b) in ra.iter_mut().zip(rb) {
            *a += b;
        }
    }
    into.tau += g.tau;
    into.n += g.n;
}

pub struct Trainer {
    model: Model,
    opt: AdamW,
    binner: Option<DensityBinner>,
    cfg: TrainConfig,
    steps: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Model, binner: Option<DensityBinner>, cfg: TrainConfig) -> Result<Self> {
        if let Some(b) = &binner {
            if b.width() != model.config().width {
                return Err(ModelError::WidthMismatch {
                    field: "density",
                    expected: model.config().width,
                    got: b.width(),
                });
            }
        }
        let params = ParamsAdamW {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        };
        let opt = AdamW::new(model.params().all(), params)?;
        Ok(Self {
            model,
            opt,
            binner,
            cfg,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn binner(&self) -> Option<&DensityBinner> {
        self.binner.as_ref()
    }

    pub fn into_parts(self) -> (Model, Option<DensityBinner>) {
        (self.model, self.binner)
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Loss on `batch` with current parameters, no update.
    pub fn batch_loss(&self, batch: &[&TrainExample]) -> Result<BatchStats> {
        Ok(run_batch(&self.model, batch, &vec![None; batch.len()])?.stats)
    }

    /// One optimizer update. With a binner attached, examples carrying a bone
    /// count get their density vector from it and the gradient reaching that
    /// vector is pushed back into the binner parameters.
    pub fn step(&mut self, batch: &[&TrainExample]) -> Result<StepReport> {
        let dev = self.model.device().clone();
        let mut dens: Vec<Option<(Var, f64)>> = Vec::with_capacity(batch.len());
        for ex in batch {
            dens.push(match (&self.binner, ex.bone_count) {
                (Some(b), Some(n)) => {
                    let v: Vec<f32> = b.density_vector(n, false).iter().map(|&x| x as f32).collect();
                    let len = v.len();
                    Some((Var::from_vec(v, len, &dev)?, n))
                }
                _ => None,
            });
        }
        let overrides: Vec<Option<Tensor>> = dens.iter().map(|d| d.as_ref().map(|(v, _)| v.as_tensor().clone())).collect();
        let pass = run_batch(&self.model, batch, &overrides)?;
        if !pass.stats.loss.is_finite() {
            let lens: Vec<usize> = batch.iter().map(|e| e.tokens.len()).collect();
            return Err(ModelError::NaNLoss {
                step: self.steps,
                detail: format!(
                    "loss {} over {} targets, sequence lengths {lens:?}, lr {}",
                    pass.stats.loss, pass.stats.total, self.cfg.lr
                ),
            });
        }
        let grads = pass.loss.backward()?;
        self.opt.step(&grads)?;
        if let Some(binner) = &mut self.binner {
            let mut total: Option<DensityGrads> = None;
            for (var, n) in dens.iter().flatten() {
                let Some(g) = grads.get(var.as_tensor()) else { continue };
                let upstream: Vec<f64> = g.to_vec1::<f32>()?.into_iter().map(f64::from).collect();
                let g = binner.backward(*n, &upstream);
                match &mut total {
                    Some(t) => accumulate(t, &g),
                    None => total = Some(g),
                }
            }
            if let Some(g) = total {
                binner.apply_gradients(&g, self.cfg.density_lr, self.cfg.learn_tau);
            }
        }
        self.steps += 1;
        Ok(StepReport {
            step: self.steps,
            loss: pass.stats.loss,
            accuracy: pass.stats.accuracy(),
            tokens: pass.stats.total,
        })
    }

    /// Runs up to `steps` updates over mini-batches drawn from a seeded
    /// reshuffle each epoch. Stops early when `on_step` returns false.
    pub fn fit(
        &mut self,
        data: &[TrainExample],
        steps: usize,
        mut on_step: impl FnMut(&StepReport) -> bool,
    ) -> Result<Vec<StepReport>> {
        if data.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let bs = self.cfg.batch_size.clamp(1, data.len());
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut cursor = data.len();
        let mut reports = Vec::with_capacity(steps);
        for _ in 0..steps {
            if cursor + bs > data.len() {
                order.shuffle(&mut self.rng);
                cursor = 0;
            }
            let batch: Vec<&TrainExample> = order[cursor..cursor + bs].iter().map(|&i| &data[i]).collect();
            cursor += bs;
            let r = self.step(&batch)?;
            reports.push(r);
            if !on_step(&r) {
                break;
            }
        }
        Ok(reports)
    }
}
