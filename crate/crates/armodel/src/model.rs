use std::fmt;
use std::str::FromStr;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};
use skelrig::tokenizer::Vocabulary;
use skelrig::{Category, Coarse, Skeleton};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::nn::{Block, LayerNorm, Linear, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClsKind {
    HumanoidMainOnly,
    HumanoidWithAux,
    NonHumanoid,
}

impl ClsKind {
    pub const ALL: [ClsKind; 3] = [ClsKind::HumanoidMainOnly, ClsKind::HumanoidWithAux, ClsKind::NonHumanoid];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClsKind::HumanoidMainOnly => "humanoid-main",
            ClsKind::HumanoidWithAux => "humanoid-aux",
            ClsKind::NonHumanoid => "non-humanoid",
        }
    }

    /// Humanoids with any non-Main label count as carrying auxiliary bones.
    pub fn for_skeleton(s: &Skeleton) -> Self {
        if s.category() != Category::Humanoid {
            return ClsKind::NonHumanoid;
        }
        let aux = s.joints().iter().any(|j| j.label.is_some_and(|l| l.coarse != Coarse::Main));
        if aux {
            ClsKind::HumanoidWithAux
        } else {
            ClsKind::HumanoidMainOnly
        }
    }
}

impl fmt::Display for ClsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClsKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ClsKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown class {s:?}; expected humanoid-main, humanoid-aux or non-humanoid"))
    }
}

/// Everything the decoder conditions on besides its own tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionBundle {
    pub shape: Vec<f64>,
    pub cls: ClsKind,
    pub density: Vec<f64>,
    /// A single `GROUP` block of Main joints, forced at the start of generation.
    pub main_prefix: Option<Vec<u32>>,
}

impl ConditionBundle {
    pub fn new(shape: Vec<f64>, cls: ClsKind, density: Vec<f64>) -> Self {
        Self {
            shape,
            cls,
            density,
            main_prefix: None,
        }
    }

    pub fn with_prefix(mut self, block: Vec<u32>, vocab: Vocabulary) -> Result<Self> {
        check_prefix(&block, vocab)?;
        self.main_prefix = Some(block);
        Ok(self)
    }
}

pub fn check_prefix(block: &[u32], vocab: Vocabulary) -> Result<()> {
    let bad = |s: &str| Err(ModelError::BadPrefix(s.to_string()));
    match block.split_first() {
        None => bad("empty"),
        Some((&g, _)) if g != vocab.group() => bad("does not start with GROUP"),
        Some((_, rest)) if rest.is_empty() || rest.len() % 6 != 0 => bad("coordinate count is not a positive multiple of 6"),
        Some((_, rest)) if !rest.iter().all(|&t| vocab.is_coord(t)) => bad("contains a non-coordinate token"),
        _ => Ok(()),
    }
}

const SLOT_SHAPE: usize = 0;
const SLOT_CLS: usize = 1;
const SLOT_DENSITY: usize = 2;
const SLOT_PREFIX: usize = 3;

/// One sequence of a batch: token embeddings plus its conditioning, with an
/// optional density tensor that replaces `bundle.density` (used to track
/// gradients into the density vector).
pub(crate) struct Item<'a> {
    pub embeds: Tensor,
    pub bundle: &'a ConditionBundle,
    pub density: Option<Tensor>,
}

pub struct Model {
    cfg: ModelConfig,
    store: ParamStore,
    tok_emb: Tensor,
    pos_emb: Tensor,
    prefix_pos: Tensor,
    slot_emb: Tensor,
    cls_emb: Tensor,
    shape_proj: Linear,
    density_proj: Linear,
    blocks: Vec<Block>,
    ln_out: LayerNorm,
    head: Linear,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut s = ParamStore::new(seed, Device::Cpu);
        let d = cfg.width;
        let out_std = 0.02 / (2.0 * cfg.layers as f64).sqrt();
        let tok_emb = s.normal("tok_emb", &[cfg.vocab_size, d], 0.02)?;
        let pos_emb = s.normal("pos_emb", &[cfg.positions, d], 0.02)?;
        let prefix_pos = s.normal("prefix_pos", &[cfg.positions, d], 0.02)?;
        let slot_emb = s.normal("slot_emb", &[4, d], 0.02)?;
        let cls_emb = s.normal("cls_emb", &[ClsKind::ALL.len(), d], 0.02)?;
        let shape_proj = Linear::new(&mut s, "shape_proj", d, d, 0.02, true)?;
        let density_proj = Linear::new(&mut s, "density_proj", d, d, 0.02, true)?;
        let blocks = (0..cfg.layers)
            .map(|l| Block::new(&mut s, &format!("block{l}"), d, cfg.heads, cfg.mlp_ratio, out_std))
            .collect::<Result<Vec<_>>>()?;
        let ln_out = LayerNorm::new(&mut s, "ln_out", d)?;
        let head = Linear::new(&mut s, "head", d, cfg.vocab_size, 0.02, false)?;
        Ok(Self {
            cfg,
            store: s,
            tok_emb,
            pos_emb,
            prefix_pos,
            slot_emb,
            cls_emb,
            shape_proj,
            density_proj,
            blocks,
            ln_out,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.parameter_count()
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    /// Token layout implied by the vocabulary size: coordinates, then BOS,
    /// EOS, GROUP and PAD.
    pub fn vocab(&self) -> Vocabulary {
        Vocabulary::new((self.cfg.vocab_size - 4) as u32)
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if let Some(&token) = tokens.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                token,
                size: self.cfg.vocab_size,
            });
        }
        Ok(())
    }

    pub fn check_bundle(&self, b: &ConditionBundle) -> Result<()> {
        let d = self.cfg.width;
        for (field, got) in [("shape", b.shape.len()), ("density", b.density.len())] {
            if got != d {
                return Err(ModelError::WidthMismatch { field, expected: d, got });
            }
        }
        if let Some(p) = &b.main_prefix {
            self.check_tokens(p)?;
            if p.len() > self.cfg.positions {
                return Err(ModelError::ContextOverflow {
                    len: p.len(),
                    context: self.cfg.positions,
                });
            }
        }
        Ok(())
    }

    /// Token plus positional embeddings, `[T, width]`.
    pub fn token_embeddings(&self, tokens: &[u32]) -> Result<Tensor> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyTokens);
        }
        if tokens.len() > self.cfg.context {
            return Err(ModelError::ContextOverflow {
                len: tokens.len(),
                context: self.cfg.context,
            });
        }
        self.check_tokens(tokens)?;
        let ids = Tensor::new(tokens, self.device())?;
        Ok(self.tok_emb.index_select(&ids, 0)?.add(&self.pos_emb.narrow(0, 0, tokens.len())?)?)
    }

    /// Logits `[T, vocab]`; row `t` predicts token `t + 1`.
    pub fn forward(&self, tokens: &[u32], bundle: &ConditionBundle) -> Result<Tensor> {
        let embeds = self.token_embeddings(tokens)?;
        self.forward_embeds(&embeds, bundle)
    }

    /// As [`Model::forward`], starting from `[T, width]` token embeddings.
    pub fn forward_embeds(&self, embeds: &Tensor, bundle: &ConditionBundle) -> Result<Tensor> {
        let item = Item {
            embeds: embeds.clone(),
            bundle,
            density: None,
        };
        Ok(self.forward_batch(&[item])?.squeeze(0)?)
    }

    fn slot(&self, i: usize) -> Result<Tensor> {
        Ok(self.slot_emb.narrow(0, i, 1)?)
    }

    fn to_row(&self, v: &[f64]) -> Result<Tensor> {
        let data: Vec<f32> = v.iter().map(|&x| x as f32).collect();
        Ok(Tensor::from_vec(data, (1, v.len()), self.device())?)
    }

    /// Conditioning rows `[m, width]`: shape, class, density, then prefix tokens.
    fn condition(&self, bundle: &ConditionBundle, density: Option<&Tensor>) -> Result<Tensor> {
        self.check_bundle(bundle)?;
        let d = self.cfg.width;
        let shape = self.shape_proj.forward(&self.to_row(&bundle.shape)?)?.add(&self.slot(SLOT_SHAPE)?)?;
        let cls = self.cls_emb.narrow(0, bundle.cls.index(), 1)?.add(&self.slot(SLOT_CLS)?)?;
        let dens = match density {
            Some(t) => t.reshape((1, d))?,
            None => self.to_row(&bundle.density)?,
        };
        let dens = self.density_proj.forward(&dens)?.add(&self.slot(SLOT_DENSITY)?)?;
        let mut rows = vec![shape, cls, dens];
        if let Some(p) = &bundle.main_prefix {
            let ids = Tensor::new(p.as_slice(), self.device())?;
            let e = self
                .tok_emb
                .index_select(&ids, 0)?
                .add(&self.prefix_pos.narrow(0, 0, p.len())?)?
                .broadcast_add(&self.slot(SLOT_PREFIX)?)?;
            rows.push(e);
        }
        Ok(Tensor::cat(&rows, 0)?)
    }

    fn pad_rows(&self, t: Tensor, rows: usize) -> Result<Tensor> {
        let have = t.dim(0)?;
        if have == rows {
            return Ok(t);
        }
        let z = Tensor::zeros((rows - have, self.cfg.width), DType::F32, self.device())?;
        Ok(Tensor::cat(&[t, z], 0)?)
    }

    /// Logits `[B, T_max, vocab]`. Each sequence is laid out as its
    /// conditioning rows padded to a common count, then its tokens padded to
    /// a common length; padded keys are masked out.
    pub(crate) fn forward_batch(&self, items: &[Item<'_>]) -> Result<Tensor> {
        if items.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let conds = items
            .iter()
            .map(|it| self.condition(it.bundle, it.density.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let m: Vec<usize> = conds.iter().map(|c| c.dim(0)).collect::<candle_core::Result<_>>()?;
        let t: Vec<usize> = items.iter().map(|it| it.embeds.dim(0)).collect::<candle_core::Result<_>>()?;
        if let Some(&len) = t.iter().find(|&&len| len > self.cfg.context) {
            return Err(ModelError::ContextOverflow {
                len,
                context: self.cfg.context,
            });
        }
        let (m_max, t_max) = (*m.iter().max().unwrap(), *t.iter().max().unwrap());
        let s = m_max + t_max;
        let b = items.len();

        let mut ctx = Vec::with_capacity(b);
        let mut seqs = Vec::with_capacity(b);
        for (c, it) in conds.into_iter().zip(items) {
            let c = self.pad_rows(c, m_max)?;
            seqs.push(Tensor::cat(&[c.clone(), self.pad_rows(it.embeds.clone(), t_max)?], 0)?);
            ctx.push(c);
        }
        let mut x = Tensor::stack(&seqs, 0)?;
        let ctx = Tensor::stack(&ctx, 0)?;

        let mut self_mask = Vec::with_capacity(b * s * s);
        let mut cross_mask = Vec::with_capacity(b * s * m_max);
        for k in 0..b {
            let valid = |j: usize| j < m[k] || (j >= m_max && j < m_max + t[k]);
            for i in 0..s {
                self_mask.extend((0..s).map(|j| if j <= i && valid(j) { 0f32 } else { f32::NEG_INFINITY }));
                cross_mask.extend((0..m_max).map(|j| if j < m[k] { 0f32 } else { f32::NEG_INFINITY }));
            }
        }
        let self_mask = Tensor::from_vec(self_mask, (b, 1, s, s), self.device())?;
        let cross_mask = Tensor::from_vec(cross_mask, (b, 1, s, m_max), self.device())?;

        for blk in &self.blocks {
            x = blk.forward(&x, &ctx, &self_mask, &cross_mask)?;
        }
        let out = self.ln_out.forward(&x.narrow(1, m_max, t_max)?)?;
        self.head.forward(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use skelrig::SemanticLabel;

    fn small() -> ModelConfig {
        ModelConfig {
            width: 16,
            layers: 1,
            heads: 2,
            context: 32,
            positions: 32,
            ..Default::default()
        }
    }

    fn bundle(d: usize) -> ConditionBundle {
        ConditionBundle::new(vec![0.5; d], ClsKind::NonHumanoid, vec![-0.5; d])
    }

    #[test]
    fn cls_names_round_trip() {
        for c in ClsKind::ALL {
            assert_eq!(c.name().parse::<ClsKind>().unwrap(), c);
        }
        assert!("robot".parse::<ClsKind>().is_err());
    }

    #[test]
    fn cls_from_labels() {
        let p = [skelrig::Vec3::zeros(), skelrig::Vec3::x()];
        let mut s = Skeleton::from_parents(&p, &[None, Some(0)], Category::Humanoid).unwrap();
        let main = SemanticLabel {
            coarse: Coarse::Main,
            fine: 0,
        };
        s.set_label(0, Some(main));
        s.set_label(1, Some(main));
        assert_eq!(ClsKind::for_skeleton(&s), ClsKind::HumanoidMainOnly);
        s.set_label(1, Some(SemanticLabel { coarse: Coarse::Hair, fine: 30 }));
        assert_eq!(ClsKind::for_skeleton(&s), ClsKind::HumanoidWithAux);
        assert_eq!(ClsKind::for_skeleton(&s.with_category(Category::Tetrapod)), ClsKind::NonHumanoid);
    }

    #[test]
    fn prefix_validation() {
        let v = Vocabulary::new(256);
        assert!(check_prefix(&[v.group(), 1, 2, 3, 1, 2, 3], v).is_ok());
        assert!(check_prefix(&[v.group(), 1, 2, 3], v).is_err());
        assert!(check_prefix(&[1, 2, 3, 1, 2, 3, 4], v).is_err());
        assert!(check_prefix(&[v.group(), 1, 2, 3, 1, 2, v.eos()], v).is_err());
        assert!(check_prefix(&[v.group()], v).is_err());
    }

    #[test]
    fn output_shape_and_errors() {
        let m = Model::new(small(), 0).unwrap();
        let logits = m.forward(&[256, 258, 1, 2, 3], &bundle(16)).unwrap();
        assert_eq!(logits.dims(), &[5, 260]);
        assert!(matches!(m.forward(&[0; 33], &bundle(16)), Err(ModelError::ContextOverflow { .. })));
        assert!(matches!(m.forward(&[0], &bundle(8)), Err(ModelError::WidthMismatch { field: "shape", .. })));
        assert!(matches!(m.forward(&[300], &bundle(16)), Err(ModelError::TokenOutOfRange { .. })));
    }

    #[test]
    fn batches_match_single_forwards() {
        let m = Model::new(small(), 1).unwrap();
        let v = Vocabulary::new(256);
        let a = bundle(16);
        let b = bundle(16).with_prefix(vec![v.group(), 4, 5, 6, 7, 8, 9], v).unwrap();
        let ta = [256u32, 258, 10, 11];
        let tb = [256u32, 258, 4, 5, 6, 7, 8, 9];
        let items = [
            Item { embeds: m.token_embeddings(&ta).unwrap(), bundle: &a, density: None },
            Item { embeds: m.token_embeddings(&tb).unwrap(), bundle: &b, density: None },
        ];
        let batch = m.forward_batch(&items).unwrap();
        let single_a = m.forward(&ta, &a).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let single_b = m.forward(&tb, &b).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let ba = batch.get(0).unwrap().narrow(0, 0, 4).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let bb = batch.get(1).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        for (x, y) in single_a.iter().zip(&ba).chain(single_b.iter().zip(&bb)) {
            assert!((x - y).abs() < 1e-5, "{x} {y}");
        }
    }
}
