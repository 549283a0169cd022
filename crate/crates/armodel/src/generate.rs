use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use skelrig::tokenizer::{TokenSequence, Vocabulary, TOKENS_PER_JOINT};

use crate::error::{ModelError, Result};
use crate::model::{check_prefix, ConditionBundle, Model};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampling {
    Greedy,
    TopK { k: usize, temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub sampling: Sampling,
    /// Cap on the emitted length, EOS included.
    pub max_len: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            sampling: Sampling::Greedy,
            max_len: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum GenerationNote {
    /// The length cap was reached and EOS was forced.
    NoEos { max_len: usize },
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub sequence: TokenSequence,
    pub notes: Vec<GenerationNote>,
    /// Leading tokens that were forced rather than predicted.
    pub forced: usize,
}

/// BOS, GROUP, one joint, EOS.
const MIN_LEN: usize = 3 + TOKENS_PER_JOINT;

/// Next-token classes permitted by the sequence grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Allowed {
    coord: bool,
    group: bool,
    eos: bool,
}

/// Tracks the grammar position: coordinates always come in whole joints
/// inside a group, and a joint or group is only started when it can be
/// finished before the length cap.
#[derive(Debug, Clone)]
struct Grammar {
    len: usize,
    in_group: usize,
    max_len: usize,
}

impl Grammar {
    fn new(max_len: usize) -> Self {
        Self {
            len: 1,
            in_group: 0,
            max_len,
        }
    }

    fn push(&mut self, t: u32, vocab: Vocabulary) {
        self.len += 1;
        if t == vocab.group() {
            self.in_group = 0;
        } else if vocab.is_coord(t) {
            self.in_group += 1;
        }
    }

    fn allowed(&self, started: bool) -> Allowed {
        if !started {
            return Allowed {
                coord: false,
                group: true,
                eos: false,
            };
        }
        if self.in_group % TOKENS_PER_JOINT != 0 || self.in_group == 0 {
            return Allowed {
                coord: true,
                group: false,
                eos: false,
            };
        }
        Allowed {
            coord: self.len + TOKENS_PER_JOINT < self.max_len,
            group: self.len + 1 + TOKENS_PER_JOINT < self.max_len,
            eos: true,
        }
    }
}

fn permitted(t: usize, a: Allowed, vocab: Vocabulary) -> bool {
    let t = t as u32;
    (a.coord && vocab.is_coord(t)) || (a.group && t == vocab.group()) || (a.eos && t == vocab.eos())
}

fn pick(logits: &[f32], a: Allowed, vocab: Vocabulary, sampling: Sampling, rng: &mut Option<ChaCha8Rng>) -> Result<u32> {
    let mut cands: Vec<(usize, f32)> = logits
        .iter()
        .enumerate()
        .filter(|&(t, _)| permitted(t, a, vocab))
        .map(|(t, &l)| (t, l))
        .collect();
    if cands.iter().any(|(_, l)| l.is_nan()) {
        return Err(ModelError::NaNLoss {
            step: 0,
            detail: "NaN logit during generation".into(),
        });
    }
    // Stable sort keeps the lowest id first among equal logits.
    cands.sort_by(|x, y| y.1.total_cmp(&x.1));
    match (sampling, rng.as_mut()) {
        (Sampling::TopK { k, temperature, .. }, Some(rng)) => {
            cands.truncate(k.max(1));
            let top = cands[0].1 as f64;
            let t = temperature.max(1e-6);
            let w: Vec<f64> = cands.iter().map(|(_, l)| ((*l as f64 - top) / t).exp()).collect();
            let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
            for ((tok, _), wi) in cands.iter().zip(&w) {
                if u < *wi {
                    return Ok(*tok as u32);
                }
                u -= wi;
            }
            Ok(cands.last().unwrap().0 as u32)
        }
        _ => Ok(cands[0].0 as u32),
    }
}

/// Autoregressive decoding under the token grammar, so the output always
/// decodes. A Main prefix in the bundle is emitted verbatim after BOS.
pub fn generate(model: &Model, bundle: &ConditionBundle, cfg: &GenerateConfig) -> Result<Generation> {
    let vocab = model.vocab();
    model.check_bundle(bundle)?;
    let max_len = cfg.max_len.min(model.config().context + 1);
    if max_len < MIN_LEN {
        return Err(ModelError::MaxLenTooSmall(max_len));
    }
    let mut tokens = vec![vocab.bos()];
    let mut grammar = Grammar::new(max_len);
    if let Some(p) = &bundle.main_prefix {
        check_prefix(p, vocab)?;
        if p.len() + 2 > max_len {
            return Err(ModelError::MaxLenTooSmall(max_len));
        }
        for &t in p {
            tokens.push(t);
            grammar.push(t, vocab);
        }
    }
    let forced = tokens.len();
    let mut rng = match cfg.sampling {
        Sampling::TopK { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Sampling::Greedy => None,
    };
    let mut notes = Vec::new();
    loop {
        let allowed = grammar.allowed(tokens.len() > 1);
        let next = if allowed == (Allowed { coord: false, group: false, eos: true }) {
            notes.push(GenerationNote::NoEos { max_len });
            vocab.eos()
        } else {
            let logits = model.forward(&tokens, bundle)?;
            let last = logits.get(tokens.len() - 1)?.to_vec1::<f32>()?;
            pick(&last, allowed, vocab, cfg.sampling, &mut rng)?
        };
        tokens.push(next);
        grammar.push(next, vocab);
        if next == vocab.eos() {
            break;
        }
    }
    Ok(Generation {
        sequence: TokenSequence::new(tokens, vocab),
        notes,
        forced,
    })
}
