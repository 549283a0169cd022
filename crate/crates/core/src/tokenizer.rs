//! Semantic-aware skeleton token codec.
//!
//! A sequence is `BOS (GROUP sextet*)+ EOS`. Each sextet is one joint: the
//! quantized (x, y, z) of the joint followed by the quantized (x, y, z) of its
//! parent. The skeleton root repeats its own coordinates as parent. Within a
//! group joints are emitted depth-first from the group root, children in
//! ascending (z, y, x).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::cmp_zyx;
use crate::groups::GroupPlan;
use crate::quantize::{dequantize, quantize, QuantizeError};
use crate::skeleton::{Category, Joint, Skeleton};

pub const TOKENS_PER_JOINT: usize = 6;
pub const TOKEN_FILE_MAGIC: &[u8; 8] = b"SKELTOK1";

/// Coordinate ids `0..resolution` (shared by all axes), then BOS, EOS, GROUP, PAD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Vocabulary {
    resolution: u32,
}

impl Vocabulary {
    pub fn new(resolution: u32) -> Self {
        assert!(resolution >= 2 && resolution <= u16::MAX as u32 - 4);
        Self { resolution }
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn size(&self) -> usize {
        self.resolution as usize + 4
    }

    pub fn bos(&self) -> u32 {
        self.resolution
    }

    pub fn eos(&self) -> u32 {
        self.resolution + 1
    }

    pub fn group(&self) -> u32 {
        self.resolution + 2
    }

    pub fn pad(&self) -> u32 {
        self.resolution + 3
    }

    pub fn is_coord(&self, t: u32) -> bool {
        t < self.resolution
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new(crate::quantize::DEFAULT_RESOLUTION)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub vocab: Vocabulary,
    pub provenance: Option<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, vocab: Vocabulary) -> Self {
        Self {
            tokens,
            vocab,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens of the first `GROUP` block (the `GROUP` token plus its sextets),
    /// or `None` when the sequence has no block.
    pub fn first_block(&self) -> Option<Vec<u32>> {
        let start = self.tokens.iter().position(|&t| t == self.vocab.group())?;
        let end = self.tokens[start + 1..]
            .iter()
            .position(|&t| !self.vocab.is_coord(t))
            .map_or(self.tokens.len(), |p| start + 1 + p);
        Some(self.tokens[start..end].to_vec())
    }

    /// Human-readable form, e.g. `<BOS> <G> 12/200/31 12/200/31 <EOS>`.
    pub fn to_debug_text(&self) -> String {
        let v = self.vocab;
        let mut out = String::new();
        let mut coords: Vec<u32> = Vec::new();
        let flush = |coords: &mut Vec<u32>, out: &mut String| {
            for chunk in coords.chunks(3) {
                let s: Vec<String> = chunk.iter().map(u32::to_string).collect();
                let _ = write!(out, "{} ", s.join("/"));
            }
            coords.clear();
        };
        for &t in &self.tokens {
            if v.is_coord(t) {
                coords.push(t);
                continue;
            }
            flush(&mut coords, &mut out);
            let name = match t {
                t if t == v.bos() => "<BOS>".to_string(),
                t if t == v.eos() => "<EOS>".to_string(),
                t if t == v.group() => "<G>".to_string(),
                t if t == v.pad() => "<PAD>".to_string(),
                t => format!("<UNK:{t}>"),
            };
            out.push_str(&name);
            out.push(' ');
        }
        flush(&mut coords, &mut out);
        out.trim_end().to_string()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 2 * self.tokens.len());
        out.extend_from_slice(TOKEN_FILE_MAGIC);
        out.extend_from_slice(&self.vocab.resolution.to_le_bytes());
        for &t in &self.tokens {
            out.extend_from_slice(&(t as u16).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TokenFileError> {
        if bytes.len() < 12 || &bytes[..8] != TOKEN_FILE_MAGIC {
            return Err(TokenFileError::BadMagic);
        }
        let resolution = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if !(2..=u16::MAX as u32 - 4).contains(&resolution) {
            return Err(TokenFileError::BadResolution(resolution));
        }
        let body = &bytes[12..];
        if body.len() % 2 != 0 {
            return Err(TokenFileError::OddLength);
        }
        let tokens = body
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as u32)
            .collect();
        Ok(Self::new(tokens, Vocabulary::new(resolution)))
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenFileError> {
        fs::write(path, self.to_bytes()).map_err(|source| TokenFileError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TokenFileError> {
        let bytes = fs::read(path).map_err(|source| TokenFileError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut seq = Self::from_bytes(&bytes)?;
        seq.provenance = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        Ok(seq)
    }
}

#[derive(Debug, Error)]
pub enum TokenFileError {
    #[error("not a token file (bad magic)")]
    BadMagic,
    #[error("unsupported resolution {0}")]
    BadResolution(u32),
    #[error("token payload has odd byte length")]
    OddLength,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("joint {joint}: {source}")]
    UnquantizablePosition { joint: usize, source: QuantizeError },
    #[error("group plan does not partition the skeleton's joints")]
    PlanMismatch,
}

/// True when two joints fall into the same quantization cell; such skeletons
/// cannot round-trip exactly.
pub fn has_quantization_collision(skeleton: &Skeleton, resolution: u32) -> Result<bool, EncodeError> {
    let mut seen = std::collections::HashSet::new();
    for j in skeleton.joints() {
        let cell = quantize(&j.position, resolution).map_err(|source| EncodeError::UnquantizablePosition {
            joint: j.id,
            source,
        })?;
        if !seen.insert(cell) {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn encode(skeleton: &Skeleton, plan: &GroupPlan, vocab: Vocabulary) -> Result<TokenSequence, EncodeError> {
    encode_with_order(skeleton, plan, vocab).map(|(seq, _)| seq)
}

/// Encodes and also returns the joint ids in emission order.
pub fn encode_with_order(
    skeleton: &Skeleton,
    plan: &GroupPlan,
    vocab: Vocabulary,
) -> Result<(TokenSequence, Vec<usize>), EncodeError> {
    let k = skeleton.len();
    let assignment = plan.assignment(k);
    if assignment.iter().any(|&g| g == usize::MAX)
        || plan.groups.iter().map(|g| g.members.len()).sum::<usize>() != k
    {
        return Err(EncodeError::PlanMismatch);
    }
    let res = vocab.resolution();
    let bins = skeleton
        .joints()
        .iter()
        .map(|j| {
            quantize(&j.position, res).map_err(|source| EncodeError::UnquantizablePosition { joint: j.id, source })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut children = skeleton.children();
    for list in &mut children {
        list.sort_by(|a, b| cmp_zyx(&skeleton.position(*a), &skeleton.position(*b)).then(a.cmp(b)));
    }

    let mut tokens = Vec::with_capacity(2 + plan.groups.len() + TOKENS_PER_JOINT * k);
    let mut order = Vec::with_capacity(k);
    let mut visited = vec![false; k];
    tokens.push(vocab.bos());
    for (g, group) in plan.groups.iter().enumerate() {
        tokens.push(vocab.group());
        let in_group = |j: usize| assignment[j] == g;
        let mut dfs = |start: usize, visited: &mut Vec<bool>, order: &mut Vec<usize>| {
            let mut stack = vec![start];
            while let Some(j) = stack.pop() {
                visited[j] = true;
                order.push(j);
                tokens.extend_from_slice(&bins[j]);
                let parent_bins = match skeleton.joint(j).parent {
                    Some(p) if p < k && p != j => bins[p],
                    _ => bins[j],
                };
                tokens.extend_from_slice(&parent_bins);
                stack.extend(children[j].iter().rev().copied().filter(|&c| in_group(c) && !visited[c]));
            }
        };
        dfs(group.root, &mut visited, &mut order);
        let mut entries: Vec<usize> = group
            .members
            .iter()
            .copied()
            .filter(|&m| !visited[m])
            .filter(|&m| match skeleton.joint(m).parent {
                Some(p) if p < k => !(in_group(p) && !visited[p]),
                _ => true,
            })
            .collect();
        entries.sort_by(|a, b| cmp_zyx(&skeleton.position(*a), &skeleton.position(*b)).then(a.cmp(b)));
        for e in entries {
            if !visited[e] {
                dfs(e, &mut visited, &mut order);
            }
        }
    }
    tokens.push(vocab.eos());
    if order.len() != k {
        return Err(EncodeError::PlanMismatch);
    }
    Ok((TokenSequence::new(tokens, vocab), order))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Diagnostic {
    MissingBos,
    MissingEos,
    /// Coordinates appeared before any `GROUP` token.
    MissingGroup { position: usize },
    EmptyGroup { block: usize },
    /// A partial sextet was dropped.
    Truncation { position: usize, dropped: usize },
    UnexpectedToken { position: usize, token: u32 },
    TrailingTokens { count: usize },
    /// No sextet carried the self-parent sentinel; the first joint became root.
    MissingRoot,
    /// A later self-parent sextet, attached by proximity.
    ExtraRoot { joint: usize },
    /// Parent resolved to the nearest joint within two bins rather than exactly.
    NearMatch { joint: usize, parent: usize },
    /// Parent coordinates matched a joint decoded later in the sequence.
    ForwardMatch { joint: usize, parent: usize },
    /// No parent found; attached to the skeleton root.
    OrphanRepair { joint: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("sequence contains no complete joint sextet")]
    EmptySequence,
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub skeleton: Skeleton,
    pub diagnostics: Vec<Diagnostic>,
    /// Block index of every decoded joint.
    pub blocks: Vec<usize>,
}

struct Sextet {
    own: [u32; 3],
    parent: [u32; 3],
    block: usize,
}

fn parse_sextets(tokens: &[u32], vocab: Vocabulary, diags: &mut Vec<Diagnostic>) -> Vec<Sextet> {
    let mut out = Vec::new();
    let mut i = 0;
    if tokens.first() == Some(&vocab.bos()) {
        i = 1;
    } else {
        diags.push(Diagnostic::MissingBos);
    }
    let mut block: Option<usize> = None;
    let mut block_joints = 0usize;
    let mut pending: Vec<u32> = Vec::with_capacity(TOKENS_PER_JOINT);
    let mut pending_start = 0;
    let mut saw_eos = false;
    while i < tokens.len() {
        let t = tokens[i];
        if vocab.is_coord(t) {
            if block.is_none() {
                diags.push(Diagnostic::MissingGroup { position: i });
                block = Some(0);
                block_joints = 0;
            }
            if pending.is_empty() {
                pending_start = i;
            }
            pending.push(t);
            if pending.len() == TOKENS_PER_JOINT {
                out.push(Sextet {
                    own: [pending[0], pending[1], pending[2]],
                    parent: [pending[3], pending[4], pending[5]],
                    block: block.expect("block set"),
                });
                block_joints += 1;
                pending.clear();
            }
        } else if t == vocab.group() || t == vocab.eos() {
            if !pending.is_empty() {
                diags.push(Diagnostic::Truncation {
                    position: pending_start,
                    dropped: pending.len(),
                });
                pending.clear();
            }
            if let Some(b) = block {
                if block_joints == 0 {
                    diags.push(Diagnostic::EmptyGroup { block: b });
                }
            }
            if t == vocab.eos() {
                saw_eos = true;
                let rest = tokens.len() - i - 1;
                if rest > 0 {
                    diags.push(Diagnostic::TrailingTokens { count: rest });
                }
                break;
            }
            block = Some(block.map_or(0, |b| b + 1));
            block_joints = 0;
        } else {
            diags.push(Diagnostic::UnexpectedToken { position: i, token: t });
        }
        i += 1;
    }
    if !saw_eos {
        if !pending.is_empty() {
            diags.push(Diagnostic::Truncation {
                position: pending_start,
                dropped: pending.len(),
            });
        }
        if let (Some(b), 0) = (block, block_joints) {
            diags.push(Diagnostic::EmptyGroup { block: b });
        }
        diags.push(Diagnostic::MissingEos);
    }
    out
}

fn chebyshev(a: &[u32; 3], b: &[u32; 3]) -> u32 {
    (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap_or(0)
}

/// Parses any token stream into a skeleton, recording every repair.
///
/// Parent resolution per joint: exact coordinate match against earlier joints
/// (most recent wins); the first self-parent sextet is the root; otherwise an
/// exact match against a later joint, then the nearest earlier joint within
/// two bins (Chebyshev), and finally the skeleton root.
pub fn decode(sequence: &TokenSequence) -> Result<Decoded, DecodeError> {
    let vocab = sequence.vocab;
    let mut diagnostics = Vec::new();
    let sextets = parse_sextets(&sequence.tokens, vocab, &mut diagnostics);
    if sextets.is_empty() {
        return Err(DecodeError::EmptySequence);
    }
    let n = sextets.len();
    let root = match sextets.iter().position(|s| s.own == s.parent) {
        Some(r) => r,
        None => {
            diagnostics.push(Diagnostic::MissingRoot);
            0
        }
    };

    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut resolved = vec![false; n];
    resolved[root] = true;
    let mut latest: HashMap<[u32; 3], usize> = HashMap::new();
    let mut deferred = Vec::new();
    for (i, s) in sextets.iter().enumerate() {
        if i != root {
            if s.own == s.parent {
                diagnostics.push(Diagnostic::ExtraRoot { joint: i });
                deferred.push(i);
            } else if let Some(&p) = latest.get(&s.parent) {
                parent[i] = Some(p);
                resolved[i] = true;
            } else {
                deferred.push(i);
            }
        }
        latest.insert(s.own, i);
    }

    let creates_cycle = |parent: &[Option<usize>], child: usize, candidate: usize| {
        let mut cur = Some(candidate);
        let mut steps = 0;
        while let Some(c) = cur {
            if c == child || steps > n {
                return true;
            }
            cur = parent[c];
            steps += 1;
        }
        false
    };

    for i in deferred {
        let target = sextets[i].parent;
        let is_sentinel = sextets[i].own == target;
        let forward = if is_sentinel {
            None
        } else {
            (i + 1..n).find(|&j| sextets[j].own == target && !creates_cycle(&parent, i, j))
        };
        if let Some(j) = forward {
            parent[i] = Some(j);
            diagnostics.push(Diagnostic::ForwardMatch { joint: i, parent: j });
        } else {
            let near = (0..i)
                .rev()
                .filter(|&j| chebyshev(&sextets[j].own, &target) <= 2)
                .filter(|&j| !creates_cycle(&parent, i, j))
                .min_by_key(|&j| (chebyshev(&sextets[j].own, &target), std::cmp::Reverse(j)));
            match near {
                Some(j) => {
                    parent[i] = Some(j);
                    diagnostics.push(Diagnostic::NearMatch { joint: i, parent: j });
                }
                None => {
                    parent[i] = Some(root);
                    diagnostics.push(Diagnostic::OrphanRepair { joint: i });
                }
            }
        }
        resolved[i] = true;
    }
    debug_assert!(resolved.iter().all(|&r| r));

    let res = vocab.resolution();
    let joints = sextets
        .iter()
        .enumerate()
        .map(|(i, s)| Joint::new(i, dequantize(s.own, res), parent[i]))
        .collect();
    let skeleton = Skeleton::new(joints, root, Category::Other).expect("decoded joints are well-formed");
    Ok(Decoded {
        skeleton,
        diagnostics,
        blocks: sextets.iter().map(|s| s.block).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SequenceStats {
    pub joints: usize,
    pub groups: usize,
    pub length: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("malformed block structure at token {position}: {reason}")]
    MalformedBlocks { position: usize, reason: &'static str },
}

/// Counts for a well-formed sequence; anything else is `MalformedBlocks`.
pub fn sequence_stats(sequence: &TokenSequence) -> Result<SequenceStats, StatsError> {
    let v = sequence.vocab;
    let t = &sequence.tokens;
    let bad = |position, reason| Err(StatsError::MalformedBlocks { position, reason });
    if t.first() != Some(&v.bos()) {
        return bad(0, "sequence must start with BOS");
    }
    if t.len() < 2 || t[t.len() - 1] != v.eos() {
        return bad(t.len().saturating_sub(1), "sequence must end with EOS");
    }
    let mut groups = 0;
    let mut coords = 0;
    let mut run = 0;
    for (i, &tok) in t.iter().enumerate().take(t.len() - 1).skip(1) {
        if v.is_coord(tok) {
            if groups == 0 {
                return bad(i, "coordinates before the first GROUP");
            }
            coords += 1;
            run += 1;
        } else if tok == v.group() {
            if groups > 0 && run % TOKENS_PER_JOINT != 0 {
                return bad(i, "block length is not a multiple of 6");
            }
            groups += 1;
            run = 0;
        } else {
            return bad(i, "unexpected special token inside the sequence");
        }
    }
    if groups == 0 {
        return bad(1, "no GROUP block");
    }
    if run % TOKENS_PER_JOINT != 0 {
        return bad(t.len() - 1, "block length is not a multiple of 6");
    }
    Ok(SequenceStats {
        joints: coords / TOKENS_PER_JOINT,
        groups,
        length: t.len(),
    })
}
