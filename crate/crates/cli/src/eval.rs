use std::path::Path;

use serde::{Deserialize, Serialize};
use skelrig::curation::list_skeleton_ids;
use skelrig::metrics::{evaluate, mean_report, EvalConfig, EvalReport};
use skelrig::Skeleton;

use crate::error::Result;
use crate::rigs::skeleton_path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub id: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub id: String,
    pub error: String,
}

/// Per-pair results sorted by id, their mean, and the ids that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEval {
    pub config: EvalConfig,
    pub pairs: Vec<PairResult>,
    pub mean: Option<EvalReport>,
    /// Ground-truth ids with no prediction file.
    pub missing: Vec<String>,
    pub failures: Vec<PairFailure>,
}

/// Pairs `<id>.skel.json` files of `pred` and `gt` by id.
pub fn evaluate_dirs(pred: &Path, gt: &Path, cfg: &EvalConfig) -> Result<CorpusEval> {
    let mut out = CorpusEval {
        config: *cfg,
        pairs: Vec::new(),
        mean: None,
        missing: Vec::new(),
        failures: Vec::new(),
    };
    for id in list_skeleton_ids(gt)? {
        let pp = skeleton_path(pred, &id);
        if !pp.exists() {
            out.missing.push(id);
            continue;
        }
        let scored = Skeleton::load(&pp)
            .map_err(|e| e.to_string())
            .and_then(|p| {
                let g = Skeleton::load(&skeleton_path(gt, &id)).map_err(|e| e.to_string())?;
                evaluate(&p, &g, cfg).map_err(|e| e.to_string())
            });
        match scored {
            Ok(report) => out.pairs.push(PairResult { id, report }),
            Err(error) => out.failures.push(PairFailure { id, error }),
        }
    }
    let reports: Vec<EvalReport> = out.pairs.iter().map(|p| p.report).collect();
    out.mean = mean_report(&reports);
    Ok(out)
}

impl CorpusEval {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} pairs scored, {} missing, {} failed",
            self.pairs.len(),
            self.missing.len(),
            self.failures.len()
        );
        if let Some(m) = &self.mean {
            s += &format!(
                "\nmean precision {:.4} recall {:.4} f1 {:.4} cd-j2j {:.5} cd-j2b {:.5} cd-b2b {:.5} (tau {})",
                m.precision, m.recall, m.f1, m.cd_j2j, m.cd_j2b, m.cd_b2b, m.tau_match
            );
        }
        s
    }
}
