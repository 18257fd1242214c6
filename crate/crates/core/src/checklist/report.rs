use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ChecklistRun, TestResult, TestStatus};
use crate::dataset::{InputLayout, SplitDataset, SplitSpec};
use crate::families::FamilyConfig;
use crate::text::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: "dcheck".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProvenance {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_source: Option<String>,
    pub train_hash: String,
    pub eval_hash: String,
    pub n_train: usize,
    pub n_eval: usize,
    pub split: SplitSpec,
}

impl DataProvenance {
    pub fn new(source: impl Into<String>, eval_source: Option<String>, split: &SplitDataset) -> Self {
        DataProvenance {
            source: source.into(),
            eval_source,
            train_hash: split.train_hash(),
            eval_hash: split.eval_hash(),
            n_train: split.train.len(),
            n_eval: split.eval.len(),
            split: split.spec.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub key: String,
    pub transform: String,
    pub family_hash: String,
    pub transform_hash: String,
    pub split_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
}

/// Everything a checklist run produced except per-instance PVIs and
/// timings, which live in sidecar files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecklistReport {
    pub tool: ToolInfo,
    pub family: FamilyConfig,
    pub tokenizer: Tokenizer,
    pub layout: InputLayout,
    /// The preference template, when preference pairs were encoded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    pub data: DataProvenance,
    pub config: Value,
    pub trainings: Vec<TrainingRecord>,
    pub results: Vec<TestResult>,
    pub summary: ReportSummary,
}

impl ChecklistReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        run: &ChecklistRun,
        family: FamilyConfig,
        tokenizer: Tokenizer,
        layout: InputLayout,
        template: Option<String>,
        data: DataProvenance,
        config: Value,
    ) -> Self {
        let trainings = run
            .plan
            .required_trainings
            .iter()
            .map(|(id, job)| TrainingRecord {
                key: id.clone(),
                transform: job.transform.describe(),
                family_hash: job.key.family_hash.clone(),
                transform_hash: job.key.transform_hash.clone(),
                split_hash: job.key.split_hash.clone(),
            })
            .collect();
        ChecklistReport {
            tool: ToolInfo::current(),
            family,
            tokenizer,
            layout,
            template,
            data,
            config,
            trainings,
            results: run.results.clone(),
            summary: ReportSummary {
                total: run.results.len(),
                passed: run.count(TestStatus::Pass),
                failed: run.count(TestStatus::Fail),
                errored: run.count(TestStatus::Error),
            },
        }
    }
}

/// Plain-text table: test, estimate in bits, ε and verdict.
pub fn summary_table(results: &[TestResult]) -> String {
    let rows: Vec<[String; 5]> = results
        .iter()
        .map(|r| {
            [
                r.spec.test_id.clone(),
                r.spec.feature.as_ref().map_or("-".into(), |f| f.kind.as_str().to_string()),
                r.estimate_bits.map_or("-".into(), |e| format!("{e:.4}")),
                format!("{}", r.spec.epsilon),
                r.status.as_str().into(),
            ]
        })
        .collect();
    let header = ["test", "feature", "estimate_bits", "epsilon", "verdict"];
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 2 || i == 3 { format!("{c:>w$}") } else { format!("{c:<w$}") })
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}
