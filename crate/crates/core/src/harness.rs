//! Batch evaluation: dataset loading, the on-disk tree cache, and the
//! benchmark runner that ties construction, both answering paths, selection,
//! and grading together into one report.
//!
//! The runner amortizes construction: each distinct table is built (or
//! loaded from cache) once, then every question against it pays only its
//! own answering cost. Timings come from the provider-reported latencies in
//! the gateway log, so a scripted run produces the same report bytes every
//! time.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::answer::{self, AnswerSource};
use crate::config::PipelineConfig;
use crate::gateway::{Gateway, GatewayError};
use crate::grid::Grid;
use crate::mode::SynthesisMode;
use crate::navigate;
use crate::reconstruct::{self, ReconstructError, Reconstruction};
use crate::symbolic;
use crate::tree::SemanticTree;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Dataset { path: PathBuf, line: usize, message: String },
    #[error("table `{table_id}`: {message}")]
    Table { table_id: String, message: String },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One dataset row: a table, one question against it, and the reference
/// answer. Tables repeat across rows; rows sharing a `table_id` share one
/// constructed tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub table_id: String,
    pub table: Vec<Vec<String>>,
    pub question: String,
    pub answer: String,
}

/// Loads a JSONL dataset. Blank lines are skipped; anything else that fails
/// to parse is reported with its line number.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(line).map_err(|e| {
            HarnessError::Dataset { path: path.to_path_buf(), line: i + 1, message: e.to_string() }
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Construction metadata stored alongside a cached tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub table_id: String,
    pub mode: SynthesisMode,
    pub attempts: u32,
    pub coverage: f64,
    pub structural_integrity: f64,
    pub attempt_scores: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct CacheDocument {
    header: CacheHeader,
    tree: SemanticTree,
}

/// Directory of constructed trees, one JSON document per table id. Lets a
/// benchmark (or a second `ask`) skip reconstruction entirely.
pub struct TreeCache {
    dir: PathBuf,
}

impl TreeCache {
    pub fn at(dir: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::Cache(format!("cannot create {}: {e}", dir.display())))?;
        Ok(TreeCache { dir: dir.to_path_buf() })
    }

    pub fn path_for(&self, table_id: &str) -> PathBuf {
        self.dir.join(format!("{}.json", sanitized_stem(table_id)))
    }

    pub fn store(
        &self,
        table_id: &str,
        reconstruction: &Reconstruction,
    ) -> Result<PathBuf, HarnessError> {
        let doc = CacheDocument {
            header: CacheHeader {
                table_id: table_id.to_string(),
                mode: reconstruction.mode,
                attempts: reconstruction.attempts,
                coverage: reconstruction.report.coverage,
                structural_integrity: reconstruction.report.structural_integrity,
                attempt_scores: reconstruction.attempt_scores.clone(),
            },
            tree: reconstruction.tree.clone(),
        };
        let path = self.path_for(table_id);
        let text = serde_json::to_string_pretty(&doc)
            .map_err(|e| HarnessError::Cache(format!("cannot serialize `{table_id}`: {e}")))?;
        std::fs::write(&path, text)
            .map_err(|e| HarnessError::Cache(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// `Ok(None)` when the table has no cache entry yet.
    pub fn load(&self, table_id: &str) -> Result<Option<(SemanticTree, CacheHeader)>, HarnessError> {
        let path = self.path_for(table_id);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(HarnessError::Cache(format!("cannot read {}: {e}", path.display())))
            }
        };
        let doc: CacheDocument = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Cache(format!("corrupt entry {}: {e}", path.display())))?;
        Ok(Some((doc.tree, doc.header)))
    }
}

/// Filesystem-safe file stem for a table id. Ids that are already clean map
/// to themselves; anything sanitized gets a short content hash appended so
/// distinct ids cannot collide on the same file.
fn sanitized_stem(table_id: &str) -> String {
    let clean: String = table_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if clean == table_id && !clean.is_empty() {
        return clean;
    }
    let digest = Sha256::digest(table_id.as_bytes());
    let tag: String = digest[..4].iter().map(|b| format!("{b:02x}")).collect();
    if clean.is_empty() {
        format!("table-{tag}")
    } else {
        format!("{clean}-{tag}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionReport {
    pub table_id: String,
    pub question: String,
    pub reference: String,
    pub textual: String,
    pub symbolic: Option<String>,
    /// The answer the selector kept.
    pub answer: String,
    pub source: AnswerSource,
    pub agreed: bool,
    pub selector_consulted: bool,
    pub correct: bool,
    /// Whether either candidate answer would have been graded correct.
    pub oracle_correct: bool,
    /// Provider latency spent answering this question (selection included,
    /// grading excluded), seconds.
    pub qa_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub table_id: String,
    pub cache_hit: bool,
    pub mode: SynthesisMode,
    pub attempts: u32,
    pub coverage: f64,
    pub structural_integrity: f64,
    /// Provider latency spent constructing the tree; zero on a cache hit.
    pub construction_time_s: f64,
    pub questions: usize,
    /// Per-question cost with construction spread over this table's
    /// questions: `construction / questions + mean qa`.
    pub amortized_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub tables: usize,
    pub questions: usize,
    pub accuracy: f64,
    pub oracle_accuracy: f64,
    /// Mean over questions of `construction(table) / questions(table) + qa`.
    pub mean_amortized_time_s: f64,
    pub selector_consultations: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub aggregate: Aggregate,
    pub per_table: Vec<TableReport>,
    pub per_question: Vec<QuestionReport>,
}

impl RunReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Runs the full pipeline over a dataset. Tables are processed in first
/// appearance order, each constructed once (or loaded from `cache`); every
/// question then runs textual + symbolic answering, adaptive selection, and
/// grading (offline agreement or the judge model, per the config).
///
/// Rows repeating a `table_id` are answered against the first row's table;
/// later rows' `table` fields are not re-read.
pub fn run_bench(
    records: &[DatasetRecord],
    cfg: &PipelineConfig,
    gateway: &Gateway,
    cache: Option<&TreeCache>,
) -> Result<RunReport, HarnessError> {
    let mut table_order: Vec<&str> = Vec::new();
    let mut by_table: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, record) in records.iter().enumerate() {
        let slot = by_table.entry(record.table_id.as_str()).or_default();
        if slot.is_empty() {
            table_order.push(&record.table_id);
        }
        slot.push(i);
    }

    let mut per_table = Vec::new();
    let mut per_question = Vec::new();
    let mut amortized_sum = 0.0;

    for table_id in table_order {
        let question_idx = &by_table[table_id];
        let first = &records[question_idx[0]];

        let cached = match cache {
            Some(cache) => cache.load(table_id)?,
            None => None,
        };
        let (tree, mode, attempts, coverage, integrity, construction_time, cache_hit) =
            match cached {
                Some((tree, header)) => (
                    tree,
                    header.mode,
                    header.attempts,
                    header.coverage,
                    header.structural_integrity,
                    0.0,
                    true,
                ),
                None => {
                    let grid = Grid::parse(first.table.clone()).map_err(|e| {
                        HarnessError::Table { table_id: table_id.to_string(), message: e.to_string() }
                    })?;
                    let mark = gateway.log_len();
                    let built = reconstruct::reconstruct(&grid, &cfg.refine, &cfg.budget, gateway)?;
                    let spent: f64 =
                        gateway.log_since(mark).iter().map(|r| r.latency_s).sum();
                    if let Some(cache) = cache {
                        cache.store(table_id, &built)?;
                    }
                    (
                        built.tree,
                        built.mode,
                        built.attempts,
                        built.report.coverage,
                        built.report.structural_integrity,
                        spent,
                        false,
                    )
                }
            };

        let n = question_idx.len();
        let mut qa_time_sum = 0.0;
        for &i in question_idx {
            let record = &records[i];
            let mark = gateway.log_len();
            let textual =
                navigate::answer_textual(&tree, &record.question, gateway, &cfg.traverse, None)?;
            let symbolic =
                symbolic::symbolic_answer(&tree, &record.question, gateway, &cfg.symbolic)?;
            let selection = answer::select_answer(
                &tree,
                &record.question,
                &textual.answer,
                symbolic.answer.as_deref(),
                gateway,
            )?;
            let qa_time: f64 = gateway.log_since(mark).iter().map(|r| r.latency_s).sum();

            let correct = answer::judge(
                &record.question,
                &record.answer,
                &selection.answer,
                gateway,
                cfg.offline_judge,
            )?;
            let (_, oracle_correct) = answer::oracle_select(
                &record.question,
                &record.answer,
                &textual.answer,
                symbolic.answer.as_deref(),
                gateway,
                cfg.offline_judge,
            )?;

            qa_time_sum += qa_time;
            amortized_sum += answer::amortized_time(construction_time, qa_time, n);
            per_question.push(QuestionReport {
                table_id: record.table_id.clone(),
                question: record.question.clone(),
                reference: record.answer.clone(),
                textual: textual.answer,
                symbolic: symbolic.answer,
                answer: selection.answer,
                source: selection.source,
                agreed: selection.agreed,
                selector_consulted: selection.selector_consulted,
                correct,
                oracle_correct,
                qa_time_s: qa_time,
            });
        }

        let mean_qa = if n == 0 { 0.0 } else { qa_time_sum / n as f64 };
        per_table.push(TableReport {
            table_id: table_id.to_string(),
            cache_hit,
            mode,
            attempts,
            coverage,
            structural_integrity: integrity,
            construction_time_s: construction_time,
            questions: n,
            amortized_time_s: answer::amortized_time(construction_time, mean_qa, n),
        });
    }

    let questions = per_question.len();
    let frac = |count: usize| if questions == 0 { 0.0 } else { count as f64 / questions as f64 };
    let aggregate = Aggregate {
        tables: per_table.len(),
        questions,
        accuracy: frac(per_question.iter().filter(|q| q.correct).count()),
        oracle_accuracy: frac(per_question.iter().filter(|q| q.oracle_correct).count()),
        mean_amortized_time_s: if questions == 0 { 0.0 } else { amortized_sum / questions as f64 },
        selector_consultations: per_question.iter().filter(|q| q.selector_consulted).count(),
        cache_hits: per_table.iter().filter(|t| t.cache_hit).count(),
    };
    Ok(RunReport { aggregate, per_table, per_question })
}
