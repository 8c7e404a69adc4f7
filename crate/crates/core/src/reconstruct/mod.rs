//! Table-to-tree reconstruction: the construction-phase model calls plus the
//! score-and-refine loop around them.
//!
//! A reconstruction run is three stages. Header normalization and hierarchy
//! identification each happen once up front (each with a single corrective
//! re-prompt on malformed output). Synthesis then runs in the mode picked by
//! [`select_mode`] and is scored by a [`Scorer`]; a rejected tree routes back
//! through either a fresh hierarchy pass (structural failure) or a coverage
//! supplement pass, up to `RefinementConfig::max_attempts` tries. If no
//! attempt clears both thresholds the best-scoring tree is returned anyway —
//! callers can read the verdict off the final [`QualityReport`].

mod program;
mod steps;

pub use program::{ConstructionProgram, ProgramError, parse_construction, run_construction};
pub use steps::{
    identify_hierarchy, normalize_headers, resolve_placeholders, supplement_tree,
    synthesize_direct, synthesize_programmatic, synthesize_recipe,
};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::grid::Grid;
use crate::mode::{BudgetConfig, ModeError, SynthesisMode, select_mode};
use crate::quality::{CorrectionAction, QualityReport, RefinementConfig, evaluate};
use crate::token::{ApproxTokenizer, compute_stats};
use crate::tree::SemanticTree;

#[derive(Debug, Error)]
pub enum ReconstructError {
    /// A preparatory step (header normalization) stayed malformed after its
    /// one corrective re-prompt.
    #[error("{step} response was malformed even after a retry: {detail}")]
    MalformedResponse { step: &'static str, detail: String },
    /// The hierarchy schema still violated its structural constraints after
    /// the repair round.
    #[error("hierarchy schema invalid even after repair: {violations}")]
    SchemaInvalid { violations: String },
    /// A synthesis response did not parse into a tree.
    #[error("synthesized tree was malformed: {0}")]
    MalformedTree(String),
    /// A recipe leaf looked like a cell address but points outside the grid.
    #[error("cell reference `{address}` is outside the grid")]
    UnresolvedPlaceholder { address: String },
    /// A construction program did not parse.
    #[error("construction program failed to parse: {0}")]
    ProgramParse(String),
    /// A construction program parsed but failed while running against the
    /// grid.
    #[error("construction program failed: {0}")]
    ProgramRuntime(String),
    /// Every synthesis attempt errored; there is no tree to fall back on.
    #[error("all {attempts} synthesis attempts failed; no tree was produced")]
    ReconstructionFailed { attempts: u32 },
    #[error(transparent)]
    Budget(#[from] ModeError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ReconstructError {
    /// Errors confined to one synthesis attempt. The refinement loop logs
    /// these and retries; anything else aborts the whole reconstruction.
    fn is_attempt_local(&self) -> bool {
        matches!(
            self,
            ReconstructError::MalformedTree(_)
                | ReconstructError::UnresolvedPlaceholder { .. }
                | ReconstructError::ProgramParse(_)
                | ReconstructError::ProgramRuntime(_)
        )
    }
}

/// One canonical name per column, in column order. Produced by
/// [`normalize_headers`], which collapses multi-row headers into these
/// strings before any synthesis runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedHeaders(Vec<String>);

impl NormalizedHeaders {
    /// Wraps an already-validated header list. The parsing constructor is
    /// [`normalize_headers`]; this exists for callers that load headers from
    /// a cache or build them in tests.
    pub fn new(headers: Vec<String>) -> Self {
        NormalizedHeaders(headers)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// JSON array form, the shape downstream prompts embed.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.0).expect("string list serialization cannot fail")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableType {
    Simple,
    Complex,
}

/// The hierarchy-identification verdict: which columns act as grouping keys,
/// which hold values, and which belong together under an original merged
/// header. This object is embedded verbatim (as JSON) in every synthesis
/// prompt, so its field names are part of the model-facing contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySchema {
    pub table_type: TableType,
    #[serde(default)]
    pub analysis_reason: String,
    pub hierarchy_keys: Vec<String>,
    #[serde(default)]
    pub value_leaves: Vec<String>,
    #[serde(default)]
    pub semantic_groups: IndexMap<String, Vec<String>>,
}

impl HierarchySchema {
    /// Checks the partition constraints against the normalized header list:
    /// keys and leaves must be disjoint, duplicate-free, and together cover
    /// exactly the headers; group members must be drawn from the headers.
    /// Returns a semicolon-joined violation list suitable for a repair
    /// prompt.
    pub fn validate(&self, headers: &NormalizedHeaders) -> Result<(), String> {
        let mut violations = Vec::new();
        let mut seen: IndexMap<&str, usize> = IndexMap::new();
        for h in self.hierarchy_keys.iter().chain(&self.value_leaves) {
            *seen.entry(h.as_str()).or_insert(0) += 1;
        }
        for (h, count) in &seen {
            if *count > 1 {
                violations.push(format!("`{h}` is listed more than once"));
            }
        }
        for h in headers.as_slice() {
            if !seen.contains_key(h.as_str()) {
                violations.push(format!(
                    "header `{h}` is in neither hierarchy_keys nor value_leaves"
                ));
            }
        }
        for h in seen.keys() {
            if !headers.as_slice().iter().any(|n| n == h) {
                violations.push(format!("`{h}` is not one of the normalized headers"));
            }
        }
        for (group, members) in &self.semantic_groups {
            for m in members {
                if !headers.as_slice().iter().any(|n| n == m) {
                    violations.push(format!(
                        "semantic group `{group}` names unknown header `{m}`"
                    ));
                }
            }
        }
        if violations.is_empty() { Ok(()) } else { Err(violations.join("; ")) }
    }

    /// Compact JSON form for embedding in synthesis prompts.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schema serialization cannot fail")
    }
}

/// Scoring seam for the refinement loop. Production uses [`MetricScorer`]
/// (the real coverage/integrity metrics); tests substitute scripted scores
/// to drive specific routing sequences.
pub trait Scorer: Send + Sync {
    fn score(&self, tree: &SemanticTree, grid: &Grid, cfg: &RefinementConfig) -> QualityReport;
}

/// The production scorer: coverage plus structural integrity, thresholded by
/// the refinement config.
pub struct MetricScorer;

impl Scorer for MetricScorer {
    fn score(&self, tree: &SemanticTree, grid: &Grid, cfg: &RefinementConfig) -> QualityReport {
        evaluate(tree, grid, cfg)
    }
}

/// Outcome of a reconstruction run: the tree that will serve question
/// answering, plus enough bookkeeping to audit how it was reached.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub tree: SemanticTree,
    /// Report for the returned tree (not necessarily an accepted one).
    pub report: QualityReport,
    pub mode: SynthesisMode,
    /// Synthesis attempts consumed, malformed ones included.
    pub attempts: u32,
    /// `(coverage, integrity)` per scored attempt, in order.
    pub attempt_scores: Vec<(f64, f64)>,
    /// Non-fatal oddities: malformed attempts that were retried, placeholder
    /// leaves kept verbatim, supplements discarded for dropping paths.
    pub warnings: Vec<String>,
}

impl Reconstruction {
    pub fn accepted(&self) -> bool {
        self.report.accepted()
    }
}

/// What the next loop iteration should do.
enum NextStep {
    Synthesize,
    Supplement { tree: SemanticTree, unmapped: Vec<String> },
}

/// Runs the full reconstruction pipeline with the production scorer.
pub fn reconstruct(
    grid: &Grid,
    refine: &RefinementConfig,
    budget: &BudgetConfig,
    gateway: &Gateway,
) -> Result<Reconstruction, ReconstructError> {
    reconstruct_with_scorer(grid, refine, budget, gateway, &MetricScorer)
}

/// [`reconstruct`] with the scoring seam exposed.
pub fn reconstruct_with_scorer(
    grid: &Grid,
    refine: &RefinementConfig,
    budget: &BudgetConfig,
    gateway: &Gateway,
    scorer: &dyn Scorer,
) -> Result<Reconstruction, ReconstructError> {
    let counter = ApproxTokenizer::default();
    let stats = compute_stats(grid, &counter, budget.long_cell_tokens);
    let tokens = budget.budget_for(&stats)?;
    let mode = select_mode(&stats, tokens, budget);

    let headers = normalize_headers(grid, gateway)?;
    let mut schema = identify_hierarchy(grid, &headers, gateway)?;

    let mut warnings = Vec::new();
    let mut attempt_scores = Vec::new();
    // Trees that scored but were not accepted, kept as fallback candidates.
    let mut scored: Vec<(SemanticTree, QualityReport)> = Vec::new();
    let mut attempts = 0u32;
    let mut next = NextStep::Synthesize;

    while attempts < refine.max_attempts {
        attempts += 1;
        let produced = match &next {
            NextStep::Synthesize => {
                synthesize(mode, grid, &headers, &schema, gateway, &mut warnings)
            }
            NextStep::Supplement { tree, unmapped } => {
                supplement_tree(grid, tree, unmapped, gateway).map(|(tree, mut notes)| {
                    warnings.append(&mut notes);
                    tree
                })
            }
        };
        let tree = match produced {
            Ok(tree) => tree,
            Err(e) if e.is_attempt_local() => {
                warnings.push(format!("attempt {attempts}: {e}"));
                next = NextStep::Synthesize;
                continue;
            }
            Err(e) => return Err(e),
        };

        let report = scorer.score(&tree, grid, refine);
        attempt_scores.push((report.coverage, report.structural_integrity));
        match report.action {
            CorrectionAction::Accept => {
                return Ok(Reconstruction {
                    tree,
                    report,
                    mode,
                    attempts,
                    attempt_scores,
                    warnings,
                });
            }
            CorrectionAction::RebuildHierarchy => {
                scored.push((tree, report));
                // A structurally broken tree means the schema misled the
                // synthesizer; re-derive it before trying again. Skipped when
                // the budget is already spent.
                if attempts < refine.max_attempts {
                    schema = identify_hierarchy(grid, &headers, gateway)?;
                }
                next = NextStep::Synthesize;
            }
            CorrectionAction::SupplementCoverage => {
                let unmapped = report.unmapped_cells.clone();
                scored.push((tree.clone(), report));
                next = NextStep::Supplement { tree, unmapped };
            }
        }
    }

    // Out of attempts: fall back to the best average score, earliest attempt
    // winning ties.
    let best = scored
        .into_iter()
        .max_by(|(_, a), (_, b)| {
            a.metric_average()
                .partial_cmp(&b.metric_average())
                .expect("metric averages are finite")
        })
        .ok_or(ReconstructError::ReconstructionFailed { attempts })?;
    Ok(Reconstruction {
        tree: best.0,
        report: best.1,
        mode,
        attempts,
        attempt_scores,
        warnings,
    })
}

fn synthesize(
    mode: SynthesisMode,
    grid: &Grid,
    headers: &NormalizedHeaders,
    schema: &HierarchySchema,
    gateway: &Gateway,
    warnings: &mut Vec<String>,
) -> Result<SemanticTree, ReconstructError> {
    match mode {
        SynthesisMode::Direct => synthesize_direct(grid, headers, schema, gateway),
        SynthesisMode::Recipe => synthesize_recipe(grid, headers, schema, gateway)
            .map(|(tree, mut notes)| {
                warnings.append(&mut notes);
                tree
            }),
        SynthesisMode::Programmatic => synthesize_programmatic(grid, headers, schema, gateway)
            .map(|(tree, mut notes)| {
                warnings.append(&mut notes);
                tree
            }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedChat;
    use std::sync::{Arc, Mutex};

    fn gateway_with(script: ScriptedChat) -> Gateway {
        Gateway::new(Arc::new(script))
    }

    fn small_grid() -> Grid {
        Grid::parse(vec![
            vec!["Item".into(), "Price".into()],
            vec!["Apple".into(), "3".into()],
            vec!["Pear".into(), "5".into()],
        ])
        .unwrap()
    }

    fn small_schema_json() -> &'static str {
        r#"{"table_type":"complex","analysis_reason":"one grouping column","hierarchy_keys":["Item"],"value_leaves":["Price"],"semantic_groups":{}}"#
    }

    /// Scorer that replays a fixed (coverage, integrity) sequence and routes
    /// with the real threshold rule, so tests can steer the refinement loop
    /// precisely.
    struct SequenceScorer {
        scores: Mutex<Vec<(f64, f64)>>,
    }

    impl SequenceScorer {
        fn new(scores: &[(f64, f64)]) -> Self {
            let mut rev: Vec<_> = scores.to_vec();
            rev.reverse();
            SequenceScorer { scores: Mutex::new(rev) }
        }
    }

    impl Scorer for SequenceScorer {
        fn score(&self, tree: &SemanticTree, _grid: &Grid, cfg: &RefinementConfig) -> QualityReport {
            let (coverage, integrity) = self
                .scores
                .lock()
                .unwrap()
                .pop()
                .expect("scorer sequence exhausted");
            QualityReport {
                coverage,
                structural_integrity: integrity,
                action: crate::quality::route_correction(coverage, integrity, cfg),
                empty_tree: false,
                leaf_count: tree.leaves().len(),
                unmapped_cells: Vec::new(),
                broken_paths: Vec::new(),
            }
        }
    }

    fn script_headers_and_schema(script: ScriptedChat) -> ScriptedChat {
        script
            .on("determine a unique normalized header", r#"["Item","Price"]"#)
            .on("data architecture expert", small_schema_json())
    }

    #[test]
    fn schema_validation_catches_each_violation_kind() {
        let headers = NormalizedHeaders::new(vec!["A".into(), "B".into(), "C".into()]);
        let ok = HierarchySchema {
            table_type: TableType::Complex,
            analysis_reason: String::new(),
            hierarchy_keys: vec!["A".into()],
            value_leaves: vec!["B".into(), "C".into()],
            semantic_groups: IndexMap::new(),
        };
        assert!(ok.validate(&headers).is_ok());

        let mut missing = ok.clone();
        missing.value_leaves = vec!["B".into()];
        let msg = missing.validate(&headers).unwrap_err();
        assert!(msg.contains("`C` is in neither"), "{msg}");

        let mut extra = ok.clone();
        extra.value_leaves.push("Ghost".into());
        let msg = extra.validate(&headers).unwrap_err();
        assert!(msg.contains("`Ghost` is not one of"), "{msg}");

        let mut overlap = ok.clone();
        overlap.value_leaves.push("A".into());
        let msg = overlap.validate(&headers).unwrap_err();
        assert!(msg.contains("listed more than once"), "{msg}");

        let mut bad_group = ok.clone();
        bad_group
            .semantic_groups
            .insert("Range".into(), vec!["Min".into()]);
        let msg = bad_group.validate(&headers).unwrap_err();
        assert!(msg.contains("unknown header `Min`"), "{msg}");
    }

    #[test]
    fn schema_round_trips_through_json() {
        let schema: HierarchySchema = serde_json::from_str(small_schema_json()).unwrap();
        assert_eq!(schema.table_type, TableType::Complex);
        assert_eq!(schema.hierarchy_keys, vec!["Item".to_string()]);
        let again: HierarchySchema = serde_json::from_str(&schema.to_json()).unwrap();
        assert_eq!(schema, again);
    }

    #[test]
    fn accepts_on_first_attempt_with_real_metrics() {
        let script = script_headers_and_schema(ScriptedChat::keyed()).on(
            "preserves all semantic information",
            r#"{"Item - Apple": {"Price": "3"}, "Item - Pear": {"Price": "5"}}"#,
        );
        let gateway = gateway_with(script);
        let grid = small_grid();
        let out = reconstruct(&grid, &RefinementConfig::default(), &BudgetConfig::default(), &gateway)
            .unwrap();

        assert!(out.accepted());
        assert_eq!(out.attempts, 1);
        assert_eq!(out.mode, SynthesisMode::Direct);
        assert_eq!(out.attempt_scores, vec![(1.0, 1.0)]);
        assert!(out.warnings.is_empty());
        let purposes: Vec<String> = gateway.log().iter().map(|c| c.purpose.clone()).collect();
        assert_eq!(
            purposes,
            vec!["construct.headers", "construct.hierarchy", "construct.tree"]
        );
    }

    #[test]
    fn low_coverage_routes_through_supplement_and_keeps_best_attempt() {
        // Three trees, each supplement a strict superset of the last so the
        // backbone check passes; scripted scores keep coverage short of the
        // bar so the loop runs to exhaustion and falls back to attempt 3.
        let t1 = r#"{"A": {"x": "1"}}"#;
        let t2 = r#"{"A": {"x": "1", "y": "2"}}"#;
        let t3 = r#"{"A": {"x": "1", "y": "2", "z": "3"}}"#;
        let script = script_headers_and_schema(ScriptedChat::keyed())
            .on("preserves all semantic information", t1)
            // Supplement prompts embed the current tree (compact JSON); key
            // on content only the second round's tree has, most specific
            // entry first.
            .on(r#""y":"2""#, t3)
            .on(r#""x":"1""#, t2);
        let gateway = gateway_with(script);
        let grid = small_grid();
        let scorer = SequenceScorer::new(&[(0.6, 0.9), (0.7, 0.9), (0.75, 0.9)]);
        let out = reconstruct_with_scorer(
            &grid,
            &RefinementConfig::default(),
            &BudgetConfig::default(),
            &gateway,
            &scorer,
        )
        .unwrap();

        assert!(!out.accepted());
        assert_eq!(out.attempts, 3);
        assert_eq!(out.attempt_scores, vec![(0.6, 0.9), (0.7, 0.9), (0.75, 0.9)]);
        assert_eq!(out.tree, SemanticTree::from_json_str(t3).unwrap());
        assert_eq!(out.report.coverage, 0.75);
        let supplements = gateway
            .log()
            .iter()
            .filter(|c| c.purpose == "construct.supplement")
            .count();
        assert_eq!(supplements, 2);
    }

    #[test]
    fn structural_failure_re_derives_the_hierarchy_exactly_once() {
        let script = script_headers_and_schema(ScriptedChat::keyed()).on(
            "preserves all semantic information",
            r#"{"Item - Apple": {"Price": "3"}}"#,
        );
        let gateway = gateway_with(script);
        let grid = small_grid();
        let scorer = SequenceScorer::new(&[(0.9, 0.5), (0.9, 0.9)]);
        let out = reconstruct_with_scorer(
            &grid,
            &RefinementConfig::default(),
            &BudgetConfig::default(),
            &gateway,
            &scorer,
        )
        .unwrap();

        assert!(out.accepted());
        assert_eq!(out.attempts, 2);
        let hierarchy_calls = gateway
            .log()
            .iter()
            .filter(|c| c.purpose == "construct.hierarchy")
            .count();
        assert_eq!(hierarchy_calls, 2, "initial derivation plus one rebuild");
        let supplements = gateway
            .log()
            .iter()
            .filter(|c| c.purpose == "construct.supplement")
            .count();
        assert_eq!(supplements, 0);
    }

    #[test]
    fn rebuild_is_skipped_when_no_attempts_remain() {
        let script = script_headers_and_schema(ScriptedChat::keyed()).on(
            "preserves all semantic information",
            r#"{"Item - Apple": {"Price": "3"}}"#,
        );
        let gateway = gateway_with(script);
        let grid = small_grid();
        // Integrity stays low through every attempt: each routes to a
        // rebuild, but the last one must not spend a hierarchy call it can
        // no longer use.
        let scorer = SequenceScorer::new(&[(0.9, 0.5), (0.9, 0.5), (0.9, 0.5)]);
        let out = reconstruct_with_scorer(
            &grid,
            &RefinementConfig::default(),
            &BudgetConfig::default(),
            &gateway,
            &scorer,
        )
        .unwrap();

        assert!(!out.accepted());
        assert_eq!(out.attempts, 3);
        let hierarchy_calls = gateway
            .log()
            .iter()
            .filter(|c| c.purpose == "construct.hierarchy")
            .count();
        assert_eq!(hierarchy_calls, 3, "initial derivation plus two rebuilds");
    }

    #[test]
    fn unparseable_synthesis_every_round_reports_failure() {
        let script = script_headers_and_schema(ScriptedChat::keyed())
            .on("preserves all semantic information", "the table is quite complicated");
        let gateway = gateway_with(script);
        let grid = small_grid();
        let err = reconstruct(&grid, &RefinementConfig::default(), &BudgetConfig::default(), &gateway)
            .unwrap_err();
        match err {
            ReconstructError::ReconstructionFailed { attempts } => assert_eq!(attempts, 3),
            other => panic!("expected ReconstructionFailed, got {other}"),
        }
    }

    #[test]
    fn malformed_attempt_is_retried_and_noted() {
        let script = script_headers_and_schema(ScriptedChat::keyed())
            .on_once("preserves all semantic information", "no json here")
            .on(
                "preserves all semantic information",
                r#"{"Item - Apple": {"Price": "3"}, "Item - Pear": {"Price": "5"}}"#,
            );
        let gateway = gateway_with(script);
        let grid = small_grid();
        let out = reconstruct(&grid, &RefinementConfig::default(), &BudgetConfig::default(), &gateway)
            .unwrap();

        assert!(out.accepted());
        assert_eq!(out.attempts, 2);
        assert_eq!(out.attempt_scores.len(), 1, "malformed attempt is never scored");
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("attempt 1"), "{}", out.warnings[0]);
    }

    #[test]
    fn scripted_runs_are_reproducible() {
        let build = || {
            let script = script_headers_and_schema(ScriptedChat::keyed()).on(
                "preserves all semantic information",
                r#"{"Item - Apple": {"Price": "3"}, "Item - Pear": {"Price": "5"}}"#,
            );
            let gateway = gateway_with(script);
            let grid = small_grid();
            reconstruct(&grid, &RefinementConfig::default(), &BudgetConfig::default(), &gateway)
                .unwrap()
        };
        let a = build();
        let b = build();
        assert_eq!(a.tree.to_json_string(), b.tree.to_json_string());
        assert_eq!(a.attempt_scores, b.attempt_scores);
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
    }
}
