//! Tree quality gate: how faithfully does a candidate tree represent its
//! source grid?
//!
//! Two metrics, both in `[0, 1]`:
//!
//! * **Coverage** — the fraction of non-empty grid cells whose text occurs
//!   somewhere in the tree (in a label or a leaf), after normalization.
//!   Catches dropped content.
//! * **Structural integrity** — the fraction of leaf-to-root paths that pass
//!   a positional plausibility check against the grid. Catches trees whose
//!   nesting contradicts where the cells actually sit, e.g. value cells
//!   promoted into key positions.
//!
//! The path check walks upward from each leaf. The leaf's own cell
//! occurrences are the *anchor*; an ancestor label is plausible when one of
//! its occurrences shares a row or column with the anchor or, transitively,
//! with the nearest checked descendant. Labels that never occur in the grid
//! (combined headers, invented group names) pass through without judging the
//! path either way, which also grants the benefit of the doubt to headers
//! inferred for merged-cell spans. The first label of a path acts as the
//! walk's root and is exempt, so a single-level tree is trivially valid. A
//! leaf with no locatable occurrence pins nothing down, and the first
//! grid-locatable label above it has nothing to align with — such paths are
//! counted broken at that label rather than waved through, since this is
//! exactly the signature of value cells mistaken for structure.
//!
//! [`route_correction`] turns the two scores into the refinement decision:
//! accept, rebuild the hierarchy (structural damage dominates), or keep the
//! backbone and supplement missing content.

use std::collections::HashMap;

use crate::grid::{CellAddress, Grid};
use crate::tree::{LeafEntry, SemanticTree};

/// Match normalization: trim, collapse internal whitespace, case-fold, then
/// strip leading/trailing unit tokens (`¢`, `%`, `$`). Applied to both cell
/// text and tree text before any comparison.
pub fn normalize_for_match(text: &str) -> String {
    let mut s: String = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    const UNITS: [&str; 3] = ["¢", "%", "$"];
    loop {
        let before = s.len();
        for unit in UNITS {
            if let Some(rest) = s.strip_prefix(unit) {
                s = rest.trim().to_string();
            }
            if let Some(rest) = s.strip_suffix(unit) {
                s = rest.trim().to_string();
            }
        }
        if s.len() == before {
            return s;
        }
    }
}

/// Exact-match index from normalized cell text to every grid position
/// holding it. Cells that normalize to nothing are not indexed.
pub struct CellIndex {
    occurrences: HashMap<String, Vec<CellAddress>>,
}

impl CellIndex {
    pub fn build(grid: &Grid) -> Self {
        let mut occurrences: HashMap<String, Vec<CellAddress>> = HashMap::new();
        for (addr, text) in grid.iter() {
            if text.is_empty() {
                continue;
            }
            let norm = normalize_for_match(text);
            if norm.is_empty() {
                continue;
            }
            occurrences.entry(norm).or_default().push(addr);
        }
        CellIndex { occurrences }
    }

    /// All positions whose cell text normalizes to the same form as `text`.
    pub fn occurrences(&self, text: &str) -> &[CellAddress] {
        let norm = normalize_for_match(text);
        self.occurrences.get(&norm).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageOutcome {
    pub ratio: f64,
    pub unmapped: Vec<CellAddress>,
}

/// Coverage of `grid` by `tree`: a non-empty cell counts as mapped when its
/// normalized text occurs as a substring of any normalized tree label or
/// leaf rendering. A grid with no non-empty cells is vacuously covered.
pub fn coverage(tree: &SemanticTree, grid: &Grid) -> CoverageOutcome {
    // Join all tree text with a separator that normalization can never
    // produce, so substring checks cannot match across fragment boundaries.
    let mut haystack = String::new();
    tree.visit_texts(&mut |text| {
        haystack.push_str(&normalize_for_match(text));
        haystack.push('\u{1}');
    });

    let mut total = 0usize;
    let mut unmapped = Vec::new();
    for (addr, text) in grid.iter() {
        if text.is_empty() {
            continue;
        }
        total += 1;
        let norm = normalize_for_match(text);
        if !norm.is_empty() && !haystack.contains(&norm) {
            unmapped.push(addr);
        }
    }
    if total == 0 {
        return CoverageOutcome { ratio: 1.0, unmapped };
    }
    CoverageOutcome { ratio: (total - unmapped.len()) as f64 / total as f64, unmapped }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathVerdict {
    Valid,
    Broken { failing_label: String },
}

fn aligned(a: &[CellAddress], b: &[CellAddress]) -> bool {
    a.iter().any(|x| b.iter().any(|y| x.row == y.row || x.col == y.col))
}

/// Checks one leaf path bottom-up against the grid; see the module docs for
/// the exact rules.
pub fn verify_path(entry: &LeafEntry, idx: &CellIndex) -> PathVerdict {
    let labels = entry.path.labels();
    if labels.len() <= 1 {
        return PathVerdict::Valid;
    }
    let anchor: Vec<CellAddress> = match entry.value.render() {
        Some(text) => idx.occurrences(&text).to_vec(),
        None => Vec::new(),
    };
    // Nearest descendant with occurrences; starts at the anchor itself.
    let mut prev: &[CellAddress] = &anchor;
    // Walk label[len-1] .. label[1]; label[0] is the walk's root.
    for label in labels[1..].iter().rev() {
        let occ = idx.occurrences(label);
        if occ.is_empty() {
            continue; // pass-through: the grid has no opinion on this label
        }
        if aligned(occ, &anchor) || aligned(occ, prev) {
            prev = occ;
        } else {
            return PathVerdict::Broken { failing_label: label.clone() };
        }
    }
    PathVerdict::Valid
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BrokenPath {
    pub path: String,
    pub failing_label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrityOutcome {
    pub ratio: f64,
    pub broken: Vec<BrokenPath>,
    pub leaf_count: usize,
}

/// Fraction of leaf paths that verify. A tree with no leaves scores 0 — an
/// empty tree represents nothing.
pub fn structural_integrity(tree: &SemanticTree, idx: &CellIndex) -> IntegrityOutcome {
    let leaves = tree.leaves();
    if leaves.is_empty() {
        return IntegrityOutcome { ratio: 0.0, broken: Vec::new(), leaf_count: 0 };
    }
    let mut broken = Vec::new();
    for entry in &leaves {
        if let PathVerdict::Broken { failing_label } = verify_path(entry, idx) {
            broken.push(BrokenPath { path: entry.path.to_string(), failing_label });
        }
    }
    IntegrityOutcome {
        ratio: (leaves.len() - broken.len()) as f64 / leaves.len() as f64,
        broken,
        leaf_count: leaves.len(),
    }
}

/// Acceptance thresholds and the retry budget of the refinement loop.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub coverage_threshold: f64,
    pub structure_threshold: f64,
    pub max_attempts: u32,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig { coverage_threshold: 0.8, structure_threshold: 0.7, max_attempts: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionAction {
    Accept,
    /// Structural damage: discard the tree, re-derive the hierarchy.
    RebuildHierarchy,
    /// Structure is sound but content is missing: keep the tree, add the
    /// unmapped cells.
    SupplementCoverage,
}

/// Both scores at or above threshold accept; a structure failure routes to
/// rebuild even when coverage also failed (structure dominates); otherwise
/// the coverage deficit routes to supplement.
pub fn route_correction(coverage: f64, integrity: f64, cfg: &RefinementConfig) -> CorrectionAction {
    if integrity < cfg.structure_threshold {
        CorrectionAction::RebuildHierarchy
    } else if coverage < cfg.coverage_threshold {
        CorrectionAction::SupplementCoverage
    } else {
        CorrectionAction::Accept
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct QualityReport {
    pub coverage: f64,
    pub structural_integrity: f64,
    pub action: CorrectionAction,
    pub empty_tree: bool,
    pub leaf_count: usize,
    /// A1 references of uncovered cells, row-major order.
    pub unmapped_cells: Vec<String>,
    pub broken_paths: Vec<BrokenPath>,
}

impl QualityReport {
    pub fn accepted(&self) -> bool {
        self.action == CorrectionAction::Accept
    }

    /// Mean of the two scores; the refinement loop's tie-break key.
    pub fn metric_average(&self) -> f64 {
        (self.coverage + self.structural_integrity) / 2.0
    }
}

/// Full evaluation of one candidate tree against its source grid.
pub fn evaluate(tree: &SemanticTree, grid: &Grid, cfg: &RefinementConfig) -> QualityReport {
    let idx = CellIndex::build(grid);
    let cov = coverage(tree, grid);
    let integ = structural_integrity(tree, &idx);
    QualityReport {
        coverage: cov.ratio,
        structural_integrity: integ.ratio,
        action: route_correction(cov.ratio, integ.ratio, cfg),
        empty_tree: integ.leaf_count == 0,
        leaf_count: integ.leaf_count,
        unmapped_cells: cov.unmapped.iter().map(|a| a.to_a1()).collect(),
        broken_paths: integ.broken,
    }
}
