//! Synthesis-mode selection.
//!
//! Whether a table's tree is synthesized in one shot, via a compact
//! structural recipe, or by a generated construction program depends on how
//! the table's token profile compares to the model's usable context budget.
//! The budget is what survives of the context window after a safety margin
//! and fixed overheads:
//!
//! ```text
//! budget = alpha * context_limit - system_overhead - output_reserve
//! ```
//!
//! A table whose full serialization fits inside the budget is synthesized
//! directly. Oversized tables go structural: pattern-heavy ones (many rows of
//! short cells) get a programmatic build, content-heavy ones (long prose
//! cells or few rows) get a recipe with positional placeholders that are
//! resolved locally.

use thiserror::Error;

use crate::token::TableStats;

#[derive(Debug, Error, PartialEq)]
pub enum ModeError {
    #[error(
        "no usable context budget: {alpha} * {context_limit} leaves {safe} tokens, \
         but overheads claim {claimed}"
    )]
    BudgetExhausted { alpha: f64, context_limit: usize, safe: usize, claimed: usize },
}

/// How a tree gets built for one table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    /// Direct synthesis: the whole serialized table goes into one prompt and
    /// the model emits the full tree.
    Direct,
    /// Structural recipe: the model emits a tree over the header structure
    /// with cell-address placeholders instead of values; values are filled in
    /// locally.
    Recipe,
    /// Programmatic: the model emits a loop/insert construction program that
    /// is executed against the grid.
    Programmatic,
}

impl SynthesisMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthesisMode::Direct => "direct",
            SynthesisMode::Recipe => "recipe",
            SynthesisMode::Programmatic => "programmatic",
        }
    }
}

/// Budget and decision thresholds. Defaults match the shipped configuration:
/// a 0.6 safety factor over a 128k window, long/large cutoffs of 80 tokens
/// mean cell length, 0.3 long-cell ratio, and 1000 cells.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BudgetConfig {
    /// Model context window, tokens.
    pub context_limit: usize,
    /// Fraction of the window treated as safely usable.
    pub alpha: f64,
    /// Tokens consumed by fixed prompt scaffolding.
    pub system_overhead: usize,
    /// Tokens reserved for the model's output. `None` means estimate from
    /// the table via [`BudgetConfig::estimated_reserve`].
    pub output_reserve: Option<usize>,
    /// Mean-cell-token threshold above which a table counts as content-heavy.
    pub long_cell_mean: f64,
    /// Long-cell-ratio threshold with the same role.
    pub long_cell_ratio: f64,
    /// Cell-count threshold above which an oversized table is handled
    /// programmatically instead.
    pub large_cell_count: usize,
    /// Per-cell token threshold used when profiling tables (a cell above this
    /// is "long").
    pub long_cell_tokens: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            context_limit: 128_000,
            alpha: 0.6,
            system_overhead: 1000,
            output_reserve: None,
            long_cell_mean: 80.0,
            long_cell_ratio: 0.3,
            large_cell_count: 1000,
            long_cell_tokens: 80,
        }
    }
}

impl BudgetConfig {
    /// Output-reserve estimate when none is configured: room for every
    /// non-empty cell plus a few structural tokens each, capped at a quarter
    /// of the safe window so pathological tables cannot zero the budget.
    pub fn estimated_reserve(&self, stats: &TableStats) -> usize {
        let per_cell = stats.avg_cell_tokens + 4.0;
        let raw = (stats.nonempty_count as f64 * per_cell).ceil() as usize;
        let cap = (0.25 * self.alpha * self.context_limit as f64).floor() as usize;
        raw.min(cap)
    }

    /// Usable prompt budget in tokens, given a resolved output reserve.
    /// Errors when overheads eat the whole safe window — no synthesis mode
    /// can run without prompt room.
    pub fn effective_budget(&self, output_reserve: usize) -> Result<usize, ModeError> {
        let safe = (self.alpha * self.context_limit as f64).floor() as usize;
        let claimed = self.system_overhead + output_reserve;
        if safe <= claimed {
            return Err(ModeError::BudgetExhausted {
                alpha: self.alpha,
                context_limit: self.context_limit,
                safe,
                claimed,
            });
        }
        Ok(safe - claimed)
    }

    /// Resolves the output reserve (configured value or estimate) and returns
    /// the effective budget for `stats`.
    pub fn budget_for(&self, stats: &TableStats) -> Result<usize, ModeError> {
        let reserve = self.output_reserve.unwrap_or_else(|| self.estimated_reserve(stats));
        self.effective_budget(reserve)
    }
}

/// Decision rule. In-budget tables synthesize directly. Over budget, tables
/// at or under the size cutoff use the recipe when they are content-heavy
/// (long mean cell or high long-cell ratio); tables over the size cutoff go
/// programmatic; everything else falls back to the recipe.
pub fn select_mode(stats: &TableStats, budget: usize, cfg: &BudgetConfig) -> SynthesisMode {
    if stats.total_tokens <= budget {
        return SynthesisMode::Direct;
    }
    let content_heavy =
        stats.avg_cell_tokens > cfg.long_cell_mean || stats.long_cell_ratio > cfg.long_cell_ratio;
    if stats.cell_count <= cfg.large_cell_count && content_heavy {
        SynthesisMode::Recipe
    } else if stats.cell_count > cfg.large_cell_count {
        SynthesisMode::Programmatic
    } else {
        SynthesisMode::Recipe
    }
}
