//! Token accounting.
//!
//! Synthesis-mode selection needs rough token counts for whole tables and for
//! individual cells, but must not depend on any one vendor's tokenizer. The
//! default [`ApproxTokenizer`] estimates from word counts; callers with exact
//! tokenizers plug in their own [`TokenCounter`].

use crate::grid::Grid;

pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Word-count heuristic: split on whitespace and punctuation, multiply by a
/// configurable factor (default 1.3), round up. Yields 0 for empty or
/// punctuation-only text.
pub struct ApproxTokenizer {
    pub words_per_token_factor: f64,
}

impl Default for ApproxTokenizer {
    fn default() -> Self {
        ApproxTokenizer { words_per_token_factor: 1.3 }
    }
}

impl TokenCounter for ApproxTokenizer {
    fn count(&self, text: &str) -> usize {
        let words = text
            .split(|ch: char| !ch.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .count();
        (words as f64 * self.words_per_token_factor).ceil() as usize
    }
}

/// One token per character. Only sensible for tests and worked examples where
/// arithmetic must be checkable by hand.
pub struct CharTokenizer;

impl TokenCounter for CharTokenizer {
    fn count(&self, text: &str) -> usize {
        text.chars().count()
    }
}

/// Size profile of one table under a given counter. All ratios are over
/// non-empty cells; a grid with no content at all sets `no_content` and
/// reports zeros rather than failing.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TableStats {
    /// Tokens in the full compact serialization of the grid.
    pub total_tokens: usize,
    /// Mean tokens per non-empty cell.
    pub avg_cell_tokens: f64,
    /// Fraction of non-empty cells longer than the `long_cell_tokens`
    /// threshold passed to [`compute_stats`].
    pub long_cell_ratio: f64,
    /// Total cell count, rows x columns.
    pub cell_count: usize,
    pub nonempty_count: usize,
    pub no_content: bool,
}

/// Profiles `grid` under `counter`. `long_cell_tokens` is the per-cell token
/// count strictly above which a cell counts as "long"; it must be positive.
pub fn compute_stats(grid: &Grid, counter: &dyn TokenCounter, long_cell_tokens: usize) -> TableStats {
    debug_assert!(long_cell_tokens > 0, "long-cell threshold must be positive");
    let total_tokens = counter.count(&grid.compact_serialize());
    let mut nonempty = 0usize;
    let mut token_sum = 0usize;
    let mut long = 0usize;
    for (_, text) in grid.iter() {
        if text.is_empty() {
            continue;
        }
        nonempty += 1;
        let t = counter.count(text);
        token_sum += t;
        if t > long_cell_tokens {
            long += 1;
        }
    }
    if nonempty == 0 {
        return TableStats {
            total_tokens,
            avg_cell_tokens: 0.0,
            long_cell_ratio: 0.0,
            cell_count: grid.len(),
            nonempty_count: 0,
            no_content: true,
        };
    }
    TableStats {
        total_tokens,
        avg_cell_tokens: token_sum as f64 / nonempty as f64,
        long_cell_ratio: long as f64 / nonempty as f64,
        cell_count: grid.len(),
        nonempty_count: nonempty,
        no_content: false,
    }
}
