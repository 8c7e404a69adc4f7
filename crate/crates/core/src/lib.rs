//! Turns messy rectangular tables into ordered semantic trees and answers
//! natural-language questions over them.
//!
//! The pipeline has three stages, each usable on its own:
//!
//! 1. **Reconstruction** ([`reconstruct`]): a model-guided pass that infers the
//!    table's header hierarchy and emits a nested tree. Synthesis strategy is
//!    chosen per table from token statistics ([`mode`]), and every candidate
//!    tree is scored against the source grid ([`quality`]) before it is
//!    accepted, supplemented, or rebuilt.
//! 2. **Question answering**: a traversal engine that walks the tree in either
//!    direction under model guidance ([`navigate`]), and a sandboxed query
//!    DSL executed directly against the tree ([`symbolic`]).
//! 3. **Selection** ([`answer`]): reconciles the two candidate answers, with a
//!    lightweight model arbitrating only genuine disagreements.
//!
//! All model traffic goes through [`gateway::Gateway`], which supports live
//! HTTP providers as well as scripted transcripts for fully deterministic
//! offline runs. [`harness`] adds dataset loading, tree caching, and batch
//! evaluation on top; the `tabletree` binary exposes everything as a CLI.

pub mod answer;
pub mod config;
pub mod gateway;
pub mod grid;
pub mod harness;
mod lex;
pub mod mode;
pub mod navigate;
pub mod prompts;
pub mod quality;
pub mod reconstruct;
pub mod symbolic;
pub mod token;
pub mod tree;

pub use answer::{AnswerSource, SelectionOutcome, select_answer};
pub use config::PipelineConfig;
pub use gateway::Gateway;
pub use grid::{CellAddress, Grid};
pub use harness::{DatasetRecord, RunReport, TreeCache, load_dataset, run_bench};
pub use mode::{BudgetConfig, SynthesisMode};
pub use navigate::{NavigationDirection, TraversalConfig, TraversalOutcome};
pub use quality::{CorrectionAction, QualityReport, RefinementConfig};
pub use reconstruct::{Reconstruction, reconstruct};
pub use tree::{LeafValue, SemanticTree, TreePath};
