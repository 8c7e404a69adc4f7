//! Command-line front end for the table-to-tree pipeline.
//!
//! Subcommands mirror the library stages: `build-tree` reconstructs a
//! semantic tree from a table, `ask` answers one question, `evaluate`
//! scores an existing tree against its source table, and `bench` runs a
//! whole JSONL dataset. Machine-readable output goes to stdout; progress
//! and summaries go to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tabletree::answer;
use tabletree::config::PipelineConfig;
use tabletree::grid::Grid;
use tabletree::harness::{self, TreeCache};
use tabletree::navigate::{self, NavigationDirection};
use tabletree::quality::{self, CorrectionAction};
use tabletree::reconstruct;
use tabletree::symbolic;
use tabletree::tree::SemanticTree;

#[derive(Parser)]
#[command(
    name = "tabletree",
    version,
    about = "Reconstructs tables into semantic trees and answers questions over them"
)]
struct Cli {
    /// Pipeline config (TOML). Every field has a default, so this is only
    /// needed to point at real providers or change thresholds.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a semantic tree from a table (.csv or .json).
    BuildTree {
        /// Source table file.
        #[arg(long, value_name = "FILE")]
        table: PathBuf,
        /// Write the tree here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Pretty-print the tree JSON.
        #[arg(long)]
        pretty: bool,
        /// Also store the tree in this cache directory.
        #[arg(long, value_name = "DIR")]
        cache_dir: Option<PathBuf>,
        /// Cache id for the table (default: the table's file stem).
        #[arg(long, value_name = "ID")]
        table_id: Option<String>,
    },
    /// Answer a question about a table or a prebuilt tree.
    Ask {
        /// Source table; the tree is reconstructed first.
        #[arg(long, value_name = "FILE", conflicts_with = "tree")]
        table: Option<PathBuf>,
        /// Prebuilt tree JSON (a `build-tree` output or a cache entry).
        #[arg(long, value_name = "FILE")]
        tree: Option<PathBuf>,
        #[arg(long)]
        question: String,
        /// Which answering path(s) to run.
        #[arg(long, value_enum, default_value_t = AskMode::Dual)]
        mode: AskMode,
        /// Pin the traversal direction instead of asking the model.
        #[arg(long, value_enum)]
        force_direction: Option<DirectionArg>,
        /// Skip embedding-based candidate ranking.
        #[arg(long)]
        no_embeddings: bool,
        /// Write a JSON trace (answers, selection, full call log) here.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Score an existing tree against its source table. Exits 0 only if
    /// the tree meets the acceptance thresholds.
    Evaluate {
        /// Tree JSON (a `build-tree` output or a cache entry).
        #[arg(long, value_name = "FILE")]
        tree: PathBuf,
        /// Source table the tree claims to represent.
        #[arg(long, value_name = "FILE")]
        table: PathBuf,
    },
    /// Run the full pipeline over a JSONL dataset and report accuracy and
    /// amortized cost.
    Bench {
        /// Dataset: one JSON record per line with `table_id`, `table`,
        /// `question`, `answer`.
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Reuse (and fill) this tree cache directory.
        #[arg(long, value_name = "DIR")]
        cache_dir: Option<PathBuf>,
        /// Write the run report here instead of stdout.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AskMode {
    Textual,
    Symbolic,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    RootToLeaf,
    LeafToRoot,
}

impl From<DirectionArg> for NavigationDirection {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::RootToLeaf => NavigationDirection::RootToLeaf,
            DirectionArg::LeafToRoot => NavigationDirection::LeafToRoot,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::BuildTree { table, out, pretty, cache_dir, table_id } => {
            build_tree(&cfg, &table, out.as_deref(), pretty, cache_dir.as_deref(), table_id)
        }
        Command::Ask { table, tree, question, mode, force_direction, no_embeddings, trace } => ask(
            &cfg,
            table.as_deref(),
            tree.as_deref(),
            &question,
            mode,
            force_direction,
            no_embeddings,
            trace.as_deref(),
        ),
        Command::Evaluate { tree, table } => evaluate(&cfg, &tree, &table),
        Command::Bench { dataset, cache_dir, report } => {
            bench(&cfg, &dataset, cache_dir.as_deref(), report.as_deref())
        }
    }
}

fn build_tree(
    cfg: &PipelineConfig,
    table: &Path,
    out: Option<&Path>,
    pretty: bool,
    cache_dir: Option<&Path>,
    table_id: Option<String>,
) -> Result<ExitCode> {
    let grid = load_grid(table)?;
    let gateway = cfg.build_gateway()?;
    let built = reconstruct::reconstruct(&grid, &cfg.refine, &cfg.budget, &gateway)?;

    eprintln!(
        "mode {} | attempts {} | coverage {:.3} | integrity {:.3}{}",
        mode_name(built.mode),
        built.attempts,
        built.report.coverage,
        built.report.structural_integrity,
        if built.accepted() { "" } else { " | below acceptance thresholds" },
    );
    for warning in &built.warnings {
        eprintln!("warning: {warning}");
    }

    if let Some(dir) = cache_dir {
        let cache = TreeCache::at(dir)?;
        let id = match table_id {
            Some(id) => id,
            None => file_stem(table)?,
        };
        let path = cache.store(&id, &built)?;
        eprintln!("cached as {}", path.display());
    }

    let text =
        if pretty { built.tree.to_json_pretty() } else { built.tree.to_json_string() };
    emit(out, &text)?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn ask(
    cfg: &PipelineConfig,
    table: Option<&Path>,
    tree: Option<&Path>,
    question: &str,
    mode: AskMode,
    force_direction: Option<DirectionArg>,
    no_embeddings: bool,
    trace: Option<&Path>,
) -> Result<ExitCode> {
    let mut traverse = cfg.traverse.clone();
    if no_embeddings {
        traverse.use_embeddings = false;
    }
    let gateway = cfg.build_gateway()?;

    let tree = match (tree, table) {
        (Some(path), _) => load_tree(path)?,
        (None, Some(path)) => {
            let grid = load_grid(path)?;
            let built = reconstruct::reconstruct(&grid, &cfg.refine, &cfg.budget, &gateway)?;
            eprintln!(
                "built tree: mode {} | coverage {:.3} | integrity {:.3}",
                mode_name(built.mode),
                built.report.coverage,
                built.report.structural_integrity
            );
            built.tree
        }
        (None, None) => bail!("ask needs --table or --tree"),
    };

    let force = force_direction.map(NavigationDirection::from);
    let textual = match mode {
        AskMode::Symbolic => None,
        _ => Some(navigate::answer_textual(&tree, question, &gateway, &traverse, force)?),
    };
    let symbolic = match mode {
        AskMode::Textual => None,
        _ => Some(symbolic::symbolic_answer(&tree, question, &gateway, &cfg.symbolic)?),
    };

    let (final_answer, selection) = match (&textual, &symbolic) {
        (Some(t), Some(s)) => {
            let sel =
                answer::select_answer(&tree, question, &t.answer, s.answer.as_deref(), &gateway)?;
            (sel.answer.clone(), Some(sel))
        }
        (Some(t), None) => (t.answer.clone(), None),
        (None, Some(s)) => match &s.answer {
            Some(a) => (a.clone(), None),
            None => {
                let detail = s.failure.as_deref().unwrap_or("no failure trace");
                bail!("symbolic path failed: {detail}");
            }
        },
        (None, None) => unreachable!("one of the answering paths always runs"),
    };

    if let Some(path) = trace {
        let doc = json!({
            "question": question,
            "answer": final_answer,
            "textual": textual.as_ref().map(|t| json!({
                "answer": t.answer,
                "direction": t.direction,
                "visited": t.visited,
                "ready": t.ready,
                "evidence": t.evidence,
            })),
            "symbolic": symbolic.as_ref().map(|s| json!({
                "answer": s.answer,
                "program": s.program,
                "corrections": s.corrections,
                "steps_used": s.steps_used,
                "failure": s.failure,
            })),
            "selection": selection.as_ref().map(|sel| json!({
                "source": sel.source,
                "agreed": sel.agreed,
                "selector_consulted": sel.selector_consulted,
            })),
            "calls": gateway.log(),
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)
            .with_context(|| format!("cannot write trace {}", path.display()))?;
        eprintln!("trace written to {}", path.display());
    }

    println!("{final_answer}");
    Ok(ExitCode::SUCCESS)
}

fn evaluate(cfg: &PipelineConfig, tree: &Path, table: &Path) -> Result<ExitCode> {
    let tree = load_tree(tree)?;
    let grid = load_grid(table)?;
    let report = quality::evaluate(&tree, &grid, &cfg.refine);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.action == CorrectionAction::Accept {
        Ok(ExitCode::SUCCESS)
    } else {
        // Distinct from the generic failure code so scripts can tell "tree
        // below thresholds" from "could not evaluate".
        Ok(ExitCode::from(2))
    }
}

fn bench(
    cfg: &PipelineConfig,
    dataset: &Path,
    cache_dir: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<ExitCode> {
    let records = harness::load_dataset(dataset)?;
    let cache = match cache_dir {
        Some(dir) => Some(TreeCache::at(dir)?),
        None => None,
    };
    let gateway = cfg.build_gateway()?;
    let report = harness::run_bench(&records, cfg, &gateway, cache.as_ref())?;

    let agg = &report.aggregate;
    eprintln!(
        "{} tables ({} cached) | {} questions | accuracy {:.3} | oracle {:.3} | {:.3}s/question amortized",
        agg.tables, agg.cache_hits, agg.questions, agg.accuracy, agg.oracle_accuracy,
        agg.mean_amortized_time_s
    );
    emit(report_path, &report.to_json_string())?;
    Ok(ExitCode::SUCCESS)
}

/// Reads a table as CSV or JSON rows, deciding by file extension.
fn load_grid(path: &Path) -> Result<Grid> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read table {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let grid = match ext.to_ascii_lowercase().as_str() {
        "csv" => Grid::from_csv(&text),
        "json" => Grid::from_json(&text),
        other => bail!(
            "cannot tell the format of {} (extension `{other}`); use .csv or .json",
            path.display()
        ),
    };
    grid.with_context(|| format!("cannot parse table {}", path.display()))
}

/// Reads a tree file: either bare tree JSON (`build-tree` output) or a
/// cache document with `header`/`tree` fields.
fn load_tree(path: &Path) -> Result<SemanticTree> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read tree {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("{} is not JSON", path.display()))?;
    let payload = match value.as_object() {
        Some(obj) if obj.contains_key("tree") && obj.contains_key("header") => &value["tree"],
        _ => &value,
    };
    SemanticTree::from_json_str(&payload.to_string())
        .with_context(|| format!("{} does not hold a semantic tree", path.display()))
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.to_string())
        .ok_or_else(|| anyhow::anyhow!("cannot derive a table id from {}", path.display()))
}

fn mode_name(mode: tabletree::mode::SynthesisMode) -> &'static str {
    match mode {
        tabletree::mode::SynthesisMode::Direct => "direct",
        tabletree::mode::SynthesisMode::Recipe => "recipe",
        tabletree::mode::SynthesisMode::Programmatic => "programmatic",
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => {
            std::fs::write(path, text)
                .with_context(|| format!("cannot write {}", path.display()))?;
            eprintln!("written to {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}
