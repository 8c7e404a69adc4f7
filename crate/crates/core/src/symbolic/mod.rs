//! Sandboxed tree-query programs.
//!
//! The symbolic answering path asks the model for a *program*, not an answer:
//! given the structural skeleton of a tree (no leaf payloads), it writes one
//! expression in a closed query DSL — `get`/`keys`/`values`/aggregates/
//! `count_where` — which the interpreter then executes against the real tree
//! under step, size, and time limits. A closed primitive set means there is
//! nothing to escape from, and the whole interpreter can be checked against a
//! brute-force reference evaluator.
//!
//! Failed programs are not the end: [`symbolic_answer`] feeds the parse or
//! runtime error back to the model and asks for a corrected program, up to
//! `max_corrections` times. Exhaustion yields a failure-marked outcome rather
//! than an error — the answer selector downstream treats that as "prefer the
//! textual candidate".

mod exec;
mod numeric;
mod parse;

pub use exec::{execute, ExecError, ExecutionResult, SandboxLimits};
pub use numeric::NumericNormalizer;
pub use parse::{parse_program, ParseError};

use crate::gateway::{strip_code_fence, Gateway, GatewayError, Phase};
use crate::prompts;
use crate::tree::SemanticTree;
use std::fmt;

/// One expression in the tree-query DSL. Programs are single expressions:
/// no bindings, no recursion, no I/O.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeExpr {
    /// Subtree or leaf at a key path from the root; `get([])` is the root.
    Get(Vec<String>),
    /// Child key names of a node, as a list of text values.
    Keys(Box<TreeExpr>),
    /// Length of a list.
    Len(Box<TreeExpr>),
    /// Every leaf value under a node, in document order.
    Values(Box<TreeExpr>),
    /// Drops null and blank entries from a list.
    FilterNonnull(Box<TreeExpr>),
    Sum(Box<TreeExpr>),
    Mean(Box<TreeExpr>),
    Min(Box<TreeExpr>),
    Max(Box<TreeExpr>),
    /// How many entries of a list (or children of a node) satisfy a predicate.
    CountWhere(Box<TreeExpr>, Predicate),
    NumberLit(f64),
    TextLit(String),
}

/// Predicate applied per entry by `count_where`. With a `field`, the test is
/// applied to that named child of the entry; an entry without the field (or
/// one that is not a node) tests as null.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub field: Option<String>,
    pub test: PredTest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredTest {
    IsEmpty,
    IsNonempty,
    /// Exact text match against the entry's rendered form (both sides trimmed).
    EqualsText(String),
    /// Numeric comparison; entries that do not parse as numbers fail the test.
    Cmp(CmpOp, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl CmpOp {
    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Eq => "eq",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }
}

/// Runtime value of the interpreter. `Tree` wraps an unresolved node; leaves
/// are unwrapped into scalars the moment `get` touches them.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Null,
    List(Vec<Value>),
    Tree(SemanticTree),
}

/// Short operand-kind tag used in type errors and traces.
pub fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Number(_) => "number",
        Value::Text(_) => "text",
        Value::Null => "null",
        Value::List(_) => "list",
        Value::Tree(_) => "node",
    }
}

/// Final answer rendering: whole numbers print without a decimal point, text
/// stays verbatim (units intact), lists join with `", "`, nodes serialize.
pub fn format_value(v: &Value) -> String {
    match v {
        Value::Number(n) => {
            if n.fract() == 0.0 && n.abs() < 1e15 {
                format!("{}", *n as i64)
            } else {
                format!("{n}")
            }
        }
        Value::Text(s) => s.clone(),
        Value::Null => "null".to_string(),
        Value::List(vs) => vs.iter().map(format_value).collect::<Vec<_>>().join(", "),
        Value::Tree(t) => t.to_json_string(),
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

// Programs print in their own concrete syntax, so a logged program can be
// replayed through `parse_program` unchanged.
impl fmt::Display for TreeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeExpr::Get(path) => {
                let labels: Vec<String> = path.iter().map(|l| quote(l)).collect();
                write!(f, "get([{}])", labels.join(", "))
            }
            TreeExpr::Keys(e) => write!(f, "keys({e})"),
            TreeExpr::Len(e) => write!(f, "len({e})"),
            TreeExpr::Values(e) => write!(f, "values({e})"),
            TreeExpr::FilterNonnull(e) => write!(f, "filter_nonnull({e})"),
            TreeExpr::Sum(e) => write!(f, "sum({e})"),
            TreeExpr::Mean(e) => write!(f, "mean({e})"),
            TreeExpr::Min(e) => write!(f, "min({e})"),
            TreeExpr::Max(e) => write!(f, "max({e})"),
            TreeExpr::CountWhere(e, p) => write!(f, "count_where({e}, {p})"),
            TreeExpr::NumberLit(n) => write!(f, "{n}"),
            TreeExpr::TextLit(s) => f.write_str(&quote(s)),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.field, &self.test) {
            (None, PredTest::IsEmpty) => f.write_str("is_empty"),
            (None, PredTest::IsNonempty) => f.write_str("is_nonempty"),
            (Some(field), PredTest::IsEmpty) => write!(f, "is_empty({})", quote(field)),
            (Some(field), PredTest::IsNonempty) => write!(f, "is_nonempty({})", quote(field)),
            (None, PredTest::EqualsText(t)) => write!(f, "equals({})", quote(t)),
            (Some(field), PredTest::EqualsText(t)) => {
                write!(f, "equals({}, {})", quote(field), quote(t))
            }
            (None, PredTest::Cmp(op, n)) => write!(f, "{}({n})", op.name()),
            (Some(field), PredTest::Cmp(op, n)) => {
                write!(f, "{}({}, {n})", op.name(), quote(field))
            }
        }
    }
}

/// Knobs for the symbolic path: interpreter limits plus how many correction
/// rounds a failed program gets.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SymbolicConfig {
    #[serde(flatten)]
    pub limits: SandboxLimits,
    pub max_corrections: u32,
}

impl Default for SymbolicConfig {
    fn default() -> Self {
        SymbolicConfig { limits: SandboxLimits::default(), max_corrections: 2 }
    }
}

/// What the symbolic path produced. `answer: None` is the failure marker the
/// selector keys on; `failure` then carries the last error trace.
#[derive(Debug, Clone)]
pub struct SymbolicOutcome {
    pub answer: Option<String>,
    /// Program text that produced the answer, replayable via [`parse_program`].
    pub program: Option<String>,
    /// Correction rounds consumed (0 = first program worked).
    pub corrections: u32,
    pub steps_used: u64,
    pub failure: Option<String>,
}

impl SymbolicOutcome {
    pub fn is_failure(&self) -> bool {
        self.answer.is_none()
    }
}

/// Renders the program-generation prompt over the tree's skeleton. The
/// skeleton carries type tags only, so no table payload reaches the model in
/// this phase.
pub fn build_query_prompt(skeleton: &SemanticTree, question: &str, exemplars: &str) -> String {
    prompts::fill(
        prompts::QUERY_PROGRAM,
        &[
            ("EXEMPLARS", exemplars),
            ("TREE_SKELETON", &skeleton.to_json_string()),
            ("question", question),
        ],
    )
}

/// Full symbolic round: generate a program over the skeleton, execute it
/// against the tree, and self-correct on failure by feeding the error trace
/// back, up to `max_corrections` regenerations. Provider-level errors
/// propagate; program-level failure is a marked outcome, not an error.
pub fn symbolic_answer(
    tree: &SemanticTree,
    question: &str,
    gateway: &Gateway,
    cfg: &SymbolicConfig,
) -> Result<SymbolicOutcome, GatewayError> {
    let skeleton_json = tree.skeleton().to_json_string();
    let mut prompt = build_query_prompt(&tree.skeleton(), question, prompts::QUERY_EXEMPLARS);
    let mut corrections = 0;
    loop {
        let purpose = if corrections == 0 { "symbolic.program" } else { "symbolic.repair" };
        let response = gateway.complete(Phase::Symbolic, purpose, "", &prompt)?;
        let text = strip_code_fence(&response).to_string();

        let failure = match parse_program(&text) {
            Ok(prog) => match execute(&prog, tree, &cfg.limits) {
                Ok(result) => {
                    return Ok(SymbolicOutcome {
                        answer: Some(format_value(&result.value)),
                        program: Some(text),
                        corrections,
                        steps_used: result.steps_used,
                        failure: None,
                    });
                }
                Err(e) => e.to_string(),
            },
            Err(e) => e.to_string(),
        };

        if corrections >= cfg.max_corrections {
            return Ok(SymbolicOutcome {
                answer: None,
                program: None,
                corrections,
                steps_used: 0,
                failure: Some(failure),
            });
        }
        corrections += 1;
        prompt = prompts::fill(
            prompts::REPAIR_PROGRAM,
            &[
                ("PREVIOUS_PROGRAM", text.as_str()),
                ("ERROR_TRACE", failure.as_str()),
                ("TREE_SKELETON", skeleton_json.as_str()),
                ("question", question),
            ],
        );
    }
}
