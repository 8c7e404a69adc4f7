//! Sandboxed interpreter for tree-query programs.
//!
//! Evaluation is a plain recursive walk with three guards: a step budget
//! (every AST node and every list element costs one step), a result-size cap,
//! and a wall-clock timeout. Numeric aggregates run leaf text through
//! [`NumericNormalizer`] and skip entries that do not parse; nulls are always
//! skipped, which is exactly what `count_where(..., is_empty)` exists to
//! count instead.

use super::numeric::NumericNormalizer;
use super::{kind_name, PredTest, Predicate, TreeExpr, Value};
use crate::tree::{LeafValue, SemanticTree};
use std::time::Instant;
use thiserror::Error;

/// Hard limits on one program execution. Defaults are far above anything a
/// legitimate query needs and exist to bound misbehaving generated programs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SandboxLimits {
    pub max_steps: u64,
    pub max_list_len: usize,
    pub timeout_ms: u64,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        SandboxLimits { max_steps: 100_000, max_list_len: 100_000, timeout_ms: 2_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("path error: resolved `{resolved}` but `{missing}` has no such child")]
    Path { resolved: String, missing: String },
    #[error("type error: {primitive} cannot operate on {operand}")]
    Type { primitive: &'static str, operand: String },
    #[error("limit exceeded: {what}")]
    Limit { what: String },
}

/// Value plus the execution accounting the self-correction loop and the CLI
/// trace output want.
#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub value: Value,
    pub steps_used: u64,
    /// One line per evaluated primitive, capped; newest last.
    pub trace: Vec<String>,
}

/// Runs `prog` against `tree` under `limits`.
pub fn execute(
    prog: &TreeExpr,
    tree: &SemanticTree,
    limits: &SandboxLimits,
) -> Result<ExecutionResult, ExecError> {
    let mut interp = Interp {
        tree,
        limits,
        normalizer: NumericNormalizer::default(),
        steps: 0,
        started: Instant::now(),
        trace: Vec::new(),
    };
    let value = interp.eval(prog)?;
    Ok(ExecutionResult { value, steps_used: interp.steps, trace: interp.trace })
}

const TRACE_CAP: usize = 200;

struct Interp<'a> {
    tree: &'a SemanticTree,
    limits: &'a SandboxLimits,
    normalizer: NumericNormalizer,
    steps: u64,
    started: Instant,
    trace: Vec<String>,
}

impl Interp<'_> {
    fn tick(&mut self) -> Result<(), ExecError> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(ExecError::Limit {
                what: format!("step budget of {}", self.limits.max_steps),
            });
        }
        if self.steps % 1024 == 0
            && self.started.elapsed().as_millis() as u64 > self.limits.timeout_ms
        {
            return Err(ExecError::Limit { what: format!("timeout of {}ms", self.limits.timeout_ms) });
        }
        Ok(())
    }

    fn record(&mut self, name: &str, v: &Value) {
        if self.trace.len() < TRACE_CAP {
            self.trace.push(format!("{name} -> {}", kind_name(v)));
        }
    }

    fn eval(&mut self, expr: &TreeExpr) -> Result<Value, ExecError> {
        self.tick()?;
        let value = match expr {
            TreeExpr::Get(path) => self.get(path)?,
            TreeExpr::Keys(inner) => {
                let v = self.eval(inner)?;
                match &v {
                    Value::Tree(t) => match t.as_node() {
                        Some(m) => Value::List(
                            m.keys().map(|k| Value::Text(k.clone())).collect(),
                        ),
                        None => {
                            return Err(self.type_err("keys", &v));
                        }
                    },
                    _ => return Err(self.type_err("keys", &v)),
                }
            }
            TreeExpr::Len(inner) => {
                let v = self.eval(inner)?;
                match v {
                    Value::List(l) => Value::Number(l.len() as f64),
                    other => return Err(self.type_err("len", &other)),
                }
            }
            TreeExpr::Values(inner) => {
                let v = self.eval(inner)?;
                match v {
                    Value::Tree(t) => {
                        let leaves = t.leaves();
                        if leaves.len() > self.limits.max_list_len {
                            return Err(ExecError::Limit {
                                what: format!("result size cap of {}", self.limits.max_list_len),
                            });
                        }
                        let mut out = Vec::with_capacity(leaves.len());
                        for entry in leaves {
                            self.tick()?;
                            out.push(scalar_of_leaf(&entry.value));
                        }
                        Value::List(out)
                    }
                    Value::List(l) => Value::List(l),
                    scalar => Value::List(vec![scalar]),
                }
            }
            TreeExpr::FilterNonnull(inner) => {
                let v = self.eval(inner)?;
                let list = self.as_list("filter_nonnull", v)?;
                let mut out = Vec::new();
                for item in list {
                    self.tick()?;
                    let blank = match &item {
                        Value::Null => true,
                        Value::Text(s) => s.trim().is_empty(),
                        _ => false,
                    };
                    if !blank {
                        out.push(item);
                    }
                }
                Value::List(out)
            }
            TreeExpr::Sum(inner) => {
                let nums = self.numeric_entries("sum", inner)?;
                Value::Number(nums.iter().sum())
            }
            TreeExpr::Mean(inner) => {
                let nums = self.numeric_entries("mean", inner)?;
                if nums.is_empty() {
                    return Err(ExecError::Type { primitive: "mean", operand: "empty list".into() });
                }
                Value::Number(nums.iter().sum::<f64>() / nums.len() as f64)
            }
            TreeExpr::Min(inner) => {
                let nums = self.numeric_entries("min", inner)?;
                match nums.into_iter().reduce(f64::min) {
                    Some(n) => Value::Number(n),
                    None => {
                        return Err(ExecError::Type { primitive: "min", operand: "empty list".into() })
                    }
                }
            }
            TreeExpr::Max(inner) => {
                let nums = self.numeric_entries("max", inner)?;
                match nums.into_iter().reduce(f64::max) {
                    Some(n) => Value::Number(n),
                    None => {
                        return Err(ExecError::Type { primitive: "max", operand: "empty list".into() })
                    }
                }
            }
            TreeExpr::CountWhere(inner, pred) => {
                let v = self.eval(inner)?;
                let entries = match v {
                    Value::List(l) => l,
                    Value::Tree(t) => match t.as_node() {
                        Some(m) => m.values().map(value_of_subtree).collect(),
                        None => {
                            return Err(ExecError::Type {
                                primitive: "count_where",
                                operand: "leaf".into(),
                            })
                        }
                    },
                    other => return Err(self.type_err("count_where", &other)),
                };
                let mut count = 0u64;
                for entry in entries {
                    self.tick()?;
                    if self.pred_holds(pred, &entry) {
                        count += 1;
                    }
                }
                Value::Number(count as f64)
            }
            TreeExpr::NumberLit(n) => Value::Number(*n),
            TreeExpr::TextLit(s) => Value::Text(s.clone()),
        };
        let name = primitive_name(expr);
        self.record(name, &value);
        Ok(value)
    }

    fn get(&mut self, path: &[String]) -> Result<Value, ExecError> {
        let mut current = self.tree;
        for (depth, label) in path.iter().enumerate() {
            self.tick()?;
            let next = current.as_node().and_then(|m| m.get(label));
            match next {
                Some(child) => current = child,
                None => {
                    let resolved = if depth == 0 {
                        "(root)".to_string()
                    } else {
                        path[..depth].join(" / ")
                    };
                    return Err(ExecError::Path { resolved, missing: label.clone() });
                }
            }
        }
        Ok(value_of_subtree(current))
    }

    fn as_list(&self, primitive: &'static str, v: Value) -> Result<Vec<Value>, ExecError> {
        match v {
            Value::List(l) => Ok(l),
            Value::Tree(_) => Err(ExecError::Type {
                primitive,
                operand: "node (apply values() or keys() first)".into(),
            }),
            scalar => Ok(vec![scalar]),
        }
    }

    /// Aggregate operand: list (or scalar as a one-list) with each entry
    /// coerced to a number; nulls and unparseable text are skipped.
    fn numeric_entries(
        &mut self,
        primitive: &'static str,
        inner: &TreeExpr,
    ) -> Result<Vec<f64>, ExecError> {
        let v = self.eval(inner)?;
        let list = self.as_list(primitive, v)?;
        let mut out = Vec::new();
        for item in list {
            self.tick()?;
            match item {
                Value::Number(n) => out.push(n),
                Value::Text(s) => {
                    if let Some(n) = self.normalizer.parse(&s) {
                        out.push(n);
                    }
                }
                Value::Null => {}
                other => return Err(self.type_err(primitive, &other)),
            }
        }
        Ok(out)
    }

    fn pred_holds(&self, pred: &Predicate, entry: &Value) -> bool {
        // Field resolution: the named child of a node entry; anything else
        // (scalar entry, missing child) tests as null.
        let resolved;
        let target = match &pred.field {
            None => entry,
            Some(field) => {
                resolved = match entry {
                    Value::Tree(t) => t
                        .as_node()
                        .and_then(|m| m.get(field))
                        .map(value_of_subtree)
                        .unwrap_or(Value::Null),
                    _ => Value::Null,
                };
                &resolved
            }
        };
        match &pred.test {
            PredTest::IsEmpty => is_empty(target),
            PredTest::IsNonempty => !is_empty(target),
            PredTest::EqualsText(text) => {
                super::format_value(target).trim() == text.trim()
            }
            PredTest::Cmp(op, rhs) => match numeric_of(target, &self.normalizer) {
                Some(lhs) => op.holds(lhs, *rhs),
                None => false,
            },
        }
    }

    fn type_err(&self, primitive: &'static str, v: &Value) -> ExecError {
        ExecError::Type { primitive, operand: kind_name(v).to_string() }
    }
}

fn scalar_of_leaf(v: &LeafValue) -> Value {
    match v {
        LeafValue::Text(s) => Value::Text(s.clone()),
        LeafValue::Number(n) => Value::Number(n.as_f64().unwrap_or(f64::NAN)),
        LeafValue::Null => Value::Null,
    }
}

fn value_of_subtree(t: &SemanticTree) -> Value {
    match t {
        SemanticTree::Leaf(v) => scalar_of_leaf(v),
        node => Value::Tree(node.clone()),
    }
}

fn is_empty(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::Text(s) => s.trim().is_empty(),
        Value::Number(_) => false,
        Value::List(l) => l.is_empty(),
        Value::Tree(t) => t.as_node().map(|m| m.is_empty()).unwrap_or(false),
    }
}

fn numeric_of(v: &Value, normalizer: &NumericNormalizer) -> Option<f64> {
    match v {
        Value::Number(n) => Some(*n),
        Value::Text(s) => normalizer.parse(s),
        _ => None,
    }
}

fn primitive_name(expr: &TreeExpr) -> &'static str {
    match expr {
        TreeExpr::Get(_) => "get",
        TreeExpr::Keys(_) => "keys",
        TreeExpr::Len(_) => "len",
        TreeExpr::Values(_) => "values",
        TreeExpr::FilterNonnull(_) => "filter_nonnull",
        TreeExpr::Sum(_) => "sum",
        TreeExpr::Mean(_) => "mean",
        TreeExpr::Min(_) => "min",
        TreeExpr::Max(_) => "max",
        TreeExpr::CountWhere(..) => "count_where",
        TreeExpr::NumberLit(_) => "number",
        TreeExpr::TextLit(_) => "text",
    }
}
