//! The bulk table-construction language. For tables too large to synthesize
//! in one response, the model writes a short looping program instead; this
//! module parses it (on the shared [`crate::lex`] tokenizer) and runs it
//! against the full grid to build the tree.
//!
//! The language is two statements and a handful of expressions:
//!
//! ```text
//! insert(["Budget", qkey("Quarter", cell(A, r)), "Total"], cell(E, r))
//! for r in 2..48 { insert([cell(A, r), "Sales"], cell(B, r)) }
//! ```
//!
//! `for` ranges are half-open (`2..48` runs 2 through 47). `cell(col, row)`
//! is zero-based on rows; columns are spreadsheet letters or numbers.
//! `qkey(a, b)` forms the same qualified `a - b` labels direct synthesis
//! uses. Arithmetic (`+`, `-`) works on numbers, so loop-relative references
//! like `cell(A, r - 1)` are expressible. Execution is bounded: a step
//! budget caps total work and every cell reference is bounds-checked, so a
//! hallucinated range fails with a precise error instead of building
//! garbage.

use thiserror::Error;

use crate::grid::{CellAddress, Grid};
use crate::lex::{Lexed, Tok, lex};
use crate::tree::{LeafValue, SemanticTree, TreeBuilder, qualified_key};

/// Total statement executions (loop iterations included) one program may
/// spend. Generous for any real table — a million leaves is far past what
/// downstream phases can use — while bounding a runaway nested loop.
const MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("parse error at byte {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("unbound variable `{name}`")]
    UnboundVar { name: String },
    #[error("arithmetic needs numbers, got {got}")]
    Arithmetic { got: String },
    #[error("loop range bounds must be numbers, got {got}")]
    RangeBound { got: String },
    #[error("cell reference (column {col}, row {row}) is outside the {rows}x{cols} grid")]
    OutOfGrid { col: i64, row: i64, rows: usize, cols: usize },
    #[error("loop from {lo} to {hi} alone exceeds the {MAX_STEPS}-step execution budget")]
    LoopTooLong { lo: i64, hi: i64 },
    #[error("program exceeded the {MAX_STEPS}-step execution budget")]
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Str(String),
    Int(i64),
    /// Loop variable, or — when unbound and all-uppercase — column letters.
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Cell(Box<Expr>, Box<Expr>),
    QKey(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Stmt {
    Insert { path: Vec<Expr>, value: Expr },
    For { var: String, lo: Expr, hi: Expr, body: Vec<Stmt> },
}

/// A parsed construction program, ready to run against a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionProgram {
    stmts: Vec<Stmt>,
}

pub fn parse_construction(src: &str) -> Result<ConstructionProgram, ProgramError> {
    let toks = lex(src).map_err(|e| ProgramError::Parse { pos: e.pos, message: e.message })?;
    let mut parser = Parser { toks, i: 0, end: src.len() };
    let mut stmts = Vec::new();
    while parser.peek().is_some() {
        stmts.push(parser.stmt()?);
    }
    if stmts.is_empty() {
        return Err(ProgramError::Parse { pos: 0, message: "empty program".to_string() });
    }
    Ok(ConstructionProgram { stmts })
}

struct Parser {
    toks: Vec<Lexed>,
    i: usize,
    /// Source length, reported as the position of end-of-input errors.
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|l| &l.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.i).map_or(self.end, |l| l.pos)
    }

    fn next(&mut self) -> Option<Lexed> {
        let t = self.toks.get(self.i).cloned();
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ProgramError> {
        Err(ProgramError::Parse { pos: self.pos(), message: message.into() })
    }

    fn expect(&mut self, want: &Tok, context: &str) -> Result<(), ProgramError> {
        match self.peek() {
            Some(t) if t == want => {
                self.i += 1;
                Ok(())
            }
            Some(t) => {
                let t = t.clone();
                self.err(format!("expected {want} {context}, found {t}"))
            }
            None => self.err(format!("expected {want} {context}, found end of input")),
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ProgramError> {
        match self.peek() {
            Some(Tok::Ident(name)) if name == "insert" => self.insert_stmt(),
            Some(Tok::Ident(name)) if name == "for" => self.for_stmt(),
            Some(t) => {
                let t = t.clone();
                self.err(format!("expected `insert` or `for`, found {t}"))
            }
            None => self.err("expected a statement, found end of input"),
        }
    }

    fn insert_stmt(&mut self) -> Result<Stmt, ProgramError> {
        self.i += 1; // insert
        self.expect(&Tok::LParen, "after `insert`")?;
        self.expect(&Tok::LBracket, "to open the key list")?;
        if self.peek() == Some(&Tok::RBracket) {
            return self.err("insert needs at least one key");
        }
        let mut path = vec![self.expr()?];
        while self.peek() == Some(&Tok::Comma) {
            self.i += 1;
            path.push(self.expr()?);
        }
        self.expect(&Tok::RBracket, "to close the key list")?;
        self.expect(&Tok::Comma, "between the key list and the value")?;
        let value = self.expr()?;
        self.expect(&Tok::RParen, "to close `insert`")?;
        Ok(Stmt::Insert { path, value })
    }

    fn for_stmt(&mut self) -> Result<Stmt, ProgramError> {
        self.i += 1; // for
        let var = match self.next() {
            Some(Lexed { tok: Tok::Ident(name), .. }) => name,
            _ => return self.err("expected a loop variable after `for`"),
        };
        match self.next() {
            Some(Lexed { tok: Tok::Ident(kw), .. }) if kw == "in" => {}
            _ => return self.err("expected `in` after the loop variable"),
        }
        let lo = self.expr()?;
        self.expect(&Tok::DotDot, "in the loop range")?;
        let hi = self.expr()?;
        self.expect(&Tok::LBrace, "to open the loop body")?;
        let mut body = Vec::new();
        while self.peek() != Some(&Tok::RBrace) {
            if self.peek().is_none() {
                return self.err("unterminated loop body (missing `}`)");
            }
            body.push(self.stmt()?);
        }
        self.i += 1; // }
        Ok(Stmt::For { var, lo, hi, body })
    }

    fn expr(&mut self) -> Result<Expr, ProgramError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => Tok::Plus,
                Some(Tok::Minus) => Tok::Minus,
                _ => break,
            };
            self.i += 1;
            let right = self.term()?;
            left = match op {
                Tok::Plus => Expr::Add(Box::new(left), Box::new(right)),
                _ => Expr::Sub(Box::new(left), Box::new(right)),
            };
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, ProgramError> {
        match self.peek().cloned() {
            Some(Tok::Str(s)) => {
                self.i += 1;
                Ok(Expr::Str(s))
            }
            Some(Tok::Num(n)) => {
                self.i += 1;
                self.integer(n)
            }
            Some(Tok::Minus) => {
                self.i += 1;
                match self.next() {
                    Some(Lexed { tok: Tok::Num(n), .. }) => Ok(match self.integer(n)? {
                        Expr::Int(i) => Expr::Int(-i),
                        other => other,
                    }),
                    _ => self.err("expected a number after unary `-`"),
                }
            }
            Some(Tok::LParen) => {
                self.i += 1;
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "to close the group")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) if name == "cell" || name == "qkey" => {
                self.i += 1;
                self.expect(&Tok::LParen, &format!("after `{name}`"))?;
                let a = self.expr()?;
                self.expect(&Tok::Comma, &format!("between `{name}` arguments"))?;
                let b = self.expr()?;
                self.expect(&Tok::RParen, &format!("to close `{name}`"))?;
                Ok(if name == "cell" {
                    Expr::Cell(Box::new(a), Box::new(b))
                } else {
                    Expr::QKey(Box::new(a), Box::new(b))
                })
            }
            Some(Tok::Ident(name)) => {
                self.i += 1;
                Ok(Expr::Var(name))
            }
            Some(t) => self.err(format!("expected an expression, found {t}")),
            None => self.err("expected an expression, found end of input"),
        }
    }

    fn integer(&self, n: f64) -> Result<Expr, ProgramError> {
        if n.fract() != 0.0 || n.abs() >= i64::MAX as f64 {
            return Err(ProgramError::Parse {
                pos: self.pos(),
                message: format!("number {n} is not a usable integer"),
            });
        }
        Ok(Expr::Int(n as i64))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Int(i64),
    Text(String),
}

impl Val {
    fn render(&self) -> String {
        match self {
            Val::Int(i) => i.to_string(),
            Val::Text(s) => s.clone(),
        }
    }

    fn describe(&self) -> String {
        match self {
            Val::Int(i) => format!("number {i}"),
            Val::Text(s) => format!("text `{s}`"),
        }
    }
}

/// Runs `program` against `grid`, returning the built tree plus any builder
/// warnings (duplicate paths, leaf/node conflicts).
pub fn run_construction(
    program: &ConstructionProgram,
    grid: &Grid,
) -> Result<(SemanticTree, Vec<String>), ProgramError> {
    let mut runner = Runner { grid, env: Vec::new(), builder: TreeBuilder::new(), steps: 0 };
    for stmt in &program.stmts {
        runner.exec(stmt)?;
    }
    Ok(runner.builder.finish())
}

struct Runner<'g> {
    grid: &'g Grid,
    /// Loop bindings, innermost last. Programs nest a handful deep at most,
    /// so a scan beats a map.
    env: Vec<(String, i64)>,
    builder: TreeBuilder,
    steps: u64,
}

impl Runner<'_> {
    fn tick(&mut self) -> Result<(), ProgramError> {
        self.steps += 1;
        if self.steps > MAX_STEPS {
            return Err(ProgramError::BudgetExhausted);
        }
        Ok(())
    }

    fn exec(&mut self, stmt: &Stmt) -> Result<(), ProgramError> {
        self.tick()?;
        match stmt {
            Stmt::Insert { path, value } => {
                let labels: Vec<String> =
                    path.iter().map(|e| Ok(self.eval(e)?.render())).collect::<Result<_, _>>()?;
                let leaf = match self.eval(value)? {
                    Val::Int(i) => LeafValue::Number(i.into()),
                    Val::Text(s) => LeafValue::Text(s),
                };
                self.builder.insert(&labels, leaf);
                Ok(())
            }
            Stmt::For { var, lo, hi, body } => {
                let lo = self.int_of(lo, "loop range")?;
                let hi = self.int_of(hi, "loop range")?;
                if hi > lo && (hi - lo) as u64 > MAX_STEPS {
                    return Err(ProgramError::LoopTooLong { lo, hi });
                }
                for i in lo..hi {
                    self.env.push((var.clone(), i));
                    let result: Result<(), ProgramError> =
                        body.iter().try_for_each(|s| self.exec(s));
                    self.env.pop();
                    result?;
                }
                Ok(())
            }
        }
    }

    fn int_of(&mut self, expr: &Expr, context: &str) -> Result<i64, ProgramError> {
        match self.eval(expr)? {
            Val::Int(i) => Ok(i),
            other if context == "loop range" => {
                Err(ProgramError::RangeBound { got: other.describe() })
            }
            other => Err(ProgramError::Arithmetic { got: other.describe() }),
        }
    }

    fn eval(&mut self, expr: &Expr) -> Result<Val, ProgramError> {
        Ok(match expr {
            Expr::Str(s) => Val::Text(s.clone()),
            Expr::Int(i) => Val::Int(*i),
            Expr::Var(name) => Val::Int(self.resolve(name)?),
            Expr::Add(a, b) => {
                Val::Int(self.int_of(a, "arithmetic")? + self.int_of(b, "arithmetic")?)
            }
            Expr::Sub(a, b) => {
                Val::Int(self.int_of(a, "arithmetic")? - self.int_of(b, "arithmetic")?)
            }
            Expr::Cell(col, row) => {
                let col = self.int_of(col, "arithmetic")?;
                let row = self.int_of(row, "arithmetic")?;
                let (rows, cols) = (self.grid.rows(), self.grid.cols());
                if row < 0 || col < 0 || row as usize >= rows || col as usize >= cols {
                    return Err(ProgramError::OutOfGrid { col, row, rows, cols });
                }
                let text = self
                    .grid
                    .get(CellAddress::new(row as usize, col as usize))
                    .expect("bounds were checked");
                Val::Text(text.to_string())
            }
            Expr::QKey(a, b) => {
                let upper = self.eval(a)?.render();
                let lower = self.eval(b)?.render();
                Val::Text(qualified_key(&upper, &lower))
            }
        })
    }

    /// A name is the innermost loop binding if one matches; otherwise
    /// uppercase letters read as a spreadsheet column. Bindings win, so a
    /// loop variable named `A` shadows column A.
    fn resolve(&self, name: &str) -> Result<i64, ProgramError> {
        if let Some((_, v)) = self.env.iter().rev().find(|(n, _)| n == name) {
            return Ok(*v);
        }
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_uppercase()) {
            let index = name
                .chars()
                .fold(0i64, |acc, c| acc * 26 + (c as i64 - 'A' as i64 + 1));
            return Ok(index - 1);
        }
        Err(ProgramError::UnboundVar { name: name.to_string() })
    }
}
