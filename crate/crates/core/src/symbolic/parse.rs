//! Recursive-descent parser for the tree-query DSL.
//!
//! The grammar is one expression built from a closed primitive set; the only
//! bracketed form is `get`'s path literal. Everything else is `name(args)`.
//! Errors carry the byte offset of the offending token so repair prompts can
//! quote a precise location back to the model.

use super::{CmpOp, PredTest, Predicate, TreeExpr};
use crate::lex::{lex, Lexed, Tok};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("lex error at byte {pos}: {message}")]
    Lex { pos: usize, message: String },
    #[error("parse error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
}

/// Parses one program expression; trailing tokens are rejected.
pub fn parse_program(text: &str) -> Result<TreeExpr, ParseError> {
    let toks = lex(text).map_err(|e| ParseError::Lex { pos: e.pos, message: e.message })?;
    let mut p = Parser { toks, i: 0, end: text.len() };
    let expr = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(p.err_at(t.pos, format!("trailing input starting with {}", t.tok)));
    }
    Ok(expr)
}

struct Parser {
    toks: Vec<Lexed>,
    i: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Lexed> {
        self.toks.get(self.i)
    }

    fn next(&mut self) -> Option<Lexed> {
        let t = self.toks.get(self.i).cloned();
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn err_at(&self, pos: usize, message: impl Into<String>) -> ParseError {
        ParseError::Syntax { pos, message: message.into() }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t.tok == want => Ok(()),
            Some(t) => Err(self.err_at(t.pos, format!("expected {what}, found {}", t.tok))),
            None => Err(self.err_at(self.end, format!("expected {what}, found end of input"))),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, ParseError> {
        match self.next() {
            Some(Lexed { tok: Tok::Str(s), .. }) => Ok(s),
            Some(t) => Err(self.err_at(t.pos, format!("expected {what}, found {}", t.tok))),
            None => Err(self.err_at(self.end, format!("expected {what}, found end of input"))),
        }
    }

    /// Number with optional leading sign.
    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        let sign = match self.peek() {
            Some(Lexed { tok: Tok::Minus, .. }) => {
                self.next();
                -1.0
            }
            Some(Lexed { tok: Tok::Plus, .. }) => {
                self.next();
                1.0
            }
            _ => 1.0,
        };
        match self.next() {
            Some(Lexed { tok: Tok::Num(n), .. }) => Ok(sign * n),
            Some(t) => Err(self.err_at(t.pos, format!("expected {what}, found {}", t.tok))),
            None => Err(self.err_at(self.end, format!("expected {what}, found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<TreeExpr, ParseError> {
        match self.next() {
            Some(Lexed { tok: Tok::Ident(name), pos }) => self.call(&name, pos),
            Some(Lexed { tok: Tok::Num(n), .. }) => Ok(TreeExpr::NumberLit(n)),
            Some(Lexed { tok: Tok::Minus, .. }) => {
                let n = self.number("a number after `-`")?;
                Ok(TreeExpr::NumberLit(-n))
            }
            Some(Lexed { tok: Tok::Str(s), .. }) => Ok(TreeExpr::TextLit(s)),
            Some(t) => Err(self.err_at(t.pos, format!("expected an expression, found {}", t.tok))),
            None => Err(self.err_at(self.end, "expected an expression, found end of input")),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<TreeExpr, ParseError> {
        let unary: Option<fn(Box<TreeExpr>) -> TreeExpr> = match name {
            "keys" => Some(TreeExpr::Keys),
            "len" => Some(TreeExpr::Len),
            "values" => Some(TreeExpr::Values),
            "filter_nonnull" => Some(TreeExpr::FilterNonnull),
            "sum" => Some(TreeExpr::Sum),
            "mean" => Some(TreeExpr::Mean),
            "min" => Some(TreeExpr::Min),
            "max" => Some(TreeExpr::Max),
            _ => None,
        };
        if let Some(build) = unary {
            self.expect(Tok::LParen, "`(`")?;
            let inner = self.expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(build(Box::new(inner)));
        }
        match name {
            "get" => {
                self.expect(Tok::LParen, "`(`")?;
                let path = self.path_literal()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(TreeExpr::Get(path))
            }
            "count_where" => {
                self.expect(Tok::LParen, "`(`")?;
                let over = self.expr()?;
                self.expect(Tok::Comma, "`,` before the predicate")?;
                let pred = self.predicate()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(TreeExpr::CountWhere(Box::new(over), pred))
            }
            _ => Err(self.err_at(pos, format!("unknown primitive `{name}`"))),
        }
    }

    fn path_literal(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(Tok::LBracket, "`[` opening a path literal")?;
        let mut labels = Vec::new();
        if matches!(self.peek(), Some(Lexed { tok: Tok::RBracket, .. })) {
            self.next();
            return Ok(labels);
        }
        loop {
            labels.push(self.string("a quoted path label")?);
            match self.next() {
                Some(Lexed { tok: Tok::Comma, .. }) => continue,
                Some(Lexed { tok: Tok::RBracket, .. }) => return Ok(labels),
                Some(t) => {
                    return Err(self.err_at(t.pos, format!("expected `,` or `]`, found {}", t.tok)))
                }
                None => return Err(self.err_at(self.end, "unterminated path literal")),
            }
        }
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        let (name, pos) = match self.next() {
            Some(Lexed { tok: Tok::Ident(name), pos }) => (name, pos),
            Some(t) => {
                return Err(self.err_at(t.pos, format!("expected a predicate, found {}", t.tok)))
            }
            None => return Err(self.err_at(self.end, "expected a predicate, found end of input")),
        };
        let has_args = matches!(self.peek(), Some(Lexed { tok: Tok::LParen, .. }));
        match name.as_str() {
            "is_empty" | "is_nonempty" => {
                let test =
                    if name == "is_empty" { PredTest::IsEmpty } else { PredTest::IsNonempty };
                if !has_args {
                    return Ok(Predicate { field: None, test });
                }
                self.next();
                let field = self.string("a quoted field name")?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Predicate { field: Some(field), test })
            }
            "equals" => {
                self.expect(Tok::LParen, "`(`")?;
                let first = self.string("a quoted string")?;
                match self.next() {
                    Some(Lexed { tok: Tok::RParen, .. }) => {
                        Ok(Predicate { field: None, test: PredTest::EqualsText(first) })
                    }
                    Some(Lexed { tok: Tok::Comma, .. }) => {
                        let text = self.string("a quoted string")?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(Predicate { field: Some(first), test: PredTest::EqualsText(text) })
                    }
                    Some(t) => {
                        Err(self.err_at(t.pos, format!("expected `,` or `)`, found {}", t.tok)))
                    }
                    None => Err(self.err_at(self.end, "unterminated equals predicate")),
                }
            }
            "gt" | "ge" | "lt" | "le" | "eq" => {
                let op = match name.as_str() {
                    "gt" => CmpOp::Gt,
                    "ge" => CmpOp::Ge,
                    "lt" => CmpOp::Lt,
                    "le" => CmpOp::Le,
                    _ => CmpOp::Eq,
                };
                self.expect(Tok::LParen, "`(`")?;
                // Optional leading field: gt("Sales", 1000) vs gt(1000).
                let field = if matches!(self.peek(), Some(Lexed { tok: Tok::Str(_), .. })) {
                    let f = self.string("a quoted field name")?;
                    self.expect(Tok::Comma, "`,` after the field name")?;
                    Some(f)
                } else {
                    None
                };
                let n = self.number("a number")?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Predicate { field, test: PredTest::Cmp(op, n) })
            }
            _ => Err(self.err_at(pos, format!("unknown predicate `{name}`"))),
        }
    }
}
