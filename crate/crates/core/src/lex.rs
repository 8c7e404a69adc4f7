//! Shared tokenizer for the two small DSLs (tree queries and bulk table
//! construction programs). Both grammars are parsed by hand on top of this
//! token stream; positions are byte offsets into the source for error
//! reporting.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    DotDot,
    Plus,
    Minus,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Num(n) => write!(f, "number {n}"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::DotDot => f.write_str("`..`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexed {
    pub tok: Tok,
    pub pos: usize,
}

#[derive(Debug, Clone)]
pub struct LexError {
    pub pos: usize,
    pub message: String,
}

/// Tokenizes `src`. `#` starts a comment running to end of line. String
/// literals are double-quoted with `\"` and `\\` escapes. Numbers are
/// unsigned decimal (sign handling belongs to the parsers, and `2..5` lexes
/// as number, `..`, number).
pub fn lex(src: &str) -> Result<Vec<Lexed>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => { out.push(Lexed { tok: Tok::LParen, pos: i }); i += 1; }
            b')' => { out.push(Lexed { tok: Tok::RParen, pos: i }); i += 1; }
            b'[' => { out.push(Lexed { tok: Tok::LBracket, pos: i }); i += 1; }
            b']' => { out.push(Lexed { tok: Tok::RBracket, pos: i }); i += 1; }
            b'{' => { out.push(Lexed { tok: Tok::LBrace, pos: i }); i += 1; }
            b'}' => { out.push(Lexed { tok: Tok::RBrace, pos: i }); i += 1; }
            b',' => { out.push(Lexed { tok: Tok::Comma, pos: i }); i += 1; }
            b':' => { out.push(Lexed { tok: Tok::Colon, pos: i }); i += 1; }
            b'+' => { out.push(Lexed { tok: Tok::Plus, pos: i }); i += 1; }
            b'-' => { out.push(Lexed { tok: Tok::Minus, pos: i }); i += 1; }
            b'.' => {
                if bytes.get(i + 1) == Some(&b'.') {
                    out.push(Lexed { tok: Tok::DotDot, pos: i });
                    i += 2;
                } else {
                    return Err(LexError { pos: i, message: "stray `.`".into() });
                }
            }
            b'"' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                loop {
                    match bytes.get(i) {
                        None => {
                            return Err(LexError {
                                pos: start,
                                message: "unterminated string literal".into(),
                            })
                        }
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(b'\\') => {
                            match bytes.get(i + 1) {
                                Some(b'"') => s.push('"'),
                                Some(b'\\') => s.push('\\'),
                                _ => {
                                    return Err(LexError {
                                        pos: i,
                                        message: "unsupported escape".into(),
                                    })
                                }
                            }
                            i += 2;
                        }
                        Some(_) => {
                            // Step over one UTF-8 scalar, not one byte.
                            let rest = &src[i..];
                            let ch = rest.chars().next().unwrap();
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push(Lexed { tok: Tok::Str(s), pos: start });
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                // A decimal point only if it is not the `..` range operator.
                if i < bytes.len()
                    && bytes[i] == b'.'
                    && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())
                {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| LexError {
                    pos: start,
                    message: format!("bad number `{text}`"),
                })?;
                out.push(Lexed { tok: Tok::Num(value), pos: start });
            }
            _ => {
                let rest = &src[i..];
                let ch = rest.chars().next().unwrap();
                if ch.is_alphabetic() || ch == '_' {
                    let start = i;
                    for c in rest.chars() {
                        if c.is_alphanumeric() || c == '_' {
                            i += c.len_utf8();
                        } else {
                            break;
                        }
                    }
                    out.push(Lexed { tok: Tok::Ident(src[start..i].to_string()), pos: start });
                } else {
                    return Err(LexError {
                        pos: i,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            }
        }
    }
    Ok(out)
}
