//! Tokenizer and token cursor shared by the `.dsml` and `.dsproc` parsers.

use std::fmt;

use crate::diag::Pos;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Number(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Number(s) => write!(f, "number {s}"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

impl std::error::Error for SyntaxError {}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c)) && chars.all(is_ident_char)
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<(Tok, Pos)>, SyntaxError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut col) = (1u32, 1u32);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            c if c.is_whitespace() => {
                bump!();
            }
            '{' | '}' | '[' | ']' | ',' | ':' => {
                bump!();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    _ => Tok::Colon,
                };
                out.push((tok, pos));
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    out.push((Tok::Arrow, pos));
                } else {
                    return Err(SyntaxError { pos, message: "expected `->`".into() });
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        None | Some('\n') => return Err(SyntaxError { pos, message: "unterminated string".into() }),
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            other => {
                                return Err(SyntaxError {
                                    pos: Pos { line, col: col.saturating_sub(1) },
                                    message: format!("invalid escape {other:?}"),
                                })
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                if s.matches('.').count() > 1 || s.ends_with('.') {
                    return Err(SyntaxError { pos, message: format!("malformed number `{s}`") });
                }
                out.push((Tok::Number(s), pos));
            }
            c if is_ident_start(c) => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if is_ident_char(c) {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), pos));
            }
            other => {
                return Err(SyntaxError { pos, message: format!("unexpected character {other:?}") });
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

pub(crate) struct Cursor {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Cursor {
    pub fn new(src: &str) -> Result<Self, SyntaxError> {
        Ok(Self { toks: tokenize(src)?, at: 0 })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    pub fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { pos: self.pos(), message: message.into() })
    }

    pub fn unexpected<T>(&self, expected: &str) -> Result<T, SyntaxError> {
        self.error(format!("expected {expected}, found {}", self.peek()))
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: Tok) -> Result<Pos, SyntaxError> {
        if *self.peek() == tok {
            Ok(self.next().1)
        } else {
            self.unexpected(&tok.to_string())
        }
    }

    pub fn keyword(&mut self, kw: &str) -> Result<Pos, SyntaxError> {
        if self.is_keyword(kw) {
            Ok(self.next().1)
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    pub fn ident(&mut self) -> Result<(String, Pos), SyntaxError> {
        match self.peek() {
            Tok::Ident(_) => match self.next() {
                (Tok::Ident(s), p) => Ok((s, p)),
                _ => unreachable!(),
            },
            _ => self.unexpected("identifier"),
        }
    }

    pub fn string(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Str(_) => match self.next() {
                (Tok::Str(s), _) => Ok(s),
                _ => unreachable!(),
            },
            _ => self.unexpected("string"),
        }
    }

    pub fn number(&mut self) -> Result<(String, Pos), SyntaxError> {
        match self.peek() {
            Tok::Number(_) => match self.next() {
                (Tok::Number(s), p) => Ok((s, p)),
                _ => unreachable!(),
            },
            _ => self.unexpected("number"),
        }
    }

    /// `[ IDENT ("," IDENT)* ]`
    pub fn ident_list(&mut self) -> Result<Vec<(String, Pos)>, SyntaxError> {
        self.expect(Tok::LBracket)?;
        let mut items = vec![self.ident()?];
        while self.eat(&Tok::Comma) {
            items.push(self.ident()?);
        }
        self.expect(Tok::RBracket)?;
        Ok(items)
    }
}

/// Quote text for emission as a DSL string literal.
pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
