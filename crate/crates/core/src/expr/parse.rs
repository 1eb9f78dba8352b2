//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-"? power
//! power  := atom ("^" integer)?
//! atom   := number | name | "(" expr ")" | func "(" expr ")"
//! func   := sin | cos | exp | log
//! ```
//!
//! `^` binds tighter than unary minus, so `-u^2` is `-(u^2)`. A minus sign
//! written directly before a numeric literal (and not followed by `^`)
//! produces a negative constant.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use super::{Expr, Func};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(u32),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next_token(&mut self) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            let mut end = self.pos;
            let mut is_int = true;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
            if end < bytes.len() && bytes[end] == b'.' {
                is_int = false;
                end += 1;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut e = end + 1;
                if e < bytes.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                    e += 1;
                }
                if e < bytes.len() && bytes[e].is_ascii_digit() {
                    is_int = false;
                    end = e;
                    while end < bytes.len() && bytes[end].is_ascii_digit() {
                        end += 1;
                    }
                }
            }
            let text = &self.src[start..end];
            self.pos = end;
            let value: f64 =
                text.parse().map_err(|_| Error::Syntax { pos: start, msg: format!("malformed number `{text}`") })?;
            if is_int {
                if let Ok(i) = text.parse::<u32>() {
                    return Ok((Tok::Int(i), start));
                }
            }
            return Ok((Tok::Num(value), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = self.pos + 1;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Name(self.src[start..end].to_string()), start));
        }
        Err(Error::Syntax { pos: start, msg: format!("unexpected character `{}`", c as char) })
    }
}

pub(super) struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    tok_pos: usize,
    peeked: Option<(Tok, usize)>,
    vars: &'a [&'a str],
    params: Option<&'a BTreeMap<String, f64>>,
}

impl<'a> Parser<'a> {
    pub(super) fn new(src: &'a str, vars: &'a [&'a str], params: Option<&'a BTreeMap<String, f64>>) -> Result<Self> {
        let mut lexer = Lexer { src, pos: 0 };
        let (tok, tok_pos) = lexer.next_token()?;
        Ok(Parser { lexer, tok, tok_pos, peeked: None, vars, params })
    }

    fn bump(&mut self) -> Result<()> {
        let (t, p) = match self.peeked.take() {
            Some(tp) => tp,
            None => self.lexer.next_token()?,
        };
        self.tok = t;
        self.tok_pos = p;
        Ok(())
    }

    fn peek(&mut self) -> Result<&Tok> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next_token()?);
        }
        Ok(&self.peeked.as_ref().expect("peeked").0)
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { pos: self.tok_pos, msg: msg.into() })
    }

    pub(super) fn parse_all(mut self) -> Result<Expr> {
        let e = self.expr()?;
        if self.tok != Tok::End {
            return self.syntax("unexpected trailing input");
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Plus => {
                    self.bump()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Star => {
                    self.bump()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.tok != Tok::Minus {
            return self.power();
        }
        self.bump()?;
        let literal = match self.tok {
            Tok::Num(v) => Some(v),
            Tok::Int(i) => Some(i as f64),
            _ => None,
        };
        if let Some(v) = literal {
            if *self.peek()? != Tok::Caret {
                self.bump()?;
                return Ok(Expr::Const(-v));
            }
        }
        if self.tok == Tok::Minus {
            return self.syntax("repeated unary minus");
        }
        Ok(Expr::Neg(Box::new(self.power()?)))
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.tok != Tok::Caret {
            return Ok(base);
        }
        self.bump()?;
        let Tok::Int(k) = self.tok else {
            return self.syntax("exponent must be a non-negative integer literal");
        };
        let k = i32::try_from(k).or_else(|_| self.syntax("exponent too large"))?;
        self.bump()?;
        if self.tok == Tok::Caret {
            return self.syntax("chained exponents need parentheses");
        }
        Ok(Expr::Pow(Box::new(base), k))
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Const(v))
            }
            Tok::Int(i) => {
                self.bump()?;
                Ok(Expr::Const(i as f64))
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.expr()?;
                if self.tok != Tok::RParen {
                    return self.syntax("expected `)`");
                }
                self.bump()?;
                Ok(e)
            }
            Tok::Name(name) => {
                let pos = self.tok_pos;
                self.bump()?;
                if let Some(func) = Func::from_name(&name) {
                    if self.tok != Tok::LParen {
                        return self.syntax(format!("`{name}` must be followed by `(`"));
                    }
                    self.bump()?;
                    let arg = self.expr()?;
                    if self.tok != Tok::RParen {
                        return self.syntax("expected `)` after function argument");
                    }
                    self.bump()?;
                    return Ok(Expr::Func(func, Box::new(arg)));
                }
                if self.vars.contains(&name.as_str()) {
                    return Ok(Expr::Var(name));
                }
                if let Some(v) = self.params.and_then(|p| p.get(&name)) {
                    return Ok(Expr::Const(*v));
                }
                Err(Error::UndeclaredVariable { name, pos })
            }
            Tok::End => self.syntax("unexpected end of input"),
            other => self.syntax(format!("unexpected token {other:?}")),
        }
    }
}
