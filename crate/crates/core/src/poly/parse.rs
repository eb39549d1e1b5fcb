//! Recursive-descent parser for polynomial expressions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' integer)?
//! atom   := number | identifier | '(' expr ')'
//! ```
//!
//! Numbers are decimal literals with an optional exponent. Juxtaposition
//! (`2x`, `x y`) is rejected rather than read as a product.

use alloc::format;
use alloc::string::{String, ToString};

use super::{Context, PolyError, Polynomial};

pub fn parse_polynomial(text: &str, ctx: &Context) -> Result<Polynomial, PolyError> {
    let mut parser = Parser { src: text, pos: 0, ctx };
    let p = parser.expr()?;
    parser.skip_ws();
    if parser.pos < text.len() {
        return Err(parser.unexpected());
    }
    Ok(p)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    ctx: &'a Context,
}

impl Parser<'_> {
    fn err(&self, position: usize, message: impl Into<String>) -> PolyError {
        PolyError::Syntax { position, message: message.into() }
    }

    fn unexpected(&self) -> PolyError {
        match self.peek() {
            Some(c) if starts_operand(c) => {
                self.err(self.pos, "implicit multiplication is not allowed; use `*`")
            }
            Some(c) => self.err(self.pos, format!("unexpected character `{c}`")),
            None => self.err(self.pos, "unexpected end of input"),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = acc.add(&rhs)?;
                }
                Some('-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    acc = acc.sub(&rhs)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    acc = acc.mul(&rhs)?;
                }
                Some(c) if starts_operand(c) => return Err(self.unexpected()),
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        self.skip_ws();
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(start, "expected a non-negative integer exponent"));
        }
        if matches!(self.peek(), Some('.') | Some('e') | Some('E')) {
            return Err(self.err(start, "exponent must be a non-negative integer"));
        }
        let k: u32 = self.src[start..self.pos]
            .parse()
            .map_err(|_| self.err(start, "exponent out of range"))?;
        Ok(base.pow(k))
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.err(self.pos, "expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let value = self.number()?;
                Ok(Polynomial::constant(self.ctx, value))
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                Polynomial::var(self.ctx, name).map_err(|_| PolyError::UnknownVariable(name.to_string()))
            }
            Some(c) => Err(self.err(start, format!("unexpected character `{c}`"))),
            None => Err(self.err(start, "unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<f64, PolyError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while matches!(p.peek(), Some(c) if c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.peek() == Some('.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(self.err(start, "malformed number"));
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.err(save, "malformed exponent in number"));
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map_err(|_| self.err(start, "malformed number"))
    }
}

fn starts_operand(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '(' || c == '.'
}
