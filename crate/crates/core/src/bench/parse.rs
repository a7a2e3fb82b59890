//! Infix expression parser for ground-truth formulas and printed solutions.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers (with exponent),
//! feature names and the calls `sin cos log sqrt exp`. `/`, `log` and `sqrt`
//! evaluate with the same protection as the search.

use crate::error::{Error, Result};
use crate::evaluator::{protected_div, protected_log, protected_sqrt};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Call {
    Sin,
    Cos,
    Log,
    Sqrt,
    Exp,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Call, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, row: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(j) => row[*j],
            Expr::Neg(e) => -e.eval(row),
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(row), r.eval(row));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => protected_div(a, b),
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let x = e.eval(row);
                match f {
                    Call::Sin => x.sin(),
                    Call::Cos => x.cos(),
                    Call::Log => protected_log(x),
                    Call::Sqrt => protected_sqrt(x),
                    Call::Exp => x.exp(),
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.node_count(),
            Expr::Bin(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Largest feature index used, if any.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(j) => Some(*j),
            Expr::Neg(e) | Expr::Call(_, e) => e.max_feature(),
            Expr::Bin(_, l, r) => l.max_feature().max(r.max_feature()),
        }
    }

    fn is_const(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.is_const(),
            Expr::Bin(_, l, r) => l.is_const() && r.is_const(),
        }
    }

    /// Peels outer layers that only shift or scale the value by a constant
    /// (`c + e`, `e - c`, `c * e`, `e / c`, `-e`, ...), which linear scaling
    /// makes redundant.
    pub fn strip_affine(&self) -> &Expr {
        match self {
            Expr::Neg(e) => e.strip_affine(),
            Expr::Bin(BinOp::Add | BinOp::Sub | BinOp::Mul, l, r) if l.is_const() && !r.is_const() => r.strip_affine(),
            Expr::Bin(BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div, l, r) if r.is_const() && !l.is_const() => {
                l.strip_affine()
            }
            _ => self,
        }
    }
}

/// Resolves identifiers to feature indices: a name from `names`, or `xN`
/// (1-based) for any N.
fn feature_index(name: &str, names: &[String]) -> Option<usize> {
    if let Some(j) = names.iter().position(|n| n == name) {
        return Some(j);
    }
    let digits = name.strip_prefix('x')?;
    match digits.parse::<usize>() {
        Ok(k) if k >= 1 && !digits.starts_with('+') => Some(k - 1),
        _ => None,
    }
}

/// Parses `input`, resolving identifiers against `feature_names`.
pub fn parse_expression(input: &str, feature_names: &[String]) -> Result<Expr> {
    let mut p = Parser {
        input,
        bytes: input.as_bytes(),
        pos: 0,
        names: feature_names,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse {
            input: self.input.to_string(),
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(match self.unary()? {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.bytes.len() && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let mut look = self.pos + 1;
            if look < self.bytes.len() && matches!(self.bytes[look], b'+' | b'-') {
                look += 1;
            }
            if look < self.bytes.len() && self.bytes[look].is_ascii_digit() {
                self.pos = look;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = &self.input[start..self.pos];
        text.parse::<f64>().map(Expr::Const).map_err(|_| {
            self.pos = start;
            self.error("malformed number")
        })
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.bytes.len() && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = &self.input[start..self.pos];
        let call = match name {
            "sin" => Some(Call::Sin),
            "cos" => Some(Call::Cos),
            "log" | "ln" => Some(Call::Log),
            "sqrt" => Some(Call::Sqrt),
            "exp" => Some(Call::Exp),
            _ => None,
        };
        if let Some(call) = call {
            if self.eat(b'(') {
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)` after call argument"));
                }
                return Ok(Expr::Call(call, Box::new(arg)));
            }
        }
        match name {
            "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
            "e" => return Ok(Expr::Const(std::f64::consts::E)),
            _ => {}
        }
        feature_index(name, self.names).map(Expr::Var).ok_or_else(|| {
            self.pos = start;
            self.error(&format!("unknown identifier `{name}`"))
        })
    }
}
