//! Formulas for boundary data and manufactured solutions.
//!
//! Grammar, from loosest to tightest binding:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          (right-associative)
//! primary := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var     := 'x' | 'y' | 'r' | 't'
//! func    := 'sin' | 'cos' | 'exp' | 'sqrt' | 'abs' | 'tanh'
//! ```
//!
//! So `-2^2` is `-4`, `2^3^2` is `512` and `2^-1` is `0.5`. Evaluation never
//! returns NaN or an infinity: those cases are [`Error::Domain`] values that
//! carry the byte offset of the offending node.

use alloc::boxed::Box;
use alloc::string::ToString;
use core::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    /// Distance to the domain center.
    R,
    /// Polar angle about the domain center.
    T,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::R => "r",
            Var::T => "t",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// A parsed formula. Equality compares tree structure and ignores source offsets.
#[derive(Debug, Clone)]
pub struct Expr {
    node: Node,
    offset: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (&self.node, &other.node) {
            (Node::Num(a), Node::Num(b)) => a.to_bits() == b.to_bits(),
            (Node::Pi, Node::Pi) => true,
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Binary(o1, l1, r1), Node::Binary(o2, l2, r2)) => o1 == o2 && l1 == l2 && r1 == r2,
            (Node::Call(f1, a1), Node::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

/// Values for the variables of an expression. Unset variables are unbound.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub r: Option<f64>,
    pub t: Option<f64>,
}

impl Bindings {
    pub fn x(x: f64) -> Self {
        Bindings { x: Some(x), ..Default::default() }
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Bindings { x: Some(x), y: Some(y), ..Default::default() }
    }

    /// Cartesian point plus polar coordinates about `center`.
    pub fn polar_about(p: [f64; 2], center: [f64; 2]) -> Self {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        Bindings {
            x: Some(p[0]),
            y: Some(p[1]),
            r: Some(libm::hypot(dx, dy)),
            t: Some(libm::atan2(dy, dx)),
        }
    }

    fn get(&self, v: Var) -> Option<f64> {
        match v {
            Var::X => self.x,
            Var::Y => self.y,
            Var::R => self.r,
            Var::T => self.t,
        }
    }
}

impl Expr {
    pub fn new(node: Node) -> Self {
        Expr { node, offset: 0 }
    }

    pub fn num(v: f64) -> Self {
        Expr::new(Node::Num(v))
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// Byte offset of this node in the source text (0 for built trees).
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Parses `text` with the grammar in the module docs.
    pub fn parse(text: &str) -> Result<Expr> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        p.skip_ws();
        if p.pos == p.src.len() {
            return Err(Error::Syntax { offset: p.pos, message: "empty expression".to_string() });
        }
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::Syntax { offset: p.pos, message: "unexpected trailing input".to_string() });
        }
        Ok(e)
    }

    pub fn eval(&self, at: &Bindings) -> Result<f64> {
        let v = match &self.node {
            Node::Num(v) => *v,
            Node::Pi => core::f64::consts::PI,
            Node::Var(var) => at
                .get(*var)
                .ok_or(Error::UnboundVariable { name: var.name(), offset: self.offset })?,
            Node::Neg(a) => -a.eval(at)?,
            Node::Binary(op, l, r) => {
                let a = l.eval(at)?;
                let b = r.eval(at)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => libm::pow(a, b),
                }
            }
            Node::Call(f, a) => {
                let a = a.eval(at)?;
                match f {
                    Func::Sin => libm::sin(a),
                    Func::Cos => libm::cos(a),
                    Func::Exp => libm::exp(a),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.domain("square root of a negative number"));
                        }
                        libm::sqrt(a)
                    }
                    Func::Abs => libm::fabs(a),
                    Func::Tanh => libm::tanh(a),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain("result is not a finite number"))
        }
    }

    /// True if the expression mentions `var`.
    pub fn uses(&self, var: Var) -> bool {
        match &self.node {
            Node::Var(v) => *v == var,
            Node::Num(_) | Node::Pi => false,
            Node::Neg(a) | Node::Call(_, a) => a.uses(var),
            Node::Binary(_, l, r) => l.uses(var) || r.uses(var),
        }
    }

    fn domain(&self, message: &'static str) -> Error {
        Error::Domain { offset: self.offset, message }
    }
}

impl core::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

/// Prints a fully parenthesized form that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Node::Pi => f.write_str("pi"),
            Node::Var(v) => f.write_str(v.name()),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, offset: usize, message: &str) -> Error {
        Error::Syntax { offset, message: message.to_string() }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            let at = self.pos;
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr { node: Node::Binary(op, Box::new(lhs), Box::new(rhs)), offset: at };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            let at = self.pos;
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr { node: Node::Binary(op, Box::new(lhs), Box::new(rhs)), offset: at };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            let at = self.pos;
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr { node: Node::Neg(Box::new(inner)), offset: at });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            let at = self.pos;
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr { node: Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)), offset: at });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let start = match self.peek() {
            None => return Err(self.syntax(self.pos, "unexpected end of input")),
            Some(_) => self.pos,
        };
        let c = self.src[start];
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.syntax(self.pos, "expected `)`"));
            }
            self.pos += 1;
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            // identifiers are ASCII by construction
            let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            let node = match name {
                "x" => Node::Var(Var::X),
                "y" => Node::Var(Var::Y),
                "r" => Node::Var(Var::R),
                "t" => Node::Var(Var::T),
                "pi" => Node::Pi,
                _ => match Func::from_name(name) {
                    Some(func) => {
                        if self.peek() != Some(b'(') {
                            return Err(self.syntax(self.pos, "expected `(` after function name"));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() != Some(b')') {
                            return Err(self.syntax(self.pos, "expected `)`"));
                        }
                        self.pos += 1;
                        Node::Call(func, Box::new(arg))
                    }
                    None => {
                        return Err(Error::UnknownIdentifier { name: name.to_string(), offset: start })
                    }
                },
            };
            return Ok(Expr { node, offset: start });
        }
        Err(self.syntax(start, "unexpected character"))
    }

    fn number(&mut self, start: usize) -> Result<Expr> {
        let s = self.src;
        let digits = |p: &mut usize| {
            let from = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - from
        };
        let mut p = start;
        let mut n = digits(&mut p);
        if p < s.len() && s[p] == b'.' {
            p += 1;
            n += digits(&mut p);
        }
        if n == 0 {
            return Err(self.syntax(start, "malformed number"));
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) == 0 {
                return Err(self.syntax(p, "malformed exponent"));
            }
            p = q;
        }
        let text = core::str::from_utf8(&s[start..p]).unwrap_or("");
        let v: f64 = text.parse().map_err(|_| self.syntax(start, "malformed number"))?;
        if !v.is_finite() {
            return Err(self.syntax(start, "number out of range"));
        }
        self.pos = p;
        Ok(Expr { node: Node::Num(v), offset: start })
    }
}
