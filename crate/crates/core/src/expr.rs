//! Coefficient expressions: a small recursive-descent parser, a printer and
//! an evaluator generic over the scalar type.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?            -- right-associative
//! atom    := number | ident | ident '(' sum (',' sum)* ')' | '(' sum ')'
//! ```
//!
//! so `^` binds tighter than unary minus: `-x1^2` is `-(x1^2)`.

use std::fmt;

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Spatial coordinate, zero-based (`x1` is `X(0)`).
    X(usize),
    T,
    /// State component, zero-based (`z1` is `Z(0)`).
    Z(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Which identifiers an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub n: usize,
    pub time: bool,
    pub k: usize,
}

impl Scope {
    pub fn new(n: usize, time: bool, k: usize) -> Self {
        Self { n, time, k }
    }

    fn resolve(&self, name: &str) -> Option<Var> {
        if name == "t" {
            return self.time.then_some(Var::T);
        }
        let (head, digits) = name.split_at(1);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
            return None;
        }
        let i: usize = digits.parse().ok()?;
        match head {
            "x" if i <= self.n => Some(Var::X(i - 1)),
            "z" if i <= self.k => Some(Var::Z(i - 1)),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax { offset: usize, expected: Vec<&'static str>, found: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero in `{0}`")]
    DivisionByZero(String),
    #[error("domain error in `{0}`")]
    Domain(String),
    #[error("variable {0:?} not supplied")]
    MissingVariable(Var),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(x) => format!("number {x}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            match text.parse::<f64>() {
                Ok(x) if x.is_finite() => out.push((Tok::Num(x), start)),
                _ => {
                    return Err(ParseError::Syntax { offset: start, expected: vec!["finite number"], found: format!("`{text}`") })
                }
            }
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if b"+-*/^(),".contains(&c) {
            out.push((Tok::Op(c as char), i));
            i += 1;
        } else {
            let ch = src[i..].chars().next().expect("in bounds");
            return Err(ParseError::Syntax { offset: i, expected: vec!["expression"], found: format!("`{ch}`") });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    scope: &'a Scope,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn error(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Syntax { offset: self.offset(), expected, found: self.peek().describe() }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Op(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(x) => {
                self.pos += 1;
                Ok(Expr::Num(x))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.sum()?;
                if !self.eat(')') {
                    return Err(self.error(vec!["`)`", "operator"]));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if let Some(f) = Func::from_name(&name) {
                    if !self.eat('(') {
                        return Err(self.error(vec!["`(`"]));
                    }
                    let mut args = vec![self.sum()?];
                    while self.eat(',') {
                        args.push(self.sum()?);
                    }
                    if args.len() != f.arity() {
                        return Err(ParseError::Syntax {
                            offset,
                            expected: vec![if f.arity() == 1 { "one argument" } else { "two arguments" }],
                            found: format!("{} arguments to {}", args.len(), f.name()),
                        });
                    }
                    if !self.eat(')') {
                        return Err(self.error(vec!["`)`", "`,`", "operator"]));
                    }
                    return Ok(Expr::Call(f, args));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                self.scope
                    .resolve(&name)
                    .map(Expr::Var)
                    .ok_or(ParseError::UnknownIdentifier { name, offset })
            }
            _ => Err(self.error(vec!["number", "identifier", "`(`", "`-`"])),
        }
    }
}

/// Parses `src` against the identifiers allowed by `scope`.
pub fn parse_expression(src: &str, scope: &Scope) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: tokenize(src)?, pos: 0, scope };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        return Err(p.error(vec!["operator", "end of input"]));
    }
    Ok(e)
}

/// Variable values for evaluation. Missing slices are an error only if the
/// expression references them.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a, T> {
    pub x: &'a [T],
    pub t: Option<T>,
    pub z: &'a [T],
}

impl<'a, T: Real> Env<'a, T> {
    pub fn new(x: &'a [T], t: T, z: &'a [T]) -> Self {
        Self { x, t: Some(t), z }
    }
}

impl Expr {
    pub fn eval<T: Real>(&self, env: &Env<'_, T>) -> Result<T, EvalError> {
        match self {
            Expr::Num(x) => Ok(T::lit(*x)),
            Expr::Var(v) => match *v {
                Var::X(i) => env.x.get(i).copied(),
                Var::T => env.t,
                Var::Z(i) => env.z.get(i).copied(),
            }
            .ok_or(EvalError::MissingVariable(*v)),
            Expr::Neg(a) => Ok(-a.eval(env)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                let r = match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == T::zero() {
                            return Err(EvalError::DivisionByZero(self.to_string()));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        if x == T::zero() && y < T::zero() {
                            return Err(EvalError::DivisionByZero(self.to_string()));
                        }
                        if y == y.round() && y.abs() <= T::lit(64.0) {
                            x.powi(y.to_i32().expect("small integer exponent"))
                        } else {
                            x.powf(y)
                        }
                    }
                };
                if r.is_nan() && !x.is_nan() && !y.is_nan() {
                    return Err(EvalError::Domain(self.to_string()));
                }
                Ok(r)
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(env)?;
                Ok(match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(env)?),
                    Func::Max => a.max(args[1].eval(env)?),
                })
            }
        }
    }

    /// Value of a variable-free expression.
    pub fn constant(&self) -> Option<f64> {
        let env = Env::<f64> { x: &[], t: None, z: &[] };
        self.eval(&env).ok()
    }

    /// Replaces every variable-free subtree by its value.
    pub fn folded(&self) -> Expr {
        if let Some(c) = self.constant().filter(|c| c.is_finite()) {
            return Expr::Num(c);
        }
        match self {
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.folded())),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.folded()), Box::new(b.folded())),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(Expr::folded).collect()),
        }
    }

    pub fn depends_on_state(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => matches!(v, Var::Z(_)),
            Expr::Neg(a) => a.depends_on_state(),
            Expr::Bin(_, a, b) => a.depends_on_state() || b.depends_on_state(),
            Expr::Call(_, args) => args.iter().any(Expr::depends_on_state),
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesised, so printing then re-parsing reproduces the tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::Z(i)) => write!(f, "z{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let c = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                    BinOp::Pow => '^',
                };
                write!(f, "({a} {c} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
