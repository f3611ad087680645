//! Lagrangian expressions `L(t, u1, ..., u{r+1})`.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" unary ] ;          (* right-associative *)
//! primary = number | "t" | "u" digits | func "(" expr ")" | "(" expr ")" ;
//! func    = "exp" | "ln" | "sin" | "cos" | "sqrt" ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//!         | "." digits [ exponent ] ;
//! ```
//!
//! `^` binds tighter than unary minus, so `-u2^2` is `-(u2^2)`.
//!
//! Argument positions follow the Lagrangian's signature: position 1 is `t`
//! and position `i + 1` is `u_i`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64> {
        match self {
            Func::Exp => Ok(x.exp()),
            Func::Ln if x <= 0.0 => Err(Error::EvalDomain(format!("ln({x})"))),
            Func::Ln => Ok(x.ln()),
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Sqrt if x < 0.0 => Err(Error::EvalDomain(format!("sqrt({x})"))),
            Func::Sqrt => Ok(x.sqrt()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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

/// Expression node. `Var(0)` is `t`, `Var(i)` for `i >= 1` is `u_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn t() -> Expr {
        Expr::Var(0)
    }

    pub fn u(i: usize) -> Expr {
        Expr::Var(i)
    }

    fn max_var(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => *i,
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var(),
            Expr::Bin(_, l, r) => l.max_var().max(r.max_var()),
        }
    }

    fn depends_on(&self, var: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Neg(e) | Expr::Call(_, e) => e.depends_on(var),
            Expr::Bin(_, l, r) => l.depends_on(var) || r.depends_on(var),
        }
    }

    fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    fn eval(&self, args: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => args[*i],
            Expr::Neg(e) => -e.eval(args)?,
            Expr::Call(f, e) => f.apply(e.eval(args)?)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(args)?;
                let b = r.eval(args)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::EvalDomain("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let p = a.powf(b);
                        if p.is_nan() {
                            return Err(Error::EvalDomain(format!("{a}^{b}")));
                        }
                        p
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::EvalDomain(format!(
                "non-finite intermediate in {self}"
            )))
        }
    }

    fn diff(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(i) => num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(e) => neg(e.diff(var)),
            Expr::Call(f, e) => {
                let inner = e.diff(var);
                if is_zero(&inner) {
                    return num(0.0);
                }
                let e = (**e).clone();
                let outer = match f {
                    Func::Exp => call(Func::Exp, e),
                    Func::Ln => div(num(1.0), e),
                    Func::Sin => call(Func::Cos, e),
                    Func::Cos => neg(call(Func::Sin, e)),
                    Func::Sqrt => div(num(0.5), call(Func::Sqrt, e)),
                };
                mul(outer, inner)
            }
            Expr::Bin(op, l, r) => {
                let (a, b) = ((**l).clone(), (**r).clone());
                match op {
                    BinOp::Add => add(l.diff(var), r.diff(var)),
                    BinOp::Sub => sub(l.diff(var), r.diff(var)),
                    BinOp::Mul => add(mul(l.diff(var), b), mul(a, r.diff(var))),
                    BinOp::Div => div(
                        sub(mul(l.diff(var), b.clone()), mul(a, r.diff(var))),
                        pow(b, num(2.0)),
                    ),
                    BinOp::Pow if !r.depends_on(var) => {
                        // d(a^c) = c a^(c-1) a'
                        let lowered = match b.as_num() {
                            Some(c) => num(c - 1.0),
                            None => sub(b.clone(), num(1.0)),
                        };
                        mul(mul(b, pow(a, lowered)), l.diff(var))
                    }
                    BinOp::Pow => {
                        // d(a^b) = a^b (b' ln a + b a'/a)
                        let whole = pow(a.clone(), b.clone());
                        let t1 = mul(r.diff(var), call(Func::Ln, a.clone()));
                        let t2 = div(mul(b, l.diff(var)), a);
                        mul(whole, add(t1, t2))
                    }
                }
            }
        }
    }
}

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn is_zero(e: &Expr) -> bool {
    e.as_num() == Some(0.0)
}

fn is_one(e: &Expr) -> bool {
    e.as_num() == Some(1.0)
}

/// Folds when the result is finite; otherwise keeps the node.
fn fold(op: BinOp, a: &Expr, b: &Expr) -> Option<Expr> {
    let (x, y) = (a.as_num()?, b.as_num()?);
    let v = match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div if y != 0.0 => x / y,
        BinOp::Pow => x.powf(y),
        BinOp::Div => return None,
    };
    v.is_finite().then_some(Expr::Num(v))
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Bin(op, Box::new(a), Box::new(b))
}

fn add(a: Expr, b: Expr) -> Expr {
    if let Some(v) = fold(BinOp::Add, &a, &b) {
        v
    } else if is_zero(&a) {
        b
    } else if is_zero(&b) {
        a
    } else {
        bin(BinOp::Add, a, b)
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if let Some(v) = fold(BinOp::Sub, &a, &b) {
        v
    } else if is_zero(&b) {
        a
    } else if is_zero(&a) {
        neg(b)
    } else {
        bin(BinOp::Sub, a, b)
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if let Some(v) = fold(BinOp::Mul, &a, &b) {
        v
    } else if is_zero(&a) || is_zero(&b) {
        num(0.0)
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        bin(BinOp::Mul, a, b)
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if let Some(v) = fold(BinOp::Div, &a, &b) {
        v
    } else if is_one(&b) {
        a
    } else {
        bin(BinOp::Div, a, b)
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if let Some(v) = fold(BinOp::Pow, &a, &b) {
        v
    } else if is_one(&b) {
        a
    } else if is_zero(&b) {
        num(1.0)
    } else {
        bin(BinOp::Pow, a, b)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    if let Some(x) = a.as_num() {
        if let Ok(v) = f.apply(x) {
            if v.is_finite() {
                return Expr::Num(v);
            }
        }
    }
    Expr::Call(f, Box::new(a))
}

impl fmt::Display for Expr {
    /// Fully parenthesised; re-parses to an equivalent tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(0) => write!(f, "t"),
            Expr::Var(i) => write!(f, "u{i}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

/// A parsed Lagrangian of order `r`, admitting variables `t, u1..u{r+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    root: Expr,
    order: usize,
}

impl ExprAst {
    pub fn new(root: Expr, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidOrder(order));
        }
        let max = root.max_var();
        if max > order + 1 {
            return Err(Error::Arity {
                index: max,
                max: order + 1,
            });
        }
        Ok(ExprAst { root, order })
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of arguments `(t, u1, ..., u{r+1})`, i.e. `r + 2`.
    pub fn arity(&self) -> usize {
        self.order + 2
    }

    pub fn eval(&self, args: &[f64]) -> Result<f64> {
        if args.len() != self.arity() {
            return Err(Error::ArgCount {
                expected: self.arity(),
                got: args.len(),
            });
        }
        self.root.eval(args)
    }

    /// Partial derivative in argument position `arg_index` (1 = `t`,
    /// `i + 1` = `u_i`).
    pub fn differentiate(&self, arg_index: usize) -> Result<ExprAst> {
        if arg_index == 0 || arg_index > self.arity() {
            return Err(Error::ArgIndex {
                index: arg_index,
                max: self.arity(),
            });
        }
        Ok(ExprAst {
            root: self.root.diff(arg_index - 1),
            order: self.order,
        })
    }

    /// True if the expression reads argument position `arg_index`.
    pub fn depends_on(&self, arg_index: usize) -> bool {
        arg_index >= 1 && self.root.depends_on(arg_index - 1)
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

pub fn parse_expression(text: &str, order: usize) -> Result<ExprAst> {
    if order == 0 {
        return Err(Error::InvalidOrder(order));
    }
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        max_u: order + 1,
    };
    p.skip_ws();
    if p.pos == p.src.len() {
        return Err(p.error("empty expression"));
    }
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    ExprAst::new(root, order)
}

pub fn eval_expression(ast: &ExprAst, args: &[f64]) -> Result<f64> {
    ast.eval(args)
}

pub fn differentiate(ast: &ExprAst, arg_index: usize) -> Result<ExprAst> {
    ast.differentiate(arg_index)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    max_u: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
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
            if self.eat(b'+') {
                lhs = bin(BinOp::Add, lhs, self.term()?);
            } else if self.eat(b'-') {
                lhs = bin(BinOp::Sub, lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = bin(BinOp::Mul, lhs, self.unary()?);
            } else if self.eat(b'/') {
                lhs = bin(BinOp::Div, lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(b'^') {
            // exponent may itself carry a sign: 2^-1
            Ok(bin(BinOp::Pow, base, self.unary()?))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.error("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Expr::Num)
            .ok_or_else(|| Error::Parse {
                pos: start,
                msg: format!("invalid literal {text}"),
            })
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if word == "t" {
            return Ok(Expr::t());
        }
        if let Some(func) = Func::from_name(word) {
            if !self.eat(b'(') {
                return Err(self.error("expected '(' after function name"));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if let Some(idx) = word.strip_prefix('u') {
            if !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = idx.parse().map_err(|_| Error::Parse {
                    pos: start,
                    msg: format!("bad variable {word}"),
                })?;
                if index == 0 || index > self.max_u {
                    return Err(Error::Arity {
                        index,
                        max: self.max_u,
                    });
                }
                return Ok(Expr::u(index));
            }
        }
        Err(Error::Parse {
            pos: start,
            msg: format!("unknown identifier {word}"),
        })
    }
}
