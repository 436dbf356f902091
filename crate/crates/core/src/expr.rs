//! Expression mini-language for constitutive characteristics.
//!
//! Expressions are small trees over the circuit variables `q`, `phi`, `i`, `v`
//! (and `t`, which device characteristics reject). They are evaluated on
//! [`Dual`] numbers so that every characteristic carries its exact gradient
//! with respect to `(q, phi, i, v)`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

/// Fundamental circuit variables an expression may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Q,
    Phi,
    I,
    V,
    T,
}

impl Var {
    /// Slot of the variable in a [`Dual`] gradient; `t` is not differentiated.
    pub fn slot(self) -> Option<usize> {
        match self {
            Var::Q => Some(0),
            Var::Phi => Some(1),
            Var::I => Some(2),
            Var::V => Some(3),
            Var::T => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::Q => "q",
            Var::Phi => "phi",
            Var::I => "i",
            Var::V => "v",
            Var::T => "t",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("unknown identifier `{name}` at column {col}")]
    UnknownIdent { name: String, col: usize },
    #[error("out of scope: `{name}` belongs to second-order devices (second-order devices are out of scope)")]
    SecondOrder { name: String },
    #[error("domain error: {0}")]
    Domain(String),
}

/// Evaluation point for the four circuit variables plus time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Point {
    pub q: f64,
    pub phi: f64,
    pub i: f64,
    pub v: f64,
    pub t: f64,
}

impl Point {
    pub fn new(q: f64, phi: f64, i: f64, v: f64) -> Self {
        Point {
            q,
            phi,
            i,
            v,
            t: 0.0,
        }
    }

    pub fn get(&self, var: Var) -> f64 {
        match var {
            Var::Q => self.q,
            Var::Phi => self.phi,
            Var::I => self.i,
            Var::V => self.v,
            Var::T => self.t,
        }
    }

    pub fn set(&mut self, var: Var, value: f64) {
        match var {
            Var::Q => self.q = value,
            Var::Phi => self.phi = value,
            Var::I => self.i = value,
            Var::V => self.v = value,
            Var::T => self.t = value,
        }
    }
}

/// Forward-mode dual number carrying the gradient w.r.t. `(q, phi, i, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: [f64; 4],
}

impl Dual {
    pub fn constant(value: f64) -> Self {
        Dual {
            value,
            grad: [0.0; 4],
        }
    }

    pub fn seed(value: f64, slot: usize) -> Self {
        let mut grad = [0.0; 4];
        grad[slot] = 1.0;
        Dual { value, grad }
    }

    pub fn partial(&self, var: Var) -> f64 {
        var.slot().map_or(0.0, |s| self.grad[s])
    }

    fn chain(self, value: f64, slope: f64) -> Dual {
        Dual {
            value,
            grad: self.grad.map(|g| slope * g),
        }
    }

    pub fn sin(self) -> Dual {
        self.chain(self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Dual {
        self.chain(self.value.cos(), -self.value.sin())
    }

    pub fn exp(self) -> Dual {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }

    fn is_constant(&self) -> bool {
        self.grad.iter().all(|&g| g == 0.0)
    }

    pub fn checked_div(self, rhs: Dual) -> Result<Dual, ExprError> {
        if rhs.value == 0.0 {
            return Err(ExprError::Domain("division by zero".into()));
        }
        Ok(self / rhs)
    }

    pub fn checked_pow(self, exponent: Dual) -> Result<Dual, ExprError> {
        let base = self.value;
        if exponent.is_constant() {
            let n = exponent.value;
            let value = base.powf(n);
            let slope = if n == 0.0 {
                0.0
            } else {
                n * base.powf(n - 1.0)
            };
            let out = self.chain(value, slope);
            if !out.is_finite() {
                return Err(ExprError::Domain(format!("{base}^{n} is not finite")));
            }
            return Ok(out);
        }
        if base <= 0.0 {
            return Err(ExprError::Domain(format!(
                "non-constant exponent requires a positive base, got {base}"
            )));
        }
        let ln = base.ln();
        let value = base.powf(exponent.value);
        let mut grad = [0.0; 4];
        for (k, g) in grad.iter_mut().enumerate() {
            *g = value * (exponent.grad[k] * ln + exponent.value * self.grad[k] / base);
        }
        Ok(Dual { value, grad })
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(rhs.grad) {
            *g += r;
        }
        Dual {
            value: self.value + rhs.value,
            grad,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        self + (-rhs)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            value: -self.value,
            grad: self.grad.map(|g| -g),
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let mut grad = [0.0; 4];
        for (k, g) in grad.iter_mut().enumerate() {
            *g = self.grad[k] * rhs.value + self.value * rhs.grad[k];
        }
        Dual {
            value: self.value * rhs.value,
            grad,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let value = self.value / rhs.value;
        let mut grad = [0.0; 4];
        for (k, g) in grad.iter_mut().enumerate() {
            *g = (self.grad[k] - value * rhs.grad[k]) / rhs.value;
        }
        Dual { value, grad }
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn sin(self) -> Expr {
        Expr::Call(Func::Sin, Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Call(Func::Cos, Box::new(self))
    }

    pub fn exp(self) -> Expr {
        Expr::Call(Func::Exp, Box::new(self))
    }

    pub fn powf(self, exponent: Expr) -> Expr {
        Expr::Pow(Box::new(self), Box::new(exponent))
    }

    /// Variables read anywhere in the tree, sorted and deduplicated.
    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn eval(&self, p: &Point) -> Result<f64, ExprError> {
        Ok(self.eval_dual(p)?.value)
    }

    /// Value and exact gradient at `p`.
    pub fn eval_dual(&self, p: &Point) -> Result<Dual, ExprError> {
        let out = match self {
            Expr::Const(c) => Dual::constant(*c),
            Expr::Var(v) => match v.slot() {
                Some(s) => Dual::seed(p.get(*v), s),
                None => Dual::constant(p.t),
            },
            Expr::Neg(a) => -a.eval_dual(p)?,
            Expr::Add(a, b) => a.eval_dual(p)? + b.eval_dual(p)?,
            Expr::Sub(a, b) => a.eval_dual(p)? - b.eval_dual(p)?,
            Expr::Mul(a, b) => a.eval_dual(p)? * b.eval_dual(p)?,
            Expr::Div(a, b) => a.eval_dual(p)?.checked_div(b.eval_dual(p)?)?,
            Expr::Pow(a, b) => a.eval_dual(p)?.checked_pow(b.eval_dual(p)?)?,
            Expr::Call(f, a) => {
                let x = a.eval_dual(p)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Ln => {
                        if x.value <= 0.0 {
                            return Err(ExprError::Domain(format!(
                                "ln of non-positive {}",
                                x.value
                            )));
                        }
                        x.chain(x.value.ln(), 1.0 / x.value)
                    }
                }
            }
        };
        if !out.is_finite() {
            return Err(ExprError::Domain(format!(
                "non-finite result evaluating `{self}`"
            )));
        }
        Ok(out)
    }

    /// Replace every occurrence of `var` by `with`.
    pub fn substitute(&self, var: Var, with: &Expr) -> Expr {
        let s = |e: &Expr| Box::new(e.substitute(var, with));
        match self {
            Expr::Var(v) if *v == var => with.clone(),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(s(a)),
            Expr::Call(f, a) => Expr::Call(*f, s(a)),
            Expr::Add(a, b) => Expr::Add(s(a), s(b)),
            Expr::Sub(a, b) => Expr::Sub(s(a), s(b)),
            Expr::Mul(a, b) => Expr::Mul(s(a), s(b)),
            Expr::Div(a, b) => Expr::Div(s(a), s(b)),
            Expr::Pow(a, b) => Expr::Pow(s(a), s(b)),
        }
    }

    /// Symbolic partial derivative, lightly simplified.
    pub fn derivative(&self, var: Var) -> Expr {
        use Expr::*;
        let zero = || Const(0.0);
        match self {
            Const(_) => zero(),
            Var(v) => Const(if *v == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(var)),
            Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                ),
                Pow(b.clone(), Box::new(Const(2.0))),
            ),
            Pow(a, b) => {
                let db = b.derivative(var);
                if db == zero() {
                    // d(a^n) = n a^(n-1) da
                    let n = (**b).clone();
                    let lowered = match &n {
                        Const(c) => Const(c - 1.0),
                        _ => sub(n.clone(), Const(1.0)),
                    };
                    mul(mul(n, pow((**a).clone(), lowered)), a.derivative(var))
                } else {
                    // d(a^b) = a^b (b' ln a + b a'/a), defined for a > 0
                    let ln_a = Call(Func::Ln, a.clone());
                    mul(
                        self.clone(),
                        add(
                            mul(db, ln_a),
                            div(mul((**b).clone(), a.derivative(var)), (**a).clone()),
                        ),
                    )
                }
            }
            Call(f, a) => {
                let inner = a.derivative(var);
                let outer = match f {
                    Func::Sin => (**a).clone().cos(),
                    Func::Cos => neg((**a).clone().sin()),
                    Func::Exp => self.clone(),
                    Func::Ln => div(Const(1.0), (**a).clone()),
                };
                mul(outer, inner)
            }
        }
    }
}

fn is_const(e: &Expr, c: f64) -> bool {
    matches!(e, Expr::Const(x) if *x == c)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if is_const(&a, 0.0) => b,
        _ if is_const(&b, 0.0) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if is_const(&b, 0.0) => a,
        _ if is_const(&a, 0.0) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if is_const(&a, 0.0) || is_const(&b, 0.0) => Expr::Const(0.0),
        _ if is_const(&a, 1.0) => b,
        _ if is_const(&b, 1.0) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_const(&a, 0.0) {
        return Expr::Const(0.0);
    }
    if is_const(&b, 1.0) {
        return a;
    }
    Expr::Div(Box::new(a), Box::new(b))
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_const(&b, 1.0) {
        return a;
    }
    if is_const(&b, 0.0) {
        return Expr::Const(1.0);
    }
    Expr::Pow(Box::new(a), Box::new(b))
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

// ---------------------------------------------------------------------------
// Printing

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

/// Shortest round-trip literal for `x`.
pub fn format_number(x: f64) -> String {
    let s = format!("{x:?}");
    match s.strip_suffix(".0") {
        Some(stripped) => stripped.to_string(),
        None => s,
    }
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if c.is_sign_negative() => PREC_UNARY,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => PREC_ATOM,
            Expr::Neg(_) => PREC_UNARY,
            Expr::Add(..) | Expr::Sub(..) => PREC_ADD,
            Expr::Mul(..) | Expr::Div(..) => PREC_MUL,
            Expr::Pow(..) => PREC_POW,
        }
    }

    fn write_operand(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => f.write_str(&format_number(*c)),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_operand(f, PREC_UNARY)
            }
            Expr::Add(a, b) => {
                a.write_operand(f, PREC_ADD)?;
                f.write_str(" + ")?;
                b.write_operand(f, PREC_MUL)
            }
            Expr::Sub(a, b) => {
                a.write_operand(f, PREC_ADD)?;
                f.write_str(" - ")?;
                b.write_operand(f, PREC_MUL)
            }
            Expr::Mul(a, b) => {
                a.write_operand(f, PREC_MUL)?;
                f.write_str("*")?;
                b.write_operand(f, PREC_UNARY)
            }
            Expr::Div(a, b) => {
                a.write_operand(f, PREC_MUL)?;
                f.write_str("/")?;
                b.write_operand(f, PREC_UNARY)
            }
            Expr::Pow(a, b) => {
                a.write_operand(f, PREC_ATOM)?;
                f.write_str("^")?;
                b.write_operand(f, PREC_UNARY)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut toks = Vec::new();
    let mut k = 0;
    let col_of = |idx: usize| src[..idx].chars().count() + 1;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = k;
            while k < chars.len() && (chars[k].1.is_ascii_digit() || chars[k].1 == '.') {
                k += 1;
            }
            if k < chars.len() && (chars[k].1 == 'e' || chars[k].1 == 'E') {
                let mut j = k + 1;
                if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    k = j;
                    while k < chars.len() && chars[k].1.is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let end = chars.get(k).map_or(src.len(), |c| c.0);
            let text = &src[chars[start].0..end];
            let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                col: col_of(pos),
                msg: format!("malformed number `{text}`"),
            })?;
            toks.push((Tok::Num(value), col_of(pos)));
        } else if c.is_alphabetic() || c == '_' {
            let start = k;
            while k < chars.len() && (chars[k].1.is_alphanumeric() || chars[k].1 == '_') {
                k += 1;
            }
            let end = chars.get(k).map_or(src.len(), |c| c.0);
            toks.push((
                Tok::Ident(src[chars[start].0..end].to_string()),
                col_of(pos),
            ));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' | ',' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ExprError::Syntax {
                        col: col_of(pos),
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            toks.push((tok, col_of(pos)));
            k += 1;
        }
    }
    toks.push((Tok::End, src.chars().count() + 1));
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    constants: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            col: self.col(),
            msg: msg.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = lhs + self.term()?;
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = lhs * self.unary()?;
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Tok::Op('-') = self.peek() {
            self.bump();
            return Ok(-self.unary()?);
        }
        if let Tok::Op('+') = self.peek() {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            let exponent = self.unary()?;
            return Ok(base.powf(exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let col = self.col();
        match self.bump() {
            Tok::Num(x) => Ok(Expr::Const(x)),
            Tok::LParen => {
                let inner = self.expr()?;
                match self.bump() {
                    Tok::RParen => Ok(inner),
                    _ => Err(ExprError::Syntax {
                        col: self.toks[self.pos.saturating_sub(1)].1,
                        msg: "expected `)`".into(),
                    }),
                }
            }
            Tok::Ident(name) => self.ident(name, col),
            Tok::End => Err(ExprError::Syntax {
                col,
                msg: "unexpected end of expression".into(),
            }),
            other => Err(ExprError::Syntax {
                col,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn ident(&mut self, name: String, col: usize) -> Result<Expr, ExprError> {
        let func = match name.as_str() {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            _ => None,
        };
        if let Some(func) = func {
            if *self.peek() != Tok::LParen {
                return self.err(format!("expected `(` after `{name}`"));
            }
            self.bump();
            let arg = self.expr()?;
            if *self.peek() != Tok::RParen {
                return self.err("expected `)`");
            }
            self.bump();
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if name == "pow" && *self.peek() == Tok::LParen {
            self.bump();
            let a = self.expr()?;
            if *self.peek() != Tok::Op(',') {
                return self.err("expected `,` in pow(a, b)");
            }
            self.bump();
            let b = self.expr()?;
            if *self.peek() != Tok::RParen {
                return self.err("expected `)`");
            }
            self.bump();
            return Ok(a.powf(b));
        }
        match name.as_str() {
            "q" => Ok(Expr::Var(Var::Q)),
            "phi" | "φ" => Ok(Expr::Var(Var::Phi)),
            "i" => Ok(Expr::Var(Var::I)),
            "v" => Ok(Expr::Var(Var::V)),
            "t" => Ok(Expr::Var(Var::T)),
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            "sigma" | "σ" | "rho" | "ρ" => Err(ExprError::SecondOrder { name }),
            _ => match self.constants.get(&name) {
                Some(&c) => Ok(Expr::Const(c)),
                None => Err(ExprError::UnknownIdent { name, col }),
            },
        }
    }
}

/// Parse an expression with no bound constants.
pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    parse_expr_with(text, &BTreeMap::new())
}

/// Parse an expression, resolving free identifiers through `constants`.
pub fn parse_expr_with(text: &str, constants: &BTreeMap<String, f64>) -> Result<Expr, ExprError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        constants,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err(format!("unexpected trailing token {:?}", p.peek()));
    }
    Ok(e)
}
