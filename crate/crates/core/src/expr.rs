//! A tiny arithmetic expression language for coefficients.
//!
//! Grammar (variables `t` and `x`, constant `pi`):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 't' | 'x' | 'pi' | '(' expr ')' | func '(' args ')'
//! func  := pow/2 | min/2 | max/2 | exp | sin | cos | abs | sqrt | log | tanh
//! ```
//!
//! Expressions can be differentiated symbolically, which lets configuration
//! files specify a test function once and get its derivatives for free.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::func::{Coef, FnTest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Exp,
    Sin,
    Cos,
    Abs,
    Sqrt,
    Log,
    Tanh,
    Sign,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Call(Unary, Box<Expr>),
    /// `if a < b { c } else { d }`, produced by differentiating min/max.
    IfLess(Box<Expr>, Box<Expr>, Box<Expr>, Box<Expr>),
}

fn num(c: f64) -> Expr {
    Expr::Num(c)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x + y),
        (Expr::Num(z), _) if *z == 0.0 => b,
        (_, Expr::Num(z)) if *z == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x - y),
        (_, Expr::Num(z)) if *z == 0.0 => a,
        (Expr::Num(z), _) if *z == 0.0 => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x * y),
        (Expr::Num(z), _) | (_, Expr::Num(z)) if *z == 0.0 => num(0.0),
        (Expr::Num(o), _) if *o == 1.0 => b,
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(z), _) if *z == 0.0 => num(0.0),
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => num(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn call(f: Unary, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Num(o)) if *o == 1.0 => a,
        (_, Expr::Num(z)) if *z == 0.0 => num(1.0),
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::Parse { pos: p.pos, msg: "unexpected trailing input".to_string() });
        }
        Ok(e)
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        use Expr::*;
        match self {
            Num(c) => *c,
            Var(self::Var::T) => t,
            Var(self::Var::X) => x,
            Neg(a) => -a.eval(t, x),
            Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Pow(a, b) => {
                let base = a.eval(t, x);
                match **b {
                    Num(e) if e == 2.0 => base * base,
                    _ => libm::pow(base, b.eval(t, x)),
                }
            }
            Min(a, b) => a.eval(t, x).min(b.eval(t, x)),
            Max(a, b) => a.eval(t, x).max(b.eval(t, x)),
            Call(f, a) => {
                let v = a.eval(t, x);
                match f {
                    Unary::Exp => libm::exp(v),
                    Unary::Sin => libm::sin(v),
                    Unary::Cos => libm::cos(v),
                    Unary::Abs => libm::fabs(v),
                    Unary::Sqrt => libm::sqrt(v),
                    Unary::Log => libm::log(v),
                    Unary::Tanh => libm::tanh(v),
                    Unary::Sign => {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                }
            }
            IfLess(a, b, c, d) => {
                if a.eval(t, x) < b.eval(t, x) {
                    c.eval(t, x)
                } else {
                    d.eval(t, x)
                }
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        use Expr::*;
        match self {
            Num(_) => false,
            Var(v) => *v == var,
            Neg(a) | Call(_, a) => a.depends_on(var),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) | Min(a, b) | Max(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
            IfLess(a, b, c, d) => {
                a.depends_on(var) || b.depends_on(var) || c.depends_on(var) || d.depends_on(var)
            }
        }
    }

    /// Constant value if the expression depends on neither variable.
    pub fn as_constant(&self) -> Option<f64> {
        (!self.depends_on(Var::T) && !self.depends_on(Var::X)).then(|| self.eval(0.0, 0.0))
    }

    /// Symbolic partial derivative.
    pub fn derivative(&self, var: Var) -> Expr {
        use Expr::*;
        if !self.depends_on(var) {
            return num(0.0);
        }
        match self {
            Num(_) => num(0.0),
            Var(v) => num(if *v == var { 1.0 } else { 0.0 }),
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
                pow((**b).clone(), num(2.0)),
            ),
            Pow(a, b) => {
                if !b.depends_on(var) {
                    mul(
                        mul((**b).clone(), pow((**a).clone(), sub((**b).clone(), num(1.0)))),
                        a.derivative(var),
                    )
                } else {
                    mul(
                        self.clone(),
                        add(
                            mul(b.derivative(var), call(Unary::Log, (**a).clone())),
                            div(mul((**b).clone(), a.derivative(var)), (**a).clone()),
                        ),
                    )
                }
            }
            Min(a, b) => IfLess(
                a.clone(),
                b.clone(),
                Box::new(a.derivative(var)),
                Box::new(b.derivative(var)),
            ),
            Max(a, b) => IfLess(
                a.clone(),
                b.clone(),
                Box::new(b.derivative(var)),
                Box::new(a.derivative(var)),
            ),
            Call(f, a) => {
                let da = a.derivative(var);
                let inner = (**a).clone();
                let outer = match f {
                    Unary::Exp => call(Unary::Exp, inner),
                    Unary::Sin => call(Unary::Cos, inner),
                    Unary::Cos => neg(call(Unary::Sin, inner)),
                    Unary::Abs => call(Unary::Sign, inner),
                    Unary::Sqrt => div(num(0.5), call(Unary::Sqrt, inner)),
                    Unary::Log => div(num(1.0), inner),
                    Unary::Tanh => sub(num(1.0), pow(call(Unary::Tanh, inner), num(2.0))),
                    Unary::Sign => num(0.0),
                };
                mul(outer, da)
            }
            IfLess(a, b, c, d) => {
                IfLess(a.clone(), b.clone(), Box::new(c.derivative(var)), Box::new(d.derivative(var)))
            }
        }
    }

    pub fn into_coef(self) -> Coef {
        if let Some(c) = self.as_constant() {
            return Arc::new(move |_, _| c);
        }
        Arc::new(move |t, x| self.eval(t, x))
    }

    /// Test function `v(t,x)` with symbolic `dt`, `dx`, `dxx`.
    pub fn into_test_fn(self) -> FnTest {
        let dt = self.derivative(Var::T);
        let dx = self.derivative(Var::X);
        let dxx = dx.derivative(Var::X);
        FnTest {
            v: self.into_coef(),
            dt: Some(dt.into_coef()),
            dx: dx.into_coef(),
            dxx: Some(dxx.into_coef()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Num(c) => write!(f, "{c}"),
            Var(self::Var::T) => write!(f, "t"),
            Var(self::Var::X) => write!(f, "x"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "pow({a}, {b})"),
            Min(a, b) => write!(f, "min({a}, {b})"),
            Max(a, b) => write!(f, "max({a}, {b})"),
            Call(u, a) => {
                let name = match u {
                    Unary::Exp => "exp",
                    Unary::Sin => "sin",
                    Unary::Cos => "cos",
                    Unary::Abs => "abs",
                    Unary::Sqrt => "sqrt",
                    Unary::Log => "log",
                    Unary::Tanh => "tanh",
                    Unary::Sign => "sign",
                };
                write!(f, "{name}({a})")
            }
            IfLess(a, b, c, d) => write!(f, "(if {a} < {b} then {c} else {d})"),
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

    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.to_string() })
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&alloc::format!("expected `{}`", c as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some(b'+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(e)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                match name {
                    "t" => Ok(Expr::Var(Var::T)),
                    "x" => Ok(Expr::Var(Var::X)),
                    "pi" => Ok(Expr::Num(core::f64::consts::PI)),
                    _ => self.function(String::from(name), start),
                }
            }
            Some(_) => self.err("unexpected character"),
        }
    }

    fn function(&mut self, name: String, start: usize) -> Result<Expr> {
        let arity = match name.as_str() {
            "pow" | "min" | "max" => 2,
            "exp" | "sin" | "cos" | "abs" | "sqrt" | "log" | "tanh" => 1,
            _ => {
                self.pos = start;
                return Err(Error::UnknownSymbol(name));
            }
        };
        self.expect(b'(')?;
        let mut args: Vec<Expr> = Vec::new();
        args.push(self.expr()?);
        while self.peek() == Some(b',') {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(b')')?;
        if args.len() != arity {
            return self.err(&alloc::format!("`{name}` takes {arity} argument(s)"));
        }
        let mut it = args.into_iter();
        let a = Box::new(it.next().expect("arity checked"));
        Ok(match name.as_str() {
            "pow" => Expr::Pow(a, Box::new(it.next().expect("arity checked"))),
            "min" => Expr::Min(a, Box::new(it.next().expect("arity checked"))),
            "max" => Expr::Max(a, Box::new(it.next().expect("arity checked"))),
            "exp" => Expr::Call(Unary::Exp, a),
            "sin" => Expr::Call(Unary::Sin, a),
            "cos" => Expr::Call(Unary::Cos, a),
            "abs" => Expr::Call(Unary::Abs, a),
            "sqrt" => Expr::Call(Unary::Sqrt, a),
            "log" => Expr::Call(Unary::Log, a),
            _ => Expr::Call(Unary::Tanh, a),
        })
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = core::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| Error::Parse { pos: start, msg: alloc::format!("bad number `{text}`") })
    }
}
