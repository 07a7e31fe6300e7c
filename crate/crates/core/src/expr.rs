//! A small arithmetic expression language for coefficient fields and radial profiles.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          // right associative
//! atom    := number | var | func '(' sum ')' | '(' sum ')'
//! var     := x1 | x2 | x3 | r           // r = |x|
//! func    := sin | cos | exp | sqrt | log
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    /// `offset` is the 1-based byte position where parsing stopped.
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("evaluation of `{expr}` failed: {message}")]
    Domain { expr: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X1,
    X2,
    X3,
    /// Distance from the origin.
    R,
}

impl Var {
    pub fn axis(self) -> Option<usize> {
        match self {
            Var::X1 => Some(0),
            Var::X2 => Some(1),
            Var::X3 => Some(2),
            Var::R => None,
        }
    }

    pub fn from_axis(m: usize) -> Var {
        match m {
            0 => Var::X1,
            1 => Var::X2,
            2 => Var::X3,
            _ => panic!("axis index {m} out of range"),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Var::X1 => "x1",
            Var::X2 => "x2",
            Var::X3 => "x3",
            Var::R => "r",
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            _ => return None,
        })
    }
}

/// Expression tree. Literals are always non-negative; negation is explicit.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax(format!("unexpected `{}`", p.src[p.pos] as char)));
    }
    Ok(e)
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

    fn syntax(&self, message: String) -> ExprError {
        ExprError::Syntax { offset: self.pos + 1, message }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.product()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        match self.peek() {
            Some(got) if got == c => {
                self.pos += 1;
                Ok(())
            }
            Some(got) => Err(self.syntax(format!("expected `{}`, found `{}`", c as char, got as char))),
            None => Err(self.syntax(format!("expected `{}`, found end of input", c as char))),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input".into())),
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
                let var = match name {
                    "x1" => Some(Var::X1),
                    "x2" => Some(Var::X2),
                    "x3" => Some(Var::X3),
                    "r" => Some(Var::R),
                    _ => None,
                };
                if let Some(v) = var {
                    return Ok(Expr::Var(v));
                }
                match Func::from_name(name) {
                    Some(f) => {
                        self.expect(b'(')?;
                        let arg = self.sum()?;
                        self.expect(b')')?;
                        Ok(Expr::Call(f, Box::new(arg)))
                    }
                    None => Err(ExprError::UnknownIdentifier { name: name.to_string(), offset: start + 1 }),
                }
            }
            Some(c) => Err(self.syntax(format!("unexpected `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < s.len() && matches!(s[self.pos], b'e' | b'E') {
            let mut p = self.pos + 1;
            if p < s.len() && matches!(s[p], b'+' | b'-') {
                p += 1;
            }
            if p < s.len() && s[p].is_ascii_digit() {
                digits(&mut p);
                self.pos = p;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or_default();
        text.parse::<f64>().map(Expr::Lit).map_err(|_| ExprError::Syntax {
            offset: start + 1,
            message: format!("malformed number `{text}`"),
        })
    }
}

impl Expr {
    pub fn lit(v: f64) -> Expr {
        if v < 0.0 {
            Expr::Neg(Box::new(Expr::Lit(-v)))
        } else {
            Expr::Lit(v)
        }
    }

    /// Value if the expression contains no variables.
    pub fn constant(&self) -> Option<f64> {
        match self {
            Expr::Lit(v) => Some(*v),
            Expr::Var(_) => None,
            Expr::Neg(e) => e.constant().map(|v| -v),
            Expr::Bin(op, a, b) => Some(apply_bin(*op, a.constant()?, b.constant()?)),
            Expr::Call(f, a) => Some(apply_func(*f, a.constant()?)),
        }
    }

    pub fn uses_var(&self, v: Var) -> bool {
        match self {
            Expr::Lit(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_var(v),
            Expr::Bin(_, a, b) => a.uses_var(v) || b.uses_var(v),
        }
    }

    pub fn eval(&self, x: [f64; 3]) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Lit(v) => *v,
            Expr::Var(v) => match v.axis() {
                Some(m) => x[m],
                None => (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt(),
            },
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x)?, b.eval(x)?);
                if *op == BinOp::Div && b == 0.0 {
                    return Err(self.domain_error("division by zero"));
                }
                apply_bin(*op, a, b)
            }
            Expr::Call(f, a) => {
                let a = a.eval(x)?;
                match f {
                    Func::Log if a <= 0.0 => return Err(self.domain_error(&format!("log of {a}"))),
                    Func::Sqrt if a < 0.0 => return Err(self.domain_error(&format!("sqrt of {a}"))),
                    _ => apply_func(*f, a),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain_error(&format!("non-finite value {v}")))
        }
    }

    /// Evaluates a radial profile: `r` and `x1` both take the value `rho`.
    pub fn eval_radial(&self, rho: f64) -> Result<f64, ExprError> {
        self.eval([rho, 0.0, 0.0])
    }

    fn domain_error(&self, message: &str) -> ExprError {
        ExprError::Domain { expr: self.to_string(), message: message.to_string() }
    }

    /// Exact symbolic derivative. For `Var::R` the radius is treated as an
    /// independent variable (radial profiles); for the Cartesian variables
    /// `r` is differentiated through `∂r/∂x_m = x_m / r`.
    pub fn differentiate(&self, var: Var) -> Expr {
        match self {
            Expr::Lit(_) => Expr::Lit(0.0),
            Expr::Var(v) if *v == var => Expr::Lit(1.0),
            Expr::Var(Var::R) if var != Var::R => div(Expr::Var(var), Expr::Var(Var::R)),
            Expr::Var(_) => Expr::Lit(0.0),
            Expr::Neg(e) => neg(e.differentiate(var)),
            Expr::Bin(op, a, b) => {
                let (da, db) = (a.differentiate(var), b.differentiate(var));
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), pow(b, Expr::Lit(2.0))),
                    BinOp::Pow => match b.constant() {
                        Some(n) => mul(mul(Expr::lit(n), pow(a, Expr::lit(n - 1.0))), da),
                        None => {
                            let log_a = Expr::Call(Func::Log, Box::new(a.clone()));
                            let inner = add(mul(db, log_a), div(mul(b.clone(), da), a.clone()));
                            mul(pow(a, b), inner)
                        }
                    },
                }
            }
            Expr::Call(f, a) => {
                let da = a.differentiate(var);
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, Box::new(a)),
                    Func::Cos => neg(Expr::Call(Func::Sin, Box::new(a))),
                    Func::Exp => Expr::Call(Func::Exp, Box::new(a)),
                    Func::Sqrt => div(Expr::Lit(1.0), mul(Expr::Lit(2.0), Expr::Call(Func::Sqrt, Box::new(a)))),
                    Func::Log => div(Expr::Lit(1.0), a),
                };
                mul(outer, da)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

fn apply_bin(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
        BinOp::Pow => {
            if b == 2.0 {
                a * a
            } else if b.fract() == 0.0 && b.abs() <= 16.0 {
                a.powi(b as i32)
            } else {
                a.powf(b)
            }
        }
    }
}

fn apply_func(f: Func, a: f64) -> f64 {
    match f {
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Exp => a.exp(),
        Func::Sqrt => a.sqrt(),
        Func::Log => a.ln(),
    }
}

fn is_lit(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Lit(x) if *x == v)
}

fn neg(e: Expr) -> Expr {
    match e {
        Expr::Lit(0.0) => Expr::Lit(0.0),
        Expr::Neg(inner) => *inner,
        e => Expr::Neg(Box::new(e)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_lit(&a, 0.0) {
        return b;
    }
    if is_lit(&b, 0.0) {
        return a;
    }
    fold(BinOp::Add, a, b)
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_lit(&b, 0.0) {
        return a;
    }
    if is_lit(&a, 0.0) {
        return neg(b);
    }
    fold(BinOp::Sub, a, b)
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_lit(&a, 0.0) || is_lit(&b, 0.0) {
        return Expr::Lit(0.0);
    }
    if is_lit(&a, 1.0) {
        return b;
    }
    if is_lit(&b, 1.0) {
        return a;
    }
    fold(BinOp::Mul, a, b)
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_lit(&a, 0.0) {
        return Expr::Lit(0.0);
    }
    if is_lit(&b, 1.0) {
        return a;
    }
    fold(BinOp::Div, a, b)
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_lit(&b, 1.0) {
        return a;
    }
    if is_lit(&b, 0.0) {
        return Expr::Lit(1.0);
    }
    fold(BinOp::Pow, a, b)
}

fn fold(op: BinOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Lit(x), Expr::Lit(y)) = (&a, &b) {
        let v = apply_bin(op, *x, *y);
        if v.is_finite() {
            return Expr::lit(v);
        }
    }
    Expr::Bin(op, Box::new(a), Box::new(b))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool| {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(e) => {
                f.write_str("-")?;
                wrap(f, e, e.precedence() < 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, a, b) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                let left_parens = if *op == BinOp::Pow { a.precedence() <= p } else { a.precedence() < p };
                let right_parens = if *op == BinOp::Pow { b.precedence() < p } else { b.precedence() <= p };
                wrap(f, a, left_parens)?;
                f.write_str(sym)?;
                wrap(f, b, right_parens)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let ev = |s: &str, x: [f64; 3]| parse(s).unwrap().eval(x).unwrap();
        assert_eq!(ev("1+x1^2", [2.0, 0.0, 0.0]), 5.0);
        assert_eq!(ev("2+3*x1", [1.0, 0.0, 0.0]), 5.0);
        assert_eq!(ev("2^3^2", [0.0; 3]), 512.0);
        assert_eq!(ev("-2^2", [0.0; 3]), -4.0);
        assert_eq!(ev("8/4/2", [0.0; 3]), 1.0);
        assert_eq!(ev("8-4-2", [0.0; 3]), 2.0);
        assert_eq!(ev("2^-1", [0.0; 3]), 0.5);
        assert_eq!(ev(" r * 2 ", [3.0, 4.0, 0.0]), 10.0);
        assert_eq!(ev("1.5e1 + .5", [0.0; 3]), 15.5);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert_eq!(parse("sin(x1").unwrap_err(), ExprError::Syntax {
            offset: 7,
            message: "expected `)`, found end of input".into()
        });
        assert!(matches!(parse("1 +"), Err(ExprError::Syntax { offset: 4, .. })));
        assert!(matches!(parse("foo(1)"), Err(ExprError::UnknownIdentifier { offset: 1, .. })));
        assert!(matches!(parse("x1 x2"), Err(ExprError::Syntax { offset: 4, .. })));
    }

    #[test]
    fn guarded_evaluation() {
        assert!(matches!(parse("1/x1").unwrap().eval([0.0; 3]), Err(ExprError::Domain { .. })));
        assert!(parse("log(x1 - 1)").unwrap().eval([0.5, 0.0, 0.0]).is_err());
        assert!(parse("sqrt(x2)").unwrap().eval([0.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn derivative_examples() {
        let d = parse("x1^2").unwrap().differentiate(Var::X1);
        assert_eq!(d.eval([3.0, 0.0, 0.0]).unwrap(), 6.0);
        assert_eq!(parse("sin(x1)").unwrap().differentiate(Var::X2), Expr::Lit(0.0));
        let d = parse("exp(x1*x2)").unwrap().differentiate(Var::X1);
        let v = d.eval([1.0, 2.0, 0.0]).unwrap();
        assert!((v - 2.0 * 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn display_reparses() {
        for s in ["-(x1 + 2)*x2", "(-x1)^2", "x1^(x2^2)", "(x1^x2)^2", "1 - (2 - x3)", "--x1", "sqrt(r)/(1 + exp(-x2))"] {
            let e = parse(s).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{s} -> {e}");
        }
    }
}
