//! Coefficient expressions `g(x, m)`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          // right-associative
//! atom    := number | 'x' | 'm' | func '(' sum ')' | '(' sum ')'
//! func    := sin | cos | exp | tanh | abs | sqrt
//! ```
//!
//! So `-m^2` is `-(m^2)`, `2^3^2` is `2^(3^2)` and `2^-1` is `2^(-1)`.
//!
//! The schemes assume `g` is `C³` with bounded derivatives. That cannot be
//! checked here; [`CoeffExpr::warnings`] flags the obvious violations.

mod lint;
mod parse;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use lint::ExprWarning;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Tanh,
        Func::Abs,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Tanh => v.tanh(),
            Func::Abs => v.abs(),
            Func::Sqrt => v.sqrt(),
        }
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

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivisionByZero,
    NegativeSqrt,
    NonFinite,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalErrorKind::DivisionByZero => "division by zero",
            EvalErrorKind::NegativeSqrt => "square root of a negative number",
            EvalErrorKind::NonFinite => "non-finite value",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("{kind} in `{subexpr}` at x = {x}, m = {m}")]
    Eval {
        kind: EvalErrorKind,
        subexpr: String,
        x: f64,
        m: f64,
    },
}

/// A parsed coefficient `g(x, m)`. Cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffExpr {
    root: Arc<Expr>,
    source: Arc<str>,
}

impl CoeffExpr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let root = parse::parse(text)?;
        Ok(CoeffExpr {
            root: Arc::new(root),
            source: Arc::from(text.trim()),
        })
    }

    pub fn from_tree(root: Expr) -> Self {
        let source = root.to_string();
        CoeffExpr {
            root: Arc::new(root),
            source: Arc::from(source),
        }
    }

    pub fn tree(&self) -> &Expr {
        &self.root
    }

    /// The text the expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }

    #[inline]
    pub fn eval(&self, x: f64, m: f64) -> Result<f64, ExprError> {
        self.root.eval(x, m)
    }

    pub fn depends_on(&self, var: Var) -> bool {
        self.root.depends_on(var)
    }

    /// True when `g` does not involve `x`: the simplified case in which the
    /// averaged coefficient is a constant.
    pub fn is_x_independent(&self) -> bool {
        !self.depends_on(Var::X)
    }

    pub fn warnings(&self) -> Vec<ExprWarning> {
        lint::warnings(&self.root)
    }
}

impl fmt::Display for CoeffExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl std::str::FromStr for CoeffExpr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CoeffExpr::parse(s)
    }
}

impl Expr {
    pub fn eval(&self, x: f64, m: f64) -> Result<f64, ExprError> {
        let fail = |kind| ExprError::Eval {
            kind,
            subexpr: self.to_string(),
            x,
            m,
        };
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::M) => m,
            Expr::Neg(e) => -e.eval(x, m)?,
            Expr::Binary(op, l, r) => {
                let a = l.eval(x, m)?;
                let b = r.eval(x, m)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(fail(EvalErrorKind::DivisionByZero));
                        }
                        a / b
                    }
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(func, arg) => {
                let a = arg.eval(x, m)?;
                if *func == Func::Sqrt && a < 0.0 {
                    return Err(fail(EvalErrorKind::NegativeSqrt));
                }
                func.apply(a)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(fail(EvalErrorKind::NonFinite))
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) | Expr::Call(_, e) => e.depends_on(var),
            Expr::Binary(_, l, r) => l.depends_on(var) || r.depends_on(var),
        }
    }
}

/// Small integer exponents go through `powi`, which is exact for the
/// polynomial coefficients used in practice.
#[inline]
fn pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= 64.0 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

/// Fully parenthesised rendering; parsing it back gives the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::M) => f.write_str("m"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(s: &str, x: f64, m: f64) -> Result<f64, ExprError> {
        CoeffExpr::parse(s)?.eval(x, m)
    }

    #[test]
    fn single_call_shape() {
        let e = CoeffExpr::parse("cos(m)").unwrap();
        assert_eq!(
            *e.tree(),
            Expr::Call(Func::Cos, Box::new(Expr::Var(Var::M)))
        );
    }

    #[test]
    fn arithmetic() {
        assert_eq!(eval("2+3*m^2", 0.0, 2.0).unwrap(), 14.0);
        assert_eq!(eval("x*m + 2", 3.0, 4.0).unwrap(), 14.0);
        assert_eq!(eval("cos(m)", 9.0, 0.0).unwrap(), 1.0);
        assert!((eval("exp(-m^2)", 0.0, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("-2^2", 0.0, 0.0).unwrap(), -4.0);
        assert_eq!(eval("2^3^2", 0.0, 0.0).unwrap(), 512.0);
        assert_eq!(eval("2^-1", 0.0, 0.0).unwrap(), 0.5);
        assert_eq!(eval("8/4/2", 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(eval("1-2-3", 0.0, 0.0).unwrap(), -4.0);
        assert_eq!(eval("-2*3", 0.0, 0.0).unwrap(), -6.0);
        assert_eq!(eval("(1+2)*3", 0.0, 0.0).unwrap(), 9.0);
        assert_eq!(eval("--m", 0.0, 2.0).unwrap(), 2.0);
        assert_eq!(eval("1.5e1 + 2E-1", 0.0, 0.0).unwrap(), 15.2);
    }

    #[test]
    fn evaluation_errors_name_the_subexpression() {
        let err = eval("1/m", 0.0, 0.0).unwrap_err();
        match err {
            ExprError::Eval { kind, subexpr, .. } => {
                assert_eq!(kind, EvalErrorKind::DivisionByZero);
                assert_eq!(subexpr, "(1.0 / m)");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = eval("2 + sqrt(x)", -1.0, 0.0).unwrap_err();
        assert!(matches!(
            err,
            ExprError::Eval {
                kind: EvalErrorKind::NegativeSqrt,
                ..
            }
        ));
        let err = eval("exp(exp(x))", 10.0, 0.0).unwrap_err();
        assert!(matches!(
            err,
            ExprError::Eval {
                kind: EvalErrorKind::NonFinite,
                ..
            }
        ));
        assert!(eval("m^0.5", 0.0, -1.0).is_err());
    }

    #[test]
    fn x_dependence() {
        assert!(CoeffExpr::parse("cos(m)+m^2").unwrap().is_x_independent());
        assert!(!CoeffExpr::parse("tanh(x)*cos(m)")
            .unwrap()
            .is_x_independent());
        assert!(CoeffExpr::parse("3").unwrap().is_x_independent());
    }

    #[test]
    fn display_reparses() {
        let e = CoeffExpr::parse("tanh(x)*cos(m)+sin(x) - -m^2/3").unwrap();
        let again = CoeffExpr::parse(&e.to_string()).unwrap();
        assert_eq!(e.tree(), again.tree());
    }
}
