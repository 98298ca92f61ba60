use std::fmt;

use super::{BinOp, Expr, Func, Var};

/// Hints that `g` may violate the smoothness/boundedness the theory needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprWarning {
    /// `^` with an exponent that is not an integer literal.
    NonIntegerExponent(String),
    /// `exp` is unbounded.
    UnboundedFunction(Func),
    /// `x` or `m` appears outside any function argument, e.g. `x*m`.
    BareVariable(Var),
}

impl fmt::Display for ExprWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprWarning::NonIntegerExponent(e) => {
                write!(f, "`{e}` has a non-integer exponent; g may not be C^3")
            }
            ExprWarning::UnboundedFunction(func) => {
                write!(
                    f,
                    "`{}` is unbounded; g may not have bounded derivatives",
                    func.name()
                )
            }
            ExprWarning::BareVariable(v) => {
                let name = if *v == Var::X { "x" } else { "m" };
                write!(f, "`{name}` appears unbounded outside a function argument")
            }
        }
    }
}

pub(super) fn warnings(root: &Expr) -> Vec<ExprWarning> {
    let mut out = Vec::new();
    visit(root, false, &mut out);
    out
}

fn push(out: &mut Vec<ExprWarning>, w: ExprWarning) {
    if !out.contains(&w) {
        out.push(w);
    }
}

fn visit(e: &Expr, in_call: bool, out: &mut Vec<ExprWarning>) {
    match e {
        Expr::Num(_) => {}
        Expr::Var(v) => {
            if !in_call {
                push(out, ExprWarning::BareVariable(*v));
            }
        }
        Expr::Neg(inner) => visit(inner, in_call, out),
        Expr::Binary(op, l, r) => {
            if *op == BinOp::Pow && !matches!(**r, Expr::Num(v) if v.fract() == 0.0) {
                push(out, ExprWarning::NonIntegerExponent(e.to_string()));
            }
            visit(l, in_call, out);
            visit(r, in_call, out);
        }
        Expr::Call(func, arg) => {
            if *func == Func::Exp {
                push(out, ExprWarning::UnboundedFunction(Func::Exp));
            }
            visit(arg, true, out);
        }
    }
}
