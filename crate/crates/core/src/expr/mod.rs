//! Expression DSL with forward-mode differentiation.
//!
//! Expressions are parsed from text (`x1*sin(t) - x2*cos(t)`), compiled to a
//! stack program, and evaluated with plain values, first-order dual numbers,
//! or second-order dual numbers. Domain violations (ln of a non-positive
//! value, sqrt of a negative value, division by zero) raise
//! [`Error::Domain`](crate::Error) instead of producing NaN.
//!
//! Variables are `t`, `x1..xm`, and `u1..uk`. The grammar is documented in
//! `docs/expr_grammar.ebnf`.

mod parse;
mod program;

pub use program::{EvalScratch, Program};

use crate::{Error, Result};
use std::fmt;

/// A variable reference inside an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Time.
    T,
    /// State coordinate, zero-based (`x1` is `X(0)`).
    X(usize),
    /// Control coordinate, zero-based (`u1` is `U(0)`).
    U(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Abstract syntax tree of a scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

/// Parse expression text. Errors carry the byte offset of the failure.
pub fn parse_expr(text: &str) -> Result<Expr> {
    parse::parse(text)
}

/// Value bindings for evaluation: `t`, then states, then controls.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl Bindings {
    pub fn new(t: f64, x: &[f64], u: &[f64]) -> Self {
        Bindings {
            t,
            x: x.to_vec(),
            u: u.to_vec(),
        }
    }
}

/// A first-order forward-mode result: a value and the partial derivatives
/// with respect to a declared variable ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub partials: Vec<f64>,
}

/// Evaluate an expression with first-order dual numbers.
///
/// `wrt` lists the differentiation variables; `partials[i]` is the partial
/// derivative with respect to `wrt[i]`.
pub fn eval_dual(e: &Expr, bindings: &Bindings, wrt: &[Var]) -> Result<DualValue> {
    let program = Program::compile(e, bindings.x.len(), bindings.u.len())?;
    let mut scratch = EvalScratch::default();
    let env = program.pack_env(bindings);
    let mut partials = vec![0.0; wrt.len()];
    let value = program.eval_grad(&env, wrt, &mut partials, &mut scratch)?;
    Ok(DualValue { value, partials })
}

/// Evaluate an expression to a plain value.
pub fn eval(e: &Expr, bindings: &Bindings) -> Result<f64> {
    let program = Program::compile(e, bindings.x.len(), bindings.u.len())?;
    let mut scratch = EvalScratch::default();
    let env = program.pack_env(bindings);
    program.eval_value(&env, &mut scratch)
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Unary(UnaryOp::Neg, _) => 3,
        // A negative literal prints with a leading minus and binds like one.
        Expr::Num(v) if v.is_sign_negative() => 3,
        Expr::Binary(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

impl fmt::Display for Expr {
    /// Prints with the minimal parentheses that preserve the evaluation
    /// order: `parse(print(e))` evaluates identically to `e`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Unary(UnaryOp::Neg, a) => {
                if precedence(a) < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            Expr::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Ln => "ln",
                    UnaryOp::Sqrt => "sqrt",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, l, r) => {
                let p = precedence(self);
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                if precedence(l) < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {sym} ")?;
                // All binary operators associate left, so a right child at
                // equal precedence keeps its parentheses.
                if precedence(r) <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

pub(crate) fn domain_error(what: &str, value: f64) -> Error {
    Error::Domain(format!("{what} (argument {value:e})"))
}
