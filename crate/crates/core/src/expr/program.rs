//! Compiled stack programs for fast repeated evaluation.
//!
//! An [`Expr`] is flattened to postfix instructions once; evaluation then
//! runs on a caller-provided scratch buffer with no per-call allocation.
//! Three evaluation orders are provided: plain values, value + gradient,
//! and value + gradient + Hessian (forward-over-forward dual numbers laid
//! out flat as `[value, d partials, d*d second partials]` per stack slot).

use super::{domain_error, BinOp, Bindings, Expr, UnaryOp, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Const(f64),
    Load(usize),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    PowI(i32),
}

/// A compiled expression for a system with `m` states and `k` controls.
#[derive(Debug, Clone)]
pub struct Program {
    instrs: Vec<Instr>,
    env_len: usize,
    max_stack: usize,
    m: usize,
    k: usize,
}

/// Reusable evaluation workspace.
#[derive(Debug, Default)]
pub struct EvalScratch {
    buf: Vec<f64>,
}

fn env_index(var: Var, m: usize, k: usize) -> Result<usize> {
    match var {
        Var::T => Ok(0),
        Var::X(i) if i < m => Ok(1 + i),
        Var::U(i) if i < k => Ok(1 + m + i),
        other => Err(Error::UnknownIdentifier {
            name: other.to_string(),
        }),
    }
}

impl Program {
    /// Flatten an expression; rejects variables outside `x1..xm`, `u1..uk`.
    pub fn compile(e: &Expr, m: usize, k: usize) -> Result<Program> {
        let mut instrs = Vec::new();
        emit(e, m, k, &mut instrs)?;
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for instr in &instrs {
            match instr {
                Instr::Const(_) | Instr::Load(_) => depth += 1,
                Instr::Add | Instr::Sub | Instr::Mul | Instr::Div => depth -= 1,
                _ => {}
            }
            max_stack = max_stack.max(depth);
        }
        Ok(Program {
            instrs,
            env_len: 1 + m + k,
            max_stack,
            m,
            k,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn control_dim(&self) -> usize {
        self.k
    }

    /// Environment layout: `[t, x1..xm, u1..uk]`.
    pub fn pack_env(&self, b: &Bindings) -> Vec<f64> {
        let mut env = Vec::with_capacity(self.env_len);
        env.push(b.t);
        env.extend_from_slice(&b.x);
        env.extend_from_slice(&b.u);
        env.resize(self.env_len, 0.0);
        env
    }

    pub fn eval_value(&self, env: &[f64], scratch: &mut EvalScratch) -> Result<f64> {
        debug_assert_eq!(env.len(), self.env_len);
        scratch.buf.resize(self.max_stack.max(1), 0.0);
        let buf = &mut scratch.buf;
        let mut top = 0usize;
        for instr in &self.instrs {
            match *instr {
                Instr::Const(c) => {
                    buf[top] = c;
                    top += 1;
                }
                Instr::Load(i) => {
                    buf[top] = env[i];
                    top += 1;
                }
                Instr::Add => {
                    top -= 1;
                    buf[top - 1] += buf[top];
                }
                Instr::Sub => {
                    top -= 1;
                    buf[top - 1] -= buf[top];
                }
                Instr::Mul => {
                    top -= 1;
                    buf[top - 1] *= buf[top];
                }
                Instr::Div => {
                    top -= 1;
                    if buf[top] == 0.0 {
                        return Err(domain_error("division by zero", buf[top - 1]));
                    }
                    buf[top - 1] /= buf[top];
                }
                Instr::Neg => buf[top - 1] = -buf[top - 1],
                Instr::Sin => buf[top - 1] = buf[top - 1].sin(),
                Instr::Cos => buf[top - 1] = buf[top - 1].cos(),
                Instr::Exp => buf[top - 1] = buf[top - 1].exp(),
                Instr::Ln => {
                    let a = buf[top - 1];
                    if a <= 0.0 {
                        return Err(domain_error("ln of non-positive value", a));
                    }
                    buf[top - 1] = a.ln();
                }
                Instr::Sqrt => {
                    let a = buf[top - 1];
                    if a < 0.0 {
                        return Err(domain_error("sqrt of negative value", a));
                    }
                    buf[top - 1] = a.sqrt();
                }
                Instr::PowI(n) => {
                    let a = buf[top - 1];
                    if n < 0 && a == 0.0 {
                        return Err(domain_error("zero raised to a negative power", a));
                    }
                    buf[top - 1] = a.powi(n);
                }
            }
        }
        Ok(buf[0])
    }

    /// Value and gradient with respect to `wrt`; `grad` must have `wrt.len()`
    /// entries.
    pub fn eval_grad(
        &self,
        env: &[f64],
        wrt: &[Var],
        grad: &mut [f64],
        scratch: &mut EvalScratch,
    ) -> Result<f64> {
        debug_assert_eq!(env.len(), self.env_len);
        debug_assert_eq!(grad.len(), wrt.len());
        let d = wrt.len();
        let slot = 1 + d;
        let mut seed = vec![usize::MAX; self.env_len];
        for (p, &var) in wrt.iter().enumerate() {
            seed[env_index(var, self.m, self.k)?] = p;
        }
        scratch.buf.resize(self.max_stack.max(1) * slot, 0.0);
        let buf = &mut scratch.buf;
        let mut top = 0usize;
        for instr in &self.instrs {
            match *instr {
                Instr::Const(c) => {
                    let s = top * slot;
                    buf[s] = c;
                    buf[s + 1..s + slot].fill(0.0);
                    top += 1;
                }
                Instr::Load(i) => {
                    let s = top * slot;
                    buf[s] = env[i];
                    buf[s + 1..s + slot].fill(0.0);
                    if seed[i] != usize::MAX {
                        buf[s + 1 + seed[i]] = 1.0;
                    }
                    top += 1;
                }
                Instr::Add => {
                    top -= 1;
                    let (a, b) = (top - 1, top);
                    for j in 0..slot {
                        buf[a * slot + j] += buf[b * slot + j];
                    }
                }
                Instr::Sub => {
                    top -= 1;
                    let (a, b) = (top - 1, top);
                    for j in 0..slot {
                        buf[a * slot + j] -= buf[b * slot + j];
                    }
                }
                Instr::Mul => {
                    top -= 1;
                    let (sa, sb) = ((top - 1) * slot, top * slot);
                    let (va, vb) = (buf[sa], buf[sb]);
                    for j in 0..d {
                        buf[sa + 1 + j] = va * buf[sb + 1 + j] + vb * buf[sa + 1 + j];
                    }
                    buf[sa] = va * vb;
                }
                Instr::Div => {
                    top -= 1;
                    let (sa, sb) = ((top - 1) * slot, top * slot);
                    let (va, vb) = (buf[sa], buf[sb]);
                    if vb == 0.0 {
                        return Err(domain_error("division by zero", va));
                    }
                    let v = va / vb;
                    for j in 0..d {
                        buf[sa + 1 + j] = (buf[sa + 1 + j] - v * buf[sb + 1 + j]) / vb;
                    }
                    buf[sa] = v;
                }
                _ => {
                    let sa = (top - 1) * slot;
                    let va = buf[sa];
                    let (v, f1) = unary_d1(*instr, va)?;
                    for j in 0..d {
                        buf[sa + 1 + j] *= f1;
                    }
                    buf[sa] = v;
                }
            }
        }
        grad.copy_from_slice(&buf[1..1 + d]);
        Ok(buf[0])
    }

    /// Value, gradient, and dense Hessian (row-major `d x d`) with respect
    /// to `wrt`.
    pub fn eval_hess(
        &self,
        env: &[f64],
        wrt: &[Var],
        grad: &mut [f64],
        hess: &mut [f64],
        scratch: &mut EvalScratch,
    ) -> Result<f64> {
        debug_assert_eq!(env.len(), self.env_len);
        let d = wrt.len();
        debug_assert_eq!(grad.len(), d);
        debug_assert_eq!(hess.len(), d * d);
        let slot = 1 + d + d * d;
        let mut seed = vec![usize::MAX; self.env_len];
        for (p, &var) in wrt.iter().enumerate() {
            seed[env_index(var, self.m, self.k)?] = p;
        }
        scratch.buf.resize(self.max_stack.max(1) * slot, 0.0);
        let buf = &mut scratch.buf;
        let mut top = 0usize;
        for instr in &self.instrs {
            match *instr {
                Instr::Const(c) => {
                    let s = top * slot;
                    buf[s] = c;
                    buf[s + 1..s + slot].fill(0.0);
                    top += 1;
                }
                Instr::Load(i) => {
                    let s = top * slot;
                    buf[s] = env[i];
                    buf[s + 1..s + slot].fill(0.0);
                    if seed[i] != usize::MAX {
                        buf[s + 1 + seed[i]] = 1.0;
                    }
                    top += 1;
                }
                Instr::Add => {
                    top -= 1;
                    let (a, b) = (top - 1, top);
                    for j in 0..slot {
                        buf[a * slot + j] += buf[b * slot + j];
                    }
                }
                Instr::Sub => {
                    top -= 1;
                    let (a, b) = (top - 1, top);
                    for j in 0..slot {
                        buf[a * slot + j] -= buf[b * slot + j];
                    }
                }
                Instr::Mul => {
                    top -= 1;
                    let (sa, sb) = ((top - 1) * slot, top * slot);
                    let (va, vb) = (buf[sa], buf[sb]);
                    // Hessian first: it reads both raw gradients.
                    for i in 0..d {
                        let gai = buf[sa + 1 + i];
                        let gbi = buf[sb + 1 + i];
                        for j in 0..d {
                            let h = sa + 1 + d + i * d + j;
                            buf[h] = va * buf[sb + 1 + d + i * d + j]
                                + vb * buf[h]
                                + gai * buf[sb + 1 + j]
                                + gbi * buf[sa + 1 + j];
                        }
                    }
                    for j in 0..d {
                        buf[sa + 1 + j] = va * buf[sb + 1 + j] + vb * buf[sa + 1 + j];
                    }
                    buf[sa] = va * vb;
                }
                Instr::Div => {
                    top -= 1;
                    let (sa, sb) = ((top - 1) * slot, top * slot);
                    let (va, vb) = (buf[sa], buf[sb]);
                    if vb == 0.0 {
                        return Err(domain_error("division by zero", va));
                    }
                    let v = va / vb;
                    // New gradient first: the Hessian formula uses it.
                    for j in 0..d {
                        buf[sa + 1 + j] = (buf[sa + 1 + j] - v * buf[sb + 1 + j]) / vb;
                    }
                    for i in 0..d {
                        let gi = buf[sa + 1 + i];
                        for j in 0..d {
                            let h = sa + 1 + d + i * d + j;
                            buf[h] = (buf[h]
                                - v * buf[sb + 1 + d + i * d + j]
                                - gi * buf[sb + 1 + j]
                                - buf[sa + 1 + j] * buf[sb + 1 + i])
                                / vb;
                        }
                    }
                    buf[sa] = v;
                }
                _ => {
                    let sa = (top - 1) * slot;
                    let va = buf[sa];
                    let (v, f1, f2) = unary_d2(*instr, va)?;
                    for i in 0..d {
                        let gai = buf[sa + 1 + i];
                        for j in 0..d {
                            let h = sa + 1 + d + i * d + j;
                            buf[h] = f1 * buf[h] + f2 * gai * buf[sa + 1 + j];
                        }
                    }
                    for j in 0..d {
                        buf[sa + 1 + j] *= f1;
                    }
                    buf[sa] = v;
                }
            }
        }
        grad.copy_from_slice(&buf[1..1 + d]);
        hess.copy_from_slice(&buf[1 + d..1 + d + d * d]);
        Ok(buf[0])
    }
}

fn unary_d1(instr: Instr, a: f64) -> Result<(f64, f64)> {
    let (v, f1, _) = unary_d2(instr, a)?;
    Ok((v, f1))
}

/// Value, first, and second derivative of a unary operation at `a`.
fn unary_d2(instr: Instr, a: f64) -> Result<(f64, f64, f64)> {
    match instr {
        Instr::Neg => Ok((-a, -1.0, 0.0)),
        Instr::Sin => Ok((a.sin(), a.cos(), -a.sin())),
        Instr::Cos => Ok((a.cos(), -a.sin(), -a.cos())),
        Instr::Exp => {
            let e = a.exp();
            Ok((e, e, e))
        }
        Instr::Ln => {
            if a <= 0.0 {
                return Err(domain_error("ln of non-positive value", a));
            }
            Ok((a.ln(), 1.0 / a, -1.0 / (a * a)))
        }
        Instr::Sqrt => {
            if a < 0.0 {
                return Err(domain_error("sqrt of negative value", a));
            }
            let r = a.sqrt();
            Ok((r, 0.5 / r, -0.25 / (r * a)))
        }
        Instr::PowI(n) => {
            if n < 0 && a == 0.0 {
                return Err(domain_error("zero raised to a negative power", a));
            }
            let v = a.powi(n);
            let f1 = if n == 0 {
                0.0
            } else {
                n as f64 * a.powi(n - 1)
            };
            let f2 = if n == 0 || n == 1 {
                0.0
            } else {
                (n as f64) * (n as f64 - 1.0) * a.powi(n - 2)
            };
            Ok((v, f1, f2))
        }
        _ => unreachable!("binary instruction in unary path"),
    }
}

fn emit(e: &Expr, m: usize, k: usize, out: &mut Vec<Instr>) -> Result<()> {
    match e {
        Expr::Num(v) => out.push(Instr::Const(*v)),
        Expr::Var(v) => out.push(Instr::Load(env_index(*v, m, k)?)),
        Expr::Unary(op, a) => {
            emit(a, m, k, out)?;
            out.push(match op {
                UnaryOp::Neg => Instr::Neg,
                UnaryOp::Sin => Instr::Sin,
                UnaryOp::Cos => Instr::Cos,
                UnaryOp::Exp => Instr::Exp,
                UnaryOp::Ln => Instr::Ln,
                UnaryOp::Sqrt => Instr::Sqrt,
            });
        }
        Expr::Binary(BinOp::Pow, a, b) => {
            if let Some(n) = integer_literal(b) {
                emit(a, m, k, out)?;
                out.push(Instr::PowI(n));
            } else {
                // a^b with a general exponent becomes exp(b * ln a); the ln
                // supplies the positivity domain check.
                emit(a, m, k, out)?;
                out.push(Instr::Ln);
                emit(b, m, k, out)?;
                out.push(Instr::Mul);
                out.push(Instr::Exp);
            }
        }
        Expr::Binary(op, a, b) => {
            emit(a, m, k, out)?;
            emit(b, m, k, out)?;
            out.push(match op {
                BinOp::Add => Instr::Add,
                BinOp::Sub => Instr::Sub,
                BinOp::Mul => Instr::Mul,
                BinOp::Div => Instr::Div,
                BinOp::Pow => unreachable!(),
            });
        }
    }
    Ok(())
}

/// Pow exponent treated as an integer power when it is a literal integer
/// (possibly negated) of reasonable magnitude.
fn integer_literal(e: &Expr) -> Option<i32> {
    match e {
        Expr::Num(v) if v.fract() == 0.0 && v.abs() <= 64.0 => Some(*v as i32),
        Expr::Unary(UnaryOp::Neg, inner) => integer_literal(inner).map(|n| -n),
        _ => None,
    }
}
