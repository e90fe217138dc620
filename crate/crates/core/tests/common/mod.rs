#![allow(dead_code)]

use emdirac::model::expr::{BinOp, Func, Var};
use emdirac::model::{Bindings, EvalError, Expr};
use rand::Rng;

pub fn random_expr(rng: &mut impl Rng, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.5) {
            let v: f64 = rng.gen_range(-4.0..4.0);
            Expr::Num((v * 1000.0).round().abs() / 1000.0)
        } else {
            Expr::Var([Var::X, Var::Y, Var::Z, Var::R][rng.gen_range(0..4)])
        };
    }
    match rng.gen_range(0..4) {
        0 => Expr::Neg(Box::new(random_expr(rng, depth - 1))),
        1 => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][rng.gen_range(0..4)];
            Expr::Bin(op, Box::new(random_expr(rng, depth - 1)), Box::new(random_expr(rng, depth - 1)))
        }
        2 => {
            let exps = [0.0, 1.0, 2.0, 3.0, 0.5, 1.5, 2.25];
            Expr::Pow(Box::new(random_expr(rng, depth - 1)), exps[rng.gen_range(0..exps.len())])
        }
        _ => {
            let f = [Func::Sin, Func::Cos, Func::Exp, Func::Sqrt, Func::Abs][rng.gen_range(0..5)];
            Expr::Call(f, Box::new(random_expr(rng, depth - 1)))
        }
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Tree-walking evaluator written against the documented semantics only.
pub fn reference_eval(e: &Expr, b: &Bindings) -> Result<f64, EvalError> {
    let v = match e {
        Expr::Num(v) => *v,
        Expr::Var(Var::X) => b.x,
        Expr::Var(Var::Y) => b.y,
        Expr::Var(Var::Z) => b.z,
        Expr::Var(Var::R) => b.r,
        Expr::Neg(a) => -reference_eval(a, b)?,
        Expr::Bin(op, l, r) => {
            let (x, y) = (reference_eval(l, b)?, reference_eval(r, b)?);
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    x / y
                }
            }
        }
        Expr::Pow(a, n) => {
            let x = reference_eval(a, b)?;
            if n.fract() == 0.0 && n.abs() <= 1024.0 {
                x.powi(*n as i32)
            } else {
                x.powf(*n)
            }
        }
        Expr::Call(f, a) => {
            let x = reference_eval(a, b)?;
            match f {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(EvalError::NegativeSqrt);
                    }
                    x.sqrt()
                }
                Func::Abs => x.abs(),
            }
        }
    };
    finite(v)
}

/// Random byte strings biased toward model-file syntax.
pub fn fuzz_input(rng: &mut impl Rng) -> Vec<u8> {
    const PIECES: &[&str] = &[
        "[grid]", "[particle]", "[potential]", "[fields]", "[numerics]", "[bogus]", "dims", "spacing", "charge",
        "mass", "V", "=", "\n", " ", "0.5", "*", "r", "^", "2", "(", ")", "-", "sin", "x", "#", ",", "1e400", "/",
        "9", "\u{2212}", "\u{00d7}", "[", "]", "position", "preset", "random", "a_x",
    ];
    let n = rng.gen_range(0..64);
    let mut out = Vec::new();
    for _ in 0..n {
        if rng.gen_bool(0.3) {
            out.push(rng.gen());
        } else {
            out.extend_from_slice(PIECES[rng.gen_range(0..PIECES.len())].as_bytes());
        }
    }
    out
}
