//! Arithmetic expressions over `x, y, z, r`.
//!
//! Grammar (precedence climbs downwards, `+ - * /` are left-associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' number)?
//! base   := number | var | call '(' expr ')' | '(' expr ')' | '-' base
//! var    := 'x' | 'y' | 'z' | 'r'
//! call   := 'sin' | 'cos' | 'exp' | 'sqrt' | 'abs'
//! ```
//!
//! Note that `-x^2` parses as `(-x)^2`: unary minus belongs to `base`.

use std::fmt;

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Z,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Constant exponent.
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bindings {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: f64,
}

impl Bindings {
    pub fn at(p: [f64; 3]) -> Self {
        Self { x: p[0], y: p[1], z: p[2], r: (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() }
    }

    pub fn get(&self, v: Var) -> f64 {
        match v {
            Var::X => self.x,
            Var::Y => self.y,
            Var::Z => self.z,
            Var::R => self.r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical(String),
    Syntax { expected: String, found: String },
    UnknownIdentifier(String),
}

/// Parse failure at a 1-based character column of the expression text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of a negative number")]
    NegativeSqrt,
    #[error("non-finite intermediate value")]
    NonFinite,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::R => "r",
        }
    }
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn apply(self, v: f64) -> Result<f64, EvalError> {
        match self {
            Func::Sin => Ok(v.sin()),
            Func::Cos => Ok(v.cos()),
            Func::Exp => Ok(v.exp()),
            Func::Sqrt if v < 0.0 => Err(EvalError::NegativeSqrt),
            Func::Sqrt => Ok(v.sqrt()),
            Func::Abs => Ok(v.abs()),
        }
    }
}

impl BinOp {
    pub fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        match self {
            BinOp::Add => Ok(a + b),
            BinOp::Sub => Ok(a - b),
            BinOp::Mul => Ok(a * b),
            BinOp::Div if b == 0.0 => Err(EvalError::DivisionByZero),
            BinOp::Div => Ok(a / b),
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Integer exponents use repeated multiplication, others `powf`.
pub fn power(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= 1024.0 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of expression".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' => i += 1,
            '+' | '*' | '/' | '^' | '-' => {
                out.push((Tok::Op(c), col));
                i += 1;
            }
            '\u{2212}' => {
                out.push((Tok::Op('-'), col));
                i += 1;
            }
            '\u{00d7}' => {
                out.push((Tok::Op('*'), col));
                i += 1;
            }
            '\u{00f7}' => {
                out.push((Tok::Op('/'), col));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, col));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, col));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => out.push((Tok::Num(v), col)),
                    _ => {
                        return Err(ParseError {
                            column: col,
                            kind: ParseErrorKind::Lexical(format!("malformed number `{s}`")),
                        })
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), col));
            }
            other => {
                return Err(ParseError {
                    column: col,
                    kind: ParseErrorKind::Lexical(format!("unexpected character {other:?}")),
                })
            }
        }
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn column(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, expected: &str) -> ParseError {
        ParseError {
            column: self.column(),
            kind: ParseErrorKind::Syntax { expected: expected.into(), found: self.peek().describe() },
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.syntax("shallower nesting"));
        }
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => break,
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => break,
            };
            self.bump();
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.base()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            match self.bump() {
                Tok::Num(n) => Ok(Expr::Pow(Box::new(base), n)),
                _ => {
                    self.pos -= 1;
                    Err(self.syntax("a constant exponent"))
                }
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let col = self.column();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Op('-') => {
                self.bump();
                self.depth += 1;
                if self.depth > MAX_DEPTH {
                    return Err(self.syntax("shallower nesting"));
                }
                let inner = self.base()?;
                self.depth -= 1;
                Ok(Expr::Neg(Box::new(inner)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                let var = match name.as_str() {
                    "x" => Some(Var::X),
                    "y" => Some(Var::Y),
                    "z" => Some(Var::Z),
                    "r" => Some(Var::R),
                    _ => None,
                };
                if let Some(v) = var {
                    return Ok(Expr::Var(v));
                }
                let func = match name.as_str() {
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "sqrt" => Func::Sqrt,
                    "abs" => Func::Abs,
                    _ => return Err(ParseError { column: col, kind: ParseErrorKind::UnknownIdentifier(name) }),
                };
                if *self.peek() != Tok::LParen {
                    return Err(self.syntax("`(` after function name"));
                }
                self.bump();
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            _ => Err(self.syntax("a number, variable, function call or `(`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax("`)`"))
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, depth: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.syntax("an operator or end of expression"));
    }
    Ok(e)
}

impl fmt::Display for Expr {
    /// Prints a form that reparses to the identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(v.name()),
            Expr::Neg(e) => match **e {
                Expr::Pow(..) => write!(f, "-({e})"),
                _ => write!(f, "-{e}"),
            },
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(b, n) => match **b {
                Expr::Pow(..) => write!(f, "({b})^{n:?}"),
                _ => write!(f, "{b}^{n:?}"),
            },
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Push(f64),
    Load(Var),
    Neg,
    Bin(BinOp),
    Pow(f64),
    Call(Func),
}

/// Postfix program compiled from an expression; the evaluator used on grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    max_stack: usize,
}

impl Program {
    pub fn compile(e: &Expr) -> Self {
        fn emit(e: &Expr, ops: &mut Vec<Op>) {
            match e {
                Expr::Num(v) => ops.push(Op::Push(*v)),
                Expr::Var(v) => ops.push(Op::Load(*v)),
                Expr::Neg(a) => {
                    emit(a, ops);
                    ops.push(Op::Neg);
                }
                Expr::Bin(op, a, b) => {
                    emit(a, ops);
                    emit(b, ops);
                    ops.push(Op::Bin(*op));
                }
                Expr::Pow(a, n) => {
                    emit(a, ops);
                    ops.push(Op::Pow(*n));
                }
                Expr::Call(func, a) => {
                    emit(a, ops);
                    ops.push(Op::Call(*func));
                }
            }
        }
        let mut ops = Vec::new();
        emit(e, &mut ops);
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for op in &ops {
            match op {
                Op::Push(_) | Op::Load(_) => depth += 1,
                Op::Bin(_) => depth -= 1,
                _ => {}
            }
            max_stack = max_stack.max(depth);
        }
        Self { ops, max_stack }
    }

    pub fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        let mut stack: Vec<f64> = Vec::with_capacity(self.max_stack);
        for op in &self.ops {
            let v = match *op {
                Op::Push(v) => v,
                Op::Load(var) => b.get(var),
                Op::Neg => -stack.pop().expect("compiled arity"),
                Op::Bin(bop) => {
                    let rhs = stack.pop().expect("compiled arity");
                    let lhs = stack.pop().expect("compiled arity");
                    bop.apply(lhs, rhs)?
                }
                Op::Pow(n) => power(stack.pop().expect("compiled arity"), n),
                Op::Call(func) => func.apply(stack.pop().expect("compiled arity"))?,
            };
            if !v.is_finite() {
                return Err(EvalError::NonFinite);
            }
            stack.push(v);
        }
        Ok(stack.pop().expect("non-empty program"))
    }
}

pub fn eval_expr(e: &Expr, bindings: &Bindings) -> Result<f64, EvalError> {
    Program::compile(e).eval(bindings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64, y: f64, z: f64) -> Bindings {
        Bindings::at([x, y, z])
    }

    #[test]
    fn harmonic_potential() {
        let e = parse_expr("0.5*r^2").unwrap();
        assert_eq!(eval_expr(&e, &Bindings { x: 2.0, y: 0.0, z: 0.0, r: 2.0 }).unwrap(), 2.0);
    }

    #[test]
    fn trig_identity_at_zero() {
        let e = parse_expr("sin(x)+cos(x)^2").unwrap();
        assert_eq!(eval_expr(&e, &at(0.0, 0.0, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn precedence_and_associativity() {
        let b = at(0.0, 0.0, 0.0);
        assert_eq!(eval_expr(&parse_expr("1 - 2 - 3").unwrap(), &b).unwrap(), -4.0);
        assert_eq!(eval_expr(&parse_expr("8 / 4 / 2").unwrap(), &b).unwrap(), 1.0);
        assert_eq!(eval_expr(&parse_expr("2 + 3 * 4^2").unwrap(), &b).unwrap(), 50.0);
        assert_eq!(eval_expr(&parse_expr("-2^2").unwrap(), &b).unwrap(), 4.0);
        assert_eq!(eval_expr(&parse_expr("2 \u{00d7} 3 \u{2212} 1").unwrap(), &b).unwrap(), 5.0);
    }

    #[test]
    fn domain_errors_are_reported() {
        let b = at(0.0, -1.0, 0.0);
        assert_eq!(eval_expr(&parse_expr("1/x").unwrap(), &b), Err(EvalError::DivisionByZero));
        assert_eq!(eval_expr(&parse_expr("sqrt(y)").unwrap(), &b), Err(EvalError::NegativeSqrt));
        assert_eq!(eval_expr(&parse_expr("exp(1000)").unwrap(), &b), Err(EvalError::NonFinite));
    }

    #[test]
    fn unknown_identifier_is_positioned() {
        let err = parse_expr("0.5*k*r^2").unwrap_err();
        assert_eq!(err.column, 5);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("k".into()));
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "1 +", "(x", "sin x", "x ^ y", "2 3", "1e999", "x $ 2", ")"] {
            assert!(parse_expr(bad).is_err(), "{bad:?} should fail");
        }
        let deep = "(".repeat(10_000) + "x" + &")".repeat(10_000);
        assert!(parse_expr(&deep).is_err());
        let negs = "-".repeat(10_000) + "x";
        assert!(parse_expr(&negs).is_err());
    }

    #[test]
    fn display_reparses() {
        for src in ["-x^2", "-(x^2)", "(x^2)^3", "sqrt(abs(x - y)) / (1 + r)", "--x", "1e-7 * exp(-r)"] {
            let e = parse_expr(src).unwrap();
            assert_eq!(parse_expr(&e.to_string()).unwrap(), e, "{src}");
        }
    }
}
