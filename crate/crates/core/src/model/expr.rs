//! Rate-law expressions.
//!
//! [`Expr`] is the reference representation: a tree over species names,
//! parameters, the reserved symbols `omega`, `light_time` and `time`, and
//! numeric literals. [`Program`] is the compiled form used in the simulation
//! hot loops: names are resolved to indices, everything that does not depend
//! on the state is folded, and the result is a small stack program.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};

pub const OMEGA: &str = "omega";
pub const LIGHT: &str = "light_time";
pub const TIME: &str = "time";

pub fn is_reserved(name: &str) -> bool {
    matches!(name, OMEGA | LIGHT | TIME | "floor" | "H")
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
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => pow(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Floor,
    /// Heaviside step with H(0) = 0.
    Heaviside,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Floor => "floor",
            Func::Heaviside => "H",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Floor => x.floor(),
            Func::Heaviside => heaviside(x),
        }
    }
}

#[inline]
pub fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn pow(base: f64, exponent: f64) -> f64 {
    if exponent == 2.0 {
        base * base
    } else {
        base.powf(exponent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

// Builder helpers, mostly used by the built-in model.
impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, a: Expr) -> Self {
        Expr::Call(f, Box::new(a))
    }

    pub fn pow(self, e: Expr) -> Self {
        Expr::bin(BinOp::Pow, self, e)
    }
}

macro_rules! impl_op {
    ($tr:ident, $method:ident, $op:expr) => {
        impl std::ops::$tr for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::bin($op, self, rhs)
            }
        }
    };
}
impl_op!(Add, add, BinOp::Add);
impl_op!(Sub, sub, BinOp::Sub);
impl_op!(Mul, mul, BinOp::Mul);
impl_op!(Div, div, BinOp::Div);

impl Expr {
    /// Every identifier appearing in the expression, reserved symbols included.
    pub fn identifiers(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.visit_identifiers(&mut |name| {
            out.insert(name);
        });
        out
    }

    fn visit_identifiers<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => f(name),
            Expr::Neg(a) | Expr::Call(_, a) => a.visit_identifiers(f),
            Expr::Bin(_, a, b) => {
                a.visit_identifiers(f);
                b.visit_identifiers(f);
            }
        }
    }

    /// Reference interpreter. `lookup` must bind every identifier.
    pub fn eval(&self, lookup: &impl Fn(&str) -> f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => lookup(name),
            Expr::Neg(a) => -a.eval(lookup),
            Expr::Bin(op, a, b) => op.apply(a.eval(lookup), b.eval(lookup)),
            Expr::Call(f, a) => f.apply(a.eval(lookup)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 => 3,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Bin(op, ..) => op.precedence(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "(-{})", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Neg(a) => {
                f.write_str("-")?;
                child(f, a, a.precedence() < 3)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                // `+ - * /` associate left, `^` associates right.
                let (lp, rp) = if *op == BinOp::Pow {
                    (a.precedence() <= p, b.precedence() < p)
                } else {
                    (a.precedence() < p, b.precedence() <= p)
                };
                child(f, a, lp)?;
                write!(f, " {} ", op.symbol())?;
                child(f, b, rp)
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
}

struct Lexed {
    tok: Tok,
    col: usize,
}

fn lex(src: &str, line: usize, col0: usize) -> Result<Vec<Lexed>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (byte, c) = chars[i];
        let col = col0 + src[..byte].chars().count();
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = byte;
            let mut j = i;
            while j < chars.len() && (chars[j].1.is_ascii_digit() || chars[j].1 == '.') {
                j += 1;
            }
            // exponent part
            if j < chars.len() && (chars[j].1 == 'e' || chars[j].1 == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k].1 == '+' || chars[k].1 == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].1.is_ascii_digit() {
                    while k < chars.len() && chars[k].1.is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let end = if j < chars.len() { chars[j].0 } else { src.len() };
            let text = &src[start..end];
            let v: f64 = text.parse().map_err(|_| Error::Syntax {
                line,
                column: col,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Lexed { tok: Tok::Num(v), col });
            i = j;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = byte;
            let mut j = i;
            while j < chars.len() && (chars[j].1.is_alphanumeric() || chars[j].1 == '_') {
                j += 1;
            }
            let end = if j < chars.len() { chars[j].0 } else { src.len() };
            out.push(Lexed {
                tok: Tok::Ident(src[start..end].to_string()),
                col,
            });
            i = j;
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                return Err(Error::Syntax {
                    line,
                    column: col,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push(Lexed { tok, col });
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |l| l.col)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column: self.col(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            // right associative, binds tighter than unary minus on its left
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.err("unexpected end of expression"));
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "floor" => Some(Func::Floor),
                    "H" => Some(Func::Heaviside),
                    _ => None,
                };
                match func {
                    Some(func) => {
                        if self.peek() != Some(&Tok::LParen) {
                            return Err(self.err(format!("expected `(` after `{name}`")));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        self.expect_rparen()?;
                        Ok(Expr::call(func, arg))
                    }
                    None => Ok(Expr::Var(name)),
                }
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Op(c) => Err(self.err(format!("unexpected operator `{c}`"))),
            Tok::RParen => Err(self.err("unexpected `)`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err("expected `)`"))
        }
    }
}

/// Parses an expression. `line` and `col` locate `src` inside a larger
/// document (1-based) so syntax errors point at the right place.
pub fn parse_expr_at(src: &str, line: usize, col: usize) -> Result<Expr> {
    let toks = lex(src, line, col)?;
    let mut p = Parser {
        toks,
        pos: 0,
        line,
        end_col: col + src.chars().count(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input after expression"));
    }
    Ok(e)
}

pub fn parse_expr(src: &str) -> Result<Expr> {
    parse_expr_at(src, 1, 1)
}

// ---------------------------------------------------------------------------
// Compilation

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Species(u32),
    Light,
    Time,
    Neg,
    Bin(BinOp),
    Call(Func),
}

/// A state-dependent expression compiled against fixed parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
}

/// Name resolution for compilation.
pub struct Scope<'a> {
    pub species: &'a HashMap<String, usize>,
    pub parameters: &'a HashMap<String, f64>,
    pub omega: f64,
    /// When set, `light_time` is folded to this value.
    pub light: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Folded {
    Const(f64),
    Species(usize),
    Light,
    Time,
    Neg(Box<Folded>),
    Bin(BinOp, Box<Folded>, Box<Folded>),
    Call(Func, Box<Folded>),
}

fn fold(e: &Expr, scope: &Scope<'_>) -> Result<Folded> {
    Ok(match e {
        Expr::Num(v) => Folded::Const(*v),
        Expr::Var(name) => match name.as_str() {
            OMEGA => Folded::Const(scope.omega),
            LIGHT => match scope.light {
                Some(l) => Folded::Const(l),
                None => Folded::Light,
            },
            TIME => Folded::Time,
            _ => {
                if let Some(&i) = scope.species.get(name) {
                    Folded::Species(i)
                } else if let Some(&v) = scope.parameters.get(name) {
                    Folded::Const(v)
                } else {
                    return Err(Error::UndeclaredReference {
                        kind: "identifier",
                        name: name.clone(),
                    });
                }
            }
        },
        Expr::Neg(a) => match fold(a, scope)? {
            Folded::Const(v) => Folded::Const(-v),
            a => Folded::Neg(Box::new(a)),
        },
        Expr::Call(f, a) => match fold(a, scope)? {
            Folded::Const(v) => Folded::Const(f.apply(v)),
            a => Folded::Call(*f, Box::new(a)),
        },
        Expr::Bin(op, a, b) => {
            let a = fold(a, scope)?;
            let b = fold(b, scope)?;
            match (op, a, b) {
                (_, Folded::Const(x), Folded::Const(y)) => Folded::Const(op.apply(x, y)),
                // Rate terms are finite on valid states, so annihilation by an
                // exact zero (e.g. a light-gated branch) is sound.
                (BinOp::Mul, Folded::Const(z), _) | (BinOp::Mul, _, Folded::Const(z))
                    if z == 0.0 =>
                {
                    Folded::Const(0.0)
                }
                (BinOp::Mul, Folded::Const(one), x) | (BinOp::Mul, x, Folded::Const(one))
                    if one == 1.0 =>
                {
                    x
                }
                (BinOp::Add, Folded::Const(z), x) | (BinOp::Add, x, Folded::Const(z))
                    if z == 0.0 =>
                {
                    x
                }
                (BinOp::Sub, x, Folded::Const(z)) if z == 0.0 => x,
                (BinOp::Div, x, Folded::Const(one)) if one == 1.0 => x,
                (BinOp::Div, Folded::Const(z), _) if z == 0.0 => Folded::Const(0.0),
                (BinOp::Pow, x, Folded::Const(one)) if one == 1.0 => x,
                (op, a, b) => Folded::Bin(*op, Box::new(a), Box::new(b)),
            }
        }
    })
}

fn emit(f: &Folded, ops: &mut Vec<Op>) -> usize {
    match f {
        Folded::Const(v) => {
            ops.push(Op::Const(*v));
            1
        }
        Folded::Species(i) => {
            ops.push(Op::Species(*i as u32));
            1
        }
        Folded::Light => {
            ops.push(Op::Light);
            1
        }
        Folded::Time => {
            ops.push(Op::Time);
            1
        }
        Folded::Neg(a) => {
            let d = emit(a, ops);
            ops.push(Op::Neg);
            d
        }
        Folded::Call(func, a) => {
            let d = emit(a, ops);
            ops.push(Op::Call(*func));
            d
        }
        Folded::Bin(op, a, b) => {
            let da = emit(a, ops);
            let db = emit(b, ops);
            ops.push(Op::Bin(*op));
            da.max(db + 1)
        }
    }
}

const INLINE_STACK: usize = 32;

impl Program {
    pub fn compile(e: &Expr, scope: &Scope<'_>) -> Result<Program> {
        let folded = fold(e, scope)?;
        let mut ops = Vec::new();
        let depth = emit(&folded, &mut ops);
        Ok(Program { ops, depth })
    }

    /// Constant value if the program does not depend on state, light or time.
    pub fn as_constant(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(v)] => Some(*v),
            _ => None,
        }
    }

    pub fn species(&self) -> BTreeSet<usize> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Species(i) => Some(*i as usize),
                _ => None,
            })
            .collect()
    }

    pub fn uses_light(&self) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::Light))
    }

    pub fn uses_time(&self) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::Time))
    }

    #[inline]
    pub fn eval(&self, state: &[f64], light: f64, time: f64) -> f64 {
        if self.depth <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            self.run(&mut stack, state, light, time)
        } else {
            let mut stack = vec![0.0f64; self.depth];
            self.run(&mut stack, state, light, time)
        }
    }

    #[inline]
    fn run(&self, stack: &mut [f64], state: &[f64], light: f64, time: f64) -> f64 {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Species(i) => {
                    stack[sp] = state[i as usize];
                    sp += 1;
                }
                Op::Light => {
                    stack[sp] = light;
                    sp += 1;
                }
                Op::Time => {
                    stack[sp] = time;
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Call(f) => stack[sp - 1] = f.apply(stack[sp - 1]),
                Op::Bin(op) => {
                    sp -= 1;
                    stack[sp - 1] = op.apply(stack[sp - 1], stack[sp]);
                }
            }
        }
        debug_assert_eq!(sp, 1);
        stack[0]
    }
}
