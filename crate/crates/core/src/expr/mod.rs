//! A small arithmetic expression language for constraint and field
//! definitions in scenario files.
//!
//! Grammar (precedence low to high): `+ -`, `* /`, unary `-`, `^` (right
//! associative), calls and atoms. Identifiers are the coordinates `x1..xn`,
//! the time `t` (when enabled), named scenario parameters, and the constants
//! `pi` and `e`. Functions: `sin cos tan exp ln log sqrt`.
//!
//! Expressions compile to a postfix program evaluated over any [`Scalar`],
//! which is how gradients and second directional derivatives are obtained.

mod scalar;

use std::collections::BTreeMap;
use std::fmt;

pub use scalar::{Dual, Jet2, Scalar};

use crate::error::{Error, Result};

/// Which identifiers an expression may reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarLayout {
    /// Number of coordinates `x1..xn`.
    pub coords: usize,
    /// Whether `t` is allowed; it is placed after the coordinates.
    pub with_time: bool,
}

impl VarLayout {
    pub fn coords(n: usize) -> Self {
        Self {
            coords: n,
            with_time: false,
        }
    }

    pub fn coords_and_time(n: usize) -> Self {
        Self {
            coords: n,
            with_time: true,
        }
    }

    pub fn len(&self) -> usize {
        self.coords + usize::from(self.with_time)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply<S: Scalar>(self, a: S) -> S {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Exp => a.exp(),
            Func::Ln => a.ln(),
            Func::Sqrt => a.sqrt(),
        }
    }

    fn apply_f64(self, a: f64) -> f64 {
        self.apply(a)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    /// Constant-folds subtrees without variables.
    fn fold(self) -> Node {
        use Node::*;
        match self {
            Neg(a) => match a.fold() {
                Num(v) => Num(-v),
                a => Neg(Box::new(a)),
            },
            Add(a, b) => Self::fold_binary(*a, *b, |x, y| x + y, Add),
            Sub(a, b) => Self::fold_binary(*a, *b, |x, y| x - y, Sub),
            Mul(a, b) => Self::fold_binary(*a, *b, |x, y| x * y, Mul),
            Div(a, b) => Self::fold_binary(*a, *b, |x, y| x / y, Div),
            Pow(a, b) => Self::fold_binary(*a, *b, f64::powf, Pow),
            Call(f, a) => match a.fold() {
                Num(v) => Num(f.apply_f64(v)),
                a => Call(f, Box::new(a)),
            },
            n => n,
        }
    }

    fn fold_binary(a: Node, b: Node, op: fn(f64, f64) -> f64, rebuild: fn(Box<Node>, Box<Node>) -> Node) -> Node {
        match (a.fold(), b.fold()) {
            (Node::Num(x), Node::Num(y)) => Node::Num(op(x, y)),
            (a, b) => rebuild(Box::new(a), Box::new(b)),
        }
    }

    fn emit(&self, out: &mut Vec<Op>) {
        match self {
            Node::Num(v) => out.push(Op::Const(*v)),
            Node::Var(i) => out.push(Op::Var(*i)),
            Node::Neg(a) => {
                a.emit(out);
                out.push(Op::Neg);
            }
            Node::Add(a, b) => {
                a.emit(out);
                b.emit(out);
                out.push(Op::Add);
            }
            Node::Sub(a, b) => {
                a.emit(out);
                b.emit(out);
                out.push(Op::Sub);
            }
            Node::Mul(a, b) => {
                a.emit(out);
                b.emit(out);
                out.push(Op::Mul);
            }
            Node::Div(a, b) => {
                a.emit(out);
                b.emit(out);
                out.push(Op::Div);
            }
            Node::Pow(a, b) => {
                a.emit(out);
                match **b {
                    Node::Num(c) if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 => out.push(Op::PowI(c as i32)),
                    Node::Num(c) => out.push(Op::PowF(c)),
                    _ => {
                        b.emit(out);
                        out.push(Op::Pow);
                    }
                }
            }
            Node::Call(f, a) => {
                a.emit(out);
                out.push(Op::Call(*f));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    PowI(i32),
    PowF(f64),
    Pow,
    Call(Func),
}

/// A compiled expression.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    layout: VarLayout,
    program: Vec<Op>,
    max_stack: usize,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Expr").field(&self.source).finish()
    }
}

impl Expr {
    /// Parse and compile `source`. Parameters are substituted as constants.
    pub fn compile(source: &str, layout: VarLayout, params: &BTreeMap<String, f64>) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            layout,
            params,
        };
        let node = parser.expression()?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(Error::Expression {
                offset: tok.offset,
                message: format!("unexpected token {:?}", tok.kind),
            });
        }
        let mut program = Vec::new();
        node.fold().emit(&mut program);
        let max_stack = stack_depth(&program);
        Ok(Self {
            source: source.to_string(),
            layout,
            program,
            max_stack,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn layout(&self) -> VarLayout {
        self.layout
    }

    /// Evaluate over `inputs` laid out as `[x1..xn, t]`.
    pub fn eval<S: Scalar>(&self, inputs: &[S]) -> S {
        debug_assert_eq!(inputs.len(), self.layout.len());
        if self.max_stack <= INLINE_STACK {
            let mut stack = [S::constant(0.0); INLINE_STACK];
            self.run(inputs, &mut stack)
        } else {
            let mut stack = vec![S::constant(0.0); self.max_stack];
            self.run(inputs, &mut stack)
        }
    }

    fn run<S: Scalar>(&self, inputs: &[S], stack: &mut [S]) -> S {
        let mut sp = 0usize;
        for op in &self.program {
            match *op {
                Op::Const(c) => {
                    stack[sp] = S::constant(c);
                    sp += 1;
                }
                Op::Var(i) => {
                    stack[sp] = inputs[i];
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::PowI(n) => stack[sp - 1] = stack[sp - 1].powi(n),
                Op::PowF(c) => stack[sp - 1] = stack[sp - 1].powf(c),
                Op::Call(f) => stack[sp - 1] = f.apply(stack[sp - 1]),
                Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => {
                    sp -= 1;
                    let (a, b) = (stack[sp - 1], stack[sp]);
                    stack[sp - 1] = match op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        Op::Div => a / b,
                        _ => a.pow(b),
                    };
                }
            }
        }
        debug_assert_eq!(sp, 1);
        stack[0]
    }

    pub fn value(&self, inputs: &[f64]) -> f64 {
        self.eval(inputs)
    }

    /// Gradient with respect to the coordinates (not time), one dual pass per coordinate.
    pub fn gradient(&self, inputs: &[f64]) -> Vec<f64> {
        let mut duals: Vec<Dual> = inputs.iter().map(|&v| Dual::new(v, 0.0)).collect();
        (0..self.layout.coords)
            .map(|i| {
                duals[i].d = 1.0;
                let d = self.eval(&duals).d;
                duals[i].d = 0.0;
                d
            })
            .collect()
    }

    /// Value, first and second derivative of `s ↦ f(x + s v)` at zero.
    /// `direction` covers the coordinates only; time is held fixed.
    pub fn directional_jet(&self, inputs: &[f64], direction: &[f64]) -> Jet2 {
        let jets: Vec<Jet2> = inputs
            .iter()
            .enumerate()
            .map(|(i, &v)| Jet2::new(v, direction.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.eval(&jets)
    }
}

const INLINE_STACK: usize = 32;

fn stack_depth(program: &[Op]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for op in program {
        match op {
            Op::Const(_) | Op::Var(_) => depth += 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow => depth -= 1,
            _ => {}
        }
        max = max.max(depth);
    }
    max
}

#[derive(Clone, Debug, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Clone, Debug)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        let kind = match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => TokenKind::Plus,
            '-' => TokenKind::Minus,
            '*' => TokenKind::Star,
            '/' => TokenKind::Slash,
            '^' => TokenKind::Caret,
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v = text.parse::<f64>().map_err(|_| Error::Expression {
                    offset: start,
                    message: format!("malformed number '{text}'"),
                })?;
                out.push(Token {
                    kind: TokenKind::Num(v),
                    offset: start,
                });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Ident(src[start..i].to_string()),
                    offset: start,
                });
                continue;
            }
            other => {
                return Err(Error::Expression {
                    offset: start,
                    message: format!("unexpected character '{other}'"),
                })
            }
        };
        out.push(Token { kind, offset: start });
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    layout: VarLayout,
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.offset)
            .or_else(|| self.tokens.last().map(|t| t.offset + 1))
            .unwrap_or(0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Expression {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expression(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(TokenKind::Plus) => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(TokenKind::Minus) => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(TokenKind::Star) => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(TokenKind::Slash) => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // Unary minus binds looser than `^`: -x^2 == -(x^2).
    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(TokenKind::Minus) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(TokenKind::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(TokenKind::Caret) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            return self.err("unexpected end of expression");
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Num(v) => Ok(Node::Num(v)),
            TokenKind::LParen => {
                let inner = self.expression()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    if self.peek() != Some(&TokenKind::LParen) {
                        return self.err(format!("function '{name}' needs parenthesized argument"));
                    }
                    self.pos += 1;
                    let arg = self.expression()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                self.identifier(&name, tok.offset)
            }
            other => Err(Error::Expression {
                offset: tok.offset,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn identifier(&self, name: &str, offset: usize) -> Result<Node> {
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if idx >= 1 && idx <= self.layout.coords {
                return Ok(Node::Var(idx - 1));
            }
            return Err(Error::Expression {
                offset,
                message: format!("coordinate '{name}' out of range x1..x{}", self.layout.coords),
            });
        }
        if name == "t" {
            if self.layout.with_time {
                return Ok(Node::Var(self.layout.coords));
            }
            return Err(Error::Expression {
                offset,
                message: "time 't' is not available in this expression".into(),
            });
        }
        if let Some(v) = self.params.get(name) {
            return Ok(Node::Num(*v));
        }
        match name {
            "pi" => Ok(Node::Num(std::f64::consts::PI)),
            "e" => Ok(Node::Num(std::f64::consts::E)),
            _ => Err(Error::Expression {
                offset,
                message: format!("unknown identifier '{name}'"),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == Some(&TokenKind::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            self.err("expected ')'")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compile(src: &str, n: usize) -> Expr {
        Expr::compile(src, VarLayout::coords_and_time(n), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        let e = compile("1 + 2 * 3 ^ 2 ^ 0.5 - -x1", 1);
        let expected = 1.0 + 2.0 * 3f64.powf(2f64.powf(0.5)) + 4.0;
        assert!((e.value(&[4.0, 0.0]) - expected).abs() < 1e-12);
        assert_eq!(compile("-x1^2", 1).value(&[3.0, 0.0]), -9.0);
        assert_eq!(compile("8 / 4 / 2", 0).value(&[0.0]), 1.0);
    }

    #[test]
    fn functions_time_and_params() {
        let mut params = BTreeMap::new();
        params.insert("omega".to_string(), 0.3);
        let e = Expr::compile(
            "sin(omega*t) + cos(x2) * exp(0)",
            VarLayout::coords_and_time(2),
            &params,
        )
        .unwrap();
        let v = e.value(&[0.0, 1.0, 2.0]);
        assert!((v - ((0.6f64).sin() + 1f64.cos())).abs() < 1e-15);
    }

    #[test]
    fn gradient_of_ellipse_constraint() {
        let e = compile("x1^2/4 + x2^2 - 1", 2);
        let g = e.gradient(&[2.0, 0.5, 0.0]);
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn second_directional_derivative() {
        // f = x1^2 x2 + sin(x2); along v = (1, 2): vᵀHv = 2*x2*1 + 2*(2*x1)*1*2 - sin(x2)*4
        let e = compile("x1^2*x2 + sin(x2)", 2);
        let (x1, x2) = (0.7, -0.4);
        let jet = e.directional_jet(&[x1, x2, 0.0], &[1.0, 2.0]);
        let expected = 2.0 * x2 + 8.0 * x1 - 4.0 * x2.sin();
        assert!((jet.second_derivative() - expected).abs() < 1e-13);
    }

    #[test]
    fn variable_exponent() {
        let e = compile("x1^x2", 2);
        let g = e.gradient(&[2.0, 3.0, 0.0]);
        assert!((g[0] - 12.0).abs() < 1e-12);
        assert!((g[1] - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_offsets() {
        let layout = VarLayout::coords(2);
        let p = BTreeMap::new();
        match Expr::compile("x1 + x3", layout, &p) {
            Err(Error::Expression { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Expr::compile("x1 + t", layout, &p).is_err());
        assert!(Expr::compile("sin x1", layout, &p).is_err());
        assert!(Expr::compile("(x1 + 1", layout, &p).is_err());
        assert!(Expr::compile("x1 $ 2", layout, &p).is_err());
        assert!(Expr::compile("x1 x2", layout, &p).is_err());
    }
}
