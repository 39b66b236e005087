//! Expressions over the node variables `k`, `t`, `B`, `S` and named constants.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers, identifiers and
//! the functions `exp`, `max`, `min`, `abs`.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset}")]
pub struct ExprError {
    pub message: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    Step,
    Time,
    Brownian,
    Underlying,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Max,
    Min,
    Abs,
}

/// Values of the node variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Env {
    pub k: f64,
    pub t: f64,
    pub b: f64,
    pub s: f64,
}

/// A parsed expression with constants folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    uses_s: bool,
}

impl Expr {
    pub fn parse(src: &str, constants: &BTreeMap<String, f64>) -> Result<Self, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            constants,
            uses_s: false,
            len: src.len(),
        };
        let root = p.expr()?;
        if let Some((tok, offset)) = p.tokens.get(p.pos) {
            return Err(ExprError {
                message: format!("unexpected {tok:?}"),
                offset: *offset,
            });
        }
        Ok(Self { root, uses_s: p.uses_s })
    }

    /// Whether the expression refers to `S`.
    pub fn uses_underlying(&self) -> bool {
        self.uses_s
    }

    pub fn eval(&self, env: &Env) -> f64 {
        eval(&self.root, env)
    }
}

fn eval(node: &Node, env: &Env) -> f64 {
    match node {
        Node::Num(x) => *x,
        Node::Var(Var::Step) => env.k,
        Node::Var(Var::Time) => env.t,
        Node::Var(Var::Brownian) => env.b,
        Node::Var(Var::Underlying) => env.s,
        Node::Neg(a) => -eval(a, env),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, env), eval(b, env));
            match op {
                Op::Add => x + y,
                Op::Sub => x - y,
                Op::Mul => x * y,
                Op::Div => x / y,
                Op::Pow => x.powf(y),
            }
        }
        Node::Call(f, args) => {
            let mut vals = args.iter().map(|a| eval(a, env));
            match f {
                Func::Exp => vals.next().unwrap_or(f64::NAN).exp(),
                Func::Abs => vals.next().unwrap_or(f64::NAN).abs(),
                Func::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                Func::Min => vals.fold(f64::INFINITY, f64::min),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' => {
                out.push((Tok::Op(c), i));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
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
                let value = text.parse::<f64>().map_err(|_| ExprError {
                    message: format!("bad number '{text}'"),
                    offset: start,
                })?;
                out.push((Tok::Num(value), start));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
            }
            other => {
                return Err(ExprError {
                    message: format!("unexpected character '{other}'"),
                    offset: i,
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    constants: &'a BTreeMap<String, f64>,
    uses_s: bool,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.len, |(_, o)| *o)
    }

    fn err(&self, message: impl Into<String>) -> ExprError {
        ExprError {
            message: message.into(),
            offset: self.offset(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ExprError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {tok:?}")))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { Op::Add } else { Op::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { Op::Mul } else { Op::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if let Some(Tok::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| self.err("unexpected end of expression"))?;
        match tok {
            Tok::Num(x) => {
                self.pos += 1;
                Ok(Node::Num(x))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let at = self.offset();
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    return self.call(&name, at);
                }
                match name.as_str() {
                    "k" => Ok(Node::Var(Var::Step)),
                    "t" => Ok(Node::Var(Var::Time)),
                    "B" => Ok(Node::Var(Var::Brownian)),
                    "S" => {
                        self.uses_s = true;
                        Ok(Node::Var(Var::Underlying))
                    }
                    other => self.constants.get(other).map(|&v| Node::Num(v)).ok_or(ExprError {
                        message: format!("unknown name '{other}'"),
                        offset: at,
                    }),
                }
            }
            other => Err(self.err(format!("unexpected {other:?}"))),
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Node, ExprError> {
        let (func, arity) = match name {
            "exp" => (Func::Exp, Some(1)),
            "abs" => (Func::Abs, Some(1)),
            "max" => (Func::Max, None),
            "min" => (Func::Min, None),
            other => {
                return Err(ExprError {
                    message: format!("unknown function '{other}'"),
                    offset: at,
                })
            }
        };
        self.expect(Tok::LParen)?;
        let mut args = vec![self.expr()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen)?;
        let ok = match arity {
            Some(n) => args.len() == n,
            None => !args.is_empty(),
        };
        if !ok {
            return Err(ExprError {
                message: format!("wrong number of arguments to '{name}'"),
                offset: at,
            });
        }
        Ok(Node::Call(func, args))
    }
}
