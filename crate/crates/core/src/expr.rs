//! A small arithmetic-expression language for user-supplied weight functions.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x1' | 'x2' | '|x|' | '|' expr '|'
//!         | ('sin' | 'cos' | 'exp' | 'log') '(' expr ')' | '(' expr ')'
//! ```
//!
//! `−` and `×` are accepted as aliases of `-` and `*`. Gradients are exact,
//! computed by forward-mode differentiation.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::grid::Point;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X1,
    X2,
    Norm,
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
}

/// Value with its gradient in `(x1, x2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; 2],
}

impl Dual {
    fn c(v: f64) -> Self {
        Self { v, d: [0.0; 2] }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        Self {
            v,
            d: [dv * self.d[0], dv * self.d[1]],
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        self + (-o)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: [-self.d[0], -self.d[1]],
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
            ],
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        Dual {
            v: self.v * inv,
            d: [
                (self.d[0] * o.v - self.v * o.d[0]) * inv * inv,
                (self.d[1] * o.v - self.v * o.d[1]) * inv * inv,
            ],
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if let Some(t) = p.tokens.get(p.pos) {
            return Err(Error::Expression {
                offset: t.offset,
                message: format!("unexpected {:?}", t.kind),
            });
        }
        Ok(e)
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.eval_dual(x).v
    }

    pub fn eval_dual(&self, x: Point) -> Dual {
        match self {
            Expr::Num(v) => Dual::c(*v),
            Expr::X1 => Dual { v: x[0], d: [1.0, 0.0] },
            Expr::X2 => Dual { v: x[1], d: [0.0, 1.0] },
            Expr::Norm => {
                let r = x[0].hypot(x[1]);
                Dual {
                    v: r,
                    d: [x[0] / r, x[1] / r],
                }
            }
            Expr::Neg(e) => -e.eval_dual(x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval_dual(x), b.eval_dual(x));
                match op {
                    Op::Add => a + b,
                    Op::Sub => a - b,
                    Op::Mul => a * b,
                    Op::Div => a / b,
                    Op::Pow => {
                        if b.d == [0.0, 0.0] {
                            a.chain(a.v.powf(b.v), b.v * a.v.powf(b.v - 1.0))
                        } else {
                            let ln = a.chain(a.v.ln(), 1.0 / a.v);
                            let e = b * ln;
                            e.chain(e.v.exp(), e.v.exp())
                        }
                    }
                }
            }
            Expr::Call(f, e) => {
                let a = e.eval_dual(x);
                match f {
                    Func::Sin => a.chain(a.v.sin(), a.v.cos()),
                    Func::Cos => a.chain(a.v.cos(), -a.v.sin()),
                    Func::Exp => a.chain(a.v.exp(), a.v.exp()),
                    Func::Log => a.chain(a.v.ln(), 1.0 / a.v),
                    Func::Abs => a.chain(a.v.abs(), if a.v < 0.0 { -1.0 } else { 1.0 }),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    kind: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (off, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = k;
            while k < chars.len() && (chars[k].1.is_ascii_digit() || chars[k].1 == '.') {
                k += 1;
            }
            if k < chars.len() && (chars[k].1 == 'e' || chars[k].1 == 'E') {
                let save = k;
                k += 1;
                if k < chars.len() && (chars[k].1 == '+' || chars[k].1 == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].1.is_ascii_digit() {
                    while k < chars.len() && chars[k].1.is_ascii_digit() {
                        k += 1;
                    }
                } else {
                    k = save;
                }
            }
            let text: String = chars[start..k].iter().map(|c| c.1).collect();
            let v = text.parse::<f64>().map_err(|_| Error::Expression {
                offset: off,
                message: format!("bad number '{text}'"),
            })?;
            out.push(Token { kind: Tok::Num(v), offset: off });
        } else if c.is_ascii_alphabetic() {
            let start = k;
            while k < chars.len() && chars[k].1.is_ascii_alphanumeric() {
                k += 1;
            }
            let text: String = chars[start..k].iter().map(|c| c.1).collect();
            out.push(Token { kind: Tok::Ident(text), offset: off });
        } else {
            let sym = match c {
                '−' => '-',
                '×' => '*',
                '+' | '-' | '*' | '/' | '^' | '(' | ')' | '|' => c,
                _ => {
                    return Err(Error::Expression {
                        offset: off,
                        message: format!("unexpected character '{c}'"),
                    })
                }
            };
            out.push(Token { kind: Tok::Sym(sym), offset: off });
            k += 1;
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
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

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Bin(Op::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Sym('|')) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::Ident("x".into()))
                    && self.tokens.get(self.pos + 1).map(|t| &t.kind) == Some(&Tok::Sym('|'))
                {
                    self.pos += 2;
                    return Ok(Expr::Norm);
                }
                let e = self.expr()?;
                self.expect('|')?;
                Ok(Expr::Call(Func::Abs, Box::new(e)))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "x1" => Ok(Expr::X1),
                    "x2" => Ok(Expr::X2),
                    "sin" | "cos" | "exp" | "log" => {
                        let f = match name.as_str() {
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            "exp" => Func::Exp,
                            _ => Func::Log,
                        };
                        self.expect('(')?;
                        let e = self.expr()?;
                        self.expect(')')?;
                        Ok(Expr::Call(f, Box::new(e)))
                    }
                    _ => {
                        self.pos -= 1;
                        self.err(format!("unknown identifier '{name}'"))
                    }
                }
            }
            Some(t) => self.err(format!("unexpected {t:?}")),
            None => self.err("unexpected end of expression"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 + 2 * 3 ^ 2 ^ 0.5 - 4 / 2").unwrap();
        assert!(close(e.eval([0.0, 0.0]), 1.0 + 2.0 * 3f64.powf(2f64.sqrt()) - 2.0));
        assert!(close(Expr::parse("-2^2").unwrap().eval([0.0, 0.0]), -4.0));
        assert!(close(Expr::parse("2 − 3 × 4").unwrap().eval([0.0, 0.0]), -10.0));
    }

    #[test]
    fn quadratic_weight_and_gradient() {
        let e = Expr::parse("|x|^2 - 1").unwrap();
        let d = e.eval_dual([2.0, 0.0]);
        assert!(close(d.v, 3.0));
        assert!(close(d.d[0], 4.0) && close(d.d[1], 0.0));
        let e = Expr::parse("x1^2 + x2^2 - 1").unwrap();
        assert_eq!(e.eval_dual([0.3, -1.2]).d, [0.6, -2.4]);
    }

    #[test]
    fn functions_and_abs() {
        let e = Expr::parse("sin(x1) * exp(x2) + log(|x|) + |x1 - 3| + cos(0)").unwrap();
        let x: [f64; 2] = [0.4, 0.7];
        let r = x[0].hypot(x[1]);
        let v = x[0].sin() * x[1].exp() + r.ln() + 2.6 + 1.0;
        let d = e.eval_dual(x);
        assert!(close(d.v, v));
        let dx1 = x[0].cos() * x[1].exp() + x[0] / (r * r) - 1.0;
        assert!(close(d.d[0], dx1));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let e = Expr::parse("(x1 * x2)^x1 + 2e-1 * |x|").unwrap();
        let x = [1.3, 0.8];
        let h = 1e-6;
        let d = e.eval_dual(x);
        let fd1 = (e.eval([x[0] + h, x[1]]) - e.eval([x[0] - h, x[1]])) / (2.0 * h);
        let fd2 = (e.eval([x[0], x[1] + h]) - e.eval([x[0], x[1] - h])) / (2.0 * h);
        assert!((d.d[0] - fd1).abs() < 1e-7 && (d.d[1] - fd2).abs() < 1e-7);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        assert!(matches!(Expr::parse("x1 +"), Err(Error::Expression { .. })));
        assert!(matches!(Expr::parse("foo(x1)"), Err(Error::Expression { offset: 0, .. })));
        assert!(matches!(Expr::parse("(x1"), Err(Error::Expression { .. })));
        assert!(matches!(Expr::parse("x1 $ 2"), Err(Error::Expression { offset: 3, .. })));
    }
}
