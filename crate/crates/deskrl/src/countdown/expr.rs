//! Arithmetic expression parsing and exact integer evaluation for Countdown.
//!
//! Expressions use nonnegative integer literals, `+ - * /` (unicode times
//! and divide accepted), and parentheses. Evaluation is exact: division
//! requires a nonzero, exactly-dividing divisor, and overflow makes a value
//! unreachable rather than wrapping.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub fn symbol(&self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    pub fn commutative(&self) -> bool {
        matches!(self, Op::Add | Op::Mul)
    }

    /// Exact integer application; `None` when the result does not exist
    /// (inexact or zero division, overflow).
    pub fn apply(&self, lhs: i64, rhs: i64) -> Option<i64> {
        match self {
            Op::Add => lhs.checked_add(rhs),
            Op::Sub => lhs.checked_sub(rhs),
            Op::Mul => lhs.checked_mul(rhs),
            Op::Div => {
                if rhs == 0 || lhs % rhs != 0 {
                    None
                } else {
                    lhs.checked_div(rhs)
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Expression tree over integer literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(i64),
    Bin(Op, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: Op, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    /// Exact evaluation; `None` when any subexpression is unreachable.
    pub fn eval(&self) -> Option<i64> {
        match self {
            Expr::Num(n) => Some(*n),
            Expr::Bin(op, l, r) => op.apply(l.eval()?, r.eval()?),
        }
    }

    /// Literal leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<i64> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<i64>) {
        match self {
            Expr::Num(n) => out.push(*n),
            Expr::Bin(_, l, r) => {
                l.collect_leaves(out);
                r.collect_leaves(out);
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8, right_side: bool) -> fmt::Result {
        match self {
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Bin(op, l, r) => {
                let prec = op.precedence();
                // Right operand of - or / needs parens at equal precedence.
                let needs = prec < parent || (prec == parent && right_side);
                if needs {
                    write!(f, "(")?;
                }
                l.fmt_prec(f, prec, false)?;
                write!(f, " {op} ")?;
                r.fmt_prec(f, prec, true)?;
                if needs {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

/// Parses `text` into an expression tree.
pub fn parse(text: &str) -> Result<Expr> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(Error::Parse(format!(
            "unexpected trailing token at position {}",
            parser.pos
        )));
    }
    Ok(expr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Num(i64),
    Op(Op),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                chars.next();
            }
            '0'..='9' => {
                let mut value: i64 = 0;
                while let Some(&d) = chars.peek() {
                    if let Some(digit) = d.to_digit(10) {
                        value = value
                            .checked_mul(10)
                            .and_then(|v| v.checked_add(digit as i64))
                            .ok_or_else(|| Error::Parse("integer literal overflow".into()))?;
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Num(value));
            }
            '+' => {
                chars.next();
                tokens.push(Token::Op(Op::Add));
            }
            '-' | '−' => {
                chars.next();
                tokens.push(Token::Op(Op::Sub));
            }
            '*' | '×' => {
                chars.next();
                tokens.push(Token::Op(Op::Mul));
            }
            '/' | '÷' => {
                chars.next();
                tokens.push(Token::Op(Op::Div));
            }
            '(' => {
                chars.next();
                tokens.push(Token::LParen);
            }
            ')' => {
                chars.next();
                tokens.push(Token::RParen);
            }
            other => {
                return Err(Error::Parse(format!("unexpected character '{other}'")));
            }
        }
    }
    if tokens.is_empty() {
        return Err(Error::Parse("empty expression".into()));
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ (Op::Add | Op::Sub))) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(Token::Op(op @ (Op::Mul | Op::Div))) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Num(n))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(Error::Parse("missing closing parenthesis".into())),
                }
            }
            other => Err(Error::Parse(format!("expected number or '(', got {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates_reference_expression() {
        let e = parse("(37 * 14 - 56 + 65) - 61").unwrap();
        assert_eq!(e.eval(), Some(466));
        assert_eq!(e.leaves(), vec![37, 14, 56, 65, 61]);
    }

    #[test]
    fn precedence_and_parens() {
        assert_eq!(parse("2 + 3 * 4").unwrap().eval(), Some(14));
        assert_eq!(parse("(2 + 3) * 4").unwrap().eval(), Some(20));
        assert_eq!(parse("100 / 5 / 2").unwrap().eval(), Some(10));
    }

    #[test]
    fn inexact_or_zero_division_is_unreachable() {
        assert_eq!(parse("7 / 2").unwrap().eval(), None);
        assert_eq!(parse("7 / (3 - 3)").unwrap().eval(), None);
    }

    #[test]
    fn parse_errors() {
        assert!(parse("").is_err());
        assert!(parse("3 +").is_err());
        assert!(parse("(3 + 4").is_err());
        assert!(parse("3 ? 4").is_err());
        assert!(parse("3 4").is_err());
    }

    #[test]
    fn unicode_operators() {
        assert_eq!(parse("6 × 7").unwrap().eval(), Some(42));
        assert_eq!(parse("42 ÷ 6").unwrap().eval(), Some(7));
    }

    #[test]
    fn display_round_trips_through_parse() {
        for text in ["(37 * 14 - 56 + 65) - 61", "2 + 3 * 4", "100 / (5 / 5)"] {
            let e = parse(text).unwrap();
            let shown = e.to_string();
            let reparsed = parse(&shown).unwrap();
            assert_eq!(e, reparsed, "{text} -> {shown}");
            assert_eq!(e.eval(), reparsed.eval());
        }
    }
}
