//! Integer arithmetic expressions over `+ - * / ( )` with exact division.

use std::fmt;

use super::vocab::{Token, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    /// Exact integer application; `None` on overflow, division by zero or a
    /// non-integral quotient.
    pub fn apply(self, a: i64, b: i64) -> Option<i64> {
        match self {
            Op::Add => a.checked_add(b),
            Op::Sub => a.checked_sub(b),
            Op::Mul => a.checked_mul(b),
            Op::Div => {
                if b == 0 || a.checked_rem(b)? != 0 {
                    None
                } else {
                    a.checked_div(b)
                }
            }
        }
    }

    fn precedence(self) -> u8 {
        match self {
            Op::Add | Op::Sub => 1,
            Op::Mul | Op::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(i64),
    Bin(Op, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: Op, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn eval(&self) -> Option<i64> {
        match self {
            Expr::Num(n) => Some(*n),
            Expr::Bin(op, l, r) => op.apply(l.eval()?, r.eval()?),
        }
    }

    /// Literal operands in left-to-right order.
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

    /// Parses a token slice. The whole slice must be consumed.
    pub fn parse(tokens: &[Token], vocab: &Vocabulary) -> Option<Expr> {
        let mut parser = Parser {
            tokens,
            vocab,
            pos: 0,
        };
        let e = parser.expr()?;
        (parser.pos == tokens.len()).then_some(e)
    }
}

/// Renders with the minimal parentheses needed to reparse the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(n) => write!(f, "{n}"),
            Expr::Bin(op, l, r) => {
                let p = op.precedence();
                let wrap_l = matches!(**l, Expr::Bin(lo, ..) if lo.precedence() < p);
                // Right operands of - and / bind tighter than their left.
                let wrap_r = matches!(**r, Expr::Bin(ro, ..)
                    if ro.precedence() < p || (ro.precedence() == p && matches!(op, Op::Sub | Op::Div)));
                if wrap_l {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, "{}", op.symbol())?;
                if wrap_r {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    vocab: &'a Vocabulary,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&'static str> {
        self.tokens.get(self.pos).map(|t| self.vocab.symbol(*t))
    }

    fn peek_op(&self, ops: &[Op]) -> Option<Op> {
        let s = self.peek()?;
        ops.iter().copied().find(|op| s.len() == 1 && s.starts_with(op.symbol()))
    }

    fn expr(&mut self) -> Option<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_op(&[Op::Add, Op::Sub]) {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Some(lhs)
    }

    fn term(&mut self) -> Option<Expr> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.peek_op(&[Op::Mul, Op::Div]) {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Some(lhs)
    }

    fn factor(&mut self) -> Option<Expr> {
        match self.peek()? {
            "(" => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek()? != ")" {
                    return None;
                }
                self.pos += 1;
                Some(e)
            }
            _ => self.number(),
        }
    }

    fn number(&mut self) -> Option<Expr> {
        let start = self.pos;
        let mut value: i64 = 0;
        while let Some(t) = self.tokens.get(self.pos) {
            if t.index() >= 10 {
                break;
            }
            // Literals that do not fit an i64 are not valid integers.
            value = value.checked_mul(10)?.checked_add(t.index() as i64)?;
            self.pos += 1;
        }
        (self.pos > start).then_some(Expr::Num(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Option<Expr> {
        let v = Vocabulary::standard();
        Expr::parse(&v.tokenize(s).unwrap(), &v)
    }

    #[test]
    fn precedence_and_parens() {
        assert_eq!(parse("2+3*4").unwrap().eval(), Some(14));
        assert_eq!(parse("(2+3)*4").unwrap().eval(), Some(20));
        assert_eq!(parse("20-5-3").unwrap().eval(), Some(12));
        assert_eq!(parse("24/4/2").unwrap().eval(), Some(3));
        assert_eq!(parse("12").unwrap().eval(), Some(12));
    }

    #[test]
    fn exact_division_only() {
        assert_eq!(parse("7/2").unwrap().eval(), None);
        assert_eq!(parse("7/(3-3)").unwrap().eval(), None);
        assert_eq!(parse("8/2").unwrap().eval(), Some(4));
    }

    #[test]
    fn malformed() {
        for s in ["", "+", "1+", "(1+2", "1+2)", "()", "1=1", "1,2", "(", "1(2)"] {
            assert!(parse(s).is_none(), "{s:?} should not parse");
        }
        assert!(parse("99999999999999999999").is_none());
    }

    #[test]
    fn display_reparses_to_same_tree() {
        let e = Expr::bin(
            Op::Sub,
            Expr::Num(10),
            Expr::bin(Op::Sub, Expr::Num(4), Expr::bin(Op::Div, Expr::Num(6), Expr::Num(3))),
        );
        let text = e.to_string();
        assert_eq!(text, "10-(4-6/3)");
        assert_eq!(parse(&text).unwrap(), e);
        assert_eq!(parse(&text).unwrap().eval(), Some(8));
    }
}
