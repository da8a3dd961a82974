//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls into the library's parser, evaluator or solver.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

/// Integer evaluation with exact division; `None` for a non-exact quotient,
/// division by zero or leaving the i64 range.
fn apply(op: char, a: i128, b: i128) -> Option<i128> {
    let v = match op {
        '+' => a + b,
        '-' => a - b,
        '*' => a * b,
        '/' => {
            if b == 0 || a % b != 0 {
                return None;
            }
            a / b
        }
        _ => unreachable!(),
    };
    (i64::MIN as i128..=i64::MAX as i128).contains(&v).then_some(v)
}

/// Character-level recursive descent over `+ - * / ( )` and decimal
/// literals. Returns the literal values in order and the value, where the
/// value is `None` if evaluation fails, and the whole result is `None` if
/// the text does not parse.
struct TextParser<'a> {
    s: &'a [u8],
    pos: usize,
    leaves: Vec<i128>,
}

impl TextParser<'_> {
    fn expr(&mut self) -> Option<Option<i128>> {
        let mut acc = self.term()?;
        while let Some(&c) = self.s.get(self.pos) {
            if c != b'+' && c != b'-' {
                break;
            }
            self.pos += 1;
            let rhs = self.term()?;
            acc = match (acc, rhs) {
                (Some(a), Some(b)) => apply(c as char, a, b),
                _ => None,
            };
        }
        Some(acc)
    }

    fn term(&mut self) -> Option<Option<i128>> {
        let mut acc = self.factor()?;
        while let Some(&c) = self.s.get(self.pos) {
            if c != b'*' && c != b'/' {
                break;
            }
            self.pos += 1;
            let rhs = self.factor()?;
            acc = match (acc, rhs) {
                (Some(a), Some(b)) => apply(c as char, a, b),
                _ => None,
            };
        }
        Some(acc)
    }

    fn factor(&mut self) -> Option<Option<i128>> {
        if self.s.get(self.pos) == Some(&b'(') {
            self.pos += 1;
            let v = self.expr()?;
            if self.s.get(self.pos) != Some(&b')') {
                return None;
            }
            self.pos += 1;
            return Some(v);
        }
        let start = self.pos;
        while self.s.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        // A literal beyond i64 is not an integer the task can use.
        let v: i64 = text.parse().ok()?;
        self.leaves.push(v as i128);
        Some(Some(v as i128))
    }
}

/// `Some((leaves, value))` when `text` is a complete expression.
pub fn parse_text(text: &str) -> Option<(Vec<i128>, Option<i128>)> {
    let mut p = TextParser {
        s: text.as_bytes(),
        pos: 0,
        leaves: Vec::new(),
    };
    let v = p.expr()?;
    (p.pos == text.len()).then_some((p.leaves, v))
}

/// Outcome reward of a detokenized response.
pub fn oracle_reward(text: &str, operands: &[i64], target: i64) -> f64 {
    const OPEN: &str = "<answer>";
    const CLOSE: &str = "</answer>";
    if text.matches(OPEN).count() != 1 || text.matches(CLOSE).count() != 1 {
        return 0.0;
    }
    let start = text.find(OPEN).unwrap() + OPEN.len();
    let end = text.find(CLOSE).unwrap();
    if end < start {
        return 0.0;
    }
    let Some((mut leaves, value)) = parse_text(&text[start..end]) else {
        return 0.0;
    };
    let mut want: Vec<i128> = operands.iter().map(|&x| x as i128).collect();
    leaves.sort();
    want.sort();
    if leaves == want && value == Some(target as i128) {
        1.0
    } else {
        0.1
    }
}

/// Every binary tree shape over `n` ordered leaves, as nested index pairs.
#[derive(Clone, Debug)]
pub enum Shape {
    Leaf(usize),
    Node(Box<Shape>, Box<Shape>),
}

pub fn shapes(lo: usize, hi: usize) -> Vec<Shape> {
    if hi - lo == 1 {
        return vec![Shape::Leaf(lo)];
    }
    let mut out = Vec::new();
    for mid in lo + 1..hi {
        for l in shapes(lo, mid) {
            for r in shapes(mid, hi) {
                out.push(Shape::Node(Box::new(l.clone()), Box::new(r)));
            }
        }
    }
    out
}

fn eval_shape(shape: &Shape, leaves: &[i64], ops: &[char], next_op: &mut usize) -> Option<i128> {
    match shape {
        Shape::Leaf(i) => Some(leaves[*i] as i128),
        Shape::Node(l, r) => {
            let a = eval_shape(l, leaves, ops, next_op);
            let b = eval_shape(r, leaves, ops, next_op);
            let op = ops[*next_op];
            *next_op += 1;
            apply(op, a?, b?)
        }
    }
}

fn permutations(items: &[i64]) -> Vec<Vec<i64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Exhaustive search over operand orders × operator choices × tree shapes.
pub fn brute_force_solvable(operands: &[i64], target: i64) -> bool {
    let n = operands.len();
    let all_shapes = shapes(0, n);
    let op_count = 4usize.pow(n as u32 - 1);
    for perm in permutations(operands) {
        for code in 0..op_count {
            let ops: Vec<char> = (0..n - 1).map(|k| ['+', '-', '*', '/'][(code >> (2 * k)) & 3]).collect();
            for s in &all_shapes {
                if eval_shape(s, &perm, &ops, &mut 0) == Some(target as i128) {
                    return true;
                }
            }
        }
    }
    false
}

/// Random fully parenthesized expression over `leaves` in the given order.
pub fn random_expression<R: Rng>(rng: &mut R, leaves: &[i64]) -> String {
    if leaves.len() == 1 {
        return leaves[0].to_string();
    }
    let mid = rng.random_range(1..leaves.len());
    let op = ['+', '-', '*', '/'][rng.random_range(0..4)];
    let l = random_expression(rng, &leaves[..mid]);
    let r = random_expression(rng, &leaves[mid..]);
    let wrap = |s: String| if s.contains(['+', '-', '*', '/']) { format!("({s})") } else { s };
    format!("{}{op}{}", wrap(l), wrap(r))
}

/// Answer body over a shuffled and sometimes perturbed copy of `operands`.
pub fn fuzz_body<R: Rng>(rng: &mut R, operands: &[i64]) -> String {
    let mut leaves = operands.to_vec();
    leaves.shuffle(rng);
    match rng.random_range(0..10) {
        0 => {
            leaves.pop();
        }
        1 => leaves.push(rng.random_range(1..=20)),
        2 => {
            let i = rng.random_range(0..leaves.len());
            leaves[i] += 1;
        }
        _ => {}
    }
    random_expression(rng, &leaves)
}

/// Wraps a body into response text with a mix of valid, unparseable and
/// badly tagged answers.
pub fn fuzz_response<R: Rng>(rng: &mut R, mut body: String) -> String {
    if rng.random_bool(0.1) {
        let junk = ["(", ")", "+", "*", "=", ","];
        let at = rng.random_range(0..=body.len());
        body.insert_str(at, junk[rng.random_range(0..junk.len())]);
    }
    let (open, close) = ("<answer>", "</answer>");
    let text = match rng.random_range(0..12) {
        0 => body,
        1 => format!("{close}{body}{open}"),
        2 => format!("{open}{body}{close}{open}"),
        3 => format!("{open}{body}"),
        4 => format!("{open}{open}{body}{close}"),
        5 => format!("12+{open}{body}{close}3"),
        6 => format!("{open}{close}"),
        _ => format!("{open}{body}{close}"),
    };
    if rng.random_bool(0.5) {
        format!("{text}<eos>")
    } else {
        text
    }
}

/// Random operands, a target and a fuzzed response. Half the time the target
/// is the body's own value so correct answers are common.
pub fn fuzz_case<R: Rng>(rng: &mut R) -> (Vec<i64>, i64, String) {
    let n = rng.random_range(3..=4);
    let operands: Vec<i64> = (0..n).map(|_| rng.random_range(1..=20)).collect();
    let body = fuzz_body(rng, &operands);
    let target = match parse_text(&body) {
        Some((_, Some(v))) if v > 0 && v <= 10_000 && rng.random_bool(0.5) => v as i64,
        _ => rng.random_range(1..=100),
    };
    let text = fuzz_response(rng, body);
    (operands, target, text)
}
