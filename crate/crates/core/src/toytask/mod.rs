//! Countdown-style arithmetic problems: generation, serialization,
//! tokenization and outcome verification.

mod dataset;
pub mod expr;
pub mod solver;
mod vocab;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use dataset::{
    generate_dataset, generate_split, read_problems, write_problems, GenerationLimits, Mode,
};
pub use vocab::{Token, Vocabulary, ANSWER_CLOSE, ANSWER_OPEN, EOS, PAD};

use expr::Expr;

/// One Countdown instance. `operands` may contain duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: u64,
    #[serde(rename = "nums")]
    pub operands: Vec<i64>,
    pub target: i64,
}

impl Problem {
    /// Prompt text, e.g. `3,7,12,5=45`.
    pub fn prompt(&self) -> String {
        let nums: Vec<String> = self.operands.iter().map(i64::to_string).collect();
        format!("{}={}", nums.join(","), self.target)
    }

    pub fn question_tokens(&self, vocab: &Vocabulary) -> Vec<Token> {
        vocab
            .tokenize(&self.prompt())
            .expect("prompts contain only digits, commas and '='")
    }

    /// A solution expression, if one exists.
    pub fn certificate(&self) -> Option<Expr> {
        solver::solve(&self.operands, self.target)
    }
}

/// Outcome reward: 1.0 for a correct answer, 0.1 for a well-formed but wrong
/// one, 0.0 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub reward: f64,
    pub correct: bool,
    pub well_formed: bool,
}

impl OutcomeLabel {
    pub const CORRECT_REWARD: f64 = 1.0;
    pub const FORMAT_REWARD: f64 = 0.1;

    pub fn new(well_formed: bool, correct: bool) -> Self {
        debug_assert!(!correct || well_formed);
        let reward = if correct {
            Self::CORRECT_REWARD
        } else if well_formed {
            Self::FORMAT_REWARD
        } else {
            0.0
        };
        OutcomeLabel {
            reward,
            correct,
            well_formed,
        }
    }
}

/// The expression inside the single `<answer>...</answer>` span, if the
/// response has exactly one open tag, exactly one close tag after it, and a
/// parseable body.
pub fn extract_answer(response: &[Token], vocab: &Vocabulary) -> Option<Expr> {
    let open = vocab.answer_open();
    let close = vocab.answer_close();
    let mut opens = response.iter().enumerate().filter(|(_, t)| **t == open);
    let mut closes = response.iter().enumerate().filter(|(_, t)| **t == close);
    let (start, _) = opens.next()?;
    let (end, _) = closes.next()?;
    if opens.next().is_some() || closes.next().is_some() || end < start {
        return None;
    }
    Expr::parse(&response[start + 1..end], vocab)
}

fn same_multiset(a: &[i64], b: &[i64]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut counts: HashMap<i64, i64> = HashMap::new();
    for x in a {
        *counts.entry(*x).or_default() += 1;
    }
    for x in b {
        *counts.entry(*x).or_default() -= 1;
    }
    counts.values().all(|c| *c == 0)
}

/// Scores a response. Never fails: malformed input gets reward 0.0.
pub fn verify(response: &[Token], problem: &Problem, vocab: &Vocabulary) -> OutcomeLabel {
    let Some(expr) = extract_answer(response, vocab) else {
        return OutcomeLabel::new(false, false);
    };
    let correct = same_multiset(&expr.leaves(), &problem.operands)
        && expr.eval() == Some(problem.target);
    OutcomeLabel::new(true, correct)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(text: &str) -> OutcomeLabel {
        let v = Vocabulary::standard();
        let p = Problem {
            id: 0,
            operands: vec![1, 2, 3, 4],
            target: 10,
        };
        verify(&v.tokenize(text).unwrap(), &p, &v)
    }

    #[test]
    fn reward_levels() {
        assert_eq!(check("<answer>1+2+3+4</answer><eos>").reward, 1.0);
        assert_eq!(check("<answer>4*3-2*1</answer>").reward, 1.0);
        let wrong = check("<answer>2*3+4</answer><eos>");
        assert_eq!(wrong.reward, 0.1);
        assert!(wrong.well_formed && !wrong.correct);
        assert_eq!(check("1+2+3+4<eos>").reward, 0.0);
        assert_eq!(check("").reward, 0.0);
    }

    #[test]
    fn span_rules() {
        // junk outside the span is allowed
        assert_eq!(check("7=<answer>1+2+3+4</answer>9").reward, 1.0);
        assert_eq!(check("<answer>1+2+3+4</answer><answer>1</answer>").reward, 0.0);
        assert_eq!(check("</answer>1+2+3+4<answer>").reward, 0.0);
        assert_eq!(check("<answer>1+2+3+4").reward, 0.0);
        assert_eq!(check("<answer></answer>").reward, 0.0);
        assert_eq!(check("<answer>1+2+3+4<eos></answer>").reward, 0.0);
    }

    #[test]
    fn operand_multiset() {
        assert_eq!(check("<answer>1+2+3+4+0</answer>").reward, 0.1);
        assert_eq!(check("<answer>2+2+3+3</answer>").reward, 0.1);
        assert_eq!(check("<answer>(1+4)*2</answer>").reward, 0.1);
    }

    #[test]
    fn inexact_division_is_wrong_not_malformed() {
        let v = Vocabulary::standard();
        let p = Problem {
            id: 0,
            operands: vec![7, 2, 1],
            target: 4,
        };
        let l = verify(&v.tokenize("<answer>7/2+1</answer>").unwrap(), &p, &v);
        assert!(l.well_formed && !l.correct);
    }

    #[test]
    fn prompt_format() {
        let p = Problem {
            id: 3,
            operands: vec![3, 7, 12, 5],
            target: 45,
        };
        assert_eq!(p.prompt(), "3,7,12,5=45");
        assert_eq!(p.question_tokens(&Vocabulary::standard()).len(), 11);
    }
}
