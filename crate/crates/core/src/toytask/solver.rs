//! Exhaustive Countdown solver by repeated pair merging.
//!
//! Any binary expression tree over a multiset of operands can be built by
//! repeatedly replacing two values with their combination, so merging every
//! pair under every operator (both orders for `-` and `/`) enumerates every
//! value reachable by an expression that uses each operand exactly once.

use std::collections::BTreeMap;

use super::expr::{Expr, Op};

fn merge_all(items: &mut Vec<(i64, Expr)>, visit: &mut dyn FnMut(i64, &Expr)) {
    if items.len() == 1 {
        visit(items[0].0, &items[0].1);
        return;
    }
    let n = items.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (b, eb) = items.remove(j);
            let (a, ea) = items.remove(i);
            for op in Op::ALL {
                let orders: &[bool] = match op {
                    Op::Add | Op::Mul => &[false],
                    Op::Sub | Op::Div => &[false, true],
                };
                for &swap in orders {
                    let (x, ex, y, ey) = if swap {
                        (b, &eb, a, &ea)
                    } else {
                        (a, &ea, b, &eb)
                    };
                    if let Some(v) = op.apply(x, y) {
                        items.push((v, Expr::bin(op, ex.clone(), ey.clone())));
                        merge_all(items, visit);
                        items.pop();
                    }
                }
            }
            items.insert(i, (a, ea));
            items.insert(j, (b, eb));
        }
    }
}

/// Every value in `range` reachable from `operands`, each with one witness
/// expression (the first found).
pub fn reachable(operands: &[i64], range: std::ops::RangeInclusive<i64>) -> BTreeMap<i64, Expr> {
    let mut out = BTreeMap::new();
    if operands.is_empty() {
        return out;
    }
    let mut items: Vec<(i64, Expr)> = operands.iter().map(|&n| (n, Expr::Num(n))).collect();
    merge_all(&mut items, &mut |v, e| {
        if range.contains(&v) {
            out.entry(v).or_insert_with(|| e.clone());
        }
    });
    out
}

/// One expression over `operands` that evaluates exactly to `target`.
pub fn solve(operands: &[i64], target: i64) -> Option<Expr> {
    reachable(operands, target..=target).remove(&target)
}

/// A solution that keeps the operands in their given order and applies the
/// operators left to right, `((a ∘ b) ∘ c) ∘ d`, if one exists. The first
/// operator sequence in `+ - * /` order wins.
pub fn solve_in_order(operands: &[i64], target: i64) -> Option<Expr> {
    fn go(acc: (i64, Expr), rest: &[i64], target: i64) -> Option<Expr> {
        let Some((&next, rest)) = rest.split_first() else {
            return (acc.0 == target).then_some(acc.1);
        };
        Op::ALL.iter().find_map(|&op| {
            let v = op.apply(acc.0, next)?;
            go((v, Expr::bin(op, acc.1.clone(), Expr::Num(next))), rest, target)
        })
    }
    let (&first, rest) = operands.split_first()?;
    go((first, Expr::Num(first)), rest, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_order_solution() {
        let e = solve_in_order(&[3, 7, 12, 5], 115).unwrap();
        assert_eq!(e.to_string(), "(3+7)*12-5");
        assert!(solve_in_order(&[2, 3], 1).is_none());
        assert_eq!(solve_in_order(&[3, 2], 1).unwrap().to_string(), "3-2");
    }

    #[test]
    fn finds_sum() {
        let e = solve(&[1, 2, 3, 4], 10).unwrap();
        assert_eq!(e.eval(), Some(10));
        let mut leaves = e.leaves();
        leaves.sort();
        assert_eq!(leaves, vec![1, 2, 3, 4]);
    }

    #[test]
    fn needs_division() {
        // 8 / (3 - 8/3) = 24 requires a rational intermediate; unreachable
        // with exact-division semantics.
        assert!(solve(&[3, 3, 8, 8], 24).is_none());
        assert!(solve(&[6, 3, 2], 4).is_some()); // 6/3*2
    }

    #[test]
    fn single_operand() {
        assert_eq!(solve(&[5], 5), Some(Expr::Num(5)));
        assert!(solve(&[5], 4).is_none());
    }
}
