//! Shared test helpers: an independent brute-force verifier oracle and
//! random trace generators that exercise both verdicts.

use adlp_core::task::{Problem, Token, ANSWER, END, SEP, THINK};
use rand::Rng;

/// Brute-force reference for the show-your-work check, written against the
/// rule itself rather than the production matcher: dynamic programming over
/// (pair index, position) decides whether the ordered, non-overlapping,
/// adjacent (THINK, digit) pairs fit before the first ANSWER.
pub fn oracle_verify(tokens: &[Token], problem: &Problem) -> bool {
    let ans = match tokens.iter().position(|&t| t == ANSWER) {
        Some(i) => i,
        None => return false,
    };
    if ans + 2 >= tokens.len() {
        return false;
    }
    if tokens[ans + 1] != Token::digit(problem.target()) || tokens[ans + 2] != END {
        return false;
    }
    let pairs: Vec<Token> = problem
        .prefix_sums()
        .iter()
        .map(|&s| Token::digit(s))
        .collect();
    // can[k][p]: pairs k.. can be matched starting at position p (within the
    // prefix before ANSWER).
    let n = pairs.len();
    let mut can = vec![vec![false; ans + 1]; n + 1];
    for p in 0..=ans {
        can[n][p] = true;
    }
    for k in (0..n).rev() {
        for p in (0..=ans).rev() {
            let mut ok = false;
            if p + 1 < ans && tokens[p] == THINK && tokens[p + 1] == pairs[k] {
                ok = can[k + 1][(p + 2).min(ans)];
            }
            if !ok && p < ans {
                ok = can[k][p + 1];
            }
            can[k][p] = ok;
        }
    }
    can[0][0]
}

/// Random trace biased to hit interesting cases: teacher traces, mutated
/// teachers (drops, swaps, injections), truncations, and raw noise.
pub fn random_trace<R: Rng>(rng: &mut R, problem: &Problem) -> Vec<Token> {
    let any_token = |rng: &mut R| -> Token {
        match rng.random_range(0..14u8) {
            d if d < 10 => Token::digit(d),
            10 => THINK,
            11 => ANSWER,
            12 => SEP,
            _ => END,
        }
    };
    match rng.random_range(0..5u8) {
        0 => adlp_core::task::teacher_trace(problem, rng.random_range(1..=4)).unwrap(),
        1 => {
            // teacher with one token dropped
            let mut t = adlp_core::task::teacher_trace(problem, rng.random_range(1..=3)).unwrap();
            let i = rng.random_range(0..t.len());
            t.remove(i);
            t
        }
        2 => {
            // teacher with one token replaced
            let mut t = adlp_core::task::teacher_trace(problem, rng.random_range(1..=3)).unwrap();
            let i = rng.random_range(0..t.len());
            t[i] = any_token(rng);
            t
        }
        3 => {
            // teacher with noise injected
            let mut t = adlp_core::task::teacher_trace(problem, rng.random_range(1..=2)).unwrap();
            for _ in 0..rng.random_range(1..4) {
                let i = rng.random_range(0..=t.len());
                t.insert(i, any_token(rng));
            }
            t
        }
        _ => {
            let len = rng.random_range(0..30);
            (0..len).map(|_| any_token(rng)).collect()
        }
    }
}
