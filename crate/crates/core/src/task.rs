//! The synthetic verbose-reasoning environment.
//!
//! A problem is a short digit sequence; the answer is the sum of the digits
//! mod 10. A response is judged correct only if it "shows its work": every
//! running prefix sum must appear as an adjacent `(THINK, digit)` pair, in
//! order, before the final `ANSWER digit END`. That rule gives every problem
//! a hard structural length floor of `2n + 3` tokens, so trading response
//! length against accuracy is meaningful by construction.
//!
//! Teacher traces repeat each scratchpad pair `r` times, producing the
//! deliberately redundant behavior the base policy is pretrained to imitate.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Number of distinct tokens: ten digits plus THINK, ANSWER, SEP, END.
pub const VOCAB_SIZE: usize = 14;

/// A token id in `0..VOCAB_SIZE`. Ids `0..=9` are the digit tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token(pub u8);

pub const THINK: Token = Token(10);
pub const ANSWER: Token = Token(11);
pub const SEP: Token = Token(12);
pub const END: Token = Token(13);

impl Token {
    pub fn digit(d: u8) -> Token {
        debug_assert!(d < 10);
        Token(d)
    }

    pub fn is_digit(self) -> bool {
        self.0 < 10
    }

    pub fn as_digit(self) -> Option<u8> {
        if self.is_digit() {
            Some(self.0)
        } else {
            None
        }
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> String {
        match self {
            THINK => "THINK".to_string(),
            ANSWER => "ANSWER".to_string(),
            SEP => "SEP".to_string(),
            END => "END".to_string(),
            Token(d) if d < 10 => format!("D{d}"),
            Token(other) => format!("?{other}"),
        }
    }

    pub fn from_name(name: &str) -> Result<Token> {
        match name {
            "THINK" => Ok(THINK),
            "ANSWER" => Ok(ANSWER),
            "SEP" => Ok(SEP),
            "END" => Ok(END),
            _ => {
                if let Some(rest) = name.strip_prefix('D') {
                    if let Ok(d) = rest.parse::<u8>() {
                        if d < 10 && rest.len() == 1 {
                            return Ok(Token(d));
                        }
                    }
                }
                Err(Error::validation(format!("unknown token name `{name}`")))
            }
        }
    }
}

/// A scratchpad-addition instance: digits, their running prefix sums mod 10,
/// and the final answer digit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Problem {
    digits: Vec<u8>,
    prefix_sums: Vec<u8>,
    target: u8,
}

impl Problem {
    pub fn from_digits(digits: Vec<u8>) -> Result<Problem> {
        if digits.is_empty() {
            return Err(Error::validation("problem needs at least one digit"));
        }
        if let Some(&bad) = digits.iter().find(|&&d| d > 9) {
            return Err(Error::validation(format!("digit {bad} out of range 0..=9")));
        }
        let mut prefix_sums = Vec::with_capacity(digits.len());
        let mut acc = 0u8;
        for &d in &digits {
            acc = (acc + d) % 10;
            prefix_sums.push(acc);
        }
        let target = *prefix_sums.last().expect("non-empty");
        Ok(Problem {
            digits,
            prefix_sums,
            target,
        })
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn prefix_sums(&self) -> &[u8] {
        &self.prefix_sums
    }

    pub fn target(&self) -> u8 {
        self.target
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// Prompt encoding: the digit tokens followed by SEP.
    pub fn prompt_tokens(&self) -> Vec<Token> {
        let mut toks: Vec<Token> = self.digits.iter().map(|&d| Token::digit(d)).collect();
        toks.push(SEP);
        toks
    }
}

/// A generated response with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub tokens: Vec<Token>,
    pub is_correct: bool,
    pub length: usize,
}

impl Trace {
    pub fn new(tokens: Vec<Token>, problem: &Problem) -> Trace {
        let is_correct = verify(&tokens, problem);
        let length = tokens.len();
        Trace {
            tokens,
            is_correct,
            length,
        }
    }
}

/// Sampling bounds for problems and teacher redundancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub redundancy_min: usize,
    pub redundancy_max: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            n_min: 2,
            n_max: 6,
            redundancy_min: 3,
            redundancy_max: 5,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min < 2 || self.n_min > self.n_max {
            return Err(Error::validation(format!(
                "problem length range must satisfy 2 <= n_min <= n_max, got [{}, {}]",
                self.n_min, self.n_max
            )));
        }
        if self.redundancy_min < 1 || self.redundancy_min > self.redundancy_max {
            return Err(Error::validation(format!(
                "redundancy range must satisfy 1 <= min <= max, got [{}, {}]",
                self.redundancy_min, self.redundancy_max
            )));
        }
        Ok(())
    }

    /// Mean teacher trace length `2·r̄·n̄ + 3` under uniform n and r.
    pub fn mean_teacher_len(&self) -> f64 {
        let n_bar = (self.n_min + self.n_max) as f64 / 2.0;
        let r_bar = (self.redundancy_min + self.redundancy_max) as f64 / 2.0;
        2.0 * r_bar * n_bar + 3.0
    }
}

/// Draw a problem with n uniform in `[n_min, n_max]` and digits uniform in 0..=9.
pub fn sample_problem<R: Rng>(rng: &mut R, n_min: usize, n_max: usize) -> Result<Problem> {
    if n_min < 2 || n_min > n_max {
        return Err(Error::validation(format!(
            "invalid problem length range [{n_min}, {n_max}]"
        )));
    }
    let n = rng.random_range(n_min..=n_max);
    let digits: Vec<u8> = (0..n).map(|_| rng.random_range(0..10u8)).collect();
    Problem::from_digits(digits)
}

/// The redundant demonstration: each scratchpad pair repeated `r` times, then
/// `ANSWER D_target END`. Total length is exactly `2·r·n + 3`.
pub fn teacher_trace(problem: &Problem, redundancy: usize) -> Result<Vec<Token>> {
    if redundancy < 1 {
        return Err(Error::validation("teacher redundancy must be >= 1"));
    }
    let mut toks = Vec::with_capacity(2 * redundancy * problem.len() + 3);
    for &s in problem.prefix_sums() {
        for _ in 0..redundancy {
            toks.push(THINK);
            toks.push(Token::digit(s));
        }
    }
    toks.push(ANSWER);
    toks.push(Token::digit(problem.target()));
    toks.push(END);
    Ok(toks)
}

/// Show-your-work verdict. True iff:
///
/// 1. the pairs `(THINK, D_{s_1}) … (THINK, D_{s_n})` occur as an ordered,
///    non-overlapping subsequence — each pair adjacent — strictly before the
///    first ANSWER token;
/// 2. the first ANSWER is immediately followed by the target digit;
/// 3. the token after the target digit is END.
///
/// Malformed sequences return false rather than erroring.
pub fn verify(tokens: &[Token], problem: &Problem) -> bool {
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
    // Greedy earliest matching of the scratchpad pairs in tokens[..ans].
    let mut pos = 0usize;
    for &s in problem.prefix_sums() {
        let want = Token::digit(s);
        loop {
            if pos + 1 >= ans {
                return false;
            }
            if tokens[pos] == THINK && tokens[pos + 1] == want {
                pos += 2;
                break;
            }
            pos += 1;
        }
    }
    true
}

/// Shortest token count any verifying trace can have: `2n + 3`.
pub fn minimal_valid_length(problem: &Problem) -> usize {
    2 * problem.len() + 3
}

/// Line format used by golden files and debug dumps:
/// prompt token names, `|`, trace token names, all space-separated.
pub fn format_example(problem: &Problem, trace_tokens: &[Token]) -> String {
    let prompt: Vec<String> = problem.prompt_tokens().iter().map(|t| t.name()).collect();
    let trace: Vec<String> = trace_tokens.iter().map(|t| t.name()).collect();
    format!("{} | {}", prompt.join(" "), trace.join(" "))
}

/// Parse the line format back into (prompt tokens, trace tokens).
pub fn parse_example(line: &str) -> Result<(Vec<Token>, Vec<Token>)> {
    let (left, right) = line
        .split_once('|')
        .ok_or_else(|| Error::validation("example line missing `|` separator"))?;
    let parse_side = |side: &str| -> Result<Vec<Token>> {
        side.split_whitespace().map(Token::from_name).collect()
    };
    Ok((parse_side(left)?, parse_side(right)?))
}
