//! Held-out evaluation with multi-sample decoding, and length-reduction
//! reports comparing a tuned policy against its base.

use crate::error::{Error, Result};
use crate::par;
use crate::policy::{PolicyParams, SampleConfig};
use crate::seeding;
use crate::task::{sample_problem, Problem, TaskConfig, Trace};
use serde::{Deserialize, Serialize};

/// Aggregated evaluation outcome. Length means for a category are omitted,
/// not zero-filled, when the category is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_len: f64,
    pub mean_len_correct: Option<f64>,
    pub mean_len_incorrect: Option<f64>,
    pub num_problems: usize,
    pub samples_per_problem: usize,
    pub temperature: f64,
    pub top_p: f64,
    /// Fingerprint of (problems, samples per problem); reduction reports
    /// refuse to compare reports with different fingerprints.
    pub problem_set_id: u64,
}

impl EvalReport {
    /// Flat `key = value` record, one field per line.
    pub fn to_kv_record(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("accuracy", format!("{}", self.accuracy));
        push("mean_len", format!("{}", self.mean_len));
        push(
            "mean_len_correct",
            self.mean_len_correct
                .map_or_else(|| "absent".to_string(), |v| format!("{v}")),
        );
        push(
            "mean_len_incorrect",
            self.mean_len_incorrect
                .map_or_else(|| "absent".to_string(), |v| format!("{v}")),
        );
        push("num_problems", format!("{}", self.num_problems));
        push("samples_per_problem", format!("{}", self.samples_per_problem));
        push("temperature", format!("{}", self.temperature));
        push("top_p", format!("{}", self.top_p));
        push("problem_set_id", format!("{}", self.problem_set_id));
        out
    }
}

/// Length-reduction rates (`1 - tuned/base`) and the accuracy delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub overall: f64,
    pub correct: Option<f64>,
    pub incorrect: Option<f64>,
    pub accuracy_delta: f64,
}

/// The frozen held-out problem set for a run, drawn from a dedicated stream.
pub fn eval_problems(eval_seed: u64, count: usize, task: &TaskConfig) -> Result<Vec<Problem>> {
    task.validate()?;
    if count == 0 {
        return Err(Error::validation("evaluation needs at least one problem"));
    }
    let mut rng = seeding::rng(seeding::derive(eval_seed, "problems", 0));
    (0..count)
        .map(|_| sample_problem(&mut rng, task.n_min, task.n_max))
        .collect()
}

/// Order-sensitive fingerprint of the problem set and sample count.
pub fn problem_set_id(problems: &[Problem], samples_per_problem: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u64| {
        h ^= b;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    eat(problems.len() as u64);
    eat(samples_per_problem as u64);
    for p in problems {
        eat(0xff);
        for &d in p.digits() {
            eat(d as u64 + 1);
        }
    }
    h
}

/// Aggregate traces produced by an arbitrary sampler; the oracle-policy tests
/// script this directly.
pub fn evaluate_with<F>(
    problems: &[Problem],
    samples_per_problem: usize,
    sample_cfg: &SampleConfig,
    sampler: F,
) -> Result<EvalReport>
where
    F: FnMut(&Problem, usize, usize) -> Result<Trace>,
{
    if problems.is_empty() {
        return Err(Error::validation("evaluation needs at least one problem"));
    }
    if samples_per_problem == 0 {
        return Err(Error::validation("samples per problem must be >= 1"));
    }
    let mut sampler = sampler;
    let mut correct = 0usize;
    let mut total_len = 0usize;
    let mut correct_len = 0usize;
    let mut incorrect_len = 0usize;
    let total = problems.len() * samples_per_problem;
    for (i, problem) in problems.iter().enumerate() {
        for j in 0..samples_per_problem {
            let trace = sampler(problem, i, j)?;
            total_len += trace.length;
            if trace.is_correct {
                correct += 1;
                correct_len += trace.length;
            } else {
                incorrect_len += trace.length;
            }
        }
    }
    let incorrect = total - correct;
    Ok(EvalReport {
        accuracy: correct as f64 / total as f64,
        mean_len: total_len as f64 / total as f64,
        mean_len_correct: (correct > 0).then(|| correct_len as f64 / correct as f64),
        mean_len_incorrect: (incorrect > 0).then(|| incorrect_len as f64 / incorrect as f64),
        num_problems: problems.len(),
        samples_per_problem,
        temperature: sample_cfg.temperature,
        top_p: sample_cfg.top_p,
        problem_set_id: problem_set_id(problems, samples_per_problem),
    })
}

/// Sample `k` rollouts per problem from the policy and aggregate. Rollouts
/// draw from per-(problem, sample) streams, so results are independent of
/// evaluation order and thread count.
pub fn evaluate(
    params: &PolicyParams,
    problems: &[Problem],
    samples_per_problem: usize,
    cfg: &SampleConfig,
    eval_seed: u64,
    threads: usize,
) -> Result<EvalReport> {
    cfg.validate()?;
    if problems.is_empty() {
        return Err(Error::validation("evaluation needs at least one problem"));
    }
    if samples_per_problem == 0 {
        return Err(Error::validation("samples per problem must be >= 1"));
    }
    let jobs: Vec<(usize, usize)> = (0..problems.len())
        .flat_map(|i| (0..samples_per_problem).map(move |j| (i, j)))
        .collect();
    let pool = par::build_pool(threads)?;
    let traces: Vec<Result<Trace>> = par::install(&pool, || {
        par::ordered_map(threads, &jobs, |&(i, j)| {
            let stream = seeding::derive(seeding::derive(eval_seed, "problem", i as u64), "sample", j as u64);
            let mut rng = seeding::rng(stream);
            let roll = params.sample_rollout(&problems[i], cfg, &mut rng)?;
            Ok(Trace {
                is_correct: roll.is_correct,
                length: roll.length,
                tokens: roll.tokens,
            })
        })
    });
    let mut iter = traces.into_iter();
    evaluate_with(problems, samples_per_problem, cfg, |_, _, _| {
        iter.next().expect("one trace per job")
    })
}

/// Compare a tuned report against its base over the identical problem set.
pub fn reduction_report(base: &EvalReport, tuned: &EvalReport) -> Result<ReductionReport> {
    if base.problem_set_id != tuned.problem_set_id
        || base.num_problems != tuned.num_problems
        || base.samples_per_problem != tuned.samples_per_problem
    {
        return Err(Error::ProblemSetMismatch(format!(
            "base covers {} problems x {} samples (id {:x}), tuned {} x {} (id {:x})",
            base.num_problems,
            base.samples_per_problem,
            base.problem_set_id,
            tuned.num_problems,
            tuned.samples_per_problem,
            tuned.problem_set_id,
        )));
    }
    let rate = |b: f64, t: f64| 1.0 - t / b;
    let paired = |b: Option<f64>, t: Option<f64>| match (b, t) {
        (Some(b), Some(t)) => Some(rate(b, t)),
        _ => None,
    };
    Ok(ReductionReport {
        overall: rate(base.mean_len, tuned.mean_len),
        correct: paired(base.mean_len_correct, tuned.mean_len_correct),
        incorrect: paired(base.mean_len_incorrect, tuned.mean_len_incorrect),
        accuracy_delta: tuned.accuracy - base.accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Dims;
    use crate::task::{minimal_valid_length, teacher_trace, ANSWER, END, THINK};

    fn cfg() -> SampleConfig {
        SampleConfig {
            temperature: 0.6,
            top_p: 0.95,
            max_len: 80,
        }
    }

    #[test]
    fn oracle_policy_hits_the_length_floor() {
        let task = TaskConfig::default();
        let problems = eval_problems(7, 50, &task).unwrap();
        let report = evaluate_with(&problems, 4, &cfg(), |p, _, _| {
            Ok(Trace::new(teacher_trace(p, 1).unwrap(), p))
        })
        .unwrap();
        assert_eq!(report.accuracy, 1.0);
        let floor: f64 = problems
            .iter()
            .map(|p| minimal_valid_length(p) as f64)
            .sum::<f64>()
            / problems.len() as f64;
        assert!((report.mean_len - floor).abs() < 1e-9);
        assert_eq!(report.mean_len_correct, Some(report.mean_len));
        assert_eq!(report.mean_len_incorrect, None);
    }

    #[test]
    fn end_only_policy_scores_zero() {
        let task = TaskConfig::default();
        let problems = eval_problems(7, 20, &task).unwrap();
        // A policy crafted to emit END immediately: zero parameters except a
        // large END bias on the output head.
        let dims = Dims::new(8, 12);
        let mut theta = vec![0.0; dims.param_count()];
        let n = theta.len();
        theta[n - 1] = 50.0; // END is the last vocabulary entry
        let params = PolicyParams::from_flat(dims, theta).unwrap();
        let report = evaluate(&params, &problems, 3, &cfg(), 11, 1).unwrap();
        assert_eq!(report.accuracy, 0.0);
        assert_eq!(report.mean_len, 1.0);
        assert_eq!(report.mean_len_correct, None);
        assert_eq!(report.mean_len_incorrect, Some(1.0));
    }

    #[test]
    fn evaluation_is_deterministic_in_the_seed() {
        let task = TaskConfig::default();
        let problems = eval_problems(3, 10, &task).unwrap();
        let params = PolicyParams::init(5, Dims::new(8, 12)).unwrap();
        let a = evaluate(&params, &problems, 4, &cfg(), 99, 1).unwrap();
        let b = evaluate(&params, &problems, 4, &cfg(), 99, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_evaluation_matches_serial() {
        let task = TaskConfig::default();
        let problems = eval_problems(3, 12, &task).unwrap();
        let params = PolicyParams::init(5, Dims::new(8, 12)).unwrap();
        let serial = evaluate(&params, &problems, 4, &cfg(), 99, 1).unwrap();
        let parallel = evaluate(&params, &problems, 4, &cfg(), 99, 3).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn mean_len_decomposes_over_categories() {
        let task = TaskConfig::default();
        let problems = eval_problems(13, 30, &task).unwrap();
        // Alternate between a valid minimal trace and garbage.
        let report = evaluate_with(&problems, 2, &cfg(), |p, _, j| {
            if j == 0 {
                Ok(Trace::new(teacher_trace(p, 1).unwrap(), p))
            } else {
                Ok(Trace::new(vec![THINK, ANSWER, END], p))
            }
        })
        .unwrap();
        let (c, i) = (
            report.mean_len_correct.unwrap(),
            report.mean_len_incorrect.unwrap(),
        );
        let total = report.num_problems * report.samples_per_problem;
        let n_correct = (report.accuracy * total as f64).round();
        let n_incorrect = total as f64 - n_correct;
        let recombined = (c * n_correct + i * n_incorrect) / total as f64;
        assert!((recombined - report.mean_len).abs() <= 1e-9);
    }

    #[test]
    fn reduction_report_arithmetic() {
        let task = TaskConfig::default();
        let problems = eval_problems(7, 10, &task).unwrap();
        let base = evaluate_with(&problems, 2, &cfg(), |p, _, _| {
            Ok(Trace::new(teacher_trace(p, 4).unwrap(), p))
        })
        .unwrap();
        let tuned = evaluate_with(&problems, 2, &cfg(), |p, _, _| {
            Ok(Trace::new(teacher_trace(p, 1).unwrap(), p))
        })
        .unwrap();
        let red = reduction_report(&base, &tuned).unwrap();
        assert!(red.overall > 0.5, "floor vs teacher should cut > 50%");
        assert_eq!(red.accuracy_delta, 0.0);

        let same = reduction_report(&base, &base).unwrap();
        assert_eq!(same.overall, 0.0);
        assert_eq!(same.accuracy_delta, 0.0);
    }

    #[test]
    fn reduction_report_overall_example() {
        let mk = |len: f64| EvalReport {
            accuracy: 1.0,
            mean_len: len,
            mean_len_correct: Some(len),
            mean_len_incorrect: None,
            num_problems: 5,
            samples_per_problem: 2,
            temperature: 0.6,
            top_p: 0.95,
            problem_set_id: 1,
        };
        let red = reduction_report(&mk(40.0), &mk(16.0)).unwrap();
        assert!((red.overall - 0.60).abs() < 1e-12);
    }

    #[test]
    fn mismatched_problem_sets_are_rejected() {
        let task = TaskConfig::default();
        let a = eval_problems(7, 10, &task).unwrap();
        let b = eval_problems(8, 10, &task).unwrap();
        let ra = evaluate_with(&a, 2, &cfg(), |p, _, _| {
            Ok(Trace::new(teacher_trace(p, 1).unwrap(), p))
        })
        .unwrap();
        let rb = evaluate_with(&b, 2, &cfg(), |p, _, _| {
            Ok(Trace::new(teacher_trace(p, 1).unwrap(), p))
        })
        .unwrap();
        assert!(matches!(
            reduction_report(&ra, &rb),
            Err(Error::ProblemSetMismatch(_))
        ));
    }
}
