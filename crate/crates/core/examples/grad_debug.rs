// scratch: learnability probe with adjustable task range / batch / lr
use adlp_core::eval::{evaluate, eval_problems};
use adlp_core::policy::{Dims, SampleConfig};
use adlp_core::task::TaskConfig;
use adlp_core::trainer::{pretrain, PretrainConfig};
use std::time::Instant;

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let steps: usize = a.get(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let lr: f64 = a.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.003);
    let batch: usize = a.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let n_min: usize = a.get(4).and_then(|s| s.parse().ok()).unwrap_or(2);
    let n_max: usize = a.get(5).and_then(|s| s.parse().ok()).unwrap_or(6);
    let d_hid: usize = a.get(6).and_then(|s| s.parse().ok()).unwrap_or(64);
    let task = TaskConfig { n_min, n_max, ..TaskConfig::default() };
    let cfg = PretrainConfig {
        steps, batch_size: batch, lr,
        target_accuracy: 0.0,
        holdout_problems: 200,
        max_len: 80,
        dims: Dims::new(32, d_hid),
        task,
        seed: 42,
        threads: 0,
        curriculum_frac: a.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.5),
    };
    let t0 = Instant::now();
    let (params, report) = pretrain(&cfg).unwrap();
    println!("steps {steps} lr {lr} batch {batch} n [{n_min},{n_max}] d_hid {d_hid}: acc {:.3} greedy_len {:.1} ce {:.4} ({:.0}s)",
        report.holdout_accuracy, report.holdout_mean_len, report.final_mean_ce, t0.elapsed().as_secs_f64());
    let problems = eval_problems(777, 200, &task).unwrap();
    let e1 = evaluate(&params, &problems, 4,
        &SampleConfig { temperature: 1.0, top_p: 1.0, max_len: 80 }, 1234, 0).unwrap();
    println!("  t1.0: acc {:.4} mean_len {:.2} (teacher mean {})", e1.accuracy, e1.mean_len, task.mean_teacher_len());
}
