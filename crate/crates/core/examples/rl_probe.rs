// scratch: stage-wise accuracy under the two-phase schedule
use adlp_core::eval::{evaluate, eval_problems};
use adlp_core::policy::{Dims, PolicyParams, SampleConfig};
use adlp_core::task::TaskConfig;
use adlp_core::trainer::{pretrain, PretrainConfig};
use std::time::Instant;

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let steps: usize = a.get(1).and_then(|s| s.parse().ok()).unwrap_or(12000);
    let lr: f64 = a.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let frac: f64 = a.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    let d_hid: usize = a.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);
    let r_max_probe: usize = a.get(5).and_then(|s| s.parse().ok()).unwrap_or(5);
    let n_max_probe: usize = a.get(6).and_then(|s| s.parse().ok()).unwrap_or(6);
    let task = TaskConfig { redundancy_max: r_max_probe, n_max: n_max_probe, ..TaskConfig::default() };
    let cfg = PretrainConfig {
        steps, batch_size: 32, lr,
        target_accuracy: 0.0,
        holdout_problems: 200,
        max_len: 80,
        dims: Dims::new(32, d_hid),
        task,
        seed: 42,
        threads: 0,
        curriculum_frac: frac,
    };
    let t0 = Instant::now();
    let (params, report) = pretrain(&cfg).unwrap();
    println!("steps {steps} lr {lr} frac {frac} d{d_hid} rmax {r_max_probe}: greedy acc {:.3} len {:.1} ce {:.4} ({:.0}s)",
        report.holdout_accuracy, report.holdout_mean_len, report.final_mean_ce, t0.elapsed().as_secs_f64());
    // Per-n greedy accuracy to localize failures.
    for n in 2..=n_max_probe {
        let t = TaskConfig { n_min: n, n_max: n, ..task };
        let probs = eval_problems(900 + n as u64, 100, &t).unwrap();
        let greedy = SampleConfig { temperature: 0.0, top_p: 1.0, max_len: 80 };
        let e = evaluate(&params, &probs, 1, &greedy, 1, 0).unwrap();
        println!("  n={n}: greedy acc {:.3} len {:.1}", e.accuracy, e.mean_len);
    }
    let full = eval_problems(777, 200, &task).unwrap();
    let e1 = evaluate(&params, &full, 4, &SampleConfig { temperature: 1.0, top_p: 1.0, max_len: 80 }, 1234, 0).unwrap();
    println!("  t1.0 full: acc {:.4} len {:.2} (teacher {})", e1.accuracy, e1.mean_len, task.mean_teacher_len());
}
