// scratch: pretrain once, then run the adaptive-penalty dynamics end to end
// and report every acceptance-relevant quantity.
use adlp_core::eval::{evaluate, reduction_report};
use adlp_core::harness::RunConfig;
use adlp_core::trainer::{pretrain, train, NullObserver, TrainState};
use std::time::Instant;

fn main() {
    let a: Vec<String> = std::env::args().collect();
    let steps: usize = a.get(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let seed: u64 = a.get(2).and_then(|s| s.parse().ok()).unwrap_or(101);
    let mode: String = a.get(3).cloned().unwrap_or_else(|| "adaptive".into());
    let lambda_static: f64 = a.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let mut cfg = RunConfig::default();
    cfg.set("run.threads", "0").unwrap();
    cfg.set("run.seed", &seed.to_string()).unwrap();
    cfg.set("train.total_steps", &steps.to_string()).unwrap();
    if mode != "adaptive" {
        cfg.set("reward.mode", &mode).unwrap();
        cfg.set("reward.lambda_static", &lambda_static.to_string()).unwrap();
    }
    if let Some(acc_ref) = a.get(5) {
        cfg.set("controller.acc_ref", acc_ref).unwrap();
    }
    if let Some(eta) = a.get(6) {
        cfg.set("controller.eta", eta).unwrap();
    }
    cfg.validate().unwrap();

    let t0 = Instant::now();
    let (base, report) = pretrain(&cfg.pretrain_config()).unwrap();
    println!("pretrain: greedy acc {:.3}, len {:.1}, ce {:.4} ({:.0}s)",
        report.holdout_accuracy, report.holdout_mean_len, report.final_mean_ce,
        t0.elapsed().as_secs_f64());

    let problems = cfg.eval_problem_set().unwrap();
    let base_eval = evaluate(&base, &problems, cfg.eval_samples_per_problem,
        &cfg.sample_eval, cfg.eval_seed(), 0).unwrap();
    println!("base eval: acc {:.4} len {:.2}", base_eval.accuracy, base_eval.mean_len);

    let t1 = Instant::now();
    let tc = cfg.train_config();
    let mut state = TrainState::new(base, &tc).unwrap();
    let records = train(&mut state, &tc, None, &mut NullObserver).unwrap();
    println!("rl: {:.0}s ({:.0} ms/step)", t1.elapsed().as_secs_f64(),
        t1.elapsed().as_millis() as f64 / steps as f64);
    println!("acc_ref resolved: {:.4}", state.controller.acc_ref());

    for r in records.iter().filter(|r| r.step % 20 == 0 || r.step == 1) {
        println!("  step {:3}: lambda {:.4} acc {:.3} len {:5.1} reward {:6.3} gnorm {:.2e}",
            r.step, r.lambda, r.acc_train, r.mean_len, r.mean_reward, r.grad_norm);
    }
    let lambdas: Vec<f64> = records.iter().map(|r| r.lambda).collect();
    let (argmax, max) = lambdas.iter().enumerate()
        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).map(|(i, &v)| (i, v)).unwrap();
    println!("lambda peak {max:.4} at step {}, final {:.5}", argmax + 1, lambdas.last().unwrap());

    let final_eval = evaluate(&state.params, &problems, cfg.eval_samples_per_problem,
        &cfg.sample_eval, cfg.eval_seed(), 0).unwrap();
    println!("final eval: acc {:.4} len {:.2}", final_eval.accuracy, final_eval.mean_len);
    if let Ok(red) = reduction_report(&base_eval, &final_eval) {
        println!("reduction: overall {:.3} correct {:?} delta_acc {:.4}",
            red.overall, red.correct, red.accuracy_delta);
    }
}
