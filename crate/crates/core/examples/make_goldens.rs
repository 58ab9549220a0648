// scratch: print golden values to freeze into tests
use adlp_core::policy::{Dims, PolicyParams, SampleConfig};
use adlp_core::seeding;
use adlp_core::task::{sample_problem, Token};

fn main() {
    // Golden problem: seed 7 over [2, 8].
    let mut rng = seeding::rng(7);
    let p = sample_problem(&mut rng, 2, 8).unwrap();
    println!("golden problem digits: {:?}", p.digits());
    println!("golden problem sums:   {:?}", p.prefix_sums());
    println!("golden target: {}", p.target());

    // Init checksum at default dims.
    let params = PolicyParams::init(42, Dims::new(32, 64)).unwrap();
    println!("init checksum seed42 32x64: {:#018x}", params.checksum());
    println!("theta[0] {:.17e} theta[last] {:.17e}", params.theta()[0], params.theta()[params.theta().len()-1]);

    // Next-token distribution on the golden prompt.
    let probs = params.next_token_distribution(&p.prompt_tokens()).unwrap();
    let strs: Vec<String> = probs.iter().map(|x| format!("{x:.17e}")).collect();
    println!("golden distribution:\n[{}]", strs.join(",\n"));

    // Golden rollout: rng stream 1234.
    let cfg = SampleConfig { temperature: 1.0, top_p: 0.95, max_len: 60 };
    let mut rr = seeding::rng(1234);
    let roll = params.sample_rollout(&p, &cfg, &mut rr).unwrap();
    let ids: Vec<u8> = roll.tokens.iter().map(|t| t.0).collect();
    println!("golden rollout ids: {ids:?}");
    println!("golden rollout logprob: {:.17e}", roll.logprob());
    println!("golden rollout correct {} truncated {}", roll.is_correct, roll.truncated);
    let names: Vec<String> = roll.tokens.iter().map(|t| t.name()).collect();
    println!("golden rollout names: {}", names.join(" "));
    let _ = Token(0);
}
