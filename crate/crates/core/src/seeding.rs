//! Deterministic seed derivation.
//!
//! Every random stream in a run descends from one root seed through labelled
//! derivations, so any subset of the work (one step, one prompt, one rollout,
//! one eval sample) can be regenerated independently:
//!
//! ```text
//! root
//! ├─ "pretrain-batch"/s      per-step pretraining batch
//! ├─ "pretrain-holdout"/0    held-out problems for the pretrain gate
//! ├─ "train-step"/t
//! │    ├─ "problem"/b        prompt sampling
//! │    └─ "prompt"/b ── "rollout"/g
//! └─ "eval"/0
//!      ├─ "problems"/0       frozen held-out eval set
//!      └─ "problem"/i ── "sample"/j
//! ```
//!
//! Derivation hashes the parent seed, the label bytes, and the index with a
//! splitmix-style mixer; it is pure integer arithmetic and therefore stable
//! across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a over the label bytes.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in label.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from `parent` for the stream named `label` at `index`.
pub fn derive(parent: u64, label: &str, index: u64) -> u64 {
    splitmix(splitmix(parent ^ hash_label(label)) ^ index)
}

/// The reproducibility-reference generator for a derived seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
