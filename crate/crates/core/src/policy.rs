//! The tiny autoregressive categorical policy.
//!
//! Architecture: token embedding -> single gated recurrent cell -> linear
//! output head -> softmax over the 14-token vocabulary. All parameters live
//! in one flat `f64` vector with a fixed, documented ordering (see [`Dims`]),
//! which is the layout the checkpoint format serializes.
//!
//! Cell equations, with `x` the embedded input token and `h` the hidden state:
//!
//! ```text
//! z = sigmoid(Wz x + Uz h + bz - 2.5)    update gate
//! r = sigmoid(Wr x + Ur h + br)          reset gate
//! c = tanh(Wc x + Uc (r . h) + bc)       candidate
//! h' = (1 - z) . h + z . c
//! ```
//!
//! The constant -2.5 in the update gate biases fresh cells toward retention
//! (z ~ 0.08 at the small uniform init), so state decays slowly and gradients
//! survive the prompt-to-answer spans this task needs; training moves each
//! unit's own bias from there.
//!
//! Sampling tempers and nucleus-filters the distribution, but recorded
//! log-probabilities and the analytic gradient are always taken under the
//! untempered, unfiltered policy. Ties break by ascending token id everywhere
//! so runs reproduce across platforms.

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::math;
use crate::seeding;
use crate::task::{self, Problem, Token, END, VOCAB_SIZE};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Network sizes. The flattened parameter vector is laid out in this order:
///
/// ```text
/// embedding  vocab x d_emb   (row-major, one row per token)
/// Wz         d_hid x d_emb   Uz  d_hid x d_hid   bz  d_hid
/// Wr         d_hid x d_emb   Ur  d_hid x d_hid   br  d_hid
/// Wc         d_hid x d_emb   Uc  d_hid x d_hid   bc  d_hid
/// W_out      vocab x d_hid   b_out  vocab
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub vocab: usize,
    pub d_emb: usize,
    pub d_hid: usize,
}

impl Dims {
    pub fn new(d_emb: usize, d_hid: usize) -> Dims {
        Dims {
            vocab: VOCAB_SIZE,
            d_emb,
            d_hid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab != VOCAB_SIZE {
            return Err(Error::validation(format!(
                "vocab must be {VOCAB_SIZE}, got {}",
                self.vocab
            )));
        }
        if self.d_emb == 0 || self.d_hid == 0 {
            return Err(Error::validation("embedding and hidden sizes must be >= 1"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (v, e, h) = (self.vocab, self.d_emb, self.d_hid);
        v * e + 3 * (h * e + h * h + h) + v * h + v
    }
}

impl Default for Dims {
    fn default() -> Self {
        Dims::new(32, 64)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    e: usize,
    h: usize,
    v: usize,
    o_wz: usize,
    o_uz: usize,
    o_bz: usize,
    o_wr: usize,
    o_ur: usize,
    o_br: usize,
    o_wc: usize,
    o_uc: usize,
    o_bc: usize,
    o_wout: usize,
    o_bout: usize,
    total: usize,
}

impl Layout {
    fn new(dims: Dims) -> Layout {
        let (v, e, h) = (dims.vocab, dims.d_emb, dims.d_hid);
        let o_wz = v * e;
        let o_uz = o_wz + h * e;
        let o_bz = o_uz + h * h;
        let o_wr = o_bz + h;
        let o_ur = o_wr + h * e;
        let o_br = o_ur + h * h;
        let o_wc = o_br + h;
        let o_uc = o_wc + h * e;
        let o_bc = o_uc + h * h;
        let o_wout = o_bc + h;
        let o_bout = o_wout + v * h;
        Layout {
            e,
            h,
            v,
            o_wz,
            o_uz,
            o_bz,
            o_wr,
            o_ur,
            o_br,
            o_wc,
            o_uc,
            o_bc,
            o_wout,
            o_bout,
            total: o_bout + v,
        }
    }
}

struct Views<'a> {
    emb: &'a [f64],
    w_z: &'a [f64],
    u_z: &'a [f64],
    b_z: &'a [f64],
    w_r: &'a [f64],
    u_r: &'a [f64],
    b_r: &'a [f64],
    w_c: &'a [f64],
    u_c: &'a [f64],
    b_c: &'a [f64],
    w_out: &'a [f64],
    b_out: &'a [f64],
}

fn views<'a>(theta: &'a [f64], l: &Layout) -> Views<'a> {
    Views {
        emb: &theta[..l.o_wz],
        w_z: &theta[l.o_wz..l.o_uz],
        u_z: &theta[l.o_uz..l.o_bz],
        b_z: &theta[l.o_bz..l.o_wr],
        w_r: &theta[l.o_wr..l.o_ur],
        u_r: &theta[l.o_ur..l.o_br],
        b_r: &theta[l.o_br..l.o_wc],
        w_c: &theta[l.o_wc..l.o_uc],
        u_c: &theta[l.o_uc..l.o_bc],
        b_c: &theta[l.o_bc..l.o_wout],
        w_out: &theta[l.o_wout..l.o_bout],
        b_out: &theta[l.o_bout..],
    }
}

struct ViewsMut<'a> {
    emb: &'a mut [f64],
    w_z: &'a mut [f64],
    u_z: &'a mut [f64],
    b_z: &'a mut [f64],
    w_r: &'a mut [f64],
    u_r: &'a mut [f64],
    b_r: &'a mut [f64],
    w_c: &'a mut [f64],
    u_c: &'a mut [f64],
    b_c: &'a mut [f64],
    w_out: &'a mut [f64],
    b_out: &'a mut [f64],
}

fn views_mut<'a>(theta: &'a mut [f64], l: &Layout) -> ViewsMut<'a> {
    let (emb, rest) = theta.split_at_mut(l.o_wz);
    let (w_z, rest) = rest.split_at_mut(l.o_uz - l.o_wz);
    let (u_z, rest) = rest.split_at_mut(l.o_bz - l.o_uz);
    let (b_z, rest) = rest.split_at_mut(l.o_wr - l.o_bz);
    let (w_r, rest) = rest.split_at_mut(l.o_ur - l.o_wr);
    let (u_r, rest) = rest.split_at_mut(l.o_br - l.o_ur);
    let (b_r, rest) = rest.split_at_mut(l.o_wc - l.o_br);
    let (w_c, rest) = rest.split_at_mut(l.o_uc - l.o_wc);
    let (u_c, rest) = rest.split_at_mut(l.o_bc - l.o_uc);
    let (b_c, rest) = rest.split_at_mut(l.o_wout - l.o_bc);
    let (w_out, b_out) = rest.split_at_mut(l.o_bout - l.o_wout);
    ViewsMut {
        emb,
        w_z,
        u_z,
        b_z,
        w_r,
        u_r,
        b_r,
        w_c,
        u_c,
        b_c,
        w_out,
        b_out,
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Constant preactivation shift of the update gate toward retention.
const UPDATE_GATE_OFFSET: f64 = -2.5;

/// Policy parameters behind a flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    dims: Dims,
    theta: Vec<f64>,
}

impl PolicyParams {
    /// Draw every parameter i.i.d. uniform in [-0.08, 0.08] from a seeded
    /// generator; bit-deterministic in the seed.
    pub fn init(seed: u64, dims: Dims) -> Result<PolicyParams> {
        dims.validate()?;
        let mut rng = seeding::rng(seed);
        let theta = (0..dims.param_count())
            .map(|_| rng.random_range(-0.08..0.08))
            .collect();
        Ok(PolicyParams { dims, theta })
    }

    pub fn from_flat(dims: Dims, theta: Vec<f64>) -> Result<PolicyParams> {
        dims.validate()?;
        if theta.len() != dims.param_count() {
            return Err(Error::validation(format!(
                "flat parameter vector has {} values, dims require {}",
                theta.len(),
                dims.param_count()
            )));
        }
        if let Some(bad) = theta.iter().position(|x| !x.is_finite()) {
            return Err(Error::validation(format!(
                "parameter {bad} is not finite"
            )));
        }
        Ok(PolicyParams { dims, theta })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Order-sensitive checksum of the flattened vector, for goldens.
    pub fn checksum(&self) -> u64 {
        self.theta.iter().fold(0x5eed_f00d_u64, |acc, x| {
            let mut v = acc ^ x.to_bits();
            v = (v ^ (v >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            v ^ (v >> 31)
        })
    }

    fn layout(&self) -> Layout {
        Layout::new(self.dims)
    }

    /// Full forward pass over `context`, returning the next-token distribution.
    pub fn next_token_distribution(&self, context: &[Token]) -> Result<Vec<f64>> {
        if context.is_empty() {
            return Err(Error::validation(
                "context must contain at least the prompt tokens",
            ));
        }
        let l = self.layout();
        let vw = views(&self.theta, &l);
        let mut ws = Workspace::new(&l);
        let mut h = vec![0.0; l.h];
        for &t in context {
            ws.advance(&vw, &l, t.id(), &mut h);
        }
        let mut logits = vec![0.0; l.v];
        head_logits(&vw, &l, &h, &mut logits);
        math::softmax_in_place(&mut logits);
        Ok(logits)
    }

    /// Total log-probability of `tokens` given the problem prompt, without
    /// the gradient.
    pub fn sequence_logprob(&self, problem: &Problem, tokens: &[Token]) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::validation("token sequence must be non-empty"));
        }
        let l = self.layout();
        let vw = views(&self.theta, &l);
        let mut ws = Workspace::new(&l);
        let mut h = vec![0.0; l.h];
        for t in problem.prompt_tokens() {
            ws.advance(&vw, &l, t.id(), &mut h);
        }
        let mut logits = vec![0.0; l.v];
        let mut total = 0.0;
        for (i, &t) in tokens.iter().enumerate() {
            head_logits(&vw, &l, &h, &mut logits);
            let lp = log_prob_of(&logits, t.id());
            if !lp.is_finite() {
                return Err(Error::Numerical {
                    step: i,
                    detail: format!("non-finite log-probability for token {}", t.name()),
                });
            }
            total += lp;
            if i + 1 < tokens.len() {
                ws.advance(&vw, &l, t.id(), &mut h);
            }
        }
        Ok(total)
    }

    /// Log-probability of the sequence and its exact analytic gradient with
    /// respect to the flattened parameter vector, via reverse accumulation
    /// through the recurrence.
    pub fn sequence_logprob_grad(
        &self,
        problem: &Problem,
        tokens: &[Token],
    ) -> Result<(f64, Vec<f64>)> {
        if tokens.is_empty() {
            return Err(Error::validation("token sequence must be non-empty"));
        }
        let l = self.layout();
        let vw = views(&self.theta, &l);
        let d = l.h;

        // Forward, caching per consumed token: [h_prev | z | r | c | rh].
        let prompt = problem.prompt_tokens();
        let n_consumed = prompt.len() + tokens.len() - 1;
        let mut cache = StepCache::with_capacity(d, n_consumed);
        let mut ws = Workspace::new(&l);
        let mut h = vec![0.0; d];
        for &t in &prompt {
            ws.advance_cached(&vw, &l, t.id(), &mut h, &mut cache);
        }

        let mut logits = vec![0.0; l.v];
        let mut total = 0.0;
        // Per prediction: probs (vocab) and the hidden state it was made from.
        let mut pred_probs = Vec::with_capacity(tokens.len() * l.v);
        let mut pred_h = Vec::with_capacity(tokens.len() * d);
        for (i, &t) in tokens.iter().enumerate() {
            head_logits(&vw, &l, &h, &mut logits);
            let lp = log_prob_of(&logits, t.id());
            if !lp.is_finite() {
                return Err(Error::Numerical {
                    step: i,
                    detail: format!("non-finite log-probability for token {}", t.name()),
                });
            }
            total += lp;
            math::softmax_in_place(&mut logits);
            pred_probs.extend_from_slice(&logits);
            pred_h.extend_from_slice(&h);
            if i + 1 < tokens.len() {
                ws.advance_cached(&vw, &l, t.id(), &mut h, &mut cache);
            }
        }

        // Reverse pass over hidden indices. h_k is the state after consuming k
        // tokens; cache entry k-1 produced h_k, and prediction i was made from
        // h_{prompt.len() + i}.
        let mut grad = vec![0.0; l.total];
        let mut gw = views_mut(&mut grad, &l);
        let mut dh = vec![0.0; d];
        let mut dh_prev = vec![0.0; d];
        let mut dlogits = vec![0.0; l.v];
        let first_pred_hidden = prompt.len();
        for k in (0..=n_consumed).rev() {
            // Fold in the prediction made from hidden state h_k, if any.
            if k >= first_pred_hidden {
                let i = k - first_pred_hidden;
                let probs = &pred_probs[i * l.v..(i + 1) * l.v];
                let h_k = &pred_h[i * d..(i + 1) * d];
                for (vi, dl) in dlogits.iter_mut().enumerate() {
                    let indicator = if vi == tokens[i].id() { 1.0 } else { 0.0 };
                    *dl = indicator - probs[vi];
                }
                math::outer_add(gw.w_out, &dlogits, h_k);
                math::axpy(gw.b_out, 1.0, &dlogits);
                math::matvec_t_add(&mut dh, vw.w_out, l.v, d, &dlogits);
            }
            if k == 0 {
                break; // h_0 is the constant zero state
            }
            // Backprop consumption step k: h_{k-1} -> h_k.
            cell_backward(&vw, &mut gw, &l, &cache, k - 1, &dh, &mut dh_prev, &mut ws);
            std::mem::swap(&mut dh, &mut dh_prev);
        }
        Ok((total, grad))
    }

    /// Autoregressive sampling with temperature and nucleus filtering;
    /// `temperature == 0` decodes greedily with ties to the lowest token id.
    pub fn sample_rollout<R: Rng>(
        &self,
        problem: &Problem,
        cfg: &SampleConfig,
        rng: &mut R,
    ) -> Result<Rollout> {
        cfg.validate()?;
        let l = self.layout();
        let vw = views(&self.theta, &l);
        let mut ws = Workspace::new(&l);
        let mut h = vec![0.0; l.h];
        for t in problem.prompt_tokens() {
            ws.advance(&vw, &l, t.id(), &mut h);
        }
        let mut tokens = Vec::new();
        let mut step_logprobs = Vec::new();
        let mut logits = vec![0.0; l.v];
        loop {
            head_logits(&vw, &l, &h, &mut logits);
            if logits.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical {
                    step: tokens.len(),
                    detail: "non-finite logits during sampling".to_string(),
                });
            }
            let next = if cfg.temperature == 0.0 {
                argmax_lowest_id(&logits)
            } else {
                sample_nucleus(&logits, cfg.temperature, cfg.top_p, rng)
            };
            step_logprobs.push(log_prob_of(&logits, next));
            let tok = Token(next as u8);
            tokens.push(tok);
            if tok == END || tokens.len() >= cfg.max_len {
                break;
            }
            ws.advance(&vw, &l, next, &mut h);
        }
        let truncated = *tokens.last().expect("at least one token") != END;
        let is_correct = !truncated && task::verify(&tokens, problem);
        let length = tokens.len();
        Ok(Rollout {
            problem: problem.clone(),
            tokens,
            step_logprobs,
            is_correct,
            truncated,
            length,
            reward: None,
            advantage: None,
        })
    }
}

/// Sampling hyperparameters. `temperature == 0` selects greedy decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_len: usize,
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::validation(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if !self.top_p.is_finite() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(Error::validation(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_len == 0 {
            return Err(Error::validation("max_len must be >= 1"));
        }
        Ok(())
    }
}

/// One sampled response with everything the trainer needs to score it.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub problem: Problem,
    pub tokens: Vec<Token>,
    /// Log-probabilities under the untempered, unfiltered policy.
    pub step_logprobs: Vec<f64>,
    pub is_correct: bool,
    pub truncated: bool,
    pub length: usize,
    pub reward: Option<f64>,
    pub advantage: Option<f64>,
}

impl Rollout {
    pub fn logprob(&self) -> f64 {
        self.step_logprobs.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// forward/backward internals
// ---------------------------------------------------------------------------

struct Workspace {
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    rh: Vec<f64>,
    h_new: Vec<f64>,
    dz: Vec<f64>,
    dc: Vec<f64>,
    dca: Vec<f64>,
    dza: Vec<f64>,
    dra: Vec<f64>,
    drh: Vec<f64>,
    dr: Vec<f64>,
    dx: Vec<f64>,
}

impl Workspace {
    fn new(l: &Layout) -> Workspace {
        let d = l.h;
        Workspace {
            z: vec![0.0; d],
            r: vec![0.0; d],
            c: vec![0.0; d],
            rh: vec![0.0; d],
            h_new: vec![0.0; d],
            dz: vec![0.0; d],
            dc: vec![0.0; d],
            dca: vec![0.0; d],
            dza: vec![0.0; d],
            dra: vec![0.0; d],
            drh: vec![0.0; d],
            dr: vec![0.0; d],
            dx: vec![0.0; l.e],
        }
    }

    /// One recurrence step in place: `h <- cell(emb[token], h)`.
    fn advance(&mut self, vw: &Views, l: &Layout, token: usize, h: &mut Vec<f64>) {
        let x = &vw.emb[token * l.e..(token + 1) * l.e];
        cell_forward(
            vw,
            l,
            x,
            h,
            &mut self.z,
            &mut self.r,
            &mut self.c,
            &mut self.rh,
            &mut self.h_new,
        );
        std::mem::swap(h, &mut self.h_new);
    }

    /// Same as [`advance`], additionally pushing the step into `cache`.
    fn advance_cached(
        &mut self,
        vw: &Views,
        l: &Layout,
        token: usize,
        h: &mut Vec<f64>,
        cache: &mut StepCache,
    ) {
        let x = &vw.emb[token * l.e..(token + 1) * l.e];
        cell_forward(
            vw,
            l,
            x,
            h,
            &mut self.z,
            &mut self.r,
            &mut self.c,
            &mut self.rh,
            &mut self.h_new,
        );
        cache.push(token, h, &self.z, &self.r, &self.c, &self.rh);
        std::mem::swap(h, &mut self.h_new);
    }
}

/// Per consumed token: `[h_prev | z | r | c | rh]`, flat with stride `5*d`.
struct StepCache {
    d: usize,
    tokens: Vec<usize>,
    data: Vec<f64>,
}

impl StepCache {
    fn with_capacity(d: usize, steps: usize) -> StepCache {
        StepCache {
            d,
            tokens: Vec::with_capacity(steps),
            data: Vec::with_capacity(steps * 5 * d),
        }
    }

    fn push(&mut self, token: usize, h_prev: &[f64], z: &[f64], r: &[f64], c: &[f64], rh: &[f64]) {
        self.tokens.push(token);
        self.data.extend_from_slice(h_prev);
        self.data.extend_from_slice(z);
        self.data.extend_from_slice(r);
        self.data.extend_from_slice(c);
        self.data.extend_from_slice(rh);
    }

    fn step(&self, k: usize) -> (usize, &[f64], &[f64], &[f64], &[f64], &[f64]) {
        let d = self.d;
        let base = k * 5 * d;
        let s = &self.data[base..base + 5 * d];
        (
            self.tokens[k],
            &s[..d],
            &s[d..2 * d],
            &s[2 * d..3 * d],
            &s[3 * d..4 * d],
            &s[4 * d..5 * d],
        )
    }
}

fn cell_forward(
    vw: &Views,
    l: &Layout,
    x: &[f64],
    h: &[f64],
    z: &mut [f64],
    r: &mut [f64],
    c: &mut [f64],
    rh: &mut [f64],
    h_new: &mut [f64],
) {
    let (d, e) = (l.h, l.e);
    math::matvec_into(z, vw.w_z, d, e, x);
    math::matvec_add(z, vw.u_z, d, d, h);
    for (zi, bi) in z.iter_mut().zip(vw.b_z.iter()) {
        *zi = sigmoid(*zi + bi + UPDATE_GATE_OFFSET);
    }
    math::matvec_into(r, vw.w_r, d, e, x);
    math::matvec_add(r, vw.u_r, d, d, h);
    for (ri, bi) in r.iter_mut().zip(vw.b_r.iter()) {
        *ri = sigmoid(*ri + bi);
    }
    for i in 0..d {
        rh[i] = r[i] * h[i];
    }
    math::matvec_into(c, vw.w_c, d, e, x);
    math::matvec_add(c, vw.u_c, d, d, rh);
    for (ci, bi) in c.iter_mut().zip(vw.b_c.iter()) {
        *ci = (*ci + bi).tanh();
    }
    for i in 0..d {
        h_new[i] = (1.0 - z[i]) * h[i] + z[i] * c[i];
    }
}

#[allow(clippy::too_many_arguments)]
fn cell_backward(
    vw: &Views,
    gw: &mut ViewsMut,
    l: &Layout,
    cache: &StepCache,
    k: usize,
    dh_new: &[f64],
    dh_prev: &mut [f64],
    ws: &mut Workspace,
) {
    let (d, e) = (l.h, l.e);
    let (token, h_prev, z, r, c, rh) = cache.step(k);
    let x = &vw.emb[token * e..(token + 1) * e];

    for i in 0..d {
        ws.dz[i] = dh_new[i] * (c[i] - h_prev[i]);
        ws.dc[i] = dh_new[i] * z[i];
        dh_prev[i] = dh_new[i] * (1.0 - z[i]);
    }
    // candidate path
    for i in 0..d {
        ws.dca[i] = ws.dc[i] * (1.0 - c[i] * c[i]);
    }
    math::outer_add(gw.w_c, &ws.dca, x);
    math::outer_add(gw.u_c, &ws.dca, rh);
    math::axpy(gw.b_c, 1.0, &ws.dca);
    ws.drh.fill(0.0);
    math::matvec_t_add(&mut ws.drh, vw.u_c, d, d, &ws.dca);
    for i in 0..d {
        ws.dr[i] = ws.drh[i] * h_prev[i];
        dh_prev[i] += ws.drh[i] * r[i];
    }
    // update gate
    for i in 0..d {
        ws.dza[i] = ws.dz[i] * z[i] * (1.0 - z[i]);
    }
    math::outer_add(gw.w_z, &ws.dza, x);
    math::outer_add(gw.u_z, &ws.dza, h_prev);
    math::axpy(gw.b_z, 1.0, &ws.dza);
    math::matvec_t_add(dh_prev, vw.u_z, d, d, &ws.dza);
    // reset gate
    for i in 0..d {
        ws.dra[i] = ws.dr[i] * r[i] * (1.0 - r[i]);
    }
    math::outer_add(gw.w_r, &ws.dra, x);
    math::outer_add(gw.u_r, &ws.dra, h_prev);
    math::axpy(gw.b_r, 1.0, &ws.dra);
    math::matvec_t_add(dh_prev, vw.u_r, d, d, &ws.dra);
    // embedding of the consumed token
    ws.dx.fill(0.0);
    math::matvec_t_add(&mut ws.dx, vw.w_z, d, e, &ws.dza);
    math::matvec_t_add(&mut ws.dx, vw.w_r, d, e, &ws.dra);
    math::matvec_t_add(&mut ws.dx, vw.w_c, d, e, &ws.dca);
    math::axpy(&mut gw.emb[token * e..(token + 1) * e], 1.0, &ws.dx);
}

fn head_logits(vw: &Views, l: &Layout, h: &[f64], logits: &mut [f64]) {
    math::matvec_into(logits, vw.w_out, l.v, l.h, h);
    for (lo, b) in logits.iter_mut().zip(vw.b_out.iter()) {
        *lo += b;
    }
}

/// `log softmax(logits)[idx]` without materializing the distribution.
fn log_prob_of(logits: &[f64], idx: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lnz = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits[idx] - max - lnz
}

fn argmax_lowest_id(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in logits.iter().enumerate().skip(1) {
        if x > logits[best] {
            best = i;
        }
    }
    best
}

/// Token ids ordered by descending probability, ties by ascending id, cut at
/// the smallest prefix whose cumulative mass reaches `top_p`.
fn nucleus_retained(probs: &[f64], top_p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .expect("probabilities are finite")
            .then(a.cmp(&b))
    });
    let mut cum = 0.0;
    let mut kept = Vec::new();
    for id in order {
        kept.push(id);
        cum += probs[id];
        if cum >= top_p {
            break;
        }
    }
    kept
}

fn sample_nucleus<R: Rng>(logits: &[f64], temperature: f64, top_p: f64, rng: &mut R) -> usize {
    let mut tempered: Vec<f64> = logits.iter().map(|&x| x / temperature).collect();
    math::softmax_in_place(&mut tempered);
    let kept = nucleus_retained(&tempered, top_p);
    let mass: f64 = kept.iter().map(|&i| tempered[i]).sum();
    let u: f64 = rng.random::<f64>() * mass;
    let mut cum = 0.0;
    for &i in &kept {
        cum += tempered[i];
        if u < cum {
            return i;
        }
    }
    *kept.last().expect("nucleus keeps at least one token")
}

// ---------------------------------------------------------------------------
// finite-difference verification
// ---------------------------------------------------------------------------

/// Max relative error between central finite differences of `f` and the given
/// analytic gradient over `indices`, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn max_relative_fd_error<F: Fn(&[f64]) -> f64>(
    f: F,
    theta: &[f64],
    analytic: &[f64],
    h: f64,
    indices: &[usize],
) -> f64 {
    let mut work = theta.to_vec();
    let mut worst = 0.0f64;
    for &i in indices {
        let orig = work[i];
        work[i] = orig + h;
        let above = f(&work);
        work[i] = orig - h;
        let below = f(&work);
        work[i] = orig;
        let numeric = (above - below) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((numeric - analytic[i]).abs() / denom);
    }
    worst
}

/// Sequence log-probability evaluated entirely in double-double arithmetic.
/// This is the reference side of the gradient check: it shares no code with
/// the f64 forward pass beyond the parameter layout.
fn sequence_logprob_dd(dims: Dims, theta: &[f64], problem: &Problem, tokens: &[Token]) -> Dd {
    let l = Layout::new(dims);
    let vw = views(theta, &l);
    let (d, e, v) = (l.h, l.e, l.v);
    let mut h = vec![Dd::ZERO; d];
    let gate = |w: &[f64], u: &[f64], b: &[f64], x: &[f64], hh: &[Dd]| -> Vec<Dd> {
        let mut out = Vec::with_capacity(d);
        for i in 0..d {
            let mut acc = Dd::from_f64(b[i]);
            for (j, &xj) in x.iter().enumerate() {
                acc = acc.add(Dd::from_f64(w[i * e + j]).mul_f64(xj));
            }
            for (j, hj) in hh.iter().enumerate() {
                acc = acc.add(hj.mul_f64(u[i * d + j]));
            }
            out.push(acc);
        }
        out
    };
    let consume = |token: usize, h: &mut Vec<Dd>| {
        let x = &vw.emb[token * e..(token + 1) * e];
        let z: Vec<Dd> = gate(vw.w_z, vw.u_z, vw.b_z, x, h)
            .into_iter()
            .map(|a| a.add(Dd::from_f64(UPDATE_GATE_OFFSET)).sigmoid())
            .collect();
        let r: Vec<Dd> = gate(vw.w_r, vw.u_r, vw.b_r, x, h)
            .into_iter()
            .map(|a| a.sigmoid())
            .collect();
        let rh: Vec<Dd> = r.iter().zip(h.iter()).map(|(ri, hi)| ri.mul(*hi)).collect();
        let c: Vec<Dd> = gate(vw.w_c, vw.u_c, vw.b_c, x, &rh)
            .into_iter()
            .map(|a| a.tanh())
            .collect();
        for i in 0..d {
            h[i] = Dd::ONE.sub(z[i]).mul(h[i]).add(z[i].mul(c[i]));
        }
    };
    let head_logprob = |h: &[Dd], target: usize| -> Dd {
        let mut logits = Vec::with_capacity(v);
        for i in 0..v {
            let mut acc = Dd::from_f64(vw.b_out[i]);
            for (j, hj) in h.iter().enumerate() {
                acc = acc.add(hj.mul_f64(vw.w_out[i * d + j]));
            }
            logits.push(acc);
        }
        let max = logits
            .iter()
            .fold(f64::NEG_INFINITY, |m, x| m.max(x.hi));
        let mut sum = Dd::ZERO;
        for x in &logits {
            sum = sum.add(x.sub(Dd::from_f64(max)).exp());
        }
        logits[target].sub(Dd::from_f64(max)).sub(sum.ln())
    };
    for t in problem.prompt_tokens() {
        consume(t.id(), &mut h);
    }
    let mut total = Dd::ZERO;
    for (i, &t) in tokens.iter().enumerate() {
        total = total.add(head_logprob(&h, t.id()));
        if i + 1 < tokens.len() {
            consume(t.id(), &mut h);
        }
    }
    total
}

/// Check the analytic sequence gradient against central finite differences at
/// step `h` on a random subset of at least 200 parameters (all of them if
/// fewer exist). The reference differences are evaluated in double-double
/// precision so the returned error reflects discretization, not f64 rounding
/// of two nearly equal log-probabilities.
pub fn finite_difference_check<R: Rng>(
    params: &PolicyParams,
    problem: &Problem,
    tokens: &[Token],
    h: f64,
    rng: &mut R,
) -> Result<f64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::validation(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (_, analytic) = params.sequence_logprob_grad(problem, tokens)?;
    let n = params.theta().len();
    let count = 200.min(n);
    let indices: Vec<usize> = rand::seq::index::sample(rng, n, count).into_vec();
    let dims = params.dims();
    let theta = params.theta();
    let worst = indices
        .par_iter()
        .map(|&i| {
            let mut work = theta.to_vec();
            let plus = theta[i] + h;
            let minus = theta[i] - h;
            work[i] = plus;
            let above = sequence_logprob_dd(dims, &work, problem, tokens);
            work[i] = minus;
            let below = sequence_logprob_dd(dims, &work, problem, tokens);
            // Divide by the realized step, not 2h, since plus/minus rounded.
            let step = Dd::from_f64(plus).sub(Dd::from_f64(minus));
            let numeric = above.sub(below).div(step).to_f64();
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            (numeric - analytic[i]).abs() / denom
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{sample_problem, teacher_trace, SEP};
    use proptest::prelude::*;

    fn tiny_dims() -> Dims {
        Dims::new(6, 10)
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = PolicyParams::init(42, tiny_dims()).unwrap();
        let b = PolicyParams::init(42, tiny_dims()).unwrap();
        let c = PolicyParams::init(43, tiny_dims()).unwrap();
        assert_eq!(a.theta(), b.theta());
        assert!(a.theta().iter().zip(c.theta()).any(|(x, y)| x != y));
        assert!(a.theta().iter().all(|x| (-0.08..0.08).contains(x)));
    }

    #[test]
    fn param_count_matches_layout() {
        let dims = Dims::new(32, 64);
        let l = Layout::new(dims);
        assert_eq!(l.total, dims.param_count());
        assert_eq!(dims.param_count(), 14 * 32 + 3 * (64 * 32 + 64 * 64 + 64) + 14 * 64 + 14);
    }

    #[test]
    fn zero_output_head_gives_uniform_distribution() {
        let mut p = PolicyParams::init(1, tiny_dims()).unwrap();
        let l = p.layout();
        p.theta_mut()[l.o_wout..].fill(0.0);
        let probs = p.next_token_distribution(&[Token(0), SEP]).unwrap();
        for q in &probs {
            assert!((q - 1.0 / VOCAB_SIZE as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_is_shift_invariant_in_logits() {
        let p = PolicyParams::init(5, tiny_dims()).unwrap();
        let ctx = [Token(3), Token(4), SEP];
        let base = p.next_token_distribution(&ctx).unwrap();
        let mut shifted = p.clone();
        let l = shifted.layout();
        for b in shifted.theta_mut()[l.o_bout..].iter_mut() {
            *b += 7.5;
        }
        let moved = shifted.next_token_distribution(&ctx).unwrap();
        for (a, b) in base.iter().zip(moved.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_normalizes() {
        let p = PolicyParams::init(11, tiny_dims()).unwrap();
        let probs = p.next_token_distribution(&[Token(9), SEP]).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(probs.iter().all(|&q| q > 0.0));
    }

    #[test]
    fn uniform_policy_logprob_is_length_times_log_vocab() {
        let mut p = PolicyParams::init(1, tiny_dims()).unwrap();
        let l = p.layout();
        p.theta_mut()[l.o_wout..].fill(0.0);
        let problem = Problem::from_digits(vec![3, 4]).unwrap();
        let trace = teacher_trace(&problem, 1).unwrap();
        let lp = p.sequence_logprob(&problem, &trace).unwrap();
        let expect = trace.len() as f64 * (1.0 / VOCAB_SIZE as f64).ln();
        assert!((lp - expect).abs() < 1e-9);
    }

    #[test]
    fn output_bias_gradient_sums_to_zero_per_step() {
        // Softmax rows sum to zero, so the bias gradient sums to zero per
        // prediction and hence in total.
        let p = PolicyParams::init(3, tiny_dims()).unwrap();
        let problem = Problem::from_digits(vec![1, 2, 3]).unwrap();
        let trace = teacher_trace(&problem, 2).unwrap();
        let (_, grad) = p.sequence_logprob_grad(&problem, &trace).unwrap();
        let l = p.layout();
        let sum: f64 = grad[l.o_bout..].iter().sum();
        assert!(sum.abs() < 1e-9, "bias gradient sum = {sum}");
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let p = PolicyParams::init(42, tiny_dims()).unwrap();
        let problem = Problem::from_digits(vec![3, 4]).unwrap();
        let trace = teacher_trace(&problem, 2).unwrap();
        let mut rng = seeding::rng(17);
        let err = finite_difference_check(&p, &problem, &trace, 1e-5, &mut rng).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn coarse_step_is_detected_by_the_checker() {
        let p = PolicyParams::init(42, tiny_dims()).unwrap();
        let problem = Problem::from_digits(vec![3, 4]).unwrap();
        let trace = teacher_trace(&problem, 3).unwrap();
        let mut rng = seeding::rng(17);
        let fine = finite_difference_check(&p, &problem, &trace, 1e-5, &mut rng).unwrap();
        let mut rng = seeding::rng(17);
        let coarse = finite_difference_check(&p, &problem, &trace, 1.0, &mut rng).unwrap();
        assert!(coarse > fine, "coarse {coarse} should exceed fine {fine}");
        assert!(coarse > 1e-4, "h=1 must trip the 1e-4 gate, got {coarse}");
    }

    #[test]
    fn linear_function_checks_to_machine_precision() {
        let theta: Vec<f64> = (0..50).map(|i| 0.01 * i as f64).collect();
        let coeff: Vec<f64> = (0..50).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let c = coeff.clone();
        let f = move |t: &[f64]| t.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
        let indices: Vec<usize> = (0..50).collect();
        let err = max_relative_fd_error(f, &theta, &coeff, 1e-5, &indices);
        assert!(err <= 1e-10, "linear f must be exact, got {err}");
    }

    #[test]
    fn rollout_logprobs_sum_to_sequence_logprob() {
        let p = PolicyParams::init(9, tiny_dims()).unwrap();
        let problem = Problem::from_digits(vec![2, 5, 1]).unwrap();
        let cfg = SampleConfig {
            temperature: 1.0,
            top_p: 1.0,
            max_len: 30,
        };
        let mut rng = seeding::rng(100);
        for _ in 0..20 {
            let roll = p.sample_rollout(&problem, &cfg, &mut rng).unwrap();
            let lp = p.sequence_logprob(&problem, &roll.tokens).unwrap();
            assert!((roll.logprob() - lp).abs() <= 1e-9);
            assert_eq!(roll.length, roll.tokens.len());
        }
    }

    #[test]
    fn greedy_decoding_is_deterministic() {
        let p = PolicyParams::init(12, tiny_dims()).unwrap();
        let problem = Problem::from_digits(vec![7, 7]).unwrap();
        let cfg = SampleConfig {
            temperature: 0.0,
            top_p: 1.0,
            max_len: 25,
        };
        let a = p.sample_rollout(&problem, &cfg, &mut seeding::rng(1)).unwrap();
        let b = p.sample_rollout(&problem, &cfg, &mut seeding::rng(999)).unwrap();
        assert_eq!(a.tokens, b.tokens, "greedy ignores the rng");
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let p = PolicyParams::init(12, tiny_dims()).unwrap();
        let problem = Problem::from_digits(vec![1, 2, 3, 4]).unwrap();
        let cfg = SampleConfig {
            temperature: 0.9,
            top_p: 0.9,
            max_len: 40,
        };
        let a = p.sample_rollout(&problem, &cfg, &mut seeding::rng(5)).unwrap();
        let b = p.sample_rollout(&problem, &cfg, &mut seeding::rng(5)).unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.step_logprobs, b.step_logprobs);
    }

    #[test]
    fn truncated_rollouts_are_incorrect_with_max_length() {
        let p = PolicyParams::init(12, tiny_dims()).unwrap();
        let problem = Problem::from_digits(vec![1, 2]).unwrap();
        let cfg = SampleConfig {
            temperature: 1.0,
            top_p: 1.0,
            max_len: 2,
        };
        let mut rng = seeding::rng(8);
        for _ in 0..20 {
            let roll = p.sample_rollout(&problem, &cfg, &mut rng).unwrap();
            if roll.truncated {
                assert_eq!(roll.length, 2);
                assert!(!roll.is_correct);
            }
        }
    }

    #[test]
    fn rejects_invalid_sample_configs() {
        let bad = [
            SampleConfig { temperature: -1.0, top_p: 1.0, max_len: 10 },
            SampleConfig { temperature: 1.0, top_p: 0.0, max_len: 10 },
            SampleConfig { temperature: 1.0, top_p: 1.2, max_len: 10 },
            SampleConfig { temperature: 1.0, top_p: 1.0, max_len: 0 },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?} should be rejected");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn nucleus_sets_are_nested(seed in 0u64..500, a in 0.05f64..1.0, b in 0.05f64..1.0) {
            let p = PolicyParams::init(seed, tiny_dims()).unwrap();
            let probs = p.next_token_distribution(&[Token(2), SEP]).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = nucleus_retained(&probs, lo);
            let big = nucleus_retained(&probs, hi);
            prop_assert!(small.iter().all(|t| big.contains(t)),
                "top_p={} set {:?} not within top_p={} set {:?}", lo, small, hi, big);
        }

        #[test]
        fn gradient_matches_fd_on_random_sequences(seed in 0u64..30) {
            let p = PolicyParams::init(seed, tiny_dims()).unwrap();
            let mut rng = seeding::rng(seed.wrapping_add(1000));
            let problem = sample_problem(&mut rng, 2, 4).unwrap();
            let cfg = SampleConfig { temperature: 1.0, top_p: 1.0, max_len: 16 };
            let roll = p.sample_rollout(&problem, &cfg, &mut rng).unwrap();
            let err = finite_difference_check(&p, &problem, &roll.tokens, 1e-5, &mut rng).unwrap();
            prop_assert!(err <= 1e-4, "fd mismatch {}", err);
        }
    }
}
