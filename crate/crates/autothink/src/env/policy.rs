//! A small categorical policy with analytic gradients.
//!
//! Three linear-softmax heads share one flat parameter vector:
//!
//! - a mode head over {think, no-think}, fed an intercept plus a difficulty
//!   indicator (the intercept couples the mode preference across
//!   difficulties, the toy analog of cross-sample interference in a shared
//!   model);
//! - a no-think answer head fed the observable symbol;
//! - a think answer head fed the observable and the revealed hint.

use serde::{Deserialize, Serialize};

use crate::env::task::Difficulty;
use crate::grpo::StepJacobian;

/// Mode-head feature width: intercept + one-hot difficulty.
pub const MODE_FEATURES: usize = 4;
/// Mode-head action count; action index equals the mode flag
/// (0 = think, 1 = no-think).
pub const MODE_ACTIONS: usize = 2;

/// Which decision a step belongs to, with the features it sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepContext {
    Mode { difficulty: Difficulty },
    AnswerNoThink { observable: usize },
    AnswerThink { observable: usize, hint: usize },
}

/// Flat parameter vector with typed views onto the three heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    num_symbols: usize,
    weights: Vec<f64>,
}

impl PolicyParams {
    /// All-zero initialization: uniform answer heads and exactly uniform
    /// mode logits, so both modes are explored from the first step.
    pub fn zeroed(num_symbols: usize) -> Self {
        let len = Self::param_count(num_symbols);
        Self {
            num_symbols,
            weights: vec![0.0; len],
        }
    }

    /// Warm-started parameters, the stand-in for warm-up supervised
    /// fine-tuning: mode logits stay exactly uniform, while the answer
    /// heads carry a logit bias toward their workable strategies (identity
    /// for the no-think head, hint-copying for the think head). A bias of
    /// 2.0 puts either head near 70% accuracy at K = 4 — competent but with
    /// plenty of headroom and entropy left for exploration.
    pub fn warm_start(num_symbols: usize, bias: f64) -> Self {
        let k = num_symbols;
        let mut params = Self::zeroed(k);
        let nothink_offset = MODE_ACTIONS * MODE_FEATURES;
        let think_offset = nothink_offset + k * k;
        for a in 0..k {
            params.weights[nothink_offset + a * k + a] = bias;
            params.weights[think_offset + a * 2 * k + k + a] = bias;
        }
        params
    }

    pub fn param_count(num_symbols: usize) -> usize {
        MODE_ACTIONS * MODE_FEATURES + num_symbols * num_symbols + num_symbols * 2 * num_symbols
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    /// The flattened parameter vector: mode head, then no-think head, then
    /// think head, each row-major.
    pub fn flat_view(&self) -> &[f64] {
        &self.weights
    }

    /// Rebuilds structured parameters from a flat vector.
    pub fn from_flat(num_symbols: usize, weights: Vec<f64>) -> Option<Self> {
        (weights.len() == Self::param_count(num_symbols)
            && weights.iter().all(|w| w.is_finite()))
        .then_some(Self {
            num_symbols,
            weights,
        })
    }

    /// In-place gradient-descent update `θ ← θ − lr·g`.
    pub fn descend(&mut self, gradient: &[f64], learning_rate: f64) {
        debug_assert_eq!(gradient.len(), self.weights.len());
        for (w, g) in self.weights.iter_mut().zip(gradient) {
            *w -= learning_rate * g;
        }
    }

    /// (block offset, action count, feature width, active feature columns)
    /// for a context. Features are one-hot/intercept, so a column list
    /// fully describes the input vector.
    fn layout(&self, ctx: &StepContext) -> HeadLayout {
        let k = self.num_symbols;
        match *ctx {
            StepContext::Mode { difficulty } => HeadLayout {
                offset: 0,
                actions: MODE_ACTIONS,
                width: MODE_FEATURES,
                active: vec![0, 1 + difficulty.index()],
            },
            StepContext::AnswerNoThink { observable } => HeadLayout {
                offset: MODE_ACTIONS * MODE_FEATURES,
                actions: k,
                width: k,
                active: vec![observable],
            },
            StepContext::AnswerThink { observable, hint } => HeadLayout {
                offset: MODE_ACTIONS * MODE_FEATURES + k * k,
                actions: k,
                width: 2 * k,
                active: vec![observable, k + hint],
            },
        }
    }
}

struct HeadLayout {
    offset: usize,
    actions: usize,
    width: usize,
    active: Vec<usize>,
}

/// Softmax distribution of one decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub logits: Vec<f64>,
    pub logprobs: Vec<f64>,
    pub probs: Vec<f64>,
    /// Full categorical entropy of the distribution.
    pub entropy: f64,
}

/// Distribution (logits, log-probabilities, probabilities, entropy) of the
/// step's action set.
pub fn step_distribution(params: &PolicyParams, ctx: &StepContext) -> StepStats {
    let layout = params.layout(ctx);
    let logits: Vec<f64> = (0..layout.actions)
        .map(|a| {
            layout
                .active
                .iter()
                .map(|&c| params.weights[layout.offset + a * layout.width + c])
                .sum()
        })
        .collect();

    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    let log_sum = sum.ln() + max;
    let logprobs: Vec<f64> = logits.iter().map(|z| z - log_sum).collect();
    let probs: Vec<f64> = exp.iter().map(|e| e / sum).collect();
    let entropy = -probs
        .iter()
        .zip(&logprobs)
        .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
        .sum::<f64>();

    StepStats {
        logits,
        logprobs,
        probs,
        entropy,
    }
}

/// Distribution plus analytic jacobians of the sampled-action
/// log-probability and of the entropy with respect to the flat parameter
/// vector.
pub fn policy_step_stats(
    params: &PolicyParams,
    ctx: &StepContext,
    action: usize,
) -> (StepStats, StepJacobian) {
    let stats = step_distribution(params, ctx);
    let layout = params.layout(ctx);
    debug_assert!(action < layout.actions);

    let dim = params.weights.len();
    let mut dlogprob = vec![0.0; dim];
    let mut dentropy = vec![0.0; dim];
    for a in 0..layout.actions {
        let p = stats.probs[a];
        // d log p(action) / d z_a = 1{a = action} - p_a
        let dlp = if a == action { 1.0 - p } else { -p };
        // dH / d z_a = -p_a (log p_a + H); zero in the p → 0 limit.
        let dh = if p > 0.0 {
            -p * (stats.logprobs[a] + stats.entropy)
        } else {
            0.0
        };
        for &c in &layout.active {
            let idx = layout.offset + a * layout.width + c;
            dlogprob[idx] = dlp;
            dentropy[idx] = dh;
        }
    }

    (
        stats,
        StepJacobian {
            dlogprob,
            dentropy,
        },
    )
}

/// Deterministic argmax with first-max tie-breaking.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contexts(k: usize) -> Vec<StepContext> {
        vec![
            StepContext::Mode {
                difficulty: Difficulty::Medium,
            },
            StepContext::AnswerNoThink { observable: 1 },
            StepContext::AnswerThink {
                observable: 0,
                hint: k - 1,
            },
        ]
    }

    #[test]
    fn uniform_head_has_log_k_entropy() {
        let params = PolicyParams::zeroed(4);
        let stats = step_distribution(&params, &StepContext::AnswerNoThink { observable: 2 });
        assert!((stats.entropy - 4.0_f64.ln()).abs() < 1e-12);
        for p in &stats.probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_logit_drives_entropy_to_zero() {
        let k = 4;
        let mut weights = vec![0.0; PolicyParams::param_count(k)];
        // No-think head, answer 3 for observable 1.
        let offset = MODE_ACTIONS * MODE_FEATURES;
        weights[offset + 3 * k + 1] = 50.0;
        let params = PolicyParams::from_flat(k, weights).unwrap();
        let stats = step_distribution(&params, &StepContext::AnswerNoThink { observable: 1 });
        assert!(stats.entropy < 1e-9);
        assert_eq!(argmax(&stats.probs), 3);
    }

    #[test]
    fn flat_view_round_trips() {
        let k = 3;
        let mut params = PolicyParams::zeroed(k);
        let grad: Vec<f64> = (0..params.flat_view().len())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        params.descend(&grad, -1.0); // add the pattern
        let rebuilt = PolicyParams::from_flat(k, params.flat_view().to_vec()).unwrap();
        assert_eq!(rebuilt, params);
        assert!(PolicyParams::from_flat(k, vec![0.0; 5]).is_none());
        assert!(PolicyParams::from_flat(k, vec![f64::NAN; PolicyParams::param_count(k)]).is_none());
    }

    #[test]
    fn jacobians_match_central_finite_differences() {
        let k = 4;
        let base: Vec<f64> = (0..PolicyParams::param_count(k))
            .map(|i| 0.3 * ((i as f64) * 0.91).sin())
            .collect();
        let step = 1e-5;
        for ctx in contexts(k) {
            let params = PolicyParams::from_flat(k, base.clone()).unwrap();
            let actions = step_distribution(&params, &ctx).probs.len();
            for action in 0..actions {
                let (_, jac) = policy_step_stats(&params, &ctx, action);
                for i in 0..base.len() {
                    let mut plus = base.clone();
                    plus[i] += step;
                    let mut minus = base.clone();
                    minus[i] -= step;
                    let sp = step_distribution(
                        &PolicyParams::from_flat(k, plus).unwrap(),
                        &ctx,
                    );
                    let sm = step_distribution(
                        &PolicyParams::from_flat(k, minus).unwrap(),
                        &ctx,
                    );
                    let fd_logprob = (sp.logprobs[action] - sm.logprobs[action]) / (2.0 * step);
                    let fd_entropy = (sp.entropy - sm.entropy) / (2.0 * step);
                    let rel = |a: f64, b: f64| (a - b).abs() / f64::max(1e-6, a.abs().max(b.abs()));
                    assert!(
                        rel(jac.dlogprob[i], fd_logprob) <= 1e-4,
                        "dlogprob mismatch at {i}: {} vs {fd_logprob}",
                        jac.dlogprob[i]
                    );
                    assert!(
                        rel(jac.dentropy[i], fd_entropy) <= 1e-4,
                        "dentropy mismatch at {i}: {} vs {fd_entropy}",
                        jac.dentropy[i]
                    );
                }
            }
        }
    }

    #[test]
    fn jacobian_touches_only_the_active_head_block(){
        let k = 4;
        let params = PolicyParams::zeroed(k);
        let (_, jac) = policy_step_stats(&params, &StepContext::AnswerNoThink { observable: 0 }, 1);
        let nothink_block = MODE_ACTIONS * MODE_FEATURES..MODE_ACTIONS * MODE_FEATURES + k * k;
        for (i, (dl, dh)) in jac.dlogprob.iter().zip(&jac.dentropy).enumerate() {
            if !nothink_block.contains(&i) {
                assert_eq!(*dl, 0.0);
                assert_eq!(*dh, 0.0);
            }
        }
    }

    #[test]
    fn argmax_breaks_ties_on_the_first_maximum() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }
}
