//! Group-relative policy optimization with decoupled per-mode entropy
//! bonuses.
//!
//! The loss over a batch of token steps is
//!
//! ```text
//! L = (1/N) Σ_i [ -min(ρ_i·Â_i, clip(ρ_i, 1-ε_low, 1+ε_high)·Â_i) - β_i·H_i ]
//! ```
//!
//! where `ρ_i` is the new/old probability ratio, `Â_i` the group-normalized
//! advantage broadcast from the step's trajectory, and `β_i` a per-step
//! entropy coefficient that activates only when the step's entropy sits at
//! or below its mode's target — entropy is pushed up from below, never
//! suppressed from above. Short (no-think) steps use a fixed coefficient;
//! long (think) steps use an adaptive one tuned by gradient descent so the
//! realized long-mode entropy tracks its target.

use serde::{Deserialize, Serialize};

/// One sampled action step of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    /// Log-probability of the sampled action under the current policy.
    pub logprob_new: f64,
    /// Log-probability under the rollout-time (old) policy.
    pub logprob_old: f64,
    /// Full categorical entropy of the current policy's distribution at
    /// this step (not sampled-token surprisal).
    pub entropy: f64,
    /// Trajectory-level mode indicator: 1 = short (no-think), 0 = long
    /// (think); constant across all steps of one trajectory.
    pub mode_flag: u8,
}

/// One trajectory of a rollout group: its steps plus the scalar reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrajectory {
    pub steps: Vec<TrajectoryStep>,
    pub reward: f64,
}

/// One prompt's G sampled trajectories with group-normalized advantages,
/// the unit of GRPO.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub prompt_id: u64,
    pub trajectories: Vec<RolloutTrajectory>,
    /// One advantage per trajectory, broadcast to its steps.
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    /// Builds a group and computes its advantages; fails for groups smaller
    /// than two trajectories.
    pub fn new(prompt_id: u64, trajectories: Vec<RolloutTrajectory>) -> Result<Self, GrpoError> {
        let rewards: Vec<f64> = trajectories.iter().map(|t| t.reward).collect();
        let advantages = group_advantage(&rewards)?;
        Ok(Self {
            prompt_id,
            trajectories,
            advantages,
        })
    }
}

/// Mutable state of the decoupled entropy controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropyControllerState {
    /// Target entropy for short (no-think) steps.
    pub short_target: f64,
    /// Target entropy for long (think) steps.
    pub long_target: f64,
    /// Fixed bonus coefficient for short steps.
    pub short_coeff: f64,
    /// Adaptive bonus coefficient for long steps.
    pub long_coeff: f64,
    /// Controller step size for the adaptive coefficient.
    pub step_size: f64,
    /// Upper clamp for the adaptive coefficient.
    pub coeff_max: f64,
}

impl Default for EntropyControllerState {
    fn default() -> Self {
        Self {
            short_target: 0.1,
            long_target: 0.2,
            short_coeff: 0.1,
            long_coeff: 0.1,
            step_size: 0.01,
            coeff_max: 1.0,
        }
    }
}

impl EntropyControllerState {
    /// Both bonuses zeroed and the controller frozen; reduces the loss to
    /// the plain clipped surrogate for the whole run.
    pub fn disabled() -> Self {
        Self {
            short_coeff: 0.0,
            long_coeff: 0.0,
            step_size: 0.0,
            ..Self::default()
        }
    }
}

/// PPO-style clip band. `eps_low == eps_high` recovers the symmetric clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClipConfig {
    pub eps_low: f64,
    pub eps_high: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            eps_low: 0.2,
            eps_high: 0.28,
        }
    }
}

impl ClipConfig {
    pub fn symmetric(eps: f64) -> Self {
        Self {
            eps_low: eps,
            eps_high: eps,
        }
    }
}

/// Diagnostic decomposition of one loss evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub per_step_beta: Vec<f64>,
    pub mean_entropy_long: Option<f64>,
    pub mean_entropy_short: Option<f64>,
    pub surrogate_term: f64,
    pub entropy_term: f64,
}

/// Per-step parameter jacobians supplied by the policy: derivatives of the
/// sampled-action log-probability and of the full entropy with respect to
/// the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StepJacobian {
    pub dlogprob: Vec<f64>,
    pub dentropy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrpoError {
    #[error("advantage group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

const ADVANTAGE_EPS: f64 = 1e-6;

/// Group-normalized advantages: `(r - mean) / (population std + 1e-6)`.
/// Zero-variance groups yield exactly zero advantages.
pub fn group_advantage(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(GrpoError::NonFinite("rewards"));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = variance.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / (std + ADVANTAGE_EPS)).collect())
}

/// Per-step entropy-bonus coefficient. The bonus is active only when the
/// step's entropy is at or below its mode's target, enforcing a lower bound
/// rather than a ceiling.
pub fn entropy_coefficient(mode_flag: u8, entropy: f64, state: &EntropyControllerState) -> f64 {
    let m = f64::from(mode_flag);
    let short_active = if entropy <= state.short_target { 1.0 } else { 0.0 };
    let long_active = if entropy <= state.long_target { 1.0 } else { 0.0 };
    state.short_coeff * m * short_active + state.long_coeff * (1.0 - m) * long_active
}

fn check_policy_inputs(
    steps: &[TrajectoryStep],
    advantages: &[f64],
) -> Result<(), GrpoError> {
    if steps.is_empty() {
        return Err(GrpoError::LengthMismatch("no steps".to_string()));
    }
    if steps.len() != advantages.len() {
        return Err(GrpoError::LengthMismatch(format!(
            "{} steps vs {} advantages",
            steps.len(),
            advantages.len()
        )));
    }
    for s in steps {
        if !s.logprob_new.is_finite() || !s.logprob_old.is_finite() {
            return Err(GrpoError::NonFinite("log-probabilities"));
        }
        if !s.entropy.is_finite() {
            return Err(GrpoError::NonFinite("entropies"));
        }
    }
    if advantages.iter().any(|a| !a.is_finite()) {
        return Err(GrpoError::NonFinite("advantages"));
    }
    Ok(())
}

/// Clipped-surrogate loss with decoupled entropy bonuses, averaged over all
/// token steps in the batch (fixed summation order).
///
/// Gradient contract: `logprob_new` and `entropy` are differentiable in the
/// policy parameters; advantages, old log-probabilities, and the bonus
/// coefficients (including their indicators) are constants.
pub fn compute_policy_loss(
    steps: &[TrajectoryStep],
    advantages: &[f64],
    clip: &ClipConfig,
    state: &EntropyControllerState,
) -> Result<LossReport, GrpoError> {
    check_policy_inputs(steps, advantages)?;
    let n = steps.len() as f64;
    let mut surrogate_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut per_step_beta = Vec::with_capacity(steps.len());
    let mut long = MeanAcc::default();
    let mut short = MeanAcc::default();

    for (step, &adv) in steps.iter().zip(advantages) {
        let ratio = (step.logprob_new - step.logprob_old).exp();
        if !ratio.is_finite() {
            return Err(GrpoError::NonFinite("probability ratio"));
        }
        let clipped = ratio.clamp(1.0 - clip.eps_low, 1.0 + clip.eps_high);
        surrogate_sum += -f64::min(ratio * adv, clipped * adv);
        let beta = entropy_coefficient(step.mode_flag, step.entropy, state);
        entropy_sum += -beta * step.entropy;
        per_step_beta.push(beta);
        if step.mode_flag == 0 {
            long.add(step.entropy);
        } else {
            short.add(step.entropy);
        }
    }

    let surrogate_term = surrogate_sum / n;
    let entropy_term = entropy_sum / n;
    Ok(LossReport {
        loss: surrogate_term + entropy_term,
        per_step_beta,
        mean_entropy_long: long.mean(),
        mean_entropy_short: short.mean(),
        surrogate_term,
        entropy_term,
    })
}

#[derive(Default)]
struct MeanAcc {
    sum: f64,
    count: usize,
}

impl MeanAcc {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// One controller update: a gradient-descent step on the adaptive-coefficient
/// loss over the batch's long-mode step entropies. Entropy below target
/// raises the coefficient (more exploration pressure); above target lowers
/// it. The result is clamped to `[0, coeff_max]`; the short coefficient is
/// never touched. An empty batch leaves the state unchanged.
pub fn update_adaptive_coeff(
    long_step_entropies: &[f64],
    state: &EntropyControllerState,
) -> EntropyControllerState {
    let mut next = state.clone();
    if long_step_entropies.is_empty() {
        return next;
    }
    let mean_deviation = long_step_entropies
        .iter()
        .map(|h| h - state.long_target)
        .sum::<f64>()
        / long_step_entropies.len() as f64;
    next.long_coeff = (state.long_coeff - state.step_size * mean_deviation).clamp(0.0, state.coeff_max);
    next
}

/// Pre-study fixed entropy gate: the bonus coefficient `β·1{e ≤ target}`
/// applied uniformly with no mode decoupling. The caller subtracts
/// `coefficient × mean entropy` from the batch loss.
pub fn fixed_entropy_bonus(mean_entropy: f64, beta: f64, target: f64) -> f64 {
    if mean_entropy <= target {
        beta
    } else {
        0.0
    }
}

/// Exact gradient of [`compute_policy_loss`] with respect to the flat
/// policy parameters, under the gradient contract. Where the min/clip
/// selects a branch, that branch's gradient is used; exact ties take the
/// unclipped branch.
pub fn loss_gradient(
    steps: &[TrajectoryStep],
    advantages: &[f64],
    clip: &ClipConfig,
    state: &EntropyControllerState,
    jacobians: &[StepJacobian],
) -> Result<Vec<f64>, GrpoError> {
    check_policy_inputs(steps, advantages)?;
    if jacobians.len() != steps.len() {
        return Err(GrpoError::LengthMismatch(format!(
            "{} steps vs {} jacobians",
            steps.len(),
            jacobians.len()
        )));
    }
    let dim = jacobians
        .first()
        .map(|j| j.dlogprob.len())
        .unwrap_or_default();
    for j in jacobians {
        if j.dlogprob.len() != dim || j.dentropy.len() != dim {
            return Err(GrpoError::LengthMismatch(
                "jacobian dimensions disagree".to_string(),
            ));
        }
    }

    let n = steps.len() as f64;
    let mut grad = vec![0.0; dim];
    for ((step, &adv), jac) in steps.iter().zip(advantages).zip(jacobians) {
        let ratio = (step.logprob_new - step.logprob_old).exp();
        if !ratio.is_finite() {
            return Err(GrpoError::NonFinite("probability ratio"));
        }
        let clipped = ratio.clamp(1.0 - clip.eps_low, 1.0 + clip.eps_high);
        // Unclipped branch on ties; a strictly selected clipped branch means
        // the clamp saturated, whose derivative in the ratio is zero.
        let surrogate_scale = if ratio * adv <= clipped * adv {
            -adv * ratio
        } else {
            0.0
        };
        let beta = entropy_coefficient(step.mode_flag, step.entropy, state);
        for k in 0..dim {
            grad[k] += (surrogate_scale * jac.dlogprob[k] - beta * jac.dentropy[k]) / n;
        }
    }
    Ok(grad)
}
