//! Adaptive-length ("auto-thinking") tool-use reinforcement learning at
//! desk scale.
//!
//! The crate implements the full training stack for a policy that decides,
//! per task, whether to emit an explicit reasoning block (`think`) or answer
//! directly (`no_think`):
//!
//! - [`template`] — the tagged output grammar, its parser/renderer, and the
//!   binary format reward;
//! - [`reward`] — canonical tool-call matching and the mode-asymmetric
//!   answer reward;
//! - [`grpo`] — group-relative advantages, the clipped surrogate with
//!   decoupled per-mode entropy bonuses, and the adaptive entropy-coefficient
//!   controller;
//! - [`env`] — a deterministic synthetic tool-use environment where think
//!   mode reveals the information hard tasks need, plus a small analytic
//!   policy and the training loop;
//! - [`data`] — pass@k stratification, rebalancing, variance refinement, and
//!   SFT label construction;
//! - [`report`] — training-log emission, metrics (thinking rate, ACU), and
//!   static plots.
//!
//! Start with the runnable examples (`cargo run --example train_toy`) or
//! the `autothink` binary (`autothink train config.json`).

pub mod cli;
pub mod data;
pub mod env;
pub mod grpo;
pub mod report;
pub mod reward;
pub mod template;

pub use env::{
    forced_mode_eval, generate_tasks, train, Difficulty, DifficultyMix, PolicyParams,
    SyntheticTask, TrainConfig, TrainOutcome,
};
pub use grpo::{ClipConfig, EntropyControllerState, LossReport, RolloutGroup, TrajectoryStep};
pub use report::{acu, AcuInputs, TrainingSnapshot};
pub use reward::{GroundTruth, RewardBreakdown, RewardConfig};
pub use template::{
    format_reward, parse_response, render_response, ParsedResponse, ReasoningMode,
    ResponsePayload, ToolCall,
};
