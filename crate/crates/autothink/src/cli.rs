//! Subcommand CLI surface.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data/configuration
//! errors.

use std::collections::HashMap;
use std::error::Error;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data;
use crate::env::{self, TrainConfig};
use crate::report::{self, LogWriter};
use crate::reward::{composite_reward, GroundTruth, RewardBreakdown, RewardConfig};
use crate::template::ResponsePayload;

#[derive(Parser)]
#[command(
    name = "autothink",
    version,
    about = "Adaptive-length tool-use RL toolkit on a synthetic testbed"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training job described by a JSON config file.
    Train {
        config: PathBuf,
        /// Override the config's log path.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Stratify, rebalance, and variance-refine a JSONL sample file.
    PrepareData {
        input: PathBuf,
        output: PathBuf,
        /// Fraction of records kept by the variance refinement.
        #[arg(long, default_value_t = 0.45)]
        keep_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a JSONL file of raw responses against ground truth, emitting
    /// one reward breakdown per line on stdout.
    Score {
        responses: PathBuf,
        groundtruth: PathBuf,
    },
    /// Render the plots and CSV for a training log.
    Report { log: PathBuf, out_dir: PathBuf },
    /// Print the closed-form expected-reward table for the environment in
    /// a config file.
    EnvOracle { config: PathBuf },
}

/// Entry point taking argv; returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train { config, log } => run_train(&config, log),
        Command::PrepareData {
            input,
            output,
            keep_fraction,
            seed,
        } => run_prepare_data(&input, &output, keep_fraction, seed),
        Command::Score {
            responses,
            groundtruth,
        } => run_score(&responses, &groundtruth),
        Command::Report { log, out_dir } => run_report(&log, &out_dir),
        Command::EnvOracle { config } => run_env_oracle(&config),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

type CommandResult = Result<(), Box<dyn Error>>;

fn load_config(path: &Path) -> Result<TrainConfig, Box<dyn Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let cfg: TrainConfig =
        serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))?;
    cfg.validate()?;
    Ok(cfg)
}

fn run_train(config_path: &Path, log_override: Option<PathBuf>) -> CommandResult {
    let cfg = load_config(config_path)?;
    let log_path = log_override
        .or_else(|| cfg.log_path.clone())
        .unwrap_or_else(|| PathBuf::from("train_log.jsonl"));
    let mut writer = LogWriter::create(&log_path)?;
    let mut log_error = None;
    let progress_every = (cfg.steps / 10).max(1);

    let outcome = env::train_with_observer(&cfg, |snapshot| {
        if log_error.is_none() {
            if let Err(err) = writer.write(snapshot) {
                log_error = Some(err);
            }
        }
        if (snapshot.step + 1) % progress_every as u64 == 0 {
            println!(
                "step {:>5}  reward {:+.3}  accuracy {:.3}  thinking {:.3}  beta_l {:.4}",
                snapshot.step + 1,
                snapshot.mean_reward,
                snapshot.accuracy,
                snapshot.thinking_rate,
                snapshot.adaptive_coeff,
            );
        }
    })?;
    if let Some(err) = log_error {
        return Err(err.into());
    }

    let last = outcome.snapshots.last().expect("steps >= 1");
    println!(
        "done: {} steps, final reward {:+.3}, accuracy {:.3}, thinking rate {:.3}",
        outcome.snapshots.len(),
        last.mean_reward,
        last.accuracy,
        last.thinking_rate,
    );
    println!("log written to {}", log_path.display());
    Ok(())
}

fn run_prepare_data(
    input: &Path,
    output: &Path,
    keep_fraction: f64,
    seed: u64,
) -> CommandResult {
    let records = data::read_records(input)?;
    if records.is_empty() {
        return Err("input file holds no records".into());
    }
    let k = records[0].correctness_bits.len();
    let stratified = data::stratify(records, k)?;
    let total = stratified.len();
    let rebalanced = data::rebalance(stratified, seed)?;

    let with_history = rebalanced
        .iter()
        .filter(|r| r.reward_history.is_some())
        .count();
    let refined = if with_history == rebalanced.len() {
        let mut scored = rebalanced;
        for record in &mut scored {
            let history = record.reward_history.as_ref().expect("checked above");
            record.variance = Some(data::reward_variance(history)?);
        }
        data::variance_refine(scored, keep_fraction)?
    } else if with_history == 0 {
        eprintln!("note: no reward histories present; skipping variance refinement");
        rebalanced
    } else {
        return Err(format!(
            "{with_history} of {} records carry reward histories; provide all or none",
            rebalanced.len()
        )
        .into());
    };

    data::write_records(&refined, output)?;
    println!(
        "{} records in, {} out ({} after rebalance), written to {}",
        total,
        refined.len(),
        with_history,
        output.display()
    );
    Ok(())
}

/// One line of a responses file.
#[derive(Debug, Deserialize)]
struct ResponseLine {
    id: String,
    response: String,
}

/// One line of a ground-truth file.
#[derive(Debug, Deserialize)]
struct GroundTruthLine {
    id: String,
    #[serde(default)]
    #[allow(dead_code)]
    prompt: String,
    expected: ResponsePayload,
}

#[derive(Debug, Serialize)]
struct ScoredLine {
    id: String,
    #[serde(flatten)]
    breakdown: RewardBreakdown,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Box<dyn Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line)
            .map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        items.push(item);
    }
    Ok(items)
}

fn run_score(responses_path: &Path, groundtruth_path: &Path) -> CommandResult {
    let responses: Vec<ResponseLine> = read_jsonl(responses_path)?;
    let truths: Vec<GroundTruthLine> = read_jsonl(groundtruth_path)?;
    let by_id: HashMap<&str, &GroundTruthLine> =
        truths.iter().map(|t| (t.id.as_str(), t)).collect();
    let cfg = RewardConfig::default();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for response in &responses {
        let truth = by_id
            .get(response.id.as_str())
            .ok_or_else(|| format!("no ground truth for id {}", response.id))?;
        let gt = GroundTruth {
            expected: truth.expected.clone(),
        };
        let breakdown = composite_reward(&response.response, &gt, &cfg);
        let line = ScoredLine {
            id: response.id.clone(),
            breakdown,
        };
        use std::io::Write;
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn run_report(log: &Path, out_dir: &Path) -> CommandResult {
    let written = report::render_plots(log, out_dir)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_env_oracle(config_path: &Path) -> CommandResult {
    let cfg = load_config(config_path)?;
    let k = cfg.num_symbols;
    println!("closed-form expected answer reward (K = {k})");
    println!("{:<12}{:<10}{:>10}{:>10}", "difficulty", "mode", "chance", "best");
    for entry in env::expected_reward_table(k) {
        println!(
            "{:<12}{:<10}{:>10.3}{:>10.3}",
            entry.difficulty.to_string(),
            entry.mode.to_string(),
            entry.chance_reward,
            entry.best_reward,
        );
    }
    let modes: Vec<String> = env::Difficulty::ALL
        .into_iter()
        .map(|d| format!("{d} → {}", env::oracle_mode(d, k)))
        .collect();
    println!("reward-maximizing modes: {}", modes.join(", "));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(cli_main(["autothink", "frobnicate"]), 1);
        assert_eq!(cli_main(["autothink"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(cli_main(["autothink", "--help"]), 0);
    }

    #[test]
    fn missing_files_are_data_errors() {
        assert_eq!(
            cli_main(["autothink", "report", "/nonexistent/log.jsonl", "/tmp/out"]),
            2
        );
        assert_eq!(cli_main(["autothink", "env-oracle", "/nonexistent.json"]), 2);
    }
}
