//! Scratch probe for training dynamics (temporary).

use autothink::env::{train, Difficulty, DifficultyMix, TrainConfig};
use autothink::grpo::EntropyControllerState;

fn tail_stats(outcome: &autothink::env::TrainOutcome) -> (f64, f64, f64) {
    let tail_start = outcome.snapshots.len() * 9 / 10;
    let tail = &outcome.snapshots[tail_start..];
    let mean_entropy =
        tail.iter().filter_map(|s| s.mean_entropy()).sum::<f64>() / tail.len() as f64;
    let longs: Vec<f64> = tail.iter().filter_map(|s| s.mean_entropy_think).collect();
    let long_mean = longs.iter().sum::<f64>() / longs.len().max(1) as f64;
    let think_rate = tail.iter().map(|s| s.thinking_rate).sum::<f64>() / tail.len() as f64;
    (mean_entropy, long_mean, think_rate)
}

fn main() {
    println!("== criterion 6 tuning: collapse run, mix (0.94/0.03/0.03) ==");
    let mix = DifficultyMix {
        easy: 0.94,
        medium: 0.03,
        hard: 0.03,
    };
    for lr in [0.3, 0.5] {
        for steps in [2000usize, 3000, 4000] {
            let cfg = TrainConfig {
                steps,
                seed: 7,
                learning_rate: lr,
                difficulty_mix: mix,
                entropy: EntropyControllerState::disabled(),
                ..TrainConfig::default()
            };
            let outcome = train(&cfg).unwrap();
            let (mean_h, long_h, rate) = tail_stats(&outcome);
            let last = outcome.snapshots.last().unwrap();
            println!(
                "lr {lr} steps {steps}: tail mean entropy {mean_h:.4} (last {:.4}), long {long_h:.3}, rate {rate:.3}",
                last.mean_entropy().unwrap_or(f64::NAN)
            );
        }
    }
    println!("== paired constraint run at the same mix ==");
    for lr in [0.3, 0.5] {
        let cfg = TrainConfig {
            steps: 3000,
            seed: 7,
            learning_rate: lr,
            difficulty_mix: mix,
            ..TrainConfig::default()
        };
        let outcome = train(&cfg).unwrap();
        let (mean_h, long_h, rate) = tail_stats(&outcome);
        println!("lr {lr}: tail mean entropy {mean_h:.4}, long {long_h:.3} (need >= 0.15), rate {rate:.3}");
    }

    println!("== criterion 5 tuning: hard-only, 5 seeds ==");
    for lr in [0.3, 0.5] {
        for step_size in [0.01, 0.02] {
            for steps in [1200usize, 2000] {
                let mut results = Vec::new();
                for seed in 1..=5u64 {
                    let cfg = TrainConfig {
                        steps,
                        seed,
                        learning_rate: lr,
                        difficulty_mix: DifficultyMix::only(Difficulty::Hard),
                        entropy: EntropyControllerState {
                            step_size,
                            ..EntropyControllerState::default()
                        },
                        ..TrainConfig::default()
                    };
                    let outcome = train(&cfg).unwrap();
                    let (_, long_h, _) = tail_stats(&outcome);
                    results.push(long_h);
                }
                let shown: Vec<String> = results.iter().map(|v| format!("{v:.3}")).collect();
                let ok = results.iter().all(|v| (v - 0.2).abs() <= 0.05);
                println!(
                    "lr {lr} eta {step_size} steps {steps}: long entropy {} {}",
                    shown.join(" "),
                    if ok { "ALL-IN-BAND" } else { "out of band" }
                );
            }
        }
    }
}
