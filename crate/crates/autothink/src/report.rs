//! Metrics, training-log emission, and static plot/CSV export.
//!
//! The training log is JSON Lines: one snapshot per line, flushed per line
//! so an interrupted run still leaves a valid prefix. Plots are plain SVG
//! line charts, pure functions of the log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::rollout::Rollout;
use crate::template::ReasoningMode;

/// One optimizer step's training dynamics. Per-mode fields are null in the
/// log when the batch contained no rollout of that mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSnapshot {
    pub step: u64,
    pub mean_reward: f64,
    pub accuracy: f64,
    pub thinking_rate: f64,
    pub mean_len_think: Option<f64>,
    pub mean_len_nothink: Option<f64>,
    pub mean_entropy_think: Option<f64>,
    pub mean_entropy_nothink: Option<f64>,
    /// Adaptive long-mode entropy coefficient after this step's controller
    /// update.
    #[serde(rename = "beta_l")]
    pub adaptive_coeff: f64,
    pub loss: f64,
}

impl TrainingSnapshot {
    /// Step-weighted mean entropy over both modes (every trajectory
    /// contributes the same number of steps, so trajectory weighting equals
    /// step weighting).
    pub fn mean_entropy(&self) -> Option<f64> {
        match (self.mean_entropy_think, self.mean_entropy_nothink) {
            (Some(t), Some(n)) => {
                Some(self.thinking_rate * t + (1.0 - self.thinking_rate) * n)
            }
            (Some(t), None) => Some(t),
            (None, Some(n)) => Some(n),
            (None, None) => None,
        }
    }
}

/// Inputs of the inference-efficiency score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcuInputs {
    /// Fraction in [0, 1].
    pub accuracy: f64,
    /// Model size in billions of parameters.
    pub params: f64,
    /// Mean completion token count.
    pub tokens: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("accuracy must lie in [0, 1], got {0}")]
    AccuracyOutOfRange(f64),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("cannot compute a rate over an empty rollout list")]
    EmptyRollouts,
    #[error("malformed log line {line}: {source}")]
    MalformedLine {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Accuracy per computation unit: `accuracy / (params × tokens)`, reported
/// in units of 10³ for readability.
pub fn acu(inputs: &AcuInputs) -> Result<f64, ReportError> {
    if !(0.0..=1.0).contains(&inputs.accuracy) {
        return Err(ReportError::AccuracyOutOfRange(inputs.accuracy));
    }
    if inputs.params <= 0.0 {
        return Err(ReportError::NonPositive("params"));
    }
    if inputs.tokens <= 0.0 {
        return Err(ReportError::NonPositive("tokens"));
    }
    Ok(inputs.accuracy / (inputs.params * inputs.tokens) * 1e3)
}

/// Fraction of rollouts emitted in think mode.
pub fn thinking_rate(rollouts: &[Rollout]) -> Result<f64, ReportError> {
    if rollouts.is_empty() {
        return Err(ReportError::EmptyRollouts);
    }
    let thinking = rollouts
        .iter()
        .filter(|r| r.mode == ReasoningMode::Think)
        .count();
    Ok(thinking as f64 / rollouts.len() as f64)
}

/// Streaming JSONL writer that flushes after every snapshot.
pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    pub fn create(path: &Path) -> Result<Self, ReportError> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write(&mut self, snapshot: &TrainingSnapshot) -> Result<(), ReportError> {
        let line = serde_json::to_string(snapshot).expect("snapshot serializes");
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Writes a whole run to a JSONL file, one snapshot per line.
pub fn emit_log(snapshots: &[TrainingSnapshot], path: &Path) -> Result<(), ReportError> {
    let mut writer = LogWriter::create(path)?;
    for snapshot in snapshots {
        writer.write(snapshot)?;
    }
    Ok(())
}

/// Reads a JSONL training log; malformed lines report their line number.
pub fn read_log(path: &Path) -> Result<Vec<TrainingSnapshot>, ReportError> {
    let reader = BufReader::new(File::open(path)?);
    let mut snapshots = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let snapshot = serde_json::from_str(&line)
            .map_err(|source| ReportError::MalformedLine { line: i + 1, source })?;
        snapshots.push(snapshot);
    }
    Ok(snapshots)
}

/// One plotted series: a label plus (step, value) points; gaps where the
/// log held nulls.
struct Series<'a> {
    label: &'a str,
    points: Vec<Option<(f64, f64)>>,
    color: &'a str,
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn series<'a>(
    label: &'a str,
    snapshots: &[TrainingSnapshot],
    color_index: usize,
    f: impl Fn(&TrainingSnapshot) -> Option<f64>,
) -> Series<'a> {
    Series {
        label,
        points: snapshots
            .iter()
            .map(|s| f(s).map(|v| (s.step as f64, v)))
            .collect(),
        color: COLORS[color_index % COLORS.len()],
    }
}

/// Renders one SVG per metric family plus a combined CSV; returns the paths
/// written. Pure function of the log contents.
pub fn render_plots(log_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let snapshots = read_log(log_path)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let chart = |name: &str, title: &str, series: Vec<Series>| -> (String, String) {
        (format!("{name}.svg"), line_chart(title, &series))
    };
    let families = vec![
        chart(
            "reward_accuracy",
            "mean reward and accuracy",
            vec![
                series("mean_reward", &snapshots, 0, |s| Some(s.mean_reward)),
                series("accuracy", &snapshots, 1, |s| Some(s.accuracy)),
            ],
        ),
        chart(
            "thinking_rate",
            "thinking rate",
            vec![series("thinking_rate", &snapshots, 0, |s| {
                Some(s.thinking_rate)
            })],
        ),
        chart(
            "response_length",
            "mean response length per mode",
            vec![
                series("think", &snapshots, 0, |s| s.mean_len_think),
                series("no_think", &snapshots, 1, |s| s.mean_len_nothink),
            ],
        ),
        chart(
            "entropy",
            "mean entropy per mode",
            vec![
                series("think", &snapshots, 0, |s| s.mean_entropy_think),
                series("no_think", &snapshots, 1, |s| s.mean_entropy_nothink),
            ],
        ),
        chart(
            "adaptive_coeff",
            "adaptive entropy coefficient",
            vec![series("beta_l", &snapshots, 2, |s| Some(s.adaptive_coeff))],
        ),
        chart(
            "loss",
            "policy loss",
            vec![series("loss", &snapshots, 3, |s| Some(s.loss))],
        ),
    ];
    for (file_name, svg) in families {
        let path = out_dir.join(file_name);
        std::fs::write(&path, svg)?;
        written.push(path);
    }

    let csv_path = out_dir.join("metrics.csv");
    std::fs::write(&csv_path, to_csv(&snapshots))?;
    written.push(csv_path);
    Ok(written)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn to_csv(snapshots: &[TrainingSnapshot]) -> String {
    let mut out = String::from(
        "step,mean_reward,accuracy,thinking_rate,mean_len_think,mean_len_nothink,\
         mean_entropy_think,mean_entropy_nothink,beta_l,loss\n",
    );
    for s in snapshots {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.step,
            s.mean_reward,
            s.accuracy,
            s.thinking_rate,
            fmt_opt(s.mean_len_think),
            fmt_opt(s.mean_len_nothink),
            fmt_opt(s.mean_entropy_think),
            fmt_opt(s.mean_entropy_nothink),
            s.adaptive_coeff,
            s.loss,
        ));
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 40.0;

fn line_chart(title: &str, series: &[Series]) -> String {
    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().flatten().copied())
        .collect();
    let (x_min, x_max) = axis_bounds(points.iter().map(|p| p.0));
    let (y_min, y_max) = axis_bounds(points.iter().map(|p| p.1));

    let x_of = |x: f64| {
        MARGIN_LEFT + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    };
    let y_of = |y: f64| {
        HEIGHT - MARGIN_BOTTOM - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        WIDTH / 2.0,
        escape_xml(title)
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333\"/>\n\
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#333\"/>\n",
        l = MARGIN_LEFT,
        r = WIDTH - MARGIN_RIGHT,
        t = MARGIN_TOP,
        b = HEIGHT - MARGIN_BOTTOM,
    ));
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            x_of(fx),
            HEIGHT - MARGIN_BOTTOM + 16.0,
            trim_float(fx)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            y_of(fy) + 4.0,
            trim_float(fy)
        ));
    }
    // data: polyline segments broken at gaps, plus point markers so a
    // single-snapshot log still shows up.
    for s in series {
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, svg: &mut String| {
            if seg.len() >= 2 {
                svg.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                    s.color,
                    seg.join(" ")
                ));
            }
            seg.clear();
        };
        for p in &s.points {
            match p {
                Some((x, y)) => {
                    segment.push(format!("{:.2},{:.2}", x_of(*x), y_of(*y)));
                    svg.push_str(&format!(
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.8\" fill=\"{}\"/>\n",
                        x_of(*x),
                        y_of(*y),
                        s.color
                    ));
                }
                None => flush(&mut segment, &mut svg),
            }
        }
        flush(&mut segment, &mut svg);
    }
    // legend
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + 14.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"3\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            WIDTH - 140.0,
            y,
            s.color,
            WIDTH - 126.0,
            y + 5.0,
            escape_xml(s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn axis_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        // degenerate span (single point or constant series)
        return (min - 0.5, max + 0.5);
    }
    let pad = (max - min) * 0.05;
    (min - pad, max + pad)
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
