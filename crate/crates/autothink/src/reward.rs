//! Rule-based scoring of completions against ground truth.
//!
//! A completion is first gated by the binary format reward; well-formed
//! outputs then receive a mode-asymmetric answer reward: correct no-think
//! answers pay the most (+1.0), correct think answers half that (+0.5), and
//! mistakes mirror the same magnitudes with opposite sign. Tool calls match
//! by exact canonical equality of name and full argument map, order of
//! parallel calls insensitive.

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::template::{parse_response, ParsedResponse, ReasoningMode, ResponsePayload, ToolCall};

/// Expected answer for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub expected: ResponsePayload,
}

impl GroundTruth {
    pub fn tool_calls(calls: Vec<ToolCall>) -> Self {
        Self {
            expected: ResponsePayload::tool_calls(calls),
        }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self {
            expected: ResponsePayload::user_text(text),
        }
    }
}

/// Per-completion reward decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Binary format reward.
    pub format: u8,
    /// Asymmetric answer reward; absent when the format gate fails.
    pub answer: Option<f64>,
    /// Non-positive penalty, zero unless the length-penalty baseline is on.
    pub length_penalty: f64,
    pub total: f64,
}

/// Scoring configuration. The length penalty reproduces the pre-study
/// baseline that docks completions shorter than a target length; it is off
/// by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub length_penalty_enabled: bool,
    /// Target surrogate token count `l`.
    pub target_length: usize,
    /// Penalty magnitude λ subtracted when length falls below target.
    pub penalty_magnitude: f64,
    /// Total assigned to completions that fail the format gate.
    pub invalid_format_reward: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            length_penalty_enabled: false,
            target_length: 10,
            penalty_magnitude: 0.5,
            invalid_format_reward: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RewardError {
    #[error("cannot score an empty completion group")]
    EmptyGroup,
}

/// Canonical form of a JSON value: object keys sorted at every depth,
/// integral-valued floats collapsed to integers, and -0 mapped to 0.
/// Strings are left byte-identical. Idempotent.
pub fn canonicalize_value(value: &Value) -> Value {
    match value {
        Value::Number(n) => Value::Number(canonicalize_number(n)),
        Value::Array(items) => Value::Array(items.iter().map(canonicalize_value).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), canonicalize_value(v)))
                .collect(),
        ),
        other => other.clone(),
    }
}

fn canonicalize_number(n: &Number) -> Number {
    if !n.is_f64() {
        return n.clone();
    }
    let f = n.as_f64().expect("f64-backed number");
    if f == 0.0 {
        return Number::from(0);
    }
    // 2^63 is the first float not representable as i64.
    if f.is_finite() && f.fract() == 0.0 && f >= i64::MIN as f64 && f < 9_223_372_036_854_775_808.0
    {
        return Number::from(f as i64);
    }
    n.clone()
}

/// Canonicalizes a call's argument map (keys already sort via the map type;
/// numbers are normalized at every depth).
pub fn canonicalize_call(call: &ToolCall) -> ToolCall {
    ToolCall {
        name: call.name.clone(),
        arguments: call
            .arguments
            .iter()
            .map(|(k, v)| (k.clone(), canonicalize_value(v)))
            .collect(),
    }
}

/// Multiset equality of canonicalized calls: order-insensitive,
/// multiplicity-sensitive, names byte-equal, argument maps deeply equal.
pub fn calls_match(a: &[ToolCall], b: &[ToolCall]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut keys_a = canonical_keys(a);
    let mut keys_b = canonical_keys(b);
    keys_a.sort_unstable();
    keys_b.sort_unstable();
    keys_a == keys_b
}

fn canonical_keys(calls: &[ToolCall]) -> Vec<String> {
    calls
        .iter()
        .map(|c| {
            serde_json::to_string(&canonicalize_call(c)).expect("tool call serializes to JSON")
        })
        .collect()
}

fn payload_matches(payload: &ResponsePayload, expected: &ResponsePayload) -> bool {
    match (payload, expected) {
        (ResponsePayload::ToolCalls { calls: a }, ResponsePayload::ToolCalls { calls: b }) => {
            calls_match(a, b)
        }
        (ResponsePayload::UserText { text: a }, ResponsePayload::UserText { text: b }) => {
            a.trim() == b.trim()
        }
        _ => false,
    }
}

/// Mode-asymmetric answer reward:
/// +1.0 correct no-think, +0.5 correct think, -0.5 wrong think,
/// -1.0 wrong no-think.
pub fn answer_reward(parsed: &ParsedResponse, gt: &GroundTruth) -> f64 {
    let correct = payload_matches(&parsed.payload, &gt.expected);
    match (correct, parsed.mode) {
        (true, ReasoningMode::NoThink) => 1.0,
        (true, ReasoningMode::Think) => 0.5,
        (false, ReasoningMode::Think) => -0.5,
        (false, ReasoningMode::NoThink) => -1.0,
    }
}

/// Full scoring of one raw completion. Parse failure short-circuits to the
/// configured invalid-format reward; the answer is never inspected.
pub fn composite_reward(raw: &str, gt: &GroundTruth, cfg: &RewardConfig) -> RewardBreakdown {
    let Ok(parsed) = parse_response(raw) else {
        return RewardBreakdown {
            format: 0,
            answer: None,
            length_penalty: 0.0,
            total: cfg.invalid_format_reward,
        };
    };
    let answer = answer_reward(&parsed, gt);
    let length_penalty = if cfg.length_penalty_enabled && parsed.token_length < cfg.target_length {
        -cfg.penalty_magnitude
    } else {
        0.0
    };
    RewardBreakdown {
        format: 1,
        answer: Some(answer),
        length_penalty,
        total: answer + length_penalty,
    }
}

/// Element-wise [`composite_reward`] over one rollout group; output order
/// matches input order.
pub fn score_group(
    raws: &[String],
    gt: &GroundTruth,
    cfg: &RewardConfig,
) -> Result<Vec<RewardBreakdown>, RewardError> {
    if raws.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    Ok(raws
        .iter()
        .map(|raw| composite_reward(raw, gt, cfg))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::render_response;
    use serde_json::json;

    fn call(name: &str, pairs: &[(&str, Value)]) -> ToolCall {
        ToolCall::new(
            name,
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        )
    }

    #[test]
    fn canonicalize_sorts_keys_recursively() {
        let c = call("f", &[("b", json!(1)), ("a", json!({"z": 1, "a": 2}))]);
        let canon = canonicalize_call(&c);
        let keys: Vec<&String> = canon.arguments.keys().collect();
        assert_eq!(keys, ["a", "b"]);
        assert_eq!(
            serde_json::to_string(&canon).unwrap(),
            r#"{"name":"f","arguments":{"a":{"a":2,"z":1},"b":1}}"#
        );
    }

    #[test]
    fn canonicalize_normalizes_numbers() {
        let c = call("f", &[("x", json!(2.0)), ("y", json!(-0.0)), ("z", json!(1.5))]);
        let canon = canonicalize_call(&c);
        assert_eq!(canon.arguments["x"], json!(2));
        assert_eq!(canon.arguments["y"], json!(0));
        assert_eq!(canon.arguments["z"], json!(1.5));
        // nested
        let c = call("f", &[("a", json!([3.0, {"b": 4.0}]))]);
        assert_eq!(canonicalize_call(&c).arguments["a"], json!([3, {"b": 4}]));
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let c = call("f", &[("b", json!(2.0)), ("a", json!([1.0, -0.0, "s"]))]);
        let once = canonicalize_call(&c);
        assert_eq!(canonicalize_call(&once), once);
    }

    #[test]
    fn calls_match_is_order_insensitive_and_multiplicity_sensitive() {
        let f = call("f", &[("a", json!(1))]);
        let g = call("g", &[("b", json!(2))]);
        assert!(calls_match(&[f.clone(), g.clone()], &[g.clone(), f.clone()]));
        assert!(!calls_match(&[f.clone()], &[f.clone(), f.clone()]));
        assert!(!calls_match(
            &[call("f", &[("a", json!(1))])],
            &[call("f", &[("a", json!("1"))])]
        ));
    }

    #[test]
    fn calls_match_equates_numeric_forms() {
        assert!(calls_match(
            &[call("f", &[("x", json!(2.0))])],
            &[call("f", &[("x", json!(2))])]
        ));
    }

    #[test]
    fn key_set_differences_are_mismatches() {
        let a = call("f", &[("a", json!(1))]);
        let b = call("f", &[("a", json!(1)), ("opt", json!(true))]);
        assert!(!calls_match(&[a], &[b]));
    }

    /// Brute-force oracle: `a` matches `b` iff some permutation of `b`
    /// equals `a` element-wise in canonical form.
    fn permutation_oracle(a: &[ToolCall], b: &[ToolCall]) -> bool {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for slot in 0..n {
                    let mut q = p.clone();
                    q.insert(slot, n - 1);
                    out.push(q);
                }
            }
            out
        }
        if a.len() != b.len() {
            return false;
        }
        let ca: Vec<ToolCall> = a.iter().map(canonicalize_call).collect();
        let cb: Vec<ToolCall> = b.iter().map(canonicalize_call).collect();
        permutations(a.len())
            .into_iter()
            .any(|perm| perm.iter().enumerate().all(|(i, &j)| ca[i] == cb[j]))
    }

    #[test]
    fn calls_match_agrees_with_permutation_oracle() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(7);
        let names = ["f", "g", "h"];
        let random_call = |rng: &mut StdRng| {
            let name = names[rng.gen_range(0..names.len())];
            let n_args = rng.gen_range(0..2);
            let pairs: Vec<(&str, Value)> = (0..n_args)
                .map(|i| {
                    let v = json!(rng.gen_range(0..3));
                    (if i == 0 { "a" } else { "b" }, v)
                })
                .collect();
            call(name, &pairs)
        };
        for _ in 0..300 {
            let len_a = rng.gen_range(0..=4usize);
            let len_b = rng.gen_range(0..=4usize);
            let a: Vec<ToolCall> = (0..len_a.max(1)).map(|_| random_call(&mut rng)).collect();
            let b: Vec<ToolCall> = (0..len_b.max(1)).map(|_| random_call(&mut rng)).collect();
            assert_eq!(
                calls_match(&a, &b),
                permutation_oracle(&a, &b),
                "a={a:?} b={b:?}"
            );
            // Reflexivity and permuted-self matching.
            assert!(calls_match(&a, &a));
            let mut shuffled = a.clone();
            shuffled.reverse();
            assert!(calls_match(&a, &shuffled));
        }
    }

    #[test]
    fn answer_reward_matches_the_asymmetric_table() {
        let gt = GroundTruth::tool_calls(vec![call("f", &[("a", json!(1))])]);
        let right = ResponsePayload::tool_calls(vec![call("f", &[("a", json!(1))])]);
        let wrong = ResponsePayload::tool_calls(vec![call("f", &[("a", json!(2))])]);
        let cases = [
            (ParsedResponse::no_think(right.clone()), 1.0),
            (ParsedResponse::think("r", right), 0.5),
            (ParsedResponse::think("r", wrong.clone()), -0.5),
            (ParsedResponse::no_think(wrong), -1.0),
        ];
        for (parsed, expected) in cases {
            assert_eq!(answer_reward(&parsed, &gt), expected);
        }
    }

    #[test]
    fn payload_type_mismatch_scores_incorrect() {
        let gt = GroundTruth::text("hello");
        let parsed = ParsedResponse::no_think(ResponsePayload::tool_calls(vec![call("f", &[])]));
        assert_eq!(answer_reward(&parsed, &gt), -1.0);
    }

    #[test]
    fn user_text_matches_after_trimming() {
        let gt = GroundTruth::text("  hello world ");
        let parsed = ParsedResponse::no_think(ResponsePayload::user_text("hello world"));
        assert_eq!(answer_reward(&parsed, &gt), 1.0);
    }

    #[test]
    fn composite_reward_gates_on_format() {
        let gt = GroundTruth::text("hi");
        let cfg = RewardConfig::default();
        let b = composite_reward("[mode]think[/mode]broken", &gt, &cfg);
        assert_eq!(b.format, 0);
        assert_eq!(b.answer, None);
        assert_eq!(b.total, -1.0);

        let custom = RewardConfig {
            invalid_format_reward: -2.5,
            ..RewardConfig::default()
        };
        assert_eq!(composite_reward("nope", &gt, &custom).total, -2.5);
    }

    #[test]
    fn composite_reward_applies_length_penalty() {
        let gt = GroundTruth::text("done");
        // 7 tokens total (tags glue to adjacent words), below l = 10.
        let raw = render_response(&ParsedResponse::think(
            "a b c d e f g",
            ResponsePayload::user_text("done"),
        ));
        assert_eq!(raw.split_whitespace().count(), 7);
        let cfg = RewardConfig {
            length_penalty_enabled: true,
            target_length: 10,
            penalty_magnitude: 0.5,
            ..RewardConfig::default()
        };
        let b = composite_reward(&raw, &gt, &cfg);
        assert_eq!(b.answer, Some(0.5));
        assert_eq!(b.length_penalty, -0.5);
        assert_eq!(b.total, 0.0);
        // Disabled: no penalty.
        let b = composite_reward(&raw, &gt, &RewardConfig::default());
        assert_eq!(b.length_penalty, 0.0);
        assert_eq!(b.total, 0.5);
    }

    #[test]
    fn score_group_preserves_order_and_rejects_empty() {
        let gt = GroundTruth::text("yes");
        let cfg = RewardConfig::default();
        let correct = render_response(&ParsedResponse::no_think(ResponsePayload::user_text("yes")));
        let wrong = render_response(&ParsedResponse::no_think(ResponsePayload::user_text("no")));
        let raws = vec![correct, wrong, "garbage".to_string()];
        let scores = score_group(&raws, &gt, &cfg).unwrap();
        let totals: Vec<f64> = scores.iter().map(|s| s.total).collect();
        assert_eq!(totals, [1.0, -1.0, -1.0]);
        assert_eq!(score_group(&[], &gt, &cfg), Err(RewardError::EmptyGroup));
    }

    #[test]
    fn totals_stay_in_range() {
        let gt = GroundTruth::text("x");
        let cfg = RewardConfig {
            length_penalty_enabled: true,
            target_length: 100,
            penalty_magnitude: 0.5,
            ..RewardConfig::default()
        };
        for raw in [
            "[mode]no_think[/mode][no_think]\n[/no_think]x",
            "[mode]think[/mode][think]r[/think]x",
            "[mode]think[/mode][think]r[/think]y",
            "malformed",
        ] {
            let b = composite_reward(raw, &gt, &cfg);
            assert!(b.total >= -1.0 - cfg.penalty_magnitude && b.total <= 1.0);
            if let Some(a) = b.answer {
                assert!([-1.0, -0.5, 0.5, 1.0].contains(&a));
            }
        }
    }
}
