//! The auto-thinking output grammar: parsing, rendering, and the format reward.
//!
//! A completion is valid iff it matches one of two shapes end to end:
//!
//! ```text
//! [mode]think[/mode][think]reasoning here[/think]answer
//! [mode]no_think[/mode][no_think]\n[/no_think]answer
//! ```
//!
//! where `answer` is either a `[tool_call]...[/tool_call]` block wrapping a
//! JSON array of `{"name": ..., "arguments": {...}}` objects, or free text.
//! Whitespace between tags is tolerated; the `no_think` body is exactly one
//! newline with no tolerance, so the format reward stays a crisp binary
//! signal.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const MODE_OPEN: &str = "[mode]";
pub const MODE_CLOSE: &str = "[/mode]";
pub const THINK_OPEN: &str = "[think]";
pub const THINK_CLOSE: &str = "[/think]";
pub const NO_THINK_OPEN: &str = "[no_think]";
pub const NO_THINK_CLOSE: &str = "[/no_think]";
pub const TOOL_CALL_OPEN: &str = "[tool_call]";
pub const TOOL_CALL_CLOSE: &str = "[/tool_call]";

/// Reasoning mode of a completion. `Think` carries an explicit reasoning
/// block; `NoThink` answers directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningMode {
    Think,
    NoThink,
}

impl ReasoningMode {
    /// Serialized tag name: the literal `think` or `no_think`.
    pub fn tag(self) -> &'static str {
        match self {
            ReasoningMode::Think => "think",
            ReasoningMode::NoThink => "no_think",
        }
    }

    /// Per-trajectory mode indicator: 1 for short (no-think) trajectories,
    /// 0 for long (think) ones.
    pub fn mode_flag(self) -> u8 {
        match self {
            ReasoningMode::Think => 0,
            ReasoningMode::NoThink => 1,
        }
    }
}

impl fmt::Display for ReasoningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One structured function invocation: a name plus a JSON argument object.
///
/// Argument maps are kept key-sorted (`serde_json`'s default `Map`), which
/// is also the canonical rendering order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Map<String, Value>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Map<String, Value>) -> Self {
        Self {
            name: name.into(),
            arguments,
        }
    }

    /// Checks the structural invariants: non-empty whitespace-free name.
    pub fn is_well_formed(&self) -> bool {
        !self.name.is_empty() && !self.name.chars().any(char::is_whitespace)
    }
}

/// The answer part of a completion: parallel tool calls or free text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResponsePayload {
    ToolCalls { calls: Vec<ToolCall> },
    #[serde(rename = "text")]
    UserText { text: String },
}

impl ResponsePayload {
    pub fn tool_calls(calls: Vec<ToolCall>) -> Self {
        ResponsePayload::ToolCalls { calls }
    }

    pub fn user_text(text: impl Into<String>) -> Self {
        ResponsePayload::UserText { text: text.into() }
    }
}

/// Structured decomposition of a raw completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub mode: ReasoningMode,
    pub reasoning_text: Option<String>,
    pub payload: ResponsePayload,
    /// Whitespace-delimited token count of the raw text, a tokenizer-free
    /// surrogate for completion length.
    pub token_length: usize,
}

impl ParsedResponse {
    /// Builds a think-mode response; `token_length` is computed from the
    /// canonical rendering.
    pub fn think(reasoning: impl Into<String>, payload: ResponsePayload) -> Self {
        let mut r = Self {
            mode: ReasoningMode::Think,
            reasoning_text: Some(reasoning.into()),
            payload,
            token_length: 0,
        };
        r.token_length = render_response(&r).split_whitespace().count();
        r
    }

    /// Builds a no-think response; `token_length` is computed from the
    /// canonical rendering.
    pub fn no_think(payload: ResponsePayload) -> Self {
        let mut r = Self {
            mode: ReasoningMode::NoThink,
            reasoning_text: None,
            payload,
            token_length: 0,
        };
        r.token_length = render_response(&r).split_whitespace().count();
        r
    }
}

/// Every distinct way parsing can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormatErrorKind {
    MissingModeTag,
    UnknownMode,
    MissingReasoningBlock,
    ModeBlockMismatch,
    NonEmptyNoThinkBody,
    MalformedToolCallJson,
    TrailingGarbage,
}

impl FormatErrorKind {
    fn message(self) -> &'static str {
        match self {
            FormatErrorKind::MissingModeTag => "missing or unterminated [mode] declaration",
            FormatErrorKind::UnknownMode => "mode name is neither `think` nor `no_think`",
            FormatErrorKind::MissingReasoningBlock => "missing or empty reasoning block",
            FormatErrorKind::ModeBlockMismatch => "reasoning block does not match declared mode",
            FormatErrorKind::NonEmptyNoThinkBody => "no_think body is not exactly one newline",
            FormatErrorKind::MalformedToolCallJson => "malformed tool_call block",
            FormatErrorKind::TrailingGarbage => "non-whitespace text after [/tool_call]",
        }
    }
}

/// Parse failure with the first offending position (character offset into
/// the raw text).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{} at char {position}", kind.message())]
pub struct FormatError {
    pub kind: FormatErrorKind,
    pub position: usize,
}

/// Left-to-right cursor over the raw text. Offsets are byte indices and are
/// converted to character offsets only when an error is produced.
struct Scanner<'a> {
    raw: &'a str,
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(raw: &'a str) -> Self {
        Self { raw, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.raw[self.pos..]
    }

    fn skip_whitespace(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.raw.len() - trimmed.len();
    }

    /// Consumes `lit` if the input continues with it.
    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    /// Consumes up to (and including) the first occurrence of `lit`,
    /// returning the text before it.
    fn take_until(&mut self, lit: &str) -> Option<&'a str> {
        let idx = self.rest().find(lit)?;
        let body = &self.rest()[..idx];
        self.pos += idx + lit.len();
        Some(body)
    }

    fn error(&self, kind: FormatErrorKind) -> FormatError {
        self.error_at(kind, self.pos)
    }

    fn error_at(&self, kind: FormatErrorKind, byte_pos: usize) -> FormatError {
        FormatError {
            kind,
            position: self.raw[..byte_pos].chars().count(),
        }
    }
}

/// Parses a raw completion into structured form.
///
/// Total over arbitrary input: every string yields either a
/// [`ParsedResponse`] or the first [`FormatError`] encountered scanning left
/// to right. Linear in the input length.
pub fn parse_response(raw: &str) -> Result<ParsedResponse, FormatError> {
    let mut s = Scanner::new(raw);

    s.skip_whitespace();
    if !s.eat(MODE_OPEN) {
        return Err(s.error(FormatErrorKind::MissingModeTag));
    }
    let name_start = s.pos;
    let Some(mode_name) = s.take_until(MODE_CLOSE) else {
        return Err(s.error_at(FormatErrorKind::MissingModeTag, name_start));
    };
    let mode = match mode_name.trim() {
        "think" => ReasoningMode::Think,
        "no_think" => ReasoningMode::NoThink,
        _ => return Err(s.error_at(FormatErrorKind::UnknownMode, name_start)),
    };

    s.skip_whitespace();
    let (open, close, other_open) = match mode {
        ReasoningMode::Think => (THINK_OPEN, THINK_CLOSE, NO_THINK_OPEN),
        ReasoningMode::NoThink => (NO_THINK_OPEN, NO_THINK_CLOSE, THINK_OPEN),
    };
    if s.rest().starts_with(other_open) {
        return Err(s.error(FormatErrorKind::ModeBlockMismatch));
    }
    if !s.eat(open) {
        return Err(s.error(FormatErrorKind::MissingReasoningBlock));
    }
    let body_start = s.pos;
    let Some(body) = s.take_until(close) else {
        return Err(s.error_at(FormatErrorKind::MissingReasoningBlock, body_start));
    };

    let reasoning_text = match mode {
        ReasoningMode::Think => {
            let reasoning = body.trim();
            if reasoning.is_empty() {
                return Err(s.error_at(FormatErrorKind::MissingReasoningBlock, body_start));
            }
            Some(reasoning.to_string())
        }
        ReasoningMode::NoThink => {
            if body != "\n" {
                return Err(s.error_at(FormatErrorKind::NonEmptyNoThinkBody, body_start));
            }
            None
        }
    };

    s.skip_whitespace();
    let payload = parse_payload(&mut s)?;

    Ok(ParsedResponse {
        mode,
        reasoning_text,
        payload,
        token_length: raw.split_whitespace().count(),
    })
}

fn parse_payload(s: &mut Scanner<'_>) -> Result<ResponsePayload, FormatError> {
    if s.rest().starts_with(TOOL_CALL_OPEN) {
        let open_at = s.pos;
        s.eat(TOOL_CALL_OPEN);
        let Some(json_body) = s.take_until(TOOL_CALL_CLOSE) else {
            return Err(s.error_at(FormatErrorKind::MalformedToolCallJson, open_at));
        };
        let calls = parse_call_array(json_body)
            .ok_or_else(|| s.error_at(FormatErrorKind::MalformedToolCallJson, open_at))?;
        let tail_at = s.pos;
        s.skip_whitespace();
        if !s.rest().is_empty() {
            return Err(s.error_at(FormatErrorKind::TrailingGarbage, tail_at));
        }
        return Ok(ResponsePayload::ToolCalls { calls });
    }

    // Free-text answer. Stray tool-call markup inside it is rejected so a
    // damaged opening tag cannot demote a call block into valid user text.
    let text = s.rest().trim_end();
    for tag in [TOOL_CALL_OPEN, TOOL_CALL_CLOSE] {
        if let Some(idx) = text.find(tag) {
            return Err(s.error_at(FormatErrorKind::MalformedToolCallJson, s.pos + idx));
        }
    }
    Ok(ResponsePayload::UserText {
        text: text.to_string(),
    })
}

/// Accepts only a JSON array of objects with exactly the keys `name`
/// (non-empty, whitespace-free string) and `arguments` (object).
fn parse_call_array(body: &str) -> Option<Vec<ToolCall>> {
    let value: Value = serde_json::from_str(body).ok()?;
    let Value::Array(items) = value else {
        return None;
    };
    if items.is_empty() {
        return None;
    }
    let mut calls = Vec::with_capacity(items.len());
    for item in items {
        let Value::Object(obj) = item else {
            return None;
        };
        if obj.len() != 2 {
            return None;
        }
        let Some(Value::String(name)) = obj.get("name") else {
            return None;
        };
        let Some(Value::Object(arguments)) = obj.get("arguments") else {
            return None;
        };
        let call = ToolCall::new(name.clone(), arguments.clone());
        if !call.is_well_formed() {
            return None;
        }
        calls.push(call);
    }
    Some(calls)
}

/// Emits canonical text in the grammar. Inverse of [`parse_response`] up to
/// token-length recomputation and JSON key order.
pub fn render_response(r: &ParsedResponse) -> String {
    debug_assert!(match r.mode {
        ReasoningMode::Think => r.reasoning_text.as_deref().is_some_and(|t| !t.is_empty()),
        ReasoningMode::NoThink => r.reasoning_text.is_none(),
    });
    let mut out = String::new();
    out.push_str(extract_mode_prefix(r.mode));
    if let Some(reasoning) = &r.reasoning_text {
        out.push_str(reasoning);
        out.push_str(THINK_CLOSE);
    }
    match &r.payload {
        ResponsePayload::ToolCalls { calls } => {
            out.push_str(TOOL_CALL_OPEN);
            out.push_str(&render_call_array(calls));
            out.push_str(TOOL_CALL_CLOSE);
        }
        ResponsePayload::UserText { text } => out.push_str(text),
    }
    out
}

/// Compact JSON for a call list; object keys serialize in sorted order.
pub fn render_call_array(calls: &[ToolCall]) -> String {
    serde_json::to_string(calls).expect("tool calls serialize to JSON")
}

/// Binary format reward: 1 iff the raw text parses.
pub fn format_reward(raw: &str) -> u8 {
    u8::from(parse_response(raw).is_ok())
}

/// Forced-mode prefix prepended to pin the policy's mode choice during
/// controllable inference.
pub fn extract_mode_prefix(mode: ReasoningMode) -> &'static str {
    match mode {
        ReasoningMode::Think => "[mode]think[/mode][think]",
        ReasoningMode::NoThink => "[mode]no_think[/mode][no_think]\n[/no_think]",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn args(pairs: &[(&str, Value)]) -> Map<String, Value> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    fn weather_call() -> ToolCall {
        ToolCall::new("get_weather", args(&[("city", json!("Paris"))]))
    }

    #[test]
    fn parses_no_think_tool_call() {
        let raw = "[mode]no_think[/mode][no_think]\n[/no_think][tool_call][{\"name\":\"get_weather\",\"arguments\":{\"city\":\"Paris\"}}][/tool_call]";
        let parsed = parse_response(raw).unwrap();
        assert_eq!(parsed.mode, ReasoningMode::NoThink);
        assert_eq!(parsed.reasoning_text, None);
        assert_eq!(
            parsed.payload,
            ResponsePayload::tool_calls(vec![weather_call()])
        );
    }

    #[test]
    fn parses_think_tool_call() {
        let raw = "[mode]think[/mode][think]compare both flights[/think][tool_call][{\"name\":\"search\",\"arguments\":{\"q\":\"x\"}}][/tool_call]";
        let parsed = parse_response(raw).unwrap();
        assert_eq!(parsed.mode, ReasoningMode::Think);
        assert_eq!(parsed.reasoning_text.as_deref(), Some("compare both flights"));
        assert_eq!(
            parsed.payload,
            ResponsePayload::tool_calls(vec![ToolCall::new("search", args(&[("q", json!("x"))]))])
        );
    }

    #[test]
    fn think_without_reasoning_block_fails() {
        let err = parse_response("[mode]think[/mode]answer with no think block").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::MissingReasoningBlock);
    }

    #[test]
    fn non_empty_no_think_body_fails() {
        let err = parse_response("[mode]no_think[/mode][no_think]some text[/no_think]hi").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::NonEmptyNoThinkBody);
    }

    #[test]
    fn no_think_body_must_be_exactly_one_newline() {
        assert!(parse_response("[mode]no_think[/mode][no_think]\n[/no_think]hi").is_ok());
        for body in ["", " \n", "\n ", "\n\n"] {
            let raw = format!("[mode]no_think[/mode][no_think]{body}[/no_think]hi");
            let err = parse_response(&raw).unwrap_err();
            assert_eq!(err.kind, FormatErrorKind::NonEmptyNoThinkBody, "body {body:?}");
        }
    }

    #[test]
    fn whitespace_between_tags_is_tolerated() {
        let raw = "  [mode] think [/mode]  [think] weigh the options [/think]  final answer  ";
        let parsed = parse_response(raw).unwrap();
        assert_eq!(parsed.mode, ReasoningMode::Think);
        assert_eq!(parsed.reasoning_text.as_deref(), Some("weigh the options"));
        assert_eq!(parsed.payload, ResponsePayload::user_text("final answer"));
    }

    #[test]
    fn mode_block_mismatch_is_detected() {
        let err = parse_response("[mode]think[/mode][no_think]\n[/no_think]hi").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::ModeBlockMismatch);
        let err = parse_response("[mode]no_think[/mode][think]hm[/think]hi").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::ModeBlockMismatch);
    }

    #[test]
    fn unknown_mode_is_rejected() {
        let err = parse_response("[mode]maybe[/mode][think]hm[/think]hi").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::UnknownMode);
        assert_eq!(err.position, MODE_OPEN.len());
    }

    #[test]
    fn missing_mode_tag_positions_point_into_raw() {
        let err = parse_response("hello").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::MissingModeTag);
        assert_eq!(err.position, 0);
        let err = parse_response("   [mode]think").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::MissingModeTag);
    }

    #[test]
    fn tool_call_body_must_be_json_array_of_calls() {
        let cases = [
            "{\"name\":\"f\",\"arguments\":{}}",        // object, not array
            "[]",                                        // empty array
            "[{\"name\":\"f\"}]",                        // missing arguments
            "[{\"name\":\"f\",\"arguments\":{},\"id\":1}]", // extra key
            "[{\"name\":\"\",\"arguments\":{}}]",        // empty name
            "[{\"name\":\"a b\",\"arguments\":{}}]",     // whitespace in name
            "[{\"name\":\"f\",\"arguments\":[]}]",       // arguments not object
            "not json",
        ];
        for body in cases {
            let raw = format!("[mode]no_think[/mode][no_think]\n[/no_think][tool_call]{body}[/tool_call]");
            let err = parse_response(&raw).unwrap_err();
            assert_eq!(err.kind, FormatErrorKind::MalformedToolCallJson, "body {body}");
        }
    }

    #[test]
    fn unterminated_tool_call_block_fails() {
        let raw = "[mode]no_think[/mode][no_think]\n[/no_think][tool_call][{\"name\":\"f\",\"arguments\":{}}]";
        let err = parse_response(raw).unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::MalformedToolCallJson);
    }

    #[test]
    fn trailing_garbage_after_tool_call_fails() {
        let raw = "[mode]no_think[/mode][no_think]\n[/no_think][tool_call][{\"name\":\"f\",\"arguments\":{}}][/tool_call] extra";
        let err = parse_response(raw).unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::TrailingGarbage);
        let ok = "[mode]no_think[/mode][no_think]\n[/no_think][tool_call][{\"name\":\"f\",\"arguments\":{}}][/tool_call]  \n ";
        assert!(parse_response(ok).is_ok());
    }

    #[test]
    fn stray_tool_call_markup_in_user_text_fails() {
        let raw = "[mode]no_think[/mode][no_think]\n[/no_think]see [/tool_call] fragment";
        let err = parse_response(raw).unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::MalformedToolCallJson);
    }

    #[test]
    fn format_reward_matches_parse_outcome() {
        let valid = "[mode]think[/mode][think]reason[/think]done";
        assert_eq!(format_reward(valid), 1);
        assert_eq!(format_reward("[mode]think[/mode][think]reason[/thinkdone"), 0);
        let bad_json = "[mode]think[/mode][think]r[/think][tool_call]{\"name\":\"f\"}[/tool_call]";
        assert_eq!(format_reward(bad_json), 0);
    }

    #[test]
    fn render_matches_spec_shapes() {
        let r = ParsedResponse::no_think(ResponsePayload::user_text("hello"));
        assert_eq!(
            render_response(&r),
            "[mode]no_think[/mode][no_think]\n[/no_think]hello"
        );
        let r = ParsedResponse::think("step 1", ResponsePayload::user_text("done"));
        assert_eq!(render_response(&r), "[mode]think[/mode][think]step 1[/think]done");
    }

    #[test]
    fn render_parse_round_trip() {
        let r = ParsedResponse::think(
            "check the forecast",
            ResponsePayload::tool_calls(vec![weather_call()]),
        );
        let rendered = render_response(&r);
        let parsed = parse_response(&rendered).unwrap();
        assert_eq!(parsed, r);
        // render ∘ parse ∘ render = render
        assert_eq!(render_response(&parsed), rendered);
    }

    #[test]
    fn mode_prefix_pins_the_parsed_mode() {
        let suffix = "[tool_call][{\"name\":\"f\",\"arguments\":{}}][/tool_call]";
        let think_raw = format!("{}reason here[/think]{suffix}", extract_mode_prefix(ReasoningMode::Think));
        assert_eq!(parse_response(&think_raw).unwrap().mode, ReasoningMode::Think);
        let nothink_raw = format!("{}{suffix}", extract_mode_prefix(ReasoningMode::NoThink));
        assert_eq!(parse_response(&nothink_raw).unwrap().mode, ReasoningMode::NoThink);
    }

    #[test]
    fn token_length_counts_whitespace_tokens() {
        let raw = "[mode]think[/mode][think]a b c[/think]done";
        assert_eq!(parse_response(raw).unwrap().token_length, 3);
        let raw = "[mode]no_think[/mode][no_think]\n[/no_think]hi";
        assert_eq!(parse_response(raw).unwrap().token_length, 2);
    }

    #[test]
    fn error_position_is_a_character_offset() {
        // Multi-byte leading text: position counts chars, not bytes.
        let err = parse_response("héllo").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::MissingModeTag);
        assert_eq!(err.position, 0);
        let err = parse_response("[mode]héllo[/mode]").unwrap_err();
        assert_eq!(err.kind, FormatErrorKind::UnknownMode);
        assert_eq!(err.position, 6);
    }
}
