//! Textual grammar for spatial tokens, task tokens, and grounded phrase
//! spans — the bit-exact contract between dataset emission and evaluation.
//!
//! The wire forms (also documented in `docs/formats.md`):
//!
//! - spatial token: `{<x_left><y_top><x_right><y_bottom>|<theta>}` with
//!   decimal integers, coordinates in `[0, 100]`, theta in `[0, 90)`;
//!   a theta-less 4-field variant `{<a><b><c><d>}` decodes with theta 0
//! - task token: `[grounding]`, `[identify]`, or `[refer]` prefixing a prompt
//! - phrase span: `<p>…</p>` around a referring phrase, followed by the
//!   space-separated spatial tokens that ground it
//!
//! Encoding is strict; response decoding is a total function that extracts
//! every well-formed element, reports malformed fragments on a warning
//! channel, and never fails on arbitrary model output.

use std::sync::LazyLock;

use regex::Regex;

use crate::error::{ForgeError, Result};
use crate::geometry::OrientedBox;

/// A box normalized to the [0,100] coordinate scale: the corner pair of the
/// pre-rotation axis-aligned rectangle plus integer rotation degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpatialToken {
    pub x_left: u8,
    pub y_top: u8,
    pub x_right: u8,
    pub y_bottom: u8,
    /// Degrees in `[0, 90)`.
    pub theta: u8,
}

impl SpatialToken {
    /// Builds a token, validating coordinate ranges and corner ordering.
    pub fn new(x_left: u8, y_top: u8, x_right: u8, y_bottom: u8, theta: u8) -> Result<Self> {
        let tok = SpatialToken { x_left, y_top, x_right, y_bottom, theta };
        for (name, v) in [
            ("x_left", x_left),
            ("y_top", y_top),
            ("x_right", x_right),
            ("y_bottom", y_bottom),
        ] {
            if v > 100 {
                return Err(ForgeError::invalid(
                    "spatial token",
                    format!("{name}={v} outside [0,100]"),
                ));
            }
        }
        if theta >= 90 {
            return Err(ForgeError::invalid(
                "spatial token",
                format!("theta={theta} outside [0,90)"),
            ));
        }
        if x_left > x_right || y_top > y_bottom {
            return Err(ForgeError::invalid(
                "spatial token",
                format!("corners out of order: ({x_left},{y_top})..({x_right},{y_bottom})"),
            ));
        }
        Ok(tok)
    }

    /// Exact surface form `{<a><b><c><d>|<e>}`, no whitespace.
    pub fn encode(&self) -> String {
        format!(
            "{{<{}><{}><{}><{}>|<{}>}}",
            self.x_left, self.y_top, self.x_right, self.y_bottom, self.theta
        )
    }

    /// Parses a string that is exactly one spatial token (either variant).
    pub fn parse(s: &str) -> Result<Self> {
        static WHOLE: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(&format!("^{TOKEN_PATTERN}$")).unwrap());
        let caps = WHOLE
            .captures(s)
            .ok_or_else(|| ForgeError::invalid("spatial token", format!("unrecognized form: {s}")))?;
        Self::from_captures(&caps)
    }

    fn from_captures(caps: &regex::Captures) -> Result<Self> {
        let field = |i: usize| -> Result<u8> {
            let text = caps.get(i).map(|m| m.as_str()).unwrap_or("0");
            text.parse::<u8>()
                .map_err(|_| ForgeError::invalid("spatial token", format!("field {text} overflows")))
        };
        SpatialToken::new(field(1)?, field(2)?, field(3)?, field(4)?, field(5)?)
    }

    /// Maps the token back to a pixel-space box: per-axis scaling of the
    /// pre-rotation extents, angle kept. Errors on zero-extent tokens.
    pub fn denormalize(&self, width: u32, height: u32) -> Result<OrientedBox> {
        let left = self.x_left as f64 * width as f64 / 100.0;
        let right = self.x_right as f64 * width as f64 / 100.0;
        let top = self.y_top as f64 * height as f64 / 100.0;
        let bottom = self.y_bottom as f64 * height as f64 / 100.0;
        OrientedBox::new(
            (left + right) / 2.0,
            (top + bottom) / 2.0,
            right - left,
            bottom - top,
            self.theta as f64,
        )
    }

    /// The token interpreted as a box in its own normalized 100×100 frame.
    /// Grounding IoU is computed in this space, which needs no image
    /// dimensions and coincides with pixel-space IoU for square images.
    pub fn to_normalized_box(&self) -> Result<OrientedBox> {
        self.denormalize(100, 100)
    }
}

/// Behavior-selecting prompt prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TaskToken {
    Grounding,
    Identify,
    Refer,
    #[default]
    None,
}

impl TaskToken {
    /// The bracketed surface form, or `None` for the token-less case.
    pub fn surface(&self) -> Option<&'static str> {
        match self {
            TaskToken::Grounding => Some("[grounding]"),
            TaskToken::Identify => Some("[identify]"),
            TaskToken::Refer => Some("[refer]"),
            TaskToken::None => None,
        }
    }

    /// Splits a leading task token (if any) off a prompt or question.
    pub fn strip(text: &str) -> (TaskToken, &str) {
        for token in [TaskToken::Grounding, TaskToken::Identify, TaskToken::Refer] {
            let surface = token.surface().unwrap();
            if let Some(rest) = text.strip_prefix(surface) {
                return (token, rest.strip_prefix(' ').unwrap_or(rest));
            }
        }
        (TaskToken::None, text)
    }
}

/// Renders "[token] body" with exactly one separating space; `None` emits
/// the body alone.
pub fn render_prompt(task: TaskToken, body: &str) -> String {
    match task.surface() {
        Some(surface) => format!("{surface} {body}"),
        None => body.to_string(),
    }
}

/// One referring phrase with the boxes that ground it.
///
/// `start..end` delimit the phrase bytes inside the parent response's
/// `plain_text` (empty range for a box chain with no phrase).
/// `leading_space` records that extraction consumed one space before the
/// chain, so rendering can restore it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedSpan {
    pub phrase: String,
    pub boxes: Vec<SpatialToken>,
    pub start: usize,
    pub end: usize,
    pub leading_space: bool,
}

/// Result of decoding a grounded response: the markup-free text, the
/// extracted spans in order, and warnings for every malformed fragment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundedResponse {
    pub plain_text: String,
    pub spans: Vec<GroundedSpan>,
    pub warnings: Vec<String>,
}

impl GroundedResponse {
    /// Every decoded box, in reading order.
    pub fn all_boxes(&self) -> Vec<SpatialToken> {
        self.spans.iter().flat_map(|s| s.boxes.iter().copied()).collect()
    }

    /// Reconstructs the grounded surface text from `plain_text` plus spans.
    /// Exact inverse of `decode_response` on canonically emitted text.
    pub fn to_grounded_text(&self) -> String {
        let mut out = String::new();
        let mut cursor = 0;
        for span in &self.spans {
            out.push_str(&self.plain_text[cursor..span.start]);
            let mut pieces: Vec<String> = Vec::new();
            if !span.phrase.is_empty() {
                pieces.push(format!("<p>{}</p>", span.phrase));
            }
            pieces.extend(span.boxes.iter().map(SpatialToken::encode));
            if span.leading_space {
                out.push(' ');
            }
            out.push_str(&pieces.join(" "));
            cursor = span.end;
        }
        out.push_str(&self.plain_text[cursor..]);
        out
    }
}

const TOKEN_PATTERN: &str =
    r"\{<(\d{1,3})><(\d{1,3})><(\d{1,3})><(\d{1,3})>(?:\|<(\d{1,3})>)?\}";

static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(TOKEN_PATTERN).unwrap());
static SPAN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<p>(.*?)</p>").unwrap());
static FRAGMENT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{<[^{}]*\}?").unwrap());

enum Event {
    Span { start: usize, end: usize, phrase: String },
    Token { start: usize, end: usize, token: SpatialToken },
}

impl Event {
    fn range(&self) -> (usize, usize) {
        match self {
            Event::Span { start, end, .. } | Event::Token { start, end, .. } => (*start, *end),
        }
    }
}

/// Decodes arbitrary model output into plain text plus grounded spans.
///
/// Well-formed `<p>…</p>` spans and spatial tokens are extracted; a token
/// chain separated from the preceding span (or chain) by whitespace only
/// attaches to it, and orphan chains become spans with an empty phrase.
/// Malformed fragments stay in `plain_text` verbatim and each produces one
/// warning. Never fails.
pub fn decode_response(text: &str) -> GroundedResponse {
    let mut warnings: Vec<String> = Vec::new();
    let mut events: Vec<Event> = Vec::new();

    let mut span_ranges: Vec<(usize, usize)> = Vec::new();
    for caps in SPAN_RE.captures_iter(text) {
        let whole = caps.get(0).unwrap();
        let phrase = caps.get(1).unwrap().as_str();
        if phrase.contains("<p>") {
            warnings.push(format!(
                "nested <p> marker inside phrase span at byte {}",
                whole.start()
            ));
        }
        span_ranges.push((whole.start(), whole.end()));
        events.push(Event::Span {
            start: whole.start(),
            end: whole.end(),
            phrase: phrase.to_string(),
        });
    }

    // Token-shaped matches: valid ones outside spans become events; the rest
    // stay in the text and are reported.
    let mut token_shaped: Vec<(usize, usize)> = Vec::new();
    for caps in TOKEN_RE.captures_iter(text) {
        let whole = caps.get(0).unwrap();
        token_shaped.push((whole.start(), whole.end()));
        let inside_span = span_ranges
            .iter()
            .any(|&(s, e)| whole.start() >= s && whole.end() <= e);
        if inside_span {
            warnings.push(format!(
                "spatial token inside a phrase span at byte {}",
                whole.start()
            ));
            continue;
        }
        match SpatialToken::from_captures(&caps) {
            Ok(token) => events.push(Event::Token {
                start: whole.start(),
                end: whole.end(),
                token,
            }),
            Err(err) => warnings.push(format!("{} at byte {}: {err}", whole.as_str(), whole.start())),
        }
    }

    // Token-like fragments the strict grammar rejected outright.
    for m in FRAGMENT_RE.find_iter(text) {
        let overlaps = |ranges: &[(usize, usize)]| {
            ranges.iter().any(|&(s, e)| m.start() < e && s < m.end())
        };
        if !overlaps(&token_shaped) && !overlaps(&span_ranges) {
            warnings.push(format!(
                "malformed spatial token `{}` at byte {}",
                m.as_str(),
                m.start()
            ));
        }
    }

    // Unpaired phrase markers outside any matched span.
    for marker in ["<p>", "</p>"] {
        let mut from = 0;
        while let Some(pos) = text[from..].find(marker) {
            let at = from + pos;
            if !span_ranges.iter().any(|&(s, e)| at >= s && at < e) {
                let kind = if marker == "<p>" { "unclosed <p>" } else { "stray </p>" };
                warnings.push(format!("{kind} marker at byte {at}"));
            }
            from = at + marker.len();
        }
    }

    events.sort_by_key(|e| e.range().0);

    let mut plain = String::new();
    let mut spans: Vec<GroundedSpan> = Vec::new();
    let mut pending: Option<usize> = None;
    let mut cursor = 0;
    for event in &events {
        let (start, end) = event.range();
        let gap = &text[cursor..start];
        match event {
            Event::Span { phrase, .. } => {
                plain.push_str(gap);
                let s = plain.len();
                plain.push_str(phrase);
                spans.push(GroundedSpan {
                    phrase: phrase.clone(),
                    boxes: Vec::new(),
                    start: s,
                    end: plain.len(),
                    leading_space: false,
                });
                pending = Some(spans.len() - 1);
            }
            Event::Token { token, .. } => {
                let chains = pending.is_some() && gap.chars().all(char::is_whitespace);
                if chains {
                    spans[pending.unwrap()].boxes.push(*token);
                } else {
                    plain.push_str(gap);
                    let leading_space = plain.ends_with(' ');
                    if leading_space {
                        plain.pop();
                    }
                    let at = plain.len();
                    spans.push(GroundedSpan {
                        phrase: String::new(),
                        boxes: vec![*token],
                        start: at,
                        end: at,
                        leading_space,
                    });
                    pending = Some(spans.len() - 1);
                }
            }
        }
        cursor = end;
    }
    plain.push_str(&text[cursor..]);

    GroundedResponse { plain_text: plain, spans, warnings }
}
