//! Tolerant extraction of decisions from free-form model replies.

use serde_json::{Map, Value};

use super::perspective::letter_index;
use super::{Decision, Phase};

/// Confidence assumed when a well-formed reply omits its score.
pub const DEFAULT_CONFIDENCE: f64 = 0.5;

/// How many `{` positions are tried before giving up.
const MAX_CANDIDATES: usize = 64;

/// Parse a model reply into a [`Decision`]. Never fails: anything that does
/// not yield a valid action falls back to action 0 with zero confidence.
pub fn parse_decision(raw: &str, phase: Phase, n_perspectives: usize) -> Decision {
    first_object(raw)
        .and_then(|obj| from_object(&obj, phase, n_perspectives))
        .unwrap_or_else(|| Decision::fallback(phase))
}

fn from_object(obj: &Map<String, Value>, phase: Phase, n: usize) -> Option<Decision> {
    let action = match phase {
        Phase::Stop => match obj.get("action")? {
            Value::Number(x) => x.as_i64().filter(|a| *a == 0 || *a == -1)?,
            Value::String(s) => s.trim().parse::<i64>().ok().filter(|a| *a == 0 || *a == -1)?,
            _ => return None,
        },
        Phase::Choice => {
            let idx = match obj.get("action")? {
                Value::Number(x) => usize::try_from(x.as_i64()?).ok()?,
                Value::String(s) => {
                    let s = s.trim();
                    match s.parse::<i64>() {
                        Ok(i) => usize::try_from(i).ok()?,
                        Err(_) => letter_index(s)?,
                    }
                }
                _ => return None,
            };
            if idx >= n {
                return None;
            }
            idx as i64
        }
    };
    let confidence = match obj.get("score").or_else(|| obj.get("confidence")) {
        None | Some(Value::Null) => DEFAULT_CONFIDENCE,
        Some(Value::Number(x)) => x.as_f64()?.clamp(0.0, 1.0),
        Some(Value::String(s)) => s.trim().parse::<f64>().ok().filter(|c| c.is_finite())?.clamp(0.0, 1.0),
        Some(_) => return None,
    };
    let text = |key: &str| match obj.get(key) {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    };
    let observation = match phase {
        Phase::Stop => text("overall observation"),
        Phase::Choice => text("perspective observation"),
    };
    Some(Decision {
        phase,
        observation,
        rationale: text("thoughts"),
        action,
        confidence,
        fallback_used: false,
    })
}

/// The first `{…}` span that parses as a JSON object, directly or after
/// comma repair.
fn first_object(raw: &str) -> Option<Map<String, Value>> {
    raw.char_indices()
        .filter(|&(_, c)| c == '{')
        .take(MAX_CANDIDATES)
        .find_map(|(i, _)| {
            let span = balanced_span(&raw[i..])?;
            let parsed = serde_json::from_str::<Value>(span)
                .ok()
                .or_else(|| serde_json::from_str::<Value>(&repair(span)).ok());
            match parsed {
                Some(Value::Object(m)) => Some(m),
                _ => None,
            }
        })
}

/// Prefix of `s` (which starts with `{`) up to its matching `}`, honoring
/// string literals and escapes.
fn balanced_span(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(&s[..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Insert commas that models commonly drop between members and remove
/// trailing commas.
fn repair(span: &str) -> String {
    let mut out = String::with_capacity(span.len() + 8);
    let mut in_str = false;
    let mut escaped = false;
    // last significant character outside strings, or '"' for a string end
    let mut prev: Option<char> = None;
    for c in span.chars() {
        if in_str {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => {
                    in_str = false;
                    prev = Some('"');
                }
                _ => {}
            }
            continue;
        }
        if c.is_whitespace() {
            out.push(c);
            continue;
        }
        let ends_value = matches!(prev, Some('"' | '}' | ']' | 'e' | 'l')) || prev.is_some_and(|p| p.is_ascii_digit());
        if c == '"' && ends_value {
            out.push(',');
        }
        if matches!(c, '}' | ']') && prev == Some(',') {
            // drop the trailing comma already written
            if let Some(pos) = out.rfind(',') {
                out.remove(pos);
            }
        }
        out.push(c);
        if c == '"' {
            in_str = true;
        } else {
            prev = Some(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_reply_with_stop_action() {
        let d = parse_decision(
            r#"{"overall observation": "a bakery and a bus stop", "thoughts": "this is it", "action": -1}"#,
            Phase::Stop,
            4,
        );
        assert_eq!(d.action, -1);
        assert!(!d.fallback_used);
        assert_eq!(d.observation, "a bakery and a bus stop");
        assert_eq!(d.confidence, DEFAULT_CONFIDENCE);
    }

    #[test]
    fn garbage_falls_back() {
        for raw in ["", "no json here", "{", "{\"action\": 7}", "<html>500</html>"] {
            let d = parse_decision(raw, Phase::Choice, 3);
            assert_eq!((d.action, d.confidence, d.fallback_used), (0, 0.0, true), "{raw}");
        }
    }

    #[test]
    fn letter_action_and_score() {
        let d = parse_decision(
            r#"{"perspective observation": {"A": "x", "B": "y"}, "thoughts": "go", "action": "B", "score": 0.78}"#,
            Phase::Choice,
            3,
        );
        assert_eq!((d.action, d.confidence), (1, 0.78));
    }

    #[test]
    fn missing_comma_after_thoughts_is_repaired() {
        let raw = "Sure.\n```json\n{\n  \"perspective observation\": {\n    \"A\": \"quiet lane\",\n    \"B\": \"busy avenue\"\n  },\n  \"thoughts\": \"The avenue looks more promising.\"\n  \"action\": \"B\",\n  \"score\": 0.78\n}\n```";
        let d = parse_decision(raw, Phase::Choice, 3);
        assert_eq!((d.action, d.confidence, d.fallback_used), (1, 0.78, false));
        assert_eq!(d.rationale, "The avenue looks more promising.");
    }

    #[test]
    fn first_valid_object_wins() {
        let raw = r#"prefix {not json} {"action": 2, "score": 0.4} {"action": 0}"#;
        let d = parse_decision(raw, Phase::Choice, 3);
        assert_eq!((d.action, d.confidence), (2, 0.4));
    }

    #[test]
    fn out_of_range_index_falls_back() {
        let d = parse_decision(r#"{"action": "D"}"#, Phase::Choice, 3);
        assert!(d.fallback_used);
        let d = parse_decision(r#"{"action": 1}"#, Phase::Stop, 3);
        assert!(d.fallback_used);
    }

    #[test]
    fn trailing_comma_repaired() {
        let d = parse_decision(r#"{"action": 0, "score": 0.9,}"#, Phase::Stop, 1);
        assert_eq!((d.action, d.confidence), (0, 0.9));
    }

    #[test]
    fn score_is_clamped() {
        let d = parse_decision(r#"{"action": 0, "score": 7}"#, Phase::Choice, 1);
        assert_eq!(d.confidence, 1.0);
    }
}
