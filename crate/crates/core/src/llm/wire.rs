//! Wire encoding: chat-completions request bodies, canonical JSON bytes,
//! and request fingerprints.

use sha2::{Digest, Sha256};

use crate::llm::{LlmError, ProviderConfig, Usage};
use crate::prompt::{AssembledPrompt, ContentPart, Role};

/// Builds the chat-completions request body. Text-only messages use plain
/// string content; messages with an image use a parts array mixing text
/// and an inline base64 data URL.
pub fn build_request(prompt: &AssembledPrompt, provider: &ProviderConfig) -> serde_json::Value {
    let messages: Vec<serde_json::Value> = prompt
        .messages
        .iter()
        .map(|message| {
            let role = match message.role {
                Role::System => "system",
                Role::User => "user",
            };
            let only_text = message
                .parts
                .iter()
                .all(|p| matches!(p, ContentPart::Text(_)));
            let content = if only_text {
                let text: String = message
                    .parts
                    .iter()
                    .map(|p| match p {
                        ContentPart::Text(t) => t.as_str(),
                        ContentPart::Image(_) => unreachable!(),
                    })
                    .collect();
                serde_json::Value::String(text)
            } else {
                serde_json::Value::Array(
                    message
                        .parts
                        .iter()
                        .map(|part| match part {
                            ContentPart::Text(t) => serde_json::json!({
                                "type": "text",
                                "text": t,
                            }),
                            ContentPart::Image(img) => serde_json::json!({
                                "type": "image_url",
                                "image_url": {
                                    "url": format!(
                                        "data:{};base64,{}",
                                        img.media_type, img.base64_data
                                    ),
                                },
                            }),
                        })
                        .collect(),
                )
            };
            serde_json::json!({"role": role, "content": content})
        })
        .collect();

    serde_json::json!({
        "model": provider.model_id,
        "temperature": provider.temperature,
        "max_tokens": provider.max_output_tokens,
        "messages": messages,
    })
}

/// Stable byte encoding of a request: object keys sorted, arrays and
/// string contents preserved verbatim. Independent of in-memory map
/// ordering.
pub fn canonicalize(request: &serde_json::Value) -> Vec<u8> {
    let mut out = String::new();
    write_canonical(request, &mut out);
    out.into_bytes()
}

fn write_canonical(value: &serde_json::Value, out: &mut String) {
    match value {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::Value::String((*key).clone()).to_string());
                out.push(':');
                write_canonical(&map[*key], out);
            }
            out.push('}');
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        leaf => out.push_str(&leaf.to_string()),
    }
}

/// SHA-256 hex digest of the canonical request bytes.
pub fn fingerprint(request: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonicalize(request));
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Extracts assistant text and token usage from a chat-completions
/// response body.
pub fn parse_response(body: &serde_json::Value) -> Result<(String, Usage), LlmError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))?;
    let text = match content {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.pointer("/text").and_then(|t| t.as_str()))
            .collect::<Vec<_>>()
            .join(""),
        other => {
            return Err(LlmError::BadResponse(format!(
                "unsupported content shape: {other}"
            )))
        }
    };
    let token = |ptr: &str| body.pointer(ptr).and_then(|v| v.as_u64()).unwrap_or(0);
    let usage = Usage {
        input_tokens: token("/usage/prompt_tokens"),
        cached_input_tokens: token("/usage/prompt_tokens_details/cached_tokens"),
        output_tokens: token("/usage/completion_tokens"),
    };
    Ok((text, usage))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_bytes_sort_keys_and_keep_arrays() {
        let a: serde_json::Value =
            serde_json::from_str(r#"{"b": 1, "a": [{"y": 2, "x": 3}]}"#).unwrap();
        let b: serde_json::Value =
            serde_json::from_str(r#"{"a": [{"x": 3, "y": 2}], "b": 1}"#).unwrap();
        assert_eq!(canonicalize(&a), canonicalize(&b));
        assert_eq!(
            String::from_utf8(canonicalize(&a)).unwrap(),
            r#"{"a":[{"x":3,"y":2}],"b":1}"#
        );
    }

    #[test]
    fn message_text_is_preserved_verbatim() {
        let a: serde_json::Value =
            serde_json::from_str(r#"{"m": "two  spaces\nand a line"}"#).unwrap();
        let s = String::from_utf8(canonicalize(&a)).unwrap();
        assert!(s.contains("two  spaces\\nand a line"));
    }

    #[test]
    fn different_text_different_fingerprint() {
        let a = serde_json::json!({"m": "hello"});
        let b = serde_json::json!({"m": "hello!"});
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a), fingerprint(&a));
    }

    #[test]
    fn parse_response_reads_text_and_usage() {
        let body = serde_json::json!({
            "choices": [{"message": {"content": "DECISION: YIELD"}}],
            "usage": {
                "prompt_tokens": 10,
                "completion_tokens": 3,
                "prompt_tokens_details": {"cached_tokens": 4}
            }
        });
        let (text, usage) = parse_response(&body).unwrap();
        assert_eq!(text, "DECISION: YIELD");
        assert_eq!(usage.input_tokens, 10);
        assert_eq!(usage.cached_input_tokens, 4);
        assert_eq!(usage.output_tokens, 3);
    }

    #[test]
    fn parse_response_without_usage_defaults_to_zero() {
        let body = serde_json::json!({
            "choices": [{"message": {"content": "x"}}],
        });
        let (_, usage) = parse_response(&body).unwrap();
        assert_eq!(usage, Usage::default());
    }

    #[test]
    fn parse_response_missing_content_is_error() {
        let body = serde_json::json!({"choices": []});
        assert!(parse_response(&body).is_err());
    }
}
