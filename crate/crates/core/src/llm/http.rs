//! Chat-completions wire format over blocking HTTP.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};

use super::{BackendConfig, ChatTransport, LlmError, TransportError, TransportReply, Usage};
use crate::kb::{ChatPart, PromptBundle};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

/// Request body with text parts and base64 data-URL image parts.
pub fn wire_request(bundle: &PromptBundle, model: &str, temperature: f64) -> Value {
    let messages: Vec<Value> = bundle
        .messages
        .iter()
        .map(|m| {
            let content: Vec<Value> = m
                .parts
                .iter()
                .map(|p| match p {
                    ChatPart::Text { text } => json!({"type": "text", "text": text}),
                    ChatPart::Image { image } => json!({
                        "type": "image_url",
                        "image_url": {
                            "url": format!("data:{};base64,{}", image.media_type, STANDARD.encode(&image.bytes)),
                        },
                    }),
                })
                .collect();
            json!({"role": m.role.as_str(), "content": content})
        })
        .collect();
    json!({"model": model, "temperature": temperature, "messages": messages})
}

fn parse_reply(body: &Value) -> Result<TransportReply, TransportError> {
    let text = body["choices"][0]["message"]["content"]
        .as_str()
        .ok_or(TransportError::Fatal(LlmError::EmptyReply))?;
    let usage = Usage {
        prompt_tokens: body["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: body["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    };
    Ok(TransportReply {
        text: text.to_string(),
        usage,
    })
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    api_key: String,
}

impl HttpTransport {
    /// Reads the API key from the environment.
    pub fn from_env(cfg: &BackendConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(LlmError::MissingCredentials(API_KEY_ENV))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            api_key,
        })
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, bundle: &PromptBundle) -> Result<TransportReply, TransportError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&wire_request(bundle, &self.model, self.temperature))
            .send()
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(TransportError::RateLimited);
        }
        let body = resp
            .text()
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        if status.is_server_error() {
            return Err(TransportError::Retryable(format!("{status}: {body}")));
        }
        if !status.is_success() {
            return Err(TransportError::Fatal(LlmError::Http {
                status: status.as_u16(),
                body,
            }));
        }
        let value: Value = serde_json::from_str(&body)
            .map_err(|e| TransportError::Fatal(LlmError::Network(format!("bad JSON reply: {e}"))))?;
        parse_reply(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::build_meta_prompts;
    use crate::report::{CrashReport, Image};
    use sha2::{Digest, Sha256};

    #[test]
    fn images_travel_losslessly() {
        let bytes: Vec<u8> = (0..=255).collect();
        let r = CrashReport::new("1", "s", Some(Image::new(bytes.clone(), "image/png"))).unwrap();
        let b = build_meta_prompts(&r);
        let wire = wire_request(&b, "m", 0.0);
        let last = wire["messages"].as_array().unwrap().last().unwrap();
        let url = last["content"][1]["image_url"]["url"].as_str().unwrap();
        let payload = url.strip_prefix("data:image/png;base64,").unwrap();
        let sent = STANDARD.decode(payload).unwrap();
        assert_eq!(Sha256::digest(&sent), Sha256::digest(&bytes));
        assert_eq!(wire["messages"][0]["role"], "system");
        assert_eq!(wire["temperature"], 0.0);
    }

    #[test]
    fn reply_parsing() {
        let body = json!({"choices": [{"message": {"content": "Pass"}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}});
        let r = parse_reply(&body).unwrap();
        assert_eq!(r.text, "Pass");
        assert_eq!(r.usage.prompt_tokens, 3);
        assert!(parse_reply(&json!({"choices": []})).is_err());
    }
}
