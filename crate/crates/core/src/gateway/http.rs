//! Minimal chat-completion HTTP backend: one user message in, text plus
//! usage counts out. Anything fancier (streaming, tool calls, provider
//! extensions) is out of scope.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

pub(crate) struct HttpReply {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// One request attempt. Classification into retryable vs fatal errors is the
/// caller's job via [`GatewayError::is_transient`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn send_chat_request(
    client: &reqwest::blocking::Client,
    url: &str,
    api_key: &str,
    model: &str,
    prompt: &str,
    temperature: f64,
    max_tokens: u32,
    timeout: Duration,
) -> Result<HttpReply, GatewayError> {
    let body = ChatRequest {
        model,
        messages: vec![ChatMessage {
            role: "user",
            content: prompt,
        }],
        temperature,
        max_tokens,
    };
    let response = client
        .post(url)
        .bearer_auth(api_key)
        .timeout(timeout)
        .json(&body)
        .send()
        .map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout {
                    model: model.to_string(),
                }
            } else {
                GatewayError::Transport {
                    model: model.to_string(),
                    message: e.to_string(),
                }
            }
        })?;

    let status = response.status();
    if status.as_u16() == 401 || status.as_u16() == 403 {
        return Err(GatewayError::Auth {
            model: model.to_string(),
        });
    }
    if status.as_u16() == 429 {
        return Err(GatewayError::RateLimited {
            model: model.to_string(),
        });
    }
    if status.is_server_error() {
        return Err(GatewayError::Server {
            model: model.to_string(),
            status: status.as_u16(),
        });
    }
    if !status.is_success() {
        return Err(GatewayError::Transport {
            model: model.to_string(),
            message: format!("unexpected status {status}"),
        });
    }

    let parsed: ChatResponse = response.json().map_err(|e| GatewayError::Transport {
        model: model.to_string(),
        message: format!("malformed response body: {e}"),
    })?;
    let text = parsed
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| GatewayError::Transport {
            model: model.to_string(),
            message: "response carried no choices".to_string(),
        })?;
    let (prompt_tokens, completion_tokens) = match parsed.usage {
        Some(u) => (u.prompt_tokens, u.completion_tokens),
        None => (None, None),
    };
    Ok(HttpReply {
        text,
        prompt_tokens,
        completion_tokens,
    })
}
