//! Chat-completion transport over HTTP.

use std::time::Duration;

use layoutgen_core::llm::{chat_request_body, parse_chat_response, BridgeConfig, ChatMessage, Transport, TransportError};

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, messages: &[ChatMessage], config: &BridgeConfig) -> Result<String, TransportError> {
        let body = chat_request_body(messages, config).to_string();
        let mut req = self
            .client
            .post(&config.endpoint_url)
            .header("content-type", "application/json")
            .body(body);
        if let Some(key) = config.api_key() {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError(format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError(format!("reading response: {e}")))?;
        if !status.is_success() {
            return Err(TransportError(format!("endpoint returned {status}")));
        }
        parse_chat_response(&text)
    }
}
