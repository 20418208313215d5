//! Blocking client for the HTTP API. Must not be called from inside an
//! async runtime.

use std::time::Duration;

use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::{RequestBuilder, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::{ChatRequest, ChatResponse, ErrorBody, ErrorCode, HealthResponse, RebuildRequest, RebuildResponse};
use crate::ingest::RefinementReport;
use crate::rag::Session;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("HTTP {status}: {message}")]
    Api {
        status: u16,
        code: Option<ErrorCode>,
        message: String,
    },
}

pub struct Client {
    base: String,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(base_url: &str, token: Option<String>) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            token,
            http,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/v1{path}", self.base)
    }

    fn authed(&self, rb: RequestBuilder) -> RequestBuilder {
        match &self.token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json()?);
        }
        let text = resp.text().unwrap_or_default();
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => (Some(body.error.code), body.error.message),
            Err(_) => (None, text),
        };
        Err(ClientError::Api {
            status: status.as_u16(),
            code,
            message,
        })
    }

    fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.authed(self.http.post(self.url(path))).json(body).send()?)
    }

    fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.authed(self.http.get(self.url(path))).send()?)
    }

    pub fn health(&self) -> Result<HealthResponse, ClientError> {
        Self::decode(self.http.get(format!("{}/health", self.base)).send()?)
    }

    pub fn create_session(&self) -> Result<String, ClientError> {
        let v: Value = Self::decode(self.authed(self.http.post(self.url("/sessions"))).send()?)?;
        Ok(v["session_id"].as_str().unwrap_or_default().to_string())
    }

    pub fn session(&self, id: &str) -> Result<Session, ClientError> {
        self.get_json(&format!("/sessions/{id}"))
    }

    pub fn chat(&self, id: &str, query: &str) -> Result<ChatResponse, ClientError> {
        let request = ChatRequest {
            query: query.to_string(),
            max_tokens: None,
            temperature: None,
            seed: None,
        };
        self.post_json(&format!("/sessions/{id}/chat"), &request)
    }

    pub fn models(&self) -> Result<Value, ClientError> {
        self.get_json("/models")
    }

    pub fn select_model(&self, body: &Value) -> Result<Value, ClientError> {
        self.post_json("/select-model", body)
    }

    /// Upload one CSV or JSONL file as a multipart form; the format follows
    /// `file_name`'s extension.
    pub fn ingest(&self, file_name: &str, bytes: Vec<u8>, source_tag: &str) -> Result<RefinementReport, ClientError> {
        let form = Form::new()
            .text("source_tag", source_tag.to_string())
            .part("file", Part::bytes(bytes).file_name(file_name.to_string()));
        Self::decode(self.authed(self.http.post(self.url("/ingest"))).multipart(form).send()?)
    }

    pub fn rebuild(&self, request: &RebuildRequest) -> Result<RebuildResponse, ClientError> {
        self.post_json("/index/rebuild", request)
    }
}
