//! Line-delimited JSON transport to external model processes.
//!
//! Generation requests are `{"id","prompt","max_tokens","temperature","seed"}`
//! and answers are `{"id","text"}` or `{"id","error"}`. Embedding requests
//! are `{"id","text"}` with answers `{"id","embedding":[..]}` or
//! `{"id","error"}`. Exactly one response line per request line.
//!
//! The peer is either a child process spoken to over stdin/stdout or a TCP
//! listener on the local host.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embed::{normalize, EmbedError, Embedder, EmbeddingVector};
use crate::rag::{BackendInfo, GenerateParams, LlmBackend, RagError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Endpoint {
    /// Spawn `program args…` and talk over its stdio.
    Command { program: String, #[serde(default)] args: Vec<String> },
    /// Connect to `addr` (host:port).
    Tcp { addr: String },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub id: String,
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f32,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum Conn {
    Child {
        child: Child,
        stdin: ChildStdin,
        stdout: BufReader<ChildStdout>,
    },
    Tcp {
        writer: TcpStream,
        reader: BufReader<TcpStream>,
    },
}

impl Conn {
    fn open(endpoint: &Endpoint) -> std::io::Result<Self> {
        match endpoint {
            Endpoint::Command { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
                Ok(Conn::Child { child, stdin, stdout })
            }
            Endpoint::Tcp { addr } => {
                let writer = TcpStream::connect(addr)?;
                let reader = BufReader::new(writer.try_clone()?);
                Ok(Conn::Tcp { writer, reader })
            }
        }
    }

    fn round_trip(&mut self, line: &str) -> std::io::Result<String> {
        let (w, r): (&mut dyn Write, &mut dyn BufRead) = match self {
            Conn::Child { stdin, stdout, .. } => (stdin, stdout),
            Conn::Tcp { writer, reader } => (writer, reader),
        };
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        w.flush()?;
        let mut buf = String::new();
        if r.read_line(&mut buf)? == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "peer closed the connection",
            ));
        }
        Ok(buf)
    }
}

impl Drop for Conn {
    fn drop(&mut self) {
        if let Conn::Child { child, .. } = self {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// One serialized request/response channel. The connection is opened on
/// first use and reopened after any transport error.
pub struct LineJsonClient {
    endpoint: Endpoint,
    conn: Mutex<Option<Conn>>,
    next_id: AtomicU64,
}

impl LineJsonClient {
    pub fn new(endpoint: Endpoint) -> Self {
        Self {
            endpoint,
            conn: Mutex::new(None),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn next_id(&self) -> String {
        self.next_id.fetch_add(1, Ordering::Relaxed).to_string()
    }

    /// Send one JSON line and return the decoded answer line.
    pub fn call<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        request: &Req,
    ) -> Result<Resp, String> {
        let line = serde_json::to_string(request).map_err(|e| e.to_string())?;
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(Conn::open(&self.endpoint).map_err(|e| format!("cannot start backend: {e}"))?);
        }
        let reply = match guard.as_mut().expect("connection present").round_trip(&line) {
            Ok(reply) => reply,
            Err(e) => {
                *guard = None;
                return Err(format!("backend transport error: {e}"));
            }
        };
        serde_json::from_str(reply.trim_end()).map_err(|e| {
            *guard = None;
            format!("backend sent malformed JSON: {e}")
        })
    }
}

/// [`LlmBackend`] speaking the generation protocol.
pub struct ProcessBackend {
    client: LineJsonClient,
}

impl ProcessBackend {
    pub fn new(endpoint: Endpoint) -> Self {
        Self {
            client: LineJsonClient::new(endpoint),
        }
    }
}

impl LlmBackend for ProcessBackend {
    fn generate(&self, prompt: &str, params: &GenerateParams) -> Result<String, RagError> {
        let id = self.client.next_id();
        let request = GenerateRequest {
            id: id.clone(),
            prompt: prompt.to_string(),
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            seed: params.seed,
        };
        let response: GenerateResponse = self.client.call(&request).map_err(RagError::BackendFailure)?;
        if response.id != id {
            return Err(RagError::BackendFailure(format!(
                "response id `{}` does not match request `{id}`",
                response.id
            )));
        }
        match (response.text, response.error) {
            (_, Some(err)) => Err(RagError::BackendFailure(err)),
            (Some(text), None) => Ok(text),
            (None, None) => Err(RagError::BackendFailure("response has neither text nor error".into())),
        }
    }

    fn info(&self) -> BackendInfo {
        let name = match self.client.endpoint() {
            Endpoint::Command { program, .. } => format!("process:{program}"),
            Endpoint::Tcp { addr } => format!("tcp:{addr}"),
        };
        BackendInfo {
            name,
            deterministic: false,
        }
    }
}

/// [`Embedder`] speaking the embedding protocol. Returned vectors are
/// normalized here when the peer did not already do so.
pub struct ProcessEmbedder {
    client: LineJsonClient,
    dims: usize,
}

impl ProcessEmbedder {
    pub fn new(endpoint: Endpoint, dims: usize) -> Self {
        Self {
            client: LineJsonClient::new(endpoint),
            dims,
        }
    }
}

impl Embedder for ProcessEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let request = EmbedRequest {
            id: self.client.next_id(),
            text: text.to_string(),
        };
        let response: EmbedResponse = self.client.call(&request).map_err(EmbedError::EmbedderFailure)?;
        if let Some(err) = response.error {
            return Err(EmbedError::EmbedderFailure(err));
        }
        let values = response
            .embedding
            .ok_or_else(|| EmbedError::EmbedderFailure("response has no embedding".into()))?;
        if values.len() != self.dims {
            return Err(EmbedError::DimMismatch {
                expected: self.dims,
                actual: values.len(),
            });
        }
        let raw = EmbeddingVector::new(values)?;
        match normalize(&raw) {
            Ok(v) => Ok(v),
            Err(EmbedError::ZeroVector) => Ok(raw),
            Err(e) => Err(e),
        }
    }
}

/// Answer generation requests from `input` with `handler` until EOF. Used by
/// the bundled mock runner and handy for wrapping other generators.
pub fn serve_generate_lines<R, W, F>(input: R, mut output: W, mut handler: F) -> std::io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&GenerateRequest) -> Result<String, String>,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<GenerateRequest>(&line) {
            Ok(req) => match handler(&req) {
                Ok(text) => GenerateResponse {
                    id: req.id,
                    text: Some(text),
                    error: None,
                },
                Err(e) => GenerateResponse {
                    id: req.id,
                    text: None,
                    error: Some(e),
                },
            },
            Err(e) => {
                // Echo whatever id we can recover so the caller can match it.
                let id = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_string))
                    .unwrap_or_default();
                GenerateResponse {
                    id,
                    text: None,
                    error: Some(format!("bad request: {e}")),
                }
            }
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
