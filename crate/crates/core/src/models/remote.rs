//! Client for external scoring servers (child-process stdio or HTTP).
//!
//! Transport failures are retried up to [`RETRY_ATTEMPTS`] times with
//! exponential backoff starting at [`RETRY_BASE`]; a stdio server is
//! respawned between attempts. Malformed replies and error replies are
//! never retried.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::{debug, warn};

use super::wire::{self, Handshake, ScoreReply, ScoreRequest};
use super::{check_batch_size, Generator, Manifest, ModelKind};
use crate::attribution::StepLogProbs;
use crate::error::{LergError, Result};

pub const RETRY_ATTEMPTS: u32 = 3;
pub const RETRY_BASE: Duration = Duration::from_millis(100);
const SHUTDOWN_POLLS: u32 = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum Transport {
    /// Shell command whose stdin/stdout carry the protocol.
    Stdio { command: String },
    /// URL of the `/score` endpoint (appended when missing).
    Http { endpoint: String },
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub transport: Transport,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn stdio(command: impl Into<String>) -> Self {
        Self {
            transport: Transport::Stdio { command: command.into() },
            max_in_flight: 4,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self {
            transport: Transport::Http { endpoint: endpoint.into() },
            max_in_flight: 4,
            timeout: Duration::from_secs(60),
        }
    }
}

struct StdioConn {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl StdioConn {
    fn spawn(command: &str) -> Result<(Self, Handshake)> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| LergError::RemoteUnavailable(format!("cannot spawn `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        let n = stdout
            .read_line(&mut line)
            .map_err(|e| LergError::RemoteUnavailable(format!("reading handshake: {e}")))?;
        if n == 0 {
            let _ = child.kill();
            let _ = child.wait();
            return Err(LergError::RemoteUnavailable("server exited before handshake".into()));
        }
        let hs = wire::decode_handshake(&line)?;
        Ok((
            Self {
                child,
                stdin: Some(stdin),
                stdout,
            },
            hs,
        ))
    }

    /// Writes all lines from a helper thread while reading replies, so a
    /// full pipe on either side cannot deadlock the exchange.
    fn exchange(&mut self, lines: &[String]) -> std::io::Result<Vec<String>> {
        let stdin = self.stdin.as_mut().expect("stdin open while connected");
        let stdout = &mut self.stdout;
        thread::scope(|scope| {
            let writer = scope.spawn(move || -> std::io::Result<()> {
                for line in lines {
                    stdin.write_all(line.as_bytes())?;
                    stdin.write_all(b"\n")?;
                }
                stdin.flush()
            });
            let mut replies = Vec::with_capacity(lines.len());
            for _ in 0..lines.len() {
                let mut buf = String::new();
                if stdout.read_line(&mut buf)? == 0 {
                    return Err(std::io::Error::new(
                        std::io::ErrorKind::UnexpectedEof,
                        "server closed its output",
                    ));
                }
                replies.push(buf);
            }
            writer.join().expect("writer thread panicked")?;
            Ok(replies)
        })
    }
}

impl Drop for StdioConn {
    /// Closes stdin so the server can exit on EOF, then kills it if it is
    /// still running after a grace period.
    fn drop(&mut self) {
        drop(self.stdin.take());
        for _ in 0..SHUTDOWN_POLLS {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Backend {
    Stdio {
        command: String,
        conn: Mutex<Option<StdioConn>>,
    },
    Http {
        url: String,
        client: reqwest::blocking::Client,
    },
}

/// A generator served by an external process.
pub struct RemoteClient {
    backend: Backend,
    manifest: Manifest,
    max_in_flight: usize,
    next_id: AtomicU64,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient").field("manifest", &self.manifest).finish()
    }
}

fn with_retries<T>(mut attempt: impl FnMut(u32) -> Result<T>) -> Result<T> {
    let mut last = None;
    for n in 0..RETRY_ATTEMPTS {
        if n > 0 {
            thread::sleep(RETRY_BASE * 2u32.pow(n - 1));
        }
        match attempt(n) {
            Err(LergError::RemoteUnavailable(msg)) => {
                warn!("remote attempt {} failed: {msg}", n + 1);
                last = Some(msg);
            }
            other => return other,
        }
    }
    Err(LergError::RemoteUnavailable(format!(
        "gave up after {RETRY_ATTEMPTS} attempts: {}",
        last.unwrap_or_default()
    )))
}

impl RemoteClient {
    /// Connects and reads the handshake.
    pub fn connect(config: &RemoteConfig) -> Result<Self> {
        let (backend, hs) = match &config.transport {
            Transport::Stdio { command } => {
                let (conn, hs) = with_retries(|_| StdioConn::spawn(command))?;
                (
                    Backend::Stdio {
                        command: command.clone(),
                        conn: Mutex::new(Some(conn)),
                    },
                    hs,
                )
            }
            Transport::Http { endpoint } => {
                let url = if endpoint.trim_end_matches('/').ends_with("/score") {
                    endpoint.trim_end_matches('/').to_string()
                } else {
                    format!("{}/score", endpoint.trim_end_matches('/'))
                };
                let client = reqwest::blocking::Client::builder()
                    .timeout(config.timeout)
                    .build()
                    .map_err(|e| LergError::RemoteUnavailable(e.to_string()))?;
                let hs = with_retries(|_| {
                    let body = http_call(client.get(&url))?;
                    wire::decode_handshake(body.lines().next().unwrap_or(""))
                })?;
                (Backend::Http { url, client }, hs)
            }
        };
        debug!("connected to remote model: {hs:?}");
        Ok(Self {
            backend,
            manifest: Manifest {
                kind: ModelKind::Remote,
                normalized: hs.normalized,
                vocabulary: "server-defined".into(),
                max_batch: hs.max_batch,
            },
            max_in_flight: config.max_in_flight.max(1),
            next_id: AtomicU64::new(0),
        })
    }

    fn request_lines(&self, chunks: &[&[Vec<String>]], response: &[String]) -> Result<Vec<(String, String)>> {
        chunks
            .iter()
            .map(|contexts| {
                let id = format!("q{}", self.next_id.fetch_add(1, Ordering::Relaxed));
                let line = wire::encode_line(&ScoreRequest {
                    id: id.clone(),
                    contexts: contexts.to_vec(),
                    response: response.to_vec(),
                })?;
                Ok((id, line))
            })
            .collect()
    }

    /// Sends one window of requests and returns raw reply lines in order.
    fn send_window(&self, lines: &[String]) -> Result<Vec<String>> {
        match &self.backend {
            Backend::Stdio { command, conn } => {
                let mut guard = conn.lock().unwrap_or_else(|p| p.into_inner());
                with_retries(|attempt| {
                    if attempt > 0 || guard.is_none() {
                        *guard = None;
                        let (fresh, _) = StdioConn::spawn(command)?;
                        *guard = Some(fresh);
                    }
                    let c = guard.as_mut().expect("connection present");
                    c.exchange(lines).map_err(|e| {
                        LergError::RemoteUnavailable(format!("stdio transport failed: {e}"))
                    })
                })
            }
            Backend::Http { url, client } => thread::scope(|scope| {
                let handles: Vec<_> = lines
                    .iter()
                    .map(|line| {
                        scope.spawn(move || {
                            with_retries(|_| {
                                http_call(
                                    client
                                        .post(url)
                                        .header("content-type", "application/json")
                                        .body(line.clone()),
                                )
                            })
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("http worker panicked"))
                    .collect()
            }),
        }
    }

    fn score_chunks(&self, contexts: &[Vec<String>], response: &[String]) -> Result<Vec<StepLogProbs>> {
        let chunk = self.manifest.max_batch;
        let chunks: Vec<&[Vec<String>]> = contexts.chunks(chunk).collect();
        let mut out = Vec::with_capacity(contexts.len());
        for (w, window) in chunks.chunks(self.max_in_flight).enumerate() {
            let requests = self.request_lines(window, response)?;
            let lines: Vec<String> = requests.iter().map(|(_, l)| l.clone()).collect();
            let replies = self.send_window(&lines)?;
            for (k, ((id, _), raw)) in requests.iter().zip(&replies).enumerate() {
                let first_index = (w * self.max_in_flight + k) * chunk;
                let expected = window[k].len();
                match wire::decode_reply(raw)? {
                    ScoreReply::Scores { id: got, logprobs } => {
                        if &got != id {
                            return Err(LergError::ModelProtocolError(format!(
                                "reply id `{got}` does not match request `{id}`"
                            )));
                        }
                        if logprobs.len() != expected {
                            return Err(LergError::ModelProtocolError(format!(
                                "request `{id}` had {expected} contexts, reply has {}",
                                logprobs.len()
                            )));
                        }
                        for (offset, row) in logprobs.into_iter().enumerate() {
                            let s = StepLogProbs(row);
                            s.validate(response.len(), self.manifest.normalized)
                                .map_err(|e| e.at_index(first_index + offset))?;
                            out.push(s);
                        }
                    }
                    ScoreReply::Error { id: got, error } => {
                        return Err(LergError::ModelProtocolError(format!(
                            "server error for `{got}`: {} ({})",
                            error.message, error.code
                        )));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn http_call(req: reqwest::blocking::RequestBuilder) -> Result<String> {
    let resp = req
        .send()
        .map_err(|e| LergError::RemoteUnavailable(format!("http request failed: {e}")))?;
    let status = resp.status();
    let body = resp
        .text()
        .map_err(|e| LergError::RemoteUnavailable(format!("reading http body: {e}")))?;
    if status.is_server_error() {
        return Err(LergError::RemoteUnavailable(format!("http status {status}")));
    }
    if !status.is_success() {
        return Err(LergError::ModelProtocolError(format!("http status {status}: {body}")));
    }
    Ok(body)
}

impl Generator for RemoteClient {
    fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn score(&self, context: &[String], response: &[String]) -> Result<StepLogProbs> {
        let mut out = self.score_batch(&[context.to_vec()], response)?;
        Ok(out.remove(0))
    }

    fn score_batch(&self, contexts: &[Vec<String>], response: &[String]) -> Result<Vec<StepLogProbs>> {
        check_batch_size(&self.manifest, contexts.len())?;
        self.score_chunks(contexts, response)
    }

    fn score_many(&self, contexts: &[Vec<String>], response: &[String]) -> Result<Vec<StepLogProbs>> {
        self.score_chunks(contexts, response)
    }
}
