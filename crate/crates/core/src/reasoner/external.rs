//! Newline-delimited JSON bridge to a reasoner running as a child process.
//!
//! Each request is one line `{"id", "variant", "payload"}`; the process
//! answers with one line `{"id", "result"}` or `{"id", "error"}`.
//! Canonical renders are written as PGM files and passed by path.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use tempfile::TempDir;

use super::{RasterPaths, Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse, ViewPayload};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

pub struct ExternalReasoner {
    command: String,
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    raster_dir: TempDir,
    next_id: u64,
    timeout: Duration,
}

impl ExternalReasoner {
    /// Start `command` (program and whitespace-separated arguments).
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, ReasonerError> {
        let mut parts = command.split_whitespace();
        let program = parts.next().ok_or_else(|| ReasonerError::Protocol("empty reasoner command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ReasonerError::Protocol(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let end = line.is_err();
                if tx.send(line).is_err() || end {
                    break;
                }
            }
        });
        let raster_dir = TempDir::new().map_err(|e| ReasonerError::Protocol(format!("cannot create raster directory: {e}")))?;
        Ok(Self { command: command.to_string(), child: Some(child), stdin, lines: rx, raster_dir, next_id: 0, timeout })
    }

    fn shutdown(&mut self) {
        self.stdin = None;
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }

    fn write_rasters(&self, id: u64, payload: &ViewPayload) -> Result<Option<RasterPaths>, ReasonerError> {
        let Some(views) = &payload.views else { return Ok(None) };
        let dir = self.raster_dir.path();
        let mut paths = Vec::with_capacity(6);
        for (name, raster) in views.named() {
            for (suffix, bytes) in [("", raster.to_pgm()), ("_mask", raster.mask_pgm())] {
                let path = dir.join(format!("{id}_{name}{suffix}.pgm"));
                std::fs::write(&path, bytes).map_err(|e| ReasonerError::Protocol(format!("cannot write raster: {e}")))?;
                paths.push(path);
            }
        }
        let mut it = paths.into_iter();
        let mut next = || it.next().expect("six rasters");
        let (front, front_mask, left, left_mask, right, right_mask) = (next(), next(), next(), next(), next(), next());
        Ok(Some(RasterPaths { front, left, right, front_mask, left_mask, right_mask }))
    }

    fn encode(&self, id: u64, request: &ReasonerRequest) -> Result<String, ReasonerError> {
        let request = match request {
            ReasonerRequest::SelectDirection(p) => {
                ReasonerRequest::SelectDirection(ViewPayload { rasters: self.write_rasters(id, p)?, ..p.clone() })
            }
            ReasonerRequest::SelectPose(p) => {
                ReasonerRequest::SelectPose(ViewPayload { rasters: self.write_rasters(id, p)?, ..p.clone() })
            }
            other => other.clone(),
        };
        let mut v = serde_json::to_value(&request).map_err(|e| ReasonerError::Schema(e.to_string()))?;
        v["id"] = json!(id);
        Ok(v.to_string())
    }
}

/// Parse one response line for request `id`.
pub fn decode_response(id: u64, line: &str) -> Result<ReasonerResponse, ReasonerError> {
    let v: Value = serde_json::from_str(line).map_err(|e| ReasonerError::Protocol(format!("malformed response line: {e}")))?;
    if v.get("id").and_then(Value::as_u64) != Some(id) {
        return Err(ReasonerError::Protocol(format!("response does not carry id {id}")));
    }
    if let Some(err) = v.get("error") {
        return Err(ReasonerError::Protocol(format!("reasoner reported an error: {err}")));
    }
    let body = v.get("result").ok_or_else(|| ReasonerError::Schema("response line lacks `result`".into()))?;
    serde_json::from_value(body.clone()).map_err(|e| ReasonerError::Schema(format!("bad response body: {e}")))
}

impl Reasoner for ExternalReasoner {
    fn name(&self) -> String {
        format!("external:{}", self.command)
    }

    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        let id = self.next_id;
        self.next_id += 1;
        let line = self.encode(id, request)?;
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(ReasonerError::Protocol("reasoner process is not running".into()));
        };
        if let Err(e) = writeln!(stdin, "{line}").and_then(|_| stdin.flush()) {
            self.shutdown();
            return Err(ReasonerError::Protocol(format!("cannot write request: {e}")));
        }
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => decode_response(id, &reply),
            Ok(Err(e)) => {
                self.shutdown();
                Err(ReasonerError::Protocol(format!("cannot read response: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.shutdown();
                Err(ReasonerError::Protocol(format!("no response within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.shutdown();
                Err(ReasonerError::Protocol("reasoner process closed its output".into()))
            }
        }
    }
}

impl Drop for ExternalReasoner {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Response line for request `id`, as an external reasoner writes it.
pub fn encode_response(id: u64, response: &ReasonerResponse) -> String {
    json!({ "id": id, "result": response }).to_string()
}

/// Split a request line into its id and request.
pub fn decode_request(line: &str) -> Result<(u64, ReasonerRequest), ReasonerError> {
    let mut v: Value = serde_json::from_str(line).map_err(|e| ReasonerError::Protocol(format!("malformed request line: {e}")))?;
    let id = v
        .as_object_mut()
        .and_then(|o| o.remove("id"))
        .and_then(|i| i.as_u64())
        .ok_or_else(|| ReasonerError::Schema("request line lacks a numeric `id`".into()))?;
    let request = serde_json::from_value(v).map_err(|e| ReasonerError::Schema(format!("bad request body: {e}")))?;
    Ok((id, request))
}
