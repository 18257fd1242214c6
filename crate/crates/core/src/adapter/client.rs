//! Engine side of the adapter protocol.
//!
//! A single writer sends requests; a reader thread demultiplexes responses
//! by correlation id, so requests may be pipelined and answered in any order.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command as Process, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::protocol::{codes, Capabilities, Command, RemoteExample, Request, Response, PROTOCOL_VERSION};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdapterOptions {
    /// Deadline for hello, score, free and shutdown.
    pub request_timeout: Duration,
    /// Expected spacing of heartbeat frames during training.
    pub heartbeat_interval: Duration,
    /// Training times out after this many intervals without any frame.
    pub heartbeat_lapses: u32,
}

impl Default for AdapterOptions {
    fn default() -> Self {
        AdapterOptions {
            request_timeout: Duration::from_secs(30),
            heartbeat_interval: Duration::from_secs(10),
            heartbeat_lapses: 3,
        }
    }
}

type Pending = Arc<Mutex<HashMap<String, Sender<Response>>>>;

pub struct AdapterClient {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    next_id: AtomicU64,
    child: Mutex<Option<Child>>,
    options: AdapterOptions,
}

impl std::fmt::Debug for AdapterClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdapterClient").field("options", &self.options).finish()
    }
}

enum Wait {
    Deadline(Duration),
    Heartbeat(Duration),
}

impl AdapterClient {
    /// Launch `cmd` through the shell and speak the protocol on its stdio.
    pub fn spawn(cmd: &str, options: AdapterOptions) -> Result<Self> {
        let mut child = Process::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(cmd, e))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let client = Self::from_streams(stdout, stdin, options);
        *client.child.lock().unwrap() = Some(child);
        Ok(client)
    }

    /// Speak the protocol over arbitrary streams (in-process adapters, tests).
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        options: AdapterOptions,
    ) -> Self {
        let pending: Pending = Arc::default();
        let demux = pending.clone();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                let Ok(frame) = serde_json::from_str::<Response>(&line) else {
                    continue;
                };
                let mut map = demux.lock().unwrap();
                if frame.is_heartbeat() {
                    if let Some(tx) = map.get(&frame.id) {
                        let _ = tx.send(frame);
                    }
                } else if let Some(tx) = map.remove(&frame.id) {
                    let _ = tx.send(frame);
                }
            }
            // Dropping the senders wakes every waiter with a disconnect.
            demux.lock().unwrap().clear();
        });
        AdapterClient {
            writer: Mutex::new(Box::new(writer)),
            pending,
            next_id: AtomicU64::new(1),
            child: Mutex::new(None),
            options,
        }
    }

    pub fn options(&self) -> AdapterOptions {
        self.options
    }

    fn send(&self, cmd: Command, payload: Value) -> Result<(String, Receiver<Response>)> {
        let id = format!("r{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let (tx, rx) = mpsc::channel();
        self.pending.lock().unwrap().insert(id.clone(), tx);
        let line = serde_json::to_string(&Request {
            id: id.clone(),
            cmd,
            payload,
        })
        .expect("requests serialize");
        let mut w = self.writer.lock().unwrap();
        let sent = writeln!(w, "{line}").and_then(|_| w.flush());
        if let Err(e) = sent {
            self.pending.lock().unwrap().remove(&id);
            return Err(Error::Protocol(format!("cannot write to adapter: {e}")));
        }
        Ok((id, rx))
    }

    fn wait(&self, id: &str, cmd: Command, rx: &Receiver<Response>, wait: Wait) -> Result<Value> {
        let start = Instant::now();
        loop {
            let budget = match wait {
                Wait::Deadline(total) => match total.checked_sub(start.elapsed()) {
                    Some(left) => left,
                    None => return Err(self.timed_out(id, cmd)),
                },
                Wait::Heartbeat(lapse) => lapse,
            };
            match rx.recv_timeout(budget) {
                Ok(frame) if frame.is_heartbeat() => continue,
                Ok(frame) => return Self::unpack(frame),
                Err(RecvTimeoutError::Timeout) => return Err(self.timed_out(id, cmd)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Protocol(format!("adapter closed before answering `{}`", cmd.as_str())))
                }
            }
        }
    }

    fn timed_out(&self, id: &str, cmd: Command) -> Error {
        self.pending.lock().unwrap().remove(id);
        Error::Timeout {
            cmd: cmd.as_str().into(),
        }
    }

    fn unpack(frame: Response) -> Result<Value> {
        if let Some(err) = frame.error {
            return Err(Error::Remote {
                code: err.code,
                message: err.message,
            });
        }
        frame
            .result
            .ok_or_else(|| Error::Protocol(format!("response `{}` has neither result nor error", frame.id)))
    }

    fn call(&self, cmd: Command, payload: Value, wait: Wait) -> Result<Value> {
        let (id, rx) = self.send(cmd, payload)?;
        self.wait(&id, cmd, &rx, wait)
    }

    fn deadline(&self) -> Wait {
        Wait::Deadline(self.options.request_timeout)
    }

    pub fn handshake(&self) -> Result<Capabilities> {
        let result = self.call(Command::Hello, json!({}), self.deadline())?;
        let caps: Capabilities = serde_json::from_value(result)
            .map_err(|e| Error::Protocol(format!("bad hello response: {e}")))?;
        if caps.protocol != PROTOCOL_VERSION {
            return Err(Error::VersionMismatch {
                expected: PROTOCOL_VERSION.into(),
                got: caps.protocol,
            });
        }
        for needed in ["train", "score"] {
            if !caps.capabilities.iter().any(|c| c == needed) {
                return Err(Error::Protocol(format!("adapter lacks capability `{needed}`")));
            }
        }
        Ok(caps)
    }

    /// Train a remote model. There is no overall deadline; the adapter must
    /// keep sending heartbeats.
    pub fn train(&self, examples: &[RemoteExample], config: &Value) -> Result<String> {
        let payload = json!({ "examples": examples, "config": config });
        let lapse = self.options.heartbeat_interval * self.options.heartbeat_lapses;
        let result = self.call(Command::Train, payload, Wait::Heartbeat(lapse))?;
        result
            .get("model_id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Protocol("train response lacks model_id".into()))
    }

    fn check_bits(value: Value) -> Result<f64> {
        let bits = value
            .get("bits_per_token")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Protocol("score response lacks bits_per_token".into()))?;
        if !bits.is_finite() {
            return Err(Error::Protocol(format!("non-finite bits_per_token {bits}")));
        }
        Ok(bits)
    }

    fn map_unknown(model_id: &str, err: Error) -> Error {
        match err {
            Error::Remote { code, .. } if code == codes::UNKNOWN_MODEL => Error::UnknownModel(model_id.into()),
            other => other,
        }
    }

    pub fn score(&self, model_id: &str, input: Option<&str>, output: &str) -> Result<f64> {
        let payload = json!({ "model_id": model_id, "input": input, "output": output });
        self.call(Command::Score, payload, self.deadline())
            .and_then(Self::check_bits)
            .map_err(|e| Self::map_unknown(model_id, e))
    }

    /// Pipeline all score requests, then collect the responses, which may
    /// arrive in any order.
    pub fn score_batch(&self, model_id: &str, items: &[(Option<String>, String)]) -> Result<Vec<f64>> {
        let mut inflight = Vec::with_capacity(items.len());
        for (input, output) in items {
            let payload = json!({ "model_id": model_id, "input": input, "output": output });
            inflight.push(self.send(Command::Score, payload)?);
        }
        let deadline = Instant::now() + self.options.request_timeout;
        let mut out = Vec::with_capacity(items.len());
        for (id, rx) in &inflight {
            let left = deadline.saturating_duration_since(Instant::now());
            let bits = self
                .wait(id, Command::Score, rx, Wait::Deadline(left))
                .and_then(Self::check_bits)
                .map_err(|e| Self::map_unknown(model_id, e));
            match bits {
                Ok(b) => out.push(b),
                Err(e) => {
                    let mut map = self.pending.lock().unwrap();
                    for (id, _) in &inflight {
                        map.remove(id);
                    }
                    return Err(e);
                }
            }
        }
        Ok(out)
    }

    pub fn free(&self, model_id: &str) -> Result<()> {
        self.call(Command::Free, json!({ "model_id": model_id }), self.deadline())
            .map(|_| ())
            .map_err(|e| Self::map_unknown(model_id, e))
    }

    pub fn shutdown(&self) -> Result<()> {
        self.call(Command::Shutdown, json!({}), self.deadline())?;
        if let Some(mut child) = self.child.lock().unwrap().take() {
            let _ = child.wait();
        }
        Ok(())
    }
}

impl Drop for AdapterClient {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.lock().unwrap().take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
