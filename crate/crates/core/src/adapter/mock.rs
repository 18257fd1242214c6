//! Reference adapter serving the tabular family over the protocol. Used for
//! conformance testing; its scores match the in-process tabular family.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::protocol::{codes, Command, Request, Response, ScorePayload, TrainPayload, PROTOCOL_VERSION};
use crate::families::{Example, Predictor, PredictiveFamily};
use crate::text::Tokens;

/// Knobs for exercising the engine's failure handling.
#[derive(Debug, Clone, PartialEq)]
pub struct MockBehavior {
    /// Protocol string announced in the hello response.
    pub protocol: String,
    /// Never answer this command.
    pub hang_on: Option<Command>,
    /// Simulated training time.
    pub train_delay: Duration,
    /// Heartbeat spacing while training; `None` sends no heartbeats.
    pub heartbeat: Option<Duration>,
    /// Hold score responses and release them in reverse, this many at a time.
    pub reorder_window: usize,
}

impl Default for MockBehavior {
    fn default() -> Self {
        MockBehavior {
            protocol: PROTOCOL_VERSION.into(),
            hang_on: None,
            train_delay: Duration::ZERO,
            heartbeat: None,
            reorder_window: 1,
        }
    }
}

struct MockAdapter {
    behavior: MockBehavior,
    models: BTreeMap<String, Predictor>,
    trained: u64,
}

fn to_tokens(text: Option<&str>) -> Option<Tokens> {
    text.map(Tokens::from_text)
}

impl MockAdapter {
    fn hello(&self, id: &str) -> Response {
        Response::result(
            id,
            json!({ "protocol": self.behavior.protocol, "capabilities": ["train", "score", "free"] }),
        )
    }

    fn train(&mut self, id: &str, payload: Value, out: &mut impl Write) -> io::Result<Response> {
        let payload: TrainPayload = match serde_json::from_value(payload) {
            Ok(p) => p,
            Err(e) => return Ok(Response::error(id, codes::BAD_REQUEST, e.to_string())),
        };
        if payload.examples.is_empty() {
            return Ok(Response::error(id, codes::EMPTY_TRAINING_SET, "no training examples"));
        }
        let alpha = match payload.config.get("alpha") {
            None => 0.5,
            Some(v) => match v.as_f64() {
                Some(a) if a >= 0.0 => a,
                _ => return Ok(Response::error(id, codes::BAD_CONFIG, "alpha must be a number >= 0")),
            },
        };
        let start = Instant::now();
        while start.elapsed() < self.behavior.train_delay {
            let left = self.behavior.train_delay - start.elapsed();
            match self.behavior.heartbeat {
                Some(every) => {
                    thread::sleep(every.min(left));
                    let hb = Response::progress(id, json!({ "elapsed_ms": start.elapsed().as_millis() as u64 }));
                    write_frame(out, &hb)?;
                }
                None => thread::sleep(left),
            }
        }
        let examples: Vec<Example> = payload
            .examples
            .iter()
            .map(|e| Example::new(to_tokens(e.input.as_deref()), Tokens::from_text(&e.output)))
            .collect();
        match PredictiveFamily::tabular(alpha).train(&examples, 0) {
            Ok(pred) => {
                self.trained += 1;
                let model_id = format!("m{}", self.trained);
                self.models.insert(model_id.clone(), pred);
                Ok(Response::result(
                    id,
                    json!({ "model_id": model_id, "config": { "family": "tabular", "alpha": alpha } }),
                ))
            }
            Err(e) => Ok(Response::error(id, codes::BAD_REQUEST, e.to_string())),
        }
    }

    fn score(&self, id: &str, payload: Value) -> Response {
        let payload: ScorePayload = match serde_json::from_value(payload) {
            Ok(p) => p,
            Err(e) => return Response::error(id, codes::BAD_REQUEST, e.to_string()),
        };
        let Some(pred) = self.models.get(&payload.model_id) else {
            return Response::error(id, codes::UNKNOWN_MODEL, format!("no model `{}`", payload.model_id));
        };
        let input = to_tokens(payload.input.as_deref());
        match pred.score(input.as_ref(), &Tokens::from_text(&payload.output)) {
            Ok(bits) => Response::result(id, json!({ "bits_per_token": bits })),
            Err(e) => Response::error(id, codes::BAD_REQUEST, e.to_string()),
        }
    }

    fn free(&mut self, id: &str, payload: &Value) -> Response {
        let model_id = payload.get("model_id").and_then(Value::as_str).unwrap_or_default();
        match self.models.remove(model_id) {
            Some(_) => Response::result(id, json!({})),
            None => Response::error(id, codes::UNKNOWN_MODEL, format!("no model `{model_id}`")),
        }
    }
}

fn write_frame(out: &mut impl Write, frame: &Response) -> io::Result<()> {
    let line = serde_json::to_string(frame).expect("frames serialize");
    writeln!(out, "{line}")?;
    out.flush()
}

/// Run the protocol loop until `shutdown` or end of input.
pub fn serve<R, W>(input: R, mut output: W, behavior: MockBehavior) -> io::Result<()>
where
    R: BufRead + Send + 'static,
    W: Write,
{
    let (tx, rx) = mpsc::channel::<String>();
    thread::spawn(move || {
        for line in input.lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    let mut adapter = MockAdapter {
        behavior,
        models: BTreeMap::new(),
        trained: 0,
    };
    let window = adapter.behavior.reorder_window.max(1);
    let mut held: Vec<Response> = Vec::new();
    let flush = |held: &mut Vec<Response>, out: &mut W| -> io::Result<()> {
        while let Some(frame) = held.pop() {
            write_frame(out, &frame)?;
        }
        Ok(())
    };
    loop {
        let line = match rx.recv_timeout(Duration::from_millis(20)) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                flush(&mut held, &mut output)?;
                continue;
            }
            Err(RecvTimeoutError::Disconnected) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let id = serde_json::from_str::<Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_string))
                    .unwrap_or_default();
                write_frame(&mut output, &Response::error(&id, codes::BAD_REQUEST, e.to_string()))?;
                continue;
            }
        };
        if adapter.behavior.hang_on == Some(req.cmd) {
            continue;
        }
        if req.cmd != Command::Score {
            flush(&mut held, &mut output)?;
        }
        let frame = match req.cmd {
            Command::Hello => adapter.hello(&req.id),
            Command::Train => adapter.train(&req.id, req.payload, &mut output)?,
            Command::Score => {
                held.push(adapter.score(&req.id, req.payload));
                if held.len() >= window {
                    flush(&mut held, &mut output)?;
                }
                continue;
            }
            Command::Free => adapter.free(&req.id, &req.payload),
            Command::Shutdown => {
                write_frame(&mut output, &Response::result(&req.id, json!({})))?;
                return Ok(());
            }
        };
        write_frame(&mut output, &frame)?;
    }
    flush(&mut held, &mut output)
}
