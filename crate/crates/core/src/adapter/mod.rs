//! Line-delimited JSON protocol that lets an external process act as the
//! predictive family, plus a mock adapter for conformance testing.

mod client;
pub mod mock;
pub mod protocol;

pub use client::{AdapterClient, AdapterOptions};
pub use protocol::{Capabilities, Command, RemoteExample, PROTOCOL_VERSION};

use std::io::BufReader;
use std::thread;

/// Run the mock adapter on a thread and connect a client to it through
/// in-memory pipes.
pub fn spawn_in_process(behavior: mock::MockBehavior, options: AdapterOptions) -> std::io::Result<AdapterClient> {
    let (req_rx, req_tx) = std::io::pipe()?;
    let (resp_rx, resp_tx) = std::io::pipe()?;
    thread::spawn(move || {
        let _ = mock::serve(BufReader::new(req_rx), resp_tx, behavior);
    });
    Ok(AdapterClient::from_streams(resp_rx, req_tx, options))
}

#[cfg(test)]
mod tests {
    use super::mock::MockBehavior;
    use super::*;
    use crate::error::Error;
    use crate::families::{Example, PredictiveFamily};
    use crate::text::Tokens;
    use serde_json::json;
    use std::sync::Arc;
    use std::time::Duration;

    fn fast() -> AdapterOptions {
        AdapterOptions {
            request_timeout: Duration::from_millis(500),
            heartbeat_interval: Duration::from_millis(50),
            heartbeat_lapses: 3,
        }
    }

    fn client(behavior: MockBehavior) -> AdapterClient {
        spawn_in_process(behavior, fast()).unwrap()
    }

    fn ex(input: Option<&str>, output: &str) -> RemoteExample {
        RemoteExample {
            input: input.map(str::to_string),
            output: output.into(),
        }
    }

    #[test]
    fn handshake_reports_version_and_capabilities() {
        let caps = client(MockBehavior::default()).handshake().unwrap();
        assert_eq!(caps.protocol, "dcheck-adapter/1");
        assert!(caps.capabilities.contains(&"train".to_string()));
        assert!(caps.capabilities.contains(&"score".to_string()));
    }

    #[test]
    fn version_two_is_rejected() {
        let c = client(MockBehavior { protocol: "dcheck-adapter/2".into(), ..Default::default() });
        assert!(matches!(c.handshake(), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn silent_adapter_times_out() {
        let c = client(MockBehavior { hang_on: Some(Command::Hello), ..Default::default() });
        assert!(matches!(c.handshake(), Err(Error::Timeout { .. })));
    }

    #[test]
    fn remote_scores_match_local_tabular() {
        let c = client(MockBehavior::default());
        let data = [ex(Some("a"), "A"), ex(Some("a"), "A"), ex(Some("b"), "B"), ex(Some("a"), "B")];
        let id = c.train(&data, &json!({ "alpha": 0.5 })).unwrap();
        let local: Vec<Example> = [("a", "A"), ("a", "A"), ("b", "B"), ("a", "B")]
            .iter()
            .map(|(x, y)| Example::text(x, y))
            .collect();
        let pred = PredictiveFamily::tabular(0.5).train(&local, 0).unwrap();
        for (x, y) in [("a", "A"), ("b", "A"), ("c", "B")] {
            let remote = c.score(&id, Some(x), y).unwrap();
            let here = pred.score(Some(&Tokens::from_text(x)), &Tokens::from_text(y)).unwrap();
            assert!((remote - here).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_training_set_is_an_error_frame() {
        let err = client(MockBehavior::default()).train(&[], &json!({})).unwrap_err();
        match err {
            Error::Remote { code, .. } => assert_eq!(code, "empty_training_set"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn heartbeats_keep_long_training_alive() {
        let c = client(MockBehavior {
            train_delay: Duration::from_millis(400),
            heartbeat: Some(Duration::from_millis(40)),
            ..Default::default()
        });
        assert!(c.train(&[ex(None, "A")], &json!({})).is_ok());
    }

    #[test]
    fn heartbeat_lapse_times_out() {
        let c = client(MockBehavior {
            train_delay: Duration::from_millis(600),
            heartbeat: None,
            ..Default::default()
        });
        assert!(matches!(c.train(&[ex(None, "A")], &json!({})), Err(Error::Timeout { .. })));
    }

    #[test]
    fn lifecycle_and_null_input() {
        let c = client(MockBehavior::default());
        let id = c.train(&[ex(None, "A"), ex(None, "B")], &json!({})).unwrap();
        let bits = c.score(&id, None, "A").unwrap();
        assert!(bits.is_finite() && (bits - 1.0).abs() < 1e-12);
        assert_eq!(c.score(&id, Some("anything"), "A").unwrap(), bits);
        c.free(&id).unwrap();
        assert!(matches!(c.score(&id, None, "A"), Err(Error::UnknownModel(_))));
        assert!(matches!(c.free(&id), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn pipelined_batch_is_correlated_out_of_order() {
        let c = client(MockBehavior { reorder_window: 7, ..Default::default() });
        let data: Vec<_> = (0..8).map(|i| ex(Some(&format!("x{i}")), &format!("y{}", i % 4))).collect();
        let id = c.train(&data, &json!({})).unwrap();
        let items: Vec<(Option<String>, String)> =
            (0..1000).map(|i| (Some(format!("x{}", i % 8)), format!("y{}", i % 4))).collect();
        let batch = c.score_batch(&id, &items).unwrap();
        assert_eq!(batch.len(), 1000);
        for (i, (x, y)) in items.iter().enumerate().take(40) {
            assert_eq!(batch[i], c.score(&id, x.as_deref(), y).unwrap());
        }
    }

    #[test]
    fn external_family_behaves_like_a_predictor() {
        let c = Arc::new(client(MockBehavior::default()));
        let fam = PredictiveFamily::with_adapter(c, json!({ "alpha": 0.5 }));
        let pred = fam.train(&[Example::null("A"), Example::null("B")], 0).unwrap();
        let out = Tokens::from_text("A");
        assert!((pred.score(None, &out).unwrap() - 1.0).abs() < 1e-12);
        let many = pred.score_many(&[(None, &out), (Some(&Tokens::from_text("q")), &out)]).unwrap();
        assert_eq!(many, vec![1.0, 1.0]);
        assert!(!fam.is_cacheable());
    }

    #[test]
    fn shutdown_is_acknowledged() {
        let c = client(MockBehavior::default());
        c.shutdown().unwrap();
        assert!(c.handshake().is_err());
    }
}
