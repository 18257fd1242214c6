//! Reference adapter: serves the tabular family over stdin/stdout.

use std::io::{self, BufReader};
use std::time::Duration;

use anyhow::{anyhow, Result};
use clap::Parser;
use dcheck_core::adapter::mock::{serve, MockBehavior};
use dcheck_core::adapter::{Command, PROTOCOL_VERSION};

#[derive(Debug, Parser)]
#[command(name = "dcheck-mock-adapter", version, about = "Tabular family behind the adapter protocol")]
struct Args {
    /// Protocol string to announce.
    #[arg(long, default_value = PROTOCOL_VERSION)]
    protocol: String,
    /// Never answer this command (hello, train, score, free, shutdown).
    #[arg(long)]
    hang_on: Option<String>,
    /// Simulated training time in milliseconds.
    #[arg(long, default_value_t = 0)]
    train_delay_ms: u64,
    /// Heartbeat spacing during training, in milliseconds.
    #[arg(long)]
    heartbeat_ms: Option<u64>,
    /// Answer score requests in reversed batches of this size.
    #[arg(long, default_value_t = 1)]
    reorder_window: usize,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let hang_on = args
        .hang_on
        .as_deref()
        .map(|c| serde_json::from_value::<Command>(serde_json::Value::String(c.into())))
        .transpose()
        .map_err(|_| anyhow!("unknown command for --hang-on"))?;
    let behavior = MockBehavior {
        protocol: args.protocol,
        hang_on,
        train_delay: Duration::from_millis(args.train_delay_ms),
        heartbeat: args.heartbeat_ms.map(Duration::from_millis),
        reorder_window: args.reorder_window,
    };
    serve(BufReader::new(io::stdin()), io::stdout().lock(), behavior)?;
    Ok(())
}
