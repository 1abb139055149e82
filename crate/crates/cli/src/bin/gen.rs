//! Writes a synthetic, seeded process trace to a file and/or posts it to a
//! running server.
//!
//! Exit codes: 0 success, 1 bad parameters or local I/O failure, 2 the
//! server could not be reached or refused a batch.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use futures::stream::{self, StreamExt};
use procsight_core::generator::{generate, write_records, GeneratorParams};
use procsight_core::model::{MethodCallRecord, Timestamp};
use procsight_server::IngestResponse;

const BATCH_SIZE: usize = 500;
const IN_FLIGHT: usize = 4;

#[derive(Debug, Parser)]
#[command(name = "procsight-gen", version, about = "Generate a synthetic multi-component process trace")]
struct Args {
    #[arg(long, default_value_t = 3)]
    components: usize,
    #[arg(long, default_value_t = 100)]
    calls: usize,
    #[arg(long, default_value_t = 8)]
    max_fanout: usize,
    /// Maximum call-tree levels, the root counting as level 1.
    #[arg(long, default_value_t = 16)]
    max_depth: usize,
    #[arg(long, default_value_t = 0.0)]
    fault_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `proc-s{seed}-n{components}-m{calls}`.
    #[arg(long)]
    process_id: Option<String>,
    /// RFC 3339 start of the root call.
    #[arg(long)]
    start: Option<Timestamp>,
    /// Output file for the records, one JSON object per line; `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base URL of a procsight server, e.g. http://127.0.0.1:8080
    #[arg(long)]
    post: Option<String>,
}

#[derive(Debug, Default)]
struct PostSummary {
    accepted: usize,
    rejected: usize,
}

async fn post_all(base: &str, records: &[MethodCallRecord]) -> Result<PostSummary, String> {
    let client = reqwest::Client::new();
    let url = format!("{}/api/records", base.trim_end_matches('/'));
    let bodies: Vec<String> = records
        .chunks(BATCH_SIZE)
        .map(|chunk| chunk.iter().map(|r| r.to_wire_line() + "\n").collect())
        .collect();
    let mut results = stream::iter(bodies)
        .map(|body| {
            let client = &client;
            let url = &url;
            async move {
                let resp = client
                    .post(url)
                    .header("content-type", "application/x-ndjson")
                    .body(body)
                    .send()
                    .await
                    .map_err(|e| format!("cannot reach {url}: {e}"))?;
                let status = resp.status();
                if status != reqwest::StatusCode::OK && status != reqwest::StatusCode::MULTI_STATUS {
                    let text = resp.text().await.unwrap_or_default();
                    return Err(format!("{url} answered {status}: {text}"));
                }
                resp.json::<IngestResponse>()
                    .await
                    .map_err(|e| format!("unexpected response from {url}: {e}"))
            }
        })
        .buffer_unordered(IN_FLIGHT);
    let mut summary = PostSummary::default();
    while let Some(result) = results.next().await {
        let report = result?;
        summary.accepted += report.accepted;
        summary.rejected += report.rejected.len();
    }
    Ok(summary)
}

fn write_out(path: &PathBuf, records: &[MethodCallRecord]) -> std::io::Result<()> {
    if path.as_os_str() == "-" {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        write_records(records, &mut lock)?;
        return lock.flush();
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_records(records, &mut w)?;
    w.flush()
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let mut params = GeneratorParams {
        components: args.components,
        calls: args.calls,
        max_fanout: args.max_fanout,
        max_depth: args.max_depth,
        fault_rate: args.fault_rate,
        seed: args.seed,
        process_id: args.process_id,
        ..GeneratorParams::default()
    };
    if let Some(start) = args.start {
        params.start = start;
    }
    let records = match generate(&params) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let out = if args.out.is_none() && args.post.is_none() { Some(PathBuf::from("-")) } else { args.out };
    // Keep stdout clean when the records themselves go there.
    let records_on_stdout = out.as_ref().is_some_and(|p| p.as_os_str() == "-");
    let report = |line: String| {
        if records_on_stdout {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    };

    if let Some(path) = &out {
        if let Err(e) = write_out(path, &records) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
        report(format!("process {}: wrote {} records to {}", params.effective_process_id(), records.len(), path.display()));
    }
    if let Some(base) = &args.post {
        match post_all(base, &records).await {
            Ok(s) => report(format!(
                "process {}: posted {} records, {} accepted, {} rejected",
                params.effective_process_id(),
                records.len(),
                s.accepted,
                s.rejected
            )),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
    }
    ExitCode::SUCCESS
}
