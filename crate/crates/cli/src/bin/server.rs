//! Runs the procsight HTTP API.
//!
//! Environment: `PROCSIGHT_BIND`, `PROCSIGHT_DATA_DIR`, `PROCSIGHT_CORS_ORIGIN`
//! and, for a remote text generator, `PROCSIGHT_LLM_URL`, `PROCSIGHT_LLM_KEY`,
//! `PROCSIGHT_LLM_MODELS`.

use std::process::ExitCode;
use std::sync::Arc;

use procsight_core::llm::ProviderRegistry;
use procsight_core::store::TraceStore;
use procsight_server::{bind_addr_from_env, cors_layer, cors_origin_from_env, router, serve, AppState};
use tracing_subscriber::EnvFilter;

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let addr = match bind_addr_from_env() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let store = match TraceStore::open_from_env() {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: cannot open store: {e}");
            return ExitCode::from(1);
        }
    };
    let providers = match ProviderRegistry::from_env() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    tracing::info!(
        data_dir = %store.dir().display(),
        records = store.record_count(),
        providers = providers.list_providers().len(),
        "store opened"
    );
    let app = router(AppState::new(store, providers)).layer(cors_layer(&cors_origin_from_env()));
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {addr}: {e}");
            return ExitCode::from(1);
        }
    };
    let local = listener.local_addr().map(|a| a.to_string()).unwrap_or_else(|_| addr.to_string());
    println!("listening on http://{local}");
    if let Err(e) = serve(listener, app, shutdown_signal()).await {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
