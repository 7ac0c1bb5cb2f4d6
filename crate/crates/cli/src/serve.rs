use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use muit_core::instance::SystemClock;
use muit_engine::{serve, Engine, EngineConfig};
use tokio::net::TcpListener;

use crate::Failure;

pub struct Overrides {
    pub config: Option<PathBuf>,
    pub listen: Option<String>,
    pub base_url: Option<String>,
    pub store: Option<PathBuf>,
    pub idle_threshold: Option<f64>,
}

fn load(o: Overrides) -> Result<EngineConfig, Failure> {
    let mut cfg = match &o.config {
        Some(path) => EngineConfig::load(path).map_err(|e| match e {
            muit_engine::ConfigError::Io { .. } => Failure::Env(e.to_string()),
            other => Failure::Domain(other.to_string()),
        })?,
        None => EngineConfig::default(),
    };
    if let Some(l) = o.listen {
        cfg.listen = l;
    }
    if o.base_url.is_some() {
        cfg.base_url = o.base_url;
    }
    if o.store.is_some() {
        cfg.store_path = o.store;
    }
    if let Some(s) = o.idle_threshold {
        cfg.idle_threshold_s = s;
    }
    cfg.validate().map_err(|e| Failure::Domain(e.to_string()))?;
    Ok(cfg)
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        let mut term = match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => return std::future::pending().await,
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

pub fn run(o: Overrides) -> Result<(), Failure> {
    let cfg = load(o)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Env(e.to_string()))?;
    rt.block_on(async move {
        let listen = cfg.listen.clone();
        let engine = Engine::new(cfg, Arc::new(SystemClock)).map_err(|e| match e {
            muit_engine::EngineError::Io { .. } => Failure::Env(e.to_string()),
            other => Failure::Domain(other.to_string()),
        })?;
        let listener = TcpListener::bind(&listen).await.map_err(|e| Failure::Env(format!("cannot listen on {listen}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::Env(e.to_string()))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        for s in engine.services() {
            tracing::info!(service = %s, "deployed");
        }
        serve(Arc::new(engine), listener, shutdown_signal()).await.map_err(|e| Failure::Env(e.to_string()))?;
        tracing::info!("stopped");
        Ok(())
    })
}
