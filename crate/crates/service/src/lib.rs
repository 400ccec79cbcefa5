//! The running platform: sessions, feedback capture, the durable event log
//! and the admin endpoints, served over HTTP.

pub mod error;
pub mod http;
pub mod platform;
pub mod records;
pub mod state;
pub mod store;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use error::ServiceError;
pub use platform::Platform;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// Binds the configured address. Separate from [`serve`] so a busy port is
/// reported before anything else starts.
pub async fn bind(platform: &Platform) -> Result<tokio::net::TcpListener, ServeError> {
    let server = &platform.config().server;
    let addr = format!("{}:{}", server.host, server.port);
    tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })
}

/// Serves until `shutdown` resolves, refreshing sparkles in the background,
/// then writes a final snapshot.
pub async fn serve(
    platform: Arc<Platform>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let local: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(addr = ?local, "listening");

    let refresh_every = Duration::from_secs(platform.config().sparkles.refresh_secs.max(1));
    let refresher = {
        let platform = platform.clone();
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(refresh_every);
            ticker.tick().await;
            loop {
                ticker.tick().await;
                let p = platform.clone();
                if tokio::task::spawn_blocking(move || p.refresh_sparkles()).await.is_err() {
                    tracing::warn!("sparkle refresh panicked");
                }
            }
        })
    };

    let result = axum::serve(listener, http::router(platform.clone()))
        .with_graceful_shutdown(shutdown)
        .await;
    refresher.abort();
    let p = platform.clone();
    tokio::task::spawn_blocking(move || p.snapshot())
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    tracing::info!("stopped; log flushed");
    result.map_err(ServeError::Io)
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
