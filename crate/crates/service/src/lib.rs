//! HTTP front-end over `hodgeflow-core`: sessions holding a field and its
//! edit history, metrics, and smoke previews.

mod api;
pub mod error;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;

pub use error::ApiError;
pub use state::{field_hash, AppState, ServiceConfig};

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 64 << 20;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(api::health))
        .route("/providers", get(api::providers))
        .route("/metrics", post(api::post_metrics))
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}", axum::routing::delete(api::delete_session))
        .route("/sessions/{id}/field", get(api::get_field))
        .route("/sessions/{id}/history", get(api::get_history))
        .route("/sessions/{id}/sketch", get(api::get_sketch))
        .route("/sessions/{id}/edits", post(api::post_edit))
        .route("/sessions/{id}/undo", post(api::post_undo))
        .route("/sessions/{id}/simulate", post(api::post_simulate))
        .route("/sessions/{id}/frames/{k}", get(api::get_frame))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Periodically drops expired sessions.
pub fn spawn_reaper(state: Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let period = (state.config.session_ttl / 4).max(Duration::from_secs(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = state.purge_expired();
            if n > 0 {
                tracing::info!("expired {n} sessions");
            }
        }
    })
}

/// Recovers persisted sessions, then serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(config));
    let restored = state
        .recover()
        .map_err(|e| std::io::Error::other(format!("{}: {}", e.class, e.message)))?;
    if restored > 0 {
        tracing::info!("restored {restored} sessions");
    }
    spawn_reaper(state.clone());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
