//! Serves the deterministic stub encoder and generator over HTTP, so the
//! service can be pointed at a remote endpoint without real models.
//!
//! cargo run -p dq-service --example stub_endpoint -- 127.0.0.1:9100

use dq_service::cli::default_registry;
use dq_service::encoder_server::{self, EncoderState};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:9100".into());
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    println!("stub endpoint on http://{}", listener.local_addr()?);
    println!("  POST /encode    {{\"model_id\", \"mode\", \"texts\"}}");
    println!("  POST /generate  {{\"doc\", \"n\"}}");
    let router = encoder_server::router(EncoderState::stub(default_registry()));
    dq_service::server::serve(listener, router, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
