//! Serve a trie-only engine and query it once over a real socket.
//!
//!     cargo run --example serve [-- --forever]

use nqac::engine::Engine;
use nqac::mpc::CountedTrie;
use nqac::service::{app, serve_on, shutdown_signal, ServiceConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};

mod common;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trie = CountedTrie::build(&common::toy_split().background_counts);
    let config = ServiceConfig { cors_allow: vec!["*".into()], ..ServiceConfig::default() };
    let router = app(Engine::new(Some(trie), None, None, None, config.decoder.clone())?, &config)?;

    if std::env::args().any(|a| a == "--forever") {
        let listener = tokio::net::TcpListener::bind(&config.listen).await?;
        println!("try: curl 'http://{}/suggest?prefix=cheap&k=3'", config.listen);
        serve_on(listener, router, shutdown_signal()).await?;
        return Ok(());
    }

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_on(listener, router, async {
        let _ = stopped.await;
    }));
    let mut stream = tokio::net::TcpStream::connect(addr).await?;
    stream.write_all(b"GET /suggest?prefix=cheap&k=3 HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").await?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).await?;
    println!("{}", raw.split("\r\n\r\n").nth(1).unwrap_or(&raw));
    let _ = stop.send(());
    server.await??;
    Ok(())
}
