//! WebSocket transport for [`SessionHost`]. Each connection owns its own
//! sessions; a text frame may carry several newline-separated requests, and
//! each reply goes out as its own line-terminated frame.

use std::net::SocketAddr;

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

use crate::session::SessionHost;

/// Accept connections forever.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        tokio::spawn(async move {
            if let Err(e) = connection(stream, peer).await {
                log::warn!("{peer}: {e}");
            }
        });
    }
}

async fn connection(
    stream: TcpStream,
    peer: SocketAddr,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let mut ws = tokio_tungstenite::accept_async(stream).await?;
    log::info!("{peer} connected");
    let mut host = SessionHost::new();
    while let Some(msg) = ws.next().await {
        match msg? {
            Message::Text(text) => {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    let mut reply = host.handle_line(line);
                    reply.push('\n');
                    ws.send(Message::Text(reply)).await?;
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    log::info!("{peer} disconnected with {} open session(s)", host.len());
    Ok(())
}
