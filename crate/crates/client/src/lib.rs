//! Client for the trajscope service: a blocking HTTP client for scripts and
//! an async WebSocket stream for live viewers.

use futures::{SinkExt, StreamExt};
use reqwest::blocking::Client as Http;
use serde::Deserialize;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};
use trajscope_core::script::CommandSink;
use trajscope_core::session::PROTOCOL_VERSION;
use trajscope_core::wire::{ClientMessage, ServerMessage};
use trajscope_core::{Command, Event, Snapshot};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Status { status: u16, message: String },
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ClientError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct AssetInfo {
    pub name: String,
    pub bytes: usize,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Blocking HTTP client. Do not call from inside an async runtime.
pub struct Client {
    base: String,
    http: Http,
}

impl Client {
    pub fn new(base_url: &str) -> Self {
        Client { base: base_url.trim_end_matches('/').to_string(), http: Http::new() }
    }

    fn check(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(ClientError::Status { status: status.as_u16(), message })
    }

    fn get(&self, path: &str) -> Result<reqwest::blocking::Response> {
        Self::check(self.http.get(format!("{}{path}", self.base)).send()?)
    }

    pub fn health(&self) -> Result<serde_json::Value> {
        Ok(self.get("/health")?.json()?)
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        Ok(self.get("/snapshot")?.json()?)
    }

    pub fn command(&self, command: &Command) -> Result<Event> {
        let resp = self.http.post(format!("{}/command", self.base)).json(command).send()?;
        Ok(Self::check(resp)?.json()?)
    }

    pub fn mesh(&self, path_id: u32) -> Result<Vec<u8>> {
        Ok(self.get(&format!("/mesh/{path_id}"))?.bytes()?.to_vec())
    }

    pub fn meshes(&self) -> Result<Vec<u8>> {
        Ok(self.get("/meshes")?.bytes()?.to_vec())
    }

    pub fn assets(&self) -> Result<Vec<AssetInfo>> {
        Ok(self.get("/assets")?.json()?)
    }

    pub fn asset(&self, name: &str) -> Result<Vec<u8>> {
        Ok(self.get(&format!("/assets/{name}"))?.bytes()?.to_vec())
    }
}

fn remote(e: ClientError) -> trajscope_core::Error {
    trajscope_core::Error::Remote(e.to_string())
}

impl CommandSink for Client {
    fn apply(&mut self, command: Command) -> trajscope_core::Result<Event> {
        self.command(&command).map_err(remote)
    }

    fn snapshot(&mut self) -> trajscope_core::Result<Snapshot> {
        Client::snapshot(self).map_err(remote)
    }

    fn visible_meshes(&mut self) -> trajscope_core::Result<Vec<u8>> {
        self.meshes().map_err(remote)
    }
}

/// A frame received over the WebSocket.
#[derive(Debug, Clone, PartialEq)]
pub enum Incoming {
    Message(ServerMessage),
    Binary(Vec<u8>),
}

/// Live connection. The first message, a full snapshot, is consumed by
/// [`Stream::connect`].
pub struct Stream {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl Stream {
    /// `base_url` is the HTTP base, e.g. `http://127.0.0.1:7878`.
    pub async fn connect(base_url: &str) -> Result<(Stream, Snapshot)> {
        Self::connect_with_protocol(base_url, PROTOCOL_VERSION).await
    }

    pub async fn connect_with_protocol(base_url: &str, protocol: u32) -> Result<(Stream, Snapshot)> {
        let ws_base = base_url.trim_end_matches('/').replacen("http", "ws", 1);
        let (ws, _) = tokio_tungstenite::connect_async(format!("{ws_base}/ws?protocol={protocol}")).await?;
        let mut stream = Stream { ws };
        match stream.next().await? {
            Incoming::Message(ServerMessage::Snapshot { snapshot }) => Ok((stream, *snapshot)),
            other => Err(ClientError::Protocol(format!("expected snapshot first, got {other:?}"))),
        }
    }

    pub async fn send(&mut self, msg: &ClientMessage) -> Result<()> {
        self.ws.send(Message::Text(serde_json::to_string(msg)?.into())).await?;
        Ok(())
    }

    pub async fn send_raw(&mut self, text: &str) -> Result<()> {
        self.ws.send(Message::Text(text.to_string().into())).await?;
        Ok(())
    }

    pub async fn command(&mut self, id: u64, command: Command) -> Result<()> {
        self.send(&ClientMessage::Command { id: Some(id), command }).await
    }

    pub async fn next(&mut self) -> Result<Incoming> {
        loop {
            match self.ws.next().await {
                Some(Ok(Message::Text(t))) => return Ok(Incoming::Message(serde_json::from_str(t.as_str())?)),
                Some(Ok(Message::Binary(b))) => return Ok(Incoming::Binary(b.to_vec())),
                Some(Ok(Message::Close(_))) | None => return Err(ClientError::Protocol("connection closed".into())),
                Some(Ok(_)) => continue,
                Some(Err(e)) => return Err(e.into()),
            }
        }
    }

    /// Next broadcast event, skipping acks.
    pub async fn next_event(&mut self) -> Result<Event> {
        loop {
            match self.next().await? {
                Incoming::Message(ServerMessage::Event { event }) => return Ok(*event),
                Incoming::Message(ServerMessage::Ack { .. }) => continue,
                other => return Err(ClientError::Protocol(format!("expected event, got {other:?}"))),
            }
        }
    }

    pub async fn close(mut self) -> Result<()> {
        self.ws.close(None).await?;
        Ok(())
    }
}
