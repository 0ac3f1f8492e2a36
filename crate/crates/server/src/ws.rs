use axum::extract::ws::{Message, WebSocket};
use futures::{SinkExt, StreamExt};
use tokio::sync::{broadcast, mpsc};
use trajscope_core::wire::{ClientMessage, ServerMessage};

use crate::actor::SessionHandle;

fn text(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("message serialises").into())
}

pub(crate) async fn connection(socket: WebSocket, session: SessionHandle) {
    let (mut sink, mut stream) = socket.split();
    // Subscribe before taking the snapshot so no delta falls in between.
    let mut events = session.subscribe();
    let snapshot = session.snapshot().await;
    let base = snapshot.revision;
    let (out_tx, mut out_rx) = mpsc::channel::<Message>(64);

    let writer = tokio::spawn(async move {
        if sink.send(text(&ServerMessage::Snapshot { snapshot: Box::new(snapshot) })).await.is_err() {
            return;
        }
        loop {
            tokio::select! {
                ev = events.recv() => match ev {
                    Ok(ev) if ev.revision <= base => {}
                    Ok(ev) => {
                        if sink.send(text(&ServerMessage::Event { event: Box::new((*ev).clone()) })).await.is_err() {
                            return;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::warn!(skipped = n, "client lagged behind event stream");
                        let msg = ServerMessage::Error { id: None, message: format!("lagged by {n} events; reconnect for a fresh snapshot") };
                        let _ = sink.send(text(&msg)).await;
                        let _ = sink.send(Message::Close(None)).await;
                        return;
                    }
                    Err(broadcast::error::RecvError::Closed) => return,
                },
                out = out_rx.recv() => match out {
                    Some(m) => {
                        if sink.send(m).await.is_err() {
                            return;
                        }
                    }
                    None => {
                        let _ = sink.send(Message::Close(None)).await;
                        return;
                    }
                },
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        let reply = match msg {
            Message::Text(t) => handle(&session, t.as_str()).await,
            Message::Binary(_) => vec![text(&ServerMessage::Error { id: None, message: "binary frames are not accepted".into() })],
            Message::Close(_) => break,
            _ => continue,
        };
        for m in reply {
            if out_tx.send(m).await.is_err() {
                break;
            }
        }
    }
    drop(out_tx);
    let _ = writer.await;
}

async fn handle(session: &SessionHandle, raw: &str) -> Vec<Message> {
    let msg: ClientMessage = match serde_json::from_str(raw) {
        Ok(m) => m,
        Err(e) => return vec![text(&ServerMessage::Error { id: None, message: format!("malformed message: {e}") })],
    };
    match msg {
        ClientMessage::Command { id, command } => match session.apply(command).await {
            Ok(ev) => vec![text(&ServerMessage::Ack { id, revision: ev.revision, noop: ev.noop })],
            Err(message) => vec![text(&ServerMessage::Error { id, message })],
        },
        ClientMessage::MeshRequest { path_id: Some(id) } => match session.mesh(id).await {
            Ok(bytes) => vec![text(&ServerMessage::Mesh { path_id: id, bytes: bytes.len() }), Message::Binary(bytes.into())],
            Err(message) => vec![text(&ServerMessage::Error { id: None, message })],
        },
        ClientMessage::MeshRequest { path_id: None } => match session.meshes().await {
            Ok(bytes) => {
                // bundle header: magic, version, count
                let count = u32::from_le_bytes(bytes[8..12].try_into().expect("bundle header")) as usize;
                vec![text(&ServerMessage::Meshes { count, bytes: bytes.len() }), Message::Binary(bytes.into())]
            }
            Err(message) => vec![text(&ServerMessage::Error { id: None, message })],
        },
        ClientMessage::AssetRequest { name } => match session.asset(name.clone()).await {
            Some(bytes) => vec![
                text(&ServerMessage::Asset { name, bytes: bytes.len() }),
                Message::Binary(bytes.as_ref().clone().into()),
            ],
            None => vec![text(&ServerMessage::Error { id: None, message: format!("no asset named `{name}`") })],
        },
    }
}
