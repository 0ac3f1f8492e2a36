use std::sync::Arc;
use std::thread;

use tokio::sync::{broadcast, mpsc, oneshot};
use trajscope_core::{Command, Event, Session, Snapshot};

pub(crate) enum Request {
    Apply(Command, oneshot::Sender<Result<Event, String>>),
    Snapshot(oneshot::Sender<Snapshot>),
    Mesh(u32, oneshot::Sender<Result<Vec<u8>, String>>),
    Meshes(oneshot::Sender<Result<Vec<u8>, String>>),
    Assets(oneshot::Sender<Vec<(String, usize)>>),
    Asset(String, oneshot::Sender<Option<Arc<Vec<u8>>>>),
}

/// Cheap handle to the thread that owns the session.
#[derive(Clone)]
pub(crate) struct SessionHandle {
    tx: mpsc::Sender<Request>,
    events: broadcast::Sender<Arc<Event>>,
}

const QUEUE: usize = 256;
const EVENT_BUFFER: usize = 1024;

impl SessionHandle {
    pub(crate) fn start(mut session: Session) -> SessionHandle {
        let (tx, mut rx) = mpsc::channel::<Request>(QUEUE);
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let fanout = events.clone();
        thread::Builder::new()
            .name("session".into())
            .spawn(move || {
                while let Some(req) = rx.blocking_recv() {
                    match req {
                        Request::Apply(cmd, reply) => {
                            let result = session.apply(cmd);
                            if let Ok(ev) = &result {
                                if !ev.noop {
                                    // no receivers is fine
                                    let _ = fanout.send(Arc::new(ev.clone()));
                                }
                            }
                            let _ = reply.send(result.map_err(|e| e.to_string()));
                        }
                        Request::Snapshot(reply) => {
                            let _ = reply.send(session.snapshot());
                        }
                        Request::Mesh(id, reply) => {
                            let _ = reply.send(session.mesh_blob(id).map_err(|e| e.to_string()));
                        }
                        Request::Meshes(reply) => {
                            let _ = reply.send(session.visible_mesh_bundle().map_err(|e| e.to_string()));
                        }
                        Request::Assets(reply) => {
                            let _ = reply.send(session.assets().iter().map(|a| (a.name.clone(), a.bytes.len())).collect());
                        }
                        Request::Asset(name, reply) => {
                            let _ = reply.send(session.asset(&name).map(|a| Arc::new(a.bytes.clone())));
                        }
                    }
                }
            })
            .expect("spawn session thread");
        SessionHandle { tx, events }
    }

    pub(crate) fn subscribe(&self) -> broadcast::Receiver<Arc<Event>> {
        self.events.subscribe()
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> T {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).await.expect("session thread alive");
        rx.await.expect("session thread replies")
    }

    pub(crate) async fn apply(&self, cmd: Command) -> Result<Event, String> {
        self.ask(|r| Request::Apply(cmd, r)).await
    }

    pub(crate) async fn snapshot(&self) -> Snapshot {
        self.ask(Request::Snapshot).await
    }

    pub(crate) async fn mesh(&self, id: u32) -> Result<Vec<u8>, String> {
        self.ask(|r| Request::Mesh(id, r)).await
    }

    pub(crate) async fn meshes(&self) -> Result<Vec<u8>, String> {
        self.ask(Request::Meshes).await
    }

    pub(crate) async fn assets(&self) -> Vec<(String, usize)> {
        self.ask(Request::Assets).await
    }

    pub(crate) async fn asset(&self, name: String) -> Option<Arc<Vec<u8>>> {
        self.ask(|r| Request::Asset(name, r)).await
    }
}
