//! WebSocket control frames. Text frames carry these JSON messages; binary
//! frames carry mesh or asset bytes and always follow the text header that
//! announces them.

use serde::{Deserialize, Serialize};

use crate::model::PathId;
use crate::session::{Command, Event, Snapshot};

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Command {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        command: Command,
    },
    /// One path's mesh, or with no `path_id` the bundle of visible paths.
    MeshRequest {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path_id: Option<PathId>,
    },
    AssetRequest {
        name: String,
    },
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Sent once, first, on every connection.
    Snapshot { snapshot: Box<Snapshot> },
    /// Broadcast to every client after each state change, in revision order.
    Event { event: Box<Event> },
    /// Reply to the sender of a command that was applied (or was a no-op).
    Ack {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        revision: u64,
        noop: bool,
    },
    /// Reply to a malformed message or a rejected command.
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        message: String,
    },
    /// Header of the next binary frame: one `RMSH` mesh blob.
    Mesh { path_id: PathId, bytes: usize },
    /// Header of the next binary frame: an `RMSB` bundle.
    Meshes { count: usize, bytes: usize },
    /// Header of the next binary frame: raw asset bytes.
    Asset { name: String, bytes: usize },
}
