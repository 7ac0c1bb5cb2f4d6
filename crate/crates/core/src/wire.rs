//! JSON bodies exchanged between the engine, devices and tooling.

use serde::{Deserialize, Serialize};

use crate::instance::State;

/// Header carrying a parked synchronous request's resume token.
pub const RESUME_TOKEN_HEADER: &str = "x-muit-resume-token";
pub const INSTANCE_HEADER: &str = "x-muit-instance";
/// Idempotency marker on callback deliveries.
pub const DELIVERY_HEADER: &str = "x-muit-delivery";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResultStatus {
    Completed,
    AlreadyCompleted,
    Failed,
    TimedOut,
}

impl ResultStatus {
    pub fn from_state(s: State) -> Self {
        match s {
            State::Failed => ResultStatus::Failed,
            State::TimedOut => ResultStatus::TimedOut,
            _ => ResultStatus::Completed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultAck {
    pub instance: String,
    pub status: ResultStatus,
    pub state: State,
}

/// Body of a 4xx answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncItem {
    pub instance: String,
    pub seq: u64,
    /// Client clock when the result was recorded offline.
    #[serde(default)]
    pub timestamp: Option<String>,
    /// Same shape as a `/task/{id}/result` body.
    pub result: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncBatch {
    pub device: String,
    pub items: Vec<SyncItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ItemStatus {
    Completed,
    AlreadyApplied,
    AlreadyCompleted,
    Failed,
    TimedOut,
    NotFound,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncAck {
    pub seq: u64,
    pub instance: String,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncResponse {
    pub device: String,
    pub acks: Vec<SyncAck>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeliveryCounts {
    /// Outcomes handed to parked synchronous callers.
    pub parked: u64,
    pub callback_ok: u64,
    /// Callbacks abandoned after the last retry.
    pub callback_failed: u64,
    pub callback_attempts: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NotificationCounts {
    pub sent: u64,
    pub failed: u64,
    pub undeliverable: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub live_instances: u64,
    pub passivated_instances: u64,
    pub queue_depth: u64,
    /// Mean response time of completed, never-passivated instances.
    pub art_ms: f64,
    pub accepted: u64,
    pub rejected: u64,
    pub created: u64,
    pub completed: u64,
    pub failed: u64,
    pub timed_out: u64,
    pub terminal: u64,
    pub deliveries: DeliveryCounts,
    pub notifications: NotificationCounts,
}
