use std::collections::VecDeque;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::config::{NotifierKind, RouteConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub instance_id: String,
    pub recipient: String,
    pub title: String,
    pub deep_link: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchStatus {
    Sent,
    Failed,
    Undeliverable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub notification: Notification,
    pub channel: Option<String>,
    pub status: DispatchStatus,
    pub detail: Option<String>,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u64,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Dispatch records kept for inspection; counts cover every dispatch.
const RECORD_LIMIT: usize = 4096;

#[derive(Default)]
struct Log {
    records: VecDeque<DispatchRecord>,
    sent: u64,
    failed: u64,
    undeliverable: u64,
}

/// Routes notifications to the log or to webhooks.
pub struct Dispatcher {
    routes: Vec<RouteConfig>,
    http: reqwest::Client,
    log: Mutex<Log>,
}

impl Dispatcher {
    pub fn new(routes: Vec<RouteConfig>, http: reqwest::Client) -> Self {
        Dispatcher { routes, http, log: Mutex::new(Log::default()) }
    }

    /// An exact recipient match wins over `*`.
    fn route(&self, recipient: &str) -> Option<&RouteConfig> {
        self.routes.iter().find(|r| r.recipient == recipient).or_else(|| self.routes.iter().find(|r| r.recipient == "*"))
    }

    pub async fn dispatch(&self, n: Notification) -> DispatchStatus {
        let (channel, status, detail) = match self.route(&n.recipient) {
            None => {
                tracing::warn!(instance = %n.instance_id, recipient = %n.recipient, "no notification route");
                (None, DispatchStatus::Undeliverable, Some("no route for recipient".to_string()))
            }
            Some(RouteConfig { notifier: NotifierKind::Log, .. }) => {
                tracing::info!(instance = %n.instance_id, recipient = %n.recipient, title = %n.title, link = %n.deep_link, "notify");
                (Some("log".to_string()), DispatchStatus::Sent, None)
            }
            Some(RouteConfig { notifier: NotifierKind::Webhook, url, .. }) => {
                let url = url.clone().unwrap_or_default();
                match self.http.post(&url).json(&n).send().await {
                    Ok(r) if r.status().is_success() => (Some(url), DispatchStatus::Sent, None),
                    Ok(r) => (Some(url), DispatchStatus::Failed, Some(format!("webhook answered {}", r.status()))),
                    Err(e) => (Some(url), DispatchStatus::Failed, Some(e.to_string())),
                }
            }
        };
        if status == DispatchStatus::Failed {
            tracing::warn!(instance = %n.instance_id, detail = ?detail, "notification failed");
        }
        let mut log = self.log.lock();
        match status {
            DispatchStatus::Sent => log.sent += 1,
            DispatchStatus::Failed => log.failed += 1,
            DispatchStatus::Undeliverable => log.undeliverable += 1,
        }
        if log.records.len() == RECORD_LIMIT {
            log.records.pop_front();
        }
        log.records.push_back(DispatchRecord { notification: n, channel, status: status.clone(), detail, at_ms: now_ms() });
        status
    }

    /// The most recent dispatches, oldest first.
    pub fn records(&self) -> Vec<DispatchRecord> {
        self.log.lock().records.iter().cloned().collect()
    }

    pub fn count(&self, status: DispatchStatus) -> u64 {
        let log = self.log.lock();
        match status {
            DispatchStatus::Sent => log.sent,
            DispatchStatus::Failed => log.failed,
            DispatchStatus::Undeliverable => log.undeliverable,
        }
    }
}
