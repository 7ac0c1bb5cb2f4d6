//! Real-HTTP process caller for end-to-end runs against a served engine.
//!
//! The caller plays both sides of a human task: it issues SOAP requests as a
//! process engine would (synchronous ones held open and resumed, asynchronous
//! ones answered on a callback endpoint), and it plays the device, following
//! each notification's deep link and posting a result. A share of results is
//! replayed, through `/task/{id}/result` or `/sync`, to check idempotency.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;
use muit_core::wire::{SyncBatch, SyncItem, DELIVERY_HEADER, INSTANCE_HEADER, RESUME_TOKEN_HEADER};
use parking_lot::Mutex;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, Notify};

use crate::notify::Notification;

/// Builds the envelope for request `i`; `reply_to` is set for async ones.
pub type EnvelopeFn = Arc<dyn Fn(usize, Option<&str>) -> String + Send + Sync>;

#[derive(Clone)]
pub struct LiveSpec {
    pub service: String,
    pub requests: usize,
    pub sync_fraction: f64,
    pub replay_fraction: f64,
    pub envelope: EnvelopeFn,
    /// Result body the device posts.
    pub result: serde_json::Value,
    /// Gives up waiting for outcomes after this long.
    pub timeout: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LiveReport {
    pub issued: usize,
    pub acknowledged: usize,
    pub refused: usize,
    pub sync_answers: usize,
    pub sync_faults: usize,
    /// Callback POSTs received, duplicates included.
    pub callbacks: usize,
    pub distinct_callbacks: usize,
    pub notifications: usize,
    pub pages_ok: usize,
    pub results_posted: usize,
    pub replays: usize,
    pub replay_anomalies: usize,
    pub timed_out: bool,
}

impl LiveReport {
    /// Outcomes that reached the caller: sync answers and faults plus
    /// callback POSTs.
    pub fn delivered(&self) -> usize {
        self.sync_answers + self.sync_faults + self.callbacks
    }
}

/// True for about `fraction` of indices, spread evenly.
fn pick(i: usize, fraction: f64) -> bool {
    ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor()
}

#[derive(Default)]
struct Seen {
    callbacks: usize,
    delivery_ids: BTreeSet<String>,
    notifications: usize,
}

#[derive(Clone)]
struct Sink {
    seen: Arc<Mutex<Seen>>,
    changed: Arc<Notify>,
    notes: mpsc::UnboundedSender<Notification>,
}

async fn on_callback(State(s): State<Sink>, Path(_): Path<usize>, headers: HeaderMap) -> StatusCode {
    let id = headers.get(DELIVERY_HEADER).and_then(|v| v.to_str().ok()).unwrap_or_default().to_string();
    {
        let mut seen = s.seen.lock();
        seen.callbacks += 1;
        seen.delivery_ids.insert(id);
    }
    s.changed.notify_waiters();
    StatusCode::OK
}

async fn on_notify(State(s): State<Sink>, body: Bytes) -> StatusCode {
    match serde_json::from_slice::<Notification>(&body) {
        Ok(n) => {
            s.seen.lock().notifications += 1;
            let _ = s.notes.send(n);
            StatusCode::OK
        }
        Err(_) => StatusCode::BAD_REQUEST,
    }
}

/// The caller's own HTTP endpoints: callbacks and the notification webhook.
pub struct Caller {
    base: String,
    sink: Sink,
    notes: Mutex<Option<mpsc::UnboundedReceiver<Notification>>>,
    http: reqwest::Client,
}

impl Caller {
    pub async fn start() -> std::io::Result<Caller> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let base = format!("http://{}", listener.local_addr()?);
        let (tx, rx) = mpsc::unbounded_channel();
        let sink = Sink { seen: Arc::default(), changed: Arc::default(), notes: tx };
        let app = Router::new().route("/cb/{i}", post(on_callback)).route("/notify", post(on_notify)).with_state(sink.clone());
        tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                tracing::error!(error = %e, "caller endpoint stopped");
            }
        });
        Ok(Caller { base, sink, notes: Mutex::new(Some(rx)), http: reqwest::Client::new() })
    }

    /// Webhook URL to route the engine's notifications to.
    pub fn notify_url(&self) -> String {
        format!("{}/notify", self.base)
    }

    fn callback_url(&self, i: usize) -> String {
        format!("{}/cb/{i}", self.base)
    }

    /// Runs `spec` against the engine at `engine`. Call once per caller.
    pub async fn run(&self, engine: &str, spec: &LiveSpec) -> LiveReport {
        let engine = engine.trim_end_matches('/').to_string();
        let deadline = Instant::now() + spec.timeout;
        let notes = self.notes.lock().take().expect("a caller runs once");
        let stats = Arc::new(Mutex::new(DeviceStats::default()));
        let device = tokio::spawn(device(self.http.clone(), engine.clone(), notes, spec.clone(), stats.clone()));

        let mut calls = Vec::new();
        for i in 0..spec.requests {
            let sync = pick(i, spec.sync_fraction);
            let reply_to = (!sync).then(|| self.callback_url(i));
            let body = (spec.envelope)(i, reply_to.as_deref());
            let url = format!("{engine}/svc/{}", spec.service);
            calls.push(tokio::spawn(call(self.http.clone(), url, body, sync)));
        }
        let mut report = LiveReport { issued: spec.requests, ..LiveReport::default() };
        for c in calls {
            match c.await {
                Ok(CallOutcome::Acknowledged) => report.acknowledged += 1,
                Ok(CallOutcome::Answered) => report.sync_answers += 1,
                Ok(CallOutcome::Fault) => report.sync_faults += 1,
                Ok(CallOutcome::Refused) | Err(_) => report.refused += 1,
            }
        }
        // Wait for every acknowledged request's callback.
        loop {
            let changed = self.sink.changed.notified();
            if self.sink.seen.lock().delivery_ids.len() >= report.acknowledged {
                break;
            }
            if Instant::now() >= deadline {
                report.timed_out = true;
                break;
            }
            let _ = tokio::time::timeout(Duration::from_millis(50), changed).await;
        }
        let answered = report.acknowledged + report.sync_answers + report.sync_faults;
        while stats.lock().results_posted < answered && Instant::now() < deadline {
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        device.abort();
        let d = stats.lock().clone();
        // Late duplicates would show up here.
        tokio::time::sleep(Duration::from_millis(100)).await;
        let seen = self.sink.seen.lock();
        report.callbacks = seen.callbacks;
        report.distinct_callbacks = seen.delivery_ids.len();
        report.notifications = seen.notifications;
        report.pages_ok = d.pages_ok;
        report.results_posted = d.results_posted;
        report.replays = d.replays;
        report.replay_anomalies = d.anomalies;
        report.timed_out |= d.results_posted < answered;
        report
    }
}

enum CallOutcome {
    Acknowledged,
    Answered,
    Fault,
    Refused,
}

async fn call(http: reqwest::Client, url: String, body: String, sync: bool) -> CallOutcome {
    let mut token: Option<String> = None;
    loop {
        let mut req = http.post(&url).header("content-type", "text/xml; charset=utf-8");
        req = match &token {
            Some(t) => req.header(RESUME_TOKEN_HEADER, t),
            None => req.body(body.clone()),
        };
        let Ok(r) = req.send().await else { return CallOutcome::Refused };
        let status = r.status().as_u16();
        let resume = r.headers().get(RESUME_TOKEN_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
        let has_instance = r.headers().contains_key(INSTANCE_HEADER);
        match (status, resume) {
            (202, Some(t)) => token = Some(t),
            (202, None) if !sync && has_instance => return CallOutcome::Acknowledged,
            (200, _) if sync => return CallOutcome::Answered,
            (500, _) if sync && has_instance => return CallOutcome::Fault,
            _ => return CallOutcome::Refused,
        }
    }
}

#[derive(Debug, Default, Clone)]
struct DeviceStats {
    pages_ok: usize,
    results_posted: usize,
    replays: usize,
    anomalies: usize,
}

async fn device(http: reqwest::Client, engine: String, mut notes: mpsc::UnboundedReceiver<Notification>, spec: LiveSpec, stats: Arc<Mutex<DeviceStats>>) {
    let mut seq = 0u64;
    let mut n = 0usize;
    while let Some(note) = notes.recv().await {
        let idx = n;
        n += 1;
        let bump = |f: &dyn Fn(&mut DeviceStats)| f(&mut stats.lock());
        let link = note.deep_link.split('#').next().unwrap_or_default().to_string();
        if let Ok(r) = http.get(&link).send().await {
            if r.status().is_success() && r.text().await.is_ok_and(|t| t.contains(&note.instance_id)) {
                bump(&|s| s.pages_ok += 1);
            }
        }
        let url = format!("{engine}/task/{}/result", note.instance_id);
        let posted = http.post(&url).json(&spec.result).send().await;
        let completed = match posted {
            Ok(r) if r.status().is_success() => r.json::<serde_json::Value>().await.ok().is_some_and(|v| v["status"] == "Completed"),
            _ => false,
        };
        if !completed {
            bump(&|s| s.anomalies += 1);
        }
        if pick(idx, spec.replay_fraction) {
            // Alternate the two replay paths.
            let ok = if idx.is_multiple_of(2) {
                match http.post(&url).json(&spec.result).send().await {
                    Ok(r) => r.json::<serde_json::Value>().await.ok().is_some_and(|v| v["status"] == "AlreadyCompleted"),
                    Err(_) => false,
                }
            } else {
                seq += 1;
                let batch = SyncBatch {
                    device: "bpel-device".into(),
                    items: vec![SyncItem { instance: note.instance_id.clone(), seq, timestamp: None, result: spec.result.clone() }],
                };
                match http.post(format!("{engine}/sync")).json(&batch).send().await {
                    Ok(r) => r.json::<serde_json::Value>().await.ok().is_some_and(|v| v["acks"][0]["status"] == "AlreadyCompleted"),
                    Err(_) => false,
                }
            };
            bump(&|s| {
                s.replays += 1;
                if !ok {
                    s.anomalies += 1;
                }
            });
        }
        bump(&|s| s.results_posted += 1);
    }
}
