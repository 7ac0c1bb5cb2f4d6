use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use muit_core::bridge::{ack_envelope, canonical_to_json, fault_envelope, parse_envelope, Codec, Direction, MUIT_NS};
use muit_core::instance::{
    Clock, Completion, CreateOptions, Delivery, DeliveryTarget, FileStore, HandlingInstance, InstanceManager, InstanceStore,
    ManagerConfig, ManagerError, MemoryStore, Mode, Outcome,
};
use muit_core::value::{format_epoch_ms, Value};
use muit_core::wire::{
    DeliveryCounts, ErrorBody, ItemStatus, MetricsReport, NotificationCounts, ResultAck, ResultStatus, SyncAck, SyncBatch,
    SyncResponse, DELIVERY_HEADER,
};
use parking_lot::{Mutex, RwLock};
use tokio::sync::{watch, Notify};

use crate::config::EngineConfig;
use crate::deploy::{DeployError, Deployment, Registry};
use crate::notify::{DispatchRecord, DispatchStatus, Dispatcher, Notification};
use crate::result::{parse_result, parse_result_value, respond, ResultBody};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("deployment `{name}`: {source}")]
    Deploy { name: String, source: DeployError },
    #[error("http client: {0}")]
    Http(String),
}

/// Failure of a device-facing call; maps onto an HTTP status.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("instance {0} is finished")]
    Gone(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> u16 {
        match self {
            ApiError::BadRequest(_) => 400,
            ApiError::NotFound(_) => 404,
            ApiError::Gone(_) => 410,
            ApiError::Invalid { .. } => 422,
            ApiError::Internal(_) => 500,
        }
    }

    pub fn body(&self) -> ErrorBody {
        match self {
            ApiError::Invalid { path, message } => ErrorBody { error: message.clone(), path: Some(path.clone()) },
            other => ErrorBody { error: other.to_string(), path: None },
        }
    }
}

impl From<ManagerError> for ApiError {
    fn from(e: ManagerError) -> Self {
        match e {
            ManagerError::NotFound(id) => ApiError::NotFound(format!("instance {id}")),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

/// An HTTP answer carrying a SOAP document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    fn fault(status: u16, code: &str, reason: &str) -> Self {
        Reply { status, body: fault_envelope(code, reason) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SoapOutcome {
    /// Asynchronous request accepted; the result goes to the callback.
    Accepted { instance: String, body: String },
    /// Synchronous request answered within the long-poll window.
    Answered { instance: String, reply: Reply },
    /// Synchronous request still open; re-present the token to resume.
    Pending { instance: String, token: String },
    /// Rejected before any instance was created, or a resume failure.
    Rejected(Reply),
}

/// A task page for one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskPage {
    pub service: String,
    pub screen: String,
    pub html: String,
}

#[derive(Default)]
struct Counters {
    accepted: AtomicU64,
    refused: AtomicU64,
    parked: AtomicU64,
    callback_ok: AtomicU64,
    callback_failed: AtomicU64,
    callback_attempts: AtomicU64,
    in_flight: AtomicU64,
    cids: AtomicU64,
    idle: Notify,
}

/// Rendezvous between a parked synchronous caller and the delivery.
struct Slot {
    instance: String,
    tx: watch::Sender<Option<Reply>>,
}

pub struct Engine {
    cfg: EngineConfig,
    base_url: RwLock<String>,
    manager: InstanceManager,
    registry: Registry,
    parked: Mutex<HashMap<String, Arc<Slot>>>,
    dispatcher: Dispatcher,
    http: reqwest::Client,
    counters: Arc<Counters>,
    /// Sequence numbers applied per device.
    applied: Mutex<HashMap<String, BTreeSet<u64>>>,
}

fn read(path: &std::path::Path) -> Result<String, EngineError> {
    std::fs::read_to_string(path).map_err(|source| EngineError::Io { path: path.display().to_string(), source })
}

fn secs_ms(s: f64) -> u64 {
    (s * 1000.0).round() as u64
}

/// First `task_name` string anywhere in the payload.
fn task_title(v: &Value) -> Option<String> {
    match v {
        Value::Map(m) => m.get("task_name").and_then(Value::as_str).map(str::to_string).or_else(|| m.values().find_map(task_title)),
        Value::List(xs) => xs.iter().find_map(task_title),
        _ => None,
    }
}

/// Escapes a JSON text for a `<script>` element.
fn script_json(json: &str) -> String {
    json.replace("</", "<\\/").replace('\u{2028}', "\\u2028").replace('\u{2029}', "\\u2029")
}

impl Engine {
    /// Builds an engine from configuration, loading every deployment.
    pub fn new(cfg: EngineConfig, clock: Arc<dyn Clock>) -> Result<Self, EngineError> {
        let store: Arc<dyn InstanceStore> = match &cfg.store_path {
            Some(p) => Arc::new(FileStore::open(p).map_err(ManagerError::from)?),
            None => Arc::new(MemoryStore::new()),
        };
        let mcfg = ManagerConfig {
            idle_threshold_ms: secs_ms(cfg.idle_threshold_s),
            queue_capacity: cfg.queue_capacity,
            instance_deadline_ms: cfg.instance_deadline_s.map(secs_ms),
            id_seed: None,
        };
        let manager = InstanceManager::open(mcfg, clock, store)?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.http_timeout_s))
            .build()
            .map_err(|e| EngineError::Http(e.to_string()))?;
        let engine = Engine {
            base_url: RwLock::new(format!("http://{}", cfg.listen)),
            manager,
            registry: Registry::default(),
            parked: Mutex::new(HashMap::new()),
            dispatcher: Dispatcher::new(cfg.routes.clone(), http.clone()),
            http,
            counters: Arc::new(Counters::default()),
            applied: Mutex::new(HashMap::new()),
            cfg,
        };
        for d in engine.cfg.deployments.clone() {
            let source = read(&d.source)?;
            let wsdl = d.wsdl.as_deref().map(read).transpose()?;
            let dep = Deployment::from_source(&d.name, &source, wsdl.as_deref(), d.recipient.clone())
                .map_err(|source| EngineError::Deploy { name: d.name.clone(), source })?;
            engine.deploy(dep).map_err(|source| EngineError::Deploy { name: d.name.clone(), source })?;
        }
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn manager(&self) -> &InstanceManager {
        &self.manager
    }

    pub fn deploy(&self, d: Deployment) -> Result<Arc<Deployment>, DeployError> {
        let d = self.registry.insert(d)?;
        tracing::info!(service = %d.name, entry = %d.bundle.manifest.entry, "deployed");
        Ok(d)
    }

    pub fn deployment(&self, name: &str) -> Option<Arc<Deployment>> {
        self.registry.get(name)
    }

    pub fn services(&self) -> Vec<String> {
        self.registry.names()
    }

    /// Origin used for deep links, without a trailing slash.
    pub fn set_base_url(&self, url: &str) {
        *self.base_url.write() = self.cfg.base_url.clone().unwrap_or_else(|| url.to_string()).trim_end_matches('/').to_string();
    }

    pub fn base_url(&self) -> String {
        self.base_url.read().clone()
    }

    pub fn notifications(&self) -> Vec<DispatchRecord> {
        self.dispatcher.records()
    }

    fn stamp_cid(&self) -> String {
        let n = self.counters.cids.fetch_add(1, Ordering::Relaxed);
        format!("muit-{:x}-{n}", self.manager.now())
    }

    fn codec_for(&self, inst: &HandlingInstance) -> Codec {
        inst.service.as_deref().and_then(|s| self.registry.get(s)).map(|d| d.codec.clone()).unwrap_or_default()
    }

    /// Accepts a SOAP request at `/svc/{service}`, or resumes a parked
    /// synchronous one when `resume` carries its token.
    pub async fn handle_soap(&self, service: &str, body: &[u8], resume: Option<&str>) -> SoapOutcome {
        if let Some(token) = resume {
            return self.resume(token).await;
        }
        let Some(dep) = self.registry.get(service) else {
            return SoapOutcome::Rejected(Reply::fault(404, "Client", &format!("no service is deployed at /svc/{service}")));
        };
        let Ok(text) = std::str::from_utf8(body) else {
            return SoapOutcome::Rejected(Reply::fault(400, "Client", "request is not UTF-8"));
        };
        let env = match parse_envelope(text) {
            Ok(e) => e,
            Err(e) => return SoapOutcome::Rejected(Reply::fault(400, "Client", &e.to_string())),
        };
        let mut request = match dep.codec.soap_to_canonical(&env) {
            Ok(r) => r,
            Err(e) => return SoapOutcome::Rejected(Reply::fault(400, "Client", &e.to_string())),
        };
        if request.direction != Direction::Request {
            return SoapOutcome::Rejected(Reply::fault(400, "Client", "expected a request message"));
        }
        let known = match dep.codec.wsdl() {
            Some(w) => w.operation(&request.operation).is_some(),
            None => dep.module.operation(&request.operation).is_some(),
        };
        if !known {
            return SoapOutcome::Rejected(Reply::fault(400, "Client", &format!("`{}` is not an operation of {service}", request.operation)));
        }
        if request.correlation_id.is_empty() {
            request.correlation_id = self.stamp_cid();
        }
        let header_user = env.headers.iter().find(|h| h.ns.as_deref() == Some(MUIT_NS) && h.name == "AssignedUser").map(|h| h.text.trim().to_string());
        let recipient = header_user.filter(|s| !s.is_empty()).or_else(|| dep.role_for(&request.operation)).or_else(|| dep.recipient.clone());
        let callback = request.reply_to.clone();
        let mode = if callback.is_some() { Mode::Async } else { Mode::Sync };
        let opts = CreateOptions { callback_address: callback, assigned_user: recipient.clone(), service: Some(service.to_string()), deadline_ms: None };
        let title = task_title(&request.payload).unwrap_or_else(|| request.operation.clone());
        let cid = request.correlation_id.clone();
        let op = request.operation.clone();
        let inst = match self.manager.create(request, mode, opts) {
            Ok(i) => i,
            Err(e) => {
                self.counters.refused.fetch_add(1, Ordering::Relaxed);
                return SoapOutcome::Rejected(match e {
                    ManagerError::Backpressure { .. } => Reply::fault(503, "Server", &e.to_string()),
                    ManagerError::InvalidCallback(_) => Reply::fault(400, "Client", &e.to_string()),
                    other => Reply::fault(500, "Server", &other.to_string()),
                });
            }
        };
        self.counters.accepted.fetch_add(1, Ordering::Relaxed);
        let id = inst.instance_id.clone();
        tracing::info!(instance = %id, service, operation = %op, mode = ?mode, "accepted");
        let slot = inst.resume_token.as_ref().map(|t| self.slot(t, &id));
        let link = format!("{}/task/{id}/ui#{}", self.base_url(), dep.screen_for(&op));
        let n = Notification { instance_id: id.clone(), recipient: recipient.unwrap_or_default(), title, deep_link: link };
        self.dispatcher.dispatch(n).await;
        match (mode, slot) {
            (Mode::Sync, Some(slot)) => self.wait(slot, inst.resume_token.unwrap_or_default()).await,
            _ => SoapOutcome::Accepted { body: ack_envelope(&id, &cid), instance: id },
        }
    }

    fn slot(&self, token: &str, instance: &str) -> Arc<Slot> {
        self.parked
            .lock()
            .entry(token.to_string())
            .or_insert_with(|| Arc::new(Slot { instance: instance.to_string(), tx: watch::channel(None).0 }))
            .clone()
    }

    async fn wait(&self, slot: Arc<Slot>, token: String) -> SoapOutcome {
        let mut rx = slot.tx.subscribe();
        let limit = Duration::from_secs_f64(self.cfg.long_poll_s);
        let got = tokio::time::timeout(limit, rx.wait_for(Option::is_some)).await;
        match got {
            Ok(Ok(reply)) => SoapOutcome::Answered { instance: slot.instance.clone(), reply: reply.clone().expect("waited for some") },
            _ => SoapOutcome::Pending { instance: slot.instance.clone(), token },
        }
    }

    async fn resume(&self, token: &str) -> SoapOutcome {
        let existing = self.parked.lock().get(token).cloned();
        let slot = match existing {
            Some(s) => s,
            None => {
                // Not parked in this process: the engine restarted since.
                let found = self.manager.states().into_keys().find_map(|id| self.manager.get(&id).ok().filter(|i| i.resume_token.as_deref() == Some(token)));
                match found {
                    None => return SoapOutcome::Rejected(Reply::fault(404, "Client", "unknown resume token")),
                    Some(i) if i.state.is_terminal() => {
                        return SoapOutcome::Rejected(Reply::fault(410, "Server", &format!("instance {} finished while the engine was down", i.instance_id)))
                    }
                    Some(i) => self.slot(token, &i.instance_id),
                }
            }
        };
        self.wait(slot, token.to_string()).await
    }

    /// Hands a terminal outcome to its caller: fills the parked slot, or
    /// POSTs to the callback with retries in the background.
    pub fn deliver(&self, d: Delivery) {
        let inst = self.manager.get(&d.instance_id).ok();
        let codec = inst.as_ref().map(|i| self.codec_for(i)).unwrap_or_default();
        let reply = match &d.outcome {
            Outcome::Response { envelope } => match codec.canonical_to_soap(envelope) {
                Ok(env) => Reply { status: 200, body: env.to_xml() },
                Err(e) => Reply::fault(500, "Server", &format!("response does not transcode: {e}")),
            },
            Outcome::Fault { code, reason } => Reply::fault(500, code, reason),
        };
        tracing::info!(instance = %d.instance_id, state = ?d.state, target = ?d.target, "deliver");
        match d.target {
            DeliveryTarget::Parked { token } => {
                self.slot(&token, &d.instance_id).tx.send_replace(Some(reply));
                self.counters.parked.fetch_add(1, Ordering::Relaxed);
            }
            DeliveryTarget::Callback { url } => {
                self.counters.in_flight.fetch_add(1, Ordering::SeqCst);
                let job = Callback { http: self.http.clone(), url, id: d.instance_id, reply, attempts: self.cfg.callback_attempts, backoff_ms: self.cfg.callback_backoff_ms };
                tokio::spawn(job.run(self.counters.clone()));
            }
        }
    }

    /// Waits until no callback is being delivered.
    pub async fn drain(&self) {
        loop {
            let idle = self.counters.idle.notified();
            if self.counters.in_flight.load(Ordering::SeqCst) == 0 {
                return;
            }
            idle.await;
        }
    }

    /// Runs the passivation and expiry sweep once.
    pub fn tick(&self) {
        let passivated = self.manager.passivate_idle();
        if !passivated.is_empty() {
            tracing::info!(count = passivated.len(), "passivated idle instances");
        }
        for e in self.manager.expire(self.manager.now()) {
            self.deliver(e.delivery);
        }
    }

    pub async fn submit_result(&self, id: &str, body: &[u8]) -> Result<ResultAck, ApiError> {
        let parsed = parse_result(body).map_err(|e| ApiError::Invalid { path: e.path, message: e.message });
        self.apply(id, parsed)
    }

    fn apply(&self, id: &str, body: Result<ResultBody, ApiError>) -> Result<ResultAck, ApiError> {
        let inst = self.manager.get(id)?;
        if inst.state.is_terminal() {
            return Ok(ResultAck { instance: id.to_string(), status: ResultStatus::AlreadyCompleted, state: inst.state });
        }
        let body = body?;
        let service = inst.service.clone().unwrap_or_default();
        let dep = self.registry.get(&service).ok_or_else(|| ApiError::Internal(format!("service `{service}` is not deployed")))?;
        let now = format_epoch_ms(self.manager.now());
        let response = respond(&dep, &inst.request, body, &now).map_err(|e| ApiError::Invalid { path: e.path, message: e.message })?;
        match self.manager.complete(id, &response)? {
            Completion::Delivered(d) => {
                let state = d.state;
                self.deliver(d);
                Ok(ResultAck { instance: id.to_string(), status: ResultStatus::from_state(state), state })
            }
            Completion::AlreadyCompleted { state } => Ok(ResultAck { instance: id.to_string(), status: ResultStatus::AlreadyCompleted, state }),
        }
    }

    /// Applies an offline batch. Items run in sequence order; sequence
    /// numbers already applied for the device are acknowledged without
    /// effect.
    pub async fn sync(&self, batch: &SyncBatch) -> Result<SyncResponse, ApiError> {
        if let Some(w) = batch.items.windows(2).find(|w| w[1].seq <= w[0].seq) {
            return Err(ApiError::BadRequest(format!("sequence {} follows {}; sequence numbers must increase", w[1].seq, w[0].seq)));
        }
        let mut acks = Vec::with_capacity(batch.items.len());
        for item in &batch.items {
            let done = self.applied.lock().get(&batch.device).is_some_and(|s| s.contains(&item.seq));
            if done {
                acks.push(SyncAck { seq: item.seq, instance: item.instance.clone(), status: ItemStatus::AlreadyApplied, error: None });
                continue;
            }
            let parsed = parse_result_value(&item.result).map_err(|e| ApiError::Invalid { path: e.path, message: e.message });
            let (status, error) = match self.apply(&item.instance, parsed) {
                Ok(ack) => (
                    match ack.status {
                        ResultStatus::Completed => ItemStatus::Completed,
                        ResultStatus::AlreadyCompleted => ItemStatus::AlreadyCompleted,
                        ResultStatus::Failed => ItemStatus::Failed,
                        ResultStatus::TimedOut => ItemStatus::TimedOut,
                    },
                    None,
                ),
                Err(e @ ApiError::NotFound(_)) => (ItemStatus::NotFound, Some(e.body())),
                Err(e @ ApiError::Invalid { .. }) => (ItemStatus::Invalid, Some(e.body())),
                Err(e) => (ItemStatus::Failed, Some(e.body())),
            };
            if error.is_none() {
                self.applied.lock().entry(batch.device.clone()).or_default().insert(item.seq);
            }
            acks.push(SyncAck { seq: item.seq, instance: item.instance.clone(), status, error });
        }
        tracing::info!(device = %batch.device, items = acks.len(), "sync");
        Ok(SyncResponse { device: batch.device.clone(), acks })
    }

    pub fn metrics(&self) -> MetricsReport {
        let m = self.manager.metrics();
        let c = &self.counters;
        MetricsReport {
            live_instances: m.live_instances,
            passivated_instances: m.passivated_instances,
            queue_depth: m.queue_depth,
            art_ms: m.art_ms,
            accepted: c.accepted.load(Ordering::Relaxed),
            rejected: c.refused.load(Ordering::Relaxed),
            created: m.created,
            completed: m.completed,
            failed: m.failed,
            timed_out: m.timed_out,
            terminal: m.completed + m.failed + m.timed_out,
            deliveries: DeliveryCounts {
                parked: c.parked.load(Ordering::Relaxed),
                callback_ok: c.callback_ok.load(Ordering::Relaxed),
                callback_failed: c.callback_failed.load(Ordering::Relaxed),
                callback_attempts: c.callback_attempts.load(Ordering::Relaxed),
            },
            notifications: NotificationCounts {
                sent: self.dispatcher.count(DispatchStatus::Sent),
                failed: self.dispatcher.count(DispatchStatus::Failed),
                undeliverable: self.dispatcher.count(DispatchStatus::Undeliverable),
            },
        }
    }

    /// The task page of a live or passivated instance. Serving it never
    /// restores a passivated instance.
    pub fn task_page(&self, id: &str) -> Result<TaskPage, ApiError> {
        let inst = self.manager.get(id)?;
        if inst.state.is_terminal() {
            return Err(ApiError::Gone(id.to_string()));
        }
        let service = inst.service.clone().unwrap_or_default();
        let dep = self.registry.get(&service).ok_or_else(|| ApiError::Internal(format!("service `{service}` is not deployed")))?;
        if !inst.state.is_passivated() {
            let _ = self.manager.touch(id);
        }
        let screen = dep.screen_for(&inst.request.operation).to_string();
        let task = String::from_utf8(canonical_to_json(&inst.request)).unwrap_or_default();
        let boot = format!(
            "{{\"instance\":{},\"service\":{},\"operation\":{},\"screen\":{},\"resultUrl\":{},\"syncUrl\":\"/sync\",\"task\":{}}}",
            json_str(id),
            json_str(&service),
            json_str(&inst.request.operation),
            json_str(&screen),
            json_str(&format!("/task/{id}/result")),
            task
        );
        let html = page(&dep, &screen, Some(&boot)).ok_or_else(|| ApiError::Internal(format!("bundle has no document for `{screen}`")))?;
        Ok(TaskPage { service, screen, html })
    }

    /// The entry page of a deployment, without task data.
    pub fn entry_page(&self, service: &str) -> Option<String> {
        let dep = self.registry.get(service)?;
        let entry = dep.bundle.manifest.entry.clone();
        page(&dep, &entry, None)
    }

    pub fn asset(&self, service: &str, path: &str) -> Option<(&'static str, Vec<u8>)> {
        let dep = self.registry.get(service)?;
        let bytes = dep.bundle.file(path)?.to_vec();
        Some((muit_core::codegen::media_type(path), bytes))
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// A screen document rebased onto `/bundle/{service}/screens/`, with an
/// optional bootstrap block.
fn page(dep: &Deployment, screen: &str, boot: Option<&str>) -> Option<String> {
    let doc = dep.bundle.document(screen)?;
    let mut head = format!("<head>\n<base href=\"/bundle/{}/screens/\">", dep.name);
    if let Some(b) = boot {
        head.push_str(&format!("\n<script type=\"application/json\" id=\"muit-bootstrap\">{}</script>", script_json(b)));
    }
    Some(doc.replacen("<head>", &head, 1))
}

struct Callback {
    http: reqwest::Client,
    url: String,
    id: String,
    reply: Reply,
    attempts: u32,
    backoff_ms: u64,
}

impl Callback {
    async fn run(self, counters: Arc<Counters>) {
        let mut ok = false;
        for attempt in 0..self.attempts {
            if attempt > 0 {
                tokio::time::sleep(Duration::from_millis(self.backoff_ms << (attempt - 1).min(6))).await;
            }
            counters.callback_attempts.fetch_add(1, Ordering::Relaxed);
            let sent = self
                .http
                .post(&self.url)
                .header("content-type", "text/xml; charset=utf-8")
                .header(DELIVERY_HEADER, &self.id)
                .body(self.reply.body.clone())
                .send()
                .await;
            match sent {
                Ok(r) if r.status().is_success() => {
                    ok = true;
                    break;
                }
                Ok(r) => tracing::warn!(instance = %self.id, status = %r.status(), attempt, "callback refused"),
                Err(e) => tracing::warn!(instance = %self.id, error = %e, attempt, "callback failed"),
            }
        }
        if ok {
            counters.callback_ok.fetch_add(1, Ordering::Relaxed);
        } else {
            tracing::error!(instance = %self.id, url = %self.url, "callback abandoned");
            counters.callback_failed.fetch_add(1, Ordering::Relaxed);
        }
        if counters.in_flight.fetch_sub(1, Ordering::SeqCst) == 1 {
            counters.idle.notify_waiters();
        }
    }
}
