//! Handling instances: one per in-flight process request awaiting a human.
//!
//! The manager owns the state machine, the pending queue and passivation.
//! It performs no network I/O; completing or expiring an instance yields a
//! [`Delivery`] that the caller carries out exactly once.

mod store;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use indexmap::IndexSet;
use parking_lot::Mutex;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{Direction, TaskEnvelope};

pub use store::{FileStore, InstanceStore, MemoryStore, StoreError};

pub const CONTINUATION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    Created,
    AwaitingUser,
    PassivatedAsync,
    PassivatedSync,
    Restoring,
    Completed,
    Failed,
    TimedOut,
}

impl State {
    pub const ALL: [State; 8] = [
        State::Created,
        State::AwaitingUser,
        State::PassivatedAsync,
        State::PassivatedSync,
        State::Restoring,
        State::Completed,
        State::Failed,
        State::TimedOut,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, State::Completed | State::Failed | State::TimedOut)
    }

    pub fn is_passivated(self) -> bool {
        matches!(self, State::PassivatedAsync | State::PassivatedSync)
    }

    /// The allowed edge set of the lifecycle.
    pub fn can_become(self, to: State) -> bool {
        use State::*;
        matches!(
            (self, to),
            (Created, AwaitingUser)
                | (AwaitingUser, PassivatedAsync | PassivatedSync | Completed | Failed | TimedOut)
                | (PassivatedAsync | PassivatedSync, Restoring)
                | (Restoring, Completed | Failed)
        )
    }
}

/// True when every consecutive pair of `history` is an allowed edge.
pub fn legal_history(history: &[State]) -> bool {
    history.first().is_none_or(|s| *s == State::Created) && history.windows(2).all(|w| w[0].can_become(w[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandlingInstance {
    pub instance_id: String,
    pub mode: Mode,
    pub state: State,
    pub request: TaskEnvelope,
    pub callback_address: Option<String>,
    pub assigned_user: Option<String>,
    /// Deployed service the request arrived at.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    /// Token under which a sync caller's parked connection is resumed.
    pub resume_token: Option<String>,
    pub created_at: u64,
    pub last_activity: u64,
    pub passivated_at: Option<u64>,
    pub completed_at: Option<u64>,
    pub deadline: Option<u64>,
    pub history: Vec<State>,
}

/// Versioned store record: the continuation of a passivated instance or the
/// terminal marker of a finished one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredInstance {
    pub v: u32,
    #[serde(flatten)]
    pub instance: HandlingInstance,
}

impl StoredInstance {
    pub fn new(instance: HandlingInstance) -> Self {
        StoredInstance { v: CONTINUATION_VERSION, instance }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let r: StoredInstance = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if r.v != CONTINUATION_VERSION {
            return Err(format!("unsupported continuation version {}", r.v));
        }
        Ok(r)
    }
}

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        chrono::Utc::now().timestamp_millis().max(0) as u64
    }
}

/// Manually driven time for deterministic runs.
#[derive(Default)]
pub struct VirtualClock(AtomicU64);

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        VirtualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerConfig {
    pub idle_threshold_ms: u64,
    pub queue_capacity: usize,
    /// Lifetime of a new instance; `None` means no deadline.
    pub instance_deadline_ms: Option<u64>,
    /// Seed for instance ids and tokens; random when absent.
    pub id_seed: Option<u64>,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig { idle_threshold_ms: 60_000, queue_capacity: 10_000, instance_deadline_ms: None, id_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManagerError {
    #[error("unknown instance {0}")]
    NotFound(String),
    #[error("pending queue is full ({capacity} instances awaiting users)")]
    Backpressure { capacity: usize },
    #[error("instance {id}: illegal transition {from:?} -> {to:?}")]
    InvalidTransition { id: String, from: State, to: State },
    #[error("instance {id} idle for {idle_ms}ms, below the {threshold_ms}ms threshold")]
    NotIdle { id: String, idle_ms: u64, threshold_ms: u64 },
    #[error("asynchronous requests need a callback address")]
    MissingCallback,
    #[error("invalid callback address `{0}`")]
    InvalidCallback(String),
    #[error("result is for operation `{got}` but the instance awaits `{expected}`")]
    ResultMismatch { expected: String, got: String },
    #[error("{0}")]
    Store(String),
}

impl From<StoreError> for ManagerError {
    fn from(e: StoreError) -> Self {
        ManagerError::Store(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DeliveryTarget {
    /// POST to the asynchronous caller's callback address.
    Callback { url: String },
    /// Answer the synchronous caller parked under `token`.
    Parked { token: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Outcome {
    Response { envelope: TaskEnvelope },
    Fault { code: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub instance_id: String,
    pub state: State,
    pub target: DeliveryTarget,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Completion {
    Delivered(Delivery),
    AlreadyCompleted { state: State },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expired {
    pub instance_id: String,
    pub delivery: Delivery,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub live_instances: u64,
    pub passivated_instances: u64,
    pub queue_depth: u64,
    pub created: u64,
    pub completed: u64,
    pub failed: u64,
    pub timed_out: u64,
    pub deliveries: u64,
    pub rejected: u64,
    /// Mean create-to-complete time of instances that were never passivated.
    pub art_ms: f64,
}

#[derive(Default)]
struct Counters {
    live: AtomicU64,
    passivated: AtomicU64,
    created: AtomicU64,
    completed: AtomicU64,
    failed: AtomicU64,
    timed_out: AtomicU64,
    deliveries: AtomicU64,
    rejected: AtomicU64,
    art_sum: AtomicU64,
    art_n: AtomicU64,
}

/// Per-id record kept by the manager. `instance` is present only while the
/// instance is resident (AwaitingUser).
struct Entry {
    state: State,
    mode: Mode,
    deadline: Option<u64>,
    callback_address: Option<String>,
    resume_token: Option<String>,
    correlation_id: String,
    operation: String,
    history: Vec<State>,
    ever_passivated: bool,
    instance: Option<HandlingInstance>,
}

impl Entry {
    fn from_record(r: &HandlingInstance) -> Self {
        Entry {
            state: r.state,
            mode: r.mode,
            deadline: r.deadline,
            callback_address: r.callback_address.clone(),
            resume_token: r.resume_token.clone(),
            correlation_id: r.request.correlation_id.clone(),
            operation: r.request.operation.clone(),
            history: r.history.clone(),
            ever_passivated: r.passivated_at.is_some(),
            instance: None,
        }
    }

    fn target(&self) -> DeliveryTarget {
        match self.mode {
            Mode::Async => DeliveryTarget::Callback { url: self.callback_address.clone().unwrap_or_default() },
            Mode::Sync => DeliveryTarget::Parked { token: self.resume_token.clone().unwrap_or_default() },
        }
    }
}

pub struct InstanceManager {
    cfg: ManagerConfig,
    clock: Arc<dyn Clock>,
    store: Arc<dyn InstanceStore>,
    entries: DashMap<String, Arc<Mutex<Entry>>>,
    queue: Mutex<IndexSet<String>>,
    ids: Mutex<ChaCha20Rng>,
    counters: Counters,
}

/// Parameters of a new instance besides the request itself.
#[derive(Debug, Clone, Default)]
pub struct CreateOptions {
    pub callback_address: Option<String>,
    pub assigned_user: Option<String>,
    pub service: Option<String>,
    /// Overrides the configured deadline.
    pub deadline_ms: Option<u64>,
}

impl InstanceManager {
    /// Opens a manager over `store`, reloading passivated and finished
    /// instances recorded there.
    pub fn open(cfg: ManagerConfig, clock: Arc<dyn Clock>, store: Arc<dyn InstanceStore>) -> Result<Self, ManagerError> {
        let rng = match cfg.id_seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_entropy(),
        };
        let m = InstanceManager {
            cfg,
            clock,
            store,
            entries: DashMap::new(),
            queue: Mutex::new(IndexSet::new()),
            ids: Mutex::new(rng),
            counters: Counters::default(),
        };
        for r in m.store.all()? {
            let entry = Entry::from_record(&r.instance);
            if entry.state.is_passivated() {
                m.counters.passivated.fetch_add(1, Ordering::Relaxed);
            }
            m.entries.insert(r.instance.instance_id.clone(), Arc::new(Mutex::new(entry)));
        }
        Ok(m)
    }

    pub fn in_memory(cfg: ManagerConfig, clock: Arc<dyn Clock>) -> Self {
        Self::open(cfg, clock, Arc::new(MemoryStore::new())).expect("memory store cannot fail")
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    fn new_id(&self) -> String {
        let mut bytes = [0u8; 16];
        self.ids.lock().fill_bytes(&mut bytes);
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ManagerError> {
        self.entries.get(id).map(|e| e.value().clone()).ok_or_else(|| ManagerError::NotFound(id.to_string()))
    }

    fn transition(id: &str, e: &mut Entry, to: State) -> Result<(), ManagerError> {
        if !e.state.can_become(to) {
            return Err(ManagerError::InvalidTransition { id: id.to_string(), from: e.state, to });
        }
        tracing::info!(instance = id, from = ?e.state, to = ?to, "transition");
        e.state = to;
        e.history.push(to);
        if let Some(i) = e.instance.as_mut() {
            i.state = to;
            i.history.push(to);
        }
        Ok(())
    }

    pub fn create(&self, request: TaskEnvelope, mode: Mode, opts: CreateOptions) -> Result<HandlingInstance, ManagerError> {
        if mode == Mode::Async {
            let cb = opts.callback_address.as_deref().ok_or(ManagerError::MissingCallback)?;
            match url::Url::parse(cb) {
                Ok(u) if matches!(u.scheme(), "http" | "https") => {}
                _ => return Err(ManagerError::InvalidCallback(cb.to_string())),
            }
        }
        let now = self.now();
        let mut queue = self.queue.lock();
        if queue.len() >= self.cfg.queue_capacity {
            self.counters.rejected.fetch_add(1, Ordering::Relaxed);
            return Err(ManagerError::Backpressure { capacity: self.cfg.queue_capacity });
        }
        let id = self.new_id();
        let resume_token = (mode == Mode::Sync).then(|| self.new_id());
        let deadline = opts.deadline_ms.or(self.cfg.instance_deadline_ms).map(|d| now + d);
        let callback_address = if mode == Mode::Async { opts.callback_address } else { None };
        let instance = HandlingInstance {
            instance_id: id.clone(),
            mode,
            state: State::Created,
            request,
            callback_address,
            assigned_user: opts.assigned_user,
            service: opts.service,
            resume_token,
            created_at: now,
            last_activity: now,
            passivated_at: None,
            completed_at: None,
            deadline,
            history: vec![State::Created],
        };
        let mut entry = Entry::from_record(&instance);
        entry.instance = Some(instance);
        Self::transition(&id, &mut entry, State::AwaitingUser)?;
        let snapshot = entry.instance.clone().expect("resident");
        queue.insert(id.clone());
        drop(queue);
        self.entries.insert(id, Arc::new(Mutex::new(entry)));
        self.counters.created.fetch_add(1, Ordering::Relaxed);
        self.counters.live.fetch_add(1, Ordering::Relaxed);
        Ok(snapshot)
    }

    /// Records user activity on a resident instance.
    pub fn touch(&self, id: &str) -> Result<(), ManagerError> {
        let e = self.entry(id)?;
        let mut e = e.lock();
        let now = self.now();
        if let Some(i) = e.instance.as_mut() {
            i.last_activity = now;
        }
        Ok(())
    }

    pub fn state(&self, id: &str) -> Option<State> {
        self.entry(id).ok().map(|e| e.lock().state)
    }

    pub fn history(&self, id: &str) -> Option<Vec<State>> {
        self.entry(id).ok().map(|e| e.lock().history.clone())
    }

    /// The instance as currently known: the resident copy, or the stored
    /// record for passivated and finished instances. Never changes state.
    pub fn get(&self, id: &str) -> Result<HandlingInstance, ManagerError> {
        let e = self.entry(id)?;
        let e = e.lock();
        if let Some(i) = &e.instance {
            return Ok(i.clone());
        }
        let mut r = self.store.get(id)?.ok_or_else(|| ManagerError::Store(format!("no record for instance {id}")))?.instance;
        r.state = e.state;
        r.history = e.history.clone();
        Ok(r)
    }

    pub fn passivate(&self, id: &str) -> Result<(), ManagerError> {
        let e = self.entry(id)?;
        let mut e = e.lock();
        let to = match e.mode {
            Mode::Async => State::PassivatedAsync,
            Mode::Sync => State::PassivatedSync,
        };
        if e.state != State::AwaitingUser {
            return Err(ManagerError::InvalidTransition { id: id.to_string(), from: e.state, to });
        }
        let now = self.now();
        let last = e.instance.as_ref().map(|i| i.last_activity).unwrap_or(now);
        let idle = now.saturating_sub(last);
        if idle < self.cfg.idle_threshold_ms {
            return Err(ManagerError::NotIdle { id: id.to_string(), idle_ms: idle, threshold_ms: self.cfg.idle_threshold_ms });
        }
        let mut record = e.instance.clone().expect("AwaitingUser instances are resident");
        record.state = to;
        record.history.push(to);
        record.passivated_at = Some(now);
        self.store.put(&StoredInstance::new(record))?;
        Self::transition(id, &mut e, to)?;
        e.instance = None;
        e.ever_passivated = true;
        self.queue.lock().shift_remove(id);
        self.counters.live.fetch_sub(1, Ordering::Relaxed);
        self.counters.passivated.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    /// Passivates every resident instance idle for at least the threshold.
    pub fn passivate_idle(&self) -> Vec<String> {
        let ids: Vec<String> = self.queue.lock().iter().cloned().collect();
        ids.into_iter().filter(|id| self.passivate(id).is_ok()).collect()
    }

    /// Takes the instance to `terminal`, restoring it first if passivated.
    /// The terminal record is written before any state changes, so a store
    /// failure leaves the instance untouched and the call can be retried.
    fn finish(&self, id: &str, e: &mut Entry, terminal: State, outcome: impl FnOnce(&Entry) -> Outcome) -> Result<Delivery, ManagerError> {
        let now = self.now();
        let was_passivated = e.state.is_passivated();
        let mut record = match &e.instance {
            Some(i) => i.clone(),
            None => match self.store.get(id)? {
                Some(r) => r.instance,
                None => {
                    Self::transition(id, e, State::Restoring)?;
                    Self::transition(id, e, State::Failed)?;
                    self.counters.passivated.fetch_sub(1, Ordering::Relaxed);
                    self.counters.failed.fetch_add(1, Ordering::Relaxed);
                    self.counters.deliveries.fetch_add(1, Ordering::Relaxed);
                    let outcome = Outcome::Fault { code: "Server".into(), reason: format!("continuation of {id} is missing") };
                    return Ok(Delivery { instance_id: id.to_string(), state: State::Failed, target: e.target(), outcome });
                }
            },
        };
        let mut history = e.history.clone();
        if was_passivated {
            history.push(State::Restoring);
        }
        history.push(terminal);
        if !legal_history(&history) {
            return Err(ManagerError::InvalidTransition { id: id.to_string(), from: e.state, to: terminal });
        }
        record.state = terminal;
        record.history = history;
        record.completed_at = Some(now);
        self.store.put(&StoredInstance::new(record.clone()))?;
        if was_passivated {
            Self::transition(id, e, State::Restoring)?;
        }
        Self::transition(id, e, terminal)?;
        e.instance = None;
        let outcome = outcome(e);
        if was_passivated {
            self.counters.passivated.fetch_sub(1, Ordering::Relaxed);
        } else {
            self.queue.lock().shift_remove(id);
            self.counters.live.fetch_sub(1, Ordering::Relaxed);
        }
        match terminal {
            State::Completed => {
                self.counters.completed.fetch_add(1, Ordering::Relaxed);
                if !e.ever_passivated {
                    self.counters.art_sum.fetch_add(now.saturating_sub(record.created_at), Ordering::Relaxed);
                    self.counters.art_n.fetch_add(1, Ordering::Relaxed);
                }
            }
            State::TimedOut => {
                self.counters.timed_out.fetch_add(1, Ordering::Relaxed);
            }
            _ => {
                self.counters.failed.fetch_add(1, Ordering::Relaxed);
            }
        }
        self.counters.deliveries.fetch_add(1, Ordering::Relaxed);
        Ok(Delivery { instance_id: id.to_string(), state: terminal, target: e.target(), outcome })
    }

    pub fn complete(&self, id: &str, result: &TaskEnvelope) -> Result<Completion, ManagerError> {
        let e = self.entry(id)?;
        let mut e = e.lock();
        if e.state.is_terminal() {
            return Ok(Completion::AlreadyCompleted { state: e.state });
        }
        if result.operation != e.operation {
            return Err(ManagerError::ResultMismatch { expected: e.operation.clone(), got: result.operation.clone() });
        }
        let payload = result.payload.clone();
        let d = self.finish(id, &mut e, State::Completed, |e| Outcome::Response {
            envelope: TaskEnvelope {
                operation: e.operation.clone(),
                correlation_id: e.correlation_id.clone(),
                payload,
                direction: Direction::Response,
                reply_to: None,
            },
        })?;
        Ok(Completion::Delivered(d))
    }

    pub fn fail(&self, id: &str, code: &str, reason: &str) -> Result<Completion, ManagerError> {
        let e = self.entry(id)?;
        let mut e = e.lock();
        if e.state.is_terminal() {
            return Ok(Completion::AlreadyCompleted { state: e.state });
        }
        let d = self.finish(id, &mut e, State::Failed, |_| Outcome::Fault { code: code.into(), reason: reason.into() })?;
        Ok(Completion::Delivered(d))
    }

    /// Times out instances whose deadline is at or before `now`. Resident
    /// instances become TimedOut; passivated ones are restored and Failed.
    pub fn expire(&self, now: u64) -> Vec<Expired> {
        let mut candidates: Vec<(String, Arc<Mutex<Entry>>)> = self.entries.iter().map(|kv| (kv.key().clone(), kv.value().clone())).collect();
        candidates.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = Vec::new();
        for (id, e) in candidates {
            let mut e = e.lock();
            if e.state.is_terminal() || !e.deadline.is_some_and(|d| d <= now) {
                continue;
            }
            let terminal = if e.state.is_passivated() { State::Failed } else { State::TimedOut };
            let fault = |_: &Entry| Outcome::Fault { code: "Server".into(), reason: "instance deadline exceeded".into() };
            match self.finish(&id, &mut e, terminal, fault) {
                Ok(delivery) => out.push(Expired { instance_id: id, delivery }),
                Err(err) => tracing::warn!(instance = %id, error = %err, "expiry failed"),
            }
        }
        out
    }

    pub fn queue_depth(&self) -> usize {
        self.queue.lock().len()
    }

    /// Ids awaiting a user, oldest first.
    pub fn pending(&self) -> Vec<String> {
        self.queue.lock().iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn states(&self) -> BTreeMap<String, State> {
        let all: Vec<(String, Arc<Mutex<Entry>>)> = self.entries.iter().map(|kv| (kv.key().clone(), kv.value().clone())).collect();
        all.into_iter().map(|(k, e)| (k, e.lock().state)).collect()
    }

    pub fn metrics(&self) -> Metrics {
        let c = &self.counters;
        let n = c.art_n.load(Ordering::Relaxed);
        Metrics {
            live_instances: c.live.load(Ordering::Relaxed),
            passivated_instances: c.passivated.load(Ordering::Relaxed),
            queue_depth: self.queue_depth() as u64,
            created: c.created.load(Ordering::Relaxed),
            completed: c.completed.load(Ordering::Relaxed),
            failed: c.failed.load(Ordering::Relaxed),
            timed_out: c.timed_out.load(Ordering::Relaxed),
            deliveries: c.deliveries.load(Ordering::Relaxed),
            rejected: c.rejected.load(Ordering::Relaxed),
            art_ms: if n == 0 { 0.0 } else { c.art_sum.load(Ordering::Relaxed) as f64 / n as f64 },
        }
    }
}
