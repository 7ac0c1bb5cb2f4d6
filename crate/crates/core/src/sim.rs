//! Discrete-event load harness for the instance manager.
//!
//! N closed-loop callers issue requests back to back until the horizon. Every
//! request holds a worker thread while it is resident. Processing is
//! processor-shared and slows down as idle instances pile up in memory:
//! each processing job advances at rate `1 / (1 + pressure * idle)`, where
//! `idle` counts resident instances waiting for a human plus parked sync
//! connections weighted by `parked_weight`. Passivated async instances cost
//! nothing. Time is virtual; the real manager runs on a virtual clock.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::TaskEnvelope;
use crate::instance::{CreateOptions, InstanceManager, ManagerConfig, Mode, VirtualClock};
use crate::value::{Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Concurrent callers.
    pub concurrency: usize,
    /// Share of synchronous requests.
    pub sync_fraction: f64,
    pub service_time_s: f64,
    pub delayed_fraction: f64,
    pub delay_s: f64,
    pub passivation: bool,
    pub workers: usize,
    /// Callers stop issuing new requests at this simulated time.
    pub horizon_s: f64,
    pub idle_threshold_s: f64,
    pub pressure: f64,
    pub parked_weight: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            concurrency: 100,
            sync_fraction: 0.0,
            service_time_s: 2.0,
            delayed_fraction: 0.2,
            delay_s: 60.0,
            passivation: true,
            workers: 1000,
            horizon_s: 600.0,
            idle_threshold_s: 2.0,
            pressure: 0.01,
            parked_weight: 0.25,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("{0} must be within [0, 1]")]
    Fraction(&'static str),
    #[error("{0} must be at least 1")]
    Positive(&'static str),
    #[error("{0} must be a finite non-negative number")]
    Duration(&'static str),
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        for (name, v) in [("sync_fraction", self.sync_fraction), ("delayed_fraction", self.delayed_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SpecError::Fraction(name));
            }
        }
        for (name, v) in [("concurrency", self.concurrency), ("workers", self.workers)] {
            if v == 0 {
                return Err(SpecError::Positive(name));
            }
        }
        for (name, v) in [
            ("service_time_s", self.service_time_s),
            ("delay_s", self.delay_s),
            ("horizon_s", self.horizon_s),
            ("idle_threshold_s", self.idle_threshold_s),
            ("pressure", self.pressure),
            ("parked_weight", self.parked_weight),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SpecError::Duration(name));
            }
        }
        Ok(())
    }

    pub fn mode_label(&self) -> &'static str {
        if self.sync_fraction <= 0.0 {
            "async"
        } else if self.sync_fraction >= 1.0 {
            "sync"
        } else {
            "mixed"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: usize,
    pub mode: String,
    pub passivation: bool,
    /// Mean latency of non-delayed requests, simulated seconds.
    pub art_s: f64,
    pub p95_s: f64,
    /// Peak resident instances once the first delay window has passed and
    /// before the horizon. The start-up burst is excluded: every caller
    /// issues at t=0, so the overall peak is N regardless of policy.
    pub peak_live: u64,
    pub peak_live_overall: u64,
    pub issued: usize,
    pub completed: usize,
    pub faulted: usize,
    pub delayed: usize,
    /// Integral of resident instances over time.
    pub live_instance_seconds: f64,
    pub makespan_s: f64,
    /// Per-request latencies in issue order; `None` for faulted requests.
    pub latencies: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, u64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Timed {
    Passivate(usize),
    Respond(usize),
}

struct Req {
    client: usize,
    start: f64,
    delayed: bool,
    sync: bool,
    id: Option<String>,
    passivated: bool,
    holds_worker: bool,
}

struct Sim<'a> {
    spec: &'a WorkloadSpec,
    clock: Arc<VirtualClock>,
    manager: InstanceManager,
    rng: ChaCha8Rng,
    t: f64,
    work: f64,
    idle: f64,
    seq: u64,
    processing: BinaryHeap<Reverse<(Key, usize)>>,
    timed: BinaryHeap<Reverse<(Key, Timed)>>,
    free_workers: usize,
    waiting: VecDeque<usize>,
    reqs: Vec<Req>,
    latencies: Vec<Option<f64>>,
    peak_live: u64,
    peak_live_overall: u64,
    live_seconds: f64,
}

fn ms(t: f64) -> u64 {
    (t * 1000.0).round() as u64
}

impl<'a> Sim<'a> {
    fn slowdown(&self) -> f64 {
        1.0 + self.spec.pressure * self.idle
    }

    fn key(&mut self, v: f64) -> Key {
        self.seq += 1;
        Key(v, self.seq)
    }

    fn issue(&mut self, client: usize) {
        let delayed = self.rng.gen_bool(self.spec.delayed_fraction);
        let sync = self.rng.gen_bool(self.spec.sync_fraction);
        let r = self.reqs.len();
        self.reqs.push(Req { client, start: self.t, delayed, sync, id: None, passivated: false, holds_worker: false });
        self.latencies.push(None);
        if self.free_workers > 0 {
            self.start(r);
        } else {
            self.waiting.push_back(r);
        }
    }

    fn start(&mut self, r: usize) {
        self.free_workers -= 1;
        self.reqs[r].holds_worker = true;
        let mode = if self.reqs[r].sync { Mode::Sync } else { Mode::Async };
        let mut payload = Map::new();
        payload.insert("request".into(), Value::Int(r as i64));
        let envelope = TaskEnvelope::request("approveTask", &format!("sim-{r}"), payload);
        let opts = CreateOptions { callback_address: Some("http://caller.invalid/callback".into()), ..Default::default() };
        match self.manager.create(envelope, mode, opts) {
            Ok(i) => {
                self.reqs[r].id = Some(i.instance_id);
                let k = self.key(self.work + self.spec.service_time_s);
                self.processing.push(Reverse((k, r)));
            }
            Err(_) => self.finish(r, false),
        }
    }

    fn release_worker(&mut self, r: usize) {
        if self.reqs[r].holds_worker {
            self.reqs[r].holds_worker = false;
            self.free_workers += 1;
            if let Some(next) = self.waiting.pop_front() {
                self.start(next);
            }
        }
    }

    fn finish(&mut self, r: usize, ok: bool) {
        if ok {
            self.latencies[r] = Some(self.t - self.reqs[r].start);
        }
        self.release_worker(r);
        let client = self.reqs[r].client;
        if self.t < self.spec.horizon_s {
            self.issue(client);
        }
    }

    fn complete(&mut self, r: usize) {
        let id = self.reqs[r].id.clone().expect("started");
        let ok = self.manager.complete(&id, &TaskEnvelope::response("approveTask", "", Map::new())).is_ok();
        self.finish(r, ok);
    }

    fn processed(&mut self, r: usize) {
        if !self.reqs[r].delayed {
            self.complete(r);
            return;
        }
        let id = self.reqs[r].id.clone().expect("started");
        let _ = self.manager.touch(&id);
        self.idle += 1.0;
        let k = self.key(self.t + self.spec.delay_s);
        self.timed.push(Reverse((k, Timed::Respond(r))));
        if self.spec.passivation && self.spec.idle_threshold_s < self.spec.delay_s {
            let k = self.key(self.t + self.spec.idle_threshold_s);
            self.timed.push(Reverse((k, Timed::Passivate(r))));
        }
    }

    fn passivate(&mut self, r: usize) {
        let id = self.reqs[r].id.clone().expect("started");
        if self.manager.passivate(&id).is_ok() {
            self.reqs[r].passivated = true;
            self.idle -= 1.0;
            if self.reqs[r].sync {
                self.idle += self.spec.parked_weight;
            }
            self.release_worker(r);
        }
    }

    fn respond(&mut self, r: usize) {
        if self.reqs[r].passivated {
            if self.reqs[r].sync {
                self.idle -= self.spec.parked_weight;
            }
        } else {
            self.idle -= 1.0;
        }
        self.complete(r);
    }

    fn advance_to(&mut self, t: f64) {
        let dt = t - self.t;
        if dt > 0.0 {
            self.work += dt / self.slowdown();
            self.live_seconds += dt * self.manager.metrics().live_instances as f64;
            self.t = t;
        }
        self.clock.set(ms(self.t));
    }

    fn run(mut self) -> RunReport {
        for c in 0..self.spec.concurrency {
            self.issue(c);
        }
        loop {
            let live = self.manager.metrics().live_instances;
            self.peak_live_overall = self.peak_live_overall.max(live);
            if self.t >= self.spec.delay_s + self.spec.idle_threshold_s && self.t <= self.spec.horizon_s {
                self.peak_live = self.peak_live.max(live);
            }
            let next_proc = self.processing.peek().map(|Reverse((k, _))| self.t + (k.0 - self.work).max(0.0) * self.slowdown());
            let next_timed = self.timed.peek().map(|Reverse((k, _))| k.0);
            let proc_first = match (next_proc, next_timed) {
                (None, None) => break,
                (Some(p), Some(x)) => p < x,
                (p, _) => p.is_some(),
            };
            match (next_proc, next_timed) {
                (Some(p), _) if proc_first => {
                    let Reverse((k, r)) = self.processing.pop().expect("peeked");
                    self.advance_to(p);
                    self.work = self.work.max(k.0);
                    self.processed(r);
                }
                (_, Some(x)) => {
                    let Reverse((_, ev)) = self.timed.pop().expect("peeked");
                    self.advance_to(x);
                    match ev {
                        Timed::Passivate(r) => self.passivate(r),
                        Timed::Respond(r) => self.respond(r),
                    }
                }
                _ => unreachable!(),
            }
        }
        let fast: Vec<f64> = self.reqs.iter().zip(&self.latencies).filter(|(r, _)| !r.delayed).filter_map(|(_, l)| *l).collect();
        let mut sorted = fast.clone();
        sorted.sort_by(f64::total_cmp);
        let art = if fast.is_empty() { 0.0 } else { fast.iter().sum::<f64>() / fast.len() as f64 };
        let p95 = if sorted.is_empty() { 0.0 } else { sorted[((sorted.len() as f64 * 0.95).ceil() as usize).clamp(1, sorted.len()) - 1] };
        let completed = self.latencies.iter().filter(|l| l.is_some()).count();
        RunReport {
            n: self.spec.concurrency,
            mode: self.spec.mode_label().into(),
            passivation: self.spec.passivation,
            art_s: art,
            p95_s: p95,
            peak_live: self.peak_live,
            peak_live_overall: self.peak_live_overall,
            issued: self.reqs.len(),
            completed,
            faulted: self.reqs.len() - completed,
            delayed: self.reqs.iter().filter(|r| r.delayed).count(),
            live_instance_seconds: self.live_seconds,
            makespan_s: self.t,
            latencies: self.latencies,
        }
    }
}

/// Runs one workload against a fresh in-process manager.
pub fn run(spec: &WorkloadSpec) -> Result<RunReport, SpecError> {
    spec.validate()?;
    let clock = Arc::new(VirtualClock::new(0));
    let cfg = ManagerConfig {
        idle_threshold_ms: ms(spec.idle_threshold_s),
        queue_capacity: usize::MAX,
        instance_deadline_ms: None,
        id_seed: Some(spec.seed),
    };
    let manager = InstanceManager::in_memory(cfg, clock.clone());
    let sim = Sim {
        spec,
        clock,
        manager,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        t: 0.0,
        work: 0.0,
        idle: 0.0,
        seq: 0,
        processing: BinaryHeap::new(),
        timed: BinaryHeap::new(),
        free_workers: spec.workers,
        waiting: VecDeque::new(),
        reqs: Vec::new(),
        latencies: Vec::new(),
        peak_live: 0,
        peak_live_overall: 0,
        live_seconds: 0.0,
    };
    Ok(sim.run())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub n: Vec<usize>,
    pub workload: WorkloadSpec,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { n: vec![100, 500, 1000], workload: WorkloadSpec::default() }
    }
}

pub fn sweep(spec: &SweepSpec) -> Result<Vec<RunReport>, SpecError> {
    spec.n
        .iter()
        .map(|&n| run(&WorkloadSpec { concurrency: n, ..spec.workload.clone() }))
        .collect()
}

pub const CSV_HEADER: &str = "N,mode,passivation,ART_s,p95_s,peak_live";

pub fn to_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{}\n",
            r.n,
            r.mode,
            if r.passivation { "on" } else { "off" },
            r.art_s,
            r.p95_s,
            r.peak_live
        ));
    }
    out
}
