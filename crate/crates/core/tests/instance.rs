use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier};

use muit_core::bridge::TaskEnvelope;
use muit_core::instance::*;
use muit_core::value::{Map, Value};
use proptest::prelude::*;

const SEC: u64 = 1000;

fn request(op: &str, cid: &str) -> TaskEnvelope {
    let mut p = Map::new();
    p.insert("taskname".into(), Value::str("Travel reimbursement"));
    TaskEnvelope::request(op, cid, p)
}

fn result(op: &str) -> TaskEnvelope {
    let mut p = Map::new();
    p.insert("status".into(), Value::str("approved"));
    TaskEnvelope::response(op, "", p)
}

fn async_opts() -> CreateOptions {
    CreateOptions { callback_address: Some("http://bpel.example/callback".into()), assigned_user: Some("manager".into()), service: Some("TaskApproval".into()), ..Default::default() }
}

fn manager(cfg: ManagerConfig) -> (Arc<VirtualClock>, InstanceManager) {
    let clock = Arc::new(VirtualClock::new(1_000_000));
    let m = InstanceManager::in_memory(ManagerConfig { id_seed: Some(1), ..cfg }, clock.clone());
    (clock, m)
}

#[test]
fn edge_set_is_exactly_the_lifecycle() {
    use State::*;
    let allowed: BTreeSet<(State, State)> = [
        (Created, AwaitingUser),
        (AwaitingUser, PassivatedAsync),
        (AwaitingUser, PassivatedSync),
        (AwaitingUser, Completed),
        (AwaitingUser, Failed),
        (AwaitingUser, TimedOut),
        (PassivatedAsync, Restoring),
        (PassivatedSync, Restoring),
        (Restoring, Completed),
        (Restoring, Failed),
    ]
    .into_iter()
    .collect();
    for a in State::ALL {
        for b in State::ALL {
            assert_eq!(a.can_become(b), allowed.contains(&(a, b)), "{a:?} -> {b:?}");
        }
    }
}

#[test]
fn async_create_keeps_the_callback() {
    let (_, m) = manager(ManagerConfig::default());
    let i = m.create(request("approveTask", "c1"), Mode::Async, async_opts()).unwrap();
    assert_eq!(i.state, State::AwaitingUser);
    assert_eq!(i.callback_address.as_deref(), Some("http://bpel.example/callback"));
    assert_eq!(i.instance_id.len(), 32);
    assert_eq!(m.pending(), vec![i.instance_id.clone()]);
    assert_eq!(m.history(&i.instance_id).unwrap(), vec![State::Created, State::AwaitingUser]);
    assert_eq!(m.create(request("approveTask", "c2"), Mode::Async, CreateOptions::default()), Err(ManagerError::MissingCallback));
    let bad = CreateOptions { callback_address: Some("not a url".into()), ..Default::default() };
    assert!(matches!(m.create(request("approveTask", "c3"), Mode::Async, bad), Err(ManagerError::InvalidCallback(_))));
    let sync = m.create(request("approveTask", "c4"), Mode::Sync, CreateOptions::default()).unwrap();
    assert!(sync.resume_token.is_some());
    assert!(sync.callback_address.is_none());
}

#[test]
fn creating_past_capacity_is_backpressure() {
    let (_, m) = manager(ManagerConfig { queue_capacity: 3, ..Default::default() });
    for i in 0..3 {
        m.create(request("approveTask", &format!("c{i}")), Mode::Sync, CreateOptions::default()).unwrap();
    }
    let before = m.states();
    assert_eq!(m.create(request("approveTask", "c4"), Mode::Sync, CreateOptions::default()), Err(ManagerError::Backpressure { capacity: 3 }));
    assert_eq!(m.states(), before);
    assert_eq!(m.metrics().rejected, 1);
}

#[test]
fn passivation_needs_the_idle_threshold() {
    let (clock, m) = manager(ManagerConfig { idle_threshold_ms: 60 * SEC, ..Default::default() });
    let id = m.create(request("approveTask", "c1"), Mode::Async, async_opts()).unwrap().instance_id;
    clock.advance(59 * SEC);
    assert!(matches!(m.passivate(&id), Err(ManagerError::NotIdle { .. })));
    m.touch(&id).unwrap();
    clock.advance(59 * SEC);
    assert!(matches!(m.passivate(&id), Err(ManagerError::NotIdle { .. })));
    clock.advance(2 * SEC);
    let live = m.metrics().live_instances;
    m.passivate(&id).unwrap();
    assert_eq!(m.state(&id), Some(State::PassivatedAsync));
    assert_eq!(m.metrics().live_instances, live - 1);
    assert_eq!(m.metrics().passivated_instances, 1);
    assert_eq!(m.queue_depth(), 0);
}

#[test]
fn passivating_a_finished_instance_is_rejected() {
    let (clock, m) = manager(ManagerConfig { idle_threshold_ms: 0, ..Default::default() });
    let id = m.create(request("approveTask", "c1"), Mode::Async, async_opts()).unwrap().instance_id;
    m.complete(&id, &result("approveTask")).unwrap();
    clock.advance(SEC);
    let hist = m.history(&id).unwrap();
    assert!(matches!(m.passivate(&id), Err(ManagerError::InvalidTransition { from: State::Completed, .. })));
    assert_eq!(m.history(&id).unwrap(), hist);
}

#[test]
fn sync_completion_answers_the_parked_caller_once() {
    let (_, m) = manager(ManagerConfig::default());
    let i = m.create(request("approveTask", "cid-9"), Mode::Sync, CreateOptions::default()).unwrap();
    let Completion::Delivered(d) = m.complete(&i.instance_id, &result("approveTask")).unwrap() else { panic!() };
    assert_eq!(d.target, DeliveryTarget::Parked { token: i.resume_token.clone().unwrap() });
    let Outcome::Response { envelope } = &d.outcome else { panic!() };
    assert_eq!(envelope.correlation_id, "cid-9");
    assert_eq!(envelope.payload.get_path("status"), Some(&Value::str("approved")));
    assert_eq!(m.complete(&i.instance_id, &result("approveTask")).unwrap(), Completion::AlreadyCompleted { state: State::Completed });
    assert_eq!(m.metrics().deliveries, 1);
    assert_eq!(m.metrics().completed, 1);
}

#[test]
fn results_for_another_operation_are_rejected() {
    let (_, m) = manager(ManagerConfig::default());
    let id = m.create(request("approveTask", "c"), Mode::Sync, CreateOptions::default()).unwrap().instance_id;
    assert_eq!(
        m.complete(&id, &result("delayTask")),
        Err(ManagerError::ResultMismatch { expected: "approveTask".into(), got: "delayTask".into() })
    );
    assert_eq!(m.state(&id), Some(State::AwaitingUser));
    assert!(matches!(m.complete("nope", &result("approveTask")), Err(ManagerError::NotFound(_))));
}

#[test]
fn passivated_async_completion_restores_and_calls_back() {
    let store = Arc::new(MemoryStore::new());
    let clock = Arc::new(VirtualClock::new(0));
    let m = InstanceManager::open(ManagerConfig { idle_threshold_ms: 0, id_seed: Some(3), ..Default::default() }, clock.clone(), store.clone()).unwrap();
    let id = m.create(request("approveTask", "c"), Mode::Async, async_opts()).unwrap().instance_id;
    m.passivate(&id).unwrap();
    let stored = store.get(&id).unwrap().unwrap();
    assert_eq!(stored.instance.state, State::PassivatedAsync);
    assert_eq!(stored.v, CONTINUATION_VERSION);
    let Completion::Delivered(d) = m.complete(&id, &result("approveTask")).unwrap() else { panic!() };
    assert_eq!(d.target, DeliveryTarget::Callback { url: "http://bpel.example/callback".into() });
    assert_eq!(m.history(&id).unwrap(), vec![State::Created, State::AwaitingUser, State::PassivatedAsync, State::Restoring, State::Completed]);
    assert!(store.all().unwrap().iter().all(|r| !r.instance.state.is_passivated()), "continuation consumed");
    assert_eq!(m.metrics().passivated_instances, 0);
}

/// Fails every other write.
struct FlakyStore {
    inner: MemoryStore,
    writes: AtomicUsize,
}

impl InstanceStore for FlakyStore {
    fn put(&self, record: &StoredInstance) -> Result<(), StoreError> {
        if self.writes.fetch_add(1, Ordering::SeqCst) % 2 == 1 {
            return Err(StoreError::Io(std::io::Error::other("injected")));
        }
        self.inner.put(record)
    }
    fn get(&self, id: &str) -> Result<Option<StoredInstance>, StoreError> {
        self.inner.get(id)
    }
    fn remove(&self, id: &str) -> Result<(), StoreError> {
        self.inner.remove(id)
    }
    fn all(&self) -> Result<Vec<StoredInstance>, StoreError> {
        self.inner.all()
    }
}

#[test]
fn retried_completion_under_store_faults_delivers_once() {
    let store = Arc::new(FlakyStore { inner: MemoryStore::new(), writes: AtomicUsize::new(0) });
    let clock = Arc::new(VirtualClock::new(0));
    let m = InstanceManager::open(ManagerConfig { idle_threshold_ms: 0, id_seed: Some(5), ..Default::default() }, clock, store).unwrap();
    let mut delivered = 0;
    for n in 0..50 {
        let id = m.create(request("approveTask", &format!("c{n}")), Mode::Async, async_opts()).unwrap().instance_id;
        while m.passivate(&id).is_err() {}
        let mut attempts = 0;
        loop {
            attempts += 1;
            match m.complete(&id, &result("approveTask")) {
                Ok(Completion::Delivered(_)) => delivered += 1,
                Ok(Completion::AlreadyCompleted { .. }) => break,
                Err(ManagerError::Store(_)) => assert_eq!(m.state(&id), Some(State::PassivatedAsync)),
                Err(e) => panic!("{e}"),
            }
            assert!(attempts < 10);
        }
        assert!(legal_history(&m.history(&id).unwrap()));
    }
    assert_eq!(delivered, 50);
    assert_eq!(m.metrics().deliveries, 50);
}

#[test]
fn expiry_times_out_only_instances_past_their_deadline() {
    let (clock, m) = manager(ManagerConfig::default());
    let short = CreateOptions { deadline_ms: Some(60 * SEC), ..async_opts() };
    let id = m.create(request("approveTask", "a"), Mode::Async, short).unwrap().instance_id;
    let none = m.create(request("approveTask", "b"), Mode::Async, async_opts()).unwrap().instance_id;
    clock.advance(61 * SEC);
    let cfg_passivate = m.passivate(&none);
    assert!(cfg_passivate.is_ok() || matches!(cfg_passivate, Err(ManagerError::NotIdle { .. })));
    let expired = m.expire(clock.now_ms());
    assert_eq!(expired.len(), 1);
    assert_eq!(expired[0].instance_id, id);
    assert_eq!(m.state(&id), Some(State::TimedOut));
    assert!(matches!(expired[0].delivery.outcome, Outcome::Fault { .. }));
    assert_ne!(m.state(&none), Some(State::TimedOut));
    assert!(m.expire(clock.now_ms() + 1_000_000).is_empty());
}

#[test]
fn a_fifth_of_a_thousand_expire() {
    let (clock, m) = manager(ManagerConfig::default());
    let mut due = BTreeSet::new();
    for i in 0..1000 {
        let deadline = if i % 5 == 0 { 30 * SEC } else { 3600 * SEC };
        let opts = CreateOptions { deadline_ms: Some(deadline), ..async_opts() };
        let id = m.create(request("approveTask", &format!("c{i}")), Mode::Async, opts).unwrap().instance_id;
        if i % 5 == 0 {
            due.insert(id);
        }
    }
    clock.advance(61 * SEC);
    let expired: BTreeSet<String> = m.expire(clock.now_ms()).into_iter().map(|e| e.instance_id).collect();
    assert_eq!(expired.len(), 200);
    assert_eq!(expired, due);
    assert_eq!(m.metrics().timed_out, 200);
    assert!(m.expire(clock.now_ms()).is_empty());
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    Complete,
    Expire,
    Passivate,
    Fail,
    Touch,
}

const EVENTS: [Ev; 5] = [Ev::Complete, Ev::Expire, Ev::Passivate, Ev::Fail, Ev::Touch];

fn apply(m: &InstanceManager, id: &str, ev: Ev, now: u64) -> usize {
    match ev {
        Ev::Complete => matches!(m.complete(id, &result("approveTask")), Ok(Completion::Delivered(_))) as usize,
        Ev::Fail => matches!(m.fail(id, "Server", "rejected"), Ok(Completion::Delivered(_))) as usize,
        Ev::Expire => m.expire(now).len(),
        Ev::Passivate => {
            let _ = m.passivate(id);
            0
        }
        Ev::Touch => {
            let _ = m.touch(id);
            0
        }
    }
}

fn sequences(len: usize) -> Vec<Vec<Ev>> {
    if len == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for s in sequences(len - 1) {
        for e in EVENTS {
            let mut t = s.clone();
            t.push(e);
            out.push(t);
        }
    }
    out
}

#[test]
fn every_interleaving_of_up_to_four_events_delivers_exactly_once() {
    let mut checked = 0;
    for len in 1..=4 {
        for seq in sequences(len) {
            for mode in [Mode::Sync, Mode::Async] {
                for deadline in [None, Some(10 * SEC)] {
                    let (clock, m) = manager(ManagerConfig { idle_threshold_ms: 5 * SEC, ..Default::default() });
                    let opts = CreateOptions { deadline_ms: deadline, ..async_opts() };
                    let id = m.create(request("approveTask", "c"), mode, opts).unwrap().instance_id;
                    clock.advance(20 * SEC);
                    let delivered: usize = seq.iter().map(|e| apply(&m, &id, *e, clock.now_ms())).sum();
                    let state = m.state(&id).unwrap();
                    let history = m.history(&id).unwrap();
                    assert!(legal_history(&history), "{seq:?} {mode:?}: {history:?}");
                    assert_eq!(delivered, state.is_terminal() as usize, "{seq:?} {mode:?} {deadline:?}: {state:?}");
                    assert_eq!(m.metrics().deliveries as usize, delivered);
                    assert_eq!(history.iter().filter(|s| s.is_terminal()).count(), delivered);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 4 * (5 + 25 + 125 + 625));
}

#[test]
fn racing_threads_deliver_exactly_once() {
    for round in 0..200 {
        let clock = Arc::new(VirtualClock::new(0));
        let m = Arc::new(InstanceManager::in_memory(
            ManagerConfig { idle_threshold_ms: 0, id_seed: Some(round), instance_deadline_ms: Some(1), ..Default::default() },
            clock.clone(),
        ));
        let mode = if round % 2 == 0 { Mode::Sync } else { Mode::Async };
        let id = m.create(request("approveTask", "c"), mode, async_opts()).unwrap().instance_id;
        clock.advance(10);
        let events = [EVENTS[(round % 5) as usize], Ev::Complete, Ev::Passivate, Ev::Expire];
        let barrier = Arc::new(Barrier::new(events.len()));
        let handles: Vec<_> = events
            .into_iter()
            .map(|ev| {
                let (m, id, barrier) = (m.clone(), id.clone(), barrier.clone());
                std::thread::spawn(move || {
                    barrier.wait();
                    apply(&m, &id, ev, 10)
                })
            })
            .collect();
        let delivered: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(delivered, 1, "round {round}");
        assert!(legal_history(&m.history(&id).unwrap()));
    }
}

#[test]
fn crash_between_passivate_and_complete_loses_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instances.log");
    let clock = Arc::new(VirtualClock::new(0));
    let cfg = ManagerConfig { idle_threshold_ms: 0, id_seed: Some(11), ..Default::default() };
    let mut passivated = Vec::new();
    let mut finished = Vec::new();
    {
        let m = InstanceManager::open(cfg.clone(), clock.clone(), Arc::new(FileStore::open(&path).unwrap())).unwrap();
        for i in 0..60 {
            let opts = CreateOptions { callback_address: Some(format!("http://bpel.example/cb/{i}")), ..Default::default() };
            let id = m.create(request("approveTask", &format!("c{i}")), Mode::Async, opts).unwrap().instance_id;
            if i % 3 != 0 {
                m.passivate(&id).unwrap();
                passivated.push((id, i));
            }
        }
        for (id, _) in passivated.drain(..8).collect::<Vec<_>>() {
            m.complete(&id, &result("approveTask")).unwrap();
            finished.push(id);
        }
        // dropped without any shutdown step
    }
    // a torn write at the tail, as from a crash mid-append
    std::fs::OpenOptions::new().append(true).open(&path).and_then(|mut f| std::io::Write::write_all(&mut f, b"{\"op\":\"put\",\"rec")).unwrap();
    let m = InstanceManager::open(cfg, clock, Arc::new(FileStore::open(&path).unwrap())).unwrap();
    assert_eq!(m.metrics().passivated_instances as usize, passivated.len());
    for (id, i) in &passivated {
        assert_eq!(m.state(id), Some(State::PassivatedAsync));
        let Completion::Delivered(d) = m.complete(id, &result("approveTask")).unwrap() else { panic!() };
        assert_eq!(d.target, DeliveryTarget::Callback { url: format!("http://bpel.example/cb/{i}") });
        let Outcome::Response { envelope } = d.outcome else { panic!() };
        assert_eq!(envelope.correlation_id, format!("c{i}"));
    }
    for id in &finished {
        assert_eq!(m.complete(id, &result("approveTask")).unwrap(), Completion::AlreadyCompleted { state: State::Completed });
    }
}

#[test]
fn file_store_reads_back_and_compacts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.log");
    let store = FileStore::open(&path).unwrap();
    let clock = Arc::new(VirtualClock::new(0));
    let m = InstanceManager::in_memory(ManagerConfig { id_seed: Some(2), ..Default::default() }, clock);
    let inst = m.create(request("approveTask", "c"), Mode::Async, async_opts()).unwrap();
    for round in 0..200u64 {
        let mut r = inst.clone();
        r.instance_id = format!("id{}", round % 10);
        r.last_activity = round;
        let rec = StoredInstance::new(r);
        store.put(&rec).unwrap();
        assert_eq!(store.get(&rec.instance.instance_id).unwrap(), Some(rec));
    }
    store.remove("id3").unwrap();
    assert_eq!(store.all().unwrap().len(), 9);
    let lines = std::fs::read_to_string(&path).unwrap().lines().count();
    assert!(lines < 150, "log not compacted: {lines} lines");
    drop(store);
    let reopened = FileStore::open(&path).unwrap();
    assert_eq!(reopened.all().unwrap().len(), 9);
    assert_eq!(reopened.get("id7").unwrap().unwrap().instance.last_activity, 197);
}

#[test]
fn metrics_balance_under_parallel_load() {
    let clock = Arc::new(VirtualClock::new(0));
    let m = Arc::new(InstanceManager::in_memory(ManagerConfig { idle_threshold_ms: 0, ..Default::default() }, clock));
    let handles: Vec<_> = (0..8)
        .map(|t| {
            let m = m.clone();
            std::thread::spawn(move || {
                for i in 0..250 {
                    let mode = if i % 2 == 0 { Mode::Sync } else { Mode::Async };
                    let id = m.create(request("approveTask", &format!("{t}-{i}")), mode, async_opts()).unwrap().instance_id;
                    if i % 3 == 0 {
                        m.passivate(&id).unwrap();
                    }
                    if i % 4 != 0 {
                        m.complete(&id, &result("approveTask")).unwrap();
                    }
                }
            })
        })
        .collect();
    handles.into_iter().for_each(|h| h.join().unwrap());
    let x = m.metrics();
    assert_eq!(x.created, 2000);
    let completes = 8 * (0..250).filter(|i| i % 4 != 0).count() as u64;
    assert_eq!(x.completed, completes);
    assert_eq!(x.deliveries, completes);
    assert_eq!(x.live_instances + x.passivated_instances, 2000 - completes);
    assert_eq!(x.queue_depth, x.live_instances);
}

fn arb_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        "[a-zA-Z0-9 <>&\"']{0,12}".prop_map(Value::Str),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
            prop::collection::vec(("[a-z]{1,6}", inner), 0..4).prop_map(|kv| Value::Map(kv.into_iter().collect())),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn passivation_round_trip_is_observationally_equal(
        payload in prop::collection::vec(("[a-z]{1,8}", arb_value()), 0..5),
        is_async in any::<bool>(),
        user in prop::option::of("[a-z]{1,10}"),
        cid in "[a-z0-9-]{0,20}",
        op in "[a-z][A-Za-z]{0,10}",
    ) {
        let store = Arc::new(MemoryStore::new());
        let clock = Arc::new(VirtualClock::new(0));
        let m = InstanceManager::open(ManagerConfig { idle_threshold_ms: 0, id_seed: Some(9), ..Default::default() }, clock, store.clone()).unwrap();
        let req = TaskEnvelope::request(&op, &cid, payload.into_iter().collect());
        let mode = if is_async { Mode::Async } else { Mode::Sync };
        let opts = CreateOptions { assigned_user: user, ..async_opts() };
        let before = m.create(req, mode, opts).unwrap();
        m.passivate(&before.instance_id).unwrap();
        let after = m.get(&before.instance_id).unwrap();
        prop_assert_eq!(&after.request, &before.request);
        prop_assert_eq!(after.mode, before.mode);
        prop_assert_eq!(&after.callback_address, &before.callback_address);
        prop_assert_eq!(&after.assigned_user, &before.assigned_user);
        prop_assert_eq!(&after.service, &before.service);
        prop_assert_eq!(&after.resume_token, &before.resume_token);
        let text = store.get(&before.instance_id).unwrap().unwrap().to_json();
        let parsed = StoredInstance::from_json(&text).unwrap();
        prop_assert_eq!(parsed.instance.request, before.request);
    }
}

