#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;
use muit_client::Client;
use muit_core::instance::{Clock, SystemClock, VirtualClock};
use muit_engine::{serve, DeploymentConfig, Engine, EngineConfig, NotifierKind, RouteConfig};
use parking_lot::Mutex;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub fn core_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel)
}

pub fn read_core(rel: &str) -> String {
    std::fs::read_to_string(core_path(rel)).unwrap()
}

pub fn approval_deployment() -> DeploymentConfig {
    DeploymentConfig {
        name: "TaskApproval".into(),
        source: core_path("corpus/approve_task.muit"),
        wsdl: Some(core_path("fixtures/wsdl/task_approval.wsdl")),
        recipient: None,
    }
}

pub fn delay_deployment() -> DeploymentConfig {
    DeploymentConfig { name: "DelayTask".into(), source: core_path("corpus/delay_task.muit"), wsdl: Some(core_path("fixtures/wsdl/task_approval.wsdl")), recipient: None }
}

pub fn config() -> EngineConfig {
    EngineConfig {
        long_poll_s: 5.0,
        sweep_interval_s: 3600.0,
        callback_backoff_ms: 20,
        deployments: vec![approval_deployment(), delay_deployment()],
        routes: vec![RouteConfig { recipient: "*".into(), notifier: NotifierKind::Log, url: None }],
        ..EngineConfig::default()
    }
}

pub struct Harness {
    pub engine: Arc<Engine>,
    pub client: Client,
    pub base: String,
    stop: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl Harness {
    pub async fn start(cfg: EngineConfig) -> Self {
        Self::with_clock(cfg, Arc::new(SystemClock)).await
    }

    pub async fn virtual_time(cfg: EngineConfig, start_ms: u64) -> (Self, Arc<VirtualClock>) {
        let clock = Arc::new(VirtualClock::new(start_ms));
        (Self::with_clock(cfg, clock.clone()).await, clock)
    }

    pub async fn with_clock(cfg: EngineConfig, clock: Arc<dyn Clock>) -> Self {
        let engine = Arc::new(Engine::new(cfg, clock).expect("engine starts"));
        Self::around(engine).await
    }

    pub async fn around(engine: Arc<Engine>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(serve(engine.clone(), listener, async move {
            let _ = rx.await;
        }));
        Harness { engine, client: Client::new(base.clone()), base, stop: Some(tx), task: Some(task) }
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.task.take() {
            t.await.unwrap().unwrap();
        }
    }
}

#[derive(Debug, Clone)]
pub struct Hit {
    pub headers: HeaderMap,
    pub body: String,
}

/// Records every POST it receives. The first `failures` answers are 500.
#[derive(Clone)]
pub struct Sink {
    pub hits: Arc<Mutex<Vec<Hit>>>,
    failures: Arc<Mutex<u32>>,
    pub url: String,
}

impl Sink {
    pub async fn start(failures: u32) -> Sink {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let url = format!("http://{}/hook", listener.local_addr().unwrap());
        let sink = Sink { hits: Arc::default(), failures: Arc::new(Mutex::new(failures)), url };
        let app = Router::new().route("/hook", post(record)).with_state(sink.clone());
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        sink
    }

    pub fn bodies(&self) -> Vec<String> {
        self.hits.lock().iter().map(|h| h.body.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.hits.lock().len()
    }
}

async fn record(State(sink): State<Sink>, headers: HeaderMap, body: Bytes) -> StatusCode {
    sink.hits.lock().push(Hit { headers, body: String::from_utf8_lossy(&body).into_owned() });
    let mut f = sink.failures.lock();
    if *f > 0 {
        *f -= 1;
        StatusCode::INTERNAL_SERVER_ERROR
    } else {
        StatusCode::OK
    }
}

const TASK: &str = "<tns:t>\
<tns:task_name>Employee Travel Fee Approval</tns:task_name>\
<tns:status>waiting for approval</tns:status>\
<tns:createDate>2014-07-21T09:30:00</tns:createDate>\
<tns:dueDate>2014-07-22</tns:dueDate>\
<tns:task_review>Hotel 3 nights</tns:task_review>\
<tns:role><tns:role>manager</tns:role></tns:role>\
</tns:t>";

fn envelope(cid: &str, reply_to: Option<&str>, user: Option<&str>, body: &str) -> String {
    let mut header = String::new();
    if !cid.is_empty() {
        header.push_str(&format!("<muit:CorrelationId>{cid}</muit:CorrelationId>"));
    }
    if let Some(u) = user {
        header.push_str(&format!("<muit:AssignedUser>{u}</muit:AssignedUser>"));
    }
    if let Some(r) = reply_to {
        header.push_str(&format!("<wsa:ReplyTo><wsa:Address>{r}</wsa:Address></wsa:ReplyTo>"));
    }
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<soapenv:Envelope xmlns:soapenv=\"http://schemas.xmlsoap.org/soap/envelope/\" xmlns:tns=\"urn:muit:task\" xmlns:muit=\"urn:muit:bridge\" xmlns:wsa=\"http://www.w3.org/2005/08/addressing\"><soapenv:Header>{header}</soapenv:Header><soapenv:Body>{body}</soapenv:Body></soapenv:Envelope>"
    )
}

pub fn approve(cid: &str, reply_to: Option<&str>) -> String {
    envelope(cid, reply_to, None, &format!("<tns:approveTask>{TASK}</tns:approveTask>"))
}

pub fn approve_for(cid: &str, user: &str) -> String {
    envelope(cid, None, Some(user), &format!("<tns:approveTask>{TASK}</tns:approveTask>"))
}

pub fn delay(cid: &str, reply_to: Option<&str>, days: i64, reason: &str) -> String {
    envelope(cid, reply_to, None, &format!("<tns:delayTask>{TASK}<tns:days>{days}</tns:days><tns:reason>{reason}</tns:reason></tns:delayTask>"))
}

/// Text of the first `<...name>` element in `xml`.
pub fn element_text(xml: &str, name: &str) -> Option<String> {
    let open = xml.find(&format!(":{name}>")).or_else(|| xml.find(&format!("<{name}>")))?;
    let start = open + xml[open..].find('>')? + 1;
    let end = start + xml[start..].find("</")?;
    Some(xml[start..end].to_string())
}
