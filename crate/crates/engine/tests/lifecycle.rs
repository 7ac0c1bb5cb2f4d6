mod common;

use std::sync::Arc;

use common::*;
use muit_client::SoapAnswer;
use muit_core::instance::{State, VirtualClock};
use muit_core::wire::ResultStatus;
use muit_engine::notify::{DispatchStatus, Notification};
use muit_engine::{Engine, EngineConfig, NotifierKind, RouteConfig};
use serde_json::json;

fn accepted(a: SoapAnswer) -> String {
    match a {
        SoapAnswer::Accepted { instance, .. } => instance,
        other => panic!("{other:?}"),
    }
}

fn webhook(recipient: &str, url: &str) -> RouteConfig {
    RouteConfig { recipient: recipient.into(), notifier: NotifierKind::Webhook, url: Some(url.into()) }
}

#[tokio::test]
async fn webhook_notification_carries_a_working_deep_link() {
    let hook = Sink::start(0).await;
    let cb = Sink::start(0).await;
    let h = Harness::start(EngineConfig { routes: vec![webhook("manager", &hook.url)], ..config() }).await;
    let a = accepted(h.client.send_soap("TaskApproval", &approve("n-1", Some(&cb.url))).await.unwrap());
    let b = accepted(h.client.send_soap("TaskApproval", &approve("n-2", Some(&cb.url))).await.unwrap());
    let sent: Vec<Notification> = hook.bodies().iter().map(|b| serde_json::from_str(b).unwrap()).collect();
    assert_eq!(sent.len(), 2);
    assert_eq!(sent[0].instance_id, a);
    assert_eq!(sent[0].recipient, "manager");
    assert_eq!(sent[0].title, "Employee Travel Fee Approval");
    assert_ne!(sent[0].deep_link, sent[1].deep_link);
    for (n, id) in sent.iter().zip([&a, &b]) {
        assert!(n.deep_link.starts_with(&h.base), "{}", n.deep_link);
        assert!(n.deep_link.ends_with("#approveTask"));
        let url = n.deep_link.split('#').next().unwrap();
        let page = reqwest::get(url).await.unwrap();
        assert_eq!(page.status().as_u16(), 200);
        assert!(page.text().await.unwrap().contains(&format!("\"instance\":\"{id}\"")));
    }
    assert_eq!(h.engine.metrics().notifications.sent, 2);
    h.stop().await;
}

#[tokio::test]
async fn assigned_user_header_wins_and_unrouted_users_are_undeliverable() {
    let hook = Sink::start(0).await;
    let h = Harness::start(EngineConfig { routes: vec![webhook("manager", &hook.url)], ..config() }).await;
    let client = h.client.clone();
    let call = tokio::spawn(async move { client.send_soap("TaskApproval", &approve_for("n-3", "bob")).await });
    let mut id = None;
    for _ in 0..500 {
        if let Some(k) = h.engine.manager().states().into_keys().next() {
            id = Some(k);
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    }
    let id = id.unwrap();
    assert_eq!(h.engine.manager().get(&id).unwrap().assigned_user.as_deref(), Some("bob"));
    h.client.submit_result(&id, &json!({"status": "approved"})).await.unwrap();
    call.await.unwrap().unwrap();
    assert_eq!(hook.len(), 0);
    let records = h.engine.notifications();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].status, DispatchStatus::Undeliverable);
    assert_eq!(h.engine.metrics().notifications.undeliverable, 1);
    h.stop().await;
}

#[tokio::test]
async fn failing_webhook_does_not_block_the_task() {
    let hook = Sink::start(10).await;
    let cb = Sink::start(0).await;
    let h = Harness::start(EngineConfig { routes: vec![webhook("*", &hook.url)], ..config() }).await;
    let id = accepted(h.client.send_soap("TaskApproval", &approve("n-4", Some(&cb.url))).await.unwrap());
    assert_eq!(h.engine.metrics().notifications.failed, 1);
    assert_eq!(h.client.task_ui(&id).await.unwrap().status, 200);
    h.stop().await;
}

#[tokio::test]
async fn idle_instances_passivate_and_viewing_them_does_not_restore() {
    let cb = Sink::start(0).await;
    let (h, clock) = Harness::virtual_time(EngineConfig { idle_threshold_s: 60.0, ..config() }, 1_000_000).await;
    let id = accepted(h.client.send_soap("TaskApproval", &approve("p-1", Some(&cb.url))).await.unwrap());
    clock.advance(30_000);
    h.engine.tick();
    assert_eq!(h.engine.manager().state(&id), Some(State::AwaitingUser));
    clock.advance(31_000);
    h.engine.tick();
    assert_eq!(h.engine.manager().state(&id), Some(State::PassivatedAsync));
    let m = h.client.metrics().await.unwrap();
    assert_eq!((m.live_instances, m.passivated_instances), (0, 1));

    let page = h.client.task_ui(&id).await.unwrap();
    assert_eq!(page.status, 200);
    assert!(page.html.contains("Employee Travel Fee Approval"));
    assert_eq!(h.engine.manager().state(&id), Some(State::PassivatedAsync));

    let ack = h.client.submit_result(&id, &json!({"status": "approved"})).await.unwrap();
    assert_eq!(ack.status, ResultStatus::Completed);
    let history = h.engine.manager().history(&id).unwrap();
    assert!(history.contains(&State::Restoring), "{history:?}");
    h.engine.drain().await;
    assert_eq!(cb.len(), 1);
    h.stop().await;
}

#[tokio::test]
async fn viewing_a_page_keeps_the_instance_resident() {
    let cb = Sink::start(0).await;
    let (h, clock) = Harness::virtual_time(EngineConfig { idle_threshold_s: 60.0, ..config() }, 0).await;
    let id = accepted(h.client.send_soap("TaskApproval", &approve("p-2", Some(&cb.url))).await.unwrap());
    clock.advance(50_000);
    h.client.task_ui(&id).await.unwrap();
    clock.advance(50_000);
    h.engine.tick();
    assert_eq!(h.engine.manager().state(&id), Some(State::AwaitingUser));
    h.stop().await;
}

#[tokio::test]
async fn deadline_expiry_sends_a_fault_and_ends_the_task() {
    let cb = Sink::start(0).await;
    let (h, clock) = Harness::virtual_time(EngineConfig { instance_deadline_s: Some(120.0), idle_threshold_s: 600.0, ..config() }, 0).await;
    let id = accepted(h.client.send_soap("TaskApproval", &approve("e-1", Some(&cb.url))).await.unwrap());
    clock.advance(121_000);
    h.engine.tick();
    h.engine.drain().await;
    assert_eq!(h.engine.manager().state(&id), Some(State::TimedOut));
    let body = cb.bodies().remove(0);
    assert!(body.contains("Fault"), "{body}");
    let ack = h.client.submit_result(&id, &json!({"status": "approved"})).await.unwrap();
    assert_eq!((ack.status, ack.state), (ResultStatus::AlreadyCompleted, State::TimedOut));
    assert_eq!(h.client.task_ui(&id).await.unwrap().status, 410);
    assert_eq!(cb.len(), 1);
    assert_eq!(h.engine.metrics().timed_out, 1);
    h.stop().await;
}

#[tokio::test]
async fn passivated_instance_past_its_deadline_fails() {
    let cb = Sink::start(0).await;
    let (h, clock) = Harness::virtual_time(EngineConfig { instance_deadline_s: Some(120.0), idle_threshold_s: 60.0, ..config() }, 0).await;
    let id = accepted(h.client.send_soap("TaskApproval", &approve("e-2", Some(&cb.url))).await.unwrap());
    clock.advance(121_000);
    h.engine.tick();
    h.engine.drain().await;
    assert_eq!(h.engine.manager().history(&id).unwrap(), vec![State::Created, State::AwaitingUser, State::PassivatedAsync, State::Restoring, State::Failed]);
    assert_eq!(cb.len(), 1);
    h.stop().await;
}

#[tokio::test]
async fn file_store_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cb = Sink::start(0).await;
    let cfg = EngineConfig { store_path: Some(dir.path().join("instances.log")), long_poll_s: 0.2, ..config() };

    let clock = Arc::new(VirtualClock::new(0));
    let h = Harness::with_clock(cfg.clone(), clock.clone()).await;
    let async_id = accepted(h.client.send_soap("TaskApproval", &approve("r-1", Some(&cb.url))).await.unwrap());
    let SoapAnswer::Pending { instance: sync_id, token } = h.client.send_soap("TaskApproval", &approve("r-2", None)).await.unwrap() else {
        panic!("expected a resume token")
    };
    let done = accepted(h.client.send_soap("TaskApproval", &approve("r-3", Some(&cb.url))).await.unwrap());
    h.client.submit_result(&done, &json!({"status": "approved"})).await.unwrap();
    clock.advance(61_000);
    h.engine.tick();
    let resident = accepted(h.client.send_soap("TaskApproval", &approve("r-4", Some(&cb.url))).await.unwrap());
    h.engine.drain().await;
    h.stop().await;

    let h = Harness::with_clock(cfg, clock.clone()).await;
    assert_eq!(h.engine.manager().state(&done), Some(State::Completed));
    assert_eq!(h.engine.manager().state(&async_id), Some(State::PassivatedAsync));
    assert_eq!(h.engine.manager().state(&sync_id), Some(State::PassivatedSync));
    // Only passivated and finished instances are written to the store.
    assert_eq!(h.engine.manager().state(&resident), None);
    assert_eq!(h.client.task_ui(&async_id).await.unwrap().status, 200);
    h.client.submit_result(&async_id, &json!({"status": "approved"})).await.unwrap();
    h.engine.drain().await;
    assert_eq!(cb.len(), 2);

    assert!(matches!(h.client.resume("TaskApproval", &token).await.unwrap(), SoapAnswer::Pending { .. }));
    h.client.submit_result(&sync_id, &json!({"status": "approved"})).await.unwrap();
    match h.client.resume("TaskApproval", &token).await.unwrap() {
        SoapAnswer::Answered { status, body, .. } => {
            assert_eq!(status, 200);
            assert_eq!(element_text(&body, "CorrelationId").as_deref(), Some("r-2"));
        }
        other => panic!("{other:?}"),
    }
    h.stop().await;
}

#[tokio::test]
async fn sync_outcome_reached_while_down_is_gone_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = EngineConfig { store_path: Some(dir.path().join("instances.log")), long_poll_s: 0.2, ..config() };
    let clock = Arc::new(VirtualClock::new(0));
    let h = Harness::with_clock(cfg.clone(), clock.clone()).await;
    let SoapAnswer::Pending { instance, token } = h.client.send_soap("TaskApproval", &approve("g-1", None)).await.unwrap() else { panic!() };
    clock.advance(61_000);
    h.engine.tick();
    h.stop().await;

    // Finish the task without a server, as a second process would.
    let offline = Engine::new(cfg.clone(), Arc::new(muit_core::instance::SystemClock)).unwrap();
    offline.submit_result(&instance, br#"{"status":"approved"}"#).await.unwrap();
    drop(offline);

    let h = Harness::start(cfg).await;
    match h.client.resume("TaskApproval", &token).await.unwrap() {
        SoapAnswer::Answered { status, .. } => assert_eq!(status, 410),
        other => panic!("{other:?}"),
    }
    h.stop().await;
}
