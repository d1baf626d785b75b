#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::*;
use homeviz_core::{DeviceIdentity, IdentityResolver, IngestReport, NodeAnalytics, StoreConfig, TrafficStore};
use homeviz_server::{router, AppState};
use http_body_util::BodyExt;
use tower::ServiceExt;

fn state(dir: &std::path::Path, max_bytes: Option<u64>) -> AppState {
    let config = StoreConfig {
        max_bytes,
        ..Default::default()
    };
    let store = TrafficStore::open(dir, IdentityResolver::bundled(test_lan()), config).unwrap();
    AppState::new(Arc::new(store))
}

async fn call(state: &AppState, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn ingest(state: &AppState, bytes: Vec<u8>) -> (StatusCode, serde_json::Value) {
    call(state, Request::post("/ingest").body(Body::from(bytes)).unwrap()).await
}

async fn get(state: &AppState, uri: &str) -> (StatusCode, serde_json::Value) {
    call(state, Request::get(uri).body(Body::empty()).unwrap()).await
}

#[tokio::test]
async fn ingest_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(dir.path(), None);
    let (status, body) = ingest(&st, std::fs::read(fixture("udp3.pcap")).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let report: IngestReport = serde_json::from_value(body).unwrap();
    assert_eq!((report.frames, report.records, report.truncated), (3, 3, false));
    assert_eq!((report.first_sequence, report.last_sequence), (Some(1), Some(3)));
}

#[tokio::test]
async fn truncated_upload_keeps_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(dir.path(), None);
    let (status, body) = ingest(&st, std::fs::read(fixture("truncated.pcap")).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let report: IngestReport = serde_json::from_value(body).unwrap();
    assert_eq!((report.frames, report.truncated), (2, true));
}

#[tokio::test]
async fn bad_uploads_are_rejected_without_storing() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(dir.path(), None);
    for body in [
        b"definitely not a capture".to_vec(),
        Vec::new(),
        b"\x0a\x0d\x0d\x0a rest of a pcapng".to_vec(),
    ] {
        let (status, json) = ingest(&st, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert!(json["error"].as_str().is_some_and(|e| !e.is_empty()));
    }
    assert_eq!(st.store.snapshot().record_count(), 0);
}

#[tokio::test]
async fn full_store_answers_507() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(dir.path(), Some(64));
    let (status, json) = ingest(&st, std::fs::read(fixture("home100.pcap")).unwrap()).await;
    assert_eq!(status, StatusCode::INSUFFICIENT_STORAGE, "{json}");
    assert_eq!(st.store.snapshot().record_count(), 0);
}

#[tokio::test]
async fn devices_lists_every_identity() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(dir.path(), None);
    let (_, empty) = get(&st, "/devices").await;
    assert_eq!(empty, serde_json::json!([]));
    ingest(&st, std::fs::read(fixture("two_devices.pcap")).unwrap()).await;
    let (status, body) = get(&st, "/devices").await;
    assert_eq!(status, StatusCode::OK);
    let devices: Vec<DeviceIdentity> = serde_json::from_value(body).unwrap();
    assert_eq!(devices, st.store.list_devices());
    assert_eq!(devices.len(), 6);
    let total: u64 = devices.iter().map(|d| d.packets).sum();
    // Every packet touches exactly two identities.
    assert_eq!(total, 2 * st.store.snapshot().record_count());
}

#[tokio::test]
async fn analytics_matches_oracle_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(dir.path(), None);
    ingest(&st, std::fs::read(fixture("home100.pcap")).unwrap()).await;
    let snapshot = st.store.snapshot();
    let records: Vec<_> = snapshot.segments().iter().flat_map(|s| s.records().to_vec()).collect();
    let prefixes = test_prefixes();
    for device in st.store.list_devices().into_iter().take(8) {
        let uri = format!("/analytics?key={}", device.key);
        let (status, body) = get(&st, &uri).await;
        assert_eq!(status, StatusCode::OK);
        let a: NodeAnalytics = serde_json::from_value(body).unwrap();
        assert_eq!(a.key, device.key);
        assert_eq!(a.packets, device.packets);
        assert_eq!(a.histogram, oracle_histogram(&records, &prefixes, device.key));
    }
}

#[tokio::test]
async fn analytics_window_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(dir.path(), None);
    ingest(&st, std::fs::read(fixture("udp3.pcap")).unwrap()).await;
    let key = st.store.list_devices()[0].key;
    let (status, body) = get(&st, &format!("/analytics?key={key}&from=0&to=1")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["packets"], 0);
    let (status, body) = get(&st, "/analytics?key=ip:198.51.100.1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["packets"], 0);
    for bad in ["/analytics?key=toaster", "/analytics?key=ip:1.2.3.4&from=yesterday"] {
        let (status, _) = get(&st, bad).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }
    let resp = router(st.clone())
        .oneshot(Request::get("/analytics").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}
