mod common;

use common::grid;
use neutrotensor::gateway::{mock_endpoint, Gateway, MockFixture, RunConfig, TransportStatus};
use neutrotensor::protocol::find_stimulus;
use neutrotensor::{parse_trial, FailureKind, Strategy};

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn grid_runs_archives_and_replays_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = grid::run_grid(dir.path()).await.unwrap();
    grid::check_run(&first).unwrap();
    grid::check_run(&second).unwrap();
    grid::check_deterministic(&first, &second).unwrap();

    // grid order: model, stimulus, strategy, rep
    let order: Vec<_> = first
        .archive
        .transcripts
        .iter()
        .map(|t| (t.model.as_str(), t.stimulus.as_str(), t.strategy, t.rep))
        .collect();
    assert_eq!(order[0], ("mock/alpha", "paradox", Strategy::Neutrosophic, 1));
    assert_eq!(order[3], ("mock/alpha", "paradox", Strategy::TensorLosses, 2));
    assert_eq!(order[15], ("mock/beta", "ignorance", Strategy::TensorLosses, 2));
}

async fn single(fixture: MockFixture, tweak: impl FnOnce(&mut RunConfig)) -> (Vec<TransportStatus>, Vec<u32>, Vec<String>, usize) {
    let model = fixture.model.clone();
    let stimulus = find_stimulus(&fixture.stimulus).unwrap();
    let strategy = fixture.strategy;
    let server = mock_endpoint(vec![fixture], 0).await.unwrap();
    let mut config = grid::config(server.base_url());
    config.repetitions = 1;
    tweak(&mut config);
    let gateway = Gateway::new(config, "k").unwrap();
    let spec = gateway.config().model(&model).unwrap().clone();
    let out = gateway.execute_cell(&spec, &stimulus, strategy).await.unwrap();
    let requests = server.request_count();
    server.shutdown().await;
    (
        out.iter().map(|t| t.status.clone()).collect(),
        out.iter().map(|t| t.attempts).collect(),
        out.into_iter().map(|t| t.response).collect(),
        requests,
    )
}

fn fixture(response: Option<&str>, failures: Vec<u16>) -> MockFixture {
    MockFixture {
        failures,
        response: response.map(str::to_string),
        ..MockFixture::ok("mock/alpha", "paradox", Strategy::Neutrosophic, 1, "")
    }
}

#[tokio::test]
async fn retries_transient_statuses() {
    let body = r#"{"T": 0.5, "I": 1.0, "F": 0.5}"#;
    let (status, attempts, text, requests) =
        single(fixture(Some(body), vec![503, 429]), |c| c.retry_limit = 3).await;
    assert_eq!(status, vec![TransportStatus::Ok]);
    assert_eq!(attempts, vec![3]);
    assert_eq!(requests, 3);
    assert_eq!(text[0], body);
}

#[tokio::test]
async fn gives_up_after_retry_limit() {
    let (status, attempts, text, _) = single(fixture(None, vec![500, 500]), |c| c.retry_limit = 1).await;
    assert_eq!(status, vec![TransportStatus::ExhaustedRetries]);
    assert_eq!(attempts, vec![2]);
    assert_eq!(text[0], "");
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (status, attempts, _, requests) = single(fixture(None, vec![400]), |c| c.retry_limit = 3).await;
    assert_eq!(status, vec![TransportStatus::HttpError { code: 400 }]);
    assert_eq!(attempts, vec![1]);
    assert_eq!(requests, 1);
}

#[tokio::test]
async fn unmatched_cell_gets_404() {
    // fixture exists for rep 1 only; rep 2 has nothing to serve
    let f = MockFixture::ok("mock/alpha", "paradox", Strategy::Neutrosophic, 1, "{}");
    let (status, _, _, _) = single(f, |c| c.repetitions = 2).await;
    assert_eq!(status[0], TransportStatus::Ok);
    assert_eq!(status[1], TransportStatus::HttpError { code: 404 });
}

#[tokio::test]
async fn unknown_prompt_gets_json_404() {
    let server = mock_endpoint(vec![fixture(Some("{}"), vec![])], 0).await.unwrap();
    let url = format!("{}/chat/completions", server.base_url());
    let resp = reqwest::Client::new()
        .post(url)
        .body(r#"{"model":"mock/alpha","messages":[{"role":"user","content":"hello"}]}"#)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status().as_u16(), 404);
    let body: serde_json::Value = resp.json().await.unwrap();
    assert_eq!(body["error"]["type"], "fixture_not_found");
    server.shutdown().await;
}

#[tokio::test]
async fn empty_completion_is_transport_ok_but_garbled() {
    let (status, _, text, _) = single(fixture(Some(""), vec![]), |_| {}).await;
    assert_eq!(status, vec![TransportStatus::Ok]);
    assert_eq!(
        parse_trial(&text[0], Strategy::Neutrosophic).failure(),
        Some(FailureKind::Garbled)
    );
}

#[tokio::test]
async fn slow_reply_times_out() {
    let mut f = fixture(Some("{}"), vec![]);
    f.delay_ms = 1500;
    let (status, attempts, _, _) = single(f, |c| {
        c.timeout_secs = 1;
        c.retry_limit = 0;
    })
    .await;
    assert_eq!(status, vec![TransportStatus::Timeout]);
    assert_eq!(attempts, vec![1]);
}

#[tokio::test]
async fn empty_fixture_list_is_rejected() {
    assert!(mock_endpoint(Vec::new(), 0).await.is_err());
}
