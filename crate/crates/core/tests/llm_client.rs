mod common;

use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use acsql_core::llm_client::{complete, ChatMessage, EndpointConfig, LlmClient, LlmError};
use common::{completion, StubServer};
use serde_json::json;

struct CaptureLogger;

fn captured() -> &'static Mutex<Vec<String>> {
    static LINES: OnceLock<Mutex<Vec<String>>> = OnceLock::new();
    LINES.get_or_init(Mutex::default)
}

impl log::Log for CaptureLogger {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }

    fn log(&self, record: &log::Record) {
        captured().lock().unwrap().push(format!("{} {}", record.level(), record.args()));
    }

    fn flush(&self) {}
}

fn install_logger() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        log::set_logger(&CaptureLogger).unwrap();
        log::set_max_level(log::LevelFilter::Trace);
    });
}

fn config(server: &StubServer, key_var: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: server.base_url.clone(),
        model_name: "stub-model".into(),
        api_key_env_var: key_var.into(),
        temperature: 0.0,
        max_tokens: 64,
        timeout_ms: 2_000,
        max_retries: 3,
        retry_backoff_ms: vec![1],
        max_concurrent_requests: 2,
    }
}

fn hello() -> Vec<ChatMessage> {
    vec![ChatMessage::user("Create a SQL query")]
}

#[test]
fn sends_exact_body_and_bearer_key() {
    install_logger();
    std::env::set_var("ACSQL_TEST_KEY_BODY", "sk-body-secret-4242");
    let server = StubServer::start(|_, _| (200, completion("SELECT 1")));
    let reply = complete(&config(&server, "ACSQL_TEST_KEY_BODY"), &hello()).unwrap();
    assert_eq!(reply, "SELECT 1");

    let recorded = server.recorded();
    assert_eq!(recorded.len(), 1);
    assert_eq!(recorded[0].path, "/v1/chat/completions");
    assert_eq!(
        recorded[0].body,
        json!({
            "model": "stub-model",
            "messages": [{"role": "user", "content": "Create a SQL query"}],
            "temperature": 0.0,
            "max_tokens": 64
        })
    );
    assert_eq!(recorded[0].authorization.as_deref(), Some("Bearer sk-body-secret-4242"));
}

#[test]
fn retries_rate_limits_then_succeeds() {
    install_logger();
    let server = StubServer::start(|n, _| if n < 2 { (429, "slow down".into()) } else { (200, completion("True")) });
    let reply = complete(&config(&server, "ACSQL_TEST_KEY_UNSET"), &hello()).unwrap();
    assert_eq!(reply, "True");
    assert_eq!(server.request_count(), 3);
    assert!(server.recorded().iter().all(|r| r.authorization.is_none()));
}

#[test]
fn auth_failure_is_terminal() {
    install_logger();
    let server = StubServer::start(|_, _| (401, r#"{"error":"bad key"}"#.into()));
    let err = complete(&config(&server, "ACSQL_TEST_KEY_UNSET"), &hello()).unwrap_err();
    assert!(matches!(err, LlmError::Auth { status: 401, .. }), "{err:?}");
    assert_eq!(server.request_count(), 1);
}

#[test]
fn other_client_errors_are_not_retried() {
    install_logger();
    let server = StubServer::start(|_, _| (400, "context too long".into()));
    let err = complete(&config(&server, "ACSQL_TEST_KEY_UNSET"), &hello()).unwrap_err();
    assert!(matches!(err, LlmError::Rejected { status: 400, .. }), "{err:?}");
    assert_eq!(server.request_count(), 1);
}

#[test]
fn server_errors_exhaust_the_retry_budget() {
    install_logger();
    let server = StubServer::start(|_, _| (503, "overloaded".into()));
    let mut cfg = config(&server, "ACSQL_TEST_KEY_UNSET");
    cfg.max_retries = 2;
    let err = complete(&cfg, &hello()).unwrap_err();
    match err {
        LlmError::Transport { attempts, ref last_error } => {
            assert_eq!(attempts, 3);
            assert!(last_error.contains("503"), "{last_error}");
        }
        other => panic!("{other:?}"),
    }
    assert!(err.is_transport());
    assert_eq!(server.request_count(), 3);
}

#[test]
fn malformed_success_body_is_a_parse_error() {
    install_logger();
    let server = StubServer::start(|_, _| (200, "<html>gateway</html>".into()));
    match complete(&config(&server, "ACSQL_TEST_KEY_UNSET"), &hello()) {
        Err(LlmError::Parse { raw, .. }) => assert_eq!(raw, "<html>gateway</html>"),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.request_count(), 1);
}

#[test]
fn slow_response_times_out_and_is_retried() {
    install_logger();
    let server = StubServer::start_with_threads(2, |n, _| {
        if n == 0 {
            std::thread::sleep(Duration::from_millis(600));
        }
        (200, completion("ok"))
    });
    let mut cfg = config(&server, "ACSQL_TEST_KEY_UNSET");
    cfg.timeout_ms = 200;
    assert_eq!(complete(&cfg, &hello()).unwrap(), "ok");
    assert_eq!(server.request_count(), 2);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    install_logger();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let cfg = EndpointConfig {
        base_url: format!("http://127.0.0.1:{port}/v1"),
        max_retries: 1,
        retry_backoff_ms: vec![1],
        ..Default::default()
    };
    assert!(matches!(complete(&cfg, &hello()), Err(LlmError::Transport { attempts: 2, .. })));
}

#[test]
fn concurrency_gate_caps_in_flight_requests() {
    install_logger();
    let in_flight = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let peak = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let (f, p) = (in_flight.clone(), peak.clone());
    let server = StubServer::start_with_threads(4, move |_, _| {
        use std::sync::atomic::Ordering::SeqCst;
        let now = f.fetch_add(1, SeqCst) + 1;
        p.fetch_max(now, SeqCst);
        std::thread::sleep(Duration::from_millis(50));
        f.fetch_sub(1, SeqCst);
        (200, completion("ok"))
    });
    let mut cfg = config(&server, "ACSQL_TEST_KEY_UNSET");
    cfg.max_concurrent_requests = 2;
    let client = LlmClient::new(cfg).unwrap();
    let start = Instant::now();
    std::thread::scope(|scope| {
        for _ in 0..6 {
            let client = client.clone();
            scope.spawn(move || assert_eq!(client.complete(&hello()).unwrap(), "ok"));
        }
    });
    assert_eq!(server.request_count(), 6);
    assert!(peak.load(std::sync::atomic::Ordering::SeqCst) <= 2);
    assert!(start.elapsed() >= Duration::from_millis(150));
}

#[test]
fn api_key_never_reaches_the_log() {
    install_logger();
    std::env::set_var("ACSQL_TEST_KEY_LOG", "sk-log-secret-9999");
    let server = StubServer::start(|n, _| match n {
        0 => (500, "boom".into()),
        1 => (429, "later".into()),
        _ => (403, "forbidden".into()),
    });
    let err = complete(&config(&server, "ACSQL_TEST_KEY_LOG"), &hello()).unwrap_err();
    assert!(matches!(err, LlmError::Auth { status: 403, .. }));
    assert!(!err.to_string().contains("sk-log-secret-9999"));
    let lines = captured().lock().unwrap().clone();
    assert!(lines.iter().any(|l| l.contains("attempt")), "logger saw nothing: {lines:?}");
    assert!(lines.iter().all(|l| !l.contains("sk-log-secret-9999")));
    assert!(server.recorded().iter().all(|r| r.authorization.as_deref() == Some("Bearer sk-log-secret-9999")));
}
