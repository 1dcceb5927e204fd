#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use repodoc::embed::{normalize, EmbeddingVector};

/// Scripted single-endpoint HTTP server for provider tests. Responses are
/// served in order; the last one repeats. Request bodies and authorization
/// headers are captured for assertions.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    pub url: String,
    bodies: Arc<Mutex<Vec<String>>>,
    auth_headers: Arc<Mutex<Vec<Option<String>>>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

pub fn spawn_mock(responses: Vec<(u16, String)>) -> MockServer {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
    let addr = server.server_addr().to_ip().expect("ip listener");
    let url = format!("http://{addr}");
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let auth_headers = Arc::new(Mutex::new(Vec::new()));

    let srv = Arc::clone(&server);
    let body_log = Arc::clone(&bodies);
    let auth_log = Arc::clone(&auth_headers);
    let handle = std::thread::spawn(move || {
        let mut index = 0usize;
        while let Ok(mut request) = srv.recv() {
            let mut body = String::new();
            let _ = request.as_reader().read_to_string(&mut body);
            body_log.lock().unwrap().push(body);
            let auth = request
                .headers()
                .iter()
                .find(|h| h.field.equiv("authorization"))
                .map(|h| h.value.as_str().to_string());
            auth_log.lock().unwrap().push(auth);

            let (code, payload) = responses
                .get(index)
                .or_else(|| responses.last())
                .cloned()
                .unwrap_or((200, "{}".to_string()));
            if index + 1 < responses.len() {
                index += 1;
            }
            let response = tiny_http::Response::from_string(payload)
                .with_status_code(code)
                .with_header(
                    "Content-Type: application/json"
                        .parse::<tiny_http::Header>()
                        .unwrap(),
                );
            let _ = request.respond(response);
        }
    });

    MockServer {
        server,
        url,
        bodies,
        auth_headers,
        handle: Some(handle),
    }
}

impl MockServer {
    pub fn request_count(&self) -> usize {
        self.bodies.lock().unwrap().len()
    }

    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().unwrap().clone()
    }

    pub fn auth_headers(&self) -> Vec<Option<String>> {
        self.auth_headers.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

/// Spherically uniform unit vector via Box-Muller.
pub fn random_unit(rng: &mut ChaCha12Rng, dim: usize) -> EmbeddingVector {
    let mut values = Vec::with_capacity(dim);
    while values.len() < dim {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        values.push((r * (std::f64::consts::TAU * u2).cos()) as f32);
        if values.len() < dim {
            values.push((r * (std::f64::consts::TAU * u2).sin()) as f32);
        }
    }
    normalize(&EmbeddingVector::new(values).unwrap()).unwrap()
}

pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Path to a checked-in fixture directory.
pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn golden(name: &str) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("golden {name}: {e}"))
}
