//! VQA HTTP client against an in-process mock service.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use corsem_core::encode::{
    vqa_annotate, AnswerCache, HttpBackend, HttpBackendConfig, PromptTemplate, VqaBackend,
};
use corsem_core::LabelSet;

struct Mock {
    endpoint: String,
    bodies: Arc<Mutex<Vec<serde_json::Value>>>,
}

/// Serves the scripted `(status, body)` responses in order, one per
/// connection; any further request gets a 500.
fn mock(script: Vec<(u16, &'static str)>) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let seen = bodies.clone();
    std::thread::spawn(move || {
        let mut script = script.into_iter();
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            seen.lock().unwrap().push(serde_json::from_slice(&body).unwrap());
            let (status, text) = script.next().unwrap_or((500, "{}"));
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    Mock { endpoint, bodies }
}

fn backend(endpoint: &str, images: &std::path::Path) -> HttpBackend {
    HttpBackend::new(HttpBackendConfig {
        endpoint: endpoint.to_string(),
        image_dir: images.to_path_buf(),
        max_retries: 3,
        backoff_ms: 1,
        timeout_s: 10,
    })
    .unwrap()
}

fn images() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("img1"), b"\x89PNG fake").unwrap();
    std::fs::write(dir.path().join("img2"), b"another").unwrap();
    dir
}

#[test]
fn success_sends_image_and_prompt() {
    let dir = images();
    let m = mock(vec![(200, r#"{"answer":"Yes.","confidence":0.9}"#)]);
    let b = backend(&m.endpoint, dir.path());
    assert_eq!(b.ask("img1", "face", "Is there a face?").unwrap(), "Yes.");
    assert_eq!(b.requests(), 1);
    let bodies = m.bodies.lock().unwrap();
    assert_eq!(bodies[0]["prompt"], "Is there a face?");
    assert_eq!(bodies[0]["image_b64"], "iVBORyBmYWtl");
}

#[test]
fn transient_statuses_are_retried() {
    let dir = images();
    let m = mock(vec![(503, "{}"), (429, "{}"), (200, r#"{"answer":"no"}"#)]);
    let b = backend(&m.endpoint, dir.path());
    assert_eq!(b.ask("img1", "face", "p").unwrap(), "no");
    assert_eq!(m.bodies.lock().unwrap().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let dir = images();
    let m = mock(vec![(503, "{}"); 10]);
    let b = backend(&m.endpoint, dir.path());
    let err = b.ask("img1", "face", "p").unwrap_err().to_string();
    assert!(err.contains("img1") && err.contains("face"), "{err}");
    assert_eq!(m.bodies.lock().unwrap().len(), 4);
}

#[test]
fn undecodable_image_is_fatal() {
    let dir = images();
    let m = mock(vec![(422, r#"{"error":"bad image"}"#), (200, r#"{"answer":"yes"}"#)]);
    let b = backend(&m.endpoint, dir.path());
    let err = b.ask("img2", "car", "p").unwrap_err().to_string();
    assert!(err.contains("422"), "{err}");
    assert_eq!(m.bodies.lock().unwrap().len(), 1);
}

#[test]
fn annotation_matrix_and_cache() {
    let dir = images();
    let cache_dir = tempfile::tempdir().unwrap();
    let cache = AnswerCache::new(cache_dir.path()).unwrap();
    let labels = LabelSet::new(vec!["face".into(), "car".into()]).unwrap();
    let ids = vec!["img1".to_string(), "img2".to_string()];
    let t = PromptTemplate::default();

    // One in flight keeps the scripted order aligned with row-major pairs.
    let m = mock(vec![
        (200, r#"{"answer":"Yes"}"#),
        (200, r#"{"answer":"no."}"#),
        (200, r#"{"answer":" NO "}"#),
        (200, r#"{"answer":"yes!"}"#),
    ]);
    let b = backend(&m.endpoint, dir.path());
    let a = vqa_annotate(&ids, &labels, &t, &b, Some(&cache), 1).unwrap();
    assert_eq!(a.values(), &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(
        m.bodies.lock().unwrap()[1]["prompt"],
        "Is there any car that can be easily recognized in this image?"
    );

    let dead = mock(vec![]);
    let b2 = backend(&dead.endpoint, dir.path());
    let again = vqa_annotate(&ids, &labels, &t, &b2, Some(&cache), 4).unwrap();
    assert_eq!(again, a);
    assert_eq!(b2.requests(), 0);
    assert!(dead.bodies.lock().unwrap().is_empty());
}

#[test]
fn unparseable_answer_is_an_error() {
    let dir = images();
    let m = mock(vec![(200, r#"{"answer":"maybe"}"#)]);
    let b = backend(&m.endpoint, dir.path());
    let labels = LabelSet::new(vec!["face".into()]).unwrap();
    let r = vqa_annotate(&["img1".to_string()], &labels, &PromptTemplate::default(), &b, None, 1);
    assert!(r.is_err());
}
