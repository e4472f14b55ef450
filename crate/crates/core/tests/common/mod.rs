//! Helpers shared by integration tests: fixture paths, a generated
//! cross-call corpus, and a local chat-completions mock.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::Value;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// `copies` identical firmware trees. Each has `funcs` helpers split over two
/// model files that call across files twice per body, and `actions`
/// dispatched controller actions that pass form input through a helper into
/// `luci.sys.call`.
pub fn write_cross_call_corpus(root: &Path, copies: usize, funcs: usize, actions: usize) -> usize {
    let mut count = 0;
    for c in 0..copies {
        let base = root.join(format!("fw{c}/usr/lib/lua/luci"));
        std::fs::create_dir_all(base.join("controller")).unwrap();
        std::fs::create_dir_all(base.join("model")).unwrap();
        for (me, other) in [("a", "b"), ("b", "a")] {
            let mut s = String::new();
            for i in 0..funcs {
                let (j, k) = ((i + 1) % funcs, (i + 2) % funcs);
                s.push_str(&format!(
                    "function f{me}_{i}(x)\n\tlocal y = f{other}_{j}(x) .. \"-\" .. f{other}_{k}(x)\n\treturn y\nend\n\n"
                ));
                count += 1;
            }
            std::fs::write(base.join(format!("model/{me}.lua")), s).unwrap();
        }
        let mut s = String::from("module(\"luci.controller.dash\", package.seeall)\n\nfunction index()\n");
        for k in 0..actions {
            s.push_str(&format!("\tentry({{\"admin\", \"dash\", \"a{k}\"}}, call(\"action_{k}\"))\n"));
        }
        s.push_str("end\n\n");
        for k in 0..actions {
            s.push_str(&format!(
                "function action_{k}()\n\tlocal v = luci.http.formvalue(\"k{k}\")\n\tlocal r = fa_{}(v)\n\tluci.sys.call(\"echo \" .. r)\nend\n\n",
                k % funcs
            ));
            count += 1;
        }
        std::fs::write(base.join("controller/dash.lua"), s).unwrap();
    }
    count
}

pub type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server answering chat-completion POSTs. The handler gets
/// the zero-based request number and the parsed body.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    auth: Arc<Mutex<Vec<String>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let auth = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (h, a) = (hits.clone(), auth.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (h, a, handler) = (h.clone(), a.clone(), handler.clone());
                std::thread::spawn(move || serve(stream, &h, &a, &*handler));
            }
        });
        MockServer { url, hits, auth }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn auth_headers(&self) -> Vec<String> {
        self.auth.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, hits: &AtomicUsize, auth: &Mutex<Vec<String>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let mut len = 0usize;
        loop {
            let mut h = String::new();
            if reader.read_line(&mut h).unwrap_or(0) == 0 {
                return;
            }
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            let (name, value) = h.split_once(':').unwrap_or((h, ""));
            match name.to_ascii_lowercase().as_str() {
                "content-length" => len = value.trim().parse().unwrap_or(0),
                "authorization" => auth.lock().unwrap().push(value.trim().to_string()),
                _ => {}
            }
        }
        let mut body = vec![0u8; len];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let n = hits.fetch_add(1, Ordering::SeqCst);
        let json: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        let (status, text) = handler(n, &json);
        let reply = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}",
            text.len()
        );
        if writer.write_all(reply.as_bytes()).is_err() {
            return;
        }
    }
}

/// An OpenAI-style completion body carrying `text`.
pub fn completion(text: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 100, "completion_tokens": 7},
    })
    .to_string()
}
