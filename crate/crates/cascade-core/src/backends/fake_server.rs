//! Minimal in-process HTTP server speaking the remote wire protocol.
//!
//! Backs the remote-client tests and doubles as a local smoke-test target.
//! One thread per connection, `Connection: close` framing, no TLS. The
//! server tracks the high-water mark of concurrently handled requests so
//! tests can assert concurrency caps.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::backends::remote::{WireRequest, WireResponse};

/// Decides the HTTP status and body for one request.
pub type Handler = Arc<dyn Fn(&WireRequest) -> (u16, String) + Send + Sync>;

#[derive(Default)]
struct ServerStats {
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    total: AtomicUsize,
}

impl ServerStats {
    fn enter(&self) {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        self.total.fetch_add(1, Ordering::SeqCst);
    }

    fn exit(&self) {
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

pub struct FakeServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    stats: Arc<ServerStats>,
    accept_thread: Option<JoinHandle<()>>,
}

impl FakeServer {
    /// Bind to a free loopback port and start serving.
    pub fn start(handler: Handler) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(ServerStats::default());

        let accept_shutdown = Arc::clone(&shutdown);
        let accept_stats = Arc::clone(&stats);
        let accept_thread = std::thread::spawn(move || {
            let mut workers = Vec::new();
            for stream in listener.incoming() {
                if accept_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let handler = Arc::clone(&handler);
                let stats = Arc::clone(&accept_stats);
                workers.push(std::thread::spawn(move || {
                    let _ = handle_connection(stream, &handler, &stats);
                }));
            }
            for w in workers {
                let _ = w.join();
            }
        });

        Ok(Self {
            addr,
            shutdown,
            stats,
            accept_thread: Some(accept_thread),
        })
    }

    /// A server that answers every request with a fixed-format score echo
    /// derived from the request id (useful for smoke tests).
    pub fn echoing_ids() -> std::io::Result<Self> {
        Self::start(Arc::new(|req: &WireRequest| {
            let score: f64 = req.id.parse().unwrap_or(0.0);
            respond_with_score(score, None)
        }))
    }

    pub fn url(&self) -> String {
        format!("http://{}/predict", self.addr)
    }

    /// Highest number of requests that were being handled at the same time.
    pub fn max_in_flight(&self) -> usize {
        self.stats.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn total_requests(&self) -> usize {
        self.stats.total.load(Ordering::SeqCst)
    }
}

impl Drop for FakeServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

/// Build a 200 response whose text carries the score at four decimals.
pub fn respond_with_score(score: f64, token_probs: Option<Vec<Vec<f64>>>) -> (u16, String) {
    let body = WireResponse {
        text: crate::backends::remote::render_answer(score),
        token_probs,
        latency_ms: 1.0,
    };
    (200, serde_json::to_string(&body).expect("serializable response"))
}

fn handle_connection(
    stream: TcpStream,
    handler: &Handler,
    stats: &ServerStats,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);

    // Request line + headers.
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim().is_empty() {
        return Ok(()); // shutdown poke or dead connection
    }
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 {
            return Ok(());
        }
        let header = header.trim();
        if header.is_empty() {
            break;
        }
        if let Some(value) = header
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
        {
            content_length = value.parse().unwrap_or(0);
        }
    }

    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    stats.enter();
    let (status, response_body) = match serde_json::from_slice::<WireRequest>(&body) {
        Ok(request) => handler(&request),
        Err(e) => (400, format!("{{\"error\":\"bad request: {e}\"}}")),
    };
    stats.exit();

    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        422 => "Unprocessable Entity",
        503 => "Service Unavailable",
        _ => "Response",
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        response_body.len()
    )?;
    stream.write_all(response_body.as_bytes())?;
    stream.flush()?;
    Ok(())
}
