//! Market endpoints: an in-process mock market, a line-protocol TCP server
//! exposing it, and the matching TCP client.
//!
//! Wire protocol: the client sends one app id per line. The server answers
//! `200 <len>\n` followed by `len` bytes of page, or `404\n`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::page::{render_page, MarketPage};
use crate::model::{AppId, AppSnapshot};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchOutcome {
    Page(MarketPage),
    NotFound,
}

/// Opens sessions against a market. Each crawl worker holds one session.
pub trait MarketEndpoint: Sync {
    type Session: MarketSession + Send;

    fn connect(&self) -> io::Result<Self::Session>;
}

pub trait MarketSession {
    fn fetch(&mut self, app: &AppId) -> io::Result<FetchOutcome>;
}

/// Pre-rendered pages keyed by app id, with request accounting.
#[derive(Debug, Default)]
pub struct MockMarket {
    pages: HashMap<AppId, String>,
    not_found: HashSet<AppId>,
    all_not_found: bool,
    requests: AtomicU64,
    served: Mutex<HashMap<AppId, u64>>,
}

impl MockMarket {
    pub fn new(entries: impl IntoIterator<Item = (AppSnapshot, Vec<AppId>)>) -> Self {
        let pages = entries
            .into_iter()
            .map(|(s, similar)| {
                let page = render_page(&s, &similar);
                (page.app, page.raw)
            })
            .collect();
        Self { pages, ..Self::default() }
    }

    /// A market that answers every request with 404.
    pub fn unreachable_pages() -> Self {
        Self { all_not_found: true, ..Self::default() }
    }

    /// Makes `apps` answer 404 even though their pages exist.
    pub fn with_not_found(mut self, apps: impl IntoIterator<Item = AppId>) -> Self {
        self.not_found.extend(apps);
        self
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// Successful responses per app.
    pub fn served(&self) -> BTreeMap<AppId, u64> {
        let served = self.served.lock().expect("served counter poisoned");
        served.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn respond(&self, app: &AppId) -> FetchOutcome {
        self.requests.fetch_add(1, Ordering::Relaxed);
        if self.all_not_found || self.not_found.contains(app) {
            return FetchOutcome::NotFound;
        }
        match self.pages.get(app) {
            Some(raw) => {
                *self.served.lock().expect("served counter poisoned").entry(app.clone()).or_default() += 1;
                FetchOutcome::Page(MarketPage { app: app.clone(), raw: raw.clone() })
            }
            None => FetchOutcome::NotFound,
        }
    }
}

pub struct MockSession<'a>(&'a MockMarket);

impl MarketSession for MockSession<'_> {
    fn fetch(&mut self, app: &AppId) -> io::Result<FetchOutcome> {
        Ok(self.0.respond(app))
    }
}

impl<'a> MarketEndpoint for &'a MockMarket {
    type Session = MockSession<'a>;

    fn connect(&self) -> io::Result<Self::Session> {
        Ok(MockSession(self))
    }
}

/// Serves a [`MockMarket`] on a local TCP port until dropped or shut down.
pub struct MockMarketServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl MockMarketServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts accepting.
    pub fn spawn(market: Arc<MockMarket>, addr: &str) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let accept = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let market = Arc::clone(&market);
                std::thread::spawn(move || {
                    let _ = serve_connection(&market, stream);
                });
            }
        });
        Ok(Self { addr, stop, accept: Some(accept) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the accept loop exits (i.e. forever unless shut down).
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockMarketServer {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

fn serve_connection(market: &MockMarket, stream: TcpStream) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        let response = match AppId::new(line.trim()) {
            Ok(id) => market.respond(&id),
            Err(_) => FetchOutcome::NotFound,
        };
        match response {
            FetchOutcome::Page(p) => {
                writeln!(writer, "200 {}", p.raw.len())?;
                writer.write_all(p.raw.as_bytes())?;
            }
            FetchOutcome::NotFound => writer.write_all(b"404\n")?,
        }
        writer.flush()?;
    }
    let _ = writer.shutdown(Shutdown::Both);
    Ok(())
}

/// Client endpoint for a [`MockMarketServer`].
#[derive(Debug, Clone)]
pub struct TcpMarket {
    pub addr: SocketAddr,
}

pub struct TcpSession {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl MarketEndpoint for TcpMarket {
    type Session = TcpSession;

    fn connect(&self) -> io::Result<TcpSession> {
        let stream = TcpStream::connect(self.addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpSession { writer: stream.try_clone()?, reader: BufReader::new(stream) })
    }
}

impl MarketSession for TcpSession {
    fn fetch(&mut self, app: &AppId) -> io::Result<FetchOutcome> {
        writeln!(self.writer, "{app}")?;
        self.writer.flush()?;
        let mut status = String::new();
        if self.reader.read_line(&mut status)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "market closed the connection"));
        }
        let status = status.trim_end();
        if status == "404" {
            return Ok(FetchOutcome::NotFound);
        }
        let len: usize = status
            .strip_prefix("200 ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad status line {status:?}")))?;
        let mut body = vec![0u8; len];
        self.reader.read_exact(&mut body)?;
        let raw = String::from_utf8(body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(FetchOutcome::Page(MarketPage { app: app.clone(), raw }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{app, snapshot};

    #[test]
    fn tcp_round_trip() {
        let market = Arc::new(
            MockMarket::new([(snapshot("a"), vec![app("b")]), (snapshot("b"), vec![])]).with_not_found([app("b")]),
        );
        let server = MockMarketServer::spawn(Arc::clone(&market), "127.0.0.1:0").unwrap();
        let mut session = TcpMarket { addr: server.addr() }.connect().unwrap();
        let FetchOutcome::Page(p) = session.fetch(&app("a")).unwrap() else {
            panic!("expected a page");
        };
        assert_eq!(p.raw, render_page(&snapshot("a"), &[app("b")]).raw);
        assert_eq!(session.fetch(&app("b")).unwrap(), FetchOutcome::NotFound);
        assert_eq!(session.fetch(&app("zzz")).unwrap(), FetchOutcome::NotFound);
        assert_eq!(market.request_count(), 3);
        assert_eq!(market.served().get(&app("a")), Some(&1));
        server.shutdown();
    }
}
