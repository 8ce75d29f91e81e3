//! Breadth-first market crawler with per-worker ban detection.
//!
//! Workers share one [`Frontier`]; an app enters the frontier at most once.
//! Fetches that fail (404 or transport error) go to a separate retry queue
//! until `max_attempts_per_app` is reached. A worker that sees
//! `ban_threshold` consecutive failures deactivates for the rest of the crawl.

mod market;
mod page;

pub use market::{FetchOutcome, MarketEndpoint, MarketSession, MockMarket, MockMarketServer, TcpMarket, TcpSession};
pub use page::{parse_page, render_page, MarketPage, ParseError};

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_snapshot, AppId, AppSnapshot, Timestamp};

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("invalid crawl configuration: {0}")]
    InvalidConfig(String),
    #[error("crawl failed: {0}")]
    CrawlFailed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlConfig {
    pub workers: usize,
    pub ban_threshold: u32,
    pub politeness_delay_ms: u64,
    pub max_attempts_per_app: u32,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self { workers: 4, ban_threshold: 50, politeness_delay_ms: 100, max_attempts_per_app: 3 }
    }
}

/// FIFO of apps to fetch plus every app ever enqueued.
#[derive(Debug, Clone, Default)]
pub struct Frontier {
    queue: VecDeque<AppId>,
    seen: HashSet<AppId>,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueues `app` unless it was enqueued before. Returns whether it was added.
    pub fn offer(&mut self, app: AppId) -> bool {
        if self.seen.contains(&app) {
            return false;
        }
        self.seen.insert(app.clone());
        self.queue.push_back(app);
        true
    }

    pub fn pop(&mut self) -> Option<AppId> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn seen_count(&self) -> usize {
        self.seen.len()
    }

    pub fn has_seen(&self, app: &AppId) -> bool {
        self.seen.contains(app)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WorkerState {
    pub worker_id: usize,
    pub consecutive_404: u32,
    pub active: bool,
    pub politeness_delay_ms: u64,
    pub fetch_attempts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrawlReport {
    pub snapshots_emitted: usize,
    pub pages_fetched: u64,
    pub fetch_attempts: u64,
    /// 404 responses plus transport errors.
    pub not_found: u64,
    pub parse_failures: usize,
    pub apps_discovered: usize,
    pub apps_abandoned: usize,
    pub workers_banned: usize,
    pub frontier_exhausted: bool,
    pub workers: Vec<WorkerState>,
}

#[derive(Debug, Clone)]
pub struct CrawlOutput {
    pub report: CrawlReport,
    /// Parsed snapshots in fetch-completion order.
    pub snapshots: Vec<AppSnapshot>,
    pub parse_errors: Vec<(AppId, String)>,
}

#[derive(Default)]
struct Shared {
    frontier: Frontier,
    retries: VecDeque<AppId>,
    attempts: HashMap<AppId, u32>,
    in_flight: usize,
    snapshots: Vec<AppSnapshot>,
    parse_errors: Vec<(AppId, String)>,
    pages_fetched: u64,
    not_found: u64,
    abandoned: usize,
}

impl Shared {
    fn next_job(&mut self) -> Option<AppId> {
        self.frontier.pop().or_else(|| self.retries.pop_front())
    }
}

struct Coordinator<'c> {
    state: Mutex<Shared>,
    wake: Condvar,
    config: &'c CrawlConfig,
}

impl Coordinator<'_> {
    fn run_worker<S: MarketSession>(&self, worker_id: usize, mut session: S) -> WorkerState {
        let mut me = WorkerState {
            worker_id,
            consecutive_404: 0,
            active: true,
            politeness_delay_ms: self.config.politeness_delay_ms,
            fetch_attempts: 0,
        };
        loop {
            let job = {
                let mut st = self.state.lock().expect("crawl state poisoned");
                loop {
                    if let Some(job) = st.next_job() {
                        st.in_flight += 1;
                        break Some(job);
                    }
                    if st.in_flight == 0 {
                        break None;
                    }
                    st = self.wake.wait(st).expect("crawl state poisoned");
                }
            };
            let Some(app) = job else { break };
            me.fetch_attempts += 1;
            let outcome = session.fetch(&app);
            if self.config.politeness_delay_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.config.politeness_delay_ms));
            }

            let mut st = self.state.lock().expect("crawl state poisoned");
            st.in_flight -= 1;
            match outcome {
                Ok(FetchOutcome::Page(page)) => {
                    me.consecutive_404 = 0;
                    st.pages_fetched += 1;
                    match parse_page(&page) {
                        Ok((snapshot, _)) if snapshot.app != app => {
                            st.parse_errors.push((app, format!("page describes {} instead", snapshot.app)));
                        }
                        Ok((snapshot, similar)) => {
                            for s in similar {
                                st.frontier.offer(s);
                            }
                            st.snapshots.push(snapshot);
                        }
                        Err(e) => st.parse_errors.push((app, e.to_string())),
                    }
                }
                Ok(FetchOutcome::NotFound) | Err(_) => {
                    me.consecutive_404 += 1;
                    st.not_found += 1;
                    let tries = st.attempts.entry(app.clone()).or_default();
                    *tries += 1;
                    if *tries < self.config.max_attempts_per_app {
                        st.retries.push_back(app);
                    } else {
                        st.abandoned += 1;
                    }
                }
            }
            if me.consecutive_404 >= self.config.ban_threshold {
                me.active = false;
            }
            drop(st);
            self.wake.notify_all();
            if !me.active {
                break;
            }
        }
        me
    }
}

/// Crawls outward from `seeds` along similar-app links.
///
/// With one worker the crawl runs on the calling thread and successful
/// fetches follow breadth-first order from the seeds.
pub fn crawl<E: MarketEndpoint>(seeds: &[AppId], market: &E, config: &CrawlConfig) -> Result<CrawlOutput, CrawlError> {
    if seeds.is_empty() {
        return Err(CrawlError::InvalidConfig("at least one seed is required".into()));
    }
    if config.ban_threshold < 1 || config.workers < 1 || config.max_attempts_per_app < 1 {
        return Err(CrawlError::InvalidConfig(
            "workers, ban_threshold and max_attempts_per_app must be at least 1".into(),
        ));
    }
    let sessions = (0..config.workers)
        .map(|_| market.connect())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CrawlError::CrawlFailed(format!("cannot reach market: {e}")))?;

    let mut shared = Shared::default();
    for s in seeds {
        shared.frontier.offer(s.clone());
    }
    let coord = Coordinator { state: Mutex::new(shared), wake: Condvar::new(), config };
    let workers: Vec<WorkerState> = if config.workers == 1 {
        sessions.into_iter().map(|s| coord.run_worker(0, s)).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = sessions
                .into_iter()
                .enumerate()
                .map(|(id, s)| {
                    let coord = &coord;
                    scope.spawn(move || coord.run_worker(id, s))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("crawl worker panicked")).collect()
        })
    };

    let st = coord.state.into_inner().expect("crawl state poisoned");
    let report = CrawlReport {
        snapshots_emitted: st.snapshots.len(),
        pages_fetched: st.pages_fetched,
        fetch_attempts: workers.iter().map(|w| w.fetch_attempts).sum(),
        not_found: st.not_found,
        parse_failures: st.parse_errors.len(),
        apps_discovered: st.frontier.seen_count(),
        apps_abandoned: st.abandoned,
        workers_banned: workers.iter().filter(|w| !w.active).count(),
        frontier_exhausted: st.frontier.is_empty() && st.retries.is_empty(),
        workers,
    };
    Ok(CrawlOutput { report, snapshots: st.snapshots, parse_errors: st.parse_errors })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionFailure {
    pub app: AppId,
    pub fetch_time: Timestamp,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MergeReport {
    pub input_records: usize,
    pub duplicates_collapsed: usize,
    pub failures: Vec<AssertionFailure>,
}

/// Collapses records sharing `(app, fetch_time)` (first occurrence wins) and
/// drops records failing validation, listing them in the report.
pub fn merge_parsed(batches: Vec<Vec<AppSnapshot>>) -> (Vec<AppSnapshot>, MergeReport) {
    let mut report = MergeReport::default();
    let mut keys: HashSet<(AppId, Timestamp)> = HashSet::new();
    let mut out = Vec::new();
    for s in batches.into_iter().flatten() {
        report.input_records += 1;
        if !keys.insert((s.app.clone(), s.fetch_time)) {
            report.duplicates_collapsed += 1;
            continue;
        }
        let violations = validate_snapshot(&s);
        if violations.is_empty() {
            out.push(s);
        } else {
            report.failures.push(AssertionFailure {
                app: s.app,
                fetch_time: s.fetch_time,
                violations: violations.iter().map(ToString::to_string).collect(),
            });
        }
    }
    (out, report)
}
