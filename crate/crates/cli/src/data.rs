//! Dataset production and intake: simulate, ingest, crawl, mock-market, timeline.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use marketpulse_core::harvester::{crawl, merge_parsed, CrawlConfig, MockMarketServer, TcpMarket};
use marketpulse_core::simgen::{render_mock_market, write_dataset, GraphParams, MarketScript};
use marketpulse_core::snapstore::{Store, TimeRange, SNAPSHOTS_FILE};
use marketpulse_core::timeline::{build_app_timeline, write_timeline_csv};
use marketpulse_core::{AppId, AppSnapshot};
use serde_json::json;

use crate::args::{CrawlArgs, IngestArgs, MockMarketArgs, SimulateArgs, TimelineArgs};
use crate::output::{open_store, print_json};

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.script).with_context(|| format!("reading {}", a.script.display()))?;
    let mut script = MarketScript::from_json(&text)?;
    if let Some(seed) = a.seed {
        script.seed = seed;
    }
    let truth = write_dataset(&script, &a.out)?;
    print_json(&json!({
        "name": truth.name,
        "seed": truth.seed,
        "out": a.out,
        "observation_start": truth.start_date,
        "observation_end": truth.end_date,
        "apps": truth.app_count,
        "developers": truth.developer_app_counts.len(),
        "class_counts": truth.class_counts,
        "stale_apps": truth.stale_count,
    }))
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    if !a.data.is_dir() {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("data directory {} does not exist", a.data.display()),
        )
        .into());
    }
    let mut store = Store::open(&a.store.store)?;
    let report = store.ingest_dir(&a.data)?;
    print_json(&report)
}

fn read_seeds(path: &std::path::Path) -> Result<Vec<AppId>> {
    let file = File::open(path).with_context(|| format!("reading seeds {}", path.display()))?;
    let mut seeds = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let id = line.trim();
        if id.is_empty() || id.starts_with('#') {
            continue;
        }
        seeds.push(AppId::new(id).with_context(|| format!("seed line {}", i + 1))?);
    }
    if seeds.is_empty() {
        bail!("no seeds in {}", path.display());
    }
    Ok(seeds)
}

pub fn crawl_market(a: CrawlArgs) -> Result<()> {
    let seeds = read_seeds(&a.seeds)?;
    let config = CrawlConfig {
        workers: a.workers,
        ban_threshold: a.ban_threshold,
        politeness_delay_ms: a.politeness_ms,
        max_attempts_per_app: a.max_attempts,
    };
    let out = crawl(&seeds, &TcpMarket { addr: a.market }, &config)?;
    let (snapshots, merge) = merge_parsed(vec![out.snapshots]);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let path = a.out.join(SNAPSHOTS_FILE);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?);
    for s in &snapshots {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let report = json!({
        "crawl": out.report,
        "merge": merge,
        "parse_errors": out
            .parse_errors
            .iter()
            .map(|(app, e)| json!({ "app": app, "error": e }))
            .collect::<Vec<_>>(),
    });
    let report_path = a.out.join("crawl_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", report_path.display()))?;
    print_json(&report)
}

fn read_snapshots(dir: &std::path::Path) -> Result<Vec<AppSnapshot>> {
    let path = dir.join(SNAPSHOTS_FILE);
    let file = File::open(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut latest: BTreeMap<AppId, AppSnapshot> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: AppSnapshot =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        match latest.get(&s.app) {
            Some(prev) if prev.fetch_time >= s.fetch_time => {}
            _ => {
                latest.insert(s.app.clone(), s);
            }
        }
    }
    Ok(latest.into_values().collect())
}

pub fn mock_market(a: MockMarketArgs) -> Result<()> {
    let snapshots = read_snapshots(&a.data)?;
    let layout =
        render_mock_market(&snapshots, GraphParams { seed: a.seed, n_seeds: a.n_seeds, extra_links: a.extra_links })?;
    let seeds: String = layout.seeds.iter().map(|s| format!("{s}\n")).collect();
    fs::write(&a.seeds_out, seeds).with_context(|| format!("writing {}", a.seeds_out.display()))?;
    let apps = layout.entries.len();
    let server = MockMarketServer::spawn(Arc::new(layout.into_market()), &a.addr)
        .with_context(|| format!("binding {}", a.addr))?;
    print_json(&json!({
        "addr": server.addr().to_string(),
        "apps": apps,
        "seeds_file": a.seeds_out,
    }))?;
    // serve until stdin closes or the process is killed
    let mut sink = String::new();
    while io::stdin().read_line(&mut sink)? > 0 {
        sink.clear();
    }
    server.shutdown();
    Ok(())
}

pub fn timeline(a: TimelineArgs) -> Result<()> {
    let store = open_store(&a.store.store)?;
    let app = AppId::new(a.app.as_str())?;
    let series = store.query_app_series(&app, TimeRange::all())?;
    if series.snapshots.is_empty() {
        bail!("no snapshots for app {app}");
    }
    let t = build_app_timeline(&series)?;
    match a.out {
        Some(path) => {
            let f = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            write_timeline_csv(f, [&t])?;
        }
        None => write_timeline_csv(io::stdout().lock(), [&t])?,
    }
    Ok(())
}
