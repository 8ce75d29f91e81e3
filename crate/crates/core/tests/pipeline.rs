//! Generated dataset through the store and every analysis stage.

use std::collections::BTreeSet;
use std::sync::Arc;

use marketpulse_core::anomaly::SpikePolarity;
use marketpulse_core::anomaly::{
    detect_review_spikes, permission_flags, scam_pattern_scan, PermissionFlagKind, ScamParams, SpikeParams,
    DEFAULT_CHURN_WINDOW_DAYS,
};
use marketpulse_core::harvester::{crawl, merge_parsed, CrawlConfig, MockMarketServer, TcpMarket};
use marketpulse_core::marketmetrics::{classify_staleness, popularity_shares, Staleness};
use marketpulse_core::simgen::{
    render_mock_market, write_dataset, FraudCampaign, GraphParams, MarketScript, PermissionChurn, ScamDeveloper,
    TopKListScript,
};
use marketpulse_core::snapstore::{RecordKind, Store, TimeRange};
use marketpulse_core::timeline::{build_app_timeline, build_review_timeline, Polarity};
use marketpulse_core::topk::{lifecycle_summaries_with_censored, similarity_series, LifecycleMode};
use marketpulse_core::{AppId, ListType, PopularityClass};

fn script() -> MarketScript {
    MarketScript {
        seed: 21,
        target_apps: Some(800),
        days: 21,
        snapshot_cadence_hours: 12,
        topk_lists: vec![TopKListScript {
            list_type: ListType::Gross,
            length: 50,
            cadence_hours: 1,
            churn: Default::default(),
        }],
        fraud_campaigns: vec![FraudCampaign {
            polarity: SpikePolarity::Negative,
            start_day: 12,
            duration_days: 4,
            daily_volume: 120,
            baseline_per_day: 8.0,
        }],
        scam_developers: vec![ScamDeveloper {
            developer: "Cheap Tools Inc".into(),
            n_clones: 6,
            price_cents: 149,
            title_stem: "Battery Saver Ultra".into(),
        }],
        permission_churn: vec![PermissionChurn {
            remove_day: 8,
            readd_after_days: 1,
            permissions: vec!["android.permission.READ_CONTACTS".into()],
        }],
        ..MarketScript::default()
    }
}

#[test]
fn generated_dataset_round_trips_through_store() {
    let data = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let script = script();
    let truth = write_dataset(&script, data.path()).unwrap();

    let mut store = Store::open(root.path()).unwrap();
    let report = store.ingest_dir(data.path()).unwrap();
    assert!(report.rejections.is_empty(), "{:?}", &report.rejections[..1]);
    assert_eq!(report.for_kind(RecordKind::Snapshot).accepted, 800 * 21 * 2);
    let again = store.ingest_dir(data.path()).unwrap();
    assert_eq!(again.total_accepted(), 0);

    // timelines from the store match ground truth
    for series in store.all_series() {
        let t = build_app_timeline(&series).unwrap();
        assert_eq!(t.update_days, truth.apps[&series.app].update_days, "{}", series.app);
    }

    // staleness and popularity of the latest snapshots
    let latest = store.latest_snapshots();
    let shares = popularity_shares(&latest);
    for c in PopularityClass::ALL {
        assert!((shares.shares[&c] - truth.class_share(c)).abs() < 1e-12);
    }
    let stale = latest
        .iter()
        .filter(|s| classify_staleness(s.last_updated, truth.end_date, 365).unwrap().status == Staleness::Stale)
        .count();
    assert_eq!(stale, truth.stale_count);

    // fraud days
    let fraud = AppId::new("com.fraud.app000").unwrap();
    let rt = build_review_timeline(&fraud, &store.reviews_for(&fraud), Polarity::default()).unwrap();
    let days: BTreeSet<_> = detect_review_spikes(&rt, SpikeParams::default()).into_iter().map(|s| s.day).collect();
    let want: BTreeSet<_> = truth.apps[&fraud].fraud_days.iter().map(|f| f.day).collect();
    assert_eq!(days, want);

    // permission churn on the malware app
    let malware = AppId::new("com.malware.app000").unwrap();
    let series = store.query_app_series(&malware, TimeRange::all()).unwrap();
    let flags = permission_flags(&build_app_timeline(&series).unwrap(), None, DEFAULT_CHURN_WINDOW_DAYS).unwrap();
    assert!(flags.iter().any(|f| f.kind == PermissionFlagKind::ChurnWithinWindow));
    assert!(flags.iter().any(|f| f.kind == PermissionFlagKind::ChangeWithoutVersionChange));

    // scam cluster
    let clusters = scam_pattern_scan(&latest, ScamParams::default());
    let scam: Vec<_> = clusters.iter().filter(|c| c.developer == "Cheap Tools Inc").collect();
    assert_eq!(scam.len(), 1);
    assert_eq!(scam[0].apps.len(), 6);

    // ranked list
    let list = store.query_list_series(ListType::Gross, TimeRange::all()).unwrap();
    assert_eq!(list.len(), 21 * 24);
    let sims = similarity_series(&list).unwrap();
    assert!(sims.iter().all(|(_, s)| (0.0..=1.0).contains(&s.m)));
    let summaries = lifecycle_summaries_with_censored(&list, LifecycleMode::WholeSpan).unwrap();
    let tothrs: usize = summaries.iter().map(|s| s.tothrs).sum();
    assert_eq!(tothrs, list.observations.iter().map(|o| o.ranking.len()).sum::<usize>());
}

#[test]
fn crawl_of_generated_market_recovers_every_app() {
    let script = MarketScript { seed: 4, target_apps: Some(300), days: 2, ..MarketScript::default() };
    let (market, _) = marketpulse_core::simgen::generate(&script).unwrap();
    let layout = render_mock_market(&market.snapshots, GraphParams { seed: 2, n_seeds: 4, extra_links: 3 }).unwrap();
    let seeds = layout.seeds.clone();
    let expected: Vec<_> = {
        let mut v: Vec<_> = layout.entries.iter().map(|(s, _)| s.clone()).collect();
        v.sort_by(|a, b| a.app.cmp(&b.app));
        v
    };
    let server = MockMarketServer::spawn(Arc::new(layout.into_market()), "127.0.0.1:0").unwrap();
    let config = CrawlConfig { workers: 4, politeness_delay_ms: 0, ..CrawlConfig::default() };
    let out = crawl(&seeds, &TcpMarket { addr: server.addr() }, &config).unwrap();
    assert_eq!(out.report.pages_fetched, 300);
    assert_eq!(out.report.apps_discovered, 300);
    let (mut merged, report) = merge_parsed(vec![out.snapshots]);
    assert!(report.failures.is_empty());
    merged.sort_by(|a, b| a.app.cmp(&b.app));
    assert_eq!(merged, expected);
}
