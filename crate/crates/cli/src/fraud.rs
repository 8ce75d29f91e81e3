use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;

use anyhow::{Context, Result};
use marketpulse_core::anomaly::{
    detect_review_spikes, join_external_flags, permission_flags, permission_version_decoupling_rate, scam_pattern_scan,
    AnomalyReport, AppAnomalies, DangerousPermissionPolicy, FlagSelection, PermissionFlagKind, ScamParams, SpikeParams,
};
use marketpulse_core::timeline::{build_review_timeline, Polarity};
use marketpulse_core::AppId;
use serde_json::json;

use crate::args::AnomalyCommand;
use crate::output::{all_timelines, open_store, outcome, print_json, CsvOut};

pub fn run(cmd: AnomalyCommand) -> Result<()> {
    match cmd {
        AnomalyCommand::Reviews { store, window_days, mad_k, min_abs, positive_min, negative_max, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let params = SpikeParams { window_days, mad_k, min_abs };
            let polarity = Polarity { positive_min, negative_max };
            let mut apps: Vec<AppId> = store.reviewed_apps().cloned().collect();
            apps.sort();
            let mut report = AnomalyReport::new();
            for app in &apps {
                let rt = build_review_timeline(app, &store.reviews_for(app), polarity)?;
                let spikes = detect_review_spikes(&rt, params);
                if !spikes.is_empty() {
                    report.insert(app.clone(), AppAnomalies { spikes, ..Default::default() });
                }
            }
            csv.table(
                "review_spikes.csv",
                &["app", "day", "polarity", "count", "baseline", "score"],
                report.values().flat_map(|a| &a.spikes).map(|s| {
                    vec![
                        s.app.to_string(),
                        s.day.to_string(),
                        format!("{:?}", s.polarity).to_lowercase(),
                        s.count.to_string(),
                        s.baseline.to_string(),
                        s.score.to_string(),
                    ]
                }),
            )?;
            print_json(&json!({
                "params": params,
                "polarity": polarity,
                "apps_scanned": apps.len(),
                "apps_flagged": report.len(),
                "spikes": report.values().map(|a| a.spikes.len()).sum::<usize>(),
                "report": report,
                "csv": csv.files(),
            }))
        }
        AnomalyCommand::Permissions { store, policy, churn_window_days, flags, min_flags, min_reviews, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let policy = match &policy {
                Some(p) => DangerousPermissionPolicy::from_file(p)?,
                None => DangerousPermissionPolicy::builtin(),
            };
            let timelines = all_timelines(&store)?;
            let mut report = AnomalyReport::new();
            for t in &timelines {
                let f = permission_flags(t, Some(&policy), churn_window_days)?;
                if !f.is_empty() {
                    report.insert(t.app.clone(), AppAnomalies { permission_flags: f, ..Default::default() });
                }
            }
            let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
            for f in report.values().flat_map(|a| &a.permission_flags) {
                *by_kind.entry(kind_name(f.kind).into()).or_default() += 1;
            }
            let mut crosstab = None;
            if let Some(path) = &flags {
                let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
                let counts: HashMap<AppId, usize> = store.review_counts();
                let joined = join_external_flags(file, &counts, FlagSelection { min_flags, min_reviews })?;
                let mut table: BTreeMap<&str, usize> = BTreeMap::new();
                for j in &joined {
                    let flagged = report.contains_key(&j.app);
                    let key = match (j.scan_selected, flagged) {
                        (true, true) => "selected_and_flagged",
                        (true, false) => "selected_not_flagged",
                        (false, true) => "unselected_flagged",
                        (false, false) => "unselected_not_flagged",
                    };
                    *table.entry(key).or_default() += 1;
                    report.entry(j.app.clone()).or_default().scan_selected = Some(j.scan_selected);
                }
                crosstab = Some(json!({ "apps_in_flags_file": joined.len(), "table": table }));
            }
            csv.table(
                "permission_flags.csv",
                &["app", "day", "kind", "detail"],
                report.values().flat_map(|a| &a.permission_flags).map(|f| {
                    vec![
                        f.app.to_string(),
                        f.day.to_string(),
                        kind_name(f.kind).into(),
                        f.detail.iter().cloned().collect::<Vec<_>>().join("|"),
                    ]
                }),
            )?;
            print_json(&json!({
                "apps_scanned": timelines.len(),
                "apps_flagged": report.values().filter(|a| !a.permission_flags.is_empty()).count(),
                "flags_by_kind": by_kind,
                "churn_window_days": churn_window_days,
                "external_flags": crosstab,
                "report": report,
                "csv": csv.files(),
            }))
        }
        AnomalyCommand::Scam { store, min_cluster, price_min_cents, price_max_cents, title_similarity, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let params =
                ScamParams { min_cluster, price_band_cents: (price_min_cents, price_max_cents), title_similarity };
            let clusters = scam_pattern_scan(&store.latest_snapshots(), params);
            let reviews = store.review_counts();
            let annotated: Vec<_> = clusters
                .iter()
                .map(|c| {
                    let review_total: usize = c.apps.iter().map(|a| reviews.get(a).copied().unwrap_or(0)).sum();
                    json!({ "cluster": c, "review_count": review_total })
                })
                .collect();
            csv.table(
                "scam_clusters.csv",
                &["developer", "app", "review_count"],
                clusters.iter().flat_map(|c| {
                    c.apps.iter().map(|a| {
                        vec![c.developer.clone(), a.to_string(), reviews.get(a).copied().unwrap_or(0).to_string()]
                    })
                }),
            )?;
            print_json(&json!({
                "params": params,
                "clusters": annotated,
                "csv": csv.files(),
            }))
        }
        AnomalyCommand::Decoupling { store } => {
            let store = open_store(&store.store)?;
            let timelines = all_timelines(&store)?;
            let changes = timelines
                .iter()
                .map(|t| {
                    t.events
                        .iter()
                        .filter(|e| e.kind.is_permission_change())
                        .map(|e| e.day)
                        .collect::<BTreeSet<_>>()
                        .len()
                })
                .sum::<usize>();
            print_json(&json!({
                "apps": timelines.len(),
                "permission_change_days": changes,
                "decoupling_rate": outcome(permission_version_decoupling_rate(&timelines)),
            }))
        }
    }
}

fn kind_name(k: PermissionFlagKind) -> &'static str {
    match k {
        PermissionFlagKind::DangerousAdded => "dangerous_added",
        PermissionFlagKind::ChurnWithinWindow => "churn_within_window",
        PermissionFlagKind::ChangeWithoutVersionChange => "change_without_version_change",
    }
}
