//! Seeded synthetic market generator with ground truth.
//!
//! A [`MarketScript`] fixes everything: the developer population, popularity
//! and staleness mix, change models, review traffic, ranked lists and
//! scripted fraud. Each app draws from its own keyed random stream. Popularity
//! class and staleness are assigned by low-discrepancy sequences over the app
//! index so realized shares track the script closely even for small markets.
//!
//! All changes take effect on the first snapshot of a day (day index >= 1),
//! so the ground-truth change days are exactly what the diff pipeline sees.

mod graph;
mod sampling;
mod script;

pub use graph::{render_mock_market, GraphParams, MarketLayout};
pub use sampling::{continuous_power_law, continuous_power_law_samples, keyed_rng, kronecker, ZetaSampler};
pub use script::*;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::Serialize;
use thiserror::Error;

use crate::anomaly::SpikePolarity;
use crate::marketmetrics::{MOST_POPULAR_MIN_DOWNLOADS, POPULAR_MIN_DOWNLOADS};
use crate::model::{
    day_start, AppId, AppSnapshot, AttributeKind, DownloadBucket, ListType, PopularityClass, ReviewRecord,
    TopKObservation, SECONDS_PER_HOUR,
};
use crate::snapstore::{DatasetManifest, MANIFEST_FILE, REVIEWS_FILE, SNAPSHOTS_FILE, TOPK_FILE};
use sampling::{GOLDEN_STEP, SQRT2_STEP};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SCRIPT_FILE: &str = "script.json";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid script: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AppRole {
    Regular,
    Scam,
    Fraud,
    Malware,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruthEvent {
    pub day: NaiveDate,
    pub kind: AttributeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PermissionTruth {
    pub day: NaiveDate,
    /// Whether the change shares its day with a version change.
    pub coupled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FraudDay {
    pub day: NaiveDate,
    pub polarity: SpikePolarity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppTruth {
    pub developer: String,
    pub role: AppRole,
    pub class: PopularityClass,
    pub stale: bool,
    pub paid: bool,
    pub update_days: Vec<NaiveDate>,
    pub events: Vec<TruthEvent>,
    pub permission_events: Vec<PermissionTruth>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fraud_days: Vec<FraudDay>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scam_cluster: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub name: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub app_count: usize,
    /// Apps per ordinary developer before any `target_apps` cap.
    pub developer_app_counts: Vec<u64>,
    pub class_counts: BTreeMap<PopularityClass, usize>,
    pub stale_count: usize,
    pub ratings_per_download: f64,
    pub decoupling_rate: f64,
    pub apps: BTreeMap<AppId, AppTruth>,
}

impl GroundTruth {
    pub fn class_share(&self, class: PopularityClass) -> f64 {
        self.class_counts.get(&class).copied().unwrap_or(0) as f64 / self.app_count.max(1) as f64
    }

    pub fn stale_share(&self) -> f64 {
        self.stale_count as f64 / self.app_count.max(1) as f64
    }
}

/// Receives generated records in deterministic order.
pub trait RecordSink {
    fn snapshot(&mut self, s: &AppSnapshot) -> Result<(), SimError>;
    fn review(&mut self, r: &ReviewRecord) -> Result<(), SimError>;
    fn topk(&mut self, o: &TopKObservation) -> Result<(), SimError>;
}

#[derive(Debug, Clone, Default)]
pub struct GeneratedMarket {
    pub snapshots: Vec<AppSnapshot>,
    pub reviews: Vec<ReviewRecord>,
    pub topk: Vec<TopKObservation>,
}

impl RecordSink for GeneratedMarket {
    fn snapshot(&mut self, s: &AppSnapshot) -> Result<(), SimError> {
        self.snapshots.push(s.clone());
        Ok(())
    }

    fn review(&mut self, r: &ReviewRecord) -> Result<(), SimError> {
        self.reviews.push(r.clone());
        Ok(())
    }

    fn topk(&mut self, o: &TopKObservation) -> Result<(), SimError> {
        self.topk.push(o.clone());
        Ok(())
    }
}

struct JsonlSink {
    files: [(PathBuf, BufWriter<File>); 3],
}

impl JsonlSink {
    fn create(dir: &Path) -> Result<Self, SimError> {
        let open = |name: &str| -> Result<(PathBuf, BufWriter<File>), SimError> {
            let path = dir.join(name);
            let f = File::create(&path).map_err(io_err(&path))?;
            Ok((path, BufWriter::with_capacity(1 << 20, f)))
        };
        Ok(Self { files: [open(SNAPSHOTS_FILE)?, open(REVIEWS_FILE)?, open(TOPK_FILE)?] })
    }

    fn write<T: Serialize>(&mut self, i: usize, value: &T) -> Result<(), SimError> {
        let (path, w) = &mut self.files[i];
        serde_json::to_writer(&mut *w, value).map_err(|e| io_err(path)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))
    }

    fn finish(self) -> Result<(), SimError> {
        for (path, mut w) in self.files {
            w.flush().map_err(io_err(&path))?;
        }
        Ok(())
    }
}

impl RecordSink for JsonlSink {
    fn snapshot(&mut self, s: &AppSnapshot) -> Result<(), SimError> {
        self.write(0, s)
    }

    fn review(&mut self, r: &ReviewRecord) -> Result<(), SimError> {
        self.write(1, r)
    }

    fn topk(&mut self, o: &TopKObservation) -> Result<(), SimError> {
        self.write(2, o)
    }
}

const PERMISSION_POOL: [&str; 17] = [
    "android.permission.ACCESS_NETWORK_STATE",
    "android.permission.WAKE_LOCK",
    "android.permission.VIBRATE",
    "android.permission.ACCESS_WIFI_STATE",
    "android.permission.RECEIVE_BOOT_COMPLETED",
    "com.android.vending.BILLING",
    "android.permission.GET_TASKS",
    "android.permission.READ_PHONE_STATE",
    "android.permission.ACCESS_FINE_LOCATION",
    "android.permission.ACCESS_COARSE_LOCATION",
    "android.permission.CAMERA",
    "android.permission.READ_CONTACTS",
    "android.permission.WRITE_EXTERNAL_STORAGE",
    "android.permission.SEND_SMS",
    "android.permission.RECORD_AUDIO",
    "android.permission.GET_ACCOUNTS",
    "android.permission.READ_CALENDAR",
];
const BASE_PERMISSION: &str = "android.permission.INTERNET";

const CATEGORIES: [&str; 16] = [
    "Arcade",
    "Books",
    "Business",
    "Communication",
    "Education",
    "Entertainment",
    "Finance",
    "Health",
    "Lifestyle",
    "Music",
    "Photography",
    "Productivity",
    "Puzzle",
    "Social",
    "Tools",
    "Travel",
];

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "zen", "tra", "vel", "qui", "dor", "pan", "rix", "sol", "ume", "bri", "cto", "fen", "gal", "hop",
    "jax", "nur", "oxi", "pli", "sky", "tor", "wex",
];

const PRICE_POINTS: [u64; 10] = [99, 149, 199, 249, 299, 399, 499, 699, 999, 1_999];

const REVIEW_TEXT: [&str; 5] = ["terrible", "poor", "okay", "good", "excellent"];

fn class_cap(class: PopularityClass) -> u64 {
    match class {
        PopularityClass::Unpopular => POPULAR_MIN_DOWNLOADS - 1,
        PopularityClass::Popular => MOST_POPULAR_MIN_DOWNLOADS - 1,
        PopularityClass::MostPopular => 4_999_999,
    }
}

fn class_floor(class: PopularityClass) -> u64 {
    match class {
        PopularityClass::Unpopular => 0,
        PopularityClass::Popular => POPULAR_MIN_DOWNLOADS,
        PopularityClass::MostPopular => MOST_POPULAR_MIN_DOWNLOADS,
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
    w[..1].make_ascii_uppercase();
    w
}

#[derive(Debug, Clone, Default)]
struct DayActions {
    update: bool,
    price: Option<u64>,
    added: BTreeSet<String>,
    removed: BTreeSet<String>,
    /// `Some(coupled)` when the day carries a permission change.
    permission_coupled: Option<bool>,
    category: Option<String>,
}

#[derive(Debug, Clone)]
struct State {
    price: u64,
    installs: u64,
    bucket: DownloadBucket,
    rating_count: u64,
    version: (u32, u32, u32),
    permissions: BTreeSet<String>,
    category: String,
    last_updated: NaiveDate,
}

struct AppPlan {
    id: AppId,
    developer: String,
    role: AppRole,
    class: PopularityClass,
    stale: bool,
    title: String,
    rating_avg: f64,
    size_bytes: u64,
    offset_secs: i64,
    growth: f64,
    cap: u64,
    ratings_factor: f64,
    state: State,
    actions: BTreeMap<u32, DayActions>,
    review_rate: f64,
    review_split: (f64, f64),
    bursts: BTreeMap<u32, (SpikePolarity, u32)>,
    scam_cluster: Option<String>,
}

struct Blueprint {
    id: AppId,
    developer: String,
    role: AppRole,
    role_index: usize,
    title: Option<String>,
    forced_price: Option<u64>,
    scam_cluster: Option<String>,
}

fn developer_counts(script: &MarketScript) -> Vec<u64> {
    let sampler = ZetaSampler::new(script.dev_app_alpha, script.max_apps_per_developer);
    (0..script.n_developers).map(|i| sampler.sample(&mut keyed_rng(script.seed, &format!("developer/{i}")))).collect()
}

/// Discrete power-law app counts per ordinary developer.
pub fn developer_app_counts(script: &MarketScript) -> Result<Vec<u64>, SimError> {
    script.validate()?;
    Ok(developer_counts(script))
}

fn app_blueprints(script: &MarketScript, counts: &[u64]) -> Result<Vec<Blueprint>, SimError> {
    let special = script.scam_developers.iter().map(|s| s.n_clones).sum::<usize>()
        + script.fraud_campaigns.len()
        + script.permission_churn.len()
        + script.scripted_apps.len();
    let regular_cap = match script.target_apps {
        Some(t) if t < special => {
            return Err(SimError::Config(format!("target_apps {t} is below the {special} scripted apps")))
        }
        Some(t) => t - special,
        None => usize::MAX,
    };
    let mut blueprints = Vec::new();
    'dev: for (d, &n) in counts.iter().enumerate() {
        for j in 0..n {
            if blueprints.len() >= regular_cap {
                break 'dev;
            }
            blueprints.push(Blueprint {
                id: AppId::new(format!("com.d{d:05}.app{j:04}")).expect("valid id"),
                developer: format!("dev{d:05}"),
                role: AppRole::Regular,
                role_index: 0,
                title: None,
                forced_price: None,
                scam_cluster: None,
            });
        }
    }
    if let Some(t) = script.target_apps {
        if blueprints.len() + special < t {
            return Err(SimError::Config(format!(
                "developers supply {} apps, fewer than target_apps {t}",
                blueprints.len() + special
            )));
        }
    }
    for (k, s) in script.scam_developers.iter().enumerate() {
        for i in 0..s.n_clones {
            blueprints.push(Blueprint {
                id: AppId::new(format!("com.scam{k}.app{i:03}")).expect("valid id"),
                developer: s.developer.clone(),
                role: AppRole::Scam,
                role_index: k,
                title: Some(format!("{} {}", s.title_stem, i + 1)),
                forced_price: Some(s.price_cents),
                scam_cluster: Some(s.developer.clone()),
            });
        }
    }
    let extra = |role: AppRole, prefix: &str, n: usize, blueprints: &mut Vec<Blueprint>| {
        for i in 0..n {
            blueprints.push(Blueprint {
                id: AppId::new(format!("com.{prefix}.app{i:03}")).expect("valid id"),
                developer: format!("{prefix}-studio"),
                role,
                role_index: i,
                title: None,
                forced_price: None,
                scam_cluster: None,
            });
        }
    };
    extra(AppRole::Fraud, "fraud", script.fraud_campaigns.len(), &mut blueprints);
    extra(AppRole::Malware, "malware", script.permission_churn.len(), &mut blueprints);
    extra(AppRole::Scripted, "scripted", script.scripted_apps.len(), &mut blueprints);
    for (i, a) in script.scripted_apps.iter().enumerate() {
        let idx = blueprints.len() - script.scripted_apps.len() + i;
        blueprints[idx].forced_price = Some(a.price_cents);
    }
    Ok(blueprints)
}

fn class_of(script: &MarketScript, index: usize) -> PopularityClass {
    let u = kronecker(index, GOLDEN_STEP);
    let mix = script.popularity_mix;
    if u < mix.unpopular {
        PopularityClass::Unpopular
    } else if u < mix.unpopular + mix.popular {
        PopularityClass::Popular
    } else {
        PopularityClass::MostPopular
    }
}

fn rating_count(bucket: DownloadBucket, ratio: f64, factor: f64) -> u64 {
    (bucket.midpoint() * ratio * factor).round() as u64
}

fn scale_price(old: u64, factor: f64) -> u64 {
    let mut new = ((old as f64) * factor).round().max(1.0) as u64;
    if new == old {
        new = if factor < 1.0 { old.saturating_sub(1).max(1) } else { old + 1 };
    }
    new
}

fn random_day(rng: &mut ChaCha8Rng, days: u32, taken: &BTreeSet<u32>) -> Option<u32> {
    let free: Vec<u32> = (1..days).filter(|d| !taken.contains(d)).collect();
    free.choose(rng).copied()
}

fn plan_app(script: &MarketScript, index: usize, blueprint: Blueprint) -> AppPlan {
    let mut rng = keyed_rng(script.seed, &format!("app/{}", blueprint.id));
    let days = script.days;
    let class = class_of(script, index);
    let stale = blueprint.role != AppRole::Scripted && kronecker(index, SQRT2_STEP) < script.stale_fraction;
    let paid = match blueprint.forced_price {
        Some(p) => p > 0,
        None => rng.random_bool(script.paid_fraction),
    };
    let price = match blueprint.forced_price {
        Some(p) => p,
        None if paid => *PRICE_POINTS.choose(&mut rng).expect("non-empty"),
        None => 0,
    };
    let title =
        blueprint.title.clone().unwrap_or_else(|| format!("{} {}", pseudo_word(&mut rng), pseudo_word(&mut rng)));
    let category = CATEGORIES.choose(&mut rng).expect("non-empty").to_string();
    let floor = class_floor(class);
    let cap = class_cap(class);
    let installs = {
        let lo = ((floor + 1) as f64).ln();
        let hi = ((cap + 1) as f64).ln();
        ((rng.random_range(lo..hi)).exp() as u64).saturating_sub(1).clamp(floor, cap)
    };
    let bucket = DownloadBucket::containing(installs).expect("installs on ladder");
    let ratings_factor = rng.random_range(0.95..1.05);
    let last_updated = if stale {
        script.start_date - chrono::Duration::days(366 + rng.random_range(0..=700))
    } else {
        script.start_date - chrono::Duration::days(rng.random_range(0..=(365 - days as i64)))
    };
    let mut permissions: BTreeSet<String> = [BASE_PERMISSION.to_string()].into_iter().collect();
    for _ in 0..rng.random_range(0..=3) {
        permissions.insert(PERMISSION_POOL.choose(&mut rng).expect("non-empty").to_string());
    }
    let growth = if blueprint.role == AppRole::Scripted { 0.0 } else { rng.random_range(0.0..0.03) };
    let offset_secs = rng.random_range(0..(script.snapshot_cadence_hours as i64 * SECONDS_PER_HOUR));
    let rating_avg = rng.random_range(250..=490) as f64 / 100.0;
    let size_bytes = rng.random_range(500_000..50_000_000);
    let state = State {
        price,
        installs,
        bucket,
        rating_count: rating_count(bucket, script.ratings_per_download, ratings_factor),
        version: (1, rng.random_range(0..10), 0),
        permissions,
        category,
        last_updated,
    };

    let mut plan = AppPlan {
        review_rate: script.review_model.base_rate_per_day.get(class),
        review_split: (script.review_model.positive_share, script.review_model.negative_share),
        id: blueprint.id,
        developer: blueprint.developer,
        role: blueprint.role,
        class,
        stale,
        title,
        rating_avg,
        size_bytes,
        offset_secs,
        growth,
        cap,
        ratings_factor,
        state,
        actions: BTreeMap::new(),
        bursts: BTreeMap::new(),
        scam_cluster: blueprint.scam_cluster,
    };
    match plan.role {
        AppRole::Scripted => schedule_scripted(&mut plan, &script.scripted_apps[blueprint.role_index]),
        _ => schedule_random(&mut plan, script, blueprint.role_index, &mut rng),
    }
    plan
}

fn schedule_scripted(plan: &mut AppPlan, scripted: &ScriptedApp) {
    plan.review_rate = 0.0;
    for p in ["android.permission.CAMERA", "android.permission.VIBRATE", "android.permission.READ_CONTACTS"] {
        plan.state.permissions.insert(p.to_string());
    }
    let mut changes = scripted.changes.clone();
    changes.sort_by_key(|c| c.day);
    let mut price = plan.state.price;
    let mut perms = plan.state.permissions.clone();
    let mut category = plan.state.category.clone();
    for c in changes {
        let a = plan.actions.entry(c.day).or_default();
        match c.change {
            ScriptedChangeKind::Update => a.update = true,
            ScriptedChangeKind::PriceUp => {
                price = scale_price(price, 1.5);
                a.price = Some(price);
            }
            ScriptedChangeKind::PriceDown => {
                price = scale_price(price, 0.5);
                a.price = Some(price);
            }
            ScriptedChangeKind::PermissionsUp => {
                if let Some(p) = PERMISSION_POOL.iter().find(|p| !perms.contains(**p)) {
                    perms.insert(p.to_string());
                    a.added.insert(p.to_string());
                }
            }
            ScriptedChangeKind::PermissionsDown => {
                if let Some(p) = perms.iter().find(|p| *p != BASE_PERMISSION).cloned() {
                    perms.remove(&p);
                    a.removed.insert(p);
                }
            }
            ScriptedChangeKind::CategoryChange => {
                let i = CATEGORIES.iter().position(|c| *c == category).unwrap_or(0);
                category = CATEGORIES[(i + 1) % CATEGORIES.len()].to_string();
                a.category = Some(category.clone());
            }
        }
    }
    let update_days: BTreeSet<u32> = plan.actions.iter().filter(|(_, a)| a.update).map(|(d, _)| *d).collect();
    for (d, a) in plan.actions.iter_mut() {
        if !a.added.is_empty() || !a.removed.is_empty() {
            a.permission_coupled = Some(update_days.contains(d));
        }
    }
}

fn schedule_random(plan: &mut AppPlan, script: &MarketScript, role_index: usize, rng: &mut ChaCha8Rng) {
    let days = script.days;
    let active = !plan.stale;
    let paid = plan.state.price > 0;
    let mut updates: BTreeSet<u32> = BTreeSet::new();
    let mut reserved: BTreeSet<u32> = BTreeSet::new();

    if plan.role == AppRole::Malware {
        let churn = &script.permission_churn[role_index];
        for p in &churn.permissions {
            plan.state.permissions.insert(p.clone());
        }
        reserved.insert(churn.remove_day);
        reserved.insert(churn.remove_day + churn.readd_after_days);
    }

    if active {
        let mean = script.update_gap_model.mean_gap_days.get(plan.class);
        let gaps = Exp::new(1.0 / mean).expect("positive rate");
        let mut t = rng.random_range(0.0..mean);
        loop {
            let day = t.ceil() as u32;
            if day >= days {
                break;
            }
            if day >= 1 && !reserved.contains(&day) {
                updates.insert(day);
            }
            t += gaps.sample(rng).max(1.0);
        }
    }

    let pm = &script.price_change_model;
    if active && paid && plan.role == AppRole::Regular && rng.random_bool(pm.changer_fraction) {
        let n = rng.random_range(1..=pm.max_changes_per_app.max(1));
        let mut change_days = BTreeSet::new();
        for _ in 0..n {
            if let Some(d) = random_day(rng, days, &change_days) {
                change_days.insert(d);
            }
        }
        let mut price = plan.state.price;
        for d in change_days {
            let decrease = rng.random_bool(pm.decrease_share);
            let factors = if decrease { &pm.decrease_factors } else { &pm.increase_factors };
            price = scale_price(price, *factors.choose(rng).expect("validated non-empty"));
            plan.actions.entry(d).or_default().price = Some(price);
            if decrease && pm.decreases_with_update {
                updates.insert(d);
            }
        }
    }

    let mut perm_days: BTreeMap<u32, bool> = BTreeMap::new();
    if active && plan.role == AppRole::Regular && script.permission_model.events_per_app > 0.0 {
        let n = Poisson::new(script.permission_model.events_per_app).expect("positive rate").sample(rng) as usize;
        let coupled: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= script.decoupling_rate).collect();
        for _ in coupled.iter().filter(|c| **c) {
            let taken: BTreeSet<u32> = perm_days.keys().copied().collect();
            if let Some(d) = random_day(rng, days, &taken) {
                perm_days.insert(d, true);
                updates.insert(d);
            }
        }
        for _ in coupled.iter().filter(|c| !**c) {
            let taken: BTreeSet<u32> = perm_days.keys().chain(updates.iter()).copied().collect();
            if let Some(d) = random_day(rng, days, &taken) {
                perm_days.insert(d, false);
            }
        }
    }

    let mut perms = plan.state.permissions.clone();
    for (&d, &coupled) in &perm_days {
        let removable: Vec<String> = perms.iter().filter(|p| *p != BASE_PERMISSION).cloned().collect();
        let addable: Vec<&str> = PERMISSION_POOL.iter().copied().filter(|p| !perms.contains(*p)).collect();
        let remove = !removable.is_empty() && (addable.is_empty() || rng.random_bool(0.5));
        let a = plan.actions.entry(d).or_default();
        if remove {
            let k = rng.random_range(1..=removable.len().min(2));
            for p in removable.choose_multiple(rng, k) {
                perms.remove(p);
                a.removed.insert(p.clone());
            }
        } else {
            let k = rng.random_range(1..=addable.len().min(2));
            for p in addable.choose_multiple(rng, k) {
                perms.insert(p.to_string());
                a.added.insert(p.to_string());
            }
        }
        a.permission_coupled = Some(coupled);
    }

    if plan.role == AppRole::Malware {
        let churn = &script.permission_churn[role_index];
        let set: BTreeSet<String> = churn.permissions.iter().cloned().collect();
        let a = plan.actions.entry(churn.remove_day).or_default();
        a.removed = set.clone();
        a.permission_coupled = Some(false);
        let a = plan.actions.entry(churn.remove_day + churn.readd_after_days).or_default();
        a.added = set;
        a.permission_coupled = Some(false);
    }

    if plan.role == AppRole::Regular && rng.random_bool(script.category_change_fraction) {
        let d = rng.random_range(1..days);
        let others: Vec<&str> = CATEGORIES.iter().copied().filter(|c| *c != plan.state.category).collect();
        plan.actions.entry(d).or_default().category = Some(others.choose(rng).expect("non-empty").to_string());
    }

    for d in updates {
        plan.actions.entry(d).or_default().update = true;
    }

    if plan.role == AppRole::Fraud {
        let c = &script.fraud_campaigns[role_index];
        plan.review_rate = c.baseline_per_day;
        plan.review_split = (0.5, 0.3);
        for d in c.start_day..c.start_day + c.duration_days {
            plan.bursts.insert(d, (c.polarity, c.daily_volume));
        }
    }
}

impl AppPlan {
    fn snapshot(&self, fetch_time: i64) -> AppSnapshot {
        let (ma, mi, pa) = self.state.version;
        AppSnapshot {
            app: self.id.clone(),
            fetch_time,
            title: self.title.clone(),
            developer: self.developer.clone(),
            category: self.state.category.clone(),
            price_cents: self.state.price,
            free: self.state.price == 0,
            downloads: self.state.bucket,
            rating_avg: self.rating_avg,
            rating_count: self.state.rating_count,
            version: format!("{ma}.{mi}.{pa}"),
            last_updated: self.state.last_updated,
            size_bytes: self.size_bytes,
            permissions: self.state.permissions.clone(),
        }
    }

    /// Applies day `d`'s growth and scripted actions, returning the change kinds.
    fn advance(&mut self, d: u32, date: NaiveDate, ratio: f64) -> Vec<AttributeKind> {
        let mut kinds = Vec::new();
        let s = &mut self.state;
        let grown = (s.installs + (s.installs as f64 * self.growth) as u64).min(self.cap);
        if grown != s.installs {
            s.installs = grown;
            let bucket = DownloadBucket::containing(grown).expect("installs on ladder");
            if bucket != s.bucket {
                s.bucket = bucket;
                kinds.push(AttributeKind::DownloadsUp);
                let rc = rating_count(bucket, ratio, self.ratings_factor);
                if rc > s.rating_count {
                    kinds.push(AttributeKind::ReviewCountUp);
                }
                s.rating_count = rc;
            }
        }
        let Some(a) = self.actions.get(&d) else {
            return kinds;
        };
        if let Some(p) = a.price {
            kinds.push(if p < s.price { AttributeKind::PriceDown } else { AttributeKind::PriceUp });
            s.price = p;
        }
        if a.update {
            s.version.2 += 1;
            s.last_updated = date;
            kinds.push(AttributeKind::VersionUp);
            kinds.push(AttributeKind::LastUpdatedChange);
        }
        if a.permission_coupled.is_some() {
            let before = s.permissions.len();
            for p in &a.removed {
                s.permissions.remove(p);
            }
            s.permissions.extend(a.added.iter().cloned());
            kinds.push(match s.permissions.len().cmp(&before) {
                std::cmp::Ordering::Greater => AttributeKind::PermissionsUp,
                std::cmp::Ordering::Less => AttributeKind::PermissionsDown,
                std::cmp::Ordering::Equal => AttributeKind::PermissionsReplaced,
            });
        }
        if let Some(c) = &a.category {
            s.category = c.clone();
            kinds.push(AttributeKind::CategoryChange);
        }
        kinds
    }

    fn truth(&self, script: &MarketScript) -> AppTruth {
        let date = |d: u32| script.start_date + chrono::Duration::days(d as i64);
        AppTruth {
            developer: self.developer.clone(),
            role: self.role,
            class: self.class,
            stale: self.stale,
            paid: self.state.price > 0,
            update_days: self.actions.iter().filter(|(_, a)| a.update).map(|(d, _)| date(*d)).collect(),
            events: Vec::new(),
            permission_events: self
                .actions
                .iter()
                .filter_map(|(d, a)| a.permission_coupled.map(|coupled| PermissionTruth { day: date(*d), coupled }))
                .collect(),
            fraud_days: self
                .bursts
                .iter()
                .map(|(d, (polarity, _))| FraudDay { day: date(*d), polarity: *polarity })
                .collect(),
            scam_cluster: self.scam_cluster.clone(),
        }
    }

    fn reviews(&self, rng: &mut ChaCha8Rng, d: u32, date: NaiveDate, out: &mut Vec<ReviewRecord>) {
        out.clear();
        let mut n = 0u32;
        let mut push = |rating: u8, reviewer: String, out: &mut Vec<ReviewRecord>| {
            out.push(ReviewRecord {
                app: self.id.clone(),
                review_id: format!("{d:03}-{n:05}"),
                reviewer_id: reviewer,
                date,
                rating,
                title: String::new(),
                text: REVIEW_TEXT[rating as usize - 1].to_string(),
            });
            n += 1;
        };
        if self.review_rate > 0.0 {
            let k = Poisson::new(self.review_rate).expect("positive rate").sample(rng) as u32;
            for _ in 0..k {
                let u: f64 = rng.random();
                let rating = if u < self.review_split.0 {
                    rng.random_range(4..=5)
                } else if u < self.review_split.0 + self.review_split.1 {
                    rng.random_range(1..=2)
                } else {
                    3
                };
                let reviewer = format!("u{:08x}", rng.random::<u32>());
                push(rating, reviewer, out);
            }
        }
        if let Some((polarity, volume)) = self.bursts.get(&d) {
            let rating = match polarity {
                SpikePolarity::Positive => 5,
                SpikePolarity::Negative => 1,
            };
            for _ in 0..*volume {
                let reviewer = format!("s{:08x}", rng.random::<u32>());
                push(rating, reviewer, out);
            }
        }
    }
}

struct RankedList {
    list_type: ListType,
    cadence_hours: u32,
    churn: ChurnProfile,
    ranking: Vec<AppId>,
    outside: Vec<AppId>,
    rng: ChaCha8Rng,
}

impl RankedList {
    fn new(script: &MarketScript, cfg: &TopKListScript, plans: &[AppPlan]) -> Result<Self, SimError> {
        let mut pool: Vec<&AppPlan> = plans
            .iter()
            .filter(|p| match cfg.list_type {
                ListType::Free | ListType::NewFree => p.state.price == 0,
                ListType::Paid | ListType::NewPaid => p.state.price > 0,
                ListType::Gross => true,
            })
            .collect();
        if pool.len() <= cfg.length {
            return Err(SimError::Config(format!(
                "list {} needs more than {} eligible apps, market has {}",
                cfg.list_type.as_str(),
                cfg.length,
                pool.len()
            )));
        }
        pool.sort_by(|a, b| b.state.installs.cmp(&a.state.installs).then_with(|| a.id.cmp(&b.id)));
        let ids: Vec<AppId> = pool.iter().map(|p| p.id.clone()).collect();
        Ok(Self {
            list_type: cfg.list_type,
            cadence_hours: cfg.cadence_hours,
            churn: cfg.churn,
            ranking: ids[..cfg.length].to_vec(),
            outside: ids[cfg.length..].to_vec(),
            rng: keyed_rng(script.seed, &format!("topk/{}", cfg.list_type.as_str())),
        })
    }

    fn step(&mut self) {
        let k = self.ranking.len();
        let at = |top: f64, bottom: f64, i: usize| {
            if k == 1 {
                top
            } else {
                top + (bottom - top) * i as f64 / (k - 1) as f64
            }
        };
        for i in 0..k {
            if self.rng.random_bool(at(self.churn.replace_top, self.churn.replace_bottom, i)) {
                let j = self.rng.random_range(0..self.outside.len());
                std::mem::swap(&mut self.ranking[i], &mut self.outside[j]);
            }
        }
        for i in 0..k.saturating_sub(1) {
            if self.rng.random_bool(at(self.churn.swap_top, self.churn.swap_bottom, i)) {
                self.ranking.swap(i, i + 1);
            }
        }
    }
}

/// Streams the market described by `script` into `sink` and returns its ground truth.
pub fn generate_into(script: &MarketScript, sink: &mut dyn RecordSink) -> Result<GroundTruth, SimError> {
    script.validate()?;
    let counts = developer_counts(script);
    let blueprints = app_blueprints(script, &counts)?;
    let mut plans: Vec<AppPlan> =
        blueprints.into_iter().enumerate().map(|(i, blueprint)| plan_app(script, i, blueprint)).collect();
    plans.sort_by(|a, b| a.id.cmp(&b.id));
    let mut truth: BTreeMap<AppId, AppTruth> = plans.iter().map(|p| (p.id.clone(), p.truth(script))).collect();
    let mut lists =
        script.topk_lists.iter().map(|cfg| RankedList::new(script, cfg, &plans)).collect::<Result<Vec<_>, _>>()?;

    let mut emit_order: Vec<usize> = (0..plans.len()).collect();
    emit_order.sort_by_key(|&i| plans[i].offset_secs);
    let mut review_rngs: Vec<ChaCha8Rng> =
        plans.iter().map(|p| keyed_rng(script.seed, &format!("reviews/{}", p.id))).collect();
    let cadence = script.snapshot_cadence_hours as i64 * SECONDS_PER_HOUR;
    let steps_per_day = 24 / script.snapshot_cadence_hours as i64;
    let mut day_reviews = Vec::new();

    for d in 0..script.days {
        let date = script.start_date + chrono::Duration::days(d as i64);
        if d > 0 {
            for p in plans.iter_mut() {
                let kinds = p.advance(d, date, script.ratings_per_download);
                let t = truth.get_mut(&p.id).expect("truth per app");
                t.events.extend(kinds.into_iter().map(|kind| TruthEvent { day: date, kind }));
            }
        }
        for k in 0..steps_per_day {
            let step = day_start(date) + k * cadence;
            for &i in &emit_order {
                sink.snapshot(&plans[i].snapshot(step + plans[i].offset_secs))?;
            }
        }
        for (p, rng) in plans.iter().zip(review_rngs.iter_mut()) {
            p.reviews(rng, d, date, &mut day_reviews);
            for r in &day_reviews {
                sink.review(r)?;
            }
        }
    }

    let start = day_start(script.start_date);
    for h in 0..(script.days as i64 * 24) {
        for list in lists.iter_mut() {
            if h % list.cadence_hours as i64 != 0 {
                continue;
            }
            if h > 0 {
                list.step();
            }
            sink.topk(&TopKObservation {
                list_type: list.list_type,
                fetch_time: start + h * SECONDS_PER_HOUR,
                ranking: list.ranking.clone(),
            })?;
        }
    }

    let mut class_counts: BTreeMap<PopularityClass, usize> = PopularityClass::ALL.iter().map(|c| (*c, 0)).collect();
    for t in truth.values() {
        *class_counts.entry(t.class).or_default() += 1;
    }
    Ok(GroundTruth {
        seed: script.seed,
        name: script.name.clone(),
        start_date: script.start_date,
        end_date: script.end_date(),
        app_count: truth.len(),
        developer_app_counts: counts,
        stale_count: truth.values().filter(|t| t.stale).count(),
        class_counts,
        ratings_per_download: script.ratings_per_download,
        decoupling_rate: script.decoupling_rate,
        apps: std::mem::take(&mut truth),
    })
}

pub fn generate(script: &MarketScript) -> Result<(GeneratedMarket, GroundTruth), SimError> {
    let mut market = GeneratedMarket::default();
    let truth = generate_into(script, &mut market)?;
    Ok((market, truth))
}

pub fn manifest_for(script: &MarketScript) -> DatasetManifest {
    DatasetManifest {
        name: script.name.clone(),
        currency: "USD".into(),
        observation_start: script.start_date,
        observation_end: script.end_date(),
        snapshot_cadence_hint: format!("{}h", script.snapshot_cadence_hours),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SimError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path)(e.into()))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Writes the three record logs, `manifest.json`, `script.json` and
/// `ground_truth.json` into `dir`.
pub fn write_dataset(script: &MarketScript, dir: impl AsRef<Path>) -> Result<GroundTruth, SimError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut sink = JsonlSink::create(dir)?;
    let truth = generate_into(script, &mut sink)?;
    sink.finish()?;
    write_json(&dir.join(MANIFEST_FILE), &manifest_for(script))?;
    write_json(&dir.join(SCRIPT_FILE), script)?;
    write_json(&dir.join(GROUND_TRUTH_FILE), &truth)?;
    Ok(truth)
}
