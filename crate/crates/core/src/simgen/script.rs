//! Generator configuration, read from JSON. Every field has a default.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::anomaly::SpikePolarity;
use crate::model::{ListType, PopularityClass, MAX_RANKING_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketScript {
    pub seed: u64,
    pub name: String,
    pub n_developers: usize,
    pub dev_app_alpha: f64,
    pub max_apps_per_developer: u64,
    /// Caps the number of ordinary developer apps so the whole market,
    /// including scripted extras, has this many apps.
    pub target_apps: Option<usize>,
    pub start_date: NaiveDate,
    pub days: u32,
    /// Must divide 24.
    pub snapshot_cadence_hours: u32,
    pub popularity_mix: PopularityMix,
    pub stale_fraction: f64,
    pub paid_fraction: f64,
    pub update_gap_model: UpdateGapModel,
    pub price_change_model: PriceChangeModel,
    pub permission_model: PermissionModel,
    /// Share of permission changes made without a same-day version change.
    pub decoupling_rate: f64,
    pub category_change_fraction: f64,
    pub review_model: ReviewModel,
    pub ratings_per_download: f64,
    pub topk_lists: Vec<TopKListScript>,
    pub fraud_campaigns: Vec<FraudCampaign>,
    pub scam_developers: Vec<ScamDeveloper>,
    pub permission_churn: Vec<PermissionChurn>,
    pub scripted_apps: Vec<ScriptedApp>,
}

impl Default for MarketScript {
    fn default() -> Self {
        Self {
            seed: 1,
            name: "synthetic".into(),
            n_developers: 500,
            dev_app_alpha: 2.5,
            max_apps_per_developer: 1_000,
            target_apps: None,
            start_date: NaiveDate::from_ymd_opt(2014, 10, 1).expect("valid date"),
            days: 30,
            snapshot_cadence_hours: 24,
            popularity_mix: PopularityMix::default(),
            stale_fraction: 0.5,
            paid_fraction: 0.2,
            update_gap_model: UpdateGapModel::default(),
            price_change_model: PriceChangeModel::default(),
            permission_model: PermissionModel::default(),
            decoupling_rate: 0.05,
            category_change_fraction: 0.01,
            review_model: ReviewModel::default(),
            ratings_per_download: 1.0 / 300.0,
            topk_lists: Vec::new(),
            fraud_campaigns: Vec::new(),
            scam_developers: Vec::new(),
            permission_churn: Vec::new(),
            scripted_apps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopularityMix {
    pub unpopular: f64,
    pub popular: f64,
    pub most_popular: f64,
}

impl Default for PopularityMix {
    fn default() -> Self {
        Self { unpopular: 0.7414, popular: 0.2410, most_popular: 0.0176 }
    }
}

impl PopularityMix {
    pub fn get(&self, class: PopularityClass) -> f64 {
        match class {
            PopularityClass::Unpopular => self.unpopular,
            PopularityClass::Popular => self.popular,
            PopularityClass::MostPopular => self.most_popular,
        }
    }
}

/// Per-class values, e.g. mean update gaps or review rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerClass {
    pub unpopular: f64,
    pub popular: f64,
    pub most_popular: f64,
}

impl PerClass {
    pub fn get(&self, class: PopularityClass) -> f64 {
        match class {
            PopularityClass::Unpopular => self.unpopular,
            PopularityClass::Popular => self.popular,
            PopularityClass::MostPopular => self.most_popular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateGapModel {
    /// Mean days between updates of an active app (exponential gaps).
    pub mean_gap_days: PerClass,
}

impl Default for UpdateGapModel {
    fn default() -> Self {
        Self { mean_gap_days: PerClass { unpopular: 60.0, popular: 30.0, most_popular: 14.0 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceChangeModel {
    /// Share of active paid apps that change price during the window.
    pub changer_fraction: f64,
    pub max_changes_per_app: u32,
    pub decrease_share: f64,
    pub decrease_factors: Vec<f64>,
    pub increase_factors: Vec<f64>,
    /// Schedule an update on the day of every price decrease.
    pub decreases_with_update: bool,
}

impl Default for PriceChangeModel {
    fn default() -> Self {
        Self {
            changer_fraction: 0.05,
            max_changes_per_app: 3,
            decrease_share: 0.5,
            decrease_factors: vec![0.5, 0.67, 0.75],
            increase_factors: vec![1.25, 1.5, 2.0],
            decreases_with_update: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermissionModel {
    /// Mean permission-change events per active app over the window.
    pub events_per_app: f64,
}

impl Default for PermissionModel {
    fn default() -> Self {
        Self { events_per_app: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewModel {
    /// Mean reviews per app per day.
    pub base_rate_per_day: PerClass,
    pub positive_share: f64,
    pub negative_share: f64,
}

impl Default for ReviewModel {
    fn default() -> Self {
        Self {
            base_rate_per_day: PerClass { unpopular: 0.02, popular: 0.3, most_popular: 3.0 },
            positive_share: 0.6,
            negative_share: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChurnProfile {
    /// Per-observation probability that the app at a rank swaps with the next
    /// rank, interpolated linearly from the top to the bottom of the list.
    pub swap_top: f64,
    pub swap_bottom: f64,
    /// Per-observation probability that the app at a rank is replaced by an
    /// app from outside the list.
    pub replace_top: f64,
    pub replace_bottom: f64,
}

impl Default for ChurnProfile {
    fn default() -> Self {
        Self { swap_top: 0.01, swap_bottom: 0.3, replace_top: 0.0005, replace_bottom: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopKListScript {
    pub list_type: ListType,
    pub length: usize,
    #[serde(default = "one")]
    pub cadence_hours: u32,
    #[serde(default)]
    pub churn: ChurnProfile,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FraudCampaign {
    pub polarity: SpikePolarity,
    /// Day index (0-based) of the first burst day.
    pub start_day: u32,
    pub duration_days: u32,
    pub daily_volume: u32,
    #[serde(default = "ten")]
    pub baseline_per_day: f64,
}

fn ten() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScamDeveloper {
    pub developer: String,
    pub n_clones: usize,
    pub price_cents: u64,
    pub title_stem: String,
}

/// Removes `permissions` on `remove_day` and requests them again
/// `readd_after_days` later, without version changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermissionChurn {
    pub remove_day: u32,
    #[serde(default = "one")]
    pub readd_after_days: u32,
    pub permissions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedChangeKind {
    /// New version and `last_updated` on that day.
    Update,
    PriceUp,
    PriceDown,
    PermissionsUp,
    PermissionsDown,
    CategoryChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedChange {
    pub day: u32,
    pub change: ScriptedChangeKind,
}

/// An app whose only changes are the listed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedApp {
    #[serde(default)]
    pub price_cents: u64,
    pub changes: Vec<ScriptedChange>,
}

fn unit(name: &str, v: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must lie in [0, 1] (got {v})")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), SimError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must be positive (got {v})")))
    }
}

impl MarketScript {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let script: Self = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    /// Day index of the last observation day.
    pub fn end_date(&self) -> NaiveDate {
        self.start_date + chrono::Duration::days(self.days as i64 - 1)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        if !(self.dev_app_alpha.is_finite() && self.dev_app_alpha > 1.0) {
            return fail(format!("dev_app_alpha must exceed 1 (got {})", self.dev_app_alpha));
        }
        if self.max_apps_per_developer < 1 {
            return fail("max_apps_per_developer must be at least 1".into());
        }
        if !(2..=365).contains(&self.days) {
            return fail(format!("days must lie in 2..=365 (got {})", self.days));
        }
        if self.snapshot_cadence_hours == 0 || 24 % self.snapshot_cadence_hours != 0 {
            return fail(format!("snapshot_cadence_hours must divide 24 (got {})", self.snapshot_cadence_hours));
        }
        let mix = self.popularity_mix;
        for (n, v) in [("unpopular", mix.unpopular), ("popular", mix.popular), ("most_popular", mix.most_popular)] {
            unit(&format!("popularity_mix.{n}"), v)?;
        }
        if (mix.unpopular + mix.popular + mix.most_popular - 1.0).abs() > 1e-9 {
            return fail("popularity_mix proportions must sum to 1".into());
        }
        unit("stale_fraction", self.stale_fraction)?;
        unit("paid_fraction", self.paid_fraction)?;
        unit("decoupling_rate", self.decoupling_rate)?;
        unit("category_change_fraction", self.category_change_fraction)?;
        let pm = &self.price_change_model;
        unit("price_change_model.changer_fraction", pm.changer_fraction)?;
        unit("price_change_model.decrease_share", pm.decrease_share)?;
        if pm.decrease_factors.is_empty() || pm.decrease_factors.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return fail("decrease_factors must be non-empty and inside (0, 1)".into());
        }
        if pm.increase_factors.is_empty() || pm.increase_factors.iter().any(|f| !(f.is_finite() && *f > 1.0)) {
            return fail("increase_factors must be non-empty and above 1".into());
        }
        for c in PopularityClass::ALL {
            positive("update_gap_model.mean_gap_days", self.update_gap_model.mean_gap_days.get(c))?;
            let r = self.review_model.base_rate_per_day.get(c);
            if !(r.is_finite() && r >= 0.0) {
                return fail(format!("review base rate must be non-negative (got {r})"));
            }
        }
        let rm = &self.review_model;
        unit("review_model.positive_share", rm.positive_share)?;
        unit("review_model.negative_share", rm.negative_share)?;
        unit("review_model shares", rm.positive_share + rm.negative_share)?;
        if !(self.permission_model.events_per_app.is_finite() && self.permission_model.events_per_app >= 0.0) {
            return fail("permission_model.events_per_app must be non-negative".into());
        }
        positive("ratings_per_download", self.ratings_per_download)?;

        let mut list_types = BTreeSet::new();
        for l in &self.topk_lists {
            if !list_types.insert(l.list_type) {
                return fail(format!("list {} configured twice", l.list_type.as_str()));
            }
            if !(1..=MAX_RANKING_LEN).contains(&l.length) {
                return fail(format!("list length must lie in 1..={MAX_RANKING_LEN} (got {})", l.length));
            }
            if l.cadence_hours == 0 || !(self.days * 24).is_multiple_of(l.cadence_hours) {
                return fail(format!("list cadence {}h does not divide the window", l.cadence_hours));
            }
            for (n, v) in [
                ("swap_top", l.churn.swap_top),
                ("swap_bottom", l.churn.swap_bottom),
                ("replace_top", l.churn.replace_top),
                ("replace_bottom", l.churn.replace_bottom),
            ] {
                unit(&format!("churn.{n}"), v)?;
            }
        }
        let in_window = |d: u32| d >= 1 && d < self.days;
        for c in &self.fraud_campaigns {
            if c.duration_days == 0 || c.start_day + c.duration_days > self.days {
                return fail("fraud campaign must be non-empty and inside the window".into());
            }
            // the trailing window needs more ordinary days than burst days
            if c.start_day < c.duration_days {
                return fail(format!(
                    "fraud campaign start_day {} must be at least its duration {}",
                    c.start_day, c.duration_days
                ));
            }
            if !(c.baseline_per_day.is_finite() && c.baseline_per_day >= 0.0) {
                return fail("fraud baseline must be non-negative".into());
            }
        }
        for s in &self.scam_developers {
            if s.n_clones == 0 || s.price_cents == 0 || s.developer.trim().is_empty() {
                return fail("scam developer needs a name, clones and a non-zero price".into());
            }
        }
        for p in &self.permission_churn {
            if p.permissions.is_empty() || p.readd_after_days == 0 {
                return fail("permission churn needs permissions and a positive re-add delay".into());
            }
            if !in_window(p.remove_day) || !in_window(p.remove_day + p.readd_after_days) {
                return fail("permission churn days must lie in 1..days".into());
            }
        }
        for a in &self.scripted_apps {
            let mut seen = BTreeSet::new();
            for c in &a.changes {
                if !in_window(c.day) {
                    return fail(format!("scripted change day {} outside 1..{}", c.day, self.days));
                }
                let group = match c.change {
                    ScriptedChangeKind::PriceUp | ScriptedChangeKind::PriceDown => 0,
                    ScriptedChangeKind::PermissionsUp | ScriptedChangeKind::PermissionsDown => 1,
                    ScriptedChangeKind::Update => 2,
                    ScriptedChangeKind::CategoryChange => 3,
                };
                if !seen.insert((c.day, group)) {
                    return fail(format!("conflicting scripted changes on day {}", c.day));
                }
                let is_price = group == 0;
                if is_price && a.price_cents == 0 {
                    return fail("scripted price changes need a paid app".into());
                }
            }
        }
        Ok(())
    }
}
