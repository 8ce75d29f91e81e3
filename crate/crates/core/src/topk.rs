//! Top-k list dynamics: lifecycle six-tuples, the inverse rank measure,
//! overlap statistics, rank occupancy and lifetime at rank.
//!
//! Ranks are 1-based and smaller is better. Observations are counted, not
//! interpolated, so an hourly series with gaps counts only observed hours.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::model::{AppId, TopKObservation};
use crate::snapstore::RankedListSeries;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopkError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LifecycleSummary {
    pub app: AppId,
    pub debut: usize,
    /// Observations from debut through first attainment of the peak, inclusive.
    pub hrs2peak: usize,
    pub peak: usize,
    /// Observations in which the app is present.
    pub tothrs: usize,
    pub exit: usize,
    /// Distinct ranks occupied.
    pub rankdyn: usize,
    /// Index of the debut observation in the series.
    pub first_seen: usize,
    pub last_seen: usize,
    /// Present in the first observation, so the true debut is unobserved.
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LifecycleMode {
    /// One summary per app over its whole span; exits and re-entries do not
    /// reset the debut.
    #[default]
    WholeSpan,
    /// One summary per contiguous run of presence.
    Episodes,
}

fn presence(series: &RankedListSeries) -> HashMap<&AppId, Vec<(usize, usize)>> {
    let mut out: HashMap<&AppId, Vec<(usize, usize)>> = HashMap::new();
    for (n, obs) in series.observations.iter().enumerate() {
        for (i, app) in obs.ranking.iter().enumerate() {
            out.entry(app).or_default().push((n, i + 1));
        }
    }
    out
}

fn summarize(app: &AppId, life: &[(usize, usize)]) -> LifecycleSummary {
    let (first_seen, debut) = life[0];
    let (last_seen, exit) = life[life.len() - 1];
    let (peak_at, peak) =
        life.iter().copied().fold((first_seen, debut), |best, (n, r)| if r < best.1 { (n, r) } else { best });
    let ranks: BTreeSet<usize> = life.iter().map(|(_, r)| *r).collect();
    LifecycleSummary {
        app: app.clone(),
        debut,
        hrs2peak: peak_at - first_seen + 1,
        peak,
        tothrs: life.len(),
        exit,
        rankdyn: ranks.len(),
        first_seen,
        last_seen,
        censored: first_seen == 0,
    }
}

/// Lifecycle summaries of every app that debuts after the first observation.
/// Apps already listed in the first observation have no observable debut and
/// are left out.
pub fn lifecycle_summaries(series: &RankedListSeries, mode: LifecycleMode) -> Result<Vec<LifecycleSummary>, TopkError> {
    let mut all = lifecycle_summaries_with_censored(series, mode)?;
    all.retain(|s| !s.censored);
    Ok(all)
}

/// Like [`lifecycle_summaries`] but keeps censored apps, flagged as such.
pub fn lifecycle_summaries_with_censored(
    series: &RankedListSeries,
    mode: LifecycleMode,
) -> Result<Vec<LifecycleSummary>, TopkError> {
    if series.len() < 2 {
        return Err(TopkError::InsufficientData(format!(
            "lifecycle needs at least 2 observations, got {}",
            series.len()
        )));
    }
    let mut out = Vec::new();
    for (app, life) in presence(series) {
        match mode {
            LifecycleMode::WholeSpan => out.push(summarize(app, &life)),
            LifecycleMode::Episodes => {
                let mut start = 0;
                for i in 1..=life.len() {
                    if i == life.len() || life[i].0 != life[i - 1].0 + 1 {
                        out.push(summarize(app, &life[start..i]));
                        start = i;
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.first_seen.cmp(&b.first_seen).then_with(|| a.app.cmp(&b.app)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarityResult {
    pub m: f64,
    pub n_raw: f64,
    pub n_max: f64,
    /// False when `m` falls outside `[0, 1]` (possible for unequal lengths); the
    /// value is reported unclamped.
    pub in_range: bool,
}

fn rank_map(list: &[AppId]) -> Result<HashMap<&AppId, usize>, TopkError> {
    let mut map = HashMap::with_capacity(list.len());
    for (i, app) in list.iter().enumerate() {
        if map.insert(app, i + 1).is_some() {
            return Err(TopkError::InvalidInput(format!("duplicate app {app} in ranking")));
        }
    }
    Ok(map)
}

/// Inverse rank measure between two rankings.
///
/// Items in both lists contribute `|1/r_prev - 1/r_next|`; items missing from
/// one list are treated as sitting just past its end. `M = 1 - N / N_max`,
/// where `N_max` is `N` for two disjoint lists of the same lengths.
pub fn inverse_rank_measure(prev: &[AppId], next: &[AppId]) -> Result<SimilarityResult, TopkError> {
    if prev.is_empty() || next.is_empty() {
        return Err(TopkError::InvalidInput("rankings must be non-empty".into()));
    }
    let prev_rank = rank_map(prev)?;
    let next_rank = rank_map(next)?;
    let past_next = 1.0 / (next.len() + 1) as f64;
    let past_prev = 1.0 / (prev.len() + 1) as f64;

    // summation order mirrors n_max so disjoint lists give N == N_max exactly
    let mut n_raw = 0.0;
    for (i, app) in prev.iter().enumerate() {
        let inv = 1.0 / (i + 1) as f64;
        n_raw += match next_rank.get(app) {
            Some(&r) => (inv - 1.0 / r as f64).abs(),
            None => (inv - past_next).abs(),
        };
    }
    for (i, app) in next.iter().enumerate() {
        if !prev_rank.contains_key(app) {
            n_raw += (1.0 / (i + 1) as f64 - past_prev).abs();
        }
    }
    let mut n_max = 0.0;
    for i in 1..=prev.len() {
        n_max += (1.0 / i as f64 - past_next).abs();
    }
    for i in 1..=next.len() {
        n_max += (1.0 / i as f64 - past_prev).abs();
    }
    let m = 1.0 - n_raw / n_max;
    Ok(SimilarityResult { m, n_raw, n_max, in_range: (0.0..=1.0).contains(&m) })
}

pub fn observation_similarity(prev: &TopKObservation, next: &TopKObservation) -> Result<SimilarityResult, TopkError> {
    inverse_rank_measure(&prev.ranking, &next.ranking)
}

/// `M` for every consecutive pair of observations.
pub fn similarity_series(series: &RankedListSeries) -> Result<Vec<(i64, SimilarityResult)>, TopkError> {
    series.observations.windows(2).map(|w| observation_similarity(&w[0], &w[1]).map(|s| (w[1].fetch_time, s))).collect()
}

/// Contiguous block of rank positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSlice {
    /// Ranks `start..=end`, 1-based.
    Range {
        start: usize,
        end: usize,
    },
    Top(usize),
    /// The last `k` positions of each observation.
    Last(usize),
}

impl RankSlice {
    pub fn apply<'a>(&self, ranking: &'a [AppId]) -> &'a [AppId] {
        let n = ranking.len();
        match *self {
            RankSlice::Range { start, end } => {
                let lo = start.saturating_sub(1).min(n);
                let hi = end.min(n).max(lo);
                &ranking[lo..hi]
            }
            RankSlice::Top(k) => &ranking[..k.min(n)],
            RankSlice::Last(k) => &ranking[n.saturating_sub(k)..],
        }
    }

    fn is_empty(&self) -> bool {
        match *self {
            RankSlice::Range { start, end } => start == 0 || end < start,
            RankSlice::Top(k) | RankSlice::Last(k) => k == 0,
        }
    }
}

impl FromStr for RankSlice {
    type Err = TopkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TopkError::InvalidInput(format!("bad rank slice {s:?} (want topN, lastN or a..b)"));
        let s = s.trim();
        if let Some(k) = s.strip_prefix("top") {
            return k.parse().map(RankSlice::Top).map_err(|_| bad());
        }
        if let Some(k) = s.strip_prefix("last") {
            return k.parse().map(RankSlice::Last).map_err(|_| bad());
        }
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        Ok(RankSlice::Range { start: a.parse().map_err(|_| bad())?, end: b.parse().map_err(|_| bad())? })
    }
}

impl fmt::Display for RankSlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankSlice::Range { start, end } => write!(f, "{start}..{end}"),
            RankSlice::Top(k) => write!(f, "top{k}"),
            RankSlice::Last(k) => write!(f, "last{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapStats {
    pub item_count: usize,
    pub o_mean: f64,
    pub o_min: usize,
    pub m_mean: f64,
    /// Population standard deviation of `M`.
    pub m_sd: f64,
    pub o_first_last: usize,
}

pub fn overlap_stats(series: &RankedListSeries, slice: RankSlice) -> Result<OverlapStats, TopkError> {
    if slice.is_empty() {
        return Err(TopkError::InvalidInput(format!("empty rank slice {slice}")));
    }
    if series.len() < 2 {
        return Err(TopkError::InsufficientData(format!(
            "overlap needs at least 2 observations, got {}",
            series.len()
        )));
    }
    let sliced: Vec<&[AppId]> = series.observations.iter().map(|o| slice.apply(&o.ranking)).collect();
    if sliced.iter().any(|s| s.is_empty()) {
        return Err(TopkError::InvalidInput(format!("slice {slice} is empty for at least one observation")));
    }
    let overlap = |a: &[AppId], b: &[AppId]| {
        let set: HashSet<&AppId> = a.iter().collect();
        b.iter().filter(|x| set.contains(x)).count()
    };
    let mut overlaps = Vec::with_capacity(sliced.len() - 1);
    let mut ms = Vec::with_capacity(sliced.len() - 1);
    for w in sliced.windows(2) {
        overlaps.push(overlap(w[0], w[1]));
        ms.push(inverse_rank_measure(w[0], w[1])?.m);
    }
    let pairs = overlaps.len() as f64;
    let m_mean = ms.iter().sum::<f64>() / pairs;
    let m_var = ms.iter().map(|m| (m - m_mean).powi(2)).sum::<f64>() / pairs;
    let items: HashSet<&AppId> = sliced.iter().flat_map(|s| s.iter()).collect();
    Ok(OverlapStats {
        item_count: items.len(),
        o_mean: overlaps.iter().sum::<usize>() as f64 / pairs,
        o_min: overlaps.iter().copied().min().unwrap_or(0),
        m_mean,
        m_sd: m_var.sqrt(),
        o_first_last: overlap(sliced[0], sliced[sliced.len() - 1]),
    })
}

/// Distinct apps ever seen at each rank; index 0 is rank 1.
pub fn rank_occupancy(series: &RankedListSeries) -> Vec<usize> {
    let mut per_rank: Vec<HashSet<&AppId>> = Vec::new();
    for obs in &series.observations {
        if per_rank.len() < obs.ranking.len() {
            per_rank.resize_with(obs.ranking.len(), HashSet::new);
        }
        for (i, app) in obs.ranking.iter().enumerate() {
            per_rank[i].insert(app);
        }
    }
    per_rank.iter().map(HashSet::len).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LifetimeMode {
    /// Observations each app spent at the rank itself.
    #[default]
    TimeAtRank,
    /// Total observations on the list of each app that ever held the rank.
    ListLifetime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankLifetime {
    pub rank: usize,
    /// One entry per app that held the rank, ordered by app id.
    pub lifetimes: Vec<usize>,
    pub mean: Option<f64>,
}

pub fn lifetime_at_rank(series: &RankedListSeries, ranks: &[usize], mode: LifetimeMode) -> Vec<RankLifetime> {
    let mut total_on_list: HashMap<&AppId, usize> = HashMap::new();
    if mode == LifetimeMode::ListLifetime {
        for obs in &series.observations {
            for app in &obs.ranking {
                *total_on_list.entry(app).or_default() += 1;
            }
        }
    }
    ranks
        .iter()
        .map(|&rank| {
            let mut at_rank: BTreeMap<&AppId, usize> = BTreeMap::new();
            if rank >= 1 {
                for obs in &series.observations {
                    if let Some(app) = obs.ranking.get(rank - 1) {
                        *at_rank.entry(app).or_default() += 1;
                    }
                }
            }
            let lifetimes: Vec<usize> = match mode {
                LifetimeMode::TimeAtRank => at_rank.values().copied().collect(),
                LifetimeMode::ListLifetime => at_rank.keys().map(|a| total_on_list[a]).collect(),
            };
            let mean = (!lifetimes.is_empty()).then(|| lifetimes.iter().sum::<usize>() as f64 / lifetimes.len() as f64);
            RankLifetime { rank, lifetimes, mean }
        })
        .collect()
}

/// Fixed-width bins `[lo, lo + width)` covering `values`, as `(lo, count)`.
pub fn binned_histogram(values: &[usize], width: usize) -> Vec<(usize, usize)> {
    let width = width.max(1);
    let Some(&max) = values.iter().max() else {
        return Vec::new();
    };
    let mut counts = vec![0usize; max / width + 1];
    for v in values {
        counts[v / width] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (i * width, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::app;
    use crate::model::{ListType, SECONDS_PER_HOUR};

    fn ids(names: &[&str]) -> Vec<AppId> {
        names.iter().map(|n| app(n)).collect()
    }

    fn series(lists: &[Vec<&str>]) -> RankedListSeries {
        RankedListSeries {
            list_type: ListType::Free,
            observations: lists
                .iter()
                .enumerate()
                .map(|(h, l)| TopKObservation {
                    list_type: ListType::Free,
                    fetch_time: h as i64 * SECONDS_PER_HOUR,
                    ranking: ids(l),
                })
                .collect(),
        }
    }

    /// Rankings of width `k` with `target` placed at `rank` in each hour
    /// listed in `hours`, filler apps elsewhere.
    fn with_target(n_obs: usize, k: usize, target: &[(usize, usize)]) -> RankedListSeries {
        let lists: Vec<Vec<String>> = (0..n_obs)
            .map(|h| {
                let mut l: Vec<String> = (0..k).map(|i| format!("f{i}")).collect();
                if let Some((_, r)) = target.iter().find(|(hh, _)| *hh == h) {
                    l[r - 1] = "t".into();
                }
                l
            })
            .collect();
        let refs: Vec<Vec<&str>> = lists.iter().map(|l| l.iter().map(String::as_str).collect()).collect();
        series(&refs)
    }

    #[test]
    fn hand_traced_lifecycle() {
        let s = with_target(9, 12, &[(5, 10), (6, 4), (7, 7)]);
        let out = lifecycle_summaries(&s, LifecycleMode::WholeSpan).unwrap();
        let t = out.iter().find(|x| x.app == app("t")).unwrap();
        assert_eq!((t.debut, t.peak, t.hrs2peak, t.tothrs, t.exit, t.rankdyn), (10, 4, 2, 3, 7, 3));
    }

    #[test]
    fn debut_at_peak_gives_one() {
        let s = with_target(6, 5, &[(2, 1), (3, 3), (4, 1)]);
        let t = lifecycle_summaries(&s, LifecycleMode::WholeSpan).unwrap();
        let t = t.iter().find(|x| x.app == app("t")).unwrap();
        assert_eq!(t.hrs2peak, 1);
        assert_eq!(t.rankdyn, 2);
    }

    #[test]
    fn first_observation_apps_are_censored() {
        let s = series(&[vec!["a", "b"], vec!["b", "c"], vec!["c", "a"]]);
        let out = lifecycle_summaries(&s, LifecycleMode::WholeSpan).unwrap();
        let names: Vec<_> = out.iter().map(|x| x.app.as_str()).collect();
        assert_eq!(names, vec!["c"]);
        assert!(matches!(
            lifecycle_summaries(&series(&[vec!["a"]]), LifecycleMode::WholeSpan),
            Err(TopkError::InsufficientData(_))
        ));
    }

    #[test]
    fn gaps_do_not_reset_debut_unless_episodes() {
        let s = with_target(8, 6, &[(1, 5), (2, 3), (5, 2), (6, 4)]);
        let whole = lifecycle_summaries(&s, LifecycleMode::WholeSpan).unwrap();
        let t = whole.iter().find(|x| x.app == app("t")).unwrap();
        assert_eq!((t.debut, t.peak, t.hrs2peak, t.tothrs, t.exit), (5, 2, 5, 4, 4));
        let eps: Vec<_> = lifecycle_summaries(&s, LifecycleMode::Episodes)
            .unwrap()
            .into_iter()
            .filter(|x| x.app == app("t"))
            .collect();
        assert_eq!(eps.len(), 2);
        assert_eq!((eps[0].debut, eps[0].exit, eps[0].tothrs), (5, 3, 2));
        assert_eq!((eps[1].debut, eps[1].peak, eps[1].hrs2peak), (2, 2, 1));
    }

    #[test]
    fn swap_of_top_two() {
        let r = inverse_rank_measure(&ids(&["a", "b", "c"]), &ids(&["b", "a", "c"])).unwrap();
        assert!((r.n_raw - 1.0).abs() < 1e-15);
        assert!((r.n_max - 13.0 / 6.0).abs() < 1e-15);
        assert!((r.m - (1.0 - 6.0 / 13.0)).abs() < 1e-12);
        assert!((r.m - 0.538_46).abs() < 1e-5);
    }

    #[test]
    fn identical_and_disjoint_are_exact() {
        for k in 1..40 {
            let a: Vec<AppId> = (0..k).map(|i| app(&format!("a{i}"))).collect();
            let b: Vec<AppId> = (0..k).map(|i| app(&format!("b{i}"))).collect();
            assert_eq!(inverse_rank_measure(&a, &a).unwrap().m, 1.0);
            assert_eq!(inverse_rank_measure(&a, &b).unwrap().m, 0.0);
        }
    }

    #[test]
    fn bad_rankings() {
        assert!(inverse_rank_measure(&[], &ids(&["a"])).is_err());
        assert!(inverse_rank_measure(&ids(&["a", "a"]), &ids(&["a"])).is_err());
    }

    #[test]
    fn overlap_on_static_and_turnover_lists() {
        let s = series(&[vec!["a", "b", "c"], vec!["a", "b", "c"], vec!["a", "b", "c"]]);
        let o = overlap_stats(&s, RankSlice::Top(3)).unwrap();
        assert_eq!((o.o_mean, o.o_min, o.m_mean, o.m_sd, o.o_first_last, o.item_count), (3.0, 3, 1.0, 0.0, 3, 3));
        let s = series(&[vec!["a", "b"], vec!["c", "d"], vec!["e", "f"]]);
        let o = overlap_stats(&s, RankSlice::Top(2)).unwrap();
        assert_eq!((o.o_mean, o.m_mean, o.item_count), (0.0, 0.0, 6));
        assert!(overlap_stats(&s, RankSlice::Top(0)).is_err());
        assert!(overlap_stats(&s, RankSlice::Range { start: 5, end: 9 }).is_err());
    }

    #[test]
    fn slices() {
        let l = ids(&["a", "b", "c", "d", "e"]);
        assert_eq!(RankSlice::Last(2).apply(&l), &l[3..]);
        assert_eq!(RankSlice::Range { start: 2, end: 3 }.apply(&l), &l[1..3]);
        assert_eq!("top24".parse::<RankSlice>().unwrap(), RankSlice::Top(24));
        assert_eq!("last25".parse::<RankSlice>().unwrap(), RankSlice::Last(25));
        assert_eq!("3..9".parse::<RankSlice>().unwrap(), RankSlice::Range { start: 3, end: 9 });
        assert!("x".parse::<RankSlice>().is_err());
    }

    #[test]
    fn occupancy_counts() {
        let s = series(&[vec!["a", "b", "c"], vec!["a", "b", "c"]]);
        assert_eq!(rank_occupancy(&s), vec![1, 1, 1]);
        let s = series(&[vec!["a", "b"], vec!["b", "a"]]);
        assert_eq!(rank_occupancy(&s), vec![2, 2]);
    }

    #[test]
    fn lifetimes() {
        let lists: Vec<Vec<&str>> = (0..10).map(|_| vec!["a", "b"]).collect();
        let s = series(&lists);
        let out = lifetime_at_rank(&s, &[1, 50], LifetimeMode::TimeAtRank);
        assert_eq!(out[0].lifetimes, vec![10]);
        assert!(out[1].lifetimes.is_empty() && out[1].mean.is_none());

        let s = series(&[vec!["a", "b"], vec!["b", "a"], vec!["b", "c"]]);
        let at1 = &lifetime_at_rank(&s, &[1], LifetimeMode::TimeAtRank)[0];
        assert_eq!(at1.lifetimes, vec![1, 2]);
        let at1 = &lifetime_at_rank(&s, &[1], LifetimeMode::ListLifetime)[0];
        assert_eq!(at1.lifetimes, vec![2, 3]);
    }

    /// Direct summation over the three item sets with linear rank lookup.
    fn oracle_m(l1: &[AppId], l2: &[AppId]) -> f64 {
        let pos = |l: &[AppId], x: &AppId| l.iter().position(|y| y == x).map(|p| (p + 1) as f64);
        let k1 = l1.len() as f64;
        let k2 = l2.len() as f64;
        let mut n = 0.0;
        for x in l1 {
            n += match pos(l2, x) {
                Some(r2) => (1.0 / pos(l1, x).unwrap() - 1.0 / r2).abs(),
                None => (1.0 / pos(l1, x).unwrap() - 1.0 / (k2 + 1.0)).abs(),
            };
        }
        for x in l2.iter().filter(|x| pos(l1, x).is_none()) {
            n += (1.0 / pos(l2, x).unwrap() - 1.0 / (k1 + 1.0)).abs();
        }
        let nmax: f64 = (1..=l1.len()).map(|i| (1.0 / i as f64 - 1.0 / (k2 + 1.0)).abs()).sum::<f64>()
            + (1..=l2.len()).map(|i| (1.0 / i as f64 - 1.0 / (k1 + 1.0)).abs()).sum::<f64>();
        1.0 - n / nmax
    }

    fn ranking(pool: usize, len: usize) -> impl Strategy<Value = Vec<AppId>> {
        Just((0..pool).map(|i| app(&format!("p{i}"))).collect::<Vec<_>>()).prop_shuffle().prop_map(move |mut v| {
            v.truncate(len);
            v
        })
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn measure_matches_oracle_and_is_symmetric(
            (a, b) in (1usize..25).prop_flat_map(|k| (ranking(40, k), ranking(40, k)))
        ) {
            let ab = inverse_rank_measure(&a, &b).unwrap();
            let ba = inverse_rank_measure(&b, &a).unwrap();
            prop_assert!((ab.m - oracle_m(&a, &b)).abs() < 1e-12);
            prop_assert!((ab.m - ba.m).abs() < 1e-12);
            prop_assert!(ab.in_range);
        }

        #[test]
        fn unequal_lengths_match_oracle(a in ranking(30, 10), b in ranking(30, 4)) {
            let r = inverse_rank_measure(&a, &b).unwrap();
            prop_assert!((r.m - oracle_m(&a, &b)).abs() < 1e-12);
            prop_assert_eq!(r.in_range, (0.0..=1.0).contains(&r.m));
        }

        #[test]
        fn lifecycle_bounds(lists in proptest::collection::vec(ranking(12, 5), 2..20)) {
            let s = RankedListSeries {
                list_type: ListType::Free,
                observations: lists.into_iter().enumerate().map(|(h, ranking)| TopKObservation {
                    list_type: ListType::Free,
                    fetch_time: h as i64 * SECONDS_PER_HOUR,
                    ranking,
                }).collect(),
            };
            for x in lifecycle_summaries(&s, LifecycleMode::WholeSpan).unwrap() {
                prop_assert!(x.peak <= x.debut && x.peak <= x.exit);
                prop_assert!(x.hrs2peak >= 1 && x.hrs2peak <= x.last_seen - x.first_seen + 1);
                prop_assert!(x.rankdyn >= 1 && x.rankdyn <= x.tothrs);
                prop_assert!(x.first_seen > 0);
            }
            let total: usize = lifecycle_summaries_with_censored(&s, LifecycleMode::WholeSpan)
                .unwrap()
                .iter()
                .map(|x| x.tothrs)
                .sum();
            prop_assert_eq!(total, s.observations.iter().map(|o| o.ranking.len()).sum::<usize>());
        }
    }

    #[test]
    fn histogram_bins() {
        assert_eq!(binned_histogram(&[0, 4, 5, 11], 5), vec![(0, 2), (5, 1), (10, 1)]);
        assert!(binned_histogram(&[], 5).is_empty());
    }
}
