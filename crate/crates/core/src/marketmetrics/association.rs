//! Yule's Q between attribute-change event sets over `<day, app>` tuples.

use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use serde::Serialize;

use super::MetricsError;
use crate::model::{AppId, AttributeKind};
use crate::timeline::AppTimeline;

pub type DayApp = (NaiveDate, AppId);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeEventSet {
    pub kind: AttributeKind,
    pub members: HashSet<DayApp>,
}

impl AttributeEventSet {
    pub fn from_timelines<'a>(kind: AttributeKind, timelines: impl IntoIterator<Item = &'a AppTimeline>) -> Self {
        let members = timelines
            .into_iter()
            .flat_map(|t| t.events.iter())
            .filter(|e| e.kind == kind)
            .map(|e| (e.day, e.app.clone()))
            .collect();
        Self { kind, members }
    }
}

/// 2×2 contingency counts: `a = |A∩B|`, `b = |A∩¬B|`, `c = |¬A∩B|`, `d = |¬A∩¬B|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Contingency {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl Contingency {
    /// `(ad - bc) / (ad + bc)`, undefined when the denominator is zero.
    pub fn yule_q(&self) -> Option<f64> {
        let ad = self.a as f64 * self.d as f64;
        let bc = self.b as f64 * self.c as f64;
        let denom = ad + bc;
        (denom > 0.0).then(|| (ad - bc) / denom)
    }
}

pub fn contingency(a_set: &HashSet<DayApp>, b_set: &HashSet<DayApp>, universe_size: usize) -> Contingency {
    let (small, large) = if a_set.len() <= b_set.len() { (a_set, b_set) } else { (b_set, a_set) };
    let both = small.iter().filter(|m| large.contains(*m)).count() as u64;
    let a_only = a_set.len() as u64 - both;
    let b_only = b_set.len() as u64 - both;
    Contingency { a: both, b: a_only, c: b_only, d: universe_size as u64 - both - a_only - b_only }
}

/// Yule's Q of two event sets inside `universe`.
pub fn yule_association(
    a_set: &AttributeEventSet,
    b_set: &AttributeEventSet,
    universe: &HashSet<DayApp>,
) -> Result<f64, MetricsError> {
    for set in [a_set, b_set] {
        if let Some(m) = set.members.iter().find(|m| !universe.contains(*m)) {
            return Err(MetricsError::InvalidInput(format!(
                "{:?} member ({}, {}) lies outside the universe",
                set.kind, m.0, m.1
            )));
        }
    }
    contingency(&a_set.members, &b_set.members, universe.len())
        .yule_q()
        .ok_or_else(|| MetricsError::Undefined("ad + bc = 0".into()))
}

/// Which `<day, app>` tuples form the complement space.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Universe {
    /// Tuples carrying at least one change event of any kind.
    #[default]
    Changed,
    /// Caller-supplied tuples (e.g. every observed `<day, app>`), widened to
    /// include all changed tuples.
    Observed(HashSet<DayApp>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationMatrix {
    pub kinds: Vec<AttributeKind>,
    /// `values[i][j]` is Q(kinds[i], kinds[j]); `None` when undefined.
    pub values: Vec<Vec<Option<f64>>>,
    pub set_sizes: BTreeMap<AttributeKind, usize>,
    pub universe_size: usize,
}

impl AssociationMatrix {
    pub fn get(&self, a: AttributeKind, b: AttributeKind) -> Option<f64> {
        let i = self.kinds.iter().position(|k| *k == a)?;
        let j = self.kinds.iter().position(|k| *k == b)?;
        self.values[i][j]
    }

    /// Square CSV with a header row of kind symbols; undefined cells are `NA`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.kinds.iter().map(|k| k.symbol().to_string()));
        w.write_record(&header)?;
        for (i, k) in self.kinds.iter().enumerate() {
            let mut row = vec![k.symbol().to_string()];
            row.extend(self.values[i].iter().map(|v| v.map(|q| format!("{q:.4}")).unwrap_or_else(|| "NA".into())));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn association_matrix(timelines: &[AppTimeline], kinds: &[AttributeKind], universe: Universe) -> AssociationMatrix {
    let mut space: HashSet<DayApp> = match universe {
        Universe::Changed => HashSet::new(),
        Universe::Observed(s) => s,
    };
    space.extend(timelines.iter().flat_map(|t| t.events.iter()).map(|e| (e.day, e.app.clone())));
    let sets: Vec<AttributeEventSet> = kinds.iter().map(|k| AttributeEventSet::from_timelines(*k, timelines)).collect();
    let n = kinds.len();
    let mut values = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let q = contingency(&sets[i].members, &sets[j].members, space.len()).yule_q();
            values[i][j] = q;
            values[j][i] = q;
        }
    }
    AssociationMatrix {
        kinds: kinds.to_vec(),
        values,
        set_sizes: sets.iter().map(|s| (s.kind, s.members.len())).collect(),
        universe_size: space.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::app;
    use proptest::prelude::*;

    fn day(i: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2012, 4, 1).unwrap() + chrono::Duration::days(i as i64)
    }

    /// Universe of `n` tuples, with A and B given as index sets.
    fn sets(n: u32, a: &[u32], b: &[u32]) -> (AttributeEventSet, AttributeEventSet, HashSet<DayApp>) {
        let tuple = |i: u32| (day(i), app("x"));
        let universe = (0..n).map(tuple).collect();
        let mk = |kind, idx: &[u32]| AttributeEventSet { kind, members: idx.iter().map(|&i| tuple(i)).collect() };
        (mk(AttributeKind::PriceDown, a), mk(AttributeKind::VersionUp, b), universe)
    }

    #[test]
    fn contingency_examples() {
        // a=9, b=0, c=0, d=1
        let idx: Vec<u32> = (0..9).collect();
        let (a, b, u) = sets(10, &idx, &idx);
        assert_eq!(yule_association(&a, &b, &u).unwrap(), 1.0);
        // a=0, b=3, c=2, d=0
        let (a, b, u) = sets(5, &[0, 1, 2], &[3, 4]);
        assert_eq!(yule_association(&a, &b, &u).unwrap(), -1.0);
        // a=3, b=1, c=1, d=3
        let (a, b, u) = sets(8, &[0, 1, 2, 3], &[0, 1, 2, 4]);
        assert_eq!(contingency(&a.members, &b.members, u.len()), Contingency { a: 3, b: 1, c: 1, d: 3 });
        assert!((yule_association(&a, &b, &u).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn undefined_and_out_of_universe() {
        let (a, b, u) = sets(4, &[], &[0]);
        assert!(matches!(yule_association(&a, &b, &u), Err(MetricsError::Undefined(_))));
        let (a, b, mut u) = sets(4, &[0], &[1]);
        u.remove(&(day(0), app("x")));
        assert!(matches!(yule_association(&a, &b, &u), Err(MetricsError::InvalidInput(_))));
    }

    proptest! {
        #[test]
        fn q_is_symmetric_and_bounded(n in 1u32..60, a in proptest::collection::vec(any::<bool>(), 60), b in proptest::collection::vec(any::<bool>(), 60)) {
            let ai: Vec<u32> = (0..n).filter(|&i| a[i as usize]).collect();
            let bi: Vec<u32> = (0..n).filter(|&i| b[i as usize]).collect();
            let (sa, sb, u) = sets(n, &ai, &bi);
            let ab = yule_association(&sa, &sb, &u).ok();
            let ba = yule_association(&sb, &sa, &u).ok();
            prop_assert_eq!(ab, ba);
            if let Some(q) = ab {
                prop_assert!((-1.0..=1.0).contains(&q));
            }
            let self_q = yule_association(&sa, &sa, &u).ok();
            if !ai.is_empty() && ai.len() < n as usize {
                prop_assert_eq!(self_q, Some(1.0));
            }
        }
    }
}
