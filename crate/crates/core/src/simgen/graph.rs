//! Similar-app link graph for serving a generated market to the crawler.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{keyed_rng, SimError};
use crate::harvester::{render_page, MarketPage, MockMarket};
use crate::model::{AppId, AppSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphParams {
    pub seed: u64,
    pub n_seeds: usize,
    /// Upper bound on random extra links per app, on top of the spanning links.
    pub extra_links: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { seed: 0, n_seeds: 3, extra_links: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct MarketLayout {
    pub entries: Vec<(AppSnapshot, Vec<AppId>)>,
    pub seeds: Vec<AppId>,
}

impl MarketLayout {
    pub fn pages(&self) -> Vec<MarketPage> {
        self.entries.iter().map(|(s, links)| render_page(s, links)).collect()
    }

    pub fn into_market(self) -> MockMarket {
        MockMarket::new(self.entries)
    }
}

/// Lays out the latest snapshot of every app as a page graph in which every
/// app is reachable from the returned seeds.
///
/// Apps are shuffled; each app past the seeds gets an incoming link from a
/// uniformly chosen earlier app, then random extra links are added.
pub fn render_mock_market(snapshots: &[AppSnapshot], params: GraphParams) -> Result<MarketLayout, SimError> {
    let mut latest: BTreeMap<&AppId, &AppSnapshot> = BTreeMap::new();
    for s in snapshots {
        let e = latest.entry(&s.app).or_insert(s);
        if s.fetch_time > e.fetch_time {
            *e = s;
        }
    }
    if latest.is_empty() {
        return Err(SimError::Config("no snapshots to lay out".into()));
    }
    if params.n_seeds == 0 {
        return Err(SimError::Config("at least one seed is required".into()));
    }
    let mut rng = keyed_rng(params.seed, "graph");
    let mut apps: Vec<&AppSnapshot> = latest.into_values().collect();
    apps.shuffle(&mut rng);
    let n = apps.len();
    let n_seeds = params.n_seeds.min(n);
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in n_seeds..n {
        let parent = rng.random_range(0..i);
        links[parent].push(i);
    }
    if n > 1 {
        for (i, out) in links.iter_mut().enumerate() {
            for _ in 0..rng.random_range(0..=params.extra_links) {
                let j = rng.random_range(0..n);
                if j != i && !out.contains(&j) {
                    out.push(j);
                }
            }
        }
    }
    let entries = apps
        .iter()
        .zip(links)
        .map(|(s, out)| ((*s).clone(), out.into_iter().map(|j| apps[j].app.clone()).collect()))
        .collect();
    Ok(MarketLayout { seeds: apps[..n_seeds].iter().map(|s| s.app.clone()).collect(), entries })
}
