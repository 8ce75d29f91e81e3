use std::net::SocketAddr;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use marketpulse_core::topk::RankSlice;
use marketpulse_core::ListType;

#[derive(Debug, Parser)]
#[command(name = "marketpulse", version, about = "Longitudinal app-market analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic market dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Append a dataset directory to a store.
    Ingest(IngestArgs),
    /// Crawl a market endpoint from seed apps.
    Crawl(CrawlArgs),
    /// Serve a dataset's latest snapshots as a mock market over TCP.
    MockMarket(MockMarketArgs),
    /// Print the change-event CSV of one app.
    Timeline(TimelineArgs),
    /// Market-level statistics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Ranked-list dynamics.
    #[command(subcommand)]
    Topk(TopkCommand),
    /// Fraud and malware indicators.
    #[command(subcommand)]
    Anomaly(AnomalyCommand),
}

#[derive(Debug, Args)]
pub struct StoreArg {
    /// Store directory.
    #[arg(long, env = "MARKETPULSE_STORE")]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Directory for CSV plot data; created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// MarketScript JSON.
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the script's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory holding snapshots.jsonl, reviews.jsonl, topk.jsonl and manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub store: StoreArg,
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    /// File with one seed app id per line.
    #[arg(long)]
    pub seeds: PathBuf,
    /// Market address, host:port.
    #[arg(long)]
    pub market: SocketAddr,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    /// Consecutive 404s after which a worker stops.
    #[arg(long, default_value_t = 50)]
    pub ban_threshold: u32,
    #[arg(long, default_value_t = 100)]
    pub politeness_ms: u64,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MockMarketArgs {
    /// Dataset directory with snapshots.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "127.0.0.1:0")]
    pub addr: String,
    /// Where to write the seed app ids.
    #[arg(long)]
    pub seeds_out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub n_seeds: usize,
    /// Upper bound on random extra similar-app links per page.
    #[arg(long, default_value_t = 4)]
    pub extra_links: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TimelineArgs {
    #[command(flatten)]
    pub store: StoreArg,
    #[arg(long)]
    pub app: String,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Staleness window in days; a gap equal to the window is still active.
    #[arg(long, default_value_t = 365)]
    pub window_days: u32,
    /// Reference date; defaults to the dataset's last observation day.
    #[arg(long)]
    pub reference: Option<NaiveDate>,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    Staleness {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        out: OutArg,
    },
    Popularity {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        out: OutArg,
    },
    Updates {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        out: OutArg,
    },
    Price {
        #[command(flatten)]
        store: StoreArg,
        #[command(flatten)]
        window: WindowArgs,
        /// Seasonal period of the daily average price, in days.
        #[arg(long, default_value_t = 7)]
        period: usize,
        #[command(flatten)]
        out: OutArg,
    },
    Association {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, value_enum, default_value_t = UniverseArg::Changed)]
        universe: UniverseArg,
        #[command(flatten)]
        out: OutArg,
    },
    Powerlaw {
        #[command(flatten)]
        store: StoreArg,
        /// Smallest apps-per-developer count in the fitted tail.
        #[arg(long, default_value_t = 3)]
        xmin: u64,
        /// Choose x_min by KS minimization instead.
        #[arg(long)]
        scan: bool,
        #[arg(long, default_value_t = 50)]
        min_tail: usize,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UniverseArg {
    /// Day-app pairs with at least one change.
    Changed,
    /// Every observed day-app pair.
    Observed,
}

fn parse_list(s: &str) -> Result<ListType, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_slice(s: &str) -> Result<RankSlice, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Debug, Args)]
pub struct ListArgs {
    #[command(flatten)]
    pub store: StoreArg,
    /// Free, Paid, Gross, NewFree or NewPaid.
    #[arg(long, value_parser = parse_list)]
    pub list: ListType,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LifecycleModeArg {
    Whole,
    Episodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LifetimeModeArg {
    AtRank,
    ListLifetime,
}

#[derive(Debug, Subcommand)]
pub enum TopkCommand {
    Lifecycle {
        #[command(flatten)]
        list: ListArgs,
        #[arg(long, value_enum, default_value_t = LifecycleModeArg::Whole)]
        mode: LifecycleModeArg,
        /// Keep apps present in the first observation.
        #[arg(long)]
        include_censored: bool,
        /// Bin width for the histogram CSV.
        #[arg(long, default_value_t = 10)]
        bin_width: usize,
    },
    Similarity {
        #[command(flatten)]
        list: ListArgs,
    },
    Overlap {
        #[command(flatten)]
        list: ListArgs,
        /// topN, lastN or a..b; repeatable.
        #[arg(long, value_parser = parse_slice, default_values = ["top24", "last25"])]
        slice: Vec<RankSlice>,
    },
    Occupancy {
        #[command(flatten)]
        list: ListArgs,
    },
    Lifetime {
        #[command(flatten)]
        list: ListArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,50,100,200,400")]
        ranks: Vec<usize>,
        #[arg(long, value_enum, default_value_t = LifetimeModeArg::AtRank)]
        mode: LifetimeModeArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum AnomalyCommand {
    Reviews {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value_t = 30)]
        window_days: usize,
        #[arg(long, default_value_t = 5.0)]
        mad_k: f64,
        #[arg(long, default_value_t = 20)]
        min_abs: u32,
        /// Lowest rating counted as positive.
        #[arg(long, default_value_t = 4)]
        positive_min: u8,
        /// Highest rating counted as negative.
        #[arg(long, default_value_t = 2)]
        negative_max: u8,
        #[command(flatten)]
        out: OutArg,
    },
    Permissions {
        #[command(flatten)]
        store: StoreArg,
        /// Dangerous-permission list, one name per line.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        churn_window_days: i64,
        /// External scanner flags CSV with columns app,flag_count.
        #[arg(long)]
        flags: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        min_flags: u32,
        #[arg(long, default_value_t = 10)]
        min_reviews: usize,
        #[command(flatten)]
        out: OutArg,
    },
    Scam {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value_t = 5)]
        min_cluster: usize,
        #[arg(long, default_value_t = 100)]
        price_min_cents: u64,
        #[arg(long, default_value_t = 299)]
        price_max_cents: u64,
        #[arg(long, default_value_t = 0.8)]
        title_similarity: f64,
        #[command(flatten)]
        out: OutArg,
    },
    Decoupling {
        #[command(flatten)]
        store: StoreArg,
    },
}
