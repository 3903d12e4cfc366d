mod commands;
mod registry;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Dynamic matching on expander graphs: graph tools, game soaks, one-probe
/// storage benchmarks and connector demos.
#[derive(Debug, Parser)]
#[command(name = "dynmatch", version)]
pub struct Cli {
    /// Master seed; every component derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report or output file; standard output when absent.
    #[arg(long, global = true, visible_alias = "report")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, transform and verify graphs.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Play matching games.
    #[command(subcommand)]
    Game(GameCmd),
    /// Rich product graphs.
    #[command(subcommand)]
    Rich(RichCmd),
    /// Soak the dynamic matchers.
    #[command(subcommand)]
    Match(MatchCmd),
    /// One-probe storage.
    #[command(subcommand)]
    Bitprobe(BitprobeCmd),
    /// Constant-depth connectors.
    #[command(subcommand)]
    Connector(ConnectorCmd),
}

/// Where a graph comes from: a file in the `bigraph` text format or a
/// named fixture (`left`, `right`, `complete-AxB`).
#[derive(Debug, Args, Clone)]
pub struct GraphSource {
    #[arg(long, conflicts_with = "fixture")]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub fixture: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum GraphCmd {
    /// Left-regular random graph.
    Random {
        #[arg(long)]
        left: usize,
        #[arg(long)]
        right: usize,
        #[arg(long)]
        degree: usize,
    },
    /// Random graph verified to have `e`-expansion up to `k`.
    Expander {
        #[arg(long)]
        left: usize,
        #[arg(long)]
        right: usize,
        #[arg(long)]
        degree: usize,
        #[arg(long)]
        e: String,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        attempts: usize,
    },
    /// Reads a graph and writes it back in the text format.
    Cat {
        #[command(flatten)]
        source: GraphSource,
    },
    /// Writes a fixture in the text format.
    Fixture {
        #[arg(long)]
        name: String,
    },
    /// Clone with `copies` copies of the right side.
    Clone {
        #[command(flatten)]
        source: GraphSource,
        #[arg(long)]
        copies: usize,
    },
    /// Exhaustive expansion and offline matching checks.
    Verify {
        #[command(flatten)]
        source: GraphSource,
        #[arg(long)]
        e: String,
        #[arg(long)]
        k: usize,
    },
}

#[derive(Debug, Args, Clone)]
pub struct PlayArgs {
    #[command(flatten)]
    pub source: GraphSource,
    #[arg(long, default_value = "first-free")]
    pub matcher: String,
    /// Capacity `K`.
    #[arg(long)]
    pub k: usize,
    /// Preparation period or expiration window (default `4K`).
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Load limit for the first-free matcher.
    #[arg(long, default_value_t = 1)]
    pub load: usize,
    /// Chunked preparation budget for the theorem matcher.
    #[arg(long)]
    pub prep_budget: Option<u64>,
    /// Brute-force check of the induced fast graph at each preparation.
    #[arg(long)]
    pub induced_check: bool,
}

#[derive(Debug, Subcommand)]
pub enum GameCmd {
    /// Plays a matcher against an adversary.
    Run {
        #[command(flatten)]
        play: PlayArgs,
        #[arg(long, default_value = "random")]
        adversary: String,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        /// Writes the transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Corrupts the matcher's occupancy state before this request.
        #[arg(long)]
        inject_fault: Option<u64>,
        /// A matcher loss is reported but not counted as a violation.
        #[arg(long)]
        allow_loss: bool,
    },
    /// Replays a transcript's requester moves against a matcher.
    Replay {
        #[command(flatten)]
        play: PlayArgs,
        #[arg(long)]
        transcript: PathBuf,
    },
    /// Exhaustive search: can the requester force a win within `plies` turns?
    Search {
        #[command(flatten)]
        source: GraphSource,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        load: usize,
        #[arg(long)]
        incremental: bool,
        #[arg(long, default_value_t = 6)]
        plies: usize,
        /// Expected outcome; a mismatch is a violation.
        #[arg(long, value_parser = ["requester", "matcher"])]
        expect: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RichCmd {
    /// Builds a rich product graph for capacity `k` and window `2k`.
    Build {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "1/4")]
        eps: String,
        #[arg(long)]
        first_right: Option<usize>,
    },
    /// Adversarial soak of the rich product matcher.
    Soak {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "1/4")]
        eps: String,
        #[arg(long)]
        first_right: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum MatchCmd {
    /// Random soak of a dynamic matcher with per-turn audits.
    Soak {
        #[command(flatten)]
        play: PlayArgs,
        #[arg(long, default_value_t = 10_000)]
        steps: u64,
        #[arg(long, default_value = "random")]
        adversary: String,
        /// Corrupts the matcher's occupancy state before this request.
        #[arg(long)]
        inject_fault: Option<u64>,
    },
}

#[derive(Debug, Args, Clone)]
pub struct StoreArgs {
    /// Universe size.
    #[arg(long)]
    pub n: usize,
    /// Capacity.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value = "1/4")]
    pub eps: String,
    #[arg(long)]
    pub first_right: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum BitprobeCmd {
    /// Random legal history with queries and key-claim checkpoints.
    Bench {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long, default_value_t = 10_000)]
        ops: u64,
        #[arg(long, default_value_t = 100_000)]
        queries: u64,
        #[arg(long, default_value_t = 100)]
        checkpoints: u64,
        /// Random non-members checked at each checkpoint.
        #[arg(long, default_value_t = 1000)]
        non_members: usize,
        /// Writes a state snapshot here at the end.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Flips one stored bit halfway through.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Line protocol on standard input and output.
    Serve {
        #[command(flatten)]
        store: StoreArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConnectorCmd {
    /// Random connect and disconnect operations with full audits.
    Demo {
        #[arg(long)]
        b: usize,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 1000)]
        ops: u64,
        /// Complete bipartite levels instead of verified sampled graphs.
        #[arg(long)]
        complete: bool,
        /// Prunes single leaves as well as removing whole trees.
        #[arg(long)]
        prune: bool,
        /// Writes the network and final trees here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(report) => {
            if let Err(e) = report.emit(cli.out.as_deref()) {
                eprintln!("error: writing report: {e}");
                return ExitCode::from(2);
            }
            if report.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
