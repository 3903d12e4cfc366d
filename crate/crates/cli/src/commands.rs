use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use dynmatch::bigraph::{
    clone_graph, expansion_check, find_expander, fixtures, offline_matching_check, sample_random,
};
use dynmatch::connector::{CompleteLevels, Connector, LevelFactory, VerifiedLevels};
use dynmatch::game::adversary::{PressureAdversary, RandomAdversary, Requester};
use dynmatch::game::search::{requester_forces_win, MAX_SEARCH_LEFT, MAX_SEARCH_PLIES};
use dynmatch::game::soak::{percentile, run_game, SoakError};
use dynmatch::game::transcript::replay;
use dynmatch::game::Transcript;
use dynmatch::rich_match::{RichGraph, RichParams};
use dynmatch::rng::{child_seed, stream, stream_rng};
use dynmatch::scalar::parse_rational;
use dynmatch::BitProbe;
use dynmatch::{Adjacency, BiGraph, GameConfig, Rational};
use rand::Rng as _;

use crate::registry::{self, Audited, Faulty, MatcherOptions};
use crate::report::Report;
use crate::{
    BitprobeCmd, Cli, Command, ConnectorCmd, GameCmd, GraphCmd, GraphSource, MatchCmd, PlayArgs,
    RichCmd, StoreArgs,
};

pub fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Graph(cmd) => graph(cmd, cli.seed),
        Command::Game(cmd) => game(cmd, cli.seed),
        Command::Rich(cmd) => rich(cmd, cli.seed, cli.out.as_deref()),
        Command::Match(MatchCmd::Soak {
            play,
            steps,
            adversary,
            inject_fault,
        }) => {
            let mut report = Report::new("match soak", cli.seed);
            soak(
                &mut report,
                play,
                adversary,
                *steps,
                *inject_fault,
                cli.seed,
                false,
            )?;
            Ok(report)
        }
        Command::Bitprobe(cmd) => bitprobe(cmd, cli.seed),
        Command::Connector(cmd) => connector(cmd, cli.seed),
    }
}

fn scalar(s: &str) -> Result<Rational> {
    parse_rational(s).ok_or_else(|| anyhow!("not a number: {s:?}"))
}

fn fixture(name: &str) -> Result<BiGraph> {
    if let Some(g) = fixtures::by_name(name) {
        return Ok(g);
    }
    if let Some((a, b)) = name
        .strip_prefix("complete-")
        .and_then(|r| r.split_once('x'))
    {
        return Ok(fixtures::complete(a.parse()?, b.parse()?));
    }
    bail!("unknown fixture {name:?}; expected left, right or complete-AxB")
}

fn load_graph(src: &GraphSource) -> Result<BiGraph> {
    match (&src.graph, &src.fixture) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            BiGraph::from_text(&text).with_context(|| format!("parsing {}", path.display()))
        }
        (None, Some(name)) => fixture(name),
        (None, None) => bail!("need --graph FILE or --fixture NAME"),
    }
}

fn describe(report: &mut Report, g: &BiGraph) {
    report.put("left_size", g.left_size());
    report.put("right_size", g.right_size());
    report.put("edges", g.edge_count());
    report.put("left_regular", g.left_regular());
    if g.left_regular() {
        report.put("degree", g.degree());
    }
}

fn graph(cmd: &GraphCmd, seed: u64) -> Result<Report> {
    let mut report;
    let g = match cmd {
        GraphCmd::Random {
            left,
            right,
            degree,
        } => {
            report = Report::new("graph random", seed);
            sample_random(*left, *right, *degree, seed)?
        }
        GraphCmd::Expander {
            left,
            right,
            degree,
            e,
            k,
            attempts,
        } => {
            report = Report::new("graph expander", seed);
            let e = scalar(e)?;
            report.put("e", e);
            report.put("k", k);
            match find_expander(*left, *right, *degree, e, *k, seed, *attempts)? {
                Some(v) => {
                    report.put("graph_seed", v.seed);
                    report.put("attempts", v.attempts);
                    v.graph
                }
                None => {
                    report.violation(format!(
                        "no sample passed the expansion check in {attempts} attempts"
                    ));
                    return Ok(report);
                }
            }
        }
        GraphCmd::Cat { source } => {
            report = Report::new("graph cat", seed);
            load_graph(source)?
        }
        GraphCmd::Fixture { name } => {
            report = Report::new("graph fixture", seed);
            fixture(name)?
        }
        GraphCmd::Clone { source, copies } => {
            report = Report::new("graph clone", seed);
            report.put("copies", copies);
            clone_graph(&load_graph(source)?, *copies)?
        }
        GraphCmd::Verify { source, e, k } => {
            let mut report = Report::new("graph verify", seed);
            let g = load_graph(source)?;
            describe(&mut report, &g);
            let e = scalar(e)?;
            report.put("e", e);
            report.put("k", k);
            let w = expansion_check(&g, e, *k);
            report.put("expansion", if w.holds { "holds" } else { "fails" });
            if let Some(set) = &w.violating_set {
                report.put("violating_set", format!("{set:?}"));
                report.put("violating_neighborhood", w.neighborhood_size.unwrap_or(0));
            }
            report.put("offline_matching", offline_matching_check(&g, *k));
            if !w.holds {
                report.violation(format!("{e}-expansion up to {k} fails"));
            }
            return Ok(report);
        }
    };
    describe(&mut report, &g);
    report.body = Some(g.to_text());
    Ok(report)
}

fn requester(name: &str, seed: u64) -> Result<Box<dyn Requester>> {
    Ok(match name {
        "random" => Box::new(RandomAdversary::new(seed)),
        "pressure" => Box::new(PressureAdversary::new()),
        other => bail!("unknown adversary {other:?}; expected random or pressure"),
    })
}

fn options(play: &PlayArgs) -> MatcherOptions {
    MatcherOptions {
        capacity: play.k,
        rounds: play.rounds,
        load: play.load,
        prep_budget: play.prep_budget,
        induced_check: play.induced_check,
    }
}

/// Plays one game with per-turn audits. Losses and audit failures become
/// violations unless `allow_loss` covers the former.
fn play<M: Audited>(
    report: &mut Report,
    g: &BiGraph,
    cfg: GameConfig,
    m: &mut M,
    req: &mut dyn Requester,
    steps: u64,
    allow_loss: bool,
) -> Result<Option<Transcript>> {
    let start = Instant::now();
    let outcome = run_game(g, cfg, m, req, steps, |r, m| {
        r.state().check_consistency(r.config())?;
        m.audit()
    });
    report.put("wall_ms", start.elapsed().as_millis());
    match outcome {
        Ok(stats) => {
            report.extend(stats.report_lines());
            report.put("probes_total", m.probes());
            if let Some(loss) = &stats.loss {
                if !allow_loss {
                    report.violation(format!("matcher lost: {loss}"));
                }
            }
            Ok(Some(stats.transcript))
        }
        Err(SoakError::Invariant { request, msg }) => {
            report.put("losses", 0);
            report.violation(format!("audit failed after request {request}: {msg}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn soak(
    report: &mut Report,
    args: &PlayArgs,
    adversary: &str,
    steps: u64,
    fault: Option<u64>,
    seed: u64,
    allow_loss: bool,
) -> Result<Option<Transcript>> {
    let g = Arc::new(load_graph(&args.source)?);
    let (m, cfg) = registry::build(&args.matcher, &g, options(args))?;
    let mut req = requester(adversary, seed)?;
    report.put("matcher", m.name());
    report.put("adversary", req.name());
    describe(report, &g);
    report.put("k", args.k);
    report.put("load_limit", cfg.load);
    if let Some(t) = cfg.expiration {
        report.put("expiration", t);
    }
    if let Some(t) = cfg.round_limit {
        report.put("round_limit", t);
    }
    report.put("steps", steps);
    match fault {
        Some(at) => {
            let mut f = Faulty {
                inner: m,
                at,
                seen: 0,
                fired: false,
            };
            let t = play(report, &g, cfg, &mut f, req.as_mut(), steps, allow_loss)?;
            report.put("fault_at", at);
            report.put("fault_fired", f.fired);
            Ok(t)
        }
        None => {
            let mut m = m;
            play(report, &g, cfg, &mut m, req.as_mut(), steps, allow_loss)
        }
    }
}

fn game(cmd: &GameCmd, seed: u64) -> Result<Report> {
    match cmd {
        GameCmd::Run {
            play,
            adversary,
            steps,
            transcript,
            inject_fault,
            allow_loss,
        } => {
            let mut report = Report::new("game run", seed);
            let t = soak(
                &mut report,
                play,
                adversary,
                *steps,
                *inject_fault,
                seed,
                *allow_loss,
            )?;
            if let (Some(path), Some(t)) = (transcript, t) {
                fs::write(path, t.to_text())
                    .with_context(|| format!("writing {}", path.display()))?;
                report.put("transcript", path.display());
            }
            Ok(report)
        }
        GameCmd::Replay { play, transcript } => {
            let mut report = Report::new("game replay", seed);
            let text = fs::read_to_string(transcript)
                .with_context(|| format!("reading {}", transcript.display()))?;
            let recorded = Transcript::from_text(&text)?;
            let g = Arc::new(load_graph(&play.source)?);
            let (mut m, cfg) = registry::build(&play.matcher, &g, options(play))?;
            report.put("matcher", m.name());
            report.put("transcript", transcript.display());
            let out = replay(&recorded, &*g, cfg, &mut m)?;
            report.put("moves", out.transcript.len());
            report.put("losses", u64::from(out.loss.is_some()));
            if let Some(loss) = &out.loss {
                report.put("loss", loss);
            }
            match out.divergence {
                Some(i) => {
                    report.put("divergence", i);
                    report.violation(format!("replay diverges from the recording at move {i}"));
                }
                None => report.put("divergence", "none"),
            }
            Ok(report)
        }
        GameCmd::Search {
            source,
            k,
            load,
            incremental,
            plies,
            expect,
        } => {
            let mut report = Report::new("game search", seed);
            let g = load_graph(source)?;
            if g.left_size() > MAX_SEARCH_LEFT || *plies > MAX_SEARCH_PLIES {
                bail!("search is limited to {MAX_SEARCH_LEFT} left nodes and {MAX_SEARCH_PLIES} plies");
            }
            let base = if *incremental {
                GameConfig::incremental(*k)
            } else {
                GameConfig::dynamic(*k)
            };
            let cfg = base.with_load(*load);
            cfg.validate(&g)?;
            describe(&mut report, &g);
            report.put("k", k);
            report.put("load_limit", load);
            report.put("incremental", incremental);
            report.put("plies", plies);
            let winner = if requester_forces_win(&g, &cfg, *plies) {
                "requester"
            } else {
                "matcher"
            };
            report.put("winner", winner);
            if let Some(e) = expect {
                if e != winner {
                    report.violation(format!("expected {e} to win, {winner} wins"));
                }
            }
            Ok(report)
        }
    }
}

fn rich_params(
    n: usize,
    k: usize,
    eps: &str,
    first_right: Option<usize>,
    seed: u64,
) -> Result<RichParams<Rational>> {
    let mut params = RichParams::new(n, 2 * k as u64, scalar(eps)?);
    params.seed = seed;
    if let Some(r) = first_right {
        params.first_right = r;
    }
    Ok(params)
}

fn rich(cmd: &RichCmd, seed: u64, out: Option<&Path>) -> Result<Report> {
    match cmd {
        RichCmd::Build {
            n,
            k,
            eps,
            first_right,
        } => {
            let mut report = Report::new("rich build", seed);
            let params = rich_params(*n, *k, eps, *first_right, seed)?;
            report.put("eps", params.eps);
            let start = Instant::now();
            let g = RichGraph::build(&params)?;
            report.put("build_ms", start.elapsed().as_millis());
            let meta = g.metadata();
            if let Some(prefix) = out {
                let graph_path = prefix.with_extension("graph");
                let meta_path = prefix.with_extension("meta");
                fs::write(&graph_path, g.first.to_text())?;
                let mut text = format!("eps={}\nseed={seed}\n", params.eps);
                for (k, v) in &meta {
                    text.push_str(&format!("{k}={v}\n"));
                }
                let primes: Vec<String> =
                    g.second.primes().iter().map(ToString::to_string).collect();
                text.push_str(&format!("second_primes={}\n", primes.join(",")));
                fs::write(&meta_path, text)?;
                report.put("graph_file", graph_path.display());
                report.put("meta_file", meta_path.display());
                report.out_consumed = true;
            }
            report.extend(meta);
            Ok(report)
        }
        RichCmd::Soak {
            n,
            k,
            eps,
            first_right,
            steps,
        } => {
            let mut report = Report::new("rich soak", seed);
            let params = rich_params(*n, *k, eps, *first_right, seed)?;
            let g = RichGraph::build(&params)?;
            report.extend(g.metadata());
            let view = g.view();
            let mut cfg = GameConfig::dynamic(*k).with_expiration(g.window);
            cfg.rich_min_edges = Some(g.rich_min_edges);
            let mut m = g.matcher();
            let mut req = RandomAdversary::new(seed);
            let stats = run_game(&view, cfg, &mut m, &mut req, *steps, |r, _| {
                r.state().check_consistency(r.config())
            });
            match stats {
                Ok(stats) => {
                    report.extend(stats.report_lines());
                    if let Some(loss) = &stats.loss {
                        report.violation(format!("matcher lost: {loss}"));
                    }
                }
                Err(SoakError::Invariant { request, msg }) => {
                    report.violation(format!("after request {request}: {msg}"));
                }
                Err(e) => return Err(e.into()),
            }
            Ok(report)
        }
    }
}

fn store(args: &StoreArgs, seed: u64) -> Result<BitProbe> {
    let params = rich_params(args.n, args.k, &args.eps, args.first_right, seed)?;
    Ok(BitProbe::with_params(args.k, params)?)
}

fn bitprobe(cmd: &BitprobeCmd, seed: u64) -> Result<Report> {
    match cmd {
        BitprobeCmd::Serve { store: args } => {
            let mut report = Report::new("bitprobe serve", seed);
            let mut bp = store(args, seed)?;
            let mut rng = stream_rng(seed, stream::QUERY);
            let stdin = io::stdin();
            let handled = bp.serve(stdin.lock(), BufWriter::new(io::stdout()), &mut rng)?;
            report.put("commands", handled);
            // protocol replies own standard output
            report.body = Some(String::new());
            Ok(report)
        }
        BitprobeCmd::Bench {
            store: args,
            ops,
            queries,
            checkpoints,
            non_members,
            state,
            inject_fault,
        } => {
            let mut report = Report::new("bitprobe bench", seed);
            let start = Instant::now();
            let mut bp = store(args, seed)?;
            report.put("build_ms", start.elapsed().as_millis());
            report.put("n", args.n);
            report.put("k", args.k);
            report.put("eps", bp.eps());
            if let Some(g) = bp.graph() {
                report.extend(g.metadata());
            }
            report.put("table_bits", bp.table_len());
            report.put("entry_bits", bp.entry_bits());
            report.put("size_bits", bp.size_bits());
            bench(
                &mut report,
                &mut bp,
                args,
                *ops,
                *queries,
                *checkpoints,
                *non_members,
                *inject_fault,
                seed,
            )?;
            if let Some(path) = state {
                let bytes = bp.to_bytes();
                fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
                report.put("state_file", path.display());
                report.put("state_bytes", bytes.len());
            }
            Ok(report)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn bench(
    report: &mut Report,
    bp: &mut BitProbe,
    args: &StoreArgs,
    ops: u64,
    queries: u64,
    checkpoints: u64,
    non_members: usize,
    inject_fault: bool,
    seed: u64,
) -> Result<()> {
    let n = args.n;
    let mut history = stream_rng(seed, stream::HISTORY);
    let mut verifier = stream_rng(seed, stream::VERIFIER);
    let mut query_rng = stream_rng(seed, stream::QUERY);
    let every = (ops / checkpoints.max(1)).max(1);
    let per_check = (queries / ops.max(1)).max(1);
    let (mut member_q, mut member_err, mut other_q, mut other_err) = (0u64, 0u64, 0u64, 0u64);
    let (mut claims, mut claim_failures, mut asked) = (0u64, 0u64, 0u64);
    let mut update_nanos = Vec::with_capacity(ops as usize);
    let mut query_nanos = 0u128;
    let reads_before = bp.table_reads();
    for op in 1..=ops {
        let members = bp.members();
        let insert = bp.capacity() > 0
            && members.len() < bp.capacity()
            && (members.is_empty() || history.gen_bool(0.5));
        let t = Instant::now();
        let res = if insert {
            bp.insert(history.gen_range(0..n))
        } else if !members.is_empty() && history.gen_bool(0.9) {
            bp.delete(members[history.gen_range(0..members.len())])
        } else {
            bp.delete(history.gen_range(0..n))
        };
        update_nanos.push(t.elapsed().as_nanos() as u64);
        if let Err(e) = res {
            report.violation(format!("update {op}: {e}"));
            break;
        }
        if let Err(e) = bp.check_invariants() {
            report.violation(format!("after update {op}: {e}"));
            break;
        }
        if inject_fault && op == ops / 2 {
            if let Some(p) = bp
                .members()
                .first()
                .and_then(|&x| bp.positions(x).map(|ps| ps[0]))
            {
                bp.corrupt_bit(p);
                report.put("fault_bit", p);
            }
        }
        for _ in 0..per_check.min(queries.saturating_sub(asked)) {
            asked += 1;
            let x = if history.gen_bool(0.5) && !bp.is_empty() {
                let m = bp.members();
                m[history.gen_range(0..m.len())]
            } else {
                history.gen_range(0..n)
            };
            let t = Instant::now();
            let answer = bp.query(x, &mut query_rng);
            query_nanos += t.elapsed().as_nanos();
            if bp.contains(x) {
                member_q += 1;
                member_err += u64::from(!answer);
            } else {
                other_q += 1;
                other_err += u64::from(answer);
            }
        }
        if op % every == 0 {
            if let Err(e) = bp.check_table() {
                report.violation(format!("table at update {op}: {e}"));
            }
            let sample: Vec<usize> = (0..non_members).map(|_| verifier.gen_range(0..n)).collect();
            let claim = bp.verify_key_claim(&sample);
            claims += 1;
            if !claim.passed() {
                claim_failures += 1;
                if let Some(v) = claim.violations.first() {
                    report.violation(format!(
                        "key claim at update {op}: {} ({:?}): {}",
                        v.x, v.side, v.detail
                    ));
                }
            }
        }
    }
    let reads = bp.table_reads() - reads_before;
    let rate = |e: u64, q: u64| if q == 0 { 0.0 } else { e as f64 / q as f64 };
    let eps = bp.eps();
    let eps_f = *eps.numer() as f64 / *eps.denom() as f64;
    let updates_total: u64 = update_nanos.iter().sum();
    report.put("updates", update_nanos.len());
    report.put("matchings", bp.matchings());
    report.put("update_ns_p50", percentile(&update_nanos, 50.0));
    report.put("update_ns_p99", percentile(&update_nanos, 99.0));
    report.put(
        "updates_per_sec",
        format!(
            "{:.0}",
            update_nanos.len() as f64 / (updates_total.max(1) as f64 * 1e-9)
        ),
    );
    report.put("queries", asked);
    report.put(
        "queries_per_sec",
        format!("{:.0}", asked as f64 / (query_nanos.max(1) as f64 * 1e-9)),
    );
    report.put("reads_per_query", format!("{:.3}", rate(reads, asked)));
    report.put("member_queries", member_q);
    report.put("member_error", format!("{:.4}", rate(member_err, member_q)));
    report.put("non_member_queries", other_q);
    report.put(
        "non_member_error",
        format!("{:.4}", rate(other_err, other_q)),
    );
    report.put("checkpoints", claims);
    report.put("key_claim_failures", claim_failures);
    if asked > 0 && reads != asked {
        report.violation(format!("{reads} table reads for {asked} queries"));
    }
    let limit = eps_f + 0.01;
    for (side, e, q) in [
        ("member", member_err, member_q),
        ("non-member", other_err, other_q),
    ] {
        if rate(e, q) > limit {
            report.violation(format!(
                "{side} query error {:.4} exceeds {limit:.4}",
                rate(e, q)
            ));
        }
    }
    Ok(())
}

fn connector(cmd: &ConnectorCmd, seed: u64) -> Result<Report> {
    let ConnectorCmd::Demo {
        b,
        t,
        ops,
        complete,
        prune,
        dump,
    } = cmd;
    let mut report = Report::new("connector demo", seed);
    let mut verified = VerifiedLevels::new(child_seed(seed, stream::GRAPH));
    let mut plain = CompleteLevels::default();
    let factory: &mut dyn LevelFactory = if *complete { &mut plain } else { &mut verified };
    let mut net = Connector::build(*b, *t, factory)?;
    if !*complete {
        let levels: Vec<String> = verified
            .verified_levels()
            .iter()
            .map(ToString::to_string)
            .collect();
        report.put(
            "verified_levels",
            if levels.is_empty() {
                "none".into()
            } else {
                levels.join(",")
            },
        );
    }
    report.put("b", b);
    report.put("t", t);
    report.put("c", net.multiplier());
    report.put("d", net.degree());
    report.put("inputs", net.inputs());
    report.put("outputs", net.outputs());
    report.put("nodes", net.node_count());
    report.put("edges", net.edge_count());
    report.put("edge_bound", net.edge_bound());
    if net.edge_count() > net.edge_bound() {
        report.violation(format!(
            "{} edges exceed the bound {}",
            net.edge_count(),
            net.edge_bound()
        ));
    }
    let mut rng = stream_rng(seed, stream::CONNECTOR);
    let (mut prunes, mut refused) = (0u64, 0u64);
    for op in 1..=*ops {
        let roots = net.roots();
        let free: Vec<usize> = (0..net.outputs())
            .filter(|&y| net.tree_of_output(y).is_none())
            .collect();
        let grow = !free.is_empty() && (roots.is_empty() || rng.gen_bool(0.6));
        let res = if grow {
            let x = if !roots.is_empty() && rng.gen_bool(0.3) {
                roots[rng.gen_range(0..roots.len())]
            } else {
                rng.gen_range(0..net.inputs())
            };
            let y = free[rng.gen_range(0..free.len())];
            net.connect(x, y).map(|requests| {
                if requests > net.depth() {
                    refused += 1;
                }
            })
        } else {
            let x = roots[rng.gen_range(0..roots.len())];
            if *prune && rng.gen_bool(0.5) {
                let leaves = net.leaves(x);
                prunes += 1;
                net.prune(x, leaves[rng.gen_range(0..leaves.len())])
            } else {
                net.disconnect(x)
            }
        };
        if let Err(e) = res {
            report.violation(format!("operation {op}: {e}"));
            break;
        }
        if let Err(e) = net.check_invariants() {
            report.violation(format!("after operation {op}: {e}"));
            break;
        }
    }
    let stats = net.stats();
    report.put("connects", stats.connects);
    report.put("disconnects", stats.disconnects);
    report.put("prunes", prunes);
    report.put("matcher_requests", stats.matcher_requests);
    report.put("max_requests_per_connect", stats.max_requests_per_connect);
    report.put("trees", net.roots().len());
    if refused > 0 {
        report.violation(format!(
            "{refused} connects made more than t = {t} matcher requests"
        ));
    }
    if let Some(path) = dump {
        fs::write(path, net.dump()).with_context(|| format!("writing {}", path.display()))?;
        report.put("dump", path.display());
    }
    Ok(report)
}
