//! Command-line front end: solve target depths, simulate seeded batches,
//! sweep one config field, or cross-check the solver against its oracles.
//!
//! Every failure prints one machine-readable JSON object to stderr,
//! `{"code", "message", "context"}`, and the exit code classifies it:
//! 0 success, 2 config or I/O, 3 solver, 4 simulation domain, 5 failed
//! verification properties.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use laminate::{
    brute_force_best_response, monte_carlo_utility, run_batch, trader_experience,
    zeta_error_bound, BatchGame, BatchTrace, CostContext, EquilibriumSolution,
    Error as LibError, ZetaCertificate,
};
use serde_json::{json, Value};

use config::{BuiltExperiment, ExperimentConfig, MarketBlock, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "laminate",
    version,
    about = "Batch-execution model: dominant-strategy quotes for arbitrage slots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve each player's first-order condition and report target depths.
    Solve(Common),
    /// Run seeded batch replicas; write a JSONL trace and a CSV summary.
    Simulate(Common),
    /// Re-solve along a grid over one scalar config field; write long-format CSV.
    Sweep(SweepArgs),
    /// Cross-check the solver against brute-force and Monte Carlo oracles.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment description, JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the replica count from the config.
    #[arg(long)]
    replicas: Option<u64>,
    /// Suppress the stdout report (files are still written).
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Dotted path to the swept field, e.g. "flow_scale" or
    /// "allocation.weights.0" (the remaining weights are rescaled to keep
    /// the total at one).
    #[arg(long)]
    axis: String,
    /// Grid start (with --to and --steps).
    #[arg(long)]
    from: Option<f64>,
    /// Grid end, inclusive.
    #[arg(long)]
    to: Option<f64>,
    /// Number of evenly spaced grid points, at least 2.
    #[arg(long)]
    steps: Option<usize>,
    /// Explicit comma-separated grid; alternative to --from/--to/--steps.
    #[arg(long)]
    values: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(c) => run_solve(c),
        Command::Simulate(c) => run_simulate(c),
        Command::Sweep(a) => run_sweep(a),
        Command::Verify(c) => run_verify(c),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let doc = json!({ "code": f.code, "message": f.message, "context": f.context });
            eprintln!("{doc}");
            ExitCode::from(f.exit)
        }
    }
}

/// A terminal failure: exit code, stable error code, and JSON context.
struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
    context: Value,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { exit: 2, code: "config", message: message.into(), context: json!({}) }
    }

    fn io(path: &Path, e: &dyn std::fmt::Display) -> Self {
        Failure {
            exit: 2,
            code: "io",
            message: format!("{}: {e}", path.display()),
            context: json!({ "path": path.display().to_string() }),
        }
    }

    fn verify(failed: Vec<String>) -> Self {
        Failure {
            exit: 5,
            code: "verify",
            message: format!("failed properties: {}", failed.join(", ")),
            context: json!({ "failed": failed }),
        }
    }

    fn from_lib(e: &LibError) -> Self {
        let (code, exit, context) = lib_code(e);
        Failure { exit, code, message: e.to_string(), context }
    }
}

fn lib_code(e: &LibError) -> (&'static str, u8, Value) {
    match e {
        LibError::Domain { depth, lo, hi } => {
            ("domain", 4, json!({ "depth": depth, "lo": lo, "hi": hi }))
        }
        LibError::Quadrature { requested, achieved } => {
            ("quadrature", 3, json!({ "requested": requested, "achieved": achieved }))
        }
        LibError::Tolerance { requested, achieved } => {
            ("tolerance", 3, json!({ "requested": requested, "achieved": achieved }))
        }
        LibError::UndefinedCoupling { player, slot } => {
            ("undefined_coupling", 3, json!({ "player": player, "slot": slot }))
        }
        LibError::NoBracket { lo, hi } => ("no_bracket", 3, json!({ "lo": lo, "hi": hi })),
        LibError::Pole { product } => ("pole", 3, json!({ "product": product })),
        LibError::NoParticipation { player } => {
            ("no_participation", 3, json!({ "player": player }))
        }
        LibError::Invalid(_) => ("invalid", 2, json!({})),
        LibError::Replica { replica, source } => {
            let (cause, _, cause_context) = lib_code(source);
            ("replica", 4, json!({ "replica": replica, "cause": cause, "cause_context": cause_context }))
        }
    }
}

fn lib(e: LibError) -> Failure {
    Failure::from_lib(&e)
}

fn load(common: &Common) -> Result<(ExperimentConfig, BuiltExperiment), Failure> {
    let text = fs::read_to_string(&common.config).map_err(|e| Failure::io(&common.config, &e))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(lib)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(replicas) = common.replicas {
        cfg.replicas = replicas;
    }
    let built = cfg.build().map_err(lib)?;
    Ok((cfg, built))
}

fn resolve_out(common: &Common, built: &BuiltExperiment) -> Option<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| built.output_dir.as_ref().map(PathBuf::from))
}

fn write_json(dir: &Path, file: &str, report: &Value) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, &e))?;
    let path = dir.join(file);
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Failure::io(&path, &e))?;
    Ok(path)
}

/// Evenly spaced grid from `lo` to `hi`, strictly increasing, endpoints
/// included (`hi` is appended when the last step falls short of it).
fn pitch_grid(lo: f64, hi: f64, pitch: f64) -> Vec<f64> {
    let n = ((hi - lo) / pitch).floor() as usize;
    let mut grid = Vec::with_capacity(n + 2);
    for i in 0..=n {
        let x = lo + pitch * i as f64;
        if x > hi {
            break;
        }
        grid.push(x);
    }
    match grid.last() {
        Some(&last) if hi - last > 0.5 * pitch => grid.push(hi),
        Some(_) => {}
        None => grid.push(lo),
    }
    grid
}

fn participates(game: &BatchGame, player: usize) -> Result<bool, Failure> {
    let terms = game.slot_terms(player).map_err(lib)?;
    Ok(terms.iter().any(|t| t.a > 0.0))
}

/// Solve every participating player; non-participants quote the unwind depth.
fn solved_profile(
    built: &BuiltExperiment,
) -> laminate::Result<(Vec<f64>, Vec<EquilibriumSolution>)> {
    let game = &built.game;
    let mut targets = vec![game.x_oracle(); game.n_players()];
    let mut solutions = Vec::new();
    for player in 1..=game.n_players() {
        let terms = game.slot_terms(player)?;
        if !terms.iter().any(|t| t.a > 0.0) {
            continue;
        }
        let sol = game.solve_with(player, &built.solver)?;
        targets[player - 1] = sol.s_star;
        solutions.push(sol);
    }
    Ok((targets, solutions))
}

// ---------------------------------------------------------------- solve ----

fn run_solve(common: &Common) -> Result<(), Failure> {
    let (cfg, built) = load(common)?;
    let game = &built.game;

    let mut players = Vec::new();
    let mut non_participants = Vec::new();
    for player in 1..=game.n_players() {
        if !participates(game, player)? {
            non_participants.push(player);
            continue;
        }
        let sol = game.solve_with(player, &built.solver).map_err(lib)?;
        let (zeta, zeta_note) = match zeta_error_bound(game, player) {
            Ok(cert) => {
                let gap = (sol.log_coefficient - cert.log_zeta).abs();
                let note = format!(
                    "|log_coefficient - log_zeta| = {:.3e}, certified bound {:.3e}",
                    gap, cert.error_bound
                );
                (serde_json::to_value(cert).expect("certificate serializes"), note)
            }
            Err(LibError::Pole { product }) => (
                Value::Null,
                format!("closed form diverges: effective weight times impact = {product:.6} >= 1"),
            ),
            Err(LibError::Invalid(msg)) => {
                (Value::Null, format!("closed form unavailable: {msg}"))
            }
            Err(e) => return Err(Failure::from_lib(&e)),
        };
        let mut row = serde_json::to_value(&sol).expect("solution serializes");
        row["zeta"] = zeta;
        row["zeta_note"] = json!(zeta_note);
        players.push(row);
    }

    let mut report = json!({
        "x_oracle": game.x_oracle(),
        "oracle_price": game.oracle_price(),
        "k": game.k(),
        "n_players": game.n_players(),
        "players": players,
        "non_participants": non_participants,
    });

    if let Some(lg) = &built.labelled {
        let mut collapsed = Vec::new();
        for player in lg.participants() {
            let sol = lg.collapsed_target(player, &built.solver).map_err(lib)?;
            collapsed.push(serde_json::to_value(&sol).expect("solution serializes"));
        }
        report["labelled"] = json!({
            "participants": lg.participants(),
            "collapsed_targets": collapsed,
        });
    }

    if let (Some(sandwich), Some(block)) = (&built.sandwich, &cfg.limit_order) {
        let pitch = 1e-3 * game.x_oracle();
        let (a_lo, a_hi) = game.action_space();
        let grid = pitch_grid(a_lo, a_hi, pitch);
        let transition = sandwich.phase_transition(&grid).map_err(lib)?;
        let ctx = CostContext::new(game.market().clone(), game.x_oracle()).map_err(lib)?;
        let cost_at_q_depth = ctx.cost(block.q_depth).map_err(lib)?;
        let cost_at_boundary = ctx.cost(transition.boundary).map_err(lib)?;
        report["limit_order"] = json!({
            "r": block.r,
            "q_depth": block.q_depth,
            "mode": serde_json::to_value(block.mode).expect("mode serializes"),
            "transition": serde_json::to_value(&transition).expect("transition serializes"),
            // the jump equals cost(q_depth) - cost(boundary); the first term
            // dominates as r shrinks
            "jump_parts": {
                "cost_at_q_depth": cost_at_q_depth,
                "cost_at_boundary": cost_at_boundary,
            },
        });
    }

    if !common.quiet {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    }
    if let Some(dir) = resolve_out(common, &built) {
        write_json(&dir, "solution.json", &report)?;
    }
    Ok(())
}

// ------------------------------------------------------------- simulate ----

#[derive(serde::Serialize)]
struct TraceRow<'a> {
    replica: u64,
    #[serde(flatten)]
    trace: &'a BatchTrace,
}

#[derive(serde::Serialize)]
struct SummaryRow {
    replica: u64,
    player: usize,
    utility: f64,
}

fn run_simulate(common: &Common) -> Result<(), Failure> {
    let (_cfg, built) = load(common)?;
    let game = &built.game;
    if built.replicas == 0 {
        return Err(Failure::config("simulate needs at least one replica"));
    }
    let (targets, solutions) = solved_profile(&built).map_err(lib)?;

    let dir = resolve_out(common, &built).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir, &e))?;
    let traces_path = dir.join("traces.jsonl");
    let summary_path = dir.join("summary.csv");

    let traces_file = fs::File::create(&traces_path).map_err(|e| Failure::io(&traces_path, &e))?;
    let mut traces = std::io::BufWriter::new(traces_file);
    let mut summary =
        csv::Writer::from_path(&summary_path).map_err(|e| Failure::io(&summary_path, &e))?;

    let n = game.n_players();
    let mut utilities: Vec<Vec<f64>> = vec![Vec::with_capacity(built.replicas as usize); n];
    for replica in 0..built.replicas {
        let mut rng = laminate::replica_rng(built.seed, replica);
        let trace = run_batch(game, &targets, &mut rng)
            .map_err(|e| LibError::Replica { replica, source: Box::new(e) })
            .map_err(lib)?;
        serde_json::to_writer(&mut traces, &TraceRow { replica, trace: &trace })
            .map_err(|e| Failure::io(&traces_path, &e))?;
        traces.write_all(b"\n").map_err(|e| Failure::io(&traces_path, &e))?;
        for (p, bucket) in utilities.iter_mut().enumerate() {
            let utility = trace.utilities[p];
            summary
                .serialize(SummaryRow { replica, player: p + 1, utility })
                .map_err(|e| Failure::io(&summary_path, &e))?;
            bucket.push(utility);
        }
    }
    traces.flush().map_err(|e| Failure::io(&traces_path, &e))?;
    summary.flush().map_err(|e| Failure::io(&summary_path, &e))?;

    let estimates: Vec<Value> = utilities
        .iter()
        .enumerate()
        .map(|(p, vals)| {
            let (mean, std_error) = mean_and_se(vals);
            json!({ "player": p + 1, "mean": mean, "std_error": std_error, "replicas": built.replicas })
        })
        .collect();

    // mid-batch arrivals when there are any; with a single order slot the
    // first (and only) arrival is the subject
    let include_first_slot = game.k() == 1;
    let experience =
        trader_experience(game, &targets, built.replicas, built.seed, include_first_slot)
            .map_err(lib)?;

    let report = json!({
        "seed": built.seed,
        "replicas": built.replicas,
        "participants": solutions.iter().map(|s| s.player).collect::<Vec<_>>(),
        "targets": targets,
        "estimates": estimates,
        "trader_experience": serde_json::to_value(&experience).expect("experience serializes"),
        "files": {
            "traces": traces_path.display().to_string(),
            "summary": summary_path.display().to_string(),
        },
    });
    if !common.quiet {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    }
    Ok(())
}

fn mean_and_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------- sweep ----

#[derive(serde::Serialize)]
struct SweepRow {
    grid_index: usize,
    axis: String,
    value: f64,
    player: Option<usize>,
    s_star: Option<f64>,
    phi_bar: Option<f64>,
    log_coefficient: Option<f64>,
    residual: Option<f64>,
    unique: Option<bool>,
    w_check: Option<f64>,
    impact: Option<f64>,
    log_zeta: Option<f64>,
    zeta_error_bound: Option<f64>,
    error: Option<String>,
}

fn run_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let common = &args.common;
    let text = fs::read_to_string(&common.config).map_err(|e| Failure::io(&common.config, &e))?;
    let base: Value =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("config: {e}")))?;
    let grid = sweep_grid(args)?;

    let dir = common
        .out
        .clone()
        .or_else(|| base.get("output_dir").and_then(Value::as_str).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir, &e))?;
    let path = dir.join("sweep.csv");
    let mut writer = csv::Writer::from_path(&path).map_err(|e| Failure::io(&path, &e))?;

    let mut rows = 0usize;
    let mut errors = 0usize;
    for (grid_index, &value) in grid.iter().enumerate() {
        match sweep_point(&base, args, value) {
            Ok(point_rows) => {
                for mut row in point_rows {
                    row.grid_index = grid_index;
                    if row.error.is_some() {
                        errors += 1;
                    }
                    rows += 1;
                    writer.serialize(row).map_err(|e| Failure::io(&path, &e))?;
                }
            }
            Err(code) => {
                errors += 1;
                rows += 1;
                writer
                    .serialize(SweepRow {
                        grid_index,
                        axis: args.axis.clone(),
                        value,
                        player: None,
                        s_star: None,
                        phi_bar: None,
                        log_coefficient: None,
                        residual: None,
                        unique: None,
                        w_check: None,
                        impact: None,
                        log_zeta: None,
                        zeta_error_bound: None,
                        error: Some(code),
                    })
                    .map_err(|e| Failure::io(&path, &e))?;
            }
        }
    }
    writer.flush().map_err(|e| Failure::io(&path, &e))?;

    let report = json!({
        "axis": args.axis,
        "grid": grid,
        "rows": rows,
        "errors": errors,
        "path": path.display().to_string(),
    });
    if !common.quiet {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    }
    Ok(())
}

fn sweep_grid(args: &SweepArgs) -> Result<Vec<f64>, Failure> {
    if let Some(list) = &args.values {
        if args.from.is_some() || args.to.is_some() || args.steps.is_some() {
            return Err(Failure::config("use --values or --from/--to/--steps, not both"));
        }
        let mut grid = Vec::new();
        for item in list.split(',') {
            let v: f64 = item
                .trim()
                .parse()
                .map_err(|_| Failure::config(format!("bad grid value {item:?}")))?;
            grid.push(v);
        }
        if grid.is_empty() {
            return Err(Failure::config("empty --values grid"));
        }
        return Ok(grid);
    }
    match (args.from, args.to, args.steps) {
        (Some(lo), Some(hi), Some(steps)) if steps >= 2 => Ok((0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect()),
        _ => Err(Failure::config(
            "sweep needs --values, or --from/--to with --steps >= 2",
        )),
    }
}

/// One sweep point: rows per player, or an error code covering the point.
fn sweep_point(base: &Value, args: &SweepArgs, value: f64) -> Result<Vec<SweepRow>, String> {
    let mut point = base.clone();
    patch(&mut point, &args.axis, value).map_err(|m| format!("config: {m}"))?;
    if let Some(index) = weights_axis(&args.axis) {
        renormalize_weights(&mut point, index, value).map_err(|m| format!("config: {m}"))?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(point).map_err(|e| format!("config: {e}"))?;
    if cfg.schema != SCHEMA_VERSION {
        return Err(format!("config: unsupported schema {}", cfg.schema));
    }
    let mut cfg = cfg;
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    if let Some(replicas) = args.common.replicas {
        cfg.replicas = replicas;
    }
    let built = cfg.build().map_err(|e| lib_code(&e).0.to_string())?;
    let game = &built.game;

    let mut rows = Vec::new();
    for player in 1..=game.n_players() {
        let participant = match game.slot_terms(player) {
            Ok(terms) => terms.iter().any(|t| t.a > 0.0),
            Err(e) => {
                rows.push(error_row(args, value, Some(player), lib_code(&e).0));
                continue;
            }
        };
        if !participant {
            rows.push(error_row(args, value, Some(player), "no_participation"));
            continue;
        }
        match game.solve_with(player, &built.solver) {
            Ok(sol) => {
                let cert = zeta_error_bound(game, player).ok();
                rows.push(SweepRow {
                    grid_index: 0,
                    axis: args.axis.clone(),
                    value,
                    player: Some(player),
                    s_star: Some(sol.s_star),
                    phi_bar: Some(sol.phi_bar),
                    log_coefficient: Some(sol.log_coefficient),
                    residual: Some(sol.residual),
                    unique: Some(sol.unique),
                    w_check: cert.as_ref().map(|c| c.w_check),
                    impact: cert.as_ref().map(|c| c.impact),
                    log_zeta: cert.as_ref().map(|c| c.log_zeta),
                    zeta_error_bound: cert.as_ref().map(|c| c.error_bound),
                    error: None,
                });
            }
            Err(e) => rows.push(error_row(args, value, Some(player), lib_code(&e).0)),
        }
    }
    Ok(rows)
}

fn error_row(args: &SweepArgs, value: f64, player: Option<usize>, code: &str) -> SweepRow {
    SweepRow {
        grid_index: 0,
        axis: args.axis.clone(),
        value,
        player,
        s_star: None,
        phi_bar: None,
        log_coefficient: None,
        residual: None,
        unique: None,
        w_check: None,
        impact: None,
        log_zeta: None,
        zeta_error_bound: None,
        error: Some(code.to_string()),
    }
}

/// Sets the field at a dotted path (object keys and array indices) to `v`.
/// Intermediate segments must exist; the leaf may be created on an object.
/// A leaf that currently holds an integer stays integral when `v` is whole.
fn patch(root: &mut Value, path: &str, v: f64) -> Result<(), String> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(format!("bad axis path {path:?}"));
    }
    let mut cur = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if last {
            match cur {
                Value::Object(map) => {
                    let keep_integer = matches!(
                        map.get(*seg),
                        Some(Value::Number(n)) if n.is_u64() || n.is_i64()
                    );
                    map.insert((*seg).to_string(), number(v, keep_integer)?);
                    return Ok(());
                }
                Value::Array(items) => {
                    let index: usize =
                        seg.parse().map_err(|_| format!("bad array index {seg:?}"))?;
                    let slot = items
                        .get_mut(index)
                        .ok_or_else(|| format!("index {index} out of bounds"))?;
                    let keep_integer =
                        matches!(slot, Value::Number(n) if n.is_u64() || n.is_i64());
                    *slot = number(v, keep_integer)?;
                    return Ok(());
                }
                _ => return Err(format!("{seg:?} does not address an object or array")),
            }
        }
        cur = match cur {
            Value::Object(map) => map
                .get_mut(*seg)
                .ok_or_else(|| format!("unknown config field {seg:?}"))?,
            Value::Array(items) => {
                let index: usize = seg.parse().map_err(|_| format!("bad array index {seg:?}"))?;
                items
                    .get_mut(index)
                    .ok_or_else(|| format!("index {index} out of bounds"))?
            }
            _ => return Err(format!("{seg:?} does not address an object or array")),
        };
    }
    unreachable!("loop returns on the last segment")
}

fn number(v: f64, keep_integer: bool) -> Result<Value, String> {
    if !v.is_finite() {
        return Err("grid value is not finite".into());
    }
    if keep_integer && v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        return Ok(json!(v as u64));
    }
    Ok(json!(v))
}

fn weights_axis(path: &str) -> Option<usize> {
    path.strip_prefix("allocation.weights.")?.parse().ok()
}

/// After setting weight `index` to `v`, rescales the remaining weights so the
/// total stays at one (equally when they previously summed to zero).
fn renormalize_weights(root: &mut Value, index: usize, v: f64) -> Result<(), String> {
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("weight {v} outside [0, 1]"));
    }
    let weights = root
        .get_mut("allocation")
        .and_then(|a| a.get_mut("weights"))
        .and_then(Value::as_array_mut)
        .ok_or("allocation.weights is not an array")?;
    if index >= weights.len() {
        return Err(format!("index {index} out of bounds"));
    }
    let mut others = 0.0;
    for (i, w) in weights.iter().enumerate() {
        if i != index {
            others += w.as_f64().ok_or("non-numeric weight")?;
        }
    }
    let target = 1.0 - v;
    if weights.len() == 1 {
        if target.abs() > 1e-9 {
            return Err("single weight must be 1".into());
        }
        return Ok(());
    }
    let rest = weights.len() - 1;
    for (i, w) in weights.iter_mut().enumerate() {
        if i == index {
            continue;
        }
        let old = w.as_f64().expect("checked above");
        let new = if others > 0.0 { old * target / others } else { target / rest as f64 };
        *w = json!(new);
    }
    Ok(())
}

// --------------------------------------------------------------- verify ----

fn run_verify(common: &Common) -> Result<(), Failure> {
    let (cfg, built) = load(common)?;
    let game = &built.game;

    // closed-form certificates first, so a diverging series surfaces as its
    // own structured report instead of a generic bracketing failure
    let mut certs: Vec<Option<ZetaCertificate>> = Vec::new();
    for player in 1..=game.n_players() {
        if !participates(game, player)? {
            certs.push(None);
            continue;
        }
        match zeta_error_bound(game, player) {
            Ok(cert) => certs.push(Some(cert)),
            Err(LibError::Invalid(_)) => certs.push(None),
            Err(e) => return Err(Failure::from_lib(&e)),
        }
    }

    let (targets, solutions) = solved_profile(&built).map_err(lib)?;
    let pitch = 1e-3 * game.x_oracle();
    let (a_lo, a_hi) = game.action_space();
    let grid = pitch_grid(a_lo, a_hi, pitch);

    let mut properties = Vec::new();
    let mut failed = Vec::new();

    // the solver's root must sit within one grid cell of the brute-force
    // argmax of the expected utility
    {
        let mut pass = true;
        let mut details = Vec::new();
        for sol in &solutions {
            let br = brute_force_best_response(
                game,
                sol.player,
                &targets,
                &grid,
                built.replicas,
                built.seed,
            )
            .map_err(lib)?;
            let ok = (br.argmax - sol.s_star).abs() <= pitch + 1e-12;
            pass &= ok;
            details.push(json!({
                "player": sol.player,
                "s_star": sol.s_star,
                "argmax": br.argmax,
                "exact": br.exact,
                "within_one_cell": ok,
            }));
        }
        push_property(
            &mut properties,
            &mut failed,
            "solver_vs_oracle",
            pass,
            false,
            json!({ "pitch": pitch, "players": details }),
        );
    }

    // Monte Carlo expected utility vs exact enumeration, 3 standard errors
    {
        let mut pass = true;
        let mut skipped = true;
        let mut details = Vec::new();
        for sol in &solutions {
            let exact = brute_force_best_response(
                game,
                sol.player,
                &targets,
                &[sol.s_star],
                built.replicas,
                built.seed,
            )
            .map_err(lib)?;
            if !exact.exact {
                continue;
            }
            skipped = false;
            let mc = monte_carlo_utility(game, sol.player, &targets, built.replicas, built.seed)
                .map_err(lib)?;
            let ok = (mc.mean - exact.values[0]).abs() <= 3.0 * mc.std_error + 1e-12;
            pass &= ok;
            details.push(json!({
                "player": sol.player,
                "exact": exact.values[0],
                "mc": mc.mean,
                "std_error": mc.std_error,
                "within_3se": ok,
            }));
        }
        if skipped {
            pass = true;
        }
        push_property(
            &mut properties,
            &mut failed,
            "mc_vs_enumeration",
            pass,
            skipped,
            json!({ "players": details }),
        );
    }

    // on a log-linear market the closed form is exact, not approximate
    {
        let mut pass = true;
        let mut skipped = true;
        let mut details = Vec::new();
        if matches!(cfg.market, MarketBlock::Exponential { .. }) {
            for sol in &solutions {
                let Some(cert) = &certs[sol.player - 1] else { continue };
                skipped = false;
                let gap = (sol.phi_bar - cert.zeta).abs();
                let ok = gap <= 1e-9;
                pass &= ok;
                details.push(json!({
                    "player": sol.player,
                    "phi_bar": sol.phi_bar,
                    "zeta": cert.zeta,
                    "gap": gap,
                    "exact_to_1e-9": ok,
                }));
            }
        }
        if skipped {
            pass = true;
        }
        push_property(
            &mut properties,
            &mut failed,
            "zeta_exactness",
            pass,
            skipped,
            json!({ "players": details }),
        );
    }

    // certified bound on every market kind; 1e-9 of slack covers the
    // root-finder residual, which the linearization bound does not
    {
        let mut pass = true;
        let mut skipped = true;
        let mut details = Vec::new();
        for sol in &solutions {
            let Some(cert) = &certs[sol.player - 1] else { continue };
            skipped = false;
            let gap = (sol.log_coefficient - cert.log_zeta).abs();
            let ok = gap <= cert.error_bound + 1e-9;
            pass &= ok;
            details.push(json!({
                "player": sol.player,
                "log_coefficient": sol.log_coefficient,
                "log_zeta": cert.log_zeta,
                "gap": gap,
                "error_bound": cert.error_bound,
                "within_bound": ok,
            }));
        }
        if skipped {
            pass = true;
        }
        push_property(
            &mut properties,
            &mut failed,
            "zeta_certificate",
            pass,
            skipped,
            json!({ "players": details }),
        );
    }

    // per-label quotes must collapse onto the single-quote target
    {
        let mut pass = true;
        let mut skipped = true;
        let mut details = Vec::new();
        if let Some(lg) = &built.labelled {
            let coarse = 1e-2 * game.x_oracle();
            let cgrid = pitch_grid(a_lo, a_hi, coarse);
            for player in lg.participants() {
                let dc = lg
                    .diagonal_collapse(player, &cgrid, built.replicas, built.seed, &built.solver)
                    .map_err(lib)?;
                skipped = false;
                pass &= dc.pass;
                details.push(serde_json::to_value(&dc).expect("report serializes"));
            }
        }
        if skipped {
            pass = true;
        }
        push_property(
            &mut properties,
            &mut failed,
            "diagonal_collapse",
            pass,
            skipped,
            json!({ "players": details }),
        );
    }

    let all_pass = failed.is_empty();
    let report = json!({ "pass": all_pass, "properties": properties });
    if !common.quiet {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    }
    if let Some(dir) = resolve_out(common, &built) {
        write_json(&dir, "verify.json", &report)?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure::verify(failed))
    }
}

fn push_property(
    properties: &mut Vec<Value>,
    failed: &mut Vec<String>,
    name: &str,
    pass: bool,
    skipped: bool,
    details: Value,
) {
    if !pass && !skipped {
        failed.push(name.to_string());
    }
    properties.push(json!({
        "name": name,
        "pass": pass,
        "skipped": skipped,
        "details": details,
    }));
}
