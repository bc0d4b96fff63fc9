mod error;
mod output;
mod overrides;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use merge_cbf::sim::{
    first_deviation_step, run_alpha_sweep, run_episode, run_fixed_alpha_comparison, run_validity_batch,
    ScenarioConfig, SimulationTrace,
};

use crate::error::CliError;
use crate::output::{num, write_atomic, write_trace, Manifest, Table};

const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Parser)]
#[command(name = "merge-cbf", version, about = "Chance-constrained CBF ramp-merging simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one episode and write its trace.
    Run(Common),
    /// Randomized validity batch over the config's sampling regimes.
    Validity {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 400)]
        trials: usize,
    },
    /// Adaptive α against a fixed-α run of the same scenario.
    Compare(Common),
    /// One run per nominal α.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 5.0, 10.0, 15.0])]
        alphas: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replaces scenario.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override, `key=value`; repeatable. Keys are dotted paths
    /// (`merging.0.init_arc_m`) or names under [scenario] or [controller].
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Keep α at its nominal value.
    #[arg(long)]
    fixed_alpha: bool,
    /// Use the unit chance-penalty coefficient.
    #[arg(long)]
    paper_coefficient: bool,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, CliError> {
        let path = self.config.display();
        let text = std::fs::read_to_string(&self.config)
            .map_err(|e| CliError::Config(format!("cannot read config {path}: {e}")))?;
        let parsed = ScenarioConfig::from_toml_str(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
        let mut table: toml::Table = toml::from_str(&parsed.to_toml_string()).expect("serialized config reparses");
        let mut sets = self.overrides.clone();
        if let Some(seed) = self.seed {
            sets.push(format!("scenario.seed={seed}"));
        }
        if self.fixed_alpha {
            sets.push("controller.adaptive=false".into());
        }
        if self.paper_coefficient {
            sets.push("controller.coefficient_mode=\"paper-literal\"".into());
        }
        overrides::apply(&mut table, &sets)?;
        let text = toml::to_string(&table).expect("table serializes");
        let cfg = ScenarioConfig::from_toml_str(&text)
            .map_err(|e| CliError::Config(format!("{path} after overrides: {e}")))?;
        for w in cfg.controller.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }

    fn prepare(&self, command: &str) -> Result<(ScenarioConfig, Manifest), CliError> {
        let cfg = self.load()?;
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let mut m = Manifest::new(command);
        m.set("config_path", self.config.display());
        m.set("config_snapshot", RESOLVED_CONFIG);
        m.set("seed", cfg.scenario.seed);
        m.set("overrides", self.overrides.join(";"));
        m.set("adaptive", cfg.controller.adaptive);
        m.set("trace_schema", output::TRACE_SCHEMA);
        let snapshot = m.output(self.out.join(RESOLVED_CONFIG));
        write_atomic(&snapshot, cfg.to_toml_string().as_bytes())?;
        Ok((cfg, m))
    }
}

fn max_alpha(trace: &SimulationTrace) -> f64 {
    trace.controls().map(|c| c.alpha_used).fold(f64::NEG_INFINITY, f64::max)
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.map(String::from).to_vec()
}

fn curves(trace: &SimulationTrace) -> String {
    trace
        .summary
        .curves
        .iter()
        .map(|c| c.as_str())
        .collect::<Vec<_>>()
        .join(";")
}

fn cmd_run(c: &Common) -> Result<(), CliError> {
    let (cfg, mut m) = c.prepare("run")?;
    let trace = run_episode(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    write_trace(&m.output(c.out.join("trace.csv")), &trace, cfg.scenario.dt_s)?;

    let s = &trace.summary;
    let mut t = Table::new(
        "merge-cbf-summary/1",
        &strings([
            "min_distance_m",
            "min_distance_step",
            "collision",
            "fallback_count",
            "violation_count",
            "outcome",
            "curves",
            "alpha_initial",
            "alpha_max",
        ]),
    );
    t.row(&[
        num(s.min_distance),
        s.min_distance_step.to_string(),
        s.collision.to_string(),
        s.fallback_count.to_string(),
        s.violation_count.to_string(),
        s.outcome.label().to_string(),
        curves(&trace),
        num(cfg.controller.initial_alpha()),
        num(max_alpha(&trace)),
    ]);
    t.write(&m.output(c.out.join("summary.csv")))?;
    m.write(&c.out)?;
    println!(
        "min distance {:.3} m at step {} (r_safe {} m), collision {}, fallbacks {}, outcome {}",
        s.min_distance, s.min_distance_step, cfg.controller.r_safe_m, s.collision, s.fallback_count,
        s.outcome.label()
    );
    Ok(())
}

fn cmd_validity(c: &Common, trials: usize) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let (cfg, mut m) = c.prepare("validity")?;
    let ranges = cfg
        .validity
        .clone()
        .ok_or_else(|| CliError::Config(format!("{}: no [validity] section", c.config.display())))?;
    m.set("trials", trials);
    let report = run_validity_batch(&cfg, trials, &ranges).map_err(|e| CliError::Config(e.to_string()))?;

    let mut t = Table::new(
        "merge-cbf-validity-trials/1",
        &strings([
            "trial",
            "regime",
            "attempts",
            "ego_init_arc_m",
            "ego_init_speed_mps",
            "alpha_nominal",
            "min_distance_m",
            "collision",
            "fallback_count",
            "violation_count",
            "outcome",
            "curves",
        ]),
    );
    for s in &report.trials {
        t.row(&[
            s.trial.to_string(),
            s.regime.clone(),
            s.attempts.to_string(),
            num(s.ego_init_arc_m),
            num(s.ego_init_speed_mps),
            num(s.alpha_nominal),
            num(s.min_distance),
            s.collision.to_string(),
            s.fallback_count.to_string(),
            s.violation_count.to_string(),
            s.outcome.label().to_string(),
            s.curves.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(";"),
        ]);
    }
    t.write(&m.output(c.out.join("trials.csv")))?;

    let collisions = report.trials.iter().filter(|s| s.collision).count();
    let mut agg = Table::new(
        "merge-cbf-validity-aggregate/1",
        &strings([
            "trials",
            "collisions",
            "collision_rate",
            "min_distance_m",
            "r_safe_m",
            "fallback_total",
            "rejected_too_close",
            "rejected_empty_start",
            "rejected_unavoidable",
        ]),
    );
    agg.row(&[
        trials.to_string(),
        collisions.to_string(),
        num(report.collision_rate()),
        num(report.min_distance()),
        num(report.r_safe),
        report.fallback_total().to_string(),
        report.rejected.too_close.to_string(),
        report.rejected.empty_start.to_string(),
        report.rejected.unreachable.to_string(),
    ]);
    agg.write(&m.output(c.out.join("aggregate.csv")))?;

    let mut hist = Table::new("merge-cbf-histogram/1", &strings(["bin_lo_m", "bin_hi_m", "count"]));
    for (lo, hi, n) in report.min_distance_histogram(1.0) {
        hist.row(&[num(lo), num(hi), n.to_string()]);
    }
    hist.write(&m.output(c.out.join("histogram.csv")))?;
    m.write(&c.out)?;
    println!(
        "{trials} trials: collision rate {}, min distance {:.3} m (r_safe {} m), fallbacks {}; rejected draws: {}",
        report.collision_rate(),
        report.min_distance(),
        report.r_safe,
        report.fallback_total(),
        report.rejected
    );
    Ok(())
}

fn cmd_compare(c: &Common) -> Result<(), CliError> {
    let (cfg, mut m) = c.prepare("compare")?;
    let cmp = run_fixed_alpha_comparison(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let dt = cfg.scenario.dt_s;
    write_trace(&m.output(c.out.join("trace_adaptive.csv")), &cmp.adaptive, dt)?;
    write_trace(&m.output(c.out.join("trace_fixed.csv")), &cmp.fixed, dt)?;
    let mut z = Table::new(
        "merge-cbf-zones/1",
        &strings(["kind", "start_step", "end_step", "start_s", "end_s"]),
    );
    for zone in &cmp.zones {
        z.row(&[
            zone.kind.as_str().to_string(),
            zone.start.to_string(),
            zone.end.to_string(),
            num(zone.start as f64 * dt),
            num(zone.end as f64 * dt),
        ]);
    }
    z.write(&m.output(c.out.join("zones.csv")))?;
    m.write(&c.out)?;
    for (name, t) in [("adaptive", &cmp.adaptive), ("fixed", &cmp.fixed)] {
        println!(
            "{name}: min distance {:.3} m, fallbacks {}, max alpha {}",
            t.summary.min_distance,
            t.summary.fallback_count,
            num(max_alpha(t))
        );
    }
    println!("{} zones", cmp.zones.len());
    Ok(())
}

fn cmd_sweep(c: &Common, alphas: &[f64]) -> Result<(), CliError> {
    if alphas.is_empty() {
        return Err(CliError::Config("--alphas needs at least one value".into()));
    }
    let (cfg, mut m) = c.prepare("sweep")?;
    m.set("alphas", alphas.iter().map(|a| num(*a)).collect::<Vec<_>>().join(","));
    let sweep = run_alpha_sweep(&cfg, alphas).map_err(|e| CliError::Config(e.to_string()))?;
    let mut t = Table::new(
        "merge-cbf-sweep/1",
        &strings(["alpha_nominal", "first_deviation_step", "min_distance_m", "fallback_count", "outcome", "trace"]),
    );
    for (alpha, trace) in &sweep {
        let name = format!("trace_alpha_{}.csv", num(*alpha));
        write_trace(&m.output(c.out.join(&name)), trace, cfg.scenario.dt_s)?;
        let first = first_deviation_step(trace, cfg.controller.u_nominal_mps2);
        t.row(&[
            num(*alpha),
            first.map_or(String::new(), |s| s.to_string()),
            num(trace.summary.min_distance),
            trace.summary.fallback_count.to_string(),
            trace.summary.outcome.label().to_string(),
            name,
        ]);
        println!(
            "alpha {}: first deviation {}, min distance {:.3} m, outcome {}",
            num(*alpha),
            first.map_or("none".into(), |s| s.to_string()),
            trace.summary.min_distance,
            trace.summary.outcome.label()
        );
    }
    t.write(&m.output(c.out.join("sweep.csv")))?;
    m.write(&c.out)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Validity { common, trials } => cmd_validity(common, *trials),
        Command::Compare(c) => cmd_compare(c),
        Command::Sweep { common, alphas } => cmd_sweep(common, alphas),
    }
}

fn out_dir(cli: &Cli) -> &Path {
    match &cli.command {
        Command::Run(c) | Command::Compare(c) => &c.out,
        Command::Validity { common, .. } | Command::Sweep { common, .. } => &common.out,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Io { .. }) {
                eprintln!("output directory: {}", out_dir(&cli).display());
            }
            e.exit_code()
        }
    }
}
