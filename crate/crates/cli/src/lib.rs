//! Command-line front end: single runs, campaigns, statistics and the server.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use evtwin_core::config::{load_scenario, ConfigError, ScenarioConfig};
use evtwin_core::experiment::{
    grid_campaign, optimizer_campaign, policy_sweep, run_jobs, simulator_factors, sobol_campaign, table10_csv,
    ExperimentError, GridReference, Job, OptimizerRow, PolicyCase, ResultRecord, ResultsStore, RunOptions, EV_LEVELS,
    SOBOL_OUTPUTS,
};
use evtwin_core::optimizer::{Algorithm, OptimizerParams, SearchSpace, SimulatorObjective, DEFAULT_GRID_CAP};
use evtwin_core::sim::resolve_site;
use evtwin_core::stats::{sobol_matrix, wilcoxon_signed_rank, Alternative, Factor, SobolMatrix, SobolOptions};
use evtwin_core::weather::resolve_weather;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const SCHEMA_HELP: &str = "\
A scenario file is a JSON object. Required: nb_electrical (30-200) and
areas [{area_id, n_ports_11kW (0-50), n_ports_30kW (0-10), n_inactive_slots?}].
Optional: nb_gasoline, energy {pv, wind, bess}, policies {ban_gasoline,
idle_fee, relocate_full, notification}, behavior, options, metrics,
horizon_days, timestep_minutes (5), rng_seed, weather_ref
(synthetic:q1..q4|synthetic:annual[@seed] or a CSV path), site_ref.
See docs/scenario-schema.md for every field.";

#[derive(Debug, Parser)]
#[command(name = "evtwin", version, about = "Campus EV charging digital twin")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Base random seed; replicate seeds count up from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for results and artifacts.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,
    /// Scenario JSON file; the campus baseline when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Format of what is printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Jsonl)]
    pub format: Format,
    /// Worker threads for campaigns; all cores when omitted.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and store its metrics.
    Run {
        /// Override the scenario's horizon.
        #[arg(long)]
        days: Option<u32>,
    },
    /// Simulate several scenario files, each over replicate seeds.
    Batch {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
    },
    /// Satisfaction across EV levels and policy cases.
    PolicySweep {
        #[arg(long, value_delimiter = ',', default_values_t = EV_LEVELS)]
        ev: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [0u8, 1, 2, 3, 4, 5])]
        cases: Vec<u8>,
        #[arg(long, default_value_t = 20)]
        replicates: u64,
    },
    /// Evaluate every configuration of a search space.
    Grid {
        #[arg(long, default_value = "3d")]
        space: String,
        #[arg(long, value_delimiter = ',', default_values_t = [100u32])]
        ev: Vec<u32>,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
        cap: usize,
    },
    /// Compare metaheuristics against the full grid.
    Optimize {
        #[arg(long, default_value = "3d")]
        space: String,
        #[arg(long, default_value_t = 100)]
        ev: u32,
        /// Algorithm names; all six when omitted.
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = [55usize])]
        budgets: Vec<usize>,
        /// Optimizer seeds per algorithm and budget.
        #[arg(long, default_value_t = 10)]
        runs: u64,
        /// Simulation seeds averaged into each objective value.
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
        cap: usize,
    },
    /// Statistical tests and sensitivity analysis.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Serve the session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        #[arg(long, default_value_t = 30)]
        idle_minutes: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum StatsCommand {
    /// Paired signed-rank test.
    Wilcoxon {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        b: Vec<f64>,
        /// CSV whose first two numeric columns are the paired samples.
        #[arg(long, conflicts_with_all = ["a", "b"])]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Alt::TwoSided)]
        alternative: Alt,
    },
    /// Total-order Sobol indices.
    Sobol {
        #[arg(long, value_enum, default_value_t = SobolModel::Simulator)]
        model: SobolModel,
        /// Base sample size; a power of two, at least 64.
        #[arg(long, default_value_t = 256)]
        n_base: usize,
        #[arg(long, value_delimiter = ',', default_values_t = SOBOL_OUTPUTS.map(String::from))]
        outputs: Vec<String>,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Alt {
    TwoSided,
    Greater,
    Less,
}

impl From<Alt> for Alternative {
    fn from(a: Alt) -> Self {
        match a {
            Alt::TwoSided => Alternative::TwoSided,
            Alt::Greater => Alternative::Greater,
            Alt::Less => Alternative::Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SobolModel {
    Simulator,
    Ishigami,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => config_error(c),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn config_error(e: ConfigError) -> CliError {
    let mut msg = format!("invalid scenario: {e}\n");
    for v in e.violations() {
        msg.push_str(&format!("  - {v}\n"));
    }
    msg.push('\n');
    msg.push_str(SCHEMA_HELP);
    CliError::Usage(msg)
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_RUNTIME
        }
    }
}

struct Context {
    base: ScenarioConfig,
    base_dir: Option<PathBuf>,
    seed: u64,
    format: Format,
    out: PathBuf,
    workers: Option<usize>,
}

impl Context {
    fn load(g: &Global) -> Result<Self, CliError> {
        let (mut base, base_dir) = match &g.config {
            Some(p) => (load_scenario(p).map_err(config_error)?, p.parent().map(Path::to_path_buf)),
            None => (ScenarioConfig::campus_baseline(), None),
        };
        if let Some(s) = g.seed {
            base.rng_seed = s;
        }
        Ok(Self { seed: base.rng_seed, base, base_dir, format: g.format, out: g.out.clone(), workers: g.workers })
    }

    fn seeds(&self, n: u64) -> Result<Vec<u64>, CliError> {
        if n == 0 {
            return Err(CliError::Usage("replicate count must be at least 1".into()));
        }
        Ok((0..n).map(|i| self.seed.wrapping_add(i)).collect())
    }

    fn run_options(&self) -> RunOptions {
        RunOptions { workers: self.workers, base_dir: self.base_dir.clone(), keep_day_reports: false }
    }

    fn store(&self) -> Result<ResultsStore, CliError> {
        Ok(ResultsStore::open(&self.out)?)
    }
}

fn space_named(name: &str) -> Result<SearchSpace, CliError> {
    SearchSpace::by_name(name).ok_or_else(|| CliError::Usage(format!("unknown space {name:?}; expected 3d or 5d")))
}

fn write_jsonl<T: Serialize>(out: &mut dyn Write, items: &[T]) -> Result<(), CliError> {
    for item in items {
        serde_json::to_writer(&mut *out, item).map_err(runtime)?;
        writeln!(out)?;
    }
    Ok(())
}

const RECORD_HEADER: &str =
    "experiment,scenario_hash,seed,label,candidate,satisfaction,self_sufficiency,self_consumption,payback_months,normalized_payback,objective";

fn records_csv(records: &[ResultRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_HEADER.split(',')).expect("in-memory write");
    for r in records {
        let m = &r.metrics;
        let candidate = r.candidate.as_ref().map(|c| c.iter().map(i64::to_string).collect::<Vec<_>>().join(" "));
        w.write_record([
            r.experiment.clone(),
            r.scenario_hash.clone(),
            r.seed.to_string(),
            r.label.clone().unwrap_or_default(),
            candidate.unwrap_or_default(),
            format!("{:.6}", m.satisfaction),
            format!("{:.6}", m.self_sufficiency),
            format!("{:.6}", m.self_consumption),
            m.payback_months.map(|p| format!("{p:.3}")).unwrap_or_default(),
            format!("{:.6}", m.normalized_payback),
            format!("{:.6}", m.objective),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn emit_records(ctx: &Context, out: &mut dyn Write, records: &[ResultRecord]) -> Result<(), CliError> {
    match ctx.format {
        Format::Jsonl => write_jsonl(out, records),
        Format::Csv => Ok(out.write_all(records_csv(records).as_bytes())?),
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::load(&cli.global)?;
    match &cli.command {
        Command::Run { days } => {
            let mut cfg = ctx.base.clone();
            if let Some(d) = days {
                cfg.horizon_days = *d;
                cfg.validate().map_err(config_error)?;
            }
            let mut store = ctx.store()?;
            let opts = RunOptions { keep_day_reports: true, ..ctx.run_options() };
            let records = run_jobs(&mut store, "run", &[Job::new(cfg)], &opts)?;
            store.write_index()?;
            emit_records(&ctx, out, &records)
        }
        Command::Batch { scenarios, replicates } => {
            ctx.seeds(*replicates)?;
            let mut store = ctx.store()?;
            let mut all = Vec::new();
            for path in scenarios {
                let mut cfg = load_scenario(path).map_err(config_error)?;
                if let Some(s) = cli.global.seed {
                    cfg.rng_seed = s;
                }
                let label = path.file_name().map(|n| n.to_string_lossy().into_owned());
                let jobs: Vec<Job> = (0..*replicates)
                    .map(|i| {
                        let mut c = cfg.clone();
                        c.rng_seed = cfg.rng_seed.wrapping_add(i);
                        Job { config: c, label: label.clone(), candidate: None }
                    })
                    .collect();
                let opts = RunOptions { base_dir: path.parent().map(Path::to_path_buf), ..ctx.run_options() };
                all.extend(run_jobs(&mut store, "batch", &jobs, &opts)?);
            }
            store.write_index()?;
            emit_records(&ctx, out, &all)
        }
        Command::PolicySweep { ev, cases, replicates } => {
            let cases: Vec<PolicyCase> =
                cases.iter().map(|&c| PolicyCase::new(c).map_err(|e| CliError::Usage(e.to_string()))).collect::<Result<_, _>>()?;
            let seeds = ctx.seeds(*replicates)?;
            let mut store = ctx.store()?;
            let sweep = policy_sweep(&mut store, &ctx.base, ev, &cases, &seeds, &ctx.run_options())?;
            store.write_artifact("policy_sweep.csv", &sweep.to_csv())?;
            let mut tests = String::from("ev_level,case,baseline,w_statistic,p_value,method\n");
            if let Some(&base_case) = cases.iter().find(|c| c.id() == 0) {
                for &level in ev {
                    for &case in cases.iter().filter(|c| c.id() != 0) {
                        match sweep.compare(level, case, base_case, Alternative::Greater) {
                            Ok(r) => tests.push_str(&format!(
                                "{level},{},0,{},{:.6},{:?}\n",
                                case.id(),
                                r.w_statistic,
                                r.p_value,
                                r.method
                            )),
                            Err(_) => tests.push_str(&format!("{level},{},0,,,\n", case.id())),
                        }
                    }
                }
            }
            store.write_artifact("policy_tests.csv", &tests)?;
            store.write_index()?;
            match ctx.format {
                Format::Jsonl => write_jsonl(out, &sweep.cells),
                Format::Csv => Ok(out.write_all(sweep.to_csv().as_bytes())?),
            }
        }
        Command::Grid { space, ev, replicates, cap } => {
            let space = space_named(space)?;
            let seeds = ctx.seeds(*replicates)?;
            let mut store = ctx.store()?;
            let mut campaigns = Vec::new();
            for &level in ev {
                let c = grid_campaign(&mut store, &ctx.base, &space, level, &seeds, *cap, &ctx.run_options())?;
                store.write_artifact(&format!("grid_{}d_ev{level}.csv", space.len()), &c.rows_csv())?;
                campaigns.push(c);
            }
            store.write_artifact("table10.csv", &table10_csv(&campaigns))?;
            store.write_index()?;
            match ctx.format {
                Format::Jsonl => {
                    let best: Vec<_> = campaigns
                        .iter()
                        .map(|c| serde_json::json!({ "ev_level": c.ev_level, "evaluated": c.rows.len(), "best": c.best_row() }))
                        .collect();
                    write_jsonl(out, &best)
                }
                Format::Csv => Ok(out.write_all(table10_csv(&campaigns).as_bytes())?),
            }
        }
        Command::Optimize { space, ev, algorithms, budgets, runs, replicates, cap } => {
            let space = space_named(space)?;
            let algorithms: Vec<Algorithm> = if algorithms.is_empty() {
                Algorithm::ALL.to_vec()
            } else {
                algorithms.iter().map(|a| a.parse().map_err(|e: evtwin_core::optimizer::OptimizerError| CliError::Usage(e.to_string()))).collect::<Result<_, _>>()?
            };
            let sim_seeds = ctx.seeds(*replicates)?;
            let opt_seeds = ctx.seeds(*runs)?;
            let mut store = ctx.store()?;
            let grid = grid_campaign(&mut store, &ctx.base, &space, *ev, &sim_seeds, *cap, &ctx.run_options())?;
            let reference = GridReference::from_campaign(&grid)?;
            let mut base = ctx.base.clone();
            base.nb_electrical = *ev;
            let weather = resolve_weather(&base.weather_ref, ctx.base_dir.as_deref(), base.horizon_days as usize).map_err(runtime)?;
            let site = resolve_site(&base, ctx.base_dir.as_deref()).map_err(runtime)?;
            let objective = SimulatorObjective::new(base, space.clone(), sim_seeds, Arc::new(weather), Arc::new(site))
                .map_err(runtime)?;
            let rows = optimizer_campaign(&objective, &reference, &algorithms, budgets, &opt_seeds, &OptimizerParams::default())?;
            let csv = optimizer_csv(&rows);
            store.write_artifact(&format!("optimizer_{}d_ev{ev}.csv", space.len()), &csv)?;
            store.write_index()?;
            match ctx.format {
                Format::Jsonl => write_jsonl(out, &rows),
                Format::Csv => Ok(out.write_all(csv.as_bytes())?),
            }
        }
        Command::Stats(StatsCommand::Wilcoxon { a, b, input, alternative }) => {
            let (a, b) = match input {
                Some(p) => read_pairs(p)?,
                None => (a.clone(), b.clone()),
            };
            if a.is_empty() {
                return Err(CliError::Usage("give paired samples with --a/--b or --input".into()));
            }
            let r = wilcoxon_signed_rank(&a, &b, (*alternative).into()).map_err(|e| CliError::Usage(e.to_string()))?;
            match ctx.format {
                Format::Jsonl => write_jsonl(out, &[r]),
                Format::Csv => {
                    writeln!(out, "n,n_effective,w_statistic,r_plus,r_minus,p_value,method,reject_h0")?;
                    writeln!(
                        out,
                        "{},{},{},{},{},{:.12},{:?},{}",
                        a.len(),
                        r.n_effective,
                        r.w_statistic,
                        r.r_plus,
                        r.r_minus,
                        r.p_value,
                        r.method,
                        r.reject_h0
                    )?;
                    Ok(())
                }
            }
        }
        Command::Stats(StatsCommand::Sobol { model, n_base, outputs, bootstrap }) => {
            let opts = SobolOptions { bootstrap: *bootstrap, ..SobolOptions::new(*n_base, ctx.seed) };
            let m = match model {
                SobolModel::Ishigami => ishigami_matrix(&opts)?,
                SobolModel::Simulator => {
                    sobol_campaign(&ctx.base, &simulator_factors(), outputs, &opts, ctx.base_dir.as_deref())?
                }
            };
            let name = match model {
                SobolModel::Ishigami => "sobol_ishigami.csv",
                SobolModel::Simulator => "sobol.csv",
            };
            std::fs::create_dir_all(&ctx.out)?;
            std::fs::write(ctx.out.join(name), m.to_csv())?;
            match ctx.format {
                Format::Jsonl => write_jsonl(out, &[m]),
                Format::Csv => Ok(out.write_all(m.to_csv().as_bytes())?),
            }
        }
        Command::Serve { addr, idle_minutes } => {
            let opts = evtwin_server::ServerOptions {
                idle_timeout: std::time::Duration::from_secs(idle_minutes * 60),
                base_dir: ctx.base_dir.clone(),
                ..Default::default()
            };
            let rt = tokio::runtime::Runtime::new()?;
            writeln!(out, "listening on http://{addr}")?;
            out.flush()?;
            rt.block_on(evtwin_server::serve(*addr, opts))?;
            Ok(())
        }
    }
}

fn optimizer_csv(rows: &[OptimizerRow]) -> String {
    let mut s = format!("{}\n", OptimizerRow::CSV_HEADER);
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

fn read_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path).map_err(runtime)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for row in reader.records() {
        let row = row.map_err(runtime)?;
        let nums: Vec<f64> = row.iter().filter_map(|f| f.trim().parse().ok()).collect();
        if nums.len() >= 2 {
            a.push(nums[0]);
            b.push(nums[1]);
        }
    }
    Ok((a, b))
}

/// Ishigami test function with a = 7, b = 0.1 on [-pi, pi]^3.
pub fn ishigami(x: &[f64]) -> f64 {
    x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
}

fn ishigami_matrix(opts: &SobolOptions) -> Result<SobolMatrix, CliError> {
    use std::f64::consts::PI;
    let factors: Vec<Factor> = ["x1", "x2", "x3"].iter().map(|n| Factor::continuous(n, -PI, PI)).collect();
    sobol_matrix(|x: &[f64]| vec![ishigami(x)], &factors, &["y".to_string()], opts).map_err(|e| CliError::Usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ishigami_at_known_points() {
        use std::f64::consts::FRAC_PI_2;
        assert_eq!(ishigami(&[0.0, 0.0, 0.0]), 0.0);
        let y = ishigami(&[FRAC_PI_2, FRAC_PI_2, 1.0]);
        assert!((y - 8.1).abs() < 1e-12);
    }

    #[test]
    fn pairs_skip_headers_and_short_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "x,y\n1,2\nonly\n3, 4.5,9\n").unwrap();
        assert_eq!(read_pairs(&path).unwrap(), (vec![1.0, 3.0], vec![2.0, 4.5]));
    }

    #[test]
    fn config_errors_are_usage_errors() {
        let mut c = ScenarioConfig::campus_baseline();
        c.nb_electrical = 500;
        match config_error(c.validate().unwrap_err()) {
            CliError::Usage(m) => assert!(m.contains("nb_electrical") && m.contains("docs/scenario-schema.md")),
            CliError::Runtime(_) => panic!("expected a usage error"),
        }
    }

    #[test]
    fn parse_global_flags_anywhere() {
        let cli = Cli::try_parse_from(["evtwin", "grid", "--seed", "4", "--format", "csv", "--ev", "50,100"]).unwrap();
        assert_eq!(cli.global.seed, Some(4));
        assert_eq!(cli.global.format, Format::Csv);
        assert!(matches!(cli.command, Command::Grid { ref ev, .. } if ev == &[50, 100]));
    }
}
