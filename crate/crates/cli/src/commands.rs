//! The `simulate`, `render`, `sweep` and `compare` verbs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ladder_kv::simulator::{compare_policies, LADDER_LABEL};
use ladder_kv::{materialize, run, sweep_with, Execution, PatternKind};

use crate::config::{parse_policy, FileConfig};
use crate::error::CliError;
use crate::output;

#[derive(Debug, Parser)]
#[command(name = "ladder-kv", version, about = "Ladder-shaped KV-cache retention: simulate, render, sweep, compare")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config with [cache], [model], [sim] and [output] sections.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set cache.budget=80`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Sweep seed; also seeds the toy model in numeric runs.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Retention policy: ladder, streaming, full or random:<seed>.
    #[arg(long)]
    pub policy: Option<String>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a token stream through the cache and write the trace CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, alias = "out", value_name = "PATH")]
        trace: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Use the sliding-window protocol with this window length.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Draw the retention mask of one grid as SVG.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        slots: Option<usize>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Score random patterns against the ladder and write the sweep CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        slots: Option<usize>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run the same stream under several policies and print a table.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ladder,streaming,full")]
        policies: String,
        #[arg(long)]
        steps: Option<usize>,
    },
}

fn load(common: &Common) -> Result<FileConfig, CliError> {
    let mut cfg = FileConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
        cfg.model.seed = seed;
    }
    if let Some(policy) = &common.policy {
        cfg.cache.policy = policy.clone();
    }
    Ok(cfg)
}

/// Creates `path` up front so unwritable destinations fail before any work.
fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e.to_string()))
}

fn survival_path(trace: &Path) -> PathBuf {
    let mut name = trace.as_os_str().to_owned();
    name.push(".survival.csv");
    PathBuf::from(name)
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, trace, steps, window } => {
            let mut cfg = load(&common)?;
            if let Some(steps) = steps {
                cfg.sim.steps = steps;
            }
            if let Some(window) = window {
                cfg.sim.protocol = "sliding".into();
                cfg.sim.window = window;
            }
            let sim = cfg.sim_config(cfg.policy()?)?;
            let trace_path = trace.or(cfg.output.trace.clone());
            let mut sinks = match &trace_path {
                Some(p) => {
                    let side = cfg.output.survival.then(|| survival_path(p));
                    Some((create(p)?, side.as_deref().map(create).transpose()?, side))
                }
                None => None,
            };
            let result = run(&sim)?;
            if let (Some(path), Some((w, side_w, side))) = (&trace_path, sinks.take()) {
                let mut w = w;
                output::write_trace_csv(&result, &mut w).map_err(|e| csv_err(path, e))?;
                finish(path, w)?;
                if let (Some(mut sw), Some(side)) = (side_w, side) {
                    output::write_survival_csv(&result, &mut sw).map_err(|e| csv_err(&side, e))?;
                    finish(&side, sw)?;
                }
            }
            if !common.quiet {
                write_summary(stdout, &result).map_err(|e| CliError::io("<stdout>", e))?;
            }
        }
        Command::Render { common, slots, out } => {
            let cfg = load(&common)?;
            let policy = cfg.policy()?;
            let ladder = cfg.ladder();
            let slots = slots.unwrap_or(cfg.sim.slots);
            let path = out.or(cfg.output.svg.clone());
            let writer = path.as_deref().map(create).transpose()?;
            let mask = materialize(policy, &ladder, slots)?;
            let svg = output::render_svg(&mask, &ladder, policy);
            match (path, writer) {
                (Some(p), Some(mut w)) => {
                    w.write_all(svg.as_bytes()).map_err(|e| CliError::io(&p, e))?;
                    finish(&p, w)?;
                    if !common.quiet {
                        writeln!(stdout, "wrote {} retained cells to {}", mask.total_cells(), p.display())
                            .map_err(|e| CliError::io("<stdout>", e))?;
                    }
                }
                _ => stdout.write_all(svg.as_bytes()).map_err(|e| CliError::io("<stdout>", e))?,
            }
        }
        Command::Sweep { common, n, slots, out } => {
            let cfg = load(&common)?;
            cfg.check_ratios()?;
            let ladder = cfg.ladder();
            ladder.validate()?;
            let n = n.unwrap_or(cfg.sim.sweep_n);
            let slots = slots.unwrap_or(cfg.sim.slots);
            let path = out.or(cfg.output.sweep.clone());
            let writer = path.as_deref().map(create).transpose()?;
            let result = sweep_with(Execution::default(), cfg.sim.seed, n, &ladder, slots, &cfg.sim.ratios)?;
            match (&path, writer) {
                (Some(p), Some(mut w)) => {
                    output::write_sweep_csv(&result, &mut w).map_err(|e| csv_err(p, e))?;
                    finish(p, w)?;
                }
                _ => output::write_sweep_csv(&result, &mut *stdout).map_err(|e| csv_err(Path::new("<stdout>"), e))?,
            }
            if !common.quiet && path.is_some() {
                let (ladder_point, on_front) = result.point(LADDER_LABEL).expect("ladder point");
                writeln!(
                    stdout,
                    "{} points, {} on the front; ladder: {} cells, min coverage {}, on front: {}",
                    result.points.len(),
                    result.front.len(),
                    ladder_point.cache_cells,
                    ladder_point.min_coverage,
                    on_front
                )
                .map_err(|e| CliError::io("<stdout>", e))?;
            }
        }
        Command::Compare { common, policies, steps } => {
            let mut cfg = load(&common)?;
            if let Some(steps) = steps {
                cfg.sim.steps = steps;
            }
            let kinds = policies
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(parse_policy)
                .collect::<Result<Vec<PatternKind>, _>>()?;
            if kinds.is_empty() {
                return Err(CliError::Config("no policies given".into()));
            }
            let sims = kinds.iter().map(|&k| cfg.sim_config(k)).collect::<Result<Vec<_>, _>>()?;
            let traces = compare_policies(Execution::default(), &sims[0], &kinds)?;
            stdout
                .write_all(output::compare_table(&traces).as_bytes())
                .map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn write_summary(out: &mut dyn Write, t: &ladder_kv::Trace) -> std::io::Result<()> {
    let max_occ = t.final_occupancy.iter().max().copied().unwrap_or(0);
    let min_occ = t.final_occupancy.iter().min().copied().unwrap_or(0);
    writeln!(out, "policy:          {}", t.policy)?;
    writeln!(out, "steps:           {}", t.steps_completed)?;
    writeln!(out, "compactions:     {}", t.n_compactions())?;
    writeln!(out, "final occupancy: min {min_occ} max {max_occ} (budget {})", t.budget)?;
    writeln!(
        out,
        "coverage:        min {} mean {:.3}",
        t.final_coverage.min_coverage, t.final_coverage.mean_coverage
    )?;
    writeln!(out, "distinct tokens: {}", t.final_coverage.distinct_tokens)?;
    if let Some(step) = t.exhausted_at {
        writeln!(
            out,
            "OOM-analog: full cache exhausted its {}-slot budget at step {step}",
            t.budget
        )?;
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
