//! Experiment runner behind the `ucbench` binary.

pub mod config;
pub mod experiments;
pub mod report;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use config::SuiteConfig;
use report::{SuiteReport, Table, VERSION};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad or unreadable configuration.
    Config(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Run only experiments of this kind.
    pub kind: Option<String>,
    pub workers: Option<usize>,
    pub seed_override: Option<u64>,
}

/// Exit status for a finished run: 0 when everything passed, 2 otherwise.
pub fn exit_code(report: &SuiteReport) -> i32 {
    if report.pass {
        0
    } else {
        2
    }
}

/// Runs the selected experiments in order and writes all outputs.
pub fn run_suite(cfg: &SuiteConfig, opts: &RunOptions) -> Result<SuiteReport, CliError> {
    cfg.validate()?;
    let mut selected = Vec::new();
    for (i, e) in cfg.experiments.iter().enumerate() {
        if opts.kind.as_deref().is_some_and(|k| k != e.kind()) {
            continue;
        }
        let mut e = e.clone();
        if let Some(s) = opts.seed_override {
            e.override_seed(s);
        }
        selected.push((e.name(i), e));
    }
    if selected.is_empty() {
        return Err(CliError::Config(format!(
            "no experiments of kind '{}' in the configuration",
            opts.kind.as_deref().unwrap_or("*")
        )));
    }
    let suite_seed = opts.seed_override.unwrap_or(cfg.seed);
    let run = || {
        selected
            .into_iter()
            .map(|(name, e)| {
                log::info!("running {} ({})", name, e.kind());
                let r = experiments::run_experiment(&e, name, suite_seed);
                log::info!("{} finished in {:.2}s: {}", r.name, r.wall_clock_s, if r.pass { "PASS" } else { "FAIL" });
                r
            })
            .collect::<Vec<_>>()
    };
    let experiments = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("workers: {e}")))?
            .install(run),
        None => run(),
    };
    let mut report = SuiteReport {
        version: VERSION.into(),
        seed: suite_seed,
        pass: experiments.iter().all(|e| e.pass),
        experiments,
    };
    write_outputs(&mut report, &opts.out)?;
    Ok(report)
}

/// Writes `report.json`, one CSV per table and `plots.gp` into `out`.
pub fn write_outputs(report: &mut SuiteReport, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    for e in &mut report.experiments {
        for t in &mut e.tables {
            t.file = format!("{}_{}.csv", e.name, t.name);
            write_csv(t, &out.join(&t.file))?;
        }
    }
    let path = out.join("report.json");
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    let path = out.join("plots.gp");
    fs::write(&path, gnuplot_script(report)).map_err(io_err(&path))?;
    Ok(())
}

fn write_csv(t: &Table, path: &Path) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(&t.columns).map_err(err)?;
    for row in &t.rows {
        w.write_record(row.iter().map(Table::format_cell)).map_err(err)?;
    }
    w.flush().map_err(io_err(path))
}

fn gnuplot_script(report: &SuiteReport) -> String {
    let mut s = String::from("# gnuplot -p plots.gp\nset datafile separator ','\nset key autotitle columnhead\n");
    for e in &report.experiments {
        let Some(t) = e.tables.first() else { continue };
        match e.kind.as_str() {
            "carleman-sweep" => {
                let mut gammas: Vec<f64> = t.rows.iter().filter_map(|r| r[0].as_f64()).collect();
                gammas.dedup();
                s.push_str(&format!(
                    "\nset title '{}: empirical constant'\nset logscale xy\nset xlabel 's'\nset ylabel 'c_emp'\nplot ",
                    e.name
                ));
                let lines: Vec<String> = gammas
                    .iter()
                    .map(|g| {
                        format!(
                            "'{}' using 2:($1=={g:e} ? $3 : 1/0) with linespoints title 'gamma = {g}'",
                            t.file
                        )
                    })
                    .collect();
                s.push_str(&lines.join(", \\\n     "));
                s.push_str("\nunset logscale\npause -1\n");
            }
            "stability-run" => {
                if let Some(t) = e.table("sweep") {
                    s.push_str(&format!(
                        "\nset title '{}: reconstruction error'\nset logscale xy\nset xlabel 'log(1/delta)'\n\
                         set ylabel 'error'\nplot '{}' using (log(1/$1)):4 with linespoints title 'eta-norm error', \\\n     \
                         '' using (log(1/$1)):3 with linespoints title 'L2 error'\nunset logscale\npause -1\n",
                        e.name, t.file
                    ));
                }
            }
            _ => {}
        }
    }
    s
}

/// Loads the configuration and runs it.
pub fn run_from_path(config: &Path, opts: &RunOptions) -> Result<SuiteReport, CliError> {
    run_suite(&SuiteConfig::load(config)?, opts)
}
