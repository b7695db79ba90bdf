//! Command-line front end shared by the `fguide` binary and the tests.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use fguide_core::guidance::{GuidanceKind, JsWeight};
use fguide_core::oracles::{run_oracles, OracleSuite, DEFAULT_TRIALS};

use crate::calibrate::calibrate;
use crate::config::{load_config, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::field::{gradient_field, write_field, Grid};
use crate::preset::{run_preset, tables_base, Preset};
use crate::run::{build_classifier, ensure_dir, run};

const DEFAULT_OUT: &str = "fguide-out";

#[derive(Debug, Parser)]
#[command(name = "fguide", version, about = "Divergence-regularized classifier guidance experiments")]
pub struct Cli {
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JsWeightArg {
    DerivativeConsistent,
    AsPrinted,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample with every configured guidance kind and sweep point.
    Run {
        /// Experiment config; optional with `--preset`.
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Run the gradient and identity oracle suite.
    Oracles {
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, value_enum, default_value = "derivative-consistent", hide = true)]
        js_weight: JsWeightArg,
    },
    /// Dump the guidance gradient field over a 2-D grid to `field.csv`.
    Field {
        config: PathBuf,
        /// xmin,xmax,ymin,ymax,nx,ny
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        /// Target class; defaults to the config's first class.
        #[arg(long)]
        class: Option<usize>,
        /// Guidance kind; defaults to the config's `guidance.kind`.
        #[arg(long, value_parser = parse_kind)]
        kind: Option<GuidanceKind>,
    },
    /// ECE-regularized fine-tuning of a miscalibrated classifier.
    Calibrate { config: PathBuf },
}

fn parse_kind(s: &str) -> Result<GuidanceKind, String> {
    GuidanceKind::ALL
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown guidance kind `{s}`"))
}

fn load(path: &Path, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let mut cfg = load_config(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli_out: &Option<PathBuf>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Executes a parsed command, writing progress lines to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let say = |stdout: &mut dyn Write, line: String| {
        let _ = writeln!(stdout, "{line}");
    };
    match &cli.command {
        Command::Run { config, preset } => {
            let cfg = match config {
                Some(p) => load(p, cli.seed)?,
                None if preset.is_some() => tables_base(cli.seed.unwrap_or(0)),
                None => return Err(CliError::Config("run: a config path is required without --preset".into())),
            };
            let out = out_dir(&cli.out, Some(&cfg));
            match preset {
                Some(p) => {
                    for (name, record) in run_preset(*p, &cfg, &out)? {
                        say(stdout, format!("{name}: {} rows, config {}", record.rows.len(), record.config_hash));
                    }
                }
                None => {
                    let record = run(&cfg, &out)?;
                    say(stdout, format!("{} rows, config {}", record.rows.len(), record.config_hash));
                }
            }
            say(stdout, format!("wrote {}", out.display()));
        }
        Command::Oracles { trials, js_weight } => {
            let suite = OracleSuite {
                trials: *trials,
                seed: cli.seed.unwrap_or(0),
                js_weight: match js_weight {
                    JsWeightArg::DerivativeConsistent => JsWeight::DerivativeConsistent,
                    JsWeightArg::AsPrinted => JsWeight::AsPrinted,
                },
            };
            let bundle = run_oracles(&suite);
            for r in &bundle.reports {
                say(
                    stdout,
                    format!(
                        "{} {:<28} trials={:<4} max_rel_err={:.3e} tol={:.0e}",
                        if r.passed { "PASS" } else { "FAIL" },
                        r.name,
                        r.trials,
                        r.max_rel_err,
                        r.tol
                    ),
                );
            }
            if let Some(out) = &cli.out {
                ensure_dir(out)?;
                let json = serde_json::to_string_pretty(&bundle.reports).expect("reports serialize");
                crate::run::write_text(&out.join("oracles.json"), &json)?;
            }
            let failed: Vec<String> = bundle.failures().map(|r| r.name.clone()).collect();
            if !failed.is_empty() {
                return Err(CliError::Oracle(format!("failed: {}", failed.join(", "))));
            }
        }
        Command::Field {
            config,
            grid,
            class,
            kind,
        } => {
            let cfg = load(config, cli.seed)?;
            let gmm = cfg.mixture()?;
            let model = build_classifier(&cfg, &gmm)?;
            let mut spec = cfg.guidance.clone();
            if let Some(k) = kind {
                spec.kind = *k;
            }
            let y = class.unwrap_or(cfg.classes[0]);
            let lambda = spec.lambda.at(cfg.schedule.steps, cfg.schedule.steps);
            let rows = gradient_field(&model, &spec, grid, y, lambda)?;
            let out = out_dir(&cli.out, Some(&cfg));
            ensure_dir(&out)?;
            write_field(&out.join("field.csv"), &rows)?;
            say(stdout, format!("{} grid points, wrote {}", rows.len(), out.join("field.csv").display()));
        }
        Command::Calibrate { config } => {
            let cfg = load(config, cli.seed)?;
            let out = out_dir(&cli.out, Some(&cfg));
            for o in calibrate(&cfg, &out)? {
                say(
                    stdout,
                    format!(
                        "seed {}: ECE {:.4} -> {:.4} ({:+.1}%), accuracy {:.4} -> {:.4}",
                        o.seed,
                        o.plain.binned_ece,
                        o.tuned.binned_ece,
                        -100.0 * o.ece_reduction(),
                        o.plain.accuracy,
                        o.tuned.accuracy
                    ),
                );
            }
            say(stdout, format!("wrote {}", out.display()));
        }
    }
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
/// Help and version requests exit 0, usage errors exit 1.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
