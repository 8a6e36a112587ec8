mod config;
mod report;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{OutputFormat, RunConfig};
use runner::Outcome;

/// Cross-checks off-shell Bethe-vector scalar products for the open XXZ
/// chain across independent evaluation routes and reports the residuals.
#[derive(Parser)]
#[command(name = "openxxz", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct CommonArgs {
    /// Configuration file (flat `key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the output format
    #[arg(long, value_parser = ["json", "csv"])]
    format: Option<String>,
    /// Override a tolerance, e.g. --tol fourway=1e-9 (repeatable)
    #[arg(long, value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every configured method on seeded draws and compare pairwise
    Crosscheck(CommonArgs),
    /// Sweep λ_1^B over a grid and tabulate every method per point
    Table(CommonArgs),
    /// Run the identity/lemma/equation/asymptotics/onshell suites
    Verify(CommonArgs),
    /// Re-render a stored JSON report
    Report {
        /// Stored report (JSON)
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_parser = ["json", "csv"])]
        format: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 3;

fn load_config(args: &CommonArgs) -> Result<RunConfig, config::ConfigError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.display().to_string());
    }
    if let Some(fmt) = &args.format {
        cfg.format = match fmt.as_str() {
            "csv" => OutputFormat::Csv,
            _ => OutputFormat::Json,
        };
    }
    for spec in &args.tol {
        let (name, value) = spec.split_once('=').ok_or_else(|| config::ConfigError {
            line: None,
            field: Some("--tol".into()),
            message: format!("expected NAME=VALUE, got `{spec}`"),
        })?;
        let v: f64 = value.parse().map_err(|e| config::ConfigError {
            line: None,
            field: Some("--tol".into()),
            message: format!("{e}"),
        })?;
        cfg.tolerances.insert(name.trim().to_string(), v);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &RunConfig, rendered: String) -> std::io::Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

fn finish(outcome: Outcome) -> ExitCode {
    ExitCode::from(outcome.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Crosscheck(args) => {
            let cfg = match load_config(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match runner::run_crosscheck(&cfg) {
                Ok((rep, outcome)) => {
                    let rendered = match cfg.format {
                        OutputFormat::Json => report::to_json(&rep),
                        OutputFormat::Csv => report::crosscheck_csv(&rep),
                    };
                    if let Err(e) = emit(&cfg, rendered) {
                        eprintln!("cannot write output: {e}");
                        return ExitCode::from(EXIT_CONFIG);
                    }
                    for d in &rep.draws {
                        eprintln!(
                            "[{}] draw {} seed {} max_rel {:.3e}",
                            if d.max_rel <= cfg.tol("fourway") && d.all_trusted { "pass" } else { "FAIL" },
                            d.draw,
                            d.seed,
                            d.max_rel
                        );
                    }
                    finish(outcome)
                }
                Err(e) => {
                    eprintln!("crosscheck failed: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Table(args) => {
            let cfg = match load_config(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match runner::run_table(&cfg) {
                Ok((rep, outcome)) => {
                    let rendered = match cfg.format {
                        OutputFormat::Json => report::to_json(&rep),
                        OutputFormat::Csv => report::table_csv(&rep),
                    };
                    if let Err(e) = emit(&cfg, rendered) {
                        eprintln!("cannot write output: {e}");
                        return ExitCode::from(EXIT_CONFIG);
                    }
                    finish(outcome)
                }
                Err(e) => {
                    eprintln!("table failed: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Verify(args) => {
            let cfg = match load_config(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match runner::run_verify(&cfg) {
                Ok((rep, outcome)) => {
                    for c in &rep.checks {
                        eprintln!(
                            "[{}] {}:{} residual {:.3e} (tol {:.1e})",
                            if c.pass { "pass" } else { "FAIL" },
                            c.suite,
                            c.check,
                            c.residual,
                            c.tolerance
                        );
                    }
                    let rendered = match cfg.format {
                        OutputFormat::Json => report::to_json(&rep),
                        OutputFormat::Csv => report::verify_csv(&rep),
                    };
                    if let Err(e) = emit(&cfg, rendered) {
                        eprintln!("cannot write output: {e}");
                        return ExitCode::from(EXIT_CONFIG);
                    }
                    finish(outcome)
                }
                Err(e) => {
                    eprintln!("verify failed: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Report { input, format, out } => {
            let text = match std::fs::read_to_string(&input) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", input.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let value: serde_json::Value = match serde_json::from_str(&text) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("not a valid JSON report: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let rendered = match format.as_deref() {
                Some("csv") => match render_report_csv(&value) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("{e}");
                        return ExitCode::from(EXIT_CONFIG);
                    }
                },
                _ => {
                    let mut s = serde_json::to_string_pretty(&value).expect("re-serialize");
                    s.push('\n');
                    s
                }
            };
            let res = match out {
                Some(path) => std::fs::write(path, rendered),
                None => {
                    print!("{rendered}");
                    Ok(())
                }
            };
            if let Err(e) = res {
                eprintln!("cannot write output: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            let status = value.get("status").and_then(|s| s.as_str()).unwrap_or("pass");
            match status {
                "pass" => ExitCode::SUCCESS,
                "resonance_flag" => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Flatten a stored crosscheck/table/verify report back to its CSV form.
fn render_report_csv(value: &serde_json::Value) -> Result<String, String> {
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or("report has no `kind` field")?;
    match kind {
        "crosscheck" => {
            let mut out = String::from("draw,seed,method,value_re,value_im,trusted,max_rel\n");
            for d in value["draws"].as_array().ok_or("missing draws")? {
                for r in d["records"].as_array().ok_or("missing records")? {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        d["draw"], d["seed"], r["method"].as_str().unwrap_or("?"),
                        r["value"]["re"], r["value"]["im"], r["trusted"], d["max_rel"]
                    ));
                }
            }
            Ok(out)
        }
        "table" => {
            let mut out = String::from("idx,lambda_re,lambda_im,method,value_re,value_im,max_rel\n");
            for row in value["rows"].as_array().ok_or("missing rows")? {
                for v in row["values"].as_array().ok_or("missing values")? {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        row["idx"], row["lambda"]["re"], row["lambda"]["im"],
                        v["method"].as_str().unwrap_or("?"), v["re"], v["im"], row["max_rel"]
                    ));
                }
            }
            Ok(out)
        }
        "verify" => {
            let mut out = String::from("suite,check,residual,tolerance,pass\n");
            for c in value["checks"].as_array().ok_or("missing checks")? {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c["suite"].as_str().unwrap_or("?"),
                    c["check"].as_str().unwrap_or("?"),
                    c["residual"], c["tolerance"], c["pass"]
                ));
            }
            Ok(out)
        }
        other => Err(format!("unknown report kind `{other}`")),
    }
}
