//! Command-line experiment runner.
//!
//! Exit codes: 0 when every check passed, 1 on a domain failure (module
//! error or failed check), 2 on a configuration failure.

pub mod artifacts;
pub mod config;
pub mod studies;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use artifacts::{Artifacts, CONFIG_ECHO};
use config::LoadedConfig;
use studies::{Context, StudyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "widthlab", version, about = "Width-transfer experiments for parametric elliptic problems")]
pub struct Cli {
    /// Worker threads for parallel solves (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every study table present in the config.
    Run(RunArgs),
    /// Taylor coefficients, n-term selection and partial-sum check.
    Taylor(RunArgs),
    /// Width estimates and the rate-transfer verdict.
    Widths(RunArgs),
    /// Cauchy and factorial bound audit.
    Bounds(RunArgs),
    /// Covering of the parameter box.
    Cover(RunArgs),
    /// Semilinear convergence, Newton and coercivity checks.
    Semilinear(RunArgs),
    /// Merge study summaries of artifact directories into one table.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write report.csv here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub const STUDIES: [&str; 5] = ["taylor", "bounds", "widths", "cover", "semilinear"];

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_CONFIG;
        }
    };
    pool.install(|| dispatch(cli.command))
}

fn dispatch(cmd: Command) -> i32 {
    match cmd {
        Command::Run(a) => execute(&a, None),
        Command::Taylor(a) => execute(&a, Some("taylor")),
        Command::Bounds(a) => execute(&a, Some("bounds")),
        Command::Widths(a) => execute(&a, Some("widths")),
        Command::Cover(a) => execute(&a, Some("cover")),
        Command::Semilinear(a) => execute(&a, Some("semilinear")),
        Command::Report { dirs, out } => match report(&dirs) {
            Ok(text) => match out {
                Some(dir) => match std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join("report.csv"), &text)) {
                    Ok(()) => EXIT_OK,
                    Err(e) => {
                        eprintln!("error: {e}");
                        EXIT_DOMAIN
                    }
                },
                None => {
                    print!("{text}");
                    EXIT_OK
                }
            },
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_DOMAIN
            }
        },
    }
}

/// Studies selected by `only` or, for `run`, those configured.
fn selected(loaded: &LoadedConfig, only: Option<&'static str>) -> Vec<&'static str> {
    let c = &loaded.config;
    match only {
        Some(s) => vec![s],
        None => STUDIES
            .into_iter()
            .filter(|s| match *s {
                "taylor" => c.taylor.is_some(),
                "bounds" => c.bounds.is_some(),
                "widths" => c.widths.is_some(),
                "cover" => c.cover.is_some(),
                _ => c.semilinear.is_some(),
            })
            .collect(),
    }
}

fn execute(args: &RunArgs, only: Option<&'static str>) -> i32 {
    let mut loaded = match LoadedConfig::from_path(&args.config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if args.seed.is_some() {
        loaded.config.seed = args.seed;
    }
    let studies = selected(&loaded, only);
    if studies.is_empty() {
        eprintln!("error: config: no study tables present");
        return EXIT_CONFIG;
    }
    let art = match Artifacts::prepare(&args.out, &studies) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: output directory {}: {e}", args.out.display());
            return EXIT_DOMAIN;
        }
    };
    let echo = toml::to_string(&loaded.config).expect("config serializes");
    if let Err(e) = art.write(CONFIG_ECHO, echo.as_bytes()) {
        eprintln!("error: {e}");
        return EXIT_DOMAIN;
    }
    let ctx = Context {
        loaded: &loaded,
        seed: loaded.config.seed,
        art: &art,
    };
    let c = &loaded.config;
    let mut failed = Vec::new();
    let mut code = EXIT_OK;
    for study in studies {
        let outcome = match study {
            "taylor" => studies::taylor(&ctx, &c.taylor.clone().unwrap_or_default()),
            "bounds" => studies::bounds(&ctx, &c.bounds.clone().unwrap_or_default()),
            "widths" => studies::widths(&ctx, &c.widths.clone().unwrap_or_default()),
            "cover" => studies::cover(&ctx, &c.cover.clone().unwrap_or_default()),
            _ => studies::semilinear(&ctx, &c.semilinear.clone().unwrap_or_default()),
        };
        match outcome {
            Ok(pass) => {
                println!("{study}: {}", if pass { "pass" } else { "FAIL" });
                if !pass {
                    failed.push(format!("{study}: checks failed (see {study}/summary.toml)"));
                    code = EXIT_DOMAIN;
                }
            }
            Err(e) => {
                eprintln!("error: {study}: {e}");
                failed.push(format!("{study}: {e}"));
                code = match e {
                    StudyError::Config(_) => EXIT_CONFIG,
                    StudyError::Domain(_) => EXIT_DOMAIN,
                };
                break;
            }
        }
    }
    if !failed.is_empty() {
        if let Err(e) = art.mark_failed(&failed.join("\n")) {
            eprintln!("error: {e}");
        }
    }
    if let Err(e) = art.write_manifest() {
        eprintln!("error: manifest: {e}");
        return EXIT_DOMAIN;
    }
    code
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, inner) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, inner, out);
            }
        }
        toml::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// `source,study,key,value` rows for every `<dir>/<study>/summary.toml`.
pub fn report(dirs: &[PathBuf]) -> Result<String, String> {
    if dirs.is_empty() {
        return Err("report needs at least one artifact directory".into());
    }
    let mut buf = Vec::new();
    let mut rows = 0;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["source", "study", "key", "value"]).map_err(|e| e.to_string())?;
        for dir in dirs {
            for study in STUDIES {
                let path = dir.join(study).join("summary.toml");
                if !path.is_file() {
                    continue;
                }
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let value: toml::Value = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
                let mut pairs = Vec::new();
                flatten("", &value, &mut pairs);
                for (k, v) in pairs {
                    w.write_record([display(dir), study.to_string(), k, v]).map_err(|e| e.to_string())?;
                    rows += 1;
                }
            }
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    if rows == 0 {
        return Err("no study summaries found in the given directories".into());
    }
    String::from_utf8(buf).map_err(|e| e.to_string())
}

fn display(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}
