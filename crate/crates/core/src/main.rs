use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use foliage::report::{parse_report_json, render_report, Format, Report};
use foliage::runner::{resolve_config, run_one, run_with_config, environment, RunOptions};
use foliage::spec::{parse_spec, CheckDirective, CheckSpec, Pos, SpecDocument};

const EXIT_USAGE: u8 = 3;
const EXIT_DIAGNOSTICS: u8 = 4;

#[derive(Parser)]
#[command(name = "foliage", version, about = "Batch verifier for foliations and Godbillon-Vey forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Seed of the sampled zero test; overrides the document and FOLIAGE_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Absolute and relative tolerance of the sampled zero test.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value = "text", value_parser = parse_format)]
    format: Format,
    /// Record per-check wall time (makes json output nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check of a spec document.
    Check {
        spec: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Compute the Godbillon-Vey form of a family on one stratum.
    Gv {
        spec: PathBuf,
        #[arg(long)]
        stratum: usize,
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        mu: Option<String>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Render a saved json report, or run a spec document and render it.
    Report {
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

struct Failure(u8, String);

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(EXIT_USAGE, format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<SpecDocument, Failure> {
    let text = read(path)?;
    parse_spec(&text).map_err(|ds| {
        let lines: Vec<String> = ds.iter().map(|d| format!("{}:{d}", path.display())).collect();
        Failure(EXIT_DIAGNOSTICS, lines.join("\n"))
    })
}

fn options(flags: &RunFlags) -> RunOptions {
    RunOptions {
        seed: flags.seed,
        samples: flags.samples,
        tol: flags.tol,
        timing: flags.timing,
        env_seed: None,
    }
    .with_process_env()
}

fn run_doc(doc: &SpecDocument, flags: &RunFlags) -> Result<Report, Failure> {
    let opts = options(flags);
    let (cfg, source) = resolve_config(doc, &opts).map_err(|e| Failure(EXIT_USAGE, e.to_string()))?;
    Ok(run_with_config(doc, &cfg, &source, opts.timing))
}

fn gv(doc: &SpecDocument, stratum: usize, family: Option<&str>, mu: Option<&str>, flags: &RunFlags) -> Result<Report, Failure> {
    let usage = |m: String| Failure(EXIT_USAGE, m);
    let (fname, fam) = match family {
        Some(n) => (n, doc.families.get(n).ok_or_else(|| usage(format!("no family named `{n}`")))?),
        None => match doc.families.len() {
            1 => doc.families.iter().next().map(|(n, f)| (n.as_str(), f)).expect("one family"),
            0 => return Err(usage("the document declares no family".into())),
            _ => return Err(usage("several families declared; pass --family".into())),
        },
    };
    if stratum >= fam.ranks().len() {
        return Err(usage(format!("stratum {stratum} out of range: family has {} ranks", fam.ranks().len())));
    }
    let choice = match mu {
        Some(m) => doc
            .mu_choice(fam, m)
            .ok_or_else(|| usage(format!("`{m}` is not a mu choice for family `{fname}`")))?,
        None => {
            let fitting: Vec<_> = doc.mus.keys().filter_map(|m| doc.mu_choice(fam, m)).collect();
            match fitting.len() {
                1 => fitting.into_iter().next().expect("one choice"),
                _ => Default::default(),
            }
        }
    };
    let opts = options(flags);
    let (cfg, source) = resolve_config(doc, &opts).map_err(|e| usage(e.to_string()))?;
    let directive = CheckDirective {
        name: format!("gv_min({fname}, stratum {stratum})"),
        kind: "gv-min",
        pos: Pos { line: 0, col: 0 },
        spec: CheckSpec::GvMin {
            family: fam.clone(),
            mu: choice,
            stratum,
        },
    };
    Ok(Report::new(environment(&cfg, &source), vec![run_one(&directive, &doc.working_box, &cfg)]))
}

fn run(cli: Cli) -> Result<(Report, Format), Failure> {
    match cli.command {
        Command::Check { spec, flags } => Ok((run_doc(&load(&spec)?, &flags)?, flags.format)),
        Command::Gv {
            spec,
            stratum,
            family,
            mu,
            flags,
        } => Ok((gv(&load(&spec)?, stratum, family.as_deref(), mu.as_deref(), &flags)?, flags.format)),
        Command::Report { file, flags } => {
            let text = read(&file)?;
            if text.trim_start().starts_with('{') {
                let rep = parse_report_json(&text).map_err(|e| Failure(EXIT_USAGE, format!("{}: {e}", file.display())))?;
                Ok((rep, flags.format))
            } else {
                Ok((run_doc(&load(&file)?, &flags)?, flags.format))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok((rep, format)) => {
            print!("{}", render_report(&rep, format));
            ExitCode::from(rep.exit_code() as u8)
        }
        Err(Failure(code, msg)) => {
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
