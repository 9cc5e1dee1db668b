//! Command-line front end: argument parsing, report assembly, exit codes.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::baselines::{bonferroni_p, data_split_p, naive_p};
use crate::datasets::{generate_synthetic, load_csv, SyntheticConfig};
use crate::error::{Error, Result};
use crate::harness::{compare_with_oracle, run_experiment, ExperimentConfig, ExperimentMode, FeatureProtocol, Method};
use crate::inference::{build_eta, decompose_line, infer_feature, infer_feature_oc, observe};
use crate::regression::PenaltyConfig;
use crate::report::{
    fmt17, to_json, write_experiment, write_text, DatasetSummary, FeatureEntry, InferSettings, ReportDocument,
    SplitStatus, F17, SCHEMA_VERSION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "sfsda", version, about = "Selective inference after optimal-transport domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Selective p-values for the features selected on a source/target CSV pair.
    Infer(InferArgs),
    /// Monte Carlo false/true positive rate experiment on synthetic data.
    Experiment(ExperimentArgs),
    /// Compare the analytic truncation region with a brute-force grid.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "noise-sd", default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, value_delimiter = ',', default_value = "sfs-da,oc,naive,bonferroni,ds")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// `fpr` or `tpr`
    mode: String,
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    nt: usize,
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 120)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Target coefficient on every feature; 0 for `fpr`, 0.5 for `tpr` by default.
    #[arg(long = "beta-target")]
    beta_target: Option<f64>,
    #[arg(long = "beta-source", default_value_t = 2.0)]
    beta_source: f64,
    #[arg(long, value_delimiter = ',', default_value = "sfs-da,oc,naive,bonferroni,ds,no-inference")]
    methods: Vec<String>,
    /// Test every selected feature instead of one sampled at random.
    #[arg(long = "all-features")]
    all_features: bool,
    /// Write zero runtimes so repeated runs are byte-identical.
    #[arg(long = "no-timing")]
    no_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    ns: usize,
    #[arg(long)]
    nt: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    grid: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long = "beta-source", default_value_t = 2.0)]
    beta_source: f64,
    #[arg(long = "beta-target", default_value_t = 0.0)]
    beta_target: f64,
    /// Allowed symmetric difference in grid spacings.
    #[arg(long, default_value_t = 3.0)]
    tolerance: f64,
}

fn penalty(lambda: f64, gamma: f64) -> Result<PenaltyConfig> {
    let p = PenaltyConfig::elastic_net(lambda, gamma);
    p.validate()?;
    if lambda <= 0.0 {
        return Err(Error::InvalidInput("--lambda must be positive".into()));
    }
    Ok(p)
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    for n in names {
        let m: Method = n.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn cmd_infer(args: &InferArgs, stdout: &mut dyn Write) -> Result<i32> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidInput("--alpha must lie in (0, 1)".into()));
    }
    let penalty = penalty(args.lambda, args.gamma)?;
    let methods = parse_methods(&args.methods)?;
    if methods.contains(&Method::NoInference) {
        return Err(Error::InvalidInput("method 'no-inference' is only available in experiments".into()));
    }
    let dataset = load_csv(&args.source, &args.target, args.noise_sd)?;
    let observed = observe(&dataset, &penalty)?;
    let active = observed.active_set().to_vec();
    let split = if methods.contains(&Method::Ds) {
        Some(data_split_p(&dataset, &penalty, args.seed)?)
    } else {
        None
    };
    let features: Vec<FeatureEntry> = active
        .par_iter()
        .map(|&j| {
            let full = infer_feature(&dataset, &penalty, &observed, j)?;
            let line = decompose_line(&dataset, &build_eta(&dataset, &active, j)?)?;
            let naive = naive_p(&line);
            let p_oc = if methods.contains(&Method::Oc) {
                Some(F17(infer_feature_oc(&dataset, &penalty, &observed, j)?.p_value))
            } else {
                None
            };
            let (p_ds, ds_status) = match &split {
                Some(s) => {
                    let status = match s.p_values.iter().find(|(f, _)| *f == j) {
                        None => SplitStatus::NotSelected,
                        Some((_, None)) => SplitStatus::Unidentifiable,
                        Some((_, Some(_))) => SplitStatus::Tested,
                    };
                    (Some(F17(s.p_value_for(j))), Some(status))
                }
                None => (None, None),
            };
            Ok(FeatureEntry {
                feature_index: j,
                statistic: F17(full.statistic),
                sigma: F17(full.statistic_sd),
                intervals: full.region.intervals().iter().map(|&(lo, hi)| [F17(lo), F17(hi)]).collect(),
                p_selective: F17(full.p_value),
                p_naive: F17(naive),
                p_bonferroni: F17(bonferroni_p(naive, dataset.n_features())),
                p_ds,
                ds_status,
                p_oc,
                reject_selective: full.p_value <= args.alpha,
            })
        })
        .collect::<Result<_>>()?;
    let doc = ReportDocument {
        schema_version: SCHEMA_VERSION,
        dataset: DatasetSummary {
            n_source: dataset.n_source(),
            n_target: dataset.n_target(),
            n_features: dataset.n_features(),
        },
        settings: InferSettings {
            lambda: F17(args.lambda),
            gamma: F17(args.gamma),
            alpha: F17(args.alpha),
            noise_sd: F17(args.noise_sd),
            methods: methods.iter().map(|m| m.name().to_string()).collect(),
            seed: args.seed,
        },
        selected: active.clone(),
        features,
    };
    write_text(&args.out, &to_json(&doc)?)?;
    let io = |e: std::io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    if doc.features.is_empty() {
        writeln!(stdout, "no features selected").map_err(io)?;
        return Ok(EXIT_OK);
    }
    let opt = |v: &Option<F17>| v.map_or_else(|| "-".to_string(), |x| format!("{:.6}", x.0));
    writeln!(
        stdout,
        "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "feature", "statistic", "p_selective", "p_naive", "p_bonf", "p_oc", "p_ds"
    )
    .map_err(io)?;
    for f in &doc.features {
        writeln!(
            stdout,
            "{:>8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12} {:>12}",
            f.feature_index,
            f.statistic.0,
            f.p_selective.0,
            f.p_naive.0,
            f.p_bonferroni.0,
            opt(&f.p_oc),
            opt(&f.p_ds)
        )
        .map_err(io)?;
    }
    Ok(EXIT_OK)
}

fn cmd_experiment(args: &ExperimentArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mode: ExperimentMode = args.mode.parse()?;
    let mut config = ExperimentConfig::standard(mode, args.ns.clone(), penalty(args.lambda, args.gamma)?, args.seed);
    config.n_t = args.nt;
    config.p = args.p;
    config.alpha = args.alpha;
    config.replications = args.reps;
    config.beta_source_value = args.beta_source;
    if let Some(b) = args.beta_target {
        config.beta_target_value = b;
    }
    config.methods = parse_methods(&args.methods)?;
    if args.all_features {
        config.protocol = FeatureProtocol::AllSelected;
    }
    let result = run_experiment(&config)?;
    write_experiment(&args.out, &result, !args.no_timing)?;
    let io = |e: std::io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    write!(stdout, "{:>6} {:>7}", "n_s", "trials").map_err(io)?;
    for m in &config.methods {
        write!(stdout, " {:>13}", m.name()).map_err(io)?;
    }
    writeln!(stdout).map_err(io)?;
    for pt in &result.points {
        write!(stdout, "{:>6} {:>7}", pt.n_s, pt.trials_used).map_err(io)?;
        for m in &config.methods {
            write!(stdout, " {:>13.4}", pt.rates[m]).map_err(io)?;
        }
        writeln!(stdout).map_err(io)?;
    }
    Ok(EXIT_OK)
}

fn format_region(intervals: &[(f64, f64)]) -> String {
    if intervals.is_empty() {
        return "(empty)".into();
    }
    intervals
        .iter()
        .map(|(lo, hi)| format!("[{}, {}]", fmt17(*lo), fmt17(*hi)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_oracle(args: &OracleArgs, stdout: &mut dyn Write) -> Result<i32> {
    if args.grid < 2 {
        return Err(Error::InvalidInput("--grid must be at least 2".into()));
    }
    if !(args.tolerance >= 0.0) {
        return Err(Error::InvalidInput("--tolerance must be non-negative".into()));
    }
    let penalty = penalty(args.lambda, args.gamma)?;
    let dataset = generate_synthetic(&SyntheticConfig::constant(
        args.ns,
        args.nt,
        args.p,
        args.beta_source,
        args.beta_target,
        args.seed,
    ))?;
    let comparisons = compare_with_oracle(&dataset, &penalty, args.grid)?;
    let io = |e: std::io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    if comparisons.is_empty() {
        writeln!(stdout, "no features selected").map_err(io)?;
        return Ok(EXIT_OK);
    }
    let mut within = true;
    for c in &comparisons {
        let allowed = args.tolerance * c.grid_spacing;
        let ok = c.symmetric_difference <= allowed;
        within &= ok;
        writeln!(stdout, "feature {}", c.feature).map_err(io)?;
        writeln!(stdout, "  analytic: {}", format_region(c.analytic.intervals())).map_err(io)?;
        writeln!(stdout, "  oracle:   {}", format_region(c.oracle.intervals())).map_err(io)?;
        writeln!(
            stdout,
            "  symmetric difference: {} (allowed {}, {})",
            fmt17(c.symmetric_difference),
            fmt17(allowed),
            if ok { "ok" } else { "exceeded" }
        )
        .map_err(io)?;
    }
    Ok(if within { EXIT_OK } else { EXIT_TOLERANCE })
}

fn one_line(message: &str) -> String {
    let trimmed = message.trim().trim_start_matches("error:").trim();
    trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (program name first), runs the command, and returns the exit code.
/// Diagnostics go to `stderr` as a single line prefixed `error:`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let rendered = e.to_string();
                    let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid usage");
                    let _ = writeln!(stderr, "error: {}", one_line(first));
                    EXIT_INPUT
                }
            };
        }
    };
    let outcome = match &cli.command {
        Command::Infer(a) => cmd_infer(a, stdout),
        Command::Experiment(a) => cmd_experiment(a, stdout),
        Command::Oracle(a) => cmd_oracle(a, stdout),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", one_line(&e.to_string()));
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            }
        }
    }
}
