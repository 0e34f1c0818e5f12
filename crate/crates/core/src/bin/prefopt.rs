//! Command-line entry point: experiment runners, the identity-verification
//! suite, and ad-hoc loss evaluation.
//!
//! Exit codes: 0 success, 1 failed verification check, 2 config error,
//! 3 runtime abort. Diagnostics go to stderr; data goes to files or stdout.

use clap::{Args, Parser, Subcommand};
use prefopt_core::config::{self, ExperimentConfig};
use prefopt_core::error::Error;
use prefopt_core::experiments::{run_experiment, ExperimentKind, RunOptions};
use prefopt_core::losses::{eval_loss, gradient_norm, loss_gradient};
use prefopt_core::report::{svg_line_chart, write_atomic, ExperimentReport, Series};
use prefopt_core::verify::{self, IdentityReport};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "prefopt",
    version,
    about = "Exact desk-scale preference-optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trade-off sweep on the single-prompt world (convergence endpoints)
    Interpolate(ExpArgs),
    /// Two-prompt study of selective preservation of the reference optimum
    Preserve(ExpArgs),
    /// DPO-versus-RLHF divergence under a shared weight-decay penalty
    Constrain(ExpArgs),
    /// Fixed-winner data trained under two different reference policies
    Degenerate(ExpArgs),
    /// Machine-precision identity checks; nonzero exit if any fails
    Verify(VerifyArgs),
    /// Evaluate one loss at a policy snapshot and print a JSON summary
    EvalLoss(EvalArgs),
}

#[derive(Args)]
struct ExpArgs {
    /// Experiment config file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $PREFOPT_OUT, then the config's output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override; the effective seed is echoed into every report row
    #[arg(long)]
    seed: Option<u64>,
    /// Report format for the per-experiment data file
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// Also emit standalone SVG line charts
    #[arg(long)]
    svg: bool,
    /// Use the sampled batch-size-20 training protocol
    #[arg(long)]
    paper_batches: bool,
    /// Worker threads for grid cells; output is identical for any value
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Probes per identity check
    #[arg(long, default_value_t = 200)]
    probes: usize,
    /// Seed for the probe streams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output format on stdout
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// Optional directory to also write verify.csv into
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Loss evaluation config (world + loss + data mode)
    #[arg(long)]
    config: PathBuf,
    /// Policy snapshot file (map of prompt id to logit vector)
    #[arg(long)]
    policy: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> prefopt_core::Result<u8> {
    match cli.command {
        Command::Interpolate(args) => run_study(ExperimentKind::Interpolation, args),
        Command::Preserve(args) => run_study(ExperimentKind::Preservation, args),
        Command::Constrain(args) => run_study(ExperimentKind::Constraint, args),
        Command::Degenerate(args) => run_study(ExperimentKind::Degenerate, args),
        Command::Verify(args) => run_verify(args),
        Command::EvalLoss(args) => run_eval_loss(args),
    }
}

fn output_dir(args_out: &Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = args_out {
        return dir.clone();
    }
    if let Ok(env_dir) = std::env::var("PREFOPT_OUT") {
        if !env_dir.is_empty() {
            return PathBuf::from(env_dir);
        }
    }
    config.output_dir.clone()
}

fn run_study(kind: ExperimentKind, args: ExpArgs) -> prefopt_core::Result<u8> {
    let mut config = config::load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out_dir = output_dir(&args.out, &config);
    let options = RunOptions { jobs: args.jobs, paper_batches: args.paper_batches };
    let report = run_experiment(kind, &config, &options)?;

    let csv_path = out_dir.join(format!("{}.csv", kind.name()));
    write_atomic(&csv_path, report.to_csv().as_bytes())?;
    if args.format == "json" {
        let json_path = out_dir.join(format!("{}.json", kind.name()));
        write_atomic(&json_path, report.to_json()?.as_bytes())?;
    }
    merge_combined_report(&out_dir)?;
    if args.svg {
        write_charts(kind, &report, &out_dir)?;
    }
    eprintln!(
        "{}: {} rows -> {}",
        kind.name(),
        report.rows.len(),
        csv_path.display()
    );
    Ok(0)
}

/// Rebuilds report.csv from every per-experiment CSV present in the
/// output directory; a deterministic merge sorted by row key.
fn merge_combined_report(out_dir: &Path) -> prefopt_core::Result<()> {
    let mut combined = ExperimentReport::default();
    for name in ["interpolation", "preservation", "constraint", "degenerate"] {
        let path = out_dir.join(format!("{name}.csv"));
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            combined.extend(ExperimentReport::parse_csv(&text)?);
        }
    }
    write_atomic(&out_dir.join("report.csv"), combined.to_csv().as_bytes())
}

/// Final-value series over the sweep axis, one series per loss.
fn sweep_series(
    report: &ExperimentReport,
    metric: &str,
    partition: &str,
    x_of: impl Fn(f64, f64) -> f64,
) -> Vec<Series> {
    let mut losses: Vec<String> = report
        .rows
        .iter()
        .map(|r| r.loss.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    losses.retain(|l| l != "reference");
    let mut out = Vec::new();
    for loss in losses {
        let mut points: Vec<(f64, f64)> = Vec::new();
        let mut cells: Vec<(f64, f64)> = report
            .rows
            .iter()
            .filter(|r| r.loss == loss && r.partition == partition && r.metric == metric)
            .map(|r| (r.lambda, r.alpha))
            .collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        cells.dedup_by(|a, b| a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits());
        for (lambda, alpha) in cells {
            if let Some(v) = report.final_value(&loss, lambda, alpha, partition, metric) {
                points.push((x_of(lambda, alpha), v));
            }
        }
        if !points.is_empty() {
            out.push(Series { name: loss, points });
        }
    }
    out
}

fn write_charts(
    kind: ExperimentKind,
    report: &ExperimentReport,
    out_dir: &Path,
) -> prefopt_core::Result<()> {
    let log_lambda = |lambda: f64, _alpha: f64| lambda.log10();
    let charts: Vec<(String, String, &str, Vec<Series>)> = match kind {
        ExperimentKind::Interpolation => vec![
            (
                "interpolation_tv_to_star".into(),
                "final TV to the ground-truth policy".into(),
                "log10(lambda)",
                sweep_series(report, "tv_to_star", "all", log_lambda),
            ),
            (
                "interpolation_tv_to_ref".into(),
                "final TV to the reference policy".into(),
                "log10(lambda)",
                sweep_series(report, "tv_to_ref", "all", log_lambda),
            ),
        ],
        ExperimentKind::Preservation => vec![
            (
                "preservation_good_tv".into(),
                "final TV to ground truth on preserved prompts".into(),
                "log10(lambda)",
                sweep_series(report, "tv_to_star", "good", log_lambda),
            ),
            (
                "preservation_bad_tv".into(),
                "final TV to ground truth on improvable prompts".into(),
                "log10(lambda)",
                sweep_series(report, "tv_to_star", "bad", log_lambda),
            ),
        ],
        ExperimentKind::Constraint => vec![(
            "constraint_policy_distance".into(),
            "TV between trained DPO and RLHF policies".into(),
            "alpha",
            sweep_series(report, "tv", "all", |_l, a| a),
        )],
        ExperimentKind::Degenerate => vec![(
            "degenerate_reference_gap".into(),
            "TV between policies trained under the two references".into(),
            "log10(lambda)",
            sweep_series(report, "tv_between_refs", "all", log_lambda),
        )],
    };
    for (stem, title, x_label, series) in charts {
        let svg = svg_line_chart(&title, x_label, "value", &series);
        write_atomic(&out_dir.join(format!("{stem}.svg")), svg.as_bytes())?;
    }
    Ok(())
}

fn identity_reports_csv(reports: &[IdentityReport]) -> String {
    let mut out = String::from("check,probes,max_abs_error,threshold,pass\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.name, r.probes, r.max_abs_error, r.threshold, r.pass
        ));
    }
    out
}

fn run_verify(args: VerifyArgs) -> prefopt_core::Result<u8> {
    if args.probes == 0 {
        return Err(Error::Config("probes: positive count required".into()));
    }
    let reports = verify::run_all(args.probes, args.seed)?;
    match args.format.as_str() {
        "json" => println!("{}", serde_json::to_string_pretty(&reports)?),
        _ => print!("{}", identity_reports_csv(&reports)),
    }
    if let Some(dir) = &args.out {
        write_atomic(&dir.join("verify.csv"), identity_reports_csv(&reports).as_bytes())?;
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        eprintln!("{failed} identity check(s) failed");
        return Ok(1);
    }
    Ok(0)
}

fn run_eval_loss(args: EvalArgs) -> prefopt_core::Result<u8> {
    let eval = config::load_eval_config(&args.config)?;
    let snapshot = std::fs::read_to_string(&args.policy).map_err(|e| {
        Error::Config(format!("policy snapshot {}: {e}", args.policy.display()))
    })?;
    let policy = config::policy_from_json(&snapshot, &eval.world)?;
    let data = eval.world.build_preference_data(eval.data)?;
    let value = eval_loss(&eval.loss, &policy, &eval.world, &data)?;
    let grad = loss_gradient(&eval.loss, &policy, &eval.world, &data)?;
    let probs: std::collections::BTreeMap<String, Vec<f64>> = (0..eval.world.n_prompts())
        .map(|x| (x.to_string(), policy.probs(x)))
        .collect();
    let out = serde_json::json!({
        "loss": value,
        "gradient_norm": gradient_norm(&grad),
        "probs": probs,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}
