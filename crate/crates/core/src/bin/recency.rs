//! Command-line surface: estimate incidence from record files, emit
//! simulated datasets, run replication experiments, and inspect enrollment
//! probabilities and assay calibration quantities.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use recency::assay::{estimate_frr, estimate_mdri, CalibrationPanel, DAYS_PER_YEAR};
use recency::bootstrap::{self, BootstrapCi, BootstrapInputs, BootstrapPlan, BootstrapScheme, RoundData};
use recency::config::{
    encoding_from_name, interval_from_name, scheme_from_name, scheme_name, EstimatorId,
    ExperimentConfig,
};
use recency::estimators::CalibrationSet;
use recency::experiment::{self, evaluate_estimator, generate_dataset};
use recency::io;
use recency::records::SubtypeId;
use recency::rng::RngStream;
use recency::simulate::{enrollment_probabilities, truncate_enrollment};
use recency::{Error, Result};

#[derive(Parser)]
#[command(
    name = "recency",
    version,
    about = "Cross-sectional HIV incidence estimation from recency assays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate incidence from subject-record files.
    Estimate(EstimateArgs),
    /// Write one replication's simulated dataset files.
    Simulate(SimulateArgs),
    /// Run a replication experiment and summarize each estimator.
    Experiment(ExperimentArgs),
    /// Report raw and truncated enrollment probabilities per table cell.
    Enrollment(EnrollmentArgs),
    /// Report assay MDRI and FRR, exact from a spec or estimated from a panel.
    Assay(AssayArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Enrollment(args) => cmd_enrollment(args),
        Command::Assay(args) => cmd_assay(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Cross-sectional survey records CSV.
    #[arg(long)]
    cross: PathBuf,
    /// External target-population records CSV.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Assay spec CSV; calibration uses its exact MDRI/FRR.
    #[arg(long, conflicts_with = "panel")]
    assays: Option<PathBuf>,
    /// Calibration panel CSV; MDRI/FRR are estimated from it.
    #[arg(long, requires = "t_star")]
    panel: Option<PathBuf>,
    /// Recency cutoff T* in years (panel calibration only).
    #[arg(long)]
    t_star: Option<f64>,
    /// One of: standard, extended-external, extended-internal,
    /// subtype-pooled, subtype-stratified, subtype-external,
    /// subtype-internal, modified-standard, modified-internal.
    #[arg(long, default_value = "standard")]
    estimator: String,
    /// Weight model: main_effects or saturated.
    #[arg(long, default_value = "main_effects")]
    encoding: String,
    /// Interval scheme: nonparametric, parametric, or both.
    #[arg(long, default_value = "nonparametric", conflicts_with = "no_ci")]
    ci: String,
    /// Point estimate only, no bootstrap.
    #[arg(long)]
    no_ci: bool,
    /// Bootstrap rounds.
    #[arg(long = "B", default_value_t = 500)]
    rounds: usize,
    /// Interval method: lognormal_normal_approx or log_percentile.
    #[arg(long, default_value = "lognormal_normal_approx")]
    interval: String,
    /// Seed for the calibration and bootstrap streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the JSON result row here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SchemeInterval {
    scheme: &'static str,
    lo: f64,
    hi: f64,
    se: f64,
    rounds: usize,
    failures: usize,
    nonpositive: usize,
    unreliable: bool,
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    estimator: &'static str,
    estimate: f64,
    seed: u64,
    intervals: Vec<SchemeInterval>,
    diagnostics: &'a BTreeMap<String, f64>,
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let estimator = EstimatorId::from_name(&args.estimator)?;
    let encoding = encoding_from_name(&args.encoding)?;
    let interval = interval_from_name(&args.interval)?;
    let schemes: Vec<BootstrapScheme> = if args.no_ci {
        Vec::new()
    } else {
        match args.ci.as_str() {
            "both" => vec![BootstrapScheme::Nonparametric, BootstrapScheme::Parametric],
            name => vec![scheme_from_name(name)?],
        }
    };

    let mut registry = io::SubtypeRegistry::default();
    let cross = io::read_subject_records(&args.cross, &mut registry)?;
    let target = match &args.target {
        Some(path) => Some(io::read_subject_records(path, &mut registry)?),
        None => None,
    };
    if estimator.needs_external_target() && target.is_none() {
        return Err(Error::Config(format!(
            "estimator {} needs --target records",
            estimator.name()
        )));
    }

    let root = RngStream::new(args.seed, 0);
    let mut panels: Vec<(Option<SubtypeId>, CalibrationPanel)> = Vec::new();
    let calibration: CalibrationSet = match (&args.assays, &args.panel) {
        (Some(path), None) => io::read_assays(path, &mut registry)?.calibration_true()?,
        (None, Some(path)) => {
            let t_star = args.t_star.expect("--panel requires --t-star");
            let panel = io::read_calibration_panel(path)?;
            let mut rng = root.child(0);
            let mdri = estimate_mdri(&panel, t_star, &mut rng)?;
            let frr = estimate_frr(&panel)?;
            let set = CalibrationSet::single(mdri, frr, t_star);
            panels.push((None, panel));
            set
        }
        _ => {
            return Err(Error::Config(
                "calibration needs exactly one of --assays or --panel".into(),
            ))
        }
    };

    let result = evaluate_estimator(estimator, &cross, target.as_deref(), &calibration, encoding)?;

    let mut intervals = Vec::new();
    for (s, scheme) in schemes.iter().enumerate() {
        let plan = BootstrapPlan {
            scheme: *scheme,
            rounds: args.rounds,
            resample_panels: !panels.is_empty(),
            interval,
            ..BootstrapPlan::default()
        };
        let inputs = BootstrapInputs {
            cross: &cross,
            target: target.as_deref(),
            panels: &panels,
            calibration: &calibration,
            trial: None,
        };
        let eval = |round: &RoundData| -> Vec<Result<f64>> {
            vec![evaluate_estimator(
                estimator,
                &round.cross,
                round.target.as_deref(),
                &round.calibration,
                encoding,
            )
            .map(|r| r.estimate)]
        };
        let rng = root.child(1_000_000 + s as u64);
        let ci: BootstrapCi = bootstrap::run(&plan, &inputs, 1, eval, &rng)?[0];
        intervals.push(SchemeInterval {
            scheme: scheme_name(*scheme),
            lo: ci.lo,
            hi: ci.hi,
            se: ci.se,
            rounds: ci.rounds,
            failures: ci.failures,
            nonpositive: ci.nonpositive,
            unreliable: ci.unreliable,
        });
    }

    println!("estimator  {}", estimator.name());
    println!("estimate   {:.6} per person-year", result.estimate);
    for i in &intervals {
        println!(
            "ci         {}  [{:.6}, {:.6}]  se {:.6}  B {}  failures {}",
            i.scheme, i.lo, i.hi, i.se, i.rounds, i.failures
        );
    }
    for (key, value) in &result.diagnostics {
        println!("diag       {key} = {value}");
    }

    let row = EstimateRow {
        estimator: estimator.name(),
        estimate: result.estimate,
        seed: args.seed,
        intervals,
        diagnostics: &result.diagnostics,
    };
    match &args.out {
        Some(path) => io::write_jsonl(path, std::slice::from_ref(&row))?,
        None => println!(
            "{}",
            serde_json::to_string(&row)
                .map_err(|e| Error::Precondition(format!("cannot serialize the result row: {e}")))?
        ),
    }
    Ok(())
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory, created if needed.
    #[arg(long)]
    out: PathBuf,
    /// 1-based sample-size setting to draw.
    #[arg(long, default_value_t = 1)]
    setting: usize,
    /// Replication index to draw.
    #[arg(long, default_value_t = 0)]
    replication: u32,
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let data = experiment::load(config)?;
    let config = &data.config;
    std::fs::create_dir_all(&args.out)?;

    let mut manifest: Vec<(String, String)> = vec![
        ("experiment".into(), config.name.clone()),
        ("config_sha256".into(), config.source_sha256.clone().unwrap_or_default()),
        ("seed".into(), config.seed.to_string()),
        ("mode".into(), config.mode.name().into()),
        ("replications".into(), config.replications.to_string()),
    ];
    if config.replications == 0 {
        write_manifest(&args.out.join("manifest.txt"), &manifest)?;
        println!("wrote manifest only: the config asks for 0 replications");
        return Ok(());
    }
    if args.setting < 1 || args.setting > config.settings.len() {
        return Err(Error::Config(format!(
            "setting {} is out of range; the config defines {} setting(s)",
            args.setting,
            config.settings.len()
        )));
    }
    if args.replication >= config.replications {
        return Err(Error::Config(format!(
            "replication {} is out of range; the config runs {} replication(s)",
            args.replication, config.replications
        )));
    }
    let sizes = config.settings[args.setting - 1];
    let dataset = generate_dataset(&data, args.setting, sizes, args.replication)?;

    manifest.push(("setting".into(), args.setting.to_string()));
    manifest.push(("replication".into(), args.replication.to_string()));
    manifest.push(("cross_size".into(), sizes.cross.to_string()));
    manifest.push(("target_size".into(), sizes.target.to_string()));

    let mut written: Vec<String> = Vec::new();
    let cross_name = "cross_sectional.csv";
    io::write_subject_records(&args.out.join(cross_name), &dataset.cross, &data.registry)?;
    written.push(cross_name.into());
    if let Some(target) = &dataset.target {
        let name = "external_target.csv";
        io::write_subject_records(&args.out.join(name), target, &data.registry)?;
        written.push(name.into());
    }
    for (subtype, panel) in &dataset.panels {
        let name = match subtype {
            None => "panel.csv".to_string(),
            Some(id) => format!("panel_{}.csv", data.registry.label(*id).unwrap_or("unknown")),
        };
        io::write_calibration_panel(&args.out.join(&name), panel)?;
        written.push(name);
    }
    if let Some(trial) = &dataset.trial {
        let name = "trial.csv";
        let mut text = String::from("infected,person_years\n");
        for s in &trial.subjects {
            text.push_str(&format!("{},{:.6}\n", u8::from(s.infected), s.person_years));
        }
        std::fs::write(args.out.join(name), text)?;
        written.push(name.into());
        manifest.push(("trial_infections".into(), trial.infections.to_string()));
        manifest.push(("trial_person_years".into(), format!("{:.6}", trial.person_years)));
    }
    for name in &written {
        let bytes = std::fs::read(args.out.join(name))?;
        manifest.push((format!("sha256({name})"), io::sha256_hex(&bytes)));
    }
    write_manifest(&args.out.join("manifest.txt"), &manifest)?;
    println!(
        "wrote {} and manifest.txt to {}",
        written.join(", "),
        args.out.display()
    );
    Ok(())
}

fn write_manifest(path: &std::path::Path, entries: &[(String, String)]) -> Result<()> {
    let borrowed: Vec<(&str, String)> =
        entries.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
    io::write_manifest(path, &borrowed)
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory, created if needed.
    #[arg(long)]
    out: PathBuf,
    /// Run just this 1-based setting.
    #[arg(long)]
    setting: Option<usize>,
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let data = experiment::load(config)?;
    std::fs::create_dir_all(&args.out)?;
    let outcome = experiment::run(&data, args.setting)?;
    io::write_jsonl(&args.out.join("results.jsonl"), &outcome.rows)?;
    io::write_jsonl(&args.out.join("summary.jsonl"), &outcome.summary)?;
    std::fs::write(args.out.join("table.txt"), &outcome.table_text)?;

    let config = &data.config;
    let mut manifest: Vec<(String, String)> = vec![
        ("experiment".into(), config.name.clone()),
        ("config_sha256".into(), config.source_sha256.clone().unwrap_or_default()),
        ("seed".into(), config.seed.to_string()),
        ("mode".into(), config.mode.name().into()),
        ("replications".into(), config.replications.to_string()),
        (
            "estimators".into(),
            config.estimators.iter().map(|e| e.name()).collect::<Vec<_>>().join(", "),
        ),
        (
            "settings".into(),
            config
                .settings
                .iter()
                .map(|s| format!("{}:{}", s.cross, s.target))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        (
            "schemes".into(),
            config.schemes.iter().map(|s| scheme_name(*s)).collect::<Vec<_>>().join(", "),
        ),
        ("bootstrap_rounds".into(), config.bootstrap_rounds.to_string()),
    ];
    if let Some(s) = args.setting {
        manifest.push(("only_setting".into(), s.to_string()));
    }
    for name in ["results.jsonl", "summary.jsonl", "table.txt"] {
        let bytes = std::fs::read(args.out.join(name))?;
        manifest.push((format!("sha256({name})"), io::sha256_hex(&bytes)));
    }
    write_manifest(&args.out.join("manifest.txt"), &manifest)?;
    print!("{}", outcome.table_text);
    Ok(())
}

#[derive(Args)]
struct EnrollmentArgs {
    /// Population parameter table CSV.
    #[arg(long)]
    table: PathBuf,
    /// Cross-sectional survey size N.
    #[arg(long)]
    cross: usize,
    /// Trial enrollment size M.
    #[arg(long)]
    target: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_enrollment(args: EnrollmentArgs) -> Result<()> {
    let mut registry = io::SubtypeRegistry::default();
    let (table, names) = io::read_population_table(&args.table, &mut registry)?;
    let raw = enrollment_probabilities(&table, args.cross, args.target)?;
    let truncated = truncate_enrollment(&raw);
    io::write_enrollment(&args.out, &table, &names, &registry, &raw, &truncated)?;
    println!("wrote {} ({} cells)", args.out.display(), raw.len());
    Ok(())
}

#[derive(Args)]
struct AssayArgs {
    /// Assay spec CSV; exact MDRI/FRR per subtype.
    #[arg(long, conflicts_with = "panel")]
    assays: Option<PathBuf>,
    /// Calibration panel CSV; MDRI/FRR estimated from it.
    #[arg(long, requires = "t_star")]
    panel: Option<PathBuf>,
    /// Recency cutoff T* in years (panel estimation only).
    #[arg(long)]
    t_star: Option<f64>,
    /// Seed for the MDRI bootstrap.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn cmd_assay(args: AssayArgs) -> Result<()> {
    match (&args.assays, &args.panel) {
        (Some(path), None) => {
            let mut registry = io::SubtypeRegistry::default();
            let assays = io::read_assays(path, &mut registry)?;
            println!("{:<12} {:>12} {:>10} {:>10}", "subtype", "mdri_years", "mdri_days", "frr");
            for (_, assay) in assays.entries() {
                let mdri = assay.mdri()?;
                println!(
                    "{:<12} {:>12.6} {:>10.2} {:>10.6}",
                    assay.subtype_label,
                    mdri,
                    mdri * DAYS_PER_YEAR,
                    assay.frr()?
                );
            }
            Ok(())
        }
        (None, Some(path)) => {
            let t_star = args.t_star.expect("--panel requires --t-star");
            let panel = io::read_calibration_panel(path)?;
            let mut rng = RngStream::new(args.seed, 0).child(0);
            let mdri = estimate_mdri(&panel, t_star, &mut rng)?;
            let frr = estimate_frr(&panel)?;
            println!(
                "mdri  {:.6} years ({:.2} days)  se {:.6}  ci [{:.6}, {:.6}]",
                mdri.point,
                mdri.point * DAYS_PER_YEAR,
                mdri.se,
                mdri.ci_lo,
                mdri.ci_hi
            );
            println!(
                "frr   {:.6}  se {:.6}  ci [{:.6}, {:.6}]",
                frr.point, frr.se, frr.ci_lo, frr.ci_hi
            );
            Ok(())
        }
        _ => Err(Error::Config("provide exactly one of --assays or --panel".into())),
    }
}
