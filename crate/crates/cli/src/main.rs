//! `ldisc`: data-driven controller design from frequency-response samples.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldisc::cases::{self, DesignCase};
use ldisc::closed_loop::{closed_loop_samples, reference_samples};
use ldisc::controller::{controller_from_toml, controller_to_toml};
use ldisc::freq_data::{load_dataset_any, save_dataset};
use ldisc::linsys::hinf_norm_in_band;
use ldisc::loewner::interpolation_residual;
use ldisc::{
    initialize_controller, realize, run_ldisc, spectral_abscissa, ControllerStructure,
    DescriptorRealization, DesignConfig, DesignReport, Error, FrequencyDataset,
    RationalTransferMatrix, StopReason,
};
use log::info;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

const EXIT_MAX_ITER: u8 = 2;
const EXIT_PARSE: u8 = 10;
const EXIT_DIMENSION: u8 = 11;
const EXIT_INIT: u8 = 12;
const EXIT_GAMMA: u8 = 13;
const EXIT_DEGENERATE: u8 = 14;
const EXIT_PRECONDITION: u8 = 15;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "ldisc",
    version,
    about = "Data-driven structured controller design (L-DISC)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tune a controller against a reference model from frequency data.
    Design(DesignArgs),
    /// Write a built-in case's input files and run the design on them.
    Demo(DemoArgs),
    /// Fit a descriptor model to a dataset with the Loewner framework.
    Identify(IdentifyArgs),
    /// H-infinity norm of a realization file.
    HinfNorm(RealizationArgs),
    /// Spectral abscissa of a realization file.
    Abscissa(RealizationArgs),
    /// Closed-loop frequency response of a controller on a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Clone)]
struct Tuning {
    /// Configuration file; the flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Safety factor on the small-gain radius, in (0, 1].
    #[arg(long)]
    eps: Option<f64>,
    /// Stop when an iteration improves the objective by at most this much.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative singular value cut-off of the Loewner order selection.
    #[arg(long)]
    svd_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "ldisc-out")]
    out: PathBuf,
}

#[derive(Args)]
struct DesignArgs {
    /// Run a built-in case instead of reading input files.
    #[arg(long, value_parser = ["dc-motor", "mismatch"], conflicts_with_all = ["data", "reference", "structure", "init"])]
    demo: Option<String>,
    #[arg(long, required_unless_present = "demo")]
    data: Option<PathBuf>,
    /// Reference model file.
    #[arg(long = "ref", required_unless_present = "demo")]
    reference: Option<PathBuf>,
    #[arg(long, required_unless_present_any = ["demo", "init"])]
    structure: Option<PathBuf>,
    /// Initial controller file.
    #[arg(long, conflicts_with = "auto_init", required_unless_present_any = ["demo", "auto_init"])]
    init: Option<PathBuf>,
    /// Search for a stabilizing initial controller.
    #[arg(long)]
    auto_init: bool,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(value_parser = ["dc-motor", "mismatch"])]
    case: String,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    svd_tol: f64,
    /// Realization file to write.
    #[arg(long, default_value = "realization.toml")]
    out: PathBuf,
}

#[derive(Args)]
struct RealizationArgs {
    realization: PathBuf,
    /// Relative accuracy of the norm.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    controller: PathBuf,
    /// Reference model to tabulate next to the closed loop.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// CSV file to write; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. } | Error::Io(_) => EXIT_PARSE,
            Error::DimensionMismatch(_) => EXIT_DIMENSION,
            Error::InitializationFailed { .. } => EXIT_INIT,
            Error::GammaEstimation(_) => EXIT_GAMMA,
            Error::DegenerateData(_) => EXIT_DEGENERATE,
            Error::Precondition(_) | Error::IllPosed { .. } => EXIT_PRECONDITION,
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LDISC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Demo(a) => cmd_demo(a),
        Command::Identify(a) => cmd_identify(a),
        Command::HinfNorm(a) => cmd_hinf(a),
        Command::Abscissa(a) => cmd_abscissa(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

// ------------------------------------------------------------------ io

fn read_text(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_PARSE,
        message: format!("cannot read {}: {e}", path.display()),
    })
}

fn write_text(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure {
        code: 1,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn hex_sha256(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Comment header carried by every output file.
fn provenance(settings: &str, seed: Option<u64>) -> Vec<String> {
    vec![
        format!("ldisc {}", env!("CARGO_PKG_VERSION")),
        format!("config_sha256 {}", hex_sha256(settings)),
        format!(
            "seed {}",
            seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into())
        ),
    ]
}

fn with_header(header: &[String], body: &str) -> String {
    let mut out: String = header.iter().map(|l| format!("# {l}\n")).collect();
    out.push_str(body);
    out
}

// ------------------------------------------------------------------ design

fn build_config(t: &Tuning) -> std::result::Result<DesignConfig, Failure> {
    let mut config = match &t.config {
        Some(p) => toml::from_str::<DesignConfig>(&read_text(p)?).map_err(|e| Failure {
            code: EXIT_PARSE,
            message: format!("{}: {e}", p.display()),
        })?,
        None => DesignConfig::default(),
    };
    if let Some(v) = t.eps {
        config.epsilon = v;
    }
    if let Some(v) = t.eta {
        config.eta = v;
    }
    if let Some(v) = t.max_iter {
        config.max_iter = v;
    }
    if let Some(v) = t.svd_tol {
        config.svd_rel_tol = v;
    }
    if let Some(v) = t.seed {
        config.seed = v;
    }
    config.validate()?;
    Ok(config)
}

enum Start {
    Given(Vec<f64>),
    Auto,
}

fn cmd_design(a: DesignArgs) -> CmdResult {
    let config = build_config(&a.tuning)?;
    if let Some(name) = &a.demo {
        let case = cases::case_by_name(name).expect("value parser admits known cases only");
        return run_design(
            &case.data,
            &case.reference,
            &case.structure,
            Start::Auto,
            &config,
            &a.tuning.out,
        );
    }
    let data = load_dataset_any(a.data.as_deref().expect("required by clap"))?;
    let reference = RationalTransferMatrix::from_toml(&read_text(
        a.reference.as_deref().expect("required by clap"),
    )?)?;
    let (structure, start) = match &a.init {
        Some(p) => {
            let (s, theta) = controller_from_toml(&read_text(p)?)?;
            if let Some(sp) = &a.structure {
                let declared = ControllerStructure::from_toml(&read_text(sp)?)?;
                if declared != s {
                    return Err(Error::DimensionMismatch(format!(
                        "initial controller in {} does not have the structure of {}",
                        p.display(),
                        sp.display()
                    ))
                    .into());
                }
            }
            (s, Start::Given(theta))
        }
        None => {
            let sp = a.structure.as_deref().expect("required by clap");
            (
                ControllerStructure::from_toml(&read_text(sp)?)?,
                Start::Auto,
            )
        }
    };
    run_design(&data, &reference, &structure, start, &config, &a.tuning.out)
}

fn cmd_demo(a: DemoArgs) -> CmdResult {
    let config = build_config(&a.tuning)?;
    let case: DesignCase =
        cases::case_by_name(&a.case).expect("value parser admits known cases only");
    let out = &a.tuning.out;
    fs::create_dir_all(out).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", out.display()),
    })?;
    let config_text = toml::to_string(&config).map_err(Error::from)?;
    let header = provenance(&config_text, Some(config.seed));
    save_dataset(&out.join("data.csv"), &case.data, &header)?;
    write_text(
        &out.join("reference.toml"),
        &with_header(&header, &case.reference.to_toml()?),
    )?;
    write_text(
        &out.join("structure.toml"),
        &with_header(&header, &case.structure.to_toml()?),
    )?;
    write_text(
        &out.join("config.toml"),
        &with_header(&header, &config_text),
    )?;
    println!("wrote case inputs for {} to {}", case.name, out.display());
    run_design(
        &case.data,
        &case.reference,
        &case.structure,
        Start::Auto,
        &config,
        out,
    )
}

fn run_design(
    data: &FrequencyDataset,
    reference: &RationalTransferMatrix,
    structure: &ControllerStructure,
    start: Start,
    config: &DesignConfig,
    out: &Path,
) -> CmdResult {
    if reference.n_outputs() != data.n_outputs() || reference.n_inputs() != data.n_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "reference model is {}x{} but the closed loop of a {}-output plant is {}x{}",
            reference.n_outputs(),
            reference.n_inputs(),
            data.n_outputs(),
            data.n_outputs(),
            data.n_outputs()
        ))
        .into());
    }
    if structure.n_i() != data.n_inputs() || structure.n_o() != data.n_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "controller is {}x{} but the plant data are {}x{}",
            structure.n_i(),
            structure.n_o(),
            data.n_outputs(),
            data.n_inputs()
        ))
        .into());
    }
    let theta_0 = match start {
        Start::Given(t) => t,
        Start::Auto => {
            let t = initialize_controller(data, structure, config)?;
            info!("initial controller {t:?}");
            t
        }
    };
    let report = run_ldisc(data, reference, structure, &theta_0, config)?;
    write_design_outputs(&report, data, reference, structure, config, out)?;

    let first = report
        .records
        .first()
        .map(|r| r.objective)
        .unwrap_or(f64::NAN);
    println!("initial objective = {first:.6e}");
    println!("final objective = {:.6e}", report.final_objective);
    println!("iterations = {}", report.records.len().saturating_sub(1));
    println!("outputs written to {}", out.display());
    Ok(match report.stop_reason {
        StopReason::Converged => {
            println!("stop: objective decrease at or below eta");
            0
        }
        StopReason::MaxIterations => {
            println!("stop: iteration limit reached");
            EXIT_MAX_ITER
        }
        StopReason::GammaEstimationFailed { message } => {
            eprintln!("error: stopped early: {message}");
            EXIT_GAMMA
        }
    })
}

fn write_design_outputs(
    report: &DesignReport,
    data: &FrequencyDataset,
    reference: &RationalTransferMatrix,
    structure: &ControllerStructure,
    config: &DesignConfig,
    out: &Path,
) -> std::result::Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", out.display()),
    })?;
    let config_text = toml::to_string(config).map_err(Error::from)?;
    let header = provenance(&config_text, Some(config.seed));

    let controller_text = controller_to_toml(structure, &report.final_theta)?;
    let mut doc = toml::Table::new();
    doc.insert(
        "report".into(),
        toml::Value::try_from(report).map_err(Error::from)?,
    );
    doc.insert(
        "controller".into(),
        toml::Value::Table(toml::from_str(&controller_text).map_err(Error::from)?),
    );
    write_text(
        &out.join("report.toml"),
        &with_header(&header, &toml::to_string(&doc).map_err(Error::from)?),
    )?;
    write_text(
        &out.join("controller.toml"),
        &with_header(&header, &controller_text),
    )?;
    write_text(
        &out.join("iterations.csv"),
        &with_header(&header, &report.iteration_log_csv()),
    )?;
    let table = evaluation_csv(data, structure, &report.final_theta, Some(reference))?;
    write_text(&out.join("evaluation.csv"), &with_header(&header, &table))?;
    Ok(())
}

// ------------------------------------------------------------------ evaluate

fn push_entries(row: &mut Vec<String>, m: &ndarray::Array2<Complex64>) {
    for z in m.iter() {
        row.push(format!("{:?}", z.re));
        row.push(format!("{:?}", z.im));
    }
}

/// `omega`, then `M(K)` entries, then `M_d` entries when a reference is given.
fn evaluation_csv(
    data: &FrequencyDataset,
    structure: &ControllerStructure,
    theta: &[f64],
    reference: Option<&RationalTransferMatrix>,
) -> ldisc::Result<String> {
    let m = closed_loop_samples(data, structure, theta)?;
    let md = reference.map(|r| reference_samples(data, r)).transpose()?;
    let n = data.n_outputs();
    let mut cols = vec!["omega".to_string()];
    let mut names = |prefix: &str| {
        for i in 1..=n {
            for j in 1..=n {
                cols.push(format!("re_{prefix}_{i}_{j}"));
                cols.push(format!("im_{prefix}_{i}_{j}"));
            }
        }
    };
    names("m");
    if md.is_some() {
        names("md");
    }
    let mut out = cols.join(",");
    out.push('\n');
    for (k, smp) in data.samples().iter().enumerate() {
        let mut row = vec![format!("{:?}", smp.omega)];
        push_entries(&mut row, &m[k]);
        if let Some(md) = &md {
            push_entries(&mut row, &md[k]);
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    let data = load_dataset_any(&a.data)?;
    let controller_text = read_text(&a.controller)?;
    let (structure, theta) = controller_from_toml(&controller_text)?;
    let reference = match &a.reference {
        Some(p) => Some(RationalTransferMatrix::from_toml(&read_text(p)?)?),
        None => None,
    };
    let table = evaluation_csv(&data, &structure, &theta, reference.as_ref())?;
    let settings = format!("controller_sha256 = \"{}\"\n", hex_sha256(&controller_text));
    let text = with_header(&provenance(&settings, None), &table);
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
    }
    Ok(0)
}

// ------------------------------------------------------------------ models

fn cmd_identify(a: IdentifyArgs) -> CmdResult {
    let data = load_dataset_any(&a.data)?;
    let model = realize(data.samples(), a.svd_tol)?;
    let residual = interpolation_residual(&model.realization, data.samples())?;
    let settings = format!("svd_rel_tol = {:?}\n", a.svd_tol);
    let header = provenance(&settings, None);
    write_text(&a.out, &with_header(&header, &model.realization.to_toml()?))?;
    println!("order = {}", model.order());
    println!("ranks = {} {}", model.ranks.0, model.ranks.1);
    println!("interpolation residual = {residual:.3e}");
    for w in &model.warnings {
        println!("warning: {w}");
    }
    println!("realization written to {}", a.out.display());
    Ok(0)
}

fn load_realization(path: &Path) -> std::result::Result<DescriptorRealization, Failure> {
    Ok(DescriptorRealization::from_toml(&read_text(path)?)?)
}

fn cmd_hinf(a: RealizationArgs) -> CmdResult {
    let real = load_realization(&a.realization)?;
    let norm = hinf_norm_in_band(&real, a.tol, None)?;
    println!("{:.6}", norm.value);
    println!(
        "upper bound {:.6} (relative tolerance {:e}), peak at omega = {:e}",
        norm.upper, a.tol, norm.peak_omega
    );
    if let Some(w) = norm.warning {
        println!("warning: {w}");
    }
    Ok(0)
}

fn cmd_abscissa(a: RealizationArgs) -> CmdResult {
    let real = load_realization(&a.realization)?;
    let alpha = spectral_abscissa(&real)?;
    println!("{alpha:e}");
    println!(
        "{}",
        if ldisc::is_stable(&real)? {
            "stable"
        } else {
            "not stable"
        }
    );
    Ok(0)
}
