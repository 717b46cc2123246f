//! Command implementations behind the `scm` binary.
//!
//! Each `cmd_*` function takes its parsed arguments and returns the text to
//! print on success, so the commands can be driven directly from tests.

pub mod text;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use scm_core::data::{self, Dataset, Db2Options};
use scm_core::encoding::{encode_matrix, EncodedInputs, EncodingSpec};
use scm_core::fpga::{memory_report_with, predict_fpga_batch, CycleModel};
use scm_core::mechanism::MechanismModel;
use scm_core::model_file;
use scm_core::numerics::{FixedQ7_25, Matrix};
use scm_core::scm::{predict_float, train, ActivationKind, LayerSpec, MechanismMode, TrainConfig};
use scm_core::{ScmError, ScmModel};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(ScmError),
    #[error(transparent)]
    Training(ScmError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl From<ScmError> for CliError {
    fn from(e: ScmError) -> Self {
        match e {
            ScmError::TrainingFailed(_) => CliError::Training(e),
            other => CliError::Data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "scm",
    version,
    about = "Train stochastic configuration machines and emulate their FPGA datapath"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark dataset as train/test CSV files plus a manifest.
    GenData(GenDataArgs),
    /// Train a model from a CSV file.
    Train(TrainArgs),
    /// Evaluate a model on a CSV file with the float and/or fixed-point path.
    Eval(EvalArgs),
    /// Print storage and latency estimates for a model.
    Report(ReportArgs),
    /// Convert a binary model file to text.
    Export(ExportArgs),
    /// Convert a text model back to a binary model file.
    Import(ImportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Db1,
    Db2,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(value_enum)]
    pub dataset: DatasetKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of the full 40000 training rows (db2 only).
    #[arg(long, default_value_t = 0.1)]
    pub scale: f64,
    /// Draw db2 test points at random instead of on a 67×67 grid.
    #[arg(long)]
    pub random_test: bool,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column names.
    #[arg(long, value_delimiter = ',', default_value = "y")]
    pub target: Vec<String>,
    /// `density:N`, `s1:U`, `s2v1` or `s2v2`.
    #[arg(long, default_value = "s2v2")]
    pub encoding: EncodingSpec,
    /// Node budget of a single hidden layer.
    #[arg(long, conflicts_with = "layers")]
    pub nodes: Option<usize>,
    /// Node budget per hidden layer, e.g. `40,40,40`.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<usize>,
    /// Activation per layer (`sign` or `step`); a single value applies to all.
    #[arg(long, value_delimiter = ',', default_value = "step")]
    pub act: Vec<ActivationKind>,
    #[arg(long, default_value_t = 500)]
    pub t_max: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.99,0.999,0.9999")]
    pub r: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
    pub lambda_pool: Vec<u32>,
    #[arg(long, default_value_t = 10)]
    pub l_step: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tau: f64,
    /// LASSO penalty of the mechanism model.
    #[arg(long, default_value_t = 1e-4)]
    pub alpha: f64,
    /// `lasso`, `none`, or a CSV path holding an external mechanism
    /// (one row per encoded input, then one intercept row; one column per target).
    #[arg(long, default_value = "lasso")]
    pub mechanism: String,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use feature values as given instead of min-max scaling them.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the per-node training log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Pc,
    Fpga,
    Both,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "y")]
    pub target: Vec<String>,
    #[arg(long, value_enum, default_value_t = EvalMode::Both)]
    pub mode: EvalMode,
    /// Write per-sample outputs to this CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 100.0)]
    pub clock_mhz: f64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Destination text file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Export(a) => cmd_export(&a),
        Command::Import(a) => cmd_import(&a),
    }
}

pub fn cmd_gen_data(args: &GenDataArgs) -> CliResult<String> {
    let bench = match args.dataset {
        DatasetKind::Db1 => data::gen_db1(args.seed)?,
        DatasetKind::Db2 => {
            let opts = Db2Options {
                grid_test: !args.random_test,
                ..Db2Options::with_scale(args.scale).map_err(|e| CliError::Usage(e.to_string()))?
            };
            data::gen_db2(args.seed, opts)?
        }
    };
    fs::create_dir_all(&args.out)?;
    let train_path = args.out.join("train.csv");
    let test_path = args.out.join("test.csv");
    data::write_csv(&train_path, &bench.train)?;
    data::write_csv(&test_path, &bench.test)?;
    let mut manifest = bench.manifest.clone();
    manifest.push(("train_file".into(), "train.csv".into()));
    manifest.push(("test_file".into(), "test.csv".into()));
    data::write_manifest(args.out.join("manifest.txt"), &manifest)?;
    Ok(format!(
        "wrote {} training and {} test rows to {}\n",
        bench.train.len(),
        bench.test.len(),
        args.out.display()
    ))
}

fn layer_specs(args: &TrainArgs) -> CliResult<Vec<LayerSpec>> {
    let budgets = match (args.nodes, args.layers.is_empty()) {
        (Some(n), _) => vec![n],
        (None, false) => args.layers.clone(),
        (None, true) => vec![60],
    };
    let acts = match args.act.len() {
        1 => vec![args.act[0]; budgets.len()],
        n if n == budgets.len() => args.act.clone(),
        n => {
            return Err(CliError::Usage(format!(
                "{n} activations given for {} layers",
                budgets.len()
            )))
        }
    };
    Ok(budgets
        .into_iter()
        .zip(acts)
        .map(|(max_nodes, activation)| LayerSpec {
            max_nodes,
            activation,
        })
        .collect())
}

fn load_targets(path: &Path, targets: &[String], normalize: bool) -> CliResult<Dataset> {
    let names: Vec<&str> = targets.iter().map(String::as_str).collect();
    Ok(data::load_csv(path, &names, normalize)?)
}

/// External mechanism CSV: `d_enc` weight rows followed by one intercept row.
fn load_mechanism(path: &Path, d_enc: usize, outputs: usize) -> CliResult<MechanismModel> {
    let ds = data::load_csv(path, &[], false)?;
    if ds.x.cols() != outputs || ds.x.rows() != d_enc + 1 {
        return Err(CliError::Data(ScmError::InvalidInput(format!(
            "mechanism file is {}x{}, expected {}x{outputs} (weights plus an intercept row)",
            ds.x.rows(),
            ds.x.cols(),
            d_enc + 1
        ))));
    }
    let rows: Vec<usize> = (0..d_enc).collect();
    let weights = ds.x.select_rows(&rows);
    let intercepts = ds.x.row(d_enc).to_vec();
    Ok(MechanismModel::external(weights, intercepts)?)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<String> {
    let ds = load_targets(&args.data, &args.target, !args.no_normalize)?;
    let encoded = encode_matrix(&ds.x, args.encoding).map_err(CliError::Data)?;
    let mechanism = match args.mechanism.as_str() {
        "lasso" => MechanismMode::Lasso { alpha: args.alpha },
        "none" => MechanismMode::Disabled,
        path => {
            MechanismMode::External(load_mechanism(Path::new(path), encoded.d_enc, ds.y.cols())?)
        }
    };
    let cfg = TrainConfig {
        layers: layer_specs(args)?,
        t_max: args.t_max,
        r_schedule: args.r.clone(),
        lambda_pool: args.lambda_pool.clone(),
        l_step: args.l_step,
        tau: args.tau,
        val_fraction: args.val_fraction,
        mechanism,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    info!(
        "training on {} rows, {} encoded inputs",
        ds.len(),
        encoded.d_enc
    );
    let (mut model, report) = train(&encoded.rows, &ds.y, args.encoding, &cfg)?;
    model.set_normalization(ds.normalization.clone())?;
    model_file::save_to_path(&model, &args.out)?;

    let mut summary = String::new();
    writeln!(summary, "layers={}", model.layers().len()).unwrap();
    let per_layer: Vec<String> = model
        .layers()
        .iter()
        .map(|l| l.nodes.len().to_string())
        .collect();
    writeln!(summary, "nodes={}", per_layer.join(",")).unwrap();
    writeln!(
        summary,
        "mechanism_train_rmse={:.9e}",
        report.mechanism_train_rmse
    )
    .unwrap();
    writeln!(summary, "train_rmse={:.9e}", report.final_train_rmse).unwrap();
    match report.final_val_rmse {
        Some(v) => writeln!(summary, "val_rmse={v:.9e}").unwrap(),
        None => writeln!(summary, "val_rmse=na").unwrap(),
    }
    for (layer, removed) in &report.rollbacks {
        writeln!(summary, "early_stop layer={layer} removed={removed}").unwrap();
    }
    writeln!(summary, "model={}", args.out.display()).unwrap();

    if let Some(log_path) = &args.log {
        let mut log = String::new();
        for record in &report.records {
            writeln!(log, "{record}").unwrap();
        }
        log.push_str(&summary);
        fs::write(log_path, log)?;
    }
    Ok(summary)
}

/// Outputs of both evaluators for one dataset, from a single loaded model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub pc: Option<Matrix>,
    pub fpga: Option<Vec<Vec<FixedQ7_25>>>,
    pub rmse_pc: Option<f64>,
    pub rmse_fpga: Option<f64>,
    pub max_abs_delta: Option<f64>,
    pub bound: f64,
    pub clamped: usize,
}

fn rmse(pred: impl Iterator<Item = f64>, y: &Matrix) -> f64 {
    let se: f64 = pred.zip(y.as_slice()).map(|(p, t)| (p - t) * (p - t)).sum();
    (se / y.as_slice().len() as f64).sqrt()
}

/// Normalizes and encodes raw features the way `model` expects.
pub fn prepare_inputs(model: &ScmModel, x: &Matrix) -> CliResult<EncodedInputs> {
    let x = match model.normalization() {
        Some(norm) => norm.apply(x)?,
        None => x.clone(),
    };
    let encoded = encode_matrix(&x, model.encoding())?;
    if encoded.d_enc != model.d_enc() {
        return Err(CliError::Data(ScmError::EncodingMismatch {
            expected: model.d_enc(),
            found: encoded.d_enc,
        }));
    }
    Ok(encoded)
}

pub fn evaluate(model: &ScmModel, x: &Matrix, y: &Matrix, mode: EvalMode) -> CliResult<Evaluation> {
    if x.rows() == 0 {
        return Err(CliError::Data(ScmError::InvalidInput(
            "evaluation set is empty".into(),
        )));
    }
    if y.cols() != model.outputs() {
        return Err(CliError::Data(ScmError::LengthMismatch {
            expected: model.outputs(),
            found: y.cols(),
        }));
    }
    let encoded = prepare_inputs(model, x)?;
    let mut eval = Evaluation {
        bound: model.quantization_bound(),
        clamped: encoded.clamped,
        ..Evaluation::default()
    };
    if mode != EvalMode::Fpga {
        let mut data = Vec::with_capacity(x.rows() * model.outputs());
        for row in &encoded.rows {
            data.extend(predict_float(model, row)?);
        }
        let pc = Matrix::from_vec(x.rows(), model.outputs(), data)?;
        eval.rmse_pc = Some(rmse(pc.as_slice().iter().copied(), y));
        eval.pc = Some(pc);
    }
    if mode != EvalMode::Pc {
        let fpga = predict_fpga_batch(model, &encoded.rows)?;
        eval.rmse_fpga = Some(rmse(fpga.iter().flatten().map(|v| v.to_real()), y));
        eval.fpga = Some(fpga);
    }
    if let (Some(pc), Some(fpga)) = (&eval.pc, &eval.fpga) {
        let max = pc
            .as_slice()
            .iter()
            .zip(fpga.iter().flatten())
            .map(|(p, f)| (p - f.to_real()).abs())
            .fold(0.0, f64::max);
        eval.max_abs_delta = Some(max);
    }
    Ok(eval)
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<String> {
    let model = model_file::load_from_path(&args.model)?;
    let ds = load_targets(&args.data, &args.target, false)?;
    let eval = evaluate(&model, &ds.x, &ds.y, args.mode)?;

    let mut out = String::new();
    writeln!(out, "rows={}", ds.len()).unwrap();
    if let Some(v) = eval.rmse_pc {
        writeln!(out, "rmse_pc={v:.9e}").unwrap();
    }
    if let Some(v) = eval.rmse_fpga {
        writeln!(out, "rmse_fpga={v:.9e}").unwrap();
    }
    if let (Some(p), Some(f)) = (eval.rmse_pc, eval.rmse_fpga) {
        writeln!(out, "rmse_difference={:.9e}", (f - p).abs()).unwrap();
    }
    if let Some(d) = eval.max_abs_delta {
        writeln!(out, "max_abs_delta={d:.9e}").unwrap();
        writeln!(out, "quantization_bound={:.9e}", eval.bound).unwrap();
        writeln!(out, "within_bound={}", d <= eval.bound).unwrap();
    }
    if eval.clamped > 0 {
        writeln!(out, "clamped_inputs={}", eval.clamped).unwrap();
    }
    if let Some(path) = &args.out {
        write_samples(path, &ds, &eval)?;
        writeln!(out, "samples={}", path.display()).unwrap();
    }
    Ok(out)
}

fn write_samples(path: &Path, ds: &Dataset, eval: &Evaluation) -> CliResult<()> {
    let mut text = String::from("row");
    for name in &ds.target_names {
        write!(text, ",{name}").unwrap();
        if eval.pc.is_some() {
            write!(text, ",{name}_pc").unwrap();
        }
        if eval.fpga.is_some() {
            write!(text, ",{name}_fpga,{name}_fpga_raw").unwrap();
        }
    }
    text.push('\n');
    for r in 0..ds.len() {
        write!(text, "{r}").unwrap();
        for j in 0..ds.y.cols() {
            write!(text, ",{}", ds.y[(r, j)]).unwrap();
            if let Some(pc) = &eval.pc {
                write!(text, ",{}", pc[(r, j)]).unwrap();
            }
            if let Some(fpga) = &eval.fpga {
                let v = fpga[r][j];
                write!(text, ",{},{}", v.to_decimal_string(), v.raw()).unwrap();
            }
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<String> {
    if !(args.clock_mhz > 0.0 && args.clock_mhz.is_finite()) {
        return Err(CliError::Usage(format!(
            "clock {} MHz must be positive",
            args.clock_mhz
        )));
    }
    let model = model_file::load_from_path(&args.model)?;
    let cycles = CycleModel {
        clock_hz: args.clock_mhz * 1e6,
        ..CycleModel::default()
    };
    Ok(format!("{}\n", memory_report_with(&model, &cycles)))
}

pub fn cmd_export(args: &ExportArgs) -> CliResult<String> {
    let model = model_file::load_from_path(&args.model)?;
    let text = text::export(&model);
    match &args.out {
        Some(path) => {
            fs::write(path, text)?;
            Ok(format!("wrote {}\n", path.display()))
        }
        None => Ok(text),
    }
}

pub fn cmd_import(args: &ImportArgs) -> CliResult<String> {
    let text = fs::read_to_string(&args.input)?;
    let model = text::import(&text)?;
    model_file::save_to_path(&model, &args.out)?;
    Ok(format!("wrote {}\n", args.out.display()))
}
