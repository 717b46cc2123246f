//! Constructive training.
//!
//! Nodes are added one at a time. Each addition draws `t_max` random
//! candidates (binary weights, power-of-two scale, bias), keeps those whose
//! supervisory score ξ_q is positive for every output, adds the best one,
//! and refits every readout weight by least squares. Layers grow in order;
//! a layer stops at its node budget, when no candidate passes at any
//! relaxation level `r`, or when validation error stalls.

use std::fmt;

use log::{debug, info};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    node_output_float, ActivationKind, InputDomain, Layer, ScmModel, ScmNode, MAX_LAMBDA_SHIFT,
};
use crate::encoding::{BitVec, EncodingSpec};
use crate::error::{Result, ScmError};
use crate::fpga::kernels::domain_dot_unchecked;
use crate::mechanism::MechanismModel;
use crate::numerics::{least_squares, FixedQ7_25, Matrix, DEFAULT_ALPHA};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub max_nodes: usize,
    pub activation: ActivationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MechanismMode {
    Lasso { alpha: f64 },
    External(MechanismModel),
    Disabled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub layers: Vec<LayerSpec>,
    /// Candidates drawn per relaxation level.
    pub t_max: usize,
    /// Relaxation levels tried in order, strictly increasing in (0, 1).
    pub r_schedule: Vec<f64>,
    /// Allowed λ values; each must be a power of two in 1..=128.
    pub lambda_pool: Vec<u32>,
    pub l_step: usize,
    pub tau: f64,
    /// Fraction of the training rows (taken from the end) held out for
    /// early stopping. Zero disables early stopping.
    pub val_fraction: f64,
    pub mechanism: MechanismMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: vec![LayerSpec {
                max_nodes: 60,
                activation: ActivationKind::StepPaper,
            }],
            t_max: 500,
            r_schedule: vec![0.9, 0.99, 0.999, 0.9999],
            lambda_pool: vec![1, 2, 4, 8, 16, 32, 64, 128],
            l_step: 10,
            tau: 1e-3,
            val_fraction: 0.2,
            mechanism: MechanismMode::Lasso {
                alpha: DEFAULT_ALPHA,
            },
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(ScmError::invalid("t_max must be at least 1"));
        }
        if self.r_schedule.is_empty() {
            return Err(ScmError::invalid("r schedule is empty"));
        }
        if self.r_schedule.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(ScmError::invalid("r values must lie in (0, 1)"));
        }
        if self.r_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ScmError::invalid("r schedule must be strictly increasing"));
        }
        if self.lambda_pool.is_empty() {
            return Err(ScmError::invalid("lambda pool is empty"));
        }
        for &l in &self.lambda_pool {
            if !l.is_power_of_two() || l > 1 << MAX_LAMBDA_SHIFT {
                return Err(ScmError::invalid(format!(
                    "lambda {l} is not a power of two in 1..=128"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(ScmError::invalid("val_fraction must lie in [0, 1)"));
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            return Err(ScmError::invalid("tau must be non-negative"));
        }
        if let MechanismMode::Lasso { alpha } = self.mechanism {
            if alpha.is_nan() || alpha < 0.0 {
                return Err(ScmError::invalid("alpha must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Supervisory score `⟨e,h⟩²/⟨h,h⟩ − (1−r)⟨e,e⟩`; `None` when `h` is zero.
pub fn xi_score(e: &[f64], h: &[f64], r: f64) -> Option<f64> {
    let hh: f64 = h.iter().map(|v| v * v).sum();
    if hh == 0.0 {
        return None;
    }
    let eh: f64 = e.iter().zip(h).map(|(a, b)| a * b).sum();
    let ee: f64 = e.iter().map(|v| v * v).sum();
    Some(eh * eh / hh - (1.0 - r) * ee)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EarlyStop {
    Continue,
    /// Remove this many trailing nodes and stop growing the layer.
    RollbackAndStop(usize),
}

/// Early-stopping rule over `history[i]` = validation error with `i + 1`
/// nodes in the current layer.
///
/// Once the relative improvement over the last `l_step` nodes is at most
/// `tau`, trailing nodes are dropped while the last node's own relative
/// improvement is at most `tau` (never below one node).
pub fn early_stop_check(history: &[f64], l_step: usize, tau: f64) -> EarlyStop {
    let len = history.len();
    if l_step == 0 || len <= l_step {
        return EarlyStop::Continue;
    }
    if relative_gain(history[len - 1 - l_step], history[len - 1]) > tau {
        return EarlyStop::Continue;
    }
    let mut keep = len;
    while keep > 1 && relative_gain(history[keep - 2], history[keep - 1]) <= tau {
        keep -= 1;
    }
    EarlyStop::RollbackAndStop(len - keep)
}

fn relative_gain(before: f64, after: f64) -> f64 {
    if after == 0.0 {
        if before > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        (before - after) / after
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub layer: usize,
    pub node: usize,
    pub r: f64,
    pub lambda: u32,
    pub xi_sum: f64,
    pub train_rmse: f64,
    pub val_rmse: Option<f64>,
    /// Training residual ‖E‖_F before and after this node's readout refit.
    pub residual_before: f64,
    pub residual_after: f64,
}

impl fmt::Display for TrainRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "layer={} node={} r={} lambda={} xi_sum={:.9e} train_rmse={:.9e} val_rmse=",
            self.layer, self.node, self.r, self.lambda, self.xi_sum, self.train_rmse
        )?;
        match self.val_rmse {
            Some(v) => write!(f, "{v:.9e}"),
            None => f.write_str("na"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<TrainRecord>,
    /// `(layer, nodes removed)` for every early-stopping rollback.
    pub rollbacks: Vec<(usize, usize)>,
    pub mechanism_train_rmse: f64,
    pub final_train_rmse: f64,
    pub final_val_rmse: Option<f64>,
}

struct Candidate {
    weights: BitVec,
    shift: u8,
    bias: f64,
}

struct Accepted {
    candidate: Candidate,
    r: f64,
    xi_sum: f64,
}

/// Readout state shared by all layers: hidden outputs, targets after the
/// mechanism, current β and residuals.
struct ReadoutState {
    targets: Matrix,
    targets_val: Matrix,
    hidden: Matrix,
    hidden_val: Matrix,
    beta: Matrix,
    residual: Matrix,
    residual_val: Matrix,
}

impl ReadoutState {
    fn new(targets: Matrix, targets_val: Matrix) -> Self {
        let m = targets.cols();
        Self {
            hidden: Matrix::zeros(targets.rows(), 0),
            hidden_val: Matrix::zeros(targets_val.rows(), 0),
            beta: Matrix::zeros(0, m),
            residual: targets.clone(),
            residual_val: targets_val.clone(),
            targets,
            targets_val,
        }
    }

    fn push(&mut self, h: &[f64], h_val: &[f64]) -> Result<()> {
        self.hidden.push_column(h)?;
        self.hidden_val.push_column(h_val)?;
        self.refit()
    }

    fn truncate(&mut self, columns: usize) -> Result<()> {
        self.hidden.truncate_columns(columns);
        self.hidden_val.truncate_columns(columns);
        self.refit()
    }

    fn refit(&mut self) -> Result<()> {
        if self.hidden.cols() == 0 {
            self.beta = Matrix::zeros(0, self.targets.cols());
            self.residual = self.targets.clone();
            self.residual_val = self.targets_val.clone();
            return Ok(());
        }
        self.beta = least_squares(&self.hidden, &self.targets)?;
        self.residual = self.targets.sub(&self.hidden.matmul(&self.beta)?)?;
        self.residual_val = self.targets_val.sub(&self.hidden_val.matmul(&self.beta)?)?;
        Ok(())
    }

    fn val_rmse(&self) -> Option<f64> {
        (self.residual_val.rows() > 0).then(|| self.residual_val.rms())
    }
}

/// Trains a model on encoded rows `x` (all of width `d_enc`) and targets `y`.
///
/// The last `val_fraction` of the rows form the validation set. Returns the
/// quantized model together with the per-node training log.
pub fn train(
    x: &[BitVec],
    y: &Matrix,
    encoding: EncodingSpec,
    cfg: &TrainConfig,
) -> Result<(ScmModel, TrainReport)> {
    cfg.validate()?;
    let encoding = encoding.validate()?;
    if x.is_empty() {
        return Err(ScmError::invalid("training set is empty"));
    }
    if x.len() != y.rows() {
        return Err(ScmError::LengthMismatch {
            expected: y.rows(),
            found: x.len(),
        });
    }
    let d_enc = x[0].len();
    if let Some(bad) = x.iter().find(|b| b.len() != d_enc) {
        return Err(ScmError::LengthMismatch {
            expected: d_enc,
            found: bad.len(),
        });
    }
    if d_enc == 0 || !d_enc.is_multiple_of(encoding.bits_per_input()) {
        return Err(ScmError::invalid(format!(
            "{d_enc} encoded inputs does not fit encoding {encoding}"
        )));
    }

    let n = x.len();
    let mut n_val = (n as f64 * cfg.val_fraction).floor() as usize;
    if cfg.val_fraction > 0.0 && n_val == 0 {
        n_val = 1;
    }
    if n - n_val < 2 {
        return Err(ScmError::invalid(format!(
            "{n} rows leave fewer than two training rows after validation split"
        )));
    }
    let n_train = n - n_val;
    let (x_train, x_val) = x.split_at(n_train);
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..n).collect();
    let y_train = y.select_rows(&train_idx);
    let y_val = y.select_rows(&val_idx);

    let mechanism = match &cfg.mechanism {
        MechanismMode::Lasso { alpha } => MechanismModel::fit(x_train, d_enc, &y_train, *alpha)?,
        MechanismMode::External(m) => {
            if m.d_enc() != d_enc || m.outputs() != y.cols() {
                return Err(ScmError::invalid(format!(
                    "external mechanism is {}x{}, data needs {}x{}",
                    m.d_enc(),
                    m.outputs(),
                    d_enc,
                    y.cols()
                )));
            }
            m.clone()
        }
        MechanismMode::Disabled => MechanismModel::disabled(d_enc, y.cols()),
    };
    let targets = y_train.sub(&mechanism.eval_float_rows(x_train)?)?;
    let targets_val = y_val.sub(&mechanism.eval_float_rows(x_val)?)?;
    let mut state = ReadoutState::new(targets, targets_val);
    let mut report = TrainReport {
        mechanism_train_rmse: state.residual.rms(),
        ..TrainReport::default()
    };
    info!(
        "mechanism fitted: train_rmse={:.6e} on {n_train} rows ({n_val} held out)",
        report.mechanism_train_rmse
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers: Vec<Layer> = Vec::new();
    let mut inputs: Vec<BitVec> = x_train.to_vec();
    let mut inputs_val: Vec<BitVec> = x_val.to_vec();
    let mut domain = InputDomain::PlusMinusOne;

    for (k, spec) in cfg.layers.iter().enumerate() {
        let fan_in = inputs[0].len();
        let mut nodes: Vec<ScmNode> = Vec::new();
        let mut out_bits: Vec<BitVec> = vec![BitVec::with_capacity(spec.max_nodes); n_train];
        let mut out_bits_val: Vec<BitVec> = vec![BitVec::with_capacity(spec.max_nodes); n_val];
        let mut history: Vec<f64> = Vec::new();

        while nodes.len() < spec.max_nodes {
            let found = search_candidate(
                &inputs,
                fan_in,
                domain,
                spec.activation,
                &state.residual,
                cfg,
                &mut rng,
            );
            let Some(accepted) = found else {
                if k == 0 && nodes.is_empty() {
                    return Err(ScmError::TrainingFailed(
                        "no candidate satisfied the supervisory condition for the first node"
                            .into(),
                    ));
                }
                info!(
                    "layer {k}: no admissible candidate after {} nodes",
                    nodes.len()
                );
                break;
            };
            let cand = accepted.candidate;
            let node = ScmNode::new(cand.weights, cand.shift, cand.bias, vec![0.0; y.cols()])?;
            let (h, bits) = node_column(&inputs, &node, spec.activation, domain);
            let (h_val, bits_val) = node_column(&inputs_val, &node, spec.activation, domain);
            for (row, b) in out_bits.iter_mut().zip(bits) {
                row.push(b);
            }
            for (row, b) in out_bits_val.iter_mut().zip(bits_val) {
                row.push(b);
            }

            let residual_before = state.residual.frobenius_norm();
            state.push(&h, &h_val)?;
            nodes.push(node);
            let record = TrainRecord {
                layer: k,
                node: nodes.len() - 1,
                r: accepted.r,
                lambda: 1 << cand.shift,
                xi_sum: accepted.xi_sum,
                train_rmse: state.residual.rms(),
                val_rmse: state.val_rmse(),
                residual_before,
                residual_after: state.residual.frobenius_norm(),
            };
            debug!("{record}");
            report.records.push(record);

            if let Some(v) = state.val_rmse() {
                history.push(v);
                if let EarlyStop::RollbackAndStop(remove) =
                    early_stop_check(&history, cfg.l_step, cfg.tau)
                {
                    let keep = nodes.len() - remove;
                    nodes.truncate(keep);
                    for row in out_bits.iter_mut().chain(out_bits_val.iter_mut()) {
                        let trimmed =
                            BitVec::from_bools(&row.iter().take(keep).collect::<Vec<_>>());
                        *row = trimmed;
                    }
                    state.truncate(state.hidden.cols() - remove)?;
                    report.rollbacks.push((k, remove));
                    info!("layer {k}: early stop, removed {remove} trailing nodes, kept {keep}");
                    break;
                }
            }
        }

        if nodes.is_empty() {
            break;
        }
        layers.push(Layer {
            activation: spec.activation,
            nodes,
        });
        domain = spec.activation.forward_domain();
        inputs = out_bits;
        inputs_val = out_bits_val;
    }

    // hand the final readout weights to their nodes, in global node order
    let mut row = 0;
    for layer in &mut layers {
        for node in &mut layer.nodes {
            node.set_beta(state.beta.row(row).to_vec());
            row += 1;
        }
    }
    report.final_train_rmse = state.residual.rms();
    report.final_val_rmse = state.val_rmse();

    let model = ScmModel::new(encoding, mechanism, layers, None, true)?;
    let saturated = model
        .layers()
        .iter()
        .flat_map(|l| &l.nodes)
        .flat_map(|n| n.beta())
        .filter(|b| FixedQ7_25::from_real_checked(**b).1)
        .count();
    if saturated > 0 {
        log::warn!("{saturated} readout weights saturate in Q7.25");
    }
    Ok((model, report))
}

/// Best admissible candidate for the next node, or `None` once every
/// relaxation level is exhausted.
fn search_candidate(
    inputs: &[BitVec],
    fan_in: usize,
    domain: InputDomain,
    activation: ActivationKind,
    residual: &Matrix,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Accepted> {
    let m = residual.cols();
    let columns: Vec<Vec<f64>> = (0..m).map(|q| residual.column(q)).collect();
    let ee: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();

    for &r in &cfg.r_schedule {
        let candidates: Vec<Candidate> = (0..cfg.t_max)
            .map(|_| draw_candidate(fan_in, cfg, rng))
            .collect();
        let scores: Vec<Option<f64>> = candidates
            .par_iter()
            .map(|c| {
                let h = candidate_outputs(inputs, c, activation, domain);
                let hh: f64 = h.iter().map(|v| v * v).sum();
                if hh == 0.0 {
                    return None;
                }
                let mut total = 0.0;
                for (col, &e2) in columns.iter().zip(&ee) {
                    let eh: f64 = col.iter().zip(&h).map(|(a, b)| a * b).sum();
                    let xi = eh * eh / hh - (1.0 - r) * e2;
                    if xi.is_nan() || xi <= 0.0 {
                        return None;
                    }
                    total += xi;
                }
                Some(total)
            })
            .collect();

        // lowest index wins ties
        let best = scores
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.map(|s| (i, s)))
            .fold(None, |acc: Option<(usize, f64)>, (i, s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((i, s)),
            });
        if let Some((i, xi_sum)) = best {
            let candidate = candidates.into_iter().nth(i).expect("index in range");
            return Some(Accepted {
                candidate,
                r,
                xi_sum,
            });
        }
    }
    None
}

fn draw_candidate(fan_in: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Candidate {
    let words: Vec<u64> = (0..fan_in.div_ceil(64)).map(|_| rng.next_u64()).collect();
    let weights = BitVec::from_words(fan_in, words).expect("word count matches fan-in");
    let lambda = cfg.lambda_pool[rng.random_range(0..cfg.lambda_pool.len())];
    let shift = lambda.trailing_zeros() as u8;
    let raw_bias = rng.random_range(-(lambda as f64)..=lambda as f64);
    let bias = FixedQ7_25::from_real(raw_bias).to_real();
    Candidate {
        weights,
        shift,
        bias,
    }
}

fn candidate_outputs(
    inputs: &[BitVec],
    c: &Candidate,
    activation: ActivationKind,
    domain: InputDomain,
) -> Vec<f64> {
    let lambda = (1u32 << c.shift) as f64;
    inputs
        .iter()
        .map(|x| {
            let dot = domain_dot_unchecked(x, &c.weights, domain) as f64;
            activation.output_value(lambda * dot + c.bias > 0.0)
        })
        .collect()
}

fn node_column(
    inputs: &[BitVec],
    node: &ScmNode,
    activation: ActivationKind,
    domain: InputDomain,
) -> (Vec<f64>, Vec<bool>) {
    inputs
        .iter()
        .map(|x| {
            let (bit, h) = node_output_float(x, node, activation, domain).expect("fan-in checked");
            (h, bit)
        })
        .unzip()
}
