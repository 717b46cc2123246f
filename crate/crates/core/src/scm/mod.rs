//! Stochastic configuration machine: model types, the full-precision
//! reference evaluator, and constructive training.

mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use train::{
    early_stop_check, train, xi_score, EarlyStop, LayerSpec, MechanismMode, TrainConfig,
    TrainRecord, TrainReport,
};

use crate::data::Normalization;
use crate::encoding::{BitVec, EncodingSpec};
use crate::error::{Result, ScmError};
use crate::mechanism::MechanismModel;
use crate::numerics::{FixedQ7_25, Matrix};

/// Threshold activation of a hidden layer.
///
/// Both kinds forward the bit `[pre > 0]` to the next layer. They differ in
/// the value multiplied by β and in how the next layer reads the bit:
///
/// | kind        | output for bit 1/0 | next layer reads 0 as |
/// |-------------|--------------------|-----------------------|
/// | `SignPaper` | `β` / `0`          | `0`                   |
/// | `StepPaper` | `β` / `−β`         | `−1`                  |
///
/// The names follow the hardware description this datapath reproduces,
/// which swaps the conventional meanings of "sign" and "step".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    SignPaper,
    StepPaper,
}

impl ActivationKind {
    pub fn tag(self) -> u8 {
        match self {
            ActivationKind::SignPaper => 0,
            ActivationKind::StepPaper => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ActivationKind::SignPaper),
            1 => Ok(ActivationKind::StepPaper),
            _ => Err(ScmError::Malformed(format!("unknown activation tag {tag}"))),
        }
    }

    /// Value the readout weight is multiplied by.
    pub fn output_value(self, bit: bool) -> f64 {
        match (self, bit) {
            (_, true) => 1.0,
            (ActivationKind::SignPaper, false) => 0.0,
            (ActivationKind::StepPaper, false) => -1.0,
        }
    }

    /// How a layer fed by this activation interprets its input bits.
    pub fn forward_domain(self) -> InputDomain {
        match self {
            ActivationKind::SignPaper => InputDomain::ZeroOne,
            ActivationKind::StepPaper => InputDomain::PlusMinusOne,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::SignPaper => "sign",
            ActivationKind::StepPaper => "step",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = ScmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sign" => Ok(ActivationKind::SignPaper),
            "step" => Ok(ActivationKind::StepPaper),
            other => Err(ScmError::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

/// Meaning of a clear bit on a node's input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputDomain {
    /// Clear bit is −1 (encoded inputs, step-fed layers). XNOR-count path.
    PlusMinusOne,
    /// Clear bit is 0 (sign-fed layers). Conditional-count path.
    ZeroOne,
}

/// One hidden node: binary weights (clear bit ↦ −1), a power-of-two scale
/// stored as its shift, a bias, and one readout weight per output.
#[derive(Clone, Debug, PartialEq)]
pub struct ScmNode {
    weights: BitVec,
    lambda_shift: u8,
    bias: f64,
    bias_q: FixedQ7_25,
    beta: Vec<f64>,
    beta_q: Vec<FixedQ7_25>,
}

pub const MAX_LAMBDA_SHIFT: u8 = 7;

impl ScmNode {
    pub fn new(weights: BitVec, lambda_shift: u8, bias: f64, beta: Vec<f64>) -> Result<Self> {
        if lambda_shift > MAX_LAMBDA_SHIFT {
            return Err(ScmError::invalid(format!(
                "lambda shift {lambda_shift} exceeds 7"
            )));
        }
        if !bias.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(ScmError::invalid("node parameters must be finite"));
        }
        let bias_q = FixedQ7_25::from_real(bias);
        let beta_q = beta.iter().map(|&b| FixedQ7_25::from_real(b)).collect();
        Ok(Self {
            weights,
            lambda_shift,
            bias,
            bias_q,
            beta,
            beta_q,
        })
    }

    /// Node whose real parameters are exactly its fixed-point words.
    pub fn from_quantized(
        weights: BitVec,
        lambda_shift: u8,
        bias_q: FixedQ7_25,
        beta_q: Vec<FixedQ7_25>,
    ) -> Result<Self> {
        if lambda_shift > MAX_LAMBDA_SHIFT {
            return Err(ScmError::Malformed(format!(
                "lambda shift {lambda_shift} exceeds 7"
            )));
        }
        Ok(Self {
            weights,
            lambda_shift,
            bias: bias_q.to_real(),
            bias_q,
            beta: beta_q.iter().map(|b| b.to_real()).collect(),
            beta_q,
        })
    }

    pub fn weights(&self) -> &BitVec {
        &self.weights
    }

    pub fn fan_in(&self) -> usize {
        self.weights.len()
    }

    pub fn lambda_shift(&self) -> u8 {
        self.lambda_shift
    }

    pub fn lambda(&self) -> f64 {
        (1u32 << self.lambda_shift) as f64
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn bias_q(&self) -> FixedQ7_25 {
        self.bias_q
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_q(&self) -> &[FixedQ7_25] {
        &self.beta_q
    }

    pub(crate) fn set_beta(&mut self, beta: Vec<f64>) {
        self.beta_q = beta.iter().map(|&b| FixedQ7_25::from_real(b)).collect();
        self.beta = beta;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub activation: ActivationKind,
    pub nodes: Vec<ScmNode>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.nodes.first().map_or(0, ScmNode::fan_in)
    }
}

/// A trained model: mechanism, hidden layers, and how to encode its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScmModel {
    encoding: EncodingSpec,
    mechanism: MechanismModel,
    layers: Vec<Layer>,
    normalization: Option<Normalization>,
    /// Whether the real-valued parameters carry training precision (as
    /// opposed to being reconstructed from the fixed-point words).
    full_precision: bool,
}

impl ScmModel {
    pub fn new(
        encoding: EncodingSpec,
        mechanism: MechanismModel,
        layers: Vec<Layer>,
        normalization: Option<Normalization>,
        full_precision: bool,
    ) -> Result<Self> {
        let encoding = encoding.validate()?;
        let d_enc = mechanism.d_enc();
        if !d_enc.is_multiple_of(encoding.bits_per_input()) {
            return Err(ScmError::invalid(format!(
                "{d_enc} encoded inputs is not a multiple of {} bits per input",
                encoding.bits_per_input()
            )));
        }
        let m = mechanism.outputs();
        let mut fan_in = d_enc;
        for (k, layer) in layers.iter().enumerate() {
            if layer.nodes.is_empty() {
                return Err(ScmError::invalid(format!("layer {k} has no nodes")));
            }
            for node in &layer.nodes {
                if node.fan_in() != fan_in {
                    return Err(ScmError::invalid(format!(
                        "layer {k}: node fan-in {} != expected {fan_in}",
                        node.fan_in()
                    )));
                }
                if node.beta.len() != m {
                    return Err(ScmError::invalid(format!(
                        "layer {k}: node has {} readout weights, expected {m}",
                        node.beta.len()
                    )));
                }
            }
            fan_in = layer.nodes.len();
        }
        if let Some(norm) = &normalization {
            if norm.features() != d_enc / encoding.bits_per_input() {
                return Err(ScmError::invalid(
                    "normalization width disagrees with the encoding",
                ));
            }
        }
        Ok(Self {
            encoding,
            mechanism,
            layers,
            normalization,
            full_precision,
        })
    }

    pub fn encoding(&self) -> EncodingSpec {
        self.encoding
    }

    pub fn mechanism(&self) -> &MechanismModel {
        &self.mechanism
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn set_normalization(&mut self, normalization: Option<Normalization>) -> Result<()> {
        if let Some(norm) = &normalization {
            if norm.features() != self.raw_inputs() {
                return Err(ScmError::invalid(
                    "normalization width disagrees with the encoding",
                ));
            }
        }
        self.normalization = normalization;
        Ok(())
    }

    pub fn is_full_precision(&self) -> bool {
        self.full_precision
    }

    pub fn d_enc(&self) -> usize {
        self.mechanism.d_enc()
    }

    /// Feature count before encoding.
    pub fn raw_inputs(&self) -> usize {
        self.d_enc() / self.encoding.bits_per_input()
    }

    pub fn outputs(&self) -> usize {
        self.mechanism.outputs()
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(|l| l.nodes.len()).sum()
    }

    /// Input domain of each layer, in order.
    pub fn layer_domains(&self) -> Vec<InputDomain> {
        let mut domain = InputDomain::PlusMinusOne;
        self.layers
            .iter()
            .map(|l| {
                let d = domain;
                domain = l.activation.forward_domain();
                d
            })
            .collect()
    }

    /// Largest `|fpga − float|` the fixed-point path can show on any output:
    /// one 2^-25 step per readout weight, mechanism weight, intercept, and
    /// output, with each rounding contributing at most half a step.
    pub fn quantization_bound(&self) -> f64 {
        let betas = self.node_count() * self.outputs();
        (betas + self.d_enc() + self.outputs() + 1) as f64 * FixedQ7_25::EPSILON
    }

    /// Drops the training-precision values, keeping only what the fixed-point
    /// words represent.
    pub fn to_quantized_only(&self) -> Result<Self> {
        let mech = &self.mechanism;
        let mechanism = MechanismModel::from_quantized(
            mech.d_enc(),
            mech.outputs(),
            mech.weights_q().to_vec(),
            mech.intercepts_q().to_vec(),
            mech.source(),
        )?;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let nodes = l
                    .nodes
                    .iter()
                    .map(|n| {
                        ScmNode::from_quantized(
                            n.weights.clone(),
                            n.lambda_shift,
                            n.bias_q,
                            n.beta_q.clone(),
                        )
                    })
                    .collect::<Result<_>>()?;
                Ok(Layer {
                    activation: l.activation,
                    nodes,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(
            self.encoding,
            mechanism,
            layers,
            self.normalization.clone(),
            false,
        )
    }
}

/// Full-precision node evaluation: returns the bit forwarded to the next
/// layer and the value multiplied by β.
pub fn node_output_float(
    input: &BitVec,
    node: &ScmNode,
    activation: ActivationKind,
    domain: InputDomain,
) -> Result<(bool, f64)> {
    if input.len() != node.fan_in() {
        return Err(ScmError::LengthMismatch {
            expected: node.fan_in(),
            found: input.len(),
        });
    }
    let pre = node.lambda() * dense_dot(input, node.weights(), domain) + node.bias();
    let bit = pre > 0.0;
    Ok((bit, activation.output_value(bit)))
}

fn dense_dot(input: &BitVec, weights: &BitVec, domain: InputDomain) -> f64 {
    input
        .iter()
        .zip(weights.iter())
        .map(|(x, w)| {
            let xv = match (domain, x) {
                (_, true) => 1.0,
                (InputDomain::PlusMinusOne, false) => -1.0,
                (InputDomain::ZeroOne, false) => 0.0,
            };
            if w {
                xv
            } else {
                -xv
            }
        })
        .sum()
}

/// Reference ("PC") prediction in double precision.
pub fn predict_float(model: &ScmModel, x: &BitVec) -> Result<Vec<f64>> {
    if x.len() != model.d_enc() {
        return Err(ScmError::EncodingMismatch {
            expected: model.d_enc(),
            found: x.len(),
        });
    }
    let mut out = model.mechanism().eval_float(x)?;
    let mut input = x.clone();
    for (layer, domain) in model.layers().iter().zip(model.layer_domains()) {
        let mut next = BitVec::with_capacity(layer.nodes.len());
        for node in &layer.nodes {
            let (bit, h) = node_output_float(&input, node, layer.activation, domain)?;
            next.push(bit);
            for (o, b) in out.iter_mut().zip(node.beta()) {
                *o += b * h;
            }
        }
        input = next;
    }
    Ok(out)
}

/// A model of the given shape with random parameters, for sizing,
/// benchmarking and fidelity checks. Layer budgets are used as exact node
/// counts.
pub fn random_model(
    encoding: EncodingSpec,
    raw_inputs: usize,
    layers: &[LayerSpec],
    outputs: usize,
    seed: u64,
) -> Result<ScmModel> {
    let encoding = encoding.validate()?;
    let d_enc = raw_inputs * encoding.bits_per_input();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mech_weights: Vec<f64> = (0..d_enc * outputs)
        .map(|_| rng.random_range(-0.05..0.05))
        .collect();
    let intercepts: Vec<f64> = (0..outputs).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mechanism =
        MechanismModel::external(Matrix::from_vec(d_enc, outputs, mech_weights)?, intercepts)?;
    let mut fan_in = d_enc;
    let mut built = Vec::with_capacity(layers.len());
    for spec in layers {
        let nodes = (0..spec.max_nodes)
            .map(|_| {
                let bits: Vec<bool> = (0..fan_in).map(|_| rng.random()).collect();
                let shift = rng.random_range(0..=MAX_LAMBDA_SHIFT);
                let reach = f64::from(1u32 << shift) * fan_in as f64 / 4.0;
                let bias =
                    FixedQ7_25::from_real(rng.random_range(-reach..=reach).clamp(-64.0, 64.0))
                        .to_real();
                let beta = (0..outputs).map(|_| rng.random_range(-1.0..1.0)).collect();
                ScmNode::new(BitVec::from_bools(&bits), shift, bias, beta)
            })
            .collect::<Result<Vec<_>>>()?;
        fan_in = nodes.len();
        built.push(Layer {
            activation: spec.activation,
            nodes,
        });
    }
    ScmModel::new(encoding, mechanism, built, None, true)
}
