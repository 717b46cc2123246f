//! Clock-cycle and memory cost models.

use std::fmt;

use crate::scm::ScmModel;

/// Per-stage clock costs of the pipelined datapath.
///
/// A single-layer evaluation is: load the input (1), the first layer
/// (XNOR, count, difference, shift, bias, threshold), then a two-stage
/// output adder tree. Wider inputs need one more adder stage in the first
/// layer; every further layer costs a fixed number of stages; deep models
/// use a longer output summation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleModel {
    pub load: u64,
    pub first_layer: u64,
    /// First-layer cost when `d_enc` exceeds `wide_threshold`.
    pub first_layer_wide: u64,
    pub wide_threshold: usize,
    pub extra_layer: u64,
    pub output_single: u64,
    pub output_multi: u64,
    pub clock_hz: f64,
}

impl Default for CycleModel {
    fn default() -> Self {
        Self {
            load: 1,
            first_layer: 6,
            first_layer_wide: 7,
            wide_threshold: 32,
            extra_layer: 5,
            output_single: 2,
            output_multi: 6,
            clock_hz: 100e6,
        }
    }
}

impl CycleModel {
    /// Cycles for one sample through a model with `d_enc` encoded inputs and
    /// `layers` hidden layers. A mechanism-only model costs what a single
    /// layer does.
    pub fn estimate(&self, d_enc: usize, layers: usize) -> u64 {
        let first = if d_enc > self.wide_threshold {
            self.first_layer_wide
        } else {
            self.first_layer
        };
        let extra = layers.saturating_sub(1) as u64 * self.extra_layer;
        let output = if layers > 1 {
            self.output_multi
        } else {
            self.output_single
        };
        self.load + first + extra + output
    }

    pub fn nanoseconds(&self, cycles: u64) -> f64 {
        cycles as f64 * 1e9 / self.clock_hz
    }
}

pub fn cycle_estimate(model: &ScmModel) -> u64 {
    CycleModel::default().estimate(model.d_enc(), model.layers().len())
}

/// Storage of the fixed-point model against a 64-bit floating-point one.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceReport {
    pub raw_inputs: usize,
    pub encoded_inputs: usize,
    pub inputs_real_bits: u64,
    pub inputs_fpga_bits: u64,
    pub first_layer_nodes: usize,
    /// One real weight per raw-input × node pair.
    pub weights_real: u64,
    /// One bit per encoded-input × node pair.
    pub weights_fpga: u64,
    pub weight_real_bits: u64,
    pub weight_fpga_bits: u64,
    /// Binary hidden weights across all layers.
    pub hidden_binary_weights: u64,
    pub beta_count: u64,
    pub beta_real_bits: u64,
    pub beta_fpga_bits: u64,
    /// Three bits per node for the λ shift code.
    pub lambda_bits: u64,
    pub cycles: u64,
    pub clock_hz: f64,
}

impl ResourceReport {
    pub fn input_reduction(&self) -> f64 {
        reduction(self.inputs_real_bits, self.inputs_fpga_bits)
    }

    pub fn weight_reduction(&self) -> f64 {
        reduction(self.weight_real_bits, self.weight_fpga_bits)
    }

    pub fn beta_reduction(&self) -> f64 {
        reduction(self.beta_real_bits, self.beta_fpga_bits)
    }

    pub fn time_ns(&self) -> f64 {
        self.cycles as f64 * 1e9 / self.clock_hz
    }
}

/// `1 − fpga/real`, or zero when there is nothing to store.
fn reduction(real: u64, fpga: u64) -> f64 {
    if real == 0 {
        0.0
    } else {
        1.0 - fpga as f64 / real as f64
    }
}

/// Percentage rounded half-up to one decimal, as printed in summary tables.
pub fn percent_1dp(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

pub fn memory_report(model: &ScmModel) -> ResourceReport {
    memory_report_with(model, &CycleModel::default())
}

pub fn memory_report_with(model: &ScmModel, cycles: &CycleModel) -> ResourceReport {
    let d = model.raw_inputs() as u64;
    let d_enc = model.d_enc() as u64;
    let first_nodes = model.layers().first().map_or(0, |l| l.nodes.len());
    let hidden_binary_weights = model
        .layers()
        .iter()
        .map(|l| (l.fan_in() * l.nodes.len()) as u64)
        .sum();
    let nodes = model.node_count() as u64;
    let beta_count = nodes * model.outputs() as u64;
    ResourceReport {
        raw_inputs: d as usize,
        encoded_inputs: d_enc as usize,
        inputs_real_bits: 64 * d,
        inputs_fpga_bits: d_enc,
        first_layer_nodes: first_nodes,
        weights_real: d * first_nodes as u64,
        weights_fpga: d_enc * first_nodes as u64,
        weight_real_bits: 64 * d * first_nodes as u64,
        weight_fpga_bits: d_enc * first_nodes as u64,
        hidden_binary_weights,
        beta_count,
        beta_real_bits: 64 * beta_count,
        beta_fpga_bits: 32 * beta_count,
        lambda_bits: 3 * nodes,
        cycles: cycles.estimate(model.d_enc(), model.layers().len()),
        clock_hz: cycles.clock_hz,
    }
}

impl fmt::Display for ResourceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "raw_inputs={}", self.raw_inputs)?;
        writeln!(f, "encoded_inputs={}", self.encoded_inputs)?;
        writeln!(f, "input_bits_real={}", self.inputs_real_bits)?;
        writeln!(f, "input_bits_fpga={}", self.inputs_fpga_bits)?;
        writeln!(f, "input_reduction_pct={}", pct(self.input_reduction()))?;
        writeln!(f, "first_layer_nodes={}", self.first_layer_nodes)?;
        writeln!(f, "weights_real={}", self.weights_real)?;
        writeln!(f, "weights_fpga={}", self.weights_fpga)?;
        writeln!(f, "weight_bits_real={}", self.weight_real_bits)?;
        writeln!(f, "weight_bits_fpga={}", self.weight_fpga_bits)?;
        writeln!(f, "weight_reduction_pct={}", pct(self.weight_reduction()))?;
        writeln!(f, "hidden_binary_weights={}", self.hidden_binary_weights)?;
        writeln!(f, "output_weights={}", self.beta_count)?;
        writeln!(f, "output_weight_bits_real={}", self.beta_real_bits)?;
        writeln!(f, "output_weight_bits_fpga={}", self.beta_fpga_bits)?;
        writeln!(
            f,
            "output_weight_reduction_pct={}",
            pct(self.beta_reduction())
        )?;
        writeln!(f, "lambda_bits={}", self.lambda_bits)?;
        writeln!(f, "cycles={}", self.cycles)?;
        writeln!(f, "clock_mhz={}", self.clock_hz / 1e6)?;
        write!(f, "time_ns={}", self.time_ns())
    }
}

/// Exact percentage with trailing zeros trimmed (60.9375, 56.25, 75).
fn pct(fraction: f64) -> String {
    let s = format!("{:.6}", fraction * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
