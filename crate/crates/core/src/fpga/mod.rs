//! Bit-exact emulation of the fixed-point inference datapath.
//!
//! Every hidden node computes its dot product with popcounts, scales it by a
//! left shift, adds a Q7.25 bias in a 64-bit accumulator, and thresholds
//! the result at zero. Its output is its β word, zero, or the two's
//! complement of β. Mechanism and node outputs are summed in a fixed order
//! (mechanism, then layer-major, node index) and narrowed to Q7.25 once.

mod cost;
pub mod kernels;

pub use cost::{
    cycle_estimate, memory_report, memory_report_with, percent_1dp, CycleModel, ResourceReport,
};
pub use kernels::{domain_dot, ones_count_dot, xnor_count};

use rayon::prelude::*;

use crate::encoding::BitVec;
use crate::error::{Result, ScmError};
use crate::numerics::{FixedQ7_25, WideAcc};
use crate::scm::{ActivationKind, InputDomain, ScmModel, ScmNode};

/// One node on the fixed-point datapath: the forwarded bit and the Q7.25
/// contribution to each output.
pub fn node_forward_fpga(
    input: &BitVec,
    node: &ScmNode,
    activation: ActivationKind,
    domain: InputDomain,
) -> Result<(bool, Vec<FixedQ7_25>)> {
    let pre = pre_activation(input, node, domain)?;
    let bit = pre.is_positive();
    let contrib = node
        .beta_q()
        .iter()
        .map(|&b| match (activation, bit) {
            (_, true) => b,
            (ActivationKind::SignPaper, false) => FixedQ7_25::ZERO,
            (ActivationKind::StepPaper, false) => b.saturating_neg(),
        })
        .collect();
    Ok((bit, contrib))
}

/// `(dot << λ-shift)` at the Q7.25 scale plus the quantized bias.
pub fn pre_activation(input: &BitVec, node: &ScmNode, domain: InputDomain) -> Result<WideAcc> {
    let dot = domain_dot(input, node.weights(), domain)?;
    Ok(WideAcc::from_shifted_int(dot, node.lambda_shift()) + node.bias_q())
}

/// Fixed-point prediction of one encoded sample.
pub fn predict_fpga(model: &ScmModel, x: &BitVec) -> Result<Vec<FixedQ7_25>> {
    if x.len() != model.d_enc() {
        return Err(ScmError::EncodingMismatch {
            expected: model.d_enc(),
            found: x.len(),
        });
    }
    let mut acc = model.mechanism().eval_wide(x)?;
    let mut input = x.clone();
    for (layer, domain) in model.layers().iter().zip(model.layer_domains()) {
        let mut next = BitVec::with_capacity(layer.nodes.len());
        for node in &layer.nodes {
            let (bit, contrib) = node_forward_fpga(&input, node, layer.activation, domain)?;
            next.push(bit);
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a += c;
            }
        }
        input = next;
    }
    Ok(acc.into_iter().map(WideAcc::to_fixed).collect())
}

/// [`predict_fpga`] over many samples, sharded across threads.
pub fn predict_fpga_batch(model: &ScmModel, rows: &[BitVec]) -> Result<Vec<Vec<FixedQ7_25>>> {
    rows.par_iter().map(|x| predict_fpga(model, x)).collect()
}
