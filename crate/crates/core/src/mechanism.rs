//! Linear mechanism model over encoded `±1` inputs.
//!
//! The float path computes `Σ s_i·P_i + u`. The fixed-point path never
//! multiplies: each quantized weight is added as-is when its input bit is
//! set and two's-complemented when clear, then the intercept is added.

use log::warn;

use crate::encoding::BitVec;
use crate::error::{Result, ScmError};
use crate::numerics::{lasso_fit, FixedQ7_25, Matrix, WideAcc};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MechanismSource {
    Lasso {
        alpha: f64,
    },
    /// Supplied by the caller (e.g. a plant's own prediction model).
    External,
    /// All-zero weights and intercepts.
    Disabled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MechanismModel {
    weights: Matrix,
    intercepts: Vec<f64>,
    weights_q: Vec<FixedQ7_25>,
    intercepts_q: Vec<FixedQ7_25>,
    source: MechanismSource,
}

/// Dense `±1` view of encoded rows (clear bit ↦ −1).
pub fn pm1_matrix(rows: &[BitVec], width: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(rows.len(), width);
    for (r, bits) in rows.iter().enumerate() {
        check_len(bits, width)?;
        for (v, b) in m.row_mut(r).iter_mut().zip(bits.iter()) {
            *v = if b { 1.0 } else { -1.0 };
        }
    }
    Ok(m)
}

impl MechanismModel {
    /// LASSO fit on the `±1` view of `bits`; intercepts are the target means.
    pub fn fit(bits: &[BitVec], d_enc: usize, y: &Matrix, alpha: f64) -> Result<Self> {
        if bits.len() != y.rows() {
            return Err(ScmError::LengthMismatch {
                expected: y.rows(),
                found: bits.len(),
            });
        }
        let x = pm1_matrix(bits, d_enc)?;
        let fit = lasso_fit(&x, y, alpha)?;
        Ok(Self::quantize(
            fit.coef,
            fit.intercept,
            MechanismSource::Lasso { alpha },
        ))
    }

    pub fn external(weights: Matrix, intercepts: Vec<f64>) -> Result<Self> {
        if weights.cols() != intercepts.len() {
            return Err(ScmError::LengthMismatch {
                expected: weights.cols(),
                found: intercepts.len(),
            });
        }
        if !weights.is_finite() || intercepts.iter().any(|v| !v.is_finite()) {
            return Err(ScmError::invalid("mechanism parameters must be finite"));
        }
        Ok(Self::quantize(
            weights,
            intercepts,
            MechanismSource::External,
        ))
    }

    pub fn disabled(d_enc: usize, outputs: usize) -> Self {
        Self::quantize(
            Matrix::zeros(d_enc, outputs),
            vec![0.0; outputs],
            MechanismSource::Disabled,
        )
    }

    /// Rebuilds from quantized values only; the real parameters are the
    /// exact values the fixed-point words represent.
    pub fn from_quantized(
        d_enc: usize,
        outputs: usize,
        weights_q: Vec<FixedQ7_25>,
        intercepts_q: Vec<FixedQ7_25>,
        source: MechanismSource,
    ) -> Result<Self> {
        if weights_q.len() != d_enc * outputs || intercepts_q.len() != outputs {
            return Err(ScmError::invalid("mechanism block has inconsistent sizes"));
        }
        let weights = Matrix::from_vec(
            d_enc,
            outputs,
            weights_q.iter().map(|w| w.to_real()).collect(),
        )?;
        let intercepts = intercepts_q.iter().map(|u| u.to_real()).collect();
        Ok(Self {
            weights,
            intercepts,
            weights_q,
            intercepts_q,
            source,
        })
    }

    /// Rebuilds from both representations, checking they agree.
    pub fn from_parts(
        weights: Matrix,
        intercepts: Vec<f64>,
        weights_q: Vec<FixedQ7_25>,
        intercepts_q: Vec<FixedQ7_25>,
        source: MechanismSource,
    ) -> Result<Self> {
        let model = Self::quantize(weights, intercepts, source);
        if model.weights_q != weights_q || model.intercepts_q != intercepts_q {
            return Err(ScmError::Malformed(
                "mechanism fixed-point words disagree with their real values".into(),
            ));
        }
        Ok(model)
    }

    fn quantize(weights: Matrix, intercepts: Vec<f64>, source: MechanismSource) -> Self {
        let mut saturated = 0;
        let mut q = |v: f64| {
            let (fx, sat) = FixedQ7_25::from_real_checked(v);
            saturated += sat as usize;
            fx
        };
        let weights_q = weights.as_slice().iter().map(|&v| q(v)).collect();
        let intercepts_q = intercepts.iter().map(|&v| q(v)).collect();
        if saturated > 0 {
            warn!("{saturated} mechanism parameters saturated in Q7.25");
        }
        Self {
            weights,
            intercepts,
            weights_q,
            intercepts_q,
            source,
        }
    }

    pub fn d_enc(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    /// Row-major `d_enc × m` quantized weights.
    pub fn weights_q(&self) -> &[FixedQ7_25] {
        &self.weights_q
    }

    pub fn intercepts_q(&self) -> &[FixedQ7_25] {
        &self.intercepts_q
    }

    pub fn source(&self) -> MechanismSource {
        self.source
    }

    pub fn eval_float(&self, x: &BitVec) -> Result<Vec<f64>> {
        check_len(x, self.d_enc())?;
        let mut out = self.intercepts.clone();
        for (i, bit) in x.iter().enumerate() {
            let s = if bit { 1.0 } else { -1.0 };
            for (o, w) in out.iter_mut().zip(self.weights.row(i)) {
                *o += s * w;
            }
        }
        Ok(out)
    }

    /// Float outputs for many rows, `N × m`.
    pub fn eval_float_rows(&self, rows: &[BitVec]) -> Result<Matrix> {
        let mut out = Matrix::zeros(rows.len(), self.outputs());
        for (r, bits) in rows.iter().enumerate() {
            out.row_mut(r).copy_from_slice(&self.eval_float(bits)?);
        }
        Ok(out)
    }

    /// Unsaturated fixed-point sums, accumulated in index order.
    pub fn eval_wide(&self, x: &BitVec) -> Result<Vec<WideAcc>> {
        check_len(x, self.d_enc())?;
        let m = self.outputs();
        let mut acc = vec![WideAcc::ZERO; m];
        for (i, bit) in x.iter().enumerate() {
            let row = &self.weights_q[i * m..(i + 1) * m];
            for (a, &w) in acc.iter_mut().zip(row) {
                *a += if bit { w } else { w.saturating_neg() };
            }
        }
        for (a, &u) in acc.iter_mut().zip(&self.intercepts_q) {
            *a += u;
        }
        Ok(acc)
    }

    pub fn eval_fpga(&self, x: &BitVec) -> Result<Vec<FixedQ7_25>> {
        Ok(self
            .eval_wide(x)?
            .into_iter()
            .map(WideAcc::to_fixed)
            .collect())
    }
}

fn check_len(x: &BitVec, expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(ScmError::LengthMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> BitVec {
        BitVec::from_bools(&(0..len).map(|_| rng.random()).collect::<Vec<bool>>())
    }

    fn random_mechanism(rng: &mut ChaCha8Rng, d: usize, m: usize) -> MechanismModel {
        let w = Matrix::from_vec(
            d,
            m,
            (0..d * m).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let u = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        MechanismModel::external(w, u).unwrap()
    }

    #[test]
    fn constant_target_is_absorbed_by_intercept() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<BitVec> = (0..20).map(|_| random_bits(&mut rng, 6)).collect();
        let y = Matrix::from_vec(20, 1, vec![3.25; 20]).unwrap();
        let mech = MechanismModel::fit(&bits, 6, &y, 1e3).unwrap();
        assert!(mech.weights().as_slice().iter().all(|&w| w.abs() < 1e-12));
        assert_eq!(mech.intercepts(), &[3.25]);
    }

    #[test]
    fn recovers_slope_of_single_bit_regression() {
        // y = 0.5 + 0.75·s with s = ±1: two-point regression gives slope 0.75
        // about the mean; the mean is 0.5 + 0.75·s̄.
        let pattern = [true, true, false, true, false, false, true, true];
        let bits: Vec<BitVec> = pattern.iter().map(|&b| BitVec::from_bools(&[b])).collect();
        let s: Vec<f64> = pattern
            .iter()
            .map(|&b| if b { 1.0 } else { -1.0 })
            .collect();
        let y = Matrix::from_vec(8, 1, s.iter().map(|v| 0.5 + 0.75 * v).collect()).unwrap();
        let mech = MechanismModel::fit(&bits, 1, &y, 0.0).unwrap();
        // with an uncentered ±1 column and fixed intercept ȳ, the fit is
        // p = xᵀ(y − ȳ)/N
        let mean = y.column_means()[0];
        let expected: f64 = s
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| a * (b - mean))
            .sum::<f64>()
            / 8.0;
        assert!((mech.weights()[(0, 0)] - expected).abs() < 1e-6);
        let balanced = [true, false, true, false];
        let bits: Vec<BitVec> = balanced.iter().map(|&b| BitVec::from_bools(&[b])).collect();
        let y = Matrix::from_rows(&[[1.25], [-0.25], [1.25], [-0.25]]).unwrap();
        let mech = MechanismModel::fit(&bits, 1, &y, 0.0).unwrap();
        assert!((mech.weights()[(0, 0)] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn external_parameters_pass_through() {
        let w = Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]).unwrap();
        let mech = MechanismModel::external(w.clone(), vec![1.0, -3.0]).unwrap();
        assert_eq!(mech.weights(), &w);
        assert_eq!(mech.intercepts(), &[1.0, -3.0]);
        assert_eq!(mech.source(), MechanismSource::External);
        assert!(MechanismModel::external(w, vec![1.0]).is_err());
    }

    #[test]
    fn float_eval_examples() {
        let w = Matrix::from_rows(&[[0.5], [2.0], [-1.0]]).unwrap();
        let mech = MechanismModel::external(w, vec![0.25]).unwrap();
        let all = BitVec::parse("111").unwrap();
        assert_eq!(mech.eval_float(&all).unwrap(), vec![0.5 + 2.0 - 1.0 + 0.25]);
        let zero = MechanismModel::external(Matrix::zeros(3, 1), vec![0.25]).unwrap();
        assert_eq!(
            zero.eval_float(&BitVec::parse("010").unwrap()).unwrap(),
            vec![0.25]
        );
        assert!(mech.eval_float(&BitVec::zeros(2)).is_err());
        assert!(mech.eval_fpga(&BitVec::zeros(4)).is_err());
    }

    #[test]
    fn float_eval_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let d = rng.random_range(1..80);
            let m = rng.random_range(1..4);
            let mech = random_mechanism(&mut rng, d, m);
            let x = random_bits(&mut rng, d);
            let s: Vec<f64> = x.iter().map(|b| if b { 1.0 } else { -1.0 }).collect();
            let got = mech.eval_float(&x).unwrap();
            for (q, g) in got.iter().enumerate() {
                let oracle: f64 = (0..d).map(|i| s[i] * mech.weights()[(i, q)]).sum::<f64>()
                    + mech.intercepts()[q];
                assert!((g - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fpga_eval_examples() {
        let zero = MechanismModel::external(Matrix::zeros(4, 1), vec![0.375]).unwrap();
        assert_eq!(
            zero.eval_fpga(&BitVec::parse("1010").unwrap()).unwrap()[0].to_real(),
            0.375
        );
        let one =
            MechanismModel::external(Matrix::from_rows(&[[1.0]]).unwrap(), vec![0.0]).unwrap();
        assert_eq!(
            one.eval_fpga(&BitVec::parse("0").unwrap()).unwrap()[0].raw(),
            -33_554_432
        );
    }

    #[test]
    fn fpga_within_quantization_bound_of_float() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let d = rng.random_range(1..64);
            let mech = random_mechanism(&mut rng, d, 1);
            let x = random_bits(&mut rng, d);
            let f = mech.eval_float(&x).unwrap()[0];
            let q = mech.eval_fpga(&x).unwrap()[0].to_real();
            assert!((f - q).abs() <= d as f64 * FixedQ7_25::EPSILON);
        }
    }

    #[test]
    fn representable_weights_evaluate_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..500 {
            let d = rng.random_range(1..40);
            let w: Vec<f64> = (0..d)
                .map(|_| rng.random_range(-1 << 20..1 << 20) as f64 * FixedQ7_25::EPSILON)
                .collect();
            let mech =
                MechanismModel::external(Matrix::from_vec(d, 1, w).unwrap(), vec![0.125]).unwrap();
            let x = random_bits(&mut rng, d);
            assert_eq!(
                mech.eval_fpga(&x).unwrap()[0].to_real(),
                mech.eval_float(&x).unwrap()[0]
            );
        }
    }

    #[test]
    fn flipping_every_bit_negates_the_linear_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..500 {
            let d = rng.random_range(1..50);
            let mech = random_mechanism(&mut rng, d, 2);
            let x = random_bits(&mut rng, d);
            let flipped = BitVec::from_bools(&x.iter().map(|b| !b).collect::<Vec<_>>());
            let a = mech.eval_wide(&x).unwrap();
            let b = mech.eval_wide(&flipped).unwrap();
            for q in 0..2 {
                let u = mech.intercepts_q()[q].raw() as i64;
                assert_eq!(a[q].raw() - u, -(b[q].raw() - u));
            }
        }
    }
}
