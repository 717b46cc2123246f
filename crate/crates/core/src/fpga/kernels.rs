//! Multiplier-free dot products over packed bits.

use crate::encoding::BitVec;
use crate::error::{Result, ScmError};
use crate::scm::InputDomain;

/// `±1 · ±1` dot product: `popcount(XNOR) − popcount(XOR)`.
pub fn xnor_count(a: &BitVec, b: &BitVec) -> Result<i64> {
    check_lengths(a, b)?;
    Ok(xnor_count_unchecked(a, b))
}

/// `{0,1} · ±1` dot product: ones where the weight is set, minus ones where
/// it is clear.
pub fn ones_count_dot(a01: &BitVec, w: &BitVec) -> Result<i64> {
    check_lengths(a01, w)?;
    Ok(ones_count_dot_unchecked(a01, w))
}

pub fn domain_dot(input: &BitVec, weights: &BitVec, domain: InputDomain) -> Result<i64> {
    check_lengths(input, weights)?;
    Ok(domain_dot_unchecked(input, weights, domain))
}

pub(crate) fn domain_dot_unchecked(input: &BitVec, weights: &BitVec, domain: InputDomain) -> i64 {
    match domain {
        InputDomain::PlusMinusOne => xnor_count_unchecked(input, weights),
        InputDomain::ZeroOne => ones_count_dot_unchecked(input, weights),
    }
}

fn xnor_count_unchecked(a: &BitVec, b: &BitVec) -> i64 {
    debug_assert_eq!(a.len(), b.len());
    let words = a.words().len();
    if words == 0 {
        return 0;
    }
    let mut agree: u32 = 0;
    for (x, y) in a.words()[..words - 1].iter().zip(b.words()) {
        agree += (!(x ^ y)).count_ones();
    }
    let tail = !(a.words()[words - 1] ^ b.words()[words - 1]) & a.last_word_mask();
    agree += tail.count_ones();
    2 * agree as i64 - a.len() as i64
}

fn ones_count_dot_unchecked(a01: &BitVec, w: &BitVec) -> i64 {
    debug_assert_eq!(a01.len(), w.len());
    let mut plus: u32 = 0;
    let mut minus: u32 = 0;
    // bits past len are zero in a01, so no tail mask is needed
    for (x, y) in a01.words().iter().zip(w.words()) {
        plus += (x & y).count_ones();
        minus += (x & !y).count_ones();
    }
    plus as i64 - minus as i64
}

fn check_lengths(a: &BitVec, b: &BitVec) -> Result<()> {
    if a.len() != b.len() {
        return Err(ScmError::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}
