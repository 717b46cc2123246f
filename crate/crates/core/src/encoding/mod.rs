//! Binary input encodings for normalized reals in `[0, 1]`.
//!
//! Three families are supported: density-based unary buckets, Scheme 1
//! (one ones-bit plus a 9-bit unary field per decimal place) and Scheme 2
//! (Scheme 1 with coarser 4-bit and 2-bit fields for the low places).
//!
//! Within a sample, bits are laid out feature-major; within a feature, field
//! by field from most to least significant. Unary fields are right-aligned:
//! digit `d` in a `w`-bit field is `w - d` zeros followed by `d` ones.

mod bits;

use std::fmt;
use std::str::FromStr;

pub use bits::BitVec;
use log::warn;

use crate::error::{Result, ScmError};
use crate::numerics::Matrix;

/// Digits are read after rounding to this many decimal places, which absorbs
/// binary representation error (0.867 is stored as 0.86699999...).
const DIGIT_PRECISION: u32 = 12;

pub const MAX_SCHEME1_PLACES: u8 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncodingSpec {
    /// Unary bucket code with `levels` bits over `levels + 1` even buckets.
    Density { levels: u8 },
    /// Ones bit plus 9 unary bits per decimal place.
    Scheme1 { places: u8 },
    /// Ones, tenths (9), hundredths (4), thousandths (2): 16 bits.
    Scheme2V1,
    /// Ones, tenths (9), hundredths (9), thousandths (4), ten-thousandths (2): 25 bits.
    Scheme2V2,
}

impl EncodingSpec {
    pub fn bits_per_input(self) -> usize {
        match self {
            EncodingSpec::Density { levels } => levels as usize,
            EncodingSpec::Scheme1 { places } => 1 + 9 * places as usize,
            EncodingSpec::Scheme2V1 => 16,
            EncodingSpec::Scheme2V2 => 25,
        }
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            EncodingSpec::Density { levels: 0 } => {
                Err(ScmError::invalid("density encoding needs at least one bit"))
            }
            EncodingSpec::Scheme1 { places } if places == 0 || places > MAX_SCHEME1_PLACES => {
                Err(ScmError::invalid(format!(
                    "scheme 1 supports 1..={MAX_SCHEME1_PLACES} decimal places, got {places}"
                )))
            }
            ok => Ok(ok),
        }
    }

    /// Model-file tag byte.
    pub fn tag(self) -> u8 {
        match self {
            EncodingSpec::Density { .. } => 0,
            EncodingSpec::Scheme1 { .. } => 1,
            EncodingSpec::Scheme2V1 => 2,
            EncodingSpec::Scheme2V2 => 3,
        }
    }

    /// Model-file parameter byte.
    pub fn param(self) -> u8 {
        match self {
            EncodingSpec::Density { levels } => levels,
            EncodingSpec::Scheme1 { places } => places,
            EncodingSpec::Scheme2V1 | EncodingSpec::Scheme2V2 => 0,
        }
    }

    pub fn from_tag(tag: u8, param: u8) -> Result<Self> {
        let spec = match tag {
            0 => EncodingSpec::Density { levels: param },
            1 => EncodingSpec::Scheme1 { places: param },
            2 => EncodingSpec::Scheme2V1,
            3 => EncodingSpec::Scheme2V2,
            _ => return Err(ScmError::invalid(format!("unknown encoding tag {tag}"))),
        };
        spec.validate()
    }

    /// Encodes one value, appending its bits to `out`.
    pub fn encode_into(self, x: f64, out: &mut BitVec) -> Result<()> {
        check_unit(x)?;
        match self {
            EncodingSpec::Density { levels } => {
                let n = levels as usize;
                let level = ((x * (n + 1) as f64).floor() as usize).min(n);
                for i in 0..n {
                    out.push(i < level);
                }
            }
            EncodingSpec::Scheme1 { places } => {
                let (ones, digits) = decimal_digits(x);
                out.push(ones);
                for &d in &digits[..places as usize] {
                    push_unary(out, d, 9);
                }
            }
            EncodingSpec::Scheme2V1 => {
                let (ones, digits) = decimal_digits(x);
                out.push(ones);
                push_unary(out, digits[0], 9);
                push_unary(out, quantize_pair(digits[1]), 4);
                push_unary(out, quantize_triple(digits[2]), 2);
            }
            EncodingSpec::Scheme2V2 => {
                let (ones, digits) = decimal_digits(x);
                out.push(ones);
                push_unary(out, digits[0], 9);
                push_unary(out, digits[1], 9);
                push_unary(out, quantize_pair(digits[2]), 4);
                push_unary(out, quantize_triple(digits[3]), 2);
            }
        }
        Ok(())
    }

    pub fn encode(self, x: f64) -> Result<BitVec> {
        let mut out = BitVec::with_capacity(self.bits_per_input());
        self.encode_into(x, &mut out)?;
        Ok(out)
    }
}

impl fmt::Display for EncodingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodingSpec::Density { levels } => write!(f, "density:{levels}"),
            EncodingSpec::Scheme1 { places } => write!(f, "s1:{places}"),
            EncodingSpec::Scheme2V1 => f.write_str("s2v1"),
            EncodingSpec::Scheme2V2 => f.write_str("s2v2"),
        }
    }
}

impl FromStr for EncodingSpec {
    type Err = ScmError;

    /// Accepts `density:N`, `s1:U`, `s2v1`, `s2v2`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (kind, arg) = match lower.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (lower.as_str(), None),
        };
        let num = |a: Option<&str>| -> Result<u8> {
            a.ok_or_else(|| ScmError::invalid(format!("encoding `{s}` needs a parameter")))?
                .parse()
                .map_err(|_| ScmError::invalid(format!("bad encoding parameter in `{s}`")))
        };
        let spec = match kind {
            "density" | "d" => EncodingSpec::Density { levels: num(arg)? },
            "s1" | "scheme1" => EncodingSpec::Scheme1 { places: num(arg)? },
            "s2v1" => EncodingSpec::Scheme2V1,
            "s2v2" => EncodingSpec::Scheme2V2,
            _ => return Err(ScmError::invalid(format!("unknown encoding `{s}`"))),
        };
        spec.validate()
    }
}

/// Density-based unary bucket code.
pub fn encode_density(x: f64, levels: u8) -> Result<BitVec> {
    EncodingSpec::Density { levels }.validate()?.encode(x)
}

pub fn encode_scheme1(x: f64, places: u8) -> Result<BitVec> {
    EncodingSpec::Scheme1 { places }.validate()?.encode(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme2Variant {
    V1,
    V2,
}

pub fn encode_scheme2(x: f64, variant: Scheme2Variant) -> Result<BitVec> {
    match variant {
        Scheme2Variant::V1 => EncodingSpec::Scheme2V1.encode(x),
        Scheme2Variant::V2 => EncodingSpec::Scheme2V2.encode(x),
    }
}

/// The `place`-th decimal digit of `x` (place 1 = tenths), truncating.
/// `x = 1.0` has every decimal digit zero.
pub fn decimal_digit(x: f64, place: u32) -> u8 {
    assert!(place >= 1, "decimal places start at 1");
    if place > DIGIT_PRECISION {
        return 0;
    }
    decimal_digits(x).1[place as usize - 1]
}

/// Ones bit and the first twelve decimal digits of `x ∈ [0, 1]`.
fn decimal_digits(x: f64) -> (bool, [u8; DIGIT_PRECISION as usize]) {
    let scale = 10u64.pow(DIGIT_PRECISION);
    let fixed = (x.clamp(0.0, 1.0) * scale as f64).round() as u64;
    let ones = fixed >= scale;
    let mut frac = fixed % scale;
    let mut digits = [0u8; DIGIT_PRECISION as usize];
    for d in digits.iter_mut().rev() {
        *d = (frac % 10) as u8;
        frac /= 10;
    }
    (ones, digits)
}

/// Digit pairs {0,1}..{8,9} to levels 0..4.
fn quantize_pair(digit: u8) -> u8 {
    digit / 2
}

/// {0-3} → 0, {4-6} → 1, {7-9} → 2.
fn quantize_triple(digit: u8) -> u8 {
    match digit {
        0..=3 => 0,
        4..=6 => 1,
        _ => 2,
    }
}

fn push_unary(out: &mut BitVec, ones: u8, width: u8) {
    debug_assert!(ones <= width);
    for i in 0..width {
        out.push(i >= width - ones);
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(ScmError::invalid(format!("value {x} outside [0, 1]")))
    }
}

/// Per-sample encoded inputs for a whole design matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInputs {
    pub rows: Vec<BitVec>,
    pub d_enc: usize,
    /// Values outside `[0, 1]` that were clamped before encoding.
    pub clamped: usize,
}

/// Encodes every row of `x`, concatenating per-feature codes in feature
/// order. Finite values outside `[0, 1]` (test rows beyond the training
/// normalization range) are clamped and counted; non-finite values are
/// rejected with their position.
pub fn encode_matrix(x: &Matrix, spec: EncodingSpec) -> Result<EncodedInputs> {
    let spec = spec.validate()?;
    let d_enc = x.cols() * spec.bits_per_input();
    let mut clamped = 0;
    let mut rows = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let mut bits = BitVec::with_capacity(d_enc);
        for (c, &v) in x.row(r).iter().enumerate() {
            if !v.is_finite() {
                return Err(ScmError::invalid(format!(
                    "row {r}, column {c}: non-finite value {v}"
                )));
            }
            let v = if (0.0..=1.0).contains(&v) {
                v
            } else {
                clamped += 1;
                v.clamp(0.0, 1.0)
            };
            spec.encode_into(v, &mut bits)
                .map_err(|e| ScmError::invalid(format!("row {r}, column {c}: {e}")))?;
        }
        rows.push(bits);
    }
    if clamped > 0 {
        warn!("clamped {clamped} input values into [0, 1] before encoding");
    }
    Ok(EncodedInputs {
        rows,
        d_enc,
        clamped,
    })
}
