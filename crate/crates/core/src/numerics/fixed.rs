use std::fmt;

/// Number of fractional bits in the Q7.25 format.
pub const FRAC_BITS: u32 = 25;

const SCALE: f64 = (1u64 << FRAC_BITS) as f64;

/// Signed 32-bit fixed point with 7 integer bits and 25 fractional bits.
///
/// Holds every value on the output path of the inference datapath: mechanism
/// weights and intercepts, node biases, readout weights and the final output.
/// Representable range is `[-64, 64 - 2^-25]`.
#[allow(non_camel_case_types)]
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FixedQ7_25(i32);

impl FixedQ7_25 {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1 << FRAC_BITS);
    pub const MIN: Self = Self(i32::MIN);
    pub const MAX: Self = Self(i32::MAX);
    /// Smallest positive step, `2^-25`.
    pub const EPSILON: f64 = 1.0 / SCALE;

    pub const fn from_raw(raw: i32) -> Self {
        Self(raw)
    }

    pub const fn raw(self) -> i32 {
        self.0
    }

    /// Round-to-nearest-even onto the 2^-25 grid, saturating outside the
    /// representable range. The flag is `true` when saturation happened.
    pub fn from_real_checked(x: f64) -> (Self, bool) {
        debug_assert!(!x.is_nan(), "fixed-point conversion of NaN");
        let scaled = (x * SCALE).round_ties_even();
        if scaled > i32::MAX as f64 {
            (Self::MAX, true)
        } else if scaled < i32::MIN as f64 {
            (Self::MIN, true)
        } else if scaled.is_nan() {
            (Self::ZERO, true)
        } else {
            (Self(scaled as i32), false)
        }
    }

    pub fn from_real(x: f64) -> Self {
        Self::from_real_checked(x).0
    }

    pub fn to_real(self) -> f64 {
        self.0 as f64 / SCALE
    }

    /// Two's complement negation; the minimum value saturates to the maximum.
    pub fn saturating_neg(self) -> Self {
        Self(self.0.checked_neg().unwrap_or(i32::MAX))
    }

    pub fn saturating_add(self, rhs: Self) -> Self {
        Self(self.0.saturating_add(rhs.0))
    }

    /// Exact decimal expansion of the stored value (at most 25 fractional
    /// digits, trailing zeros trimmed).
    pub fn to_decimal_string(self) -> String {
        let neg = self.0 < 0;
        let mag = (self.0 as i64).unsigned_abs();
        let int_part = mag >> FRAC_BITS;
        let frac = (mag & ((1 << FRAC_BITS) - 1)) as u128;
        let mut out = String::new();
        if neg {
            out.push('-');
        }
        out.push_str(&int_part.to_string());
        if frac != 0 {
            // frac / 2^25 == frac * 5^25 / 10^25
            let digits = frac * 5u128.pow(FRAC_BITS);
            let s = format!("{digits:025}");
            out.push('.');
            out.push_str(s.trim_end_matches('0'));
        }
        out
    }
}

impl fmt::Debug for FixedQ7_25 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FixedQ7_25({} = {})", self.0, self.to_decimal_string())
    }
}

impl fmt::Display for FixedQ7_25 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

/// 64-bit accumulator at the Q7.25 scale (25 fractional bits).
///
/// Pre-activations and output sums are accumulated here; only the final
/// output is narrowed back to [`FixedQ7_25`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct WideAcc(i64);

impl WideAcc {
    pub const ZERO: Self = Self(0);

    pub const fn from_raw(raw: i64) -> Self {
        Self(raw)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    /// An integer count shifted left by `shift`, promoted to the Q7.25 scale.
    pub fn from_shifted_int(value: i64, shift: u8) -> Self {
        Self((value << shift) << FRAC_BITS)
    }

    pub fn add_fixed(&mut self, v: FixedQ7_25) {
        self.0 += v.raw() as i64;
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn to_real(self) -> f64 {
        self.0 as f64 / SCALE
    }

    /// Narrow to Q7.25, saturating at the format limits.
    pub fn to_fixed(self) -> FixedQ7_25 {
        FixedQ7_25(self.0.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }
}

impl std::ops::Add<FixedQ7_25> for WideAcc {
    type Output = WideAcc;

    fn add(mut self, rhs: FixedQ7_25) -> WideAcc {
        self.add_fixed(rhs);
        self
    }
}

impl std::ops::AddAssign<FixedQ7_25> for WideAcc {
    fn add_assign(&mut self, rhs: FixedQ7_25) {
        self.add_fixed(rhs);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn from_real_examples() {
        assert_eq!(FixedQ7_25::from_real(0.0).raw(), 0);
        assert_eq!(FixedQ7_25::from_real(1.0).raw(), 33_554_432);
        assert_eq!(FixedQ7_25::from_real(-1.0).raw(), -33_554_432);
        assert_eq!(FixedQ7_25::EPSILON, 2f64.powi(-25));
        // half a step is the quoted resolution
        assert!((FixedQ7_25::EPSILON / 2.0 - 1.49e-8).abs() < 1e-10);
    }

    #[test]
    fn from_real_rounds_ties_to_even() {
        let half = FixedQ7_25::EPSILON / 2.0;
        assert_eq!(FixedQ7_25::from_real(half).raw(), 0);
        assert_eq!(FixedQ7_25::from_real(3.0 * half).raw(), 2);
        assert_eq!(FixedQ7_25::from_real(-3.0 * half).raw(), -2);
        assert_eq!(FixedQ7_25::from_real(1.4 * FixedQ7_25::EPSILON).raw(), 1);
    }

    #[test]
    fn from_real_saturates_and_flags() {
        assert_eq!(FixedQ7_25::from_real_checked(64.0), (FixedQ7_25::MAX, true));
        assert_eq!(
            FixedQ7_25::from_real_checked(-64.0),
            (FixedQ7_25::MIN, false)
        );
        assert_eq!(FixedQ7_25::from_real_checked(-1e9), (FixedQ7_25::MIN, true));
        let (top, sat) = FixedQ7_25::from_real_checked(64.0 - FixedQ7_25::EPSILON);
        assert_eq!((top, sat), (FixedQ7_25::MAX, false));
    }

    #[test]
    fn negation_examples() {
        assert_eq!(
            FixedQ7_25::from_raw(33_554_432).saturating_neg().raw(),
            -33_554_432
        );
        assert_eq!(FixedQ7_25::ZERO.saturating_neg(), FixedQ7_25::ZERO);
        assert_eq!(FixedQ7_25::from_raw(1).saturating_neg().raw(), -1);
        assert_eq!(FixedQ7_25::MIN.saturating_neg(), FixedQ7_25::MAX);
    }

    #[test]
    fn decimal_strings_are_exact() {
        assert_eq!(FixedQ7_25::ONE.to_decimal_string(), "1");
        assert_eq!(FixedQ7_25::from_real(-0.5).to_decimal_string(), "-0.5");
        assert_eq!(
            FixedQ7_25::from_raw(1).to_decimal_string(),
            "0.0000000298023223876953125"
        );
        assert_eq!(FixedQ7_25::MIN.to_decimal_string(), "-64");
    }

    #[test]
    fn wide_acc_shift_promotion() {
        let acc = WideAcc::from_shifted_int(2, 3);
        assert_eq!(acc.raw(), 16 << FRAC_BITS);
        assert_eq!(acc.to_real(), 16.0);
        let big = WideAcc::from_shifted_int(1024, 7);
        assert_eq!(big.to_fixed(), FixedQ7_25::MAX);
        assert_eq!(
            WideAcc::from_shifted_int(-1024, 7).to_fixed(),
            FixedQ7_25::MIN
        );
    }

    #[test]
    fn round_trip_random_raws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let raw: i32 = rng.random();
            let v = FixedQ7_25::from_raw(raw);
            assert_eq!(FixedQ7_25::from_real(v.to_real()), v);
        }
    }

    proptest! {
        #[test]
        fn neg_is_involution(raw in (i32::MIN + 1)..=i32::MAX) {
            let v = FixedQ7_25::from_raw(raw);
            prop_assert_eq!(v.saturating_neg().saturating_neg(), v);
        }

        #[test]
        fn decimal_string_parses_back(raw in any::<i32>()) {
            let v = FixedQ7_25::from_raw(raw);
            let parsed: f64 = v.to_decimal_string().parse().unwrap();
            prop_assert_eq!(FixedQ7_25::from_real(parsed), v);
        }
    }
}
