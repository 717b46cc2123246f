//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scm_core::scm::{random_model, ActivationKind, LayerSpec};
use scm_core::{BitVec, EncodingSpec, ScmModel};

pub fn random_bits(len: usize, seed: u64) -> BitVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BitVec::from_bools(&(0..len).map(|_| rng.random()).collect::<Vec<_>>())
}

pub fn random_rows(rows: usize, len: usize, seed: u64) -> Vec<BitVec> {
    (0..rows)
        .map(|i| random_bits(len, seed.wrapping_add(i as u64)))
        .collect()
}

/// Named model shapes matching the benchmark datasets' hardware configurations.
pub fn shapes() -> Vec<(&'static str, ScmModel)> {
    let layer = |max_nodes, activation| LayerSpec {
        max_nodes,
        activation,
    };
    let step = ActivationKind::StepPaper;
    let sign = ActivationKind::SignPaper;
    vec![
        (
            "db1_60_step",
            random_model(EncodingSpec::Scheme2V2, 1, &[layer(60, step)], 1, 1).unwrap(),
        ),
        (
            "db1_40x3_sign",
            random_model(
                EncodingSpec::Scheme2V2,
                1,
                &[layer(40, sign), layer(40, sign), layer(40, sign)],
                1,
                2,
            )
            .unwrap(),
        ),
        (
            "db2_60_step",
            random_model(
                EncodingSpec::Scheme1 { places: 3 },
                2,
                &[layer(60, step)],
                1,
                3,
            )
            .unwrap(),
        ),
        (
            "db3_20_sign",
            random_model(EncodingSpec::Scheme2V1, 36, &[layer(20, sign)], 1, 4).unwrap(),
        ),
    ]
}
