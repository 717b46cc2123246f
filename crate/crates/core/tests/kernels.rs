use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scm_core::fpga::{domain_dot, ones_count_dot, xnor_count};
use scm_core::scm::InputDomain;
use scm_core::BitVec;

fn pm1(bit: bool) -> i64 {
    if bit {
        1
    } else {
        -1
    }
}

fn dense_xnor(a: &BitVec, w: &BitVec) -> i64 {
    a.iter().zip(w.iter()).map(|(x, y)| pm1(x) * pm1(y)).sum()
}

fn dense_ones(a: &BitVec, w: &BitVec) -> i64 {
    a.iter()
        .zip(w.iter())
        .map(|(x, y)| i64::from(x) * pm1(y))
        .sum()
}

fn from_u32(len: usize, v: u32) -> BitVec {
    BitVec::from_words(len, vec![u64::from(v)]).unwrap()
}

#[test]
fn all_pairs_up_to_ten_bits() {
    for len in 1..=10usize {
        let vectors: Vec<BitVec> = (0..1u32 << len).map(|v| from_u32(len, v)).collect();
        for a in &vectors {
            for w in &vectors {
                assert_eq!(xnor_count(a, w).unwrap(), dense_xnor(a, w));
                assert_eq!(ones_count_dot(a, w).unwrap(), dense_ones(a, w));
            }
        }
    }
}

#[test]
fn every_input_up_to_sixteen_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for len in 11..=16usize {
        let full = (1u32 << len) - 1;
        let mut weights: Vec<u32> = vec![0, full];
        weights.extend((0..len).map(|i| 1 << i));
        weights.extend((0..24).map(|_| rng.random::<u32>() & full));
        for &wv in &weights {
            let w = from_u32(len, wv);
            for av in 0..=full {
                let a = from_u32(len, av);
                assert_eq!(xnor_count(&a, &w).unwrap(), dense_xnor(&a, &w));
                assert_eq!(ones_count_dot(&a, &w).unwrap(), dense_ones(&a, &w));
            }
        }
    }
}

#[test]
fn random_long_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1024);
    for _ in 0..100_000 {
        let len = rng.random_range(1..=1024);
        let a: Vec<bool> = (0..len).map(|_| rng.random()).collect();
        let w: Vec<bool> = (0..len).map(|_| rng.random()).collect();
        let (a, w) = (BitVec::from_bools(&a), BitVec::from_bools(&w));
        assert_eq!(xnor_count(&a, &w).unwrap(), dense_xnor(&a, &w));
        assert_eq!(ones_count_dot(&a, &w).unwrap(), dense_ones(&a, &w));
        assert_eq!(
            domain_dot(&a, &w, InputDomain::PlusMinusOne).unwrap(),
            dense_xnor(&a, &w)
        );
        assert_eq!(
            domain_dot(&a, &w, InputDomain::ZeroOne).unwrap(),
            dense_ones(&a, &w)
        );
    }
}

#[test]
fn worked_examples() {
    let signs = |v: &[i32]| BitVec::from_bools(&v.iter().map(|&x| x > 0).collect::<Vec<_>>());
    assert_eq!(
        xnor_count(&signs(&[-1, 1, 1, -1]), &signs(&[-1, 1, -1, -1])).unwrap(),
        2
    );
    assert_eq!(
        ones_count_dot(&BitVec::parse("1011").unwrap(), &signs(&[-1, 1, -1, 1])).unwrap(),
        -1
    );
}
