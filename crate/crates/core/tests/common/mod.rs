#![allow(dead_code)]

use num_complex::Complex64;
use steercov::rng::{domain, Stream};
use steercov::{BasisSpec, CoeffVec, CtfParams, Filter, RadialWeightVec};
use steercov::oracles::OracleInstance;

pub fn random_coeffs(basis: &BasisSpec, s: &mut Stream) -> CoeffVec {
    let raw = CoeffVec::from_vec(
        (0..basis.len())
            .map(|_| Complex64::new(s.normal(), s.normal()))
            .collect(),
    );
    basis.symmetrize(&raw)
}

/// Random instance with `groups` CTF groups and image `i` in group `i mod groups`.
pub fn random_instance(
    basis: &BasisSpec,
    count: usize,
    groups: usize,
    sigma2: f64,
    seed: u64,
) -> OracleInstance {
    let mut s = Stream::new(seed, domain::TEST, 0);
    let coeffs = (0..count).map(|_| random_coeffs(basis, &mut s)).collect();
    let px = 4.0 * 64.0 / basis.grid_size() as f64;
    let group_weights: Vec<RadialWeightVec> = (0..groups)
        .map(|_| Filter::Ctf(CtfParams::new(s.uniform_range(1.0, 4.0), px)).weights(basis))
        .collect();
    OracleInstance {
        coeffs,
        group_of: (0..count).map(|i| i % groups).collect(),
        group_weights,
        sigma2,
    }
}

pub fn block_rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let norm: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if norm == 0.0 {
        diff.sqrt()
    } else {
        (diff / norm).sqrt()
    }
}
