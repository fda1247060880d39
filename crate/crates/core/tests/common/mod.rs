//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use hyperfact::factors::{self, random_unitary, FactorPair};
use hyperfact::hyper;
use hyperfact::matcore::{c, op_norm, CMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Random pure `m`-hypercontraction: a scaled Gaussian matrix, rejected
/// until `classify` accepts it.
pub fn pure_hypercontraction(rng: &mut impl Rng, dim: usize, m: usize) -> CMatrix {
    loop {
        let a = gaussian(rng, dim, dim);
        let s: f64 = rng.random_range(0.15..0.8);
        let t = a.scale(s / op_norm(&a));
        let report = hyper::classify(&t, m, 1e-9).unwrap();
        if report.is_hypercontraction(m) && report.is_pure {
            return t;
        }
    }
}

/// `V (A ⊕ D) V*` with `A` a pure `m`-hypercontraction and `D` a diagonal
/// unitary of size `unitary_dim`.
pub fn mixed_hypercontraction(rng: &mut impl Rng, pure_dim: usize, unitary_dim: usize, m: usize) -> CMatrix {
    let a = pure_hypercontraction(rng, pure_dim, m);
    let n = pure_dim + unitary_dim;
    let mut t = CMatrix::zeros(n, n);
    t.view_mut((0, 0), (pure_dim, pure_dim)).copy_from(&a);
    for j in 0..unitary_dim {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        t[(pure_dim + j, pure_dim + j)] = Complex64::from_polar(1.0, theta);
    }
    let v = random_unitary(rng, n);
    &v * t * v.adjoint()
}

/// Random `m`-hypercontractions of dimension at most `max_dim`, about a
/// third of them non-pure.
pub fn hypercontractions(seed: u64, count: usize, m: usize, max_dim: usize) -> Vec<CMatrix> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let dim = rng.random_range(1..=max_dim);
            if i % 3 == 2 && dim >= 2 {
                let u = rng.random_range(1..dim);
                mixed_hypercontraction(&mut rng, dim - u, u, m)
            } else {
                pure_hypercontraction(&mut rng, dim, m)
            }
        })
        .collect()
}

/// Generated pure members of `F_m` whose dimension lies in `dims`.
pub fn pure_members(seed: u64, count: usize, m: usize, dims: std::ops::RangeInclusive<usize>) -> Vec<FactorPair> {
    let mut out = Vec::new();
    let mut s = seed;
    while out.len() < count {
        let base = 1 + (s % 3) as usize;
        let degree = 1 + (s / 3 % 3) as usize;
        let pair = factors::generate_fm_pair(s, base, m, degree).unwrap();
        if dims.contains(&pair.dim()) {
            out.push(pair);
        }
        s += 1;
    }
    out
}

/// Members with a non-pure product: compressed model pair plus a diagonal
/// unitary pair, conjugated by a random unitary.
pub fn mixed_members(seed: u64, count: usize, m: usize) -> Vec<FactorPair> {
    (0..count as u64)
        .map(|i| {
            let s = seed + i;
            factors::generate_fm_pair_mixed(s, 1 + (s % 2) as usize, m, 1 + (s % 3) as usize, 1 + (s % 2) as usize)
                .unwrap()
        })
        .collect()
}

/// A commuting pair of diagonal unitaries.
pub fn unitary_pair(seed: u64, dim: usize) -> FactorPair {
    let mut rng = rng(seed);
    let mut angles = || -> Vec<Complex64> {
        (0..dim).map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))).collect()
    };
    let a = angles();
    let b = angles();
    let t1 = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(a));
    let t2 = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(b));
    FactorPair::new(t1, t2, 1e-9).unwrap()
}

/// Members of `F_2` from the 2x2 family with small `b`.
pub fn szego_members() -> Vec<FactorPair> {
    [(0.5, 0.6, 0.0), (0.5, 0.6, 0.05), (0.3, 0.8, 0.0), (0.7, 0.75, 0.02)]
        .iter()
        .map(|&(r, a, b)| factors::szego_counterexample(r, a, b).unwrap().pair)
        .filter(|p| factors::check_fm(p, 2, 1e-9).unwrap().is_member)
        .collect()
}
