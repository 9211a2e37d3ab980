use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{c, CMat, CVec, C64};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(d, d, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

pub fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let m = random_matrix(d, rng);
    (&m + m.adjoint()) * c(0.5)
}

pub fn random_density(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = random_matrix(d, rng);
    let p = &g * g.adjoint();
    let tr = p.trace().re;
    p / c(tr)
}

pub fn random_ket(d: usize, rng: &mut ChaCha8Rng) -> CVec {
    let v = CVec::from_fn(d, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let n = v.norm();
    v / c(n)
}

pub fn basis(d: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(d);
    v[i] = c(1.0);
    v
}

pub fn max_entangled(d: usize) -> CVec {
    let mut v = CVec::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = c(1.0 / (d as f64).sqrt());
    }
    v
}
