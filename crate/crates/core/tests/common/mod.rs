//! Randomized checks shared by the property tests and the acceptance run.
//! Every `check_*` returns a residual that is at most ~1e-9 when the
//! statement holds: `max(0, lhs - rhs)` for inequalities and a relative
//! difference for identities.
#![allow(dead_code)]

use partdec::dsp::{build_lambda, lambda_block_sum, DspDecomposition};
use partdec::experiments::random_nonrandomized_instance;
use partdec::linalg::{
    c, hs_norm, identity, kron, purified_distance, trace_norm_herm, weighted_two_norm, CMat, CVec, DensityOperator,
    Layout, Normalization, Operator,
};
use partdec::sampling::{ginibre, haar_matrix, random_mixed_state, random_pure_state, RngStream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const AUX_TOL: f64 = 1e-9;

pub fn rng(seed: u64) -> ChaCha8Rng {
    RngStream::new(seed, 0).rng()
}

pub fn hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = ginibre(d, d, rng);
    (&g + g.adjoint()) * c(0.5)
}

/// Full-rank positive operator with a random trace in (0, 1].
pub fn subnormalized(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let t: f64 = rng.random_range(0.2..=1.0);
    random_mixed_state(d, d, rng) * c(t)
}

fn op(m: CMat, layout: &[(&str, usize)]) -> Operator {
    Operator::new(m, Layout::new(layout.iter().copied()).unwrap()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn over(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).max(0.0) / rhs.abs().max(1.0)
}

/// `‖ξ^{AB}‖_2 ≤ √d_A ‖ξ^B‖_2` for positive `ξ`.
pub fn check_purity(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (da, db) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let xi = op(random_mixed_state(da * db, rng.random_range(1..=da * db), &mut rng), &[("A", da), ("B", db)]);
    let xb = xi.partial_trace(&["B"]).unwrap();
    over(hs_norm(xi.matrix()), (da as f64).sqrt() * hs_norm(xb.matrix()))
}

/// `‖X‖_1 ≤ √Tr γ · ‖X‖_{2,γ}` for Hermitian `X` and positive `γ`.
pub fn check_holder(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let d = rng.random_range(1..=6);
    let x = op(hermitian(d, &mut rng), &[("A", d)]);
    let scale: f64 = rng.random_range(0.1..3.0);
    let gamma = DensityOperator::positive(op(random_mixed_state(d, d, &mut rng) * c(scale), &[("A", d)])).unwrap();
    over(trace_norm_herm(x.matrix()), gamma.trace().sqrt() * weighted_two_norm(&x, &gamma).unwrap())
}

fn sub_state(m: CMat, layout: &[(&str, usize)]) -> DensityOperator {
    DensityOperator::new(op(m, layout), Normalization::Subnormalized).unwrap()
}

/// Purified distance: triangle inequality, monotonicity under partial trace,
/// the pure-state formula and the trace-distance sandwich. Returns the worst
/// residual.
pub fn check_purified_distance(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (da, db) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let l = [("A", da), ("B", db)];
    let n = da * db;
    let rho = sub_state(subnormalized(n, &mut rng), &l);
    let sigma = sub_state(subnormalized(n, &mut rng), &l);
    let tau = sub_state(subnormalized(n, &mut rng), &l);
    let p = |x: &DensityOperator, y: &DensityOperator| purified_distance(x, y).unwrap();

    let triangle = over(p(&rho, &sigma), p(&rho, &tau) + p(&tau, &sigma));
    let mono = over(p(&rho.partial_trace(&["A"]).unwrap(), &sigma.partial_trace(&["A"]).unwrap()), p(&rho, &sigma));

    let diff = trace_norm_herm(&(rho.matrix() - sigma.matrix()));
    let lower = over(0.5 * diff, p(&rho, &sigma));
    let upper = over(p(&rho, &sigma), (2.0 * diff).sqrt());

    let psi = random_pure_state(n, &mut rng) * c(rng.random_range(0.3..=1.0f64).sqrt());
    let phi = random_pure_state(n, &mut rng);
    let pure = |v: &CVec| sub_state(v * v.adjoint(), &l);
    let overlap = psi.dotc(&phi).norm();
    let formula = (p(&pure(&psi), &pure(&phi)) - (1.0 - overlap * overlap).max(0.0).sqrt()).abs();

    [triangle, mono, lower, upper, formula].into_iter().fold(0.0, f64::max)
}

/// `Tr[XY] = Tr[(X ⊗ Y) F]` with `F` the swap.
pub fn check_swap_trick(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let d = rng.random_range(1..=5);
    let (x, y) = (ginibre(d, d, &mut rng), ginibre(d, d, &mut rng));
    let mut swap = CMat::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            swap[(i * d + j, j * d + i)] = c(1.0);
        }
    }
    let lhs = (&x * &y).trace();
    let rhs = (kron(&x, &y) * swap).trace();
    (lhs - rhs).norm() / rhs.norm().max(1.0)
}

fn phi_ket(d: usize) -> CVec {
    let mut v = CVec::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = c(1.0 / (d as f64).sqrt());
    }
    v
}

/// `Tr[X^T Y] = √(d_A d_B) ⟨Φ|^{BB'} (X ⊗ Y) |Φ⟩^{AA'}` for `X, Y: A → B`.
pub fn check_pt_trace(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (da, db) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let (x, y) = (ginibre(db, da, &mut rng), ginibre(db, da, &mut rng));
    let lhs = (x.transpose() * &y).trace();
    let rhs = (phi_ket(db).adjoint() * kron(&x, &y) * phi_ket(da))[(0, 0)] * c(((da * db) as f64).sqrt());
    (lhs - rhs).norm() / rhs.norm().max(1.0)
}

/// `‖ϱ‖_2² = Σ_{jk} ‖Π_j ϱ Π_k‖_2²` for a random complete family of
/// orthogonal projectors.
pub fn check_proj_hsn(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let d = rng.random_range(1..=8);
    let rho = random_mixed_state(d, rng.random_range(1..=d), &mut rng);
    let u = haar_matrix(d, &mut rng);
    // random contiguous groups of the columns of u
    let mut cuts = vec![0];
    for i in 1..d {
        if rng.random_bool(0.5) {
            cuts.push(i);
        }
    }
    cuts.push(d);
    let projectors: Vec<CMat> = cuts
        .windows(2)
        .map(|w| {
            let cols = u.columns(w[0], w[1] - w[0]);
            &cols * cols.adjoint()
        })
        .collect();
    let total: CMat = projectors.iter().fold(CMat::zeros(d, d), |acc, p| acc + p);
    let complete = (total - identity(d)).norm();
    let rho = &rho;
    let sum: f64 = projectors
        .iter()
        .flat_map(|pj| projectors.iter().map(move |pk| hs_norm(&(pj * rho * pk)).powi(2)))
        .sum();
    rel(sum, hs_norm(&rho).powi(2)).max(complete)
}

/// `‖ρ - π^A ⊗ ρ^R‖_2² ≤ ‖ρ‖_2²` and `‖ρ - C^A(ρ)‖_2² ≤ ‖ρ‖_2²`.
pub fn check_op_var(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (da, dr) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let n = da * dr;
    let scale: f64 = rng.random_range(0.1..3.0);
    let rho = op(random_mixed_state(n, rng.random_range(1..=n), &mut rng) * c(scale), &[("A", da), ("R", dr)]);
    let norm = hs_norm(rho.matrix()).powi(2);
    let rho_r = rho.partial_trace(&["R"]).unwrap();
    let pi_r = kron(&(identity(da) * c(1.0 / da as f64)), rho_r.matrix());
    let mut dephased = CMat::zeros(n, n);
    for i in 0..da {
        let mut p = CMat::zeros(da, da);
        p[(i, i)] = c(1.0);
        let p = kron(&p, &identity(dr));
        dephased += &p * rho.matrix() * &p;
    }
    let a = over(hs_norm(&(rho.matrix() - pi_r)).powi(2), norm);
    let b = over(hs_norm(&(rho.matrix() - dephased)).powi(2), norm);
    a.max(b)
}

/// Relative error between `‖Λ(Ψ,T)‖²_{2,ς}` and its block-sum expression on
/// a generated instance with a random full-rank `ς` on `R ⊗ E`.
pub fn check_block_sum(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let inst = random_nonrandomized_instance(&mut rng).unwrap();
    let dr = inst.psi.layout().dim_of("R").unwrap();
    let de = inst.channel.output_dim();
    let sigma = DensityOperator::normalized(op(random_mixed_state(dr * de, dr * de, &mut rng), &[("R", dr), ("E", de)]))
        .unwrap();
    let lambda = build_lambda(inst.psi.operator(), inst.channel.choi(), "A", &inst.decomp).unwrap();
    let direct = weighted_two_norm(&lambda, &sigma).unwrap().powi(2);
    let blocks = lambda_block_sum(inst.psi.operator(), inst.channel.choi(), &sigma, "A", &inst.decomp).unwrap();
    (direct - blocks).abs() / direct.abs().max(f64::MIN_POSITIVE)
}

/// A random decomposition with at most three blocks of dimensions at most 3.
pub fn random_decomposition(rng: &mut ChaCha8Rng) -> DspDecomposition {
    let jn = rng.random_range(1..=3);
    DspDecomposition::new((0..jn).map(|_| (rng.random_range(1..=3), rng.random_range(1..=3))).collect()).unwrap()
}
