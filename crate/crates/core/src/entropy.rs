//! One-shot conditional entropies in bits.
//!
//! `H_min(A|B)_ρ` with an optimized conditioner is the value of the SDP
//! `min { Tr σ : I^A ⊗ σ ≥ ρ }`, solved here by a primal-dual interior point
//! method (HKM direction with a Mehrotra corrector) on the pair
//!
//! ```text
//! max Tr[ρ X]  s.t.  Tr_A X = I_B, X ≥ 0
//! min Tr[σ]    s.t.  I_A ⊗ σ - ρ = S ≥ 0
//! ```
//!
//! Every iterate yields a feasible dual point (after a diagonal shift) and a
//! feasible primal point (after rescaling), so the returned interval always
//! contains the exact value.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    c, eigh, hermitian_part, herm_fn, identity, kron, lambda_max, lambda_min, weighted_two_norm, CMat, CVec,
    DensityOperator, Layout, Operator, TOL,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    /// `log2(dual / primal)` at termination.
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct EntropyResult {
    pub value: f64,
    /// Certified interval containing the exact value.
    pub lower: f64,
    pub upper: f64,
    pub conditioner: Option<DensityOperator>,
    pub certificate: Option<Certificate>,
}

impl EntropyResult {
    fn exact(value: f64, conditioner: Option<DensityOperator>) -> Self {
        Self { value, lower: value, upper: value, conditioner, certificate: None }
    }
}

/// Reorder `rho` so that the conditioning factors come last.
fn split(rho: &Operator, cond: &[&str]) -> Result<(CMat, usize, usize, Layout)> {
    let a = rho.layout().complement(cond)?;
    let b = rho.layout().select(cond)?;
    let mut names: Vec<&str> = a.names().collect();
    names.extend(cond.iter().copied());
    let m = rho.reorder(&names)?.into_matrix();
    Ok((m, a.dim(), b.dim(), b))
}

fn conditioner_names(sigma: &DensityOperator) -> Vec<&str> {
    sigma.layout().names().collect()
}

fn check_conditioner(rho: &Operator, sigma: &DensityOperator) -> Result<()> {
    for (name, d) in sigma.layout().factors() {
        if rho.layout().dim_of(name)? != *d {
            return Err(Error::Dimension(format!("conditioner factor `{name}` has dimension {d}")));
        }
    }
    Ok(())
}

fn full_rank_inverse_root(sigma: &CMat, p: f64) -> Result<CMat> {
    let min = lambda_min(sigma);
    if min <= TOL.full_rank {
        return Err(Error::SingularConditioner(min));
    }
    Ok(herm_fn(sigma, |v| v.powf(p)))
}

/// `-log λ_max((I ⊗ ς)^{-1/2} ρ (I ⊗ ς)^{-1/2})`.
pub fn h_min_fixed(rho: &Operator, sigma: &DensityOperator) -> Result<EntropyResult> {
    check_conditioner(rho, sigma)?;
    let (m, da, _, _) = split(rho, &conditioner_names(sigma))?;
    let w = kron(&identity(da), &full_rank_inverse_root(sigma.matrix(), -0.5)?);
    let top = lambda_max(&hermitian_part(&(&w * m * &w)));
    Ok(EntropyResult::exact(-top.log2(), Some(sigma.clone())))
}

/// `log ‖√ρ √(I ⊗ ς)‖_1²`.
pub fn h_max_fixed(rho: &Operator, sigma: &DensityOperator) -> Result<EntropyResult> {
    check_conditioner(rho, sigma)?;
    let (m, da, _, _) = split(rho, &conditioner_names(sigma))?;
    let root = kron(&identity(da), &herm_fn(sigma.matrix(), |v| v.max(0.0).sqrt()));
    let inner = hermitian_part(&(&root * m * &root));
    let fid = crate::linalg::trace_sqrt(&inner);
    Ok(EntropyResult::exact(2.0 * fid.log2(), Some(sigma.clone())))
}

/// `-log Tr[((I ⊗ ς)^{-1/4} ρ (I ⊗ ς)^{-1/4})²]`.
pub fn h2_fixed(rho: &Operator, sigma: &DensityOperator) -> Result<EntropyResult> {
    check_conditioner(rho, sigma)?;
    let n = weighted_two_norm(rho, sigma)?;
    Ok(EntropyResult::exact(-2.0 * n.log2(), Some(sigma.clone())))
}

#[derive(Clone, Copy, Debug)]
pub struct SdpOptions {
    /// Required certified gap in bits.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: TOL.sdp_gap, max_iterations: 100 }
    }
}

/// `H_min(A|B)_ρ` optimized over the conditioner; `cond` names the `B` factors.
pub fn h_min_opt(rho: &Operator, cond: &[&str], tol: f64) -> Result<EntropyResult> {
    h_min_opt_with(rho, cond, SdpOptions { tol, ..SdpOptions::default() })
}

pub fn h_min_opt_with(rho: &Operator, cond: &[&str], opts: SdpOptions) -> Result<EntropyResult> {
    let (m, da, db, b_layout) = split(rho, cond)?;
    let herr = crate::linalg::hermiticity_error(&m);
    if herr > TOL.hermiticity * m.norm().max(1.0) * 1e3 {
        return Err(Error::NotHermitian(herr));
    }
    let m = hermitian_part(&m);
    let tr = m.trace().re;
    let min = lambda_min(&m);
    if min < -TOL.psd * lambda_max(&m).abs().max(1.0) {
        return Err(Error::NotPositive(min));
    }
    if tr <= 0.0 {
        let sigma = DensityOperator::maximally_mixed(b_layout);
        return Ok(EntropyResult::exact(f64::INFINITY, Some(sigma)));
    }
    let shift = tr.log2();
    let normalized = &m / c(tr);
    if db == 1 {
        let v = -lambda_max(&normalized).log2() - shift;
        return Ok(EntropyResult::exact(v, Some(DensityOperator::maximally_mixed(b_layout))));
    }
    let sol = solve_hmin_sdp(&normalized, da, db, opts)?;
    let sigma_tr = sol.sigma.trace().re;
    let sigma = if sigma_tr > 0.0 {
        DensityOperator::normalized(Operator::new(hermitian_part(&(&sol.sigma / c(sigma_tr))), b_layout)?)?
    } else {
        DensityOperator::maximally_mixed(b_layout)
    };
    let lower = -sol.upper.log2() - shift;
    let upper = -sol.lower.log2() - shift;
    Ok(EntropyResult {
        value: 0.5 * (lower + upper),
        lower,
        upper,
        conditioner: Some(sigma),
        certificate: Some(Certificate { gap: upper - lower, iterations: sol.iterations }),
    })
}

/// `H_max(A|B)_ρ = -H_min(A|C)_ψ` for a purification `|ψ⟩^{ABC}` of `ρ`.
pub fn h_max_opt(rho: &Operator, cond: &[&str], tol: f64) -> Result<EntropyResult> {
    let (m, da, db, _) = split(rho, cond)?;
    let m = hermitian_part(&m);
    if m.trace().re > 1.0 + TOL.psd {
        return Err(Error::TraceExceedsOne(m.trace().re));
    }
    let (vals, vecs) = eigh(&m);
    let kept: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > TOL.psd * vals.last().copied().unwrap_or(0.0).max(1e-300)).collect();
    if kept.is_empty() {
        return Ok(EntropyResult::exact(f64::NEG_INFINITY, None));
    }
    let rank = kept.len();
    // |ψ⟩ = Σ_k √λ_k |v_k⟩^{AB} |k⟩^C, then trace out B
    let mut ket = CVec::zeros(da * db * rank);
    for (slot, &k) in kept.iter().enumerate() {
        let amp = vals[k].sqrt();
        for x in 0..da * db {
            ket[x * rank + slot] = vecs[(x, k)] * amp;
        }
    }
    let layout = Layout::new([("a", da), ("b", db), ("c", rank)])?;
    let ac = Operator::from_ket(&ket, layout)?.partial_trace(&["a", "c"])?;
    let r = h_min_opt(&ac, &["c"], tol)?;
    Ok(EntropyResult {
        value: -r.value,
        lower: -r.upper,
        upper: -r.lower,
        conditioner: None,
        certificate: r.certificate,
    })
}

struct SdpSolution {
    sigma: CMat,
    /// Certified bounds on the optimum `min Tr σ`.
    lower: f64,
    upper: f64,
    iterations: usize,
}

fn ptrace_a(m: &CMat, da: usize, db: usize) -> CMat {
    let mut out = CMat::zeros(db, db);
    for a in 0..da {
        out += m.view((a * db, a * db), (db, db));
    }
    out
}

fn lift_b(s: &CMat, da: usize) -> CMat {
    kron(&identity(da), s)
}

/// `(Y + Y^dag) / 2`.
fn sym(y: &CMat) -> CMat {
    hermitian_part(y)
}

/// Orthonormal real basis of Hermitian `d × d` matrices.
fn coords(h: &CMat) -> DVector<f64> {
    let d = h.nrows();
    let mut v = DVector::zeros(d * d);
    let mut k = 0;
    for s in 0..d {
        v[k] = h[(s, s)].re;
        k += 1;
    }
    let r2 = std::f64::consts::SQRT_2;
    for s in 0..d {
        for t in s + 1..d {
            v[k] = r2 * h[(s, t)].re;
            v[k + 1] = r2 * h[(s, t)].im;
            k += 2;
        }
    }
    v
}

fn from_coords(v: &DVector<f64>, d: usize) -> CMat {
    let mut h = CMat::zeros(d, d);
    let mut k = 0;
    for s in 0..d {
        h[(s, s)] = c(v[k]);
        k += 1;
    }
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    for s in 0..d {
        for t in s + 1..d {
            let z = crate::linalg::C64::new(v[k] * r2, v[k + 1] * r2);
            h[(s, t)] = z;
            h[(t, s)] = z.conj();
            k += 2;
        }
    }
    h
}

/// Basis element `k` as a list of `(s, t, value)` entries.
fn basis_entries(k: usize, d: usize) -> Vec<(usize, usize, crate::linalg::C64)> {
    if k < d {
        return vec![(k, k, c(1.0))];
    }
    let mut idx = d;
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    for s in 0..d {
        for t in s + 1..d {
            if idx == k {
                return vec![(s, t, c(r2)), (t, s, c(r2))];
            }
            if idx + 1 == k {
                let i = crate::linalg::C64::new(0.0, r2);
                return vec![(s, t, i), (t, s, -i)];
            }
            idx += 2;
        }
    }
    unreachable!("basis index out of range")
}

/// Matrix of `Δσ ↦ Tr_A[sym(X (I ⊗ Δσ) Z)]` in the real Hermitian basis.
fn schur_matrix(x: &CMat, z: &CMat, da: usize, db: usize) -> DMatrix<f64> {
    // K(s,t)[p,q] = Σ_{a,b} X[(a,p),(b,s)] Z[(b,t),(a,q)]
    let mut k = vec![CMat::zeros(db, db); db * db];
    for a in 0..da {
        for b in 0..da {
            let xab = x.view((a * db, b * db), (db, db));
            let zba = z.view((b * db, a * db), (db, db));
            for s in 0..db {
                for t in 0..db {
                    let kst = &mut k[s * db + t];
                    for p in 0..db {
                        let xps = xab[(p, s)];
                        for q in 0..db {
                            kst[(p, q)] += xps * zba[(t, q)];
                        }
                    }
                }
            }
        }
    }
    let n = db * db;
    let mut m = DMatrix::zeros(n, n);
    for beta in 0..n {
        let mut img = CMat::zeros(db, db);
        for (s, t, v) in basis_entries(beta, db) {
            img += &k[s * db + t] * v;
        }
        m.set_column(beta, &coords(&sym(&img)));
    }
    m
}

fn max_step(x: &CMat, dx: &CMat) -> f64 {
    let n = x.nrows();
    let scaled = match Cholesky::new(x.clone()) {
        Some(ch) => {
            let l = ch.l();
            let y = l.solve_lower_triangular(dx).unwrap_or_else(|| CMat::zeros(n, n));
            let w = l.solve_lower_triangular(&y.adjoint()).unwrap_or_else(|| CMat::zeros(n, n));
            hermitian_part(&w)
        }
        None => {
            let inv = herm_fn(x, |v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
            hermitian_part(&(&inv * dx * &inv))
        }
    };
    let lmin = lambda_min(&scaled);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn hpd_inverse(s: &CMat) -> CMat {
    match Cholesky::new(s.clone()) {
        Some(ch) => hermitian_part(&ch.inverse()),
        None => herm_fn(s, |v| 1.0 / v.max(1e-300)),
    }
}

/// Certified bounds on `min Tr σ`: the shifted dual point `σ + δI` and the
/// rescaled primal point `X / λ_max(Tr_A X)` are both feasible.
fn certified_bounds(rho: &CMat, x: &CMat, sigma: &CMat, da: usize, db: usize) -> (f64, f64) {
    let slack = lift_b(sigma, da) - rho;
    let delta = (-lambda_min(&hermitian_part(&slack))).max(0.0);
    let upper = sigma.trace().re + delta * db as f64;
    let marg = lambda_max(&hermitian_part(&ptrace_a(x, da, db)));
    let obj = (rho * x).trace().re;
    let lower = if marg > 0.0 { (obj / marg).max(0.0) } else { 0.0 };
    (lower, upper)
}

struct Tracker {
    lower: f64,
    upper: f64,
    sigma: CMat,
}

impl Tracker {
    fn update(&mut self, rho: &CMat, x: &CMat, sigma: &CMat, da: usize, db: usize) {
        let (lo, up) = certified_bounds(rho, x, sigma, da, db);
        if lo > self.lower {
            self.lower = lo;
        }
        if up < self.upper {
            self.upper = up;
            self.sigma = sigma.clone();
        }
    }

    fn gap(&self) -> f64 {
        if self.lower > 0.0 {
            (self.upper / self.lower).log2()
        } else {
            f64::INFINITY
        }
    }

    fn solution(self, iterations: usize) -> SdpSolution {
        SdpSolution { sigma: self.sigma, lower: self.lower, upper: self.upper, iterations }
    }
}

fn solve_hmin_sdp(rho: &CMat, da: usize, db: usize, opts: SdpOptions) -> Result<SdpSolution> {
    let n = da * db;
    let mut x = identity(n) * c(1.0 / da as f64);
    let mut sigma = identity(db) * c(lambda_max(rho).max(0.0) + 1.0);
    let mut s = lift_b(&sigma, da) - rho;
    let mut track = Tracker { lower: 0.0, upper: f64::INFINITY, sigma: sigma.clone() };
    // aim well below the requested gap, accept the requested gap on stagnation
    let target = 0.01 * opts.tol;
    let mut last_gap = f64::INFINITY;
    let mut stalled = 0;

    for it in 0..opts.max_iterations {
        track.update(rho, &x, &sigma, da, db);
        let gap = track.gap();
        if gap <= target {
            return Ok(track.solution(it));
        }
        stalled = if gap < 0.5 * last_gap { 0 } else { stalled + 1 };
        last_gap = last_gap.min(gap);
        if stalled >= 6 && gap <= opts.tol {
            return Ok(track.solution(it));
        }

        let z = hpd_inverse(&s);
        let mu = (&x * &s).trace().re / n as f64;
        let r_p = identity(db) - ptrace_a(&x, da, db);
        let r_d = rho - lift_b(&sigma, da) + &s;
        let lu = schur_matrix(&x, &z, da, db).lu();
        let xrz = ptrace_a(&sym(&(&x * &r_d * &z)), da, db);

        let solve = |g: &CMat| -> Option<(CMat, CMat, CMat)> {
            let rhs = ptrace_a(g, da, db) + &xrz - &r_p;
            let dsig = from_coords(&lu.solve(&coords(&hermitian_part(&rhs)))?, db);
            let ds = lift_b(&dsig, da) - &r_d;
            let dx = hermitian_part(&(g - sym(&(&x * &ds * &z))));
            Some((dsig, ds, dx))
        };

        let Some((_, ds_a, dx_a)) = solve(&(-&x)) else { break };
        let ap = max_step(&x, &dx_a).min(1.0);
        let ad = max_step(&s, &ds_a).min(1.0);
        let mu_aff = ((&x + &dx_a * c(ap)) * (&s + &ds_a * c(ad))).trace().re / n as f64;
        let centering = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let g = &z * c(centering * mu) - &x - sym(&(&dx_a * &ds_a * &z));
        let Some((dsig, ds, dx)) = solve(&g) else { break };
        let ap = (0.98 * max_step(&x, &dx)).min(1.0);
        let ad = (0.98 * max_step(&s, &ds)).min(1.0);
        x = hermitian_part(&(&x + &dx * c(ap)));
        sigma = hermitian_part(&(&sigma + &dsig * c(ad)));
        s = hermitian_part(&(&s + &ds * c(ad)));
    }

    track.update(rho, &x, &sigma, da, db);
    let gap = track.gap();
    if gap <= opts.tol {
        return Ok(track.solution(opts.max_iterations));
    }
    Err(Error::SdpNonConvergence { iterations: opts.max_iterations, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{max_entangled, random_density, random_ket, seeded};

    fn op(m: CMat, f: &[(&str, usize)]) -> Operator {
        Operator::new(m, Layout::new(f.iter().map(|(n, d)| (*n, *d))).unwrap()).unwrap()
    }

    fn state(m: CMat, name: &str) -> DensityOperator {
        DensityOperator::normalized(op(m, &[(name, 2)])).unwrap()
    }

    /// Largest λ with 2^{-λ} I ⊗ ς ≥ ρ, by bisection on the eigenvalue test.
    fn bisect_hmin(rho: &CMat, sigma: &CMat, da: usize) -> f64 {
        let (mut lo, mut hi) = (-20.0, 20.0);
        for _ in 0..200 {
            let mid: f64 = 0.5 * (lo + hi);
            let gap = kron(&identity(da), sigma) * c(2f64.powf(-mid)) - rho;
            if lambda_min(&gap) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn h_min_fixed_examples() {
        let mut rng = seeded(1);
        let sig = random_density(2, &mut rng);
        let rho = op(kron(&(identity(3) * c(1.0 / 3.0)), &sig), &[("A", 3), ("B", 2)]);
        let r = h_min_fixed(&rho, &state(sig.clone(), "B")).unwrap();
        assert!((r.value - 3f64.log2()).abs() < 1e-12);

        let phi = max_entangled(2);
        let phi = op(&phi * phi.adjoint(), &[("A", 2), ("B", 2)]);
        let r = h_min_fixed(&phi, &state(identity(2) * c(0.5), "B")).unwrap();
        assert!((r.value + 1.0).abs() < 1e-12);

        for _ in 0..5 {
            let rho = random_density(6, &mut rng);
            let s = random_density(2, &mut rng);
            let r = h_min_fixed(&op(rho.clone(), &[("A", 3), ("B", 2)]), &state(s.clone(), "B")).unwrap();
            assert!((r.value - bisect_hmin(&rho, &s, 3)).abs() < 1e-9);
        }

        let singular = state(CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(0.0)])), "B");
        assert!(matches!(h_min_fixed(&phi, &singular), Err(Error::SingularConditioner(_))));
    }

    #[test]
    fn h_min_opt_closed_cases() {
        let pi4 = op(identity(4) * c(0.25), &[("A", 4)]);
        let r = h_min_opt(&pi4, &[], 1e-7).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);

        let phi = max_entangled(2);
        let phi = op(&phi * phi.adjoint(), &[("A", 2), ("B", 2)]);
        let r = h_min_opt(&phi, &["B"], 1e-7).unwrap();
        assert!((r.value + 1.0).abs() < 1e-7, "{}", r.value);
        let cert = r.certificate.unwrap();
        assert!(cert.gap <= 1e-7);
        assert!(r.lower <= -1.0 + 1e-12 && r.upper >= -1.0 - 1e-12);

        let zero = op(CMat::zeros(4, 4), &[("A", 2), ("B", 2)]);
        assert_eq!(h_min_opt(&zero, &["B"], 1e-7).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn h_min_opt_matches_grid_search() {
        let mut rng = seeded(2);
        for _ in 0..3 {
            let rho = random_density(4, &mut rng);
            let r = h_min_opt(&op(rho.clone(), &[("A", 2), ("B", 2)]), &["B"], 1e-7).unwrap();
            // coarse Bloch-ball grid, then local refinement
            let sigma_of = |x: f64, y: f64, z: f64| {
                let mut s = identity(2) * c(0.5);
                s[(0, 0)] += c(0.5 * z);
                s[(1, 1)] -= c(0.5 * z);
                s[(0, 1)] += crate::linalg::C64::new(0.5 * x, -0.5 * y);
                s[(1, 0)] += crate::linalg::C64::new(0.5 * x, 0.5 * y);
                s
            };
            let eval = |p: [f64; 3]| {
                let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if n >= 0.999 {
                    return f64::NEG_INFINITY;
                }
                bisect_hmin(&rho, &sigma_of(p[0], p[1], p[2]), 2)
            };
            let mut best = ([0.0; 3], eval([0.0; 3]));
            let steps = 12;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let p = [
                            -0.99 + 1.98 * i as f64 / steps as f64,
                            -0.99 + 1.98 * j as f64 / steps as f64,
                            -0.99 + 1.98 * k as f64 / steps as f64,
                        ];
                        let v = eval(p);
                        if v > best.1 {
                            best = (p, v);
                        }
                    }
                }
            }
            let mut h = 0.1;
            while h > 1e-7 {
                let mut moved = false;
                for axis in 0..3 {
                    for sgn in [-1.0, 1.0] {
                        let mut p = best.0;
                        p[axis] += sgn * h;
                        let v = eval(p);
                        if v > best.1 {
                            best = (p, v);
                            moved = true;
                        }
                    }
                }
                if !moved {
                    h *= 0.5;
                }
            }
            assert!(best.1 <= r.upper + 1e-9);
            assert!((best.1 - r.value).abs() < 1e-4, "{} vs {}", best.1, r.value);
        }
    }

    #[test]
    fn scaling_and_isometry() {
        let mut rng = seeded(3);
        let rho = op(random_density(8, &mut rng), &[("A", 2), ("B", 4)]);
        let base = h_min_opt(&rho, &["B"], 1e-8).unwrap();
        let scaled = h_min_opt(&rho.scale(0.3), &["B"], 1e-8).unwrap();
        assert!((scaled.value - (base.value - 0.3f64.log2())).abs() < 1e-8);
        let s = base.conditioner.clone().unwrap();
        let mixed = DensityOperator::normalized(
            Operator::new(s.matrix() * c(0.5) + identity(4) * c(0.125), s.layout().clone()).unwrap(),
        )
        .unwrap();
        let f1 = h_min_fixed(&rho, &mixed).unwrap().value;
        let f2 = h_min_fixed(&rho.scale(0.3), &mixed).unwrap().value;
        assert!((f2 - (f1 - 0.3f64.log2())).abs() < 1e-9);

        // isometry A (2) -> A (3)
        let mut v = CMat::zeros(3, 2);
        let u = crate::sampling::haar_matrix(3, &mut rng);
        for i in 0..3 {
            for j in 0..2 {
                v[(i, j)] = u[(i, j)];
            }
        }
        let big = kron(&v, &identity(4));
        let lifted = op(&big * rho.matrix() * big.adjoint(), &[("A", 3), ("B", 4)]);
        let r = h_min_opt(&lifted, &["B"], 1e-8).unwrap();
        assert!((r.value - base.value).abs() <= 2e-8);
    }

    #[test]
    fn h_max_examples() {
        let phi = max_entangled(2);
        let phi = op(&phi * phi.adjoint(), &[("A", 2), ("B", 2)]);
        let r = h_max_opt(&phi, &["B"], 1e-7).unwrap();
        assert!((r.value + 1.0).abs() < 1e-7, "{}", r.value);
        // every conditioner gives the same fidelity for Φ
        let mut rng = seeded(4);
        for _ in 0..5 {
            let s = state(random_density(2, &mut rng), "B");
            assert!((h_max_fixed(&phi, &s).unwrap().value + 1.0).abs() < 1e-12);
        }

        let sig = random_density(2, &mut rng);
        let prod = op(kron(&(identity(2) * c(0.5)), &sig), &[("A", 2), ("B", 2)]);
        assert!((h_max_opt(&prod, &["B"], 1e-7).unwrap().value - 1.0).abs() < 1e-7);
        assert!((h_max_fixed(&prod, &state(sig.clone(), "B")).unwrap().value - 1.0).abs() < 1e-12);

        let psi = random_ket(2, &mut rng);
        let pure_prod = op(kron(&(&psi * psi.adjoint()), &sig), &[("A", 2), ("B", 2)]);
        assert!(h_max_fixed(&pure_prod, &state(sig, "B")).unwrap().value.abs() < 1e-12);

        for _ in 0..5 {
            let rho = op(random_density(4, &mut rng), &[("A", 2), ("B", 2)]);
            let opt = h_max_opt(&rho, &["B"], 1e-7).unwrap();
            for _ in 0..5 {
                let s = state(random_density(2, &mut rng), "B");
                assert!(opt.value >= h_max_fixed(&rho, &s).unwrap().value - 1e-7);
            }
        }
    }

    #[test]
    fn duality_on_pure_tripartite_states() {
        let mut rng = seeded(5);
        for _ in 0..10 {
            let psi = random_ket(8, &mut rng);
            let full = op(&psi * psi.adjoint(), &[("A", 2), ("B", 2), ("C", 2)]);
            let ab = full.partial_trace(&["A", "B"]).unwrap();
            let ac = full.partial_trace(&["A", "C"]).unwrap();
            let hmax = h_max_opt(&ab, &["B"], 1e-7).unwrap();
            let hmin = h_min_opt(&ac, &["C"], 1e-7).unwrap();
            assert!((hmax.value + hmin.value).abs() <= 2e-7);
        }
    }

    #[test]
    fn collision_dominates_min_entropy() {
        let mut rng = seeded(6);
        for _ in 0..50 {
            let rho = op(random_density(6, &mut rng), &[("A", 3), ("B", 2)]);
            let s = state(random_density(2, &mut rng), "B");
            let h2 = h2_fixed(&rho, &s).unwrap().value;
            let hm = h_min_fixed(&rho, &s).unwrap().value;
            assert!(h2 >= hm - 1e-9);
            let via_norm = -2.0 * weighted_two_norm(&rho, &s).unwrap().log2();
            assert!((h2 - via_norm).abs() < 1e-12);
        }
        let sig = random_density(2, &mut rng);
        let prod = op(kron(&(identity(3) * c(1.0 / 3.0)), &sig), &[("A", 3), ("B", 2)]);
        assert!((h2_fixed(&prod, &state(sig, "B")).unwrap().value - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn larger_instances_converge() {
        let mut rng = seeded(7);
        for (da, db) in [(2, 8), (4, 4), (8, 8), (3, 16)] {
            let rho = op(random_density(da * db, &mut rng), &[("A", da), ("B", db)]);
            let r = h_min_opt(&rho, &["B"], 1e-7).unwrap();
            assert!(r.certificate.unwrap().gap <= 1e-7, "{da}x{db}");
        }
        // rank-one input with a singular optimal conditioner
        let psi = random_ket(16, &mut rng);
        let rho = op(&psi * psi.adjoint(), &[("A", 4), ("B", 4)]);
        let r = h_min_opt(&rho, &["B"], 1e-7).unwrap();
        assert!(r.certificate.unwrap().gap <= 1e-7);
    }
}
