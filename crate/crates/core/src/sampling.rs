//! Random unitaries, random states, and the exact second moments of
//! block-wise Haar twirls.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channels::{CpMap, INPUT};
use crate::dsp::{a_first, conditioner_quarter, contracted_block, weighted_block_norm_sq, DspDecomposition};
use crate::error::{Error, Result};
use crate::linalg::{c, kron, CMat, CVec, DensityOperator, Operator, C64, TOL};

/// Counter-style RNG stream: `(seed, stream)` fully determines the sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Evaluate `f(i)` for `i < n` in parallel and return the results in index
/// order, so that any subsequent fold is independent of the worker count.
pub fn ordered_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Sample mean and standard error (sample standard deviation over `√N`).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitaryKind {
    HaarFull,
    HaarDsp,
    Permutation,
    Composed,
}

#[derive(Clone, Debug)]
pub struct StructuredUnitary {
    kind: UnitaryKind,
    matrix: CMat,
    decomp: Option<DspDecomposition>,
}

impl StructuredUnitary {
    pub fn kind(&self) -> UnitaryKind {
        self.kind
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn decomposition(&self) -> Option<&DspDecomposition> {
        self.decomp.as_ref()
    }

    /// `self · other`.
    pub fn compose(&self, other: &StructuredUnitary) -> Result<StructuredUnitary> {
        if self.matrix.ncols() != other.matrix.nrows() {
            return Err(Error::Dimension("composed unitaries must share a dimension".into()));
        }
        let decomp = match (&self.decomp, &other.decomp) {
            (Some(a), Some(b)) if a == b => Some(a.clone()),
            _ => None,
        };
        Ok(StructuredUnitary { kind: UnitaryKind::Composed, matrix: &self.matrix * &other.matrix, decomp })
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Ginibre matrix with i.i.d. entries of unit variance.
pub fn ginibre(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed `d × d` unitary matrix.
pub fn haar_matrix(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let qr = ginibre(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..d {
        let v = r[(i, i)];
        let phase = if v.norm() > 0.0 { v / v.norm() } else { c(1.0) };
        for row in 0..d {
            q[(row, i)] *= phase;
        }
    }
    q
}

pub fn haar_unitary(d: usize, rng: &mut ChaCha8Rng) -> StructuredUnitary {
    StructuredUnitary { kind: UnitaryKind::HaarFull, matrix: haar_matrix(d, rng), decomp: None }
}

/// Independent Haar draws per block, assembled as `⊕_j I^{A_l}_j ⊗ U_j^{A_r}`.
pub fn dsp_unitary(decomp: &DspDecomposition, rng: &mut ChaCha8Rng) -> StructuredUnitary {
    let blocks: Vec<CMat> = (0..decomp.num_blocks()).map(|j| haar_matrix(decomp.r(j), rng)).collect();
    StructuredUnitary {
        kind: UnitaryKind::HaarDsp,
        matrix: assemble_dsp(decomp, &blocks),
        decomp: Some(decomp.clone()),
    }
}

/// `⊕_j I_{l_j} ⊗ U_j` from per-block `r_j × r_j` matrices.
pub fn assemble_dsp(decomp: &DspDecomposition, blocks: &[CMat]) -> CMat {
    let d = decomp.dim();
    let mut u = CMat::zeros(d, d);
    for (j, uj) in blocks.iter().enumerate() {
        let (l, r) = decomp.blocks()[j];
        for a in 0..l {
            for b in 0..r {
                for b2 in 0..r {
                    u[(decomp.index(j, a, b), decomp.index(j, a, b2))] = uj[(b, b2)];
                }
            }
        }
    }
    u
}

/// Uniformly random permutation of `0..n` (`σ[j]` is the image of `j`).
pub fn random_permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub fn inverse_permutation(sigma: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; sigma.len()];
    for (j, &s) in sigma.iter().enumerate() {
        inv[s] = j;
    }
    inv
}

fn check_permutation(sigma: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if sigma.len() != n {
        return Err(Error::Dimension(format!("permutation of length {} for J = {n}", sigma.len())));
    }
    for &s in sigma {
        if s >= n || seen[s] {
            return Err(Error::Precondition(format!("{sigma:?} is not a permutation")));
        }
        seen[s] = true;
    }
    Ok(())
}

/// `G_σ = Σ_j |σ(j)⟩⟨j|^{A_c} ⊗ I^{A_r}`.
pub fn permutation_unitary(sigma: &[usize], decomp: &DspDecomposition) -> Result<StructuredUnitary> {
    decomp.require_randomized_case()?;
    check_permutation(sigma, decomp.num_blocks())?;
    let d = decomp.dim();
    let r = decomp.r(0);
    let mut g = CMat::zeros(d, d);
    for (j, &s) in sigma.iter().enumerate() {
        for b in 0..r {
            g[(s * r + b, j * r + b)] = c(1.0);
        }
    }
    Ok(StructuredUnitary { kind: UnitaryKind::Permutation, matrix: g, decomp: Some(decomp.clone()) })
}

/// Normalized random pure state.
pub fn random_pure_state(d: usize, rng: &mut ChaCha8Rng) -> CVec {
    let v = CVec::from_fn(d, |_, _| gaussian(rng));
    let n = v.norm();
    v / c(n)
}

/// Reduced state of a Haar-random pure state on `d · env` dimensions.
pub fn random_mixed_state(d: usize, env: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = ginibre(d, env, rng);
    let p = &g * g.adjoint();
    let tr = p.trace().re;
    p / c(tr)
}

/// Index patterns of the second moments
/// `E[(U_j ⊗ U_k) M (U_m ⊗ U_n)^dag]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwirlCase {
    /// `(j, k, j, k)` with `j ≠ k`.
    Direct(usize, usize),
    /// `(j, k, k, j)` with `j ≠ k`.
    Crossed(usize, usize),
    /// `(j, j, j, j)`.
    Diagonal(usize),
}

impl TwirlCase {
    pub fn pattern(&self) -> [usize; 4] {
        match *self {
            TwirlCase::Direct(j, k) => [j, k, j, k],
            TwirlCase::Crossed(j, k) => [j, k, k, j],
            TwirlCase::Diagonal(j) => [j, j, j, j],
        }
    }
}

/// Block structure of `A_r = ⊕_j C^{r_j}`.
fn ar_offsets(decomp: &DspDecomposition) -> (Vec<usize>, usize) {
    let mut off = Vec::with_capacity(decomp.num_blocks());
    let mut acc = 0;
    for j in 0..decomp.num_blocks() {
        off.push(acc);
        acc += decomp.r(j);
    }
    (off, acc)
}

fn ar_projector(decomp: &DspDecomposition, j: usize) -> CMat {
    let (off, d) = ar_offsets(decomp);
    let mut p = CMat::zeros(d, d);
    for b in 0..decomp.r(j) {
        p[(off[j] + b, off[j] + b)] = c(1.0);
    }
    p
}

fn swap(d: usize) -> CMat {
    let mut f = CMat::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            f[(a * d + b, b * d + a)] = c(1.0);
        }
    }
    f
}

/// `Tr_{A_r A_r'}[(P ⊗ I_B) M]` for `M` on `(A_r A_r') ⊗ B`.
fn trace_ar(p: &CMat, m: &CMat, b_dim: usize) -> CMat {
    let dd = p.nrows();
    let mut out = CMat::zeros(b_dim, b_dim);
    for x in 0..dd {
        for y in 0..dd {
            let pv = p[(x, y)];
            if pv == C64::new(0.0, 0.0) {
                continue;
            }
            for s in 0..b_dim {
                for t in 0..b_dim {
                    out[(s, t)] += pv * m[(y * b_dim + s, x * b_dim + t)];
                }
            }
        }
    }
    out
}

fn check_twirl_input(m: &CMat, decomp: &DspDecomposition, b_dim: usize, pattern: &[usize]) -> Result<usize> {
    let (_, d) = ar_offsets(decomp);
    if m.nrows() != d * d * b_dim || m.ncols() != d * d * b_dim {
        return Err(Error::Dimension(format!(
            "M must act on A_r A_r' B with dimension {}, got {}x{}",
            d * d * b_dim,
            m.nrows(),
            m.ncols()
        )));
    }
    for &j in pattern {
        decomp.check_index(j)?;
    }
    Ok(d)
}

/// Closed-form second moments of independent per-block Haar unitaries on
/// `A_r = ⊕_j C^{r_j}`. `M` acts on `A_r ⊗ A_r' ⊗ B` where `B` (dimension
/// `b_dim`) collects all remaining factors.
pub fn twisted_twirl_exact(m: &CMat, decomp: &DspDecomposition, b_dim: usize, case: TwirlCase) -> Result<CMat> {
    let d = check_twirl_input(m, decomp, b_dim, &case.pattern())?;
    let f = swap(d);
    let ident_jk = |j: usize, k: usize| kron(&ar_projector(decomp, j), &ar_projector(decomp, k));
    let swap_jk = |j: usize, k: usize| ident_jk(j, k) * &f;
    match case {
        TwirlCase::Direct(j, k) | TwirlCase::Crossed(j, k) if j == k => Err(Error::Precondition(format!(
            "two-block twirl needs j != k, got j = k = {j}"
        ))),
        TwirlCase::Direct(j, k) => {
            let scale = 1.0 / (decomp.r(j) * decomp.r(k)) as f64;
            let mi = trace_ar(&ident_jk(j, k), m, b_dim);
            Ok(kron(&ident_jk(j, k), &mi) * c(scale))
        }
        TwirlCase::Crossed(j, k) => {
            let scale = 1.0 / (decomp.r(j) * decomp.r(k)) as f64;
            let mf = trace_ar(&swap_jk(k, j), m, b_dim);
            Ok(kron(&swap_jk(j, k), &mf) * c(scale))
        }
        TwirlCase::Diagonal(j) => {
            let r = decomp.r(j);
            let ijj = ident_jk(j, j);
            if r == 1 {
                // U_j is a phase and cancels
                let p = kron(&ijj, &crate::linalg::identity(b_dim));
                return Ok(&p * m * &p);
            }
            let fjj = swap_jk(j, j);
            let mi = trace_ar(&ijj, m, b_dim);
            let mf = trace_ar(&fjj, m, b_dim);
            let rf = r as f64;
            let first = kron(&(&ijj * c(rf) - &fjj), &mi);
            let second = kron(&(&fjj * c(rf) - &ijj), &mf);
            Ok((first + second) * c(1.0 / (rf * (rf * rf - 1.0))))
        }
    }
}

/// Exact second moment for an arbitrary index pattern `(j, k, m, n)`;
/// patterns outside the three closed-form cases average to zero.
pub fn twisted_twirl_pattern(
    m: &CMat,
    decomp: &DspDecomposition,
    b_dim: usize,
    pattern: [usize; 4],
) -> Result<CMat> {
    let d = check_twirl_input(m, decomp, b_dim, &pattern)?;
    let [j, k, mm, n] = pattern;
    if j == k && k == mm && mm == n {
        twisted_twirl_exact(m, decomp, b_dim, TwirlCase::Diagonal(j))
    } else if j != k && (mm, n) == (j, k) {
        twisted_twirl_exact(m, decomp, b_dim, TwirlCase::Direct(j, k))
    } else if j != k && (mm, n) == (k, j) {
        twisted_twirl_exact(m, decomp, b_dim, TwirlCase::Crossed(j, k))
    } else {
        Ok(CMat::zeros(d * d * b_dim, d * d * b_dim))
    }
}

/// Empirical average of `(U_j ⊗ U_k) M (U_m ⊗ U_n)^dag` over `n` draws of
/// independent per-block Haar unitaries. Sample `i` uses stream
/// `RngStream::new(seed, i)` and draws one unitary per block in block order.
pub fn twisted_twirl_empirical(
    m: &CMat,
    decomp: &DspDecomposition,
    b_dim: usize,
    pattern: [usize; 4],
    samples: usize,
    seed: u64,
) -> Result<CMat> {
    let d = check_twirl_input(m, decomp, b_dim, &pattern)?;
    let (off, _) = ar_offsets(decomp);
    let [j, k, mm, n] = pattern;
    let (rj, rk, rm, rn) = (decomp.r(j), decomp.r(k), decomp.r(mm), decomp.r(n));

    // restrict M to rows in (j, k) and columns in (m, n)
    let rows: Vec<usize> = block_indices(&off, (j, rj), (k, rk), d, b_dim);
    let cols: Vec<usize> = block_indices(&off, (mm, rm), (n, rn), d, b_dim);
    let sub = CMat::from_fn(rows.len(), cols.len(), |x, y| m[(rows[x], cols[y])]);
    let id_b = crate::linalg::identity(b_dim);

    let terms = ordered_map(samples, |i| {
        let mut rng = RngStream::new(seed, i as u64).rng();
        let us: Vec<CMat> = (0..decomp.num_blocks()).map(|x| haar_matrix(decomp.r(x), &mut rng)).collect();
        let left = kron(&kron(&us[j], &us[k]), &id_b);
        let right = kron(&kron(&us[mm], &us[n]), &id_b);
        left * &sub * right.adjoint()
    });
    let mut acc = CMat::zeros(rows.len(), cols.len());
    for t in &terms {
        acc += t;
    }
    acc /= c(samples as f64);

    let mut out = CMat::zeros(d * d * b_dim, d * d * b_dim);
    for (x, &row) in rows.iter().enumerate() {
        for (y, &col) in cols.iter().enumerate() {
            out[(row, col)] = acc[(x, y)];
        }
    }
    Ok(out)
}

fn block_indices(off: &[usize], (j, rj): (usize, usize), (k, rk): (usize, usize), d: usize, b_dim: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(rj * rk * b_dim);
    for b in 0..rj {
        for b2 in 0..rk {
            for s in 0..b_dim {
                idx.push(((off[j] + b) * d + off[k] + b2) * b_dim + s);
            }
        }
    }
    idx
}

/// Upper bound on `E_U ‖T(G_σ^{-1} U X U^dag G_σ)‖²_{2,ς}` over `U ~ H_×`:
/// `Σ_{jk} (d_A² / (r_j r_k)) ‖Tr_{A_l}[X_{σ(j)σ(k)} τ_{jk}]‖²_{2,ς}`.
///
/// Requires `Tr_{A_r} X_{jj} = 0` for every block, which holds for
/// `X = Ψ - Ψ_av`. `varsigma` acts on the reference and output factors.
pub fn exact_average_2norm(
    x: &Operator,
    t: &CpMap,
    varsigma: &DensityOperator,
    perm: &[usize],
    decomp: &DspDecomposition,
) -> Result<f64> {
    let jn = decomp.num_blocks();
    let mut seen = vec![false; jn];
    if perm.len() != jn || perm.iter().any(|&s| s >= jn || std::mem::replace(&mut seen[s], true)) {
        return Err(Error::Precondition(format!("{perm:?} is not a permutation of {jn} blocks")));
    }
    if perm.iter().enumerate().any(|(j, &s)| decomp.blocks()[j] != decomp.blocks()[s]) {
        decomp.require_randomized_case()?;
    }
    let (x, r_layout) = a_first(x, INPUT)?;
    let (tau, e_layout) = a_first(t.choi(), INPUT)?;
    if x.layout().dim_of(INPUT)? != decomp.dim() {
        return Err(Error::Dimension("X and decomposition disagree on d_A".into()));
    }
    let dr = r_layout.dim();
    let m = x.matrix();
    let scale = m.norm().max(1.0);
    for j in 0..jn {
        let (l, r) = decomp.blocks()[j];
        for a in 0..l {
            for a2 in 0..l {
                for rho in 0..dr {
                    for rho2 in 0..dr {
                        let mut acc = C64::new(0.0, 0.0);
                        for b in 0..r {
                            acc += m[(decomp.index(j, a, b) * dr + rho, decomp.index(j, a2, b) * dr + rho2)];
                        }
                        if acc.norm() > TOL.equality * scale {
                            return Err(Error::Precondition(format!(
                                "partial trace over A_r of diagonal block {j} is nonzero ({:e})",
                                acc.norm()
                            )));
                        }
                    }
                }
            }
        }
    }
    let q = conditioner_quarter(varsigma, &r_layout, &e_layout)?;
    let d = decomp.dim() as f64;
    let mut total = 0.0;
    for j in 0..jn {
        for k in 0..jn {
            let blk = contracted_block(m, tau.matrix(), decomp, (perm[j], perm[k]), (j, k), dr, e_layout.dim())?;
            total += d * d / (decomp.r(j) * decomp.r(k)) as f64 * weighted_block_norm_sq(&blk, &q);
        }
    }
    Ok(total)
}
