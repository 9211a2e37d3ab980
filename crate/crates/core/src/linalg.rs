//! Dense complex matrices carrying a tensor-factor layout.
//!
//! Every operator records the ordered list of named subsystems it acts on.
//! Layout-aware operations (partial trace, lifting, conjugation on a factor)
//! find subsystems by label and permute internally; results always come back
//! in a documented factor order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Numerical thresholds shared by every module.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Maximum entry of `X - X^dag` accepted as Hermitian.
    pub hermiticity: f64,
    /// Eigenvalues above `-psd` are clipped to zero; below it they are an error.
    pub psd: f64,
    /// Generic equality checks (traces, normalization, identities).
    pub equality: f64,
    /// Minimum eigenvalue for a conditioning state to count as full rank.
    pub full_rank: f64,
    /// Default duality-gap target for the min-entropy SDP, in bits.
    pub sdp_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        TOL
    }
}

pub const TOL: Tolerances = Tolerances {
    hermiticity: 1e-12,
    psd: 1e-10,
    equality: 1e-9,
    full_rank: 1e-12,
    sdp_gap: 1e-7,
};

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Ordered list of named tensor factors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    factors: Vec<(String, usize)>,
}

impl Layout {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let factors: Vec<(String, usize)> =
            factors.into_iter().map(|(n, d)| (n.into(), d)).collect();
        for (i, (name, dim)) in factors.iter().enumerate() {
            if *dim == 0 {
                return Err(Error::Dimension(format!("factor `{name}` has dimension 0")));
            }
            if factors[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::DuplicateLabel(name.clone()));
            }
        }
        Ok(Self { factors })
    }

    /// Single-factor layout.
    pub fn single(name: &str, dim: usize) -> Self {
        Self::new([(name, dim)]).expect("single factor layout")
    }

    /// Layout with no factors (dimension 1).
    pub fn scalar() -> Self {
        Self { factors: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|(_, d)| d).product()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[(String, usize)] {
        &self.factors
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|(n, _)| n.as_str())
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|(_, d)| *d).collect()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factors.iter().any(|(n, _)| n == name)
    }

    pub fn dim_of(&self, name: &str) -> Result<usize> {
        Ok(self.factors[self.position(name)?].1)
    }

    pub fn concat(&self, other: &Layout) -> Result<Layout> {
        Layout::new(self.factors.iter().chain(other.factors.iter()).cloned())
    }

    /// Sub-layout made of the named factors, in the order given.
    pub fn select(&self, names: &[&str]) -> Result<Layout> {
        let mut out = Vec::with_capacity(names.len());
        for n in names {
            out.push(self.factors[self.position(n)?].clone());
        }
        Layout::new(out)
    }

    /// Sub-layout of the factors not named, in layout order.
    pub fn complement(&self, names: &[&str]) -> Result<Layout> {
        for n in names {
            self.position(n)?;
        }
        Layout::new(
            self.factors
                .iter()
                .filter(|(n, _)| !names.contains(&n.as_str()))
                .cloned(),
        )
    }

    pub fn renamed(&self, from: &str, to: &str) -> Result<Layout> {
        let pos = self.position(from)?;
        let mut factors = self.factors.clone();
        factors[pos].0 = to.to_string();
        Layout::new(factors)
    }

    /// Replace the factor `name` by the factors of `with`, in place.
    pub fn replaced(&self, name: &str, with: &Layout) -> Result<Layout> {
        let pos = self.position(name)?;
        let mut factors = self.factors[..pos].to_vec();
        factors.extend(with.factors.iter().cloned());
        factors.extend(self.factors[pos + 1..].iter().cloned());
        Layout::new(factors)
    }
}

/// Index map for a permutation of tensor factors: `order[k]` is the old
/// position of the factor placed at new position `k`. Returns, for every old
/// basis index, its new basis index.
pub fn factor_permutation(dims: &[usize], order: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let new_dims: Vec<usize> = order.iter().map(|&o| dims[o]).collect();
    let mut digits = vec![0usize; dims.len()];
    let mut map = Vec::with_capacity(total);
    for _ in 0..total {
        let mut idx = 0;
        for (k, &o) in order.iter().enumerate() {
            idx = idx * new_dims[k] + digits[o];
        }
        map.push(idx);
        // row-major increment, factor 0 most significant
        for f in (0..dims.len()).rev() {
            digits[f] += 1;
            if digits[f] < dims[f] {
                break;
            }
            digits[f] = 0;
        }
    }
    map
}

pub fn permute_matrix(mat: &CMat, dims: &[usize], order: &[usize]) -> CMat {
    let map = factor_permutation(dims, order);
    let n = mat.nrows();
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            out[(map[i], map[j])] = mat[(i, j)];
        }
    }
    out
}

pub fn permute_vector(v: &CVec, dims: &[usize], order: &[usize]) -> CVec {
    let map = factor_permutation(dims, order);
    let mut out = CVec::zeros(v.len());
    for i in 0..v.len() {
        out[map[i]] = v[i];
    }
    out
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

pub fn trace(m: &CMat) -> C64 {
    m.trace()
}

/// Largest entry of `X - X^dag`.
pub fn hermiticity_error(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Eigendecomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = m.nrows();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn lambda_max(m: &CMat) -> f64 {
    eigvalsh(m).last().copied().unwrap_or(0.0)
}

pub fn lambda_min(m: &CMat) -> f64 {
    eigvalsh(m).first().copied().unwrap_or(0.0)
}

/// Apply `f` to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = eigh(m);
    let mut scaled = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        let fv = f(*v);
        scaled.column_mut(k).scale_mut(fv);
    }
    &scaled * vecs.adjoint()
}

fn scale_of(vals: &[f64]) -> f64 {
    vals.iter().fold(1.0f64, |a, v| a.max(v.abs()))
}

/// `m^p` for a PSD matrix, clipping eigenvalues in `[-psd, 0)` to zero.
/// Zero eigenvalues stay zero for negative `p` (pseudo-inverse power). For
/// `0 < p < 1`, eigenvalues at roundoff level count as zero.
pub fn psd_power(m: &CMat, p: f64) -> Result<CMat> {
    let (vals, vecs) = eigh(m);
    let floor = -TOL.psd * scale_of(&vals);
    let noise = if p > 0.0 && p < 1.0 { roundoff_floor(&vals, m.nrows()) } else { 0.0 };
    if let Some(&min) = vals.first() {
        if min < floor {
            return Err(Error::NotPositive(min));
        }
    }
    let mut scaled = vecs.clone();
    for (k, v) in vals.iter().enumerate() {
        let fv = if *v <= noise || (p < 0.0 && *v <= TOL.full_rank) {
            0.0
        } else {
            v.powf(p)
        };
        scaled.column_mut(k).scale_mut(fv);
    }
    Ok(&scaled * vecs.adjoint())
}

/// `Tr √M` for a PSD matrix. Eigenvalues at roundoff level relative to the
/// largest one are treated as zero, since their square roots are not.
pub fn trace_sqrt(m: &CMat) -> f64 {
    let vals = eigvalsh(m);
    let floor = roundoff_floor(&vals, m.nrows());
    vals.iter().filter(|v| **v > floor).map(|v| v.sqrt()).sum()
}

fn roundoff_floor(vals: &[f64], n: usize) -> f64 {
    64.0 * f64::EPSILON * scale_of(vals) * n as f64
}

pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    psd_power(m, 0.5)
}

/// Trace norm of an arbitrary square matrix via singular values.
pub fn trace_norm_general(m: &CMat) -> f64 {
    m.clone().singular_values().iter().sum()
}

pub fn hs_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Reduced matrix on the factors in `keep` (positions into `dims`, kept in
/// ascending position order).
pub fn partial_trace_positions(m: &CMat, dims: &[usize], keep: &[usize]) -> CMat {
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    let traced: Vec<usize> = (0..dims.len()).filter(|p| !keep.contains(p)).collect();
    let dk: usize = keep.iter().map(|&p| dims[p]).product();
    let dt: usize = traced.iter().map(|&p| dims[p]).product();
    // old index for (kept multi-index, traced multi-index)
    let mut order = keep.clone();
    order.extend(traced.iter().copied());
    let fwd = factor_permutation(dims, &order);
    let mut inv = vec![0usize; fwd.len()];
    for (old, &new) in fwd.iter().enumerate() {
        inv[new] = old;
    }
    let mut out = CMat::zeros(dk, dk);
    for b in 0..dk {
        for a in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dt {
                acc += m[(inv[a * dt + t], inv[b * dt + t])];
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// Linear operator together with its tensor-factor layout.
#[derive(Clone, Debug)]
pub struct Operator {
    mat: CMat,
    layout: Layout,
}

impl Operator {
    pub fn new(mat: CMat, layout: Layout) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() != layout.dim() {
            return Err(Error::Dimension(format!(
                "matrix {}x{} does not match layout dimension {}",
                mat.nrows(),
                mat.ncols(),
                layout.dim()
            )));
        }
        Ok(Self { mat, layout })
    }

    pub fn identity(layout: Layout) -> Self {
        let d = layout.dim();
        Self { mat: identity(d), layout }
    }

    pub fn zeros(layout: Layout) -> Self {
        let d = layout.dim();
        Self { mat: CMat::zeros(d, d), layout }
    }

    /// Maximally mixed state on `layout`.
    pub fn maximally_mixed(layout: Layout) -> Self {
        let d = layout.dim();
        Self { mat: identity(d).unscale(d as f64), layout }
    }

    /// Rank-one projector `|v><v|`.
    pub fn from_ket(v: &CVec, layout: Layout) -> Result<Self> {
        Self::new(v * v.adjoint(), layout)
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn dagger(&self) -> Self {
        Self { mat: self.mat.adjoint(), layout: self.layout.clone() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: self.mat.scale(s), layout: self.layout.clone() }
    }

    pub fn map_matrix(&self, f: impl FnOnce(&CMat) -> CMat) -> Result<Self> {
        Self::new(f(&self.mat), self.layout.clone())
    }

    fn same_layout(&self, other: &Operator) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Dimension(format!(
                "layouts differ: {:?} vs {:?}",
                self.layout, other.layout
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Operator) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self { mat: &self.mat + &other.mat, layout: self.layout.clone() })
    }

    pub fn sub(&self, other: &Operator) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self { mat: &self.mat - &other.mat, layout: self.layout.clone() })
    }

    pub fn mul(&self, other: &Operator) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self { mat: &self.mat * &other.mat, layout: self.layout.clone() })
    }

    /// Kronecker product; layouts are concatenated and must not share labels.
    pub fn tensor(&self, other: &Operator) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self { mat: kron(&self.mat, &other.mat), layout })
    }

    /// Reduced operator on the labelled factors, kept in layout order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        let positions = keep
            .iter()
            .map(|n| self.layout.position(n))
            .collect::<Result<Vec<_>>>()?;
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != positions.len() {
            return Err(Error::DuplicateLabel(keep.join(",")));
        }
        let layout = Layout::new(sorted.iter().map(|&p| self.layout.factors[p].clone()))?;
        let mat = partial_trace_positions(&self.mat, &self.layout.dims(), &sorted);
        Ok(Self { mat, layout })
    }

    /// Trace out the labelled factors.
    pub fn trace_out(&self, drop: &[&str]) -> Result<Self> {
        let keep = self.layout.complement(drop)?;
        let names: Vec<&str> = keep.names().collect();
        self.partial_trace(&names)
    }

    /// Same operator with factors reordered to `names` (must list every factor).
    pub fn reorder(&self, names: &[&str]) -> Result<Self> {
        if names.len() != self.layout.len() {
            return Err(Error::Dimension(format!(
                "reorder needs all {} factors, got {}",
                self.layout.len(),
                names.len()
            )));
        }
        let order = names
            .iter()
            .map(|n| self.layout.position(n))
            .collect::<Result<Vec<_>>>()?;
        let layout = self.layout.select(names)?;
        let mat = permute_matrix(&self.mat, &self.layout.dims(), &order);
        Ok(Self { mat, layout })
    }

    /// Embed this operator into `full`, acting as identity on the factors of
    /// `full` that this operator does not name.
    pub fn lift(&self, full: &Layout) -> Result<Self> {
        for (name, dim) in self.layout.factors() {
            if full.dim_of(name)? != *dim {
                return Err(Error::Dimension(format!("factor `{name}` has different dimension")));
            }
        }
        let own: Vec<&str> = self.layout.names().collect();
        let rest = full.complement(&own)?;
        let padded = self.tensor(&Operator::identity(rest))?;
        let full_names: Vec<&str> = full.names().collect();
        padded.reorder(&full_names)
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        Ok(Self { mat: self.mat.clone(), layout: self.layout.renamed(from, to)? })
    }

    /// `L X L^dag` where `L` acts on a subset of the factors.
    pub fn conjugate_by(&self, l: &Operator) -> Result<Self> {
        let lifted = l.lift(&self.layout)?;
        Ok(Self {
            mat: &lifted.mat * &self.mat * lifted.mat.adjoint(),
            layout: self.layout.clone(),
        })
    }

    /// Partial transpose on one factor in the computational basis.
    pub fn partial_transpose(&self, name: &str) -> Result<Self> {
        let pos = self.layout.position(name)?;
        let dims = self.layout.dims();
        let before: usize = dims[..pos].iter().product();
        let d = dims[pos];
        let after: usize = dims[pos + 1..].iter().product();
        let n = self.dim();
        let mut out = CMat::zeros(n, n);
        for i0 in 0..before {
            for a in 0..d {
                for i1 in 0..after {
                    let row = (i0 * d + a) * after + i1;
                    for j0 in 0..before {
                        for b in 0..d {
                            for j1 in 0..after {
                                let col = (j0 * d + b) * after + j1;
                                let r2 = (i0 * d + b) * after + i1;
                                let c2 = (j0 * d + a) * after + j1;
                                out[(r2, c2)] = self.mat[(row, col)];
                            }
                        }
                    }
                }
            }
        }
        Ok(Self { mat: out, layout: self.layout.clone() })
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.mat)
    }

    pub fn approx_eq(&self, other: &Operator, tol: f64) -> bool {
        self.layout == other.layout && max_abs_diff(&self.mat, &other.mat) <= tol
    }
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
}

/// Operator verified to be Hermitian; stored exactly Hermitian.
#[derive(Clone, Debug)]
pub struct HermitianOperator(Operator);

impl HermitianOperator {
    pub fn new(op: Operator) -> Result<Self> {
        let scale = op.mat.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let err = op.hermiticity_error();
        if err > TOL.hermiticity * scale {
            return Err(Error::NotHermitian(err));
        }
        let mat = hermitian_part(&op.mat);
        Ok(Self(Operator { mat, layout: op.layout }))
    }

    pub fn operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.0.mat)
    }
}

impl AsRef<Operator> for HermitianOperator {
    fn as_ref(&self) -> &Operator {
        &self.0
    }
}

impl AsRef<Operator> for Operator {
    fn as_ref(&self) -> &Operator {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Normalized,
    Subnormalized,
    Unnormalized,
}

/// Positive semidefinite operator with a declared normalization class.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    op: Operator,
    normalization: Normalization,
}

impl DensityOperator {
    pub fn new(op: Operator, normalization: Normalization) -> Result<Self> {
        let herm = HermitianOperator::new(op)?;
        let vals = herm.eigenvalues();
        let min = vals.first().copied().unwrap_or(0.0);
        if min < -TOL.psd * scale_of(&vals) {
            return Err(Error::NotPositive(min));
        }
        let tr = herm.0.trace().re;
        match normalization {
            Normalization::Normalized if (tr - 1.0).abs() > TOL.psd => {
                return Err(Error::Dimension(format!("trace {tr} is not 1")))
            }
            Normalization::Subnormalized if tr > 1.0 + TOL.psd => {
                return Err(Error::TraceExceedsOne(tr))
            }
            _ => {}
        }
        Ok(Self { op: herm.0, normalization })
    }

    /// Subnormalized if the trace allows it, otherwise unnormalized.
    pub fn positive(op: Operator) -> Result<Self> {
        let tr = op.trace().re;
        let n = if tr <= 1.0 + TOL.psd {
            Normalization::Subnormalized
        } else {
            Normalization::Unnormalized
        };
        Self::new(op, n)
    }

    pub fn normalized(op: Operator) -> Result<Self> {
        Self::new(op, Normalization::Normalized)
    }

    pub fn maximally_mixed(layout: Layout) -> Self {
        Self { op: Operator::maximally_mixed(layout), normalization: Normalization::Normalized }
    }

    pub fn pure(v: &CVec, layout: Layout) -> Result<Self> {
        Self::positive(Operator::from_ket(v, layout)?)
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn matrix(&self) -> &CMat {
        &self.op.mat
    }

    pub fn layout(&self) -> &Layout {
        &self.op.layout
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn trace(&self) -> f64 {
        self.op.trace().re
    }

    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        let op = self.op.partial_trace(keep)?;
        Ok(Self { op, normalization: self.normalization })
    }
}

impl AsRef<Operator> for DensityOperator {
    fn as_ref(&self) -> &Operator {
        &self.op
    }
}

/// Kronecker product of two operators with disjoint labels.
pub fn tensor(x: &Operator, y: &Operator) -> Result<Operator> {
    x.tensor(y)
}

pub fn partial_trace(x: &Operator, keep: &[&str]) -> Result<Operator> {
    x.partial_trace(keep)
}

/// Sum of absolute eigenvalues.
pub fn trace_norm(x: &HermitianOperator) -> f64 {
    x.eigenvalues().iter().map(|v| v.abs()).sum()
}

/// Trace norm of a matrix that is Hermitian up to roundoff.
pub fn trace_norm_herm(m: &CMat) -> f64 {
    eigvalsh(m).iter().map(|v| v.abs()).sum()
}

/// `||(I ⊗ ς)^{-1/4} X (I ⊗ ς)^{-1/4}||_2`, the conjugation acting on the
/// factors named by `sigma`'s layout.
pub fn weighted_two_norm(x: &Operator, sigma: &DensityOperator) -> Result<f64> {
    let vals = eigvalsh(sigma.matrix());
    let min = vals.first().copied().unwrap_or(0.0);
    if min <= TOL.full_rank {
        return Err(Error::SingularConditioner(min));
    }
    let quarter = Operator::new(herm_fn(sigma.matrix(), |v| v.powf(-0.25)), sigma.layout().clone())?;
    Ok(hs_norm(x.conjugate_by(&quarter)?.matrix()))
}

/// Generalized fidelity `||√ρ√σ||_1 + √((1-Trρ)(1-Trσ))`, computed as
/// `Tr √(√σ ρ √σ)`.
pub fn generalized_fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    for s in [rho, sigma] {
        if s.trace() > 1.0 + TOL.psd {
            return Err(Error::TraceExceedsOne(s.trace()));
        }
    }
    if rho.layout() != sigma.layout() {
        return Err(Error::Dimension("purified distance needs equal layouts".into()));
    }
    let sq = psd_sqrt(sigma.matrix())?;
    let inner = &sq * rho.matrix() * &sq;
    let overlap = trace_sqrt(&inner);
    // a trace deficit at roundoff level would leak ~1e-8 through the square root
    let deficit = |s: &DensityOperator| {
        let d = 1.0 - s.trace();
        if d <= 64.0 * f64::EPSILON * s.layout().dim() as f64 {
            0.0
        } else {
            d
        }
    };
    let slack = (deficit(rho) * deficit(sigma)).sqrt();
    Ok((overlap + slack).min(1.0))
}

pub fn purified_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    let f = generalized_fidelity(rho, sigma)?;
    Ok((1.0 - f * f).max(0.0).sqrt())
}
