//! Direct-sum-product decompositions `H^A = ⊕_j H_j^{A_l} ⊗ H_j^{A_r}`.
//!
//! Basis convention: block `j` occupies the index range
//! `offset(j) .. offset(j) + l_j * r_j` of the ambient space, and inside the
//! block the index is `a * r_j + b` with `a < l_j` (left factor) and `b < r_j`
//! (right factor). All maximally entangled states and transposes use this
//! computational basis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec, DensityOperator, Layout, Operator, C64};

/// Shape `{(l_j, r_j)}` of a DSP decomposition.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DspDecomposition {
    blocks: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    star_offsets: Vec<usize>,
}

impl DspDecomposition {
    pub fn new(blocks: Vec<(usize, usize)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Dimension("decomposition needs at least one block".into()));
        }
        if blocks.iter().any(|&(l, r)| l == 0 || r == 0) {
            return Err(Error::Dimension("block dimensions must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut star_offsets = Vec::with_capacity(blocks.len());
        let (mut off, mut star) = (0, 0);
        for &(l, r) in &blocks {
            offsets.push(off);
            star_offsets.push(star);
            off += l * r;
            star += r * r;
        }
        Ok(Self { blocks, offsets, star_offsets })
    }

    /// `J` blocks with `l_j = 1` and `r_j = r` (the randomized case).
    pub fn uniform(j: usize, r: usize) -> Result<Self> {
        Self::new(vec![(1, r); j])
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn l(&self, j: usize) -> usize {
        self.blocks[j].0
    }

    pub fn r(&self, j: usize) -> usize {
        self.blocks[j].1
    }

    pub fn block_dim(&self, j: usize) -> usize {
        self.blocks[j].0 * self.blocks[j].1
    }

    pub fn offset(&self, j: usize) -> usize {
        self.offsets[j]
    }

    /// Ambient dimension `d_A = Σ_j l_j r_j`.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|(l, r)| l * r).sum()
    }

    /// Dimension of `A* = ⊕_j H_j^{A_r} ⊗ H_j^{Ā_r}`.
    pub fn star_dim(&self) -> usize {
        self.blocks.iter().map(|(_, r)| r * r).sum()
    }

    pub fn star_offset(&self, j: usize) -> usize {
        self.star_offsets[j]
    }

    pub fn max_l(&self) -> usize {
        self.blocks.iter().map(|b| b.0).max().unwrap_or(1)
    }

    pub fn max_r(&self) -> usize {
        self.blocks.iter().map(|b| b.1).max().unwrap_or(1)
    }

    /// All `l_j = 1` and all `r_j` equal.
    pub fn is_randomized_case(&self) -> bool {
        let r0 = self.blocks[0].1;
        self.blocks.iter().all(|&(l, r)| l == 1 && r == r0)
    }

    pub fn require_randomized_case(&self) -> Result<()> {
        if self.is_randomized_case() {
            Ok(())
        } else {
            Err(Error::NotRandomizedCase(format!(
                "randomized partial decoupling needs l_j = 1 and equal r_j for all blocks, got {self}"
            )))
        }
    }

    pub fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.blocks.len() {
            Err(Error::BlockIndex { index: j, blocks: self.blocks.len() })
        } else {
            Ok(())
        }
    }

    /// Ambient index of `(j, a, b)`.
    #[inline]
    pub fn index(&self, j: usize, a: usize, b: usize) -> usize {
        self.offsets[j] + a * self.blocks[j].1 + b
    }

    /// Projector `Π_j` onto block `j`.
    pub fn projector(&self, j: usize) -> CMat {
        let d = self.dim();
        let mut p = CMat::zeros(d, d);
        for i in self.offsets[j]..self.offsets[j] + self.block_dim(j) {
            p[(i, i)] = c(1.0);
        }
        p
    }

    /// Human-editable literal `J=[ (l1,r1), (l2,r2) ]`.
    pub fn literal(&self) -> String {
        let inner: Vec<String> = self.blocks.iter().map(|(l, r)| format!("({l},{r})")).collect();
        format!("J=[ {} ]", inner.join(", "))
    }
}

impl fmt::Display for DspDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

impl FromStr for DspDecomposition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::DecompositionLiteral(s.to_string());
        let compact: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
        let body = compact.strip_prefix("J=").ok_or_else(bad)?;
        let body = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')).ok_or_else(bad)?;
        let mut blocks = Vec::new();
        let mut rest = body;
        while !rest.is_empty() {
            let open = rest.strip_prefix('(').ok_or_else(bad)?;
            let close = open.find(')').ok_or_else(bad)?;
            let (pair, tail) = open.split_at(close);
            let (l, r) = pair.split_once(',').ok_or_else(bad)?;
            let l: usize = l.parse().map_err(|_| bad())?;
            let r: usize = r.parse().map_err(|_| bad())?;
            blocks.push((l, r));
            rest = &tail[1..];
            if let Some(t) = rest.strip_prefix(',') {
                if t.is_empty() {
                    return Err(bad());
                }
                rest = t;
            } else if !rest.is_empty() {
                return Err(bad());
            }
        }
        DspDecomposition::new(blocks).map_err(|_| bad())
    }
}

impl Serialize for DspDecomposition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.literal())
    }
}

impl<'de> Deserialize<'de> for DspDecomposition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Move the factor `a_label` to the front. Returns the reordered operator
/// and the layout of the remaining factors.
pub(crate) fn a_first(x: &Operator, a_label: &str) -> Result<(Operator, Layout)> {
    let rest = x.layout().complement(&[a_label])?;
    let mut names = vec![a_label];
    names.extend(rest.names());
    Ok((x.reorder(&names)?, rest))
}

fn check_a(x: &Operator, a_label: &str, decomp: &DspDecomposition) -> Result<()> {
    let d = x.layout().dim_of(a_label)?;
    if d != decomp.dim() {
        return Err(Error::Dimension(format!(
            "factor `{a_label}` has dimension {d}, decomposition has d_A = {}",
            decomp.dim()
        )));
    }
    Ok(())
}

/// `X_{jk} = Π_j X Π_k` with the projectors acting on factor `a_label`.
pub fn block_project(
    x: &Operator,
    a_label: &str,
    decomp: &DspDecomposition,
    j: usize,
    k: usize,
) -> Result<Operator> {
    decomp.check_index(j)?;
    decomp.check_index(k)?;
    check_a(x, a_label, decomp)?;
    let a = Layout::single(a_label, decomp.dim());
    let pj = Operator::new(decomp.projector(j), a.clone())?.lift(x.layout())?;
    let pk = Operator::new(decomp.projector(k), a)?.lift(x.layout())?;
    x.map_matrix(|m| pj.matrix() * m * pk.matrix())
}

/// `|Φ⟩ = ⊕_j √(l_j r_j / d_A) |Φ_j^l⟩|Φ_j^r⟩` on `A ⊗ A'` (A most significant).
pub fn dsp_maximally_entangled_ket(decomp: &DspDecomposition) -> CVec {
    let d = decomp.dim();
    let mut v = CVec::zeros(d * d);
    for j in 0..decomp.num_blocks() {
        let (l, r) = decomp.blocks()[j];
        let weight = ((l * r) as f64 / d as f64).sqrt();
        // |Φ_j^l⟩|Φ_j^r⟩ = (l r)^{-1/2} Σ_{a,b} |a b⟩|a b⟩
        let amp = weight / ((l * r) as f64).sqrt();
        for a in 0..l {
            for b in 0..r {
                let i = decomp.index(j, a, b);
                v[i * d + i] += c(amp);
            }
        }
    }
    v
}

pub fn dsp_maximally_entangled(
    decomp: &DspDecomposition,
    a_label: &str,
    a_prime_label: &str,
) -> Result<DensityOperator> {
    let d = decomp.dim();
    let layout = Layout::new([(a_label, d), (a_prime_label, d)])?;
    DensityOperator::pure(&dsp_maximally_entangled_ket(decomp), layout)
}

/// Embedding isometry `W: A → A_c ⊗ A_l ⊗ A_r` with `W|j,a,b⟩ = |j⟩|a⟩|b⟩`;
/// `A_l`, `A_r` have dimensions `max l_j`, `max r_j`.
pub fn embedding_isometry(decomp: &DspDecomposition) -> (CMat, Layout) {
    let jn = decomp.num_blocks();
    let (lm, rm) = (decomp.max_l(), decomp.max_r());
    let mut w = CMat::zeros(jn * lm * rm, decomp.dim());
    for j in 0..jn {
        for a in 0..decomp.l(j) {
            for b in 0..decomp.r(j) {
                w[((j * lm + a) * rm + b, decomp.index(j, a, b))] = c(1.0);
            }
        }
    }
    let layout = Layout::new([("Ac", jn), ("Al", lm), ("Ar", rm)]).expect("distinct labels");
    (w, layout)
}

/// `F: A ⊗ Ā → A*`, `F = ⊕_j √(d_A l_j / r_j) ⟨Φ_j^l|(Π_j ⊗ Π_j)`.
/// Columns are indexed by `i_A * d_A + i_Ā`; rows of block `j` of `A*` by
/// `star_offset(j) + b * r_j + b̄`.
pub fn flatten_f(decomp: &DspDecomposition) -> CMat {
    let d = decomp.dim();
    let mut f = CMat::zeros(decomp.star_dim(), d * d);
    for j in 0..decomp.num_blocks() {
        let (l, r) = decomp.blocks()[j];
        let coeff = ((d * l) as f64 / r as f64).sqrt() / (l as f64).sqrt();
        for a in 0..l {
            for b in 0..r {
                for bb in 0..r {
                    let row = decomp.star_offset(j) + b * r + bb;
                    let col = decomp.index(j, a, b) * d + decomp.index(j, a, bb);
                    f[(row, col)] = c(coeff);
                }
            }
        }
    }
    f
}

/// Label used for the `A*` factor of `Λ(Ψ, T)`.
pub const A_STAR: &str = "A*";

/// `Λ(Ψ, T) = F (Ψ^{AR} ⊗ τ^{ĀE}) F^dag` on `A* ⊗ R ⊗ E`.
///
/// `psi` carries the factor `a_label` plus reference factors; `choi` carries
/// `a_label` (the channel input) plus output factors.
pub fn build_lambda(
    psi: &Operator,
    choi: &Operator,
    a_label: &str,
    decomp: &DspDecomposition,
) -> Result<Operator> {
    check_a(psi, a_label, decomp)?;
    check_a(choi, a_label, decomp)?;
    let (psi, r_layout) = a_first(psi, a_label)?;
    let (tau, e_layout) = a_first(choi, a_label)?;
    let out_layout = Layout::single(A_STAR, decomp.star_dim())
        .concat(&r_layout)?
        .concat(&e_layout)?;
    let d = decomp.dim();
    let (dr, de) = (r_layout.dim(), e_layout.dim());

    // sparse rows of F: row -> [(i_A, i_Ā, value)]
    let f = flatten_f(decomp);
    let mut rows: Vec<Vec<(usize, usize, C64)>> = vec![Vec::new(); f.nrows()];
    for s in 0..f.nrows() {
        for col in 0..f.ncols() {
            let v = f[(s, col)];
            if v.norm() > 0.0 {
                rows[s].push((col / d, col % d, v));
            }
        }
    }

    let ps = psi.matrix();
    let ts = tau.matrix();
    let n = out_layout.dim();
    let mut lam = CMat::zeros(n, n);
    let rede = dr * de;
    for s in 0..rows.len() {
        for s2 in 0..rows.len() {
            for &(i, ib, fv) in &rows[s] {
                for &(i2, ib2, fv2) in &rows[s2] {
                    let coeff = fv * fv2.conj();
                    for rho in 0..dr {
                        for rho2 in 0..dr {
                            let p = ps[(i * dr + rho, i2 * dr + rho2)];
                            if p == C64::new(0.0, 0.0) {
                                continue;
                            }
                            let cp = coeff * p;
                            for e in 0..de {
                                for e2 in 0..de {
                                    lam[(s * rede + rho * de + e, s2 * rede + rho2 * de + e2)] +=
                                        cp * ts[(ib * de + e, ib2 * de + e2)];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Operator::new(lam, out_layout)
}

/// `Tr_{A_l}[X_{jx kx}^{A_l^T A_r R} τ_{jt kt}^{A_l Ā_r E}]` as a
/// `(r_j² d_R d_E) × (r_k² d_R d_E)` matrix with row index `((b, b̄), R, E)`.
///
/// `x` and `tau` must already have the `A` factor first. The block pairs may
/// differ (`jx ≠ jt`) as long as their dimensions agree.
pub(crate) fn contracted_block(
    x: &CMat,
    tau: &CMat,
    decomp: &DspDecomposition,
    (jx, kx): (usize, usize),
    (jt, kt): (usize, usize),
    dr: usize,
    de: usize,
) -> Result<CMat> {
    if decomp.blocks()[jx] != decomp.blocks()[jt] || decomp.blocks()[kx] != decomp.blocks()[kt] {
        return Err(Error::Dimension("paired blocks must have equal (l, r)".into()));
    }
    let (lj, rj) = decomp.blocks()[jt];
    let (lk, rk) = decomp.blocks()[kt];
    let mut out = CMat::zeros(rj * rj * dr * de, rk * rk * dr * de);
    for b in 0..rj {
        for bb in 0..rj {
            for cc in 0..rk {
                for cb in 0..rk {
                    for rho in 0..dr {
                        for rho2 in 0..dr {
                            for e in 0..de {
                                for e2 in 0..de {
                                    let mut acc = C64::new(0.0, 0.0);
                                    for a in 0..lj {
                                        for a2 in 0..lk {
                                            let xi = decomp.index(jx, a, b) * dr + rho;
                                            let xk = decomp.index(kx, a2, cc) * dr + rho2;
                                            let ti = decomp.index(jt, a, bb) * de + e;
                                            let tk = decomp.index(kt, a2, cb) * de + e2;
                                            acc += x[(xi, xk)] * tau[(ti, tk)];
                                        }
                                    }
                                    let row = ((b * rj + bb) * dr + rho) * de + e;
                                    let col = ((cc * rk + cb) * dr + rho2) * de + e2;
                                    out[(row, col)] = acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Squared weighted norm of a rectangular block whose row and column spaces
/// are `(block) ⊗ R ⊗ E`, with `q = ς^{-1/4}` acting on `R ⊗ E`.
pub(crate) fn weighted_block_norm_sq(block: &CMat, q: &CMat) -> f64 {
    let re = q.nrows();
    let (nr, nc) = (block.nrows() / re, block.ncols() / re);
    let left = crate::linalg::kron(&crate::linalg::identity(nr), q);
    let right = crate::linalg::kron(&crate::linalg::identity(nc), q);
    let w = left * block * right;
    w.iter().map(|z| z.norm_sqr()).sum()
}

/// `ς^{-1/4}` on `R ⊗ E` in that factor order, for a conditioner whose
/// layout lists exactly the R and E factors in any order.
pub(crate) fn conditioner_quarter(
    sigma: &DensityOperator,
    r_layout: &Layout,
    e_layout: &Layout,
) -> Result<CMat> {
    let mut names: Vec<&str> = r_layout.names().collect();
    names.extend(e_layout.names());
    let s = sigma.operator().reorder(&names)?;
    let vals = crate::linalg::eigvalsh(s.matrix());
    let min = vals.first().copied().unwrap_or(0.0);
    if min <= crate::linalg::TOL.full_rank {
        return Err(Error::SingularConditioner(min));
    }
    Ok(crate::linalg::herm_fn(s.matrix(), |v| v.powf(-0.25)))
}

/// Block sum `Σ_{jk} (d_A² / (r_j r_k)) ‖Tr_{A_l}[Ψ_{jk}^{A_l^T A_r R} τ_{jk}^{A_l Ā_r E}]‖²_{2,ς}`,
/// evaluated block by block without forming `Λ`.
pub fn lambda_block_sum(
    psi: &Operator,
    choi: &Operator,
    sigma: &DensityOperator,
    a_label: &str,
    decomp: &DspDecomposition,
) -> Result<f64> {
    check_a(psi, a_label, decomp)?;
    check_a(choi, a_label, decomp)?;
    let (psi, r_layout) = a_first(psi, a_label)?;
    let (tau, e_layout) = a_first(choi, a_label)?;
    let q = conditioner_quarter(sigma, &r_layout, &e_layout)?;
    let d = decomp.dim() as f64;
    let mut total = 0.0;
    for j in 0..decomp.num_blocks() {
        for k in 0..decomp.num_blocks() {
            let blk = contracted_block(
                psi.matrix(),
                tau.matrix(),
                decomp,
                (j, k),
                (j, k),
                r_layout.dim(),
                e_layout.dim(),
            )?;
            let scale = d * d / (decomp.r(j) * decomp.r(k)) as f64;
            total += scale * weighted_block_norm_sq(&blk, &q);
        }
    }
    Ok(total)
}

/// `Ψ_av = ⊕_j Ψ_jj^{A_l R} ⊗ π_j^{A_r}`, computed from block data.
pub fn averaged_state(psi: &Operator, a_label: &str, decomp: &DspDecomposition) -> Result<Operator> {
    check_a(psi, a_label, decomp)?;
    let names: Vec<String> = psi.layout().names().map(String::from).collect();
    let (x, rest) = a_first(psi, a_label)?;
    let dr = rest.dim();
    let m = x.matrix();
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for j in 0..decomp.num_blocks() {
        let (l, r) = decomp.blocks()[j];
        for a in 0..l {
            for a2 in 0..l {
                for rho in 0..dr {
                    for rho2 in 0..dr {
                        let mut acc = C64::new(0.0, 0.0);
                        for cc in 0..r {
                            acc += m[(decomp.index(j, a, cc) * dr + rho, decomp.index(j, a2, cc) * dr + rho2)];
                        }
                        let v = acc / r as f64;
                        for b in 0..r {
                            out[(decomp.index(j, a, b) * dr + rho, decomp.index(j, a2, b) * dr + rho2)] = v;
                        }
                    }
                }
            }
        }
    }
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    Operator::new(out, x.layout().clone())?.reorder(&names)
}

/// Completely dephasing channel on `A_c`: `Σ_j Π_j X Π_j`. Needs `l_j = 1`.
pub fn dephase_ac(x: &Operator, a_label: &str, decomp: &DspDecomposition) -> Result<Operator> {
    if decomp.blocks().iter().any(|&(l, _)| l != 1) {
        return Err(Error::NotRandomizedCase(format!(
            "dephasing on A_c needs l_j = 1 for all blocks, got {decomp}"
        )));
    }
    check_a(x, a_label, decomp)?;
    let a = Layout::single(a_label, decomp.dim());
    let mut acc = CMat::zeros(x.dim(), x.dim());
    for j in 0..decomp.num_blocks() {
        let p = Operator::new(decomp.projector(j), a.clone())?.lift(x.layout())?;
        acc += p.matrix() * x.matrix() * p.matrix();
    }
    Operator::new(acc, x.layout().clone())
}

/// State on `A ⊗ R_c ⊗ R_r` (with `A ≅ A_c ⊗ A_r`) that vanishes on
/// mismatched classical labels of `A_c R_c`.
#[derive(Clone, Debug)]
pub struct ClassicallyCoherentState {
    state: DensityOperator,
    blocks: Vec<Vec<CMat>>,
    decomp: DspDecomposition,
}

pub const R_C: &str = "Rc";
pub const R_R: &str = "Rr";

impl ClassicallyCoherentState {
    /// Build `Σ_{kk'} |k⟩⟨k'|^{A_c} ⊗ |k⟩⟨k'|^{R_c} ⊗ ϱ_{kk'}^{A_r R_r}` from a
    /// PSD parent on `K ⊗ A_r ⊗ R_r` (K of dimension J).
    pub fn from_parent(
        parent: &CMat,
        decomp: &DspDecomposition,
        a_label: &str,
        rr_dim: usize,
    ) -> Result<Self> {
        decomp.require_randomized_case()?;
        let (jn, r) = (decomp.num_blocks(), decomp.r(0));
        let w = r * rr_dim;
        if parent.nrows() != jn * w || parent.ncols() != jn * w {
            return Err(Error::Dimension(format!(
                "parent must be {0}x{0}, got {1}x{2}",
                jn * w,
                parent.nrows(),
                parent.ncols()
            )));
        }
        let layout = Layout::new([(a_label, jn * r), (R_C, jn), (R_R, rr_dim)])?;
        let n = layout.dim();
        let mut m = CMat::zeros(n, n);
        let idx = |k: usize, b: usize, rho: usize| ((k * r + b) * jn + k) * rr_dim + rho;
        let mut blocks = vec![vec![CMat::zeros(w, w); jn]; jn];
        for k in 0..jn {
            for k2 in 0..jn {
                let blk = parent.view((k * w, k2 * w), (w, w)).clone_owned();
                for b in 0..r {
                    for rho in 0..rr_dim {
                        for b2 in 0..r {
                            for rho2 in 0..rr_dim {
                                m[(idx(k, b, rho), idx(k2, b2, rho2))] = blk[(b * rr_dim + rho, b2 * rr_dim + rho2)];
                            }
                        }
                    }
                }
                blocks[k][k2] = blk;
            }
        }
        let state = DensityOperator::positive(Operator::new(m, layout)?)?;
        Ok(Self { state, blocks, decomp: decomp.clone() })
    }

    /// Validate an existing state on `A ⊗ R_c ⊗ R_r` and extract its blocks.
    pub fn new(state: DensityOperator, a_label: &str, decomp: &DspDecomposition) -> Result<Self> {
        decomp.require_randomized_case()?;
        let (jn, r) = (decomp.num_blocks(), decomp.r(0));
        let x = state.operator().reorder(&[a_label, R_C, R_R])?;
        if x.layout().dim_of(a_label)? != jn * r || x.layout().dim_of(R_C)? != jn {
            return Err(Error::Dimension("state layout does not match decomposition".into()));
        }
        let rr = x.layout().dim_of(R_R)?;
        let m = x.matrix();
        let idx = |ka: usize, b: usize, kr: usize, rho: usize| ((ka * r + b) * jn + kr) * rr + rho;
        let tol = 1e-10;
        for ka in 0..jn {
            for kr in 0..jn {
                if ka == kr {
                    continue;
                }
                for b in 0..r {
                    for rho in 0..rr {
                        let col = idx(ka, b, kr, rho);
                        for row in 0..m.nrows() {
                            if m[(row, col)].norm() > tol {
                                return Err(Error::Precondition(format!(
                                    "state is not classically coherent: entry ({row},{col}) = {:.3e}",
                                    m[(row, col)].norm()
                                )));
                            }
                        }
                    }
                }
            }
        }
        let w = r * rr;
        let mut blocks = vec![vec![CMat::zeros(w, w); jn]; jn];
        for k in 0..jn {
            for k2 in 0..jn {
                for b in 0..r {
                    for rho in 0..rr {
                        for b2 in 0..r {
                            for rho2 in 0..rr {
                                blocks[k][k2][(b * rr + rho, b2 * rr + rho2)] = m[(idx(k, b, k, rho), idx(k2, b2, k2, rho2))];
                            }
                        }
                    }
                }
            }
        }
        Ok(Self { state, blocks, decomp: decomp.clone() })
    }

    pub fn state(&self) -> &DensityOperator {
        &self.state
    }

    pub fn into_state(self) -> DensityOperator {
        self.state
    }

    /// `ϱ_{kk'}` on `A_r ⊗ R_r`.
    pub fn block(&self, k: usize, k2: usize) -> &CMat {
        &self.blocks[k][k2]
    }

    pub fn decomposition(&self) -> &DspDecomposition {
        &self.decomp
    }
}
