//! Completely positive maps stored as normalized Choi operators
//! `τ = Σ_{ij} (1/d_A) |i⟩⟨j| ⊗ T(|i⟩⟨j|)`.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dsp::{dsp_maximally_entangled, DspDecomposition};
use crate::error::{Error, Result};
use crate::linalg::{
    c, eigh, identity, kron, lambda_min, trace_norm_herm, CMat, CVec, DensityOperator, Layout, Operator, C64, TOL,
};
use crate::sampling::{ginibre, ordered_map, random_mixed_state, RngStream};

/// Label of the input factor of every Choi operator.
pub const INPUT: &str = "A";
/// Default label of a single output factor.
pub const OUTPUT: &str = "E";
/// Label of the environment of a Stinespring dilation.
pub const COMPLEMENT: &str = "B";
/// Label of the coherent block-index copy.
pub const BLOCK_COPY: &str = "Ec";

/// Numerical rank threshold for Choi eigenvalues.
pub const RANK_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CpMap {
    choi: Operator,
    d_in: usize,
    output: Layout,
    trace_preserving: bool,
    trace_nonincreasing: bool,
}

impl CpMap {
    /// Validate a Choi operator whose first factor is [`INPUT`].
    pub fn from_choi(choi: Operator) -> Result<Self> {
        let (first, d_in) = choi
            .layout()
            .factors()
            .first()
            .cloned()
            .ok_or_else(|| Error::Dimension("empty Choi layout".into()))?;
        if first != INPUT {
            return Err(Error::Dimension(format!("Choi input factor must be `{INPUT}`, got `{first}`")));
        }
        let output = choi.layout().complement(&[INPUT])?;
        let herm_err = choi.hermiticity_error();
        if herm_err > TOL.hermiticity * choi.matrix().norm().max(1.0) * 1e3 {
            return Err(Error::NotHermitian(herm_err));
        }
        let choi = choi.map_matrix(crate::linalg::hermitian_part)?;
        let min = lambda_min(choi.matrix());
        if min < -RANK_THRESHOLD {
            return Err(Error::NotCompletelyPositive(min));
        }
        let marginal = choi.partial_trace(&[INPUT])?;
        let target = identity(d_in) * c(1.0 / d_in as f64);
        let diff = marginal.matrix() - &target;
        let trace_preserving = diff.norm() <= TOL.equality;
        let trace_nonincreasing = lambda_min(&(-diff)) >= -TOL.equality;
        Ok(Self { choi, d_in, output, trace_preserving, trace_nonincreasing })
    }

    /// Build from the action on matrix units: `action(i, j) = T(|i⟩⟨j|)`.
    pub fn choi_of(action: impl Fn(usize, usize) -> CMat, d_in: usize, output: Layout) -> Result<Self> {
        let de = output.dim();
        let mut tau = CMat::zeros(d_in * de, d_in * de);
        for i in 0..d_in {
            for j in 0..d_in {
                let img = action(i, j);
                if img.nrows() != de || img.ncols() != de {
                    return Err(Error::Dimension(format!(
                        "image of |{i}><{j}| is {}x{}, expected {de}x{de}",
                        img.nrows(),
                        img.ncols()
                    )));
                }
                tau.view_mut((i * de, j * de), (de, de)).copy_from(&(img / c(d_in as f64)));
            }
        }
        let layout = Layout::single(INPUT, d_in).concat(&output)?;
        Self::from_choi(Operator::new(tau, layout)?)
    }

    pub fn from_kraus(kraus: &[CMat], d_in: usize, output: Layout) -> Result<Self> {
        for k in kraus {
            if k.ncols() != d_in || k.nrows() != output.dim() {
                return Err(Error::Dimension("Kraus operator shape mismatch".into()));
            }
        }
        Self::choi_of(
            |i, j| {
                let mut acc = CMat::zeros(output.dim(), output.dim());
                for k in kraus {
                    acc += k.column(i) * k.column(j).adjoint();
                }
                acc
            },
            d_in,
            output.clone(),
        )
    }

    pub fn identity(d: usize) -> Self {
        Self::choi_of(
            |i, j| {
                let mut m = CMat::zeros(d, d);
                m[(i, j)] = c(1.0);
                m
            },
            d,
            Layout::single(OUTPUT, d),
        )
        .expect("identity channel is valid")
    }

    /// `ρ ↦ Tr[ρ] π_E`.
    pub fn completely_depolarizing(d_in: usize, d_out: usize) -> Self {
        Self::choi_of(
            |i, j| if i == j { identity(d_out) * c(1.0 / d_out as f64) } else { CMat::zeros(d_out, d_out) },
            d_in,
            Layout::single(OUTPUT, d_out),
        )
        .expect("depolarizing channel is valid")
    }

    /// `ρ ↦ (1 - p) ρ + p Tr[ρ] π`.
    pub fn depolarizing(p: f64, d: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ChannelSpec(format!("depolarizing({p})")));
        }
        Self::choi_of(
            |i, j| {
                let mut m = CMat::zeros(d, d);
                m[(i, j)] = c(1.0 - p);
                if i == j {
                    m += identity(d) * c(p / d as f64);
                }
                m
            },
            d,
            Layout::single(OUTPUT, d),
        )
    }

    /// Completely dephasing channel in the computational basis.
    pub fn dephasing(d: usize) -> Self {
        Self::choi_of(
            |i, j| {
                let mut m = CMat::zeros(d, d);
                if i == j {
                    m[(i, i)] = c(1.0);
                }
                m
            },
            d,
            Layout::single(OUTPUT, d),
        )
        .expect("dephasing channel is valid")
    }

    /// Regard `A` as `C^keep ⊗ C^{d_A / keep}` and discard the second factor.
    pub fn partial_trace(d_in: usize, keep: usize) -> Result<Self> {
        if keep == 0 || d_in % keep != 0 {
            return Err(Error::ChannelSpec(format!("partial-trace({keep}) on dimension {d_in}")));
        }
        let drop = d_in / keep;
        Self::choi_of(
            |i, j| {
                let mut m = CMat::zeros(keep, keep);
                if i % drop == j % drop {
                    m[(i / drop, j / drop)] = c(1.0);
                }
                m
            },
            d_in,
            Layout::single(OUTPUT, keep),
        )
    }

    /// Trace-preserving map with `k` Kraus operators `G_i S^{-1/2}`, where
    /// `G_i` are Ginibre matrices and `S = Σ G_i^dag G_i`. Needs
    /// `k · d_out ≥ d_in`, otherwise `S` is singular.
    pub fn random_kraus(d_in: usize, d_out: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if k == 0 || k * d_out < d_in {
            return Err(Error::ChannelSpec(format!(
                "random-kraus({k}) cannot be trace preserving from dimension {d_in} to {d_out}"
            )));
        }
        let gs: Vec<CMat> = (0..k).map(|_| ginibre(d_out, d_in, rng)).collect();
        let mut s = CMat::zeros(d_in, d_in);
        for g in &gs {
            s += g.adjoint() * g;
        }
        let s_inv_half = crate::linalg::psd_power(&s, -0.5)?;
        let kraus: Vec<CMat> = gs.iter().map(|g| g * &s_inv_half).collect();
        Self::from_kraus(&kraus, d_in, Layout::single(OUTPUT, d_out))
    }

    pub fn choi(&self) -> &Operator {
        &self.choi
    }

    /// The Choi operator with its input factor renamed.
    pub fn choi_labeled(&self, input: &str) -> Result<Operator> {
        self.choi.relabel(INPUT, input)
    }

    pub fn choi_state(&self) -> Result<DensityOperator> {
        DensityOperator::positive(self.choi.clone())
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn output_layout(&self) -> &Layout {
        &self.output
    }

    pub fn output_dim(&self) -> usize {
        self.output.dim()
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    pub fn is_trace_nonincreasing(&self) -> bool {
        self.trace_nonincreasing
    }

    pub fn choi_trace(&self) -> f64 {
        self.choi.trace().re
    }

    /// Apply the map to factor `a_label` of `rho`; the output factors take the
    /// position of `a_label`.
    pub fn apply(&self, rho: &Operator, a_label: &str) -> Result<Operator> {
        let d_a = rho.layout().dim_of(a_label)?;
        if d_a != self.d_in {
            return Err(Error::Dimension(format!("channel input has dimension {}, got {d_a}", self.d_in)));
        }
        let names: Vec<String> = rho.layout().names().map(String::from).collect();
        let (x, rest) = crate::dsp::a_first(rho, a_label)?;
        let dc = rest.dim();
        let de = self.output.dim();
        let tau = self.choi.matrix();
        let xm = x.matrix();
        let mut out = CMat::zeros(de * dc, de * dc);
        for i in 0..d_a {
            for j in 0..d_a {
                let timg = tau.view((i * de, j * de), (de, de));
                if timg.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                    continue;
                }
                let rimg = xm.view((i * dc, j * dc), (dc, dc));
                out += kron(&timg.clone_owned(), &rimg.clone_owned()) * c(d_a as f64);
            }
        }
        let layout = self.output.concat(&rest)?;
        let result = Operator::new(out, layout)?;
        let mut order: Vec<&str> = Vec::new();
        for n in &names {
            if n == a_label {
                order.extend(self.output.names());
            } else {
                order.push(n);
            }
        }
        result.reorder(&order)
    }

    /// Apply to an operator on the input space alone.
    pub fn apply_matrix(&self, rho: &CMat) -> Result<CMat> {
        let op = Operator::new(rho.clone(), Layout::single(INPUT, self.d_in))?;
        Ok(self.apply(&op, INPUT)?.into_matrix())
    }

    /// `T ∘ Y` with `Y = Σ_j Π_j ⊗ |j⟩^{E_c}`, whose Choi operator is
    /// `Σ_{jk} Π_j τ Π_k ⊗ |j⟩⟨k|^{E_c}`.
    pub fn with_block_copy(&self, decomp: &DspDecomposition) -> Result<Self> {
        self.check_decomp(decomp)?;
        let jn = decomp.num_blocks();
        let de = self.output.dim();
        let tau = self.choi.matrix();
        let block_of: Vec<usize> =
            (0..decomp.dim()).map(|i| (0..jn).rfind(|&j| decomp.offset(j) <= i).unwrap_or(0)).collect();
        let n = self.d_in * de * jn;
        let mut m = CMat::zeros(n, n);
        for i in 0..self.d_in {
            for i2 in 0..self.d_in {
                let (j, k) = (block_of[i], block_of[i2]);
                for e in 0..de {
                    for e2 in 0..de {
                        m[((i * de + e) * jn + j, (i2 * de + e2) * jn + k)] = tau[(i * de + e, i2 * de + e2)];
                    }
                }
            }
        }
        let layout = self.choi.layout().concat(&Layout::single(BLOCK_COPY, jn))?;
        Self::from_choi(Operator::new(m, layout)?)
    }

    /// `T ∘ C` where `C` is the pinching `Σ_j Π_j · Π_j` on the input.
    pub fn with_input_dephasing(&self, decomp: &DspDecomposition) -> Result<Self> {
        self.check_decomp(decomp)?;
        let mut acc = CMat::zeros(self.choi.dim(), self.choi.dim());
        for j in 0..decomp.num_blocks() {
            let p = Operator::new(decomp.projector(j), Layout::single(INPUT, self.d_in))?.lift(self.choi.layout())?;
            acc += p.matrix() * self.choi.matrix() * p.matrix();
        }
        Self::from_choi(Operator::new(acc, self.choi.layout().clone())?)
    }

    fn check_decomp(&self, decomp: &DspDecomposition) -> Result<()> {
        if decomp.dim() != self.d_in {
            return Err(Error::Dimension(format!(
                "decomposition has d_A = {}, channel input is {}",
                decomp.dim(),
                self.d_in
            )));
        }
        Ok(())
    }

    /// Minimal Stinespring dilation. `budget` bounds the dimension of `B`.
    pub fn complementary(&self, budget: Option<usize>) -> Result<Complement> {
        if !self.trace_nonincreasing {
            return Err(Error::Precondition("complementary channel needs a trace-nonincreasing map".into()));
        }
        let (vals, vecs) = eigh(self.choi.matrix());
        let kept: Vec<usize> = (0..vals.len()).filter(|&m| vals[m] > RANK_THRESHOLD).collect();
        let rank = kept.len().max(1);
        if let Some(b) = budget {
            if rank > b {
                return Err(Error::RankBudget { rank, budget: b });
            }
        }
        let n = self.choi.dim();
        let mut ket = CVec::zeros(n * rank);
        for (slot, &m) in kept.iter().enumerate() {
            let amp = vals[m].sqrt();
            for x in 0..n {
                ket[x * rank + slot] = vecs[(x, m)] * amp;
            }
        }
        let purified_layout = self.choi.layout().concat(&Layout::single(COMPLEMENT, rank))?;
        let purified = Operator::from_ket(&ket, purified_layout.clone())?;
        let choi_b = purified.partial_trace(&[INPUT, COMPLEMENT])?;
        let map = CpMap::from_choi(choi_b)?;

        // V|i⟩ = √d_A (⟨i| ⊗ I)|τ⟩, rows ordered as (E, B)
        let tail = n / self.d_in * rank;
        let sq = (self.d_in as f64).sqrt();
        let mut v = CMat::zeros(tail, self.d_in);
        for i in 0..self.d_in {
            for t in 0..tail {
                v[(t, i)] = ket[i * tail + t] * sq;
            }
        }
        Ok(Complement { map, purified_ket: ket, purified_layout, stinespring: v })
    }
}

/// Complementary channel together with the dilation it came from.
#[derive(Clone, Debug)]
pub struct Complement {
    pub map: CpMap,
    /// `|τ⟩` on `A ⊗ E ⊗ B`.
    pub purified_ket: CVec,
    pub purified_layout: Layout,
    /// `V: A → E ⊗ B`.
    pub stinespring: CMat,
}

impl Complement {
    pub fn purified(&self) -> Result<DensityOperator> {
        DensityOperator::pure(&self.purified_ket, self.purified_layout.clone())
    }
}

/// Lower bound on `sup_ξ ‖(T1 - T2)(ξ^{AC})‖_1` over sampled admissible `ξ`
/// with `C = A'`. Trial 0 is the DSP maximally entangled state.
pub fn dsp_norm_lower_bound(
    t1: &CpMap,
    t2: &CpMap,
    decomp: &DspDecomposition,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Precondition("dsp_norm_lower_bound needs trials >= 1".into()));
    }
    if t1.output_layout() != t2.output_layout() || t1.input_dim() != t2.input_dim() {
        return Err(Error::Dimension("maps must share input and output spaces".into()));
    }
    t1.check_decomp(decomp)?;
    let values = ordered_map(trials, |t| -> Result<f64> {
        let xi = if t == 0 {
            dsp_maximally_entangled(decomp, INPUT, "A'")?.into_operator()
        } else {
            let mut rng = RngStream::new(seed, t as u64).rng();
            admissible_state(decomp, &mut rng)?
        };
        let diff = t1.apply(&xi, INPUT)?.matrix() - t2.apply(&xi, INPUT)?.matrix();
        Ok(trace_norm_herm(&diff))
    });
    let mut best = 0.0f64;
    for v in values {
        best = best.max(v?);
    }
    Ok(best)
}

/// Purification on `A ⊗ A'` of `⊕_j q_j ϖ_j ⊗ π_j` with random `q`, `ϖ_j`.
fn admissible_state(decomp: &DspDecomposition, rng: &mut ChaCha8Rng) -> Result<Operator> {
    use rand::Rng;
    let d = decomp.dim();
    let raw: Vec<f64> = (0..decomp.num_blocks()).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut reduced = CMat::zeros(d, d);
    for j in 0..decomp.num_blocks() {
        let (l, r) = decomp.blocks()[j];
        let w = random_mixed_state(l, l, rng);
        let q = raw[j] / total;
        for a in 0..l {
            for a2 in 0..l {
                for b in 0..r {
                    reduced[(decomp.index(j, a, b), decomp.index(j, a2, b))] = w[(a, a2)] * c(q / r as f64);
                }
            }
        }
    }
    let sq = crate::linalg::psd_sqrt(&reduced)?;
    let mut ket = CVec::zeros(d * d);
    for i in 0..d {
        for x in 0..d {
            ket[x * d + i] = sq[(x, i)];
        }
    }
    Operator::from_ket(&ket, Layout::new([(INPUT, d), ("A'", d)])?)
}

/// Channel presets addressable by name from configuration files.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelSpec {
    Identity,
    Depolarizing(f64),
    Dephasing,
    PartialTrace(usize),
    RandomKraus { k: usize, seed: u64 },
}

impl ChannelSpec {
    /// Instantiate on input dimension `d_in`. `output_dim` is used only by
    /// presets whose output dimension is free.
    pub fn build(&self, d_in: usize, output_dim: usize) -> Result<CpMap> {
        match *self {
            ChannelSpec::Identity => Ok(CpMap::identity(d_in)),
            ChannelSpec::Depolarizing(p) => CpMap::depolarizing(p, d_in),
            ChannelSpec::Dephasing => Ok(CpMap::dephasing(d_in)),
            ChannelSpec::PartialTrace(keep) => CpMap::partial_trace(d_in, keep),
            ChannelSpec::RandomKraus { k, seed } => {
                let mut rng = RngStream::new(seed, 0).rng();
                CpMap::random_kraus(d_in, output_dim, k, &mut rng)
            }
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Identity => write!(f, "identity"),
            ChannelSpec::Depolarizing(p) => write!(f, "depolarizing({p})"),
            ChannelSpec::Dephasing => write!(f, "dephasing"),
            ChannelSpec::PartialTrace(k) => write!(f, "partial-trace({k})"),
            ChannelSpec::RandomKraus { k, seed } => write!(f, "random-kraus({k}, {seed})"),
        }
    }
}

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ChannelSpec(format!("`{s}`"));
        let compact: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
        let (name, args) = match compact.split_once('(') {
            Some((n, rest)) => (n.to_string(), Some(rest.strip_suffix(')').ok_or_else(bad)?.to_string())),
            None => (compact.clone(), None),
        };
        let args: Vec<&str> = match &args {
            Some(a) if !a.is_empty() => a.split(',').collect(),
            Some(_) => return Err(bad()),
            None => Vec::new(),
        };
        match (name.as_str(), args.as_slice()) {
            ("identity", []) => Ok(ChannelSpec::Identity),
            ("dephasing", []) => Ok(ChannelSpec::Dephasing),
            ("depolarizing", [p]) => {
                let p: f64 = p.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad());
                }
                Ok(ChannelSpec::Depolarizing(p))
            }
            ("partial-trace", [k]) => Ok(ChannelSpec::PartialTrace(k.parse().map_err(|_| bad())?)),
            ("random-kraus", [k, seed]) => Ok(ChannelSpec::RandomKraus {
                k: k.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ChannelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ChannelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::testutil::{max_entangled, random_density, random_matrix, seeded};

    fn kraus_apply(kraus: &[CMat], rho: &CMat) -> CMat {
        let mut acc = CMat::zeros(kraus[0].nrows(), kraus[0].nrows());
        for k in kraus {
            acc += k * rho * k.adjoint();
        }
        acc
    }

    #[test]
    fn identity_choi_is_maximally_entangled() {
        let t = CpMap::identity(3);
        let phi = max_entangled(3);
        assert!(max_abs_diff(t.choi().matrix(), &(&phi * phi.adjoint())) < 1e-15);
        assert!(t.is_trace_preserving());
        let mut rng = seeded(1);
        let rho = random_density(3, &mut rng);
        assert!(max_abs_diff(&t.apply_matrix(&rho).unwrap(), &rho) < 1e-14);
    }

    #[test]
    fn completely_depolarizing_examples() {
        let t = CpMap::completely_depolarizing(2, 3);
        let expect = kron(&(identity(2) * c(0.5)), &(identity(3) * c(1.0 / 3.0)));
        assert!(max_abs_diff(t.choi().matrix(), &expect) < 1e-15);
        let mut rng = seeded(2);
        let rho = Operator::new(random_density(4, &mut rng), Layout::new([("A", 2), ("C", 2)]).unwrap()).unwrap();
        let out = t.apply(&rho, "A").unwrap();
        let expect = kron(&(identity(3) * c(1.0 / 3.0)), rho.partial_trace(&["C"]).unwrap().matrix());
        assert!(max_abs_diff(out.matrix(), &expect) < 1e-14);
    }

    #[test]
    fn kraus_oracle_and_round_trip() {
        let mut rng = seeded(3);
        let kraus: Vec<CMat> = (0..3).map(|_| ginibre(2, 3, &mut rng)).collect();
        let t = CpMap::from_kraus(&kraus, 3, Layout::single(OUTPUT, 2)).unwrap();
        for _ in 0..5 {
            let rho = random_matrix(3, &mut rng);
            assert!(max_abs_diff(&t.apply_matrix(&rho).unwrap(), &kraus_apply(&kraus, &rho)) < 1e-10);
        }
        let again = CpMap::choi_of(
            |i, j| {
                let mut u = CMat::zeros(3, 3);
                u[(i, j)] = c(1.0);
                t.apply_matrix(&u).unwrap()
            },
            3,
            Layout::single(OUTPUT, 2),
        )
        .unwrap();
        assert!(max_abs_diff(again.choi().matrix(), t.choi().matrix()) < 1e-10);
    }

    #[test]
    fn apply_keeps_factor_position_and_linearity() {
        let mut rng = seeded(4);
        let t = CpMap::random_kraus(2, 3, 2, &mut rng).unwrap();
        assert!(t.is_trace_preserving());
        let lay = Layout::new([("C", 2), ("A", 2), ("D", 3)]).unwrap();
        let x = Operator::new(random_matrix(12, &mut rng), lay.clone()).unwrap();
        let y = Operator::new(random_matrix(12, &mut rng), lay).unwrap();
        let out = t.apply(&x, "A").unwrap();
        assert_eq!(out.layout().names().collect::<Vec<_>>(), vec!["C", "E", "D"]);
        let comb = x.scale(0.3).add(&y.scale(-1.7)).unwrap();
        let lhs = t.apply(&comb, "A").unwrap();
        let rhs = out.scale(0.3).add(&t.apply(&y, "A").unwrap().scale(-1.7)).unwrap();
        assert!(max_abs_diff(lhs.matrix(), rhs.matrix()) < 1e-11);
        assert!((out.trace() - x.trace()).norm() < 1e-12);
    }

    #[test]
    fn non_cp_rejected() {
        // transpose map
        let r = CpMap::choi_of(
            |i, j| {
                let mut m = CMat::zeros(2, 2);
                m[(j, i)] = c(1.0);
                m
            },
            2,
            Layout::single(OUTPUT, 2),
        );
        assert!(matches!(r, Err(Error::NotCompletelyPositive(_))));
    }

    #[test]
    fn complement_marginals() {
        let mut rng = seeded(5);
        let t = CpMap::random_kraus(2, 2, 3, &mut rng).unwrap();
        let comp = t.complementary(None).unwrap();
        let pure = comp.purified().unwrap();
        let ae = pure.partial_trace(&[INPUT, OUTPUT]).unwrap();
        assert!(max_abs_diff(ae.matrix(), t.choi().matrix()) < 1e-10);
        let v = &comp.stinespring;
        assert!(max_abs_diff(&(v.adjoint() * v), &identity(2)) < 1e-10);
        assert!(comp.map.is_trace_preserving());
        assert!(matches!(t.complementary(Some(2)), Err(Error::RankBudget { rank: 3, budget: 2 })));

        let id = CpMap::identity(3).complementary(None).unwrap();
        assert_eq!(id.map.output_dim(), 1);
        let rho = random_density(3, &mut rng);
        assert!((id.map.apply_matrix(&rho).unwrap()[(0, 0)] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn block_copy_and_dephasing() {
        let mut rng = seeded(6);
        let d = DspDecomposition::uniform(2, 2).unwrap();
        let t = CpMap::random_kraus(4, 2, 2, &mut rng).unwrap();
        let tc = t.with_block_copy(&d).unwrap();
        assert!(tc.is_trace_preserving());
        let back = tc.choi().partial_trace(&[INPUT, OUTPUT]).unwrap();
        // tracing E_c dephases the input blocks
        let deph = t.with_input_dephasing(&d).unwrap();
        assert!(max_abs_diff(back.matrix(), deph.choi().matrix()) < 1e-14);
        // with J = 1 the copy is a product with |0⟩⟨0|
        let one = DspDecomposition::new(vec![(1, 4)]).unwrap();
        let t1 = t.with_block_copy(&one).unwrap();
        assert!(max_abs_diff(t1.choi().matrix(), t.choi().matrix()) < 1e-15);
    }

    #[test]
    fn dsp_norm_examples() {
        let d = DspDecomposition::new(vec![(1, 2)]).unwrap();
        let id = CpMap::identity(2);
        assert_eq!(dsp_norm_lower_bound(&id, &id, &d, 5, 1).unwrap(), 0.0);
        let dep = CpMap::completely_depolarizing(2, 2);
        let lb = dsp_norm_lower_bound(&id, &dep, &d, 8, 2).unwrap();
        let phi = Operator::from_ket(&max_entangled(2), Layout::new([(INPUT, 2), ("A'", 2)]).unwrap()).unwrap();
        let at_phi = trace_norm_herm(&(id.apply(&phi, INPUT).unwrap().matrix() - dep.apply(&phi, INPUT).unwrap().matrix()));
        assert!(lb >= at_phi - 1e-12);
        assert!((at_phi - 1.5).abs() < 1e-12);
    }

    #[test]
    fn spec_parsing() {
        for s in ["identity", "depolarizing(0.25)", "dephasing", "partial-trace(2)", "random-kraus(3, 7)"] {
            let spec: ChannelSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<ChannelSpec>().unwrap(), spec);
        }
        for s in ["", "identity()", "depolarizing(2)", "foo", "random-kraus(3)", "partial-trace(x)"] {
            assert!(s.parse::<ChannelSpec>().is_err(), "{s}");
        }
        assert!(ChannelSpec::PartialTrace(3).build(4, 2).is_err());
        assert_eq!(ChannelSpec::PartialTrace(2).build(4, 9).unwrap().output_dim(), 2);
    }
}
