//! End-to-end checks of the partial decoupling inequalities: Monte Carlo
//! estimates of the averaged trace distance against exactly computed bounds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channels::{ChannelSpec, CpMap, INPUT};
use crate::dsp::{
    averaged_state, build_lambda, dephase_ac, dsp_maximally_entangled, ClassicallyCoherentState, DspDecomposition,
    A_STAR,
};
use crate::entropy::{h2_fixed, h_min_opt, EntropyResult};
use crate::error::{Error, Result};
use crate::linalg::{c, identity, kron, trace_norm_herm, weighted_two_norm, CMat, DensityOperator, Layout, Operator};
use crate::sampling::{
    dsp_unitary, exact_average_2norm, inverse_permutation, mean_and_stderr, ordered_map, permutation_unitary,
    random_mixed_state, random_permutation, twisted_twirl_empirical, twisted_twirl_pattern, RngStream, TwirlCase,
};

/// Label of the reference system in non-randomized experiments.
pub const REFERENCE: &str = "R";

/// Statistical slack in units of the standard error.
pub const SLACK_SE: f64 = 3.0;

/// Factor by which the sample count grows on a retry.
pub const RETRY_FACTOR: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    NonrandomizedPd,
    RandomizedPd,
    DecouplingJ1,
    Dequantization,
}

impl Mode {
    pub fn is_randomized(self) -> bool {
        !matches!(self, Mode::NonrandomizedPd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NonrandomizedPd => "nonrandomized-pd",
            Mode::RandomizedPd => "randomized-pd",
            Mode::DecouplingJ1 => "decoupling-j1",
            Mode::Dequantization => "dequantization",
        }
    }

    /// Check the structural constraints of the mode.
    pub fn validate(self, decomp: &DspDecomposition) -> Result<()> {
        if self.is_randomized() {
            decomp.require_randomized_case()?;
        }
        match self {
            Mode::DecouplingJ1 if decomp.num_blocks() != 1 => Err(Error::Precondition(format!(
                "decoupling-j1 needs a single block, got {decomp}"
            ))),
            Mode::Dequantization if decomp.r(0) != 1 => Err(Error::Precondition(format!(
                "dequantization needs r = 1, got {decomp}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nonrandomized-pd" => Ok(Mode::NonrandomizedPd),
            "randomized-pd" => Ok(Mode::RandomizedPd),
            "decoupling-j1" => Ok(Mode::DecouplingJ1),
            "dequantization" => Ok(Mode::Dequantization),
            other => Err(Error::Precondition(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StatePreset {
    MaximallyEntangled,
    Random(u64),
}

impl fmt::Display for StatePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatePreset::MaximallyEntangled => f.write_str("maximally-entangled"),
            StatePreset::Random(seed) => write!(f, "random({seed})"),
        }
    }
}

impl FromStr for StatePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
        if compact == "maximally-entangled" {
            return Ok(StatePreset::MaximallyEntangled);
        }
        compact
            .strip_prefix("random(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|n| n.parse().ok())
            .map(StatePreset::Random)
            .ok_or_else(|| Error::Precondition(format!("unknown state preset `{s}`")))
    }
}

impl Serialize for StatePreset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StatePreset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Conditioner used for the collision-entropy reference bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionerPolicy {
    SdpOptimal,
    MaximallyMixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub decomposition: DspDecomposition,
    pub samples: usize,
    pub seed: u64,
    pub state: StatePreset,
    /// Reference dimension: `d_R` for non-randomized runs, `d_{R_r}` otherwise.
    pub reference_dim: Option<usize>,
    pub channel: ChannelSpec,
    pub output_dim: usize,
    pub conditioner: ConditionerPolicy,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, decomposition: DspDecomposition) -> Self {
        Self {
            mode,
            decomposition,
            samples: 2000,
            seed: 0,
            state: StatePreset::MaximallyEntangled,
            reference_dim: None,
            channel: ChannelSpec::Identity,
            output_dim: 2,
            conditioner: ConditionerPolicy::SdpOptimal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate(&self.decomposition)?;
        if self.samples < 2 {
            return Err(Error::Precondition("samples must be at least 2".into()));
        }
        if self.output_dim == 0 || self.reference_dim == Some(0) {
            return Err(Error::Dimension("dimensions must be positive".into()));
        }
        if let (StatePreset::MaximallyEntangled, Some(dr)) = (self.state, self.reference_dim) {
            let expect = if self.mode.is_randomized() { self.decomposition.r(0) } else { self.decomposition.dim() };
            if dr != expect {
                return Err(Error::Dimension(format!(
                    "maximally-entangled state fixes the reference dimension to {expect}, got {dr}"
                )));
            }
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<Instance> {
        self.validate()?;
        let decomp = &self.decomposition;
        let channel = self.channel.build(decomp.dim(), self.output_dim)?;
        let psi = if self.mode.is_randomized() {
            let r = decomp.r(0);
            let jn = decomp.num_blocks();
            let (parent, rr) = match self.state {
                StatePreset::MaximallyEntangled => {
                    let n = jn * r * r;
                    let mut v = crate::linalg::CVec::zeros(n);
                    for k in 0..jn {
                        for b in 0..r {
                            v[(k * r + b) * r + b] = c(1.0 / ((jn * r) as f64).sqrt());
                        }
                    }
                    (&v * v.adjoint(), r)
                }
                StatePreset::Random(seed) => {
                    let rr = self.reference_dim.unwrap_or(r);
                    let n = jn * r * rr;
                    (random_mixed_state(n, n, &mut RngStream::new(seed, 0).rng()), rr)
                }
            };
            ClassicallyCoherentState::from_parent(&parent, decomp, INPUT, rr)?.into_state()
        } else {
            match self.state {
                StatePreset::MaximallyEntangled => dsp_maximally_entangled(decomp, INPUT, REFERENCE)?,
                StatePreset::Random(seed) => {
                    let dr = self.reference_dim.unwrap_or(decomp.dim());
                    let n = decomp.dim() * dr;
                    let m = random_mixed_state(n, n, &mut RngStream::new(seed, 0).rng());
                    DensityOperator::normalized(Operator::new(m, Layout::new([(INPUT, decomp.dim()), (REFERENCE, dr)])?)?)?
                }
            }
        };
        Instance::new(decomp.clone(), psi, channel)
    }
}

/// A state on `A ⊗ R...` (with `A` first) and a channel on `A`.
#[derive(Clone, Debug)]
pub struct Instance {
    pub decomp: DspDecomposition,
    pub psi: DensityOperator,
    pub channel: CpMap,
}

impl Instance {
    pub fn new(decomp: DspDecomposition, psi: DensityOperator, channel: CpMap) -> Result<Self> {
        let first = psi.layout().factors().first().map(|f| f.0.clone());
        if first.as_deref() != Some(INPUT) {
            return Err(Error::Dimension(format!("state must carry `{INPUT}` as its first factor")));
        }
        if psi.layout().dim_of(INPUT)? != decomp.dim() || channel.input_dim() != decomp.dim() {
            return Err(Error::Dimension("state, channel and decomposition disagree on d_A".into()));
        }
        for name in channel.output_layout().names() {
            if psi.layout().contains(name) {
                return Err(Error::DuplicateLabel(name.to_string()));
            }
        }
        Ok(Self { decomp, psi, channel })
    }

    pub fn reference_labels(&self) -> Vec<String> {
        self.psi.layout().names().skip(1).map(String::from).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub decomposition: DspDecomposition,
    #[serde(rename = "J")]
    pub j: usize,
    pub r: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub seed: u64,
    pub lhs_mean: f64,
    pub lhs_stderr: f64,
    pub rhs_terms: BTreeMap<String, f64>,
    pub rhs_total: f64,
    pub margin: f64,
    pub retried: bool,
    /// Largest certified SDP gap (bits) among the entropies in the bound.
    pub max_sdp_gap: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.margin >= 0.0
    }
}

/// Exact right-hand side with its named ingredients.
#[derive(Clone, Debug, PartialEq)]
pub struct RhsBound {
    pub terms: BTreeMap<String, f64>,
    pub total: f64,
    pub max_sdp_gap: f64,
}

fn gap_of(r: &EntropyResult) -> f64 {
    r.certificate.map(|c| c.gap).unwrap_or(0.0)
}

fn lift_unitary(u: &CMat, rest: usize) -> CMat {
    kron(u, &identity(rest))
}

/// Sample mean and standard error of `‖T(UΨU^dag) - T(Ψ_av)‖_1` over `U ~ H_×`.
pub fn estimate_lhs_nonrandomized(
    psi: &Operator,
    t: &CpMap,
    decomp: &DspDecomposition,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::Precondition("need at least 2 samples".into()));
    }
    let (psi, rest) = crate::dsp::a_first(psi, INPUT)?;
    let avg = averaged_state(&psi, INPUT, decomp)?;
    let dr = rest.dim();
    let values = ordered_map(samples, |i| -> Result<f64> {
        let mut rng = RngStream::new(seed, i as u64).rng();
        let u = lift_unitary(dsp_unitary(decomp, &mut rng).matrix(), dr);
        let diff = psi.map_matrix(|m| &u * m * u.adjoint() - avg.matrix())?;
        Ok(trace_norm_herm(t.apply(&diff, INPUT)?.matrix()))
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    Ok(mean_and_stderr(&values))
}

/// Sample mean and standard error of `‖T(G_σ U (Ψ - Ψ_av) U^dag G_σ^dag)‖_1`
/// over joint draws of `σ` and `U ~ H_×`. Sample `i` draws `σ` first, then `U`,
/// from stream `i`.
pub fn estimate_lhs_randomized(
    psi: &Operator,
    t: &CpMap,
    decomp: &DspDecomposition,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    decomp.require_randomized_case()?;
    if samples < 2 {
        return Err(Error::Precondition("need at least 2 samples".into()));
    }
    let (psi, rest) = crate::dsp::a_first(psi, INPUT)?;
    let avg = averaged_state(&psi, INPUT, decomp)?;
    let dr = rest.dim();
    let values = ordered_map(samples, |i| -> Result<f64> {
        let mut rng = RngStream::new(seed, i as u64).rng();
        let sigma = random_permutation(decomp.num_blocks(), &mut rng);
        let g = permutation_unitary(&sigma, decomp)?;
        let u = dsp_unitary(decomp, &mut rng);
        let gu = lift_unitary(&(g.matrix() * u.matrix()), dr);
        let g = lift_unitary(g.matrix(), dr);
        let diff = psi.map_matrix(|m| &gu * m * gu.adjoint() - &g * avg.matrix() * g.adjoint())?;
        Ok(trace_norm_herm(t.apply(&diff, INPUT)?.matrix()))
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    Ok(mean_and_stderr(&values))
}

/// Mix a possibly singular conditioner with a little of the maximally mixed
/// state so that weighted norms are defined.
fn regularize(sigma: &DensityOperator) -> Result<DensityOperator> {
    let eta = 1e-9;
    let d = sigma.layout().dim();
    let m = sigma.matrix() * c(1.0 - eta) + identity(d) * c(eta / d as f64);
    DensityOperator::normalized(Operator::new(m, sigma.layout().clone())?)
}

/// `2^{-H_min(A*|RE)_Λ / 2}` with `Λ = F (Ψ ⊗ τ) F^dag`, plus the collision
/// entropy reference `2^{-H_2(A*|RE)_{Λ|ς} / 2}`.
pub fn bound_rhs_nonrandomized(
    psi: &Operator,
    t: &CpMap,
    decomp: &DspDecomposition,
    policy: ConditionerPolicy,
    tol: f64,
) -> Result<RhsBound> {
    let lambda = build_lambda(psi, t.choi(), INPUT, decomp)?;
    let cond: Vec<&str> = lambda.layout().names().filter(|n| *n != A_STAR).collect();
    let mut terms = BTreeMap::new();
    if lambda.trace().re <= 0.0 {
        terms.insert("h_min_lambda".into(), f64::INFINITY);
        return Ok(RhsBound { terms, total: 0.0, max_sdp_gap: 0.0 });
    }
    let hmin = h_min_opt(&lambda, &cond, tol)?;
    let total = 2f64.powf(-0.5 * hmin.lower);
    terms.insert("h_min_lambda".into(), hmin.value);
    terms.insert("h_min_lambda_lower".into(), hmin.lower);

    let sigma = match policy {
        ConditionerPolicy::SdpOptimal => {
            let s = hmin.conditioner.clone().ok_or_else(|| Error::Precondition("missing conditioner".into()))?;
            regularize(&s)?
        }
        ConditionerPolicy::MaximallyMixed => DensityOperator::maximally_mixed(lambda.layout().select(&cond)?),
    };
    if !cond.is_empty() {
        let h2 = h2_fixed(&lambda, &sigma)?;
        terms.insert("h2_lambda".into(), h2.value);
        terms.insert("h2_bound".into(), 2f64.powf(-0.5 * h2.value));
    }
    Ok(RhsBound { terms, total, max_sdp_gap: gap_of(&hmin) })
}

/// `α(J) = 1 / (J - 1)` for `J > 1`, else 0.
pub fn alpha(j: usize) -> f64 {
    if j > 1 {
        1.0 / (j - 1) as f64
    } else {
        0.0
    }
}

/// `β(A_r) = 1` unless `A_r` is one-dimensional.
pub fn beta(r: usize) -> f64 {
    if r > 1 {
        1.0
    } else {
        0.0
    }
}

/// `√α(J) 2^{-(H_min(A|R)_Ψ + H_min(A|E E_c)_τ̌)/2}
///  + β(A_r) 2^{-(H_min(A|R)_{C(Ψ)} + H_min(A|E E_c)_{C(τ̌)})/2}`,
/// where `τ̌` is the Choi operator of `T` composed with the coherent copy of
/// the block index into `E_c`, and `C` dephases the block index of `A`.
pub fn bound_rhs_randomized(psi: &Operator, t: &CpMap, decomp: &DspDecomposition, tol: f64) -> Result<RhsBound> {
    decomp.require_randomized_case()?;
    let (a, b) = (alpha(decomp.num_blocks()), beta(decomp.r(0)));
    let refs: Vec<String> = psi.layout().names().filter(|n| *n != INPUT).map(String::from).collect();
    let refs: Vec<&str> = refs.iter().map(String::as_str).collect();
    let copied = t.with_block_copy(decomp)?;
    let outs: Vec<String> = copied.output_layout().names().map(String::from).collect();
    let outs: Vec<&str> = outs.iter().map(String::as_str).collect();

    let mut terms = BTreeMap::new();
    terms.insert("alpha".to_string(), a);
    terms.insert("beta".to_string(), b);
    let mut max_gap = 0.0f64;
    let mut alpha_term = 0.0;
    if a > 0.0 {
        let h_psi = h_min_opt(psi, &refs, tol)?;
        let h_tau = h_min_opt(copied.choi(), &outs, tol)?;
        max_gap = max_gap.max(gap_of(&h_psi)).max(gap_of(&h_tau));
        terms.insert("h_min_psi".into(), h_psi.value);
        terms.insert("h_min_choi".into(), h_tau.value);
        alpha_term = a.sqrt() * 2f64.powf(-0.5 * (h_psi.lower + h_tau.lower));
    }
    let mut beta_term = 0.0;
    if b > 0.0 {
        let c_psi = dephase_ac(psi, INPUT, decomp)?;
        let c_tau = copied.with_input_dephasing(decomp)?;
        let h_psi = h_min_opt(&c_psi, &refs, tol)?;
        let h_tau = h_min_opt(c_tau.choi(), &outs, tol)?;
        max_gap = max_gap.max(gap_of(&h_psi)).max(gap_of(&h_tau));
        terms.insert("h_min_psi_dephased".into(), h_psi.value);
        terms.insert("h_min_choi_dephased".into(), h_tau.value);
        beta_term = b * 2f64.powf(-0.5 * (h_psi.lower + h_tau.lower));
    }
    terms.insert("alpha_term".into(), alpha_term);
    terms.insert("beta_term".into(), beta_term);
    Ok(RhsBound { terms, total: alpha_term + beta_term, max_sdp_gap: max_gap })
}

/// Bound, estimate, and retry once at `RETRY_FACTOR · N` when the margin is
/// negative. The retry reuses the first `N` sample streams.
pub fn run_instance(
    mode: Mode,
    inst: &Instance,
    samples: usize,
    seed: u64,
    policy: ConditionerPolicy,
    tol: f64,
) -> Result<ExperimentReport> {
    mode.validate(&inst.decomp)?;
    let psi = inst.psi.operator();
    let rhs = if mode.is_randomized() {
        bound_rhs_randomized(psi, &inst.channel, &inst.decomp, tol)?
    } else {
        bound_rhs_nonrandomized(psi, &inst.channel, &inst.decomp, policy, tol)?
    };
    let estimate = |n: usize| {
        if mode.is_randomized() {
            estimate_lhs_randomized(psi, &inst.channel, &inst.decomp, n, seed)
        } else {
            estimate_lhs_nonrandomized(psi, &inst.channel, &inst.decomp, n, seed)
        }
    };
    let mut n = samples;
    let (mut mean, mut se) = estimate(n)?;
    let mut retried = false;
    if rhs.total + SLACK_SE * se - mean < 0.0 {
        n = samples * RETRY_FACTOR;
        (mean, se) = estimate(n)?;
        retried = true;
    }
    Ok(ExperimentReport {
        mode,
        decomposition: inst.decomp.clone(),
        j: inst.decomp.num_blocks(),
        r: inst.decomp.max_r(),
        samples: n,
        seed,
        lhs_mean: mean,
        lhs_stderr: se,
        rhs_terms: rhs.terms,
        rhs_total: rhs.total,
        margin: rhs.total + SLACK_SE * se - mean,
        retried,
        max_sdp_gap: rhs.max_sdp_gap,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let inst = config.instance()?;
    run_instance(config.mode, &inst, config.samples, config.seed, config.conditioner, crate::linalg::TOL.sdp_gap)
}

/// Random instance for the non-randomized inequality: `J ≤ 3`, `l_j, r_j ≤ 3`,
/// `d_R ≤ 4`, `d_E ∈ {2, 3}`, a random trace-preserving channel and a state
/// of random rank. Draws are rejected until `d_A ≤ 9` and the SDP for
/// `Λ` acts on at most 64 dimensions.
pub fn random_nonrandomized_instance(rng: &mut ChaCha8Rng) -> Result<Instance> {
    loop {
        let jn = rng.random_range(1..=3);
        let blocks: Vec<(usize, usize)> =
            (0..jn).map(|_| (rng.random_range(1..=3), rng.random_range(1..=3))).collect();
        let decomp = DspDecomposition::new(blocks)?;
        let dr = rng.random_range(1..=4);
        let de = rng.random_range(2..=3);
        if decomp.dim() > 9 || decomp.star_dim() * dr * de > 64 || decomp.dim() * dr > 36 {
            continue;
        }
        let n = decomp.dim() * dr;
        let rank = rng.random_range(1..=n);
        let psi = random_mixed_state(n, rank, rng);
        let psi = DensityOperator::normalized(Operator::new(
            psi,
            Layout::new([(INPUT, decomp.dim()), (REFERENCE, dr)])?,
        )?)?;
        let channel = random_channel(decomp.dim(), de, rng)?;
        return Instance::new(decomp, psi, channel);
    }
}

/// Random classically coherent instance with the given `J` and `r`:
/// `d_{R_r} ∈ {1, 2}`, `d_E ∈ {2, 3}`, random rank and a random
/// trace-preserving channel.
pub fn random_randomized_instance(jn: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<Instance> {
    let decomp = DspDecomposition::uniform(jn, r)?;
    let rr = rng.random_range(1..=2);
    let de = rng.random_range(2..=3);
    let n = jn * r * rr;
    let rank = rng.random_range(1..=n);
    let parent = random_mixed_state(n, rank, rng);
    let psi = ClassicallyCoherentState::from_parent(&parent, &decomp, INPUT, rr)?.into_state();
    let channel = random_channel(decomp.dim(), de, rng)?;
    Instance::new(decomp, psi, channel)
}

/// Random trace-preserving channel with between `⌈d_in / d_out⌉` and two more
/// Kraus operators.
fn random_channel(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Result<CpMap> {
    let k_min = d_in.div_ceil(d_out);
    let k = rng.random_range(k_min..=k_min + 2);
    CpMap::random_kraus(d_in, d_out, k, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma7Report {
    pub mc_mean: f64,
    pub mc_stderr: f64,
    /// The closed-form upper bound.
    pub exact: f64,
    /// `exact + 3·SE - mc_mean`.
    pub margin: f64,
}

/// Compare `E_U ‖T ∘ G_{σ^{-1}} ∘ U(X)‖²_{2,ς}` by sampling against the
/// closed-form block expression that bounds it from above. `varsigma` acts
/// on the reference and output factors. A non-identity `perm` requires the randomized case.
pub fn verify_lemma7(
    x: &Operator,
    t: &CpMap,
    varsigma: &DensityOperator,
    perm: &[usize],
    decomp: &DspDecomposition,
    samples: usize,
    seed: u64,
) -> Result<Lemma7Report> {
    let exact = exact_average_2norm(x, t, varsigma, perm, decomp)?;
    let (x, rest) = crate::dsp::a_first(x, INPUT)?;
    let identity_perm = perm.iter().enumerate().all(|(j, &s)| j == s);
    let g_inv = if identity_perm {
        None
    } else {
        Some(permutation_unitary(&inverse_permutation(perm), decomp)?.into_matrix())
    };
    let dr = rest.dim();
    let values = ordered_map(samples, |i| -> Result<f64> {
        let mut rng = RngStream::new(seed, i as u64).rng();
        let mut u = dsp_unitary(decomp, &mut rng).into_matrix();
        if let Some(g) = &g_inv {
            u = g * u;
        }
        let u = lift_unitary(&u, dr);
        let y = x.map_matrix(|m| &u * m * u.adjoint())?;
        Ok(weighted_two_norm(&t.apply(&y, INPUT)?, varsigma)?.powi(2))
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    let (mean, se) = mean_and_stderr(&values);
    Ok(Lemma7Report { mc_mean: mean, mc_stderr: se, exact, margin: exact + SLACK_SE * se - mean })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwirlCheck {
    pub pattern: [usize; 4],
    /// Frobenius distance between the empirical and exact averages.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwirlReport {
    pub samples: usize,
    pub tolerance: f64,
    pub checks: Vec<TwirlCheck>,
}

impl TwirlReport {
    pub fn max_distance(&self) -> f64 {
        self.checks.iter().map(|c| c.distance).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_distance() <= self.tolerance
    }
}

/// Dimension of the spectator system `B B'` used by [`verify_twirl`].
pub const TWIRL_SPECTATOR_DIM: usize = 2;

/// Empirical versus exact second moments for a random `M` of unit Frobenius
/// norm: direct and crossed patterns on blocks (0, 1), the diagonal pattern
/// on blocks 0 and 1, and one pattern that averages to zero (all indices
/// distinct when `J ≥ 4`, otherwise `(0, 0, 1, 1)`). Tolerance is `10/√N`.
pub fn verify_twirl(decomp: &DspDecomposition, samples: usize, seed: u64) -> Result<TwirlReport> {
    if decomp.num_blocks() < 2 {
        return Err(Error::Precondition("twirl verification needs at least two blocks".into()));
    }
    let d: usize = (0..decomp.num_blocks()).map(|j| decomp.r(j)).sum();
    let b = TWIRL_SPECTATOR_DIM;
    let mut rng = RngStream::new(seed, u64::MAX).rng();
    let mut m = crate::sampling::ginibre(d * d * b, d * d * b, &mut rng);
    let norm = m.norm();
    m /= c(norm);

    let mut patterns = vec![
        TwirlCase::Direct(0, 1).pattern(),
        TwirlCase::Crossed(0, 1).pattern(),
        TwirlCase::Diagonal(0).pattern(),
        TwirlCase::Diagonal(1).pattern(),
    ];
    patterns.push(if decomp.num_blocks() >= 4 { [0, 1, 2, 3] } else { [0, 0, 1, 1] });

    let mut checks = Vec::new();
    for (k, pattern) in patterns.into_iter().enumerate() {
        let exact = twisted_twirl_pattern(&m, decomp, b, pattern)?;
        let emp = twisted_twirl_empirical(&m, decomp, b, pattern, samples, seed.wrapping_add(k as u64))?;
        checks.push(TwirlCheck { pattern, distance: (exact - emp).norm() });
    }
    Ok(TwirlReport { samples, tolerance: 10.0 / (samples as f64).sqrt(), checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{R_C, R_R};
    use crate::testutil::seeded;

    #[test]
    fn mode_constraints() {
        let cc = DspDecomposition::uniform(2, 2).unwrap();
        let mixed = DspDecomposition::new(vec![(1, 2), (1, 3)]).unwrap();
        assert!(Mode::RandomizedPd.validate(&cc).is_ok());
        let err = Mode::RandomizedPd.validate(&mixed).unwrap_err();
        assert!(err.to_string().contains("CC1"));
        assert!(Mode::DecouplingJ1.validate(&cc).is_err());
        assert!(Mode::Dequantization.validate(&cc).is_err());
        assert!(Mode::Dequantization.validate(&DspDecomposition::uniform(3, 1).unwrap()).is_ok());
        assert!(Mode::NonrandomizedPd.validate(&mixed).is_ok());
    }

    #[test]
    fn depolarizing_output_has_zero_lhs() {
        let decomp = DspDecomposition::new(vec![(1, 2), (2, 1)]).unwrap();
        let psi = dsp_maximally_entangled(&decomp, INPUT, REFERENCE).unwrap();
        let t = CpMap::completely_depolarizing(4, 2);
        let (m, _) = estimate_lhs_nonrandomized(psi.operator(), &t, &decomp, 50, 1).unwrap();
        assert!(m <= 1e-10);
    }

    #[test]
    fn averaged_input_has_zero_lhs() {
        let mut rng = seeded(2);
        let decomp = DspDecomposition::new(vec![(1, 2), (2, 2)]).unwrap();
        let n = decomp.dim() * 2;
        let psi = Operator::new(random_mixed_state(n, n, &mut rng), Layout::new([(INPUT, 6), (REFERENCE, 2)]).unwrap())
            .unwrap();
        let avg = averaged_state(&psi, INPUT, &decomp).unwrap();
        let t = CpMap::random_kraus(6, 2, 3, &mut rng).unwrap();
        let (m, _) = estimate_lhs_nonrandomized(&avg, &t, &decomp, 50, 3).unwrap();
        assert!(m <= 1e-10);
    }

    #[test]
    fn decoupling_example_is_self_consistent() {
        let decomp = DspDecomposition::new(vec![(1, 4)]).unwrap();
        let psi = dsp_maximally_entangled(&decomp, INPUT, REFERENCE).unwrap();
        let t = CpMap::partial_trace(4, 2).unwrap();
        let (m1, s1) = estimate_lhs_nonrandomized(psi.operator(), &t, &decomp, 500, 5).unwrap();
        let (m4, s4) = estimate_lhs_nonrandomized(psi.operator(), &t, &decomp, 2000, 5).unwrap();
        assert!((m1 - m4).abs() <= 3.0 * (s1 * s1 + s4 * s4).sqrt());
    }

    #[test]
    fn zero_state_has_zero_bound() {
        let decomp = DspDecomposition::new(vec![(1, 2)]).unwrap();
        let zero = Operator::zeros(Layout::new([(INPUT, 2), (REFERENCE, 2)]).unwrap());
        let rhs = bound_rhs_nonrandomized(&zero, &CpMap::identity(2), &decomp, ConditionerPolicy::SdpOptimal, 1e-7)
            .unwrap();
        assert_eq!(rhs.total, 0.0);
        assert_eq!(rhs.terms["h_min_lambda"], f64::INFINITY);
    }

    #[test]
    fn lambda_exponent_reduces_to_decoupling_form() {
        let mut rng = seeded(6);
        let decomp = DspDecomposition::new(vec![(1, 3)]).unwrap();
        let psi = Operator::new(random_mixed_state(6, 6, &mut rng), Layout::new([(INPUT, 3), (REFERENCE, 2)]).unwrap())
            .unwrap();
        let t = CpMap::random_kraus(3, 2, 2, &mut rng).unwrap();
        let rhs = bound_rhs_nonrandomized(&psi, &t, &decomp, ConditionerPolicy::SdpOptimal, 1e-8).unwrap();
        let h1 = h_min_opt(&psi, &[REFERENCE], 1e-8).unwrap().value;
        let h2 = h_min_opt(t.choi(), &["E"], 1e-8).unwrap().value;
        assert!((rhs.terms["h_min_lambda"] - (h1 + h2)).abs() < 1e-6);
    }

    #[test]
    fn twirl_report_passes() {
        let d = DspDecomposition::uniform(4, 2).unwrap();
        let rep = verify_twirl(&d, 3000, 1).unwrap();
        assert_eq!(rep.checks.len(), 5);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn lemma7_examples() {
        let mut rng = seeded(7);
        let decomp = DspDecomposition::uniform(2, 2).unwrap();
        let t = CpMap::random_kraus(4, 2, 2, &mut rng).unwrap();
        let psi = Operator::new(random_mixed_state(8, 8, &mut rng), Layout::new([(INPUT, 4), (REFERENCE, 2)]).unwrap())
            .unwrap();
        let x = psi.sub(&averaged_state(&psi, INPUT, &decomp).unwrap()).unwrap();
        let vs = DensityOperator::normalized(
            Operator::new(random_mixed_state(4, 4, &mut rng), Layout::new([(REFERENCE, 2), ("E", 2)]).unwrap())
                .unwrap(),
        )
        .unwrap();
        for perm in [[0, 1], [1, 0]] {
            let rep = verify_lemma7(&x, &t, &vs, &perm, &decomp, 1000, 3).unwrap();
            assert!(rep.margin >= 0.0, "{rep:?}");
        }
        let zero = Operator::zeros(x.layout().clone());
        let rep = verify_lemma7(&zero, &t, &vs, &[0, 1], &decomp, 10, 3).unwrap();
        assert_eq!(rep.exact, 0.0);
        assert_eq!(rep.mc_mean, 0.0);
        assert!(verify_lemma7(&psi, &t, &vs, &[0, 1], &decomp, 10, 3).is_err());
    }

    #[test]
    fn config_instances_respect_layouts() {
        let mut cfg = ExperimentConfig::new(Mode::RandomizedPd, DspDecomposition::uniform(2, 2).unwrap());
        let inst = cfg.instance().unwrap();
        assert_eq!(inst.reference_labels(), vec![R_C.to_string(), R_R.to_string()]);
        cfg.state = StatePreset::Random(4);
        cfg.reference_dim = Some(1);
        assert_eq!(cfg.instance().unwrap().psi.layout().dim_of(R_R).unwrap(), 1);
        cfg.reference_dim = Some(3);
        cfg.state = StatePreset::MaximallyEntangled;
        assert!(cfg.instance().is_err());
    }
}
