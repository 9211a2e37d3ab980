//! TOML experiment configs and suites, with a canonical serialization whose
//! SHA-256 digest identifies a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channels::ChannelSpec;
use crate::dsp::DspDecomposition;
use crate::experiments::{ConditionerPolicy, ExperimentConfig, Mode, StatePreset};

pub const ENV_SEED: &str = "PARTDEC_SEED";
pub const ENV_SAMPLES: &str = "PARTDEC_SAMPLES";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{origin}: field `{field}`: {message}")]
    Field { origin: String, field: String, message: String },
}

/// On-disk shape of a config; every field except `mode` is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<String>,
    decomposition: Option<String>,
    dim: Option<usize>,
    samples: Option<usize>,
    seed: Option<u64>,
    state: Option<String>,
    reference_dim: Option<usize>,
    channel: Option<String>,
    output_dim: Option<usize>,
    conditioner: Option<String>,
}

/// Canonical shape: all fields explicit, fixed order.
#[derive(Serialize)]
struct CanonicalConfig<'a> {
    mode: &'a str,
    decomposition: String,
    samples: usize,
    seed: u64,
    state: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_dim: Option<usize>,
    channel: String,
    output_dim: usize,
    conditioner: &'a str,
}

fn conditioner_str(c: ConditionerPolicy) -> &'static str {
    match c {
        ConditionerPolicy::SdpOptimal => "sdp-optimal",
        ConditionerPolicy::MaximallyMixed => "maximally-mixed",
    }
}

fn field_err(origin: &str, field: &str, message: impl ToString) -> ConfigError {
    ConfigError::Field { origin: origin.to_string(), field: field.to_string(), message: message.to_string() }
}

fn syntax_err(origin: &str, text: &str, e: toml::de::Error) -> ConfigError {
    let mut message = e.message().to_string();
    if let Some(span) = e.span() {
        let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
        message = format!("line {line}: {message}");
    }
    ConfigError::Syntax { origin: origin.to_string(), message }
}

impl RawConfig {
    fn into_config(self, origin: &str) -> Result<ExperimentConfig, ConfigError> {
        let mode: Mode = self
            .mode
            .as_deref()
            .ok_or_else(|| field_err(origin, "mode", "missing required field"))?
            .parse()
            .map_err(|e| field_err(origin, "mode", e))?;
        let decomposition = match (self.decomposition, self.dim) {
            (Some(_), Some(_)) => {
                return Err(field_err(origin, "dim", "give either `decomposition` or `dim`, not both"))
            }
            (Some(lit), None) => lit.parse::<DspDecomposition>().map_err(|e| field_err(origin, "decomposition", e))?,
            (None, Some(d)) => DspDecomposition::new(vec![(1, d)]).map_err(|e| field_err(origin, "dim", e))?,
            (None, None) => return Err(field_err(origin, "decomposition", "missing (or give `dim`)")),
        };
        let mut cfg = ExperimentConfig::new(mode, decomposition);
        if let Some(n) = self.samples {
            cfg.samples = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.state {
            cfg.state = s.parse::<StatePreset>().map_err(|e| field_err(origin, "state", e))?;
        }
        cfg.reference_dim = self.reference_dim;
        if let Some(c) = self.channel {
            cfg.channel = c.parse::<ChannelSpec>().map_err(|e| field_err(origin, "channel", e))?;
        }
        if let Some(d) = self.output_dim {
            cfg.output_dim = d;
        }
        if let Some(c) = self.conditioner {
            cfg.conditioner = match c.as_str() {
                "sdp-optimal" => ConditionerPolicy::SdpOptimal,
                "maximally-mixed" => ConditionerPolicy::MaximallyMixed,
                other => return Err(field_err(origin, "conditioner", format!("unknown policy `{other}`"))),
            };
        }
        validate(&cfg, origin)?;
        Ok(cfg)
    }
}

/// Run the experiment-level checks and attribute failures to a field.
pub fn validate(cfg: &ExperimentConfig, origin: &str) -> Result<(), ConfigError> {
    cfg.mode.validate(&cfg.decomposition).map_err(|e| field_err(origin, "decomposition", e))?;
    if cfg.samples < 2 {
        return Err(field_err(origin, "samples", "must be at least 2"));
    }
    if cfg.output_dim == 0 {
        return Err(field_err(origin, "output_dim", "must be positive"));
    }
    cfg.validate().map_err(|e| field_err(origin, "reference_dim", e))?;
    cfg.channel
        .build(cfg.decomposition.dim(), cfg.output_dim)
        .map(|_| ())
        .map_err(|e| field_err(origin, "channel", e))
}

pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| syntax_err(origin, text, e))?;
    raw.into_config(origin)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text, &path.display().to_string())
}

/// Canonical TOML text: every field explicit, fixed order and spelling.
pub fn canonical(cfg: &ExperimentConfig) -> String {
    let c = CanonicalConfig {
        mode: cfg.mode.as_str(),
        decomposition: cfg.decomposition.literal(),
        samples: cfg.samples,
        seed: cfg.seed,
        state: cfg.state.to_string(),
        reference_dim: cfg.reference_dim,
        channel: cfg.channel.to_string(),
        output_dim: cfg.output_dim,
        conditioner: conditioner_str(cfg.conditioner),
    };
    toml::to_string(&c).expect("canonical config serializes")
}

pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    digest(&canonical(cfg))
}

/// Seed and sample-count overrides: CLI flags win over the environment,
/// which wins over the file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

impl Overrides {
    pub fn from_env() -> Result<Self, ConfigError> {
        let read = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let seed = read(ENV_SEED)
            .map(|v| v.trim().parse().map_err(|_| field_err("environment", ENV_SEED, format!("not a u64: `{v}`"))))
            .transpose()?;
        let samples = read(ENV_SAMPLES)
            .map(|v| v.trim().parse().map_err(|_| field_err("environment", ENV_SAMPLES, format!("not a count: `{v}`"))))
            .transpose()?;
        Ok(Self { seed, samples })
    }

    /// `self` takes precedence over `fallback`.
    pub fn or(self, fallback: Overrides) -> Self {
        Self { seed: self.seed.or(fallback.seed), samples: self.samples.or(fallback.samples) }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.samples {
            cfg.samples = n;
        }
    }
}

/// Batch of generated instances in a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomBatch {
    pub mode: Mode,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Block count for randomized batches; cycles over {2, 3} when absent.
    #[serde(rename = "J", default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    /// Block size for randomized batches; cycles over {1, 2} when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
}

fn default_samples() -> usize {
    2000
}

#[derive(Clone, Debug, PartialEq)]
pub struct Suite {
    pub seed: u64,
    pub experiments: Vec<ExperimentConfig>,
    pub random: Vec<RandomBatch>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    experiment: Vec<RawConfig>,
    #[serde(default)]
    random: Vec<RandomBatch>,
}

pub fn parse_suite_str(text: &str, origin: &str) -> Result<Suite, ConfigError> {
    let raw: RawSuite = toml::from_str(text).map_err(|e| syntax_err(origin, text, e))?;
    let experiments = raw
        .experiment
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            r.seed = r.seed.or(Some(raw.seed));
            r.into_config(&format!("{origin} [[experiment]] #{}", i + 1))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (i, b) in raw.random.iter().enumerate() {
        let at = format!("{origin} [[random]] #{}", i + 1);
        if b.mode == Mode::NonrandomizedPd && (b.blocks.is_some() || b.r.is_some()) {
            return Err(field_err(&at, "J", "block shape is only configurable for randomized batches"));
        }
        if matches!(b.mode, Mode::DecouplingJ1 | Mode::Dequantization) {
            return Err(field_err(&at, "mode", "random batches support nonrandomized-pd and randomized-pd"));
        }
        if b.samples < 2 {
            return Err(field_err(&at, "samples", "must be at least 2"));
        }
    }
    Ok(Suite { seed: raw.seed, experiments, random: raw.random })
}

pub fn parse_suite(path: &Path) -> Result<Suite, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_suite_str(&text, &path.display().to_string())
}

/// Canonical suite text, for hashing.
pub fn canonical_suite(suite: &Suite) -> String {
    let mut out = format!("seed = {}\n", suite.seed);
    for cfg in &suite.experiments {
        out.push_str("\n[[experiment]]\n");
        out.push_str(&canonical(cfg));
    }
    for b in &suite.random {
        out.push_str("\n[[random]]\n");
        out.push_str(&toml::to_string(b).expect("batch serializes"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config_str("mode = \"decoupling-j1\"\ndim = 2\n", "t").unwrap();
        assert_eq!(cfg.samples, 2000);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.decomposition.blocks(), &[(1, 2)]);
    }

    #[test]
    fn unequal_blocks_in_randomized_mode_name_cc1() {
        let text = "mode = \"randomized-pd\"\ndecomposition = \"J=[ (1,2), (1,3) ]\"\n";
        let err = parse_config_str(text, "t").unwrap_err().to_string();
        assert!(err.contains("CC1"), "{err}");
        assert!(err.contains("decomposition"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = parse_config_str("mode = \"decoupling-j1\"\ndim = 2\nbogus = 1\n", "t").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse_config_str("mode = \"nope\"\ndim = 2\n", "t").unwrap_err().to_string();
        assert!(err.contains("`mode`"), "{err}");
    }

    #[test]
    fn canonical_round_trip() {
        let text = r#"
            mode = "nonrandomized-pd"
            decomposition = "J=[ (1,2), (2,1) ]"
            state = "random(4)"
            reference_dim = 3
            channel = "depolarizing(0.25)"
            conditioner = "maximally-mixed"
        "#;
        let cfg = parse_config_str(text, "t").unwrap();
        let canon = canonical(&cfg);
        let again = parse_config_str(&canon, "canon").unwrap();
        assert_eq!(cfg, again);
        assert_eq!(canon, canonical(&again));
        assert_eq!(config_hash(&cfg).len(), 64);
    }

    #[test]
    fn overrides_layer() {
        let mut cfg = parse_config_str("mode = \"decoupling-j1\"\ndim = 2\nseed = 5\n", "t").unwrap();
        let cli = Overrides { seed: Some(9), samples: None };
        let env = Overrides { seed: Some(7), samples: Some(100) };
        cli.or(env).apply(&mut cfg);
        assert_eq!((cfg.seed, cfg.samples), (9, 100));
    }

    #[test]
    fn suite_parses_both_tables() {
        let text = r#"
            seed = 3
            [[experiment]]
            mode = "decoupling-j1"
            dim = 2
            [[experiment]]
            mode = "dequantization"
            decomposition = "J=[ (1,1), (1,1) ]"
            seed = 8
            [[random]]
            mode = "randomized-pd"
            count = 4
            J = 2
        "#;
        let s = parse_suite_str(text, "s").unwrap();
        assert_eq!(s.experiments[0].seed, 3);
        assert_eq!(s.experiments[1].seed, 8);
        assert_eq!(s.random[0].blocks, Some(2));
        assert_eq!(s.random[0].samples, 2000);
        let canon = canonical_suite(&s);
        assert_eq!(parse_suite_str(&canon, "c").unwrap(), s);
    }
}
