//! Experiment configuration: JSON schema, validation with field-path
//! errors, design construction from inline rows / CSV files / generators,
//! and the resolved context every command runs against.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dropout_dynamics::{
    CounterRng, Error, LinearModel, Matrix, NoiseKind, SchemeConfig, SchemeKind, Vector,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// The verification suites the runner knows about, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Moments,
    Minimizer,
    Dynamics,
    FixedPoint,
    Bounds,
    GaussMarkov,
    Rp,
    Simplified,
    SingularDesign,
}

pub const ALL_SUITES: [Suite; 9] = [
    Suite::Moments,
    Suite::Minimizer,
    Suite::Dynamics,
    Suite::FixedPoint,
    Suite::Bounds,
    Suite::GaussMarkov,
    Suite::Rp,
    Suite::Simplified,
    Suite::SingularDesign,
];

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Moments => "moments",
            Suite::Minimizer => "minimizer",
            Suite::Dynamics => "dynamics",
            Suite::FixedPoint => "fixed_point",
            Suite::Bounds => "bounds",
            Suite::GaussMarkov => "gauss_markov",
            Suite::Rp => "rp",
            Suite::Simplified => "simplified",
            Suite::SingularDesign => "singular_design",
        }
    }

    pub fn parse(name: &str) -> Option<Suite> {
        ALL_SUITES.iter().copied().find(|s| s.name() == name)
    }
}

fn suite_list() -> String {
    ALL_SUITES
        .iter()
        .map(|s| s.name())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Validates a user-supplied suite list, reporting the offending index
/// under the given field name (`suites[2]`, `--suites[0]`, ...).
pub fn parse_suite_list(field: &str, names: &[String]) -> anyhow::Result<Vec<Suite>> {
    let mut out = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        match Suite::parse(name) {
            Some(suite) => {
                if !out.contains(&suite) {
                    out.push(suite);
                }
            }
            None => bail!(Error::InvalidConfig {
                path: format!("{field}[{i}]"),
                message: format!("unknown suite '{name}' (expected one of: {})", suite_list()),
            }),
        }
    }
    Ok(out)
}

/// Report output format for suite results and aggregated tables.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
    Both,
}

impl ReportFormat {
    pub fn wants_json(self) -> bool {
        matches!(self, ReportFormat::Json | ReportFormat::Both)
    }

    pub fn wants_csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Both => "both",
        }
    }
}

/// Top-level experiment description, deserialized from one JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub schemes: Vec<SchemeSpec>,
    pub ensemble: EnsembleSpec,
    pub suites: Vec<String>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
    #[serde(default)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub d: Option<usize>,
    pub x: DesignSpec,
    pub beta_star: Vec<f64>,
    #[serde(default)]
    pub noise: Option<NoiseKind>,
}

/// Where the design matrix comes from: literal rows, a CSV file next to
/// the config, or a deterministic generator.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignSpec {
    Inline(Vec<Vec<f64>>),
    Csv(PathBuf),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub values: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Gaussian,
    Ones,
    Identity,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub scheme: SchemeKind,
    pub alpha: f64,
    pub p: f64,
    pub k_max: usize,
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub replicas: usize,
    #[serde(default = "default_true")]
    pub resample_response: bool,
    pub master_seed: u64,
}

fn default_true() -> bool {
    true
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> anyhow::Error {
    Error::InvalidConfig {
        path: path.into(),
        message: message.into(),
    }
    .into()
}

impl ModelSpec {
    /// Builds the design matrix, resolving CSV paths relative to the
    /// config file's directory and enforcing the declared dimensions.
    pub fn build_design(&self, config_dir: &Path) -> anyhow::Result<Matrix> {
        let x = match &self.x {
            DesignSpec::Inline(rows) => {
                Matrix::from_rows(rows).context("model.x.inline is not a rectangular matrix")?
            }
            DesignSpec::Csv(rel) => {
                let path = if rel.is_absolute() {
                    rel.clone()
                } else {
                    config_dir.join(rel)
                };
                let text = fs::read_to_string(&path).map_err(|e| {
                    invalid(
                        "model.x.csv",
                        format!("cannot read design file '{}': {e}", path.display()),
                    )
                })?;
                Matrix::from_csv(&text)
                    .with_context(|| format!("design file '{}'", path.display()))?
            }
            DesignSpec::Generator(g) => self.generate(g)?,
        };
        if let Some(n) = self.n {
            if x.rows() != n {
                return Err(invalid(
                    "model.n",
                    format!("declared n = {n} but the design has {} rows", x.rows()),
                ));
            }
        }
        if let Some(d) = self.d {
            if x.cols() != d {
                return Err(invalid(
                    "model.d",
                    format!("declared d = {d} but the design has {} columns", x.cols()),
                ));
            }
        }
        Ok(x)
    }

    fn generate(&self, g: &GeneratorSpec) -> anyhow::Result<Matrix> {
        let need = |field: &str, value: Option<usize>| {
            value.ok_or_else(|| {
                invalid(
                    format!("model.{field}"),
                    format!("the {:?} generator requires model.{field}", g.kind),
                )
            })
        };
        match g.kind {
            GeneratorKind::Gaussian => {
                let n = need("n", self.n)?;
                let d = need("d", self.d)?;
                let seed = g.seed.ok_or_else(|| {
                    invalid("model.x.generator.seed", "the gaussian generator requires a seed")
                })?;
                let mut rng = CounterRng::new(seed);
                Ok(Matrix::from_fn(n, d, |_, _| rng.next_gaussian()))
            }
            GeneratorKind::Ones => {
                let n = need("n", self.n)?;
                let d = need("d", self.d)?;
                Ok(Matrix::from_fn(n, d, |_, _| 1.0))
            }
            GeneratorKind::Identity => {
                let d = need("d", self.d)?;
                if let Some(n) = self.n {
                    if n != d {
                        return Err(invalid(
                            "model.n",
                            format!("the identity generator needs n = d, got n = {n}, d = {d}"),
                        ));
                    }
                }
                Ok(Matrix::identity(d))
            }
            GeneratorKind::Custom => {
                let rows = g.values.as_ref().ok_or_else(|| {
                    invalid("model.x.generator.values", "the custom generator requires values")
                })?;
                Matrix::from_rows(rows)
                    .context("model.x.generator.values is not a rectangular matrix")
            }
        }
    }

    pub fn build_model(&self, config_dir: &Path) -> anyhow::Result<LinearModel> {
        let x = self.build_design(config_dir)?;
        if self.beta_star.len() != x.cols() {
            return Err(invalid(
                "model.beta_star",
                format!(
                    "length {} does not match the design's {} columns",
                    self.beta_star.len(),
                    x.cols()
                ),
            ));
        }
        let beta = Vector::new(self.beta_star.clone()).context("model.beta_star")?;
        let noise = self.noise.unwrap_or(NoiseKind::GaussianUnit);
        LinearModel::new(x, beta, noise).context("model")
    }
}

impl SchemeSpec {
    /// Materializes the scheme at the model's dimension; `index` names the
    /// entry in error messages, `master_seed` fills a missing seed.
    pub fn build(&self, index: usize, d: usize, master_seed: u64) -> anyhow::Result<SchemeConfig> {
        let init = match &self.init {
            Some(values) => {
                if values.len() != d {
                    return Err(invalid(
                        format!("schemes[{index}].init"),
                        format!("length {} does not match d = {d}", values.len()),
                    ));
                }
                Vector::new(values.clone()).with_context(|| format!("schemes[{index}].init"))?
            }
            None => Vector::zeros(d),
        };
        let seed = self.seed.unwrap_or(master_seed);
        let mut cfg = SchemeConfig::new(self.scheme, self.alpha, self.p, self.k_max, init, seed)
            .with_context(|| format!("schemes[{index}]"))?;
        if let Some(marks) = &self.checkpoints {
            cfg = cfg
                .with_checkpoints(marks.clone())
                .with_context(|| format!("schemes[{index}].checkpoints"))?;
        }
        Ok(cfg)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.scheme {
            SchemeKind::PlainGd => "plain_gd",
            SchemeKind::Dropout => "dropout",
            SchemeKind::SimplifiedDropout => "simplified_dropout",
            SchemeKind::MinibatchDropout => "minibatch_dropout",
        }
    }
}

/// A loaded config together with everything the commands derive from it:
/// the built model, the resolved suite list, output settings, and the
/// effective master seed after CLI overrides.
pub struct ExperimentContext {
    pub config: ExperimentConfig,
    pub config_path: PathBuf,
    pub config_sha256: String,
    pub model: LinearModel,
    pub suites: Vec<Suite>,
    pub out_dir: PathBuf,
    pub format: ReportFormat,
    pub master_seed: u64,
    pub seed_overridden: bool,
    pub parallel: Option<usize>,
}

/// CLI-side overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub suites: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
    pub parallel: Option<usize>,
    pub seed_override: Option<u64>,
}

pub fn load_context(config_path: &Path, overrides: &Overrides) -> anyhow::Result<ExperimentContext> {
    let raw = fs::read(config_path)
        .with_context(|| format!("cannot read config file '{}'", config_path.display()))?;
    let config_sha256 = hex_digest(&raw);
    let config: ExperimentConfig = serde_json::from_slice(&raw)
        .with_context(|| format!("config file '{}'", config_path.display()))?;

    if config.schemes.is_empty() {
        return Err(invalid("schemes", "at least one scheme is required"));
    }

    let configured = parse_suite_list("suites", &config.suites)?;
    let suites = match &overrides.suites {
        Some(names) => {
            let requested = parse_suite_list("--suites", names)?;
            requested
                .into_iter()
                .filter(|s| configured.contains(s))
                .collect()
        }
        None => configured,
    };

    let config_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let model = config.model.build_model(&config_dir)?;

    for (i, spec) in config.schemes.iter().enumerate() {
        spec.build(i, model.d(), config.ensemble.master_seed)?;
    }

    let (master_seed, seed_overridden) = match overrides.seed_override {
        Some(seed) => (seed, true),
        None => (config.ensemble.master_seed, false),
    };

    Ok(ExperimentContext {
        out_dir: overrides.out.clone().unwrap_or_else(|| config.output_dir.clone()),
        format: overrides.format.unwrap_or(config.format),
        parallel: overrides.parallel.or(config.parallel),
        config_path: config_path.to_path_buf(),
        config_sha256,
        model,
        suites,
        master_seed,
        seed_overridden,
        config,
    })
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentContext {
    /// The concrete scheme configs, in config order.
    pub fn schemes(&self) -> anyhow::Result<Vec<SchemeConfig>> {
        self.config
            .schemes
            .iter()
            .enumerate()
            .map(|(i, s)| s.build(i, self.model.d(), self.master_seed))
            .collect()
    }

    /// First configured scheme: the one operator-level suites analyze.
    pub fn primary_scheme(&self) -> anyhow::Result<SchemeConfig> {
        self.config.schemes[0].build(0, self.model.d(), self.master_seed)
    }
}
