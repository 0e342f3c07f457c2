use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::RunError;

/// One experiment per file. Scientific parameters have no defaults; only I/O does.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    SurgerySweep(SurgerySweep),
    GaborQuilt(GaborQuilt),
    SisQuilt(SisQuilt),
    Sampling(Sampling),
    Multiplier(Multiplier),
    Selftest(Selftest),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SurgerySweep(_) => "surgery-sweep",
            Self::GaborQuilt(_) => "gabor-quilt",
            Self::SisQuilt(_) => "sis-quilt",
            Self::Sampling(_) => "sampling",
            Self::Multiplier(_) => "multiplier",
            Self::Selftest(_) => "selftest",
        }
    }

    pub fn output(&self) -> &Output {
        match self {
            Self::SurgerySweep(c) => &c.output,
            Self::GaborQuilt(c) => &c.output,
            Self::SisQuilt(c) => &c.output,
            Self::Sampling(c) => &c.output,
            Self::Multiplier(c) => &c.output,
            Self::Selftest(c) => &c.output,
        }
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| RunError::Input(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let families: Vec<&mut FamilySpec> = match self {
            Self::SurgerySweep(c) => std::iter::once(&mut c.reference).chain(c.donors.iter_mut()).collect(),
            Self::Sampling(c) => vec![&mut c.reference],
            _ => Vec::new(),
        };
        for family in families {
            if let FamilySpec::CustomFile { path } = family {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    /// Cheap checks that name the offending field before any numerical work starts.
    pub fn validate(&self) -> Result<(), RunError> {
        let radii = match self {
            Self::SurgerySweep(c) => Some(&c.radii),
            Self::GaborQuilt(c) => Some(&c.radii),
            Self::SisQuilt(c) => Some(&c.radii),
            Self::Sampling(c) => Some(&c.radii),
            Self::Multiplier(c) => Some(&c.radii),
            Self::Selftest(_) => None,
        };
        if let Some(radii) = radii {
            frame_forge::surgery::check_radii(radii).map_err(RunError::from)?;
        }
        match self {
            Self::SurgerySweep(c) => {
                c.domain.check()?;
                if c.donors.is_empty() {
                    return Err(field("donors", "at least one donor is needed"));
                }
                if c.norms.is_empty() {
                    return Err(field("norms", "at least one (p, weight_exponent) pair is needed"));
                }
                for n in &c.norms {
                    n.check()?;
                }
                std::iter::once(&c.reference).chain(&c.donors).try_for_each(FamilySpec::check)?;
                positive_count("test_functions", c.test_functions)
            }
            Self::GaborQuilt(c) => {
                c.domain.check()?;
                one_dimensional(&c.domain)?;
                if c.donors.is_empty() {
                    return Err(field("donors", "at least one donor is needed"));
                }
                positive_count("test_signals", c.test_signals)
            }
            Self::SisQuilt(c) => {
                c.domain.check()?;
                one_dimensional(&c.domain)?;
                if c.reference.is_empty() {
                    return Err(field("reference", "at least one generator is needed"));
                }
                if c.donors.is_empty() || c.donors.iter().any(|d| d.len() != c.reference.len()) {
                    return Err(field("donors", "every donor needs as many generators as the reference"));
                }
                positive_count("test_functions", c.test_functions)
            }
            Self::Sampling(c) => {
                c.domain.check()?;
                c.reference.check()?;
                c.norm.check()?;
                if c.donors.is_empty() {
                    return Err(field("donors", "at least one sampling set is needed"));
                }
                positive_count("test_functions", c.test_functions)
            }
            Self::Multiplier(c) => {
                c.domain.check()?;
                one_dimensional(&c.domain)?;
                if c.reference.is_empty() {
                    return Err(field("reference", "at least one generator pair is needed"));
                }
                if c.probes.is_empty() || c.probes.iter().any(|p| p.len() != c.reference.len()) {
                    return Err(field("probes", "every probe family needs as many pairs as the reference"));
                }
                positive_count("test_multipliers", c.test_multipliers)
            }
            Self::Selftest(_) => Ok(()),
        }
    }
}

fn field(name: &str, reason: &str) -> RunError {
    RunError::Input(format!("invalid field `{name}`: {reason}"))
}

fn positive_count(name: &str, n: usize) -> Result<(), RunError> {
    if n == 0 {
        return Err(field(name, "must be positive"));
    }
    Ok(())
}

fn one_dimensional(domain: &Domain) -> Result<(), RunError> {
    if domain.dim != 1 {
        return Err(field("domain.dim", "time-frequency experiments run on a one-dimensional signal torus"));
    }
    Ok(())
}

/// Output location. Relative directories resolve against the working directory.
#[derive(Clone, Debug, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// Discretized torus `[0, side)^dim` with `points` samples per axis.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub dim: usize,
    pub side: f64,
    pub points: usize,
}

impl Domain {
    fn check(&self) -> Result<(), RunError> {
        if !(1..=2).contains(&self.dim) {
            return Err(field("domain.dim", "must be 1 or 2"));
        }
        if !(self.side.is_finite() && self.side > 0.0) {
            return Err(field("domain.side", "must be positive"));
        }
        Ok(())
    }
}

/// Regular node lattice `offset + step Z^d` on the torus.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub step: Vec<f64>,
    pub offset: Vec<f64>,
}

/// Atom family, either generated at lattice nodes or read from a family record file.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "atoms", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `exp(-|x - k|^2 / (2 width^2))`.
    GaussianBumps { width: f64, nodes: LatticeSpec },
    /// Cubic B-spline of the given width centred at every node.
    BsplineLike { width: f64, nodes: LatticeSpec },
    /// `(1 + |x - k| / scale)^(-exponent)`.
    RationalBumps { scale: f64, exponent: f64, nodes: LatticeSpec },
    /// Atom family record file (nodes, atoms as `[re, im]` pairs, optional envelope).
    CustomFile { path: PathBuf },
}

impl FamilySpec {
    fn check(&self) -> Result<(), RunError> {
        match self {
            Self::CustomFile { path } if !path.is_file() => {
                Err(field("atoms.path", &format!("{} does not exist", path.display())))
            }
            _ => Ok(()),
        }
    }
}

/// Envelope constant: a number, or `"fit"` for the tightest constant of the declared exponent.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum EnvelopeConstant {
    Value(f64),
    Fit(FitTag),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum FitTag {
    Fit,
}

/// Declared decay `|f_k(x)| <= C (1 + |x - k|)^(-exponent)`; `exponent` is `s + alpha`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    #[serde(rename = "C")]
    pub constant: EnvelopeConstant,
    pub exponent: f64,
}

/// Covering of the (signal or time-frequency) torus.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoveringSpec {
    /// `pieces` equal slabs along `axis`, each widened by `overlap` on both sides.
    Slabs { axis: usize, pieces: usize, overlap: f64 },
}

/// Norm of the error measurement: weighted `L^p` with weight `(1 + |x|)^weight_exponent`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub p: f64,
    pub weight_exponent: f64,
}

impl NormSpec {
    fn check(&self) -> Result<(), RunError> {
        if !(self.p >= 1.0) {
            return Err(field("p", "must be at least 1 (use a large finite value for the sup norm)"));
        }
        if !(self.weight_exponent.is_finite() && self.weight_exponent >= 0.0) {
            return Err(field("weight_exponent", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SurgerySweep {
    pub seed: u64,
    pub domain: Domain,
    /// Family whose span is reconstructed.
    pub reference: FamilySpec,
    /// Donor families; their frame pairs are formed on the reference span.
    pub donors: Vec<FamilySpec>,
    pub envelope: EnvelopeSpec,
    pub covering: CoveringSpec,
    pub radii: Vec<f64>,
    pub norms: Vec<NormSpec>,
    pub test_functions: usize,
    #[serde(default)]
    pub output: Output,
}

/// Gabor lattice `(time_offset + time_step Z) x (freq_offset + freq_step Z)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TfLatticeSpec {
    pub time_step: f64,
    pub freq_step: f64,
    pub time_offset: f64,
    pub freq_offset: f64,
}

/// Gabor window. Only the normalized Gaussian is supported.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum WindowSpec {
    Gaussian,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GaborQuilt {
    pub seed: u64,
    pub domain: Domain,
    pub window: WindowSpec,
    /// Exponent of the time-frequency envelope of the window's transform.
    pub envelope_exponent: f64,
    pub donors: Vec<TfLatticeSpec>,
    /// Covering of the time-frequency torus (axis 0 is time, axis 1 frequency).
    pub covering: CoveringSpec,
    pub radii: Vec<f64>,
    pub test_signals: usize,
    #[serde(default)]
    pub output: Output,
}

/// Profile of a sampled generator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Gaussian,
    Bspline,
}

/// `M_freq_shift T_time_shift` applied to a centred profile of the given width.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub profile: Profile,
    pub width: f64,
    pub time_shift: f64,
    pub freq_shift: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SisQuilt {
    pub seed: u64,
    pub domain: Domain,
    pub lattice_step: f64,
    pub reference: Vec<SignalSpec>,
    pub donors: Vec<Vec<SignalSpec>>,
    pub envelope: EnvelopeSpec,
    pub covering: CoveringSpec,
    pub radii: Vec<f64>,
    pub test_functions: usize,
    #[serde(default)]
    pub output: Output,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub seed: u64,
    pub domain: Domain,
    /// Family whose canonical dual defines the reproducing kernels.
    pub reference: FamilySpec,
    /// Sampling sets quilted over the covering.
    pub donors: Vec<LatticeSpec>,
    pub covering: CoveringSpec,
    pub norm: NormSpec,
    pub radii: Vec<f64>,
    pub test_functions: usize,
    #[serde(default)]
    pub output: Output,
}

/// Rank-one generator pair `P_{f, g}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub f: SignalSpec,
    pub g: SignalSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Multiplier {
    pub seed: u64,
    pub domain: Domain,
    /// Multiplier lattice; offsets must be zero.
    pub lattice: TfLatticeSpec,
    /// Pairs of the unknown multiplier.
    pub reference: Vec<PairSpec>,
    /// Probe families quilted over the covering of the time-frequency torus.
    pub probes: Vec<Vec<PairSpec>>,
    pub envelope: EnvelopeSpec,
    pub covering: CoveringSpec,
    pub radii: Vec<f64>,
    /// Random multipliers used to measure the reconstruction deviation.
    pub test_multipliers: usize,
    #[serde(default)]
    pub output: Output,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Selftest {
    pub seed: u64,
    #[serde(default)]
    pub output: Output,
}
