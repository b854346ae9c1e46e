//! Run configuration: a versioned TOML document with `--set` overrides.
//!
//! Every section and key is optional; missing entries take the 57Fe defaults
//! below. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nucdecay::couplings::{InfiniteChainOptions, Regularization};
use nucdecay::ode::IntegratorSettings;
use nucdecay::params::{
    ChainGeometry, DecayParameters, FE57_INTERNAL_CONVERSION, FE57_LATTICE_SPACING_M, FE57_LINEWIDTH_NEV,
    FE57_WAVELENGTH_M,
};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub output: OutputConfig,
    pub geometry: GeometryConfig,
    pub decay: DecayConfig,
    pub couplings: CouplingConfig,
    pub excitation: ExcitationConfig,
    pub integrator: IntegratorConfig,
    pub kscan: KScanConfig,
    pub evolve: EvolveConfig,
    pub oracle: OracleConfig,
    pub interfere: InterfereConfig,
    pub finite_size: FiniteSizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            output: OutputConfig::default(),
            geometry: GeometryConfig::default(),
            decay: DecayConfig::default(),
            couplings: CouplingConfig::default(),
            excitation: ExcitationConfig::default(),
            integrator: IntegratorConfig::default(),
            kscan: KScanConfig::default(),
            evolve: EvolveConfig::default(),
            oracle: OracleConfig::default(),
            interfere: InterfereConfig::default(),
            finite_size: FiniteSizeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub lattice_spacing_pm: f64,
    pub wavelength_pm: f64,
    pub dipole_angle: f64,
    pub incidence_angle: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            lattice_spacing_pm: FE57_LATTICE_SPACING_M * 1e12,
            wavelength_pm: FE57_WAVELENGTH_M * 1e12,
            dipole_angle: PI / 2.0,
            incidence_angle: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    /// `Gamma_IC / Gamma_rad`.
    pub conversion_ratio: f64,
    /// `gamma0` in units of `Gamma_rad`.
    pub gamma0_over_rad: f64,
    /// Natural linewidth, used only to convert times to ns.
    pub linewidth_nev: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        Self {
            conversion_ratio: FE57_INTERNAL_CONVERSION,
            gamma0_over_rad: 0.5,
            linewidth_nev: FE57_LINEWIDTH_NEV,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub convention_factor: f64,
    /// Damping `epsilon` of the infinite-chain sums; ignored with a cutoff.
    pub regularization_eps: f64,
    /// Replace the closed form by the lattice sum up to this many terms.
    pub cutoff_terms: Option<usize>,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        let d = InfiniteChainOptions::<f64>::default();
        Self {
            convention_factor: d.convention_factor,
            regularization_eps: d.regularization.epsilon(),
            cutoff_terms: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationConfig {
    /// Pulse areas in units of `pi`.
    pub pulse_areas: Vec<f64>,
    pub global_phase: f64,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        Self {
            pulse_areas: vec![1e-5, 0.25, 0.5, 0.75],
            global_phase: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Adaptive,
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: MethodName,
    pub rtol: f64,
    /// Step of the fixed-step method, in `1/Gamma`.
    pub step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: MethodName::Adaptive,
            rtol: 1e-10,
            step: 1e-3,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KScanConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub points: usize,
    /// Also evaluate the central-site finite sum of a chain this long.
    pub finite_length: Option<usize>,
}

impl Default for KScanConfig {
    fn default() -> Self {
        Self {
            theta_min: 0.0,
            theta_max: PI,
            points: 2000,
            finite_length: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Reduced,
    Finite,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub model: ModelName,
    pub chain_length: usize,
    /// Recorded sites (1-based); empty means the central site.
    pub sites: Vec<usize>,
    /// Subtract the incident phase `l * dphi` from finite-chain phases.
    pub compensate_incident_phase: bool,
    pub t_end: f64,
    pub points: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            model: ModelName::Reduced,
            chain_length: 3000,
            sites: Vec::new(),
            compensate_incident_phase: true,
            t_end: 5.0,
            points: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub size: usize,
    pub cap: usize,
    /// Factor applied to every pair coupling.
    pub coupling_scale: f64,
    /// Also run with couplings reduced tenfold and report the error ratio.
    pub scaling_check: bool,
    pub t_end: f64,
    pub points: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            size: 2,
            cap: nucdecay::oracle::DEFAULT_ORACLE_CAP,
            coupling_scale: 1.0,
            scaling_check: true,
            t_end: 5.0,
            points: 501,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeName {
    FromTrajectory,
    EqualExponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterfereConfig {
    pub detuning: f64,
    pub sample_incidence: f64,
    pub reference_incidence: f64,
    pub amplitude_model: AmplitudeName,
    pub t_end: f64,
    pub points: usize,
    pub zoom_start: f64,
    pub zoom_end: f64,
}

impl Default for InterfereConfig {
    fn default() -> Self {
        Self {
            detuning: -3.0,
            sample_incidence: 0.005,
            reference_incidence: 0.22,
            amplitude_model: AmplitudeName::FromTrajectory,
            t_end: 5.0,
            points: 5001,
            zoom_start: 0.9,
            zoom_end: 1.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteSizeConfig {
    pub incidence_angle: f64,
    pub min_length: usize,
    pub max_length: usize,
    pub length_step: usize,
    /// Pulse area of the deviation scan, in units of `pi`.
    pub pulse_area: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub samples: usize,
    /// Chain length of the per-site `K_l` profile.
    pub profile_length: usize,
    /// Chain lengths of the finite-vs-reduced phase comparison; empty means
    /// the extremal lengths found by the scan.
    pub compare_lengths: Vec<usize>,
    pub compare_t_end: f64,
    pub compare_points: usize,
}

impl Default for FiniteSizeConfig {
    fn default() -> Self {
        Self {
            incidence_angle: 0.05,
            min_length: 50,
            max_length: 600,
            length_step: 1,
            pulse_area: 0.5,
            window_start: nucdecay::analysis::DEFAULT_DEVIATION_WINDOW.0,
            window_end: nucdecay::analysis::DEFAULT_DEVIATION_WINDOW.1,
            samples: nucdecay::analysis::DEFAULT_DEVIATION_SAMPLES,
            profile_length: 500,
            compare_lengths: Vec::new(),
            compare_t_end: 5.0,
            compare_points: 501,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Reads `path` (if given), applies the `section.key=value` overrides and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| invalid(format!("cannot read config {}: {e}", p.display())))?;
                // typed parse first, so schema errors point at a line
                toml::from_str::<RunConfig>(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| invalid(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.geometry()?;
        self.decay()?;
        if !(self.couplings.convention_factor.is_finite() && self.couplings.convention_factor > 0.0) {
            return Err(invalid("couplings.convention_factor must be positive"));
        }
        if !(self.couplings.regularization_eps >= 0.0) {
            return Err(invalid("couplings.regularization_eps must be non-negative"));
        }
        if self.excitation.pulse_areas.is_empty() {
            return Err(invalid("excitation.pulse_areas must not be empty"));
        }
        if let Some(a) = self.excitation.pulse_areas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(invalid(format!("excitation.pulse_areas entry {a} is outside [0, 1] (units of pi)")));
        }
        self.integrator()?.validate().map_err(|e| invalid(format!("integrator: {e}")))?;
        let k = &self.kscan;
        if k.points < 2 || !(k.theta_min < k.theta_max) {
            return Err(invalid("kscan needs points >= 2 and theta_min < theta_max"));
        }
        let e = &self.evolve;
        if e.points < 2 || !(e.t_end > 0.0) || e.chain_length == 0 {
            return Err(invalid("evolve needs points >= 2, t_end > 0 and chain_length >= 1"));
        }
        let o = &self.oracle;
        if o.points < 2 || !(o.t_end > 0.0) || o.size == 0 || !(o.coupling_scale >= 0.0) {
            return Err(invalid("oracle needs points >= 2, t_end > 0, size >= 1 and coupling_scale >= 0"));
        }
        let i = &self.interfere;
        if i.points < 2 || !(i.t_end > 0.0) || !(i.zoom_start < i.zoom_end) {
            return Err(invalid("interfere needs points >= 2, t_end > 0 and zoom_start < zoom_end"));
        }
        let f = &self.finite_size;
        if f.min_length == 0 || f.min_length > f.max_length || f.length_step == 0 {
            return Err(invalid("finite_size needs 1 <= min_length <= max_length and length_step >= 1"));
        }
        if !(f.window_start >= 0.0 && f.window_start <= f.window_end) || f.samples == 0 {
            return Err(invalid("finite_size needs 0 <= window_start <= window_end and samples >= 1"));
        }
        if !(0.0..=1.0).contains(&f.pulse_area) || f.compare_points < 2 || f.profile_length == 0 {
            return Err(invalid("finite_size needs pulse_area in [0, 1], compare_points >= 2, profile_length >= 1"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ChainGeometry<f64>, CliError> {
        let g = &self.geometry;
        ChainGeometry::new(
            g.lattice_spacing_pm * 1e-12,
            g.wavelength_pm * 1e-12,
            g.dipole_angle,
            g.incidence_angle,
        )
        .map_err(|e| invalid(format!("geometry: {e}")))
    }

    pub fn decay(&self) -> Result<DecayParameters<f64>, CliError> {
        let d = &self.decay;
        if !(d.linewidth_nev > 0.0) {
            return Err(invalid("decay.linewidth_nev must be positive"));
        }
        let base = DecayParameters::from_conversion_ratio(d.conversion_ratio)
            .map_err(|e| invalid(format!("decay: {e}")))?;
        let decay = base.with_gamma0(base.gamma_rad * d.gamma0_over_rad);
        decay.validate().map_err(|e| invalid(format!("decay: {e}")))?;
        Ok(decay)
    }

    pub fn infinite_options(&self) -> InfiniteChainOptions<f64> {
        let regularization = match self.couplings.cutoff_terms {
            Some(terms) => Regularization::Cutoff { terms },
            None => Regularization::Damping {
                epsilon: self.couplings.regularization_eps,
            },
        };
        InfiniteChainOptions {
            regularization,
            convention_factor: self.couplings.convention_factor,
        }
    }

    pub fn integrator(&self) -> Result<IntegratorSettings<f64>, CliError> {
        let i = &self.integrator;
        let mut s = match i.method {
            MethodName::Adaptive => IntegratorSettings::adaptive(i.rtol),
            MethodName::Rk4 => IntegratorSettings::fixed(i.step),
        };
        s.max_steps = i.max_steps;
        Ok(s)
    }

    pub fn pulse_areas(&self) -> Vec<f64> {
        self.excitation.pulse_areas.iter().map(|a| a * PI).collect()
    }

    pub fn ns_per_inverse_gamma(&self) -> f64 {
        nucdecay::params::ns_per_inverse_gamma(self.decay.linewidth_nev)
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    /// The output directory does not enter the hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputConfig::default();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        let digest = Sha256::digest(json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Applies `section.key=value` to the raw document. The value is parsed as a
/// TOML value and falls back to a plain string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{spec}` must look like section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(invalid(format!("override `{spec}` has an empty key")));
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("override `{spec}`: `{k}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
