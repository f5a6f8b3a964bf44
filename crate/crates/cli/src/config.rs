//! Run configuration: a TOML file with an optional parameter block and one
//! section per subcommand. Every field has a default, so an empty file (or
//! no file) is a valid configuration.

use std::path::{Path, PathBuf};

use paramosc_core::params::{derivation_report, LabFrameParams, BOLTZMANN_SI, DEFAULT_VALIDITY_THRESHOLD, HBAR_SI};
use paramosc_core::{ScaledParams, Sign};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Rotating-frame parameters given directly. λ_p is derived from
/// D = λ_p(n̄ + 1/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaledBlock {
    pub mu: f64,
    pub f: f64,
    pub noise: f64,
    #[serde(default)]
    pub nbar: f64,
    #[serde(default = "positive")]
    pub sign_gamma: f64,
}

fn positive() -> f64 {
    1.0
}

impl Default for ScaledBlock {
    /// The bistable reference point μ_p = 0 with ΔU/D = 5 at D = 0.01.
    fn default() -> Self {
        let noise = 0.01;
        let mu_b = (6.0f64 * 5.0 * noise).cbrt();
        Self {
            mu: 0.0,
            f: (1.0 + mu_b * mu_b).sqrt(),
            noise,
            nbar: 0.0,
            sign_gamma: 1.0,
        }
    }
}

/// Lab-frame parameters, SI units unless `hbar`/`kB` are overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabBlock {
    pub omega0: f64,
    pub gamma: f64,
    #[serde(rename = "F")]
    pub drive_amplitude: f64,
    #[serde(rename = "omega_F")]
    pub omega_f: f64,
    #[serde(rename = "Gamma")]
    pub decay_rate: f64,
    #[serde(rename = "T")]
    pub temperature: f64,
    #[serde(default = "hbar_si")]
    pub hbar: f64,
    #[serde(rename = "kB", default = "kb_si")]
    pub boltzmann_k: f64,
}

fn hbar_si() -> f64 {
    HBAR_SI
}

fn kb_si() -> f64 {
    BOLTZMANN_SI
}

impl LabBlock {
    fn to_lab(self) -> LabFrameParams {
        LabFrameParams {
            omega0: self.omega0,
            gamma: self.gamma,
            drive_amplitude: self.drive_amplitude,
            omega_f: self.omega_f,
            decay_rate: self.decay_rate,
            temperature: self.temperature,
            hbar: self.hbar,
            boltzmann_k: self.boltzmann_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BifurcationSpec {
    /// Largest f_p; rows are uniform in f_p² from 1.
    pub f_max: f64,
    pub points: usize,
    /// μ_p range (0, mu_max] for the saddle-node line.
    pub saddle_mu_max: f64,
    pub saddle_points: usize,
}

impl Default for BifurcationSpec {
    fn default() -> Self {
        Self {
            f_max: 2.0,
            points: 101,
            saddle_mu_max: 1.0,
            saddle_points: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistributionSpec {
    pub mu: f64,
    pub noise: f64,
    pub f_values: Vec<f64>,
    pub grid_points: usize,
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self {
            mu: 0.0,
            noise: 0.01,
            f_values: vec![0.9, 0.95, 1.0, 1.05, 1.1, 1.2],
            grid_points: 801,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RateTable {
    #[default]
    Both,
    Bistable,
    Tristable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSpec {
    pub table: RateTable,
    pub lambda: f64,
    pub nbar: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub f_points: usize,
    pub bistable_mu_min: f64,
    pub bistable_mu_max: f64,
    pub bistable_mu_points: usize,
    pub tristable_mu_min: f64,
    pub tristable_mu_max: f64,
    pub tristable_mu_points: usize,
}

impl Default for RatesSpec {
    fn default() -> Self {
        Self {
            table: RateTable::Both,
            lambda: 0.01,
            nbar: 0.0,
            f_min: 1.04,
            f_max: 1.2,
            f_points: 17,
            bistable_mu_min: -0.65,
            bistable_mu_max: 0.65,
            bistable_mu_points: 27,
            tristable_mu_min: 0.3,
            tristable_mu_max: 1.5,
            tristable_mu_points: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FpeSpec {
    pub reference_noise: f64,
    pub grid_n: usize,
    pub k_eigs: usize,
    pub mu_tilde_min: f64,
    pub mu_tilde_max: f64,
    pub mu_tilde_points: usize,
    pub f_tilde: Vec<f64>,
}

impl Default for FpeSpec {
    fn default() -> Self {
        Self {
            reference_noise: 1e-3,
            grid_n: 2001,
            k_eigs: 1,
            mu_tilde_min: -6.0,
            mu_tilde_max: 12.0,
            mu_tilde_points: 37,
            f_tilde: vec![-4.0, -2.0, 0.0, 2.0, 4.0, 6.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSpec {
    /// Euler–Maruyama step; the stability limit when absent.
    pub dt: Option<f64>,
    /// Production steps per ACF trajectory; 250/ν₁ when absent.
    pub steps: Option<u64>,
    /// ACF lag spacing in steps; 0.05/ν₁ when absent.
    pub decimation: Option<u64>,
    /// First-passage runs per channel.
    pub ensemble: u64,
    pub min_events: usize,
    pub mfpt_max_steps: u64,
    pub acf_trajectories: u64,
    pub max_lag: usize,
    /// Steps of a single recorded trace; no trace when zero.
    pub trace_steps: u64,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            dt: None,
            steps: None,
            decimation: None,
            ensemble: 200,
            min_events: 200,
            mfpt_max_steps: 100_000_000,
            acf_trajectories: 4,
            max_lag: 100,
            trace_steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateSpec {
    /// ΔU/D of the bistable reference point at μ_p = 0.
    pub barrier_ratio: f64,
    pub noise: f64,
    /// Relative tolerance of the triangle checks.
    pub tolerance: f64,
    pub grid_n: usize,
    pub mfpt_runs: u64,
    pub mfpt_min_events: usize,
    pub mfpt_max_steps: u64,
    pub acf_trajectories: u64,
    /// ACF trajectory length in units of 1/ν₁.
    pub acf_duration: f64,
    pub max_lag: usize,
    /// Tristable point for the occupation check.
    pub tristable_f: f64,
    pub tristable_mu: f64,
    pub tristable_noise: f64,
    pub occupation_trajectories: u64,
    /// Occupation trajectory length in units of 1/W₁₀.
    pub occupation_duration: f64,
    /// Allowed deviation in standard errors.
    pub occupation_z: f64,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        Self {
            barrier_ratio: 5.0,
            noise: 0.01,
            tolerance: 0.25,
            grid_n: 4001,
            mfpt_runs: 600,
            mfpt_min_events: 500,
            mfpt_max_steps: 100_000_000,
            acf_trajectories: 4,
            acf_duration: 250.0,
            max_lag: 100,
            tristable_f: 1.25f64.sqrt(),
            tristable_mu: 1.0,
            tristable_noise: 0.01,
            occupation_trajectories: 4,
            occupation_duration: 400.0,
            occupation_z: 3.0,
        }
    }
}

/// Fully resolved run configuration. `out` is excluded from the recorded
/// header so that the same run in two directories gives identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub format: Format,
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub scaled: Option<ScaledBlock>,
    pub lab: Option<LabBlock>,
    pub bifurcation: BifurcationSpec,
    pub distribution: DistributionSpec,
    pub rates: RatesSpec,
    pub fpe: FpeSpec,
    pub simulate: SimulateSpec,
    pub validate: ValidateSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            format: Format::Csv,
            out: PathBuf::from("."),
            scaled: None,
            lab: None,
            bifurcation: BifurcationSpec::default(),
            distribution: DistributionSpec::default(),
            rates: RatesSpec::default(),
            fpe: FpeSpec::default(),
            simulate: SimulateSpec::default(),
            validate: ValidateSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The configuration as TOML, for output headers.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Checks the invariants that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.scaled.is_some() && self.lab.is_some() {
            return Err(CliError::Config(
                "give either a [scaled] or a [lab] parameter block, not both".into(),
            ));
        }
        Ok(())
    }

    /// The operating point from the parameter block, or the bistable
    /// reference point when there is none.
    pub fn operating_point(&self) -> Result<ScaledParams, CliError> {
        self.validate()?;
        let sp = match (&self.scaled, &self.lab) {
            (_, Some(lab)) => {
                let report = derivation_report(&lab.to_lab(), DEFAULT_VALIDITY_THRESHOLD)?;
                for c in report.validity.checks.iter().filter(|c| !c.ok) {
                    eprintln!(
                        "warning: {} ratio {:.3e} exceeds {}; the near-threshold reduction may not apply",
                        c.name, c.ratio, c.threshold
                    );
                }
                report.scaled
            }
            (scaled, None) => {
                let b = scaled.unwrap_or_default();
                if b.sign_gamma != 1.0 && b.sign_gamma != -1.0 {
                    return Err(CliError::Config(format!(
                        "scaled.sign_gamma must be 1 or -1, got {}",
                        b.sign_gamma
                    )));
                }
                let mut sp = ScaledParams::with_occupation(b.mu, b.f, b.noise / (b.nbar + 0.5), b.nbar);
                sp.noise = b.noise;
                sp.sign_gamma = Sign::of(b.sign_gamma);
                sp
            }
        };
        sp.validate()?;
        Ok(sp)
    }
}

/// `n` points spanning [lo, hi]; one point gives `lo`.
pub fn linspace(name: &str, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if n == 0 {
        return Err(CliError::Config(format!("{name}: grid must not be empty")));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(CliError::Config(format!("{name}: invalid range [{lo}, {hi}]")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn both_parameter_blocks_are_rejected() {
        let cfg = RunConfig::from_toml(
            "[scaled]\nmu = 0.0\nf = 1.1\nnoise = 0.01\n\n[lab]\nomega0 = 1.0\ngamma = 0.01\nF = 0.004\nomega_F = 2.0\nGamma = 0.001\nT = 0.0\n",
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[fpe]\ngrid = 3").is_err());
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let mut cfg = RunConfig {
            scaled: Some(ScaledBlock::default()),
            ..Default::default()
        };
        cfg.simulate.dt = Some(0.005);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back.scaled, cfg.scaled);
        assert_eq!(back.simulate, cfg.simulate);
        assert_eq!(back.validate, cfg.validate);
    }

    #[test]
    fn scaled_block_sets_noise_and_planck_parameter() {
        let cfg = RunConfig {
            scaled: Some(ScaledBlock {
                mu: 0.1,
                f: 1.1,
                noise: 0.03,
                nbar: 1.0,
                sign_gamma: -1.0,
            }),
            ..Default::default()
        };
        let sp = cfg.operating_point().unwrap();
        assert_eq!(sp.noise, 0.03);
        assert!((sp.lambda - 0.02).abs() < 1e-15);
        assert_eq!(sp.sign_gamma, Sign::Negative);
    }

    #[test]
    fn lab_block_maps_to_scaled_parameters() {
        let cfg = RunConfig::from_toml(
            "[lab]\nomega0 = 1.0\ngamma = 0.01\nF = 0.004\nomega_F = 2.0\nGamma = 0.001\nT = 0.0\nhbar = 1e-4\nkB = 1.0\n",
        )
        .unwrap();
        let sp = cfg.operating_point().unwrap();
        assert!((sp.f - 1.0).abs() < 1e-12);
        assert!((sp.noise - 0.5 * sp.lambda).abs() < 1e-15);
    }

    #[test]
    fn grids_reject_empty_and_reversed_ranges() {
        assert!(linspace("x", 0.0, 1.0, 0).is_err());
        assert!(linspace("x", 1.0, 0.0, 3).is_err());
        assert_eq!(linspace("x", 0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
    }
}
