//! Lab-frame oscillator parameters and their mapping onto the dimensionless
//! rotating-frame control parameters.
//!
//! Mass is set to one throughout; every lab-frame quantity is expected in a
//! single consistent (SI) unit system.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN_SI: f64 = 1.380_649e-23;

/// Default threshold for the small-parameter checks of [`check_validity`].
pub const DEFAULT_VALIDITY_THRESHOLD: f64 = 0.1;

/// Physical parameters of the driven oscillator and its bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabFrameParams {
    /// Eigenfrequency ω₀, rad/s.
    pub omega0: f64,
    /// Duffing anharmonicity γ.
    pub gamma: f64,
    /// Parametric drive amplitude F, rad²/s².
    pub drive_amplitude: f64,
    /// Drive frequency ω_F, rad/s.
    pub omega_f: f64,
    /// Decay rate Γ, 1/s.
    pub decay_rate: f64,
    /// Bath temperature, K.
    pub temperature: f64,
    pub hbar: f64,
    pub boltzmann_k: f64,
}

impl LabFrameParams {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("omega0", self.omega0)?;
        ensure_positive("omega_F", self.omega_f)?;
        ensure_positive("Gamma", self.decay_rate)?;
        ensure_positive("hbar", self.hbar)?;
        ensure_positive("kB", self.boltzmann_k)?;
        ensure_finite("gamma", self.gamma)?;
        ensure_finite("F", self.drive_amplitude)?;
        ensure_finite("T", self.temperature)?;
        if self.gamma == 0.0 {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "the anharmonicity must be nonzero".into(),
            });
        }
        if self.drive_amplitude < 0.0 {
            return Err(Error::InvalidParameter {
                name: "F",
                reason: format!("must be non-negative, got {}", self.drive_amplitude),
            });
        }
        if self.temperature < 0.0 {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: format!("must be non-negative, got {}", self.temperature),
            });
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Blank lines and `#` comments are
    /// ignored; `hbar` and `kB` default to their SI values.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut omega0 = None;
        let mut gamma = None;
        let mut drive = None;
        let mut omega_f = None;
        let mut decay = None;
        let mut temperature = None;
        let mut hbar = HBAR_SI;
        let mut kb = BOLTZMANN_SI;

        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| Error::Config {
                    line: idx + 1,
                    reason: format!("expected `key = value`, got `{line}`"),
                })?;
            let value: f64 = value.trim().parse().map_err(|_| Error::Config {
                line: idx + 1,
                reason: format!("value `{}` is not a number", value.trim()),
            })?;
            match key.trim() {
                "omega0" => omega0 = Some(value),
                "gamma" => gamma = Some(value),
                "F" => drive = Some(value),
                "omega_F" => omega_f = Some(value),
                "Gamma" => decay = Some(value),
                "T" => temperature = Some(value),
                "hbar" => hbar = value,
                "kB" => kb = value,
                other => {
                    return Err(Error::Config {
                        line: idx + 1,
                        reason: format!("unknown key `{other}`"),
                    })
                }
            }
        }

        let missing = |name: &str| Error::Config {
            line: 0,
            reason: format!("missing required key `{name}`"),
        };
        let params = Self {
            omega0: omega0.ok_or_else(|| missing("omega0"))?,
            gamma: gamma.ok_or_else(|| missing("gamma"))?,
            drive_amplitude: drive.ok_or_else(|| missing("F"))?,
            omega_f: omega_f.ok_or_else(|| missing("omega_F"))?,
            decay_rate: decay.ok_or_else(|| missing("Gamma"))?,
            temperature: temperature.ok_or_else(|| missing("T"))?,
            hbar,
            boltzmann_k: kb,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Characteristic scales derived from [`LabFrameParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    /// Threshold drive amplitude F_c = 2Γω_F.
    pub critical_amplitude: f64,
    /// Forced-vibration amplitude C_p = |2F_c/3γ|^{1/2}.
    pub amplitude_scale: f64,
    /// Dimensionless Planck constant λ_p = 3|γ|ħ/(ω_F F_c).
    pub planck_lambda: f64,
    /// Planck occupation number n̄.
    pub nbar: f64,
    /// Noise intensity D = λ_p(n̄ + 1/2).
    pub noise_intensity: f64,
}

/// Bose occupation 1/(e^{ħω₀/k_BT} − 1), exactly zero at T = 0.
pub fn planck_number(hbar_omega: f64, kt: f64) -> f64 {
    if kt == 0.0 {
        0.0
    } else {
        1.0 / (hbar_omega / kt).exp_m1()
    }
}

pub fn derive_scales(lab: &LabFrameParams) -> Result<DerivedScales> {
    lab.validate()?;
    let critical_amplitude = 2.0 * lab.decay_rate * lab.omega_f;
    let amplitude_scale = (2.0 * critical_amplitude / (3.0 * lab.gamma)).abs().sqrt();
    let planck_lambda = 3.0 * lab.gamma.abs() * lab.hbar / (lab.omega_f * critical_amplitude);
    let nbar = planck_number(lab.hbar * lab.omega0, lab.boltzmann_k * lab.temperature);
    let noise_intensity = planck_lambda * (nbar + 0.5);
    for (name, v) in [
        ("F_c", critical_amplitude),
        ("C_p", amplitude_scale),
        ("lambda_p", planck_lambda),
        ("nbar", nbar),
    ] {
        ensure_finite(name, v)?;
    }
    Ok(DerivedScales {
        critical_amplitude,
        amplitude_scale,
        planck_lambda,
        nbar,
        noise_intensity,
    })
}

/// Sign of the anharmonicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Sign {
    #[default]
    Positive,
    Negative,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

/// Dimensionless rotating-frame control parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    /// Detuning μ_p.
    pub mu: f64,
    /// Scaled drive amplitude f_p = F/F_c.
    pub f: f64,
    /// Noise intensity D.
    pub noise: f64,
    /// Planck parameter λ_p.
    pub lambda: f64,
    pub sign_gamma: Sign,
}

impl ScaledParams {
    /// Scaled parameters at zero temperature, where λ_p = 2D.
    pub fn zero_temperature(mu: f64, f: f64, noise: f64) -> Self {
        Self {
            mu,
            f,
            noise,
            lambda: 2.0 * noise,
            sign_gamma: Sign::Positive,
        }
    }

    pub fn with_occupation(mu: f64, f: f64, lambda: f64, nbar: f64) -> Self {
        Self {
            mu,
            f,
            noise: lambda * (nbar + 0.5),
            lambda,
            sign_gamma: Sign::Positive,
        }
    }

    /// n̄ recovered from D = λ_p(n̄ + 1/2).
    pub fn nbar(&self) -> f64 {
        self.noise / self.lambda - 0.5
    }

    /// f_p² − 1; its square root is the bifurcation detuning μ_B.
    pub fn excess(&self) -> f64 {
        self.f * self.f - 1.0
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("mu_p", self.mu)?;
        ensure_finite("f_p", self.f)?;
        ensure_finite("D", self.noise)?;
        ensure_positive("lambda_p", self.lambda)?;
        if self.f < 0.0 {
            return Err(Error::InvalidParameter {
                name: "f_p",
                reason: format!("must be non-negative, got {}", self.f),
            });
        }
        if self.noise < 0.0 {
            return Err(Error::InvalidParameter {
                name: "D",
                reason: format!("must be non-negative, got {}", self.noise),
            });
        }
        Ok(())
    }
}

pub fn scale_params(lab: &LabFrameParams, scales: &DerivedScales) -> ScaledParams {
    let sign_gamma = Sign::of(lab.gamma);
    ScaledParams {
        mu: lab.omega_f * (lab.omega_f - 2.0 * lab.omega0) / scales.critical_amplitude
            * sign_gamma.value(),
        f: lab.drive_amplitude / scales.critical_amplitude,
        noise: scales.noise_intensity,
        lambda: scales.planck_lambda,
        sign_gamma,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityCheck {
    pub name: String,
    pub ratio: f64,
    pub threshold: f64,
    pub ok: bool,
}

/// Regime-of-validity ratios. A failed check is a warning, not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub checks: Vec<ValidityCheck>,
}

impl ValidityReport {
    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn get(&self, name: &str) -> Option<&ValidityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn check_validity(
    lab: &LabFrameParams,
    scales: &DerivedScales,
    threshold: f64,
) -> ValidityReport {
    let w0 = lab.omega0;
    let ratios = [
        ("detuning", (0.5 * lab.omega_f - w0).abs() / w0),
        ("weak_damping", lab.decay_rate / w0),
        (
            "weak_nonlinearity",
            lab.gamma.abs() * scales.amplitude_scale.powi(2) / (w0 * w0),
        ),
        ("weak_drive", lab.drive_amplitude / (w0 * w0)),
    ];
    ValidityReport {
        checks: ratios
            .into_iter()
            .map(|(name, ratio)| ValidityCheck {
                name: name.to_string(),
                ratio,
                threshold,
                ok: ratio < threshold,
            })
            .collect(),
    }
}

/// Everything derivable from a lab-frame parameter file, in one serializable
/// record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivationReport {
    pub lab: LabFrameParams,
    pub scales: DerivedScales,
    pub scaled: ScaledParams,
    pub validity: ValidityReport,
}

pub fn derivation_report(lab: &LabFrameParams, threshold: f64) -> Result<DerivationReport> {
    let scales = derive_scales(lab)?;
    Ok(DerivationReport {
        lab: *lab,
        scaled: scale_params(lab, &scales),
        validity: check_validity(lab, &scales, threshold),
        scales,
    })
}
