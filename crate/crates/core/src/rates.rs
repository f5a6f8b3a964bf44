//! Quantum-activation switching rates over the barriers of U(Q), the
//! equal-occupation line, and three-state balance kinetics.
//!
//! Rates are dimensionless, in units of the decay rate Γ (slow time τ = Γt).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::params::ScaledParams;
use crate::potential::{Extremum, ExtremumSet, PotentialModel, Regime};

/// Smallest |U''| at which the Kramers prefactor is still trusted.
pub const DEFAULT_CURVATURE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Period-two state to period-two state over the maximum at Q = 0.
    Bistable,
    /// Period-two state to the zero-amplitude state (rate W₁₀).
    TristableEscape,
    /// Zero-amplitude state to one period-two state (rate W₀₁).
    TristableEntry,
}

impl Channel {
    pub fn regime(self) -> Regime {
        match self {
            Channel::Bistable => Regime::Bistable,
            Channel::TristableEscape | Channel::TristableEntry => Regime::Tristable,
        }
    }

    /// (attractor, saddle) on the Q ≥ 0 side.
    pub fn locate(self, extrema: &ExtremumSet) -> Result<(Extremum, Extremum)> {
        let missing = || Error::MissingChannel {
            channel: self.to_string(),
            regime: extrema.regime.to_string(),
        };
        if extrema.regime != self.regime() {
            return Err(missing());
        }
        let pair = match self {
            Channel::Bistable => (extrema.outer_attractor(), extrema.origin()),
            Channel::TristableEscape => (extrema.outer_attractor(), extrema.positive_saddle()),
            Channel::TristableEntry => (extrema.origin(), extrema.positive_saddle()),
        };
        match pair {
            (Some(a), Some(s)) => Ok((*a, *s)),
            _ => Err(missing()),
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Channel::Bistable => "bistable",
            Channel::TristableEscape => "tristable-escape",
            Channel::TristableEntry => "tristable-entry",
        })
    }
}

/// Switching rate over one barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub channel: Channel,
    pub attractor_q: f64,
    pub saddle_q: f64,
    /// ΔU = U(Q_S) − U(Q_a); also the plotted R̃_A = (n̄ + 1/2)R_A.
    pub delta_u: f64,
    /// R_A = ΔU/(n̄ + 1/2).
    pub activation_energy: f64,
    /// Ω_sw = [|U''(Q_S)| U''(Q_a)]^{1/2}/2π.
    pub prefactor: f64,
    /// W_sw = Ω_sw exp(−R_A/λ_p).
    pub rate: f64,
}

impl RateResult {
    /// Rate in 1/s given the lab-frame decay rate Γ.
    pub fn lab_rate(&self, decay_rate: f64) -> f64 {
        self.rate * decay_rate
    }
}

pub fn switching_rate(model: &PotentialModel, sp: &ScaledParams, channel: Channel) -> Result<RateResult> {
    switching_rate_with_tolerance(model, sp, channel, DEFAULT_CURVATURE_TOLERANCE)
}

pub fn switching_rate_with_tolerance(
    model: &PotentialModel,
    sp: &ScaledParams,
    channel: Channel,
    curvature_tolerance: f64,
) -> Result<RateResult> {
    ensure_positive("lambda_p", sp.lambda)?;
    let extrema = model.find_extrema();
    let (attractor, saddle) = channel.locate(&extrema)?;
    for e in [&attractor, &saddle] {
        if e.curvature.abs() < curvature_tolerance {
            return Err(Error::BifurcationProximity {
                q: e.q,
                curvature: e.curvature,
                tolerance: curvature_tolerance,
            });
        }
    }
    let delta_u = saddle.u - attractor.u;
    let occupation = sp.nbar() + 0.5;
    let activation_energy = delta_u / occupation;
    let prefactor = (saddle.curvature.abs() * attractor.curvature).sqrt() / (2.0 * PI);
    Ok(RateResult {
        channel,
        attractor_q: attractor.q,
        saddle_q: saddle.q,
        delta_u,
        activation_energy,
        prefactor,
        rate: prefactor * (-activation_energy / sp.lambda).exp(),
    })
}

/// Noise description shared by every cell of a rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub lambda: f64,
    pub nbar: f64,
}

impl NoiseLevel {
    pub fn intensity(&self) -> f64 {
        self.lambda * (self.nbar + 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    /// No switching channel (monostable).
    Absent,
    /// A curvature is below tolerance; Kramers rates refused.
    NearBifurcation,
}

impl std::fmt::Display for CellStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellStatus::Ok => "ok",
            CellStatus::Absent => "absent",
            CellStatus::NearBifurcation => "near-bifurcation",
        })
    }
}

/// One (μ_p, f_p) cell of an activation-energy table. Values that do not
/// apply to the cell's regime are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub mu: f64,
    pub f: f64,
    pub regime: Regime,
    pub status: CellStatus,
    /// Bistable channel.
    pub bistable: Option<RateResult>,
    /// Period-two → zero-amplitude (R_A1, W₁₀).
    pub escape: Option<RateResult>,
    /// Zero-amplitude → period-two (R_A0, W₀₁).
    pub entry: Option<RateResult>,
}

impl SurfaceCell {
    pub fn r_a(&self) -> Option<f64> {
        self.bistable.map(|r| r.activation_energy)
    }
    pub fn r_a1(&self) -> Option<f64> {
        self.escape.map(|r| r.activation_energy)
    }
    pub fn r_a0(&self) -> Option<f64> {
        self.entry.map(|r| r.activation_energy)
    }
}

pub fn surface_cell(mu: f64, f: f64, noise: NoiseLevel) -> SurfaceCell {
    let sp = ScaledParams::with_occupation(mu, f, noise.lambda, noise.nbar);
    let model = PotentialModel::new(mu, f);
    let extrema = model.find_extrema();
    let regime = extrema.regime;
    let mut cell = SurfaceCell {
        mu,
        f,
        regime,
        status: CellStatus::Ok,
        bistable: None,
        escape: None,
        entry: None,
    };
    // a flat extremum means the cell sits on a bifurcation line, whatever
    // the regime it was classified into
    let flat = extrema
        .attractors
        .iter()
        .chain(&extrema.saddles)
        .any(|e| e.curvature.abs() < DEFAULT_CURVATURE_TOLERANCE);
    if extrema.degenerate || flat {
        cell.status = CellStatus::NearBifurcation;
        return cell;
    }
    let channels: &[Channel] = match regime {
        Regime::Monostable => {
            cell.status = CellStatus::Absent;
            &[]
        }
        Regime::Bistable => &[Channel::Bistable],
        Regime::Tristable => &[Channel::TristableEscape, Channel::TristableEntry],
    };
    for &channel in channels {
        match switching_rate(&model, &sp, channel) {
            Ok(r) => match channel {
                Channel::Bistable => cell.bistable = Some(r),
                Channel::TristableEscape => cell.escape = Some(r),
                Channel::TristableEntry => cell.entry = Some(r),
            },
            Err(_) => {
                cell.status = CellStatus::NearBifurcation;
                cell.bistable = None;
                cell.escape = None;
                cell.entry = None;
                break;
            }
        }
    }
    cell
}

/// Activation energies over a (μ_p, f_p) grid, row-major in μ_p.
pub fn activation_energy_surface(mu_grid: &[f64], f_grid: &[f64], noise: NoiseLevel) -> Vec<SurfaceCell> {
    let cells: Vec<(f64, f64)> = mu_grid
        .iter()
        .flat_map(|&mu| f_grid.iter().map(move |&f| (mu, f)))
        .collect();
    cells
        .into_par_iter()
        .map(|(mu, f)| surface_cell(mu, f, noise))
        .collect()
}

/// Equal-occupation detuning μ_p* = 2(f_p² − 1)^{1/2}, where R_A1 = R_A0.
pub fn phase_boundary(f: f64) -> Result<f64> {
    check_above_threshold(f)?;
    Ok(2.0 * (f * f - 1.0).sqrt())
}

fn check_above_threshold(f: f64) -> Result<()> {
    if f > 1.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "f_p",
            reason: format!("the equal-occupation line requires f_p > 1, got {f}"),
        })
    }
}

/// ΔU1 − ΔU0 at (μ_p, f_p), from the located extrema.
fn barrier_imbalance(mu: f64, f: f64) -> Option<f64> {
    let extrema = PotentialModel::new(mu, f).find_extrema();
    let (outer, saddle) = Channel::TristableEscape.locate(&extrema).ok()?;
    let (origin, _) = Channel::TristableEntry.locate(&extrema).ok()?;
    Some((saddle.u - outer.u) - (saddle.u - origin.u))
}

/// Solves ΔU1(μ_p) = ΔU0(μ_p) by bisection over the tristable range.
pub fn phase_boundary_bisection(f: f64) -> Result<f64> {
    check_above_threshold(f)?;
    let mu_b = (f * f - 1.0).sqrt();
    let mut lo = mu_b * (1.0 + 1e-6);
    let mut hi = 4.0 * mu_b;
    let g = |mu: f64| {
        barrier_imbalance(mu, f).ok_or_else(|| Error::ConvergenceFailure {
            diagnostics: format!("μ_p = {mu} left the tristable regime during bisection"),
        })
    };
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::ConvergenceFailure {
            diagnostics: format!("no sign change of ΔU1 − ΔU0 on [{lo}, {hi}]"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)?.signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Populations of the zero-amplitude state and the two period-two states
/// coupled by W₀₁ and W₁₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceKinetics {
    pub w01: f64,
    pub w10: f64,
    /// Nonzero decrements, ascending: {W₁₀, 2W₀₁ + W₁₀}.
    pub decrements: [f64; 2],
    /// Slowest relaxation rate, always W₁₀.
    pub nu1: f64,
    /// Stationary (w₀, w₁, w₂).
    pub populations: [f64; 3],
}

impl BalanceKinetics {
    /// Generator M of dw/dτ = M w for w = (w₀, w₁, w₂).
    pub fn rate_matrix(&self) -> [[f64; 3]; 3] {
        let (a, b) = (self.w01, self.w10);
        [[-2.0 * a, b, b], [a, -b, 0.0], [a, 0.0, -b]]
    }
}

pub fn balance_kinetics(w01: f64, w10: f64) -> Result<BalanceKinetics> {
    ensure_positive("W01", w01)?;
    ensure_positive("W10", w10)?;
    let total = w10 + 2.0 * w01;
    Ok(BalanceKinetics {
        w01,
        w10,
        decrements: [w10, total],
        nu1: w10,
        populations: [w10 / total, w01 / total, w01 / total],
    })
}
