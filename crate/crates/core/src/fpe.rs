//! Relaxation spectrum of the one-variable Fokker–Planck equation
//! `∂_τ ρ = ∂_Q(ρ ∂_Q U) + D ∂²_Q ρ`.
//!
//! The operator is symmetrized with ρ = exp(−U/2D) ψ, which turns it into
//! the Schrödinger form `−D ψ'' + V_eff ψ` with
//! `V_eff = (U')²/4D − U''/2`. Its eigenvalues are the decrements ν_n ≥ 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::params::ScaledParams;
use crate::potential::{GridSpec, PotentialModel, SUPPORT_LEVEL};
use crate::tridiag::SymTridiagonal;

/// Reference noise intensity for scaled curves.
pub const DEFAULT_REFERENCE_NOISE: f64 = 1e-3;
pub const DEFAULT_CURVE_GRID_POINTS: usize = 2001;

/// How the symmetrized operator is discretized on the uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// Second-order central differences written in conservative form: the
    /// nearest-neighbour hopping rates `(D/h²) exp(−ΔU/2D)` satisfy
    /// detailed balance, so `exp(−U/2D)` is an exact null vector and the
    /// boundary is exactly reflecting.
    #[default]
    DetailedBalance,
    /// `−D δ²ψ + V_eff ψ` with the three-point Laplacian, truncated at the
    /// grid edge. The null vector is reproduced only to O(h²).
    CentralDifference,
}

/// Discretized, symmetrized Fokker–Planck operator.
#[derive(Debug, Clone)]
pub struct FokkerPlanckOperator {
    pub model: PotentialModel,
    pub noise: f64,
    pub grid: GridSpec,
    pub discretization: Discretization,
    pub matrix: SymTridiagonal,
}

/// `V_eff(Q) = U'(Q)²/4D − U''(Q)/2`.
pub fn effective_potential(model: &PotentialModel, noise: f64, q: f64) -> f64 {
    let du = model.derivative(q);
    du * du / (4.0 * noise) - 0.5 * model.curvature(q)
}

pub fn build_operator(model: &PotentialModel, noise: f64, grid: &GridSpec) -> Result<FokkerPlanckOperator> {
    build_operator_with(model, noise, grid, Discretization::default())
}

pub fn build_operator_with(
    model: &PotentialModel,
    noise: f64,
    grid: &GridSpec,
    discretization: Discretization,
) -> Result<FokkerPlanckOperator> {
    ensure_positive("D", noise)?;
    let ratio = model.value(grid.q_max) / noise;
    if !(ratio >= SUPPORT_LEVEL) {
        return Err(Error::SupportTooSmall {
            q_max: grid.q_max,
            ratio,
            required: SUPPORT_LEVEL,
        });
    }
    let h = grid.spacing();
    let hop = noise / (h * h);
    let q = grid.points();
    let n = grid.n;
    let diag: Vec<f64> = match discretization {
        Discretization::DetailedBalance => {
            let u: Vec<f64> = q.iter().map(|&x| model.value(x)).collect();
            (0..n)
                .map(|i| {
                    let mut d = 0.0;
                    if i + 1 < n {
                        d += (-(u[i + 1] - u[i]) / (2.0 * noise)).exp();
                    }
                    if i > 0 {
                        d += (-(u[i - 1] - u[i]) / (2.0 * noise)).exp();
                    }
                    hop * d
                })
                .collect()
        }
        Discretization::CentralDifference => q
            .iter()
            .map(|&x| 2.0 * hop + effective_potential(model, noise, x))
            .collect(),
    };
    Ok(FokkerPlanckOperator {
        model: *model,
        noise,
        grid: *grid,
        discretization,
        matrix: SymTridiagonal::new(diag, vec![-hop; n - 1]),
    })
}

impl FokkerPlanckOperator {
    /// Symmetrized image `exp(−(U − U_min)/2D)` of ρ_st, unit 2-norm.
    pub fn ground_state(&self) -> Vec<f64> {
        let u: Vec<f64> = self.grid.points().iter().map(|&x| self.model.value(x)).collect();
        let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
        let mut psi: Vec<f64> = u.iter().map(|v| (-(v - u_min) / (2.0 * self.noise)).exp()).collect();
        let norm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|x| *x /= norm);
        psi
    }

    pub fn apply(&self, psi: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(psi)
    }

    /// max |H ψ₀| over interior nodes, for the discretized stationary state
    /// scaled to unit peak. The two edge nodes are excluded: there the
    /// truncated central-difference stencil sees ψ₀(±Q_max) ~ e^{−15}
    /// instead of a neighbour.
    pub fn stationary_residual(&self) -> f64 {
        let psi = self.ground_state();
        let peak = psi.iter().copied().fold(0.0, f64::max);
        let scaled: Vec<f64> = psi.iter().map(|x| x / peak).collect();
        let r = self.apply(&scaled);
        r[1..r.len() - 1].iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    /// Same operator on a grid with doubled spacing (every other node).
    pub fn coarsened(&self) -> Option<Result<Self>> {
        self.grid
            .coarsened()
            .map(|g| build_operator_with(&self.model, self.noise, &g, self.discretization))
    }
}

/// Grid-refinement record for ν₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// (grid points, ν₁) from coarsest to finest.
    pub levels: Vec<(usize, f64)>,
    /// Richardson estimate of the discretization error of the finest ν₁.
    pub est_error: f64,
    /// Richardson-extrapolated ν₁.
    pub extrapolated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    /// Zero-mode eigenvalue as computed (ideally 0).
    pub nu0: f64,
    /// ν₁ ≤ ν₂ ≤ … ≤ ν_k.
    pub decrements: Vec<f64>,
    /// Symmetrized eigenvectors ψ_0..ψ_k (unit 2-norm), when requested.
    pub modes: Vec<Vec<f64>>,
    pub grid_n: usize,
    pub convergence: Option<ConvergenceReport>,
}

impl EigenResult {
    pub fn nu1(&self) -> f64 {
        self.decrements[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Number of nonzero decrements.
    pub k: usize,
    pub modes: bool,
    /// Attach a grid-refinement report (solves on coarsened grids too).
    pub refine: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            k: 1,
            modes: false,
            refine: true,
        }
    }
}

fn spectrum(op: &FokkerPlanckOperator, count: usize) -> Vec<f64> {
    op.matrix.smallest_eigenvalues(count)
}

/// Lowest k+1 eigenvalues by Sturm bisection, eigenvectors by inverse
/// iteration, plus an optional Richardson refinement report.
pub fn lowest_decrements(op: &FokkerPlanckOperator, opts: SolveOptions) -> Result<EigenResult> {
    let k = opts.k.max(1);
    let values = spectrum(op, k + 1);
    let nu0 = values[0];
    let decrements = values[1..].to_vec();
    if !(decrements[0] > 0.0) {
        return Err(Error::ConvergenceFailure {
            diagnostics: format!("nonpositive first decrement {:e} (ν₀ = {nu0:e})", decrements[0]),
        });
    }
    let modes = if opts.modes {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(values.len());
        for &lam in &values {
            let v = op.matrix.eigenvector(lam, &basis);
            basis.push(v);
        }
        // fix the sign convention: positive at the rightmost extremum of |ψ|
        for v in basis.iter_mut() {
            let pivot = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        basis
    } else {
        Vec::new()
    };

    let convergence = if opts.refine {
        Some(refinement(op, decrements[0])?)
    } else {
        None
    };

    Ok(EigenResult {
        nu0,
        decrements: decrements.iter().map(|v| v.max(0.0)).collect(),
        modes,
        grid_n: op.grid.n,
        convergence,
    })
}

fn refinement(op: &FokkerPlanckOperator, fine_nu1: f64) -> Result<ConvergenceReport> {
    let mut levels = vec![(op.grid.n, fine_nu1)];
    let mut current = op.clone();
    for _ in 0..2 {
        match current.coarsened() {
            Some(next) => {
                let next = next?;
                let nu1 = spectrum(&next, 2)[1];
                levels.push((next.grid.n, nu1));
                current = next;
            }
            None => break,
        }
    }
    levels.reverse();
    let m = levels.len();
    if m < 2 {
        return Ok(ConvergenceReport {
            levels,
            est_error: f64::NAN,
            extrapolated: fine_nu1,
        });
    }
    let delta_fine = levels[m - 1].1 - levels[m - 2].1;
    if m >= 3 {
        let delta_coarse = levels[m - 2].1 - levels[m - 3].1;
        let floor = 1e-10 * fine_nu1.abs() + 64.0 * f64::EPSILON * op.matrix.norm_bound();
        if delta_fine.abs() > delta_coarse.abs() && delta_fine.abs() > floor {
            return Err(Error::ConvergenceFailure {
                diagnostics: format!(
                    "refinement deltas grow: {:e} then {:e} over grids {:?}",
                    delta_coarse,
                    delta_fine,
                    levels.iter().map(|l| l.0).collect::<Vec<_>>()
                ),
            });
        }
    }
    // second-order scheme: error(h) ≈ C h², so the fine error is δ/3
    Ok(ConvergenceReport {
        est_error: delta_fine.abs() / 3.0,
        extrapolated: fine_nu1 + delta_fine / 3.0,
        levels,
    })
}

/// ν₁ at (μ_p, f_p, D) on the support-rule grid.
pub fn first_decrement(model: &PotentialModel, noise: f64, grid_n: usize) -> Result<EigenResult> {
    let grid = GridSpec::from_support_rule(model, noise, grid_n)?;
    let op = build_operator(model, noise, &grid)?;
    lowest_decrements(&op, SolveOptions::default())
}

/// Parameters in critical-region units: μ̃ = D^{−1/3}μ_p,
/// f̃ = D^{−2/3}(f_p² − 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalScaledParams {
    pub mu_tilde: f64,
    pub f_tilde: f64,
    /// D^{2/3}: ν₁ = time_scale · ν̃₁.
    pub time_scale: f64,
    /// D^{1/6}: Q = length_scale · q̃.
    pub length_scale: f64,
}

pub fn to_critical_scaling(sp: &ScaledParams) -> Result<CriticalScaledParams> {
    ensure_positive("D", sp.noise)?;
    let d = sp.noise;
    Ok(CriticalScaledParams {
        mu_tilde: sp.mu / d.cbrt(),
        f_tilde: (sp.f * sp.f - 1.0) / d.cbrt().powi(2),
        time_scale: d.cbrt().powi(2),
        length_scale: d.powf(1.0 / 6.0),
    })
}

/// Inverse of [`to_critical_scaling`] at noise D, with λ_p = 2D (n̄ = 0).
pub fn from_critical_scaling(csp: &CriticalScaledParams, noise: f64) -> Result<ScaledParams> {
    ensure_positive("D", noise)?;
    let f_sq = 1.0 + csp.f_tilde * noise.cbrt().powi(2);
    if f_sq < 0.0 {
        return Err(Error::InvalidParameter {
            name: "f_tilde",
            reason: format!("f_p² = {f_sq} would be negative at D = {noise}"),
        });
    }
    Ok(ScaledParams::zero_temperature(csp.mu_tilde * noise.cbrt(), f_sq.sqrt(), noise))
}

/// Scaled parameters at a given D, without any input (μ_p, f_p).
pub fn critical_point_params(mu_tilde: f64, f_tilde: f64, noise: f64) -> Result<ScaledParams> {
    let d23 = noise.cbrt().powi(2);
    from_critical_scaling(
        &CriticalScaledParams {
            mu_tilde,
            f_tilde,
            time_scale: d23,
            length_scale: noise.powf(1.0 / 6.0),
        },
        noise,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub reference_noise: f64,
    pub grid_n: usize,
    pub k: usize,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            reference_noise: DEFAULT_REFERENCE_NOISE,
            grid_n: DEFAULT_CURVE_GRID_POINTS,
            k: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub mu_tilde: f64,
    pub f_tilde: f64,
    /// ν̃₁ = D^{−2/3} ν₁.
    pub nu1_tilde: f64,
    pub grid_n: usize,
    /// Richardson error estimate, scaled like ν̃₁.
    pub est_error: f64,
}

/// Scaled decrement curves ν̃₁(μ̃) for each f̃, ordered by f̃ then μ̃.
pub fn nu1_curves(f_tilde: &[f64], mu_tilde: &[f64], opts: CurveOptions) -> Result<Vec<CurvePoint>> {
    let cells: Vec<(f64, f64)> = f_tilde
        .iter()
        .flat_map(|&f| mu_tilde.iter().map(move |&m| (f, m)))
        .collect();
    cells
        .into_par_iter()
        .map(|(ft, mt)| {
            let d = opts.reference_noise;
            let sp = critical_point_params(mt, ft, d)?;
            let model = PotentialModel::from_params(&sp);
            let grid = GridSpec::from_support_rule(&model, d, opts.grid_n)?;
            let op = build_operator(&model, d, &grid)?;
            let res = lowest_decrements(
                &op,
                SolveOptions {
                    k: opts.k,
                    modes: false,
                    refine: true,
                },
            )?;
            let scale = d.cbrt().powi(2);
            Ok(CurvePoint {
                mu_tilde: mt,
                f_tilde: ft,
                nu1_tilde: res.nu1() / scale,
                grid_n: grid.n,
                est_error: res.convergence.map_or(f64::NAN, |c| c.est_error) / scale,
            })
        })
        .collect()
}
