//! Deterministic two-variable flow in the rotating frame. With
//! `s = sgn γ` and `R² = Q² + P²`,
//!
//! ```text
//! dQ/dτ =  s·P(R² − μ) + (f − 1)Q
//! dP/dτ = −s·Q(R² − μ) − (f + 1)P
//! ```
//!
//! The sign s enters only through the Hamiltonian part, so s → −s is the
//! reflection P → −P. The one-variable potential follows from eliminating
//! the fast quadrature P.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::params::ScaledParams;
use crate::potential::PotentialModel;
use crate::rates::phase_boundary;

/// Residual |drift| accepted for a fixed point.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;
/// Fixed points closer than this are the same point.
const DEDUPE_DISTANCE: f64 = 1e-7;
const RING_SEEDS: usize = 8;
/// Bracket width at which boundary bisection stops.
const BISECTION_TOLERANCE: f64 = 1e-13;
/// Relative deviation of the eliminated drift that is taken as agreement
/// with the potential.
pub const ADIABATIC_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub q: f64,
    pub p: f64,
}

impl FlowState {
    pub fn new(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    pub fn r2(&self) -> f64 {
        self.q * self.q + self.p * self.p
    }
}

/// Control parameters used by the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Flow {
    mu: f64,
    f: f64,
    s: f64,
}

impl Flow {
    fn of(sp: &ScaledParams) -> Self {
        Self {
            mu: sp.mu,
            f: sp.f,
            s: sp.sign_gamma.value(),
        }
    }

    fn drift(&self, q: f64, p: f64) -> (f64, f64) {
        let d = q * q + p * p - self.mu;
        (
            self.s * p * d + (self.f - 1.0) * q,
            -self.s * q * d - (self.f + 1.0) * p,
        )
    }

    fn jacobian(&self, q: f64, p: f64) -> [[f64; 2]; 2] {
        let d = q * q + p * p - self.mu;
        let s = self.s;
        [
            [2.0 * s * p * q + self.f - 1.0, s * (d + 2.0 * p * p)],
            [-s * (d + 2.0 * q * q), -2.0 * s * p * q - self.f - 1.0],
        ]
    }
}

pub fn drift(state: FlowState, sp: &ScaledParams) -> (f64, f64) {
    Flow::of(sp).drift(state.q, state.p)
}

pub fn jacobian(state: FlowState, sp: &ScaledParams) -> [[f64; 2]; 2] {
    Flow::of(sp).jacobian(state.q, state.p)
}

/// Eigenvalues of a 2×2 matrix as (re, im) pairs, larger real part first.
pub fn eigenvalues_2x2(m: [[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let half = 0.5 * tr;
    let disc = half * half - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [(half + r, 0.0), (half - r, 0.0)]
    } else {
        let i = (-disc).sqrt();
        [(half, i), (half, -i)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    StableNode,
    StableFocus,
    Saddle,
    UnstableNode,
    UnstableFocus,
    /// A zero eigenvalue: the point sits on a bifurcation line.
    Marginal,
}

impl Stability {
    pub fn is_stable(self) -> bool {
        matches!(self, Stability::StableNode | Stability::StableFocus)
    }

    fn classify(eig: [(f64, f64); 2]) -> Self {
        let [(r1, i1), (r2, _)] = eig;
        let scale = r1.abs().max(r2.abs()).max(1.0);
        let zero = 1e-12 * scale;
        if r1.abs() < zero || r2.abs() < zero {
            Stability::Marginal
        } else if r1 > 0.0 && r2 < 0.0 {
            Stability::Saddle
        } else if r1 < 0.0 {
            if i1 != 0.0 {
                Stability::StableFocus
            } else {
                Stability::StableNode
            }
        } else if i1 != 0.0 {
            Stability::UnstableFocus
        } else {
            Stability::UnstableNode
        }
    }
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::StableNode => "stable-node",
            Stability::StableFocus => "stable-focus",
            Stability::Saddle => "saddle",
            Stability::UnstableNode => "unstable-node",
            Stability::UnstableFocus => "unstable-focus",
            Stability::Marginal => "marginal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowFixedPoint {
    pub q: f64,
    pub p: f64,
    pub r2: f64,
    /// Jacobian eigenvalues as (re, im).
    pub eigenvalues: [(f64, f64); 2],
    pub stability: Stability,
    /// |drift| at the point.
    pub residual: f64,
}

impl FlowFixedPoint {
    fn at(flow: &Flow, q: f64, p: f64) -> Self {
        let eigenvalues = eigenvalues_2x2(flow.jacobian(q, p));
        let (a, b) = flow.drift(q, p);
        Self {
            q,
            p,
            r2: q * q + p * p,
            eigenvalues,
            stability: Stability::classify(eigenvalues),
            residual: a.hypot(b),
        }
    }
}

/// Damped Newton iteration on the drift. Returns the final point and its
/// residual.
fn newton(flow: &Flow, mut q: f64, mut p: f64) -> (f64, f64, f64) {
    let norm = |q: f64, p: f64| {
        let (a, b) = flow.drift(q, p);
        a.hypot(b)
    };
    let mut res = norm(q, p);
    for _ in 0..100 {
        if res < 1e-15 {
            break;
        }
        let (a, b) = flow.drift(q, p);
        let j = flow.jacobian(q, p);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dq = (j[1][1] * a - j[0][1] * b) / det;
        let dp = (j[0][0] * b - j[1][0] * a) / det;
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let (nq, np) = (q - step * dq, p - step * dp);
            let r = norm(nq, np);
            if r < res {
                q = nq;
                p = np;
                res = r;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (q, p, res)
}

/// Radii R² = μ ± μ_B of the nonzero fixed points that exist.
fn admissible_radii(mu: f64, f: f64) -> Vec<f64> {
    if f < 1.0 {
        return Vec::new();
    }
    let mu_b = (f * f - 1.0).sqrt();
    let mut radii = vec![mu + mu_b];
    if mu_b > 0.0 {
        radii.push(mu - mu_b);
    }
    radii.retain(|&r| r > 0.0);
    radii
}

/// Expected number of fixed points away from bifurcation lines.
pub fn expected_fixed_point_count(mu: f64, f: f64) -> usize {
    1 + 2 * admissible_radii(mu, f).len()
}

pub fn find_flow_fixed_points(sp: &ScaledParams) -> Result<Vec<FlowFixedPoint>> {
    ensure_finite("mu_p", sp.mu)?;
    ensure_finite("f_p", sp.f)?;
    let flow = Flow::of(sp);
    let mut found: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut push = |q: f64, p: f64| {
        if !found.iter().any(|&(a, b)| (a - q).hypot(b - p) < DEDUPE_DISTANCE) {
            found.push((q, p));
        }
    };

    for r2 in admissible_radii(sp.mu, sp.f) {
        let d = r2 - sp.mu;
        // on the circle, P/Q = −s·d/(f + 1)
        let (ux, uy) = (sp.f + 1.0, -flow.s * d);
        let scale = r2.sqrt() / ux.hypot(uy);
        for sign in [1.0, -1.0] {
            let (q, p, res) = newton(&flow, sign * ux * scale, sign * uy * scale);
            if res > FIXED_POINT_TOLERANCE {
                return Err(Error::NewtonFailure {
                    q,
                    p,
                    residual: res,
                    tolerance: FIXED_POINT_TOLERANCE,
                });
            }
            push(q, p);
        }
        for k in 0..RING_SEEDS {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / RING_SEEDS as f64;
            let r = r2.sqrt();
            let (q, p, res) = newton(&flow, r * phi.cos(), r * phi.sin());
            if res <= FIXED_POINT_TOLERANCE && q.hypot(p) > DEDUPE_DISTANCE {
                push(q, p);
            }
        }
    }

    let mut points: Vec<FlowFixedPoint> = found.iter().map(|&(q, p)| FlowFixedPoint::at(&flow, q, p)).collect();
    points.sort_by(|a, b| a.r2.total_cmp(&b.r2).then(a.q.total_cmp(&b.q)));
    let expected = expected_fixed_point_count(sp.mu, sp.f);
    if points.len() != expected {
        return Err(Error::ConvergenceFailure {
            diagnostics: format!(
                "found {} fixed points at (mu_p, f_p) = ({}, {}), expected {expected}",
                points.len(),
                sp.mu,
                sp.f
            ),
        });
    }
    Ok(points)
}

/// Largest real part of the Jacobian eigenvalues at Q = P = 0.
pub fn origin_growth_rate(mu: f64, f: f64) -> f64 {
    let flow = Flow { mu, f, s: 1.0 };
    eigenvalues_2x2(flow.jacobian(0.0, 0.0))[0].0
}

/// Bisects `pred` on [a, b] where pred(a) ≠ pred(b).
fn bisect(mut a: f64, mut b: f64, pred: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    let pa = pred(a)?;
    if pa == pred(b)? {
        return Err(Error::ConvergenceFailure {
            diagnostics: format!("no transition bracketed in [{a}, {b}]"),
        });
    }
    while (b - a).abs() > BISECTION_TOLERANCE {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        if pred(m)? == pa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracedRow {
    pub f: f64,
    pub mu_b1_detected: f64,
    pub mu_b2_detected: f64,
    pub mu_b1_exact: f64,
    pub mu_b2_exact: f64,
    /// Equal-activation-energy line, absent at f = 1.
    pub mu_phase: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracedDiagram {
    pub rows: Vec<TracedRow>,
    /// (μ, detected f) on the line where the nonzero states appear for μ > 0.
    pub saddle_node: Vec<(f64, f64)>,
}

impl TracedDiagram {
    /// Largest |detected − exact| over both pitchfork lines.
    pub fn max_deviation(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                (r.mu_b1_detected - r.mu_b1_exact)
                    .abs()
                    .max((r.mu_b2_detected - r.mu_b2_exact).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Stability boundaries of the zero-amplitude state for each f ≥ 1,
/// located by bisecting the sign of its growth rate, plus the f-position of
/// the saddle-node line for each μ in `saddle_node_mu`, located by
/// bisecting the fixed-point count.
pub fn trace_bifurcation_diagram(f_grid: &[f64], saddle_node_mu: &[f64]) -> Result<TracedDiagram> {
    if f_grid.is_empty() {
        return Err(Error::InvalidParameter {
            name: "f_grid",
            reason: "must not be empty".into(),
        });
    }
    let rows = f_grid
        .par_iter()
        .map(|&f| {
            ensure_finite("f_p", f)?;
            if f < 1.0 {
                return Err(Error::InvalidParameter {
                    name: "f_p",
                    reason: format!("boundaries exist only for f_p >= 1, got {f}"),
                });
            }
            let unstable = |mu: f64| Ok(origin_growth_rate(mu, f) >= 0.0);
            let exact = (f * f - 1.0).sqrt();
            Ok(TracedRow {
                f,
                mu_b1_detected: bisect(-f, 0.0, unstable)?,
                mu_b2_detected: bisect(0.0, f, unstable)?,
                mu_b1_exact: -exact,
                mu_b2_exact: exact,
                mu_phase: (f > 1.0).then(|| phase_boundary(f)).transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let saddle_node = saddle_node_mu
        .par_iter()
        .map(|&mu| {
            if !(mu > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "mu_p",
                    reason: format!("the saddle-node line lies at mu_p > 0, got {mu}"),
                });
            }
            let has_states = |f: f64| {
                let sp = ScaledParams::zero_temperature(mu, f, 1.0);
                Ok(find_flow_fixed_points(&sp)?.len() > 1)
            };
            Ok((mu, bisect(0.5, 1.0 + mu, has_states)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TracedDiagram { rows, saddle_node })
}

// ---------------------------------------------------------------------------
// adiabatic elimination

/// Solves dP/dτ = 0 for the root P(Q) that vanishes at Q = 0.
pub fn slaved_momentum(q: f64, sp: &ScaledParams) -> Result<f64> {
    let s = sp.sign_gamma.value();
    let a = sp.f + 1.0;
    let c = q * q * (q * q - sp.mu);
    let disc = a * a - 4.0 * c;
    if disc < 0.0 {
        return Err(Error::BranchLost { q, discriminant: disc });
    }
    Ok(-2.0 * s * q * (q * q - sp.mu) / (a + disc.sqrt()))
}

/// dQ/dτ with P slaved to Q, to be compared with −U'(Q).
pub fn adiabatic_drift(q: f64, sp: &ScaledParams) -> Result<f64> {
    let p = slaved_momentum(q, sp)?;
    Ok(Flow::of(sp).drift(q, p).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticDeviation {
    pub q_max: f64,
    pub max_abs_deviation: f64,
    pub max_abs_reference: f64,
    /// max|drift + U'| / max|U'| over |Q| ≤ q_max.
    pub relative: f64,
}

/// Compares the eliminated drift with −U'(Q) on `points` nodes of
/// [0, q_max] (both functions are odd in Q).
pub fn adiabatic_deviation(sp: &ScaledParams, q_max: f64, points: usize) -> Result<AdiabaticDeviation> {
    let model = PotentialModel::from_params(sp);
    let n = points.max(2);
    let mut dev: f64 = 0.0;
    let mut reference: f64 = 0.0;
    for i in 0..n {
        let q = q_max * i as f64 / (n - 1) as f64;
        let du = model.derivative(q);
        dev = dev.max((adiabatic_drift(q, sp)? + du).abs());
        reference = reference.max(du.abs());
    }
    Ok(AdiabaticDeviation {
        q_max,
        max_abs_deviation: dev,
        max_abs_reference: reference,
        relative: dev / reference,
    })
}

/// Interval between the outer attractors of U, |Q| ≤ (μ + μ_B)^{1/2}.
pub fn basin_half_width(sp: &ScaledParams) -> Result<f64> {
    if sp.f <= 1.0 || sp.mu + sp.excess().sqrt() <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "f_p",
            reason: "no period-two states at these parameters".into(),
        });
    }
    Ok((sp.mu + sp.excess().sqrt()).sqrt())
}

// ---------------------------------------------------------------------------
// relaxation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-9,
            h0: 1e-3,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

// Dormand–Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates an autonomous 2-D system from `y0` over [0, t_end] with the
/// adaptive Dormand–Prince pair.
pub fn integrate_dopri5(
    rhs: impl Fn([f64; 2]) -> [f64; 2],
    y0: [f64; 2],
    t_end: f64,
    opts: OdeOptions,
) -> Result<([f64; 2], OdeStats)> {
    let mut y = y0;
    let mut t = 0.0;
    let mut h = opts.h0.min(t_end);
    let mut stats = OdeStats { accepted: 0, rejected: 0 };
    let mut k = [[0.0; 2]; 7];
    k[0] = rhs(y);
    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::ConvergenceFailure {
                diagnostics: format!("ODE step budget exhausted at t = {t}"),
            });
        }
        h = h.min(t_end - t);
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                for d in 0..2 {
                    ys[d] += h * A[s][j] * kj[d];
                }
            }
            k[s] = rhs(ys);
        }
        let mut y5 = y;
        let mut err: f64 = 0.0;
        for d in 0..2 {
            let mut e = 0.0;
            for s in 0..7 {
                y5[d] += h * B5[s] * k[s][d];
                e += h * (B5[s] - B4[s]) * k[s][d];
            }
            let sc = opts.atol + opts.rtol * y[d].abs().max(y5[d].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            return Err(Error::ConvergenceFailure {
                diagnostics: format!("non-finite ODE state at t = {t}"),
            });
        }
        if err <= 1.0 {
            t += h;
            y = y5;
            k[0] = k[6];
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok((y, stats))
}

/// Integrates the noiseless flow from `start` for a time `t_end`.
pub fn relax(start: FlowState, sp: &ScaledParams, t_end: f64, opts: OdeOptions) -> Result<FlowState> {
    let flow = Flow::of(sp);
    let (y, _) = integrate_dopri5(
        |y| {
            let (a, b) = flow.drift(y[0], y[1]);
            [a, b]
        },
        [start.q, start.p],
        t_end,
        opts,
    )?;
    Ok(FlowState::new(y[0], y[1]))
}
