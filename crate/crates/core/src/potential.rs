//! The sextic slow-variable potential
//! `U(Q) = Q²[μ_p² − (f_p² − 1)]/4 − μ_p Q⁴/4 + Q⁶/12`,
//! its extrema, the bifurcation lines, and the Boltzmann stationary density.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::params::ScaledParams;

/// Roots of U' (in x = Q²) closer than this are merged and flagged.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;
/// Grid support rule: U(Q_max)/D must reach this value.
pub const SUPPORT_LEVEL: f64 = 30.0;
pub const DEFAULT_GRID_POINTS: usize = 4001;
/// Minimum point count of a [`GridSpec`].
pub const MIN_GRID_POINTS: usize = 201;

/// Control parameters (μ_p, f_p) a sextic model was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub mu: f64,
    pub f: f64,
}

impl Control {
    /// μ_B = (f_p² − 1)^{1/2}, or `None` below threshold.
    pub fn mu_b(&self) -> Option<f64> {
        let excess = self.f * self.f - 1.0;
        (excess >= 0.0).then(|| excess.sqrt())
    }
}

/// Even polynomial `U(Q) = c2 Q² + c4 Q⁴ + c6 Q⁶`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub c2: f64,
    pub c4: f64,
    pub c6: f64,
    /// Present when the model was built from (μ_p, f_p).
    pub control: Option<Control>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub u: f64,
    pub du: f64,
    pub d2u: f64,
}

impl PotentialModel {
    pub fn new(mu: f64, f: f64) -> Self {
        Self {
            c2: (mu * mu - (f * f - 1.0)) / 4.0,
            c4: -mu / 4.0,
            c6: 1.0 / 12.0,
            control: Some(Control { mu, f }),
        }
    }

    pub fn from_params(sp: &ScaledParams) -> Self {
        Self::new(sp.mu, sp.f)
    }

    pub fn from_coefficients(c2: f64, c4: f64, c6: f64) -> Self {
        Self {
            c2,
            c4,
            c6,
            control: None,
        }
    }

    /// Harmonic well κQ²/2 (Ornstein–Uhlenbeck process).
    pub fn harmonic(kappa: f64) -> Self {
        Self::from_coefficients(kappa / 2.0, 0.0, 0.0)
    }

    #[inline]
    pub fn value(&self, q: f64) -> f64 {
        let x = q * q;
        x * (self.c2 + x * (self.c4 + x * self.c6))
    }

    #[inline]
    pub fn derivative(&self, q: f64) -> f64 {
        let x = q * q;
        q * (2.0 * self.c2 + x * (4.0 * self.c4 + 6.0 * self.c6 * x))
    }

    #[inline]
    pub fn curvature(&self, q: f64) -> f64 {
        let x = q * q;
        2.0 * self.c2 + x * (12.0 * self.c4 + 30.0 * self.c6 * x)
    }

    pub fn evaluate(&self, q: f64) -> Evaluation {
        Evaluation {
            u: self.value(q),
            du: self.derivative(q),
            d2u: self.curvature(q),
        }
    }

    /// Nonzero real roots x = Q² of U'(Q)/Q, in ascending order, before any
    /// positivity filtering.
    fn squared_roots(&self) -> Vec<f64> {
        if let Some(ctl) = self.control {
            // U'(Q)/Q = (x − μ − μ_B)(x − μ + μ_B)/2 exactly
            return match ctl.mu_b() {
                Some(mu_b) => vec![ctl.mu - mu_b, ctl.mu + mu_b],
                None => Vec::new(),
            };
        }
        let (a, b, c) = (6.0 * self.c6, 4.0 * self.c4, 2.0 * self.c2);
        if a == 0.0 {
            return if b == 0.0 { Vec::new() } else { vec![-c / b] };
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Vec::new();
        }
        let sq = disc.sqrt();
        let qq = -0.5 * (b + b.signum() * sq);
        let mut roots = if qq == 0.0 {
            vec![0.0, 0.0]
        } else {
            vec![qq / a, c / qq]
        };
        roots.sort_by(f64::total_cmp);
        roots
    }

    /// Extrema of U via the closed-form quadratic in Q².
    pub fn find_extrema(&self) -> ExtremumSet {
        let roots = self.squared_roots();
        let mut degenerate = false;
        let mut kept: Vec<f64> = Vec::new();
        for &x in &roots {
            if x.abs() < DEGENERACY_TOLERANCE {
                // merges with the origin
                degenerate = true;
            } else if x > 0.0 {
                kept.push(x);
            }
        }
        let mut double_root = false;
        if kept.len() == 2 && (kept[1] - kept[0]).abs() < DEGENERACY_TOLERANCE {
            // saddle-node: an inflection pair, neither attractor nor saddle
            degenerate = true;
            double_root = true;
        }

        let mut attractors = Vec::new();
        let mut saddles = Vec::new();

        let origin_curvature = 2.0 * self.c2;
        let origin_is_min = if self.c2.abs() < DEGENERACY_TOLERANCE {
            degenerate = true;
            if self.c4 != 0.0 {
                self.c4 > 0.0
            } else {
                self.c6 >= 0.0
            }
        } else {
            self.c2 > 0.0
        };
        let origin = Extremum {
            q: 0.0,
            u: 0.0,
            curvature: origin_curvature,
        };
        if origin_is_min {
            attractors.push(origin);
        } else {
            saddles.push(origin);
        }

        if !double_root {
            for &x in &kept {
                let q = x.sqrt();
                let curvature = self.curvature(q);
                let u = self.value(q);
                let pair = [
                    Extremum {
                        q: -q,
                        u,
                        curvature,
                    },
                    Extremum { q, u, curvature },
                ];
                if curvature > 0.0 {
                    attractors.extend(pair);
                } else {
                    saddles.extend(pair);
                }
            }
        }
        attractors.sort_by(|a, b| a.q.total_cmp(&b.q));
        saddles.sort_by(|a, b| a.q.total_cmp(&b.q));

        let regime = match attractors.len() {
            0 | 1 => Regime::Monostable,
            2 => Regime::Bistable,
            _ => Regime::Tristable,
        };
        ExtremumSet {
            attractors,
            saddles,
            regime,
            degenerate,
        }
    }

    /// Position where |U'(Q)/Q| is smallest away from the origin, i.e. the
    /// vertex of the quadratic U'/Q in x = Q². Below threshold this is the
    /// ghost of the period-two states: a shoulder with weak drift that hosts
    /// slow relaxation even though it is not an extremum. Zero if the vertex
    /// lies at x ≤ 0.
    pub fn shoulder_q(&self) -> f64 {
        if self.c6 > 0.0 {
            let vertex = -4.0 * self.c4 / (12.0 * self.c6);
            if vertex > 0.0 {
                return vertex.sqrt();
            }
        }
        0.0
    }

    /// Largest |U''| over |Q| ≤ q_max.
    pub fn max_abs_curvature(&self, q_max: f64) -> f64 {
        // U'' is quadratic in x = Q²; check the endpoints and the vertex
        let x_max = q_max * q_max;
        let g = |x: f64| 2.0 * self.c2 + x * (12.0 * self.c4 + 30.0 * self.c6 * x);
        let mut best = g(0.0).abs().max(g(x_max).abs());
        if self.c6 != 0.0 {
            let vertex = -12.0 * self.c4 / (60.0 * self.c6);
            if vertex > 0.0 && vertex < x_max {
                best = best.max(g(vertex).abs());
            }
        }
        best
    }
}

/// One stationary point of U.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub q: f64,
    pub u: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Monostable,
    Bistable,
    Tristable,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Monostable => "monostable",
            Regime::Bistable => "bistable",
            Regime::Tristable => "tristable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremumSet {
    /// Minima, ascending in Q.
    pub attractors: Vec<Extremum>,
    /// Maxima, ascending in Q.
    pub saddles: Vec<Extremum>,
    pub regime: Regime,
    /// Set when two extrema were merged (the model sits on a bifurcation line).
    pub degenerate: bool,
}

impl ExtremumSet {
    /// Outermost attractor on the positive side.
    pub fn outer_attractor(&self) -> Option<&Extremum> {
        self.attractors.last().filter(|a| a.q > 0.0)
    }

    pub fn positive_saddle(&self) -> Option<&Extremum> {
        self.saddles.iter().find(|s| s.q > 0.0)
    }

    pub fn origin(&self) -> Option<&Extremum> {
        self.attractors
            .iter()
            .chain(self.saddles.iter())
            .find(|e| e.q == 0.0)
    }

    pub fn outermost_q(&self) -> f64 {
        self.attractors
            .iter()
            .chain(self.saddles.iter())
            .map(|e| e.q.abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric uniform grid on [−q_max, q_max] with an odd point count, so
/// that Q = 0 is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_max: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(q_max: f64, n: usize) -> Result<Self> {
        ensure_positive("q_max", q_max)?;
        if n < MIN_GRID_POINTS || n.is_multiple_of(2) {
            return Err(Error::InvalidParameter {
                name: "grid_n",
                reason: format!("must be odd and at least {MIN_GRID_POINTS}, got {n}"),
            });
        }
        Ok(Self { q_max, n })
    }

    /// Grid whose half-width is the smallest Q beyond every extremum where
    /// U(Q)/D reaches [`SUPPORT_LEVEL`].
    pub fn from_support_rule(model: &PotentialModel, noise: f64, n: usize) -> Result<Self> {
        Self::new(support_half_width(model, noise, SUPPORT_LEVEL)?, n)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.q_max / (self.n - 1) as f64
    }

    /// Node i. Computed as (i − m)·h so that the grid is bit-symmetric.
    pub fn point(&self, i: usize) -> f64 {
        let m = (self.n / 2) as i64;
        (i as i64 - m) as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Every other node of this grid, i.e. the grid with doubled spacing.
    pub fn coarsened(&self) -> Option<Self> {
        let n = (self.n - 1) / 2 + 1;
        (n % 2 == 1 && n >= MIN_GRID_POINTS).then_some(Self { q_max: self.q_max, n })
    }
}

/// Smallest Q_max outside every extremum (and the drift shoulder, see
/// [`PotentialModel::shoulder_q`]) with U(Q_max) ≥ level·D.
pub fn support_half_width(model: &PotentialModel, noise: f64, level: f64) -> Result<f64> {
    ensure_positive("D", noise)?;
    let q0 = model.find_extrema().outermost_q().max(model.shoulder_q());
    let target = level * noise + model.value(q0).max(0.0);
    let confining = model.c6 > 0.0
        || (model.c6 == 0.0 && model.c4 > 0.0)
        || (model.c6 == 0.0 && model.c4 == 0.0 && model.c2 > 0.0);
    if !confining {
        return Err(Error::InvalidParameter {
            name: "potential",
            reason: "U is not confining; no grid support exists".into(),
        });
    }
    let mut lo = q0;
    let mut hi = q0.max(noise.sqrt()).max(1e-6);
    while model.value(hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::InvalidParameter {
                name: "potential",
                reason: "support search diverged".into(),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if model.value(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Composite Simpson weights for an odd number of uniformly spaced nodes.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "Simpson's rule needs an odd node count");
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Truncated-mass level above which [`stationary_distribution`] warns.
pub const TAIL_MASS_WARNING: f64 = 1e-10;

/// Boltzmann density `ρ_st(Q) = Z⁻¹ exp(−U/D)` sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub density: Vec<f64>,
    /// ln Z.
    pub log_partition: f64,
    /// Estimated probability mass outside the grid.
    pub tail_mass: f64,
    pub warning: Option<String>,
    weights: Vec<f64>,
}

impl StationaryDistribution {
    /// ∫ Q^k ρ_st dQ.
    pub fn moment(&self, k: i32) -> f64 {
        self.q
            .iter()
            .zip(&self.density)
            .zip(&self.weights)
            .map(|((q, r), w)| w * r * q.powi(k))
            .sum()
    }

    /// ⟨Q⁴⟩/⟨Q²⟩² (the mean vanishes by parity).
    pub fn kurtosis(&self) -> f64 {
        let m2 = self.moment(2);
        self.moment(4) / (m2 * m2)
    }

    pub fn total_mass(&self) -> f64 {
        self.moment(0)
    }

    /// Probability of lo ≤ Q ≤ hi from the Boltzmann form, by Simpson
    /// quadrature on a dedicated grid.
    pub fn interval_probability(model: &PotentialModel, noise: f64, log_z: f64, lo: f64, hi: f64) -> f64 {
        let n = 201;
        let h = (hi - lo) / (n - 1) as f64;
        simpson_weights(n, h)
            .iter()
            .enumerate()
            .map(|(i, w)| w * (-model.value(lo + i as f64 * h) / noise - log_z).exp())
            .sum()
    }
}

pub fn stationary_distribution(
    model: &PotentialModel,
    noise: f64,
    grid: &GridSpec,
) -> Result<StationaryDistribution> {
    ensure_positive("D", noise)?;
    let q = grid.points();
    let u: Vec<f64> = q.iter().map(|&x| model.value(x)).collect();
    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let weights = simpson_weights(grid.n, grid.spacing());
    let unnormalized: Vec<f64> = u.iter().map(|&v| (-(v - u_min) / noise).exp()).collect();
    let z_shifted: f64 = unnormalized.iter().zip(&weights).map(|(r, w)| r * w).sum();
    let density: Vec<f64> = unnormalized.iter().map(|r| r / z_shifted).collect();
    let log_partition = z_shifted.ln() - u_min / noise;

    // Laplace estimate of ∫_{Q_max}^∞ exp(−U/D), both tails
    let edge = model.evaluate(grid.q_max);
    let tail_mass = if edge.du > 0.0 {
        2.0 * (-(edge.u / noise) - log_partition).exp() * noise / edge.du
    } else {
        f64::INFINITY
    };
    let warning = (tail_mass > TAIL_MASS_WARNING).then(|| {
        format!(
            "grid half-width {} truncates an estimated probability mass {tail_mass:.3e}",
            grid.q_max
        )
    });
    Ok(StationaryDistribution {
        q,
        u,
        density,
        log_partition,
        tail_mass,
        warning,
        weights,
    })
}

/// One sampled row of the bifurcation diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationRow {
    pub f: f64,
    /// Lower (supercritical) line μ_B1 = −μ_B.
    pub mu_b1: f64,
    /// Upper (subcritical) line μ_B2 = +μ_B.
    pub mu_b2: f64,
    /// Equal-occupation line μ_p* = 2μ_B.
    pub mu_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub rows: Vec<BifurcationRow>,
    /// Where all lines meet, (f_p, μ_p) = (1, 0).
    pub critical_point: (f64, f64),
    /// The saddle-node half-line f_p = 1, μ_p ≥ 0, as its f_p value.
    pub saddle_node_f: f64,
}

/// μ_B = (f_p² − 1)^{1/2} for f_p ≥ 1.
pub fn bifurcation_detuning(f: f64) -> Result<f64> {
    if !(f >= 1.0) || !f.is_finite() {
        return Err(Error::InvalidParameter {
            name: "f_p",
            reason: format!("bifurcation lines exist only for f_p >= 1, got {f}"),
        });
    }
    Ok((f * f - 1.0).sqrt())
}

pub fn bifurcation_boundaries(f_grid: &[f64]) -> Result<BifurcationDiagram> {
    let rows = f_grid
        .iter()
        .map(|&f| {
            let mu_b = bifurcation_detuning(f)?;
            let mu_phase = if f > 1.0 {
                crate::rates::phase_boundary(f)?
            } else {
                0.0
            };
            Ok(BifurcationRow {
                f,
                mu_b1: -mu_b,
                mu_b2: mu_b,
                mu_phase,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BifurcationDiagram {
        rows,
        critical_point: (1.0, 0.0),
        saddle_node_f: 1.0,
    })
}
