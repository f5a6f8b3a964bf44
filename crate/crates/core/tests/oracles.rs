use nalgebra::{Matrix3, SymmetricEigen};
use paramosc_core::fpe::first_decrement;
use paramosc_core::potential::{PotentialModel, Regime};
use paramosc_core::rates::{balance_kinetics, switching_rate, Channel};
use paramosc_core::ScaledParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Positive zeros of U' by sign changes on a fine grid, refined by bisection.
fn bisection_zeros(model: &PotentialModel, q_hi: f64) -> Vec<f64> {
    let n = 30_000;
    let mut zeros = Vec::new();
    let mut a = 1e-9;
    let mut fa = model.derivative(a);
    for i in 1..=n {
        let b = q_hi * i as f64 / n as f64;
        let fb = model.derivative(b);
        if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = model.derivative(mid);
                if fm * flo > 0.0 {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            zeros.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    zeros
}

#[test]
fn closed_form_extrema_match_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 1000 {
        let mu: f64 = rng.random_range(-2.0..3.0);
        let f: f64 = rng.random_range(0.5..2.0);
        let mu_b = (f * f - 1.0).max(0.0).sqrt();
        // skip draws too close to a bifurcation for a sign-change search
        if (mu - mu_b).abs() < 1e-3 || (mu + mu_b).abs() < 1e-3 || (f - 1.0).abs() < 1e-3 {
            continue;
        }
        checked += 1;
        let model = PotentialModel::new(mu, f);
        let ext = model.find_extrema();
        let mut closed: Vec<f64> = ext
            .attractors
            .iter()
            .chain(&ext.saddles)
            .filter(|e| e.q > 0.0)
            .map(|e| e.q)
            .collect();
        closed.sort_by(f64::total_cmp);
        let oracle = bisection_zeros(&model, 3.0);
        assert_eq!(closed.len(), oracle.len(), "mu = {mu}, f = {f}");
        for (a, b) in closed.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "mu = {mu}, f = {f}: {a} vs {b}");
        }
        for e in ext.attractors.iter().chain(&ext.saddles) {
            assert!(model.derivative(e.q).abs() < 1e-10);
        }
        // nonzero extrema come in ± pairs
        for e in ext.attractors.iter().chain(&ext.saddles).filter(|e| e.q != 0.0) {
            let m = model.evaluate(-e.q);
            assert_eq!(m.u, e.u);
            assert_eq!(m.d2u, e.curvature);
        }
    }
}

#[test]
fn balance_decrements_match_dense_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let w01: f64 = rng.random_range(1e-3..10.0);
        let w10: f64 = rng.random_range(1e-3..10.0);
        let bk = balance_kinetics(w01, w10).unwrap();
        // symmetrize with the stationary populations: S = P^{-1/2} M P^{1/2}
        let m = bk.rate_matrix();
        let p = bk.populations;
        let s = Matrix3::from_fn(|i, j| m[i][j] * (p[j] / p[i]).sqrt());
        let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().map(|v| -v).collect();
        ev.sort_by(f64::total_cmp);
        let scale = w01.max(w10);
        assert!(ev[0].abs() < 1e-13 * scale);
        assert!((ev[1] - bk.decrements[0]).abs() < 1e-13 * scale, "{ev:?} vs {:?}", bk.decrements);
        assert!((ev[2] - bk.decrements[1]).abs() < 1e-13 * scale);
        assert_eq!(bk.nu1, w10.min(w10 + 2.0 * w01));
    }
}

#[test]
fn deep_double_well_decrement_is_twice_kramers_rate() {
    let noise = 0.01;
    for ratio in [6.0f64, 8.0, 10.0] {
        let mu_b = (6.0 * ratio * noise).cbrt();
        let sp = ScaledParams::zero_temperature(0.0, (1.0 + mu_b * mu_b).sqrt(), noise);
        let model = PotentialModel::from_params(&sp);
        assert_eq!(model.find_extrema().regime, Regime::Bistable);
        let rate = switching_rate(&model, &sp, Channel::Bistable).unwrap();
        let nu1 = first_decrement(&model, noise, 4001).unwrap().nu1();
        if ratio == 8.0 {
            assert!((nu1 / (2.0 * rate.rate) - 1.0).abs() < 0.15, "{nu1} vs {}", 2.0 * rate.rate);
        }
        let exponent = (2.0 * rate.prefactor).ln() - rate.delta_u / noise;
        assert!((nu1.ln() - exponent).abs() / exponent.abs() < 0.05);
    }
}

#[test]
fn resonant_barrier_scales_with_exponent_three_halves() {
    let n = 40;
    let (lo, hi) = (1e-3f64.ln(), 5e-2f64.ln());
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let eps = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
            let sp = ScaledParams::zero_temperature(0.0, 1.0 + eps, 0.01);
            let du = switching_rate(&PotentialModel::from_params(&sp), &sp, Channel::Bistable)
                .unwrap()
                .delta_u;
            (eps.ln(), du.ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope - 1.5).abs() < 0.01, "{slope}");
}
