//! Acceptance suite: one pass/fail line per criterion. Runs as a plain
//! binary so that the report is always printed.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use paramosc_cli::commands::{run_validation, ValidationReport};
use paramosc_cli::config::ValidateSpec;
use paramosc_core::fpe::{
    build_operator, build_operator_with, lowest_decrements, nu1_curves, CurveOptions, Discretization, SolveOptions,
};
use paramosc_core::potential::{support_half_width, SUPPORT_LEVEL};
use paramosc_core::rates::{balance_kinetics, phase_boundary_bisection, switching_rate, Channel};
use paramosc_core::rwaflow::{adiabatic_deviation, basin_half_width, find_flow_fixed_points, trace_bifurcation_diagram};
use paramosc_core::{GridSpec, PotentialModel, ScaledParams, Sign};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sp(mu: f64, f: f64) -> ScaledParams {
    ScaledParams::zero_temperature(mu, f, 0.01)
}

fn delta_u(mu: f64, f: f64, channel: Channel) -> f64 {
    let p = sp(mu, f);
    switching_rate(&PotentialModel::from_params(&p), &p, channel).unwrap().delta_u
}

fn bifurcation_geometry() -> Outcome {
    let n = 400;
    let f: Vec<f64> = (0..n).map(|i| 1.001 + 0.999 * i as f64 / (n - 1) as f64).collect();
    let traced = trace_bifurcation_diagram(&f, &[]).map_err(|e| e.to_string())?;
    let dev = traced.max_deviation();
    // meeting point: both pitchforks and the saddle-node line at f_p = 1,
    // and the phase line shrinking onto μ_p = 0
    let at_one = trace_bifurcation_diagram(&[1.0], &[1e-3, 1e-2]).map_err(|e| e.to_string())?;
    let r = &at_one.rows[0];
    let pitchfork = r.mu_b1_detected.abs().max(r.mu_b2_detected.abs());
    let saddle = at_one.saddle_node.iter().map(|(_, f)| (f - 1.0).abs()).fold(0.0, f64::max);
    let f_near = 1.0 + 1e-6f64;
    let phase = phase_boundary_bisection(f_near).map_err(|e| e.to_string())?;
    let phase_law = (phase - 2.0 * (f_near * f_near - 1.0).sqrt()).abs();
    check(
        dev < 1e-6 && pitchfork < 1e-6 && saddle < 1e-6 && phase < 3e-3 && phase_law < 1e-8,
        format!(
            "max |dmu| = {dev:.2e} over {n} rows; at f_p = 1: pitchforks {pitchfork:.1e}, saddle-node {saddle:.1e}; phase line {phase:.1e} at f_p - 1 = 1e-6"
        ),
    )
}

fn scaling_exponent() -> Outcome {
    let n = 40;
    let (lo, hi) = (1e-3f64.ln(), 5e-2f64.ln());
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let eps = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
            (eps.ln(), delta_u(0.0, 1.0 + eps, Channel::Bistable).ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    check((slope - 1.5).abs() < 0.01, format!("slope = {slope:.6}"))
}

fn escape_barrier_independence() -> Outcome {
    let f = 1.2f64;
    let mu_b = (f * f - 1.0).sqrt();
    let du: Vec<f64> = (1..=100)
        .map(|i| delta_u(mu_b * (1.0 + 0.03 * i as f64), f, Channel::TristableEscape))
        .collect();
    let max = du.iter().copied().fold(f64::MIN, f64::max);
    let min = du.iter().copied().fold(f64::MAX, f64::min);
    let mean = du.iter().sum::<f64>() / du.len() as f64;
    let spread = (max - min) / mean;
    check(spread < 1e-10, format!("relative spread = {spread:.2e} over 100 values"))
}

fn near_bifurcation_asymptotes() -> Outcome {
    let eps = 1e-3;
    let mut worst = 0.0f64;
    for f in [1.02f64, 1.2, 1.5, 2.0] {
        let mu_b = (f * f - 1.0).sqrt();
        let law = mu_b * eps * eps / 4.0;
        let bi = delta_u(-mu_b + eps, f, Channel::Bistable) / law;
        let tri = delta_u(mu_b + eps, f, Channel::TristableEntry) / law;
        worst = worst.max((bi - 1.0).abs()).max((tri - 1.0).abs());
    }
    check(worst < 0.02, format!("max |ratio - 1| = {worst:.2e} at eps = 1e-3"))
}

fn phase_boundary() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..20 {
        let f = 1.01 + 0.05 * i as f64;
        let mu = phase_boundary_bisection(f).map_err(|e| e.to_string())?;
        worst = worst.max((mu - 2.0 * (f * f - 1.0).sqrt()).abs());
    }
    check(worst < 1e-8, format!("max |mu* - 2 mu_B| = {worst:.2e} over 20 values"))
}

fn fpe_solver() -> Outcome {
    let kappa = 1.5;
    let d = 0.5;
    let model = PotentialModel::harmonic(kappa);
    let grid = GridSpec::from_support_rule(&model, d, 2001).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for disc in [Discretization::DetailedBalance, Discretization::CentralDifference] {
        let op = build_operator_with(&model, d, &grid, disc).map_err(|e| e.to_string())?;
        let res = lowest_decrements(
            &op,
            SolveOptions {
                k: 3,
                modes: false,
                refine: false,
            },
        )
        .map_err(|e| e.to_string())?;
        for (n, nu) in res.decrements.iter().enumerate() {
            worst = worst.max((nu / (kappa * (n + 1) as f64) - 1.0).abs());
        }
    }
    // residual of the discretized stationary state in a bistable potential
    let model = PotentialModel::new(0.3, 1.05);
    let d = 2e-3;
    let exact = build_operator(&model, d, &GridSpec::from_support_rule(&model, d, 1001).unwrap()).unwrap();
    let exact_residual = exact.stationary_residual() / exact.matrix.norm_bound();
    let q_max = support_half_width(&model, d, SUPPORT_LEVEL).unwrap();
    let r = |n| {
        build_operator_with(&model, d, &GridSpec::new(q_max, n).unwrap(), Discretization::CentralDifference)
            .unwrap()
            .stationary_residual()
    };
    let order = (r(1001) / r(2001)).log2();
    check(
        worst < 5e-3 && exact_residual < 1e-12 && order > 1.9,
        format!(
            "OU max |nu_n/(n kappa) - 1| = {worst:.2e}; conservative residual {exact_residual:.1e}; central-difference order {order:.2}"
        ),
    )
}

fn critical_collapse() -> Outcome {
    let f = [-2.0, 0.0, 2.0, 4.0];
    let mu = [-2.0, 0.0, 2.0, 4.0, 6.0];
    let curve = |d: f64| {
        nu1_curves(
            &f,
            &mu,
            CurveOptions {
                reference_noise: d,
                grid_n: 2001,
                k: 1,
            },
        )
        .map_err(|e| e.to_string())
    };
    let (a, b) = (curve(1e-3)?, curve(1e-4)?);
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x.nu1_tilde / y.nu1_tilde - 1.0).abs())
        .fold(0.0, f64::max);
    check(worst < 0.01, format!("max relative difference = {worst:.2e} over {} points", a.len()))
}

fn decrement_curves() -> Outcome {
    let f_tilde = [-4.0, -2.0, 0.0, 2.0, 4.0, 6.0];
    let mu: Vec<f64> = (0..37).map(|i| -6.0 + 0.5 * i as f64).collect();
    let pts = nu1_curves(&f_tilde, &mu, CurveOptions::default()).map_err(|e| e.to_string())?;
    let curves: Vec<Vec<f64>> = pts.chunks(mu.len()).map(|c| c.iter().map(|p| p.nu1_tilde).collect()).collect();
    let mut problems = Vec::new();
    for j in 0..mu.len() {
        for c in curves.windows(2) {
            if c[0][j].partial_cmp(&c[1][j]) != Some(std::cmp::Ordering::Greater) {
                problems.push(format!("ordering broken at mu~ = {}", mu[j]));
            }
        }
    }
    let mut minima = Vec::new();
    for (ft, c) in f_tilde.iter().zip(&curves).filter(|(ft, _)| **ft >= 0.0) {
        let (jmin, _) = c.iter().enumerate().fold((0, f64::MAX), |m, (j, &v)| if v < m.1 { (j, v) } else { m });
        if jmin == 0 || jmin == mu.len() - 1 || mu[jmin] <= 0.0 {
            problems.push(format!("f~ = {ft}: minimum at boundary or mu~ <= 0"));
        }
        minima.push(format!("{ft}:{}", mu[jmin]));
    }
    // slow large-mu growth of the f~ = 6 curve, against the monostable f~ = -4 curve
    let top = &curves[0];
    let last = &curves[5];
    let i6 = mu.iter().position(|&m| m == 6.0).unwrap();
    let n = mu.len() - 1;
    let rising = last[i6..].windows(2).all(|w| w[1] > w[0]);
    let slope6 = (last[n] - last[i6]) / (mu[n] - mu[i6]);
    let slope_top = (top[n] - top[i6]) / (mu[n] - mu[i6]);
    if !rising || !(slope6 > 0.0 && slope6 < 0.01 * slope_top) {
        problems.push(format!("f~ = 6 tail: rising {rising}, slope {slope6:.3e} vs {slope_top:.3e}"));
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "ordered at all {} mu~; minima at {}; f~ = 6 slope {slope6:.2e} on [6, 12]",
                mu.len(),
                minima.join(", ")
            )
        } else {
            problems.join("; ")
        },
    )
}

fn triangle(report: &ValidationReport) -> Outcome {
    let two_w = 2.0 * report.kramers_rate;
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    let pairs = [
        rel(report.fpe_nu1, two_w),
        rel(report.acf_decrement, two_w),
        rel(report.acf_decrement, report.fpe_nu1),
    ];
    let mfpt = rel(report.mfpt_rate, report.kramers_rate);
    let worst = pairs.iter().copied().fold(0.0, f64::max);
    check(
        worst < 0.25 && mfpt < 0.25 && report.mfpt_events >= 500,
        format!(
            "2W = {two_w:.4e}, FPE nu1 = {:.4e}, ACF = {:.4e} (max pairwise {worst:.3}); MFPT rate {:.4e} vs W (dev {mfpt:.3}) from {} events",
            report.fpe_nu1, report.acf_decrement, report.mfpt_rate, report.mfpt_events
        ),
    )
}

fn balance(report: &ValidationReport) -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..15 {
        for j in 0..15 {
            let w01 = 10f64.powf(-3.0 + 0.3 * i as f64);
            let w10 = 10f64.powf(-3.0 + 0.3 * j as f64);
            let bk = balance_kinetics(w01, w10).map_err(|e| e.to_string())?;
            let m = bk.rate_matrix();
            let p = bk.populations;
            let s = Matrix3::from_fn(|a, b| m[a][b] * (p[b] / p[a]).sqrt());
            let s = 0.5 * (s + s.transpose());
            let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().map(|v| -v).collect();
            ev.sort_by(f64::total_cmp);
            let scale = w01.max(w10);
            worst = worst
                .max((ev[1] - w10).abs() / scale)
                .max((ev[2] - (2.0 * w01 + w10)).abs() / scale);
        }
    }
    let z: Vec<f64> = (0..3)
        .map(|i| (report.occupations[i] - report.populations[i]).abs() / report.occupation_errors[i])
        .collect();
    let zmax = z.iter().copied().fold(0.0, f64::max);
    check(
        worst < 1e-13 && zmax < 3.0,
        format!(
            "decrements vs dense eigenvalues {worst:.1e}; occupations {:.4?} vs {:.4?}, max {zmax:.2} SE",
            report.occupations, report.populations
        ),
    )
}

fn flow_consistency() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..25 {
        for j in 0..20 {
            let mu = -2.0 + 4.0 * (i as f64 + 0.37) / 25.0;
            let f = 1.001 + (j as f64 + 0.5) / 20.0;
            for sign in [Sign::Positive, Sign::Negative] {
                let mut p = sp(mu, f);
                p.sign_gamma = sign;
                for x in find_flow_fixed_points(&p).map_err(|e| e.to_string())?.iter().filter(|x| x.r2 > 0.0) {
                    worst = worst.max(((x.r2 - mu).powi(2) - (f * f - 1.0)).abs());
                    count += 1;
                }
            }
        }
    }
    let p = sp(0.0, 1.02);
    let q_a = basin_half_width(&p).map_err(|e| e.to_string())?;
    let dev = adiabatic_deviation(&p, q_a, 401).map_err(|e| e.to_string())?;
    check(
        worst < 1e-9 && dev.relative < 0.05,
        format!(
            "radius law residual {worst:.1e} over {count} fixed points; adiabatic drift deviation {:.2}% on |Q| <= {q_a:.4}",
            100.0 * dev.relative
        ),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Outcome {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_paramosc"))
            .args(["validate", "--seed", "7", "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        (status, read_dir(dir.path()))
    };
    let (sa, a) = run();
    let (sb, b) = run();
    if !sa.status.success() || !sb.status.success() {
        return Err(format!(
            "validate exited with {:?}/{:?}: {}",
            sa.status.code(),
            sb.status.code(),
            String::from_utf8_lossy(&sa.stderr)
        ));
    }
    let bytes: usize = a.values().map(Vec::len).sum();
    check(
        !a.is_empty() && a == b,
        format!("{} files, {bytes} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() {
    let mut failed = 0;
    let mut report_line = |n: usize, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {n:>2} [{}] {name} ({:.2} s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    };
    let secs = Duration::from_secs;
    report_line(1, "bifurcation geometry", secs(10), &mut bifurcation_geometry);
    report_line(2, "scaling exponent 3/2", secs(1), &mut scaling_exponent);
    report_line(3, "escape barrier independent of mu_p", secs(1), &mut escape_barrier_independence);
    report_line(4, "near-bifurcation asymptotes", secs(1), &mut near_bifurcation_asymptotes);
    report_line(5, "phase boundary", secs(1), &mut phase_boundary);
    report_line(6, "Fokker-Planck solver", secs(5), &mut fpe_solver);
    report_line(7, "critical scaling collapse", secs(30), &mut critical_collapse);
    report_line(8, "decrement curve properties", secs(120), &mut decrement_curves);

    // criteria 9 and 10 share one validation run
    let start = Instant::now();
    let validation = run_validation(&ValidateSpec::default(), 1);
    let shared = start.elapsed();
    let with_report = |f: fn(&ValidationReport) -> Outcome| match &validation {
        Ok(r) => f(r),
        Err(e) => Err(e.to_string()),
    };
    let t9 = with_report(triangle);
    report_line(9, "triangle consistency", secs(300), &mut || {
        t9.clone().map(|d| format!("{d}; shared run {:.1} s", shared.as_secs_f64()))
    });
    let t10 = with_report(balance);
    report_line(10, "balance kinetics", secs(300), &mut || t10.clone());
    report_line(11, "flow/potential consistency", secs(10), &mut flow_consistency);
    report_line(12, "determinism", secs(600), &mut determinism);

    if failed > 0 {
        println!("{failed} of 12 criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
