use paramosc_core::fpe::{first_decrement, nu1_curves, CurveOptions};
use paramosc_core::langevin::{
    basin_occupations, estimate_acf_decrement, estimate_mfpt, integrate, max_stable_dt, AcfConfig, AcfEstimate,
    MfptConfig, MfptEstimate, SamplingConfig, TrajectoryConfig,
};
use paramosc_core::output::{Cell, CsvTable};
use paramosc_core::potential::{support_half_width, stationary_distribution, SUPPORT_LEVEL};
use paramosc_core::rates::{
    activation_energy_surface, balance_kinetics, phase_boundary, phase_boundary_bisection, switching_rate, Channel,
    NoiseLevel, RateResult,
};
use paramosc_core::rwaflow::trace_bifurcation_diagram;
use paramosc_core::{GridSpec, PotentialModel, Regime, ScaledParams};
use serde::Serialize;
use serde_json::json;

use crate::config::{linspace, RateTable, RunConfig, SimulateSpec, ValidateSpec};
use crate::error::CliError;
use crate::output::{number, Sink};

pub fn bifurcation(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let spec = &cfg.bifurcation;
    if !(spec.f_max >= 1.0) {
        return Err(CliError::Config(format!("bifurcation.f_max must be at least 1, got {}", spec.f_max)));
    }
    // uniform in f² − 1 so that round values of f² land on grid rows
    let f: Vec<f64> = linspace("bifurcation.points", 0.0, spec.f_max * spec.f_max - 1.0, spec.points)?
        .into_iter()
        .map(|e| (1.0 + e).sqrt())
        .collect();
    let n = spec.saddle_points.max(1) as f64;
    let saddle_mu = linspace(
        "bifurcation.saddle_points",
        spec.saddle_mu_max / n,
        spec.saddle_mu_max,
        spec.saddle_points,
    )?;

    let mut analytic = CsvTable::new(["f_p", "mu_B1", "mu_B2", "mu_phase"]);
    for &fp in &f {
        let mu_b = (fp * fp - 1.0).max(0.0).sqrt();
        // the three lines meet at f_p = 1
        let phase = if fp > 1.0 { phase_boundary(fp)? } else { 0.0 };
        analytic.push(vec![fp.into(), (-mu_b).into(), mu_b.into(), phase.into()]);
    }
    sink.table("bifurcation", &analytic)?;

    let traced = trace_bifurcation_diagram(&f, &saddle_mu)?;
    let mut t = CsvTable::new([
        "f_p",
        "mu_B1_detected",
        "mu_B2_detected",
        "mu_B1_exact",
        "mu_B2_exact",
        "mu_phase_detected",
    ]);
    t.comment(format!("max |detected - exact| = {:.3e}", traced.max_deviation()));
    for r in &traced.rows {
        let phase = if r.f > 1.0 { phase_boundary_bisection(r.f)? } else { 0.0 };
        t.push(vec![
            r.f.into(),
            r.mu_b1_detected.into(),
            r.mu_b2_detected.into(),
            r.mu_b1_exact.into(),
            r.mu_b2_exact.into(),
            phase.into(),
        ]);
    }
    sink.table("bifurcation_traced", &t)?;

    let mut sn = CsvTable::new(["mu_p", "f_p_detected", "f_p_exact"]);
    for &(mu, fp) in &traced.saddle_node {
        sn.push(vec![mu.into(), fp.into(), 1.0.into()]);
    }
    sink.table("saddle_node", &sn)
}

pub fn distribution(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let spec = &cfg.distribution;
    if spec.f_values.is_empty() {
        return Err(CliError::Config("distribution.f_values must not be empty".into()));
    }
    let models: Vec<PotentialModel> = spec.f_values.iter().map(|&f| PotentialModel::new(spec.mu, f)).collect();
    // one grid wide enough for every snapshot
    let mut q_max = 0.0f64;
    for m in &models {
        q_max = q_max.max(support_half_width(m, spec.noise, SUPPORT_LEVEL)?);
    }
    let grid = GridSpec::new(q_max, spec.grid_points)?;

    let mut t = CsvTable::new(["f_p", "Q", "U", "rho"]);
    let mut summary = CsvTable::new(["f_p", "regime", "maxima", "variance", "kurtosis", "tail_mass"]);
    for (&f, m) in spec.f_values.iter().zip(&models) {
        let rho = stationary_distribution(m, spec.noise, &grid)?;
        for i in 0..rho.q.len() {
            t.push(vec![f.into(), rho.q[i].into(), rho.u[i].into(), rho.density[i].into()]);
        }
        let d = &rho.density;
        let maxima = (1..d.len() - 1).filter(|&i| d[i] > d[i - 1] && d[i] >= d[i + 1]).count();
        summary.push(vec![
            f.into(),
            m.find_extrema().regime.to_string().into(),
            maxima.into(),
            rho.moment(2).into(),
            rho.kurtosis().into(),
            rho.tail_mass.into(),
        ]);
    }
    sink.table("distribution", &t)?;
    sink.table("distribution_summary", &summary)
}

pub fn rates(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let spec = &cfg.rates;
    if !(spec.lambda > 0.0) || !(spec.nbar >= 0.0) {
        return Err(CliError::Config("rates.lambda must be positive and rates.nbar non-negative".into()));
    }
    let noise = NoiseLevel {
        lambda: spec.lambda,
        nbar: spec.nbar,
    };
    let f = linspace("rates.f_points", spec.f_min, spec.f_max, spec.f_points)?;
    let omega = |r: &Option<RateResult>| Cell::from(r.map(|r| r.prefactor));
    let rate = |r: &Option<RateResult>| Cell::from(r.map(|r| r.rate));
    let tilde = |r: &Option<RateResult>| Cell::from(r.map(|r| r.delta_u));
    let plain = |r: &Option<RateResult>| Cell::from(r.map(|r| r.activation_energy));

    if spec.table != RateTable::Tristable {
        let mu = linspace(
            "rates.bistable_mu_points",
            spec.bistable_mu_min,
            spec.bistable_mu_max,
            spec.bistable_mu_points,
        )?;
        let mut t = CsvTable::new(["mu_p", "f_p", "regime", "status", "R_A_tilde", "R_A", "Omega", "W"]);
        t.comment(format!("lambda_p = {}, nbar = {}", spec.lambda, spec.nbar));
        for c in activation_energy_surface(&mu, &f, noise) {
            t.push(vec![
                c.mu.into(),
                c.f.into(),
                c.regime.to_string().into(),
                c.status.to_string().into(),
                tilde(&c.bistable),
                plain(&c.bistable),
                omega(&c.bistable),
                rate(&c.bistable),
            ]);
        }
        sink.table("rates_bistable", &t)?;
    }
    if spec.table != RateTable::Bistable {
        let mu = linspace(
            "rates.tristable_mu_points",
            spec.tristable_mu_min,
            spec.tristable_mu_max,
            spec.tristable_mu_points,
        )?;
        let mut t = CsvTable::new([
            "mu_p",
            "f_p",
            "regime",
            "status",
            "R_A1_tilde",
            "R_A0_tilde",
            "R_A1",
            "R_A0",
            "W10",
            "W01",
        ]);
        t.comment(format!("lambda_p = {}, nbar = {}", spec.lambda, spec.nbar));
        for c in activation_energy_surface(&mu, &f, noise) {
            t.push(vec![
                c.mu.into(),
                c.f.into(),
                c.regime.to_string().into(),
                c.status.to_string().into(),
                tilde(&c.escape),
                tilde(&c.entry),
                plain(&c.escape),
                plain(&c.entry),
                rate(&c.escape),
                rate(&c.entry),
            ]);
        }
        sink.table("rates_tristable", &t)?;
    }
    Ok(())
}

pub fn fpe(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let spec = &cfg.fpe;
    if spec.f_tilde.is_empty() {
        return Err(CliError::Config("fpe.f_tilde must not be empty".into()));
    }
    if spec.k_eigs == 0 {
        return Err(CliError::Config("fpe.k_eigs must be at least 1".into()));
    }
    let mu = linspace("fpe.mu_tilde_points", spec.mu_tilde_min, spec.mu_tilde_max, spec.mu_tilde_points)?;
    let curves = nu1_curves(
        &spec.f_tilde,
        &mu,
        CurveOptions {
            reference_noise: spec.reference_noise,
            grid_n: spec.grid_n,
            k: spec.k_eigs,
        },
    )?;
    let mut t = CsvTable::new(["mu_tilde", "f_tilde", "nu1_tilde", "grid_N", "est_error"]);
    t.comment(format!("D = {}", spec.reference_noise));
    for p in curves {
        t.push(vec![
            p.mu_tilde.into(),
            p.f_tilde.into(),
            p.nu1_tilde.into(),
            p.grid_n.into(),
            p.est_error.into(),
        ]);
    }
    sink.table("fpe_nu1", &t)
}

fn steps(duration: f64, dt: f64) -> u64 {
    (duration / dt).ceil().max(1.0) as u64
}

/// ACF run whose lag spacing and length are set from the decrement `nu`.
/// `base` supplies the step, noise, seed and start.
fn acf_run(
    model: &PotentialModel,
    base: TrajectoryConfig,
    nu: f64,
    duration: f64,
    trajectories: u64,
    max_lag: usize,
) -> Result<AcfEstimate, CliError> {
    let dt = base.dt;
    let mut traj = base;
    traj.n_steps = steps(duration / nu, dt);
    traj.burn_in = steps(10.0 / nu, dt);
    traj.decimation = steps(0.05 / nu, dt);
    Ok(estimate_acf_decrement(model, &AcfConfig::new(traj, trajectories, max_lag))?)
}

fn mfpt_json(e: &MfptEstimate, kramers: &RateResult) -> serde_json::Value {
    json!({
        "channel": e.channel.to_string(),
        "passage": e.passage,
        "mean_time": number(e.mean_time),
        "std_error": number(e.std_error),
        "events": e.events,
        "censored": e.censored,
        "rate": number(e.rate),
        "rate_std_error": number(e.rate_std_error),
        "channel_rate": number(e.channel_rate()),
        "kramers_rate": number(kramers.rate),
        "barrier_ratio": number(e.barrier_ratio),
        "low_confidence": e.low_confidence,
        "barrier_out_of_range": e.barrier_out_of_range,
        "budget_exhausted": e.budget_exhausted,
    })
}

pub fn simulate(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let spec: &SimulateSpec = &cfg.simulate;
    let sp = cfg.operating_point()?;
    let model = PotentialModel::from_params(&sp);
    let extrema = model.find_extrema();
    let q0 = extrema.outer_attractor().map_or(0.0, |a| a.q);
    let dt = match spec.dt {
        Some(dt) => dt,
        None => max_stable_dt(&model, sp.noise, q0)?,
    };
    let nu = first_decrement(&model, sp.noise, 2001)?.nu1();

    let mut traj = TrajectoryConfig::new(dt, 0, sp.noise, cfg.seed);
    traj.q0 = q0;
    traj.burn_in = steps(10.0 / nu, dt);
    traj.decimation = spec.decimation.unwrap_or_else(|| steps(0.05 / nu, dt));
    traj.n_steps = spec.steps.unwrap_or_else(|| steps(250.0 / nu, dt));
    let acf = estimate_acf_decrement(&model, &AcfConfig::new(traj, spec.acf_trajectories, spec.max_lag))?;
    let mut t = CsvTable::new(["lag", "acf"]);
    t.comment(format!(
        "fitted decrement = {:.6e} over {} points, FPE nu1 = {nu:.6e}",
        acf.decrement, acf.fit_points
    ));
    for (l, a) in acf.lags.iter().zip(&acf.acf) {
        t.push(vec![(*l).into(), (*a).into()]);
    }
    sink.table("simulate_acf", &t)?;

    let channels: &[Channel] = match extrema.regime {
        Regime::Monostable => &[],
        Regime::Bistable => &[Channel::Bistable],
        Regime::Tristable => &[Channel::TristableEscape, Channel::TristableEntry],
    };
    let mut mfpt = Vec::new();
    for (i, &ch) in channels.iter().enumerate() {
        let kramers = switching_rate(&model, &sp, ch)?;
        let mut mc = MfptConfig::new(dt, spec.ensemble, spec.mfpt_max_steps, cfg.seed.wrapping_add(1 + i as u64));
        mc.min_events = spec.min_events;
        let est = estimate_mfpt(&model, &sp, ch, &mc)?;
        if est.low_confidence {
            eprintln!("warning: {ch}: only {} passage events", est.events);
        }
        mfpt.push(mfpt_json(&est, &kramers));
    }
    sink.document(
        "simulate_mfpt",
        json!({
            "mu_p": number(sp.mu),
            "f_p": number(sp.f),
            "D": number(sp.noise),
            "regime": extrema.regime.to_string(),
            "dt": number(dt),
            "fpe_nu1": number(nu),
            "acf_decrement": number(acf.decrement),
            "mfpt": mfpt,
        }),
    )?;

    if spec.trace_steps > 0 {
        let mut tc = TrajectoryConfig::new(dt, spec.trace_steps, sp.noise, cfg.seed);
        tc.q0 = q0;
        tc.decimation = spec.decimation.unwrap_or(1);
        let tr = integrate(&model, &tc)?;
        let mut t = CsvTable::new(["t", "Q"]);
        for (time, q) in tr.t.iter().zip(&tr.q) {
            t.push(vec![(*time).into(), (*q).into()]);
        }
        sink.table("simulate_trace", &t)?;
    }
    Ok(())
}

/// One line of the validation report. `deviation` is relative for the
/// triangle checks and in standard errors for the occupations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub reference: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn relative(name: &'static str, value: f64, reference: f64, tolerance: f64) -> Self {
        let deviation = (value / reference - 1.0).abs();
        Self {
            name,
            value,
            reference,
            deviation,
            tolerance,
            pass: deviation < tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub mu_b: f64,
    pub kramers_rate: f64,
    pub fpe_nu1: f64,
    pub acf_decrement: f64,
    pub mfpt_rate: f64,
    pub mfpt_events: usize,
    pub populations: [f64; 3],
    pub occupations: [f64; 3],
    pub occupation_errors: [f64; 3],
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Triangle consistency at the bistable reference point and basin
/// occupations against the balance equations at a tristable point.
pub fn run_validation(spec: &ValidateSpec, seed: u64) -> Result<ValidationReport, CliError> {
    let tol = spec.tolerance;
    let d = spec.noise;
    let mu_b = (6.0 * spec.barrier_ratio * d).cbrt();
    let sp = ScaledParams::zero_temperature(0.0, (1.0 + mu_b * mu_b).sqrt(), d);
    let model = PotentialModel::from_params(&sp);
    let kramers = switching_rate(&model, &sp, Channel::Bistable)?;
    let w = kramers.rate;
    let nu = first_decrement(&model, d, spec.grid_n)?.nu1();
    let q_a = kramers.attractor_q;
    let dt = max_stable_dt(&model, d, q_a)?;
    let mut base = TrajectoryConfig::new(dt, 0, d, seed);
    base.q0 = q_a;
    let acf = acf_run(&model, base, nu, spec.acf_duration, spec.acf_trajectories, spec.max_lag)?;
    let mut mc = MfptConfig::new(dt, spec.mfpt_runs, spec.mfpt_max_steps, seed.wrapping_add(1));
    mc.min_events = spec.mfpt_min_events;
    let mfpt = estimate_mfpt(&model, &sp, Channel::Bistable, &mc)?;

    let mut checks = vec![
        Check::relative("fpe_nu1_vs_2W", nu, 2.0 * w, tol),
        Check::relative("acf_vs_2W", acf.decrement, 2.0 * w, tol),
        Check::relative("acf_vs_fpe_nu1", acf.decrement, nu, tol),
        Check::relative("mfpt_rate_vs_W", mfpt.channel_rate(), w, tol),
        Check {
            name: "mfpt_events",
            value: mfpt.events as f64,
            reference: spec.mfpt_min_events as f64,
            deviation: 0.0,
            tolerance: 0.0,
            pass: mfpt.events >= spec.mfpt_min_events,
        },
    ];

    let sp3 = ScaledParams::zero_temperature(spec.tristable_mu, spec.tristable_f, spec.tristable_noise);
    let model3 = PotentialModel::from_params(&sp3);
    let escape = switching_rate(&model3, &sp3, Channel::TristableEscape)?;
    let entry = switching_rate(&model3, &sp3, Channel::TristableEntry)?;
    let bk = balance_kinetics(entry.rate, escape.rate)?;
    let dt3 = max_stable_dt(&model3, sp3.noise, escape.attractor_q)?;
    let mut traj = TrajectoryConfig::new(
        dt3,
        steps(spec.occupation_duration / bk.nu1, dt3),
        sp3.noise,
        seed.wrapping_add(2),
    );
    traj.q0 = escape.attractor_q;
    traj.burn_in = steps(5.0 / bk.nu1, dt3);
    traj.decimation = steps(1.0, dt3);
    let occ = basin_occupations(&model3, &SamplingConfig::new(traj, spec.occupation_trajectories))?;
    let (fractions, errors) = occ
        .balance_order()
        .ok_or_else(|| CliError::Config("validate: the occupation point is not tristable".into()))?;
    const NAMES: [&str; 3] = ["occupation_zero", "occupation_plus", "occupation_minus"];
    for i in 0..3 {
        let z = (fractions[i] - bk.populations[i]).abs() / errors[i];
        checks.push(Check {
            name: NAMES[i],
            value: fractions[i],
            reference: bk.populations[i],
            deviation: z,
            tolerance: spec.occupation_z,
            pass: z < spec.occupation_z,
        });
    }

    Ok(ValidationReport {
        mu_b,
        kramers_rate: w,
        fpe_nu1: nu,
        acf_decrement: acf.decrement,
        mfpt_rate: mfpt.channel_rate(),
        mfpt_events: mfpt.events,
        populations: bk.populations,
        occupations: fractions,
        occupation_errors: errors,
        checks,
    })
}

pub fn validate(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let report = run_validation(&cfg.validate, cfg.seed)?;
    let mut t = CsvTable::new(["check", "value", "reference", "deviation", "tolerance", "pass"]);
    t.comment(format!(
        "bistable point: mu_p = 0, mu_B = {:.6}, D = {}, Delta U / D = {}",
        report.mu_b, cfg.validate.noise, cfg.validate.barrier_ratio
    ));
    t.comment(format!(
        "tristable point: mu_p = {}, f_p = {}, D = {}",
        cfg.validate.tristable_mu, cfg.validate.tristable_f, cfg.validate.tristable_noise
    ));
    for c in &report.checks {
        t.push(vec![
            c.name.into(),
            c.value.into(),
            c.reference.into(),
            c.deviation.into(),
            c.tolerance.into(),
            if c.pass { "pass" } else { "FAIL" }.into(),
        ]);
    }
    sink.table("validate_report", &t)?;
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ValidationFailed(failed.join(", ")))
    }
}
