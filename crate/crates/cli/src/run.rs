//! Command pipelines.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use tfilm_core::evolution::{simulate, SimulationTrace};
use tfilm_core::geometry::{fit_frames, predicted_spiral, write_spiral_csv, SpiralConstants};
use tfilm_core::manifold::{
    extract_reduced, fit_asymptotics, AsymptoticReport, ReducedAmplitude,
};
use tfilm_core::models::{canonical_transform, nondimensionalize, Layer, ModelSpec};
use tfilm_core::steady::{
    newton_solve, travelling_wave_j, uniqueness_probe, Classification, Constraint, SteadyProblem,
    SteadySolution, SteadyVariant,
};
use tfilm_core::SpectralField;

use crate::artifacts::{Artifacts, PLOT_SCRIPT};
use crate::config::{RunConfig, SteadyVariantName};

/// What a finished command reports back to `main`.
pub struct Summary {
    pub halted: bool,
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> tfilm_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn write_field(out: &mut Artifacts, stem: &str, h: &SpectralField, csv: bool) -> Result<()> {
    out.write(
        &format!("{stem}.tfl"),
        &csv_bytes(|b| h.write_snapshot(b))?,
    )?;
    if csv {
        out.write(&format!("{stem}_coeffs.csv"), &csv_bytes(|b| h.write_csv(b))?)?;
    }
    Ok(())
}

fn write_trace(out: &mut Artifacts, cfg: &RunConfig, trace: &SimulationTrace) -> Result<()> {
    out.write("trace.csv", &csv_bytes(|b| trace.write_csv(b))?)?;
    write_field(out, "final", &trace.final_state.h, cfg.output.coefficients)?;
    for (i, (_, h)) in trace.snapshots.iter().enumerate() {
        out.write(
            &format!("snapshots/{i:05}.tfl"),
            &csv_bytes(|b| h.write_snapshot(b))?,
        )?;
    }
    if !trace.snapshots.is_empty() {
        let mut idx = String::from("index,t\n");
        for (i, (t, _)) in trace.snapshots.iter().enumerate() {
            idx.push_str(&format!("{i},{t:.16e}\n"));
        }
        out.write("snapshots/index.csv", idx.as_bytes())?;
    }
    out.write("plot.py", PLOT_SCRIPT.as_bytes())?;
    Ok(())
}

fn run_simulation(cfg: &RunConfig, model: &ModelSpec) -> Result<SimulationTrace> {
    let h0 = cfg
        .initial_field()?
        .ok_or_else(|| anyhow!("[initial] section is required"))?;
    let horizon = cfg.horizon()?;
    let icfg = cfg.integrator()?;
    log::info!(
        "integrating {model:?} with N = {} to t = {horizon}",
        h0.order()
    );
    let trace = simulate(model, &h0, horizon, &cfg.sampling(horizon), &icfg)
        .context("simulation")?;
    log::info!(
        "{} steps, {} samples",
        trace.final_state.step_count,
        trace.samples.len()
    );
    if let Some(h) = &trace.halted {
        log::error!("run halted at t = {} with min h = {:e}", h.t, h.min_h);
    }
    Ok(trace)
}

/// Asymptotic fit of a trace whose model has the canonical quadratic term.
fn fit_report(cfg: &RunConfig, series: &[ReducedAmplitude], mean: f64) -> Result<AsymptoticReport> {
    let c = cfg.fit.c.unwrap_or(mean);
    let fit = fit_asymptotics(series, cfg.fit_window()?, c).context("asymptotic fit")?;
    log::info!(
        "K_hat = {:.6}, Ktilde_hat = {:.6} on [{}, {}]",
        fit.k_hat,
        fit.ktilde_hat,
        fit.window[0],
        fit.window[1]
    );
    Ok(fit.report(c))
}

pub fn simulate_cmd(cfg: &RunConfig, out: &mut Artifacts) -> Result<Summary> {
    let model = cfg.model_spec()?;
    let trace = run_simulation(cfg, &model)?;
    write_trace(out, cfg, &trace)?;
    if model == ModelSpec::Canonical && trace.halted.is_none() {
        let series = extract_reduced(&trace)?;
        match fit_report(cfg, &series, trace.mean) {
            Ok(report) => out.write_json("asymptotics.json", &report)?,
            Err(e) => log::warn!("no asymptotics.json: {e:#}"),
        }
    }
    Ok(Summary {
        halted: trace.halted.is_some(),
    })
}

fn read_trace_csv(path: &Path) -> Result<(Vec<ReducedAmplitude>, f64)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| anyhow!("{}: empty file", path.display()))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| anyhow!("{}: missing column {name}", path.display()))
    };
    let (it, ir, ip, im) = (col("t")?, col("rho")?, col("phase_unwrapped")?, col("mass")?);
    let mut series = Vec::new();
    let mut mass = None;
    for (k, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: line {}", path.display(), k + 2))?;
        if vals.len() != header.len() {
            bail!("{}: line {} has {} fields", path.display(), k + 2, vals.len());
        }
        mass.get_or_insert(vals[im]);
        series.push(ReducedAmplitude {
            t: vals[it],
            rho: vals[ir],
            phase: vals[ip],
        });
    }
    let mass = mass.ok_or_else(|| anyhow!("{}: no samples", path.display()))?;
    Ok((series, mass / (2.0 * PI)))
}

pub fn asymptotics_cmd(cfg: &RunConfig, out: &mut Artifacts) -> Result<Summary> {
    let (series, mean) = match &cfg.fit.trace {
        Some(p) => read_trace_csv(&cfg.resolve(p))?,
        None => {
            if cfg.model_spec()? != ModelSpec::Canonical {
                bail!("asymptotics needs [model] variant = \"canonical\"");
            }
            let trace = run_simulation(cfg, &ModelSpec::Canonical)?;
            write_trace(out, cfg, &trace)?;
            if trace.halted.is_some() {
                return Ok(Summary { halted: true });
            }
            (extract_reduced(&trace)?, trace.mean)
        }
    };
    let report = fit_report(cfg, &series, mean)?;
    out.write_json("asymptotics.json", &report)?;
    Ok(Summary { halted: false })
}

#[derive(Serialize)]
struct SteadyReport {
    variant: String,
    constraint: Constraint,
    wave_speed: f64,
    j: f64,
    mean: f64,
    first_harmonic_amplitude: f64,
    classification: Classification,
    residual_norm: f64,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    other_constant_root: Option<f64>,
}

fn steady_report(p: &SteadyProblem, s: &SteadySolution, other: Option<f64>) -> SteadyReport {
    SteadyReport {
        variant: format!("{:?}", p.variant),
        constraint: p.constraint,
        wave_speed: p.wave_speed,
        j: s.j,
        mean: s.h.mean(),
        first_harmonic_amplitude: 2.0 * s.h.coeff(1).norm(),
        classification: s.classification,
        residual_norm: s.residual_norm,
        iterations: s.iterations,
        other_constant_root: other,
    }
}

fn solve_and_probe(
    cfg: &RunConfig,
    out: &mut Artifacts,
    problem: &SteadyProblem,
    h_star: f64,
    other: Option<f64>,
    seed: u64,
) -> Result<Summary> {
    let order = cfg.numerics.order;
    let guess = cfg
        .initial_field()?
        .unwrap_or_else(|| SpectralField::constant(order, h_star));
    let sol = newton_solve(problem, &guess).context("Newton solve")?;
    log::info!(
        "{:?} after {} iterations, residual {:e}",
        sol.classification,
        sol.iterations,
        sol.residual_norm
    );
    out.write_json("steady.json", &steady_report(problem, &sol, other))?;
    write_field(out, "steady", &sol.h, cfg.output.coefficients)?;
    let s = cfg.steady_section()?;
    if s.trials > 0 {
        let report = uniqueness_probe(problem, h_star, s.amplitude, s.trials, seed, order)
            .context("uniqueness probe")?;
        log::info!(
            "{}/{} trials reached the expected state",
            report.expected,
            report.trials
        );
        out.write_json("probe.json", &report)?;
    }
    Ok(Summary { halted: false })
}

pub fn steady_cmd(cfg: &RunConfig, out: &mut Artifacts, seed: u64) -> Result<Summary> {
    let (problem, h_star) = cfg.steady_problem()?;
    solve_and_probe(cfg, out, &problem, h_star, None, seed)
}

pub fn travel_cmd(cfg: &RunConfig, out: &mut Artifacts, seed: u64) -> Result<Summary> {
    let s = cfg.steady_section()?;
    let h_star = s
        .h_star
        .ok_or_else(|| anyhow!("travel needs [steady] h_star"))?;
    if s.j.is_some() || s.mean.is_some() {
        bail!("travel derives J from h_star; remove [steady] j and mean");
    }
    if !(h_star > 0.0) {
        bail!("[steady] h_star must be positive");
    }
    if s.variant != SteadyVariantName::WithShear {
        bail!("travelling waves need [steady] variant = \"with_shear\"");
    }
    let (j, other) = travelling_wave_j(h_star, s.wave_speed);
    let problem = SteadyProblem {
        variant: SteadyVariant::WithShear,
        constraint: Constraint::GivenJ(j),
        wave_speed: s.wave_speed,
    };
    log::info!("J = {j} for h* = {h_star}, c = {}", s.wave_speed);
    solve_and_probe(cfg, out, &problem, h_star, Some(other), seed)
}

#[derive(Serialize)]
struct NondimReport {
    eps: f64,
    gamma: f64,
    b: f64,
    re: f64,
    mu: f64,
    eta: f64,
    zeta: f64,
    layer: Layer,
    time_factor_a: f64,
}

pub fn nondim_cmd(cfg: &RunConfig, out: &mut Artifacts) -> Result<Summary> {
    let (inp, layer) = cfg.dimensional()?;
    let p = nondimensionalize(&inp, layer).context("[nondim]")?;
    println!("gamma = {:.4}", p.gamma);
    println!("eps = {:.6}", p.eps);
    println!("b = {:.6}", p.b());
    println!("Re = {:.6}", p.re);
    println!("mu = {:.6}", p.mu);
    println!("eta = {:.6}", p.eta);
    out.write_json(
        "nondim.json",
        &NondimReport {
            eps: p.eps,
            gamma: p.gamma,
            b: p.b(),
            re: p.re,
            mu: p.mu,
            eta: p.eta,
            zeta: p.zeta,
            layer: p.layer,
            time_factor_a: p.time_factor_a(),
        },
    )?;
    Ok(Summary { halted: false })
}

/// Canonical run in rescaled variables, mapped back with the physical
/// parameters of `[model]` and compared with the predicted spiral.
pub fn spiral_cmd(cfg: &RunConfig, out: &mut Artifacts) -> Result<Summary> {
    let phys = cfg.physical()?;
    let tr = canonical_transform(&phys).context("[model]")?;
    let mut run_cfg = cfg.clone();
    if run_cfg.numerics.snapshot_every.unwrap_or(0) == 0 {
        run_cfg.numerics.snapshot_every = Some(1);
    }
    let trace = run_simulation(&run_cfg, &ModelSpec::Canonical)?;
    write_trace(out, &run_cfg, &trace)?;
    if trace.halted.is_some() {
        return Ok(Summary { halted: true });
    }
    let c = cfg.fit.c.unwrap_or(trace.mean);
    let series = extract_reduced(&trace)?;
    let fit = fit_asymptotics(&series, cfg.fit_window()?, c).context("asymptotic fit")?;
    out.write_json("asymptotics.json", &fit.report(c))?;

    let frames: Vec<(f64, SpectralField)> = trace
        .snapshots
        .iter()
        .filter(|(tb, _)| *tb >= 10.0 && *tb - fit.t_shift > 0.0)
        .cloned()
        .collect();
    if frames.is_empty() {
        bail!("no snapshots at rescaled time >= 10; extend [numerics] horizon");
    }
    let fits = fit_frames(&frames, &phys, &tr, cfg.output.frame_samples).context("circle fits")?;
    let times: Vec<f64> = fits.iter().map(|(t, _)| *t).collect();
    let circles: Vec<_> = fits.into_iter().map(|(_, f)| f).collect();
    let pred = predicted_spiral(&phys, c, &SpiralConstants::from_fit(&fit), &times)?;
    out.write(
        "spiral.csv",
        &csv_bytes(|b| write_spiral_csv(b, &pred, &circles))?,
    )?;
    log::info!("{} interface frames fitted", circles.len());
    Ok(Summary { halted: false })
}
