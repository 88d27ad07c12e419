//! Subcommand pipelines. Each writes CSV tables into the output directory;
//! the caller adds the manifest.

use std::path::Path;

use fput_core::attenuation::{
    expected_drift, integrate_limit_ode, power_law_slope, rate_grid, rate_table, AttenuationRate, RateOptions,
};
use fput_core::ensemble::{run_ensemble, sample_kappa, Distribution, EnsembleConfig, KappaSampler};
use fput_core::expansion::{first_order_path, second_order_path, SecondOrderDrift, SPEED_STEP};
use fput_core::frame::WaveFrame;
use fput_core::io::{read_csv, write_field, write_limit, CsvOut};
use fput_core::lattice::{hamiltonian, integrate, simulation_window, LatticeField, SpringCoefficients};
use fput_core::modulation::{fit_trajectory, integrate_modulation, FitOptions, ModulationSample, ModulationState};
use fput_core::ode::step_count;
use fput_core::profile::{profile_derivatives, solve_on_grid, ProfileFamily};
use fput_core::tail::{
    default_lead, integrate_tail, kernel_limit, limit_response, limiting_tail, response_limit, FrameSchedule,
    LimitResponse, LimitWindow, SnapshotOptions, Variant,
};
use fput_core::{Error, Result};

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    match cfg.command.name {
        "profile" => profile(cfg, out),
        "simulate" => simulate(cfg, out),
        "fit" => fit(cfg, out),
        "modulate" => modulate(cfg, out),
        "expand" => expand(cfg, out),
        "tail" => tail(cfg, out),
        "response" => response(cfg, out),
        "rate" => rate(cfg, out),
        "limit-ode" => limit_ode(cfg, out),
        "ensemble" => ensemble(cfg, out),
        other => Err(Error::Config(format!("unknown command {other}"))),
    }
}

fn ensemble_config(cfg: &RunConfig) -> Result<EnsembleConfig> {
    let e = EnsembleConfig {
        distribution: cfg.get::<Distribution>("distribution")?,
        sigma: cfg.get("sigma")?,
        c_star: cfg.get("c")?,
        realizations: 1,
        master_seed: cfg.get("seed")?,
    };
    e.validate()?;
    Ok(e)
}

/// Heterogeneity on the lattice window of a run to `t_end`.
fn lattice_coeffs(cfg: &RunConfig, t_end: f64) -> Result<SpringCoefficients> {
    let e = ensemble_config(cfg)?;
    let (j_min, w) = simulation_window(e.c_star, t_end, cfg.get("pad")?);
    sample_kappa(&e, cfg.get("realization")?, j_min, w)
}

/// Sites that the wave reaches by `t_end`, with a frame of margin on both sides.
fn kappa_span(c: f64, half: usize, t_end: f64) -> (i64, usize) {
    let lo = -(half as i64);
    let hi = (c * t_end).ceil() as i64 + half as i64;
    (lo, (hi - lo + 1) as usize)
}

fn variants(name: &str) -> Result<Vec<Variant>> {
    if name == "both" {
        Ok(vec![Variant::Full, Variant::Homogeneous])
    } else {
        Ok(vec![name.parse()?])
    }
}

fn steps_of(dt: f64, t: f64) -> Result<usize> {
    let (n, h) = step_count(dt, t);
    if (n as f64 * h - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Config(format!("time {t} is not a multiple of the step {dt}")));
    }
    Ok(n)
}

fn profile(cfg: &RunConfig, out: &Path) -> Result<()> {
    let c: f64 = cfg.get("c")?;
    let jet = profile_derivatives(c, SPEED_STEP)?;
    let sol = solve_on_grid(c, jet.grid.clone())?;
    let (r, p, res) = (sol.r_samples(), sol.p_samples(), sol.residual_samples());
    let [_, _, dc_r, dc_p] = jet.samples();
    let mut csv = CsvOut::create(out.join("profile.csv"), &["x", "r", "p", "dc_r", "dc_p", "residual"])?;
    for i in 0..r.len() {
        csv.row(&[sol.grid.x(i), r[i], p[i], dc_r[i], dc_p[i], res[i]])?;
    }
    csv.finish()?;
    let al = jet.alphas();
    let mut s = CsvOut::create(
        out.join("summary.csv"),
        &["c", "epsilon", "amplitude", "alpha0", "alpha1", "energy", "max_residual", "iterations"],
    )?;
    let max_res = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    s.row(&[c, sol.epsilon, sol.amplitude(), al.alpha0, al.alpha1, jet.energy(), max_res, sol.iterations as f64])?;
    s.finish()
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let t_end: f64 = cfg.get("t_end")?;
    let dt: f64 = cfg.get("dt")?;
    let coeffs = lattice_coeffs(cfg, t_end)?;
    let c: f64 = cfg.get("c")?;
    let snaps: Vec<f64> = cfg.list("snapshots")?;
    let snap_steps = snaps.iter().map(|&s| steps_of(dt, s)).collect::<Result<Vec<_>>>()?;
    if let Some(s) = snaps.iter().find(|&&s| s > t_end || s < 0.0) {
        return Err(Error::Config(format!("snapshot time {s} outside [0, {t_end}]")));
    }
    let energy_stride: usize = cfg.get("energy_stride")?;
    let frame = WaveFrame::new(&ProfileFamily::new().jet(c)?, 0.0);
    let mut u0 = LatticeField::zeros(coeffs.j_min, coeffs.len());
    frame.add_mode_to(1.0, &frame.phi, &mut u0);
    let mut kcsv = CsvOut::create(out.join("kappa.csv"), &["j", "kappa"])?;
    for (k, v) in coeffs.kappa.iter().enumerate() {
        kcsv.row(&[(coeffs.j_min + k as i64) as f64, *v])?;
    }
    kcsv.finish()?;
    let h0 = hamiltonian(&u0, &coeffs)?.value;
    let mut energy = CsvOut::create(out.join("energy.csv"), &["t", "hamiltonian", "relative_drift"])?;
    let (n, _) = step_count(dt, t_end);
    let mut step = 0usize;
    integrate(&u0, &coeffs, dt, t_end, 1, |t, u| {
        if step % energy_stride.max(1) == 0 || step == n {
            let e = hamiltonian(u, &coeffs)?.value;
            energy.row(&[t, e, (e - h0) / h0])?;
        }
        for (s, &k) in snaps.iter().zip(&snap_steps) {
            if k == step {
                write_field(out.join(format!("snapshot_t{s}.csv")), u)?;
            }
        }
        step += 1;
        Ok(())
    })?;
    energy.finish()
}

fn fit(cfg: &RunConfig, out: &Path) -> Result<()> {
    let t_end: f64 = cfg.get("t_end")?;
    let coeffs = lattice_coeffs(cfg, t_end)?;
    let fam = ProfileFamily::new();
    let track =
        fit_trajectory(&fam, &coeffs, cfg.get("c")?, 0.0, cfg.get("dt")?, t_end, cfg.get("stride")?, &FitOptions::default())?;
    let mut csv = CsvOut::create(out.join("fit.csv"), &["t", "xi", "c", "gamma", "eta_l2"])?;
    for i in 0..track.t.len() {
        csv.row(&[track.t[i], track.xi[i], track.c[i], track.gamma[i], track.eta_l2[i]])?;
    }
    csv.finish()
}

fn modulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let t_end: f64 = cfg.get("t_end")?;
    let dt: f64 = cfg.get("dt")?;
    let stride: usize = cfg.get("stride")?;
    let c: f64 = cfg.get("c")?;
    let coeffs = lattice_coeffs(cfg, t_end)?;
    let fam = ProfileFamily::new();
    let init = ModulationState::wave(c, coeffs.j_min, coeffs.len());
    let mut samples: Vec<ModulationSample> = Vec::new();
    integrate_modulation(&fam, &init, &coeffs, dt, t_end, stride, |t, s, frame| {
        samples.push(ModulationSample::from_state(t, s, frame));
        Ok(())
    })?;
    let mut header = vec!["t", "gamma", "c", "xi", "eta_l2", "eta_weighted_l2", "ortho_resid_1", "ortho_resid_2"];
    let fits = if cfg.flag("compare_fit")? {
        header.extend(["gamma_fit", "c_fit", "xi_fit"]);
        Some(fit_trajectory(&fam, &coeffs, c, 0.0, dt, t_end, stride, &FitOptions::default())?)
    } else {
        None
    };
    let mut csv = CsvOut::create(out.join("modulation.csv"), &header)?;
    for (i, s) in samples.iter().enumerate() {
        let mut row = vec![s.t, s.gamma, s.c, s.xi, s.eta_l2, s.eta_weighted_l2, s.ortho[0], s.ortho[1]];
        if let Some(f) = &fits {
            row.extend([f.gamma[i], f.c[i], f.xi[i]]);
        }
        csv.row(&row)?;
    }
    csv.finish()
}

fn expand(cfg: &RunConfig, out: &Path) -> Result<()> {
    let e = ensemble_config(cfg)?;
    let c = e.c_star;
    let t_end: f64 = cfg.get("t_end")?;
    let fam = ProfileFamily::new();
    let drift = SecondOrderDrift::new(&fam, c)?;
    let schedule = FrameSchedule::new(&drift.jet, cfg.get("steps_per_site")?)?;
    let variant: Variant = cfg.get("variant")?;
    let stride: usize = cfg.get("stride")?;
    let t_end = schedule.aligned_end(t_end, stride);
    let (k_min, k_len) = kappa_span(c, drift.jet.half_period(), t_end);
    let kappa = KappaSampler::new(e.distribution, e.master_seed)?.values(cfg.get("realization")?, k_min, k_len);
    let (first, second) = second_order_path(&drift, &schedule, variant, k_min, &kappa, t_end, stride)?;
    let s = e.sigma;
    let name = variant.to_string();
    let mut csv = CsvOut::create(
        out.join("expansion.csv"),
        &["t", "c1", "gamma1_I", "gamma1_II", "gamma2", "c2", "variant", "xi1", "c2_rate", "gamma2_rate", "c_first", "c_second"],
    )?;
    for i in 0..first.t.len() {
        let c_first = c + s * first.c1[i];
        csv.mixed_row(
            &[first.t[i], first.c1[i], first.gamma1_i[i], first.gamma1_ii[i], second.gamma2[i], second.c2[i]],
            &[&name],
            &[first.xi1[i], second.c2_rate[i], second.gamma2_rate[i], c_first, c_first + s * s * second.c2[i]],
        )?;
    }
    csv.finish()
}

fn tail(cfg: &RunConfig, out: &Path) -> Result<()> {
    let c: f64 = cfg.get("c")?;
    let t_end: f64 = cfg.get("t_end")?;
    let stride: usize = cfg.get("stride")?;
    let jet = ProfileFamily::new().jet(c)?;
    let schedule = FrameSchedule::new(&jet, cfg.get("steps_per_site")?)?;
    let (k_min, k_len) = kappa_span(c, jet.half_period(), t_end);
    let sampler = KappaSampler::new(cfg.get("distribution")?, cfg.get("seed")?)?;
    let kappa = sampler.values(cfg.get("realization")?, k_min, k_len);
    let full = integrate_tail(&schedule, Variant::Full, k_min, &kappa, t_end, stride, 20)?;
    let homo = integrate_tail(&schedule, Variant::Homogeneous, k_min, &kappa, t_end, stride, 20)?;
    let mut csv = CsvOut::create(out.join("tail_norms.csv"), &["t", "norm_full", "norm_homogeneous", "relative_difference"])?;
    for i in 0..full.t.len() {
        let (a, b) = (full.fields[i].norm(), homo.fields[i].norm());
        let d = full.fields[i].sub(&homo.fields[i]).norm();
        csv.row(&[full.t[i], a, b, if a + b > 0.0 { d / (a + b) } else { 0.0 }])?;
    }
    csv.finish()?;
    let spacing = schedule.time(2 * stride as u64);
    for s in cfg.list::<f64>("snapshots")? {
        // Nearest record time; files carry the record index.
        let i = (s / spacing).round() as usize;
        if i >= full.t.len() {
            return Err(Error::Config(format!("snapshot time {s} beyond the final record {}", full.t[full.t.len() - 1])));
        }
        write_field(out.join(format!("tail_full_{i}.csv")), &full.fields[i])?;
        write_field(out.join(format!("tail_homogeneous_{i}.csv")), &homo.fields[i])?;
    }
    Ok(())
}

fn response(cfg: &RunConfig, out: &Path) -> Result<()> {
    let c: f64 = cfg.get("c")?;
    let jet = ProfileFamily::new().jet(c)?;
    let schedule = FrameSchedule::new(&jet, cfg.get("steps_per_site")?)?;
    let variant: Variant = cfg.get("variant")?;
    let phases: usize = cfg.get("phases")?;
    let window = LimitWindow { j: cfg.pair("j_range")?, m: cfg.pair("m_range")? };
    if window.j.0 > window.j.1 || window.m.0 > window.m.1 {
        return Err(Error::Config("empty limit window".into()));
    }
    let lr = match cfg.raw("route") {
        "single" => limit_response(&schedule, variant, phases, window, default_lead(c))?,
        "snapshot" => snapshot_route(&schedule, variant, phases, window, cfg.get("tol")?, out)?,
        "kernel" => {
            if variant != Variant::Homogeneous {
                return Err(Error::Config("the kernel route applies to the homogeneous variant only".into()));
            }
            kernel_route(&jet, phases, window, cfg.get("nodes_per_site")?)?
        }
        r => return Err(Error::Config(format!("unknown route {r}"))),
    };
    write_limit(out.join("limit.bin"), &lr)?;
    let mut norms = CsvOut::create(out.join("limit_norms.csv"), &["p", "weighted_norm"])?;
    for (l, p) in lr.phases.iter().enumerate() {
        norms.row(&[*p, lr.weighted_norm(l)])?;
    }
    norms.finish()?;
    let sampler = KappaSampler::new(cfg.get("distribution")?, cfg.get("seed")?)?;
    let n: u64 = cfg.get("tail_realizations")?;
    for k in 0..n {
        let t = limiting_tail(&lr, &sampler, k)?;
        let mut csv = CsvOut::create(out.join(format!("limiting_tail_{k}.csv")), &["x", "r", "p", "std_r", "std_p"])?;
        for i in 0..t.x.len() {
            csv.row(&[t.x[i], t.r[i], t.p[i], t.std_r[i], t.std_p[i]])?;
        }
        csv.finish()?;
    }
    Ok(())
}

fn snapshot_route(
    schedule: &FrameSchedule,
    variant: Variant,
    phases: usize,
    window: LimitWindow,
    tol: f64,
    out: &Path,
) -> Result<LimitResponse> {
    let opts = SnapshotOptions::new(schedule.c, window);
    let mut parts = Vec::with_capacity(phases);
    let mut csv = CsvOut::create(out.join("convergence.csv"), &["p", "n", "distance"])?;
    for l in 0..phases {
        let lr = response_limit(schedule, variant, phases, l, tol, &opts)?;
        for (n, d) in &lr.distances {
            csv.row(&[l as f64 / phases as f64, *n as f64, *d])?;
        }
        parts.push(lr);
    }
    csv.finish()?;
    merge_phases(variant, schedule.c, parts)
}

fn kernel_route(jet: &fput_core::profile::ProfileJet, phases: usize, window: LimitWindow, nodes: usize) -> Result<LimitResponse> {
    let parts = (0..phases)
        .map(|l| kernel_limit(jet, l as f64 / phases as f64, window, nodes))
        .collect::<Result<Vec<_>>>()?;
    merge_phases(Variant::Homogeneous, jet.c, parts)
}

/// Stacks single-phase limits into one multi-phase limit.
fn merge_phases(variant: Variant, c: f64, parts: Vec<LimitResponse>) -> Result<LimitResponse> {
    let first = parts.first().ok_or_else(|| Error::Config("no phases".into()))?;
    let (j, m) = ((first.j_min, first.j_len), (first.m_min, first.m_len));
    let phases: Vec<f64> = (0..parts.len()).map(|l| l as f64 / parts.len() as f64).collect();
    let (mut r, mut p) = (Vec::new(), Vec::new());
    for part in &parts {
        let (a, b) = part.samples();
        r.extend_from_slice(&a[..j.1 * m.1]);
        p.extend_from_slice(&b[..j.1 * m.1]);
    }
    LimitResponse::from_parts(variant, c, phases, j, m, r, p)
}

fn rate_options(cfg: &RunConfig) -> Result<RateOptions> {
    Ok(RateOptions {
        p_samples: cfg.get("p_samples")?,
        steps_per_site: cfg.get("steps_per_site")?,
        ..RateOptions::default()
    })
}

fn write_rates(out: &Path, tables: &[(Variant, Vec<AttenuationRate>)]) -> Result<()> {
    let mut csv = CsvOut::create(
        out.join("rate.csv"),
        &["c", "Q_gamma", "Q_c", "variant", "p_samples", "Q_c_refined", "integrand_variation", "sites_behind"],
    )?;
    let mut integ = CsvOut::create(out.join("integrand.csv"), &["variant", "c", "p", "integrand_gamma", "integrand_c"])?;
    let mut summary = CsvOut::create(out.join("rate_summary.csv"), &["variant", "slope", "max_q_c"])?;
    for (v, rates) in tables {
        let name = v.to_string();
        for r in rates {
            let n = r.integrand.len();
            csv.mixed_row(
                &[r.c, r.q_gamma, r.q_c],
                &[&name],
                &[n as f64, r.q_c_refined, r.integrand_variation(), r.sites_behind as f64],
            )?;
            for (l, v) in r.integrand.iter().enumerate() {
                integ.labeled_row(&[&name], &[r.c, l as f64 / n as f64, v[0], v[1]])?;
            }
        }
        let max_q = rates.iter().map(|r| r.q_c).fold(f64::NEG_INFINITY, f64::max);
        summary.labeled_row(&[&name], &[power_law_slope(rates), max_q])?;
    }
    csv.finish()?;
    integ.finish()?;
    summary.finish()
}

fn rate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let fam = ProfileFamily::new();
    let speeds = rate_grid(cfg.get("c_min")?, cfg.get("c_max")?, cfg.get("c_grid")?);
    let opts = RateOptions { tol: cfg.get("tol")?, ..rate_options(cfg)? };
    let mut tables = Vec::new();
    for v in variants(cfg.raw("variant"))? {
        tables.push((v, rate_table(&fam, &speeds, v, &opts)?));
    }
    write_rates(out, &tables)
}

fn read_rate_column(path: &str, variant: Variant) -> Result<Vec<(f64, f64)>> {
    let (header, rows) = read_csv(path)?;
    let col = |n: &str| header.iter().position(|h| h == n).ok_or_else(|| Error::Config(format!("{path}: no column {n}")));
    let (kv, kc, kq) = (col("variant")?, col("c")?, col("Q_c")?);
    let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("{path}: {e}")));
    rows.iter()
        .filter(|r| r[kv] == variant.to_string())
        .map(|r| Ok((parse(&r[kc])?, parse(&r[kq])?)))
        .collect()
}

fn limit_ode(cfg: &RunConfig, out: &Path) -> Result<()> {
    let c_star: f64 = cfg.get("c_star")?;
    let wanted = variants(cfg.raw("variant"))?;
    let mut tables: Vec<(Variant, Vec<(f64, f64)>)> = Vec::new();
    match cfg.raw("rate_table") {
        "" => {
            let speeds = rate_grid(cfg.get("c_min")?, c_star, cfg.get("c_grid")?);
            let mut computed = Vec::new();
            for &v in &wanted {
                let rates = rate_table(&ProfileFamily::new(), &speeds, v, &rate_options(cfg)?)?;
                tables.push((v, rates.iter().map(|r| (r.c, r.q_c)).collect()));
                computed.push((v, rates));
            }
            write_rates(out, &computed)?;
        }
        path => {
            for &v in &wanted {
                let t = read_rate_column(path, v)?;
                if t.is_empty() {
                    return Err(Error::Config(format!("{path}: no rows for variant {v}")));
                }
                tables.push((v, t));
            }
        }
    }
    let (tau_end, dtau, stride) = (cfg.get("tau_end")?, cfg.get("dtau")?, cfg.get("stride")?);
    let mut paths = Vec::new();
    for (v, t) in &tables {
        let path = integrate_limit_ode(t, c_star, tau_end, dtau, stride)?;
        if let Some(t) = path.clipped_at {
            eprintln!("note: {v} speed left the tabulated range at tau = {t}; the rate was held at the table end");
        }
        paths.push((*v, path));
    }
    let column = |v: Variant, i: usize| paths.iter().find(|p| p.0 == v).map_or(f64::NAN, |p| p.1.c[i]);
    let mut csv = CsvOut::create(out.join("limit_ode.csv"), &["tau", "c_lim", "c_lim_h"])?;
    for (i, t) in paths[0].1.tau.iter().enumerate() {
        csv.row(&[*t, column(Variant::Full, i), column(Variant::Homogeneous, i)])?;
    }
    csv.finish()
}

fn ensemble(cfg: &RunConfig, out: &Path) -> Result<()> {
    let e = ensemble_config(cfg)?;
    let n: usize = cfg.get("realizations")?;
    let t_end: f64 = cfg.get("t_end")?;
    let fam = ProfileFamily::new();
    let stats = match cfg.raw("pipeline") {
        "fit" => {
            let dt: f64 = cfg.get("dt")?;
            let stride: usize = cfg.get("stride")?;
            let pad: usize = cfg.get("pad")?;
            let (steps, h) = step_count(dt, t_end);
            let grid: Vec<f64> = (0..=steps).filter(|k| k % stride == 0 || *k == steps).map(|k| k as f64 * h).collect();
            let (j_min, w) = simulation_window(e.c_star, t_end, pad);
            let fam = &fam;
            let e = &e;
            run_ensemble(n, grid, vec!["c".into(), "gamma".into()], |i| {
                let coeffs = sample_kappa(e, i as u64, j_min, w)?;
                let tr = fit_trajectory(fam, &coeffs, e.c_star, 0.0, dt, t_end, stride, &FitOptions::default())?;
                Ok(vec![tr.c, tr.gamma])
            })?
        }
        "first_order" => {
            let jet = fam.jet(e.c_star)?;
            let (k_min, k_len) = kappa_span(e.c_star, jet.half_period(), t_end);
            let dt: f64 = cfg.get("dt")?;
            let stride: usize = cfg.get("stride")?;
            let (steps, h) = step_count(dt, t_end);
            let grid: Vec<f64> = (0..=steps).filter(|k| k % stride == 0 || *k == steps).map(|k| k as f64 * h).collect();
            let sampler = KappaSampler::new(e.distribution, e.master_seed)?;
            let (fam, grid_ref) = (&fam, &grid);
            run_ensemble(n, grid.clone(), vec!["c1".into(), "gamma1".into()], |i| {
                let kappa = sampler.values(i as u64, k_min, k_len);
                let p = first_order_path(fam, e.c_star, k_min, &kappa, grid_ref)?;
                let g = (0..p.t.len()).map(|k| p.gamma1(k)).collect();
                Ok(vec![p.c1, g])
            })?
        }
        "second_order" => {
            let drift = SecondOrderDrift::new(&fam, e.c_star)?;
            let schedule = FrameSchedule::new(&drift.jet, cfg.get("steps_per_site")?)?;
            let variant: Variant = cfg.get("variant")?;
            let stride: usize = cfg.get("tail_stride")?;
            let t_end = schedule.aligned_end(t_end, stride);
            let (k_min, k_len) = kappa_span(e.c_star, drift.jet.half_period(), t_end);
            let sampler = KappaSampler::new(e.distribution, e.master_seed)?;
            let steps = schedule.steps_to(t_end);
            let grid: Vec<f64> = (0..=steps / stride.max(1)).map(|i| schedule.time(2 * (i * stride) as u64)).collect();
            let names = vec!["c1".into(), "c2".into(), "c2_rate".into(), "gamma2_rate".into()];
            let stats = run_ensemble(n, grid, names, |i| {
                let kappa = sampler.values(i as u64, k_min, k_len);
                let (first, second) = second_order_path(&drift, &schedule, variant, k_min, &kappa, t_end, stride)?;
                Ok(vec![first.c1, second.c2, second.c2_rate, second.gamma2_rate])
            })?;
            let exp = expected_drift(&fam, &schedule, variant, t_end, stride)?;
            let mut csv = CsvOut::create(
                out.join("expected_drift.csv"),
                &["t", "m10_gamma", "m10_c", "m11_gamma", "m11_c", "m02_gamma", "m02_c", "total_gamma", "total_c"],
            )?;
            for i in 0..exp.t.len() {
                let tot = exp.total(i);
                csv.row(&[
                    exp.t[i],
                    exp.m10[i][0],
                    exp.m10[i][1],
                    exp.m11[i][0],
                    exp.m11[i][1],
                    exp.m02[i][0],
                    exp.m02[i][1],
                    tot[0],
                    tot[1],
                ])?;
            }
            csv.finish()?;
            stats
        }
        p => return Err(Error::Config(format!("unknown pipeline {p}"))),
    };
    let mut header = vec!["t".to_string(), "tau".to_string()];
    for q in &stats.names {
        header.extend([format!("{q}_mean"), format!("{q}_var"), format!("{q}_se")]);
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvOut::create(out.join("stats.csv"), &refs)?;
    for (i, t) in stats.t.iter().enumerate() {
        let mut row = vec![*t, e.sigma * e.sigma * t];
        for q in &stats.stats {
            row.extend([q[i].mean, q[i].variance(), q[i].std_error()]);
        }
        csv.row(&row)?;
    }
    csv.finish()?;
    let mut f = CsvOut::create(out.join("failures.csv"), &["realization", "reason"])?;
    for (i, why) in &stats.failed {
        f.labeled_row(&[&i.to_string(), why], &[])?;
    }
    f.finish()
}
