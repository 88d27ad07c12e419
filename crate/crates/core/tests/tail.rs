use std::ops::ControlFlow;

use fput_core::ensemble::{Distribution, KappaSampler, Welford};
use fput_core::kernel::propagate_free;
use fput_core::lattice::{apply_j, LatticeField};
use fput_core::modulation::{orthogonality, weight_rate};
use fput_core::ode::Rk4;
use fput_core::profile::{long_wave_parameter, ProfileFamily};
use fput_core::tail::*;

const C: f64 = 1.015;

fn schedule(fam: &ProfileFamily) -> FrameSchedule {
    FrameSchedule::new(&fam.jet(C).unwrap(), 24).unwrap()
}

fn bump(j_min: i64, w: usize, center: f64) -> LatticeField {
    let mut u = LatticeField::zeros(j_min, w);
    for k in 0..w {
        let x = (j_min + k as i64) as f64 - center;
        u.r[k] = (-x * x / 8.0).exp();
        u.p[k] = 0.5 * x * (-x * x / 10.0).exp();
    }
    u
}

#[test]
fn free_kernel_matches_direct_integration() {
    let u = bump(-80, 161, 0.0);
    let t = 10.0;
    let k = propagate_free(&u, t).unwrap();
    let mut y = u.to_flat();
    let mut rk = Rk4::new(y.len());
    let n = 4000;
    for _ in 0..n {
        rk.step(0.0, t / n as f64, &mut y, |_, _, y, dy| {
            let f = apply_j(&LatticeField::from_flat(-80, y));
            dy.copy_from_slice(&f.to_flat());
        });
    }
    let direct = LatticeField::from_flat(-80, &y);
    assert!(k.sub(&direct).norm() <= 1e-6);
    assert!((k.norm() - u.norm()).abs() <= 1e-9);
}

#[test]
fn free_kernel_respects_the_light_cone() {
    let mut u = LatticeField::zeros(-200, 401);
    for j in -3..=3 {
        u.r[(j + 200) as usize] = 1.0 / (1.0 + (j * j) as f64);
    }
    let t = 40.0;
    let v = propagate_free(&u, t).unwrap();
    for (k, j) in v.sites().enumerate() {
        if (j.abs() as f64) > 3.0 + t + 30.0 {
            assert!(v.r[k].abs() <= 1e-10 && v.p[k].abs() <= 1e-10, "j = {j}");
        }
    }
}

#[test]
fn zero_coefficients_give_zero_tail() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let kappa = vec![0.0; 30];
    let tr = integrate_tail(&s, Variant::Full, 0, &kappa, 20.0, 24, 20).unwrap();
    assert!(tr.fields.iter().all(|f| f.sup_norm() == 0.0));
}

#[test]
fn tail_is_the_superposition_of_site_responses() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let kappa = [0.7, -1.2, 0.3, 1.6, -0.4];
    let (k0, t_end) = (12, 40.0);
    for variant in [Variant::Full, Variant::Homogeneous] {
        let tail = integrate_tail(&s, variant, k0, &kappa, t_end, 48, 20).unwrap();
        let last = tail.fields.last().unwrap();
        let mut sum = LatticeField::zeros(last.j_min, last.len());
        for (i, k) in kappa.iter().enumerate() {
            // Same window as the full tail, so the two runs are comparable.
            let integ = TailIntegrator::new(&s, variant);
            let f = integ
                .run(
                    Forcing::Site(k0 + i as i64),
                    TailWindow::Fixed { j_min: last.j_min, width: last.len() },
                    s.steps_to(t_end),
                    1000,
                    |_, _, _, _| Ok(ControlFlow::Continue(())),
                )
                .unwrap();
            sum.axpy(*k, &f);
        }
        assert!(sum.sub(last).sup_norm() <= 1e-10, "{variant}");
    }
}

#[test]
fn full_tail_stays_orthogonal_to_the_wave_modes() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let sampler = KappaSampler::new(Distribution::UniformPmSqrt3, 5).unwrap();
    let kappa = sampler.values(0, -10, 180);
    let integ = TailIntegrator::new(&s, Variant::Full);
    let mut worst = 0.0f64;
    integ
        .run(
            Forcing::Field { j_min: -10, values: &kappa },
            TailWindow::Fixed { j_min: -400, width: 900 },
            s.steps_to(150.0),
            24,
            |_, _, eta, ef| {
                let o = orthogonality(&ef.frame, eta);
                worst = worst.max(o[0].abs()).max(o[1].abs());
                Ok(ControlFlow::Continue(()))
            },
        )
        .unwrap();
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn response_far_behind_the_wave_vanishes() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let m = -(30.0 / long_wave_parameter(C)).ceil() as i64 - 1;
    let r = response(&s, Variant::Full, m, 60.0, 24, 20).unwrap();
    assert!(r.fields.iter().all(|f| f.norm() <= 1e-8));
    assert_eq!(r.fields[0].sup_norm(), 0.0);
}

#[test]
fn site_forcing_decays_away_from_the_wave() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let ef = s.frame(0);
    let pts: Vec<(f64, f64)> = (4..40)
        .map(|m| {
            let f = ef.forcing_with(-200, &unit_at(m), ef.first_order(m, &[1.0]));
            (m as f64, f.norm().ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(slope < -0.1, "decay rate {}", -slope);
}

fn unit_at(m: i64) -> Vec<f64> {
    let mut v = vec![0.0; 400];
    v[(m + 200) as usize] = 1.0;
    v
}

#[test]
fn evolution_is_shift_equivariant() {
    // The forcing of a site vanishes exactly until the wave is within a frame
    // of it, so responses of translated sites are translated responses.
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let site = 140;
    let run = |m: i64| response(&s, Variant::Full, m, 200.0, 24, 20).unwrap();
    let base = run(site);
    for d in [1i64, 5] {
        let moved = run(site + d);
        let mut worst = 0.0f64;
        for i in 0..base.fields.len() {
            let (a, b) = (&base.fields[i], match moved.fields.get(i + d as usize) {
                Some(f) => f,
                None => break,
            });
            for (q, j) in a.sites().enumerate() {
                if let Some(p) = b.index(j + d) {
                    worst = worst.max((a.r[q] - b.r[p]).abs()).max((a.p[q] - b.p[p]).abs());
                }
            }
        }
        assert!(worst <= 1e-8, "d = {d}: {worst}");
    }
}

#[test]
fn weighted_norm_of_orthogonal_tail_decays() {
    // After the wave has passed the site, the response solves the unforced
    // linearization with orthogonal data.
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let a = weight_rate(C);
    let site = 90;
    let mut pts = Vec::new();
    sweep_site(&s, Variant::Full, site, 1, TailWindow::CoMoving { behind: 400, ahead: 160 }, 700, |snap| {
        if snap.m < -60 && snap.n % 20 == 0 {
            let t = snap.n as f64 / C;
            pts.push((t, snap.field.weighted_norm(a, snap.frame.xi()).ln()));
        }
        Ok(ControlFlow::Continue(()))
    })
    .unwrap();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(-slope > 0.0, "fitted rate {}", -slope);
}

#[test]
fn free_tail_stays_in_its_cone() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let t_end = 120.0;
    let sampler = KappaSampler::new(Distribution::UniformPmSqrt3, 9).unwrap();
    let kappa = sampler.values(0, 0, (C * t_end) as usize);
    let tr = integrate_tail(&s, Variant::Homogeneous, 0, &kappa, t_end, 240, 40).unwrap();
    for (t, f) in tr.t.iter().zip(&tr.fields) {
        let (lo, hi) = (-C * t - 20.0, C * t + 20.0);
        let outside: f64 = f
            .sites()
            .enumerate()
            .filter(|&(_, j)| (j as f64) < lo || (j as f64) > hi)
            .map(|(k, _)| f.r[k] * f.r[k] + f.p[k] * f.p[k])
            .sum();
        assert!(outside <= 1e-8, "t = {t}: {outside}");
    }
}

fn small_window() -> LimitWindow {
    LimitWindow { j: (-30, 20), m: (-30, 20) }
}

fn snapshot_opts() -> SnapshotOptions {
    SnapshotOptions { window: small_window(), first: 20, step: 10, last: 200 }
}

#[test]
fn shifted_snapshots_converge_geometrically() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let lr = response_limit(&s, Variant::Full, 4, 1, 1e-6, &snapshot_opts()).unwrap();
    let q = lr.rate.unwrap();
    assert!(q < 0.9, "{q}");
    for w in lr.distances.windows(2).filter(|w| w[0].0 >= 60 && w[1].1 > 1e-9) {
        assert!(w[1].1 < w[0].1, "{:?}", lr.distances);
    }
}

#[test]
fn limit_wraps_around_the_phase() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let tol = 1e-7;
    let end = response_limit(&s, Variant::Homogeneous, 4, 4, tol, &snapshot_opts()).unwrap();
    let start = response_limit(&s, Variant::Homogeneous, 4, 0, tol, &snapshot_opts()).unwrap();
    let w = small_window();
    let mut worst = 0.0f64;
    for m in w.m.0 + 1..=w.m.1 {
        for j in w.j.0 + 1..=w.j.1 {
            let (a, b) = (end.value(0, j, m), start.value(0, j - 1, m - 1));
            worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
    }
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn single_run_limit_agrees_with_free_kernel_quadrature() {
    let fam = ProfileFamily::new();
    let jet = fam.jet(C).unwrap();
    let s = FrameSchedule::new(&jet, 24).unwrap();
    let w = LimitWindow { j: (-20, 10), m: (-10, 10) };
    let run = limit_response(&s, Variant::Homogeneous, 2, w, default_lead(C)).unwrap();
    for (l, p) in [(0usize, 0.0), (1, 0.5)] {
        let quad = kernel_limit(&jet, p, w, 40).unwrap();
        let d = quad.distance(&run, 0, l);
        assert!(d <= 1e-6 * quad.weighted_norm(0), "p = {p}: {d}");
    }
}

#[test]
fn limiting_tail_statistics() {
    let fam = ProfileFamily::new();
    let s = schedule(&fam);
    let eps = long_wave_parameter(C);
    let ahead = (20.0 / eps).ceil() as i64;
    let w = LimitWindow { j: (-150, ahead + 2), m: (-400, ahead + 40) };
    let lr = limit_response(&s, Variant::Homogeneous, 4, w, default_lead(C)).unwrap();
    let sampler = KappaSampler::new(Distribution::UniformPmSqrt3, 3).unwrap();
    let tail = limiting_tail(&lr, &sampler, 0).unwrap();
    let max_std = tail.std_r.iter().cloned().fold(0.0, f64::max);
    for (i, &x) in tail.x.iter().enumerate() {
        if x < -1.0 {
            assert!(tail.std_r[i] > 0.0);
        }
        if (x - ahead as f64).abs() < 1e-9 {
            assert!(tail.std_r[i] <= 0.05 * max_std, "std ahead {} of {max_std}", tail.std_r[i]);
        }
    }
    // Pointwise variance equals the Monte Carlo variance of the series.
    let probes = [tail.x.len() / 3, tail.x.len() / 2 + 1];
    let mut acc = vec![Welford::default(); probes.len()];
    for seed in 0..2000 {
        let t = limiting_tail(&lr, &sampler, seed).unwrap();
        for (a, &i) in acc.iter_mut().zip(&probes) {
            a.push(t.r[i]);
        }
    }
    for (a, &i) in acc.iter().zip(&probes) {
        let var = tail.std_r[i].powi(2);
        // Standard error of the sample variance from the fourth moment bound of
        // a sum of bounded independent terms.
        let se = var * (2.0f64 / 2000.0).sqrt() * 1.2;
        assert!((a.variance() - var).abs() <= 3.0 * se, "x = {}: {} vs {var}", tail.x[i], a.variance());
    }
}
