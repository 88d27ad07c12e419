//! Expected second-order drift: the deterministic first-order correlations,
//! the tail maps, the asymptotic attenuation rate and the slow-time limit
//! equation.

use std::ops::ControlFlow;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expansion::ExpansionFrame;
use crate::frame::{pairing_inverse, Mat2, WaveFrame};
use crate::lattice::LatticeField;
use crate::ode::Rk4;
use crate::profile::{ProfileFamily, ProfileJet};
use crate::tail::{sweep_site, FrameSchedule, LimitResponse, TailWindow, Variant};

/// Expectation of `xi1 d_xi (G,C)^{1,0}[kappa] + c1 d_c (G,C)^{1,0}[kappa]`
/// at wave position `xi`, split into the part periodic in `xi` and the part
/// decaying away from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSplit {
    pub xi: f64,
    pub c: f64,
    pub total: [f64; 2],
    pub periodic: [f64; 2],
    pub transient: [f64; 2],
    /// Totals of the four correlations: phase, phase shift, integrated speed
    /// and speed contributions.
    pub parts: [[f64; 2]; 4],
}

/// Evaluator of the first-order correlations at one speed.
pub struct Correlations {
    jet: ProfileJet,
    a_inv: Mat2,
    a_inv_dc: Mat2,
    alpha0: f64,
    alpha1: f64,
    sq: Vec<Complex64>,
    sq_c: Vec<Complex64>,
    /// Totals of the antiderivatives of `d_c r^2` and `r^2`.
    f_total: f64,
    r_total: f64,
}

impl Correlations {
    pub fn new(jet: ProfileJet) -> Self {
        let al = jet.alphas();
        let (a0, a1) = (al.alpha0, al.alpha1);
        let (da0, da1) = jet.alpha_slopes();
        let a_inv_dc = Mat2::new(da1 / (a0 * a0) - 2.0 * a1 * da0 / a0.powi(3), da0 / (a0 * a0), -da0 / (a0 * a0), 0.0);
        let [sq, sq_c, _] = jet.square_coeffs();
        let far = jet.half_period() as i64 + 1;
        let s = jet.grid.lattice_sampler(0.0, far, 1);
        let f_total = s.sample_antiderivative(&sq_c)[0];
        let r_total = s.sample_antiderivative(&sq)[0];
        Correlations { a_inv: pairing_inverse(a0, a1), a_inv_dc, alpha0: a0, alpha1: a1, sq, sq_c, f_total, r_total, jet }
    }

    pub fn c(&self) -> f64 {
        self.jet.c
    }

    pub fn eval(&self, xi: f64) -> CorrelationSplit {
        let fr = WaveFrame::new(&self.jet, xi);
        self.eval_on(&fr)
    }

    /// Same as [`Correlations::eval`] with a prebuilt frame at the position.
    pub fn eval_on(&self, fr: &WaveFrame) -> CorrelationSplit {
        let (c, a0, a1) = (self.jet.c, self.alpha0, self.alpha1);
        let xi = fr.xi;
        let w = fr.width();
        let g = &self.jet.grid;
        let here = g.lattice_sampler(xi, fr.j_min, w);
        let origin = g.lattice_sampler(0.0, fr.j_min, w);
        let sq0 = origin.sample(&self.sq, 0);
        let f_here = here.sample_antiderivative(&self.sq_c);
        let f0 = origin.sample_antiderivative(&self.sq_c);
        let r_here = here.sample_antiderivative(&self.sq);
        let r0 = origin.sample_antiderivative(&self.sq);
        let (gx, gc) = fr.square_gradients();
        let (xx, xc, cc) = fr.square_hessian();

        let ci = a1 / (4.0 * c * a0 * a0);
        let cii = -1.0 / (4.0 * c * a0);
        let ciii = 1.0 / (4.0 * c * c * a0);
        let civ = 1.0 / (4.0 * c * a0);
        let mut per = [[0.0; 2]; 4];
        let mut tra = [[0.0; 2]; 4];
        let add = |acc: &mut [f64; 2], s: f64, v: [f64; 2]| {
            acc[0] += s * v[0];
            acc[1] += s * v[1];
        };
        for k in 0..w {
            let v = self.a_inv.apply([xx[k], xc[k]]);
            let sq_here = fr.phi.r[k] * fr.phi.r[k];
            let u = self.a_inv_dc.apply([gx[k], gc[k]]);
            let u2 = self.a_inv.apply([xc[k], cc[k]]);
            let viv = [u[0] + u2[0], u[1] + u2[1]];
            add(&mut per[0], ci * sq_here, v);
            add(&mut tra[0], -ci * sq0[k], v);
            add(&mut per[1], cii * (self.f_total - f_here[k]), v);
            add(&mut tra[1], -cii * (self.f_total - f0[k]), v);
            add(&mut per[2], ciii * (self.r_total - r_here[k]), v);
            add(&mut tra[2], -ciii * ((self.r_total - r0[k]) + xi * sq0[k]), v);
            add(&mut per[3], civ * sq_here, viv);
            add(&mut tra[3], -civ * sq0[k], viv);
        }
        let sum = |a: &[[f64; 2]; 4]| [a.iter().map(|v| v[0]).sum::<f64>(), a.iter().map(|v| v[1]).sum::<f64>()];
        let (periodic, transient) = (sum(&per), sum(&tra));
        let mut parts = [[0.0; 2]; 4];
        for i in 0..4 {
            parts[i] = [per[i][0] + tra[i][0], per[i][1] + tra[i][1]];
        }
        CorrelationSplit {
            xi,
            c,
            total: [periodic[0] + transient[0], periodic[1] + transient[1]],
            periodic,
            transient,
            parts,
        }
    }
}

/// Contributions `((G,C)^{1,1}[delta_m, R], (G,C)^{0,2}[R_r, R_r])` of one
/// response column at site `m`.
pub fn column_maps(ef: &ExpansionFrame, m: i64, column: &LatticeField) -> ([f64; 2], [f64; 2]) {
    let mixed = ef.mixed_site(m, column);
    let quad = ef.quadratic(column.j_min, &column.r, &column.r);
    (mixed, quad)
}

/// `(M^{1,1}, M^{0,2})` of a stored co-moving limit at phase index `l`,
/// with the frame at position `p_l`.
pub fn limit_maps(jet: &ProfileJet, lr: &LimitResponse, l: usize) -> Result<([f64; 2], [f64; 2])> {
    let p = *lr.phases.get(l).ok_or_else(|| Error::Config(format!("phase index {l} not stored")))?;
    let ef = ExpansionFrame::new(jet, p);
    let (mut m11, mut m02) = ([0.0; 2], [0.0; 2]);
    for mm in 0..lr.m_len as i64 {
        let m = lr.m_min + mm;
        let col = lr.column(l, m).expect("column inside the window");
        let (a, b) = column_maps(&ef, m, &col);
        for i in 0..2 {
            m11[i] += a[i];
            m02[i] += b[i];
        }
    }
    Ok((m11, m02))
}

/// Expected second-order drift `E[(gamma2', c2')]` on the tail time grid,
/// split into its three contributions.
#[derive(Debug, Clone)]
pub struct ExpectedDrift {
    pub variant: Variant,
    pub c: f64,
    pub t: Vec<f64>,
    pub m10: Vec<[f64; 2]>,
    pub m11: Vec<[f64; 2]>,
    pub m02: Vec<[f64; 2]>,
}

impl ExpectedDrift {
    pub fn total(&self, i: usize) -> [f64; 2] {
        [
            self.m10[i][0] + self.m11[i][0] + self.m02[i][0],
            self.m10[i][1] + self.m11[i][1] + self.m02[i][1],
        ]
    }
}

/// Deterministic expected drift at the tail steps `stride, 2 stride, ...` up
/// to `t_end`, for a wave started at the origin. Every heterogeneity site the
/// wave can feel contributes one single-site response, followed in a window
/// moving with the wave.
pub fn expected_drift(family: &ProfileFamily, schedule: &FrameSchedule, variant: Variant, t_end: f64, stride: usize) -> Result<ExpectedDrift> {
    let c = schedule.c;
    let jet = family.jet(c)?;
    let corr = Correlations::new(jet.clone());
    let n_steps = schedule.steps_to(t_end);
    let stride = stride.max(1);
    let n_obs = n_steps / stride;
    let steps: Vec<usize> = (0..=n_obs).map(|i| i * stride).collect();
    let t: Vec<f64> = steps.iter().map(|&s| schedule.time(2 * s as u64)).collect();
    let m10 = steps.iter().map(|&s| corr.eval_on(&schedule.frame(2 * s as u64).frame).total).collect();
    let l = jet.half_period();
    let pad = 20;
    let window = TailWindow::CoMoving { behind: l + pad, ahead: l + pad };
    let hi = (c * t[n_obs]).ceil() as i64 + l as i64;
    let sites: Vec<i64> = (-(l as i64)..=hi).collect();
    let per_site: Vec<Vec<([f64; 2], [f64; 2])>> = {
        use rayon::prelude::*;
        sites
            .par_iter()
            .map(|&m| {
                let mut got = vec![([0.0; 2], [0.0; 2]); n_obs + 1];
                let integ = crate::tail::TailIntegrator::new(schedule, variant);
                integ.run(crate::tail::Forcing::Site(m), window, n_obs * stride, stride, |step, _, field, ef| {
                    got[step / stride] = column_maps(ef, m, field);
                    Ok(ControlFlow::Continue(()))
                })?;
                Ok(got)
            })
            .collect::<Result<_>>()?
    };
    let mut m11 = vec![[0.0; 2]; n_obs + 1];
    let mut m02 = vec![[0.0; 2]; n_obs + 1];
    for got in &per_site {
        for (i, (a, b)) in got.iter().enumerate() {
            for q in 0..2 {
                m11[i][q] += a[q];
                m02[i][q] += b[q];
            }
        }
    }
    Ok(ExpectedDrift { variant, c, t, m10, m11, m02 })
}

/// Asymptotic attenuation rate at one speed.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationRate {
    pub c: f64,
    pub q_gamma: f64,
    pub q_c: f64,
    pub variant: Variant,
    pub p_samples: usize,
    /// Limit of the expected drift at the phases `l / p_samples`.
    pub integrand: Vec<[f64; 2]>,
    /// Rate from twice as many phases.
    pub q_c_refined: f64,
    /// Heterogeneity sites summed behind the wave.
    pub sites_behind: i64,
}

impl AttenuationRate {
    /// Largest deviation of the phase integrand of `Q_c` from its mean,
    /// relative to the mean.
    pub fn integrand_variation(&self) -> f64 {
        let n = self.integrand.len() as f64;
        let mean = self.integrand.iter().map(|v| v[1]).sum::<f64>() / n;
        self.integrand.iter().map(|v| (v[1] - mean).abs()).fold(0.0, f64::max) / mean.abs()
    }
}

/// Options of the rate evaluation.
#[derive(Debug, Clone, Copy)]
pub struct RateOptions {
    pub p_samples: usize,
    /// Time steps per site; must be a multiple of `2 p_samples`.
    pub steps_per_site: usize,
    /// Stop once the last block of sites changes the sums by less than this
    /// fraction.
    pub tol: f64,
    pub block: i64,
    pub max_sites_behind: i64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions { p_samples: 8, steps_per_site: 32, tol: 1e-8, block: 50, max_sites_behind: 20_000 }
    }
}

/// `(Q_gamma, Q_c) = c^{-1} mean_p [M^{1,0}_per(p) + M^{0,2}(p)[R_inf, R_inf] +
/// M^{1,1}(p)[R_inf]]`. The co-moving limit is summed column by column from
/// one single-site response run in a window moving with the wave; columns
/// are added until a block of sites no longer changes the sums. The
/// evaluation on `2 p_samples` phases comes from the same run and must agree
/// within 1 %.
pub fn attenuation_rate(family: &ProfileFamily, c: f64, variant: Variant, opts: &RateOptions) -> Result<AttenuationRate> {
    let np = 2 * opts.p_samples;
    if opts.p_samples == 0 || opts.steps_per_site % np != 0 {
        return Err(Error::Config(format!(
            "{} steps per site are not a multiple of {np} phases",
            opts.steps_per_site
        )));
    }
    let jet = family.jet(c)?;
    let schedule = FrameSchedule::new(&jet, opts.steps_per_site)?;
    let l = jet.half_period();
    let lead = crate::tail::default_lead(c);
    let site = lead;
    let window = TailWindow::CoMoving { behind: l + 20, ahead: l + 20 };
    let mut sums = vec![[0.0f64; 2]; np];
    let mut block = [0.0f64; 2];
    let mut behind = 0;
    let mut settled = false;
    let max_sites = (site + opts.max_sites_behind) as usize;
    sweep_site(&schedule, variant, site, np, window, max_sites, |s| {
        let (a, b) = column_maps(s.frame, site, s.field);
        for q in 0..2 {
            let v = a[q] + b[q];
            sums[s.l][q] += v;
            block[q] += v;
        }
        if s.l == np - 1 {
            behind = -s.m;
            if behind > 0 && behind % opts.block == 0 {
                let tot = |q: usize| sums.iter().map(|v| v[q]).sum::<f64>();
                let small = (0..2).all(|q| block[q].abs() <= opts.tol * tot(q).abs());
                block = [0.0; 2];
                if small {
                    settled = true;
                    return Ok(ControlFlow::Break(()));
                }
            }
        }
        Ok(ControlFlow::Continue(()))
    })?;
    if !settled {
        return Err(Error::Convergence(format!("rate sums at c = {c} not settled {behind} sites behind the wave")));
    }
    let corr = Correlations::new(jet.clone());
    let integrand: Vec<[f64; 2]> = (0..np)
        .map(|l| {
            let per = corr.eval(l as f64 / np as f64).periodic;
            [per[0] + sums[l][0], per[1] + sums[l][1]]
        })
        .collect();
    let mean = |step: usize| {
        let pts: Vec<&[f64; 2]> = integrand.iter().step_by(step).collect();
        let n = pts.len() as f64;
        [pts.iter().map(|v| v[0]).sum::<f64>() / (n * c), pts.iter().map(|v| v[1]).sum::<f64>() / (n * c)]
    };
    let coarse = mean(2);
    let fine = mean(1);
    if (coarse[1] - fine[1]).abs() > 0.01 * fine[1].abs() {
        return Err(Error::Convergence(format!(
            "rate at c = {c} changes from {:.6e} to {:.6e} when the phase grid is doubled",
            coarse[1], fine[1]
        )));
    }
    Ok(AttenuationRate {
        c,
        q_gamma: coarse[0],
        q_c: coarse[1],
        variant,
        p_samples: opts.p_samples,
        integrand: integrand.iter().step_by(2).copied().collect(),
        q_c_refined: fine[1],
        sites_behind: behind,
    })
}

/// `n` speeds between `lo` and `hi` spaced geometrically in `c - 1`.
pub fn rate_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = ((lo - 1.0).ln(), (hi - 1.0).ln());
    (0..n).map(|i| 1.0 + (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Rates on a speed grid, evaluated in parallel.
pub fn rate_table(family: &ProfileFamily, speeds: &[f64], variant: Variant, opts: &RateOptions) -> Result<Vec<AttenuationRate>> {
    use rayon::prelude::*;
    speeds.par_iter().map(|&c| attenuation_rate(family, c, variant, opts)).collect()
}

/// Least-squares slope of `log |Q_c|` against `log (c - 1)`.
pub fn power_law_slope(rates: &[AttenuationRate]) -> f64 {
    let pts: Vec<(f64, f64)> = rates.iter().map(|r| ((r.c - 1.0).ln(), r.q_c.abs().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Natural cubic spline through `(x_i, y_i)` with increasing `x`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("spline knots must be increasing and at least two".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives.
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
                if i > 1 {
                    let f = h0 / diag[i - 1];
                    diag[i] -= f * upper[i - 1];
                    rhs[i] -= f * rhs[i - 1];
                }
            }
            for i in (1..n - 1).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Ok(CubicSpline { x, y, m })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Value at `t`, clamped to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = self.range();
        let t = t.clamp(lo, hi);
        let i = self.x.partition_point(|&v| v <= t).clamp(1, self.x.len() - 1);
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let h = x1 - x0;
        let (a, b) = ((x1 - t) / h, (t - x0) / h);
        a * self.y[i - 1] + b * self.y[i] + ((a * a * a - a) * self.m[i - 1] + (b * b * b - b) * self.m[i]) * h * h / 6.0
    }
}

/// Solution of the slow-time equation `dc/dtau = Q_c(c)`.
#[derive(Debug, Clone)]
pub struct LimitPath {
    pub tau: Vec<f64>,
    pub c: Vec<f64>,
    /// First slow time at which `c` left the table range, after which the rate
    /// is taken at the nearest table end.
    pub clipped_at: Option<f64>,
}

/// Default slow-time step.
pub const SLOW_STEP: f64 = 1e-3;

/// RK4 in slow time with the rate interpolated by a cubic spline through the
/// table; `stride` steps between stored samples.
pub fn integrate_limit_ode(table: &[(f64, f64)], c_star: f64, tau_end: f64, dtau: f64, stride: usize) -> Result<LimitPath> {
    let mut sorted = table.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let spline = CubicSpline::new(sorted.iter().map(|v| v.0).collect(), sorted.iter().map(|v| v.1).collect())?;
    let (lo, hi) = spline.range();
    let (n, h) = crate::ode::step_count(dtau, tau_end);
    let stride = stride.max(1);
    let mut out = LimitPath { tau: vec![0.0], c: vec![c_star], clipped_at: None };
    let mut clipped = !(lo..=hi).contains(&c_star);
    if clipped {
        out.clipped_at = Some(0.0);
    }
    let mut y = [c_star];
    let mut rk = Rk4::new(1);
    for i in 0..n {
        let t0 = i as f64 * h;
        rk.step(t0, h, &mut y, |_, _, y, dy| {
            if !(lo..=hi).contains(&y[0]) {
                clipped = true;
            }
            dy[0] = spline.eval(y[0]);
        });
        if clipped && out.clipped_at.is_none() {
            out.clipped_at = Some(t0);
        }
        if (i + 1) % stride == 0 || i + 1 == n {
            out.tau.push((i + 1) as f64 * h);
            out.c.push(y[0]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_reproduces_cubics_inside_and_clamps() {
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let s = CubicSpline::new(x, y).unwrap();
        assert!((s.eval(1.37) - 1.74).abs() < 1e-12);
        assert!((s.eval(-5.0) + 1.0).abs() < 1e-12);
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let s = CubicSpline::new(xs.clone(), xs.iter().map(|v| v.sin()).collect()).unwrap();
        assert!((s.eval(2.05) - 2.05f64.sin()).abs() < 1e-5);
    }

    #[test]
    fn zero_rate_gives_constant_path() {
        let table: Vec<(f64, f64)> = rate_grid(1.004, 1.03, 8).into_iter().map(|c| (c, 0.0)).collect();
        let p = integrate_limit_ode(&table, 1.015, 1.0, SLOW_STEP, 100).unwrap();
        assert!(p.c.iter().all(|&c| c == 1.015));
        assert!(p.clipped_at.is_none());
    }

    #[test]
    fn negative_rate_decreases_and_clips() {
        let table: Vec<(f64, f64)> = rate_grid(1.004, 1.03, 8).into_iter().map(|c| (c, -(c - 1.0).powi(2))).collect();
        let p = integrate_limit_ode(&table, 1.015, 50.0, SLOW_STEP, 1000).unwrap();
        assert!(p.c.windows(2).all(|w| w[1] < w[0]));
        // Exact solution of c' = -(c - 1)^2.
        let exact = 1.0 + 1.0 / (1.0 / 0.015 + 50.0);
        assert!((p.c.last().unwrap() - exact).abs() < 1e-6);
        let far = integrate_limit_ode(&table, 1.015, 400.0, SLOW_STEP, 1000).unwrap();
        assert!(far.clipped_at.is_some());
    }

    #[test]
    fn rate_grid_is_geometric() {
        let g = rate_grid(1.004, 1.03, 8);
        assert_eq!(g.len(), 8);
        assert!((g[0] - 1.004).abs() < 1e-15 && (g[7] - 1.03).abs() < 1e-15);
        let r1 = (g[1] - 1.0) / (g[0] - 1.0);
        let r2 = (g[7] - 1.0) / (g[6] - 1.0);
        assert!((r1 - r2).abs() < 1e-12);
    }
}
