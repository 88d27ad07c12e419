//! Traveling-wave profiles `phi_c = (r_c, p_c)` of the homogeneous lattice.
//!
//! Profiles solve `c^2 r'' = d+ d- (r + r^2)` on a periodic grid by Petviashvili
//! iteration; `p` follows from `-c r' = d+ p`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{dot, sum_exclusive, sum_inclusive};
use crate::spectral::{product_coeffs, SpectralGrid};

pub const MAX_SPEED: f64 = 1.1;
const MAX_ITERATIONS: usize = 500;
const STEP_TOL: f64 = 1e-13;

pub fn long_wave_parameter(c: f64) -> f64 {
    (24.0 * (c - 1.0)).sqrt()
}

/// Leading-order long-wave shape `eps^2/8 sech^2(eps x / 2)`.
pub fn kdv_shape(c: f64, x: f64) -> f64 {
    let eps = long_wave_parameter(c);
    let s = 1.0 / (0.5 * eps * x).cosh();
    eps * eps / 8.0 * s * s
}

fn check_speed(c: f64) -> Result<()> {
    if !(c > 1.0 && c <= MAX_SPEED) {
        return Err(Error::Domain(format!("wave speed {c} outside (1, {MAX_SPEED}]")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ProfileSolution {
    pub c: f64,
    pub epsilon: f64,
    pub grid: Arc<SpectralGrid>,
    pub rhat: Vec<Complex64>,
    pub phat: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ProfileSolution {
    pub fn half_period(&self) -> f64 {
        self.grid.half_period() as f64
    }

    /// `(r_c(x), p_c(x))` by direct summation of the series.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        let l = self.half_period();
        if !(x.abs() <= l) {
            return Err(Error::Domain(format!("x = {x} outside [-{l}, {l}]")));
        }
        Ok((self.grid.eval(&self.rhat, x), self.grid.eval(&self.phat, x)))
    }

    pub fn r_samples(&self) -> Vec<f64> {
        self.grid.to_samples(&self.rhat)
    }

    pub fn p_samples(&self) -> Vec<f64> {
        self.grid.to_samples(&self.phat)
    }

    pub fn amplitude(&self) -> f64 {
        self.grid.eval(&self.rhat, 0.0)
    }

    /// Pointwise residual of the advance-delay equation on the grid.
    pub fn residual_samples(&self) -> Vec<f64> {
        residual_samples(&self.grid, self.c, &self.rhat)
    }
}

fn residual_samples(grid: &SpectralGrid, c: f64, rhat: &[Complex64]) -> Vec<f64> {
    let sq = product_coeffs(grid, rhat, rhat);
    let res: Vec<Complex64> = grid
        .wavenumbers()
        .iter()
        .enumerate()
        .map(|(l, &k)| {
            let s = 4.0 * (0.5 * k).sin().powi(2);
            -c * c * k * k * rhat[l] + s * (rhat[l] + sq[l])
        })
        .collect();
    grid.to_samples(&res)
}

/// Multiplier of `-c r' = d+ p`, regularized on the modes the profile does not occupy.
fn momentum_multiplier(c: f64, k: f64) -> Complex64 {
    if k == 0.0 {
        return Complex64::new(-c, 0.0);
    }
    let s = (0.5 * k).sin();
    if s.abs() < 1e-7 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(-c * 0.5 * k / s, -0.5 * k)
}

pub fn momentum_from_strain(grid: &SpectralGrid, c: f64, rhat: &[Complex64]) -> Vec<Complex64> {
    grid.wavenumbers().iter().zip(rhat).map(|(&k, a)| a * momentum_multiplier(c, k)).collect()
}

/// Petviashvili solve on the grid with `n` points and half-period `l`.
pub fn solve_profile(c: f64, n: usize, l: usize) -> Result<ProfileSolution> {
    check_speed(c)?;
    let eps = long_wave_parameter(c);
    if (l as f64) < 40.0 / eps {
        return Err(Error::Domain(format!("half-period {l} below 40/eps = {:.1}", 40.0 / eps)));
    }
    if n < 1024 {
        return Err(Error::Domain(format!("grid size {n} below 1024")));
    }
    let grid = Arc::new(SpectralGrid::new(l, n)?);
    solve_on_grid(c, grid)
}

/// Solve on the default grid for the speed.
pub fn solve_profile_auto(c: f64) -> Result<ProfileSolution> {
    check_speed(c)?;
    solve_on_grid(c, Arc::new(SpectralGrid::for_speed(c)?))
}

pub fn solve_on_grid(c: f64, grid: Arc<SpectralGrid>) -> Result<ProfileSolution> {
    check_speed(c)?;
    let eps = long_wave_parameter(c);
    let n = grid.len();
    let mult: Vec<f64> = grid
        .wavenumbers()
        .iter()
        .map(|&k| {
            if k == 0.0 {
                return 1.0 / (c * c - 1.0);
            }
            let s = 4.0 * (0.5 * k).sin().powi(2);
            if s < 1e-14 * k * k {
                0.0
            } else {
                s / (c * c * k * k - s)
            }
        })
        .collect();
    let mut r: Vec<f64> = (0..n).map(|i| kdv_shape(c, grid.x(i))).collect();
    let mut rhat = grid.to_coeffs(&r);
    for v in rhat.iter_mut() {
        v.im = 0.0;
    }
    let mut last_change = f64::INFINITY;
    let mut factor = f64::NAN;
    for it in 1..=MAX_ITERATIONS {
        let sq: Vec<f64> = r.iter().map(|v| v * v).collect();
        let sqhat = grid.to_coeffs(&sq);
        let mut num = 0.0;
        let mut den = 0.0;
        for l in 0..n {
            if mult[l] != 0.0 {
                num += rhat[l].norm_sqr() / mult[l];
            }
            den += (rhat[l].conj() * sqhat[l]).re;
        }
        factor = num / den;
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::Solver { c, detail: format!("stabilizing factor {factor} at iteration {it}") });
        }
        let f2 = factor * factor;
        for l in 0..n {
            rhat[l] = Complex64::new(f2 * mult[l] * sqhat[l].re, 0.0);
        }
        let next = grid.to_samples(&rhat);
        last_change = next.iter().zip(&r).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        r = next;
        if last_change <= STEP_TOL {
            let phat = momentum_from_strain(&grid, c, &rhat);
            let residual = residual_samples(&grid, c, &rhat).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Ok(ProfileSolution { c, epsilon: eps, grid, rhat, phat, iterations: it, residual });
        }
    }
    Err(Error::Solver {
        c,
        detail: format!("no convergence in {MAX_ITERATIONS} iterations (last change {last_change:.3e}, factor {factor})"),
    })
}

/// Profile cache keyed by `(c, N, L)`; concurrent readers, exclusive inserts.
#[derive(Default)]
pub struct ProfileCache {
    entries: RwLock<HashMap<(u64, usize, usize), Arc<ProfileSolution>>>,
}

impl ProfileCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, c: f64, n: usize, l: usize) -> Result<Arc<ProfileSolution>> {
        let key = (c.to_bits(), n, l);
        if let Some(p) = self.entries.read().expect("profile cache poisoned").get(&key) {
            return Ok(p.clone());
        }
        let sol = Arc::new(solve_profile(c, n, l)?);
        let mut w = self.entries.write().expect("profile cache poisoned");
        Ok(w.entry(key).or_insert(sol).clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("profile cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Profile at one speed together with its first and second c-derivatives.
#[derive(Debug, Clone)]
pub struct ProfileJet {
    pub c: f64,
    pub epsilon: f64,
    pub grid: Arc<SpectralGrid>,
    pub r: Vec<Complex64>,
    pub p: Vec<Complex64>,
    pub dc_r: Vec<Complex64>,
    pub dc_p: Vec<Complex64>,
    pub dcc_r: Vec<Complex64>,
    pub dcc_p: Vec<Complex64>,
}

/// c-derivatives of a profile plus spectral x-derivatives on demand.
pub type ProfileDerivatives = ProfileJet;

impl ProfileJet {
    /// Coefficients of `d^k/dxi^k` applied to the shifted field `f(x - xi)`,
    /// expressed in the unshifted variable.
    pub fn dxi(&self, coeffs: &[Complex64], order: u32) -> Vec<Complex64> {
        let d = self.grid.derivative(coeffs, order);
        if order % 2 == 1 {
            d.into_iter().map(|v| -v).collect()
        } else {
            d
        }
    }

    pub fn d_xi_r(&self) -> Vec<Complex64> {
        self.dxi(&self.r, 1)
    }

    pub fn d_xi_p(&self) -> Vec<Complex64> {
        self.dxi(&self.p, 1)
    }

    pub fn d_c_r(&self) -> &[Complex64] {
        &self.dc_r
    }

    pub fn d_c_p(&self) -> &[Complex64] {
        &self.dc_p
    }

    pub fn half_period(&self) -> usize {
        self.grid.half_period()
    }

    /// Samples on the grid of `(r, p, dc_r, dc_p)`.
    pub fn samples(&self) -> [Vec<f64>; 4] {
        [
            self.grid.to_samples(&self.r),
            self.grid.to_samples(&self.p),
            self.grid.to_samples(&self.dc_r),
            self.grid.to_samples(&self.dc_p),
        ]
    }

    /// Coefficients of `r^2`, `d_c(r^2)` and `d_cc(r^2)`.
    pub fn square_coeffs(&self) -> [Vec<Complex64>; 3] {
        let g = &self.grid;
        let r = g.to_samples(&self.r);
        let dr = g.to_samples(&self.dc_r);
        let ddr = g.to_samples(&self.dcc_r);
        let sq: Vec<f64> = r.iter().map(|v| v * v).collect();
        let dsq: Vec<f64> = r.iter().zip(&dr).map(|(a, b)| 2.0 * a * b).collect();
        let ddsq: Vec<f64> = (0..r.len()).map(|i| 2.0 * dr[i] * dr[i] + 2.0 * r[i] * ddr[i]).collect();
        [g.to_coeffs(&sq), g.to_coeffs(&dsq), g.to_coeffs(&ddsq)]
    }

    /// `H_0(phi_c)` as an integral over the line.
    pub fn energy(&self) -> f64 {
        let g = &self.grid;
        let r = g.to_samples(&self.r);
        let p = g.to_samples(&self.p);
        let dens: Vec<f64> = r.iter().zip(&p).map(|(r, p)| 0.5 * p * p + 0.5 * r * r + r * r * r / 3.0).collect();
        g.integral_of_samples(&dens)
    }

    /// `dH_0/dc` from the c-derivatives.
    pub fn energy_slope(&self) -> f64 {
        let g = &self.grid;
        let r = g.to_samples(&self.r);
        let p = g.to_samples(&self.p);
        let dr = g.to_samples(&self.dc_r);
        let dp = g.to_samples(&self.dc_p);
        let dens: Vec<f64> = (0..r.len()).map(|i| p[i] * dp[i] + (r[i] + r[i] * r[i]) * dr[i]).collect();
        g.integral_of_samples(&dens)
    }

    /// `d^2 H_0/dc^2` from the c-derivatives.
    pub fn energy_curvature(&self) -> f64 {
        let g = &self.grid;
        let r = g.to_samples(&self.r);
        let p = g.to_samples(&self.p);
        let dr = g.to_samples(&self.dc_r);
        let dp = g.to_samples(&self.dc_p);
        let ddr = g.to_samples(&self.dcc_r);
        let ddp = g.to_samples(&self.dcc_p);
        let dens: Vec<f64> = (0..r.len())
            .map(|i| dp[i] * dp[i] + p[i] * ddp[i] + (1.0 + 2.0 * r[i]) * dr[i] * dr[i] + (r[i] + r[i] * r[i]) * ddr[i])
            .collect();
        g.integral_of_samples(&dens)
    }

    pub fn alphas(&self) -> AlphaCoefficients {
        let alpha0 = self.energy_slope() / self.c;
        let i0 = self.grid.integral(&self.r);
        let i1 = self.grid.integral(&self.dc_r);
        AlphaCoefficients { alpha0, alpha1: -i1 * (i0 + self.c * i1) }
    }

    /// c-derivatives of `(alpha0, alpha1)`.
    pub fn alpha_slopes(&self) -> (f64, f64) {
        let c = self.c;
        let a0 = self.energy_slope() / c;
        let da0 = (self.energy_curvature() - a0) / c;
        let i0 = self.grid.integral(&self.r);
        let i1 = self.grid.integral(&self.dc_r);
        let i2 = self.grid.integral(&self.dcc_r);
        let da1 = -i2 * (i0 + c * i1) - i1 * (2.0 * i1 + c * i2);
        (da0, da1)
    }
}

/// Finite-difference c-derivatives from solves at `c - dc`, `c`, `c + dc` on a
/// shared grid.
pub fn profile_derivatives(c: f64, dc: f64) -> Result<ProfileJet> {
    check_speed(c)?;
    if !(dc > 0.0) || c - dc <= 1.0 || c + dc > MAX_SPEED {
        return Err(Error::Domain(format!("step {dc} leaves the speed range around {c}")));
    }
    let grid = Arc::new(SpectralGrid::for_speed(c - dc)?);
    let lo = solve_on_grid(c - dc, grid.clone())?;
    let mid = solve_on_grid(c, grid.clone())?;
    let hi = solve_on_grid(c + dc, grid.clone())?;
    let first = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
        a.iter().zip(b).map(|(x, y)| (y - x) / (2.0 * dc)).collect()
    };
    let second = |a: &[Complex64], m: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
        (0..a.len()).map(|i| (b[i] - 2.0 * m[i] + a[i]) / (dc * dc)).collect()
    };
    Ok(ProfileJet {
        c,
        epsilon: mid.epsilon,
        dc_r: first(&lo.rhat, &hi.rhat),
        dc_p: first(&lo.phat, &hi.phat),
        dcc_r: second(&lo.rhat, &mid.rhat, &hi.rhat),
        dcc_p: second(&lo.phat, &mid.phat, &hi.phat),
        r: mid.rhat,
        p: mid.phat,
        grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaCoefficients {
    pub alpha0: f64,
    pub alpha1: f64,
}

/// `Omega(f, g)` for fields sampled on a common lattice window.
pub fn omega_slices(fr: &[f64], fp: &[f64], gr: &[f64], gp: &[f64]) -> f64 {
    dot(&sum_inclusive(fp), gr) + dot(&sum_exclusive(fr), gp)
}

/// Pairings `(Omega(d_xi phi, d_c phi), Omega(d_c phi, d_c phi))` on the lattice.
pub fn alphas_by_pairing(jet: &ProfileJet) -> AlphaCoefficients {
    let l = jet.half_period() as i64;
    let s = jet.grid.lattice_sampler(0.0, -l, 2 * l as usize);
    let xr = s.sample(&jet.r, 1);
    let xp = s.sample(&jet.p, 1);
    let cr = s.sample(&jet.dc_r, 0);
    let cp = s.sample(&jet.dc_p, 0);
    AlphaCoefficients { alpha0: omega_slices(&xr, &xp, &cr, &cp), alpha1: omega_slices(&cr, &cp, &cr, &cp) }
}

/// `alpha0 = (1/c) dH_0/dc` and `alpha1 = -(d/dc int r)(d/dc (c int r))` by
/// centered differences along the family, checked against the pairings.
pub fn compute_alphas(c: f64) -> Result<AlphaCoefficients> {
    compute_alphas_with_step(c, 1e-4)
}

pub fn compute_alphas_with_step(c: f64, dc: f64) -> Result<AlphaCoefficients> {
    check_speed(c)?;
    let grid = Arc::new(SpectralGrid::for_speed(c - dc)?);
    let lo = solve_on_grid(c - dc, grid.clone())?;
    let hi = solve_on_grid(c + dc, grid.clone())?;
    let energy = |s: &ProfileSolution| {
        let r = s.r_samples();
        let p = s.p_samples();
        let dens: Vec<f64> = r.iter().zip(&p).map(|(r, p)| 0.5 * p * p + 0.5 * r * r + r * r * r / 3.0).collect();
        grid.integral_of_samples(&dens)
    };
    let dh = (energy(&hi) - energy(&lo)) / (2.0 * dc);
    let mass = |s: &ProfileSolution| grid.integral(&s.rhat);
    let dm = (mass(&hi) - mass(&lo)) / (2.0 * dc);
    let dcm = ((c + dc) * mass(&hi) - (c - dc) * mass(&lo)) / (2.0 * dc);
    let alpha0 = dh / c;
    let alpha1 = -dm * dcm;
    if !(alpha0 > 0.0) {
        return Err(Error::Consistency(format!("alpha0 = {alpha0} is not positive at c = {c}")));
    }
    let jet = profile_derivatives(c, dc)?;
    let paired = alphas_by_pairing(&jet);
    let rel0 = (paired.alpha0 - alpha0).abs() / alpha0;
    let rel1 = (paired.alpha1 - alpha1).abs() / alpha1.abs().max(alpha0);
    if rel0 > 1e-4 || rel1 > 1e-4 {
        return Err(Error::Consistency(format!(
            "alpha routes disagree at c = {c}: energy ({alpha0}, {alpha1}) vs pairing ({}, {})",
            paired.alpha0, paired.alpha1
        )));
    }
    Ok(AlphaCoefficients { alpha0, alpha1 })
}

const PANEL_NODES: usize = 16;
const PANEL_BASE: f64 = 2e-4;
const PANEL_RATIO: f64 = 1.2;

struct Panel {
    lo: f64,
    hi: f64,
    grid: Arc<SpectralGrid>,
    /// Chebyshev coefficients in the panel variable, per node order, for r and p.
    r: Vec<Vec<Complex64>>,
    p: Vec<Vec<Complex64>>,
}

impl Panel {
    fn build(lo: f64, hi: f64) -> Result<Panel> {
        let grid = Arc::new(SpectralGrid::for_speed(lo)?);
        let n = PANEL_NODES;
        let nodes: Vec<f64> =
            (0..n).map(|i| 0.5 * (lo + hi) + 0.5 * (hi - lo) * (std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()).collect();
        let sols: Vec<ProfileSolution> =
            nodes.iter().map(|&c| solve_on_grid(c, grid.clone())).collect::<Result<_>>()?;
        let len = grid.len();
        let mut r = vec![vec![Complex64::new(0.0, 0.0); len]; n];
        let mut p = vec![vec![Complex64::new(0.0, 0.0); len]; n];
        for k in 0..n {
            for (i, sol) in sols.iter().enumerate() {
                let mut w = 2.0 / (n - 1) as f64 * (std::f64::consts::PI * (k * i) as f64 / (n - 1) as f64).cos();
                if i == 0 || i == n - 1 {
                    w *= 0.5;
                }
                if k == 0 || k == n - 1 {
                    w *= 0.5;
                }
                for l in 0..len {
                    r[k][l] += sol.rhat[l] * w;
                    p[k][l] += sol.phat[l] * w;
                }
            }
        }
        Ok(Panel { lo, hi, grid, r, p })
    }

    fn jet(&self, c: f64) -> ProfileJet {
        let n = PANEL_NODES;
        let s = (2.0 * c - self.lo - self.hi) / (self.hi - self.lo);
        let ds = 2.0 / (self.hi - self.lo);
        let mut t = vec![0.0; n];
        let mut dt = vec![0.0; n];
        let mut ddt = vec![0.0; n];
        t[0] = 1.0;
        t[1] = s;
        dt[1] = 1.0;
        for k in 1..n - 1 {
            t[k + 1] = 2.0 * s * t[k] - t[k - 1];
            dt[k + 1] = 2.0 * t[k] + 2.0 * s * dt[k] - dt[k - 1];
            ddt[k + 1] = 4.0 * dt[k] + 2.0 * s * ddt[k] - ddt[k - 1];
        }
        let len = self.grid.len();
        let combine = |coef: &[Vec<Complex64>], w: &[f64], scale: f64| -> Vec<Complex64> {
            let mut out = vec![Complex64::new(0.0, 0.0); len];
            for k in 0..n {
                let wk = w[k] * scale;
                if wk == 0.0 {
                    continue;
                }
                for l in 0..len {
                    out[l] += coef[k][l] * wk;
                }
            }
            out
        };
        ProfileJet {
            c,
            epsilon: long_wave_parameter(c),
            grid: self.grid.clone(),
            r: combine(&self.r, &t, 1.0),
            p: combine(&self.p, &t, 1.0),
            dc_r: combine(&self.r, &dt, ds),
            dc_p: combine(&self.p, &dt, ds),
            dcc_r: combine(&self.r, &ddt, ds * ds),
            dcc_p: combine(&self.p, &ddt, ds * ds),
        }
    }
}

/// Chebyshev interpolation of the profile family in `c`, on panels whose widths
/// grow geometrically in `c - 1`. Panels are solved lazily and shared.
#[derive(Default)]
pub struct ProfileFamily {
    panels: RwLock<HashMap<i32, Arc<Panel>>>,
}

impl ProfileFamily {
    pub fn new() -> Self {
        Self::default()
    }

    fn panel_index(c: f64) -> i32 {
        ((c - 1.0) / PANEL_BASE).ln().div_euclid(PANEL_RATIO.ln()) as i32
    }

    fn panel(&self, c: f64) -> Result<Arc<Panel>> {
        check_speed(c)?;
        let idx = Self::panel_index(c);
        if let Some(p) = self.panels.read().expect("family poisoned").get(&idx) {
            return Ok(p.clone());
        }
        let lo = 1.0 + PANEL_BASE * PANEL_RATIO.powi(idx);
        let hi = 1.0 + PANEL_BASE * PANEL_RATIO.powi(idx + 1);
        let panel = Arc::new(Panel::build(lo, hi.min(MAX_SPEED + 1e-3))?);
        let mut w = self.panels.write().expect("family poisoned");
        Ok(w.entry(idx).or_insert(panel).clone())
    }

    /// Profile and c-derivatives at `c`.
    pub fn jet(&self, c: f64) -> Result<ProfileJet> {
        Ok(self.panel(c)?.jet(c))
    }

    /// Speed range of the panel containing `c`.
    pub fn panel_range(&self, c: f64) -> Result<(f64, f64)> {
        let p = self.panel(c)?;
        Ok((p.lo, p.hi))
    }
}
