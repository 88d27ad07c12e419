//! Periodic spectral grids on `[-L, L)` and exact sampling of trigonometric
//! series at shifted lattice points.
//!
//! A field is stored as coefficients `a_l` of `f(x) = sum_l a_l exp(i k_l x)` with
//! `k_l = pi l / L`, `l` in FFT order. Real even fields have real coefficients.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Grid points per unit length.
pub const POINTS_PER_SITE: usize = 8;

#[derive(Clone)]
pub struct SpectralGrid {
    half_period: usize,
    n: usize,
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    lattice_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("half_period", &self.half_period).field("n", &self.n).finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.half_period == other.half_period && self.n == other.n
    }
}

impl SpectralGrid {
    /// Grid with `n` points on `[-L, L)`; `n` must be a multiple of `2L` so that
    /// integer sites are grid points.
    pub fn new(half_period: usize, n: usize) -> Result<Self> {
        if half_period == 0 || n < 4 || n % 2 != 0 || n % (2 * half_period) != 0 {
            return Err(Error::Domain(format!(
                "grid with {n} points on half-period {half_period} does not contain the integer sites"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let lattice_inv = planner.plan_fft_inverse(2 * half_period);
        let k = (0..n)
            .map(|l| {
                let ls = if l < n / 2 { l as f64 } else { l as f64 - n as f64 };
                PI * ls / half_period as f64
            })
            .collect();
        Ok(SpectralGrid { half_period, n, k, fwd, inv, lattice_inv })
    }

    /// Half-period: power of two at least `max(40/eps, 80)`; 8 points per site.
    pub fn for_speed(c: f64) -> Result<Self> {
        if !(c > 1.0) {
            return Err(Error::Domain(format!("wave speed {c} must exceed 1")));
        }
        let eps = (24.0 * (c - 1.0)).sqrt();
        let need = (40.0 / eps).max(80.0).ceil() as usize;
        let half_period = need.next_power_of_two();
        SpectralGrid::new(half_period, POINTS_PER_SITE * 2 * half_period)
    }

    pub fn half_period(&self) -> usize {
        self.half_period
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_period as f64 / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -(self.half_period as f64) + i as f64 * self.spacing()
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    fn nyquist(&self) -> usize {
        self.n / 2
    }

    pub fn to_coeffs(&self, samples: &[f64]) -> Vec<Complex64> {
        assert_eq!(samples.len(), self.n);
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        for (l, v) in buf.iter_mut().enumerate() {
            *v *= if l % 2 == 0 { scale } else { -scale };
        }
        buf
    }

    pub fn to_samples(&self, coeffs: &[Complex64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n);
        let mut buf: Vec<Complex64> =
            coeffs.iter().enumerate().map(|(l, &v)| if l % 2 == 0 { v } else { -v }).collect();
        self.inv.process(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }

    /// Direct evaluation at an arbitrary point of the torus.
    pub fn eval(&self, coeffs: &[Complex64], x: f64) -> f64 {
        coeffs.iter().zip(&self.k).map(|(a, &k)| (a * Complex64::from_polar(1.0, k * x)).re).sum()
    }

    /// Coefficients of the `order`-th x-derivative.
    pub fn derivative(&self, coeffs: &[Complex64], order: u32) -> Vec<Complex64> {
        let ny = self.nyquist();
        coeffs
            .iter()
            .zip(&self.k)
            .enumerate()
            .map(|(l, (a, &k))| if l == ny && order > 0 { Complex64::new(0.0, 0.0) } else { a * Complex64::new(0.0, k).powu(order) })
            .collect()
    }

    /// Integral over one period.
    pub fn integral(&self, coeffs: &[Complex64]) -> f64 {
        2.0 * self.half_period as f64 * coeffs[0].re
    }

    /// Integral of a pointwise function of samples, by the periodic trapezoid rule.
    pub fn integral_of_samples(&self, samples: &[f64]) -> f64 {
        samples.iter().sum::<f64>() * self.spacing()
    }

    /// Sampler for lattice sites `j_min .. j_min + width` evaluated at `j - xi`.
    pub fn lattice_sampler(&self, xi: f64, j_min: i64, width: usize) -> LatticeSampler<'_> {
        LatticeSampler::new(self, xi, j_min, width)
    }
}

/// Exact evaluation of spectral fields at the points `j - xi` of a lattice
/// window, by folding the spectrum onto the `2L` lattice frequencies.
pub struct LatticeSampler<'a> {
    grid: &'a SpectralGrid,
    base: i64,
    frac: f64,
    phase: Vec<Complex64>,
    j_min: i64,
    width: usize,
}

impl<'a> LatticeSampler<'a> {
    pub fn new(grid: &'a SpectralGrid, xi: f64, j_min: i64, width: usize) -> Self {
        let base = xi.floor() as i64;
        let frac = xi - base as f64;
        let phase = grid.k.iter().map(|&k| Complex64::from_polar(1.0, -k * frac)).collect();
        LatticeSampler { grid, base, frac, phase, j_min, width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn fold(&self, coeffs: &[Complex64], factor: impl Fn(usize, f64) -> Complex64) -> Vec<Complex64> {
        let m = 2 * self.grid.half_period;
        let n = self.grid.n;
        let mut folded = vec![Complex64::new(0.0, 0.0); m];
        for l in 0..n {
            let ls = if l < n / 2 { l as i64 } else { l as i64 - n as i64 };
            let idx = ls.rem_euclid(m as i64) as usize;
            folded[idx] += coeffs[l] * self.phase[l] * factor(l, self.grid.k[l]);
        }
        self.grid.lattice_inv.process(&mut folded);
        folded
    }

    fn spread(&self, periodic: &[Complex64], outside_left: f64, outside_right: f64, linear: Option<(f64, f64)>) -> Vec<f64> {
        let l = self.grid.half_period as i64;
        let m = 2 * l;
        (0..self.width)
            .map(|k| {
                let n = self.j_min + k as i64 - self.base;
                if n < -l {
                    outside_left
                } else if n >= l {
                    outside_right
                } else {
                    let v = periodic[n.rem_euclid(m) as usize].re;
                    match linear {
                        Some((slope, offset)) => v + offset + slope * (n as f64 - self.frac + l as f64),
                        None => v,
                    }
                }
            })
            .collect()
    }

    /// Values of `d^order/dxi^order f(j - xi)`.
    pub fn sample(&self, coeffs: &[Complex64], xi_order: u32) -> Vec<f64> {
        let ny = self.grid.n / 2;
        let periodic = self.fold(coeffs, |l, k| {
            if xi_order == 0 {
                Complex64::new(1.0, 0.0)
            } else if l == ny {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -k).powu(xi_order)
            }
        });
        self.spread(&periodic, 0.0, 0.0, None)
    }

    /// Values of `F(j - xi)` with `F(x) = int_{-L}^x f`, constant beyond the torus.
    pub fn sample_antiderivative(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let ny = self.grid.n / 2;
        let periodic = self.fold(coeffs, |l, k| {
            if l == 0 || l == ny {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0 / k)
            }
        });
        // F(-L) = 0 fixes the constant of the oscillating part.
        let mut offset = 0.0;
        for l in 1..self.grid.n {
            if l == ny {
                continue;
            }
            let b = coeffs[l] * Complex64::new(0.0, -1.0 / self.grid.k[l]);
            offset -= if l % 2 == 0 { b.re } else { -b.re };
        }
        let mean = coeffs[0].re;
        let total = self.grid.integral(coeffs);
        self.spread(&periodic, 0.0, total, Some((mean, offset)))
    }
}

/// Pointwise product of two fields via grid samples.
pub fn product_coeffs(grid: &SpectralGrid, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let sa = grid.to_samples(a);
    let sb = grid.to_samples(b);
    let prod: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| x * y).collect();
    grid.to_coeffs(&prod)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_grid() -> (SpectralGrid, Vec<Complex64>) {
        let grid = SpectralGrid::new(16, 512).unwrap();
        let samples: Vec<f64> = (0..512).map(|i| (-(grid.x(i) - 0.3).powi(2) / 2.0).exp()).collect();
        let coeffs = grid.to_coeffs(&samples);
        (grid, coeffs)
    }

    #[test]
    fn round_trip_is_exact() {
        let (grid, coeffs) = gaussian_grid();
        let back = grid.to_samples(&coeffs);
        for i in 0..grid.len() {
            assert!((back[i] - (-(grid.x(i) - 0.3).powi(2) / 2.0).exp()).abs() < 1e-14);
            assert!((grid.eval(&coeffs, grid.x(i)) - back[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn even_fields_have_real_coefficients() {
        let grid = SpectralGrid::new(8, 256).unwrap();
        let samples: Vec<f64> = (0..256).map(|i| 1.0 / (1.0 + grid.x(i).powi(2))).collect();
        let coeffs = grid.to_coeffs(&samples);
        assert!(coeffs.iter().all(|a| a.im.abs() < 1e-15));
    }

    #[test]
    fn lattice_sampling_matches_direct_evaluation() {
        let (grid, coeffs) = gaussian_grid();
        let xi = 2.37;
        let s = grid.lattice_sampler(xi, -20, 41);
        let vals = s.sample(&coeffs, 0);
        let dvals = s.sample(&coeffs, 1);
        let deriv = grid.derivative(&coeffs, 1);
        for (k, j) in (-20..21).enumerate() {
            let x = j as f64 - xi;
            let exact = if x >= -16.0 && x < 16.0 { (-(x - 0.3) * (x - 0.3) / 2.0).exp() } else { 0.0 };
            assert!((vals[k] - exact).abs() < 1e-13, "site {j}");
            if x >= -16.0 && x < 16.0 {
                assert!((dvals[k] + grid.eval(&deriv, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn antiderivative_matches_error_function_shape() {
        let (grid, coeffs) = gaussian_grid();
        let s = grid.lattice_sampler(-0.25, -20, 41);
        let vals = s.sample_antiderivative(&coeffs);
        let total = (2.0 * PI).sqrt();
        assert!((vals[40] - total).abs() < 1e-12);
        assert!(vals[0].abs() < 1e-12);
        // Sites 0 and 1 sit at x = 0.25 and 1.25.
        let m = 2000;
        let h = 1.0 / m as f64;
        let quad: f64 = (0..=m)
            .map(|i| {
                let x = 0.25 + i as f64 * h;
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * (-(x - 0.3) * (x - 0.3) / 2.0).exp()
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((vals[21] - vals[20] - quad).abs() < 1e-8);
    }
}
