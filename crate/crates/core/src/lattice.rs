//! Lattice fields, difference operators, the Hamiltonian and direct RK4 integration.

use crate::error::{Error, Result};
use crate::ode::{all_finite, step_count, Rk4};

/// Default threshold for the boundary-negligibility checks.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Relative displacement `r` and velocity `p` on the sites `j_min .. j_min + W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub j_min: i64,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
}

impl LatticeField {
    pub fn zeros(j_min: i64, width: usize) -> Self {
        LatticeField { j_min, r: vec![0.0; width], p: vec![0.0; width] }
    }

    pub fn new(j_min: i64, r: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if r.len() != p.len() {
            return Err(Error::InvalidWindow(format!("r has {} sites, p has {}", r.len(), p.len())));
        }
        if r.len() < 3 {
            return Err(Error::InvalidWindow(format!("window of {} sites is too small", r.len())));
        }
        Ok(LatticeField { j_min, r, p })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// One past the last site.
    pub fn j_end(&self) -> i64 {
        self.j_min + self.r.len() as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.j_min..self.j_end()
    }

    pub fn index(&self, j: i64) -> Option<usize> {
        let k = j - self.j_min;
        (k >= 0 && (k as usize) < self.r.len()).then_some(k as usize)
    }

    pub fn same_window(&self, other: &LatticeField) -> bool {
        self.j_min == other.j_min && self.len() == other.len()
    }

    pub fn dot(&self, other: &LatticeField) -> f64 {
        dot(&self.r, &other.r) + dot(&self.p, &other.p)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.r.iter().chain(self.p.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Norm with weight `exp(a (j - center))`.
    pub fn weighted_norm(&self, a: f64, center: f64) -> f64 {
        let mut s = 0.0;
        for (k, j) in self.sites().enumerate() {
            let w = (a * (j as f64 - center)).exp();
            s += w * w * (self.r[k] * self.r[k] + self.p[k] * self.p[k]);
        }
        s.sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.r.iter_mut().chain(self.p.iter_mut()).for_each(|v| *v *= s);
    }

    /// `self += s * other` on a shared window.
    pub fn axpy(&mut self, s: f64, other: &LatticeField) {
        assert!(self.same_window(other));
        for (a, b) in self.r.iter_mut().zip(&other.r) {
            *a += s * b;
        }
        for (a, b) in self.p.iter_mut().zip(&other.p) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &LatticeField) -> LatticeField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Largest magnitude on the outermost `pad` sites of each edge.
    pub fn boundary_mass(&self, pad: usize) -> (f64, f64) {
        let w = self.len();
        let pad = pad.min(w);
        let edge = |range: std::ops::Range<usize>| {
            range.fold(0.0f64, |m, k| m.max(self.r[k].abs()).max(self.p[k].abs()))
        };
        (edge(0..pad), edge(w - pad..w))
    }

    pub fn is_boundary_negligible(&self, pad: usize, tol: f64) -> bool {
        let (l, r) = self.boundary_mass(pad);
        l <= tol && r <= tol
    }

    /// Interleaved-free flat layout `[r..., p...]` used by the integrators.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.len());
        v.extend_from_slice(&self.r);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_flat(j_min: i64, y: &[f64]) -> Self {
        let w = y.len() / 2;
        LatticeField { j_min, r: y[..w].to_vec(), p: y[w..].to_vec() }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Heterogeneity realization `kappa` on a window, with strength `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpringCoefficients {
    pub j_min: i64,
    pub kappa: Vec<f64>,
    pub sigma: f64,
    pub alpha_support: f64,
}

impl SpringCoefficients {
    pub fn new(j_min: i64, kappa: Vec<f64>, sigma: f64, alpha_support: f64) -> Result<Self> {
        if !(alpha_support > 0.0) {
            return Err(Error::Config(format!("support half-width {alpha_support} must be positive")));
        }
        if !(sigma >= 0.0) || sigma * alpha_support >= 1.0 {
            return Err(Error::Config(format!(
                "sigma = {sigma} with support {alpha_support} violates sigma * alpha < 1"
            )));
        }
        if let Some(v) = kappa.iter().find(|v| !(v.abs() <= alpha_support)) {
            return Err(Error::Config(format!("kappa value {v} outside [-{alpha_support}, {alpha_support}]")));
        }
        Ok(SpringCoefficients { j_min, kappa, sigma, alpha_support })
    }

    /// Unperturbed lattice on a window.
    pub fn homogeneous(j_min: i64, width: usize) -> Self {
        SpringCoefficients { j_min, kappa: vec![0.0; width], sigma: 0.0, alpha_support: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn kappa_at(&self, j: i64) -> f64 {
        let k = j - self.j_min;
        if k >= 0 && (k as usize) < self.kappa.len() {
            self.kappa[k as usize]
        } else {
            0.0
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        SpringCoefficients::new(self.j_min, self.kappa.clone(), sigma, self.alpha_support)
    }

    /// Spring stiffness `1 + sigma kappa(j)` per site.
    pub fn stiffness(&self) -> Vec<f64> {
        self.kappa.iter().map(|k| 1.0 + self.sigma * k).collect()
    }

    pub fn check_window(&self, u: &LatticeField) -> Result<()> {
        if u.j_min != self.j_min || u.len() != self.len() {
            return Err(Error::WindowMismatch {
                field: u.j_min,
                field_len: u.len(),
                coeffs: self.j_min,
                coeffs_len: self.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub value: f64,
}

/// Window `[-t_end - pad, ceil(c t_end) + pad]` as `(j_min, width)`.
pub fn simulation_window(c_star: f64, t_end: f64, pad: usize) -> (i64, usize) {
    let lo = -(t_end.ceil() as i64) - pad as i64;
    let hi = (c_star * t_end).ceil() as i64 + pad as i64;
    (lo, (hi - lo + 1) as usize)
}

/// `out(j) = f(j+1) - f(j)` with zero extension on the right.
pub fn diff_forward(f: &[f64]) -> Result<Vec<f64>> {
    if f.len() < 2 {
        return Err(Error::InvalidWindow(format!("difference needs 2 sites, got {}", f.len())));
    }
    let mut out = vec![0.0; f.len()];
    diff_forward_into(f, &mut out);
    Ok(out)
}

/// `out(j) = f(j) - f(j-1)` with zero extension on the left.
pub fn diff_backward(f: &[f64]) -> Result<Vec<f64>> {
    if f.len() < 2 {
        return Err(Error::InvalidWindow(format!("difference needs 2 sites, got {}", f.len())));
    }
    let mut out = vec![0.0; f.len()];
    diff_backward_into(f, &mut out);
    Ok(out)
}

#[inline]
pub fn diff_forward_into(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    for k in 0..n - 1 {
        out[k] = f[k + 1] - f[k];
    }
    out[n - 1] = -f[n - 1];
}

#[inline]
pub fn diff_backward_into(f: &[f64], out: &mut [f64]) {
    out[0] = f[0];
    for k in 1..f.len() {
        out[k] = f[k] - f[k - 1];
    }
}

/// Inclusive prefix sum, the left inverse of the backward difference.
pub fn sum_inclusive(f: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    f.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Exclusive prefix sum, the left inverse of the forward difference.
pub fn sum_exclusive(f: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    f.iter()
        .map(|v| {
            let out = acc;
            acc += v;
            out
        })
        .collect()
}

/// `(r, p) -> (d+ p, d- r)`.
pub fn apply_j(u: &LatticeField) -> LatticeField {
    let mut out = LatticeField::zeros(u.j_min, u.len());
    diff_forward_into(&u.p, &mut out.r);
    diff_backward_into(&u.r, &mut out.p);
    out
}

/// Formal inverse `(r, p) -> (d-^{-1} p, d+^{-1} r)` by left prefix sums; the
/// field must be negligible on the left `pad` sites.
pub fn apply_j_inverse(u: &LatticeField, pad: usize, tol: f64) -> Result<LatticeField> {
    let (left, _) = u.boundary_mass(pad);
    if left > tol {
        return Err(Error::Truncation { mass: left, tol });
    }
    Ok(apply_j_inverse_unchecked(u))
}

pub fn apply_j_inverse_unchecked(u: &LatticeField) -> LatticeField {
    LatticeField { j_min: u.j_min, r: sum_inclusive(&u.p), p: sum_exclusive(&u.r) }
}

/// Right-hand side of the heterogeneous lattice in flat form.
#[inline]
pub fn fput_rhs_flat(stiffness: &[f64], y: &[f64], dy: &mut [f64], scratch: &mut [f64]) {
    let w = stiffness.len();
    let (r, p) = y.split_at(w);
    let (dr, dp) = dy.split_at_mut(w);
    diff_forward_into(p, dr);
    for k in 0..w {
        scratch[k] = stiffness[k] * r[k] + r[k] * r[k];
    }
    diff_backward_into(&scratch[..w], dp);
}

pub fn fput_rhs(u: &LatticeField, coeffs: &SpringCoefficients) -> Result<LatticeField> {
    coeffs.check_window(u)?;
    let y = u.to_flat();
    let mut dy = vec![0.0; y.len()];
    let mut scratch = vec![0.0; u.len()];
    fput_rhs_flat(&coeffs.stiffness(), &y, &mut dy, &mut scratch);
    Ok(LatticeField::from_flat(u.j_min, &dy))
}

pub fn hamiltonian(u: &LatticeField, coeffs: &SpringCoefficients) -> Result<Energy> {
    coeffs.check_window(u)?;
    let mut h = 0.0;
    for k in 0..u.len() {
        let r = u.r[k];
        let p = u.p[k];
        h += 0.5 * p * p + 0.5 * (1.0 + coeffs.sigma * coeffs.kappa[k]) * r * r + r * r * r / 3.0;
    }
    Ok(Energy { value: h })
}

/// Fixed-step RK4 of the lattice from `0` to `t_end`. A negative `dt` integrates
/// backwards in time. The observer sees `(t, state)` at step 0 and every `stride`
/// steps, and always at the final time.
pub fn integrate<O>(
    u0: &LatticeField,
    coeffs: &SpringCoefficients,
    dt: f64,
    t_end: f64,
    stride: usize,
    mut observer: O,
) -> Result<LatticeField>
where
    O: FnMut(f64, &LatticeField) -> Result<()>,
{
    coeffs.check_window(u0)?;
    if !(dt != 0.0 && dt.abs() <= 0.5) {
        return Err(Error::Config(format!("time step {dt} outside (0, 0.5]")));
    }
    if !(t_end >= 0.0) {
        return Err(Error::Config(format!("negative end time {t_end}")));
    }
    let stride = stride.max(1);
    let (n, h) = step_count(dt.abs(), t_end);
    let h = h * dt.signum();
    let w = u0.len();
    let stiffness = coeffs.stiffness();
    let mut y = u0.to_flat();
    let mut rk = Rk4::new(2 * w);
    let mut scratch = vec![0.0; w];
    let mut field = u0.clone();
    observer(0.0, &field)?;
    for step in 0..n {
        let t = step as f64 * h;
        rk.step(t, h, &mut y, |_, _, y, dy| fput_rhs_flat(&stiffness, y, dy, &mut scratch));
        let done = step + 1;
        if done % 100 == 0 && !all_finite(&y) {
            return Err(Error::Diverged { t: done as f64 * h });
        }
        if done % stride == 0 || done == n {
            if !all_finite(&y) {
                return Err(Error::Diverged { t: done as f64 * h });
            }
            field.r.copy_from_slice(&y[..w]);
            field.p.copy_from_slice(&y[w..]);
            observer(done as f64 * h, &field)?;
        }
    }
    if !all_finite(&y) {
        return Err(Error::Diverged { t: n as f64 * h });
    }
    Ok(LatticeField::from_flat(u0.j_min, &y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spike(j_min: i64, w: usize, at: i64) -> Vec<f64> {
        let mut v = vec![0.0; w];
        v[(at - j_min) as usize] = 1.0;
        v
    }

    #[test]
    fn forward_difference_of_ramp() {
        let out = diff_forward(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(out, vec![1.0, 1.0, 1.0, 1.0, -4.0]);
    }

    #[test]
    fn difference_of_spike() {
        let f = spike(-2, 5, 0);
        let fwd = diff_forward(&f).unwrap();
        assert_eq!(fwd, vec![0.0, 1.0, -1.0, 0.0, 0.0]);
        let bwd = diff_backward(&f).unwrap();
        assert_eq!(bwd, vec![0.0, 0.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn short_input_is_rejected() {
        assert!(matches!(diff_forward(&[1.0]), Err(Error::InvalidWindow(_))));
        assert!(matches!(diff_backward(&[]), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn composed_differences_give_laplacian() {
        let f: Vec<f64> = (0..9).map(|k| ((k * k) as f64).sin()).collect();
        let lap = diff_backward(&diff_forward(&f).unwrap()).unwrap();
        for k in 1..8 {
            assert!((lap[k] - (f[k + 1] - 2.0 * f[k] + f[k - 1])).abs() < 1e-15);
        }
    }

    #[test]
    fn j_on_basis_vectors() {
        let u = LatticeField::new(-2, vec![0.0; 5], spike(-2, 5, 0)).unwrap();
        let ju = apply_j(&u);
        assert_eq!(ju.r, vec![0.0, 1.0, -1.0, 0.0, 0.0]);
        assert_eq!(ju.p, vec![0.0; 5]);
        let u = LatticeField::new(-2, spike(-2, 5, 0), vec![0.0; 5]).unwrap();
        let ju = apply_j(&u);
        assert_eq!(ju.p, vec![0.0, 0.0, 1.0, -1.0, 0.0]);
    }

    #[test]
    fn j_inverse_of_spike_is_step() {
        let u = LatticeField::new(-3, vec![0.0; 7], spike(-3, 7, 0)).unwrap();
        let v = apply_j_inverse(&u, 2, BOUNDARY_TOL).unwrap();
        assert_eq!(v.r, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn j_inverse_rejects_left_mass() {
        let u = LatticeField::new(0, vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]).unwrap();
        assert!(matches!(apply_j_inverse(&u, 1, BOUNDARY_TOL), Err(Error::Truncation { .. })));
    }

    #[test]
    fn mean_zero_data_has_compact_exclusive_sum() {
        let f = [0.0, 0.0, 1.0, -2.0, 1.0, 0.0, 0.0];
        let s = sum_exclusive(&f);
        assert_eq!(s, vec![0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn hamiltonian_of_spike() {
        let u = LatticeField::new(-1, vec![0.0, 1.0, 0.0], vec![0.0; 3]).unwrap();
        let c0 = SpringCoefficients::homogeneous(-1, 3);
        assert!((hamiltonian(&u, &c0).unwrap().value - 5.0 / 6.0).abs() < 1e-15);
        let c1 = SpringCoefficients::new(-1, vec![0.0, 1.0, 0.0], 0.1, 1.0).unwrap();
        assert!((hamiltonian(&u, &c1).unwrap().value - (0.55 + 1.0 / 3.0)).abs() < 1e-15);
        let zero = LatticeField::zeros(-1, 3);
        assert_eq!(hamiltonian(&zero, &c1).unwrap().value, 0.0);
    }

    #[test]
    fn rhs_of_spike_with_heterogeneity() {
        let u = LatticeField::new(-2, spike(-2, 5, 0), vec![0.0; 5]).unwrap();
        let coeffs = SpringCoefficients::new(-2, vec![0.0, 0.0, 1.0, 0.0, 0.0], 0.1, 1.0).unwrap();
        let f = fput_rhs(&u, &coeffs).unwrap();
        assert_eq!(f.r, vec![0.0; 5]);
        let expected = [0.0, 0.0, 2.1, -2.1, 0.0];
        for k in 0..5 {
            assert!((f.p[k] - expected[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn window_mismatch_is_reported() {
        let u = LatticeField::zeros(0, 5);
        let coeffs = SpringCoefficients::homogeneous(1, 5);
        assert!(matches!(fput_rhs(&u, &coeffs), Err(Error::WindowMismatch { .. })));
    }

    #[test]
    fn zero_state_is_fixed() {
        let u = LatticeField::zeros(-10, 21);
        let coeffs = SpringCoefficients::new(-10, vec![0.5; 21], 0.1, 1.0).unwrap();
        let out = integrate(&u, &coeffs, 0.05, 5.0, 10, |_, _| Ok(())).unwrap();
        assert!(out.r.iter().chain(&out.p).all(|v| *v == 0.0));
    }

    #[test]
    fn divergence_is_detected() {
        let mut u = LatticeField::zeros(0, 5);
        u.r[2] = -40.0;
        let coeffs = SpringCoefficients::homogeneous(0, 5);
        let res = integrate(&u, &coeffs, 0.5, 500.0, 1, |_, _| Ok(()));
        assert!(matches!(res, Err(Error::Diverged { .. })));
    }

    #[test]
    fn invalid_coefficients_are_rejected() {
        assert!(SpringCoefficients::new(0, vec![2.0], 0.1, 1.0).is_err());
        assert!(SpringCoefficients::new(0, vec![0.5], 1.0, 1.0).is_err());
    }
}
