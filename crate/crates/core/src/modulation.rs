//! Modulation coordinates `(gamma, c, eta)`: the decomposition of a lattice state
//! into a modulated wave plus a symplectically orthogonal deviation, and the
//! exact evolution equations for those coordinates.

use crate::error::{Error, Result};
use crate::frame::{pairing_inverse, Direction, Mat2, WaveFrame};
use crate::lattice::{apply_j_inverse, LatticeField, SpringCoefficients, BOUNDARY_TOL};
use crate::ode::{all_finite, step_count, Rk4};
use crate::profile::{long_wave_parameter, AlphaCoefficients, ProfileFamily};

/// `Omega(f, g) = <J^{-1} f, g>` with the left-boundary check on `f`.
pub fn omega(f: &LatticeField, g: &LatticeField) -> Result<f64> {
    if !f.same_window(g) {
        return Err(Error::WindowMismatch { field: f.j_min, field_len: f.len(), coeffs: g.j_min, coeffs_len: g.len() });
    }
    Ok(apply_j_inverse(f, 3, BOUNDARY_TOL)?.dot(g))
}

/// Neutral-mode matrix from the coefficients `alpha0`, `alpha1`.
pub fn matrix_a(alphas: &AlphaCoefficients) -> Result<Mat2> {
    if !(alphas.alpha0 > 0.0) {
        return Err(Error::Consistency(format!("alpha0 = {} is not positive", alphas.alpha0)));
    }
    Ok(Mat2::new(0.0, alphas.alpha0, -alphas.alpha0, alphas.alpha1))
}

pub fn matrix_a_inverse(alphas: &AlphaCoefficients) -> Mat2 {
    pairing_inverse(alphas.alpha0, alphas.alpha1)
}

/// Second-derivative pairings `B(xi, c)[eta]`.
pub fn matrix_b(frame: &WaveFrame, eta: &LatticeField) -> Mat2 {
    frame.matrix_b(eta)
}

/// Weight rate of the localized norms, a quarter of the profile decay rate.
pub fn weight_rate(c: f64) -> f64 {
    long_wave_parameter(c) / 4.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulationState {
    pub gamma: f64,
    pub c: f64,
    pub xi: f64,
    pub eta: LatticeField,
}

impl ModulationState {
    /// Undisturbed wave at speed `c` centered at the origin, on a given window.
    pub fn wave(c: f64, j_min: i64, width: usize) -> Self {
        ModulationState { gamma: 0.0, c, xi: 0.0, eta: LatticeField::zeros(j_min, width) }
    }

    /// `phi_c(. - xi) + eta` on the deviation's window.
    pub fn reconstruct(&self, frame: &WaveFrame) -> LatticeField {
        let mut u = self.eta.clone();
        frame.add_mode_to(1.0, &frame.phi, &mut u);
        u
    }
}

/// Orthogonality residuals `(Omega(d_xi phi, eta), Omega(d_c phi, eta))`.
pub fn orthogonality(frame: &WaveFrame, eta: &LatticeField) -> [f64; 2] {
    [frame.omega_with(Direction::Xi, eta), frame.omega_with(Direction::C, eta)]
}

/// `sum_j f(j) g(j)` for a frame sequence against `kappa * v` on the coefficient window.
fn weighted_with_kappa(frame: &WaveFrame, seq: &[f64], coeffs: &SpringCoefficients, v: impl Fn(i64) -> f64) -> f64 {
    let lo = frame.j_min.max(coeffs.j_min);
    let hi = frame.j_end().min(coeffs.j_min + coeffs.kappa.len() as i64);
    let mut s = 0.0;
    for j in lo..hi {
        let k = coeffs.kappa[(j - coeffs.j_min) as usize];
        if k != 0.0 {
            s += seq[(j - frame.j_min) as usize] * k * v(j);
        }
    }
    s
}

/// `(Gamma, C)`: solves `(A - B[eta]) x` equal to the quadratic pairings minus the
/// heterogeneity pairings.
pub fn gamma_c_maps(frame: &WaveFrame, eta: &LatticeField, coeffs: &SpringCoefficients) -> Result<[f64; 2]> {
    coeffs.check_window(eta)?;
    let sq: Vec<f64> = eta.r.iter().map(|v| v * v).collect();
    let mut rhs = [
        -frame.inner(&frame.d_xi.r, eta.j_min, &sq),
        -frame.inner(&frame.d_c.r, eta.j_min, &sq),
    ];
    if coeffs.sigma != 0.0 {
        let total = |j: i64| frame.value_at(&frame.phi.r, j) + eta.r[(j - eta.j_min) as usize];
        rhs[0] -= coeffs.sigma * weighted_with_kappa(frame, &frame.d_xi.r, coeffs, total);
        rhs[1] -= coeffs.sigma * weighted_with_kappa(frame, &frame.d_c.r, coeffs, total);
    }
    solve_pairing(frame.matrix_a().sub(&frame.matrix_b(eta)), rhs)
}

fn solve_pairing(m: Mat2, rhs: [f64; 2]) -> Result<[f64; 2]> {
    let inv = m
        .inverse()
        .ok_or_else(|| Error::CoherenceLost(format!("singular modulation matrix {:?}", m.a)))?;
    let out = inv.apply(rhs);
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::CoherenceLost("non-finite modulation velocities".into()));
    }
    Ok(out)
}

/// Forcing of the deviation equation on the deviation's window.
pub fn t_map(frame: &WaveFrame, eta: &LatticeField, coeffs: &SpringCoefficients, gc: [f64; 2]) -> LatticeField {
    let mut out = LatticeField::zeros(eta.j_min, eta.len());
    let w = eta.len();
    // q = eta_r^2 + sigma kappa (r_wave + eta_r); the forcing is (0, q(j) - q(j-1)).
    let mut q = vec![0.0; w];
    for (k, j) in eta.sites().enumerate() {
        let er = eta.r[k];
        q[k] = er * er + coeffs.sigma * coeffs.kappa[k] * (frame.value_at(&frame.phi.r, j) + er);
    }
    for k in 0..w {
        out.p[k] = q[k] - if k > 0 { q[k - 1] } else { 0.0 };
    }
    frame.add_mode_to(-gc[0], &frame.d_xi, &mut out);
    frame.add_mode_to(-gc[1], &frame.d_c, &mut out);
    out
}

/// `J L_{xi,c} eta` on the deviation's window, written into `out`.
pub fn linearized_flow(frame: &WaveFrame, eta_min: i64, er: &[f64], ep: &[f64], out_r: &mut [f64], out_p: &mut [f64]) {
    let w = er.len();
    for k in 0..w {
        out_r[k] = if k + 1 < w { ep[k + 1] } else { 0.0 } - ep[k];
    }
    let s = |k: usize| {
        let j = eta_min + k as i64;
        er[k] * (1.0 + 2.0 * frame.value_at(&frame.phi.r, j))
    };
    let mut prev = 0.0;
    for k in 0..w {
        let cur = s(k);
        out_p[k] = cur - prev;
        prev = cur;
    }
}

/// Fit configuration.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tol: f64,
    /// Largest admissible ratio of weighted deviation norm to weighted wave norm.
    pub coherence_ratio: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iterations: 50, tol: 1e-13, coherence_ratio: 0.2 }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub xi: f64,
    pub c: f64,
    pub eta: LatticeField,
    pub iterations: usize,
    pub residual: [f64; 2],
}

/// Initial guess from the location and height of the largest strain.
pub fn initial_guess(u: &LatticeField) -> (f64, f64) {
    let (k, _) = u.r.iter().enumerate().fold((0, f64::MIN), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
    let (mut x, mut top) = (k as f64, u.r[k]);
    if k > 0 && k + 1 < u.len() {
        let (a, b, c) = (u.r[k - 1], u.r[k], u.r[k + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            let d = 0.5 * (a - c) / den;
            x += d;
            top = b - 0.25 * (a - c) * d;
        }
    }
    (u.j_min as f64 + x, 1.0 + top / 3.0)
}

/// Newton solve of the two orthogonality conditions for `(xi, c)`; the Jacobian
/// is `B[eta] - A`, exact for the pairings.
pub fn fit_modulation(family: &ProfileFamily, u: &LatticeField, guess: (f64, f64), opts: &FitOptions) -> Result<FitResult> {
    let (mut xi, mut c) = guess;
    let eval = |xi: f64, c: f64| -> Result<(WaveFrame, LatticeField, [f64; 2])> {
        let jet = family.jet(c)?;
        let frame = WaveFrame::new(&jet, xi);
        let mut eta = u.clone();
        frame.add_mode_to(-1.0, &frame.phi, &mut eta);
        let res = orthogonality(&frame, &eta);
        Ok((frame, eta, res))
    };
    let (mut frame, mut eta, mut res) = eval(xi, c)?;
    let scale = frame.matrix_a().a[0][1].abs().max(1.0);
    let norm2 = |r: [f64; 2]| r[0] * r[0] + r[1] * r[1];
    let target = opts.tol * scale * u.norm().max(1e-3);
    if norm2(res).sqrt() <= target {
        check_coherence(&frame, &eta, opts)?;
        return Ok(FitResult { xi, c, eta, iterations: 0, residual: res });
    }
    for it in 1..=opts.max_iterations {
        let jac = frame.matrix_b(&eta).sub(&frame.matrix_a());
        let inv = jac.inverse().ok_or_else(|| Error::CoherenceLost("singular fit Jacobian".into()))?;
        let d = inv.apply(res);
        let mut lambda = 1.0;
        let accepted = loop {
            let nxi = xi - lambda * d[0];
            let nc = c - lambda * d[1];
            if nc > 1.0 && nc <= crate::profile::MAX_SPEED {
                let trial = eval(nxi, nc)?;
                if norm2(trial.2) < norm2(res) || lambda < 1e-3 {
                    xi = nxi;
                    c = nc;
                    break Some(trial);
                }
            }
            lambda *= 0.5;
            if lambda < 1e-3 {
                break None;
            }
        };
        let Some(trial) = accepted else {
            // No descent left: accept when the residual sits at the rounding floor.
            if norm2(res).sqrt() <= 1e3 * target {
                check_coherence(&frame, &eta, opts)?;
                return Ok(FitResult { xi, c, eta, iterations: it, residual: res });
            }
            return Err(Error::FitFailure { iterations: it, residual: norm2(res).sqrt() });
        };
        (frame, eta, res) = trial;
        let step = (lambda * d[0]).abs() + (lambda * d[1]).abs();
        if norm2(res).sqrt() <= target || step < 1e-14 {
            check_coherence(&frame, &eta, opts)?;
            return Ok(FitResult { xi, c, eta, iterations: it, residual: res });
        }
    }
    Err(Error::FitFailure { iterations: opts.max_iterations, residual: norm2(res).sqrt() })
}

fn check_coherence(frame: &WaveFrame, eta: &LatticeField, opts: &FitOptions) -> Result<()> {
    let a = weight_rate(frame.c);
    let wave = frame.wave_field().weighted_norm(a, frame.xi);
    let dev = eta.weighted_norm(a, frame.xi);
    if dev > opts.coherence_ratio * wave {
        return Err(Error::CoherenceLost(format!(
            "weighted deviation {dev:.3e} exceeds {} of the wave norm {wave:.3e}",
            opts.coherence_ratio
        )));
    }
    Ok(())
}

/// One recorded point of a modulation trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationSample {
    pub t: f64,
    pub gamma: f64,
    pub c: f64,
    pub xi: f64,
    pub eta_l2: f64,
    pub eta_weighted_l2: f64,
    pub ortho: [f64; 2],
}

impl ModulationSample {
    pub fn from_state(t: f64, s: &ModulationState, frame: &WaveFrame) -> Self {
        ModulationSample {
            t,
            gamma: s.gamma,
            c: s.c,
            xi: s.xi,
            eta_l2: s.eta.norm(),
            eta_weighted_l2: s.eta.weighted_norm(weight_rate(s.c), s.xi),
            ortho: orthogonality(frame, &s.eta),
        }
    }
}

/// RK4 integration of the coupled system for `(xi, c, gamma, eta)`.
pub fn integrate_modulation<O>(
    family: &ProfileFamily,
    init: &ModulationState,
    coeffs: &SpringCoefficients,
    dt: f64,
    t_end: f64,
    stride: usize,
    mut observer: O,
) -> Result<ModulationState>
where
    O: FnMut(f64, &ModulationState, &WaveFrame) -> Result<()>,
{
    coeffs.check_window(&init.eta)?;
    let w = init.eta.len();
    let j_min = init.eta.j_min;
    let mut y = Vec::with_capacity(3 + 2 * w);
    y.extend_from_slice(&[init.xi, init.c, init.gamma]);
    y.extend_from_slice(&init.eta.r);
    y.extend_from_slice(&init.eta.p);
    let mut rk = Rk4::new(y.len());
    let (n, h) = step_count(dt, t_end);
    let unpack = |y: &[f64]| ModulationState {
        xi: y[0],
        c: y[1],
        gamma: y[2],
        eta: LatticeField { j_min, r: y[3..3 + w].to_vec(), p: y[3 + w..].to_vec() },
    };
    let frame_at = |xi: f64, c: f64| -> Result<WaveFrame> {
        if !(c > 1.0 && c <= crate::profile::MAX_SPEED) {
            return Err(Error::CoherenceLost(format!("speed {c} left the wave family")));
        }
        Ok(WaveFrame::new(&family.jet(c)?, xi))
    };
    let stride = stride.max(1);
    let s0 = unpack(&y);
    observer(0.0, &s0, &frame_at(s0.xi, s0.c)?)?;
    let mut failure: Option<Error> = None;
    let mut eta_buf = LatticeField::zeros(j_min, w);
    for step in 0..n {
        let t = step as f64 * h;
        rk.step(t, h, &mut y, |_, _, ys, dy| {
            if failure.is_some() {
                dy.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let frame = match frame_at(ys[0], ys[1]) {
                Ok(f) => f,
                Err(e) => {
                    failure = Some(e);
                    dy.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
            };
            eta_buf.r.copy_from_slice(&ys[3..3 + w]);
            eta_buf.p.copy_from_slice(&ys[3 + w..]);
            let gc = match gamma_c_maps(&frame, &eta_buf, coeffs) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    dy.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
            };
            dy[0] = ys[1] + gc[0];
            dy[1] = gc[1];
            dy[2] = gc[0];
            let (dr, dp) = dy[3..].split_at_mut(w);
            linearized_flow(&frame, j_min, &eta_buf.r, &eta_buf.p, dr, dp);
            let tm = t_map(&frame, &eta_buf, coeffs, gc);
            for k in 0..w {
                dr[k] += tm.r[k];
                dp[k] += tm.p[k];
            }
        });
        if let Some(e) = failure.take() {
            return Err(e);
        }
        if (step + 1) % 100 == 0 && !all_finite(&y) {
            return Err(Error::Diverged { t: t + h });
        }
        if (step + 1) % stride == 0 || step + 1 == n {
            let s = unpack(&y);
            observer((step + 1) as f64 * h, &s, &frame_at(s.xi, s.c)?)?;
        }
    }
    if !all_finite(&y) {
        return Err(Error::Diverged { t: t_end });
    }
    Ok(unpack(&y))
}

/// Fitted parameters along a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrack {
    pub t: Vec<f64>,
    pub xi: Vec<f64>,
    pub c: Vec<f64>,
    /// `xi - int_0^t c`, with the integral by the trapezoid rule on the observed grid.
    pub gamma: Vec<f64>,
    pub eta_l2: Vec<f64>,
}

impl FitTrack {
    fn push(&mut self, t: f64, fit: &FitResult) {
        let gamma = match (self.t.last(), self.c.last(), self.gamma.last(), self.xi.last()) {
            (Some(&t0), Some(&c0), Some(&g0), Some(&x0)) => g0 + (fit.xi - x0) - 0.5 * (t - t0) * (c0 + fit.c),
            _ => fit.xi,
        };
        self.t.push(t);
        self.xi.push(fit.xi);
        self.c.push(fit.c);
        self.gamma.push(gamma);
        self.eta_l2.push(fit.eta.norm());
    }
}

/// Simulates the lattice from the wave `phi_c(. - xi0)` and fits `(xi, c)` at
/// step 0 and every `stride` steps, each fit seeded with the previous one.
#[allow(clippy::too_many_arguments)]
pub fn fit_trajectory(
    family: &ProfileFamily,
    coeffs: &SpringCoefficients,
    c_star: f64,
    xi0: f64,
    dt: f64,
    t_end: f64,
    stride: usize,
    opts: &FitOptions,
) -> Result<FitTrack> {
    let frame = WaveFrame::new(&family.jet(c_star)?, xi0);
    let mut u0 = LatticeField::zeros(coeffs.j_min, coeffs.len());
    frame.add_mode_to(1.0, &frame.phi, &mut u0);
    let mut track = FitTrack::default();
    let mut guess = (xi0, c_star);
    crate::lattice::integrate(&u0, coeffs, dt, t_end, stride, |t, u| {
        let fit = fit_modulation(family, u, guess, opts)?;
        guess = (fit.xi + fit.c * dt * stride as f64, fit.c);
        track.push(t, &fit);
        Ok(())
    })?;
    Ok(track)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_wave(fam: &ProfileFamily, c: f64, xi: f64, j_min: i64, w: usize) -> LatticeField {
        let jet = fam.jet(c).unwrap();
        let f = WaveFrame::new(&jet, xi);
        let mut u = LatticeField::zeros(j_min, w);
        f.add_mode_to(1.0, &f.phi, &mut u);
        u
    }

    #[test]
    fn exact_wave_fit_recovers_parameters() {
        let fam = ProfileFamily::new();
        let u = exact_wave(&fam, 1.015, 3.4, -150, 300);
        let g = initial_guess(&u);
        assert!((g.0 - 3.4).abs() < 0.5);
        let fit = fit_modulation(&fam, &u, (g.0 + 0.3, g.1 + 0.002), &FitOptions::default()).unwrap();
        assert!((fit.c - 1.015).abs() < 1e-10, "{}", fit.c);
        assert!((fit.xi - 3.4).abs() < 1e-9);
        assert!(fit.eta.norm() < 1e-9);
    }

    #[test]
    fn exact_wave_has_zero_velocities() {
        let fam = ProfileFamily::new();
        let jet = fam.jet(1.02).unwrap();
        let f = WaveFrame::new(&jet, 0.25);
        let eta = LatticeField::zeros(-100, 200);
        let k = SpringCoefficients::homogeneous(-100, 200);
        assert_eq!(gamma_c_maps(&f, &eta, &k).unwrap(), [0.0, 0.0]);
        assert!(t_map(&f, &eta, &k, [0.0, 0.0]).sup_norm() == 0.0);
    }

    #[test]
    fn omega_is_antisymmetric_on_compact_fields() {
        let h = LatticeField::new(-6, vec![0.0, 0.0, 0.0, 0.0, 1.0, -2.0, 0.5, 0.3, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 0.2, 0.1, -0.7, 0.4, 0.0, 0.0, 0.0]).unwrap();
        let k = LatticeField::new(-6, vec![0.0, 0.0, 0.0, 0.0, -0.3, 0.6, 0.0, 1.1, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.9, 0.2, -0.5, 0.0, 0.0, 0.0]).unwrap();
        let (f, g) = (crate::lattice::apply_j(&h), crate::lattice::apply_j(&k));
        let fg = omega(&f, &g).unwrap();
        let gf = omega(&g, &f).unwrap();
        assert!((fg + gf).abs() < 1e-12);
    }
}
