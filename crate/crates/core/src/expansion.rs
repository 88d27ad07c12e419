//! Small-heterogeneity expansion: the first-order, quadratic and mixed maps,
//! the first-order forcing of the tail, closed-form first-order paths and the
//! second-order correction of the modulation parameters.

use rustfft::num_complex::Complex64;

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::frame::{pairing_inverse, Mat2, WaveFrame};
use crate::lattice::LatticeField;
use crate::profile::{ProfileFamily, ProfileJet};
use crate::tail::{tail_window, FrameSchedule, Forcing, TailIntegrator, TailWindow, Variant};

/// Speed step of the centered differences in `c` of the first-order maps.
pub const SPEED_STEP: f64 = 1e-4;

/// Wave frame together with the quantities shared by the expansion maps.
pub struct ExpansionFrame {
    pub frame: WaveFrame,
    pub a_inv: Mat2,
    /// `d_xi r^2` and `d_c r^2` on the frame window.
    pub sq_xi: Vec<f64>,
    pub sq_c: Vec<f64>,
}

impl ExpansionFrame {
    pub fn new(jet: &ProfileJet, xi: f64) -> Self {
        let frame = WaveFrame::new(jet, xi);
        let al = jet.alphas();
        let (sq_xi, sq_c) = frame.square_gradients();
        ExpansionFrame { frame, a_inv: pairing_inverse(al.alpha0, al.alpha1), sq_xi, sq_c }
    }

    pub fn xi(&self) -> f64 {
        self.frame.xi
    }

    pub fn c(&self) -> f64 {
        self.frame.c
    }

    /// `(Gamma^{1,0}, C^{1,0})[f]` for `f` given on the window starting at `f_min`.
    pub fn first_order(&self, f_min: i64, f: &[f64]) -> [f64; 2] {
        let v = [self.frame.inner(&self.sq_xi, f_min, f), self.frame.inner(&self.sq_c, f_min, f)];
        let out = self.a_inv.apply(v);
        [-0.5 * out[0], -0.5 * out[1]]
    }

    /// `(Gamma^{0,2}, C^{0,2})[f, g]`.
    pub fn quadratic(&self, f_min: i64, f: &[f64], g: &[f64]) -> [f64; 2] {
        let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
        self.quadratic_of_product(f_min, &fg)
    }

    fn quadratic_of_product(&self, f_min: i64, fg: &[f64]) -> [f64; 2] {
        let v = [self.frame.inner(&self.frame.d_xi.r, f_min, fg), self.frame.inner(&self.frame.d_c.r, f_min, fg)];
        let out = self.a_inv.apply(v);
        [-out[0], -out[1]]
    }

    /// `(Gamma^{1,1}, C^{1,1})[f, h]`; `f` and `h` share a window.
    pub fn mixed(&self, f: &[f64], h: &LatticeField) -> [f64; 2] {
        let first = self.first_order(h.j_min, f);
        let b = self.frame.matrix_b(h);
        let lin = self.a_inv.apply(b.apply(first));
        let q = self.quadratic(h.j_min, f, &h.r);
        [lin[0] + q[0], lin[1] + q[1]]
    }

    /// `xi`-derivative of the first-order maps at fixed `c`.
    pub fn first_order_xi_derivative(&self, f_min: i64, f: &[f64]) -> [f64; 2] {
        let (xx, xc, _) = self.frame.square_hessian();
        let v = [self.frame.inner(&xx, f_min, f), self.frame.inner(&xc, f_min, f)];
        let out = self.a_inv.apply(v);
        [-0.5 * out[0], -0.5 * out[1]]
    }

    /// `T^{1,0}[f]` on the window of `f`.
    pub fn forcing(&self, f_min: i64, f: &[f64]) -> LatticeField {
        let gc = self.first_order(f_min, f);
        self.forcing_with(f_min, f, gc)
    }

    /// `T^{1,0}[f]` with precomputed first-order velocities.
    pub fn forcing_with(&self, f_min: i64, f: &[f64], gc: [f64; 2]) -> LatticeField {
        let mut out = LatticeField::zeros(f_min, f.len());
        self.add_forcing_to(f_min, f, gc, f_min, &mut out.r, &mut out.p);
        out
    }

    /// Adds `T^{1,0}[f]`, given its velocities `gc`, to `(out_r, out_p)` on the
    /// window starting at `out_min`.
    pub fn add_forcing_to(&self, f_min: i64, f: &[f64], gc: [f64; 2], out_min: i64, out_r: &mut [f64], out_p: &mut [f64]) {
        let fr = &self.frame;
        let w = out_r.len() as i64;
        // d_-(f r): the product vanishes outside the frame and the window of `f`.
        let lo = fr.j_min.max(f_min);
        let hi = fr.j_end().min(f_min + f.len() as i64);
        let mut prev = 0.0;
        for j in lo..=hi {
            let cur = if j < hi { f[(j - f_min) as usize] * fr.phi.r[(j - fr.j_min) as usize] } else { 0.0 };
            let k = j - out_min;
            if k >= 0 && k < w {
                out_p[k as usize] += cur - prev;
            }
            prev = cur;
        }
        let lo = fr.j_min.max(out_min);
        let hi = fr.j_end().min(out_min + w);
        for j in lo..hi {
            let a = (j - fr.j_min) as usize;
            let k = (j - out_min) as usize;
            out_r[k] -= gc[0] * fr.d_xi.r[a] + gc[1] * fr.d_c.r[a];
            out_p[k] -= gc[0] * fr.d_xi.p[a] + gc[1] * fr.d_c.p[a];
        }
    }

    /// `(Gamma^{1,1}, C^{1,1})[delta_m, h]`.
    pub fn mixed_site(&self, m: i64, h: &LatticeField) -> [f64; 2] {
        let first = self.first_order(m, &[1.0]);
        let b = self.frame.matrix_b(h);
        let lin = self.a_inv.apply(b.apply(first));
        let hm = h.index(m).map(|k| h.r[k]).unwrap_or(0.0);
        let q = self.quadratic(m, &[1.0], &[hm]);
        [lin[0] + q[0], lin[1] + q[1]]
    }

    /// The same frame translated by `n` sites.
    pub fn shifted(&self, n: i64) -> Self {
        ExpansionFrame { frame: self.frame.shifted(n), a_inv: self.a_inv, sq_xi: self.sq_xi.clone(), sq_c: self.sq_c.clone() }
    }
}

/// First-order maps at one speed, evaluable at any position without building
/// a full frame; used for differences in `c`.
pub struct FirstOrderMap {
    pub jet: ProfileJet,
    pub a_inv: Mat2,
    sq_xi: Vec<Complex64>,
    sq_c: Vec<Complex64>,
}

impl FirstOrderMap {
    pub fn new(jet: ProfileJet) -> Self {
        let al = jet.alphas();
        let [sq, sq_c, _] = jet.square_coeffs();
        let sq_xi = jet.dxi(&sq, 1);
        FirstOrderMap { a_inv: pairing_inverse(al.alpha0, al.alpha1), sq_xi, sq_c, jet }
    }

    pub fn eval(&self, xi: f64, f_min: i64, f: &[f64]) -> [f64; 2] {
        let l = self.jet.half_period() as i64;
        let lo = (xi.floor() as i64 - l).max(f_min);
        let hi = (xi.floor() as i64 + l).min(f_min + f.len() as i64);
        if hi <= lo {
            return [0.0, 0.0];
        }
        let s = self.jet.grid.lattice_sampler(xi, lo, (hi - lo) as usize);
        let seg = &f[(lo - f_min) as usize..(hi - f_min) as usize];
        let v = [dot(&s.sample(&self.sq_xi, 0), seg), dot(&s.sample(&self.sq_c, 0), seg)];
        let out = self.a_inv.apply(v);
        [-0.5 * out[0], -0.5 * out[1]]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inner product of two sequences on different windows; sites outside either
/// window count as zero.
fn overlap_dot(a_min: i64, a: &[f64], b_min: i64, b: &[f64]) -> f64 {
    let lo = a_min.max(b_min);
    let hi = (a_min + a.len() as i64).min(b_min + b.len() as i64);
    if hi <= lo {
        return 0.0;
    }
    let n = (hi - lo) as usize;
    dot(&a[(lo - a_min) as usize..][..n], &b[(lo - b_min) as usize..][..n])
}

/// Centered difference in `c` of the first-order maps, including the speed
/// dependence of the inverse pairing matrix.
pub struct SpeedDerivative {
    plus: FirstOrderMap,
    minus: FirstOrderMap,
    step: f64,
}

impl SpeedDerivative {
    pub fn new(family: &ProfileFamily, c: f64, step: f64) -> Result<Self> {
        Ok(SpeedDerivative {
            plus: FirstOrderMap::new(family.jet(c + step)?),
            minus: FirstOrderMap::new(family.jet(c - step)?),
            step,
        })
    }

    pub fn eval(&self, xi: f64, f_min: i64, f: &[f64]) -> [f64; 2] {
        let a = self.plus.eval(xi, f_min, f);
        let b = self.minus.eval(xi, f_min, f);
        [(a[0] - b[0]) / (2.0 * self.step), (a[1] - b[1]) / (2.0 * self.step)]
    }
}

/// First-order parameter corrections on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderPath {
    pub t: Vec<f64>,
    pub c1: Vec<f64>,
    pub gamma1_i: Vec<f64>,
    pub gamma1_ii: Vec<f64>,
    /// `gamma1 + int_0^t c1`.
    pub xi1: Vec<f64>,
}

impl FirstOrderPath {
    pub fn gamma1(&self, i: usize) -> f64 {
        self.gamma1_i[i] + self.gamma1_ii[i]
    }
}

/// Per-site weights of the first-order closed forms at one time; each path
/// value is the inner product of `kappa` with one weight vector.
#[derive(Debug, Clone)]
pub struct FirstOrderWeights {
    pub j_min: i64,
    pub c1: Vec<f64>,
    pub gamma1_i: Vec<f64>,
    pub gamma1_ii: Vec<f64>,
    pub int_c1: Vec<f64>,
}

/// Closed-form sums over the lattice for the first-order corrections at a wave
/// speed `c`, with the wave started at the origin.
pub struct FirstOrderClosedForm {
    jet: ProfileJet,
    alpha0: f64,
    alpha1: f64,
    sq: Vec<Complex64>,
    sq_c: Vec<Complex64>,
}

impl FirstOrderClosedForm {
    pub fn new(jet: ProfileJet) -> Self {
        let al = jet.alphas();
        let [sq, sq_c, _] = jet.square_coeffs();
        FirstOrderClosedForm { alpha0: al.alpha0, alpha1: al.alpha1, sq, sq_c, jet }
    }

    pub fn jet(&self) -> &ProfileJet {
        &self.jet
    }

    /// Weights at time `t` on the sites `-L .. ct + L` where they can be nonzero.
    pub fn weights(&self, t: f64) -> FirstOrderWeights {
        let c = self.jet.c;
        let l = self.jet.half_period() as i64;
        let shift = c * t;
        let j_min = -l;
        let width = (shift.floor() as i64 + l + 1 - j_min) as usize;
        let g = &self.jet.grid;
        let now = g.lattice_sampler(shift, j_min, width);
        let start = g.lattice_sampler(0.0, j_min, width);
        let sq_now = now.sample(&self.sq, 0);
        let sq_start = start.sample(&self.sq, 0);
        let f_now = now.sample_antiderivative(&self.sq_c);
        let f_start = start.sample_antiderivative(&self.sq_c);
        let r_now = now.sample_antiderivative(&self.sq);
        let r_start = start.sample_antiderivative(&self.sq);
        let (a0, a1) = (self.alpha0, self.alpha1);
        let mut w = FirstOrderWeights {
            j_min,
            c1: vec![0.0; width],
            gamma1_i: vec![0.0; width],
            gamma1_ii: vec![0.0; width],
            int_c1: vec![0.0; width],
        };
        for k in 0..width {
            let d = sq_now[k] - sq_start[k];
            w.c1[k] = -d / (2.0 * c * a0);
            w.gamma1_i[k] = -a1 * d / (2.0 * c * a0 * a0);
            w.gamma1_ii[k] = (f_start[k] - f_now[k]) / (2.0 * c * a0);
            w.int_c1[k] = -((r_start[k] - r_now[k]) - shift * sq_start[k]) / (2.0 * c * c * a0);
        }
        w
    }

    /// Covariance of `c1(t)` and `c1(s)` for unit-variance i.i.d. coefficients.
    pub fn c1_covariance(&self, t: f64, s: f64) -> f64 {
        let wt = self.weights(t);
        let ws = self.weights(s);
        overlap_dot(wt.j_min, &wt.c1, ws.j_min, &ws.c1)
    }

    /// `(1/c^2 alpha0^2) sum r^4`, a uniform bound on the variance of `c1`.
    pub fn c1_variance_bound(&self) -> f64 {
        let l = self.jet.half_period() as i64;
        let s = self.jet.grid.lattice_sampler(0.0, -l, 2 * l as usize);
        let sq = s.sample(&self.sq, 0);
        let c = self.jet.c;
        sq.iter().map(|v| v * v).sum::<f64>() / (c * c * self.alpha0 * self.alpha0)
    }

    pub fn path(&self, kappa_min: i64, kappa: &[f64], t: &[f64]) -> Result<FirstOrderPath> {
        let c = self.jet.c;
        let t_max = t.iter().cloned().fold(0.0, f64::max);
        let need_hi = (c * t_max).ceil() as i64;
        if kappa_min > 0 || kappa_min + (kappa.len() as i64) <= need_hi {
            return Err(Error::InvalidWindow(format!(
                "coefficients on [{kappa_min}, {}) do not cover the path [0, {need_hi}]",
                kappa_min + kappa.len() as i64
            )));
        }
        let mut out = FirstOrderPath {
            t: t.to_vec(),
            c1: Vec::with_capacity(t.len()),
            gamma1_i: Vec::with_capacity(t.len()),
            gamma1_ii: Vec::with_capacity(t.len()),
            xi1: Vec::with_capacity(t.len()),
        };
        for &ti in t {
            let w = self.weights(ti);
            let kd = |wv: &[f64]| overlap_dot(w.j_min, wv, kappa_min, kappa);
            let (c1, gi, gii, ic) = (kd(&w.c1), kd(&w.gamma1_i), kd(&w.gamma1_ii), kd(&w.int_c1));
            out.c1.push(c1);
            out.gamma1_i.push(gi);
            out.gamma1_ii.push(gii);
            out.xi1.push(gi + gii + ic);
        }
        Ok(out)
    }
}

/// First-order corrections of a wave of speed `c_star` started at the origin,
/// for the coefficients `kappa` on the window starting at `kappa_min`.
pub fn first_order_path(family: &ProfileFamily, c_star: f64, kappa_min: i64, kappa: &[f64], t: &[f64]) -> Result<FirstOrderPath> {
    FirstOrderClosedForm::new(family.jet(c_star)?).path(kappa_min, kappa, t)
}

pub fn c1_covariance(family: &ProfileFamily, c_star: f64, t: f64, s: f64) -> Result<f64> {
    Ok(FirstOrderClosedForm::new(family.jet(c_star)?).c1_covariance(t, s))
}

/// Evaluates the second-order drift of `(gamma2, c2)` along the unperturbed
/// path `xi = c t`.
pub struct SecondOrderDrift {
    pub c: f64,
    pub jet: ProfileJet,
    speed: SpeedDerivative,
}

impl SecondOrderDrift {
    pub fn new(family: &ProfileFamily, c: f64) -> Result<Self> {
        Ok(SecondOrderDrift { c, jet: family.jet(c)?, speed: SpeedDerivative::new(family, c, SPEED_STEP)? })
    }

    pub fn frame(&self, t: f64) -> ExpansionFrame {
        ExpansionFrame::new(&self.jet, self.c * t)
    }

    /// Drift at time `t` given the first-order corrections `(xi1, c1)` and the
    /// normalized tail `eta` on the window of `kappa`.
    pub fn eval(&self, ef: &ExpansionFrame, kappa: &[f64], xi1: f64, c1: f64, eta: &LatticeField) -> [f64; 2] {
        let dx = ef.first_order_xi_derivative(eta.j_min, kappa);
        let dc = self.speed.eval(ef.xi(), eta.j_min, kappa);
        let m11 = ef.mixed(kappa, eta);
        let m02 = ef.quadratic(eta.j_min, &eta.r, &eta.r);
        [
            xi1 * dx[0] + c1 * dc[0] + m11[0] + m02[0],
            xi1 * dx[1] + c1 * dc[1] + m11[1] + m02[1],
        ]
    }
}

/// Second-order corrections on a time grid, with their rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderPath {
    pub t: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub c2: Vec<f64>,
    pub gamma2_rate: Vec<f64>,
    pub c2_rate: Vec<f64>,
    pub variant: Variant,
}

/// First- and second-order corrections along the unperturbed path up to
/// `t_end`, sampled every `stride` tail steps. The tail of the given variant
/// is integrated alongside; the second-order drift does not depend on the
/// second-order corrections themselves, so they follow by quadrature.
pub fn second_order_path(
    drift: &SecondOrderDrift,
    schedule: &FrameSchedule,
    variant: Variant,
    kappa_min: i64,
    kappa: &[f64],
    t_end: f64,
    stride: usize,
) -> Result<(FirstOrderPath, SecondOrderPath)> {
    let n_steps = schedule.steps_to(t_end);
    let stride = stride.max(1);
    if n_steps % stride != 0 {
        return Err(Error::Config(format!("stride {stride} does not divide the {n_steps} tail steps")));
    }
    let t: Vec<f64> = (0..=n_steps / stride).map(|i| schedule.time(2 * (i * stride) as u64)).collect();
    let first = FirstOrderClosedForm::new(drift.jet.clone()).path(kappa_min, kappa, &t)?;
    let half = drift.jet.half_period();
    let (j_min, width) = tail_window(drift.c, half, t_end, kappa_min, kappa_min + kappa.len() as i64, 20);
    let mut kw = vec![0.0; width];
    for (k, v) in kappa.iter().enumerate() {
        kw[(kappa_min - j_min) as usize + k] = *v;
    }
    let mut rates = Vec::with_capacity(t.len());
    TailIntegrator::new(schedule, variant).run(
        Forcing::Field { j_min: kappa_min, values: kappa },
        TailWindow::Fixed { j_min, width },
        n_steps,
        stride,
        |step, _, eta, ef| {
            let i = step / stride;
            rates.push(drift.eval(ef, &kw, first.xi1[i], first.c1[i], eta));
            Ok(ControlFlow::Continue(()))
        },
    )?;
    let h = schedule.time(2 * stride as u64);
    let gamma2_rate: Vec<f64> = rates.iter().map(|r| r[0]).collect();
    let c2_rate: Vec<f64> = rates.iter().map(|r| r[1]).collect();
    let second = SecondOrderPath {
        gamma2: cumulative_integral(h, &gamma2_rate),
        c2: cumulative_integral(h, &c2_rate),
        t,
        gamma2_rate,
        c2_rate,
        variant,
    };
    Ok((first, second))
}

/// Running integral of samples on a uniform grid, fourth order in the spacing:
/// each interval is integrated with the cubic through its four nearest samples.
pub fn cumulative_integral(h: f64, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (y[i - 1] + y[i]);
        }
        return out;
    }
    for i in 1..n {
        // Interval [i-1, i] integrated with the cubic through 4 neighbours.
        let s = if i == 1 {
            h * (9.0 * y[0] + 19.0 * y[1] - 5.0 * y[2] + y[3]) / 24.0
        } else if i == n - 1 {
            h * (9.0 * y[n - 1] + 19.0 * y[n - 2] - 5.0 * y[n - 3] + y[n - 4]) / 24.0
        } else {
            h * (-y[i - 2] + 13.0 * y[i - 1] + 13.0 * y[i] - y[i + 1]) / 24.0
        };
        out[i] = out[i - 1] + s;
    }
    out
}
