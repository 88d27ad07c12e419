//! Radiative tails: the first-order deviation driven by the heterogeneity,
//! single-site responses and their co-moving limit.

use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::expansion::ExpansionFrame;
use crate::kernel::WaveKernel;
use crate::lattice::{diff_backward_into, diff_forward_into, LatticeField};
use crate::modulation::{linearized_flow, weight_rate};
use crate::ode::{all_finite, Rk4};
use crate::profile::ProfileJet;

/// Which linear flow carries the tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Linearization about the moving wave.
    Full,
    /// Free discrete wave equation.
    Homogeneous,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Homogeneous => "homogeneous",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Variant::Full),
            "homogeneous" | "h" => Ok(Variant::Homogeneous),
            other => Err(Error::Config(format!("unknown tail variant {other}"))),
        }
    }
}

/// Default number of time steps per site travelled by the wave.
pub const STEPS_PER_SITE: usize = 24;

/// Frames of the wave moving at speed `c` from the origin, on a time grid of
/// `K` steps per site. Positions at steps and half steps repeat modulo one
/// site, so `2K` frames cover the whole path up to integer shifts.
pub struct FrameSchedule {
    pub c: f64,
    pub steps_per_site: usize,
    frames: Vec<ExpansionFrame>,
}

impl FrameSchedule {
    pub fn new(jet: &ProfileJet, steps_per_site: usize) -> Result<Self> {
        if steps_per_site < 2 {
            return Err(Error::Config("at least two steps per site are needed".into()));
        }
        let n = 2 * steps_per_site;
        let frames = (0..n).map(|i| ExpansionFrame::new(jet, i as f64 / n as f64)).collect();
        Ok(FrameSchedule { c: jet.c, steps_per_site, frames })
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.steps_per_site as f64 * self.c)
    }

    /// Time of half step `h`.
    pub fn time(&self, half_steps: u64) -> f64 {
        half_steps as f64 / (2.0 * self.steps_per_site as f64 * self.c)
    }

    /// Steps needed to reach `t_end`.
    pub fn steps_to(&self, t_end: f64) -> usize {
        (t_end / self.dt() - 1e-9).ceil().max(0.0) as usize
    }

    /// Smallest time at or after `t_end` that is a whole number of `stride`-step records.
    pub fn aligned_end(&self, t_end: f64, stride: usize) -> f64 {
        let stride = stride.max(1);
        let n = self.steps_to(t_end).div_ceil(stride) * stride;
        self.time(2 * n as u64)
    }

    /// Base frame and integer shift for half step `h`.
    pub fn at(&self, half_steps: u64) -> (&ExpansionFrame, i64) {
        let n = self.frames.len() as u64;
        (&self.frames[(half_steps % n) as usize], (half_steps / n) as i64)
    }

    pub fn frame(&self, half_steps: u64) -> ExpansionFrame {
        let (f, s) = self.at(half_steps);
        f.shifted(s)
    }
}

/// Forcing profile of a tail: the heterogeneity on a window or a unit spike.
#[derive(Debug, Clone, Copy)]
pub enum Forcing<'a> {
    Field { j_min: i64, values: &'a [f64] },
    Site(i64),
}

impl<'a> Forcing<'a> {
    fn parts(&self) -> (i64, &'a [f64]) {
        const ONE: &[f64] = &[1.0];
        match *self {
            Forcing::Field { j_min, values } => (j_min, values),
            Forcing::Site(m) => (m, ONE),
        }
    }
}

/// RK4 integrator of the forced linear tail equation along the unperturbed
/// path `xi = c t`, on the time grid of a [`FrameSchedule`].
pub struct TailIntegrator<'s> {
    pub schedule: &'s FrameSchedule,
    pub variant: Variant,
}

/// Half-step offsets of the four RK4 stages.
const STAGE_HALF_STEPS: [u64; 4] = [0, 1, 1, 2];

impl<'s> TailIntegrator<'s> {
    pub fn new(schedule: &'s FrameSchedule, variant: Variant) -> Self {
        TailIntegrator { schedule, variant }
    }

    /// Right-hand side at half step `h` for the state `y = [r.., p..]` on the
    /// window starting at `j_min`.
    fn rhs(&self, forcing: Forcing<'_>, h: u64, j_min: i64, y: &[f64], dy: &mut [f64]) {
        let w = y.len() / 2;
        let (er, ep) = y.split_at(w);
        let (or, op) = dy.split_at_mut(w);
        let (base, shift) = self.schedule.at(h);
        // The base frame sits `shift` sites behind the true one, so all windows
        // are translated back by the same amount.
        let rel = j_min - shift;
        match self.variant {
            Variant::Full => linearized_flow(&base.frame, rel, er, ep, or, op),
            Variant::Homogeneous => {
                diff_forward_into(ep, or);
                diff_backward_into(er, op);
            }
        }
        let (f_min, f) = forcing.parts();
        let gc = base.first_order(f_min - shift, f);
        base.add_forcing_to(f_min - shift, f, gc, rel, or, op);
    }

    /// Integrates from zero data for at most `n_steps` steps. The observer
    /// sees step 0, every `stride`-th step and the last one, together with the
    /// frame at that time, and may stop the run early.
    pub fn run<O>(&self, forcing: Forcing<'_>, window: TailWindow, n_steps: usize, stride: usize, mut observer: O) -> Result<LatticeField>
    where
        O: FnMut(usize, f64, &LatticeField, &ExpansionFrame) -> Result<ControlFlow<()>>,
    {
        let (mut j_min, width) = match window {
            TailWindow::Fixed { j_min, width } => (j_min, width),
            TailWindow::CoMoving { behind, ahead } => (-(behind as i64), behind + ahead),
        };
        if width < 3 {
            return Err(Error::InvalidWindow(format!("tail window of {width} sites")));
        }
        let co_moving = matches!(window, TailWindow::CoMoving { .. });
        let k = self.schedule.steps_per_site;
        let mut y = vec![0.0; 2 * width];
        let mut rk = Rk4::new(2 * width);
        let stride = stride.max(1);
        let dt = self.schedule.dt();
        if observer(0, 0.0, &LatticeField::zeros(j_min, width), &self.schedule.frame(0))?.is_break() {
            return Ok(LatticeField::zeros(j_min, width));
        }
        for step in 0..n_steps {
            let base = 2 * step as u64;
            let jm = j_min;
            rk.step(0.0, dt, &mut y, |stage, _, y, dy| self.rhs(forcing, base + STAGE_HALF_STEPS[stage], jm, y, dy));
            let done = step + 1;
            if co_moving && done % k == 0 {
                // The wave advanced by one site: drop the trailing site.
                for half in y.chunks_exact_mut(width) {
                    half.copy_within(1.., 0);
                    half[width - 1] = 0.0;
                }
                j_min += 1;
            }
            if done % stride == 0 || done == n_steps {
                let t = self.schedule.time(2 * done as u64);
                if !all_finite(&y) {
                    return Err(Error::Diverged { t });
                }
                let field = LatticeField::from_flat(j_min, &y);
                if observer(done, t, &field, &self.schedule.frame(2 * done as u64))?.is_break() {
                    return Ok(field);
                }
            }
        }
        Ok(LatticeField::from_flat(j_min, &y))
    }
}

/// Lattice window carrying a tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailWindow {
    /// Fixed sites `j_min .. j_min + width`.
    Fixed { j_min: i64, width: usize },
    /// Sites from `behind` sites behind to `ahead` sites ahead of the wave,
    /// moved along one site at a time. Sites left behind are discarded; their
    /// content travels at most at unit speed and never returns to the wave.
    CoMoving { behind: usize, ahead: usize },
}

/// Snapshots of a tail on a uniform time grid.
#[derive(Debug, Clone)]
pub struct TailTrajectory {
    pub variant: Variant,
    pub c: f64,
    pub t: Vec<f64>,
    pub fields: Vec<LatticeField>,
}

/// Window for a tail up to `t_end` forced by a heterogeneity supported on
/// `[f_min, f_end)`: radiation travels at most at unit speed, the wave moves
/// to `c t_end`.
pub fn tail_window(c: f64, half_width: usize, t_end: f64, f_min: i64, f_end: i64, pad: usize) -> (i64, usize) {
    let l = half_width as i64;
    let lo = f_min.min(-l) - t_end.ceil() as i64 - pad as i64;
    let hi = f_end.max((c * t_end).ceil() as i64 + l) + t_end.ceil() as i64 + pad as i64;
    (lo, (hi - lo) as usize)
}

/// Tail `eta' = A eta + T^{1,0}(c t, c)[kappa]` from zero data, with `A` the
/// linearization about the wave or the free operator `J`. Snapshots every
/// `stride` steps of `1 / (K c)`.
pub fn integrate_tail(
    schedule: &FrameSchedule,
    variant: Variant,
    kappa_min: i64,
    kappa: &[f64],
    t_end: f64,
    stride: usize,
    pad: usize,
) -> Result<TailTrajectory> {
    let l = schedule.frame(0).frame.width() / 2;
    let (j_min, width) = tail_window(schedule.c, l, t_end, kappa_min, kappa_min + kappa.len() as i64, pad);
    let integ = TailIntegrator::new(schedule, variant);
    let mut out = TailTrajectory { variant, c: schedule.c, t: Vec::new(), fields: Vec::new() };
    integ.run(
        Forcing::Field { j_min: kappa_min, values: kappa },
        TailWindow::Fixed { j_min, width },
        schedule.steps_to(t_end),
        stride,
        |_, t, eta, _| {
            out.t.push(t);
            out.fields.push(eta.clone());
            Ok(ControlFlow::Continue(()))
        },
    )?;
    Ok(out)
}

/// Response `R(., m, t)` to a unit heterogeneity at site `m`.
#[derive(Debug, Clone)]
pub struct ResponseField {
    pub variant: Variant,
    pub c: f64,
    pub m: i64,
    pub t: Vec<f64>,
    pub fields: Vec<LatticeField>,
}

pub fn response(schedule: &FrameSchedule, variant: Variant, m: i64, t_end: f64, stride: usize, pad: usize) -> Result<ResponseField> {
    let one = [1.0];
    let traj = integrate_tail(schedule, variant, m, &one, t_end, stride, pad)?;
    Ok(ResponseField { variant, c: traj.c, m, t: traj.t, fields: traj.fields })
}

/// Observation of a single-site run at wave position `n + p_l`.
pub struct SiteSnapshot<'a> {
    /// Integer part of the wave position.
    pub n: i64,
    /// Phase index: `p = l / phases`.
    pub l: usize,
    /// Heterogeneity site relative to the wave, `site - n`.
    pub m: i64,
    pub field: &'a LatticeField,
    pub frame: &'a ExpansionFrame,
}

/// Runs the response to a unit heterogeneity at `site` in a co-moving window,
/// observing it at every wave position `n + l / phases`. By shift
/// equivariance the snapshot at `(n, l)`, read at sites `j + n`, approximates
/// the co-moving limit column `m = site - n` at phase `l / phases`, up to the
/// forcing missed before time zero, which is of order `exp(-eps * site)`.
pub fn sweep_site<O>(
    schedule: &FrameSchedule,
    variant: Variant,
    site: i64,
    phases: usize,
    window: TailWindow,
    max_sites: usize,
    mut observer: O,
) -> Result<()>
where
    O: FnMut(&SiteSnapshot<'_>) -> Result<ControlFlow<()>>,
{
    let k = schedule.steps_per_site;
    if phases == 0 || k % phases != 0 {
        return Err(Error::Config(format!("{phases} phases do not divide {k} steps per site")));
    }
    let stride = k / phases;
    TailIntegrator::new(schedule, variant).run(Forcing::Site(site), window, max_sites * k, stride, |step, _, field, frame| {
        let n = (step / k) as i64;
        let snap = SiteSnapshot { n, l: (step % k) / stride, m: site - n, field, frame };
        observer(&snap)
    })?;
    Ok(())
}

/// Co-moving limit `R_inf(j, m, p)` on a rectangular `(j, m)` window for a
/// set of phases.
#[derive(Debug, Clone)]
pub struct LimitResponse {
    pub variant: Variant,
    pub c: f64,
    /// Weight rate of the norms.
    pub a: f64,
    pub phases: Vec<f64>,
    pub j_min: i64,
    pub j_len: usize,
    pub m_min: i64,
    pub m_len: usize,
    /// `[phase][m][j]`.
    r: Vec<f64>,
    p: Vec<f64>,
    /// Successive snapshot distances `(n, d_n)` when built by shifting.
    pub distances: Vec<(i64, f64)>,
    /// Fitted ratio of successive distances.
    pub rate: Option<f64>,
}

impl LimitResponse {
    fn zeros(variant: Variant, c: f64, phases: Vec<f64>, j: (i64, usize), m: (i64, usize)) -> Self {
        let n = phases.len() * j.1 * m.1;
        LimitResponse {
            variant,
            c,
            a: weight_rate(c),
            phases,
            j_min: j.0,
            j_len: j.1,
            m_min: m.0,
            m_len: m.1,
            r: vec![0.0; n],
            p: vec![0.0; n],
            distances: Vec::new(),
            rate: None,
        }
    }

    /// Rebuilds a limit from stored samples laid out as `[phase][m][j]`.
    pub fn from_parts(
        variant: Variant,
        c: f64,
        phases: Vec<f64>,
        j: (i64, usize),
        m: (i64, usize),
        r: Vec<f64>,
        p: Vec<f64>,
    ) -> Result<Self> {
        let n = phases.len() * j.1 * m.1;
        if r.len() != n || p.len() != n {
            return Err(Error::Consistency(format!("limit data of {} / {} values, expected {n}", r.len(), p.len())));
        }
        let mut out = LimitResponse::zeros(variant, c, phases, j, m);
        out.r = r;
        out.p = p;
        Ok(out)
    }

    /// Raw strain and momentum samples, `[phase][m][j]`.
    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.r, &self.p)
    }

    fn offset(&self, l: usize, m: i64) -> Option<usize> {
        let k = m - self.m_min;
        (l < self.phases.len() && k >= 0 && (k as usize) < self.m_len).then(|| (l * self.m_len + k as usize) * self.j_len)
    }

    /// Column `R_inf(., m, p_l)` on the `j` window.
    pub fn column(&self, l: usize, m: i64) -> Option<LatticeField> {
        let o = self.offset(l, m)?;
        Some(LatticeField { j_min: self.j_min, r: self.r[o..o + self.j_len].to_vec(), p: self.p[o..o + self.j_len].to_vec() })
    }

    /// `R_inf(j, m, p_l)`, zero outside the window.
    pub fn value(&self, l: usize, j: i64, m: i64) -> [f64; 2] {
        let k = j - self.j_min;
        match self.offset(l, m) {
            Some(o) if k >= 0 && (k as usize) < self.j_len => [self.r[o + k as usize], self.p[o + k as usize]],
            _ => [0.0, 0.0],
        }
    }

    fn set_column(&mut self, l: usize, m: i64, field: &LatticeField, shift: i64) {
        if let Some(o) = self.offset(l, m) {
            for k in 0..self.j_len {
                if let Some(i) = field.index(self.j_min + k as i64 + shift) {
                    self.r[o + k] = field.r[i];
                    self.p[o + k] = field.p[i];
                }
            }
        }
    }

    /// Weighted distance `sum_{j,m} e^{2 a j} |R - S|^2` at phase `l`, square root.
    pub fn distance(&self, other: &LimitResponse, l: usize, lo: usize) -> f64 {
        let mut s = 0.0;
        for m in 0..self.m_len as i64 {
            let m = self.m_min + m;
            for j in 0..self.j_len as i64 {
                let j = self.j_min + j;
                let (u, v) = (self.value(l, j, m), other.value(lo, j, m));
                let w = (2.0 * self.a * j as f64).exp();
                s += w * ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2));
            }
        }
        s.sqrt()
    }

    /// Weighted norm at phase `l`.
    pub fn weighted_norm(&self, l: usize) -> f64 {
        let mut s = 0.0;
        for m in 0..self.m_len as i64 {
            for j in 0..self.j_len as i64 {
                let u = self.value(l, self.j_min + j, self.m_min + m);
                s += (2.0 * self.a * (self.j_min + j) as f64).exp() * (u[0] * u[0] + u[1] * u[1]);
            }
        }
        s.sqrt()
    }
}

/// Rectangular `(j, m)` window of a limit response, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LimitWindow {
    pub j: (i64, i64),
    pub m: (i64, i64),
}

impl LimitWindow {
    /// `[-J, J]` in both directions with `J = 40 / eps + margin`.
    pub fn symmetric(c: f64, margin: i64) -> Self {
        let jm = (40.0 / crate::profile::long_wave_parameter(c)).ceil() as i64 + margin;
        LimitWindow { j: (-jm, jm), m: (-jm, jm) }
    }

    fn j_span(&self) -> (i64, usize) {
        (self.j.0, (self.j.1 - self.j.0 + 1) as usize)
    }

    fn m_span(&self) -> (i64, usize) {
        (self.m.0, (self.m.1 - self.m.0 + 1) as usize)
    }

    fn co_moving(&self, half_width: usize, pad: usize) -> TailWindow {
        TailWindow::CoMoving {
            behind: (-self.j.0).max(half_width as i64) as usize + pad,
            ahead: self.j.1.max(half_width as i64) as usize + pad,
        }
    }
}

/// Sites between the start of the wave and the first heterogeneity read off.
pub fn default_lead(c: f64) -> i64 {
    (40.0 / crate::profile::long_wave_parameter(c)).ceil() as i64 + 10
}

/// Co-moving limit at phases `l / phases` from a single run: the site is
/// placed `lead` sites ahead of the window's last column.
pub fn limit_response(schedule: &FrameSchedule, variant: Variant, phases: usize, window: LimitWindow, lead: i64) -> Result<LimitResponse> {
    let ps = (0..phases).map(|l| l as f64 / phases as f64).collect();
    let mut out = LimitResponse::zeros(variant, schedule.c, ps, window.j_span(), window.m_span());
    let site = window.m.1 + lead;
    let half = schedule.frame(0).frame.width() / 2;
    let max_sites = (site - window.m.0 + 1) as usize;
    sweep_site(schedule, variant, site, phases, window.co_moving(half, 20), max_sites, |s| {
        out.set_column(s.l, s.m, s.field, s.n);
        Ok(if s.m < window.m.0 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
    })?;
    Ok(out)
}

/// Options of the shifted-snapshot construction.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotOptions {
    pub window: LimitWindow,
    pub first: i64,
    pub step: i64,
    pub last: i64,
}

impl SnapshotOptions {
    pub fn new(c: f64, window: LimitWindow) -> Self {
        let reach = window.m.1 - window.m.0;
        SnapshotOptions { window, first: 20, step: 10, last: 20 + reach + 2 * default_lead(c) }
    }
}

/// Shifted snapshots `R(. + n, . + n, (n + p) / c)` with `p = l / phases`
/// (`l = phases` included) for `n = first, first + step, ...`; returns the first one within `tol` of its predecessor in the
/// weighted norm, with the distances and their fitted geometric ratio.
pub fn response_limit(schedule: &FrameSchedule, variant: Variant, phases: usize, l: usize, tol: f64, opts: &SnapshotOptions) -> Result<LimitResponse> {
    if !(tol >= 1e-8) {
        return Err(Error::Config(format!("tolerance {tol} below 1e-8")));
    }
    if opts.step < 1 || opts.last < opts.first {
        return Err(Error::Config("empty snapshot sequence".into()));
    }
    if phases == 0 || l > phases {
        return Err(Error::Config(format!("phase index {l} outside 0..={phases}")));
    }
    let (l_in, wraps) = ((l % phases), (l / phases) as i64);
    let w = opts.window;
    let ns: Vec<i64> = (0..).map(|k| opts.first + k * opts.step).take_while(|&n| n <= opts.last).collect();
    let p = l as f64 / phases as f64;
    let mut snaps: Vec<LimitResponse> =
        ns.iter().map(|_| LimitResponse::zeros(variant, schedule.c, vec![p], w.j_span(), w.m_span())).collect();
    let half = schedule.frame(0).frame.width() / 2;
    let sites: Vec<i64> = (w.m.0 + opts.first..=w.m.1 + opts.last).collect();
    let cols: Vec<Vec<(usize, i64, LatticeField)>> = {
        use rayon::prelude::*;
        sites
            .par_iter()
            .map(|&site| -> Result<Vec<(usize, i64, LatticeField)>> {
                let mut got = Vec::new();
                let n_stop = (site - w.m.0).min(opts.last);
                if n_stop < 0 {
                    return Ok(got);
                }
                sweep_site(schedule, variant, site, phases, w.co_moving(half, 20), n_stop as usize + 2, |s| {
                    // Phase 1 at label n is phase 0 one site later.
                    let n = s.n - wraps;
                    let m = site - n;
                    if s.l == l_in && n >= opts.first && (n - opts.first) % opts.step == 0 && m >= w.m.0 && m <= w.m.1 {
                        got.push((((n - opts.first) / opts.step) as usize, n, s.field.clone()));
                    }
                    Ok(if n > n_stop { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
                })?;
                Ok(got)
            })
            .collect::<Result<_>>()?
    };
    for (site, got) in sites.iter().zip(cols) {
        for (k, n, field) in got {
            snaps[k].set_column(0, site - n, &field, n);
        }
    }
    let mut distances = Vec::new();
    let mut hit = None;
    for k in 1..snaps.len() {
        let d = snaps[k].distance(&snaps[k - 1], 0, 0);
        distances.push((ns[k], d));
        if hit.is_none() && d <= tol {
            hit = Some(k);
        }
    }
    let Some(k) = hit else {
        return Err(Error::Convergence(format!(
            "shifted snapshots did not settle within {tol:.1e} by n = {}: last distances {:?}",
            opts.last,
            &distances[distances.len().saturating_sub(3)..]
        )));
    };
    // Distances up to the accepted snapshot; later ones sit at round-off.
    let rate = geometric_ratio(&distances[..k]);
    match rate {
        Some(q) if q < 1.0 => {}
        _ => return Err(Error::Convergence(format!("distances do not decay geometrically: {distances:?}"))),
    }
    let mut out = snaps.swap_remove(k);
    out.distances = distances;
    out.rate = rate;
    Ok(out)
}

/// Ratio of consecutive terms of a geometric fit to the decaying part of
/// `(n, d_n)`, from the largest distance on; `n` is assumed equispaced.
pub fn geometric_ratio(d: &[(i64, f64)]) -> Option<f64> {
    let peak = d.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?.0;
    let pts: Vec<(f64, f64)> = d[peak..].iter().enumerate().filter(|x| x.1 .1 > 0.0).map(|(i, &(_, v))| (i as f64, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1));
    let (mx, my) = (sx / k, sy / k);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + (p.0 - mx) * (p.1 - my), s.1 + (p.0 - mx).powi(2)));
    Some((sxy / sxx).exp())
}

/// Free-wave co-moving limit by quadrature of the kernel representation
/// `R_inf(j, m, p) = int_0^inf sum_k Phi(j - k, s) T^{1,0}(p - c s)[delta_m](k) ds`
/// with Simpson's rule, `nodes_per_site` nodes per site travelled.
pub fn kernel_limit(jet: &ProfileJet, p: f64, window: LimitWindow, nodes_per_site: usize) -> Result<LimitResponse> {
    let c = jet.c;
    let eps = crate::profile::long_wave_parameter(c);
    let nps = nodes_per_site.max(2);
    let mut out = LimitResponse::zeros(Variant::Homogeneous, c, vec![p], window.j_span(), window.m_span());
    // Forcing from site m is negligible once the wave is 45 / eps behind it.
    let travel = p - window.m.0 as f64 + (45.0 / eps).ceil();
    let mut n_int = (travel * nps as f64).ceil() as usize;
    n_int += n_int % 2;
    let h = 1.0 / (nps as f64 * c);
    let base: Vec<ExpansionFrame> = (0..nps).map(|i| ExpansionFrame::new(jet, p - i as f64 / nps as f64)).collect();
    let (j0, jl) = window.j_span();
    let (m0, ml) = window.m_span();
    let mut acc_r = vec![0.0; jl * ml];
    let mut acc_p = vec![0.0; jl * ml];
    for i in 0..=n_int {
        let wq = if i == 0 || i == n_int { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 } * h / 3.0;
        let s = i as f64 * h;
        let ef = base[i % nps].shifted(-((i / nps) as i64));
        let fr = &ef.frame;
        let ker = WaveKernel::new(s)?;
        // Free propagation of the two secular modes to the j window.
        let mut ux = vec![[0.0; 2]; jl];
        let mut uc = vec![[0.0; 2]; jl];
        for (jj, (ox, oc)) in ux.iter_mut().zip(uc.iter_mut()).enumerate() {
            let j = j0 + jj as i64;
            for k in 0..fr.width() {
                let d = j - (fr.j_min + k as i64);
                if d.abs() > ker.reach + 1 {
                    continue;
                }
                let m = ker.matrix(d);
                let (xr, xp) = (fr.d_xi.r[k], fr.d_xi.p[k]);
                let (cr, cp) = (fr.d_c.r[k], fr.d_c.p[k]);
                ox[0] += m[0][0] * xr + m[0][1] * xp;
                ox[1] += m[1][0] * xr + m[1][1] * xp;
                oc[0] += m[0][0] * cr + m[0][1] * cp;
                oc[1] += m[1][0] * cr + m[1][1] * cp;
            }
        }
        for mm in 0..ml {
            let m = m0 + mm as i64;
            let gc = ef.first_order(m, &[1.0]);
            let rm = fr.value_at(&fr.phi.r, m);
            for jj in 0..jl {
                let j = j0 + jj as i64;
                // Spike part r(m - xi) (0, delta_m - delta_{m+1}).
                let a = ker.matrix(j - m);
                let b = ker.matrix(j - m - 1);
                let sr = rm * (a[0][1] - b[0][1]);
                let sp = rm * (a[1][1] - b[1][1]);
                let o = mm * jl + jj;
                acc_r[o] += wq * (sr - gc[0] * ux[jj][0] - gc[1] * uc[jj][0]);
                acc_p[o] += wq * (sp - gc[0] * ux[jj][1] - gc[1] * uc[jj][1]);
            }
        }
    }
    out.r = acc_r;
    out.p = acc_p;
    Ok(out)
}

/// Sample and standard deviation of the limiting tail on the grid
/// `x = J - l / P` with `J` in `[x_min, x_max]`.
#[derive(Debug, Clone)]
pub struct LimitingTail {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub std_r: Vec<f64>,
    pub std_p: Vec<f64>,
}

/// Evaluates `sum_m zeta(m - J) R_inf(J, m, J - x)` for one i.i.d. sequence
/// `zeta` and the pointwise standard deviation of the same series.
pub fn limiting_tail(lr: &LimitResponse, sampler: &crate::ensemble::KappaSampler, realization: u64) -> Result<LimitingTail> {
    let np = lr.phases.len();
    for (l, &p) in lr.phases.iter().enumerate() {
        if (p - l as f64 / np as f64).abs() > 1e-12 {
            return Err(Error::Config(format!("phase {p} is not on a uniform grid")));
        }
    }
    let mut out = LimitingTail { x: Vec::new(), r: Vec::new(), p: Vec::new(), std_r: Vec::new(), std_p: Vec::new() };
    for jj in 0..lr.j_len as i64 {
        let j = lr.j_min + jj;
        // Increasing x within (j - 1, j].
        for l in (0..np).rev() {
            let (mut sr, mut sp, mut vr, mut vp) = (0.0, 0.0, 0.0, 0.0);
            for mm in 0..lr.m_len as i64 {
                let m = lr.m_min + mm;
                let v = lr.value(l, j, m);
                let z = sampler.value(realization, m - j);
                sr += z * v[0];
                sp += z * v[1];
                vr += v[0] * v[0];
                vp += v[1] * v[1];
            }
            out.x.push(j as f64 - lr.phases[l]);
            out.r.push(sr);
            out.p.push(sp);
            out.std_r.push(vr.sqrt());
            out.std_p.push(vp.sqrt());
        }
    }
    Ok(out)
}
