//! Profile fields sampled on the lattice at a given position and speed.

use crate::lattice::{dot, LatticeField};
use crate::profile::ProfileJet;

/// Pair of lattice sequences `(r, p)` over a frame window.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub r: Vec<f64>,
    pub p: Vec<f64>,
}

/// `J^{-1}` applied to a mode: inclusive prefix sums of `p` paired with `r`,
/// exclusive prefix sums of `r` paired with `p`, plus their limits to the right.
#[derive(Debug, Clone)]
struct Antidiff {
    on_r: Vec<f64>,
    on_p: Vec<f64>,
    total_on_r: f64,
    total_on_p: f64,
}

impl Antidiff {
    fn new(m: &Mode) -> Self {
        let w = m.r.len();
        let mut on_r = vec![0.0; w];
        let mut on_p = vec![0.0; w];
        let mut sp = 0.0;
        let mut sr = 0.0;
        for k in 0..w {
            sp += m.p[k];
            on_r[k] = sp;
            on_p[k] = sr;
            sr += m.r[k];
        }
        Antidiff { on_r, on_p, total_on_r: sp, total_on_p: sr }
    }
}

/// Which tangent or second-order direction of the wave family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Xi,
    C,
    XiXi,
    XiC,
    CC,
}

/// Lattice samples of `phi_c(j - xi)` and its derivatives in `xi` and `c` on the
/// window `j_min .. j_min + 2L`, with the prefix sums needed for `Omega`.
#[derive(Debug, Clone)]
pub struct WaveFrame {
    pub xi: f64,
    pub c: f64,
    pub j_min: i64,
    pub phi: Mode,
    pub d_xi: Mode,
    pub d_c: Mode,
    pub d_xixi: Mode,
    pub d_xic: Mode,
    pub d_cc: Mode,
    anti: [Antidiff; 5],
}

impl WaveFrame {
    pub fn new(jet: &ProfileJet, xi: f64) -> Self {
        let l = jet.half_period();
        let j_min = xi.floor() as i64 - l as i64;
        let s = jet.grid.lattice_sampler(xi, j_min, 2 * l);
        let mode = |r: &[_], p: &[_], order: u32| Mode { r: s.sample(r, order), p: s.sample(p, order) };
        let phi = mode(&jet.r, &jet.p, 0);
        let d_xi = mode(&jet.r, &jet.p, 1);
        let d_c = mode(&jet.dc_r, &jet.dc_p, 0);
        let d_xixi = mode(&jet.r, &jet.p, 2);
        let d_xic = mode(&jet.dc_r, &jet.dc_p, 1);
        let d_cc = mode(&jet.dcc_r, &jet.dcc_p, 0);
        let anti = [
            Antidiff::new(&d_xi),
            Antidiff::new(&d_c),
            Antidiff::new(&d_xixi),
            Antidiff::new(&d_xic),
            Antidiff::new(&d_cc),
        ];
        WaveFrame { xi, c: jet.c, j_min, phi, d_xi, d_c, d_xixi, d_xic, d_cc, anti }
    }

    /// The same frame translated by `n` sites.
    pub fn shifted(&self, n: i64) -> Self {
        let mut f = self.clone();
        f.xi += n as f64;
        f.j_min += n;
        f
    }

    pub fn width(&self) -> usize {
        self.phi.r.len()
    }

    pub fn j_end(&self) -> i64 {
        self.j_min + self.width() as i64
    }

    pub fn mode(&self, d: Direction) -> &Mode {
        match d {
            Direction::Xi => &self.d_xi,
            Direction::C => &self.d_c,
            Direction::XiXi => &self.d_xixi,
            Direction::XiC => &self.d_xic,
            Direction::CC => &self.d_cc,
        }
    }

    fn anti(&self, d: Direction) -> &Antidiff {
        &self.anti[d as usize]
    }

    /// `Omega(mode, g)` for a field on an arbitrary window. Sites of `g` left of
    /// the frame see zero prefix sums, sites right of it see the totals.
    pub fn omega_with(&self, d: Direction, g: &LatticeField) -> f64 {
        self.omega_slices(d, g.j_min, &g.r, &g.p)
    }

    pub fn omega_slices(&self, d: Direction, g_min: i64, gr: &[f64], gp: &[f64]) -> f64 {
        let a = self.anti(d);
        let lo = self.j_min.max(g_min);
        let hi = self.j_end().min(g_min + gr.len() as i64);
        let mut s = 0.0;
        if hi > lo {
            let fo = (lo - self.j_min) as usize;
            let go = (lo - g_min) as usize;
            let n = (hi - lo) as usize;
            s += dot(&a.on_r[fo..fo + n], &gr[go..go + n]) + dot(&a.on_p[fo..fo + n], &gp[go..go + n]);
        }
        let start = (self.j_end().max(g_min) - g_min) as usize;
        if start < gr.len() {
            let sr: f64 = gr[start..].iter().sum();
            let sp: f64 = gp[start..].iter().sum();
            s += a.total_on_r * sr + a.total_on_p * sp;
        }
        s
    }

    /// Pairing of two frame directions.
    pub fn omega_modes(&self, a: Direction, b: Direction) -> f64 {
        let m = self.mode(b);
        self.omega_slices(a, self.j_min, &m.r, &m.p)
    }

    /// Symplectic matrix of the neutral modes evaluated on the lattice.
    pub fn matrix_a(&self) -> Mat2 {
        use Direction::*;
        Mat2::new(self.omega_modes(Xi, Xi), self.omega_modes(Xi, C), self.omega_modes(C, Xi), self.omega_modes(C, C))
    }

    /// Second-derivative pairings with a deviation `eta`.
    pub fn matrix_b(&self, eta: &LatticeField) -> Mat2 {
        use Direction::*;
        let xx = self.omega_with(XiXi, eta);
        let xc = self.omega_with(XiC, eta);
        let cc = self.omega_with(CC, eta);
        Mat2::new(xx, xc, xc, cc)
    }

    /// Inner product of a frame sequence with a field on another window.
    /// Entry of a frame sequence at site `j`, zero off the frame.
    pub fn value_at(&self, seq: &[f64], j: i64) -> f64 {
        let k = j - self.j_min;
        if k >= 0 && (k as usize) < seq.len() {
            seq[k as usize]
        } else {
            0.0
        }
    }

    pub fn inner(&self, frame_seq: &[f64], g_min: i64, g: &[f64]) -> f64 {
        let lo = self.j_min.max(g_min);
        let hi = self.j_end().min(g_min + g.len() as i64);
        if hi <= lo {
            return 0.0;
        }
        let fo = (lo - self.j_min) as usize;
        let go = (lo - g_min) as usize;
        let n = (hi - lo) as usize;
        dot(&frame_seq[fo..fo + n], &g[go..go + n])
    }

    /// `phi` on the frame as a lattice field.
    pub fn wave_field(&self) -> LatticeField {
        LatticeField { j_min: self.j_min, r: self.phi.r.clone(), p: self.phi.p.clone() }
    }

    /// Adds `s * mode` into a field, over the overlap of the windows.
    pub fn add_mode_to(&self, s: f64, m: &Mode, g: &mut LatticeField) {
        let lo = self.j_min.max(g.j_min);
        let hi = self.j_end().min(g.j_end());
        for j in lo..hi {
            let f = (j - self.j_min) as usize;
            let k = (j - g.j_min) as usize;
            g.r[k] += s * m.r[f];
            g.p[k] += s * m.p[f];
        }
    }

    /// `(d_xi r^2, d_c r^2)` on the frame.
    pub fn square_gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let r = &self.phi.r;
        let gx = r.iter().zip(&self.d_xi.r).map(|(a, b)| 2.0 * a * b).collect();
        let gc = r.iter().zip(&self.d_c.r).map(|(a, b)| 2.0 * a * b).collect();
        (gx, gc)
    }

    /// `(d_xixi r^2, d_xic r^2, d_cc r^2)` on the frame.
    pub fn square_hessian(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let w = self.width();
        let r = &self.phi.r;
        let (x, c) = (&self.d_xi.r, &self.d_c.r);
        let xx = (0..w).map(|k| 2.0 * x[k] * x[k] + 2.0 * r[k] * self.d_xixi.r[k]).collect();
        let xc = (0..w).map(|k| 2.0 * x[k] * c[k] + 2.0 * r[k] * self.d_xic.r[k]).collect();
        let cc = (0..w).map(|k| 2.0 * c[k] * c[k] + 2.0 * r[k] * self.d_cc.r[k]).collect();
        (xx, xc, cc)
    }
}

/// Real 2x2 matrix in row-major order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a: [[f64; 2]; 2],
}

impl Mat2 {
    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a: [[a11, a12], [a21, a22]] }
    }

    pub fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2::new(self.a[1][1] / d, -self.a[0][1] / d, -self.a[1][0] / d, self.a[0][0] / d))
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a[0][0] * v[0] + self.a[0][1] * v[1], self.a[1][0] * v[0] + self.a[1][1] * v[1]]
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.a[i][0] * o.a[0][j] + self.a[i][1] * o.a[1][j];
            }
        }
        Mat2 { a: m }
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2::new(self.a[0][0] - o.a[0][0], self.a[0][1] - o.a[0][1], self.a[1][0] - o.a[1][0], self.a[1][1] - o.a[1][1])
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(s * self.a[0][0], s * self.a[0][1], s * self.a[1][0], s * self.a[1][1])
    }

    pub fn norm(&self) -> f64 {
        self.a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Smallest singular value.
    pub fn min_singular_value(&self) -> f64 {
        let f2 = self.a.iter().flatten().map(|v| v * v).sum::<f64>();
        let d = self.det().abs();
        let disc = (f2 * f2 - 4.0 * d * d).max(0.0).sqrt();
        (0.5 * (f2 - disc)).max(0.0).sqrt()
    }
}

/// Closed-form inverse of the neutral-mode matrix `[[0, a0], [-a0, a1]]`.
pub fn pairing_inverse(alpha0: f64, alpha1: f64) -> Mat2 {
    Mat2::new(alpha1, -alpha0, alpha0, 0.0).scale(1.0 / (alpha0 * alpha0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{apply_j, apply_j_inverse_unchecked};
    use crate::profile::ProfileFamily;

    #[test]
    fn frame_pairings_match_alphas() {
        let fam = ProfileFamily::new();
        let jet = fam.jet(1.015).unwrap();
        let al = jet.alphas();
        for &xi in &[0.0, 0.37, 12.81] {
            let f = WaveFrame::new(&jet, xi);
            let a = f.matrix_a();
            assert!(a.a[0][0].abs() < 1e-12);
            assert!((a.a[0][1] - al.alpha0).abs() < 1e-10 * al.alpha0);
            assert!((a.a[1][0] + al.alpha0).abs() < 1e-10 * al.alpha0);
            assert!((a.a[1][1] - al.alpha1).abs() < 1e-10 * al.alpha1.abs());
        }
    }

    #[test]
    fn omega_agrees_with_lattice_inverse() {
        let fam = ProfileFamily::new();
        let jet = fam.jet(1.02).unwrap();
        let f = WaveFrame::new(&jet, 3.3);
        // A field on a wider window than the frame.
        let j_min = f.j_min - 17;
        let w = f.width() + 40;
        let g = LatticeField {
            j_min,
            r: (0..w).map(|k| ((k as f64) * 0.37).sin() * (-((k as f64 - 150.0) / 20.0).powi(2)).exp()).collect(),
            p: (0..w).map(|k| ((k as f64) * 0.11).cos() * (-((k as f64 - 160.0) / 15.0).powi(2)).exp()).collect(),
        };
        let mut m = LatticeField::zeros(j_min, w);
        f.add_mode_to(1.0, &f.d_c, &mut m);
        let direct = apply_j_inverse_unchecked(&m).dot(&g);
        assert!((f.omega_with(Direction::C, &g) - direct).abs() < 1e-12 * direct.abs().max(1.0));
        // Omega(f, J g) = -<f, g>.
        let jg = apply_j(&g);
        let lhs = apply_j_inverse_unchecked(&m).dot(&jg);
        assert!((lhs + m.dot(&g)).abs() < 1e-10);
    }

    #[test]
    fn inverse_of_pairing_matrix() {
        let m = pairing_inverse(0.9, -120.0);
        let a = Mat2::new(0.0, 0.9, -0.9, -120.0);
        let id = m.mul(&a);
        assert!(id.sub(&Mat2::identity()).norm() < 1e-12);
        assert!((a.det() - 0.81).abs() < 1e-14);
        assert!((a.inverse().unwrap().sub(&m)).norm() < 1e-12);
    }
}
