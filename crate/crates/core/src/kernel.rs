//! First-kind Bessel functions and the explicit kernel of the free lattice
//! wave group `exp(J t)`.

use crate::error::{Error, Result};
use crate::lattice::LatticeField;

pub const MAX_ORDER: i64 = 100_000;
pub const MAX_ARGUMENT: f64 = 1e4;

/// Kernel entries below this magnitude are dropped.
pub const KERNEL_CUTOFF: f64 = 1e-14;

/// `J_0(x), ..., J_{n_max}(x)` by downward recurrence from well above the
/// turning point, normalized with `J_0 + 2 sum_k J_{2k} = 1`.
pub fn bessel_table(x: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(0.0..=MAX_ARGUMENT).contains(&x) || n_max as i64 > MAX_ORDER {
        return Err(Error::Domain(format!("Bessel order {n_max} / argument {x} out of range")));
    }
    if x == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        return Ok(v);
    }
    let start = n_max.max(x.ceil() as usize) + 40 + (12.0 * x.cbrt()).ceil() as usize;
    let start = start + start % 2;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-280;
    let mut norm = 0.0;
    for n in (1..=start).rev() {
        let prev = 2.0 * n as f64 / x * vals[n] - vals[n + 1];
        vals[n - 1] = prev;
        if prev.abs() > 1e250 {
            let s = 1e-250;
            vals[n - 1..].iter_mut().for_each(|v| *v *= s);
            norm *= s;
        }
        if (n - 1) % 2 == 0 && n > 1 {
            norm += 2.0 * vals[n - 1];
        }
    }
    norm += vals[0];
    vals.truncate(n_max + 1);
    vals.iter_mut().for_each(|v| *v /= norm);
    Ok(vals)
}

/// `J_n(x)` for any integer order, with `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(n: i64, x: f64) -> Result<f64> {
    if n.abs() > MAX_ORDER {
        return Err(Error::Domain(format!("Bessel order {n} out of range")));
    }
    let v = bessel_table(x, n.unsigned_abs() as usize)?[n.unsigned_abs() as usize];
    Ok(if n < 0 && n % 2 != 0 { -v } else { v })
}

/// `exp(J t)` as a convolution: `(exp(Jt) u)(j) = sum_k Phi(j - k, t) u(k)` with
/// `Phi(d, t) = [[J_{2d}, -J_{2d+1}], [-J_{2d-1}, J_{2d}]]` at argument `2t`.
#[derive(Debug, Clone)]
pub struct WaveKernel {
    pub t: f64,
    table: Vec<f64>,
    /// Largest `|d|` with a non-negligible entry.
    pub reach: i64,
}

impl WaveKernel {
    pub fn new(t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("kernel time {t} is negative")));
        }
        let x = 2.0 * t;
        let guess = (x + 20.0 + 10.0 * x.cbrt()).ceil() as usize;
        let table = bessel_table(x, guess)?;
        let last = table.iter().rposition(|v| v.abs() >= KERNEL_CUTOFF).unwrap_or(0);
        let reach = (last as i64 + 1) / 2 + 1;
        Ok(WaveKernel { t, table, reach })
    }

    /// `J_n(2t)` from the stored table.
    pub fn j(&self, n: i64) -> f64 {
        let a = n.unsigned_abs() as usize;
        let v = self.table.get(a).copied().unwrap_or(0.0);
        if n < 0 && n % 2 != 0 {
            -v
        } else {
            v
        }
    }

    pub fn matrix(&self, d: i64) -> [[f64; 2]; 2] {
        [[self.j(2 * d), -self.j(2 * d + 1)], [-self.j(2 * d - 1), self.j(2 * d)]]
    }

    /// `sum_n J_n(2t)^2`, equal to one.
    pub fn unitarity(&self) -> f64 {
        self.table[0] * self.table[0] + 2.0 * self.table[1..].iter().map(|v| v * v).sum::<f64>()
    }
}

/// Free propagation `exp(J t) u` on the window of `u`. The field must vanish
/// within the kernel reach of both window edges.
pub fn propagate_free(u: &LatticeField, t: f64) -> Result<LatticeField> {
    let k = WaveKernel::new(t)?;
    let w = u.len();
    let reach = k.reach as usize;
    let edge = |v: &[f64]| {
        let n = reach.min(w);
        v[..n].iter().chain(&v[w - n..]).fold(0.0f64, |m, x| m.max(x.abs()))
    };
    let mass = edge(&u.r).max(edge(&u.p));
    if mass > crate::lattice::BOUNDARY_TOL || 2 * reach >= w {
        return Err(Error::InvalidWindow(format!(
            "window of {w} sites too small for the light cone of reach {reach} (edge mass {mass:.2e})"
        )));
    }
    let mut out = LatticeField::zeros(u.j_min, w);
    let mats: Vec<[[f64; 2]; 2]> = (-k.reach..=k.reach).map(|d| k.matrix(d)).collect();
    for j in 0..w as i64 {
        let (mut r, mut p) = (0.0, 0.0);
        let lo = (j - k.reach).max(0);
        let hi = (j + k.reach).min(w as i64 - 1);
        for src in lo..=hi {
            let m = &mats[(j - src + k.reach) as usize];
            let (ur, up) = (u.r[src as usize], u.p[src as usize]);
            r += m[0][0] * ur + m[0][1] * up;
            p += m[1][0] * ur + m[1][1] * up;
        }
        out.r[j as usize] = r;
        out.p[j as usize] = p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: u32, x: f64) -> f64 {
        let mut term = (0.5 * x).powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>();
        let mut sum = term;
        for k in 1..80 {
            term *= -(0.25 * x * x) / (k as f64 * (k + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j(-2, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn matches_power_series() {
        assert!((bessel_j(1, 2.0).unwrap() - 0.576_724_807_756_873_4).abs() < 1e-12);
        for &x in &[0.3, 1.7, 6.0, 11.5] {
            for n in 0..12 {
                let s = series(n, x);
                assert!((bessel_j(n as i64, x).unwrap() - s).abs() < 1e-12, "J_{n}({x})");
            }
        }
    }

    #[test]
    fn reflection_for_negative_orders() {
        for n in 1..6 {
            let a = bessel_j(n, 3.3).unwrap();
            let b = bessel_j(-n, 3.3).unwrap();
            assert_eq!(b, if n % 2 == 0 { a } else { -a });
        }
    }

    #[test]
    fn derivative_recurrence_at_large_argument() {
        let h = 1e-4;
        for &x in &[50.0, 400.0, 3000.0] {
            for &n in &[0i64, 7, 49, 51, (x as i64) - 3, (x as i64) + 10] {
                let d = (bessel_j(n, x + h).unwrap() - bessel_j(n, x - h).unwrap()) / (2.0 * h);
                let res = 2.0 * d - bessel_j(n - 1, x).unwrap() + bessel_j(n + 1, x).unwrap();
                assert!(res.abs() < 1e-9, "n = {n}, x = {x}: {res}");
            }
        }
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert!(bessel_j(0, -1.0).is_err());
        assert!(bessel_j(200_000, 1.0).is_err());
        assert!(bessel_j(0, 2e4).is_err());
    }

    #[test]
    fn kernel_is_unitary_and_starts_at_identity() {
        for &t in &[1.0, 5.0, 20.0] {
            let k = WaveKernel::new(t).unwrap();
            assert!((k.unitarity() - 1.0).abs() < 1e-10);
        }
        let k0 = WaveKernel::new(0.0).unwrap();
        assert_eq!(k0.matrix(0), [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(k0.matrix(1), [[0.0, 0.0], [0.0, 0.0]]);
    }
}
