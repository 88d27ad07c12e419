//! Classical fourth-order Runge-Kutta stepping on flat `f64` state vectors.

/// Scratch buffers for repeated RK4 steps of a fixed-size system.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Rk4 {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }

    /// Advances `y` from `t` to `t + dt`. The right-hand side receives the stage
    /// index (0 for `t`, 1 and 2 for the midpoint, 3 for `t + dt`) so callers can
    /// reuse tabulated coefficients.
    pub fn step<F>(&mut self, t: f64, dt: f64, y: &mut [f64], mut rhs: F)
    where
        F: FnMut(usize, f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        assert_eq!(n, self.k1.len(), "state size changed between steps");
        let half = 0.5 * dt;

        rhs(0, t, y, &mut self.k1);
        for i in 0..n {
            self.stage[i] = y[i] + half * self.k1[i];
        }
        rhs(1, t + half, &self.stage, &mut self.k2);
        for i in 0..n {
            self.stage[i] = y[i] + half * self.k2[i];
        }
        rhs(2, t + half, &self.stage, &mut self.k3);
        for i in 0..n {
            self.stage[i] = y[i] + dt * self.k3[i];
        }
        rhs(3, t + dt, &self.stage, &mut self.k4);
        let w = dt / 6.0;
        for i in 0..n {
            y[i] += w * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

/// Number of fixed steps of size close to `dt` covering `[0, t_end]`, and the
/// adjusted step that lands exactly on `t_end`.
pub fn step_count(dt: f64, t_end: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, dt);
    }
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    (n, t_end / n as f64)
}

pub fn all_finite(y: &[f64]) -> bool {
    y.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_is_fourth_order() {
        let err = |dt: f64| {
            let mut rk = Rk4::new(1);
            let mut y = [1.0];
            let (n, h) = step_count(dt, 1.0);
            for i in 0..n {
                rk.step(i as f64 * h, h, &mut y, |_, _, y, dy| dy[0] = y[0]);
            }
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn step_count_lands_on_end() {
        let (n, h) = step_count(0.05, 1.0);
        assert_eq!(n, 20);
        assert!((n as f64 * h - 1.0).abs() < 1e-15);
        let (n, h) = step_count(0.3, 1.0);
        assert_eq!(n, 4);
        assert!((h - 0.25).abs() < 1e-15);
    }
}
