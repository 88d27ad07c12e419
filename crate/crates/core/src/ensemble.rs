//! Seeded heterogeneity realizations and streaming Monte Carlo statistics.

use std::fmt;
use std::str::FromStr;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use statrs::function::erf::erf;

use crate::error::{Error, ErrorClass, Result};
use crate::lattice::SpringCoefficients;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Law of the spring perturbations; every variant has mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    UniformPmSqrt3,
    Rademacher,
    /// Standard normal truncated to `[-a, a]` and rescaled to unit variance, so
    /// that the support is `[-alpha, alpha]`; requires `alpha > sqrt(3)`.
    TruncatedGaussian { alpha: f64 },
}

impl Distribution {
    pub fn support(&self) -> f64 {
        match *self {
            Distribution::UniformPmSqrt3 => SQRT3,
            Distribution::Rademacher => 1.0,
            Distribution::TruncatedGaussian { alpha } => alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Distribution::TruncatedGaussian { alpha } = *self {
            if !(alpha > SQRT3 && alpha.is_finite()) {
                return Err(Error::Config(format!("truncated gaussian support {alpha} must exceed sqrt(3)")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::UniformPmSqrt3 => write!(f, "uniform_pm_sqrt3"),
            Distribution::Rademacher => write!(f, "rademacher"),
            Distribution::TruncatedGaussian { alpha } => write!(f, "truncated_gaussian({alpha})"),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "uniform_pm_sqrt3" | "uniform" => return Ok(Distribution::UniformPmSqrt3),
            "rademacher" => return Ok(Distribution::Rademacher),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("truncated_gaussian(").and_then(|r| r.strip_suffix(')')) {
            let alpha: f64 = rest.trim().parse().map_err(|_| Error::Config(format!("bad support in {s}")))?;
            let d = Distribution::TruncatedGaussian { alpha };
            d.validate()?;
            return Ok(d);
        }
        Err(Error::Config(format!("unknown distribution {s}")))
    }
}

/// Standard deviation of a standard normal conditioned on `|z| <= a`.
fn truncated_sd(a: f64) -> f64 {
    let mass = erf(a / std::f64::consts::SQRT_2);
    let dens = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (1.0 - 2.0 * a * dens / mass).sqrt()
}

/// Truncation point `a` with `a / sd(a) = alpha`, by bisection.
fn truncation_point(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (1e-6, alpha);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid / truncated_sd(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn unit_open(rng: &mut ChaCha12Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Stateless per-site sampler: the value at `(seed, realization, site)` does not
/// depend on which other sites are drawn or in which order.
#[derive(Debug, Clone)]
pub struct KappaSampler {
    dist: Distribution,
    seed: u64,
    cut: f64,
    scale: f64,
}

impl KappaSampler {
    pub fn new(dist: Distribution, seed: u64) -> Result<Self> {
        dist.validate()?;
        let (cut, scale) = match dist {
            Distribution::TruncatedGaussian { alpha } => {
                let a = truncation_point(alpha);
                (a, 1.0 / truncated_sd(a))
            }
            _ => (0.0, 1.0),
        };
        Ok(KappaSampler { dist, seed, cut, scale })
    }

    fn rng(&self, realization: u64, site: i64) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&realization.to_le_bytes());
        key[16..24].copy_from_slice(b"kappa\0\0\0");
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(site as u64);
        rng
    }

    pub fn value(&self, realization: u64, site: i64) -> f64 {
        let mut rng = self.rng(realization, site);
        match self.dist {
            Distribution::UniformPmSqrt3 => (2.0 * unit_open(&mut rng) - 1.0) * SQRT3,
            Distribution::Rademacher => {
                if rng.next_u64() >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Distribution::TruncatedGaussian { .. } => loop {
                let u1 = unit_open(&mut rng);
                let u2 = unit_open(&mut rng);
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                if z.abs() <= self.cut {
                    break (z * self.scale).clamp(-self.dist.support(), self.dist.support());
                }
            },
        }
    }

    pub fn values(&self, realization: u64, j_min: i64, width: usize) -> Vec<f64> {
        (0..width as i64).map(|k| self.value(realization, j_min + k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub distribution: Distribution,
    pub sigma: f64,
    pub c_star: f64,
    pub realizations: usize,
    pub master_seed: u64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if !(self.sigma >= 0.0) || self.sigma * self.distribution.support() >= 1.0 {
            return Err(Error::Config(format!(
                "sigma = {} with support {} violates sigma * alpha < 1",
                self.sigma,
                self.distribution.support()
            )));
        }
        Ok(())
    }
}

/// Realization `index` of the spring coefficients on a window.
pub fn sample_kappa(cfg: &EnsembleConfig, index: u64, j_min: i64, width: usize) -> Result<SpringCoefficients> {
    cfg.validate()?;
    let s = KappaSampler::new(cfg.distribution, cfg.master_seed)?;
    SpringCoefficients::new(j_min, s.values(index, j_min, width), cfg.sigma, cfg.distribution.support())
}

/// Heterogeneity confined to sites `j >= first`.
pub fn sample_kappa_from(cfg: &EnsembleConfig, index: u64, j_min: i64, width: usize, first: i64) -> Result<SpringCoefficients> {
    let mut k = sample_kappa(cfg, index, j_min, width)?;
    for (i, v) in k.kappa.iter_mut().enumerate() {
        if j_min + (i as i64) < first {
            *v = 0.0;
        }
    }
    Ok(k)
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Welford) {
        if o.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *o;
            return;
        }
        let n = (self.count + o.count) as f64;
        let d = o.mean - self.mean;
        self.mean += d * o.count as f64 / n;
        self.m2 += o.m2 + d * d * (self.count as f64) * (o.count as f64) / n;
        self.count += o.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Per-time statistics of named scalar series.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub t: Vec<f64>,
    pub names: Vec<String>,
    /// `stats[q][i]`: quantity `q` at time `t[i]`.
    pub stats: Vec<Vec<Welford>>,
    pub completed: usize,
    pub failed: Vec<(usize, String)>,
}

impl EnsembleStats {
    pub fn new(t: Vec<f64>, names: Vec<String>) -> Self {
        let stats = vec![vec![Welford::default(); t.len()]; names.len()];
        EnsembleStats { t, names, stats, completed: 0, failed: Vec::new() }
    }

    pub fn quantity(&self, name: &str) -> Option<&[Welford]> {
        self.names.iter().position(|n| n == name).map(|q| self.stats[q].as_slice())
    }

    fn absorb(&mut self, series: &[Vec<f64>]) -> Result<()> {
        if series.len() != self.names.len() || series.iter().any(|s| s.len() != self.t.len()) {
            return Err(Error::Consistency("realization returned series of the wrong shape".into()));
        }
        for (acc, s) in self.stats.iter_mut().zip(series) {
            for (w, &x) in acc.iter_mut().zip(s) {
                w.push(x);
            }
        }
        self.completed += 1;
        Ok(())
    }
}

/// Largest fraction of failed realizations tolerated.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Runs `realization(i)` for `i in 0..n` in parallel. Results are folded into
/// the statistics in index order, so output is independent of scheduling and
/// thread count. Realizations that lose coherence or fail to fit are counted
/// and excluded; other errors abort.
pub fn run_ensemble<F>(n: usize, t: Vec<f64>, names: Vec<String>, realization: F) -> Result<EnsembleStats>
where
    F: Fn(usize) -> Result<Vec<Vec<f64>>> + Sync,
{
    let mut out = EnsembleStats::new(t, names);
    let chunk = (4 * rayon::current_num_threads()).max(1);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let results: Vec<Result<Vec<Vec<f64>>>> = (start..end).into_par_iter().map(&realization).collect();
        for (i, r) in (start..end).zip(results) {
            match r {
                Ok(series) => out.absorb(&series)?,
                Err(e) if matches!(e.class(), ErrorClass::Coherence | ErrorClass::Convergence) => {
                    out.failed.push((i, e.to_string()))
                }
                Err(e) => return Err(e),
            }
        }
        start = end;
    }
    if out.failed.len() as f64 > MAX_FAILURE_FRACTION * n as f64 {
        return Err(Error::CoherenceLost(format!(
            "{} of {n} realizations failed; first: {}",
            out.failed.len(),
            out.failed[0].1
        )));
    }
    Ok(out)
}
