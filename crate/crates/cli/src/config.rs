//! Flat `key = value` run configuration with per-command key tables.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use fput_core::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "FPUT_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

/// A documented configuration key.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(name: &'static str, default: &'static str, doc: &'static str) -> Key {
    Key { name, default, doc }
}

const OUT: Key = key("out", "", "output directory; empty means $FPUT_OUTPUT_ROOT/<command>");
const C: Key = key("c", "1.015", "wave speed c* (> 1)");
const SIGMA: Key = key("sigma", "0.07", "heterogeneity strength");
const DIST: Key = key("distribution", "uniform_pm_sqrt3", "uniform_pm_sqrt3 | rademacher | truncated_gaussian(alpha)");
const SEED: Key = key("seed", "2024", "master seed of the spring coefficients");
const REALIZATION: Key = key("realization", "0", "realization index");
const DT: Key = key("dt", "0.05", "lattice time step");
const PAD: Key = key("pad", "50", "extra sites on both sides of the light cone");
const VARIANT: Key = key("variant", "full", "tail variant: full | homogeneous");
const STEPS: Key = key("steps_per_site", "24", "tail steps per site of wave travel");

#[derive(Debug)]
pub struct Command {
    pub name: &'static str,
    pub about: &'static str,
    pub keys: &'static [Key],
}

pub const COMMANDS: &[Command] = &[
    Command {
        name: "profile",
        about: "Solve the traveling-wave profile and write samples with residuals",
        keys: &[OUT, C],
    },
    Command {
        name: "simulate",
        about: "Integrate the heterogeneous lattice from a solitary wave and write field snapshots",
        keys: &[
            OUT,
            C,
            SIGMA,
            DIST,
            SEED,
            REALIZATION,
            DT,
            PAD,
            key("t_end", "1200", "final time"),
            key("snapshots", "0,40,1200", "comma-separated snapshot times"),
            key("energy_stride", "20", "steps between energy records"),
        ],
    },
    Command {
        name: "fit",
        about: "Simulate and fit modulation parameters along the trajectory",
        keys: &[
            OUT,
            C,
            SIGMA,
            DIST,
            SEED,
            REALIZATION,
            DT,
            PAD,
            key("t_end", "200", "final time"),
            key("stride", "20", "steps between fits"),
        ],
    },
    Command {
        name: "modulate",
        about: "Integrate the modulation equations, optionally alongside direct fits",
        keys: &[
            OUT,
            C,
            SIGMA,
            DIST,
            SEED,
            REALIZATION,
            DT,
            PAD,
            key("t_end", "200", "final time"),
            key("stride", "20", "steps between records"),
            key("compare_fit", "false", "also simulate and fit the same realization"),
        ],
    },
    Command {
        name: "expand",
        about: "First- and second-order parameter corrections for one realization",
        keys: &[
            OUT,
            C,
            SIGMA,
            DIST,
            SEED,
            REALIZATION,
            VARIANT,
            STEPS,
            key("t_end", "200", "final time"),
            key("stride", "24", "tail steps between records"),
        ],
    },
    Command {
        name: "tail",
        about: "Radiative tails of both variants for one realization",
        keys: &[
            OUT,
            C,
            DIST,
            SEED,
            REALIZATION,
            STEPS,
            key("t_end", "300", "final time"),
            key("stride", "24", "tail steps between norm records"),
            key("snapshots", "", "comma-separated snapshot times (multiples of the record spacing)"),
        ],
    },
    Command {
        name: "response",
        about: "Co-moving limit of the single-site response and the limiting tail",
        keys: &[
            OUT,
            C,
            key("variant", "homogeneous", "tail variant: full | homogeneous"),
            STEPS,
            key("route", "single", "single | snapshot | kernel"),
            key("phases", "8", "lattice phases sampled in [0, 1)"),
            key("j_range", "-150,40", "window of response sites relative to the wave"),
            key("m_range", "-400,80", "window of forced sites relative to the wave"),
            key("tol", "1e-8", "snapshot route: distance tolerance"),
            key("nodes_per_site", "40", "kernel route: quadrature nodes per site"),
            DIST,
            SEED,
            key("tail_realizations", "1", "limiting-tail samples to write"),
        ],
    },
    Command {
        name: "rate",
        about: "Attenuation-rate table over a geometric speed grid",
        keys: &[
            OUT,
            key("variant", "both", "full | homogeneous | both"),
            key("c_min", "1.004", "smallest speed"),
            key("c_max", "1.03", "largest speed"),
            key("c_grid", "8", "number of speeds"),
            key("p_samples", "8", "lattice phases in the average"),
            key("steps_per_site", "32", "tail steps per site"),
            key("tol", "1e-8", "relative change that ends the site sum"),
        ],
    },
    Command {
        name: "limit-ode",
        about: "Slow-time amplitude equation driven by the attenuation rate",
        keys: &[
            OUT,
            key("variant", "both", "full | homogeneous | both; a missing variant is written as NaN"),
            key("c_star", "1.015", "initial speed"),
            key("c_min", "1.004", "smallest tabulated speed"),
            key("c_grid", "8", "number of tabulated speeds"),
            key("rate_table", "", "rate.csv from a previous run; empty computes the table"),
            key("p_samples", "8", "lattice phases in the average"),
            key("steps_per_site", "32", "tail steps per site"),
            key("tau_end", "100", "final slow time"),
            key("dtau", "0.001", "slow-time step"),
            key("stride", "100", "steps between records"),
        ],
    },
    Command {
        name: "ensemble",
        about: "Monte Carlo statistics over realizations of a pipeline stage",
        keys: &[
            OUT,
            key("pipeline", "fit", "fit | first_order | second_order"),
            C,
            key("sigma", "0.1", "heterogeneity strength"),
            DIST,
            SEED,
            key("realizations", "100", "number of realizations"),
            key("t_end", "100", "final time"),
            DT,
            PAD,
            key("stride", "40", "fit pipeline: steps between records"),
            VARIANT,
            STEPS,
            key("tail_stride", "24", "second-order pipeline: tail steps between records"),
        ],
    },
];

pub fn command(name: &str) -> Option<&'static Command> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Resolved values for one command; every key of its table is present.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static Command,
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    pub fn defaults(command: &'static Command) -> Self {
        let values = command.keys.iter().map(|k| (k.name, k.default.to_string())).collect();
        RunConfig { command, values }
    }

    fn lookup(&self, name: &str) -> Option<&'static Key> {
        self.command.keys.iter().find(|k| k.name == name || k.name.replace('_', "-") == name)
    }

    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let k = self
            .lookup(name)
            .ok_or_else(|| Error::Config(format!("unknown key '{name}' for command {}", self.command.name)))?;
        self.values.insert(k.name, value.trim().to_string());
        Ok(())
    }

    /// Applies a `key = value` document; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
            let k = k.trim();
            if k == "command" {
                if v.trim() != self.command.name {
                    return Err(Error::Config(format!(
                        "{origin}:{}: file is for command '{}', not '{}'",
                        n + 1,
                        v.trim(),
                        self.command.name
                    )));
                }
                continue;
            }
            self.set(k, v).map_err(|e| Error::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("key {name} is not declared"))
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.raw(name).parse().map_err(|e| Error::Config(format!("key '{name}' = '{}': {e}", self.raw(name))))
    }

    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.raw(name)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::Config(format!("key '{name}' item '{s}': {e}"))))
            .collect()
    }

    pub fn pair<T: FromStr + Copy>(&self, name: &str) -> Result<(T, T)>
    where
        T::Err: Display,
    {
        match self.list::<T>(name)?.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => Err(Error::Config(format!("key '{name}' needs two comma-separated values"))),
        }
    }

    pub fn flag(&self, name: &str) -> Result<bool> {
        match self.raw(name) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(Error::Config(format!("key '{name}' = '{v}' is not a boolean"))),
        }
    }

    /// Output directory: the `out` key, else `<root>/<command>`.
    pub fn out_dir(&self) -> PathBuf {
        match self.raw("out") {
            "" => {
                let root = std::env::var(OUTPUT_ROOT_VAR).unwrap_or_else(|_| DEFAULT_OUTPUT_ROOT.to_string());
                PathBuf::from(root).join(self.command.name)
            }
            d => PathBuf::from(d),
        }
    }

    /// Entries in table order, with `out` resolved.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut v = vec![("command".to_string(), self.command.name.to_string())];
        for k in self.command.keys {
            let value = if k.name == "out" { self.out_dir().display().to_string() } else { self.raw(k.name).to_string() };
            v.push((k.name.to_string(), value));
        }
        v
    }
}
