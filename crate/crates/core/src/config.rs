//! The flat `key = value` configuration format: UTF-8 text, `#` comments,
//! unknown keys rejected, every value type-checked.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::equilibrium::{EquilibriumParams, StatisticsKind};
use crate::error::ConfigError;
use crate::grid::{AngularQuadrature, MomentumGrid};
use crate::solver::{Perturbation, PerturbationKind, SimulationConfig, SpatialMode};

const KNOWN_KEYS: &[&str] = &[
    "stats",
    "a",
    "c",
    "pmax",
    "n",
    "ntheta",
    "nphi",
    "spatial",
    "nx",
    "dt",
    "t_end",
    "output_every",
    "conservation_fix",
    "perturbation",
    "amplitude",
    "center",
    "width",
    "seed",
];

const REQUIRED_KEYS: &[&str] =
    &["stats", "a", "c", "pmax", "n", "ntheta", "nphi", "dt", "t_end"];

/// A parsed and validated configuration file.
#[derive(Clone, Debug)]
pub struct FileConfig {
    pub stats: StatisticsKind,
    pub a: f64,
    pub c: f64,
    pub pmax: f64,
    pub n: usize,
    pub ntheta: usize,
    pub nphi: usize,
    pub spatial: SpatialMode,
    pub dt: f64,
    pub t_end: f64,
    pub output_every: usize,
    pub conservation_fix: bool,
    pub perturbation: Perturbation,
    pub seed: u64,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: lineno + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key));
            }
            if map.insert(key.clone(), (lineno + 1, value)).is_some() {
                return Err(ConfigError::Parse {
                    line: lineno + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        for key in REQUIRED_KEYS {
            if !map.contains_key(*key) {
                return Err(ConfigError::MissingKey(key.to_string()));
            }
        }

        let get = |key: &str| map.get(key).map(|(_, v)| v.as_str());
        let parse_f64 = |key: &str| -> Result<f64, ConfigError> {
            let v = get(key).unwrap();
            v.parse::<f64>().map_err(|_| ConfigError::InvalidValue {
                key: key.to_string(),
                message: format!("`{v}` is not a number"),
            })
        };
        let parse_usize = |key: &str, default: usize| -> Result<usize, ConfigError> {
            match get(key) {
                None => Ok(default),
                Some(v) => v.parse::<usize>().map_err(|_| ConfigError::InvalidValue {
                    key: key.to_string(),
                    message: format!("`{v}` is not a nonnegative integer"),
                }),
            }
        };

        let stats = match get("stats").unwrap() {
            "boson" => StatisticsKind::Boson,
            "fermion" => StatisticsKind::Fermion,
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "stats".into(),
                    message: format!("`{other}` is neither `boson` nor `fermion`"),
                })
            }
        };
        let a = parse_f64("a")?;
        let c = parse_f64("c")?;
        EquilibriumParams::new(a, c, stats).map_err(|e| ConfigError::InvalidValue {
            key: "a".into(),
            message: e.to_string(),
        })?;

        let pmax = parse_f64("pmax")?;
        let n = parse_usize("n", 0)?;
        MomentumGrid::new(pmax, n).map_err(|message| ConfigError::InvalidValue {
            key: "n".into(),
            message,
        })?;
        let ntheta = parse_usize("ntheta", 0)?;
        let nphi = parse_usize("nphi", 0)?;
        AngularQuadrature::new(ntheta, nphi).map_err(|message| ConfigError::InvalidValue {
            key: "ntheta".into(),
            message,
        })?;

        let spatial = match get("spatial").unwrap_or("none") {
            "none" => SpatialMode::None,
            "torus1d" => {
                let nx = parse_usize("nx", 0)?;
                if nx < 8 {
                    return Err(ConfigError::InvalidValue {
                        key: "nx".into(),
                        message: format!("torus1d needs nx >= 8, got {nx}"),
                    });
                }
                SpatialMode::Torus1d { nx }
            }
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "spatial".into(),
                    message: format!("`{other}` is neither `none` nor `torus1d`"),
                })
            }
        };

        let dt = parse_f64("dt")?;
        if !(dt > 0.0) {
            return Err(ConfigError::InvalidValue {
                key: "dt".into(),
                message: format!("dt must be positive, got {dt}"),
            });
        }
        let t_end = parse_f64("t_end")?;
        if !(t_end >= dt) {
            return Err(ConfigError::InvalidValue {
                key: "t_end".into(),
                message: format!("t_end must be at least dt, got {t_end}"),
            });
        }
        if let SpatialMode::Torus1d { nx } = spatial {
            // |p_hat| < 1, so dt <= dx keeps the transport foot within one
            // stencil cell per substep.
            let dx = crate::solver::TORUS_LENGTH / nx as f64;
            if dt > dx {
                return Err(ConfigError::InvalidValue {
                    key: "dt".into(),
                    message: format!("transport needs dt <= dx = {dx:.6}, got {dt}"),
                });
            }
        }

        let output_every = parse_usize("output_every", 1)?.max(1);
        let conservation_fix = match get("conservation_fix").unwrap_or("off") {
            "on" => true,
            "off" => false,
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "conservation_fix".into(),
                    message: format!("`{other}` is neither `on` nor `off`"),
                })
            }
        };

        let kind = match get("perturbation").unwrap_or("none") {
            "none" => PerturbationKind::None,
            "gaussian" => PerturbationKind::Gaussian,
            "gaussian-f" => PerturbationKind::GaussianF,
            "noise" => PerturbationKind::Noise,
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "perturbation".into(),
                    message: format!(
                        "`{other}` is not one of none|gaussian|gaussian-f|noise"
                    ),
                })
            }
        };
        let amplitude = match get("amplitude") {
            None => 0.0,
            Some(_) => parse_f64("amplitude")?,
        };
        let width = match get("width") {
            None => 1.0,
            Some(_) => {
                let w = parse_f64("width")?;
                if !(w > 0.0) {
                    return Err(ConfigError::InvalidValue {
                        key: "width".into(),
                        message: format!("width must be positive, got {w}"),
                    });
                }
                w
            }
        };
        let center = match get("center") {
            None => [0.0; 3],
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(ConfigError::InvalidValue {
                        key: "center".into(),
                        message: format!("expected three comma-separated numbers, got `{v}`"),
                    });
                }
                let mut out = [0.0; 3];
                for (d, part) in parts.iter().enumerate() {
                    out[d] = part.parse::<f64>().map_err(|_| ConfigError::InvalidValue {
                        key: "center".into(),
                        message: format!("`{part}` is not a number"),
                    })?;
                }
                out
            }
        };
        let seed = match get("seed") {
            None => 0,
            Some(v) => v.parse::<u64>().map_err(|_| ConfigError::InvalidValue {
                key: "seed".into(),
                message: format!("`{v}` is not a nonnegative integer"),
            })?,
        };

        Ok(Self {
            stats,
            a,
            c,
            pmax,
            n,
            ntheta,
            nphi,
            spatial,
            dt,
            t_end,
            output_every,
            conservation_fix,
            perturbation: Perturbation { kind, amplitude, center, width },
            seed,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Builds the runtime configuration (grids, quadratures, parameters).
    pub fn build(&self) -> SimulationConfig {
        SimulationConfig {
            params: EquilibriumParams::new(self.a, self.c, self.stats).expect("validated"),
            grid: MomentumGrid::new(self.pmax, self.n).expect("validated"),
            angular: AngularQuadrature::new(self.ntheta, self.nphi).expect("validated"),
            spatial: self.spatial,
            dt: self.dt,
            t_end: self.t_end,
            output_every: self.output_every,
            conservation_fix: self.conservation_fix,
            perturbation: self.perturbation,
            seed: self.seed,
        }
    }

    /// Canonical `key = value` rendering (what `validate-config` echoes).
    pub fn normalized(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "stats = {}", self.stats.name());
        let _ = writeln!(out, "a = {}", self.a);
        let _ = writeln!(out, "c = {}", self.c);
        let _ = writeln!(out, "pmax = {}", self.pmax);
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "ntheta = {}", self.ntheta);
        let _ = writeln!(out, "nphi = {}", self.nphi);
        match self.spatial {
            SpatialMode::None => {
                let _ = writeln!(out, "spatial = none");
            }
            SpatialMode::Torus1d { nx } => {
                let _ = writeln!(out, "spatial = torus1d");
                let _ = writeln!(out, "nx = {nx}");
            }
        }
        let _ = writeln!(out, "dt = {}", self.dt);
        let _ = writeln!(out, "t_end = {}", self.t_end);
        let _ = writeln!(out, "output_every = {}", self.output_every);
        let _ = writeln!(
            out,
            "conservation_fix = {}",
            if self.conservation_fix { "on" } else { "off" }
        );
        let kind = match self.perturbation.kind {
            PerturbationKind::None => "none",
            PerturbationKind::Gaussian => "gaussian",
            PerturbationKind::GaussianF => "gaussian-f",
            PerturbationKind::Noise => "noise",
        };
        let _ = writeln!(out, "perturbation = {kind}");
        let _ = writeln!(out, "amplitude = {}", self.perturbation.amplitude);
        let _ = writeln!(
            out,
            "center = {},{},{}",
            self.perturbation.center[0], self.perturbation.center[1], self.perturbation.center[2]
        );
        let _ = writeln!(out, "width = {}", self.perturbation.width);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }
}
