//! Experiment configuration with a flat `key = value` file format that
//! round-trips losslessly (floats are written in shortest-exact form).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::problem::{ProblemKind, ProblemSpec, SolutionMode, SpectrumSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorChoice {
    Inverse,
    Natural,
    Identity,
    RankOne,
}

impl PriorChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            PriorChoice::Inverse => "inverse",
            PriorChoice::Natural => "natural",
            PriorChoice::Identity => "identity",
            PriorChoice::RankOne => "rank-one",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(PriorChoice::Inverse),
            "natural" => Ok(PriorChoice::Natural),
            "identity" => Ok(PriorChoice::Identity),
            "rank-one" => Ok(PriorChoice::RankOne),
            other => Err(Error::Config(format!("unknown prior {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolverChoice {
    Cg,
    BayesCg(PriorChoice),
    /// Krylov posterior with the given delay; `None` keeps the full factor
    /// set (test scale).
    Krylov { delay: Option<usize> },
}

/// Full description of one experiment run. The initial guess is always the
/// zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub solver: SolverChoice,
    pub reorthogonalize: bool,
    /// Fixed iteration count; `None` runs to the residual tolerance.
    pub iters: Option<usize>,
    pub tol: f64,
    pub sample_count: usize,
    pub alpha: f64,
    pub sample_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 100.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 100), got {}",
                self.alpha
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if self.problem.n == 0 {
            return Err(Error::Config("problem dimension must be positive".into()));
        }
        if let SolverChoice::Krylov { delay: Some(0) } = self.solver {
            return Err(Error::Config("krylov delay must be >= 1 (omit for full rank)".into()));
        }
        Ok(())
    }

    /// Serializes as sorted `key = value` lines.
    pub fn to_key_values(&self) -> String {
        let mut map = BTreeMap::new();
        map.insert("alpha".to_string(), fmt_f64(self.alpha));
        map.insert("reorthogonalize".to_string(), self.reorthogonalize.to_string());
        map.insert("sample_count".to_string(), self.sample_count.to_string());
        map.insert("sample_seed".to_string(), self.sample_seed.to_string());
        map.insert("tol".to_string(), fmt_f64(self.tol));
        if let Some(iters) = self.iters {
            map.insert("iters".to_string(), iters.to_string());
        }
        match &self.solver {
            SolverChoice::Cg => {
                map.insert("solver".to_string(), "cg".to_string());
            }
            SolverChoice::BayesCg(prior) => {
                map.insert("solver".to_string(), "bayescg".to_string());
                map.insert("solver.prior".to_string(), prior.as_str().to_string());
            }
            SolverChoice::Krylov { delay } => {
                map.insert("solver".to_string(), "krylov".to_string());
                map.insert(
                    "solver.delay".to_string(),
                    delay.map_or_else(|| "full".to_string(), |d| d.to_string()),
                );
            }
        }
        map.insert("problem.n".to_string(), self.problem.n.to_string());
        map.insert("problem.seed".to_string(), self.problem.seed.to_string());
        match &self.problem.solution {
            SolutionMode::SampledFromInverse => {
                map.insert("problem.solution".to_string(), "sampled-from-inverse".to_string());
            }
            SolutionMode::AllOnes => {
                map.insert("problem.solution".to_string(), "all-ones".to_string());
            }
            SolutionMode::Explicit(values) => {
                map.insert("problem.solution".to_string(), "explicit".to_string());
                let list: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
                map.insert("problem.solution.values".to_string(), list.join(","));
            }
        }
        match &self.problem.kind {
            ProblemKind::PrescribedSpectrum { spectrum } => {
                map.insert("problem.kind".to_string(), "prescribed-spectrum".to_string());
                match spectrum {
                    SpectrumSpec::Geometric { kappa } => {
                        map.insert("problem.spectrum".to_string(), "geometric".to_string());
                        map.insert("problem.spectrum.kappa".to_string(), fmt_f64(*kappa));
                    }
                    SpectrumSpec::Strakos { lam_min, lam_max, rho } => {
                        map.insert("problem.spectrum".to_string(), "strakos".to_string());
                        map.insert("problem.spectrum.lam_min".to_string(), fmt_f64(*lam_min));
                        map.insert("problem.spectrum.lam_max".to_string(), fmt_f64(*lam_max));
                        map.insert("problem.spectrum.rho".to_string(), fmt_f64(*rho));
                    }
                }
            }
            ProblemKind::MatrixMarketPreconditioned { path, drop_tol } => {
                map.insert("problem.kind".to_string(), "matrix-market-preconditioned".to_string());
                map.insert("problem.path".to_string(), path.display().to_string());
                map.insert("problem.drop_tol".to_string(), fmt_f64(*drop_tol));
            }
            ProblemKind::Explicit { path } => {
                map.insert("problem.kind".to_string(), "explicit".to_string());
                map.insert("problem.path".to_string(), path.display().to_string());
            }
        }
        let mut out = String::new();
        for (k, v) in map {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Parses the `key = value` format produced by [`to_key_values`].
    ///
    /// [`to_key_values`]: Self::to_key_values
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str| -> Result<&String> {
            map.get(key)
                .ok_or_else(|| Error::Config(format!("missing key {key:?}")))
        };
        let parse_f64 = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad float for {key:?}")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad integer for {key:?}")))
        };
        let parse_u64 = |key: &str| -> Result<u64> {
            get(key)?
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad integer for {key:?}")))
        };

        let solver = match get("solver")?.as_str() {
            "cg" => SolverChoice::Cg,
            "bayescg" => SolverChoice::BayesCg(PriorChoice::parse(get("solver.prior")?)?),
            "krylov" => {
                let delay = match get("solver.delay")?.as_str() {
                    "full" => None,
                    d => Some(d.parse::<usize>().map_err(|_| {
                        Error::Config("bad integer for \"solver.delay\"".into())
                    })?),
                };
                SolverChoice::Krylov { delay }
            }
            other => return Err(Error::Config(format!("unknown solver {other:?}"))),
        };

        let solution = match get("problem.solution")?.as_str() {
            "sampled-from-inverse" => SolutionMode::SampledFromInverse,
            "all-ones" => SolutionMode::AllOnes,
            "explicit" => {
                let values: Result<Vec<f64>> = get("problem.solution.values")?
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config("bad float in solution values".into()))
                    })
                    .collect();
                SolutionMode::Explicit(values?)
            }
            other => return Err(Error::Config(format!("unknown solution mode {other:?}"))),
        };

        let kind = match get("problem.kind")?.as_str() {
            "prescribed-spectrum" => {
                let spectrum = match get("problem.spectrum")?.as_str() {
                    "geometric" => SpectrumSpec::Geometric {
                        kappa: parse_f64("problem.spectrum.kappa")?,
                    },
                    "strakos" => SpectrumSpec::Strakos {
                        lam_min: parse_f64("problem.spectrum.lam_min")?,
                        lam_max: parse_f64("problem.spectrum.lam_max")?,
                        rho: parse_f64("problem.spectrum.rho")?,
                    },
                    other => {
                        return Err(Error::Config(format!("unknown spectrum {other:?}")))
                    }
                };
                ProblemKind::PrescribedSpectrum { spectrum }
            }
            "matrix-market-preconditioned" => ProblemKind::MatrixMarketPreconditioned {
                path: PathBuf::from(get("problem.path")?),
                drop_tol: parse_f64("problem.drop_tol")?,
            },
            "explicit" => ProblemKind::Explicit {
                path: PathBuf::from(get("problem.path")?),
            },
            other => return Err(Error::Config(format!("unknown problem kind {other:?}"))),
        };

        let cfg = Self {
            problem: ProblemSpec {
                kind,
                n: parse_usize("problem.n")?,
                seed: parse_u64("problem.seed")?,
                solution,
            },
            solver,
            reorthogonalize: match get("reorthogonalize")?.as_str() {
                "true" => true,
                "false" => false,
                other => return Err(Error::Config(format!("bad boolean {other:?}"))),
            },
            iters: match map.get("iters") {
                Some(v) => Some(
                    v.parse::<usize>()
                        .map_err(|_| Error::Config("bad integer for \"iters\"".into()))?,
                ),
                None => None,
            },
            tol: parse_f64("tol")?,
            sample_count: parse_usize("sample_count")?,
            alpha: parse_f64("alpha")?,
            sample_seed: parse_u64("sample_seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Shortest representation that parses back to the identical f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemSpec {
                kind: ProblemKind::PrescribedSpectrum {
                    spectrum: SpectrumSpec::Strakos {
                        lam_min: 0.1,
                        lam_max: 1e4,
                        rho: 0.9,
                    },
                },
                n: 48,
                seed: 7,
                solution: SolutionMode::AllOnes,
            },
            solver: SolverChoice::Krylov { delay: Some(4) },
            reorthogonalize: true,
            iters: Some(120),
            tol: 1e-8,
            sample_count: 10,
            alpha: 95.0,
            sample_seed: 11,
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let cfg = sample_config();
        let text = cfg.to_key_values();
        let back = ExperimentConfig::from_key_values(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_key_values(), text);
    }

    #[test]
    fn explicit_solution_round_trips() {
        let mut cfg = sample_config();
        cfg.problem.solution = SolutionMode::Explicit(vec![0.1, -2.5e-7, 3.0]);
        let back = ExperimentConfig::from_key_values(&cfg.to_key_values()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn full_delay_round_trips() {
        let mut cfg = sample_config();
        cfg.solver = SolverChoice::Krylov { delay: None };
        let back = ExperimentConfig::from_key_values(&cfg.to_key_values()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_key_is_config_error() {
        let err = ExperimentConfig::from_key_values("solver = cg\n").unwrap_err();
        assert!(err.is_config(), "{err}");
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = sample_config();
        let text = format!("# experiment\n\n{}", cfg.to_key_values());
        assert_eq!(ExperimentConfig::from_key_values(&text).unwrap(), cfg);
    }

    #[test]
    fn zero_delay_rejected() {
        let mut cfg = sample_config();
        cfg.solver = SolverChoice::Krylov { delay: Some(0) };
        assert!(cfg.validate().is_err());
    }
}
