//! Run configuration: a flat key-value document with dotted keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rig_ident::estimator::HeuristicConfig;
use rig_ident::rig::{Param, ParameterMask, RigParameters};
use rig_ident::sim::SolverConfig;

/// Initial guesses for the nine-parameter estimation.
pub fn default_guesses() -> RigParameters {
    RigParameters::nominal()
        .with(Param::Jm, 4.0e-4)
        .with(Param::Cm, 19.0e-5)
        .with(Param::Ke, 601.6e-4)
        .with(Param::Kt, 1.2e-1)
        .with(Param::Rm, 3.3e-1)
        .with(Param::Lm, 1.1e-3)
        .with(Param::Ks, 2.6e-1)
        .with(Param::J1, 28.3e-3)
        .with(Param::Tf, 1.0e-1)
}

pub const DEFAULT_VERIFY_SIGMAS: [f64; 4] = [0.001, 0.01, 0.1, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Parameter file; nominal values when absent.
    pub parameters: Option<PathBuf>,
    pub solver: SolverConfig,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Misfit scale used by `estimate9`.
    pub misfit_sigma: f64,
    pub heuristic: HeuristicConfig,
    /// Parameters freed by `estimate9`.
    pub mask: ParameterMask,
    pub guesses: RigParameters,
    /// Reference for the deviation report; nominal values when absent.
    pub reference: Option<PathBuf>,
    pub verify_sigmas: Vec<f64>,
    pub verify_guess: [f64; 2],
    pub verify_max_iterations: usize,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub synthetic_truth: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            parameters: None,
            solver: SolverConfig::default(),
            noise_sigma: 0.01,
            seed: 42,
            misfit_sigma: 1.0,
            heuristic: HeuristicConfig::default(),
            mask: ParameterMask::all(),
            guesses: default_guesses(),
            reference: None,
            verify_sigmas: DEFAULT_VERIFY_SIGMAS.to_vec(),
            verify_guess: [0.001, 0.01],
            verify_max_iterations: 2000,
            out: None,
            data: None,
            synthetic_truth: None,
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (key, value) in table {
        let full = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            toml::Value::Table(inner) => flatten(&full, inner, out),
            other => {
                out.insert(full, other.clone());
            }
        }
    }
}

fn number(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => bail!("`{key}`: expected a number, found {}", other.type_str()),
    }
}

fn count(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => bail!("`{key}`: expected a non-negative integer, found {other}"),
    }
}

fn path(key: &str, v: &toml::Value, base: &Path) -> Result<PathBuf> {
    match v {
        toml::Value::String(s) => Ok(base.join(s)),
        other => bail!(
            "`{key}`: expected a path string, found {}",
            other.type_str()
        ),
    }
}

impl RunConfig {
    /// Parses a configuration document. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let table: toml::Table = text.parse()?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);

        let mut cfg = Self::default();
        for (key, value) in &flat {
            match key.as_str() {
                "parameters" => cfg.parameters = Some(path(key, value, base)?),
                "solver.dt" => cfg.solver.dt = number(key, value)?,
                "solver.t_end" => cfg.solver.t_end = number(key, value)?,
                "noise.sigma_n" => cfg.noise_sigma = number(key, value)?,
                "noise.seed" => cfg.seed = count(key, value)?,
                "estimation.sigma_n" => cfg.misfit_sigma = number(key, value)?,
                "estimation.budget" => cfg.heuristic.budget = count(key, value)? as usize,
                "estimation.steady_tol" => cfg.heuristic.steady_tol = number(key, value)?,
                "estimation.max_cycles" => cfg.heuristic.max_cycles = count(key, value)? as usize,
                "estimation.mask" => {
                    let toml::Value::Array(items) = value else {
                        bail!("`{key}`: expected an array of parameter names");
                    };
                    let names = items
                        .iter()
                        .map(|v| match v {
                            toml::Value::String(s) => s
                                .parse::<Param>()
                                .map_err(|_| anyhow!("`{key}`: unknown parameter `{s}`")),
                            other => {
                                Err(anyhow!("`{key}`: expected a parameter name, found {other}"))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    cfg.mask = ParameterMask::new(names);
                }
                "estimation.reference" => cfg.reference = Some(path(key, value, base)?),
                "verify2.sigmas" => {
                    let toml::Value::Array(items) = value else {
                        bail!("`{key}`: expected an array of numbers");
                    };
                    cfg.verify_sigmas = items
                        .iter()
                        .map(|v| number(key, v))
                        .collect::<Result<_>>()?;
                }
                "verify2.guess.cm" => cfg.verify_guess[0] = number(key, value)?,
                "verify2.guess.ke" => cfg.verify_guess[1] = number(key, value)?,
                "verify2.max_iterations" => cfg.verify_max_iterations = count(key, value)? as usize,
                "paths.out" => cfg.out = Some(path(key, value, base)?),
                "paths.data" => cfg.data = Some(path(key, value, base)?),
                "paths.synthetic_truth" => cfg.synthetic_truth = Some(path(key, value, base)?),
                other => {
                    let name = other
                        .strip_prefix("estimation.guess.")
                        .ok_or_else(|| anyhow!("unknown configuration key `{other}`"))?;
                    let p: Param = name
                        .parse()
                        .map_err(|_| anyhow!("unknown configuration key `{other}`"))?;
                    cfg.guesses.set(p, number(key, value)?);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            bail!(
                "noise.sigma_n must be finite and >= 0, got {}",
                self.noise_sigma
            );
        }
        if !(self.misfit_sigma > 0.0 && self.misfit_sigma.is_finite()) {
            bail!(
                "estimation.sigma_n must be finite and > 0, got {}",
                self.misfit_sigma
            );
        }
        if self.heuristic.budget == 0 || self.heuristic.max_cycles == 0 {
            bail!("estimation.budget and estimation.max_cycles must be >= 1");
        }
        if !(self.heuristic.steady_tol >= 0.0) {
            bail!("estimation.steady_tol must be >= 0");
        }
        if self.mask.len() < 2 {
            bail!("estimation.mask must name at least two parameters");
        }
        for p in Param::ALL {
            let g = self.guesses.get(p);
            if !(g.is_finite() && g > 0.0) {
                bail!("estimation.guess.{p} must be finite and > 0, got {g}");
            }
        }
        if self.verify_sigmas.is_empty()
            || self
                .verify_sigmas
                .iter()
                .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            bail!("verify2.sigmas must be a non-empty list of finite values >= 0");
        }
        if self
            .verify_guess
            .iter()
            .any(|g| !(g.is_finite() && *g > 0.0))
        {
            bail!("verify2.guess values must be finite and > 0");
        }
        if self.verify_max_iterations == 0 {
            bail!("verify2.max_iterations must be >= 1");
        }
        Ok(())
    }

    /// The full default document, one key per line.
    pub fn defaults_document() -> String {
        let d = Self::default();
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# parameters = \"rig.toml\"   # parameter file; nominal values when absent"
        );
        let _ = writeln!(s, "solver.dt = {:?}", d.solver.dt);
        let _ = writeln!(s, "solver.t_end = {:?}", d.solver.t_end);
        let _ = writeln!(s, "noise.sigma_n = {:?}", d.noise_sigma);
        let _ = writeln!(s, "noise.seed = {}", d.seed);
        let _ = writeln!(s, "estimation.sigma_n = {:?}", d.misfit_sigma);
        let _ = writeln!(s, "estimation.budget = {}", d.heuristic.budget);
        let _ = writeln!(s, "estimation.steady_tol = {:?}", d.heuristic.steady_tol);
        let _ = writeln!(s, "estimation.max_cycles = {}", d.heuristic.max_cycles);
        let names: Vec<String> = d.mask.iter().map(|p| format!("\"{p}\"")).collect();
        let _ = writeln!(s, "estimation.mask = [{}]", names.join(", "));
        for p in Param::ALL {
            let _ = writeln!(s, "estimation.guess.{} = {:?}", p.name(), d.guesses.get(p));
        }
        let _ = writeln!(
            s,
            "# estimation.reference = \"reference.toml\"   # nominal values when absent"
        );
        let sigmas: Vec<String> = d.verify_sigmas.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "verify2.sigmas = [{}]", sigmas.join(", "));
        let _ = writeln!(s, "verify2.guess.cm = {:?}", d.verify_guess[0]);
        let _ = writeln!(s, "verify2.guess.ke = {:?}", d.verify_guess[1]);
        let _ = writeln!(s, "verify2.max_iterations = {}", d.verify_max_iterations);
        let _ = writeln!(
            s,
            "# paths.out = \"out\"   # falls back to $RIG_IDENT_OUT, then the working directory"
        );
        let _ = writeln!(s, "# paths.data = \"measurements.csv\"");
        let _ = writeln!(s, "# paths.synthetic_truth = \"truth.toml\"");
        s
    }

    pub fn rig_parameters(&self) -> Result<RigParameters> {
        match &self.parameters {
            Some(p) => Ok(RigParameters::load(p)?),
            None => Ok(RigParameters::nominal()),
        }
    }

    pub fn reference_parameters(&self) -> Result<RigParameters> {
        match &self.reference {
            Some(p) => Ok(RigParameters::load(p)?),
            None => Ok(RigParameters::nominal()),
        }
    }
}
