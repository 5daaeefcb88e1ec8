//! Run configuration as flat `key = value` text.
//!
//! Every run can echo its effective configuration with [`RunConfig::to_text`];
//! feeding that text back through [`RunConfig::parse`] reproduces the run.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gbp::SolverConfig;
use crate::graph::{Connectivity, NonLocalConfig};
use crate::io::KITTI_DEPTH_SCALE;
use crate::metrics::{DEFAULT_ALPHA, DEFAULT_THETAS};
use crate::potentials::{PotentialConfig, DEFAULT_W_MIN};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub nonlocal_steps: usize,
    pub epsilon_cavity: f64,
    pub early_stop_tol: Option<f64>,
    pub record_trace: bool,

    pub w_meas: f64,
    pub lambda_smooth: f64,
    pub sigma_color: f64,
    pub w_min: f64,
    pub beta_const: f64,

    pub connectivity: Connectivity,
    pub k_nonlocal: usize,
    pub search_radius: usize,
    pub patch_radius: usize,
    pub min_distance: usize,

    pub seed: u64,
    /// Meters per unit for 16-bit PGM depth files.
    pub depth_scale: f64,
    pub alpha: f64,
    pub thetas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nl = NonLocalConfig::default();
        Self {
            iterations: 5,
            nonlocal_steps: 1,
            epsilon_cavity: 1e-12,
            early_stop_tol: None,
            record_trace: false,
            w_meas: 1.0,
            lambda_smooth: 1.0,
            sigma_color: 0.1,
            w_min: DEFAULT_W_MIN,
            beta_const: 0.3,
            connectivity: Connectivity::Eight,
            k_nonlocal: nl.k,
            search_radius: nl.search_radius,
            patch_radius: nl.patch_radius,
            min_distance: nl.min_distance,
            seed: 0,
            depth_scale: KITTI_DEPTH_SCALE,
            alpha: DEFAULT_ALPHA,
            thetas: DEFAULT_THETAS.to_vec(),
        }
    }
}

pub const KEYS: [&str; 19] = [
    "iterations",
    "nonlocal_steps",
    "epsilon_cavity",
    "early_stop_tol",
    "record_trace",
    "w_meas",
    "lambda_smooth",
    "sigma_color",
    "w_min",
    "beta_const",
    "connectivity",
    "k_nonlocal",
    "search_radius",
    "patch_radius",
    "min_distance",
    "seed",
    "depth_scale",
    "alpha",
    "thetas",
];

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Parses `key = value` lines on top of the defaults. Unknown keys are
    /// rejected; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its text form. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "iterations" => self.iterations = parse_value(&key, value)?,
            "nonlocal_steps" => self.nonlocal_steps = parse_value(&key, value)?,
            "epsilon_cavity" => self.epsilon_cavity = parse_value(&key, value)?,
            "early_stop_tol" => {
                self.early_stop_tol = match value {
                    "" | "none" => None,
                    v => Some(parse_value(&key, v)?),
                }
            }
            "record_trace" => self.record_trace = parse_value(&key, value)?,
            "w_meas" => self.w_meas = parse_value(&key, value)?,
            "lambda_smooth" => self.lambda_smooth = parse_value(&key, value)?,
            "sigma_color" => self.sigma_color = parse_value(&key, value)?,
            "w_min" => self.w_min = parse_value(&key, value)?,
            "beta_const" => self.beta_const = parse_value(&key, value)?,
            "connectivity" => self.connectivity = value.parse()?,
            "k_nonlocal" => self.k_nonlocal = parse_value(&key, value)?,
            "search_radius" => self.search_radius = parse_value(&key, value)?,
            "patch_radius" => self.patch_radius = parse_value(&key, value)?,
            "min_distance" => self.min_distance = parse_value(&key, value)?,
            "seed" => self.seed = parse_value(&key, value)?,
            "depth_scale" => self.depth_scale = parse_value(&key, value)?,
            "alpha" => self.alpha = parse_value(&key, value)?,
            "thetas" => {
                self.thetas = value
                    .split(',')
                    .map(|t| parse_value(&key, t.trim()))
                    .collect::<Result<_>>()?
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.solver_config::<f64>().validate()?;
        self.potential_config::<f64>().validate()?;
        if self.k_nonlocal > 0 {
            self.nonlocal_config().validate()?;
        }
        if !(self.depth_scale > 0.0) {
            return Err(Error::InvalidParameter("depth_scale must be positive".into()));
        }
        if self.thetas.iter().any(|&t| !(t > 1.0)) {
            return Err(Error::InvalidParameter("thetas must exceed 1".into()));
        }
        Ok(())
    }

    /// Canonical text form, one key per line, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let tol = self
            .early_stop_tol
            .map_or_else(|| "none".to_string(), |t| t.to_string());
        let thetas = self
            .thetas
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let pairs: [(&str, String); 19] = [
            ("iterations", self.iterations.to_string()),
            ("nonlocal_steps", self.nonlocal_steps.to_string()),
            ("epsilon_cavity", self.epsilon_cavity.to_string()),
            ("early_stop_tol", tol),
            ("record_trace", self.record_trace.to_string()),
            ("w_meas", self.w_meas.to_string()),
            ("lambda_smooth", self.lambda_smooth.to_string()),
            ("sigma_color", self.sigma_color.to_string()),
            ("w_min", self.w_min.to_string()),
            ("beta_const", self.beta_const.to_string()),
            ("connectivity", self.connectivity.to_string()),
            ("k_nonlocal", self.k_nonlocal.to_string()),
            ("search_radius", self.search_radius.to_string()),
            ("patch_radius", self.patch_radius.to_string()),
            ("min_distance", self.min_distance.to_string()),
            ("seed", self.seed.to_string()),
            ("depth_scale", self.depth_scale.to_string()),
            ("alpha", self.alpha.to_string()),
            ("thetas", thetas),
        ];
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn solver_config<T: Scalar>(&self) -> SolverConfig<T> {
        SolverConfig {
            iterations: self.iterations,
            nonlocal_steps: self.nonlocal_steps,
            epsilon_cavity: T::lit(self.epsilon_cavity),
            early_stop_tol: self.early_stop_tol.map(T::lit),
            record_trace: self.record_trace,
        }
    }

    pub fn potential_config<T: Scalar>(&self) -> PotentialConfig<T> {
        PotentialConfig {
            w_meas: T::lit(self.w_meas),
            lambda_smooth: T::lit(self.lambda_smooth),
            sigma_color: T::lit(self.sigma_color),
            w_min: T::lit(self.w_min),
            beta_const: T::lit(self.beta_const),
        }
    }

    pub fn nonlocal_config(&self) -> NonLocalConfig {
        NonLocalConfig {
            k: self.k_nonlocal,
            search_radius: self.search_radius,
            patch_radius: self.patch_radius,
            min_distance: self.min_distance,
        }
    }
}
