//! Experiment configuration: flat `key = value` text, one pair per line.
//! Repeating a key appends to its list. `#` starts a comment.
//!
//! ```text
//! recipe = barrier-suite
//! dim = 1
//! sigma = 1.0
//! sigma = 1.5
//! tau_gap = 0.5
//! b_frac = 0.5
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlocal::QuadratureConfig;
use crate::params::{check_hypotheses, EllipticityParams, UniversalConstants};

pub const RECIPES: [&str; 5] = ["eval-suite", "barrier-suite", "abp-suite", "solve-suite", "regularity-sweep"];

/// Either explicit τ values or gaps m with τ = σ − m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TauSpec {
    Values(Vec<f64>),
    Gaps(Vec<f64>),
}

/// Either explicit b values or fractions of the largest b allowed by H3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DriftSpec {
    Values(Vec<f64>),
    Fractions(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub recipe: String,
    pub dim: usize,
    pub sigma: Vec<f64>,
    pub tau: TauSpec,
    pub lambda_lo: Vec<f64>,
    pub lambda_hi: Vec<f64>,
    pub b: DriftSpec,
    pub a0: f64,
    /// Gaps give τ = min(σ − m, tau_cap).
    pub tau_cap: f64,
    pub radius: f64,
    pub spacing: f64,
    pub quadrature: QuadratureConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    /// Recipe-specific keys that are not part of the common schema.
    pub extra: BTreeMap<String, Vec<String>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            recipe: "eval-suite".into(),
            dim: 1,
            sigma: vec![1.5],
            tau: TauSpec::Gaps(vec![0.5]),
            lambda_lo: vec![1.0],
            lambda_hi: vec![2.0],
            b: DriftSpec::Fractions(vec![0.5]),
            a0: 1.0,
            tau_cap: 0.99,
            radius: 2.0,
            spacing: 1.0 / 64.0,
            quadrature: QuadratureConfig::default(),
            out: PathBuf::from("out"),
            seed: 0,
            threads: 1,
            extra: BTreeMap::new(),
        }
    }
}

/// One parameter point of the grid, or the reason it was skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub params: EllipticityParams,
    pub skip: Option<String>,
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|e| Error::Config(format!("{key} = {v}: {e}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse::<usize>().map_err(|e| Error::Config(format!("{key} = {v}: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {v}: expected a boolean"))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", ln + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", ln + 1)));
            }
            map.entry(k.to_string()).or_default().push(v.trim().to_string());
        }
        Self::from_map(map)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn from_map(mut map: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let single = |map: &mut BTreeMap<String, Vec<String>>, key: &str| -> Result<Option<String>> {
            match map.remove(key) {
                None => Ok(None),
                Some(mut v) if v.len() == 1 => Ok(v.pop()),
                Some(_) => Err(Error::Config(format!("`{key}` may appear only once"))),
            }
        };
        let list = |map: &mut BTreeMap<String, Vec<String>>, key: &str| -> Result<Option<Vec<f64>>> {
            map.remove(key).map(|vs| vs.iter().map(|v| parse_f64(key, v)).collect()).transpose()
        };
        if let Some(r) = single(&mut map, "recipe")? {
            cfg.recipe = r;
        }
        if let Some(d) = single(&mut map, "dim")? {
            cfg.dim = parse_usize("dim", &d)?;
        }
        if let Some(s) = list(&mut map, "sigma")? {
            cfg.sigma = s;
        }
        match (list(&mut map, "tau")?, list(&mut map, "tau_gap")?) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `tau` or `tau_gap`".into())),
            (Some(t), None) => cfg.tau = TauSpec::Values(t),
            (None, Some(m)) => cfg.tau = TauSpec::Gaps(m),
            (None, None) => {}
        }
        if let Some(l) = list(&mut map, "lambda")? {
            cfg.lambda_lo = l;
        }
        if let Some(l) = list(&mut map, "Lambda")? {
            cfg.lambda_hi = l;
        }
        match (list(&mut map, "b")?, list(&mut map, "b_frac")?) {
            (Some(_), Some(_)) => return Err(Error::Config("give either `b` or `b_frac`".into())),
            (Some(b), None) => cfg.b = DriftSpec::Values(b),
            (None, Some(f)) => cfg.b = DriftSpec::Fractions(f),
            (None, None) => {}
        }
        if let Some(v) = single(&mut map, "a0")? {
            cfg.a0 = parse_f64("a0", &v)?;
        }
        if let Some(v) = single(&mut map, "tau_cap")? {
            cfg.tau_cap = parse_f64("tau_cap", &v)?;
        }
        if let Some(v) = single(&mut map, "radius")? {
            cfg.radius = parse_f64("radius", &v)?;
        }
        if let Some(v) = single(&mut map, "spacing")? {
            cfg.spacing = parse_f64("spacing", &v)?;
        }
        if let Some(v) = single(&mut map, "out")? {
            cfg.out = PathBuf::from(v);
        }
        if let Some(v) = single(&mut map, "seed")? {
            cfg.seed = v.trim().parse().map_err(|e| Error::Config(format!("seed = {v}: {e}")))?;
        }
        if let Some(v) = single(&mut map, "threads")? {
            cfg.threads = parse_usize("threads", &v)?;
        }
        let q = &mut cfg.quadrature;
        if let Some(v) = single(&mut map, "quad.r_inner")? {
            q.r_inner = Some(parse_f64("quad.r_inner", &v)?);
        }
        if let Some(v) = single(&mut map, "quad.r_outer")? {
            q.r_outer = Some(parse_f64("quad.r_outer", &v)?);
        }
        if let Some(v) = single(&mut map, "quad.rings_per_decade")? {
            q.rings_per_decade = parse_usize("quad.rings_per_decade", &v)?;
        }
        if let Some(v) = single(&mut map, "quad.angular_points")? {
            q.angular_points = parse_usize("quad.angular_points", &v)?;
        }
        if let Some(v) = single(&mut map, "quad.points_per_segment")? {
            q.points_per_segment = parse_usize("quad.points_per_segment", &v)?;
        }
        if let Some(v) = single(&mut map, "quad.taylor_inner")? {
            q.taylor_inner = parse_bool("quad.taylor_inner", &v)?;
        }
        cfg.extra = map;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !RECIPES.contains(&self.recipe.as_str()) {
            return Err(Error::Config(format!("unknown recipe `{}` (known: {})", self.recipe, RECIPES.join(", "))));
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Config(format!("dim = {} not in {{1, 2}}", self.dim)));
        }
        if !(self.radius > 0.0 && self.spacing > 0.0 && self.spacing < self.radius) {
            return Err(Error::Config("need 0 < spacing < radius".into()));
        }
        let empty = match (&self.tau, &self.b) {
            (TauSpec::Values(t) | TauSpec::Gaps(t), DriftSpec::Values(b) | DriftSpec::Fractions(b)) => t.is_empty() || b.is_empty(),
        };
        if self.sigma.is_empty() || self.lambda_lo.is_empty() || self.lambda_hi.is_empty() || empty {
            return Err(Error::Config("parameter lists must be nonempty".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Recipe-specific scalar, or `default` when absent.
    pub fn extra_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.extra.get(key).and_then(|v| v.last()) {
            Some(v) => parse_f64(key, v),
            None => Ok(default),
        }
    }

    pub fn extra_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.extra.get(key).and_then(|v| v.last()) {
            Some(v) => parse_usize(key, v),
            None => Ok(default),
        }
    }

    pub fn extra_str(&self, key: &str, default: &str) -> String {
        self.extra.get(key).and_then(|v| v.last()).cloned().unwrap_or_else(|| default.to_string())
    }

    /// Cartesian product σ × τ × λ × Λ × b in that nesting order. Points
    /// failing validation or H1–H3 carry a skip reason.
    pub fn grid(&self) -> Vec<GridPoint> {
        let universal = UniversalConstants { a0: self.a0, ..UniversalConstants::default() };
        let taus = match &self.tau {
            TauSpec::Values(t) | TauSpec::Gaps(t) => t.clone(),
        };
        let bs = match &self.b {
            DriftSpec::Values(b) | DriftSpec::Fractions(b) => b.clone(),
        };
        let mut out = Vec::new();
        for &s in &self.sigma {
            for &t in &taus {
                let tau = match self.tau {
                    TauSpec::Values(_) => t,
                    TauSpec::Gaps(_) => (s - t).min(self.tau_cap),
                };
                for &lo in &self.lambda_lo {
                    for &hi in &self.lambda_hi {
                        for &bv in &bs {
                            let mut p = EllipticityParams::new(s, tau, lo, hi, 0.0, self.dim).with_universal(universal);
                            p.b = match self.b {
                                DriftSpec::Values(_) => bv,
                                DriftSpec::Fractions(_) => bv * p.b_max(),
                            };
                            let skip = match p.validate().and_then(|_| check_hypotheses(&p)) {
                                Err(e) => Some(e.to_string()),
                                Ok(h) if !h.all_pass() => Some(format!("hypotheses fail: {}", h.failures().join(", "))),
                                Ok(_) => None,
                            };
                            out.push(GridPoint { index: out.len(), params: p, skip });
                        }
                    }
                }
            }
        }
        out
    }
}
