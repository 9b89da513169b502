//! TOML run configuration.
//!
//! ```toml
//! [packing]
//! explicit = [[2]]                      # or: vector = { sizes = [[1.0], [2.0]], capacity = [3.0] }
//!
//! [rates]
//! lambda = [1.0]
//! mu = [1.0]
//!
//! [[policy]]                            # a single [policy] table also works
//! policy = "grand-zp"
//! p = 0.96
//!
//! [run]
//! r = 1000.0
//! warmup_time = 10.0
//! measure_time = 50.0
//! start = "stationary"                  # or "empty"
//!
//! [sweep]
//! r_grid = [100.0, 1000.0, 10000.0]
//! replicas = 8
//! seed = 1
//! include_1e5 = false
//! ```

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use grand_core::engine::{DiagnosticParams, StartMode};
use grand_core::{PackingSet, Policy, RunSpec};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackingSection {
    pub explicit: Option<Vec<Vec<i64>>>,
    pub vector: Option<VectorSection>,
    /// Needed only when `explicit` is empty of hints about the type count.
    pub types: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSection {
    pub sizes: Vec<Vec<f64>>,
    pub capacity: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub policy: String,
    pub p: Option<f64>,
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PolicyList {
    One(PolicySection),
    Many(Vec<PolicySection>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub r: Option<f64>,
    pub warmup_time: Option<f64>,
    pub measure_time: Option<f64>,
    pub start: Option<String>,
    pub epsilon: Option<f64>,
    pub s: Option<f64>,
    pub c: Option<f64>,
    pub snapshots: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub r_grid: Option<Vec<f64>>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub include_1e5: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub packing: PackingSection,
    pub rates: RatesSection,
    pub policy: Option<PolicyList>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

pub const DEFAULT_R: f64 = 1000.0;
pub const DEFAULT_R_GRID: [f64; 3] = [100.0, 1000.0, 10000.0];
pub const DEFAULT_REPLICAS: usize = 8;

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub packing: Arc<PackingSet>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub policies: Vec<Policy>,
    pub run: RunSection,
    pub r_grid: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::from_raw(raw)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let packing = Arc::new(build_packing(&raw.packing, raw.rates.lambda.len())?);
        let n = packing.num_types();
        if raw.rates.lambda.len() != n || raw.rates.mu.len() != n {
            bail!("[rates] needs {n} entries in lambda and mu");
        }
        let policies = match raw.policy {
            None => bail!("at least one [policy] section is required"),
            Some(PolicyList::One(p)) => vec![parse_policy(&p)?],
            Some(PolicyList::Many(ps)) => ps.iter().map(parse_policy).collect::<Result<_>>()?,
        };
        if policies.is_empty() {
            bail!("at least one [policy] section is required");
        }
        let mut r_grid = raw.sweep.r_grid.unwrap_or_else(|| DEFAULT_R_GRID.to_vec());
        if raw.sweep.include_1e5 && r_grid.last().is_none_or(|&r| r < 1e5) {
            r_grid.push(1e5);
        }
        if r_grid.is_empty() || r_grid.windows(2).any(|w| w[0] >= w[1]) || r_grid.iter().any(|r| !(*r >= 1.0)) {
            bail!("[sweep] r_grid must be nonempty, strictly increasing and at least 1");
        }
        let replicas = raw.sweep.replicas.unwrap_or(DEFAULT_REPLICAS);
        if replicas == 0 {
            bail!("[sweep] replicas must be at least 1");
        }
        if let Some(start) = &raw.run.start {
            parse_start(start)?;
        }
        Ok(Self {
            packing,
            lambda: raw.rates.lambda,
            mu: raw.rates.mu,
            policies,
            run: raw.run,
            r_grid,
            replicas,
            seed: raw.sweep.seed.unwrap_or(0),
        })
    }

    /// Offered load per type after normalization.
    pub fn rho(&self) -> Vec<f64> {
        let load: f64 = self.lambda.iter().zip(&self.mu).map(|(l, m)| l / m).sum();
        self.lambda.iter().zip(&self.mu).map(|(l, m)| l / m / load).collect()
    }

    /// Run template for one policy and scale with the `[run]` overrides applied.
    pub fn run_spec(&self, policy: Policy, r: f64) -> Result<RunSpec> {
        let mut spec = RunSpec::new(self.packing.clone(), self.lambda.clone(), self.mu.clone(), r, policy)?;
        let run = &self.run;
        if let Some(t) = run.warmup_time {
            spec.warmup_time = t;
        }
        if let Some(t) = run.measure_time {
            spec.measure_time = t;
        }
        if let Some(start) = &run.start {
            spec.start = parse_start(start)?;
        }
        let d = DiagnosticParams::default();
        spec.diagnostics = DiagnosticParams {
            epsilon: run.epsilon.unwrap_or(d.epsilon),
            s: run.s.unwrap_or(d.s),
            c: run.c.or(d.c),
        };
        if let Some(n) = run.snapshots {
            spec.snapshots = n;
        }
        Ok(spec)
    }
}

fn build_packing(section: &PackingSection, rate_len: usize) -> Result<PackingSet> {
    match (&section.explicit, &section.vector) {
        (Some(configs), None) => {
            let types = section.types.or_else(|| configs.first().map(Vec::len)).unwrap_or(rate_len);
            Ok(PackingSet::build_explicit(types, configs)?)
        }
        (None, Some(v)) => Ok(PackingSet::build_vector_packing(&v.sizes, &v.capacity)?),
        _ => bail!("[packing] needs exactly one of `explicit` or `vector`"),
    }
}

fn parse_policy(p: &PolicySection) -> Result<Policy> {
    match (p.policy.as_str(), p.p, p.a) {
        ("grand-zp", Some(exp), None) => Ok(Policy::grand_zp(exp)?),
        ("grand-az", None, Some(a)) => Ok(Policy::grand_az(a)?),
        ("grand-zp", _, _) => bail!("policy grand-zp takes exactly the key `p`"),
        ("grand-az", _, _) => bail!("policy grand-az takes exactly the key `a`"),
        (other, _, _) => bail!("unknown policy {other:?}, expected \"grand-zp\" or \"grand-az\""),
    }
}

fn parse_start(s: &str) -> Result<StartMode> {
    match s {
        "stationary" => Ok(StartMode::Stationary),
        "empty" => Ok(StartMode::Empty),
        other => bail!("unknown start mode {other:?}"),
    }
}
