//! Run configuration: a TOML (or JSON) file with one table per concern,
//! plus `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hetkey::optimize::OptimizationConfig;
use hetkey::sim::{Acceptance, NoiseSampling, SimOptions};
use hetkey::{ChannelParams, FixedParams, ProtocolParams, Regime, VerifyConfig, WitnessParams};
use serde::{Deserialize, Serialize};
use toml::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub regime: Regime,
    pub channel: ChannelSection,
    pub protocol: ProtocolSection,
    pub optimize: OptimizeSection,
    pub sweep: SweepSection,
    pub simulate: SimulateSection,
    pub verify: VerifyConfig,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub eta: Option<f64>,
    pub atten_db: Option<f64>,
    pub xi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub n_rounds: Option<u64>,
    pub mu: Option<f64>,
    pub p_sig: Option<f64>,
    pub x_th: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub s: u32,
    pub s_prime: u32,
    /// Defaults to `2^{−s}`.
    pub epsilon: Option<f64>,
    pub m: u32,
    pub r: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let w = WitnessParams::standard();
        Self {
            n_rounds: None,
            mu: None,
            p_sig: None,
            x_th: None,
            kappa: None,
            gamma: None,
            s: 104,
            s_prime: 51,
            epsilon: None,
            m: w.m(),
            r: w.r(),
        }
    }
}

/// Search settings; `regime` and the cutoff come from elsewhere.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    pub mu: (f64, f64),
    pub p_sig: (f64, f64),
    pub x_th: (f64, f64),
    pub restarts: usize,
    pub inner_starts: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub max_evals: usize,
    pub inner_max_evals: usize,
    pub seed: u64,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let d = OptimizationConfig::default();
        Self {
            mu: d.mu,
            p_sig: d.p_sig,
            x_th: d.x_th,
            restarts: d.restarts,
            inner_starts: d.inner_starts,
            ftol: d.ftol,
            xtol: d.xtol,
            max_evals: d.max_evals,
            inner_max_evals: d.inner_max_evals,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Explicit attenuation grid in dB; overrides `start`/`stop`/`step`.
    pub grid: Option<Vec<f64>>,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            grid: None,
            start: 0.0,
            stop: 14.0,
            step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub seed: u64,
    pub sampling: NoiseSampling,
    pub acceptance: Acceptance,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            seed: 1,
            sampling: NoiseSampling::default(),
            acceptance: Acceptance::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

const N_ROUNDS_DEFAULT: u64 = 100_000_000_000;
const SIM_ROUNDS_DEFAULT: u64 = 1_000_000;

impl RunConfig {
    /// Reads `path` (JSON when the extension is `.json`, TOML otherwise),
    /// applies `overrides` and validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                    let json: serde_json::Value =
                        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
                    Value::try_from(json).context("converting JSON config")?
                } else {
                    text.parse::<toml::Table>()
                        .map(Value::Table)
                        .with_context(|| format!("parsing {}", p.display()))?
                }
            }
            None => Value::Table(toml::Table::new()),
        };
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let cfg: RunConfig = root.try_into().map_err(|e: toml::de::Error| anyhow!("invalid config: {e}"))?;
        Ok(cfg)
    }

    pub fn channel(&self) -> Result<ChannelParams> {
        let c = &self.channel;
        let ch = match (c.eta, c.atten_db) {
            (Some(_), Some(_)) => bail!("set only one of channel.eta and channel.atten_db"),
            (Some(eta), None) => ChannelParams::new(eta, c.xi),
            (None, Some(db)) => ChannelParams::from_attenuation_db(db, c.xi),
            (None, None) => bail!("missing required field channel.eta (or channel.atten_db)"),
        };
        ch.map_err(|e| anyhow!("channel: {e}"))
    }

    pub fn witness(&self) -> Result<WitnessParams> {
        WitnessParams::new(self.protocol.m, self.protocol.r).map_err(|e| anyhow!("protocol: {e}"))
    }

    fn epsilon(&self) -> f64 {
        self.protocol
            .epsilon
            .unwrap_or_else(|| 2f64.powi(-(self.protocol.s.min(1074) as i32)))
    }

    pub fn fixed(&self) -> Result<FixedParams> {
        Ok(FixedParams {
            n_rounds: self.protocol.n_rounds.unwrap_or(N_ROUNDS_DEFAULT),
            epsilon: self.epsilon(),
            s: self.protocol.s,
            s_prime: self.protocol.s_prime,
            witness: self.witness()?,
        })
    }

    /// Full parameter set with `β = √(ημ)`; every free parameter is required.
    pub fn protocol(&self, ch: &ChannelParams, simulate: bool) -> Result<ProtocolParams> {
        let pr = &self.protocol;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| anyhow!("missing required field protocol.{name}"));
        let mut fixed = self.fixed()?;
        if simulate {
            fixed.n_rounds = pr.n_rounds.unwrap_or(SIM_ROUNDS_DEFAULT);
        }
        let p = fixed.with(
            ch,
            need(pr.mu, "mu")?,
            need(pr.p_sig, "p_sig")?,
            need(pr.x_th, "x_th")?,
            need(pr.kappa, "kappa")?,
            need(pr.gamma, "gamma")?,
        );
        p.validate().map_err(|e| anyhow!("protocol: {e}"))?;
        Ok(p)
    }

    pub fn optimization(&self) -> Result<OptimizationConfig> {
        let o = &self.optimize;
        let cfg = OptimizationConfig {
            mu: o.mu,
            p_sig: o.p_sig,
            x_th: o.x_th,
            restarts: o.restarts,
            inner_starts: o.inner_starts,
            ftol: o.ftol,
            xtol: o.xtol,
            max_evals: o.max_evals,
            inner_max_evals: o.inner_max_evals,
            seed: o.seed,
            regime: self.regime,
            n_max: None,
        };
        cfg.validate().map_err(|e| anyhow!("optimize: {e}"))?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        let s = &self.sweep;
        if let Some(g) = &s.grid {
            if let Some(bad) = g.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                bail!("sweep.grid: attenuation {bad} must be finite and >= 0");
            }
            return Ok(g.clone());
        }
        if !(s.step > 0.0 && s.start.is_finite() && s.stop.is_finite()) {
            bail!("sweep: need finite start/stop and step > 0");
        }
        let count = ((s.stop - s.start) / s.step + 1e-9).floor();
        if count < 0.0 {
            return Ok(Vec::new());
        }
        Ok((0..=count as usize).map(|i| s.start + i as f64 * s.step).collect())
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            sampling: self.simulate.sampling,
            acceptance: self.simulate.acceptance,
        }
    }
}

/// Sets `a.b.c = value`, parsing `value` as a TOML literal and falling back
/// to a bare string.
fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form key=value"))?;
    let path: Vec<&str> = path.trim().split('.').collect();
    if path.iter().any(|k| k.is_empty()) {
        bail!("override `{spec}` has an empty key");
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let mut node = root;
    for key in &path[..path.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{spec}`: `{key}` is not inside a table"))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| anyhow!("override `{spec}`: parent is not a table"))?
        .insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
