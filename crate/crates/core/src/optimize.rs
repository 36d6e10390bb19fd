//! Rate evaluation and the two-level parameter search: an outer Nelder-Mead
//! over `(μ, p_sig, x_th)` and, for each outer point, a multi-start inner
//! Nelder-Mead over `(κ, γ)` minimizing `U(E[F̂])`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{clamp_beta, dual_bound};
use crate::channel::{ec_cost, ChannelExpectations, ChannelParams};
use crate::error::{Error, Result};
use crate::finitesize::{
    delta_two, key_rate_report, q_minus, KeyInputs, KeyRateReport, ProtocolParams, Regime,
};
use crate::mathkit::{binary_entropy_unchecked, witness_extrema, WitnessExtrema, WitnessParams};
use crate::neldermead::{minimize, NmOptions};
use crate::povm::{moments_direct, FockSpace, PovmMoments};

/// Parameters held fixed during optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub n_rounds: u64,
    pub epsilon: f64,
    pub s: u32,
    pub s_prime: u32,
    pub witness: WitnessParams,
}

impl Default for FixedParams {
    fn default() -> Self {
        Self {
            n_rounds: 100_000_000_000,
            epsilon: 2f64.powi(-104),
            s: 104,
            s_prime: 51,
            witness: WitnessParams::standard(),
        }
    }
}

impl FixedParams {
    /// Completes the parameter set; `β = √(ημ)`.
    pub fn with(&self, ch: &ChannelParams, mu: f64, p_sig: f64, x_th: f64, kappa: f64, gamma: f64) -> ProtocolParams {
        ProtocolParams {
            n_rounds: self.n_rounds,
            mu,
            p_sig,
            beta: ch.received_amplitude(mu),
            s: self.s,
            s_prime: self.s_prime,
            kappa,
            gamma,
            witness: self.witness,
            x_th,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationConfig {
    pub mu: (f64, f64),
    pub p_sig: (f64, f64),
    pub x_th: (f64, f64),
    /// Outer Nelder-Mead runs per channel point.
    pub restarts: usize,
    /// Inner `(κ, γ)` starting points, taken from a fixed list.
    pub inner_starts: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub max_evals: usize,
    pub inner_max_evals: usize,
    pub seed: u64,
    pub regime: Regime,
    /// Photon cutoff; `None` applies the per-amplitude default.
    pub n_max: Option<usize>,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            mu: (1e-3, 4.0),
            p_sig: (0.01, 0.999),
            x_th: (0.0, 4.0),
            restarts: 4,
            inner_starts: 3,
            ftol: 1e-10,
            xtol: 1e-7,
            max_evals: 600,
            inner_max_evals: 300,
            seed: 1,
            regime: Regime::Finite,
            n_max: None,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, (lo, hi): (f64, f64), min: f64, max: f64| {
            if !(lo.is_finite() && hi.is_finite() && lo < hi && lo >= min && hi <= max) {
                return Err(Error::invalid(name, format!("bounds ({lo}, {hi}) must be ordered within [{min}, {max}]")));
            }
            Ok(())
        };
        check("mu", self.mu, f64::MIN_POSITIVE, f64::MAX)?;
        check("p_sig", self.p_sig, f64::MIN_POSITIVE, 1.0 - f64::EPSILON)?;
        check("x_th", self.x_th, 0.0, f64::MAX)?;
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "must be at least 1"));
        }
        if self.inner_starts == 0 {
            return Err(Error::invalid("inner_starts", "must be at least 1"));
        }
        if !(self.ftol > 0.0 && self.xtol > 0.0) {
            return Err(Error::invalid("ftol", "tolerances must be positive"));
        }
        if self.max_evals == 0 || self.inner_max_evals == 0 {
            return Err(Error::invalid("max_evals", "evaluation budgets must be positive"));
        }
        Ok(())
    }
}

/// Reusable evaluator holding the witness extrema and truncation rule.
#[derive(Debug, Clone)]
pub struct RateModel {
    pub fixed: FixedParams,
    pub extrema: WitnessExtrema,
    pub regime: Regime,
    pub n_max: Option<usize>,
}

/// Inner starting points for `(κ, γ)`; the first is the reference pair.
/// Cap on `κ` and `γ`: beyond it `U` is a difference of terms large enough
/// that rounding in `B` starts to matter.
pub const MULTIPLIER_MAX: f64 = 1e6;

const INNER_STARTS: [(f64, f64); 6] = [(0.5, 0.5), (1.0, 1.0), (0.1, 0.1), (2.0, 0.3), (0.3, 2.0), (4.0, 4.0)];

impl RateModel {
    pub fn new(fixed: FixedParams, regime: Regime, n_max: Option<usize>) -> Result<Self> {
        Ok(Self {
            fixed,
            extrema: witness_extrema(&fixed.witness)?,
            regime,
            n_max,
        })
    }

    pub fn space(&self, beta: f64) -> Result<FockSpace> {
        match self.n_max {
            Some(n) => FockSpace::new(n),
            None => Ok(FockSpace::for_moments(beta)),
        }
    }

    pub fn moments(&self, beta: f64, x_th: f64) -> Result<PovmMoments> {
        let beta = clamp_beta(beta);
        moments_direct(self.space(beta)?, beta, x_th)
    }

    /// Deterministic pipeline: moments → `B(κ,γ)` → `δ1, δ2` → `U(E[F̂])` → key → gain.
    pub fn evaluate(&self, ch: &ChannelParams, p: &ProtocolParams) -> Result<KeyRateReport> {
        p.validate().map_err(|e| e.in_stage("params"))?;
        let matched = ch.received_amplitude(p.mu);
        if (p.beta - matched).abs() > 1e-12 * matched.max(1.0) {
            return Err(Error::invalid("beta", format!("must equal √(ημ) = {matched}, got {}", p.beta)));
        }
        let mom = self.moments(p.beta, p.x_th).map_err(|e| e.in_stage("moments"))?;
        let bound = dual_bound(&mom, p.kappa, p.gamma).map_err(|e| e.in_stage("bound"))?;
        let exp = ChannelExpectations::compute(ch, p).map_err(|e| e.in_stage("channel"))?;
        let n_suc = exp.expected_n_suc(p);
        let (h_ec, e_bit) = if exp.e_n_suc_per_signal > 0.0 {
            ec_cost(n_suc, exp.p_plus, exp.p_minus).map_err(|e| e.in_stage("error correction"))?
        } else {
            (0.0, 0.5)
        };
        let inputs = KeyInputs {
            f_hat: exp.expected_f(p),
            n_suc,
            h_ec,
            e_bit,
        };
        key_rate_report(p, &self.extrema, &bound, inputs, self.regime).map_err(|e| e.in_stage("finite size"))
    }

    /// Best `(κ, γ, U)` for fixed outer parameters.
    fn inner_search(&self, ch: &ChannelParams, outer: &OuterPoint, cfg: &OptimizationConfig) -> Result<(f64, f64, f64)> {
        let p = self.fixed.with(ch, outer.mu, outer.p_sig, outer.x_th, 0.0, 0.0);
        let mom = self.moments(p.beta, p.x_th)?;
        let exp = ChannelExpectations::compute(ch, &p)?;
        let uf = UForm::new(&p, &self.extrema, exp.expected_f(&p), self.regime)?;
        let objective = |z: &[f64]| {
            let (k, g) = ((z[0] * z[0]).min(MULTIPLIER_MAX), (z[1] * z[1]).min(MULTIPLIER_MAX));
            match dual_bound(&mom, k, g) {
                Ok(b) => uf.eval(k, g, b.b_value),
                Err(_) => f64::INFINITY,
            }
        };
        let opts = NmOptions {
            ftol: 1e-12,
            xtol: 1e-9,
            max_evals: cfg.inner_max_evals,
        };
        let mut best = (0.5, 0.5, objective(&[0.5f64.sqrt(), 0.5f64.sqrt()]));
        for &(k0, g0) in INNER_STARTS.iter().take(cfg.inner_starts.min(INNER_STARTS.len())) {
            let z0 = [k0.sqrt(), g0.sqrt()];
            let r = minimize(objective, &z0, &[0.3, 0.3], &opts);
            if r.f < best.2 {
                best = (
                    (r.x[0] * r.x[0]).min(MULTIPLIER_MAX),
                    (r.x[1] * r.x[1]).min(MULTIPLIER_MAX),
                    r.f,
                );
            }
        }
        Ok(best)
    }
}

/// `U(κ, γ, B)` with the `(κ,γ)`-independent pieces precomputed.
#[derive(Debug, Clone, Copy)]
struct UForm {
    n: f64,
    p_sig: f64,
    p_test: f64,
    q: f64,
    f_hat: f64,
    delta2: f64,
    /// `√((N/2) ln(2/ε))`, zero in the asymptotic regime.
    azuma: f64,
    lambda_min: f64,
    lambda_max: f64,
}

impl UForm {
    fn new(p: &ProtocolParams, ext: &WitnessExtrema, f_hat: f64, regime: Regime) -> Result<Self> {
        let q = q_minus(p.mu);
        let (delta2, azuma) = match regime {
            Regime::Finite => (
                delta_two(p.n(), p.p_sig, q, 0.5 * p.epsilon)?,
                (0.5 * p.n() * -(0.5 * p.epsilon).ln()).sqrt(),
            ),
            Regime::Asymptotic => (0.0, 0.0),
        };
        Ok(Self {
            n: p.n(),
            p_sig: p.p_sig,
            p_test: p.p_test(),
            q,
            f_hat,
            delta2,
            azuma,
            lambda_min: ext.lambda_min,
            lambda_max: ext.lambda_max,
        })
    }

    fn eval(&self, kappa: f64, gamma: f64, b: f64) -> f64 {
        let c_min = (kappa * self.lambda_min / self.p_test).min(-gamma / self.p_sig);
        let c_max = (kappa * self.lambda_max / self.p_test).max(1.0 / self.p_sig);
        -kappa * (self.p_sig / self.p_test) * self.f_hat
            + gamma * (self.n * self.p_sig * self.q + self.delta2)
            + self.p_sig * (self.n * b + (c_max - c_min) * self.azuma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OuterPoint {
    mu: f64,
    p_sig: f64,
    x_th: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(t: f64) -> f64 {
    let t = t.clamp(1e-12, 1.0 - 1e-12);
    (t / (1.0 - t)).ln().clamp(-30.0, 30.0)
}

impl OuterPoint {
    /// Log-scale for `μ`, logit for `p_sig` and `x_th`, each squeezed into its bounds.
    fn from_z(z: &[f64], cfg: &OptimizationConfig) -> Self {
        let (ml, mh) = cfg.mu;
        let (pl, ph) = cfg.p_sig;
        let (xl, xh) = cfg.x_th;
        Self {
            mu: (ml.ln() + (mh.ln() - ml.ln()) * sigmoid(z[0])).exp().clamp(ml, mh),
            p_sig: (pl + (ph - pl) * sigmoid(z[1])).clamp(pl, ph),
            x_th: (xl + (xh - xl) * sigmoid(z[2])).clamp(xl, xh),
        }
    }

    fn to_z(&self, cfg: &OptimizationConfig) -> [f64; 3] {
        let (ml, mh) = cfg.mu;
        let (pl, ph) = cfg.p_sig;
        let (xl, xh) = cfg.x_th;
        [
            logit((self.mu.ln() - ml.ln()) / (mh.ln() - ml.ln())),
            logit((self.p_sig - pl) / (ph - pl)),
            logit((self.x_th - xl) / (xh - xl)),
        ]
    }
}

/// Per-pulse gain with the key length continued linearly below zero, so the
/// outer search still sees a slope where no key survives.
fn surrogate_gain(n_suc: f64, u: f64, h_ec: f64, s: f64, s_prime: f64, n: f64) -> f64 {
    let key = if n_suc <= 0.0 {
        -s
    } else {
        let ratio = (u / n_suc).max(0.0);
        if ratio < 0.5 {
            n_suc * (1.0 - binary_entropy_unchecked(ratio)) - s
        } else {
            -s - n_suc * (ratio - 0.5)
        }
    };
    (key - h_ec - s_prime) / n
}

/// Optimum found at one channel point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPoint {
    pub params: ProtocolParams,
    pub report: KeyRateReport,
    /// Whether the winning outer run met its tolerances.
    pub converged: bool,
    pub evaluations: usize,
}

impl OptimizedPoint {
    /// `(μ, p_sig, x_th)` for warm-starting a neighbouring search.
    pub fn warm_start(&self) -> [f64; 3] {
        [self.params.mu, self.params.p_sig, self.params.x_th]
    }
}

struct OuterRun {
    z: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
}

/// Nested search at one channel point. `warm` lists `(μ, p_sig, x_th)`
/// starting points tried before the seeded random ones.
pub fn optimize_point(
    ch: &ChannelParams,
    fixed: &FixedParams,
    cfg: &OptimizationConfig,
    warm: &[[f64; 3]],
) -> Result<OptimizedPoint> {
    cfg.validate()?;
    let model = RateModel::new(*fixed, cfg.regime, cfg.n_max)?;
    let (s, s_prime) = match cfg.regime {
        Regime::Finite => (fixed.s as f64, fixed.s_prime as f64),
        Regime::Asymptotic => (0.0, 0.0),
    };
    let objective = |z: &[f64]| -> f64 {
        let pt = OuterPoint::from_z(z, cfg);
        let Ok((_, _, u)) = model.inner_search(ch, &pt, cfg) else {
            return f64::INFINITY;
        };
        let p = fixed.with(ch, pt.mu, pt.p_sig, pt.x_th, 0.0, 0.0);
        let Ok(exp) = ChannelExpectations::compute(ch, &p) else {
            return f64::INFINITY;
        };
        let n_suc = exp.expected_n_suc(&p);
        let h_ec = if n_suc > 0.0 {
            ec_cost(n_suc, exp.p_plus, exp.p_minus).map(|v| v.0).unwrap_or(f64::INFINITY)
        } else {
            0.0
        };
        -surrogate_gain(n_suc, u, h_ec, s, s_prime, p.n())
    };

    let default_start = OuterPoint {
        mu: 0.5f64.clamp(cfg.mu.0, cfg.mu.1),
        p_sig: 0.5f64.clamp(cfg.p_sig.0, cfg.p_sig.1),
        x_th: 0.5f64.clamp(cfg.x_th.0, cfg.x_th.1),
    }
    .to_z(cfg);
    let mut starts: Vec<[f64; 3]> = warm
        .iter()
        .map(|w| OuterPoint { mu: w[0], p_sig: w[1], x_th: w[2] }.to_z(cfg))
        .collect();
    starts.push(default_start);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    while starts.len() < cfg.restarts.max(warm.len() + 1) {
        starts.push([rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)]);
    }

    let opts = NmOptions {
        ftol: cfg.ftol,
        xtol: cfg.xtol,
        max_evals: cfg.max_evals,
    };
    let runs: Vec<OuterRun> = starts
        .par_iter()
        .map(|z0| {
            let r = minimize(objective, z0, &[0.4, 0.4, 0.4], &opts);
            OuterRun {
                z: r.x,
                value: r.f,
                evals: r.evals,
                converged: r.converged,
            }
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.evals).sum();
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)))
        .map(|(_, r)| r)
        .expect("at least one restart");
    if !best.value.is_finite() {
        return Err(Error::Convergence {
            what: "outer parameter search found no feasible point",
            iterations: evaluations,
        });
    }
    let pt = OuterPoint::from_z(&best.z, cfg);
    let (kappa, gamma, _) = model.inner_search(ch, &pt, cfg)?;
    let params = fixed.with(ch, pt.mu, pt.p_sig, pt.x_th, kappa, gamma);
    let report = model.evaluate(ch, &params)?;
    if !best.converged {
        log::warn!("outer search stopped on its evaluation budget at η = {}", ch.eta);
    }
    Ok(OptimizedPoint {
        params,
        report,
        converged: best.converged,
        evaluations,
    })
}

/// `evaluate_rate` with the default truncation rule.
pub fn evaluate_rate(ch: &ChannelParams, p: &ProtocolParams, regime: Regime) -> Result<KeyRateReport> {
    let fixed = FixedParams {
        n_rounds: p.n_rounds,
        epsilon: p.epsilon,
        s: p.s,
        s_prime: p.s_prime,
        witness: p.witness,
    };
    RateModel::new(fixed, regime, None)?.evaluate(ch, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub atten_db: f64,
    pub eta: f64,
    pub xi: f64,
    pub point: Option<OptimizedPoint>,
    pub error: Option<String>,
}

impl SweepRow {
    /// Net gain floored at zero.
    pub fn key_rate(&self) -> f64 {
        self.point.as_ref().map_or(0.0, |p| p.report.gain.max(0.0))
    }
}

/// Optimizes each grid point in order, warm-starting from the previous
/// successful point; errors are recorded per row.
pub fn sweep(atten_db: &[f64], xi: f64, fixed: &FixedParams, cfg: &OptimizationConfig) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(atten_db.len());
    let mut warm: Option<[f64; 3]> = None;
    for &db in atten_db {
        let result = ChannelParams::from_attenuation_db(db, xi)
            .and_then(|ch| optimize_point(&ch, fixed, cfg, warm.as_slice()).map(|p| (ch, p)));
        match result {
            Ok((ch, point)) => {
                if point.report.gain > 0.0 {
                    warm = Some(point.warm_start());
                }
                rows.push(SweepRow {
                    atten_db: db,
                    eta: ch.eta,
                    xi,
                    point: Some(point),
                    error: None,
                });
            }
            Err(e) => rows.push(SweepRow {
                atten_db: db,
                eta: 10f64.powf(-db / 10.0),
                xi,
                point: None,
                error: Some(e.to_string()),
            }),
        }
    }
    rows
}
