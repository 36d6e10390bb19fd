//! Monte Carlo simulation of the honest protocol rounds under the Gaussian
//! channel.
//!
//! Rounds are split into fixed-size chunks; chunk `c` draws from a ChaCha8
//! stream `c` keyed by the seed, so tallies are bit-identical for any number
//! of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{clamp_beta, dual_bound};
use crate::channel::{ChannelParams, EC_EFFICIENCY};
use crate::error::{Error, Result};
use crate::finitesize::{key_rate_report, KeyInputs, KeyRateReport, ProtocolParams, Regime};
use crate::mathkit::{binary_entropy_unchecked, lambda_unchecked, witness_extrema};
use crate::povm::{moments_direct, FockSpace};

/// Rounds per RNG stream.
pub const CHUNK_ROUNDS: u64 = 1 << 16;

/// How the heterodyne outcome is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSampling {
    /// One Gaussian draw per quadrature with variance `(2+ξ)/4`.
    #[default]
    Combined,
    /// Channel displacement (variance `ξ/4`) followed by shot noise (`1/2`).
    DisplacementThenShot,
}

/// Bob's acceptance rule for signal rounds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Acceptance {
    /// `b = 0` iff `ω_R ≥ x_th`, `b = 1` iff `−ω_R ≥ x_th`.
    #[default]
    Step,
    /// Randomized response: `b = 0` with probability `σ((ω_R − x_th)/width)`,
    /// `b = 1` with probability `σ((−ω_R − x_th)/width)`, else failure.
    Logistic { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimOptions {
    pub sampling: NoiseSampling,
    pub acceptance: Acceptance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTally {
    pub n_rounds: u64,
    pub n_suc: u64,
    pub n_fail: u64,
    pub n_test: u64,
    /// `Σ Λ` over test rounds.
    pub f_hat: f64,
    /// `Σ Λ²` over test rounds.
    pub f_hat_sq: f64,
    /// Signal successes with `b ≠ a`.
    pub bit_errors: u64,
    pub seed: u64,
}

impl SimTally {
    fn empty(seed: u64) -> Self {
        Self {
            n_rounds: 0,
            n_suc: 0,
            n_fail: 0,
            n_test: 0,
            f_hat: 0.0,
            f_hat_sq: 0.0,
            bit_errors: 0,
            seed,
        }
    }

    fn merge(mut self, o: &Self) -> Self {
        self.n_rounds += o.n_rounds;
        self.n_suc += o.n_suc;
        self.n_fail += o.n_fail;
        self.n_test += o.n_test;
        self.f_hat += o.f_hat;
        self.f_hat_sq += o.f_hat_sq;
        self.bit_errors += o.bit_errors;
        self
    }

    pub fn n_sig(&self) -> u64 {
        self.n_suc + self.n_fail
    }

    /// Mean of `Λ` over test rounds, `NaN` without test rounds.
    pub fn mean_lambda(&self) -> f64 {
        self.f_hat / self.n_test as f64
    }

    /// Unbiased sample variance of `Λ` over test rounds.
    pub fn var_lambda(&self) -> f64 {
        let n = self.n_test as f64;
        if n < 2.0 {
            return f64::NAN;
        }
        let mean = self.f_hat / n;
        ((self.f_hat_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    /// Successes with `b = a`.
    pub fn n_correct(&self) -> u64 {
        self.n_suc - self.bit_errors
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct RoundModel {
    amp: f64,
    beta: f64,
    p_sig: f64,
    x_th: f64,
    sd_total: f64,
    sd_disp: f64,
    lam_lo: f64,
    lam_hi: f64,
    opts: SimOptions,
    witness: crate::mathkit::WitnessParams,
}

impl RoundModel {
    fn chunk(&self, seed: u64, chunk: u64, rounds: u64) -> SimTally {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let mut t = SimTally::empty(seed);
        t.n_rounds = rounds;
        for _ in 0..rounds {
            let a_is_one: bool = rng.random();
            let sign = if a_is_one { -1.0 } else { 1.0 };
            let signal = rng.random::<f64>() < self.p_sig;
            let (nr, ni) = self.noise(&mut rng);
            let wr = sign * self.amp + nr;
            let wi = ni;
            if signal {
                let b = match self.opts.acceptance {
                    Acceptance::Step => {
                        if wr >= self.x_th {
                            Some(false)
                        } else if -wr >= self.x_th {
                            Some(true)
                        } else {
                            None
                        }
                    }
                    Acceptance::Logistic { width } => {
                        let p0 = logistic((wr - self.x_th) / width);
                        let p1 = logistic((-wr - self.x_th) / width);
                        let u: f64 = rng.random();
                        if u < p0 {
                            Some(false)
                        } else if u < p0 + p1 {
                            Some(true)
                        } else {
                            None
                        }
                    }
                };
                match b {
                    Some(b) => {
                        t.n_suc += 1;
                        if b != a_is_one {
                            t.bit_errors += 1;
                        }
                    }
                    None => t.n_fail += 1,
                }
            } else {
                let dr = wr - sign * self.beta;
                let lam = lambda_unchecked(&self.witness, dr * dr + wi * wi);
                assert!(
                    lam >= self.lam_lo && lam <= self.lam_hi,
                    "Λ = {lam} outside [{}, {}]",
                    self.lam_lo,
                    self.lam_hi
                );
                t.n_test += 1;
                t.f_hat += lam;
                t.f_hat_sq += lam * lam;
            }
        }
        t
    }

    fn noise(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let mut g = || -> f64 { rng.sample(StandardNormal) };
        match self.opts.sampling {
            NoiseSampling::Combined => (self.sd_total * g(), self.sd_total * g()),
            NoiseSampling::DisplacementThenShot => {
                let (dr, di) = (self.sd_disp * g(), self.sd_disp * g());
                let shot = std::f64::consts::FRAC_1_SQRT_2;
                (dr + shot * g(), di + shot * g())
            }
        }
    }
}

/// Simulates `p.n_rounds` rounds with the default sampling and acceptance.
pub fn run_protocol(ch: &ChannelParams, p: &ProtocolParams, seed: u64) -> Result<SimTally> {
    run_protocol_with(ch, p, seed, &SimOptions::default())
}

pub fn run_protocol_with(ch: &ChannelParams, p: &ProtocolParams, seed: u64, opts: &SimOptions) -> Result<SimTally> {
    p.validate()?;
    if let Acceptance::Logistic { width } = opts.acceptance {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid("width", format!("must be positive, got {width}")));
        }
    }
    let ext = witness_extrema(&p.witness)?;
    let slack = 1e-12 * (ext.lambda_max.abs() + ext.lambda_min.abs());
    let model = RoundModel {
        amp: ch.received_amplitude(p.mu),
        beta: p.beta,
        p_sig: p.p_sig,
        x_th: p.x_th,
        sd_total: ((2.0 + ch.xi) / 4.0).sqrt(),
        sd_disp: (ch.xi / 4.0).sqrt(),
        lam_lo: ext.lambda_min - slack,
        lam_hi: ext.lambda_max + slack,
        opts: *opts,
        witness: p.witness,
    };
    let n = p.n_rounds;
    let chunks = n.div_ceil(CHUNK_ROUNDS);
    let parts: Vec<SimTally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let rounds = CHUNK_ROUNDS.min(n - c * CHUNK_ROUNDS);
            model.chunk(seed, c, rounds)
        })
        .collect();
    // sequential fold keeps the float sums independent of scheduling
    Ok(parts.iter().fold(SimTally::empty(seed), |acc, t| acc.merge(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedKey {
    pub report: KeyRateReport,
    /// Set when no signal round succeeded; the key is then empty.
    pub no_successes: bool,
}

/// Finite-size report from observed statistics: `U(F̂)` with the simulated
/// `F̂` and `N̂^suc`, and `H_EC` from the observed bit-error rate.
pub fn simulated_key(tally: &SimTally, p: &ProtocolParams, regime: Regime) -> Result<SimulatedKey> {
    p.validate()?;
    if tally.n_rounds != p.n_rounds {
        return Err(Error::invalid(
            "tally",
            format!("covers {} rounds, parameters say {}", tally.n_rounds, p.n_rounds),
        ));
    }
    let ext = witness_extrema(&p.witness)?;
    let beta = clamp_beta(p.beta);
    let mom = moments_direct(FockSpace::for_moments(beta), beta, p.x_th).map_err(|e| e.in_stage("moments"))?;
    let bound = dual_bound(&mom, p.kappa, p.gamma).map_err(|e| e.in_stage("bound"))?;
    let n_suc = tally.n_suc as f64;
    let (h_ec, e_bit) = if tally.n_suc > 0 {
        let e = tally.bit_errors as f64 / n_suc;
        (EC_EFFICIENCY * n_suc * binary_entropy_unchecked(e), e)
    } else {
        (0.0, 0.5)
    };
    let inputs = KeyInputs {
        f_hat: tally.f_hat,
        n_suc,
        h_ec,
        e_bit,
    };
    let report = key_rate_report(p, &ext, &bound, inputs, regime).map_err(|e| e.in_stage("finite size"))?;
    Ok(SimulatedKey {
        report,
        no_successes: tally.n_suc == 0,
    })
}
