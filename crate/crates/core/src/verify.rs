//! Self-check suite: named invariants evaluated numerically, each with a
//! signed margin (positive means the check passed with room to spare).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bound::{dual_bound, verify_operator_inequality, DualBound, DEFAULT_INEQUALITY_TOL};
use crate::channel::{
    asymptotic_phase_error, expected_f_per_test, joint_state, success_probs, ChannelParams,
};
use crate::error::Result;
use crate::finitesize::{delta_two, q_minus, security_level, ProtocolParams};
use crate::heterodyne::{expectation_complex, overlap_complex, witness_operator};
use crate::mathkit::{kl_excess, witness_extrema, WitnessParams};
use crate::povm::{
    assemble_m, build_success_povm, coherent_vector, fidelity_projector, minus_projector,
    parity_weights, phase_error_operator, povm_moments, FockSpace,
};
use crate::sim::run_protocol;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Photon cutoff for the operator checks.
    pub n_max: usize,
    pub operator_trials: usize,
    pub state_trials: usize,
    /// Rounds per Monte Carlo run.
    pub mc_rounds: u64,
    /// Fault injection: every dual bound is lowered by this fraction of `|B|`.
    pub bound_reduction: f64,
    /// Honest-channel point for the trace checks.
    pub atten_db: f64,
    pub xi: f64,
    pub mu: f64,
    pub x_th: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_max: 40,
            operator_trials: 24,
            state_trials: 24,
            mc_rounds: 200_000,
            bound_reduction: 0.0,
            atten_db: 2.0,
            xi: 1e-3,
            mu: 0.6,
            x_th: 0.7,
            kappa: 2.0,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Distance to the failure threshold; negative on failure.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

fn check(name: &str, margin: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: margin >= 0.0,
        margin,
        detail,
    }
}

fn weakened(mut b: DualBound, reduction: f64) -> DualBound {
    b.b_value -= reduction * b.b_value.abs();
    b
}

/// Runs every check; errors inside a check mark it failed rather than
/// aborting the suite.
pub fn run_suite(cfg: &VerifyConfig) -> VerifyReport {
    type CheckFn = fn(&VerifyConfig) -> Result<CheckResult>;
    let suite: [(&str, CheckFn); 10] = [
        ("security_level", security_level_check),
        ("witness_extrema", witness_extrema_check),
        ("povm_completeness", povm_completeness_check),
        ("parity_weights", parity_weights_check),
        ("operator_inequality", operator_inequality_check),
        ("fidelity_witness", fidelity_witness_check),
        ("delta2_inversion", delta2_check),
        ("minus_weight", minus_weight_check),
        ("honest_phase_error", honest_phase_error_check),
        ("monte_carlo", monte_carlo_check),
    ];
    let checks: Vec<CheckResult> = suite
        .iter()
        .map(|(name, f)| {
            f(cfg).unwrap_or_else(|e| CheckResult {
                name: name.to_string(),
                passed: false,
                margin: f64::NEG_INFINITY,
                detail: format!("error: {e}"),
            })
        })
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport { checks, passed }
}

fn security_level_check(_: &VerifyConfig) -> Result<CheckResult> {
    let level = security_level(2f64.powi(-104), 104, 51);
    let target = 2f64.powi(-50);
    let margin = if level == target { 0.0 } else { -(level - target).abs() };
    Ok(check("security_level", margin, format!("level = {level:e}")))
}

fn witness_extrema_check(_: &VerifyConfig) -> Result<CheckResult> {
    let ext = witness_extrema(&WitnessParams::standard())?;
    let dev = (ext.lambda_max - 2.824).abs().max((ext.lambda_min + 0.9932).abs());
    Ok(check(
        "witness_extrema",
        1e-3 - dev,
        format!("max = {:.6}, min = {:.6}", ext.lambda_max, ext.lambda_min),
    ))
}

fn povm_completeness_check(cfg: &VerifyConfig) -> Result<CheckResult> {
    let space = FockSpace::new(cfg.n_max)?;
    let (m_ev, m_od) = build_success_povm(space, 0.0)?;
    let err = (m_ev.matrix() + m_od.matrix() - DMatrix::<f64>::identity(space.dim(), space.dim())).amax();
    Ok(check("povm_completeness", 1e-8 - err, format!("max deviation {err:e}")))
}

fn parity_weights_check(cfg: &VerifyConfig) -> Result<CheckResult> {
    let space = FockSpace::new(cfg.n_max)?;
    let mut worst: f64 = 0.0;
    for beta in [0.2, 0.5, 0.9, 1.2, 1.5] {
        let v = coherent_vector(space, beta)?.amplitudes;
        let even: f64 = v.iter().step_by(2).map(|a| a * a).sum();
        let odd: f64 = v.iter().skip(1).step_by(2).map(|a| a * a).sum();
        let (c_ev, c_od) = parity_weights(beta);
        worst = worst.max((even - c_ev).abs()).max((odd - c_od).abs());
    }
    Ok(check("parity_weights", 1e-9 - worst, format!("max deviation {worst:e}")))
}

fn operator_inequality_check(cfg: &VerifyConfig) -> Result<CheckResult> {
    let space = FockSpace::new(cfg.n_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..cfg.operator_trials {
        let beta = rng.random_range(0.2..1.5);
        let x_th = rng.random_range(0.0..2.0);
        let kappa = rng.random_range(0.0..5.0);
        let gamma = rng.random_range(0.0..5.0);
        let (m_ev, m_od) = build_success_povm(space, x_th)?;
        let mom = povm_moments(space, beta, &m_ev, &m_od)?;
        let b = weakened(dual_bound(&mom, kappa, gamma)?, cfg.bound_reduction);
        let m = assemble_m(space, beta, kappa, gamma, &m_ev, &m_od)?;
        let rep = verify_operator_inequality(&m, &b, DEFAULT_INEQUALITY_TOL);
        if !rep.holds {
            violations += 1;
        }
        worst = worst.min(rep.margin + rep.tolerance);
    }
    Ok(check(
        "operator_inequality",
        worst,
        format!("{violations} violations in {} configurations", cfg.operator_trials),
    ))
}

/// Random mixed state of rank `rank` supported on the lowest `support` levels.
fn random_state(rng: &mut ChaCha8Rng, dim: usize, support: usize, rank: usize) -> DMatrix<Complex64> {
    let g = DMatrix::<Complex64>::from_fn(dim, rank, |i, _| {
        if i < support {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho / Complex64::new(tr, 0.0)
}

fn fidelity_witness_check(cfg: &VerifyConfig) -> Result<CheckResult> {
    let space = FockSpace::new(cfg.n_max)?;
    let w = WitnessParams::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut worst = f64::INFINITY;
    for beta in [0.4, 0.9] {
        let wop = witness_operator(space, &w, beta)?;
        let coh = coherent_vector(space, beta)?.amplitudes;
        for _ in 0..cfg.state_trials {
            let support = rng.random_range(1..=20);
            let rank = rng.random_range(1..=3);
            let mut rho = random_state(&mut rng, space.dim(), support, rank);
            // mix in the target so some states sit near the bound
            let lam: f64 = rng.random();
            let target = DMatrix::<Complex64>::from_fn(space.dim(), space.dim(), |i, j| {
                Complex64::new(coh[i] * coh[j], 0.0)
            });
            rho = rho * Complex64::new(1.0 - lam, 0.0) + target * Complex64::new(lam, 0.0);
            let e = expectation_complex(&rho, &wop.op);
            let fid = overlap_complex(&rho, coh.as_slice());
            worst = worst.min(fid + 1e-6 - e);
        }
    }
    Ok(check("fidelity_witness", worst, format!("{} states per amplitude", cfg.state_trials)))
}

fn delta2_check(_: &VerifyConfig) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for n in [1e6, 1e9, 1e11] {
        for p in [1e-3, 0.1, 0.4] {
            for eps in [2f64.powi(-10), 2f64.powi(-104)] {
                let d2 = delta_two(n, p, 1.0, eps)?;
                let target = -eps.ln() / n;
                if d2 < (1.0 - p) * n {
                    worst = worst.max((kl_excess(p, d2 / n) - target).abs() / target);
                }
            }
        }
    }
    Ok(check("delta2_inversion", 1e-12 - worst, format!("max relative residual {worst:e}")))
}

fn honest_params(cfg: &VerifyConfig, ch: &ChannelParams) -> ProtocolParams {
    ProtocolParams {
        n_rounds: cfg.mc_rounds,
        mu: cfg.mu,
        p_sig: 0.5,
        beta: ch.received_amplitude(cfg.mu),
        s: 104,
        s_prime: 51,
        kappa: cfg.kappa,
        gamma: cfg.gamma,
        witness: WitnessParams::standard(),
        x_th: cfg.x_th,
        epsilon: 2f64.powi(-104),
    }
}

fn minus_weight_check(cfg: &VerifyConfig) -> Result<CheckResult> {
    let ch = ChannelParams::from_attenuation_db(cfg.atten_db, cfg.xi)?;
    let p = honest_params(cfg, &ch);
    let space = FockSpace::new(cfg.n_max)?;
    let js = joint_state(&ch, &p, space)?;
    let w = minus_projector(space).trace_product(&js.rho);
    let err = (w - q_minus(p.mu)).abs();
    Ok(check("minus_weight", 1e-7 - err, format!("Tr(ρΠ-) = {w}, q- = {}", q_minus(p.mu))))
}

fn honest_phase_error_check(cfg: &VerifyConfig) -> Result<CheckResult> {
    let ch = ChannelParams::from_attenuation_db(cfg.atten_db, cfg.xi)?;
    let p = honest_params(cfg, &ch);
    let space = FockSpace::new(cfg.n_max)?;
    let js = joint_state(&ch, &p, space)?;
    let (m_ev, m_od) = build_success_povm(space, p.x_th)?;
    let mom = povm_moments(space, p.beta, &m_ev, &m_od)?;
    let b = weakened(dual_bound(&mom, p.kappa, p.gamma)?, cfg.bound_reduction);
    let res = asymptotic_phase_error(
        &js.rho,
        &phase_error_operator(&m_ev, &m_od),
        &fidelity_projector(space, p.beta)?,
        &minus_projector(space),
        b.b_value,
        p.kappa,
        p.gamma,
    );
    Ok(check(
        "honest_phase_error",
        res.margin,
        format!("Tr(M_ph ρ) = {:e}, rhs = {:e}", res.phase_error, res.rhs),
    ))
}

fn monte_carlo_check(cfg: &VerifyConfig) -> Result<CheckResult> {
    let ch = ChannelParams::from_attenuation_db(cfg.atten_db, cfg.xi)?;
    let p = honest_params(cfg, &ch);
    let t = run_protocol(&ch, &p, cfg.seed)?;
    let nt = t.n_test as f64;
    let z_f = (t.mean_lambda() - expected_f_per_test(&ch, &p.witness)) / (t.var_lambda() / nt).sqrt();
    let (pp, pm) = success_probs(&ch, &p)?;
    let ns = t.n_sig() as f64;
    let z_p = (t.n_correct() as f64 - ns * pp) / (ns * pp * (1.0 - pp)).sqrt();
    let z_m = (t.bit_errors as f64 - ns * pm) / (ns * pm * (1.0 - pm)).sqrt();
    let worst = z_f.abs().max(z_p.abs()).max(z_m.abs());
    Ok(check(
        "monte_carlo",
        5.0 - worst,
        format!("z-scores F = {z_f:.3}, P+ = {z_p:.3}, P- = {z_m:.3}"),
    ))
}
