//! Finite-size corrections, the phase-error bound `U(F̂)`, key length, net
//! gain and the overall security level.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::bound::DualBound;
use crate::error::{Error, Result};
use crate::mathkit::{binary_entropy_unchecked, kl_excess, WitnessExtrema, WitnessParams};

/// Protocol parameters `[N, ε, μ, p_sig, β, s, s′, κ, γ, m, r]` plus the
/// acceptance threshold. `p_test = 1 − p_sig`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n_rounds: u64,
    pub mu: f64,
    pub p_sig: f64,
    pub beta: f64,
    pub s: u32,
    pub s_prime: u32,
    pub kappa: f64,
    pub gamma: f64,
    pub witness: WitnessParams,
    pub x_th: f64,
    pub epsilon: f64,
}

impl ProtocolParams {
    pub fn p_test(&self) -> f64 {
        1.0 - self.p_sig
    }

    pub fn n(&self) -> f64 {
        self.n_rounds as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::invalid("n_rounds", "must be positive"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu", format!("must be positive, got {}", self.mu)));
        }
        if !(self.p_sig > 0.0 && self.p_sig < 1.0) {
            return Err(Error::invalid("p_sig", format!("must lie in (0,1), got {}", self.p_sig)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if self.s == 0 {
            return Err(Error::invalid("s", "must be positive"));
        }
        if self.s_prime == 0 {
            return Err(Error::invalid("s_prime", "must be positive"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", format!("must be >= 0, got {}", self.kappa)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if !(self.x_th >= 0.0 && self.x_th.is_finite()) {
            return Err(Error::invalid("x_th", format!("must be >= 0, got {}", self.x_th)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("must lie in (0,1), got {}", self.epsilon),
            ));
        }
        Ok(())
    }
}

/// Whether the statistical corrections are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    Finite,
    /// `δ1 = δ2 = 0` and `s = s′ = 0`.
    Asymptotic,
}

/// End-to-end key-rate figures with their intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub b_value: f64,
    pub f_hat: f64,
    pub n_suc: f64,
    pub e_bit: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub u_of_f: f64,
    pub n_fin: f64,
    pub h_ec: f64,
    pub gain: f64,
    pub security_level: f64,
}

/// `q_- = (1 − e^{−2μ})/2`.
pub fn q_minus(mu: f64) -> f64 {
    -0.5 * (-2.0 * mu).exp_m1()
}

/// `(c_min, c_max)` bracketing the per-round increments of the martingale.
pub fn c_range(p: &ProtocolParams, ext: &WitnessExtrema) -> (f64, f64) {
    let pt = p.p_test();
    let c_min = (p.kappa * ext.lambda_min / pt).min(-p.gamma / p.p_sig);
    let c_max = (p.kappa * ext.lambda_max / pt).max(1.0 / p.p_sig);
    (c_min, c_max)
}

/// Azuma correction `(c_max − c_min)√((N/2) ln(1/ε))`.
pub fn delta_one(n: f64, c_min: f64, c_max: f64, eps: f64) -> Result<f64> {
    if c_max < c_min {
        return Err(Error::invalid("c_max", "must not be below c_min"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid("eps", format!("must lie in (0,1], got {eps}")));
    }
    Ok((c_max - c_min) * (0.5 * n * -eps.ln()).sqrt())
}

/// Chernoff-Hoeffding correction: the `δ` solving
/// `D(p + δ/N ‖ p) = −ln ε / N` for `p = p_sig q_-`, or `(1 − p)N` when
/// `ε ≤ p^N`.
pub fn delta_two(n: f64, p_sig: f64, q_minus: f64, eps: f64) -> Result<f64> {
    let p = p_sig * q_minus;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p_sig*q_minus", format!("must lie in (0,1), got {p}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid("eps", format!("must lie in (0,1], got {eps}")));
    }
    let ln_eps = eps.ln();
    if ln_eps == 0.0 {
        return Ok(0.0);
    }
    if ln_eps <= n * p.ln() {
        return Ok((1.0 - p) * n);
    }
    let target = -ln_eps / n;
    // D(p + x ‖ p) increases from 0 to −ln p on [0, 1 − p]
    let (mut lo, mut hi) = (0.0, 1.0 - p);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kl_excess(p, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let resid = (kl_excess(p, x) - target).abs() / target;
    if !(resid < 1e-12) {
        return Err(Error::Convergence {
            what: "delta_two bisection",
            iterations: 2000,
        });
    }
    Ok(x * n)
}

/// `U(F̂)` and the corrections that went into it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorBound {
    pub u: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub c_min: f64,
    pub c_max: f64,
}

/// `U = −κ(p_sig/p_test)F̂ + γ(N p_sig q_- + δ2(ε/2)) + p_sig(N B + δ1(ε/2))`.
pub fn phase_error_bound_u(
    p: &ProtocolParams,
    ext: &WitnessExtrema,
    b_value: f64,
    f_hat: f64,
    regime: Regime,
) -> Result<PhaseErrorBound> {
    let n = p.n();
    let q = q_minus(p.mu);
    let (c_min, c_max) = c_range(p, ext);
    let (delta1, delta2) = match regime {
        Regime::Finite => (
            delta_one(n, c_min, c_max, 0.5 * p.epsilon)?,
            delta_two(n, p.p_sig, q, 0.5 * p.epsilon)?,
        ),
        Regime::Asymptotic => (0.0, 0.0),
    };
    let u = -p.kappa * (p.p_sig / p.p_test()) * f_hat
        + p.gamma * (n * p.p_sig * q + delta2)
        + p.p_sig * (n * b_value + delta1);
    Ok(PhaseErrorBound {
        u,
        delta1,
        delta2,
        c_min,
        c_max,
    })
}

/// `N̂^fin = N̂^suc (1 − h(U/N̂^suc)) − s`, zero when `U/N̂^suc ≥ 1/2` and clamped at 0.
pub fn key_length(n_suc: f64, u: f64, s: f64) -> f64 {
    if !(n_suc > 0.0) {
        return 0.0;
    }
    let ratio = u / n_suc;
    if ratio >= 0.5 {
        return 0.0;
    }
    let h = binary_entropy_unchecked(ratio.max(0.0));
    (n_suc * (1.0 - h) - s).max(0.0)
}

/// Integer key length for protocol accounting.
pub fn key_length_bits(n_suc: u64, u: f64, s: u32) -> u64 {
    key_length(n_suc as f64, u, s as f64).floor() as u64
}

/// `Ĝ = (N̂^fin − H_EC − s′)/N`.
pub fn net_gain(n_fin: f64, h_ec: f64, s_prime: f64, n: f64) -> f64 {
    (n_fin - h_ec - s_prime) / n
}

/// `√2 √(ε + 2^{−s}) + 2^{−s′}`.
pub fn security_level(eps: f64, s: u32, s_prime: u32) -> f64 {
    let pow2 = |k: u32| 2f64.powi(-(k.min(1100) as i32));
    (2.0 * (eps + pow2(s))).sqrt() + pow2(s_prime)
}

/// Observed or expected statistics feeding the key-rate report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyInputs {
    pub f_hat: f64,
    pub n_suc: f64,
    pub h_ec: f64,
    pub e_bit: f64,
}

/// Assembles the report from the bound and round statistics.
pub fn key_rate_report(
    p: &ProtocolParams,
    ext: &WitnessExtrema,
    bound: &DualBound,
    inputs: KeyInputs,
    regime: Regime,
) -> Result<KeyRateReport> {
    let peb = phase_error_bound_u(p, ext, bound.b_value, inputs.f_hat, regime)?;
    let (s, s_prime) = match regime {
        Regime::Finite => (p.s as f64, p.s_prime as f64),
        Regime::Asymptotic => (0.0, 0.0),
    };
    let n_fin = key_length(inputs.n_suc, peb.u, s);
    let gain = net_gain(n_fin, inputs.h_ec, s_prime, p.n());
    Ok(KeyRateReport {
        b_value: bound.b_value,
        f_hat: inputs.f_hat,
        n_suc: inputs.n_suc,
        e_bit: inputs.e_bit,
        c_min: peb.c_min,
        c_max: peb.c_max,
        delta1: peb.delta1,
        delta2: peb.delta2,
        u_of_f: peb.u,
        n_fin,
        h_ec: inputs.h_ec,
        gain,
        security_level: security_level(p.epsilon, p.s, p.s_prime),
    })
}

/// `ln(1/ε)` for `ε = 2^{−s}`, exact up to one rounding.
pub fn ln_inv_pow2(s: u32) -> f64 {
    s as f64 * LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::witness_extrema;

    /// Oracle: power series of `D(p + t ‖ p)` in `t` for small `t/p`, the
    /// logarithmic form otherwise.
    fn kl_oracle(p: f64, t: f64) -> f64 {
        let (a, b) = (t / p, t / (1.0 - p));
        if a.abs() < 0.5 && b.abs() < 0.5 {
            let mut sum = 0.0;
            let (mut pa, mut pb) = (a * a, b * b);
            for k in 2..200u32 {
                let kf = k as f64;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let term = (sign * p * pa + (1.0 - p) * pb) / (kf * (kf - 1.0));
                sum += term;
                if term.abs() < 1e-20 * sum {
                    break;
                }
                pa *= a;
                pb *= b;
            }
            sum
        } else {
            (p + t) * a.ln_1p() + (1.0 - p - t) * (-b).ln_1p()
        }
    }
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> ProtocolParams {
        ProtocolParams {
            n_rounds: 100_000_000_000,
            mu: 0.5,
            p_sig: 0.5,
            beta: 0.7,
            s: 104,
            s_prime: 51,
            kappa: 1.0,
            gamma: 1.0,
            witness: WitnessParams::standard(),
            x_th: 0.5,
            epsilon: 2f64.powi(-104),
        }
    }

    #[test]
    fn q_minus_values() {
        assert_eq!(q_minus(0.0), 0.0);
        assert!(q_minus(1e-300) > 0.0);
        assert_eq!(q_minus(1e3), 0.5);
        assert_relative_eq!(q_minus(0.5), 0.5 * (1.0 - (-1.0f64).exp()), max_relative = 1e-15);
        assert_relative_eq!(q_minus(0.5), 0.316060279414279, max_relative = 1e-14);
    }

    #[test]
    fn c_range_examples() {
        let ext = witness_extrema(&WitnessParams::standard()).unwrap();
        let mut p = params();
        p.kappa = 0.0;
        p.gamma = 0.0;
        assert_eq!(c_range(&p, &ext), (0.0, 2.0));
        p.kappa = 1.0;
        p.gamma = 1.0;
        let (lo, hi) = c_range(&p, &ext);
        assert_eq!(lo, -2.0);
        assert_relative_eq!(hi, 2.0 * ext.lambda_max, max_relative = 1e-15);
        assert!((hi - 5.648).abs() < 1e-3);
        assert!(hi >= 1.0 / p.p_sig);
    }

    #[test]
    fn delta_one_examples() {
        assert_eq!(delta_one(1e11, -2.0, 5.648, 1.0).unwrap(), 0.0);
        assert_eq!(delta_one(1e11, 3.0, 3.0, 1e-9).unwrap(), 0.0);
        let eps = 2f64.powi(-105);
        let got = delta_one(1e11, -2.0, 5.648, eps).unwrap();
        let oracle = 7.648 * (0.5e11 * ln_inv_pow2(105)).sqrt();
        assert_relative_eq!(got, oracle, max_relative = 1e-14);
        assert!((got - 1.459e7).abs() < 1e4);
        assert!(delta_one(1.0, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn delta_two_back_substitution() {
        let eps = 2f64.powi(-105);
        let d = delta_two(1e11, 1.0, 0.1, eps).unwrap();
        let lhs = kl_oracle(0.1, d / 1e11);
        let rhs = ln_inv_pow2(105) / 1e11;
        assert!(((lhs - rhs) / rhs).abs() < 1e-12);
        assert_eq!(delta_two(1e6, 0.5, 0.2, 1.0).unwrap(), 0.0);
        assert!(delta_two(1e6, 0.5, 0.2, 1.0 - 1e-12).unwrap() < 1e-2);
    }

    #[test]
    fn delta_two_saturated_branch() {
        // p^N = 0.1^5 = 1e-5 ≥ ε
        let d = delta_two(5.0, 1.0, 0.1, 1e-6).unwrap();
        assert_relative_eq!(d, 0.9 * 5.0, max_relative = 1e-15);
        // continuity at the branch point ε = p^N
        let (n, p) = (5.0, 0.1f64);
        let edge = p.powf(n);
        let inside = delta_two(n, 1.0, p, edge * (1.0 + 1e-9)).unwrap();
        assert!((inside - 0.9 * n).abs() < 1e-3, "{inside}");
    }

    #[test]
    fn delta_two_decreasing_in_eps() {
        let mut prev = f64::INFINITY;
        for k in (1..=120).rev() {
            let d = delta_two(1e9, 0.5, 0.3, 2f64.powi(-k)).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn u_specializations() {
        let ext = witness_extrema(&WitnessParams::standard()).unwrap();
        let mut p = params();
        p.kappa = 0.0;
        p.gamma = 0.0;
        let a = phase_error_bound_u(&p, &ext, 1.2, 0.0, Regime::Finite).unwrap();
        let b = phase_error_bound_u(&p, &ext, 1.2, 5e9, Regime::Finite).unwrap();
        assert_eq!(a.u, b.u);
        assert_relative_eq!(a.u, p.p_sig * (p.n() * 1.2 + a.delta1), max_relative = 1e-15);

        let p = params();
        let f1 = phase_error_bound_u(&p, &ext, 0.9, 1e9, Regime::Finite).unwrap().u;
        let f2 = phase_error_bound_u(&p, &ext, 0.9, 2e9, Regime::Finite).unwrap().u;
        assert_relative_eq!((f2 - f1) / 1e9, -p.kappa * p.p_sig / p.p_test(), max_relative = 1e-6);
    }

    #[test]
    fn u_plug_in() {
        // spreadsheet-style recomputation with every term spelled out
        let ext = witness_extrema(&WitnessParams::standard()).unwrap();
        let mut p = params();
        p.kappa = 0.8;
        p.gamma = 0.3;
        p.p_sig = 0.7;
        let b = 0.61;
        let f = 2.5e10;
        let n = 1e11;
        let q = 0.5 * (1.0 - (-1.0f64).exp());
        let c_min = (0.8 * ext.lambda_min / 0.3f64).min(-0.3 / 0.7);
        let c_max = (0.8 * ext.lambda_max / 0.3f64).max(1.0 / 0.7);
        let d1 = (c_max - c_min) * (n / 2.0 * (105.0 * LN_2)).sqrt();
        let d2 = delta_two(n, 0.7, q, 2f64.powi(-105)).unwrap();
        let oracle = -0.8 * (0.7 / 0.3) * f + 0.3 * (n * 0.7 * q + d2) + 0.7 * (n * b + d1);
        let got = phase_error_bound_u(&p, &ext, b, f, Regime::Finite).unwrap();
        assert_relative_eq!(got.u, oracle, max_relative = 1e-12);
        let asym = phase_error_bound_u(&p, &ext, b, f, Regime::Asymptotic).unwrap();
        assert_eq!((asym.delta1, asym.delta2), (0.0, 0.0));
    }

    #[test]
    fn key_length_examples() {
        assert_eq!(key_length(1e6, 0.0, 104.0), 1e6 - 104.0);
        assert_eq!(key_length(1e6, 5e5, 104.0), 0.0);
        assert_eq!(key_length(0.0, 0.0, 104.0), 0.0);
        let h01 = -0.1 * 0.1f64.log2() - 0.9 * 0.9f64.log2();
        let got = key_length(1e9, 1e8, 104.0);
        assert_relative_eq!(got, 1e9 * (1.0 - h01) - 104.0, max_relative = 1e-14);
        assert!((got - 5.310e8).abs() < 1e5 + 1e3);
        assert_eq!(key_length_bits(1_000_000, 0.0, 104), 999_896);
    }

    #[test]
    fn gain_and_security() {
        assert_relative_eq!(net_gain(0.0, 0.0, 51.0, 1e11), -5.1e-10, max_relative = 1e-15);
        assert_eq!(security_level(2f64.powi(-104), 104, 51), 2f64.powi(-50));
        assert_eq!(security_level(0.0, 5000, 51), 2f64.powi(-51));
        assert!(security_level(1e-20, 104, 51) < security_level(1e-19, 104, 51));
    }

    #[test]
    fn log_domain_stress() {
        let ext = witness_extrema(&WitnessParams::standard()).unwrap();
        let mut p = params();
        p.n_rounds = 10_000_000_000_000;
        p.epsilon = 2f64.powi(-200);
        let r = phase_error_bound_u(&p, &ext, 0.8, 1e12, Regime::Finite).unwrap();
        assert!(r.u.is_finite() && r.delta1.is_finite() && r.delta2.is_finite());
        assert!(r.delta2 > 0.0);
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.p_sig = 1.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.mu = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.s = 0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn delta_one_decreasing(a in 1e-30..0.5f64, f in 1.01..10.0f64) {
            let lo = delta_one(1e9, -1.0, 2.0, a).unwrap();
            let hi = delta_one(1e9, -1.0, 2.0, (a * f).min(0.99)).unwrap();
            prop_assert!(hi < lo);
        }

        #[test]
        fn delta_two_residual(n in 1e4..1e12f64, p in 1e-3..0.5f64, k in 5u32..150) {
            let eps = 2f64.powi(-(k as i32));
            let d = delta_two(n, 1.0, p, eps).unwrap();
            if eps.ln() > n * p.ln() {
                let lhs = kl_oracle(p, d / n);
                let rhs = ln_inv_pow2(k) / n;
                prop_assert!(((lhs - rhs) / rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn key_length_nonincreasing(n_suc in 1.0..1e10f64, u1 in 0.0..1e9f64, du in 0.0..1e9f64) {
            prop_assert!(key_length(n_suc, u1 + du, 10.0) <= key_length(n_suc, u1, 10.0));
        }
    }
}
