//! Gaussian channel model: loss `η` followed by a random displacement with
//! density `p_ξ(γ) = (2/πξ) e^{−2|γ|²/ξ}`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finitesize::ProtocolParams;
use crate::mathkit::{binary_entropy_unchecked, erfc_comp, WitnessParams};
use crate::povm::{coherent_amplitudes, FockSpace, QubitFockOperator, COHERENT_TAIL_LIMIT};
use crate::quad::gauss_hermite;

/// Error-correction inefficiency factor.
pub const EC_EFFICIENCY: f64 = 1.1;

/// Gauss-Hermite order per dimension for the noise average.
const NOISE_ORDER: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub eta: f64,
    pub xi: f64,
}

impl ChannelParams {
    pub fn new(eta: f64, xi: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid("eta", format!("must lie in (0,1], got {eta}")));
        }
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::invalid("xi", format!("must be >= 0, got {xi}")));
        }
        Ok(Self { eta, xi })
    }

    /// `η = 10^{−dB/10}`.
    pub fn from_attenuation_db(db: f64, xi: f64) -> Result<Self> {
        if !(db >= 0.0 && db.is_finite()) {
            return Err(Error::invalid("atten_db", format!("must be >= 0, got {db}")));
        }
        Self::new(10f64.powf(-db / 10.0), xi)
    }

    pub fn attenuation_db(&self) -> f64 {
        -10.0 * self.eta.log10()
    }

    /// Mean received amplitude `√(ημ)`.
    pub fn received_amplitude(&self, mu: f64) -> f64 {
        (self.eta * mu).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelExpectations {
    /// `E[F̂]/(N p_test)`.
    pub e_f_per_test: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub e_bit: f64,
    /// `E[N̂^suc]/(N p_sig) = P+ + P−`.
    pub e_n_suc_per_signal: f64,
}

impl ChannelExpectations {
    pub fn compute(ch: &ChannelParams, p: &ProtocolParams) -> Result<Self> {
        let (p_plus, p_minus) = success_probs(ch, p)?;
        let total = p_plus + p_minus;
        Ok(Self {
            e_f_per_test: expected_f_per_test(ch, &p.witness),
            p_plus,
            p_minus,
            e_bit: if total > 0.0 { p_minus / total } else { 0.5 },
            e_n_suc_per_signal: total,
        })
    }

    pub fn expected_f(&self, p: &ProtocolParams) -> f64 {
        p.n() * p.p_test() * self.e_f_per_test
    }

    pub fn expected_n_suc(&self, p: &ProtocolParams) -> f64 {
        p.n() * p.p_sig * self.e_n_suc_per_signal
    }
}

/// `E[Λ]` per test round: `(1/(1+ξ/2))[1 − (−1)^{m+1}((ξ/2)/(1+r(1+ξ/2)))^{m+1}]`.
pub fn expected_f_per_test(ch: &ChannelParams, w: &WitnessParams) -> f64 {
    let h = 0.5 * ch.xi;
    let ratio = h / (1.0 + w.r() * (1.0 + h));
    let sign = if (w.m() + 1) % 2 == 0 { 1.0 } else { -1.0 };
    (1.0 - sign * ratio.powi(w.m() as i32 + 1)) / (1.0 + h)
}

/// `E[F̂]`; the closed form assumes the test reference `β = √(ημ)`.
pub fn expected_f(ch: &ChannelParams, p: &ProtocolParams) -> f64 {
    let matched = ch.received_amplitude(p.mu);
    if (p.beta - matched).abs() > 1e-12 * matched.max(1.0) {
        log::warn!(
            "test reference β = {} differs from √(ημ) = {matched}; E[F̂] formula assumes equality",
            p.beta
        );
    }
    p.n() * p.p_test() * expected_f_per_test(ch, &p.witness)
}

/// `P± = ½ erfc[(x_th ∓ √(ημ)) √(2/(2+ξ))]`.
pub fn success_probs(ch: &ChannelParams, p: &ProtocolParams) -> Result<(f64, f64)> {
    if !(p.x_th >= 0.0) {
        return Err(Error::invalid("x_th", format!("must be >= 0, got {}", p.x_th)));
    }
    let a = ch.received_amplitude(p.mu);
    let scale = (2.0 / (2.0 + ch.xi)).sqrt();
    Ok((
        0.5 * erfc_comp((p.x_th - a) * scale),
        0.5 * erfc_comp((p.x_th + a) * scale),
    ))
}

/// `(H_EC, e_bit)` with `H_EC = 1.1 N̂^suc h(e_bit)` and `e_bit = P−/(P+ + P−)`.
pub fn ec_cost(n_suc: f64, p_plus: f64, p_minus: f64) -> Result<(f64, f64)> {
    let total = p_plus + p_minus;
    if !(total > 0.0) {
        return Err(Error::invalid("p_plus+p_minus", "zero success probability"));
    }
    let e_bit = p_minus / total;
    Ok((EC_EFFICIENCY * n_suc * binary_entropy_unchecked(e_bit), e_bit))
}

/// Joint qubit-pulse state under the honest channel, in the qubit X basis.
#[derive(Debug, Clone)]
pub struct JointState {
    pub rho: QubitFockOperator,
    /// `|Tr ρ − 1|` before renormalization.
    pub trace_drift: f64,
    /// Largest imaginary part discarded when rotating to the X basis.
    pub max_imag: f64,
}

/// `ρ_AC = Σ_{a,a′} ½ c_{aa′} |a⟩⟨a′| ⊗ ∫ p_ξ(γ) D(γ)|(−1)^a√(ημ)⟩⟨(−1)^{a′}√(ημ)|D(γ)† d²γ`
/// with `c_{aa′} = e^{−2(1−η)μ}` off the diagonal.
///
/// The displacement keeps its phase, `D(γ)|α⟩ = e^{iα Im γ}|α + γ⟩` for real
/// `α`; without it the qubit coherence would pick up a spurious `ξ` dependence.
pub fn joint_state(ch: &ChannelParams, p: &ProtocolParams, space: FockSpace) -> Result<JointState> {
    let amp = ch.received_amplitude(p.mu);
    let coherence = (-2.0 * (1.0 - ch.eta) * p.mu).exp();
    let sigma = (0.5 * ch.xi).sqrt();
    let nodes: Vec<(f64, f64, f64)> = if ch.xi == 0.0 {
        vec![(0.0, 0.0, 1.0)]
    } else {
        let gh = gauss_hermite(NOISE_ORDER);
        gh.iter()
            .flat_map(|(u, wu)| gh.iter().map(move |(v, wv)| (u, v, wu * wv / std::f64::consts::PI)))
            .collect()
    };
    let reach = amp + sigma * nodes.iter().map(|n| n.0.abs().max(n.1.abs())).fold(0.0, f64::max) * 2f64.sqrt();
    let tail = space.coherent_tail(reach);
    if tail > COHERENT_TAIL_LIMIT {
        return Err(Error::Truncation {
            n_max: space.n_max(),
            tail,
            limit: COHERENT_TAIL_LIMIT,
        });
    }

    let d = space.dim();
    // Z-basis blocks R_{00}, R_{01}, R_{11}; R_{10} = R_{01}†
    let mut z = [
        DMatrix::<Complex64>::zeros(d, d),
        DMatrix::<Complex64>::zeros(d, d),
        DMatrix::<Complex64>::zeros(d, d),
    ];
    let mut plus = vec![Complex64::new(0.0, 0.0); d];
    let mut minus = vec![Complex64::new(0.0, 0.0); d];
    for &(u, v, w) in &nodes {
        let g = Complex64::new(sigma * u, sigma * v);
        coherent_amplitudes(Complex64::new(amp, 0.0) + g, &mut plus);
        coherent_amplitudes(Complex64::new(-amp, 0.0) + g, &mut minus);
        let ph_plus = Complex64::from_polar(1.0, amp * g.im);
        let ph_minus = Complex64::from_polar(1.0, -amp * g.im);
        for n in 0..d {
            plus[n] *= ph_plus;
            minus[n] *= ph_minus;
        }
        for i in 0..d {
            for j in 0..d {
                z[0][(i, j)] += w * plus[i] * plus[j].conj();
                z[1][(i, j)] += w * plus[i] * minus[j].conj();
                z[2][(i, j)] += w * minus[i] * minus[j].conj();
            }
        }
    }
    let r00 = &z[0] * Complex64::new(0.5, 0.0);
    let r11 = &z[2] * Complex64::new(0.5, 0.0);
    let r01 = &z[1] * Complex64::new(0.5 * coherence, 0.0);
    let r10 = r01.adjoint();
    // ⟨±|0⟩ = 1/√2, ⟨±|1⟩ = ±1/√2
    let half = Complex64::new(0.5, 0.0);
    let pp = (&r00 + &r01 + &r10 + &r11) * half;
    let pm = (&r00 - &r01 + &r10 - &r11) * half;
    let mp = (&r00 + &r01 - &r10 - &r11) * half;
    let mm = (&r00 - &r01 - &r10 + &r11) * half;
    let max_imag = [&pp, &pm, &mp, &mm]
        .iter()
        .map(|b| b.iter().map(|c| c.im.abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if max_imag > 1e-10 {
        return Err(Error::Numerical(format!(
            "joint state has imaginary X-basis entries up to {max_imag}"
        )));
    }
    let re = |b: &DMatrix<Complex64>| b.map(|c| c.re);
    let mut rho = QubitFockOperator::zeros(space);
    rho.pp = re(&pp);
    rho.pm = re(&pm);
    rho.mp = re(&mp);
    rho.mm = re(&mm);
    let trace = rho.trace();
    let trace_drift = (trace - 1.0).abs();
    if trace_drift > 1e-8 {
        return Err(Error::Numerical(format!(
            "joint state trace drift {trace_drift} exceeds 1e-8"
        )));
    }
    Ok(JointState {
        rho: rho.scaled(1.0 / trace),
        trace_drift,
        max_imag,
    })
}

/// Both sides of `Tr(M_ph ρ) ≤ B − κ Tr(Π^fid ρ) + γ Tr(Π_-^sig ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorCheck {
    pub phase_error: f64,
    pub fidelity: f64,
    pub minus_weight: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

pub fn asymptotic_phase_error(
    rho: &QubitFockOperator,
    m_ph: &QubitFockOperator,
    pi_fid: &QubitFockOperator,
    pi_minus: &QubitFockOperator,
    b_value: f64,
    kappa: f64,
    gamma: f64,
) -> PhaseErrorCheck {
    let phase_error = m_ph.trace_product(rho);
    let fidelity = pi_fid.trace_product(rho);
    let minus_weight = pi_minus.trace_product(rho);
    let rhs = b_value - kappa * fidelity + gamma * minus_weight;
    let margin = rhs - phase_error;
    PhaseErrorCheck {
        phase_error,
        fidelity,
        minus_weight,
        rhs,
        margin,
        holds: margin >= -1e-7,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound::dual_bound;
    use crate::finitesize::q_minus;
    use crate::heterodyne::witness_operator;
    use crate::povm::{
        build_success_povm, fidelity_projector, minus_projector, phase_error_operator, povm_moments,
        FockOperator, XLabel,
    };
    use crate::quad::composite_legendre;
    use approx::assert_relative_eq;

    fn params(mu: f64, eta: f64, x_th: f64) -> ProtocolParams {
        ProtocolParams {
            n_rounds: 1_000_000,
            mu,
            p_sig: 0.6,
            beta: (eta * mu).sqrt(),
            s: 104,
            s_prime: 51,
            kappa: 0.5,
            gamma: 0.5,
            witness: WitnessParams::standard(),
            x_th,
            epsilon: 2f64.powi(-104),
        }
    }

    #[test]
    fn attenuation_roundtrip() {
        let ch = ChannelParams::from_attenuation_db(3.0, 0.0).unwrap();
        assert_relative_eq!(ch.attenuation_db(), 3.0, max_relative = 1e-14);
        assert!(ChannelParams::new(0.0, 0.0).is_err());
        assert!(ChannelParams::new(0.5, -1.0).is_err());
    }

    #[test]
    fn expected_f_values() {
        let p = params(0.5, 1.0, 0.3);
        let ch = ChannelParams::new(1.0, 0.0).unwrap();
        assert_eq!(expected_f(&ch, &p), p.n() * p.p_test());
        let ch = ChannelParams::new(1.0, 1e-2).unwrap();
        let oracle = (1.0 / 1.005) * (1.0 - (0.005f64 / (1.0 + 0.412 * 1.005)).powi(2));
        assert_relative_eq!(expected_f_per_test(&ch, &p.witness), oracle, max_relative = 1e-15);
        assert!((oracle - 0.9950124351093861).abs() < 1e-15);
        let w = WitnessParams::standard();
        let mut prev = 1.0;
        for k in 1..20 {
            let v = expected_f_per_test(&ChannelParams::new(1.0, k as f64 * 1e-3).unwrap(), &w);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn success_prob_examples() {
        let p = params(0.5, 1.0, 0.5f64.sqrt());
        let ch = ChannelParams::new(1.0, 0.0).unwrap();
        assert_eq!(success_probs(&ch, &p).unwrap().0, 0.5);
        let p = params(0.7, 1.0, 0.0);
        let (a, b) = success_probs(&ch, &p).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn success_probs_match_outcome_density() {
        // Gaussian outcome density with per-quadrature variance (2+ξ)/4
        let (eta, mu, xi, x_th) = (0.1, 0.5, 0.01, 0.3);
        let ch = ChannelParams::new(eta, xi).unwrap();
        let p = params(mu, eta, x_th);
        let (pp, pm) = success_probs(&ch, &p).unwrap();
        let var = (2.0 + xi) / 4.0;
        let mean = (eta * mu).sqrt();
        let dens = |x: f64| (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let rule = composite_legendre(x_th, x_th + 15.0, 0.25, 16);
        let plus = rule.integrate(dens);
        let rule = composite_legendre(-x_th - 15.0, -x_th, 0.25, 16);
        let minus = rule.integrate(dens);
        assert_relative_eq!(pp, plus, max_relative = 1e-12);
        assert_relative_eq!(pm, minus, max_relative = 1e-12);
    }

    #[test]
    fn ec_examples() {
        assert_eq!(ec_cost(1e6, 0.4, 0.0).unwrap(), (0.0, 0.0));
        let (h, e) = ec_cost(1e6, 0.2, 0.2).unwrap();
        assert_eq!(e, 0.5);
        assert_relative_eq!(h, 1.1e6, max_relative = 1e-15);
        assert!(ec_cost(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn pure_state_without_loss_or_noise() {
        let s = FockSpace::new(40).unwrap();
        let ch = ChannelParams::new(1.0, 0.0).unwrap();
        let p = params(0.6, 1.0, 0.3);
        let js = joint_state(&ch, &p, s).unwrap();
        let pm = minus_projector(s);
        assert!((pm.trace_product(&js.rho) - q_minus(0.6)).abs() < 1e-12);
        // rank one
        let eig = nalgebra::SymmetricEigen::new(js.rho.to_dense()).eigenvalues;
        let mut sorted: Vec<f64> = eig.iter().copied().collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((sorted[0] - 1.0).abs() < 1e-10 && sorted[1].abs() < 1e-10);
    }

    #[test]
    fn minus_weight_independent_of_channel() {
        let s = FockSpace::new(40).unwrap();
        for (eta, xi) in [(0.5, 0.0), (0.3, 1e-3), (0.63, 1e-2), (0.9, 0.1)] {
            let ch = ChannelParams::new(eta, xi).unwrap();
            let p = params(0.8, eta, 0.4);
            let js = joint_state(&ch, &p, s).unwrap();
            let w = minus_projector(s).trace_product(&js.rho);
            assert!((w - q_minus(0.8)).abs() < 1e-10, "η={eta} ξ={xi}: {w}");
            assert!(js.rho.min_eigenvalue() > -1e-9);
            assert!((js.rho.trace() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn success_trace_matches_closed_form() {
        let s = FockSpace::new(40).unwrap();
        let (eta, xi, mu, x_th) = (0.5, 0.02, 0.7, 0.45);
        let ch = ChannelParams::new(eta, xi).unwrap();
        let p = params(mu, eta, x_th);
        let js = joint_state(&ch, &p, s).unwrap();
        let (ev, od) = build_success_povm(s, x_th).unwrap();
        let suc = FockOperator::from_matrix(s, ev.matrix() + od.matrix()).unwrap();
        let op = QubitFockOperator::diagonal(XLabel::Plus, &suc).add(&QubitFockOperator::diagonal(XLabel::Minus, &suc));
        let (pp, pm) = success_probs(&ch, &p).unwrap();
        assert!((op.trace_product(&js.rho) - (pp + pm)).abs() < 1e-7);
    }

    #[test]
    fn noise_order_converged() {
        // the bit-conditional pulse state at ξ = 0.1 is reproduced with a finer rule
        let s = FockSpace::new(30).unwrap();
        let ch = ChannelParams::new(0.8, 0.1).unwrap();
        let p = params(0.5, 0.8, 0.2);
        let coarse = joint_state(&ch, &p, s).unwrap().rho.to_dense();
        let amp = ch.received_amplitude(p.mu);
        let sigma = (0.05f64).sqrt();
        let gh = gauss_hermite(48);
        let d = s.dim();
        let mut fine = DMatrix::<f64>::zeros(d, d);
        let mut v = vec![Complex64::new(0.0, 0.0); d];
        for (u, wu) in gh.iter() {
            for (y, wy) in gh.iter() {
                coherent_amplitudes(Complex64::new(amp + sigma * u, sigma * y), &mut v);
                let w = wu * wy / std::f64::consts::PI;
                for i in 0..d {
                    for j in 0..d {
                        fine[(i, j)] += w * (v[i] * v[j].conj()).re;
                    }
                }
            }
        }
        // ½(⟨+|ρ|+⟩ + ⟨−|ρ|−⟩ + ⟨+|ρ|−⟩ + ⟨−|ρ|+⟩) = R_00 = ½ ρ_C^{a=0}
        let pp = coarse.view((0, 0), (d, d));
        let pm = coarse.view((0, d), (d, d));
        let mp = coarse.view((d, 0), (d, d));
        let mm = coarse.view((d, d), (d, d));
        let r00 = (pp + pm + mp + mm) * 0.5;
        let err = (r00 * 2.0 - &fine).amax();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn witness_expectation_matches_closed_form() {
        let s = FockSpace::new(40).unwrap();
        let (eta, xi, mu) = (0.6, 0.05, 0.5);
        let ch = ChannelParams::new(eta, xi).unwrap();
        let p = params(mu, eta, 0.3);
        let js = joint_state(&ch, &p, s).unwrap();
        let d = s.dim();
        let dense = js.rho.to_dense();
        // ρ_C^{a=0} = 2 R_00, ρ_C^{a=1} = 2 R_11 from the X-basis blocks
        let pp = dense.view((0, 0), (d, d)).into_owned();
        let pm = dense.view((0, d), (d, d)).into_owned();
        let mp = dense.view((d, 0), (d, d)).into_owned();
        let mm = dense.view((d, d), (d, d)).into_owned();
        let rho0 = (&pp + &pm + &mp + &mm) * 1.0;
        let rho1 = (&pp - &pm - &mp + &mm) * 1.0;
        let beta = p.beta;
        let expect = expected_f_per_test(&ch, &p.witness);
        for (rho_c, center) in [(rho0, beta), (rho1, -beta)] {
            let w = witness_operator(s, &p.witness, center).unwrap();
            let e = (&rho_c * w.op.matrix()).trace() / rho_c.trace();
            assert!(((e - expect) / expect).abs() < 1e-5, "{e} vs {expect}");
        }
    }

    #[test]
    fn asymptotic_inequality_holds() {
        let s = FockSpace::new(40).unwrap();
        let ch = ChannelParams::from_attenuation_db(2.0, 1e-3).unwrap();
        let p = params(0.6, ch.eta, 0.4);
        let js = joint_state(&ch, &p, s).unwrap();
        let (ev, od) = build_success_povm(s, p.x_th).unwrap();
        let mom = povm_moments(s, p.beta, &ev, &od).unwrap();
        for (k, g) in [(0.0, 0.0), (0.5, 0.5), (2.0, 1.0)] {
            let b = dual_bound(&mom, k, g).unwrap();
            let chk = asymptotic_phase_error(
                &js.rho,
                &phase_error_operator(&ev, &od),
                &fidelity_projector(s, p.beta).unwrap(),
                &minus_projector(s),
                b.b_value,
                k,
                g,
            );
            assert!(chk.holds && chk.margin > 0.0, "{chk:?}");
        }
        // large threshold on the lossless pure state: no phase errors
        let ch = ChannelParams::new(1.0, 0.0).unwrap();
        let p = params(0.6, 1.0, 9.0);
        let js = joint_state(&ch, &p, s).unwrap();
        let (ev, od) = build_success_povm(s, 9.0).unwrap();
        assert!(phase_error_operator(&ev, &od).trace_product(&js.rho).abs() < 1e-12);
    }
}
