use hetkey::optimize::{evaluate_rate, optimize_point};
use hetkey::sim::{run_protocol, simulated_key};
use hetkey::{ChannelParams, FixedParams, OptimizationConfig, ProtocolParams, Regime, WitnessParams};

fn params(ch: &ChannelParams, n_rounds: u64) -> ProtocolParams {
    let mu = 0.6;
    ProtocolParams {
        n_rounds,
        mu,
        p_sig: 0.77,
        beta: ch.received_amplitude(mu),
        s: 104,
        s_prime: 51,
        kappa: 25.0,
        gamma: 0.9,
        witness: WitnessParams::standard(),
        x_th: 1.0,
        epsilon: 2f64.powi(-104),
    }
}

#[test]
fn simulated_key_tracks_the_expected_rate() {
    let ch = ChannelParams::from_attenuation_db(1.0, 1e-3).unwrap();
    let p = params(&ch, 100_000_000);
    let expected = evaluate_rate(&ch, &p, Regime::Asymptotic).unwrap();
    assert!(expected.gain > 0.0);
    let tally = run_protocol(&ch, &p, 11).unwrap();
    let sim = simulated_key(&tally, &p, Regime::Asymptotic).unwrap();
    assert!(!sim.no_successes);
    let rel = (sim.report.gain - expected.gain).abs() / expected.gain;
    assert!(rel < 0.1, "simulated {} vs expected {}", sim.report.gain, expected.gain);
    assert!((sim.report.n_suc - expected.n_suc).abs() / expected.n_suc < 1e-3);
}

#[test]
fn reoptimizing_from_the_optimum_stays_put() {
    let ch = ChannelParams::from_attenuation_db(2.0, 1e-3).unwrap();
    let fixed = FixedParams::default();
    let cfg = OptimizationConfig::default();
    let first = optimize_point(&ch, &fixed, &cfg, &[]).unwrap();
    let again = optimize_point(&ch, &fixed, &cfg, &[first.warm_start()]).unwrap();
    let (a, b) = (first.report.gain, again.report.gain);
    assert!(a > 0.0);
    assert!(b >= a * (1.0 - 1e-6), "{a} then {b}");
}

#[test]
fn optimized_rate_falls_with_excess_noise() {
    let fixed = FixedParams::default();
    let cfg = OptimizationConfig::default();
    let mut prev = f64::INFINITY;
    for xi in [0.0, 1e-3, 1e-2] {
        let ch = ChannelParams::from_attenuation_db(1.0, xi).unwrap();
        let gain = optimize_point(&ch, &fixed, &cfg, &[]).unwrap().report.gain.max(0.0);
        assert!(gain < prev, "xi = {xi}: {gain} after {prev}");
        prev = gain;
    }
}
