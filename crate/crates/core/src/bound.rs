//! Dual bound `B(κ,γ)` on `M[κ,γ] = M_ph + κΠ^fid − γΠ_-^sig` from the
//! 4×4 error-sector and 2×2 correct-sector compressions.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::povm::{PovmMoments, QubitFockOperator, Sector};

/// Smallest reference amplitude accepted by the bound pipeline.
pub const MIN_BETA: f64 = 1e-6;

/// Default slack for the truncated operator inequality.
pub const DEFAULT_INEQUALITY_TOL: f64 = 1e-7;

/// Which matrix attained `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    Err4d,
    Cor2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualBound {
    pub kappa: f64,
    pub gamma: f64,
    pub m4d_err: [[f64; 4]; 4],
    pub m2d_cor: [[f64; 2]; 2],
    pub sup_err: f64,
    pub sup_cor: f64,
    pub b_value: f64,
    pub branch: BoundBranch,
}

/// Clamps `β` to [`MIN_BETA`], warning when it does.
pub fn clamp_beta(beta: f64) -> f64 {
    if beta < MIN_BETA {
        log::warn!("reference amplitude {beta} clamped to {MIN_BETA}");
        MIN_BETA
    } else {
        beta
    }
}

/// Largest eigenvalue of a real symmetric matrix of size at most 4.
pub fn sup_spectrum_sym<const N: usize>(mat: &[[f64; N]; N]) -> Result<f64> {
    if N == 0 || N > 4 {
        return Err(Error::invalid("mat", format!("size {N} outside 1..=4")));
    }
    let mut asym: f64 = 0.0;
    for i in 0..N {
        for j in 0..i {
            asym = asym.max((mat[i][j] - mat[j][i]).abs());
        }
    }
    if asym > 1e-9 {
        return Err(Error::Asymmetric(asym));
    }
    Ok(match N {
        1 => mat[0][0],
        2 => sup_2x2(mat[0][0], mat[0][1], mat[1][1]),
        _ => jacobi_eigenvalues(mat)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max),
    })
}

#[inline]
fn sup_2x2(a: f64, b: f64, d: f64) -> f64 {
    0.5 * (a + d) + (0.5 * (a - d)).hypot(b)
}

/// Cyclic Jacobi rotations on a symmetrized copy.
fn jacobi_eigenvalues<const N: usize>(mat: &[[f64; N]; N]) -> [f64; N] {
    let mut a = *mat;
    for i in 0..N {
        for j in 0..i {
            let avg = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = avg;
            a[j][i] = avg;
        }
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..N {
            diag += a[i][i] * a[i][i];
            for j in i + 1..N {
                off += a[i][j] * a[i][j];
            }
        }
        if off <= 1e-34 * diag || off == 0.0 {
            break;
        }
        for p in 0..N {
            for q in p + 1..N {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / apq;
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..N {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = a[i][i];
    }
    out
}

fn check_weights(kappa: f64, gamma: f64) -> Result<()> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::invalid("kappa", format!("must be finite and >= 0, got {kappa}")));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be finite and >= 0, got {gamma}")));
    }
    Ok(())
}

/// Error-sector compression of `M[κ,γ]` in the basis built from the two
/// parity components of `|β⟩` and their POVM residuals.
pub fn build_m4d_err(mom: &PovmMoments, kappa: f64, gamma: f64) -> [[f64; 4]; 4] {
    let sv_od = mom.v_od.max(0.0).sqrt();
    let sv_ev = mom.v_ev.max(0.0).sqrt();
    let cross = kappa * (mom.c_od * mom.c_ev).sqrt();
    [
        [1.0, sv_od, 0.0, 0.0],
        [sv_od, kappa * mom.c_od + mom.d_od, cross, 0.0],
        [0.0, cross, kappa * mom.c_ev + mom.d_ev - gamma, sv_ev],
        [0.0, 0.0, sv_ev, 1.0 - gamma],
    ]
}

/// Correct-sector compression `[[κC_ev, κ√(C_od C_ev)], [κ√(C_od C_ev), κC_od − γ]]`.
pub fn build_m2d_cor(mom: &PovmMoments, kappa: f64, gamma: f64) -> [[f64; 2]; 2] {
    let cross = kappa * (mom.c_od * mom.c_ev).sqrt();
    [
        [kappa * mom.c_ev, cross],
        [cross, kappa * mom.c_od - gamma],
    ]
}

/// `B(κ,γ) = max(σ_sup(M_4d^err), σ_sup(M_2d^cor))`.
pub fn dual_bound(mom: &PovmMoments, kappa: f64, gamma: f64) -> Result<DualBound> {
    check_weights(kappa, gamma)?;
    let m4d_err = build_m4d_err(mom, kappa, gamma);
    let m2d_cor = build_m2d_cor(mom, kappa, gamma);
    let sup_err = sup_spectrum_sym(&m4d_err)?;
    let sup_cor = sup_spectrum_sym(&m2d_cor)?;
    let (b_value, branch) = if sup_err >= sup_cor {
        (sup_err, BoundBranch::Err4d)
    } else {
        (sup_cor, BoundBranch::Cor2d)
    };
    Ok(DualBound {
        kappa,
        gamma,
        m4d_err,
        m2d_cor,
        sup_err,
        sup_cor,
        b_value,
        branch,
    })
}

/// Outcome of the truncated check `σ_sup(M[κ,γ]) ≤ B(κ,γ) + tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub sup_err_sector: f64,
    pub sup_cor_sector: f64,
    pub sup_total: f64,
    pub b_value: f64,
    /// `B − σ_sup`; negative when violated.
    pub margin: f64,
    pub tolerance: f64,
    pub cross_sector_norm: f64,
    pub holds: bool,
}

/// Diagonalizes each invariant sector of `m` and compares with `b`.
pub fn verify_operator_inequality(
    m: &QubitFockOperator,
    b: &DualBound,
    tol: f64,
) -> InequalityReport {
    let sup = |sector| SymmetricEigen::new(m.restrict(sector)).eigenvalues.max();
    let sup_err_sector = sup(Sector::Err);
    let sup_cor_sector = sup(Sector::Cor);
    let sup_total = sup_err_sector.max(sup_cor_sector);
    let margin = b.b_value - sup_total;
    InequalityReport {
        sup_err_sector,
        sup_cor_sector,
        sup_total,
        b_value: b.b_value,
        margin,
        tolerance: tol,
        cross_sector_norm: m.cross_sector_norm(),
        holds: margin >= -tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::{assemble_m, build_success_povm, moments_direct, povm_moments, FockSpace};
    use crate::quad::{composite_legendre, gauss_hermite};
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Largest root of the characteristic polynomial, from Faddeev-LeVerrier
    /// coefficients and bisection below the Gershgorin bound.
    fn char_poly_sup<const N: usize>(a: &[[f64; N]; N]) -> f64 {
        let am = DMatrix::from_fn(N, N, |i, j| a[i][j]);
        let mut coeffs = vec![1.0; N + 1]; // coeffs[k] multiplies λ^{N-k}
        let mut mk = DMatrix::<f64>::zeros(N, N);
        for k in 1..=N {
            mk = &am * &mk + DMatrix::identity(N, N) * coeffs[k - 1];
            let amk = &am * &mk;
            coeffs[k] = -amk.trace() / k as f64;
        }
        let p = |x: f64| coeffs.iter().fold(0.0, |acc, c| acc * x + c);
        let radius = (0..N)
            .map(|i| (0..N).map(|j| a[i][j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
            + 1.0;
        // scan downward from the bound for the first sign change
        let steps = 200_000;
        let mut hi = radius;
        let mut p_hi = p(hi);
        for i in 1..=steps {
            let lo = radius - 2.0 * radius * i as f64 / steps as f64;
            let p_lo = p(lo);
            if p_lo == 0.0 {
                return lo;
            }
            if (p_lo > 0.0) != (p_hi > 0.0) {
                let (mut l, mut h) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (l + h);
                    if (p(mid) > 0.0) == (p_hi > 0.0) {
                        h = mid;
                    } else {
                        l = mid;
                    }
                }
                return 0.5 * (l + h);
            }
            hi = lo;
            p_hi = p_lo;
        }
        panic!("no root found");
    }

    fn random_sym4(rng: &mut ChaCha8Rng) -> [[f64; 4]; 4] {
        let mut a = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..=i {
                let v = rng.random_range(-3.0..3.0);
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        a
    }

    #[test]
    fn trivial_spectra() {
        let g = 0.3;
        assert_eq!(sup_spectrum_sym(&[[1.0, 0.0], [0.0, -g]]).unwrap(), 1.0);
        assert_eq!(sup_spectrum_sym(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(), 1.0);
        assert!(matches!(
            sup_spectrum_sym(&[[0.0, 1.0], [0.0, 0.0]]),
            Err(Error::Asymmetric(_))
        ));
        let d = [[2.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0], [0.0, 0.0, 5.0, 0.0], [0.0, 0.0, 0.0, 3.0]];
        assert_eq!(sup_spectrum_sym(&d).unwrap(), 5.0);
    }

    #[test]
    fn random_4x4_against_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let a = random_sym4(&mut rng);
            let got = sup_spectrum_sym(&a).unwrap();
            let oracle = char_poly_sup(&a);
            assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
        }
        // degenerate spectrum
        let a = [[1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 2.0, 0.0], [0.0, 0.0, 0.0, 2.0]];
        assert!((sup_spectrum_sym(&a).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn random_3x3_against_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut a = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..=i {
                    let v = rng.random_range(-2.0..2.0);
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
            let dm = DMatrix::from_fn(3, 3, |i, j| a[i][j]);
            let oracle = SymmetricEigen::new(dm).eigenvalues.max();
            assert!((sup_spectrum_sym(&a).unwrap() - oracle).abs() < 1e-12);
        }
    }

    fn moments(beta: f64, x_th: f64) -> PovmMoments {
        let s = FockSpace::new(40).unwrap();
        let (ev, od) = build_success_povm(s, x_th).unwrap();
        povm_moments(s, beta, &ev, &od).unwrap()
    }

    #[test]
    fn m4d_special_case() {
        let mut m = moments(0.8, 0.6);
        m.v_ev = 0.0;
        m.v_od = 0.0;
        let a = build_m4d_err(&m, 0.0, 0.0);
        assert_eq!(a[0][0], 1.0);
        assert_eq!(a[1][1], m.d_od);
        assert_eq!(a[2][2], m.d_ev);
        assert_eq!(a[3][3], 1.0);
        assert_eq!(sup_spectrum_sym(&a).unwrap(), 1.0);
        let m = moments(0.8, 0.6);
        let a = build_m4d_err(&m, 1.3, 0.7);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a[i][j], a[j][i]);
            }
        }
    }

    /// Oracle for `C/D/V` without Fock truncation: `⟨ω|Π_ev|β⟩ ∝ cosh(ω̄β)`,
    /// `⟨ω|Π_ev|ω'⟩ ∝ cosh(ω̄ω')`, integrated on a product rule.
    fn moments_by_overlap_kernels(beta: f64, x_th: f64) -> (f64, f64, f64, f64) {
        let xs = composite_legendre(x_th, x_th + 8.0, 1.0, 12);
        let ys = gauss_hermite(40);
        // e^{-y²} lives in the Hermite weight
        let nodes: Vec<(Complex64, f64)> = xs
            .iter()
            .flat_map(|(x, wx)| ys.iter().map(move |(y, wy)| (Complex64::new(x, y), wx * wy * (-x * x).exp())))
            .collect();
        let b = Complex64::new(beta, 0.0);
        let pref = (-0.5 * beta * beta).exp();
        let mut out = [0.0; 4];
        for (k, parity) in [(0usize, 0), (1, 1)] {
            let f = |z: Complex64| if parity == 0 { z.cosh() } else { z.sinh() };
            let g: Vec<Complex64> = nodes.iter().map(|(w, _)| f(w.conj() * b) * pref).collect();
            let c = if parity == 0 {
                (-beta * beta).exp() * (beta * beta).cosh()
            } else {
                (-beta * beta).exp() * (beta * beta).sinh()
            };
            let d: f64 = 2.0 / PI * nodes.iter().zip(&g).map(|((_, w), gi)| w * gi.norm_sqr()).sum::<f64>();
            let mut sq = 0.0;
            for (i, (wi, ai)) in nodes.iter().enumerate() {
                let mut inner = Complex64::new(0.0, 0.0);
                for (j, (wj, aj)) in nodes.iter().enumerate() {
                    // the kernel's Gaussian factors are already in the weights
                    inner += aj * f(wi.conj() * wj) * g[j];
                }
                sq += (ai * g[i].conj() * inner).re;
            }
            sq *= (2.0 / PI) * (2.0 / PI);
            out[2 * k] = d / c;
            out[2 * k + 1] = sq / c - (d / c) * (d / c);
        }
        (out[0], out[1], out[2], out[3])
    }

    #[test]
    fn matrix_entries_match_overlap_kernel_oracle() {
        let (beta, x_th, kappa, gamma) = (0.8, 0.6, 1.0, 0.5);
        let (d_ev, v_ev, d_od, v_od) = moments_by_overlap_kernels(beta, x_th);
        let m = moments(beta, x_th);
        for (a, b) in [(m.d_ev, d_ev), (m.v_ev, v_ev), (m.d_od, d_od), (m.v_od, v_od)] {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let oracle = PovmMoments {
            d_ev,
            d_od,
            v_ev,
            v_od,
            ..m
        };
        let a = build_m4d_err(&m, kappa, gamma);
        let o = build_m4d_err(&oracle, kappa, gamma);
        for i in 0..4 {
            for j in 0..4 {
                assert!((a[i][j] - o[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn m2d_properties() {
        let m = moments(0.9, 0.4);
        let z = build_m2d_cor(&m, 0.0, 0.7);
        assert_eq!(z, [[0.0, 0.0], [0.0, -0.7]]);
        assert_eq!(sup_spectrum_sym(&z).unwrap(), 0.0);
        let (k, g) = (1.7, 0.4);
        let a = build_m2d_cor(&m, k, g);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        assert!((det + g * k * m.c_ev).abs() < 1e-14);
        assert!(sup_spectrum_sym(&a).unwrap() > 0.0);
        let a = build_m2d_cor(&m, k, 0.0);
        let oracle = SymmetricEigen::new(DMatrix::from_fn(2, 2, |i, j| a[i][j])).eigenvalues.max();
        assert!((sup_spectrum_sym(&a).unwrap() - k).abs() < 1e-14);
        assert!((oracle - k).abs() < 1e-14);
    }

    #[test]
    fn dual_bound_examples() {
        let m = moments(0.8, 0.6);
        let b0 = dual_bound(&m, 0.0, 0.0).unwrap();
        let ul = [[1.0, m.v_od.sqrt()], [m.v_od.sqrt(), m.d_od]];
        assert!(b0.b_value >= 1.0 && b0.b_value >= sup_spectrum_sym(&ul).unwrap() - 1e-15);

        // interlacing: B(κ,γ) never drops below the γ-free upper-left block
        let k = 1.2;
        let ul = {
            let a = build_m4d_err(&m, k, 0.0);
            [[a[0][0], a[0][1]], [a[1][0], a[1][1]]]
        };
        let floor = sup_spectrum_sym(&ul).unwrap();
        for g in [1.0, 10.0, 1e3, 1e6] {
            assert!(dual_bound(&m, k, g).unwrap().b_value >= floor - 1e-12);
        }

        let b = dual_bound(&m, 2.0, 0.1).unwrap();
        let eig = |a: DMatrix<f64>| SymmetricEigen::new(a).eigenvalues.max();
        let oracle = eig(DMatrix::from_fn(4, 4, |i, j| b.m4d_err[i][j]))
            .max(eig(DMatrix::from_fn(2, 2, |i, j| b.m2d_cor[i][j])));
        assert!((b.b_value - oracle).abs() < 1e-12);
        assert!(dual_bound(&m, -1.0, 0.0).is_err());
        assert!(dual_bound(&m, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn beta_clamp() {
        assert_eq!(clamp_beta(0.0), MIN_BETA);
        assert_eq!(clamp_beta(0.5), 0.5);
    }

    #[test]
    fn inequality_holds_for_phase_error_operator() {
        let s = FockSpace::new(40).unwrap();
        let (ev, od) = build_success_povm(s, 0.6).unwrap();
        let m = povm_moments(s, 0.8, &ev, &od).unwrap();
        let b = dual_bound(&m, 0.0, 0.0).unwrap();
        let op = assemble_m(s, 0.8, 0.0, 0.0, &ev, &od).unwrap();
        let rep = verify_operator_inequality(&op, &b, DEFAULT_INEQUALITY_TOL);
        assert!(rep.holds, "{rep:?}");
        let full = op.sup_spectrum();
        assert!((full - rep.sup_total).abs() < 1e-12);
        // empty acceptance region: σ_sup ≈ 0
        let (ev, od) = build_success_povm(s, 11.0).unwrap();
        let m = povm_moments(s, 0.8, &ev, &od).unwrap();
        let op = assemble_m(s, 0.8, 0.0, 0.0, &ev, &od).unwrap();
        let rep = verify_operator_inequality(&op, &dual_bound(&m, 0.0, 0.0).unwrap(), 1e-7);
        assert!(rep.sup_total.abs() < 1e-9 && rep.holds);
    }

    #[test]
    fn trace_inequality_for_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = FockSpace::new(30).unwrap();
        let d = 2 * s.dim();
        for _ in 0..4 {
            let beta = rng.random_range(0.2..1.5);
            let x_th = rng.random_range(0.0..2.0);
            let (k, g) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
            let (ev, od) = build_success_povm(s, x_th).unwrap();
            let mom = povm_moments(s, beta, &ev, &od).unwrap();
            let b = dual_bound(&mom, k, g).unwrap();
            let op = assemble_m(s, beta, k, g, &ev, &od).unwrap();
            let dense = op.to_dense();
            for _ in 0..250 {
                let rank = rng.random_range(1..4);
                let gm = DMatrix::from_fn(d, rank, |_, _| rng.random_range(-1.0..1.0));
                let mut rho = &gm * gm.transpose();
                rho /= rho.trace();
                let t = (&dense * &rho).trace();
                assert!(t <= b.b_value + 1e-7, "{t} > {}", b.b_value);
            }
        }
    }

    #[test]
    fn continuity_in_kappa() {
        let m = moments(1.1, 0.9);
        for &g in &[0.0, 0.5, 3.0] {
            for &k in &[0.0, 0.7, 2.5] {
                let h = 1e-4;
                let db = dual_bound(&m, k + h, g).unwrap().b_value - dual_bound(&m, k, g).unwrap().b_value;
                // ‖Π^fid‖ = 1 and the compressions are contractions
                assert!(db.abs() <= h * (1.0 + 1e-9), "ΔB = {db}");
            }
        }
    }

    #[test]
    fn direct_moments_give_same_bound() {
        let s = FockSpace::new(40).unwrap();
        let a = moments(0.7, 0.5);
        let b = moments_direct(s, 0.7, 0.5).unwrap();
        let ba = dual_bound(&a, 1.0, 1.0).unwrap().b_value;
        let bb = dual_bound(&b, 1.0, 1.0).unwrap().b_value;
        assert!((ba - bb).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bound_monotone_in_kappa(
            d_ev in 0.0..1.0f64, d_od in 0.0..1.0f64,
            v_ev in 0.0..0.25f64, v_od in 0.0..0.25f64,
            beta in 0.1..1.6f64,
            k in 0.0..5.0f64, dk in 0.0..2.0f64, g in 0.0..5.0f64,
        ) {
            let e = (-2.0 * beta * beta).exp_m1();
            let m = PovmMoments { c_ev: (2.0 + e) / 2.0, c_od: -e / 2.0, d_ev, d_od, v_ev, v_od };
            let lo = dual_bound(&m, k, g).unwrap().b_value;
            let hi = dual_bound(&m, k + dk, g).unwrap().b_value;
            prop_assert!(hi >= lo - 1e-12);
        }

        #[test]
        fn jacobi_matches_nalgebra(entries in proptest::collection::vec(-5.0..5.0f64, 10)) {
            let mut a = [[0.0; 4]; 4];
            let mut it = entries.iter();
            for i in 0..4 {
                for j in 0..=i {
                    let v = *it.next().unwrap();
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
            let oracle = SymmetricEigen::new(DMatrix::from_fn(4, 4, |i, j| a[i][j])).eigenvalues.max();
            prop_assert!((sup_spectrum_sym(&a).unwrap() - oracle).abs() < 1e-11);
        }
    }
}
