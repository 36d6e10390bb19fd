//! Heterodyne expectation operators `∫ f(|ω − c|²) |ω⟩⟨ω| d²ω/π` on a
//! truncated Fock space, used to evaluate the fidelity witness on states.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mathkit::{lambda_unchecked, WitnessParams};
use crate::povm::{coherent_amplitudes, FockOperator, FockSpace};
use crate::quad::composite_legendre;

/// `W_f = ∫_{|ω−c| ≤ R} f(|ω − c|²) |ω⟩⟨ω| d²ω/π` for real `c`, by composite
/// Gauss-Legendre in the radius and the periodic trapezoid rule in angle.
pub fn heterodyne_operator(
    space: FockSpace,
    center: f64,
    radius: f64,
    f: impl Fn(f64) -> f64,
) -> Result<FockOperator> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
    }
    let d = space.dim();
    let radial = composite_legendre(0.0, radius, 0.5, 12);
    // even count so θ = π is a node; ⌈|c|R⌉ covers the e^{2|c|ρ cos θ} harmonics
    let angles = 2 * (space.n_max() + 2 * (center.abs() * radius).ceil() as usize + 32);
    let dtheta = 2.0 * PI / angles as f64;
    let mut acc = DMatrix::<f64>::zeros(d, d);
    let mut amp = vec![Complex64::new(0.0, 0.0); d];
    let mut re = vec![0.0; d];
    let mut im = vec![0.0; d];
    for (rho, wr) in radial.iter() {
        let fv = f(rho * rho);
        if fv == 0.0 {
            continue;
        }
        // θ and −θ give conjugate ω and identical Re(c_p c̄_q)
        for j in 0..=angles / 2 {
            let fold = if j == 0 || j == angles / 2 { 1.0 } else { 2.0 };
            let theta = j as f64 * dtheta;
            let omega = Complex64::new(center + rho * theta.cos(), rho * theta.sin());
            coherent_amplitudes(omega, &mut amp);
            let w = fold * wr * rho * dtheta * fv / PI;
            for n in 0..d {
                re[n] = amp[n].re;
                im[n] = amp[n].im;
            }
            for p in 0..d {
                let (rp, ip) = (w * re[p], w * im[p]);
                for q in p..d {
                    acc[(p, q)] += rp * re[q] + ip * im[q];
                }
            }
        }
    }
    for p in 0..d {
        for q in p + 1..d {
            acc[(q, p)] = acc[(p, q)];
        }
    }
    FockOperator::from_matrix(space, acc)
}

/// Fidelity-witness operator `W = ∫ Λ_{m,r}(|ω − β|²) |ω⟩⟨ω| d²ω/π`.
#[derive(Debug, Clone)]
pub struct WitnessOperator {
    pub op: FockOperator,
    pub center: f64,
    pub radius: f64,
    /// Upper bound on `|Λ|` outside the integration disk, which bounds the
    /// neglected contribution for any unit-trace state.
    pub tail_bound: f64,
}

/// Disk radius beyond which `|Λ| < 1e-13`, at least 12.
pub fn witness_radius(w: &WitnessParams) -> (f64, f64) {
    let sup_beyond = |r: f64| {
        let (lo, hi) = (r * r, 16.0 * r * r);
        (0..=4000)
            .map(|i| lambda_unchecked(w, lo + (hi - lo) * i as f64 / 4000.0).abs())
            .fold(0.0, f64::max)
    };
    let mut r = 12.0;
    while sup_beyond(r) > 1e-13 && r < 60.0 {
        r += 1.0;
    }
    (r, sup_beyond(r))
}

pub fn witness_operator(space: FockSpace, w: &WitnessParams, beta: f64) -> Result<WitnessOperator> {
    let (radius, tail_bound) = witness_radius(w);
    let op = heterodyne_operator(space, beta, radius, |nu| lambda_unchecked(w, nu))?;
    Ok(WitnessOperator {
        op,
        center: beta,
        radius,
        tail_bound,
    })
}

/// `Tr(ρ O)` for a complex Hermitian `ρ` and real symmetric `O`.
pub fn expectation_complex(rho: &DMatrix<Complex64>, op: &FockOperator) -> f64 {
    let m = op.matrix();
    let mut acc = 0.0;
    for p in 0..m.nrows() {
        for q in 0..m.ncols() {
            acc += rho[(p, q)].re * m[(q, p)];
        }
    }
    acc
}

/// `⟨v|ρ|v⟩` for real `v`.
pub fn overlap_complex(rho: &DMatrix<Complex64>, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for p in 0..v.len() {
        for q in 0..v.len() {
            acc += v[p] * rho[(p, q)].re * v[q];
        }
    }
    acc
}
