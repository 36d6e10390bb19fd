//! Truncated Fock-space operators: coherent states, parity projectors, the
//! heterodyne success POVM `M_ev`/`M_od`, the qubit-pulse operators
//! `M_ph`, `Π^fid`, `Π_-^sig` and the scalar moments feeding the dual bound.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{composite_legendre, gauss_hermite};

/// Largest coherent-state tail mass accepted by [`coherent_vector`].
pub const COHERENT_TAIL_LIMIT: f64 = 1e-10;

/// Largest Gauss-Hermite order the POVM builder will construct.
const MAX_HERMITE_ORDER: usize = 320;

/// Photon-number-truncated single-mode space `span{|0⟩, …, |n_max⟩}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    n_max: usize,
}

impl FockSpace {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::invalid("n_max", "photon cutoff must be at least 1"));
        }
        Ok(Self { n_max })
    }

    /// Smallest even cutoff whose Poisson tail at mean `(β + 4)²` is below `1e-12`.
    pub fn for_amplitude(beta: f64) -> Self {
        let mean = (beta.abs() + 4.0).powi(2);
        let mut n_max = 2;
        while poisson_tail(mean, n_max) >= 1e-12 {
            n_max += 2;
        }
        Self { n_max }
    }

    /// Cutoff for the bound moments: the smallest even `n_max ≥ 40` whose
    /// Poisson tail at mean `β²` is below `1e-15`. The moments converge in
    /// the cutoff much faster than the POVM matrices themselves.
    pub fn for_moments(beta: f64) -> Self {
        let mut n_max = 40;
        while poisson_tail(beta * beta, n_max) >= 1e-15 {
            n_max += 2;
        }
        Self { n_max }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// Probability mass of `|α⟩` above the cutoff.
    pub fn coherent_tail(&self, alpha: f64) -> f64 {
        poisson_tail(alpha * alpha, self.n_max)
    }
}

/// `Σ_{n > n_max} e^{-a} aⁿ / n!`, summed directly so tiny tails keep their digits.
pub fn poisson_tail(mean: f64, n_max: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let ln_mean = mean.ln();
    let mut ln_term = -mean;
    for n in 1..=n_max + 1 {
        ln_term += ln_mean - (n as f64).ln();
    }
    let mut sum = 0.0;
    let mut n = n_max + 1;
    loop {
        let term = ln_term.exp();
        sum += term;
        n += 1;
        ln_term += ln_mean - (n as f64).ln();
        // past the mode the terms shrink geometrically
        if (n as f64) > mean && (term < 1e-18 * sum || term == 0.0) {
            break;
        }
        if n > n_max + 100_000 {
            break;
        }
    }
    sum
}

/// Truncated coherent state with its discarded tail.
#[derive(Debug, Clone)]
pub struct CoherentVector {
    pub amplitudes: DVector<f64>,
    /// Probability mass beyond the cutoff; the stored amplitudes are not renormalized.
    pub tail_mass: f64,
}

/// Number-basis components `e^{-α²/2} αⁿ / √n!` of a real-amplitude coherent state.
pub fn coherent_vector(space: FockSpace, alpha: f64) -> Result<CoherentVector> {
    let tail_mass = space.coherent_tail(alpha);
    if tail_mass > COHERENT_TAIL_LIMIT {
        return Err(Error::Truncation {
            n_max: space.n_max,
            tail: tail_mass,
            limit: COHERENT_TAIL_LIMIT,
        });
    }
    let mut amp = DVector::zeros(space.dim());
    amp[0] = (-0.5 * alpha * alpha).exp();
    for n in 1..space.dim() {
        amp[n] = amp[n - 1] * alpha / (n as f64).sqrt();
    }
    Ok(CoherentVector {
        amplitudes: amp,
        tail_mass,
    })
}

/// Complex coherent amplitudes `e^{-|ω|²/2} ωⁿ / √n!` written into `out`.
pub(crate) fn coherent_amplitudes(omega: Complex64, out: &mut [Complex64]) {
    out[0] = Complex64::new((-0.5 * omega.norm_sqr()).exp(), 0.0);
    for n in 1..out.len() {
        out[n] = out[n - 1] * omega / (n as f64).sqrt();
    }
}

/// Real symmetric operator on a truncated oscillator.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    space: FockSpace,
    mat: DMatrix<f64>,
}

impl FockOperator {
    pub fn from_matrix(space: FockSpace, mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != space.dim() || mat.ncols() != space.dim() {
            return Err(Error::invalid("mat", "shape does not match the Fock space"));
        }
        let op = Self { space, mat };
        let asym = op.asymmetry();
        if asym > 1e-12 {
            return Err(Error::Asymmetric(asym));
        }
        Ok(op)
    }

    pub fn zeros(space: FockSpace) -> Self {
        Self {
            space,
            mat: DMatrix::zeros(space.dim(), space.dim()),
        }
    }

    pub fn identity(space: FockSpace) -> Self {
        Self {
            space,
            mat: DMatrix::identity(space.dim(), space.dim()),
        }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.mat - self.mat.transpose()).amax()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.mat.clone()).eigenvalues
    }

    pub fn sup_spectrum(&self) -> f64 {
        self.eigenvalues().max()
    }

    /// `⟨v|O|v⟩` for a real vector.
    pub fn expectation(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.mat * v))
    }

    /// Writes the matrix as comma-separated rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for row in self.mat.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Photon-number parity projectors `(Π_ev, Π_od)`.
pub fn parity_projectors(space: FockSpace) -> (FockOperator, FockOperator) {
    let d = space.dim();
    let even = DMatrix::from_fn(d, d, |i, j| if i == j && i % 2 == 0 { 1.0 } else { 0.0 });
    let odd = DMatrix::from_fn(d, d, |i, j| if i == j && i % 2 == 1 { 1.0 } else { 0.0 });
    (
        FockOperator { space, mat: even },
        FockOperator { space, mat: odd },
    )
}

/// Quadrature layout for the half-plane POVM integrals.
#[derive(Debug, Clone, Copy)]
struct HalfPlaneGrid {
    hermite_order: usize,
    upper: f64,
}

impl HalfPlaneGrid {
    fn for_space(space: FockSpace) -> Result<Self> {
        // y-integrand is e^{-y²} times a polynomial of degree ≤ 2 n_max
        let hermite_order = space.n_max + 8;
        if hermite_order > MAX_HERMITE_ORDER {
            return Err(Error::Quadrature(format!(
                "n_max = {} needs Gauss-Hermite order {hermite_order} > {MAX_HERMITE_ORDER}",
                space.n_max
            )));
        }
        Ok(Self {
            hermite_order,
            upper: (2.0 * space.n_max as f64 + 1.0).sqrt() + 9.0,
        })
    }

    /// Nodes `(x, y ≥ 0, weight)` covering `x > x_th`; the weight folds in
    /// `2/π`, the `y ↔ -y` symmetry and `e^{-y²}`.
    fn nodes(&self, x_th: f64) -> Vec<(f64, f64, f64)> {
        let xs = composite_legendre(x_th.max(-self.upper), self.upper, 0.5, 16);
        let ys = gauss_hermite(self.hermite_order);
        let mut out = Vec::with_capacity(xs.len() * ys.len().div_ceil(2));
        for (x, wx) in xs.iter() {
            for (y, wy) in ys.iter() {
                let w = if y > 0.0 {
                    2.0 * wy
                } else if y == 0.0 {
                    wy
                } else {
                    continue;
                };
                // the amplitude vectors below carry e^{-x²/2} but not e^{-y²/2}
                out.push((x, y, 2.0 / PI * wx * w));
            }
        }
        out
    }
}

/// Scaled amplitudes `e^{-x²/2} ωⁿ / √n!` (the `e^{-y²/2}` factor is in the weight).
fn scaled_amplitudes(x: f64, y: f64, out: &mut [Complex64]) {
    let omega = Complex64::new(x, y);
    out[0] = Complex64::new((-0.5 * x * x).exp(), 0.0);
    for n in 1..out.len() {
        out[n] = out[n - 1] * omega / (n as f64).sqrt();
    }
}

/// Heterodyne success POVM for the step acceptance `Θ(ω_R - x_th)`:
/// `M_ev(od) = (2/π) ∫_{ω_R > x_th} Π_ev(od) |ω⟩⟨ω| Π_ev(od) d²ω`.
///
/// The `y` integral uses Gauss-Hermite of order `n_max + 8`, exact for the
/// polynomial degree; the `x` integral uses composite Gauss-Legendre up to a
/// cutoff where the integrand is below double precision.
pub fn build_success_povm(space: FockSpace, x_th: f64) -> Result<(FockOperator, FockOperator)> {
    if !(x_th >= 0.0) {
        return Err(Error::invalid("x_th", format!("threshold must be >= 0, got {x_th}")));
    }
    let grid = HalfPlaneGrid::for_space(space)?;
    let d = space.dim();
    let mut m_ev = DMatrix::<f64>::zeros(d, d);
    let mut m_od = DMatrix::<f64>::zeros(d, d);
    if x_th < grid.upper {
        let mut amp = vec![Complex64::new(0.0, 0.0); d];
        let mut re = vec![0.0; d];
        let mut im = vec![0.0; d];
        for (x, y, w) in grid.nodes(x_th) {
            scaled_amplitudes(x, y, &mut amp);
            for n in 0..d {
                re[n] = amp[n].re;
                im[n] = amp[n].im;
            }
            // Re(c_p c̄_q) restricted to equal parity, upper triangle
            for p in 0..d {
                let target = if p % 2 == 0 { &mut m_ev } else { &mut m_od };
                let (rp, ip) = (w * re[p], w * im[p]);
                for q in (p..d).step_by(2) {
                    target[(p, q)] += rp * re[q] + ip * im[q];
                }
            }
        }
        for p in 0..d {
            for q in p + 1..d {
                m_ev[(q, p)] = m_ev[(p, q)];
                m_od[(q, p)] = m_od[(p, q)];
            }
        }
    }
    Ok((
        FockOperator { space, mat: m_ev },
        FockOperator { space, mat: m_od },
    ))
}

/// Failure element `M_fail = 1 − M_ev − M_od`; the success region covers both
/// half-planes, which by parity symmetry contribute equally to each block.
pub fn failure_element(m_ev: &FockOperator, m_od: &FockOperator) -> FockOperator {
    let space = m_ev.space;
    FockOperator {
        space,
        mat: DMatrix::identity(space.dim(), space.dim()) - &m_ev.mat - &m_od.mat,
    }
}

/// Scalar inputs of the dual bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovmMoments {
    pub c_ev: f64,
    pub c_od: f64,
    pub d_ev: f64,
    pub d_od: f64,
    pub v_ev: f64,
    pub v_od: f64,
}

impl PovmMoments {
    pub fn validate(&self) -> Result<()> {
        if (self.c_ev + self.c_od - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!(
                "C_ev + C_od = {} differs from 1",
                self.c_ev + self.c_od
            )));
        }
        if !(self.c_ev > 0.0 && self.c_od > 0.0) {
            return Err(Error::Numerical("parity weights must be positive".into()));
        }
        for (name, v) in [("V_ev", self.v_ev), ("V_od", self.v_od)] {
            if v < -1e-10 {
                return Err(Error::Numerical(format!("{name} = {v} is negative")));
            }
        }
        for (name, d) in [("D_ev", self.d_ev), ("D_od", self.d_od)] {
            if !(-1e-10..=1.0 + 1e-10).contains(&d) {
                return Err(Error::Numerical(format!("{name} = {d} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Analytic parity weights `(C_ev, C_od) = e^{-β²}(cosh β², sinh β²)`.
pub fn parity_weights(beta: f64) -> (f64, f64) {
    let e = (-2.0 * beta * beta).exp_m1();
    ((2.0 + e) / 2.0, -e / 2.0)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(
            "beta",
            format!("reference amplitude must be positive, got {beta}"),
        ));
    }
    Ok(())
}

/// `C`, `D`, `V` moments from prebuilt POVM operators.
pub fn povm_moments(
    space: FockSpace,
    beta: f64,
    m_ev: &FockOperator,
    m_od: &FockOperator,
) -> Result<PovmMoments> {
    check_beta(beta)?;
    let coh = coherent_vector(space, beta)?;
    let (c_ev, c_od) = parity_weights(beta);
    let (num_ev, num_od) = parity_split(&coh.amplitudes);
    let numeric_ev = num_ev.norm_squared();
    let numeric_od = num_od.norm_squared();
    if (numeric_ev - c_ev).abs() > 1e-9 || (numeric_od - c_od).abs() > 1e-9 {
        return Err(Error::Numerical(format!(
            "truncated parity weights ({numeric_ev}, {numeric_od}) disagree with ({c_ev}, {c_od})"
        )));
    }
    let side = |m: &FockOperator, v: &DVector<f64>, c: f64| {
        let mv = m.matrix() * v;
        let d = v.dot(&mv) / c;
        let v2 = mv.norm_squared() / c - d * d;
        (d, v2)
    };
    let (d_ev, v_ev) = side(m_ev, &num_ev, c_ev);
    let (d_od, v_od) = side(m_od, &num_od, c_od);
    let mom = PovmMoments {
        c_ev,
        c_od,
        d_ev,
        d_od,
        v_ev,
        v_od,
    };
    mom.validate()?;
    Ok(mom)
}

fn parity_split(v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let even = DVector::from_fn(v.len(), |i, _| if i % 2 == 0 { v[i] } else { 0.0 });
    let odd = DVector::from_fn(v.len(), |i, _| if i % 2 == 1 { v[i] } else { 0.0 });
    (even, odd)
}

/// `C`, `D`, `V` moments without forming the POVM matrices: integrates the
/// vectors `M_ev Π_ev|β⟩` and `M_od Π_od|β⟩` directly on the same grid.
pub fn moments_direct(space: FockSpace, beta: f64, x_th: f64) -> Result<PovmMoments> {
    check_beta(beta)?;
    if !(x_th >= 0.0) {
        return Err(Error::invalid("x_th", format!("threshold must be >= 0, got {x_th}")));
    }
    let coh = coherent_vector(space, beta)?;
    let (c_ev, c_od) = parity_weights(beta);
    let grid = HalfPlaneGrid::for_space(space)?;
    let d = space.dim();
    let b = &coh.amplitudes;
    // the y ↔ -y fold keeps Re parts only, which is all a real β needs
    let mut u = vec![0.0; d];
    if x_th < grid.upper {
        let mut amp = vec![Complex64::new(0.0, 0.0); d];
        for (x, y, w) in grid.nodes(x_th) {
            scaled_amplitudes(x, y, &mut amp);
            let mut ov_ev = Complex64::new(0.0, 0.0);
            let mut ov_od = Complex64::new(0.0, 0.0);
            for n in 0..d {
                // ⟨ω|n⟩ = conj(c_n)
                let t = amp[n].conj() * b[n];
                if n % 2 == 0 {
                    ov_ev += t;
                } else {
                    ov_od += t;
                }
            }
            for n in 0..d {
                let ov = if n % 2 == 0 { ov_ev } else { ov_od };
                u[n] += w * (amp[n] * ov).re;
            }
        }
    }
    let (mut dot_ev, mut dot_od, mut sq_ev, mut sq_od) = (0.0, 0.0, 0.0, 0.0);
    for n in 0..d {
        if n % 2 == 0 {
            dot_ev += b[n] * u[n];
            sq_ev += u[n] * u[n];
        } else {
            dot_od += b[n] * u[n];
            sq_od += u[n] * u[n];
        }
    }
    let d_ev = dot_ev / c_ev;
    let d_od = dot_od / c_od;
    let mom = PovmMoments {
        c_ev,
        c_od,
        d_ev,
        d_od,
        v_ev: sq_ev / c_ev - d_ev * d_ev,
        v_od: sq_od / c_od - d_od * d_od,
    };
    mom.validate()?;
    Ok(mom)
}

/// Qubit X-basis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XLabel {
    Plus,
    Minus,
}

/// Invariant sectors of `M[κ,γ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sector {
    /// `span{|+⟩⊗odd, |−⟩⊗even}`
    Err,
    /// `span{|+⟩⊗even, |−⟩⊗odd}`
    Cor,
}

impl Sector {
    fn contains(self, label: XLabel, n: usize) -> bool {
        let even = n % 2 == 0;
        match (self, label) {
            (Sector::Err, XLabel::Plus) | (Sector::Cor, XLabel::Minus) => !even,
            (Sector::Err, XLabel::Minus) | (Sector::Cor, XLabel::Plus) => even,
        }
    }
}

/// Operator on `qubit ⊗ oscillator`, stored as 2×2 blocks `⟨x|O|x'⟩` in the
/// qubit X basis. The dense layout puts the `+` block first.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitFockOperator {
    space: FockSpace,
    pub pp: DMatrix<f64>,
    pub pm: DMatrix<f64>,
    pub mp: DMatrix<f64>,
    pub mm: DMatrix<f64>,
}

impl QubitFockOperator {
    pub fn zeros(space: FockSpace) -> Self {
        let z = DMatrix::zeros(space.dim(), space.dim());
        Self {
            space,
            pp: z.clone(),
            pm: z.clone(),
            mp: z.clone(),
            mm: z,
        }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn block(&self, row: XLabel, col: XLabel) -> &DMatrix<f64> {
        match (row, col) {
            (XLabel::Plus, XLabel::Plus) => &self.pp,
            (XLabel::Plus, XLabel::Minus) => &self.pm,
            (XLabel::Minus, XLabel::Plus) => &self.mp,
            (XLabel::Minus, XLabel::Minus) => &self.mm,
        }
    }

    /// `|x⟩⟨x| ⊗ op`.
    pub fn diagonal(label: XLabel, op: &FockOperator) -> Self {
        let mut out = Self::zeros(op.space);
        match label {
            XLabel::Plus => out.pp = op.mat.clone(),
            XLabel::Minus => out.mm = op.mat.clone(),
        }
        out
    }

    /// `|ψ⟩⟨ψ|` for `|ψ⟩ = |+⟩⊗plus + |−⟩⊗minus`.
    pub fn projector(space: FockSpace, plus: &DVector<f64>, minus: &DVector<f64>) -> Self {
        Self {
            space,
            pp: plus * plus.transpose(),
            pm: plus * minus.transpose(),
            mp: minus * plus.transpose(),
            mm: minus * minus.transpose(),
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.pp *= factor;
        self.pm *= factor;
        self.mp *= factor;
        self.mm *= factor;
        self
    }

    pub fn add(mut self, other: &Self) -> Self {
        self.pp += &other.pp;
        self.pm += &other.pm;
        self.mp += &other.mp;
        self.mm += &other.mm;
        self
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.space.dim();
        let mut out = DMatrix::zeros(2 * d, 2 * d);
        out.view_mut((0, 0), (d, d)).copy_from(&self.pp);
        out.view_mut((0, d), (d, d)).copy_from(&self.pm);
        out.view_mut((d, 0), (d, d)).copy_from(&self.mp);
        out.view_mut((d, d), (d, d)).copy_from(&self.mm);
        out
    }

    pub fn from_dense(space: FockSpace, dense: &DMatrix<f64>) -> Self {
        let d = space.dim();
        Self {
            space,
            pp: dense.view((0, 0), (d, d)).into_owned(),
            pm: dense.view((0, d), (d, d)).into_owned(),
            mp: dense.view((d, 0), (d, d)).into_owned(),
            mm: dense.view((d, d), (d, d)).into_owned(),
        }
    }

    pub fn asymmetry(&self) -> f64 {
        let dense = self.to_dense();
        (&dense - dense.transpose()).amax()
    }

    /// `Tr(self · other)`.
    pub fn trace_product(&self, other: &Self) -> f64 {
        // Tr(AB) = Σ_{x,y} Tr(A_xy B_yx) = Σ A_xy ∘ B_yxᵀ
        let t = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.component_mul(&b.transpose()).sum();
        t(&self.pp, &other.pp) + t(&self.pm, &other.mp) + t(&self.mp, &other.pm) + t(&self.mm, &other.mm)
    }

    pub fn trace(&self) -> f64 {
        self.pp.trace() + self.mm.trace()
    }

    fn sector_indices(&self, sector: Sector) -> Vec<usize> {
        let d = self.space.dim();
        let mut idx = Vec::with_capacity(d);
        for n in 0..d {
            if sector.contains(XLabel::Plus, n) {
                idx.push(n);
            }
        }
        for n in 0..d {
            if sector.contains(XLabel::Minus, n) {
                idx.push(d + n);
            }
        }
        idx
    }

    /// Compression onto one invariant sector.
    pub fn restrict(&self, sector: Sector) -> DMatrix<f64> {
        let dense = self.to_dense();
        let idx = self.sector_indices(sector);
        DMatrix::from_fn(idx.len(), idx.len(), |i, j| dense[(idx[i], idx[j])])
    }

    /// Largest entry coupling the two sectors.
    pub fn cross_sector_norm(&self) -> f64 {
        let dense = self.to_dense();
        let err = self.sector_indices(Sector::Err);
        let cor = self.sector_indices(Sector::Cor);
        let mut worst: f64 = 0.0;
        for &i in &err {
            for &j in &cor {
                worst = worst.max(dense[(i, j)].abs()).max(dense[(j, i)].abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.to_dense()).eigenvalues.min()
    }

    pub fn sup_spectrum(&self) -> f64 {
        SymmetricEigen::new(self.to_dense()).eigenvalues.max()
    }
}

/// Phase-error operator `M_ph = |+⟩⟨+|⊗M_od + |−⟩⟨−|⊗M_ev`.
pub fn phase_error_operator(m_ev: &FockOperator, m_od: &FockOperator) -> QubitFockOperator {
    QubitFockOperator::diagonal(XLabel::Plus, m_od).add(&QubitFockOperator::diagonal(XLabel::Minus, m_ev))
}

/// `Π_-^sig = |−⟩⟨−| ⊗ 1`.
pub fn minus_projector(space: FockSpace) -> QubitFockOperator {
    QubitFockOperator::diagonal(XLabel::Minus, &FockOperator::identity(space))
}

/// `Π^fid = |φ_err⟩⟨φ_err| + |φ_cor⟩⟨φ_cor|` with
/// `|φ_err⟩ = |+⟩⊗Π_od|β⟩ + |−⟩⊗Π_ev|β⟩` and
/// `|φ_cor⟩ = |+⟩⊗Π_ev|β⟩ + |−⟩⊗Π_od|β⟩`.
pub fn fidelity_projector(space: FockSpace, beta: f64) -> Result<QubitFockOperator> {
    let coh = coherent_vector(space, beta)?;
    let (even, odd) = parity_split(&coh.amplitudes);
    let err = QubitFockOperator::projector(space, &odd, &even);
    let cor = QubitFockOperator::projector(space, &even, &odd);
    Ok(err.add(&cor))
}

/// `M[κ,γ] = M_ph + κ Π^fid − γ Π_-^sig`.
pub fn assemble_m(
    space: FockSpace,
    beta: f64,
    kappa: f64,
    gamma: f64,
    m_ev: &FockOperator,
    m_od: &FockOperator,
) -> Result<QubitFockOperator> {
    if !(kappa >= 0.0) {
        return Err(Error::invalid("kappa", format!("must be >= 0, got {kappa}")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma", format!("must be >= 0, got {gamma}")));
    }
    let fid = fidelity_projector(space, beta)?;
    Ok(phase_error_operator(m_ev, m_od)
        .add(&fid.scaled(kappa))
        .add(&minus_projector(space).scaled(-gamma)))
}
