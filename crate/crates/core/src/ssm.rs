//! Continuous-time SSM construction: HiPPO-LegS, its diagonal-plus-low-rank
//! form, step-size schedules and bilinear discretization.
//!
//! All systems are stored over the full complex state (no conjugate-pair
//! halving). The output map is a row: `y = Σ_n C_n x_n`, never conjugated.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVec, RealMatrix};

/// Default upper bound for the per-feature step size.
pub const DT_MAX_DEFAULT: f64 = 0.2;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// HiPPO-LegS transition matrix (0-indexed, lower triangular).
pub fn hippo_legs(n: usize) -> Result<RealMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("state size must be at least 1".into()));
    }
    Ok(RealMatrix::from_fn(n, n, |row, col| {
        if row > col {
            -((2 * row + 1) as f64).sqrt() * ((2 * col + 1) as f64).sqrt()
        } else if row == col {
            -((row + 1) as f64)
        } else {
            0.0
        }
    }))
}

/// LegS input vector `B_k = sqrt(2k+1)` and rank-1 factor `P_k = sqrt(k+1/2)`.
pub fn legs_init_vectors(n: usize) -> Result<(ComplexVec, ComplexVec)> {
    if n == 0 {
        return Err(Error::InvalidDimension("state size must be at least 1".into()));
    }
    let b = (0..n).map(|k| re(((2 * k + 1) as f64).sqrt())).collect();
    let p = (0..n).map(|k| re((k as f64 + 0.5).sqrt())).collect();
    Ok((b, p))
}

/// Continuous SSM with `A = diag(lambda) - p p^*`.
#[derive(Debug, Clone, PartialEq)]
pub struct DplrSystem {
    pub lambda: ComplexVec,
    pub p_vec: ComplexVec,
    pub b_vec: ComplexVec,
    pub c_vec: ComplexVec,
}

impl DplrSystem {
    pub fn new(lambda: ComplexVec, p_vec: ComplexVec, b_vec: ComplexVec, c_vec: ComplexVec) -> Result<Self> {
        let n = lambda.len();
        if n == 0 {
            return Err(Error::InvalidDimension("empty state".into()));
        }
        if p_vec.len() != n || b_vec.len() != n || c_vec.len() != n {
            return Err(Error::InvalidDimension(format!(
                "lambda/P/B/C lengths differ: {}/{}/{}/{}",
                n,
                p_vec.len(),
                b_vec.len(),
                c_vec.len()
            )));
        }
        let all = lambda.iter().chain(&p_vec).chain(&b_vec).chain(&c_vec);
        if !all.copied().all(crate::linalg::is_finite) {
            return Err(Error::InvalidDimension("non-finite parameter".into()));
        }
        Ok(Self {
            lambda,
            p_vec,
            b_vec,
            c_vec,
        })
    }

    pub fn state_size(&self) -> usize {
        self.lambda.len()
    }

    /// Dense `A = diag(Λ) - P P^*`.
    pub fn dense_a(&self) -> ComplexMatrix {
        let n = self.state_size();
        ComplexMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { self.lambda[i] } else { C0 };
            diag - self.p_vec[i] * self.p_vec[j].conj()
        })
    }

    pub fn with_c(&self, c_vec: ComplexVec) -> Result<Self> {
        Self::new(self.lambda.clone(), self.p_vec.clone(), self.b_vec.clone(), c_vec)
    }

    pub fn with_b(&self, b_vec: ComplexVec) -> Result<Self> {
        Self::new(self.lambda.clone(), self.p_vec.clone(), b_vec, self.c_vec.clone())
    }

    /// Upper bound on `Re(eig(A))` from the numerical range: the largest
    /// eigenvalue of the Hermitian part `diag(Re Λ) - P P^*`.
    pub fn numerical_abscissa(&self) -> f64 {
        let n = self.state_size();
        let herm = ComplexMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { re(self.lambda[i].re) } else { C0 };
            diag - self.p_vec[i] * self.p_vec[j].conj()
        });
        SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Output of [`nplr_decompose`]: the LegS system in the eigenbasis of its
/// normal part, together with the unitary change of basis.
#[derive(Debug, Clone)]
pub struct LegsDplr {
    /// Λ, P, B in the rotated basis; C is zero until attached.
    pub system: DplrSystem,
    /// Unitary `V` with columns sorted by ascending `Im(λ)`.
    pub basis: ComplexMatrix,
    /// `‖S + Sᵀ + I‖_F` for `S = A + P Pᵀ`.
    pub normal_residual: f64,
    /// `‖V (Λ - P̃P̃^*) V^* - A‖_F`.
    pub reconstruction_residual: f64,
}

impl LegsDplr {
    /// Attach a real output row given in the original HiPPO basis (`C = c V`).
    pub fn with_output(&self, c_original: &[f64]) -> Result<DplrSystem> {
        let n = self.system.state_size();
        if c_original.len() != n {
            return Err(Error::InvalidDimension(format!(
                "output row has length {}, state size is {n}",
                c_original.len()
            )));
        }
        let c: ComplexVec = (0..n)
            .map(|col| (0..n).map(|k| self.basis[(k, col)] * c_original[k]).sum())
            .collect();
        self.system.with_c(c)
    }

    /// Output row drawn standard-normal in the original basis.
    pub fn with_random_output(&self, seed: u64) -> Result<DplrSystem> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..self.system.state_size())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        self.with_output(&c)
    }

    /// `V (Λ - P̃P̃^*) V^*`, the HiPPO matrix rebuilt from the decomposition.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let inner = self.system.dense_a();
        &self.basis * inner * self.basis.adjoint()
    }
}

/// Diagonalise the normal part of HiPPO-LegS.
///
/// `S = A + P Pᵀ` equals `-I/2` plus a skew-symmetric `K`; `iK` is Hermitian,
/// so its eigenvectors give the unitary basis in which `S` is diagonal.
pub fn nplr_decompose(n: usize) -> Result<LegsDplr> {
    let a = hippo_legs(n)?;
    let (b, p) = legs_init_vectors(n)?;
    let s = RealMatrix::from_fn(n, n, |i, j| a.get(i, j) + p[i].re * p[j].re);

    let mut normal_residual = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = s.get(i, j) + s.get(j, i) + if i == j { 1.0 } else { 0.0 };
            normal_residual += e * e;
        }
    }
    let normal_residual = normal_residual.sqrt();
    if normal_residual > 1e-8 * (n as f64).max(1.0) {
        return Err(Error::Decomposition {
            reason: "S is not -I/2 plus skew-symmetric".into(),
            residual: normal_residual,
        });
    }

    let herm = ComplexMatrix::from_fn(n, n, |i, j| Complex64::new(0.0, 0.5 * (s.get(i, j) - s.get(j, i))));
    let eig = SymmetricEigen::new(herm);
    let s_c = s.to_complex();

    let mut columns: Vec<(Complex64, ComplexVec)> = (0..n)
        .map(|k| {
            let mut v: ComplexVec = eig.eigenvectors.column(k).iter().copied().collect();
            normalize_phase(&mut v);
            let sv = &s_c * ComplexMatrix::from_column_slice(n, 1, &v);
            let lam: Complex64 = v.iter().zip(sv.iter()).map(|(vi, si)| vi.conj() * si).sum();
            (lam, v)
        })
        .collect();
    columns.sort_by(|x, y| x.0.im.total_cmp(&y.0.im));

    let basis = ComplexMatrix::from_fn(n, n, |i, j| columns[j].1[i]);
    let lambda: ComplexVec = columns.iter().map(|c| c.0).collect();
    let rotate = |v: &ComplexVec| -> ComplexVec {
        (0..n)
            .map(|col| (0..n).map(|k| basis[(k, col)].conj() * v[k]).sum())
            .collect()
    };
    let system = DplrSystem::new(lambda, rotate(&p), rotate(&b), vec![C0; n])?;
    let mut out = LegsDplr {
        system,
        basis,
        normal_residual,
        reconstruction_residual: 0.0,
    };
    out.reconstruction_residual = a.frobenius_distance(&out.reconstruct());
    let scale = a.entries().iter().map(|x| x * x).sum::<f64>().sqrt();
    if out.reconstruction_residual.is_nan() || out.reconstruction_residual > 1e-6 * scale.max(1.0) {
        return Err(Error::Decomposition {
            reason: "reconstruction does not match HiPPO-LegS".into(),
            residual: out.reconstruction_residual,
        });
    }
    Ok(out)
}

/// Rotate `v` so its first dominant component is real positive. Conjugate
/// eigenpairs then come out as exact conjugates of each other.
fn normalize_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().find(|z| z.norm() >= max * (1.0 - 1e-6)).copied().unwrap_or(C1);
    let phase = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
}

/// LegS system of size `n` with a seeded standard-normal output row.
pub fn legs_system(n: usize, seed: u64) -> Result<DplrSystem> {
    nplr_decompose(n)?.with_random_output(seed)
}

/// Random stable system with conjugate-pair symmetry, so that its kernels are
/// real. `Re(λ) ∈ [-1, -0.1]`; `A = Λ - PP^*` is then stable for any `P`.
pub fn random_stable_system<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DplrSystem> {
    if n == 0 {
        return Err(Error::InvalidDimension("state size must be at least 1".into()));
    }
    let mut lambda = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
    let cnormal = |rng: &mut R| Complex64::new(normal(rng), normal(rng)) * std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..n / 2 {
        let lam = Complex64::new(-rng.random_range(0.1..1.0), rng.random_range(0.0..2.0 * n as f64));
        let pv = cnormal(rng) * 0.5;
        let bv = cnormal(rng);
        let cv = cnormal(rng);
        lambda.extend([lam, lam.conj()]);
        p.extend([pv, pv.conj()]);
        b.extend([bv, bv.conj()]);
        c.extend([cv, cv.conj()]);
    }
    if n % 2 == 1 {
        lambda.push(re(-rng.random_range(0.1..1.0)));
        p.push(re(0.5 * normal(rng)));
        b.push(re(normal(rng)));
        c.push(re(normal(rng)));
    }
    DplrSystem::new(lambda, p, b, c)
}

/// Structured bilinear transition: `Ā = (I - αA)^{-1}(I + αA)` with
/// `α = dt/2`, applied in O(N) via a rank-1 Woodbury solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearDplr {
    lambda: ComplexVec,
    p_vec: ComplexVec,
    half_dt: f64,
    diag_inv: ComplexVec,
    denom: Complex64,
}

impl BilinearDplr {
    pub fn new(sys: &DplrSystem, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let half_dt = dt / 2.0;
        let mut diag_inv = Vec::with_capacity(sys.state_size());
        for (k, lam) in sys.lambda.iter().enumerate() {
            let d = C1 - lam * half_dt;
            if d.norm() < 1e-300 {
                return Err(Error::Discretization(format!("I - dt/2·Λ is singular at index {k}")));
            }
            diag_inv.push(d.inv());
        }
        let quad: Complex64 = sys
            .p_vec
            .iter()
            .zip(&diag_inv)
            .map(|(pk, dk)| pk.conj() * pk * dk)
            .sum();
        let denom = C1 + quad * half_dt;
        if denom.norm() < 1e-14 {
            return Err(Error::Discretization("rank-1 Woodbury denominator vanishes".into()));
        }
        Ok(Self {
            lambda: sys.lambda.clone(),
            p_vec: sys.p_vec.clone(),
            half_dt,
            diag_inv,
            denom,
        })
    }

    /// `(I - αA)^{-1} y`.
    pub fn solve(&self, y: &[Complex64]) -> ComplexVec {
        let w: ComplexVec = y.iter().zip(&self.diag_inv).map(|(yk, dk)| yk * dk).collect();
        let s: Complex64 = self.p_vec.iter().zip(&w).map(|(pk, wk)| pk.conj() * wk).sum();
        let scale = s * self.half_dt / self.denom;
        w.iter()
            .zip(&self.p_vec)
            .zip(&self.diag_inv)
            .map(|((wk, pk), dk)| wk - pk * dk * scale)
            .collect()
    }

    /// `(I + αA) x`.
    pub fn forward(&self, x: &[Complex64]) -> ComplexVec {
        let s: Complex64 = self.p_vec.iter().zip(x).map(|(pk, xk)| pk.conj() * xk).sum();
        x.iter()
            .zip(&self.lambda)
            .zip(&self.p_vec)
            .map(|((xk, lk), pk)| xk + (lk * xk - pk * s) * self.half_dt)
            .collect()
    }

    pub fn apply(&self, x: &[Complex64]) -> ComplexVec {
        self.solve(&self.forward(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    Dense(ComplexMatrix),
    Bilinear(BilinearDplr),
}

/// Discrete system `x_k = Ā x_{k-1} + B̄ u_k`, `y_k = C̄ x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pub a_bar: Transition,
    pub b_bar: ComplexVec,
    pub c_bar: ComplexVec,
    pub dt: Option<f64>,
}

impl DiscreteSystem {
    /// Build directly from discrete operators (used for hand-made systems).
    pub fn from_dense(a_bar: ComplexMatrix, b_bar: ComplexVec, c_bar: ComplexVec) -> Result<Self> {
        let n = b_bar.len();
        if a_bar.shape() != (n, n) || c_bar.len() != n || n == 0 {
            return Err(Error::InvalidDimension(format!(
                "Ā is {:?}, B̄ has {}, C̄ has {}",
                a_bar.shape(),
                n,
                c_bar.len()
            )));
        }
        Ok(Self {
            a_bar: Transition::Dense(a_bar),
            b_bar,
            c_bar,
            dt: None,
        })
    }

    /// Real scalar system, handy for worked examples.
    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        Self::from_dense(ComplexMatrix::from_element(1, 1, re(a)), vec![re(b)], vec![re(c)]).expect("1x1 system")
    }

    pub fn state_size(&self) -> usize {
        self.b_bar.len()
    }

    pub fn apply_a(&self, x: &[Complex64]) -> ComplexVec {
        match &self.a_bar {
            Transition::Dense(m) => {
                let n = m.nrows();
                (0..n).map(|i| (0..n).map(|j| m[(i, j)] * x[j]).sum()).collect()
            }
            Transition::Bilinear(op) => op.apply(x),
        }
    }

    /// Materialise `Ā` (O(N²) applications for the structured form).
    pub fn dense_a(&self) -> ComplexMatrix {
        match &self.a_bar {
            Transition::Dense(m) => m.clone(),
            Transition::Bilinear(_) => {
                let n = self.state_size();
                let mut out = ComplexMatrix::zeros(n, n);
                let mut e = vec![C0; n];
                for j in 0..n {
                    e[j] = C1;
                    let col = self.apply_a(&e);
                    e[j] = C0;
                    for i in 0..n {
                        out[(i, j)] = col[i];
                    }
                }
                out
            }
        }
    }

    /// `C̄ x`.
    pub fn output(&self, x: &[Complex64]) -> Complex64 {
        crate::linalg::bilinear_dot(&self.c_bar, x)
    }

    /// Copy with `B̄` replaced.
    pub fn with_b_bar(&self, b_bar: ComplexVec) -> Self {
        assert_eq!(b_bar.len(), self.state_size());
        Self {
            a_bar: self.a_bar.clone(),
            b_bar,
            c_bar: self.c_bar.clone(),
            dt: self.dt,
        }
    }

    /// Elementwise `B̄^{∘p}`.
    pub fn b_bar_power(&self, p: usize) -> ComplexVec {
        self.b_bar.iter().map(|b| b.powu(p as u32)).collect()
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Discretization(format!("step size must be positive, got {dt}")));
    }
    Ok(())
}

/// Dense bilinear discretization (reference path).
pub fn discretize_bilinear(sys: &DplrSystem, dt: f64) -> Result<DiscreteSystem> {
    check_dt(dt)?;
    let n = sys.state_size();
    let a = sys.dense_a();
    let eye = ComplexMatrix::identity(n, n);
    let half = re(dt / 2.0);
    let lhs = &eye - &a * half;
    let rhs = &eye + &a * half;
    let lhs_inv = lhs
        .try_inverse()
        .ok_or_else(|| Error::Discretization("I - dt/2·A is singular".into()))?;
    let a_bar = &lhs_inv * rhs;
    let b_col = ComplexMatrix::from_column_slice(n, 1, &sys.b_vec) * re(dt);
    let b_bar = (&lhs_inv * b_col).iter().copied().collect();
    Ok(DiscreteSystem {
        a_bar: Transition::Dense(a_bar),
        b_bar,
        c_bar: sys.c_vec.clone(),
        dt: Some(dt),
    })
}

/// Structured bilinear discretization: `Ā` stays in DPLR form and `B̄` comes
/// from the Woodbury solve.
pub fn discretize_structured(sys: &DplrSystem, dt: f64) -> Result<DiscreteSystem> {
    let op = BilinearDplr::new(sys, dt)?;
    let scaled_b: ComplexVec = sys.b_vec.iter().map(|b| b * dt).collect();
    let b_bar = op.solve(&scaled_b);
    Ok(DiscreteSystem {
        a_bar: Transition::Bilinear(op),
        b_bar,
        c_bar: sys.c_vec.clone(),
        dt: Some(dt),
    })
}

/// Per-feature step sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSizeSchedule {
    pub dt_min: f64,
    pub dt_max: f64,
    pub per_feature_dt: Vec<f64>,
}

impl StepSizeSchedule {
    pub fn new(dt_min: f64, dt_max: f64, per_feature_dt: Vec<f64>) -> Result<Self> {
        check_range(dt_min, dt_max)?;
        if let Some(bad) = per_feature_dt.iter().find(|&&d| !(d >= dt_min && d <= dt_max)) {
            return Err(Error::InvalidRange(format!("step {bad} outside [{dt_min}, {dt_max}]")));
        }
        Ok(Self {
            dt_min,
            dt_max,
            per_feature_dt,
        })
    }
}

fn check_range(dt_min: f64, dt_max: f64) -> Result<()> {
    if !(dt_min > 0.0 && dt_min.is_finite() && dt_max.is_finite() && dt_min <= dt_max) {
        return Err(Error::InvalidRange(format!(
            "need 0 < dt_min <= dt_max, got [{dt_min}, {dt_max}]"
        )));
    }
    Ok(())
}

/// Default lower bound: proportional to the inverse sequence length.
pub fn default_dt_min(seq_len: usize) -> f64 {
    1.0 / seq_len.max(1) as f64
}

/// Log-uniform per-feature step sizes in `[dt_min, dt_max]`.
pub fn init_dt_schedule(h: usize, dt_min: f64, dt_max: f64, seed: u64) -> Result<StepSizeSchedule> {
    check_range(dt_min, dt_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (dt_min.ln(), dt_max.ln());
    let per_feature_dt = (0..h)
        .map(|_| {
            if hi > lo {
                rng.random_range(lo..hi).exp().clamp(dt_min, dt_max)
            } else {
                dt_min
            }
        })
        .collect();
    StepSizeSchedule::new(dt_min, dt_max, per_feature_dt)
}
