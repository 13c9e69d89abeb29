//! S4 convolution kernel `K̄_i = C̄ Ā^i B̄`, by direct powering and by
//! evaluating the truncated generating function at roots of unity.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::{fft_in_place, Direction};
use crate::linalg::{self, ComplexVec};
use crate::ssm::{discretize_structured, DiscreteSystem, DplrSystem};

const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Real tap sequence. Imaginary leakage from the complex computation is
/// recorded, not kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kernel {
    pub taps: Vec<f64>,
    pub residual_imag: f64,
}

impl Kernel {
    pub fn from_complex(values: &[Complex64]) -> Self {
        Self {
            taps: values.iter().map(|z| z.re).collect(),
            residual_imag: linalg::max_abs_imag(values),
        }
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Roots of unity `ω_k = exp(2πi k/L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub nodes: Vec<Complex64>,
}

impl FrequencyGrid {
    pub fn roots_of_unity(l: usize) -> Self {
        Self {
            nodes: (0..l)
                .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / l as f64))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn check_len(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::InvalidDimension("kernel length must be at least 1".into()));
    }
    Ok(())
}

/// `C̄ Ā^i B̄` for `i < l` by repeated matrix-vector products.
pub fn kernel_naive_complex(d: &DiscreteSystem, l: usize) -> Result<ComplexVec> {
    check_len(l)?;
    let mut x = d.b_bar.clone();
    let mut taps = Vec::with_capacity(l);
    for i in 0..l {
        if i > 0 {
            x = d.apply_a(&x);
        }
        taps.push(d.output(&x));
    }
    Ok(taps)
}

pub fn kernel_naive(d: &DiscreteSystem, l: usize) -> Result<Kernel> {
    Ok(Kernel::from_complex(&kernel_naive_complex(d, l)?))
}

/// Truncated generating-function output row `C̃ = C̄ (I - Ā^L)`.
///
/// With the output stored as a row this is the conjugate-transpose form
/// `(I - Ā^L)^* C̄^*` read back as a row. `Ā^L` comes from repeated squaring
/// of the materialised transition.
pub fn truncate_generating_c(d: &DiscreteSystem, l: usize) -> Result<ComplexVec> {
    check_len(l)?;
    let power = linalg::matrix_power(&d.dense_a(), l);
    let tail = linalg::row_times(&d.c_bar, &power);
    Ok(d.c_bar.iter().zip(&tail).map(|(c, t)| c - t).collect())
}

/// `Σ_n conj(v_n) w_n / (z - λ_n)` with pairwise summation.
pub fn cauchy_dot(v: &[Complex64], w: &[Complex64], z: Complex64, lambda: &[Complex64]) -> Result<Complex64> {
    assert_eq!(v.len(), lambda.len());
    assert_eq!(w.len(), lambda.len());
    let mut terms = Vec::with_capacity(lambda.len());
    for (state, ((vn, wn), lam)) in v.iter().zip(w).zip(lambda).enumerate() {
        let gap = z - lam;
        if gap.norm() <= 1e-14 {
            return Err(Error::Pole {
                state,
                distance: gap.norm(),
            });
        }
        terms.push(vn.conj() * wn / gap);
    }
    Ok(linalg::pairwise_sum(&terms))
}

/// The four Cauchy dots of one frequency node, sharing the reciprocals.
struct CauchyBlock {
    k00: Complex64,
    k01: Complex64,
    k10: Complex64,
    k11: Complex64,
}

/// Precomputed products for the node loop: `C̃_n B_n`, `C̃_n P_n`,
/// `conj(P_n) B_n`, `|P_n|²`.
struct CauchyWeights {
    cb: ComplexVec,
    cp: ComplexVec,
    pb: ComplexVec,
    pp: ComplexVec,
}

impl CauchyWeights {
    fn new(c_tilde: &[Complex64], sys: &DplrSystem) -> Self {
        let p = &sys.p_vec;
        let b = &sys.b_vec;
        Self {
            cb: c_tilde.iter().zip(b).map(|(c, b)| c * b).collect(),
            cp: c_tilde.iter().zip(p).map(|(c, p)| c * p).collect(),
            pb: p.iter().zip(b).map(|(p, b)| p.conj() * b).collect(),
            pp: p.iter().map(|p| Complex64::new(p.norm_sqr(), 0.0)).collect(),
        }
    }

    fn evaluate(&self, z: Complex64, lambda: &[Complex64], scratch: &mut [Vec<Complex64>; 4]) -> Result<CauchyBlock> {
        for s in scratch.iter_mut() {
            s.clear();
        }
        for (state, lam) in lambda.iter().enumerate() {
            let gap = z - lam;
            if gap.norm() <= 1e-14 {
                return Err(Error::Pole {
                    state,
                    distance: gap.norm(),
                });
            }
            let r = gap.inv();
            scratch[0].push(self.cb[state] * r);
            scratch[1].push(self.cp[state] * r);
            scratch[2].push(self.pb[state] * r);
            scratch[3].push(self.pp[state] * r);
        }
        Ok(CauchyBlock {
            k00: linalg::pairwise_sum(&scratch[0]),
            k01: linalg::pairwise_sum(&scratch[1]),
            k10: linalg::pairwise_sum(&scratch[2]),
            k11: linalg::pairwise_sum(&scratch[3]),
        })
    }
}

/// Truncated generating function `K̂(ω_k)` at the `l` roots of unity.
///
/// Node `ω = -1` maps to `z = ∞`; there `K̂(-1) = C̃ (I + Ā)^{-1} B̄ = (dt/2) C̃ B`,
/// which is what the limit of the Woodbury form gives.
pub fn generating_function(sys: &DplrSystem, dt: f64, l: usize) -> Result<ComplexVec> {
    check_len(l)?;
    let d = discretize_structured(sys, dt)?;
    let c_tilde = truncate_generating_c(&d, l)?;
    let weights = CauchyWeights::new(&c_tilde, sys);
    let n = sys.state_size();
    let mut scratch: [Vec<Complex64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    let mut out = Vec::with_capacity(l);
    for k in 0..l {
        if 2 * k == l {
            out.push(linalg::pairwise_sum(&weights.cb) * (dt / 2.0));
            continue;
        }
        // 1 - ω = -2i sin(θ/2) e^{iθ/2}, 1 + ω = 2 cos(θ/2) e^{iθ/2}
        let half_theta = PI * k as f64 / l as f64;
        let z = Complex64::new(0.0, -(2.0 / dt) * half_theta.tan());
        let prefactor = Complex64::from_polar(1.0 / half_theta.cos(), -half_theta);
        let block = weights.evaluate(z, &sys.lambda, &mut scratch)?;
        let denom = C1 + block.k11;
        if denom.norm() <= 1e-14 {
            return Err(Error::WoodburySingularity {
                node: k,
                magnitude: denom.norm(),
            });
        }
        out.push(prefactor * (block.k00 - block.k01 * block.k10 / denom));
    }
    Ok(out)
}

/// Kernel from the generating function, inverted with a radix-2 FFT.
/// Non-power-of-two lengths are generated at the next power of two and cut.
pub fn kernel_genfn_complex(sys: &DplrSystem, dt: f64, l: usize) -> Result<ComplexVec> {
    check_len(l)?;
    let padded = l.next_power_of_two();
    let mut spectrum = generating_function(sys, dt, padded)?;
    // K̂_k = Σ_i K_i ω_k^i with ω_k = e^{+2πik/L}, so K = DFT⁻(K̂) uses e^{-2πi ik/L}.
    fft_in_place(&mut spectrum, Direction::Forward);
    let scale = 1.0 / padded as f64;
    spectrum.truncate(l);
    Ok(spectrum.into_iter().map(|z| z * scale).collect())
}

pub fn kernel_genfn(sys: &DplrSystem, dt: f64, l: usize) -> Result<Kernel> {
    Ok(Kernel::from_complex(&kernel_genfn_complex(sys, dt, l)?))
}

/// Relative L∞ distance `max|a - b| / max(max|b|, tiny)`.
pub fn relative_linf(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
