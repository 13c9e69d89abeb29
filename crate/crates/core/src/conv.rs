//! Applying kernels to sequences: causal FFT convolution, the exact
//! recurrent reference, and the full liquid-S4 forward map.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft::{fft_in_place, Direction};
use crate::kernel::{kernel_genfn, Kernel};
use crate::liquid::{apply_liquid, liquid_kernel_set, LiquidKernelSet, LiquidMode};
use crate::ssm::{DiscreteSystem, DplrSystem};

/// Real sequences shaped `(batch, length, features)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceBatch {
    pub batch: usize,
    pub length: usize,
    pub features: usize,
    pub values: Vec<f64>,
}

impl SequenceBatch {
    pub fn zeros(batch: usize, length: usize, features: usize) -> Self {
        Self {
            batch,
            length,
            features,
            values: vec![0.0; batch * length * features],
        }
    }

    pub fn new(batch: usize, length: usize, features: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != batch * length * features {
            return Err(Error::InvalidDimension(format!(
                "{} values for shape ({batch}, {length}, {features})",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDimension("non-finite sequence value".into()));
        }
        Ok(Self {
            batch,
            length,
            features,
            values,
        })
    }

    /// Single-feature batch from equal-length sequences.
    pub fn from_sequences(seqs: &[Vec<f64>]) -> Result<Self> {
        let length = seqs.first().map_or(0, Vec::len);
        if seqs.iter().any(|s| s.len() != length) {
            return Err(Error::InvalidDimension("sequences differ in length".into()));
        }
        Self::new(seqs.len(), length, 1, seqs.concat())
    }

    fn index(&self, b: usize, t: usize, f: usize) -> usize {
        (b * self.length + t) * self.features + f
    }

    pub fn get(&self, b: usize, t: usize, f: usize) -> f64 {
        self.values[self.index(b, t, f)]
    }

    pub fn set(&mut self, b: usize, t: usize, f: usize, v: f64) {
        let i = self.index(b, t, f);
        self.values[i] = v;
    }

    /// One feature channel of one batch row.
    pub fn channel(&self, b: usize, f: usize) -> Vec<f64> {
        (0..self.length).map(|t| self.get(b, t, f)).collect()
    }

    pub fn set_channel(&mut self, b: usize, f: usize, seq: &[f64]) {
        assert_eq!(seq.len(), self.length);
        for (t, &v) in seq.iter().enumerate() {
            self.set(b, t, f, v);
        }
    }
}

/// Direct `O(L·L_k)` causal convolution truncated to `u.len()` outputs.
pub fn causal_conv_direct(taps: &[f64], u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|k| {
            let depth = taps.len().min(k + 1);
            (0..depth).map(|d| taps[d] * u[k - d]).sum()
        })
        .collect()
}

/// Linear (non-circular) convolution via zero padding to a power of two
/// `≥ L + L_k - 1`, truncated to `u.len()` outputs.
pub fn causal_conv_fft(taps: &[f64], u: &[f64]) -> Vec<f64> {
    if taps.is_empty() || u.is_empty() {
        return vec![0.0; u.len()];
    }
    let n = (u.len() + taps.len() - 1).next_power_of_two();
    let pad = |x: &[f64]| -> Vec<Complex64> {
        let mut v: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        v.resize(n, Complex64::new(0.0, 0.0));
        v
    };
    let mut a = pad(taps);
    let mut b = pad(u);
    fft_in_place(&mut a, Direction::Forward);
    fft_in_place(&mut b, Direction::Forward);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    fft_in_place(&mut a, Direction::Inverse);
    let scale = 1.0 / n as f64;
    a.iter().take(u.len()).map(|z| z.re * scale).collect()
}

/// Picks the direct sum for short kernels, the FFT otherwise.
pub fn causal_conv(taps: &[f64], u: &[f64]) -> Vec<f64> {
    if taps.len().min(u.len()) <= 64 {
        causal_conv_direct(taps, u)
    } else {
        causal_conv_fft(taps, u)
    }
}

/// Step `x_k = Ā x_{k-1} + B̄ u_k`, `y_k = Re(C̄ x_k)` from `x_{-1} = 0`.
pub fn recurrent_s4(d: &DiscreteSystem, u: &[f64]) -> Result<Vec<f64>> {
    let n = d.state_size();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut y = Vec::with_capacity(u.len());
    for (step, &uk) in u.iter().enumerate() {
        let ax = d.apply_a(&x);
        x = ax.iter().zip(&d.b_bar).map(|(a, b)| a + b * uk).collect();
        if !x.iter().all(|z| crate::linalg::is_finite(*z)) {
            return Err(Error::DivergedState { step });
        }
        y.push(d.output(&x).re);
    }
    Ok(y)
}

/// Main kernel plus optional liquid kernels for one feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiquidS4Kernels {
    pub main: Kernel,
    pub liquid: Option<LiquidKernelSet>,
}

impl LiquidS4Kernels {
    pub fn build(
        sys: &DplrSystem,
        dt: f64,
        length: usize,
        mode: LiquidMode,
        max_order: usize,
        window: usize,
    ) -> Result<Self> {
        let main = kernel_genfn(sys, dt, length)?;
        let liquid = match mode {
            LiquidMode::None => None,
            LiquidMode::Kb | LiquidMode::Pb => {
                Some(liquid_kernel_set(sys, dt, mode, max_order, window.min(length).max(1))?)
            }
        };
        Ok(Self { main, liquid })
    }

    /// `K̄ * u + Σ_p K̄_liquid,p * v^{(p)}`, both causal and truncated to `u.len()`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut y = causal_conv(&self.main.taps, u);
        if let Some(set) = &self.liquid {
            let extra = apply_liquid(set, u)?;
            for (a, b) in y.iter_mut().zip(extra) {
                *a += b;
            }
        }
        Ok(y)
    }
}

/// Full forward map of one liquid-S4 channel. The main kernel is generated at
/// the input length.
pub fn forward_liquid_s4(
    sys: &DplrSystem,
    dt: f64,
    u: &[f64],
    mode: LiquidMode,
    max_order: usize,
    window: usize,
) -> Result<Vec<f64>> {
    if u.is_empty() {
        return Ok(Vec::new());
    }
    LiquidS4Kernels::build(sys, dt, u.len(), mode, max_order, window)?.apply(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_naive;
    use crate::ssm::{discretize_structured, legs_system, random_stable_system};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_delay_kernels() {
        let u = vec![1.5, -2.0, 0.25, 7.0];
        for (a, b) in causal_conv_fft(&[1.0], &u).iter().zip(&u) {
            assert!((a - b).abs() < 1e-15);
        }
        let y = causal_conv_fft(&[0.0, 1.0], &[3.0, 5.0, 7.0]);
        for (a, b) in y.iter().zip([0.0, 3.0, 5.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(causal_conv_direct(&[0.0, 1.0], &[3.0, 5.0, 7.0]), vec![0.0, 3.0, 5.0]);
    }

    #[test]
    fn fft_conv_matches_direct_sum_at_128() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = causal_conv_fft(&k, &u);
        let slow = causal_conv_direct(&k, &u);
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    proptest! {
        #[test]
        fn convolution_is_causal(
            k in proptest::collection::vec(-1.0f64..1.0, 1..40),
            u in proptest::collection::vec(-1.0f64..1.0, 1..90),
            cut in 0usize..90,
            bump in -5.0f64..5.0,
        ) {
            let cut = cut % u.len();
            let base = causal_conv_fft(&k, &u);
            let mut v = u.clone();
            for x in v.iter_mut().skip(cut + 1) {
                *x += bump;
            }
            let moved = causal_conv_fft(&k, &v);
            for t in 0..=cut {
                prop_assert!((base[t] - moved[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recurrent_scalar_example() {
        let d = DiscreteSystem::scalar(0.5, 1.0, 2.0);
        assert_eq!(recurrent_s4(&d, &[1.0, 0.0, 0.0]).unwrap(), vec![2.0, 1.0, 0.5]);
    }

    #[test]
    fn recurrent_impulse_reproduces_kernel_and_superposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sys = random_stable_system(9, &mut rng).unwrap();
        let d = discretize_structured(&sys, 0.07).unwrap();
        let mut imp = vec![0.0; 50];
        imp[0] = 1.0;
        let y = recurrent_s4(&d, &imp).unwrap();
        let k = kernel_naive(&d, 50).unwrap();
        for (a, b) in y.iter().zip(&k.taps) {
            assert!((a - b).abs() <= 1e-12);
        }
        let u1: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u2: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + b).collect();
        let y1 = recurrent_s4(&d, &u1).unwrap();
        let y2 = recurrent_s4(&d, &u2).unwrap();
        let ys = recurrent_s4(&d, &sum).unwrap();
        for i in 0..50 {
            assert!((ys[i] - y1[i] - y2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn recurrent_reports_divergence() {
        let d = DiscreteSystem::scalar(1e200, 1.0, 1.0);
        assert_eq!(
            recurrent_s4(&d, &[1.0, 1.0, 1.0, 1.0]),
            Err(Error::DivergedState { step: 2 })
        );
    }

    #[test]
    fn forward_without_liquid_matches_recurrence() {
        let sys = legs_system(8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = forward_liquid_s4(&sys, 0.05, &u, LiquidMode::None, 2, 8).unwrap();
        let r = recurrent_s4(&discretize_structured(&sys, 0.05).unwrap(), &u).unwrap();
        let scale = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let err = y.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8 * scale.max(1.0), "{err}");
    }

    #[test]
    fn pb_order_two_is_even_in_the_input() {
        let sys = legs_system(4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let u: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        let kern = LiquidS4Kernels::build(&sys, 0.1, 40, LiquidMode::Pb, 2, 8).unwrap();
        let main = causal_conv(&kern.main.taps, &u);
        let main_neg = causal_conv(&kern.main.taps, &neg);
        let liq = apply_liquid(kern.liquid.as_ref().unwrap(), &u).unwrap();
        let liq_neg = apply_liquid(kern.liquid.as_ref().unwrap(), &neg).unwrap();
        for t in 0..40 {
            assert!((main[t] + main_neg[t]).abs() < 1e-12);
            assert!((liq[t] - liq_neg[t]).abs() < 1e-12);
        }
        let total = kern.apply(&u).unwrap();
        for t in 0..40 {
            assert!((total[t] - main[t] - liq[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_shape_checks() {
        assert!(SequenceBatch::new(2, 3, 1, vec![0.0; 5]).is_err());
        let mut b = SequenceBatch::zeros(2, 3, 2);
        b.set(1, 2, 1, 4.0);
        assert_eq!(b.values[11], 4.0);
        assert_eq!(b.channel(1, 1), vec![0.0, 0.0, 4.0]);
        assert!(SequenceBatch::from_sequences(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
