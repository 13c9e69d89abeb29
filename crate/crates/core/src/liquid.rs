//! Liquid (input-correlation) kernels.
//!
//! Correlation signals are products of `p` adjacent input samples. An order-p
//! liquid kernel weights them with `C̄ Ā^d B̄^{∘p}` (KB) or the constant
//! `Σ_n C̄_n B̄_n^p` (PB).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conv::causal_conv;
use crate::error::{Error, Result};
use crate::kernel::kernel_naive_complex;
use crate::linalg::{self, ComplexMatrix, RealMatrix};
use crate::ssm::{discretize_structured, DiscreteSystem, DplrSystem};

pub const MAX_ORDER: usize = 10;

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LiquidMode {
    #[default]
    None,
    Kb,
    Pb,
}

impl std::str::FromStr for LiquidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "kb" => Ok(Self::Kb),
            "pb" => Ok(Self::Pb),
            other => Err(Error::Config(format!(
                "unknown liquid mode `{other}` (expected kb, pb or none)"
            ))),
        }
    }
}

impl std::fmt::Display for LiquidMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Kb => "kb",
            Self::Pb => "pb",
        })
    }
}

/// `values[k] = u_k u_{k-1} ⋯ u_{k-p+1}`, zero for `k < p-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSignal {
    pub order: usize,
    pub values: Vec<f64>,
}

pub fn correlation_signal(u: &[f64], p: usize) -> Result<CorrelationSignal> {
    check_order(p)?;
    let values = (0..u.len())
        .map(|k| {
            if k + 1 < p {
                0.0
            } else {
                u[k + 1 - p..=k].iter().product()
            }
        })
        .collect();
    Ok(CorrelationSignal { order: p, values })
}

fn check_order(p: usize) -> Result<()> {
    if !(2..=MAX_ORDER).contains(&p) {
        return Err(Error::InvalidOrder { order: p });
    }
    Ok(())
}

fn check_window(l_tilde: usize) -> Result<()> {
    if l_tilde == 0 {
        return Err(Error::InvalidDimension("liquid window must be at least 1".into()));
    }
    Ok(())
}

/// `ceil(L / 64)`, at least 8.
pub fn default_window(seq_len: usize) -> usize {
    seq_len.div_ceil(64).max(8)
}

/// Anti-diagonal `J_n`.
pub fn backward_identity(n: usize) -> RealMatrix {
    RealMatrix::from_fn(n, n, |i, j| if i + j + 1 == n { 1.0 } else { 0.0 })
}

/// Order-p taps, stored lag-ordered: `taps[d]` multiplies `v^{(p)}_{k-d}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiquidKernel {
    pub order: usize,
    pub taps: Vec<f64>,
    pub residual_imag: f64,
}

impl LiquidKernel {
    fn from_complex(order: usize, values: &[Complex64]) -> Self {
        Self {
            order,
            taps: values.iter().map(|z| z.re).collect(),
            residual_imag: linalg::max_abs_imag(values),
        }
    }

    /// Highest power first, obtained as `J · taps`.
    pub fn descending(&self) -> Vec<f64> {
        let j = backward_identity(self.taps.len());
        (0..j.rows())
            .map(|i| j.row(i).iter().zip(&self.taps).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// KB taps `C̄ Ā^d B̄^{∘p}`, `d < l_tilde`, via structured matrix-vector products.
pub fn liquid_kernel_kb_discrete(d: &DiscreteSystem, p: usize, l_tilde: usize) -> Result<LiquidKernel> {
    check_order(p)?;
    check_window(l_tilde)?;
    let lifted = d.with_b_bar(d.b_bar_power(p));
    Ok(LiquidKernel::from_complex(p, &kernel_naive_complex(&lifted, l_tilde)?))
}

pub fn liquid_kernel_kb(sys: &DplrSystem, dt: f64, p: usize, l_tilde: usize) -> Result<LiquidKernel> {
    liquid_kernel_kb_discrete(&discretize_structured(sys, dt)?, p, l_tilde)
}

/// The KB kernel written highest power first, `(C̄Ā^{L̃-1}B̄^{∘p}, …, C̄B̄^{∘p})`.
pub fn liquid_kernel_kb_descending(d: &DiscreteSystem, p: usize, l_tilde: usize) -> Result<Vec<f64>> {
    check_order(p)?;
    check_window(l_tilde)?;
    let mut out = vec![0.0; l_tilde];
    let mut x = d.b_bar_power(p);
    for i in 0..l_tilde {
        if i > 0 {
            x = d.apply_a(&x);
        }
        out[l_tilde - 1 - i] = d.output(&x).re;
    }
    Ok(out)
}

/// `κ_p = Σ_n C̄_n B̄_n^p`.
pub fn pb_coefficient(d: &DiscreteSystem, p: usize) -> Complex64 {
    linalg::bilinear_dot(&d.c_bar, &d.b_bar_power(p))
}

pub fn liquid_kernel_pb_discrete(d: &DiscreteSystem, p: usize, l_tilde: usize) -> Result<LiquidKernel> {
    check_order(p)?;
    check_window(l_tilde)?;
    let kappa = pb_coefficient(d, p);
    Ok(LiquidKernel {
        order: p,
        taps: vec![kappa.re; l_tilde],
        residual_imag: kappa.im.abs(),
    })
}

pub fn liquid_kernel_pb(sys: &DplrSystem, dt: f64, p: usize, l_tilde: usize) -> Result<LiquidKernel> {
    liquid_kernel_pb_discrete(&discretize_structured(sys, dt)?, p, l_tilde)
}

/// Liquid kernels for orders `2..=max_order`, ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiquidKernelSet {
    pub mode: LiquidMode,
    pub max_order: usize,
    pub window: usize,
    pub kernels: Vec<LiquidKernel>,
}

pub fn liquid_kernel_set_discrete(
    d: &DiscreteSystem,
    mode: LiquidMode,
    max_order: usize,
    window: usize,
) -> Result<LiquidKernelSet> {
    check_order(max_order)?;
    check_window(window)?;
    let build = match mode {
        LiquidMode::Kb => liquid_kernel_kb_discrete,
        LiquidMode::Pb => liquid_kernel_pb_discrete,
        LiquidMode::None => return Err(Error::Config("mode `none` has no liquid kernels".into())),
    };
    let kernels = (2..=max_order)
        .map(|p| build(d, p, window))
        .collect::<Result<Vec<_>>>()?;
    Ok(LiquidKernelSet {
        mode,
        max_order,
        window,
        kernels,
    })
}

pub fn liquid_kernel_set(
    sys: &DplrSystem,
    dt: f64,
    mode: LiquidMode,
    max_order: usize,
    window: usize,
) -> Result<LiquidKernelSet> {
    liquid_kernel_set_discrete(&discretize_structured(sys, dt)?, mode, max_order, window)
}

/// `Σ_p taps^{(p)} * v^{(p)}`, causal, truncated to `u.len()`.
pub fn apply_liquid(set: &LiquidKernelSet, u: &[f64]) -> Result<Vec<f64>> {
    let mut y = vec![0.0; u.len()];
    for kernel in &set.kernels {
        let v = correlation_signal(u, kernel.order)?;
        for (acc, term) in y.iter_mut().zip(causal_conv(&kernel.taps, &v.values)) {
            *acc += term;
        }
    }
    Ok(y)
}

pub const ORACLE_MAX_LEN: usize = 64;
pub const ORACLE_MAX_ORDER: usize = 5;

/// Brute-force kernel-path reference with dense powers of `Ā`.
///
/// Sums the full vanilla convolution and, for `2 ≤ p ≤ max_order` and
/// `d < l_tilde`, every windowed correlation term. `max_order = 1` leaves
/// only the vanilla part.
pub fn liquid_oracle(
    d: &DiscreteSystem,
    u: &[f64],
    max_order: usize,
    l_tilde: usize,
    mode: LiquidMode,
) -> Result<Vec<f64>> {
    if u.len() > ORACLE_MAX_LEN || max_order > ORACLE_MAX_ORDER || max_order == 0 {
        return Err(Error::SizeGuard(format!(
            "oracle needs L ≤ {ORACLE_MAX_LEN} and 1 ≤ P ≤ {ORACLE_MAX_ORDER}, got L = {}, P = {max_order}",
            u.len()
        )));
    }
    if max_order >= 2 && mode == LiquidMode::None {
        return Err(Error::Config("liquid orders need mode kb or pb".into()));
    }
    let l = u.len();
    let a = d.dense_a();
    let n = d.state_size();
    let mut powers: Vec<ComplexMatrix> = vec![ComplexMatrix::identity(n, n)];
    for i in 1..l {
        powers.push(&powers[i - 1] * &a);
    }
    let coeff = |power: &ComplexMatrix, b: &[Complex64]| -> Complex64 {
        let mut s = C0;
        for i in 0..n {
            for j in 0..n {
                s += d.c_bar[i] * power[(i, j)] * b[j];
            }
        }
        s
    };
    let b_pows: Vec<Vec<Complex64>> = (0..=max_order).map(|p| d.b_bar_power(p)).collect();
    let mut y = vec![0.0; l];
    for (k, yk) in y.iter_mut().enumerate() {
        let mut acc = C0;
        for lag in 0..=k {
            acc += coeff(&powers[lag], &d.b_bar) * u[k - lag];
        }
        for (p, bp) in b_pows.iter().enumerate().skip(2) {
            for (lag, pw) in powers.iter().enumerate().take(l_tilde.min(k + 1)) {
                let end = k - lag;
                if end + 1 < p {
                    continue;
                }
                let window: f64 = (end + 1 - p..=end).map(|j| u[j]).product();
                let c = match mode {
                    LiquidMode::Kb => coeff(pw, bp),
                    _ => linalg::bilinear_dot(&d.c_bar, bp),
                };
                acc += c * window;
            }
        }
        *yk = acc.re;
    }
    Ok(y)
}

/// Exact liquid dynamics `x_k = Ā x_{k-1} + B̄ ⊙ x_{k-1} u_k + B̄ u_k`.
pub fn recurrent_liquid(d: &DiscreteSystem, u: &[f64]) -> Result<Vec<f64>> {
    let mut x = vec![C0; d.state_size()];
    let mut y = Vec::with_capacity(u.len());
    for (step, &uk) in u.iter().enumerate() {
        let ax = d.apply_a(&x);
        x = ax
            .iter()
            .zip(&x)
            .zip(&d.b_bar)
            .map(|((a, xi), b)| a + b * xi * uk + b * uk)
            .collect();
        if !x.iter().all(|z| linalg::is_finite(*z)) {
            return Err(Error::DivergedState { step });
        }
        y.push(d.output(&x).re);
    }
    Ok(y)
}

/// One monomial of the unrolled liquid recurrence at output `k`: input
/// injected at `source`, with `B̄ u_j` factors chosen at steps `picks`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiquidTerm {
    pub output: usize,
    pub source: usize,
    pub picks: Vec<usize>,
    pub value: f64,
}

impl LiquidTerm {
    /// Polynomial degree in the input.
    pub fn order(&self) -> usize {
        self.picks.len() + 1
    }

    /// Whether the term is a product of adjacent samples, i.e. one that the
    /// kernel path represents.
    pub fn is_consecutive(&self) -> bool {
        self.picks.iter().enumerate().all(|(i, &j)| j == self.source + 1 + i)
    }

    /// Kernel lag of a consecutive term.
    pub fn lag(&self) -> usize {
        self.output - (self.source + self.picks.len())
    }
}

pub const ENUMERATION_MAX_LEN: usize = 12;

/// Every term of the expanded liquid recurrence, by enumerating, for each
/// output and source, all subsets of later steps taking the `B̄ u_j` branch.
pub fn enumerate_liquid_terms(d: &DiscreteSystem, u: &[f64]) -> Result<Vec<LiquidTerm>> {
    if u.len() > ENUMERATION_MAX_LEN {
        return Err(Error::SizeGuard(format!(
            "term enumeration needs L ≤ {ENUMERATION_MAX_LEN}, got {}",
            u.len()
        )));
    }
    let mut terms = Vec::new();
    for k in 0..u.len() {
        for s in 0..=k {
            let span = k - s;
            for mask in 0u32..(1 << span) {
                let mut x: Vec<Complex64> = d.b_bar.iter().map(|b| b * u[s]).collect();
                let mut picks = Vec::new();
                for bit in 0..span {
                    let j = s + 1 + bit;
                    if mask & (1 << bit) != 0 {
                        picks.push(j);
                        x = x.iter().zip(&d.b_bar).map(|(xi, b)| xi * b * u[j]).collect();
                    } else {
                        x = d.apply_a(&x);
                    }
                }
                terms.push(LiquidTerm {
                    output: k,
                    source: s,
                    picks,
                    value: d.output(&x).re,
                });
            }
        }
    }
    Ok(terms)
}

/// Per-output sums of the enumerated terms passing `keep`.
pub fn sum_terms(terms: &[LiquidTerm], len: usize, keep: impl Fn(&LiquidTerm) -> bool) -> Vec<f64> {
    let mut y = vec![0.0; len];
    for t in terms.iter().filter(|t| keep(t)) {
        y[t.output] += t.value;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::{legs_system, random_stable_system};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn correlation_examples() {
        assert_eq!(
            correlation_signal(&[1.0, 2.0, 3.0], 2).unwrap().values,
            vec![0.0, 2.0, 6.0]
        );
        assert_eq!(
            correlation_signal(&[1.0; 4], 3).unwrap().values,
            vec![0.0, 0.0, 1.0, 1.0]
        );
        assert_eq!(
            correlation_signal(&[2.0, 0.0, 5.0, 3.0], 3).unwrap().values,
            vec![0.0; 4]
        );
        assert_eq!(correlation_signal(&[1.0, 2.0], 4).unwrap().values, vec![0.0; 2]);
        assert_eq!(correlation_signal(&[1.0], 1), Err(Error::InvalidOrder { order: 1 }));
        assert_eq!(correlation_signal(&[1.0], 11), Err(Error::InvalidOrder { order: 11 }));
    }

    #[test]
    fn scalar_kb_and_pb_examples() {
        let (a, b, c) = (0.5, 0.8, 1.5);
        let d = DiscreteSystem::scalar(a, b, c);
        let kb = liquid_kernel_kb_discrete(&d, 2, 3).unwrap();
        assert!(close(&kb.taps, &[c * b * b, c * a * b * b, c * a * a * b * b], 1e-15));
        let pb = liquid_kernel_pb_discrete(&d, 3, 4).unwrap();
        assert!(pb.taps.iter().all(|&t| (t - c * b * b * b).abs() < 1e-15));
        assert_eq!(liquid_kernel_pb_discrete(&d, 2, 1).unwrap().taps.len(), 1);

        let zero_b = DiscreteSystem::scalar(a, 0.0, c);
        assert!(liquid_kernel_kb_discrete(&zero_b, 2, 5)
            .unwrap()
            .taps
            .iter()
            .all(|&t| t == 0.0));

        let orth = DiscreteSystem::from_dense(
            ComplexMatrix::identity(2, 2),
            vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        )
        .unwrap();
        assert!(liquid_kernel_pb_discrete(&orth, 2, 3)
            .unwrap()
            .taps
            .iter()
            .all(|&t| t == 0.0));
    }

    #[test]
    fn flip_identity_is_exact() {
        let sys = legs_system(6, 3).unwrap();
        let d = discretize_structured(&sys, 0.1).unwrap();
        for p in 2..=5 {
            for l_tilde in [1, 2, 7, 16] {
                let kb = liquid_kernel_kb_discrete(&d, p, l_tilde).unwrap();
                let desc = liquid_kernel_kb_descending(&d, p, l_tilde).unwrap();
                assert_eq!(kb.descending(), desc);
                let j = backward_identity(l_tilde);
                let flipped: Vec<f64> = (0..l_tilde)
                    .map(|i| (0..l_tilde).map(|m| j.get(i, m) * desc[m]).sum())
                    .collect();
                assert_eq!(flipped, kb.taps);
            }
        }
    }

    #[test]
    fn kb_with_identity_transition_equals_pb() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let sys = random_stable_system(5, &mut rng).unwrap();
            let d = discretize_structured(&sys, 0.1).unwrap();
            let eye =
                DiscreteSystem::from_dense(ComplexMatrix::identity(5, 5), d.b_bar.clone(), d.c_bar.clone()).unwrap();
            for p in 2..=4 {
                let kb = liquid_kernel_kb_discrete(&eye, p, 9).unwrap();
                let pb = liquid_kernel_pb_discrete(&d, p, 9).unwrap();
                assert!(close(&kb.taps, &pb.taps, 1e-12));
            }
        }
    }

    #[test]
    fn set_validation() {
        let d = DiscreteSystem::scalar(0.5, 1.0, 1.0);
        assert!(matches!(
            liquid_kernel_set_discrete(&d, LiquidMode::None, 3, 4),
            Err(Error::Config(_))
        ));
        assert_eq!(
            liquid_kernel_set_discrete(&d, LiquidMode::Kb, 11, 4),
            Err(Error::InvalidOrder { order: 11 })
        );
        assert!(liquid_kernel_set_discrete(&d, LiquidMode::Kb, 3, 0).is_err());
        let set = liquid_kernel_set_discrete(&d, LiquidMode::Pb, 4, 5).unwrap();
        assert_eq!(set.kernels.iter().map(|k| k.order).collect::<Vec<_>>(), vec![2, 3, 4]);
        assert_eq!(default_window(100), 8);
        assert_eq!(default_window(4096), 64);
        assert_eq!(default_window(4097), 65);
        assert_eq!("PB".parse::<LiquidMode>().unwrap(), LiquidMode::Pb);
        assert!("x".parse::<LiquidMode>().is_err());
    }

    #[test]
    fn apply_examples() {
        let (a, b, c) = (0.3, 0.7, 2.0);
        let d = DiscreteSystem::scalar(a, b, c);
        let set = liquid_kernel_set_discrete(&d, LiquidMode::Kb, 2, 4).unwrap();
        let y = apply_liquid(&set, &[1.5, -2.0]).unwrap();
        assert!((y[1] - c * b * b * 1.5 * -2.0).abs() < 1e-15);
        assert_eq!(apply_liquid(&set, &[0.0; 6]).unwrap(), vec![0.0; 6]);
        let set = liquid_kernel_set_discrete(&d, LiquidMode::Kb, 5, 4).unwrap();
        assert_eq!(apply_liquid(&set, &[0.0, 0.0, 3.0, 0.0, 0.0]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn degree_scaling() {
        let sys = legs_system(4, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        for mode in [LiquidMode::Kb, LiquidMode::Pb] {
            for p in 2..=4 {
                let mut set = liquid_kernel_set(&sys, 0.1, mode, p, 6).unwrap();
                set.kernels.retain(|k| k.order == p);
                let base = apply_liquid(&set, &u).unwrap();
                for alpha in [2.0f64, -1.0] {
                    let su: Vec<f64> = u.iter().map(|x| alpha * x).collect();
                    let scaled = apply_liquid(&set, &su).unwrap();
                    let want: Vec<f64> = base.iter().map(|x| x * alpha.powi(p as i32)).collect();
                    assert!(close(&scaled, &want, 1e-12));
                }
            }
        }
    }

    #[test]
    fn recurrent_scalar_two_steps() {
        let (a, b, c) = (0.6, 0.9, 1.3);
        let d = DiscreteSystem::scalar(a, b, c);
        let (u0, u1) = (0.7, -1.2);
        let y = recurrent_liquid(&d, &[u0, u1]).unwrap();
        let want = c * a * b * u0 + c * b * u1 + c * b * b * u0 * u1;
        assert!((y[1] - want).abs() < 1e-15);
        assert_eq!(recurrent_liquid(&d, &[0.0; 4]).unwrap(), vec![0.0; 4]);
        let big = DiscreteSystem::scalar(1e300, 1.0, 1.0);
        assert!(matches!(
            recurrent_liquid(&big, &[1.0; 5]),
            Err(Error::DivergedState { .. })
        ));
    }

    #[test]
    fn enumeration_matches_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=3 {
            let sys = random_stable_system(n, &mut rng).unwrap();
            let d = discretize_structured(&sys, 0.3).unwrap();
            let u: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let terms = enumerate_liquid_terms(&d, &u).unwrap();
            assert_eq!(terms.len(), (1..=5).map(|k| (1 << k) - 1).sum::<usize>());
            let full = sum_terms(&terms, 5, |_| true);
            assert!(close(&full, &recurrent_liquid(&d, &u).unwrap(), 1e-10));
        }
    }

    #[test]
    fn kernel_path_is_the_consecutive_part_of_the_recurrence() {
        let (a, b, c) = (0.5, 0.8, 1.1);
        let d = DiscreteSystem::scalar(a, b, c);
        let u = [0.9, -0.4, 1.7];
        let kernel_path = liquid_oracle(&d, &u, 3, 3, LiquidMode::Kb).unwrap();
        let exact = recurrent_liquid(&d, &u).unwrap();
        assert!((exact[0] - kernel_path[0]).abs() < 1e-15);
        assert!((exact[1] - kernel_path[1]).abs() < 1e-15);
        let missing = c * a * b * b * u[0] * u[2];
        assert!((exact[2] - kernel_path[2] - missing).abs() < 1e-15);

        let terms = enumerate_liquid_terms(&d, &u).unwrap();
        let consecutive = sum_terms(&terms, 3, LiquidTerm::is_consecutive);
        assert!(close(&consecutive, &kernel_path, 1e-15));
        let absent: Vec<_> = terms.iter().filter(|t| !t.is_consecutive()).collect();
        assert_eq!(absent.len(), 1);
        assert_eq!(
            (absent[0].output, absent[0].source, absent[0].picks.clone()),
            (2, 0, vec![2])
        );

        // order 2 only: the cubic window u0 u1 u2 is dropped as well
        let p2 = liquid_oracle(&d, &u, 2, 3, LiquidMode::Kb).unwrap();
        let cubic = c * b * b * b * u[0] * u[1] * u[2];
        assert!((exact[2] - p2[2] - missing - cubic).abs() < 1e-15);
    }

    #[test]
    fn oracle_guards_and_vanilla_case() {
        let d = DiscreteSystem::scalar(0.5, 1.0, 1.0);
        assert!(matches!(
            liquid_oracle(&d, &[0.0; 65], 2, 4, LiquidMode::Kb),
            Err(Error::SizeGuard(_))
        ));
        assert!(matches!(
            liquid_oracle(&d, &[0.0; 5], 6, 4, LiquidMode::Kb),
            Err(Error::SizeGuard(_))
        ));
        let sys = legs_system(3, 1).unwrap();
        let d = discretize_structured(&sys, 0.2).unwrap();
        let u = [0.3, -1.0, 0.5, 2.0, 0.1];
        let y = liquid_oracle(&d, &u, 1, 4, LiquidMode::None).unwrap();
        let r = crate::conv::recurrent_s4(&d, &u).unwrap();
        assert!(close(&y, &r, 1e-14));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kernel_path_matches_oracle(
            seed in 0u64..1_000_000,
            l in 1usize..40,
            p in 2usize..=4,
            l_tilde in 1usize..12,
            kb in any::<bool>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = random_stable_system(3, &mut rng).unwrap();
            let d = discretize_structured(&sys, 0.2).unwrap();
            let u: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mode = if kb { LiquidMode::Kb } else { LiquidMode::Pb };
            let set = liquid_kernel_set_discrete(&d, mode, p, l_tilde).unwrap();
            let main = crate::kernel::kernel_naive(&d, l).unwrap();
            let mut y = causal_conv(&main.taps, &u);
            for (a, b) in y.iter_mut().zip(apply_liquid(&set, &u).unwrap()) {
                *a += b;
            }
            let oracle = liquid_oracle(&d, &u, p, l_tilde, mode).unwrap();
            prop_assert!(close(&y, &oracle, 1e-10));
        }
    }
}
