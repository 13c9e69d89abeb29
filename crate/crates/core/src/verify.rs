//! Self-check suite: each invariant is measured as a residual against a
//! tolerance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::conv::{causal_conv_direct, causal_conv_fft, forward_liquid_s4, recurrent_s4};
use crate::error::Result;
use crate::fft::{fft, Direction};
use crate::kernel::{kernel_genfn, kernel_naive, relative_linf};
use crate::linalg::{eigenvalues, ComplexMatrix};
use crate::liquid::{
    apply_liquid, enumerate_liquid_terms, liquid_kernel_kb_descending, liquid_kernel_kb_discrete,
    liquid_kernel_pb_discrete, liquid_kernel_set_discrete, liquid_oracle, recurrent_liquid, sum_terms, LiquidKernel,
    LiquidMode,
};
use crate::ssm::{
    discretize_bilinear, discretize_structured, hippo_legs, nplr_decompose, random_stable_system, DiscreteSystem,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    pub state_size: usize,
    pub length: usize,
    pub dt: f64,
    pub max_order: usize,
    pub window: usize,
    /// Corrupt one generated kernel tap so the suite must fail.
    pub poison: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            state_size: 16,
            length: 256,
            dt: 0.05,
            max_order: 3,
            window: 8,
            poison: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantResult {
    pub suite: String,
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub invariants: Vec<InvariantResult>,
    pub max_residual_per_suite: BTreeMap<String, f64>,
    pub failed: Vec<String>,
    pub passed: bool,
}

struct Suite {
    results: Vec<InvariantResult>,
}

impl Suite {
    fn check(&mut self, suite: &str, name: &str, residual: f64, tolerance: f64) {
        self.results.push(InvariantResult {
            suite: suite.into(),
            name: name.into(),
            residual,
            tolerance,
            // NaN residuals fail
            passed: residual <= tolerance,
        });
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn poison_taps(taps: &mut [f64]) {
    if let Some((i, _)) = taps.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
        taps[i] = -taps[i] + 1.0;
    }
}

fn identity_transition(d: &DiscreteSystem) -> Result<DiscreteSystem> {
    let n = d.state_size();
    DiscreteSystem::from_dense(ComplexMatrix::identity(n, n), d.b_bar.clone(), d.c_bar.clone())
}

pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut s = Suite { results: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.state_size;
    let l = cfg.length.max(1);

    // ssm
    let h3 = hippo_legs(3)?;
    let want = [
        [-1.0, 0.0, 0.0],
        [-3f64.sqrt(), -2.0, 0.0],
        [-5f64.sqrt(), -15f64.sqrt(), -3.0],
    ];
    let h3_err = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| (h3.get(i, j) - want[i][j]).abs())
        .fold(0.0, f64::max);
    s.check("ssm", "hippo-entries-n3", h3_err, 1e-15);
    let legs = nplr_decompose(n)?;
    s.check("ssm", "nplr-reconstruction", legs.reconstruction_residual, 1e-8);
    let abscissa = eigenvalues(&legs.system.dense_a()).map_or(f64::INFINITY, |ev| {
        ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    });
    s.check("ssm", "dplr-spectrum-left-half-plane", abscissa.max(0.0), 1e-8);
    let sys = legs.with_random_output(cfg.seed)?;
    let structured = discretize_structured(&sys, cfg.dt)?;
    let dense = discretize_bilinear(&sys, cfg.dt)?;
    let b_err = structured
        .b_bar
        .iter()
        .zip(&dense.b_bar)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    s.check("ssm", "structured-vs-dense-discretization", b_err, 1e-10);

    // kernel
    let mut genfn = kernel_genfn(&sys, cfg.dt, l)?;
    if cfg.poison {
        poison_taps(&mut genfn.taps);
    }
    let naive = kernel_naive(&structured, l)?;
    s.check(
        "kernel",
        "genfn-equals-naive",
        relative_linf(&genfn.taps, &naive.taps),
        1e-8,
    );
    s.check("kernel", "real-kernel-imag-residual", genfn.residual_imag, 1e-6);
    let x: Vec<Complex64> = (0..64)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let energy: f64 = x.iter().map(|z| z.norm_sqr()).sum();
    let spectral: f64 = fft(&x, Direction::Forward).iter().map(|z| z.norm_sqr()).sum::<f64>() / 64.0;
    s.check("kernel", "fft-parseval", (energy - spectral).abs() / energy, 1e-12);

    // conv
    let u: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
    s.check(
        "conv",
        "fft-conv-equals-direct",
        max_abs_diff(&causal_conv_fft(&genfn.taps, &u), &causal_conv_direct(&genfn.taps, &u)),
        1e-10,
    );
    let mut impulse = vec![0.0; l];
    impulse[0] = 1.0;
    s.check(
        "conv",
        "impulse-response-equals-taps",
        max_abs_diff(&recurrent_s4(&structured, &impulse)?, &naive.taps),
        1e-12,
    );
    let mut fwd = forward_liquid_s4(&sys, cfg.dt, &u, LiquidMode::None, 2, cfg.window)?;
    if cfg.poison {
        fwd = causal_conv_fft(&genfn.taps, &u);
    }
    let rec = recurrent_s4(&structured, &u)?;
    let scale = rec.iter().map(|v| v.abs()).fold(1.0, f64::max);
    s.check(
        "conv",
        "forward-none-equals-recurrent",
        max_abs_diff(&fwd, &rec) / scale,
        1e-8,
    );

    // liquid
    let mut flip_err: f64 = 0.0;
    for p in 2..=cfg.max_order.max(2) {
        let kb = liquid_kernel_kb_discrete(&structured, p, cfg.window)?;
        let desc = liquid_kernel_kb_descending(&structured, p, cfg.window)?;
        let flipped = LiquidKernel {
            order: p,
            taps: desc,
            residual_imag: 0.0,
        }
        .descending();
        flip_err = flip_err.max(max_abs_diff(&flipped, &kb.taps));
    }
    s.check("liquid", "flip-identity", flip_err, 0.0);

    let eye = identity_transition(&structured)?;
    let mut kb_pb: f64 = 0.0;
    for p in 2..=cfg.max_order.max(2) {
        let kb = liquid_kernel_kb_discrete(&eye, p, cfg.window)?;
        let pb = liquid_kernel_pb_discrete(&structured, p, cfg.window)?;
        kb_pb = kb_pb.max(max_abs_diff(&kb.taps, &pb.taps));
    }
    s.check("liquid", "kb-identity-equals-pb", kb_pb, 1e-12);

    let small = random_stable_system(3, &mut rng)?;
    let sd = discretize_structured(&small, 0.2)?;
    let lo = l.min(32);
    let u_small: Vec<f64> = (0..lo).map(|_| rng.random_range(-1.0..1.0)).collect();
    let main = kernel_naive(&sd, lo)?;
    let order = cfg.max_order.clamp(2, 4);
    let mut oracle_err: f64 = 0.0;
    for mode in [LiquidMode::Kb, LiquidMode::Pb] {
        let set = liquid_kernel_set_discrete(&sd, mode, order, cfg.window.min(lo))?;
        let mut y = causal_conv_direct(&main.taps, &u_small);
        for (a, b) in y.iter_mut().zip(apply_liquid(&set, &u_small)?) {
            *a += b;
        }
        let oracle = liquid_oracle(&sd, &u_small, order, cfg.window.min(lo), mode)?;
        oracle_err = oracle_err.max(max_abs_diff(&y, &oracle));
    }
    s.check("liquid", "kernel-path-equals-oracle", oracle_err, 1e-10);

    let u5: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let terms = enumerate_liquid_terms(&sd, &u5)?;
    s.check(
        "liquid",
        "recurrence-equals-term-enumeration",
        max_abs_diff(&recurrent_liquid(&sd, &u5)?, &sum_terms(&terms, 5, |_| true)),
        1e-10,
    );

    let (a, b, c) = (
        rng.random_range(0.1..0.9),
        rng.random_range(0.1..0.9),
        rng.random_range(0.5..1.5),
    );
    let scalar = DiscreteSystem::scalar(a, b, c);
    let u3: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let exact = recurrent_liquid(&scalar, &u3)?;
    let kernel_path = liquid_oracle(&scalar, &u3, 3, 3, LiquidMode::Kb)?;
    let expected_gap = [0.0, 0.0, c * a * b * b * u3[0] * u3[2]];
    let gap: Vec<f64> = exact.iter().zip(&kernel_path).map(|(x, y)| x - y).collect();
    s.check(
        "liquid",
        "symbolic-window-gap-l3",
        max_abs_diff(&gap, &expected_gap),
        1e-14,
    );

    let mut max_residual_per_suite = BTreeMap::new();
    for r in &s.results {
        let e = max_residual_per_suite.entry(r.suite.clone()).or_insert(0.0f64);
        *e = e.max(r.residual);
    }
    let failed: Vec<String> = s.results.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    Ok(VerifyReport {
        config: cfg.clone(),
        passed: failed.is_empty(),
        failed,
        max_residual_per_suite,
        invariants: s.results,
    })
}
