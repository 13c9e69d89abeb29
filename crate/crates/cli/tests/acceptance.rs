//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines print in order and the timing checks run alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::Command;
use std::time::Instant;

use liquid_s4::bench::{bench_kernel, BenchOptions};
use liquid_s4::conv::{causal_conv_direct, forward_liquid_s4, recurrent_s4};
use liquid_s4::kernel::{kernel_genfn, kernel_naive, relative_linf};
use liquid_s4::linalg::{eigenvalues, ComplexMatrix};
use liquid_s4::liquid::{
    apply_liquid, enumerate_liquid_terms, liquid_kernel_kb_descending, liquid_kernel_kb_discrete,
    liquid_kernel_pb_discrete, liquid_kernel_set_discrete, liquid_oracle, recurrent_liquid, sum_terms, LiquidKernel,
    LiquidMode,
};
use liquid_s4::model::{LayerConfig, ModelConfig};
use liquid_s4::ssm::{discretize_structured, nplr_decompose, random_stable_system, DiscreteSystem};
use liquid_s4::task::SyntheticTask;
use liquid_s4::train::{train_demo, TrainConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn scaled_diff(a: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().map(|v| v.abs()).fold(1.0, f64::max);
    max_abs_diff(a, reference) / scale
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn dplr_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst_rec: f64 = 0.0;
    let mut worst_re = f64::NEG_INFINITY;
    for n in [2, 4, 16, 64] {
        let d = nplr_decompose(n).expect("decomposition");
        worst_rec = worst_rec.max(d.reconstruction_residual);
        let ev = eigenvalues(&d.system.dense_a()).expect("eigenvalues");
        worst_re = ev.iter().map(|z| z.re).fold(worst_re, f64::max);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: worst_rec < 1e-8 && worst_re <= 1e-8 && secs < 5.0,
        detail: format!("max reconstruction residual {worst_rec:.2e}, max Re(eig) {worst_re:.3}, {secs:.2}s"),
    }
}

/// Criteria 2 and 3 share the sweep.
fn kernel_and_recurrent_sweep() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut gen_gap, mut fwd_gap, mut imp_gap): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut count = 0;
    for &l in &[16usize, 64, 256, 1024] {
        for _ in 0..50 {
            let n = rng.random_range(1..=64);
            let dt = (rng.random_range(1e-3f64.ln()..0.2f64.ln())).exp();
            let sys = random_stable_system(n, &mut rng).expect("system");
            let d = discretize_structured(&sys, dt).expect("discretize");
            let genfn = kernel_genfn(&sys, dt, l).expect("genfn");
            let naive = kernel_naive(&d, l).expect("naive");
            gen_gap = gen_gap.max(relative_linf(&genfn.taps, &naive.taps));

            let u: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = forward_liquid_s4(&sys, dt, &u, LiquidMode::None, 2, 8).expect("forward");
            let r = recurrent_s4(&d, &u).expect("recurrent");
            fwd_gap = fwd_gap.max(scaled_diff(&y, &r));

            let mut imp = vec![0.0; l];
            imp[0] = 1.0;
            imp_gap = imp_gap.max(max_abs_diff(&recurrent_s4(&d, &imp).expect("impulse"), &naive.taps));
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        Outcome {
            passed: gen_gap < 1e-8 && count >= 200 && secs < 60.0,
            detail: format!("{count} systems, max relative L∞ {gen_gap:.2e}, {secs:.1}s for sweep"),
        },
        Outcome {
            passed: fwd_gap < 1e-8 && imp_gap <= 1e-12,
            detail: format!("forward vs recurrence {fwd_gap:.2e}, impulse vs taps {imp_gap:.2e}"),
        },
    )
}

fn expansion_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut terms_seen = 0;
    for trial in 0..30 {
        let n = 1 + trial % 3;
        let sys = random_stable_system(n, &mut rng).expect("system");
        let d = discretize_structured(&sys, rng.random_range(0.05..0.5)).expect("discretize");
        let u: Vec<f64> = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
        let terms = enumerate_liquid_terms(&d, &u).expect("enumerate");
        terms_seen += terms.len();
        worst = worst.max(max_abs_diff(
            &recurrent_liquid(&d, &u).expect("recurrent"),
            &sum_terms(&terms, 5, |_| true),
        ));
    }
    Outcome {
        passed: worst <= 1e-10,
        detail: format!("30 systems at L=5, N≤3, {terms_seen} terms, max gap {worst:.2e}"),
    }
}

fn liquid_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut oracle_gap: f64 = 0.0;
    for _ in 0..200 {
        let (a, b, c) = (
            rng.random_range(-0.95..0.95),
            rng.random_range(-1.0..1.0),
            rng.random_range(-2.0..2.0),
        );
        let d = DiscreteSystem::scalar(a, b, c);
        let u: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        for mode in [LiquidMode::Kb, LiquidMode::Pb] {
            let p = rng.random_range(2..=4);
            let l_tilde = rng.random_range(1..=16);
            let set = liquid_kernel_set_discrete(&d, mode, p, l_tilde).expect("set");
            let mut y = causal_conv_direct(&kernel_naive(&d, 16).expect("naive").taps, &u);
            for (acc, v) in y.iter_mut().zip(apply_liquid(&set, &u).expect("apply")) {
                *acc += v;
            }
            oracle_gap = oracle_gap.max(scaled_diff(
                &y,
                &liquid_oracle(&d, &u, p, l_tilde, mode).expect("oracle"),
            ));
        }
    }
    for &l in &[8usize, 16, 32, 64] {
        for _ in 0..10 {
            let n = rng.random_range(1..=4);
            let sys = random_stable_system(n, &mut rng).expect("system");
            let dt = rng.random_range(0.05..0.2);
            let d = discretize_structured(&sys, dt).expect("discretize");
            let u: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
            for mode in [LiquidMode::Kb, LiquidMode::Pb] {
                let p = rng.random_range(2..=4);
                let l_tilde = [1, 4, 16, l][rng.random_range(0..4)].min(l);
                let y = forward_liquid_s4(&sys, dt, &u, mode, p, l_tilde).expect("forward");
                let o = liquid_oracle(&d, &u, p, l_tilde, mode).expect("oracle");
                oracle_gap = oracle_gap.max(scaled_diff(&y, &o));
            }
        }
    }

    let mut flip_exact = true;
    let mut kb_pb: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(1..=16);
        let sys = random_stable_system(n, &mut rng).expect("system");
        let d = discretize_structured(&sys, rng.random_range(0.01..0.2)).expect("discretize");
        let eye = DiscreteSystem::from_dense(ComplexMatrix::identity(n, n), d.b_bar.clone(), d.c_bar.clone())
            .expect("identity system");
        for p in 2..=4 {
            for l_tilde in [1, 3, 8, 32] {
                let kb = liquid_kernel_kb_discrete(&d, p, l_tilde).expect("kb");
                let desc = liquid_kernel_kb_descending(&d, p, l_tilde).expect("descending");
                let flipped = LiquidKernel {
                    order: p,
                    taps: desc,
                    residual_imag: 0.0,
                }
                .descending();
                flip_exact &= flipped == kb.taps;
                let via_eye = liquid_kernel_kb_discrete(&eye, p, l_tilde).expect("kb identity");
                let pb = liquid_kernel_pb_discrete(&d, p, l_tilde).expect("pb");
                kb_pb = kb_pb.max(max_abs_diff(&via_eye.taps, &pb.taps));
            }
        }
    }
    Outcome {
        passed: oracle_gap <= 1e-10 && flip_exact && kb_pb <= 1e-12,
        detail: format!("oracle gap {oracle_gap:.2e}, flip exact: {flip_exact}, KB(I) vs PB {kb_pb:.2e}"),
    }
}

fn complexity_shape() -> Outcome {
    let start = Instant::now();
    let sys = nplr_decompose(64)
        .and_then(|d| d.with_random_output(1))
        .expect("system");
    let report = bench_kernel(
        &sys,
        &BenchOptions {
            include_naive: false,
            ..BenchOptions::default()
        },
    )
    .expect("bench");
    let ratio = report.liquid_ratio.unwrap_or(f64::INFINITY);
    let secs = start.elapsed().as_secs_f64();
    let times: Vec<String> = report
        .records
        .iter()
        .filter(|r| r.path == "genfn")
        .map(|r| format!("{}:{:.1}ms", r.length, r.millis))
        .collect();
    Outcome {
        passed: report.genfn_exponent <= 1.4 && ratio <= 1.5 && secs < 300.0,
        detail: format!(
            "genfn exponent {:.2} ({}), liquid time ratio {ratio:.2}, {secs:.1}s",
            report.genfn_exponent,
            times.join(" ")
        ),
    }
}

fn mechanism_demo() -> Outcome {
    let start = Instant::now();
    let task = SyntheticTask::adjacent_product_sign(32);
    let run = |mode: LiquidMode| -> Vec<(f64, f64)> {
        let cfg = ModelConfig {
            layers: vec![LayerConfig {
                features: 4,
                state_size: 4,
                mode,
                max_order: 2,
                ..LayerConfig::default()
            }],
            ..ModelConfig::default()
        };
        (0..3)
            .map(|seed| {
                let r = train_demo(&cfg, &task, &TrainConfig::default(), seed).expect("training");
                assert!(r.param_count <= 2000);
                (r.final_train_accuracy, r.test_accuracy)
            })
            .collect()
    };
    let pb = run(LiquidMode::Pb);
    let none = run(LiquidMode::None);
    let pb_med = median(pb.iter().map(|r| r.0).collect());
    let none_med = median(none.iter().map(|r| r.0).collect());
    let secs = start.elapsed().as_secs_f64();
    let fmt = |v: &[(f64, f64)]| {
        v.iter()
            .map(|r| format!("{:.3}/{:.3}", r.0, r.1))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Outcome {
        passed: pb_med - none_med >= 0.10 && pb_med >= 0.85 && secs < 900.0,
        detail: format!(
            "train median pb {pb_med:.3} vs none {none_med:.3} (gap {:.3}); train/test per seed pb [{}] none [{}]; {secs:.0}s",
            pb_med - none_med,
            fmt(&pb),
            fmt(&none)
        ),
    }
}

fn harness_integrity() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_liquid-s4");
    let status = |poison: bool| {
        let mut cmd = Command::new(bin);
        cmd.arg("verify");
        if poison {
            cmd.arg("--poison");
        }
        cmd.output().expect("run verify").status.code()
    };
    let (clean, poisoned) = (status(false), status(true));
    Outcome {
        passed: clean == Some(0) && poisoned == Some(1),
        detail: format!("verify exit {clean:?}, verify --poison exit {poisoned:?}"),
    }
}

fn main() {
    // libtest flags such as --nocapture may be passed through; a name filter
    // that matches nothing here skips the run.
    if std::env::args()
        .skip(1)
        .any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str()))
    {
        return;
    }
    let mut failures = 0;
    let mut count = 0;
    let mut report = |id: u32, name: &str, o: Outcome| {
        println!("{} [{id}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.passed);
        count += 1;
    };
    report(1, "HiPPO/DPLR correctness", dplr_correctness());
    let (c2, c3) = kernel_and_recurrent_sweep();
    report(2, "kernel-path equivalence", c2);
    report(3, "recurrent oracle equivalence", c3);
    report(4, "unrolled expansion fidelity", expansion_fidelity());
    report(5, "liquid kernel semantics", liquid_semantics());
    report(6, "complexity shape", complexity_shape());
    report(7, "mechanism demonstration", mechanism_demo());
    report(8, "harness integrity", harness_integrity());

    println!("acceptance: {} passed, {failures} failed", count - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
