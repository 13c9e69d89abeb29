use serde::Serialize;
use std::path::Path;
use std::time::Instant;

use liquid_s4::bench::{bench_kernel, BenchOptions};
use liquid_s4::conv::{causal_conv_direct, forward_liquid_s4, recurrent_s4, SequenceBatch};
use liquid_s4::kernel::{kernel_genfn, kernel_naive, relative_linf};
use liquid_s4::linalg::ComplexVec;
use liquid_s4::liquid::{
    correlation_signal, liquid_kernel_set, liquid_oracle, LiquidKernel, LiquidMode, ORACLE_MAX_LEN, ORACLE_MAX_ORDER,
};
use liquid_s4::ssm::{discretize_structured, hippo_legs, init_dt_schedule, nplr_decompose, DplrSystem};
use liquid_s4::train::train_demo;
use liquid_s4::verify::{run_verification, VerifyConfig, VerifyReport};

use crate::config::{Dims, RunConfig};
use crate::seqio;
use crate::CliError;

const KERNEL_TOL: f64 = 1e-8;

/// Text a command leaves for stdout.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Write the document to `out`, or return it for stdout.
fn emit(text: String, out: Option<&Path>) -> Result<Outcome, CliError> {
    match out {
        Some(p) => {
            write_file(p, text.as_bytes())?;
            Ok(Outcome::default())
        }
        None => Ok(Outcome { stdout: text }),
    }
}

fn pairs(v: &ComplexVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

/// One LegS system and step size per feature. Output rows are drawn from
/// `seed + feature`.
pub fn feature_systems(cfg: &RunConfig, dims: &Dims) -> Result<Vec<(DplrSystem, f64)>, CliError> {
    let legs = nplr_decompose(dims.state)?;
    let sched = init_dt_schedule(dims.features, dims.dt_min, cfg.dt_max, cfg.seed)?;
    sched
        .per_feature_dt
        .iter()
        .enumerate()
        .map(|(f, &dt)| Ok((legs.with_random_output(cfg.seed.wrapping_add(f as u64))?, dt)))
        .collect()
}

#[derive(Serialize)]
struct HippoReport {
    n: usize,
    matrix: Vec<Vec<f64>>,
    lambda: Vec<[f64; 2]>,
    p: Vec<[f64; 2]>,
    b: Vec<[f64; 2]>,
    normal_residual: f64,
    reconstruction_residual: f64,
}

pub fn cmd_hippo(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome, CliError> {
    let n = cfg.state.unwrap_or(4);
    let a = hippo_legs(n)?;
    let d = nplr_decompose(n)?;
    let report = HippoReport {
        n,
        matrix: (0..n).map(|i| a.row(i).to_vec()).collect(),
        lambda: pairs(&d.system.lambda),
        p: pairs(&d.system.p_vec),
        b: pairs(&d.system.b_vec),
        normal_residual: d.normal_residual,
        reconstruction_residual: d.reconstruction_residual,
    };
    emit(to_json(&report), out)
}

#[derive(Serialize)]
struct FeatureKernel {
    feature: usize,
    dt: f64,
    taps: Vec<f64>,
    residual_imag: f64,
    liquid: Vec<LiquidKernel>,
    naive_gap: Option<f64>,
}

#[derive(Serialize)]
struct KernelReport {
    config: RunConfig,
    dims: Dims,
    mode: LiquidMode,
    kernels: Vec<FeatureKernel>,
    verified: Option<bool>,
    timing_ms: Vec<f64>,
}

pub fn cmd_kernel(cfg: &RunConfig, verify: bool, out: Option<&Path>) -> Result<Outcome, CliError> {
    let dims = cfg.dims((16, 1, 1024))?;
    let mut kernels = Vec::new();
    let mut timing_ms = Vec::new();
    for (f, (sys, dt)) in feature_systems(cfg, &dims)?.into_iter().enumerate() {
        let start = Instant::now();
        let main = kernel_genfn(&sys, dt, dims.length)?;
        let liquid = match cfg.mode {
            LiquidMode::None => Vec::new(),
            mode => liquid_kernel_set(&sys, dt, mode, cfg.order, dims.window.min(dims.length))?.kernels,
        };
        timing_ms.push(start.elapsed().as_secs_f64() * 1000.0);
        let naive_gap = if verify {
            let naive = kernel_naive(&discretize_structured(&sys, dt)?, dims.length)?;
            Some(relative_linf(&main.taps, &naive.taps))
        } else {
            None
        };
        kernels.push(FeatureKernel {
            feature: f,
            dt,
            taps: main.taps,
            residual_imag: main.residual_imag,
            liquid,
            naive_gap,
        });
    }
    let verified = verify.then(|| kernels.iter().all(|k| k.naive_gap.is_some_and(|g| g < KERNEL_TOL)));
    let report = KernelReport {
        config: cfg.clone(),
        dims,
        mode: cfg.mode,
        kernels,
        verified,
        timing_ms,
    };
    let outcome = emit(to_json(&report), out)?;
    if verified == Some(false) {
        return Err(CliError::Verification(format!(
            "generating-function kernel differs from the recurrent kernel by more than {KERNEL_TOL:e}"
        )));
    }
    Ok(outcome)
}

pub fn read_sequence_file(path: &Path) -> Result<SequenceBatch, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    seqio::parse_sequences(&bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Reference output for `--verify`: the recurrence for the linear part and,
/// for liquid modes, either the brute-force oracle (small inputs) or direct
/// summation of the liquid kernels.
fn reference_output(
    sys: &DplrSystem,
    dt: f64,
    u: &[f64],
    mode: LiquidMode,
    order: usize,
    window: usize,
) -> Result<Vec<f64>, CliError> {
    let d = discretize_structured(sys, dt)?;
    if mode != LiquidMode::None && u.len() <= ORACLE_MAX_LEN && order <= ORACLE_MAX_ORDER {
        return Ok(liquid_oracle(&d, u, order, window, mode)?);
    }
    let mut y = recurrent_s4(&d, u)?;
    if mode != LiquidMode::None {
        let set = liquid_kernel_set(sys, dt, mode, order, window)?;
        for k in &set.kernels {
            let v = correlation_signal(u, k.order)?;
            for (a, b) in y.iter_mut().zip(causal_conv_direct(&k.taps, &v.values)) {
                *a += b;
            }
        }
    }
    Ok(y)
}

pub fn cmd_convolve(cfg: &RunConfig, input: &Path, verify: bool, out: Option<&Path>) -> Result<Outcome, CliError> {
    let batch = read_sequence_file(input)?;
    if cfg.features.is_some_and(|h| h != batch.features) {
        return Err(CliError::Usage(format!(
            "input has {} features, configuration asks for {}",
            batch.features,
            cfg.features.unwrap_or(0)
        )));
    }
    let cfg = RunConfig {
        features: Some(batch.features),
        length: Some(batch.length),
        ..cfg.clone()
    };
    let dims = cfg.dims((16, 1, batch.length))?;
    let window = dims.window.min(dims.length);
    let systems = feature_systems(&cfg, &dims)?;
    let mut y = SequenceBatch::zeros(batch.batch, batch.length, batch.features);
    let mut worst: f64 = 0.0;
    for (f, (sys, dt)) in systems.iter().enumerate() {
        for b in 0..batch.batch {
            let u = batch.channel(b, f);
            let out_seq = forward_liquid_s4(sys, *dt, &u, cfg.mode, cfg.order, window)?;
            if verify {
                let r = reference_output(sys, *dt, &u, cfg.mode, cfg.order, window)?;
                let scale = r.iter().map(|v| v.abs()).fold(1.0, f64::max);
                let gap = out_seq.iter().zip(&r).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max) / scale;
                worst = worst.max(gap);
            }
            y.set_channel(b, f, &out_seq);
        }
    }
    let outcome = match out {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => {
            let text = seqio::encode_csv(&y)
                .ok_or_else(|| CliError::Usage("CSV output holds single-feature sequences only".into()))?;
            write_file(p, text.as_bytes())?;
            Outcome::default()
        }
        Some(p) => {
            write_file(p, &seqio::encode_binary(&y))?;
            Outcome::default()
        }
        None => Outcome {
            stdout: seqio::encode_csv(&y).ok_or_else(|| CliError::Usage("multi-feature output needs --out".into()))?,
        },
    };
    if verify && worst > KERNEL_TOL {
        return Err(CliError::Verification(format!(
            "convolution differs from the reference by {worst:e} (tolerance {KERNEL_TOL:e})"
        )));
    }
    Ok(outcome)
}

pub fn cmd_verify(cfg: &RunConfig, poison: bool, out: Option<&Path>) -> Result<(Outcome, VerifyReport), CliError> {
    let dims = cfg.dims((16, 1, 256))?;
    let vcfg = VerifyConfig {
        seed: cfg.seed,
        state_size: dims.state,
        length: dims.length,
        dt: cfg.verify_dt,
        max_order: cfg.order.clamp(2, 4),
        window: dims.window,
        poison,
    };
    let report = run_verification(&vcfg)?;
    let outcome = emit(to_json(&report), out)?;
    Ok((outcome, report))
}

pub fn cmd_bench(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome, CliError> {
    let dims = cfg.dims((64, 1, 1024))?;
    let sys = nplr_decompose(dims.state)?.with_random_output(cfg.seed)?;
    let opts = BenchOptions {
        lengths: cfg.bench_lengths.clone(),
        include_naive: cfg.bench_naive,
        liquid_mode: cfg.mode,
        max_order: cfg.order,
        window: cfg.window.unwrap_or(64),
        budget_ms: cfg.bench_budget_ms,
        ..BenchOptions::default()
    };
    let report = bench_kernel(&sys, &opts)?;
    let mut csv = String::from("path,L,N,millis\n");
    for r in &report.records {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    if let Some(p) = out {
        write_file(p, to_json(&report).as_bytes())?;
    }
    Ok(Outcome { stdout: csv })
}

pub fn cmd_train_demo(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome, CliError> {
    let dims = cfg.dims((4, 4, 32))?;
    let report = train_demo(
        &cfg.model_config(&dims),
        &cfg.task(&dims),
        &cfg.train_config(),
        cfg.seed,
    )?;
    emit(to_json(&report), out)
}
