//! Wall-clock measurements of the kernel paths and their growth with `L`.

use serde::Serialize;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::kernel::{kernel_genfn, kernel_naive, relative_linf};
use crate::liquid::{liquid_kernel_set_discrete, LiquidMode};
use crate::ssm::{discretize_structured, DplrSystem};

/// One `path,L,N,millis` line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub path: String,
    pub length: usize,
    pub state: usize,
    pub millis: f64,
}

impl BenchRecord {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{:.6}", self.path, self.length, self.state, self.millis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchOptions {
    pub lengths: Vec<usize>,
    pub dt: f64,
    pub include_naive: bool,
    pub liquid_mode: LiquidMode,
    pub max_order: usize,
    pub window: usize,
    /// Each measurement repeats until this much time has been spent and
    /// keeps the fastest run.
    pub budget_ms: f64,
    pub max_repeats: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            lengths: vec![1024, 2048, 4096, 8192, 16384],
            dt: 0.01,
            include_naive: true,
            liquid_mode: LiquidMode::Kb,
            max_order: 3,
            window: 64,
            budget_ms: 150.0,
            max_repeats: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub state_size: usize,
    pub records: Vec<BenchRecord>,
    pub genfn_exponent: f64,
    pub naive_exponent: Option<f64>,
    /// Slowest over fastest liquid-kernel build across the sweep.
    pub liquid_ratio: Option<f64>,
    /// Largest relative L∞ gap between the two kernel paths.
    pub max_path_gap: Option<f64>,
}

/// Fastest of repeated runs, in milliseconds.
pub fn time_min<T>(budget_ms: f64, max_repeats: usize, mut f: impl FnMut() -> T) -> f64 {
    let budget = Duration::from_secs_f64(budget_ms / 1000.0);
    let start = Instant::now();
    let mut best = f64::INFINITY;
    for _ in 0..max_repeats.max(1) {
        let t = Instant::now();
        std::hint::black_box(f());
        best = best.min(t.elapsed().as_secs_f64() * 1000.0);
        if start.elapsed() >= budget {
            break;
        }
    }
    best
}

/// Least-squares slope of `log(millis)` against `log(L)`.
pub fn growth_exponent(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|(l, _)| (*l as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, t)| t.max(1e-9).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn bench_kernel(sys: &DplrSystem, opts: &BenchOptions) -> Result<BenchReport> {
    if opts.lengths.is_empty() {
        return Err(Error::InvalidDimension("benchmark needs at least one length".into()));
    }
    let n = sys.state_size();
    let d = discretize_structured(sys, opts.dt)?;
    let mut records = Vec::new();
    let mut genfn_pts = Vec::new();
    let mut naive_pts = Vec::new();
    let mut liquid_times = Vec::new();
    let mut max_gap: Option<f64> = None;

    for &l in &opts.lengths {
        let genfn = kernel_genfn(sys, opts.dt, l)?;
        let t = time_min(opts.budget_ms, opts.max_repeats, || kernel_genfn(sys, opts.dt, l));
        genfn_pts.push((l, t));
        records.push(record("genfn", l, n, t));

        if opts.include_naive {
            let naive = kernel_naive(&d, l)?;
            let gap = relative_linf(&genfn.taps, &naive.taps);
            max_gap = Some(max_gap.map_or(gap, |g| g.max(gap)));
            let t = time_min(opts.budget_ms, opts.max_repeats, || kernel_naive(&d, l));
            naive_pts.push((l, t));
            records.push(record("naive", l, n, t));
        }

        if opts.liquid_mode != LiquidMode::None {
            let window = opts.window.min(l);
            let t = time_min(opts.budget_ms, opts.max_repeats, || {
                liquid_kernel_set_discrete(&d, opts.liquid_mode, opts.max_order, window)
            });
            liquid_times.push(t);
            records.push(record(&format!("liquid-{}", opts.liquid_mode), l, n, t));
        }
    }

    let liquid_ratio = (!liquid_times.is_empty()).then(|| {
        let hi = liquid_times.iter().copied().fold(0.0, f64::max);
        let lo = liquid_times.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo.max(1e-9)
    });
    Ok(BenchReport {
        state_size: n,
        records,
        genfn_exponent: growth_exponent(&genfn_pts).unwrap_or(0.0),
        naive_exponent: growth_exponent(&naive_pts),
        liquid_ratio,
        max_path_gap: max_gap,
    })
}

fn record(path: &str, length: usize, state: usize, millis: f64) -> BenchRecord {
    BenchRecord {
        path: path.to_string(),
        length,
        state,
        millis,
    }
}
