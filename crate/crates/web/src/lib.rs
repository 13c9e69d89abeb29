//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each export wraps a plain function that also runs natively, so the logic is
//! tested without a browser.

use wasm_bindgen::prelude::*;

use liquid_s4::conv::{causal_conv, LiquidS4Kernels};
use liquid_s4::liquid::{apply_liquid, LiquidMode};
use liquid_s4::ssm::nplr_decompose;

const MAX_STATE: usize = 256;
const MAX_LENGTH: usize = 1 << 14;

fn check(n: usize, length: usize) -> Result<(), String> {
    if n == 0 || n > MAX_STATE {
        return Err(format!("state size must be in 1..={MAX_STATE}"));
    }
    if length > MAX_LENGTH {
        return Err(format!("length must be at most {MAX_LENGTH}"));
    }
    Ok(())
}

/// Eigenvalues of the LegS normal part as `[re0, im0, re1, im1, …]`.
pub fn spectrum(n: usize) -> Result<Vec<f64>, String> {
    check(n, 0)?;
    let d = nplr_decompose(n).map_err(|e| e.to_string())?;
    Ok(d.system.lambda.iter().flat_map(|z| [z.re, z.im]).collect())
}

/// S4 kernel taps for a LegS system with a seeded output row.
pub fn kernel_taps(n: usize, dt: f64, length: usize, seed: u32) -> Result<Vec<f64>, String> {
    check(n, length)?;
    let sys = nplr_decompose(n)
        .and_then(|d| d.with_random_output(u64::from(seed)))
        .map_err(|e| e.to_string())?;
    let k = LiquidS4Kernels::build(&sys, dt, length.max(1), LiquidMode::None, 2, 1).map_err(|e| e.to_string())?;
    Ok(k.main.taps)
}

/// Linear and liquid parts of the response to `signal`, concatenated: the
/// first half is `K̄ * u`, the second the liquid contribution.
pub fn response(
    n: usize,
    dt: f64,
    mode: &str,
    order: usize,
    window: usize,
    seed: u32,
    signal: &[f64],
) -> Result<Vec<f64>, String> {
    check(n, signal.len())?;
    if signal.is_empty() {
        return Ok(Vec::new());
    }
    let mode: LiquidMode = mode.parse().map_err(|e: liquid_s4::Error| e.to_string())?;
    let sys = nplr_decompose(n)
        .and_then(|d| d.with_random_output(u64::from(seed)))
        .map_err(|e| e.to_string())?;
    let k = LiquidS4Kernels::build(&sys, dt, signal.len(), mode, order, window.max(1)).map_err(|e| e.to_string())?;
    let mut out = causal_conv(&k.main.taps, signal);
    match &k.liquid {
        Some(set) => out.extend(apply_liquid(set, signal).map_err(|e| e.to_string())?),
        None => out.extend(std::iter::repeat_n(0.0, signal.len())),
    }
    Ok(out)
}

#[wasm_bindgen(js_name = hippoSpectrum)]
pub fn hippo_spectrum_js(n: usize) -> Result<Vec<f64>, JsError> {
    spectrum(n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = kernelTaps)]
pub fn kernel_taps_js(n: usize, dt: f64, length: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    kernel_taps(n, dt, length, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = liquidResponse)]
pub fn liquid_response_js(
    n: usize,
    dt: f64,
    mode: &str,
    order: usize,
    window: usize,
    seed: u32,
    signal: &[f64],
) -> Result<Vec<f64>, JsError> {
    response(n, dt, mode, order, window, seed, signal).map_err(|e| JsError::new(&e))
}
