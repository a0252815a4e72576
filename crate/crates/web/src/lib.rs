//! Browser bindings for three small demos: the 5-cycle fixed point,
//! image restoration and T-versus-S convergence.
//!
//! Each demo is a plain function returning `Result<_, String>` so it can be
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use mrf_contract::maps::{decode, solve, MapKind, SolveParams};
use mrf_contract::problems::{add_gaussian_noise, cycle_example, piecewise_constant_image, restoration_model, rmse};
use mrf_contract::verify::{random_model, RandomModelSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn map_kind(name: &str) -> Result<MapKind, String> {
    name.parse().map_err(|e: mrf_contract::Error| e.to_string())
}

/// Fixed point of the 5-cycle example: per-vertex beliefs for both labels
/// followed by the decoded 1-based labels, `[b(1,1), b(1,2), ..., x1..x5]`.
pub fn cycle(p: f64, repulsive: bool, map: &str) -> Result<Vec<f64>, String> {
    let model = cycle_example(repulsive);
    let report = solve(&model, map_kind(map)?, &SolveParams::new(p, 1e-12, 1_000_000)).map_err(|e| e.to_string())?;
    let mut out = report.field.values().to_vec();
    out.extend(decode(&report.field).one_based().into_iter().map(|v| v as f64));
    Ok(out)
}

/// Clean, noisy and restored pixels of a synthetic image, with RMSEs.
#[wasm_bindgen]
pub struct Restoration {
    width: usize,
    height: usize,
    clean: Vec<u8>,
    noisy: Vec<u8>,
    restored: Vec<u8>,
    rmse_noisy: f64,
    rmse_restored: f64,
}

#[wasm_bindgen]
impl Restoration {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn clean(&self) -> Vec<u8> {
        self.clean.clone()
    }

    pub fn noisy(&self) -> Vec<u8> {
        self.noisy.clone()
    }

    pub fn restored(&self) -> Vec<u8> {
        self.restored.clone()
    }

    #[wasm_bindgen(js_name = rmseNoisy)]
    pub fn rmse_noisy(&self) -> f64 {
        self.rmse_noisy
    }

    #[wasm_bindgen(js_name = rmseRestored)]
    pub fn rmse_restored(&self) -> f64 {
        self.rmse_restored
    }
}

#[allow(clippy::too_many_arguments)]
pub fn restoration(
    size: usize,
    sigma: f64,
    lambda: f64,
    cap: f64,
    p: f64,
    iterations: usize,
    map: &str,
    seed: u64,
) -> Result<Restoration, String> {
    let clean = piecewise_constant_image(size, size).map_err(|e| e.to_string())?;
    let noisy = add_gaussian_noise(&clean, sigma, seed).map_err(|e| e.to_string())?;
    let model = restoration_model(&noisy, lambda, cap).map_err(|e| e.to_string())?;
    let report = solve(&model, map_kind(map)?, &SolveParams::new(p, f64::MIN_POSITIVE, iterations))
        .map_err(|e| e.to_string())?;
    let restored: Vec<u8> = decode(&report.field).0.iter().map(|&v| v as u8).collect();
    let restored_img = mrf_contract::pnm::GrayImage::new(size, size, restored.clone()).map_err(|e| e.to_string())?;
    Ok(Restoration {
        width: size,
        height: size,
        rmse_noisy: rmse(&noisy, &clean).map_err(|e| e.to_string())?,
        rmse_restored: rmse(&restored_img, &clean).map_err(|e| e.to_string())?,
        clean: clean.pixels().to_vec(),
        noisy: noisy.pixels().to_vec(),
        restored,
    })
}

/// Residual histories of T and S on one random model, each padded with
/// zeros to `iterations` entries and concatenated: `[T..., S...]`.
pub fn residual_curves(p: f64, iterations: usize, seed: u64) -> Result<Vec<f64>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = RandomModelSpec { max_n: 12, max_k: 4, ..RandomModelSpec::default() };
    let model = random_model(&mut rng, &spec);
    let mut out = Vec::with_capacity(2 * iterations);
    for kind in [MapKind::Diffusion, MapKind::Control] {
        let report =
            solve(&model, kind, &SolveParams::new(p, f64::MIN_POSITIVE, iterations)).map_err(|e| e.to_string())?;
        let mut r = report.residuals;
        r.resize(iterations, 0.0);
        out.extend(r);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = cycleFixedPoint)]
pub fn cycle_js(p: f64, repulsive: bool, map: &str) -> Result<Vec<f64>, JsError> {
    cycle(p, repulsive, map).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = restore)]
#[allow(clippy::too_many_arguments)]
pub fn restoration_js(
    size: usize,
    sigma: f64,
    lambda: f64,
    cap: f64,
    p: f64,
    iterations: usize,
    map: &str,
    seed: u64,
) -> Result<Restoration, JsError> {
    restoration(size, sigma, lambda, cap, p, iterations, map, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = residualCurves)]
pub fn residual_curves_js(p: f64, iterations: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    residual_curves(p, iterations, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_decodes_both_examples() {
        let a = cycle(0.1, false, "T").unwrap();
        assert_eq!(&a[10..], &[2.0; 5]);
        let r = cycle(0.1, true, "s").unwrap();
        assert_eq!(&r[10..], &[2.0, 1.0, 2.0, 2.0, 1.0]);
    }

    #[test]
    fn unknown_map_is_an_error() {
        assert!(cycle(0.1, false, "x").is_err());
    }

    #[test]
    fn curves_have_requested_length_and_stay_under_q() {
        let c = residual_curves(0.2, 30, 5).unwrap();
        assert_eq!(c.len(), 60);
        for half in c.chunks(30) {
            for w in half.windows(2) {
                assert!(w[1] <= 0.8 * w[0] + 1e-12);
            }
        }
    }
}
