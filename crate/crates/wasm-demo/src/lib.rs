//! Browser bindings: a TV deblurring run on the disk phantom, the
//! iteration-count schedule, and the two-variable Lasso toy.
//!
//! Timing-based helpers of the core crate are avoided since
//! `std::time::Instant` is unavailable on `wasm32-unknown-unknown`.

use wasm_bindgen::prelude::*;

use regcomplex::diagnostics::segment_distance;
use regcomplex::experiments::{
    generate_data, make_phantom, tv_deblur_operators, NoiseKind, NoiseModel, PhantomKind,
};
use regcomplex::schedules::{alpha_of, n_of, paper_grid, Schedule};
use regcomplex::vector::dist;
use regcomplex::{
    estimate_norm, forward_backward_observed, make_stack, pdps_observed, DenseMatrix, Functional, LinearMap,
    ProblemSpec, StepParams,
};

fn js_err(e: regcomplex::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct DeblurRun {
    width: usize,
    height: usize,
    truth: Vec<f64>,
    data: Vec<f64>,
    reconstruction: Vec<f64>,
    alpha: f64,
    iterations: usize,
    normalized_dist: f64,
    data_normalized_dist: f64,
}

#[wasm_bindgen]
impl DeblurRun {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn reconstruction(&self) -> Vec<f64> {
        self.reconstruction.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    #[wasm_bindgen(getter, js_name = normalizedDist)]
    pub fn normalized_dist(&self) -> f64 {
        self.normalized_dist
    }

    #[wasm_bindgen(getter, js_name = dataNormalizedDist)]
    pub fn data_normalized_dist(&self) -> f64 {
        self.data_normalized_dist
    }
}

/// Blur (std 2, 7×7) the noisy disk phantom and reconstruct with PDPS from
/// zero, `α = δ̆/2`. `iterations = 0` uses the iterated-log schedule.
#[wasm_bindgen]
pub fn deblur(size: usize, delta_breve: f64, iterations: usize, seed: u64) -> Result<DeblurRun, JsError> {
    let (img, _) = make_phantom(&PhantomKind::Disk, size, size).map_err(js_err)?;
    let (blur, grad) = tv_deblur_operators(size, size, 2.0, 7).map_err(js_err)?;
    let schedule = Schedule::iterated_log();
    let alpha = alpha_of(&schedule, delta_breve).map_err(js_err)?;
    let n = if iterations == 0 {
        n_of(&schedule, delta_breve).map_err(js_err)?
    } else {
        iterations
    };
    let data = generate_data(
        &img.values,
        &blur,
        &NoiseModel {
            kind: NoiseKind::PixelwiseGaussianThenBlur,
            level: delta_breve,
            seed,
        },
    )
    .map_err(js_err)?;
    let spec = ProblemSpec::new(blur.clone(), data.b_delta.clone(), Functional::isotropic_tv(alpha).map_err(js_err)?, Some(grad.clone()))
        .map_err(js_err)?;
    let form = spec.primal_dual_form().map_err(js_err)?;
    let k_norm = estimate_norm(&make_stack(blur, grad).map_err(js_err)?, 1e-10, 10_000, 0)
        .map_err(js_err)?
        .norm;
    let params = StepParams::pdps_default(k_norm).map_err(js_err)?;
    let trace = pdps_observed(
        &form,
        &params,
        &vec![0.0; img.len()],
        &vec![0.0; form.k.codomain_dim()],
        n,
        None,
        |_, _, _| {},
    )
    .map_err(js_err)?;
    let scale = regcomplex::vector::norm(&img.values);
    Ok(DeblurRun {
        width: size,
        height: size,
        normalized_dist: dist(&trace.final_iterate, &img.values) / scale,
        data_normalized_dist: dist(&data.b_delta, &img.values) / scale,
        truth: img.values,
        data: data.b_delta,
        reconstruction: trace.final_iterate,
        alpha,
        iterations: n,
    })
}

/// Flattened `(δ̆, α, N)` triples of the iterated-log schedule on the
/// grid `{1, 0.5}·10^{−p}`, `p ≤ max_exp`.
#[wasm_bindgen]
pub fn schedule_table(max_exp: u32) -> Result<Vec<f64>, JsError> {
    let s = Schedule::iterated_log();
    let mut out = Vec::new();
    for d in paper_grid(max_exp.min(8)) {
        out.push(d);
        out.push(alpha_of(&s, d).map_err(js_err)?);
        out.push(n_of(&s, d).map_err(js_err)? as f64);
    }
    Ok(out)
}

/// `A = [[1, 1]]`, `b = 1 − δ`, `α = δ`: forward-backward from zero for
/// `N = ⌈δ^{−1.5}⌉` steps. Returns `(x₁, x₂, dist to the solution segment, N)`.
#[wasm_bindgen]
pub fn lasso_toy(delta: f64) -> Result<Vec<f64>, JsError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(JsError::new("delta must lie in (0, 1]"));
    }
    let schedule = Schedule::lasso_default();
    let alpha = alpha_of(&schedule, delta).map_err(js_err)?;
    let n = n_of(&schedule, delta).map_err(js_err)?.min(10_000_000);
    let a = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).map_err(js_err)?;
    let spec = ProblemSpec::new(LinearMap::dense(a), vec![1.0 - delta], Functional::l1(alpha).map_err(js_err)?, None)
        .map_err(js_err)?;
    let params = StepParams::forward_backward(0.99 / 2.0, 2.0).map_err(js_err)?;
    let (x, _) = forward_backward_observed(&spec, &params, &[0.0, 0.0], n, |_, _, _| {}).map_err(js_err)?;
    Ok(vec![x[0], x[1], segment_distance(&[1.0, 0.0], &[0.0, 1.0], &x), n as f64])
}
