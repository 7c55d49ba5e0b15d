//! Linear operators on flattened real vectors.
//!
//! Images are stored row-major (`index = row * width + col`). The gradient
//! codomain holds all horizontal differences first, then all vertical ones.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{check_len, Error, Result};
use crate::rng::NoiseRng;
use crate::vector::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    Dense,
    Blur2D,
    Grad2D,
    Stack,
    Centring,
    Identity,
    Zero,
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub width: usize,
    pub height: usize,
}

impl GridDims {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Disjoint pixel-index sets on a grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatAreaCollection {
    pub regions: Vec<Vec<usize>>,
}

impl FlatAreaCollection {
    pub fn new(regions: Vec<Vec<usize>>) -> Self {
        Self { regions }
    }

    pub fn validate(&self, pixels: usize) -> Result<()> {
        let mut seen = vec![false; pixels];
        for (r, region) in self.regions.iter().enumerate() {
            if region.is_empty() {
                return Err(Error::InvalidParameter(format!("region {r} is empty")));
            }
            for &i in region {
                if i >= pixels {
                    return Err(Error::InvalidParameter(format!(
                        "region {r} index {i} outside grid of {pixels} pixels"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidParameter(format!(
                        "pixel {i} belongs to more than one region"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.regions.iter().map(Vec::len).sum()
    }
}

/// Separable Gaussian convolution with half-sample symmetric boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBlur {
    dims: GridDims,
    taps: Vec<f64>,
    // source index for (position, tap) along each axis, reflected at the border
    col_index: Vec<usize>,
    row_index: Vec<usize>,
}

impl GaussianBlur {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// The full 2-D kernel, row-major `window × window`.
    pub fn kernel(&self) -> Vec<f64> {
        let w = self.taps.len();
        let mut k = Vec::with_capacity(w * w);
        for a in &self.taps {
            for b in &self.taps {
                k.push(a * b);
            }
        }
        k
    }

    fn reflect(mut i: isize, n: isize) -> usize {
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - 1 - i;
            } else {
                return i as usize;
            }
        }
    }

    fn index_table(n: usize, window: usize) -> Vec<usize> {
        let r = (window / 2) as isize;
        let mut t = Vec::with_capacity(n * window);
        for i in 0..n as isize {
            for k in 0..window as isize {
                t.push(Self::reflect(i + k - r, n as isize));
            }
        }
        t
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let GridDims { width, height } = self.dims;
        let w = self.taps.len();
        let mut tmp = vec![0.0; width * height];
        for r in 0..height {
            let src = &x[r * width..(r + 1) * width];
            for c in 0..width {
                let idx = &self.col_index[c * w..(c + 1) * w];
                tmp[r * width + c] = idx.iter().zip(&self.taps).map(|(&i, k)| k * src[i]).sum();
            }
        }
        for r in 0..height {
            let idx = &self.row_index[r * w..(r + 1) * w];
            let o = &mut out[r * width..(r + 1) * width];
            o.iter_mut().for_each(|v| *v = 0.0);
            for (&src_row, k) in idx.iter().zip(&self.taps) {
                let s = &tmp[src_row * width..(src_row + 1) * width];
                for (ov, sv) in o.iter_mut().zip(s) {
                    *ov += k * sv;
                }
            }
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        let GridDims { width, height } = self.dims;
        let w = self.taps.len();
        let mut tmp = vec![0.0; width * height];
        for r in 0..height {
            let idx = &self.row_index[r * w..(r + 1) * w];
            let yr = &y[r * width..(r + 1) * width];
            for (&dst_row, k) in idx.iter().zip(&self.taps) {
                let t = &mut tmp[dst_row * width..(dst_row + 1) * width];
                for (tv, yv) in t.iter_mut().zip(yr) {
                    *tv += k * yv;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..height {
            let o = &mut out[r * width..(r + 1) * width];
            for c in 0..width {
                let v = tmp[r * width + c];
                let idx = &self.col_index[c * w..(c + 1) * w];
                for (&i, k) in idx.iter().zip(&self.taps) {
                    o[i] += k * v;
                }
            }
        }
    }
}

/// Per-region mean subtraction restricted to the union of the regions.
#[derive(Debug, Clone, PartialEq)]
pub struct Centring {
    domain: usize,
    regions: Vec<Vec<usize>>,
}

impl Centring {
    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let mut pos = 0;
        for region in &self.regions {
            let mean = region.iter().map(|&i| x[i]).sum::<f64>() / region.len() as f64;
            for &i in region {
                out[pos] = x[i] - mean;
                pos += 1;
            }
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut pos = 0;
        for region in &self.regions {
            let n = region.len();
            let block = &y[pos..pos + n];
            let mean = block.iter().sum::<f64>() / n as f64;
            for (&i, v) in region.iter().zip(block) {
                out[i] = v - mean;
            }
            pos += n;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    Identity(usize),
    Zero { domain: usize, codomain: usize },
    Dense(DenseMatrix),
    Blur2D(GaussianBlur),
    Grad2D(GridDims),
    Stack(Box<LinearMap>, Box<LinearMap>),
    Centring(Centring),
    Scaled(f64, Box<LinearMap>),
}

impl LinearMap {
    pub fn identity(n: usize) -> Self {
        LinearMap::Identity(n)
    }

    pub fn zero(domain: usize, codomain: usize) -> Self {
        LinearMap::Zero { domain, codomain }
    }

    pub fn dense(m: DenseMatrix) -> Self {
        LinearMap::Dense(m)
    }

    pub fn scaled(self, c: f64) -> Self {
        LinearMap::Scaled(c, Box::new(self))
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            LinearMap::Identity(_) => OperatorKind::Identity,
            LinearMap::Zero { .. } => OperatorKind::Zero,
            LinearMap::Dense(_) => OperatorKind::Dense,
            LinearMap::Blur2D(_) => OperatorKind::Blur2D,
            LinearMap::Grad2D(_) => OperatorKind::Grad2D,
            LinearMap::Stack(..) => OperatorKind::Stack,
            LinearMap::Centring(_) => OperatorKind::Centring,
            LinearMap::Scaled(..) => OperatorKind::Scaled,
        }
    }

    pub fn domain_dim(&self) -> usize {
        match self {
            LinearMap::Identity(n) => *n,
            LinearMap::Zero { domain, .. } => *domain,
            LinearMap::Dense(m) => m.cols(),
            LinearMap::Blur2D(b) => b.dims.len(),
            LinearMap::Grad2D(d) => d.len(),
            LinearMap::Stack(a, _) => a.domain_dim(),
            LinearMap::Centring(c) => c.domain,
            LinearMap::Scaled(_, op) => op.domain_dim(),
        }
    }

    pub fn codomain_dim(&self) -> usize {
        match self {
            LinearMap::Identity(n) => *n,
            LinearMap::Zero { codomain, .. } => *codomain,
            LinearMap::Dense(m) => m.rows(),
            LinearMap::Blur2D(b) => b.dims.len(),
            LinearMap::Grad2D(d) => 2 * d.len(),
            LinearMap::Stack(a, q) => a.codomain_dim() + q.codomain_dim(),
            LinearMap::Centring(c) => c.regions.iter().map(Vec::len).sum(),
            LinearMap::Scaled(_, op) => op.codomain_dim(),
        }
    }

    pub fn as_dense(&self) -> Option<&DenseMatrix> {
        match self {
            LinearMap::Dense(m) => Some(m),
            _ => None,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("apply", self.domain_dim(), x.len())?;
        let mut out = vec![0.0; self.codomain_dim()];
        self.apply_unchecked(x, &mut out);
        Ok(out)
    }

    pub fn adjoint_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("adjoint_apply", self.codomain_dim(), y.len())?;
        let mut out = vec![0.0; self.domain_dim()];
        self.adjoint_unchecked(y, &mut out);
        Ok(out)
    }

    /// Writes `op·x` into `out`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("apply_into input", self.domain_dim(), x.len())?;
        check_len("apply_into output", self.codomain_dim(), out.len())?;
        self.apply_unchecked(x, out);
        Ok(())
    }

    /// Writes `opᵀ·y` into `out`.
    pub fn adjoint_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("adjoint_into input", self.codomain_dim(), y.len())?;
        check_len("adjoint_into output", self.domain_dim(), out.len())?;
        self.adjoint_unchecked(y, out);
        Ok(())
    }

    /// `op*·op·x`
    pub fn normal_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let ax = self.apply(x)?;
        self.adjoint_apply(&ax)
    }

    fn apply_unchecked(&self, x: &[f64], out: &mut [f64]) {
        match self {
            LinearMap::Identity(_) => out.copy_from_slice(x),
            LinearMap::Zero { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            LinearMap::Dense(m) => m.matvec_into(x, out),
            LinearMap::Blur2D(b) => b.apply_into(x, out),
            LinearMap::Grad2D(d) => grad_into(*d, x, out),
            LinearMap::Stack(a, q) => {
                let (top, bottom) = out.split_at_mut(a.codomain_dim());
                a.apply_unchecked(x, top);
                q.apply_unchecked(x, bottom);
            }
            LinearMap::Centring(c) => c.apply_into(x, out),
            LinearMap::Scaled(c, op) => {
                op.apply_unchecked(x, out);
                out.iter_mut().for_each(|v| *v *= c);
            }
        }
    }

    fn adjoint_unchecked(&self, y: &[f64], out: &mut [f64]) {
        match self {
            LinearMap::Identity(_) => out.copy_from_slice(y),
            LinearMap::Zero { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            LinearMap::Dense(m) => m.matvec_t_into(y, out),
            LinearMap::Blur2D(b) => b.adjoint_into(y, out),
            LinearMap::Grad2D(d) => grad_adjoint_into(*d, y, out),
            LinearMap::Stack(a, q) => {
                let (top, bottom) = y.split_at(a.codomain_dim());
                a.adjoint_unchecked(top, out);
                let mut tmp = vec![0.0; out.len()];
                q.adjoint_unchecked(bottom, &mut tmp);
                out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            }
            LinearMap::Centring(c) => c.adjoint_into(y, out),
            LinearMap::Scaled(c, op) => {
                op.adjoint_unchecked(y, out);
                out.iter_mut().for_each(|v| *v *= c);
            }
        }
    }
}

fn grad_into(d: GridDims, x: &[f64], out: &mut [f64]) {
    let GridDims { width, height } = d;
    let n = width * height;
    let (gx, gy) = out.split_at_mut(n);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            gx[i] = if c + 1 < width { x[i + 1] - x[i] } else { 0.0 };
            gy[i] = if r + 1 < height { x[i + width] - x[i] } else { 0.0 };
        }
    }
}

// Negative discrete divergence.
fn grad_adjoint_into(d: GridDims, y: &[f64], out: &mut [f64]) {
    let GridDims { width, height } = d;
    let n = width * height;
    let (gx, gy) = y.split_at(n);
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if c + 1 < width {
                out[i] -= gx[i];
                out[i + 1] += gx[i];
            }
            if r + 1 < height {
                out[i] -= gy[i];
                out[i + width] += gy[i];
            }
        }
    }
}

/// Normalised Gaussian blur with kernel `exp(-(i²+j²)/(2·std²))` on a
/// `window × window` support.
pub fn make_gaussian_blur(width: usize, height: usize, std: f64, window: usize) -> Result<LinearMap> {
    let dims = GridDims::new(width, height)?;
    if window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "blur window must be odd, got {window}"
        )));
    }
    if !(std > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "blur std must be positive, got {std}"
        )));
    }
    let r = (window / 2) as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * std * std)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    Ok(LinearMap::Blur2D(GaussianBlur {
        dims,
        col_index: GaussianBlur::index_table(width, window),
        row_index: GaussianBlur::index_table(height, window),
        taps,
    }))
}

pub fn make_grad2d(width: usize, height: usize) -> Result<LinearMap> {
    Ok(LinearMap::Grad2D(GridDims::new(width, height)?))
}

/// `x ↦ (a·x, q·x)`
pub fn make_stack(a: LinearMap, q: LinearMap) -> Result<LinearMap> {
    check_len("make_stack domain", a.domain_dim(), q.domain_dim())?;
    Ok(LinearMap::Stack(Box::new(a), Box::new(q)))
}

/// The centring operator of a flat-area collection. Output is ordered by
/// region, then by the pixel order inside each region.
pub fn make_centring(collection: &FlatAreaCollection, width: usize, height: usize) -> Result<LinearMap> {
    let dims = GridDims::new(width, height)?;
    collection.validate(dims.len())?;
    Ok(LinearMap::Centring(Centring {
        domain: dims.len(),
        regions: collection.regions.clone(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration on `op*op` from a seeded Gaussian start vector. Stops when
/// successive Rayleigh quotients (estimates of `‖op‖²`) differ by less than
/// `tol · max(1, λ)`.
pub fn estimate_norm(op: &LinearMap, tol: f64, max_iter: usize, seed: u64) -> Result<NormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let n = op.domain_dim();
    let mut v = NoiseRng::new(seed).normal_vec(n);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut av = vec![0.0; op.codomain_dim()];
    let mut w = vec![0.0; n];
    let mut lambda_prev = f64::NAN;
    let mut lambda = 0.0;
    for it in 1..=max_iter.max(1) {
        op.apply_unchecked(&v, &mut av);
        op.adjoint_unchecked(&av, &mut w);
        lambda = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(NormEstimate {
                norm: 0.0,
                converged: true,
                iterations: it,
            });
        }
        if (lambda - lambda_prev).abs() < tol * lambda.max(1.0) {
            return Ok(NormEstimate {
                norm: lambda.max(0.0).sqrt(),
                converged: true,
                iterations: it,
            });
        }
        lambda_prev = lambda;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    Ok(NormEstimate {
        norm: lambda.max(0.0).sqrt(),
        converged: false,
        iterations: max_iter.max(1),
    })
}
