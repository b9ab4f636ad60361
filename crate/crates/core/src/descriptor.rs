//! Dense-grid gradient-histogram descriptor for symbol crops and PCA
//! reduction of feature matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureSet, FeatureSource, RowMatrix};
use crate::error::{Error, Result};
use crate::segment::BinaryImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptorParams {
    /// Side of the square the glyph is stretched to.
    pub resize: usize,
    /// Keypoints per axis.
    pub grid: usize,
    /// Spatial histogram cells per axis around each keypoint.
    pub subcells: usize,
    pub orientation_bins: usize,
    /// Gaussian blur applied after nearest-neighbour resizing.
    pub smoothing_sigma: f64,
}

impl Default for GridDescriptorParams {
    fn default() -> Self {
        Self {
            resize: 64,
            grid: 4,
            subcells: 4,
            orientation_bins: 8,
            smoothing_sigma: 1.0,
        }
    }
}

impl GridDescriptorParams {
    pub fn validate(&self) -> Result<()> {
        if self.resize == 0 || self.grid == 0 || self.subcells == 0 || self.orientation_bins == 0 {
            return Err(Error::Param("descriptor counts must all be >= 1".into()));
        }
        if self.resize < self.grid {
            return Err(Error::Param(format!(
                "resize {} smaller than grid {}",
                self.resize, self.grid
            )));
        }
        if !(self.smoothing_sigma >= 0.0) {
            return Err(Error::Param("smoothing sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.grid * self.grid * self.subcells * self.subcells * self.orientation_bins
    }
}

const CLIP: f64 = 0.2;

/// Tight box around the ink, `(x0, y0, x1, y1)` exclusive.
fn ink_bounds(crop: &BinaryImage) -> Option<(usize, usize, usize, usize)> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..crop.height() {
        for x in 0..crop.width() {
            if crop.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    (x0 != usize::MAX).then_some((x0, y0, x1, y1))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable blur; pixels outside the image count as background.
fn blur(img: &[f64], side: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return img.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let s = side as i64;
    let mut tmp = vec![0.0; side * side];
    for y in 0..s {
        for x in 0..s {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let xx = x + i as i64 - r;
                if (0..s).contains(&xx) {
                    acc += w * img[(y * s + xx) as usize];
                }
            }
            tmp[(y * s + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; side * side];
    for y in 0..s {
        for x in 0..s {
            let mut acc = 0.0;
            for (i, w) in kernel.iter().enumerate() {
                let yy = y + i as i64 - r;
                if (0..s).contains(&yy) {
                    acc += w * tmp[(yy * s + x) as usize];
                }
            }
            out[(y * s + x) as usize] = acc;
        }
    }
    out
}

/// Descriptor of one symbol crop.
///
/// The ink is cropped tight, stretched to `resize x resize` by nearest
/// neighbour and blurred. Gradients come from central differences. At each
/// of the `grid x grid` upright keypoints a SIFT-style histogram of
/// `subcells x subcells x orientation_bins` is accumulated with trilinear
/// interpolation and Gaussian weighting, normalized, clipped at 0.2 and
/// renormalized. A crop without ink yields the zero vector.
pub fn grid_descriptor(crop: &BinaryImage, params: &GridDescriptorParams) -> Result<Vec<f64>> {
    params.validate()?;
    if crop.width() == 0 || crop.height() == 0 {
        return Err(Error::Input("empty symbol crop".into()));
    }
    let mut out = Vec::with_capacity(params.output_dim());
    let Some((x0, y0, x1, y1)) = ink_bounds(crop) else {
        out.resize(params.output_dim(), 0.0);
        return Ok(out);
    };
    let side = params.resize;
    let (cw, ch) = (x1 - x0, y1 - y0);
    let mut img = vec![0.0; side * side];
    for y in 0..side {
        let sy = y0 + ((y as f64 + 0.5) * ch as f64 / side as f64) as usize;
        for x in 0..side {
            let sx = x0 + ((x as f64 + 0.5) * cw as f64 / side as f64) as usize;
            if crop.get(sx.min(x1 - 1), sy.min(y1 - 1)) {
                img[y * side + x] = 1.0;
            }
        }
    }
    let img = blur(&img, side, params.smoothing_sigma);
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= side as i64 || y >= side as i64 {
            0.0
        } else {
            img[y as usize * side + x as usize]
        }
    };
    let mut magnitude = vec![0.0; side * side];
    let mut angle = vec![0.0; side * side];
    for y in 0..side as i64 {
        for x in 0..side as i64 {
            let gx = (at(x + 1, y) - at(x - 1, y)) * 0.5;
            let gy = (at(x, y + 1) - at(x, y - 1)) * 0.5;
            let i = y as usize * side + x as usize;
            magnitude[i] = (gx * gx + gy * gy).sqrt();
            angle[i] = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
        }
    }

    let cell = side as f64 / params.grid as f64;
    let n = params.subcells;
    let bins = params.orientation_bins;
    let bin_width = cell / n as f64;
    let sigma = 0.5 * cell;
    for gy in 0..params.grid {
        for gx in 0..params.grid {
            let cx = (gx as f64 + 0.5) * cell;
            let cy = (gy as f64 + 0.5) * cell;
            let mut hist = vec![0.0; n * n * bins];
            // Support extends half a bin past the region for interpolation.
            let reach = 0.5 * cell + bin_width;
            let ylo = (cy - reach).floor().max(0.0) as usize;
            let yhi = ((cy + reach).ceil() as usize).min(side);
            let xlo = (cx - reach).floor().max(0.0) as usize;
            let xhi = ((cx + reach).ceil() as usize).min(side);
            for py in ylo..yhi {
                for px in xlo..xhi {
                    let m = magnitude[py * side + px];
                    if m == 0.0 {
                        continue;
                    }
                    let dx = px as f64 + 0.5 - cx;
                    let dy = py as f64 + 0.5 - cy;
                    let u = dx / bin_width + n as f64 / 2.0 - 0.5;
                    let v = dy / bin_width + n as f64 / 2.0 - 0.5;
                    if u <= -1.0 || u >= n as f64 || v <= -1.0 || v >= n as f64 {
                        continue;
                    }
                    let w = m * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                    let o = angle[py * side + px] * bins as f64 / std::f64::consts::TAU;
                    accumulate(&mut hist, n, bins, u, v, o, w);
                }
            }
            normalize_clip(&mut hist);
            out.extend_from_slice(&hist);
        }
    }
    Ok(out)
}

fn accumulate(hist: &mut [f64], n: usize, bins: usize, u: f64, v: f64, o: f64, w: f64) {
    let (u0, v0, o0) = (u.floor(), v.floor(), o.floor());
    let (fu, fv, fo) = (u - u0, v - v0, o - o0);
    for (du, wu) in [(0i64, 1.0 - fu), (1, fu)] {
        let ui = u0 as i64 + du;
        if ui < 0 || ui >= n as i64 {
            continue;
        }
        for (dv, wv) in [(0i64, 1.0 - fv), (1, fv)] {
            let vi = v0 as i64 + dv;
            if vi < 0 || vi >= n as i64 {
                continue;
            }
            for (dob, wo) in [(0i64, 1.0 - fo), (1, fo)] {
                let oi = (o0 as i64 + dob).rem_euclid(bins as i64) as usize;
                hist[(vi as usize * n + ui as usize) * bins + oi] += w * wu * wv * wo;
            }
        }
    }
}

fn normalize_clip(hist: &mut [f64]) {
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    hist.iter_mut().for_each(|v| *v = (*v / norm).min(CLIP));
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    hist.iter_mut().for_each(|v| *v /= norm);
}

/// Descriptors for many crops, in input order.
pub fn describe_all(
    document_id: &str,
    crops: &[BinaryImage],
    params: &GridDescriptorParams,
) -> Result<FeatureSet> {
    let rows: Vec<Vec<f64>> = crops
        .par_iter()
        .map(|c| grid_descriptor(c, params))
        .collect::<Result<_>>()?;
    FeatureSet::new(
        document_id,
        FeatureSource::GridSift,
        RowMatrix::from_rows(&rows)?,
    )
}

/// Fitted principal component basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `out_dim x dim`, orthonormal rows.
    pub components: RowMatrix,
    /// Sample variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.components.rows()
    }
}

const RANK_TOL: f64 = 1e-10;

/// Principal components of `vectors` (rows are samples).
///
/// Uses the covariance eigendecomposition when `dim <= N` and the Gram
/// matrix route otherwise; the latter can only produce components with
/// non-zero variance. Each component's largest-magnitude entry is positive.
pub fn pca_fit(vectors: &RowMatrix, out_dim: usize) -> Result<PcaModel> {
    let n = vectors.rows();
    let dim = vectors.dim();
    if n < 2 {
        return Err(Error::Param(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    if out_dim == 0 || out_dim > (n - 1).min(dim) {
        return Err(Error::Param(format!(
            "out_dim {out_dim} outside 1..={} for {n} samples of dim {dim}",
            (n - 1).min(dim)
        )));
    }
    let mut mean = vec![0.0; dim];
    for row in vectors.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| vectors.row(i)[j] - mean[j]);
    let scale = 1.0 / (n as f64 - 1.0);

    let (mut components, variance) = if dim <= n {
        let cov = (centered.transpose() * &centered) * scale;
        let eig = SymmetricEigen::new(cov);
        let order = descending(eig.eigenvalues.as_slice());
        let mut comps = Vec::with_capacity(out_dim * dim);
        let mut var = Vec::with_capacity(out_dim);
        for &k in order.iter().take(out_dim) {
            comps.extend(eig.eigenvectors.column(k).iter().copied());
            var.push(eig.eigenvalues[k].max(0.0));
        }
        (comps, var)
    } else {
        let gram = (&centered * centered.transpose()) * scale;
        let eig = SymmetricEigen::new(gram);
        let order = descending(eig.eigenvalues.as_slice());
        let top = eig.eigenvalues[order[0]].max(0.0);
        let rank = order
            .iter()
            .take_while(|&&k| eig.eigenvalues[k] > RANK_TOL * top.max(f64::MIN_POSITIVE))
            .count();
        if out_dim > rank {
            return Err(Error::Rank {
                requested: out_dim,
                rank,
            });
        }
        let mut comps = Vec::with_capacity(out_dim * dim);
        let mut var = Vec::with_capacity(out_dim);
        for &k in order.iter().take(out_dim) {
            let lambda = eig.eigenvalues[k];
            let v = centered.transpose() * eig.eigenvectors.column(k);
            let norm = (lambda / scale).sqrt();
            comps.extend(v.iter().map(|x| x / norm));
            var.push(lambda);
        }
        (comps, var)
    };
    orthonormalize(&mut components, dim);
    for row in components.chunks_exact_mut(dim) {
        let lead =
            row.iter().enumerate().fold(
                0usize,
                |best, (i, v)| if v.abs() > row[best].abs() { i } else { best },
            );
        if row[lead] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(PcaModel {
        mean,
        components: RowMatrix::new(out_dim, dim, components)?,
        explained_variance: variance,
    })
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Modified Gram-Schmidt over consecutive rows of length `dim`.
fn orthonormalize(rows: &mut [f64], dim: usize) {
    let count = rows.len() / dim;
    for i in 0..count {
        for j in 0..i {
            let (done, rest) = rows.split_at_mut(i * dim);
            let prev = &done[j * dim..(j + 1) * dim];
            let cur = &mut rest[..dim];
            let dot: f64 = prev.iter().zip(cur.iter()).map(|(a, b)| a * b).sum();
            cur.iter_mut().zip(prev).for_each(|(c, p)| *c -= dot * p);
        }
        let cur = &mut rows[i * dim..(i + 1) * dim];
        let norm = cur.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            cur.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

/// Projects rows onto the model: `(x - mean) * components^T`.
pub fn pca_transform(model: &PcaModel, vectors: &RowMatrix) -> Result<RowMatrix> {
    if vectors.dim() != model.dim() {
        return Err(Error::Dim {
            expected: model.dim(),
            actual: vectors.dim(),
        });
    }
    let k = model.out_dim();
    let mut out = Vec::with_capacity(vectors.rows() * k);
    for row in vectors.iter_rows() {
        for comp in model.components.iter_rows() {
            out.push(
                row.iter()
                    .zip(&model.mean)
                    .zip(comp)
                    .map(|((x, m), c)| (x - m) * c)
                    .sum(),
            );
        }
    }
    RowMatrix::new(vectors.rows(), k, out)
}

/// Maps reduced coordinates back to the input space.
pub fn pca_inverse_transform(model: &PcaModel, reduced: &RowMatrix) -> Result<RowMatrix> {
    if reduced.dim() != model.out_dim() {
        return Err(Error::Dim {
            expected: model.out_dim(),
            actual: reduced.dim(),
        });
    }
    let dim = model.dim();
    let mut out = Vec::with_capacity(reduced.rows() * dim);
    for row in reduced.iter_rows() {
        let mut x = model.mean.clone();
        for (coef, comp) in row.iter().zip(model.components.iter_rows()) {
            x.iter_mut().zip(comp).for_each(|(xi, c)| *xi += coef * c);
        }
        out.extend(x);
    }
    RowMatrix::new(reduced.rows(), dim, out)
}
