//! Subspace-based low-rank tensor refinement.
//!
//! The registered stack `R` is split as `R = B + E + N` by minimizing
//!
//! ```text
//! 1/2 ||B + E - R||^2 + beta ||E||_1
//!     + alpha * sum_i ( ||X_i - G_i O_i||^2 / lambda_i^2 + tnn(G_i) )
//! ```
//!
//! where `X_i = S_i B` stacks the `n` similar `p x p` sub-cubes of group `i`
//! as a `(p^2 n) x t` matrix, `O_i` is a `d x t` temporal basis with
//! orthonormal rows and `G_i` is the `p^2 x n x d` surrogate in that basis.
//! Because `O_i` has orthonormal rows,
//! `||X - G O||^2 = ||X O^T - G||^2 + ||X (I - O^T O)||^2`: the prior both
//! keeps the group inside the subspace and keeps its coefficients low-rank.
//!
//! Every step of the alternating scheme minimizes the objective exactly in
//! one block of variables, so the objective never increases:
//!
//! * `O_i`: orthogonal Procrustes against the current `G_i`;
//! * `G_i`: proximal step of the tensor nuclear norm with threshold
//!   `lambda_i^2 / 2` ([`tensor_svt`]);
//! * `B`: closed-form per-pixel average of `R - E` and the back-projected
//!   group estimates;
//! * `E`: soft thresholding of `R - B`.
//!
//! Groups are re-formed on the current background every
//! `recluster_every` iterations; the new grouping is kept only when it does
//! not raise the objective.

mod cluster;
mod tensor;

pub use cluster::{cluster_patches, grid_positions, GroupOrigins};
pub use tensor::{tensor_svt, tnn, Tensor3};

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::volume::{FrameSequence, Volume};

/// Noise levels below this are treated as this value.
pub const MIN_NOISE_LEVEL: f64 = 1e-9;

/// Largest tolerated deviation of `O O^T` from the identity.
const ORTHONORMAL_TOL: f64 = 1e-10;

/// One non-local group and its current low-rank model.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    /// Sub-cube origins; the reference patch comes first.
    pub origins: GroupOrigins,
    pub patch_size: usize,
    /// `d x t`, orthonormal rows.
    pub subspace: DMatrix<f64>,
    /// Mode-3 unfolding of the `p^2 x n x d` surrogate, `(p^2 n) x d`.
    /// Row `j*p^2 + dy*p + dx` is pixel `(dy, dx)` of member `j`.
    pub surrogate: DMatrix<f64>,
    pub lambda: f64,
}

impl PatchGroup {
    /// Threshold of the surrogate's proximal step, `lambda^2 / 2`.
    pub fn threshold(&self) -> f64 {
        0.5 * self.lambda * self.lambda
    }

    /// Weight of the group's squared residual inside the objective,
    /// `alpha / lambda^2`.
    fn residual_weight(&self, alpha: f64) -> f64 {
        alpha / (self.lambda * self.lambda)
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub background: Volume,
    pub error: Volume,
    pub groups: Vec<PatchGroup>,
    pub objective: f64,
    pub iteration: usize,
    /// `||B_k - B_{k-1}|| / ||B_{k-1}||` of the last iteration.
    pub rel_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub rel_change: f64,
}

#[derive(Debug, Clone)]
pub struct RefineOutput {
    pub state: SolverState,
    /// Objective after initialization (iteration 0) and after every
    /// iteration.
    pub trace: Vec<TraceEntry>,
    /// False when `max_iters` ran out before the tolerance was met.
    pub converged: bool,
    pub noise_level: f64,
}

impl RefineOutput {
    /// The background clipped to the unit range.
    pub fn background_sequence(&self) -> Result<FrameSequence> {
        FrameSequence::from_volume_clamped(self.state.background.clone())
    }

    /// `N = R - B - E`.
    pub fn noise(&self, r: &Volume) -> Volume {
        let (h, w, t) = r.dims();
        let data = r
            .as_slice()
            .iter()
            .zip(self.state.background.as_slice())
            .zip(self.state.error.as_slice())
            .map(|((r, b), e)| r - b - e)
            .collect();
        Volume::new(h, w, t, data).expect("same shape")
    }
}

/// Stack the sub-cubes at `origins` as a `(p^2 n) x t` matrix.
pub fn gather(b: &Volume, origins: &[(usize, usize)], p: usize) -> DMatrix<f64> {
    let (_, w, t) = b.dims();
    let rows = p * p * origins.len();
    let mut x = DMatrix::zeros(rows, t);
    for f in 0..t {
        let frame = b.frame_slice(f);
        let mut col = x.column_mut(f);
        let col = col.as_mut_slice();
        for (j, &(oy, ox)) in origins.iter().enumerate() {
            for dy in 0..p {
                let src = &frame[(oy + dy) * w + ox..][..p];
                col[(j * p + dy) * p..][..p].copy_from_slice(src);
            }
        }
    }
    x
}

/// Add `weight * m` back onto the pixels of the sub-cubes at `origins`.
fn scatter_add(
    acc: &mut Volume,
    m: &DMatrix<f64>,
    origins: &[(usize, usize)],
    p: usize,
    weight: f64,
) {
    let (_, w, t) = acc.dims();
    for f in 0..t {
        let col = m.column(f);
        let col = col.as_slice();
        let frame = acc.frame_slice_mut(f);
        for (j, &(oy, ox)) in origins.iter().enumerate() {
            for dy in 0..p {
                let dst = &mut frame[(oy + dy) * w + ox..][..p];
                let src = &col[(j * p + dy) * p..][..p];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += weight * s;
                }
            }
        }
    }
}

/// Rows are the top `d` right singular vectors of `x`, i.e. the rank-`d`
/// orthonormal temporal basis with the smallest projection residual.
/// All-zero data yields the first `d` rows of the identity.
pub fn update_subspace(x: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let t = x.ncols();
    assert!(d <= t, "subspace dimension exceeds the number of frames");
    if x.iter().all(|&v| v == 0.0) {
        return DMatrix::identity(d, t);
    }
    let eig = x.tr_mul(x).symmetric_eigen();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(d, t, |r, c| eig.eigenvectors[(c, order[r])])
}

fn is_orthonormal(o: &DMatrix<f64>) -> bool {
    let gram = o * o.transpose();
    (gram - DMatrix::identity(o.nrows(), o.nrows())).amax() <= ORTHONORMAL_TOL
}

/// Orthonormal-row `O` minimizing `||x - g O||` (orthogonal Procrustes:
/// `O = U V^T` from `g^T x = U S V^T`). Keeps `previous` when the problem
/// is degenerate or the candidate does no better.
pub fn align_subspace(x: &DMatrix<f64>, g: &DMatrix<f64>, previous: &DMatrix<f64>) -> DMatrix<f64> {
    let m = g.tr_mul(x);
    if m.iter().all(|&v| v == 0.0) {
        return previous.clone();
    }
    let svd = m.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return previous.clone();
    };
    let candidate = u * v_t;
    // Maximizing tr(M O^T) is the same as minimizing the residual.
    let score = |o: &DMatrix<f64>| m.dot(o);
    if candidate.shape() == previous.shape()
        && is_orthonormal(&candidate)
        && score(&candidate) >= score(previous)
    {
        candidate
    } else {
        previous.clone()
    }
}

/// `sign(x) * max(|x| - beta, 0)`.
#[inline]
pub fn soft_threshold(x: f64, beta: f64) -> f64 {
    if x > beta {
        x - beta
    } else if x < -beta {
        x + beta
    } else {
        0.0
    }
}

/// Sparse error: elementwise soft thresholding of `R - B` by `beta`.
pub fn update_error(r: &Volume, b: &Volume, beta: f64) -> Result<Volume> {
    r.same_shape(b)?;
    let (h, w, t) = r.dims();
    let data = r
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(r, b)| soft_threshold(r - b, beta))
        .collect();
    Volume::new(h, w, t, data)
}

/// Background minimizing the objective for fixed `E`, `G_i` and `O_i`:
///
/// `B = (R - E + sum_i w_i S_i^T G_i O_i) / (1 + sum_i w_i S_i^T 1)`
///
/// with `w_i = 2 alpha / lambda_i^2` per patch occurrence.
pub fn update_background(
    r: &Volume,
    e: &Volume,
    groups: &[PatchGroup],
    alpha: f64,
) -> Result<Volume> {
    r.same_shape(e)?;
    let (h, w, t) = r.dims();
    let mut acc = Volume::zeros(h, w, t);
    let mut weight = vec![0.0; h * w];
    if alpha > 0.0 {
        for g in groups {
            let wi = 2.0 * g.residual_weight(alpha);
            let p = g.patch_size;
            scatter_add(&mut acc, &(&g.surrogate * &g.subspace), &g.origins, p, wi);
            for &(oy, ox) in &g.origins {
                for dy in 0..p {
                    for v in &mut weight[(oy + dy) * w + ox..][..p] {
                        *v += wi;
                    }
                }
            }
        }
        if !groups.is_empty() {
            if let Some(i) = weight.iter().position(|&v| v == 0.0) {
                return Err(Error::UncoveredPixel { y: i / w, x: i % w });
            }
        }
    }
    let mut out = acc;
    let (rs, es) = (r.as_slice(), e.as_slice());
    for (i, b) in out.as_mut_slice().iter_mut().enumerate() {
        let wp = weight[i % (h * w)];
        *b = (rs[i] - es[i] + *b) / (1.0 + wp);
    }
    Ok(out)
}

fn fidelity_terms(r: &Volume, b: &Volume, e: &Volume, beta: f64) -> f64 {
    let mut quad = 0.0;
    let mut l1 = 0.0;
    for ((r, b), e) in r.as_slice().iter().zip(b.as_slice()).zip(e.as_slice()) {
        let d = b + e - r;
        quad += d * d;
        l1 += e.abs();
    }
    0.5 * quad + beta * l1
}

/// `||x - g o||^2`.
fn group_residual(x: &DMatrix<f64>, g: &DMatrix<f64>, o: &DMatrix<f64>) -> f64 {
    (x - g * o).norm_squared()
}

/// The full objective value of a state.
pub fn objective(
    r: &Volume,
    b: &Volume,
    e: &Volume,
    groups: &[PatchGroup],
    alpha: f64,
    beta: f64,
) -> f64 {
    let mut total = fidelity_terms(r, b, e, beta);
    for g in groups {
        let x = gather(b, &g.origins, g.patch_size);
        let surrogate = Tensor3::from_unfolding(g.patch_size * g.patch_size, g.surrogate.clone());
        total += g.residual_weight(alpha) * group_residual(&x, &g.surrogate, &g.subspace)
            + alpha * tnn(&surrogate);
    }
    total
}

/// Noise standard deviation from the median absolute deviation of the
/// frame-to-frame differences, `1.4826 * MAD / sqrt(2)`.
pub fn estimate_noise(r: &Volume) -> f64 {
    let (h, w, t) = r.dims();
    let hw = h * w;
    if t < 2 || hw == 0 {
        return MIN_NOISE_LEVEL;
    }
    let s = r.as_slice();
    let mut diffs: Vec<f64> = (0..hw * (t - 1)).map(|i| s[i + hw] - s[i]).collect();
    let med = median_in_place(&mut diffs);
    diffs.iter_mut().for_each(|d| *d = (*d - med).abs());
    let mad = median_in_place(&mut diffs);
    (1.4826 * mad / core::f64::consts::SQRT_2).max(MIN_NOISE_LEVEL)
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let (_, &mut hi, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// `lambda = sqrt(2 tau)` with singular-value threshold
/// `tau = c * sqrt(max(p^2, n) * d)` for noise level `c`.
pub fn group_lambda(noise_level: f64, patch_size: usize, members: usize, d: usize) -> f64 {
    let tau = noise_level * libm::sqrt(((patch_size * patch_size).max(members) * d) as f64);
    libm::sqrt(2.0 * tau)
}

/// Surrogate for a fixed subspace: `G = svt(X O^T, lambda^2 / 2)`.
/// Returns `G` and `tnn(G)`.
fn fit_surrogate(x: &DMatrix<f64>, o: &DMatrix<f64>, p: usize, lambda: f64) -> (DMatrix<f64>, f64) {
    let y = Tensor3::from_unfolding(p * p, x * o.transpose());
    let (g, norm) = tensor_svt(&y, 0.5 * lambda * lambda);
    (g.into_unfolding(), norm)
}

/// Working copy of the groups plus the cached tensor nuclear norms.
struct Model {
    groups: Vec<PatchGroup>,
    norms: Vec<f64>,
}

impl Model {
    /// Fresh groups at `origins`, with subspaces from the data.
    fn initialize(b: &Volume, all: Vec<GroupOrigins>, p: usize, d: usize, noise: f64) -> Self {
        let mut groups = Vec::with_capacity(all.len());
        let mut norms = Vec::with_capacity(all.len());
        for origins in all {
            let x = gather(b, &origins, p);
            let subspace = update_subspace(&x, d);
            let lambda = group_lambda(noise, p, origins.len(), d);
            let (surrogate, norm) = fit_surrogate(&x, &subspace, p, lambda);
            groups.push(PatchGroup {
                origins,
                patch_size: p,
                subspace,
                surrogate,
                lambda,
            });
            norms.push(norm);
        }
        Self { groups, norms }
    }

    /// Subspace then surrogate update of every group on background `b`.
    fn update(&mut self, b: &Volume) {
        for (g, norm) in self.groups.iter_mut().zip(&mut self.norms) {
            let x = gather(b, &g.origins, g.patch_size);
            g.subspace = align_subspace(&x, &g.surrogate, &g.subspace);
            let (surrogate, n) = fit_surrogate(&x, &g.subspace, g.patch_size, g.lambda);
            g.surrogate = surrogate;
            *norm = n;
        }
    }

    /// Sum of the group terms of the objective on background `b`.
    fn prior(&self, b: &Volume, alpha: f64) -> f64 {
        self.groups
            .iter()
            .zip(&self.norms)
            .map(|(g, &norm)| {
                let x = gather(b, &g.origins, g.patch_size);
                g.residual_weight(alpha) * group_residual(&x, &g.surrogate, &g.subspace)
                    + alpha * norm
            })
            .sum()
    }
}

fn relative_change(new: &Volume, old: &Volume) -> f64 {
    let diff: f64 = new
        .as_slice()
        .iter()
        .zip(old.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let base = old.frobenius_norm();
    if base > 0.0 {
        libm::sqrt(diff) / base
    } else {
        libm::sqrt(diff)
    }
}

/// Alternating minimization from `B = R`, `E = 0`.
pub fn refine(r: &FrameSequence, cfg: &RunConfig) -> Result<RefineOutput> {
    let (h, w, t) = r.dims();
    cfg.validate_for_frames(t)?;
    let p = cfg.patch_size;
    if p > h.min(w) {
        return Err(Error::ImageSmallerThanWindow {
            height: h,
            width: w,
            size: p,
        });
    }
    let r = r.volume();
    let noise = cfg
        .noise_level
        .unwrap_or_else(|| estimate_noise(r))
        .max(MIN_NOISE_LEVEL);
    let d = cfg.subspace_dim;
    let cluster =
        |b: &Volume| cluster_patches(b, p, cfg.patch_stride, cfg.group_size, cfg.search_window);

    let mut b = r.clone();
    let mut e = Volume::zeros(h, w, t);
    let mut model = Model::initialize(&b, cluster(&b)?, p, d, noise);
    let mut value = fidelity_terms(r, &b, &e, cfg.beta) + model.prior(&b, cfg.alpha);
    let mut trace = vec![TraceEntry {
        iteration: 0,
        objective: value,
        rel_change: 0.0,
    }];
    let mut converged = false;
    let mut rel_change = 0.0;
    let mut iteration = 0;

    while iteration < cfg.max_iters {
        iteration += 1;
        let recluster = iteration > 1 && (iteration - 1) % cfg.recluster_every == 0;
        model.update(&b);
        if recluster {
            let fresh = Model::initialize(&b, cluster(&b)?, p, d, noise);
            // B and E are shared, so the prior terms decide.
            if fresh.prior(&b, cfg.alpha) <= model.prior(&b, cfg.alpha) {
                model = fresh;
            }
        }
        let new_b = update_background(r, &e, &model.groups, cfg.alpha)?;
        e = update_error(r, &new_b, cfg.beta)?;
        rel_change = relative_change(&new_b, &b);
        b = new_b;
        value = fidelity_terms(r, &b, &e, cfg.beta) + model.prior(&b, cfg.alpha);
        trace.push(TraceEntry {
            iteration,
            objective: value,
            rel_change,
        });
        if rel_change < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(RefineOutput {
        state: SolverState {
            background: b,
            error: e,
            groups: model.groups,
            objective: value,
            iteration,
            rel_change,
        },
        trace,
        converged,
        noise_level: noise,
    })
}
