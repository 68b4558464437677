//! Non-local block matching on the temporal mean image.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::volume::{Image, Volume};

/// Patch origins `(y, x)` of one group; the first is the reference patch.
pub type GroupOrigins = Vec<(usize, usize)>;

/// `0, stride, 2*stride, ...` up to `last`, always ending at `last`.
pub fn grid_positions(last: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

fn patch_distance(img: &Image, a: (usize, usize), b: (usize, usize), p: usize) -> f64 {
    let w = img.width();
    let d = img.as_slice();
    let mut sum = 0.0;
    for dy in 0..p {
        let ra = &d[(a.0 + dy) * w + a.1..][..p];
        let rb = &d[(b.0 + dy) * w + b.1..][..p];
        sum += ra
            .iter()
            .zip(rb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    sum
}

/// Group the `group_size` patches most similar to each reference patch on a
/// stride grid, searching a `search_window` square centred on the reference.
///
/// Similarity is the Euclidean distance between patches of the temporal
/// mean of `b`. Ties go to the spatially closer patch, then to raster order,
/// so the reference patch always comes first.
pub fn cluster_patches(
    b: &Volume,
    patch_size: usize,
    stride: usize,
    group_size: usize,
    search_window: usize,
) -> Result<Vec<GroupOrigins>> {
    let (h, w, _) = b.dims();
    if patch_size == 0 || patch_size > h.min(w) {
        return Err(Error::ImageSmallerThanWindow {
            height: h,
            width: w,
            size: patch_size,
        });
    }
    if stride == 0 || group_size == 0 {
        return Err(Error::InvalidParameter {
            name: "patch_stride",
            reason: "stride and group size must be >= 1",
        });
    }
    let mean = b.temporal_mean();
    let (ly, lx) = (h - patch_size, w - patch_size);
    let half = search_window / 2;
    let mut groups = Vec::new();
    let mut candidates: Vec<(f64, usize, usize, (usize, usize))> = Vec::new();
    for &ry in &grid_positions(ly, stride) {
        for &rx in &grid_positions(lx, stride) {
            candidates.clear();
            for cy in ry.saturating_sub(half)..=(ry + half).min(ly) {
                for cx in rx.saturating_sub(half)..=(rx + half).min(lx) {
                    let dist = patch_distance(&mean, (ry, rx), (cy, cx), patch_size);
                    let dy = cy.abs_diff(ry);
                    let dx = cx.abs_diff(rx);
                    candidates.push((dist, dy * dy + dx * dx, cy * w + cx, (cy, cx)));
                }
            }
            let keep = group_size.min(candidates.len());
            let cmp = |a: &(f64, usize, usize, (usize, usize)),
                       b: &(f64, usize, usize, (usize, usize))| {
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
            };
            if keep < candidates.len() {
                candidates.select_nth_unstable_by(keep - 1, cmp);
                candidates.truncate(keep);
            }
            candidates.sort_unstable_by(cmp);
            groups.push(candidates.iter().map(|c| c.3).collect());
        }
    }
    Ok(groups)
}
