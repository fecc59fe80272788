use mvinpaint::mesh::TriMesh;
use mvinpaint::{Camera, Grid, Mask};

use crate::raycast::{pixel_ray, raycast_nearest, segment_blocked};

/// For each target pixel that sees `truth`, whether the segment from the reference
/// center to the visible point is blocked by `reference_mesh`. `None` where the
/// target sees nothing.
pub fn occlusion_oracle(
    truth: &TriMesh,
    reference_mesh: &TriMesh,
    reference: &Camera,
    target: &Camera,
    width: usize,
    height: usize,
) -> Grid<Option<bool>> {
    let center = reference.center();
    Grid::from_fn(width, height, |x, y| {
        let (o, d) = pixel_ray(target, x, y);
        raycast_nearest(truth, &o, &d)
            .map(|h| segment_blocked(reference_mesh, &center, &(o + d * h.t), 1e-3))
    })
}

/// Pixels whose 3×3 neighborhood is fully inside the image and carries a single
/// defined oracle label.
pub fn interior_labels(oracle: &Grid<Option<bool>>) -> Vec<(usize, usize, bool)> {
    let (w, h) = oracle.dims();
    let mut out = Vec::new();
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let Some(label) = *oracle.get(x, y) else {
                continue;
            };
            let uniform = (y - 1..=y + 1)
                .all(|yy| (x - 1..=x + 1).all(|xx| *oracle.get(xx, yy) == Some(label)));
            if uniform {
                out.push((x, y, label));
            }
        }
    }
    out
}

/// Number of interior pixels where `mask` equals the oracle, and the number of interior pixels.
pub fn agreement(mask: &Mask, oracle: &Grid<Option<bool>>) -> (usize, usize) {
    let labels = interior_labels(oracle);
    let agree = labels
        .iter()
        .filter(|&&(x, y, l)| *mask.get(x, y) == l)
        .count();
    (agree, labels.len())
}
