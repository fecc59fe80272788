//! Hierarchical fusion of per-reference noise estimates.
//!
//! Each pixel of the caller's grid picks one reference stream and copies it
//! verbatim. References are ranked by confidence level (front, then back, then
//! shadow, then none) and, inside the winning level, by camera distance.

use crate::cues::ConfidenceTriple;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};

pub const LEVEL_FRONT: u8 = 0;
pub const LEVEL_BACK: u8 = 1;
pub const LEVEL_SHADOW: u8 = 2;
pub const LEVEL_NONE: u8 = 3;

/// Per-reference estimates (`R × C` planes), confidences and camera distances.
#[derive(Clone, Debug)]
pub struct FusionBundle<T> {
    pub estimates: Vec<Vec<Grid<T>>>,
    pub confidences: Vec<ConfidenceTriple>,
    pub distances: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionResult<T> {
    pub fused: Vec<Grid<T>>,
    /// Reference chosen at each pixel.
    pub selection: Grid<usize>,
    /// Winning confidence level at each pixel, one of the `LEVEL_*` constants.
    pub level: Grid<u8>,
}

impl<T> FusionBundle<T> {
    fn validate(&self) -> Result<(usize, usize, usize)> {
        let r = self.estimates.len();
        if r == 0 {
            return Err(Error::EmptyBundle);
        }
        if self.confidences.len() != r || self.distances.len() != r {
            return Err(Error::InvalidBundle(format!(
                "{r} estimates, {} confidence triples, {} distances",
                self.confidences.len(),
                self.distances.len()
            )));
        }
        let channels = self.estimates[0].len();
        if channels == 0 {
            return Err(Error::InvalidBundle("estimates have no channels".into()));
        }
        let (w, h) = self.confidences[0].front.dims();
        for (i, (planes, conf)) in self.estimates.iter().zip(&self.confidences).enumerate() {
            if planes.len() != channels {
                return Err(Error::InvalidBundle(format!(
                    "reference {i} has {} channels, expected {channels}",
                    planes.len()
                )));
            }
            let dims_ok = planes.iter().all(|p| p.dims() == (w, h))
                && [&conf.front, &conf.back, &conf.shadow]
                    .iter()
                    .all(|m| m.dims() == (w, h));
            if !dims_ok {
                return Err(Error::InvalidBundle(format!(
                    "reference {i} is not {w}x{h}"
                )));
            }
        }
        if let Some(d) = self.distances.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidBundle(format!("invalid distance {d}")));
        }
        Ok((w, h, channels))
    }
}

/// Closest reference among those flagged, ties to the lowest index.
fn closest(distances: &[f64], mut flagged: impl FnMut(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, d) in distances.iter().enumerate() {
        if flagged(i) && best.is_none_or(|b| *d < distances[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn fuse<T: Copy>(bundle: &FusionBundle<T>) -> Result<FusionResult<T>> {
    let (w, h, channels) = bundle.validate()?;
    let conf = &bundle.confidences;
    let d = &bundle.distances;
    let mut selection = Grid::filled(w, h, 0usize);
    let mut level = Grid::filled(w, h, LEVEL_NONE);
    for y in 0..h {
        for x in 0..w {
            let (sel, lvl) = if let Some(i) = closest(d, |i| *conf[i].front.get(x, y)) {
                (i, LEVEL_FRONT)
            } else if let Some(i) = closest(d, |i| *conf[i].back.get(x, y)) {
                (i, LEVEL_BACK)
            } else if let Some(i) = closest(d, |i| *conf[i].shadow.get(x, y)) {
                (i, LEVEL_SHADOW)
            } else {
                (
                    closest(d, |_| true).expect("bundle is nonempty"),
                    LEVEL_NONE,
                )
            };
            selection.set(x, y, sel);
            level.set(x, y, lvl);
        }
    }
    let fused = (0..channels)
        .map(|c| {
            Grid::from_fn(w, h, |x, y| {
                *bundle.estimates[*selection.get(x, y)][c].get(x, y)
            })
        })
        .collect();
    Ok(FusionResult {
        fused,
        selection,
        level,
    })
}

/// `raw ≥ threshold`, elementwise.
pub fn binarize_confidence(raw: &Grid<f64>, threshold: f64) -> Mask {
    raw.map(|&v| v >= threshold)
}

/// Area-averages a mask onto a `width`×`height` grid and binarizes at 0.5.
pub fn downsample_confidence(mask: &Mask, width: usize, height: usize) -> Result<Mask> {
    let (sw, sh) = mask.dims();
    if width == 0 || height == 0 || sw == 0 || sh == 0 {
        return Err(Error::EmptyViewport { width, height });
    }
    // overlap of source cells [k, k+1) with target cell j scaled to source units
    let spans = |src: usize, dst: usize| -> Vec<Vec<(usize, f64)>> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|j| {
                let (lo, hi) = (j as f64 * scale, (j + 1) as f64 * scale);
                (lo.floor() as usize..(hi.ceil() as usize).min(src))
                    .map(|k| (k, (hi.min(k as f64 + 1.0) - lo.max(k as f64)).max(0.0)))
                    .filter(|&(_, wgt)| wgt > 0.0)
                    .collect()
            })
            .collect()
    };
    let xs = spans(sw, width);
    let ys = spans(sh, height);
    Ok(Grid::from_fn(width, height, |x, y| {
        let (mut on, mut total) = (0.0, 0.0);
        for &(sy, wy) in &ys[y] {
            for &(sx, wx) in &xs[x] {
                let a = wx * wy;
                total += a;
                if *mask.get(sx, sy) {
                    on += a;
                }
            }
        }
        on / total >= 0.5
    }))
}

/// Level masks of a fusion result, in hierarchy order.
pub fn level_masks(level: &Grid<u8>) -> [Mask; 4] {
    [LEVEL_FRONT, LEVEL_BACK, LEVEL_SHADOW, LEVEL_NONE].map(|l| level.map(|&v| v == l))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triple(f: bool, b: bool, s: bool) -> ConfidenceTriple {
        ConfidenceTriple {
            front: Mask::filled(1, 1, f),
            back: Mask::filled(1, 1, b),
            shadow: Mask::filled(1, 1, s),
        }
    }

    fn stream(v: f64) -> Vec<Grid<f64>> {
        vec![Grid::filled(1, 1, v), Grid::filled(1, 1, -v)]
    }

    #[test]
    fn single_front_stream_is_identity() {
        let est = vec![Grid::from_fn(3, 2, |x, y| (x * 10 + y) as f64)];
        let bundle = FusionBundle {
            estimates: vec![est.clone()],
            confidences: vec![ConfidenceTriple {
                front: Mask::filled(3, 2, true),
                back: Mask::filled(3, 2, false),
                shadow: Mask::filled(3, 2, false),
            }],
            distances: vec![0.4],
        };
        let r = fuse(&bundle).unwrap();
        assert_eq!(r.fused, est);
        assert!(r.level.iter().all(|&l| l == LEVEL_FRONT));
    }

    #[test]
    fn closer_front_reference_wins() {
        let bundle = FusionBundle {
            estimates: vec![stream(1.0), stream(2.0)],
            confidences: vec![triple(true, false, false), triple(true, false, false)],
            distances: vec![0.5, 0.2],
        };
        let r = fuse(&bundle).unwrap();
        assert_eq!(*r.selection.get(0, 0), 1);
        assert_eq!(*r.fused[1].get(0, 0), -2.0);
    }

    #[test]
    fn back_outranks_shadow() {
        let bundle = FusionBundle {
            estimates: vec![stream(1.0), stream(2.0)],
            confidences: vec![triple(false, true, false), triple(false, false, true)],
            distances: vec![0.9, 0.1],
        };
        let r = fuse(&bundle).unwrap();
        assert_eq!(*r.selection.get(0, 0), 0);
        assert_eq!(*r.level.get(0, 0), LEVEL_BACK);
    }

    #[test]
    fn no_confidence_falls_back_to_closest_with_low_index_ties() {
        let bundle = FusionBundle {
            estimates: vec![stream(1.0), stream(2.0), stream(3.0)],
            confidences: vec![triple(false, false, false); 3],
            distances: vec![0.3, 0.1, 0.1],
        };
        let r = fuse(&bundle).unwrap();
        assert_eq!(*r.selection.get(0, 0), 1);
        assert_eq!(*r.level.get(0, 0), LEVEL_NONE);
    }

    #[test]
    fn empty_bundle_is_rejected() {
        let bundle: FusionBundle<f64> = FusionBundle {
            estimates: vec![],
            confidences: vec![],
            distances: vec![],
        };
        assert!(matches!(fuse(&bundle), Err(Error::EmptyBundle)));
    }

    #[test]
    fn binarize_is_inclusive() {
        let raw = Grid::filled(2, 2, 0.5);
        assert_eq!(binarize_confidence(&raw, 0.5).count(), 4);
        assert_eq!(
            binarize_confidence(&Grid::filled(2, 2, 0.0), 0.5).count(),
            0
        );
    }

    #[test]
    fn downsample_by_area() {
        let m = Grid::from_fn(4, 4, |x, y| x < 2 && y < 3);
        let d = downsample_confidence(&m, 2, 2).unwrap();
        assert_eq!(d.into_vec(), vec![true, false, true, false]);
        // 3 → 2 columns: first target cell covers column 0 and half of column 1
        let m = Grid::from_vec(3, 1, vec![false, true, true]);
        let d = downsample_confidence(&m, 2, 1).unwrap();
        assert_eq!(d.into_vec(), vec![false, true]);
    }
}
