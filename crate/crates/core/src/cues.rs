//! Reference-based conditioning: cue sets rendered from reference geometry, hint
//! selection, and ground-truth confidence masks for synthesized training data.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::camera::view_distance;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, RgbImage};
use crate::mesh::{build_mesh, build_shadow_mesh, default_eps_d, DepthMesh, DEFAULT_EPS_EDGE};
use crate::raster::{normalize_inverse_depth, render_mesh, render_shadow_with_limit, RenderOutput};
use crate::scene::{AutoregressiveSet, View};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueConfig {
    pub eps_edge: f64,
    /// Shadow wall length; derived from the reference mesh extent when absent.
    pub eps_d: Option<f64>,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self {
            eps_edge: DEFAULT_EPS_EDGE,
            eps_d: None,
        }
    }
}

/// Appearance and geometric cues one reference contributes to a target.
#[derive(Clone, Debug, PartialEq)]
pub struct CueSet {
    /// Reference colors warped into the target, zero off the front-facing region.
    pub color: RgbImage,
    pub front: Mask,
    pub back: Mask,
    /// Normalized inverse depth of the nearest hit.
    pub inv_depth: Grid<f64>,
    /// Shadow-wall coverage united with back-facing hits.
    pub shadow: Mask,
    /// Unprojected style image; `None` stands for the all-zero hint.
    pub hint: Option<RgbImage>,
    /// Reference pixel coordinate of each hit, kept for provenance.
    pub source_pixel: Grid<Option<Point2<f64>>>,
    pub reference: usize,
    pub distance: f64,
}

/// Per-pixel binary confidences of one reference stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceTriple {
    pub front: Mask,
    pub back: Mask,
    pub shadow: Mask,
}

impl ConfidenceTriple {
    pub fn width(&self) -> usize {
        self.front.width()
    }

    pub fn height(&self) -> usize {
        self.front.height()
    }
}

/// Everything a reference's geometry produces in a target frame, before cue packaging.
#[derive(Clone, Debug)]
pub struct ReferenceRender {
    pub mesh: DepthMesh,
    pub render: RenderOutput,
    /// Shadow walls ∨ back-facing hits.
    pub shadow: Mask,
}

/// Builds the reference mesh and its shadow volume and renders both into `target`.
pub fn render_reference(
    mesh: DepthMesh,
    target: &crate::Camera,
    width: usize,
    height: usize,
    eps_d: Option<f64>,
) -> Result<ReferenceRender> {
    let mut render = render_mesh(&mesh, target, width, height)?;
    let walls = match mesh.silhouette_edges.is_empty() {
        true => Mask::filled(width, height, false),
        false => {
            let eps_d = eps_d.unwrap_or_else(|| default_eps_d(&mesh.mesh.positions));
            let shadow = build_shadow_mesh(&mesh, eps_d)?;
            render_shadow_with_limit(&shadow, target, &render.depth_limit())?
        }
    };
    render.shadow = walls.clone();
    let shadow = walls.or(&render.back);
    Ok(ReferenceRender {
        mesh,
        render,
        shadow,
    })
}

/// Renders view `reference` into view `target`.
///
/// While the reference is not yet inpainted, hits whose source pixel falls inside
/// its mask contribute no color, front or back pixels.
pub fn assemble_cues(
    views: &[View],
    reference: usize,
    target: usize,
    hint: Option<&RgbImage>,
    cfg: &CueConfig,
) -> Result<CueSet> {
    let n = views.len();
    for index in [reference, target] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    let rv = &views[reference];
    let tv = &views[target];
    let ref_cam = rv.require_camera(reference)?;
    let depth = rv.require_depth(reference)?;
    let tgt_cam = tv.require_camera(target)?;
    let (w, h) = (tv.width(), tv.height());
    if let Some(hint) = hint {
        if hint.dims() != (w, h) {
            return Err(Error::DimensionMismatch(
                "hint differs from the target size".into(),
            ));
        }
    }

    let mesh = build_mesh(depth, &rv.image, ref_cam, cfg.eps_edge)?;
    let ReferenceRender { render, shadow, .. } = render_reference(mesh, tgt_cam, w, h, cfg.eps_d)?;
    let mut color = render.color;
    let mut front = render.front;
    let mut back = render.back;
    if !rv.inpainted {
        let hidden = source_in_mask(&render.source_pixel, &rv.mask);
        for y in 0..h {
            for x in 0..w {
                if *hidden.get(x, y) {
                    color.set(x, y, [0.0; 3]);
                    front.set(x, y, false);
                    back.set(x, y, false);
                }
            }
        }
    }
    Ok(CueSet {
        color,
        front,
        back,
        inv_depth: normalize_inverse_depth(&render.depth, &render.valid),
        shadow,
        hint: hint.cloned(),
        source_pixel: render.source_pixel,
        reference,
        distance: view_distance(tgt_cam, ref_cam),
    })
}

/// Integer pixel containing a continuous coordinate, if inside a `width`×`height` image.
pub fn pixel_of(p: &Point2<f64>, width: usize, height: usize) -> Option<(usize, usize)> {
    let (x, y) = (p.x.floor(), p.y.floor());
    (x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64)
        .then_some((x as usize, y as usize))
}

/// Target pixels whose hit originates from a pixel inside `mask`.
pub fn source_in_mask(source_pixel: &Grid<Option<Point2<f64>>>, mask: &Mask) -> Mask {
    source_pixel.map(|s| {
        s.and_then(|p| pixel_of(&p, mask.width(), mask.height()))
            .is_some_and(|(x, y)| *mask.get(x, y))
    })
}

/// The inpainted view farthest from `target`; ties go to the lowest index.
pub fn select_hint(target: usize, set: &AutoregressiveSet) -> Option<usize> {
    let cam = set.views.get(target)?.camera.as_ref()?;
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in set.views.iter().enumerate() {
        if i == target || !v.inpainted {
            continue;
        }
        let Some(c) = &v.camera else { continue };
        let d = view_distance(cam, c);
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// `1{F = F_r}`: the target's visible face equals the face the reference sees at the
/// source pixel of the reference-mesh hit.
pub fn face_match(
    target_faces: &Grid<i64>,
    reference_faces: &Grid<i64>,
    source_pixel: &Grid<Option<Point2<f64>>>,
) -> Result<Mask> {
    if !target_faces.same_dims(source_pixel) {
        return Err(Error::DimensionMismatch(
            "face map and source-pixel map differ".into(),
        ));
    }
    let (rw, rh) = reference_faces.dims();
    Ok(target_faces.zip_map(source_pixel, |&f, s| {
        f >= 0
            && s.and_then(|p| pixel_of(&p, rw, rh))
                .is_some_and(|(x, y)| *reference_faces.get(x, y) == f)
    }))
}

/// Unperturbed renders feeding the ground-truth confidences.
#[derive(Clone, Debug)]
pub struct GtRenders {
    pub front: Mask,
    pub back: Mask,
    pub shadow: Mask,
    pub face_match: Mask,
}

/// `C_f = (F̂ ∧ ¬Ĉ) ∨ ¬M`, `C_b = B̂ ∧ M`, `C_s = Ĉ ∧ 1{F = F_r} ∧ F̂ ∧ M`.
pub fn gt_confidence(r: &GtRenders, mask: &Mask) -> Result<ConfidenceTriple> {
    let all = [&r.front, &r.back, &r.shadow, &r.face_match];
    if all.iter().any(|m| !m.same_dims(mask)) {
        return Err(Error::DimensionMismatch(
            "confidence inputs differ from the mask size".into(),
        ));
    }
    let outside = mask.not();
    Ok(ConfidenceTriple {
        front: r.front.and(&r.shadow.not()).or(&outside),
        back: r.back.and(mask),
        shadow: r.shadow.and(&r.face_match).and(&r.front).and(mask),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::DepthMap;
    use crate::Camera;
    use nalgebra::{Rotation3, Vector3};

    fn cam(angle: f64) -> Camera {
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), angle).into_inner();
        Camera::new(Camera::intrinsics(12.0, 6.0, 6.0), r, Vector3::zeros()).unwrap()
    }

    fn flat_view(camera: Camera, inpainted: bool) -> View {
        let mut v = View::new(
            RgbImage::filled(12, 12, [0.25, 0.5, 0.75]),
            Mask::filled(12, 12, false),
        )
        .unwrap();
        v.camera = Some(camera);
        v.depth = Some(DepthMap::from_values(Grid::filled(12, 12, 2.0)));
        v.inpainted = inpainted;
        v
    }

    #[test]
    fn self_projection_reproduces_reference() {
        let views = vec![flat_view(cam(0.0), true)];
        let cues = assemble_cues(&views, 0, 0, None, &CueConfig::default()).unwrap();
        assert_eq!(cues.back.count(), 0);
        assert_eq!(cues.distance, 0.0);
        assert!(cues.hint.is_none());
        for y in 0..11 {
            for x in 0..11 {
                assert!(cues.front.get(x, y));
                for c in 0..3 {
                    assert!((cues.color.get(x, y)[c] - [0.25, 0.5, 0.75][c]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn masked_reference_contributes_nothing_there() {
        let mut views = vec![flat_view(cam(0.0), false)];
        views[0].mask = Grid::from_fn(12, 12, |x, _| x < 4);
        let cues = assemble_cues(&views, 0, 0, None, &CueConfig::default()).unwrap();
        for y in 0..11 {
            assert!(!cues.front.get(2, y));
            assert_eq!(*cues.color.get(2, y), [0.0; 3]);
            assert!(cues.front.get(6, y));
        }
    }

    #[test]
    fn rear_view_of_surface_is_back_facing() {
        // reference at the origin sees the plane z = 2 from the front; the target sits
        // behind the plane looking back at it
        let mut views = vec![flat_view(cam(0.0), true)];
        let behind = Camera::look_at(
            Camera::intrinsics(12.0, 6.0, 6.0),
            Vector3::new(0.0, 0.0, 4.0),
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .unwrap();
        views.push(flat_view(behind, false));
        let cues = assemble_cues(&views, 0, 1, None, &CueConfig::default()).unwrap();
        assert_eq!(cues.front.count(), 0);
        assert!(cues.back.count() > 50);
        assert!(cues.back.is_subset_of(&cues.shadow));
    }

    #[test]
    fn missing_reference_depth_is_reported() {
        let mut views = vec![flat_view(cam(0.0), true), flat_view(cam(0.2), false)];
        views[0].depth = None;
        let err = assemble_cues(&views, 0, 1, None, &CueConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingGeometry { index: 0, .. }));
    }

    #[test]
    fn hint_is_farthest_inpainted_view() {
        let mut views: Vec<View> = [0.0, 0.1, 0.7, 0.3]
            .iter()
            .map(|&a| flat_view(cam(a), false))
            .collect();
        let mut set = AutoregressiveSet::new(views.clone());
        assert_eq!(select_hint(0, &set), None);
        set.views[1].inpainted = true;
        assert_eq!(select_hint(0, &set), Some(1));
        set.views[2].inpainted = true;
        assert_eq!(select_hint(0, &set), Some(2));
        views[3].inpainted = true;
        set.views[3] = views[3].clone();
        assert_eq!(select_hint(0, &set), Some(2));
    }

    #[test]
    fn gt_formulas_pixelwise() {
        let m = |bits: [bool; 4]| Grid::from_vec(4, 1, bits.to_vec());
        let r = GtRenders {
            front: m([true, false, true, true]),
            back: m([false, true, false, false]),
            shadow: m([false, true, true, true]),
            face_match: m([false, false, true, false]),
        };
        let mask = m([false, true, true, true]);
        let c = gt_confidence(&r, &mask).unwrap();
        assert_eq!(c.front.into_vec(), vec![true, false, false, false]);
        assert_eq!(c.back.into_vec(), vec![false, true, false, false]);
        assert_eq!(c.shadow.into_vec(), vec![false, false, true, false]);
    }

    #[test]
    fn face_match_looks_up_source_pixel() {
        let target = Grid::from_vec(2, 1, vec![3, 4]);
        let reference = Grid::from_vec(2, 1, vec![4, 3]);
        let src = Grid::from_vec(
            2,
            1,
            vec![Some(Point2::new(1.5, 0.5)), Some(Point2::new(1.5, 0.5))],
        );
        let fm = face_match(&target, &reference, &src).unwrap();
        assert_eq!(fm.into_vec(), vec![true, false]);
    }
}
