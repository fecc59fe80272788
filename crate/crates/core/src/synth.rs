//! Training-sample synthesis from a single image with depth.
//!
//! The image is the target view (identity pose). A reference camera is sampled
//! around it, the image mesh is rendered into that reference, and the reference
//! mesh is lifted back and rendered into the target twice: once rigidly perturbed
//! to produce the cues, once unperturbed to produce ground-truth confidences.

use std::path::Path;

use nalgebra::{Matrix3, Point2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{rotation_from_euler_zyx, view_distance, Camera};
use crate::cues::{
    face_match, gt_confidence, render_reference, ConfidenceTriple, CueSet, GtRenders,
};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, RgbImage};
use crate::hull::convex_hull;
use crate::io;
use crate::mesh::{build_mesh, default_eps_d, DepthMesh, TriMesh, DEFAULT_EPS_EDGE};
use crate::raster::{normalize_inverse_depth, rasterize_coverage, render_trimesh};
use crate::rng::substream;
use crate::scene::DepthMap;

const HULL_ATTEMPTS: usize = 16;
const POSE_ATTEMPTS: usize = 16;
const MIN_REFERENCE_PIXELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccluderMode {
    /// Occluder box inside the scene bounding box.
    Object,
    /// Occluder box around a sampled scene point, sized by its depth.
    Scene,
}

/// Random thick polylines plus rectangles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeConfig {
    pub min_strokes: usize,
    pub max_strokes: usize,
    /// Vertices per polyline.
    pub max_vertices: usize,
    /// Stroke width range as a fraction of the shorter image side.
    pub width: (f64, f64),
    /// Segment length range as a fraction of the shorter image side.
    pub length: (f64, f64),
    pub max_rectangles: usize,
    /// Rectangle side range as a fraction of the shorter image side.
    pub rectangle: (f64, f64),
}

impl Default for StrokeConfig {
    fn default() -> Self {
        Self {
            min_strokes: 1,
            max_strokes: 4,
            max_vertices: 6,
            width: (0.04, 0.12),
            length: (0.1, 0.35),
            max_rectangles: 2,
            rectangle: (0.1, 0.4),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Reference pose angle standard deviation (radians).
    pub sigma_ar: f64,
    /// Reference translation standard deviation, relative to the minimum depth.
    pub sigma_tr: f64,
    /// Perturbation angle standard deviation (radians).
    pub sigma_ap: f64,
    /// Perturbation translation standard deviation, relative to the minimum reference depth.
    pub sigma_tp: f64,
    pub p_occluder: f64,
    pub o_min: f64,
    pub o_max: f64,
    pub occluder_points: usize,
    /// Probability of removing reference content behind a 3D occluder.
    pub p_drop_reference: f64,
    pub mode: OccluderMode,
    pub eps_edge: f64,
    pub eps_d: Option<f64>,
    pub strokes: StrokeConfig,
    pub seed: u64,
}

impl SynthConfig {
    pub fn for_mode(mode: OccluderMode) -> Self {
        let (o_min, o_max) = match mode {
            OccluderMode::Object => (0.6, 1.0),
            OccluderMode::Scene => (0.6, 0.8),
        };
        Self {
            sigma_ar: 0.3,
            sigma_tr: 0.2,
            sigma_ap: 0.2,
            sigma_tp: 0.01,
            p_occluder: 0.2,
            o_min,
            o_max,
            occluder_points: 32,
            p_drop_reference: 0.2,
            mode,
            eps_edge: DEFAULT_EPS_EDGE,
            eps_d: None,
            strokes: StrokeConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.sigma_ar, self.sigma_tr, self.sigma_ap, self.sigma_tp];
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config(
                "standard deviations must be finite and nonnegative".into(),
            ));
        }
        for (name, p) in [
            ("p_occluder", self.p_occluder),
            ("p_drop_reference", self.p_drop_reference),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.o_min > 0.0 && self.o_min <= self.o_max) {
            return Err(Error::Config(format!(
                "occluder scale range ({}, {}) is invalid",
                self.o_min, self.o_max
            )));
        }
        if self.occluder_points < 4 {
            return Err(Error::Config("an occluder needs at least 4 points".into()));
        }
        let s = &self.strokes;
        if s.min_strokes > s.max_strokes
            || s.max_vertices < 2
            || s.width.0 > s.width.1
            || s.length.0 > s.length.1
            || s.rectangle.0 > s.rectangle.1
        {
            return Err(Error::Config("stroke ranges are inconsistent".into()));
        }
        Ok(())
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::for_mode(OccluderMode::Object)
    }
}

/// Rigid transform `x' = R x + t` with the Euler angles it was built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidSample {
    pub angles: [f64; 3],
    pub translation: [f64; 3],
}

impl RigidSample {
    pub fn identity() -> Self {
        Self {
            angles: [0.0; 3],
            translation: [0.0; 3],
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_euler_zyx(&Vector3::from(self.angles))
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    fn sample(rng: &mut impl Rng, sigma_angle: f64, sigma_translation: f64) -> Self {
        let mut draw = |sigma: f64| -> [f64; 3] {
            match Normal::new(0.0, sigma) {
                Ok(n) if sigma > 0.0 => [n.sample(rng), n.sample(rng), n.sample(rng)],
                _ => [0.0; 3],
            }
        };
        let angles = draw(sigma_angle);
        let translation = draw(sigma_translation);
        Self {
            angles,
            translation,
        }
    }
}

/// Intrinsics assumed for a single image: `f = (W + H) / 2`, principal point at the center.
pub fn single_image_intrinsics(width: usize, height: usize) -> Matrix3<f64> {
    Camera::intrinsics(
        (width + height) as f64 / 2.0,
        width as f64 / 2.0,
        height as f64 / 2.0,
    )
}

/// Random reference extrinsics around the identity pose.
pub fn sample_reference_pose(
    depth: &DepthMap,
    cfg: &SynthConfig,
    rng: &mut impl Rng,
) -> Result<(Camera, RigidSample)> {
    let min_d = depth.min_valid().ok_or(Error::EmptyDepth)?;
    let pose = RigidSample::sample(rng, cfg.sigma_ar, cfg.sigma_tr * min_d);
    let k = single_image_intrinsics(depth.width(), depth.height());
    let cam = Camera::new(k, pose.rotation(), pose.translation())?;
    Ok((cam, pose))
}

/// Applies a rigid transform to every vertex and moves the source camera along, so
/// the shadow volume extruded from the result is the transformed shadow volume.
pub fn perturb_mesh(mesh: &DepthMesh, perturbation: &RigidSample) -> Result<DepthMesh> {
    let r = perturbation.rotation();
    let t = perturbation.translation();
    let mut out = mesh.clone();
    out.mesh.transform(&r, &t);
    let src = &mesh.source_camera;
    // x = Rᵀ(x' - t), so the camera maps x' by R_c Rᵀ x' + (t_c - R_c Rᵀ t)
    let rc = src.rotation() * r.transpose();
    out.source_camera = Camera::new(*src.k(), rc, src.translation() - rc * t)?;
    Ok(out)
}

/// Random perturbation for a reference whose minimum depth is `min_depth`.
pub fn sample_perturbation(cfg: &SynthConfig, min_depth: f64, rng: &mut impl Rng) -> RigidSample {
    RigidSample::sample(rng, cfg.sigma_ap, cfg.sigma_tp * min_depth)
}

/// Sampled occluder: its box, the points drawn in it and their hull.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub points: Vec<[f64; 3]>,
    #[serde(skip)]
    pub hull: TriMesh,
}

fn bounds(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Samples the occluder box for `points` seen by `cam`.
fn occluder_box(
    points: &[Vector3<f64>],
    cam: &Camera,
    width: usize,
    height: usize,
    cfg: &SynthConfig,
    rng: &mut impl Rng,
) -> (Vector3<f64>, Vector3<f64>) {
    let (lo, hi) = bounds(points);
    let extent = hi - lo;
    match cfg.mode {
        OccluderMode::Object => {
            let size = extent.map(|e| e * uniform(rng, cfg.o_min, cfg.o_max));
            let start = Vector3::from_fn(|i, _| lo[i] + uniform(rng, 0.0, extent[i] - size[i]));
            (start, start + size)
        }
        OccluderMode::Scene => {
            let center = points[rng.random_range(0..points.len())];
            let depth = cam.world_to_camera(&center).z.max(0.0);
            let dir = extent / extent.norm().max(f64::MIN_POSITIVE);
            let size = dir.map(|e| e * depth * uniform(rng, cfg.o_min, cfg.o_max));
            let (mut blo, mut bhi) = (center - size / 2.0, center + size / 2.0);
            // clip x and y to the frustum slice at the center depth
            if depth > 0.0 {
                let k = cam.k();
                let corner = |px: f64, py: f64| {
                    cam.camera_to_world(&Vector3::new(
                        (px - k[(0, 2)]) / k[(0, 0)] * depth,
                        (py - k[(1, 2)]) / k[(1, 1)] * depth,
                        depth,
                    ))
                };
                let (flo, fhi) = bounds(&[corner(0.0, 0.0), corner(width as f64, height as f64)]);
                for i in 0..2 {
                    blo[i] = blo[i].max(flo[i]);
                    bhi[i] = bhi[i].min(fhi[i]).max(blo[i]);
                }
            }
            (blo, bhi)
        }
    }
}

/// Samples a convex occluder around `points` and renders its coverage into `cam`.
pub fn sample_occluder_mask(
    points: &[Vector3<f64>],
    cam: &Camera,
    width: usize,
    height: usize,
    cfg: &SynthConfig,
    rng: &mut impl Rng,
) -> Result<(Mask, Occluder)> {
    if points.is_empty() {
        return Err(Error::EmptyDepth);
    }
    for _ in 0..HULL_ATTEMPTS {
        let (lo, hi) = occluder_box(points, cam, width, height, cfg, rng);
        let samples: Vec<Vector3<f64>> = (0..cfg.occluder_points)
            .map(|_| Vector3::from_fn(|i, _| uniform(rng, lo[i], hi[i])))
            .collect();
        if let Some(hull) = convex_hull(&samples) {
            let mask = hull_mask(&hull, cam, width, height)?;
            let occluder = Occluder {
                lo: lo.into(),
                hi: hi.into(),
                points: samples.iter().map(|p| (*p).into()).collect(),
                hull,
            };
            return Ok((mask, occluder));
        }
    }
    Err(Error::DegenerateHull(HULL_ATTEMPTS))
}

/// Pixels covered by any facet of `hull`.
pub fn hull_mask(hull: &TriMesh, cam: &Camera, width: usize, height: usize) -> Result<Mask> {
    rasterize_coverage(hull, cam, &Grid::filled(width, height, f64::INFINITY))
}

fn segment_distance(p: Point2<f64>, a: Point2<f64>, b: Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * s)).norm()
}

/// Free-form 2D mask of thick polylines and rectangles.
pub fn sample_stroke_mask(
    width: usize,
    height: usize,
    cfg: &StrokeConfig,
    rng: &mut impl Rng,
) -> Mask {
    let side = width.min(height) as f64;
    let mut mask = Mask::filled(width, height, false);
    let strokes = rng.random_range(cfg.min_strokes..=cfg.max_strokes);
    for _ in 0..strokes {
        let thickness = side * uniform(rng, cfg.width.0, cfg.width.1);
        let vertices = rng.random_range(2..=cfg.max_vertices);
        let mut p = Point2::new(
            uniform(rng, 0.0, width as f64),
            uniform(rng, 0.0, height as f64),
        );
        let mut path = vec![p];
        for _ in 1..vertices {
            let angle = uniform(rng, 0.0, std::f64::consts::TAU);
            let len = side * uniform(rng, cfg.length.0, cfg.length.1);
            p = Point2::new(
                (p.x + len * angle.cos()).clamp(0.0, width as f64),
                (p.y + len * angle.sin()).clamp(0.0, height as f64),
            );
            path.push(p);
        }
        for y in 0..height {
            for x in 0..width {
                let c = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                if path
                    .windows(2)
                    .any(|s| segment_distance(c, s[0], s[1]) <= thickness / 2.0)
                {
                    mask.set(x, y, true);
                }
            }
        }
    }
    let rects = rng.random_range(0..=cfg.max_rectangles);
    for _ in 0..rects {
        let w = side * uniform(rng, cfg.rectangle.0, cfg.rectangle.1);
        let h = side * uniform(rng, cfg.rectangle.0, cfg.rectangle.1);
        let x0 = uniform(rng, 0.0, (width as f64 - w).max(0.0));
        let y0 = uniform(rng, 0.0, (height as f64 - h).max(0.0));
        for y in 0..height {
            for x in 0..width {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                if cx >= x0 && cx < x0 + w && cy >= y0 && cy < y0 + h {
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Occluder,
    Strokes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub index: u64,
    pub reference_camera: Camera,
    pub reference_pose: RigidSample,
    pub perturbation: RigidSample,
    pub mask_kind: MaskKind,
    pub occluder: Option<Occluder>,
    pub reference_dropped: bool,
    pub pose_attempts: usize,
}

/// One training tuple.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub image: RgbImage,
    pub mask: Mask,
    /// The image mesh seen from the reference camera.
    pub reference_image: RgbImage,
    /// Reference depth, invalid off the mesh and where occluded content was dropped.
    pub reference_depth: DepthMap,
    /// Cues rendered from the perturbed reference mesh.
    pub cues: CueSet,
    pub gt: ConfidenceTriple,
    /// Unperturbed renders the ground truth was computed from.
    pub gt_renders: GtRenders,
    pub provenance: Provenance,
}

/// Overrides for the sampled transforms, used to build controlled samples.
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleOverrides {
    pub reference_pose: Option<RigidSample>,
    pub perturbation: Option<RigidSample>,
}

/// Synthesizes sample `index` from an image and its depth.
pub fn make_sample(
    image: &RgbImage,
    depth: &DepthMap,
    cfg: &SynthConfig,
    index: u64,
) -> Result<SynthSample> {
    make_sample_with(image, depth, cfg, index, SampleOverrides::default())
}

pub fn make_sample_with(
    image: &RgbImage,
    depth: &DepthMap,
    cfg: &SynthConfig,
    index: u64,
    overrides: SampleOverrides,
) -> Result<SynthSample> {
    cfg.validate()?;
    let (w, h) = image.dims();
    if (depth.width(), depth.height()) != (w, h) {
        return Err(Error::DimensionMismatch(
            "image and depth differ in size".into(),
        ));
    }
    let mut rng = substream(cfg.seed, "synth", index);
    let target = Camera::new(
        single_image_intrinsics(w, h),
        Matrix3::identity(),
        Vector3::zeros(),
    )?;
    let mesh = build_mesh(depth, image, &target, cfg.eps_edge)?;
    let target_faces = render_trimesh(&mesh.mesh, &target, w, h)?.face_index;

    // reference view of the image mesh; retried when it sees nothing usable
    let mut attempt = 0;
    let (ref_cam, ref_pose, ref_render) = loop {
        attempt += 1;
        let (cam, pose) = match overrides.reference_pose {
            Some(p) => (Camera::new(*target.k(), p.rotation(), p.translation())?, p),
            None => sample_reference_pose(depth, cfg, &mut rng)?,
        };
        let render = render_trimesh(&mesh.mesh, &cam, w, h)?;
        if render.front.count() >= MIN_REFERENCE_PIXELS
            || overrides.reference_pose.is_some()
            || attempt >= POSE_ATTEMPTS
        {
            break (cam, pose, render);
        }
    };
    let ref_depth_values = ref_render.depth.clone();
    let mut ref_valid = ref_render.front.clone();

    let use_occluder = rng.random_bool(cfg.p_occluder);
    let (mask, occluder, dropped) = if use_occluder {
        let (mask, occ) = sample_occluder_mask(&mesh.mesh.positions, &target, w, h, cfg, &mut rng)?;
        let mut dropped = rng.random_bool(cfg.p_drop_reference);
        if dropped {
            let hidden = hull_mask(&occ.hull, &ref_cam, w, h)?;
            let kept = ref_valid.and(&hidden.not());
            // a reference emptied by the drop carries no geometry at all
            dropped = kept.count() >= MIN_REFERENCE_PIXELS;
            if dropped {
                ref_valid = kept;
            }
        }
        (mask, Some(occ), dropped)
    } else {
        (
            sample_stroke_mask(w, h, &cfg.strokes, &mut rng),
            None,
            false,
        )
    };

    let ref_depth = DepthMap::new(ref_depth_values, ref_valid)?;
    let reference_image = ref_render.color.clone();
    let ref_mesh = build_mesh(&ref_depth, &reference_image, &ref_cam, cfg.eps_edge)?;
    let eps_d = cfg
        .eps_d
        .unwrap_or_else(|| default_eps_d(&ref_mesh.mesh.positions));
    let min_ref = ref_depth.min_valid().ok_or(Error::EmptyDepth)?;
    let perturbation = match overrides.perturbation {
        Some(p) => p,
        None => sample_perturbation(cfg, min_ref, &mut rng),
    };
    let perturbed = perturb_mesh(&ref_mesh, &perturbation)?;

    let truth = render_reference(ref_mesh, &target, w, h, Some(eps_d))?;
    let gt_renders = GtRenders {
        front: truth.render.front.clone(),
        back: truth.render.back.clone(),
        shadow: truth.shadow.clone(),
        face_match: face_match(
            &target_faces,
            &ref_render.face_index,
            &truth.render.source_pixel,
        )?,
    };
    let gt = gt_confidence(&gt_renders, &mask)?;

    let cue_render = render_reference(perturbed, &target, w, h, Some(eps_d))?;
    let cues = CueSet {
        color: cue_render.render.color.clone(),
        front: cue_render.render.front.clone(),
        back: cue_render.render.back.clone(),
        inv_depth: normalize_inverse_depth(&cue_render.render.depth, &cue_render.render.valid),
        shadow: cue_render.shadow,
        hint: None,
        source_pixel: cue_render.render.source_pixel.clone(),
        reference: 0,
        distance: view_distance(&target, &ref_cam),
    };

    Ok(SynthSample {
        image: image.clone(),
        mask,
        reference_image,
        reference_depth: ref_depth,
        cues,
        gt,
        gt_renders,
        provenance: Provenance {
            seed: cfg.seed,
            index,
            reference_camera: ref_cam,
            reference_pose: ref_pose,
            perturbation,
            mask_kind: if use_occluder {
                MaskKind::Occluder
            } else {
                MaskKind::Strokes
            },
            occluder,
            reference_dropped: dropped,
            pose_attempts: attempt,
        },
    })
}

#[derive(Serialize, Deserialize)]
struct CueMeta {
    target: usize,
    reference: usize,
    distance: f64,
}

/// Writes a cue set as `color.png, front.png, back.png, invdepth.pfm, shadow.png, meta.json`.
pub fn write_cues(dir: &Path, cues: &CueSet, target: usize) -> Result<()> {
    io::write_rgb(&dir.join("color.png"), &cues.color)?;
    io::write_mask(&dir.join("front.png"), &cues.front)?;
    io::write_mask(&dir.join("back.png"), &cues.back)?;
    io::write_scalar_pfm(&dir.join("invdepth.pfm"), &cues.inv_depth)?;
    io::write_mask(&dir.join("shadow.png"), &cues.shadow)?;
    if let Some(hint) = &cues.hint {
        io::write_rgb(&dir.join("hint.png"), hint)?;
    }
    io::write_json(
        &dir.join("meta.json"),
        &CueMeta {
            target,
            reference: cues.reference,
            distance: cues.distance,
        },
    )
}

/// Writes a sample directory: image, mask, reference view, cues, ground-truth masks and provenance.
pub fn write_sample(dir: &Path, sample: &SynthSample) -> Result<()> {
    io::write_rgb(&dir.join("image.png"), &sample.image)?;
    io::write_mask(&dir.join("mask.png"), &sample.mask)?;
    io::write_rgb(&dir.join("reference.png"), &sample.reference_image)?;
    io::write_depth(&dir.join("reference_depth.pfm"), &sample.reference_depth)?;
    write_cues(dir, &sample.cues, 0)?;
    io::write_mask(&dir.join("gt_cf.png"), &sample.gt.front)?;
    io::write_mask(&dir.join("gt_cb.png"), &sample.gt.back)?;
    io::write_mask(&dir.join("gt_cs.png"), &sample.gt.shadow)?;
    io::write_json(&dir.join("provenance.json"), &sample.provenance)
}

/// Reads the ground-truth masks written by [`write_sample`].
pub fn read_gt(dir: &Path) -> Result<ConfidenceTriple> {
    Ok(ConfidenceTriple {
        front: io::read_mask(&dir.join("gt_cf.png"), "gt_cf")?,
        back: io::read_mask(&dir.join("gt_cb.png"), "gt_cb")?,
        shadow: io::read_mask(&dir.join("gt_cs.png"), "gt_cs")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tilted_plane(w: usize, h: usize) -> (RgbImage, DepthMap) {
        let image = Grid::from_fn(w, h, |x, y| [x as f64 / w as f64, y as f64 / h as f64, 0.5]);
        let depth = DepthMap::from_values(Grid::from_fn(w, h, |x, _| 3.0 + 0.01 * x as f64));
        (image, depth)
    }

    #[test]
    fn zero_sigmas_give_identity_pose() {
        let (_, depth) = tilted_plane(8, 8);
        let mut cfg = SynthConfig::default();
        cfg.sigma_ar = 0.0;
        cfg.sigma_tr = 0.0;
        let (cam, pose) = sample_reference_pose(&depth, &cfg, &mut substream(1, "t", 0)).unwrap();
        assert_eq!(*cam.rotation(), Matrix3::identity());
        assert_eq!(*cam.translation(), Vector3::zeros());
        assert_eq!(pose, RigidSample::identity());
    }

    #[test]
    fn perturbation_is_rigid_and_keeps_topology() {
        let (image, depth) = tilted_plane(6, 5);
        let cam = Camera::new(
            single_image_intrinsics(6, 5),
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap();
        let mesh = build_mesh(&depth, &image, &cam, 0.04).unwrap();
        let p = RigidSample {
            angles: [0.2, -0.1, 0.3],
            translation: [0.1, 0.2, -0.05],
        };
        let out = perturb_mesh(&mesh, &p).unwrap();
        assert_eq!(out.mesh.faces, mesh.mesh.faces);
        assert_eq!(out.silhouette_edges, mesh.silhouette_edges);
        for i in 0..mesh.mesh.positions.len() {
            for j in 0..i {
                let a = (mesh.mesh.positions[i] - mesh.mesh.positions[j]).norm();
                let b = (out.mesh.positions[i] - out.mesh.positions[j]).norm();
                assert!((a - b).abs() < 1e-9);
            }
            // the moved camera sees each vertex where the original camera did
            let before = mesh.source_camera.world_to_camera(&mesh.mesh.positions[i]);
            let after = out.source_camera.world_to_camera(&out.mesh.positions[i]);
            assert!((before - after).norm() < 1e-9);
        }
        let same = perturb_mesh(&mesh, &RigidSample::identity()).unwrap();
        assert_eq!(same.mesh.positions, mesh.mesh.positions);
    }

    #[test]
    fn stroke_mask_is_nonempty_and_deterministic() {
        let cfg = StrokeConfig::default();
        let a = sample_stroke_mask(32, 24, &cfg, &mut substream(3, "m", 0));
        let b = sample_stroke_mask(32, 24, &cfg, &mut substream(3, "m", 0));
        assert_eq!(a, b);
        assert!(a.count() > 0);
    }

    #[test]
    fn no_occluders_means_strokes() {
        let (image, depth) = tilted_plane(16, 12);
        let mut cfg = SynthConfig::default();
        cfg.p_occluder = 0.0;
        for i in 0..5 {
            let s = make_sample(&image, &depth, &cfg, i).unwrap();
            assert_eq!(s.provenance.mask_kind, MaskKind::Strokes);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.o_min = 0.9;
        cfg.o_max = 0.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
