//! Depth-map meshing, silhouette extraction and shadow-volume walls.

use std::collections::HashMap;

use nalgebra::{Matrix3, Point2, Vector3};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::RgbImage;
use crate::scene::DepthMap;

/// Default relative depth jump above which a grid edge is cut.
pub const DEFAULT_EPS_EDGE: f64 = 4e-2;

/// Shadow walls extend this many scene diameters past their silhouette.
pub const EXTRUSION_DIAMETERS: f64 = 10.0;

/// Indexed triangle mesh with optional per-vertex color and source-pixel attributes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub positions: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// Empty, or one entry per vertex.
    pub colors: Vec<[f64; 3]>,
    /// Empty, or one entry per vertex.
    pub source_pixels: Vec<Point2<f64>>,
}

impl TriMesh {
    pub fn from_faces(positions: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Self {
        Self {
            positions,
            faces,
            ..Default::default()
        }
    }

    /// Applies `v ↦ R v + t` to every vertex.
    pub fn transform(&mut self, r: &Matrix3<f64>, t: &Vector3<f64>) {
        for p in &mut self.positions {
            *p = r * *p + t;
        }
    }
}

/// Mesh lifted from one view's depth map.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMesh {
    pub mesh: TriMesh,
    /// Edges used by exactly one face, oriented as in that face.
    pub silhouette_edges: Vec<[usize; 2]>,
    pub source_camera: Camera,
}

impl DepthMesh {
    pub fn num_vertices(&self) -> usize {
        self.mesh.positions.len()
    }

    pub fn num_faces(&self) -> usize {
        self.mesh.faces.len()
    }
}

/// Side walls of a shadow volume.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShadowMesh {
    pub mesh: TriMesh,
}

impl ShadowMesh {
    pub fn num_faces(&self) -> usize {
        self.mesh.faces.len()
    }
}

/// Relative depth change between two neighbouring samples.
#[inline]
pub fn edge_drop_value(d_i: f64, d_j: f64) -> f64 {
    2.0 * (d_i - d_j).abs() / (d_i + d_j)
}

/// Regular-grid mesh over the valid pixels of `depth`, cut at depth discontinuities.
///
/// Every grid cell `(p, p+dx, p+dy, p+dx+dy)` is split along the `(p+dx, p+dy)`
/// diagonal. A triangle survives only if all three vertices are valid and none of
/// its edges exceeds `eps_edge` under [`edge_drop_value`]. Faces are wound
/// counter-clockwise on screen as seen from `cam`.
pub fn build_mesh(
    depth: &DepthMap,
    image: &RgbImage,
    cam: &Camera,
    eps_edge: f64,
) -> Result<DepthMesh> {
    let (w, h) = (depth.width(), depth.height());
    if image.dims() != (w, h) {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, depth is {w}x{h}",
            image.width(),
            image.height()
        )));
    }
    if !(eps_edge > 0.0) {
        return Err(Error::Config(format!(
            "eps_edge must be positive, got {eps_edge}"
        )));
    }

    let mut mesh = TriMesh::default();
    let mut index = vec![usize::MAX; w * h];
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = depth.at(x, y) {
                let pixel = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                index[y * w + x] = mesh.positions.len();
                mesh.positions.push(cam.unproject(&pixel, d));
                mesh.colors.push(*image.get(x, y));
                mesh.source_pixels.push(pixel);
            }
        }
    }
    if mesh.positions.is_empty() {
        return Err(Error::EmptyDepth);
    }

    let keep = |a: (usize, usize), b: (usize, usize)| {
        let da = *depth.values().get(a.0, a.1);
        let db = *depth.values().get(b.0, b.1);
        edge_drop_value(da, db) <= eps_edge
    };
    let try_face = |corners: [(usize, usize); 3], faces: &mut Vec<[usize; 3]>| {
        let ids = corners.map(|(x, y)| index[y * w + x]);
        if ids.contains(&usize::MAX) {
            return;
        }
        if keep(corners[0], corners[1])
            && keep(corners[1], corners[2])
            && keep(corners[2], corners[0])
        {
            faces.push(ids);
        }
    };
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let p = (x, y);
            let px = (x + 1, y);
            let py = (x, y + 1);
            let pxy = (x + 1, y + 1);
            try_face([p, py, px], &mut mesh.faces);
            try_face([px, py, pxy], &mut mesh.faces);
        }
    }

    let silhouette_edges = silhouette_edges(&mesh.faces);
    Ok(DepthMesh {
        mesh,
        silhouette_edges,
        source_camera: cam.clone(),
    })
}

/// Edges that belong to exactly one face, in first-seen order and oriented as in their face.
pub fn silhouette_edges(faces: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
    for f in faces {
        for e in 0..3 {
            *counts.entry(key(f[e], f[(e + 1) % 3])).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for f in faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            if counts[&key(a, b)] == 1 {
                out.push([a, b]);
            }
        }
    }
    out
}

/// Number of faces sharing each undirected edge.
pub fn edge_face_counts(faces: &[[usize; 3]]) -> HashMap<(usize, usize), u32> {
    let mut counts = HashMap::new();
    for f in faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    counts
}

/// Diameter of an enclosing sphere (centered on the bounding box) of the given points.
pub fn bounding_sphere_diameter<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> f64 {
    let points: Vec<&Vector3<f64>> = points.into_iter().collect();
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = *points[0];
    let mut hi = *points[0];
    for p in &points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let center = (lo + hi) * 0.5;
    2.0 * points
        .iter()
        .map(|p| (*p - center).norm())
        .fold(0.0, f64::max)
}

/// Default wall length for a set of lifted points.
pub fn default_eps_d<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> f64 {
    EXTRUSION_DIAMETERS * bounding_sphere_diameter(points)
}

/// Extrudes every silhouette edge away from the source camera by `eps_d`, producing
/// two wall triangles `(v1, v2, v2')` and `(v1, v2', v1')` per edge.
pub fn build_shadow_mesh(mesh: &DepthMesh, eps_d: f64) -> Result<ShadowMesh> {
    if mesh.silhouette_edges.is_empty() {
        return Err(Error::NoSilhouette);
    }
    if !(eps_d > 0.0) || !eps_d.is_finite() {
        return Err(Error::Config(format!(
            "eps_d must be positive, got {eps_d}"
        )));
    }
    let center = mesh.source_camera.center();
    let positions = &mesh.mesh.positions;

    // shadow vertex pair (original, extruded) per silhouette vertex
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut out = TriMesh::default();
    let mut pair = |v: usize, out: &mut TriMesh| -> Result<usize> {
        if let Some(&s) = slot.get(&v) {
            return Ok(s);
        }
        let p = positions[v];
        let ray = p - center;
        let len = ray.norm();
        if !(len > 0.0) {
            return Err(Error::ZeroLengthRay(v));
        }
        let s = out.positions.len();
        out.positions.push(p);
        out.positions.push(p + ray * (eps_d / len));
        slot.insert(v, s);
        Ok(s)
    };
    for &[a, b] in &mesh.silhouette_edges {
        let sa = pair(a, &mut out)?;
        let sb = pair(b, &mut out)?;
        let (v1, v1x, v2, v2x) = (sa, sa + 1, sb, sb + 1);
        out.faces.push([v1, v2, v2x]);
        out.faces.push([v1, v2x, v1x]);
    }
    Ok(ShadowMesh { mesh: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Mask};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::new(
            Camera::intrinsics(20.0, w as f64 / 2.0, h as f64 / 2.0),
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    fn flat(w: usize, h: usize, d: f64) -> DepthMap {
        DepthMap::from_values(Grid::filled(w, h, d))
    }

    #[test]
    fn criterion_value_for_five_percent_jump() {
        let v = edge_drop_value(1.00, 1.05);
        assert_relative_eq!(v, 0.04878048780487805, epsilon = 1e-12);
        assert!(v > DEFAULT_EPS_EDGE);
    }

    #[test]
    fn two_by_two_quad() {
        let m = build_mesh(
            &flat(2, 2, 3.0),
            &RgbImage::filled(2, 2, [0.5; 3]),
            &cam(2, 2),
            0.04,
        )
        .unwrap();
        assert_eq!(m.num_faces(), 2);
        assert_eq!(m.silhouette_edges.len(), 4);
        // the (p+dx, p+dy) diagonal is vertices 1 and 2 and is shared
        let diag = m
            .silhouette_edges
            .iter()
            .any(|e| (e[0] == 1 && e[1] == 2) || (e[0] == 2 && e[1] == 1));
        assert!(!diag);
    }

    #[test]
    fn constant_depth_keeps_every_cell() {
        let (w, h) = (7, 5);
        let m = build_mesh(
            &flat(w, h, 2.0),
            &RgbImage::filled(w, h, [0.0; 3]),
            &cam(w, h),
            1e-9,
        )
        .unwrap();
        assert_eq!(m.num_faces(), 2 * (w - 1) * (h - 1));
        // silhouettes are exactly the grid boundary
        assert_eq!(m.silhouette_edges.len(), 2 * (w - 1) + 2 * (h - 1));
        for c in edge_face_counts(&m.mesh.faces).values() {
            assert!(*c == 1 || *c == 2);
        }
    }

    #[test]
    fn depth_step_drops_crossing_cells() {
        let (w, h) = (6, 4);
        let depth = Grid::from_fn(w, h, |x, _| if x < 3 { 1.0 } else { 1.05 });
        let m = build_mesh(
            &DepthMap::from_values(depth),
            &RgbImage::filled(w, h, [0.0; 3]),
            &cam(w, h),
            DEFAULT_EPS_EDGE,
        )
        .unwrap();
        // column of cells between x=2 and x=3 is removed
        assert_eq!(m.num_faces(), 2 * (w - 2) * (h - 1));
    }

    #[test]
    fn invalid_pixels_are_compacted_away() {
        let mut values = Grid::filled(3, 3, 1.0);
        values.set(1, 1, 0.0);
        let m = build_mesh(
            &DepthMap::from_values(values),
            &RgbImage::filled(3, 3, [0.0; 3]),
            &cam(3, 3),
            0.04,
        )
        .unwrap();
        assert_eq!(m.num_vertices(), 8);
        assert!(m.mesh.faces.iter().flatten().all(|&i| i < 8));
    }

    #[test]
    fn empty_depth_is_an_error() {
        let d = DepthMap::new(Grid::filled(2, 2, 1.0), Mask::filled(2, 2, false)).unwrap();
        assert!(matches!(
            build_mesh(&d, &RgbImage::filled(2, 2, [0.0; 3]), &cam(2, 2), 0.04),
            Err(Error::EmptyDepth)
        ));
    }

    #[test]
    fn vertices_reproject_to_their_source_pixels() {
        let (w, h) = (9, 6);
        let depth = Grid::from_fn(w, h, |x, y| 1.0 + 0.1 * x as f64 + 0.05 * y as f64);
        let c = Camera::look_at(
            Camera::intrinsics(12.0, 4.5, 3.0),
            Vector3::new(0.3, -0.2, -1.0),
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .unwrap();
        let m = build_mesh(
            &DepthMap::from_values(depth),
            &RgbImage::filled(w, h, [0.0; 3]),
            &c,
            0.5,
        )
        .unwrap();
        for (p, src) in m.mesh.positions.iter().zip(&m.mesh.source_pixels) {
            let (px, _) = c.project(p).unwrap();
            assert!((px - src).norm() < 1e-5);
        }
    }

    #[test]
    fn extrusion_along_the_ray() {
        let depth = flat(2, 2, 2.0);
        let m = build_mesh(&depth, &RgbImage::filled(2, 2, [0.0; 3]), &cam(2, 2), 0.04).unwrap();
        let s = build_shadow_mesh(&m, 3.0).unwrap();
        assert_eq!(s.num_faces(), 8);
        for pair in s.mesh.positions.chunks(2) {
            let (v, vx) = (pair[0], pair[1]);
            assert_relative_eq!((vx - v).norm(), 3.0, epsilon = 1e-12);
            let colinear = v.normalize().cross(&vx.normalize()).norm();
            assert!(colinear < 1e-9);
            assert!(vx.norm() > v.norm());
        }
    }

    #[test]
    fn on_axis_vertex_extrudes_to_expected_point() {
        // single silhouette vertex on the optical axis at depth 2
        let mut tri = TriMesh::default();
        tri.positions = vec![
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(1.0, 0.0, 2.0),
            Vector3::new(0.0, 1.0, 2.0),
        ];
        tri.faces = vec![[0, 1, 2]];
        let m = DepthMesh {
            silhouette_edges: silhouette_edges(&tri.faces),
            mesh: tri,
            source_camera: cam(4, 4),
        };
        let s = build_shadow_mesh(&m, 3.0).unwrap();
        assert_relative_eq!(
            s.mesh.positions[1],
            Vector3::new(0.0, 0.0, 5.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_length_ray_is_an_error() {
        let mut tri = TriMesh::default();
        tri.positions = vec![Vector3::zeros(), Vector3::x(), Vector3::y()];
        tri.faces = vec![[0, 1, 2]];
        let m = DepthMesh {
            silhouette_edges: silhouette_edges(&tri.faces),
            mesh: tri,
            source_camera: cam(4, 4),
        };
        assert!(matches!(
            build_shadow_mesh(&m, 1.0),
            Err(Error::ZeroLengthRay(0))
        ));
    }

    #[test]
    fn bounding_sphere_of_unit_cube_corners() {
        let pts: Vec<_> = (0..8)
            .map(|i| Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        assert_relative_eq!(bounding_sphere_diameter(&pts), 3f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(default_eps_d(&pts), 10.0 * 3f64.sqrt(), epsilon = 1e-12);
    }
}
