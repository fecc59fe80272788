//! Software z-buffer rasterizer producing the per-reference maps in a target frame.
//!
//! Pixel centers are sampled at `(x + 0.5, y + 0.5)`. Shared edges follow a
//! top-left fill rule with canonically ordered edge functions, so a pixel
//! center on an edge shared by two triangles is claimed by exactly one of them.
//! Triangles are clipped against a near plane in camera space and attributes are
//! interpolated perspective-correctly.

use nalgebra::{Point2, Vector3};
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, RgbImage};
use crate::mesh::{DepthMesh, ShadowMesh, TriMesh};

/// Camera-frame clipping distance.
pub const NEAR_PLANE: f64 = 1e-3;

const BAND_ROWS: usize = 16;

/// Everything a reference mesh contributes to one target view.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    /// Interpolated vertex color where `front` is set, zero elsewhere.
    pub color: RgbImage,
    pub front: Mask,
    pub back: Mask,
    /// Camera-frame z of the nearest hit, 0 where nothing was hit.
    pub depth: Grid<f64>,
    pub shadow: Mask,
    /// Winning face id, -1 where nothing was hit.
    pub face_index: Grid<i64>,
    pub valid: Mask,
    /// Interpolated source-pixel coordinate of the nearest hit.
    pub source_pixel: Grid<Option<Point2<f64>>>,
}

impl RenderOutput {
    pub fn width(&self) -> usize {
        self.valid.width()
    }

    pub fn height(&self) -> usize {
        self.valid.height()
    }

    /// Depth with misses mapped to +∞, as used by the shadow depth test.
    pub fn depth_limit(&self) -> Grid<f64> {
        self.depth
            .zip_map(&self.valid, |d, v| if *v { *d } else { f64::INFINITY })
    }
}

/// One rasterized sample of a face.
#[derive(Clone, Copy, Debug)]
pub struct Fragment {
    pub face: usize,
    pub depth: f64,
    /// Barycentric weights with respect to the original (unclipped) face.
    pub bary: [f64; 3],
    pub front: bool,
}

#[derive(Clone, Copy)]
struct ClipVertex {
    cam: Vector3<f64>,
    bary: [f64; 3],
}

struct ScreenTriangle {
    face: usize,
    front: bool,
    screen: [Point2<f64>; 3],
    inv_z: [f64; 3],
    bary_over_z: [[f64; 3]; 3],
    area: f64,
    y_range: (usize, usize),
    x_range: (usize, usize),
}

#[inline]
fn lex_le(a: &Point2<f64>, b: &Point2<f64>) -> bool {
    (a.x, a.y) <= (b.x, b.y)
}

/// Edge function, positive on the interior side of a positively oriented triangle.
/// Endpoints are evaluated in a canonical order so `edge(a, b, p) == -edge(b, a, p)` exactly.
#[inline]
fn edge(a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>) -> f64 {
    let raw =
        |a: &Point2<f64>, b: &Point2<f64>| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if lex_le(a, b) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

#[inline]
fn is_top_left(a: &Point2<f64>, b: &Point2<f64>) -> bool {
    let d = b - a;
    (d.y == 0.0 && d.x > 0.0) || d.y < 0.0
}

fn clip_near(poly: &[ClipVertex]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let a_in = a.cam.z >= NEAR_PLANE;
        let b_in = b.cam.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let s = (NEAR_PLANE - a.cam.z) / (b.cam.z - a.cam.z);
            let mut bary = [0.0; 3];
            for k in 0..3 {
                bary[k] = a.bary[k] + s * (b.bary[k] - a.bary[k]);
            }
            let mut cam = a.cam + (b.cam - a.cam) * s;
            cam.z = NEAR_PLANE;
            out.push(ClipVertex { cam, bary });
        }
    }
    out
}

fn setup(mesh: &TriMesh, cam: &Camera, width: usize, height: usize) -> Vec<ScreenTriangle> {
    let cam_pos: Vec<Vector3<f64>> = mesh
        .positions
        .iter()
        .map(|p| cam.world_to_camera(p))
        .collect();
    let mut tris = Vec::new();
    for (face, f) in mesh.faces.iter().enumerate() {
        let c = [cam_pos[f[0]], cam_pos[f[1]], cam_pos[f[2]]];
        if c.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            continue;
        }
        if c.iter().all(|v| v.z < NEAR_PLANE) {
            continue;
        }
        let normal = (c[1] - c[0]).cross(&(c[2] - c[0]));
        let facing = normal.dot(&c[0]);
        if facing == 0.0 {
            continue;
        }
        // normal pointing at the camera: counter-clockwise on screen
        let front = facing < 0.0;
        let poly = [
            ClipVertex {
                cam: c[0],
                bary: [1.0, 0.0, 0.0],
            },
            ClipVertex {
                cam: c[1],
                bary: [0.0, 1.0, 0.0],
            },
            ClipVertex {
                cam: c[2],
                bary: [0.0, 0.0, 1.0],
            },
        ];
        let clipped = if c.iter().all(|v| v.z >= NEAR_PLANE) {
            poly.to_vec()
        } else {
            clip_near(&poly)
        };
        for k in 1..clipped.len().saturating_sub(1) {
            let verts = [clipped[0], clipped[k], clipped[k + 1]];
            if let Some(t) = screen_triangle(face, front, verts, cam, width, height) {
                tris.push(t);
            }
        }
    }
    tris
}

fn screen_triangle(
    face: usize,
    front: bool,
    mut verts: [ClipVertex; 3],
    cam: &Camera,
    width: usize,
    height: usize,
) -> Option<ScreenTriangle> {
    let mut screen = verts.map(|v| cam.camera_to_pixel(&v.cam));
    let mut area = edge(&screen[0], &screen[1], &screen[2]);
    if !area.is_finite() || area == 0.0 {
        return None;
    }
    if area < 0.0 {
        verts.swap(1, 2);
        screen.swap(1, 2);
        area = -area;
    }
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &screen {
        min_x = min_x.min(s.x);
        max_x = max_x.max(s.x);
        min_y = min_y.min(s.y);
        max_y = max_y.max(s.y);
    }
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    let inv_z = verts.map(|v| 1.0 / v.cam.z);
    let bary_over_z = [0, 1, 2].map(|i| verts[i].bary.map(|b| b * inv_z[i]));
    Some(ScreenTriangle {
        face,
        front,
        screen,
        inv_z,
        bary_over_z,
        area,
        y_range: (y0 as usize, y1 as usize),
        x_range: (x0 as usize, x1 as usize),
    })
}

fn for_each_fragment_in_rows(
    tris: &[ScreenTriangle],
    rows: (usize, usize),
    mut emit: impl FnMut(usize, usize, Fragment),
) {
    for t in tris {
        let y_lo = t.y_range.0.max(rows.0);
        let y_hi = t.y_range.1.min(rows.1.saturating_sub(1));
        if y_lo > y_hi || rows.0 >= rows.1 {
            continue;
        }
        let [s0, s1, s2] = &t.screen;
        let tl = [
            is_top_left(s1, s2),
            is_top_left(s2, s0),
            is_top_left(s0, s1),
        ];
        for y in y_lo..=y_hi {
            for x in t.x_range.0..=t.x_range.1 {
                let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                let w = [edge(s1, s2, &p), edge(s2, s0, &p), edge(s0, s1, &p)];
                let inside = (0..3).all(|i| w[i] > 0.0 || (w[i] == 0.0 && tl[i]));
                if !inside {
                    continue;
                }
                let l = w.map(|wi| wi / t.area);
                let inv_z = l[0] * t.inv_z[0] + l[1] * t.inv_z[1] + l[2] * t.inv_z[2];
                if !(inv_z > 0.0) {
                    continue;
                }
                let depth = 1.0 / inv_z;
                let mut bary = [0.0; 3];
                for (k, b) in bary.iter_mut().enumerate() {
                    *b = (l[0] * t.bary_over_z[0][k]
                        + l[1] * t.bary_over_z[1][k]
                        + l[2] * t.bary_over_z[2][k])
                        * depth;
                }
                emit(
                    x,
                    y,
                    Fragment {
                        face: t.face,
                        depth,
                        bary,
                        front: t.front,
                    },
                );
            }
        }
    }
}

fn check_viewport(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyViewport { width, height });
    }
    Ok(())
}

fn bands(height: usize) -> Vec<(usize, usize)> {
    (0..height)
        .step_by(BAND_ROWS)
        .map(|y| (y, (y + BAND_ROWS).min(height)))
        .collect()
}

/// Nearest fragment per pixel (strictly nearer wins, so earlier faces win ties).
pub fn rasterize_nearest(
    mesh: &TriMesh,
    cam: &Camera,
    width: usize,
    height: usize,
) -> Result<Grid<Option<Fragment>>> {
    check_viewport(width, height)?;
    let tris = setup(mesh, cam, width, height);
    let parts: Vec<Vec<Option<Fragment>>> = bands(height)
        .into_par_iter()
        .map(|rows| {
            let mut buf: Vec<Option<Fragment>> = vec![None; (rows.1 - rows.0) * width];
            for_each_fragment_in_rows(&tris, rows, |x, y, frag| {
                let slot = &mut buf[(y - rows.0) * width + x];
                if slot.is_none_or(|cur| frag.depth < cur.depth) {
                    *slot = Some(frag);
                }
            });
            buf
        })
        .collect();
    Ok(Grid::from_vec(width, height, parts.concat()))
}

/// Pixels covered by any face nearer than `depth_limit`.
pub fn rasterize_coverage(mesh: &TriMesh, cam: &Camera, depth_limit: &Grid<f64>) -> Result<Mask> {
    let (width, height) = depth_limit.dims();
    check_viewport(width, height)?;
    let tris = setup(mesh, cam, width, height);
    let parts: Vec<Vec<bool>> = bands(height)
        .into_par_iter()
        .map(|rows| {
            let mut buf = vec![false; (rows.1 - rows.0) * width];
            for_each_fragment_in_rows(&tris, rows, |x, y, frag| {
                if frag.depth < *depth_limit.get(x, y) {
                    buf[(y - rows.0) * width + x] = true;
                }
            });
            buf
        })
        .collect();
    Ok(Grid::from_vec(width, height, parts.concat()))
}

/// Renders any triangle mesh; color and source-pixel maps use the mesh's attributes when present.
pub fn render_trimesh(
    mesh: &TriMesh,
    target: &Camera,
    width: usize,
    height: usize,
) -> Result<RenderOutput> {
    let frags = rasterize_nearest(mesh, target, width, height)?;
    let interp = |f: &Fragment, attr: &dyn Fn(usize) -> [f64; 3]| -> [f64; 3] {
        let face = mesh.faces[f.face];
        let mut out = [0.0; 3];
        for (k, &v) in face.iter().enumerate() {
            let a = attr(v);
            for c in 0..3 {
                out[c] += f.bary[k] * a[c];
            }
        }
        out
    };
    let color = frags.map(|f| match f {
        Some(f) if f.front && !mesh.colors.is_empty() => interp(f, &|v| mesh.colors[v]),
        _ => [0.0; 3],
    });
    let source_pixel = frags.map(|f| match f {
        Some(f) if !mesh.source_pixels.is_empty() => {
            let s = interp(f, &|v| {
                let p = mesh.source_pixels[v];
                [p.x, p.y, 0.0]
            });
            Some(Point2::new(s[0], s[1]))
        }
        _ => None,
    });
    Ok(RenderOutput {
        color,
        front: frags.map(|f| f.is_some_and(|f| f.front)),
        back: frags.map(|f| f.is_some_and(|f| !f.front)),
        depth: frags.map(|f| f.map_or(0.0, |f| f.depth)),
        shadow: Mask::filled(width, height, false),
        face_index: frags.map(|f| f.map_or(-1, |f| f.face as i64)),
        valid: frags.map(|f| f.is_some()),
        source_pixel,
    })
}

/// Z-buffered render of a depth mesh into `target`; the shadow field is left empty.
pub fn render_mesh(
    mesh: &DepthMesh,
    target: &Camera,
    width: usize,
    height: usize,
) -> Result<RenderOutput> {
    render_trimesh(&mesh.mesh, target, width, height)
}

/// Shadow-wall coverage in front of the given per-pixel depth limit.
pub fn render_shadow_with_limit(
    shadow: &ShadowMesh,
    target: &Camera,
    depth_limit: &Grid<f64>,
) -> Result<Mask> {
    rasterize_coverage(&shadow.mesh, target, depth_limit)
}

/// Pixels whose ray meets a shadow wall before reaching the reference mesh's
/// nearest surface (or anywhere along the ray if the mesh is missed).
pub fn render_shadow(
    shadow: &ShadowMesh,
    mesh: &DepthMesh,
    target: &Camera,
    width: usize,
    height: usize,
) -> Result<Mask> {
    let limit = render_mesh(mesh, target, width, height)?.depth_limit();
    render_shadow_with_limit(shadow, target, &limit)
}

/// Inverse depth rescaled to `[0, 1]` over valid pixels (nearest = 1).
/// A constant-depth input maps to 0.5; invalid pixels are 0.
pub fn normalize_inverse_depth(depth: &Grid<f64>, valid: &Mask) -> Grid<f64> {
    let inv = depth.zip_map(
        valid,
        |d, v| if *v && *d > 0.0 { Some(1.0 / d) } else { None },
    );
    let (lo, hi) = inv
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(*r), hi.max(*r))
        });
    inv.map(|r| match r {
        None => 0.0,
        Some(_) if hi <= lo => 0.5,
        Some(r) => (r - lo) / (hi - lo),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn cam() -> Camera {
        Camera::new(
            Camera::intrinsics(10.0, 8.0, 8.0),
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    /// Triangle around the optical axis at constant depth, counter-clockwise on screen.
    fn axis_triangle(z: f64) -> TriMesh {
        let mut m = TriMesh::from_faces(
            vec![
                Vector3::new(-1.0, -1.0, z),
                Vector3::new(-1.0, 1.0, z),
                Vector3::new(1.0, 0.0, z),
            ],
            vec![[0, 1, 2]],
        );
        m.colors = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        m
    }

    #[test]
    fn front_triangle_at_principal_pixel() {
        let out = render_trimesh(&axis_triangle(2.0), &cam(), 16, 16).unwrap();
        // principal point (8, 8) is the corner of pixel (8, 8); sample pixel (7, 7) too
        for (x, y) in [(7, 7), (8, 8)] {
            assert!(*out.front.get(x, y));
            assert!(!*out.back.get(x, y));
            assert_relative_eq!(*out.depth.get(x, y), 2.0, epsilon = 1e-12);
            let c = out.color.get(x, y);
            assert_relative_eq!(c[0] + c[1] + c[2], 1.0, epsilon = 1e-12);
        }
        assert_eq!(*out.face_index.get(8, 8), 0);
        assert!(out.face_index.get(0, 0) == &-1 && !out.valid.get(0, 0));
    }

    #[test]
    fn reversed_winding_is_back_facing() {
        let mut m = axis_triangle(2.0);
        m.faces = vec![[0, 2, 1]];
        let out = render_trimesh(&m, &cam(), 16, 16).unwrap();
        assert!(*out.back.get(8, 8));
        assert!(!*out.front.get(8, 8));
        assert_eq!(*out.color.get(8, 8), [0.0; 3]);
    }

    #[test]
    fn nearer_face_wins() {
        let mut m = axis_triangle(3.0);
        let near = axis_triangle(2.0);
        m.positions.extend(near.positions);
        m.colors.extend(near.colors);
        m.faces.push([3, 4, 5]);
        let out = render_trimesh(&m, &cam(), 16, 16).unwrap();
        assert_eq!(*out.face_index.get(8, 8), 1);
    }

    #[test]
    fn shared_edge_covers_each_pixel_once() {
        // a quad split into two triangles, vertices on pixel corners and centers
        // f = 8 keeps every projected coordinate exact
        let cam = Camera::new(
            Camera::intrinsics(8.0, 8.0, 8.0),
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap();
        let p = |x: f64, y: f64| Vector3::new((x - 8.0) / 8.0, (y - 8.0) / 8.0, 1.0);
        let m = TriMesh::from_faces(
            vec![p(2.5, 2.5), p(2.5, 12.5), p(12.5, 2.5), p(12.5, 12.5)],
            vec![[0, 1, 2], [2, 1, 3]],
        );
        let mut hits = Grid::filled(16, 16, 0u32);
        let tris = setup(&m, &cam, 16, 16);
        for_each_fragment_in_rows(&tris, (0, 16), |x, y, _| *hits.get_mut(x, y) += 1);
        assert!(hits.iter().all(|&h| h <= 1));
        // the closed quad [2.5, 12.5]² contains centers 2.5..=12.5 but the top-left rule
        // excludes the right and bottom boundaries
        assert_eq!(hits.iter().filter(|&&h| h == 1).count(), 10 * 10);
    }

    #[test]
    fn triangle_crossing_the_camera_plane_is_clipped() {
        let m = TriMesh::from_faces(
            vec![
                Vector3::new(-1.0, -1.0, 2.0),
                Vector3::new(-1.0, 1.0, 2.0),
                Vector3::new(1.0, 0.0, -1.0),
            ],
            vec![[0, 1, 2]],
        );
        let out = render_trimesh(&m, &cam(), 16, 16).unwrap();
        assert!(out.valid.count() > 0);
        assert!(out.depth.iter().all(|d| d.is_finite() && *d >= 0.0));
        let behind = TriMesh::from_faces(
            vec![
                Vector3::new(-1.0, -1.0, -2.0),
                Vector3::new(-1.0, 1.0, -2.0),
                Vector3::new(1.0, 0.0, -2.0),
            ],
            vec![[0, 1, 2]],
        );
        assert_eq!(
            render_trimesh(&behind, &cam(), 16, 16)
                .unwrap()
                .valid
                .count(),
            0
        );
    }

    #[test]
    fn zero_viewport_is_an_error() {
        assert!(matches!(
            render_trimesh(&axis_triangle(2.0), &cam(), 0, 4),
            Err(Error::EmptyViewport { .. })
        ));
    }

    #[test]
    fn empty_shadow_mesh_covers_nothing() {
        let limit = Grid::filled(8, 8, f64::INFINITY);
        let mask = render_shadow_with_limit(&ShadowMesh::default(), &cam(), &limit).unwrap();
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn coverage_respects_depth_limit() {
        let m = axis_triangle(2.0);
        let far = Grid::filled(16, 16, 3.0);
        let near = Grid::filled(16, 16, 1.0);
        assert!(rasterize_coverage(&m, &cam(), &far).unwrap().count() > 0);
        assert_eq!(rasterize_coverage(&m, &cam(), &near).unwrap().count(), 0);
    }

    #[test]
    fn inverse_depth_normalization() {
        let depth = Grid::from_vec(4, 1, vec![1.0, 2.0, 4.0, 7.0]);
        let valid = Grid::from_vec(4, 1, vec![true, true, true, false]);
        let n = normalize_inverse_depth(&depth, &valid);
        assert_relative_eq!(*n.get(0, 0), 1.0);
        assert_relative_eq!(*n.get(1, 0), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(*n.get(2, 0), 0.0);
        assert_eq!(*n.get(3, 0), 0.0);

        let flat = normalize_inverse_depth(&Grid::filled(3, 1, 2.0), &Grid::filled(3, 1, true));
        assert!(flat.iter().all(|v| *v == 0.5));
        let none = normalize_inverse_depth(&Grid::filled(3, 1, 2.0), &Grid::filled(3, 1, false));
        assert!(none.iter().all(|v| *v == 0.0));
    }
}
