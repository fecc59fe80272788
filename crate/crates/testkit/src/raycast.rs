use mvinpaint::mesh::TriMesh;
use mvinpaint::{Camera, Grid};
use nalgebra::{Point2, Vector3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    /// Ray arrives on the side the face normal points to.
    pub front: bool,
    pub u: f64,
    pub v: f64,
}

/// Two-sided Möller–Trumbore intersection. Returns `(t, u, v)` for `t > 0`.
pub fn moller_trumbore(
    orig: &Vector3<f64>,
    dir: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    v2: &Vector3<f64>,
) -> Option<(f64, f64, f64)> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = orig - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some((t, u, v))
}

/// Nearest intersection of a ray with any face, by exhaustive search.
pub fn raycast_nearest(mesh: &TriMesh, orig: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (face, f) in mesh.faces.iter().enumerate() {
        let [a, b, c] = f.map(|i| mesh.positions[i]);
        if let Some((t, u, v)) = moller_trumbore(orig, dir, &a, &b, &c) {
            if best.is_none_or(|h| t < h.t) {
                let normal = (b - a).cross(&(c - a));
                best = Some(Hit {
                    t,
                    face,
                    front: normal.dot(dir) < 0.0,
                    u,
                    v,
                });
            }
        }
    }
    best
}

/// World-space ray through a pixel center with direction scaled to unit camera-frame depth,
/// so a hit's `t` equals its camera-frame z.
pub fn pixel_ray(cam: &Camera, x: usize, y: usize) -> (Vector3<f64>, Vector3<f64>) {
    let d = cam.pixel_ray(&Point2::new(x as f64 + 0.5, y as f64 + 0.5));
    (cam.center(), cam.rotation().transpose() * d)
}

pub fn raycast_image(
    mesh: &TriMesh,
    cam: &Camera,
    width: usize,
    height: usize,
) -> Grid<Option<Hit>> {
    Grid::from_fn(width, height, |x, y| {
        let (o, d) = pixel_ray(cam, x, y);
        raycast_nearest(mesh, &o, &d)
    })
}

/// Whether the segment from `from` to `to` is blocked by any face strictly before
/// `to`, with a relative margin.
pub fn segment_blocked(
    mesh: &TriMesh,
    from: &Vector3<f64>,
    to: &Vector3<f64>,
    margin: f64,
) -> bool {
    let dir = to - from;
    mesh.faces.iter().any(|f| {
        let [a, b, c] = f.map(|i| mesh.positions[i]);
        matches!(moller_trumbore(from, &dir, &a, &b, &c), Some((t, _, _)) if t < 1.0 - margin)
    })
}
