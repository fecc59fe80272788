use mvinpaint::mesh::TriMesh;
use mvinpaint::scene::DepthMap;
use mvinpaint::{Camera, Grid, Mask, RgbImage};
use nalgebra::{Point2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raycast::{pixel_ray, raycast_nearest};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Appends quad `a b c d` as two triangles `(a, b, c)` and `(a, c, d)`.
pub fn push_quad(mesh: &mut TriMesh, corners: [Vector3<f64>; 4]) {
    let base = mesh.positions.len();
    mesh.positions.extend(corners);
    mesh.faces.push([base, base + 1, base + 2]);
    mesh.faces.push([base, base + 2, base + 3]);
}

/// Closed axis-aligned box with outward-facing triangles.
pub fn push_box(mesh: &mut TriMesh, lo: Vector3<f64>, hi: Vector3<f64>) {
    let c = |i: usize| {
        Vector3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        )
    };
    // each face listed counter-clockwise when seen from outside
    for q in [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ] {
        push_quad(mesh, q.map(c));
    }
}

/// Smooth procedural color with some high-frequency structure.
pub fn texture(p: &Vector3<f64>) -> [f64; 3] {
    let s = |v: f64| 0.5 + 0.45 * v.sin();
    [
        s(3.1 * p.x + 1.7 * p.y + 0.3),
        s(2.3 * p.y - 2.9 * p.z + 1.1),
        s(4.1 * p.z + 1.3 * p.x - 0.7),
    ]
}

pub fn intrinsics_for(width: usize, height: usize) -> nalgebra::Matrix3<f64> {
    Camera::intrinsics(
        (width + height) as f64 / 2.0,
        width as f64 / 2.0,
        height as f64 / 2.0,
    )
}

/// Exact color, depth and visibility of `truth` seen from `cam`.
pub fn raycast_view(
    truth: &TriMesh,
    cam: &Camera,
    width: usize,
    height: usize,
) -> (RgbImage, DepthMap) {
    let mut image = RgbImage::filled(width, height, [0.0; 3]);
    let mut depth = Grid::filled(width, height, 0.0);
    for y in 0..height {
        for x in 0..width {
            let (o, d) = pixel_ray(cam, x, y);
            if let Some(hit) = raycast_nearest(truth, &o, &d) {
                image.set(x, y, texture(&(o + d * hit.t)));
                depth.set(x, y, hit.t);
            }
        }
    }
    (image, DepthMap::from_values(depth))
}

/// World point seen through a continuous pixel coordinate, if any.
pub fn raycast_point(truth: &TriMesh, cam: &Camera, pixel: &Point2<f64>) -> Option<Vector3<f64>> {
    let o = cam.center();
    let d = cam.rotation().transpose() * cam.pixel_ray(pixel);
    raycast_nearest(truth, &o, &d).map(|h| o + d * h.t)
}

/// Up to `max_faces` random triangles in front of a 64×64-style camera.
pub fn random_soup(rng: &mut impl Rng, max_faces: usize) -> TriMesh {
    let n = rng.random_range(1..=max_faces);
    let mut mesh = TriMesh::default();
    for _ in 0..n {
        let center = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(2.5..5.0),
        );
        let base = mesh.positions.len();
        for _ in 0..3 {
            let off = Vector3::new(
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
            );
            mesh.positions.push(center + off);
        }
        mesh.faces.push([base, base + 1, base + 2]);
    }
    mesh
}

/// Camera near the origin looking roughly along +z.
pub fn random_camera(rng: &mut impl Rng, width: usize, height: usize) -> Camera {
    let eye = Vector3::new(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
    );
    let target = Vector3::new(
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
        3.5,
    );
    Camera::look_at(
        intrinsics_for(width, height),
        eye,
        target,
        Vector3::new(0.0, -1.0, 0.0),
    )
    .expect("valid camera")
}

/// A square floating in front of a finite background plane, seen by a reference
/// camera at the origin and a target camera orbiting the scene center.
#[derive(Clone, Debug)]
pub struct OccluderScene {
    pub truth: TriMesh,
    pub reference: Camera,
    pub target: Camera,
    pub width: usize,
    pub height: usize,
}

pub fn occluder_scene(rng: &mut impl Rng, width: usize, height: usize) -> OccluderScene {
    let k = intrinsics_for(width, height);
    let z_sq = rng.random_range(1.8..2.4);
    let z_bg = rng.random_range(3.6..4.4);
    let half = rng.random_range(0.25..0.45);
    let (sx, sy) = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    let mut truth = TriMesh::default();
    // normals face the reference camera (-z)
    push_quad(
        &mut truth,
        [
            Vector3::new(sx - half, sy - half, z_sq),
            Vector3::new(sx - half, sy + half, z_sq),
            Vector3::new(sx + half, sy + half, z_sq),
            Vector3::new(sx + half, sy - half, z_sq),
        ],
    );
    // background stays inside the reference frustum
    let bg = 0.8 * z_bg * (width.min(height) as f64 / 2.0) / k[(0, 0)];
    push_quad(
        &mut truth,
        [
            Vector3::new(-bg, -bg, z_bg),
            Vector3::new(-bg, bg, z_bg),
            Vector3::new(bg, bg, z_bg),
            Vector3::new(bg, -bg, z_bg),
        ],
    );
    let reference = Camera::new(k, nalgebra::Matrix3::identity(), Vector3::zeros()).unwrap();
    let pivot = Vector3::new(0.0, 0.0, z_sq);
    let yaw: f64 = rng.random_range(0.15..0.45) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let pitch: f64 = rng.random_range(-0.15..0.15);
    let radius = z_sq;
    let eye = pivot
        + Vector3::new(
            radius * yaw.sin() * pitch.cos(),
            radius * pitch.sin(),
            -radius * yaw.cos() * pitch.cos(),
        );
    let look = Vector3::new(0.0, 0.0, (z_sq + z_bg) / 2.0);
    let target = Camera::look_at(k, eye, look, Vector3::new(0.0, -1.0, 0.0)).unwrap();
    OccluderScene {
        truth,
        reference,
        target,
        width,
        height,
    }
}

/// Textured box on a ground plane, cameras on a ring, and a 3D removal region.
#[derive(Clone, Debug)]
pub struct BoxScene {
    pub truth: TriMesh,
    /// Region whose projection forms each view's inpainting mask.
    pub removal: TriMesh,
    pub cameras: Vec<Camera>,
    pub width: usize,
    pub height: usize,
}

pub fn box_over_plane(num_views: usize, width: usize, height: usize) -> BoxScene {
    let mut truth = TriMesh::default();
    push_quad(
        &mut truth,
        [
            Vector3::new(-2.5, -2.5, 0.0),
            Vector3::new(2.5, -2.5, 0.0),
            Vector3::new(2.5, 2.5, 0.0),
            Vector3::new(-2.5, 2.5, 0.0),
        ],
    );
    push_box(
        &mut truth,
        Vector3::new(-0.5, -0.4, 0.0),
        Vector3::new(0.5, 0.4, 0.7),
    );
    let mut removal = TriMesh::default();
    push_box(
        &mut removal,
        Vector3::new(-0.35, -0.9, 0.05),
        Vector3::new(0.25, -0.3, 0.6),
    );
    let k = intrinsics_for(width, height);
    let cameras = (0..num_views)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / num_views as f64 + 0.2;
            let eye = Vector3::new(3.2 * a.cos(), 3.2 * a.sin(), 2.2);
            Camera::look_at(k, eye, Vector3::new(0.0, 0.0, 0.3), Vector3::z()).unwrap()
        })
        .collect();
    BoxScene {
        truth,
        removal,
        cameras,
        width,
        height,
    }
}

impl BoxScene {
    pub fn image_and_depth(&self, view: usize) -> (RgbImage, DepthMap) {
        raycast_view(&self.truth, &self.cameras[view], self.width, self.height)
    }

    pub fn mask(&self, view: usize) -> Mask {
        let cam = &self.cameras[view];
        Grid::from_fn(self.width, self.height, |x, y| {
            let (o, d) = pixel_ray(cam, x, y);
            raycast_nearest(&self.removal, &o, &d).is_some()
        })
    }
}
