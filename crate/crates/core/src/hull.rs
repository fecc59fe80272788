//! Incremental 3D convex hull with outward-wound triangular facets.

use nalgebra::Vector3;

use crate::mesh::TriMesh;

/// Convex hull of `points` as a closed mesh whose faces are counter-clockwise seen
/// from outside. Returns `None` when the points span less than a tetrahedron.
pub fn convex_hull(points: &[Vector3<f64>]) -> Option<TriMesh> {
    if points.len() < 4 {
        return None;
    }
    let scale = points.iter().map(|p| p.amax()).fold(0.0, f64::max).max(1.0);
    let eps = 1e-10 * scale;

    let seed = initial_simplex(points, eps)?;
    let [a, b, c, d] = seed;
    let mut faces: Vec<[usize; 3]> = Vec::new();
    // orient the first face away from the fourth vertex
    let (b, c) = if signed_volume(points, [a, b, c], d) > 0.0 {
        (c, b)
    } else {
        (b, c)
    };
    faces.push([a, b, c]);
    faces.push([a, d, b]);
    faces.push([b, d, c]);
    faces.push([c, d, a]);

    for p in 0..points.len() {
        if seed.contains(&p) {
            continue;
        }
        let visible: Vec<bool> = faces
            .iter()
            .map(|&f| signed_volume(points, f, p) > eps * scale * scale)
            .collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        // horizon: directed edges of visible faces whose twin lies on a hidden face
        let mut horizon = Vec::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, v)| **v) {
            for e in 0..3 {
                let (u, v) = (f[e], f[(e + 1) % 3]);
                let twin_hidden = faces
                    .iter()
                    .zip(&visible)
                    .any(|(g, vis)| !*vis && (0..3).any(|k| g[k] == v && g[(k + 1) % 3] == u));
                if twin_hidden {
                    horizon.push((u, v));
                }
            }
        }
        let mut kept: Vec<[usize; 3]> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, v)| !**v)
            .map(|(f, _)| *f)
            .collect();
        kept.extend(horizon.into_iter().map(|(u, v)| [u, v, p]));
        faces = kept;
    }

    // compact to the vertices actually used
    let mut remap = vec![usize::MAX; points.len()];
    let mut mesh = TriMesh::default();
    for f in &mut faces {
        for v in f.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = mesh.positions.len();
                mesh.positions.push(points[*v]);
            }
            *v = remap[*v];
        }
    }
    mesh.faces = faces;
    Some(mesh)
}

/// Six times the signed volume of `(face, p)`; positive when `p` is on the outer side.
fn signed_volume(points: &[Vector3<f64>], f: [usize; 3], p: usize) -> f64 {
    let [a, b, c] = f.map(|i| points[i]);
    (b - a).cross(&(c - a)).dot(&(points[p] - a))
}

fn initial_simplex(points: &[Vector3<f64>], eps: f64) -> Option<[usize; 4]> {
    let a = 0;
    let b = (1..points.len()).max_by(|&i, &j| {
        (points[i] - points[a])
            .norm()
            .total_cmp(&(points[j] - points[a]).norm())
    })?;
    let ab = points[b] - points[a];
    if ab.norm() <= eps {
        return None;
    }
    let area = |i: usize| ab.cross(&(points[i] - points[a])).norm();
    let c = (0..points.len()).max_by(|&i, &j| area(i).total_cmp(&area(j)))?;
    if area(c) <= eps * ab.norm() {
        return None;
    }
    let n = ab.cross(&(points[c] - points[a]));
    let vol = |i: usize| n.dot(&(points[i] - points[a])).abs();
    let d = (0..points.len()).max_by(|&i, &j| vol(i).total_cmp(&vol(j)))?;
    if vol(d) <= eps * n.norm() {
        return None;
    }
    Some([a, b, c, d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::edge_face_counts;

    fn cube_points() -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(Vector3::new(
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            ));
        }
        pts.push(Vector3::new(0.5, 0.5, 0.5));
        pts.push(Vector3::new(0.2, 0.7, 0.4));
        pts
    }

    #[test]
    fn cube_hull_is_closed_and_outward() {
        let hull = convex_hull(&cube_points()).unwrap();
        assert_eq!(hull.positions.len(), 8);
        assert!(edge_face_counts(&hull.faces).values().all(|&c| c == 2));
        let center = Vector3::new(0.5, 0.5, 0.5);
        for f in &hull.faces {
            let [a, b, c] = f.map(|i| hull.positions[i]);
            let n = (b - a).cross(&(c - a));
            assert!(n.dot(&(a - center)) > 0.0);
        }
        let volume: f64 = hull
            .faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| hull.positions[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        assert!((volume - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coplanar_points_have_no_hull() {
        let pts: Vec<_> = (0..10)
            .map(|i| Vector3::new(i as f64, (i * i) as f64, 0.0))
            .collect();
        assert!(convex_hull(&pts).is_none());
        assert!(convex_hull(&pts[..3]).is_none());
    }
}
