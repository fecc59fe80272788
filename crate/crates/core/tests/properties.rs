use mvinpaint::camera::{euler_zyx, rotation_from_euler_zyx, view_distance};
use mvinpaint::cues::ConfidenceTriple;
use mvinpaint::fusion::{downsample_confidence, fuse, FusionBundle, LEVEL_NONE};
use mvinpaint::io::{decode_pfm, encode_pfm, Pfm};
use mvinpaint::mesh::edge_drop_value;
use mvinpaint::schedule::{
    build_plan, greedy_min_max, select_wide_baseline, DistanceMatrix, PlanMode,
};
use mvinpaint::{Camera, Grid, Mask};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use std::path::Path;

const W: usize = 6;
const H: usize = 5;

fn mask_strategy() -> impl Strategy<Value = Mask> {
    prop::collection::vec(any::<bool>(), W * H).prop_map(|v| Grid::from_vec(W, H, v))
}

fn triple_strategy() -> impl Strategy<Value = ConfidenceTriple> {
    (mask_strategy(), mask_strategy(), mask_strategy()).prop_map(|(front, back, shadow)| {
        ConfidenceTriple {
            front,
            back,
            shadow,
        }
    })
}

prop_compose! {
    fn bundle_strategy()(r in 1usize..=5)(
        confidences in prop::collection::vec(triple_strategy(), r),
        // distinct distances so the nearest reference is unique
        distances in Just((0..r).map(|i| i as f64 * 0.25 + 0.1).collect::<Vec<_>>()).prop_shuffle(),
        values in prop::collection::vec(-1e3f64..1e3, r * 2 * W * H),
    ) -> FusionBundle<f64> {
        let estimates = values
            .chunks(2 * W * H)
            .map(|c| c.chunks(W * H).map(|p| Grid::from_vec(W, H, p.to_vec())).collect())
            .collect();
        FusionBundle { estimates, confidences, distances }
    }
}

fn level_of(t: &ConfidenceTriple, x: usize, y: usize) -> u8 {
    [
        *t.front.get(x, y),
        *t.back.get(x, y),
        *t.shadow.get(x, y),
        true,
    ]
    .iter()
    .position(|&b| b)
    .unwrap() as u8
}

fn angles() -> impl Strategy<Value = Vector3<f64>> {
    (-3.0f64..3.0, -1.5f64..1.5, -3.0f64..3.0).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn camera_with(r: Matrix3<f64>) -> Camera {
    Camera::new(
        Camera::intrinsics(50.0, 16.0, 16.0),
        r,
        Vector3::new(0.1, -0.2, 0.3),
    )
    .unwrap()
}

fn distance_matrix(n: usize, values: &[f64]) -> DistanceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            rows[i][j] = values[k];
            rows[j][i] = values[k];
            k += 1;
        }
    }
    DistanceMatrix::from_rows(rows).unwrap()
}

prop_compose! {
    fn matrix_strategy()(n in 1usize..=8)(
        n in Just(n),
        values in prop::collection::vec(0.0f64..4.0, n * (n - 1) / 2),
    ) -> (usize, DistanceMatrix) {
        (n, distance_matrix(n, &values))
    }
}

proptest! {
    #[test]
    fn fused_pixels_copy_the_selected_stream(b in bundle_strategy()) {
        let out = fuse(&b).unwrap();
        for y in 0..H {
            for x in 0..W {
                let s = *out.selection.get(x, y);
                for c in 0..2 {
                    prop_assert_eq!(out.fused[c].get(x, y).to_bits(), b.estimates[s][c].get(x, y).to_bits());
                }
            }
        }
    }

    #[test]
    fn selection_is_the_nearest_reference_at_the_best_level(b in bundle_strategy()) {
        let out = fuse(&b).unwrap();
        for y in 0..H {
            for x in 0..W {
                let best = b.confidences.iter().map(|t| level_of(t, x, y)).min().unwrap();
                prop_assert_eq!(*out.level.get(x, y), best);
                let s = *out.selection.get(x, y);
                prop_assert_eq!(level_of(&b.confidences[s], x, y), best);
                for (i, t) in b.confidences.iter().enumerate() {
                    if level_of(t, x, y) == best {
                        prop_assert!(b.distances[s] <= b.distances[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn fusion_ignores_reference_order(b in bundle_strategy(), rot in 0usize..5) {
        let r = b.estimates.len();
        let perm: Vec<usize> = (0..r).map(|i| (i + rot) % r).collect();
        let permuted = FusionBundle {
            estimates: perm.iter().map(|&i| b.estimates[i].clone()).collect(),
            confidences: perm.iter().map(|&i| b.confidences[i].clone()).collect(),
            distances: perm.iter().map(|&i| b.distances[i]).collect(),
        };
        let a = fuse(&b).unwrap();
        let p = fuse(&permuted).unwrap();
        prop_assert_eq!(&a.fused, &p.fused);
        prop_assert_eq!(&a.level, &p.level);
        prop_assert_eq!(a.selection.map(|&s| s), p.selection.map(|&s| perm[s]));
    }

    #[test]
    fn raising_confidence_never_lowers_the_level(b in bundle_strategy(), who in 0usize..5, x in 0..W, y in 0..H) {
        let before = fuse(&b).unwrap();
        let mut raised = b.clone();
        let i = who % raised.confidences.len();
        raised.confidences[i].front.set(x, y, true);
        let after = fuse(&raised).unwrap();
        for yy in 0..H {
            for xx in 0..W {
                prop_assert!(after.level.get(xx, yy) <= before.level.get(xx, yy));
            }
        }
        prop_assert_eq!(*after.level.get(x, y), 0);
    }

    #[test]
    fn unconfident_pixels_fall_back_to_the_nearest_reference(b in bundle_strategy()) {
        let out = fuse(&b).unwrap();
        let nearest = (0..b.distances.len())
            .min_by(|&i, &j| b.distances[i].total_cmp(&b.distances[j]))
            .unwrap();
        for (l, s) in out.level.iter().zip(out.selection.iter()) {
            if *l == LEVEL_NONE {
                prop_assert_eq!(*s, nearest);
            }
        }
    }

    #[test]
    fn euler_angles_round_trip(a in angles()) {
        let r = rotation_from_euler_zyx(&a);
        let back = rotation_from_euler_zyx(&euler_zyx(&r));
        prop_assert!((r - back).abs().max() < 1e-9);
        prop_assert!(euler_zyx(&r).iter().all(|v| *v > -std::f64::consts::PI && *v <= std::f64::consts::PI));
    }

    #[test]
    fn view_distance_is_left_invariant(a in angles(), b in angles(), q in angles()) {
        let (ra, rb, rq) = (rotation_from_euler_zyx(&a), rotation_from_euler_zyx(&b), rotation_from_euler_zyx(&q));
        let d = view_distance(&camera_with(ra), &camera_with(rb));
        let dq = view_distance(&camera_with(rq * ra), &camera_with(rq * rb));
        prop_assert!((d - dq).abs() < 1e-7, "{d} vs {dq}");
        prop_assert!(view_distance(&camera_with(ra), &camera_with(ra)) < 1e-9);
    }

    #[test]
    fn edge_drop_is_symmetric_and_scale_free(a in 0.01f64..100.0, b in 0.01f64..100.0, s in 0.01f64..100.0) {
        let v = edge_drop_value(a, b);
        prop_assert!((0.0..2.0).contains(&v));
        prop_assert_eq!(v, edge_drop_value(b, a));
        prop_assert!((v - edge_drop_value(a * s, b * s)).abs() < 1e-12);
    }

    #[test]
    fn wide_baseline_selection_is_a_reordered_greedy_subset((n, d) in matrix_strategy(), start in 0usize..8, m in 1usize..=8) {
        let (start, m) = (start % n, 1 + (m - 1) % n);
        let greedy = greedy_min_max(&d, start, m).unwrap();
        let ordered = select_wide_baseline(&d, start, m).unwrap();
        prop_assert_eq!(greedy.len(), m);
        prop_assert_eq!(greedy[0], start);
        prop_assert_eq!(ordered[0], start);
        let (mut g, mut o) = (greedy.clone(), ordered);
        g.sort_unstable();
        o.sort_unstable();
        g.dedup();
        prop_assert_eq!(g.len(), m);
        prop_assert_eq!(&g, &o);
    }

    #[test]
    fn plans_partition_the_views((n, d) in matrix_strategy(), start in 0usize..8, m in 1usize..=8, narrow in any::<bool>()) {
        let (start, m) = (start % n, 1 + (m - 1) % n);
        let mode = if narrow { PlanMode::Narrow } else { PlanMode::Wide };
        let plan = build_plan(&d, start, m, mode, 3, &vec![false; n], 7).unwrap();
        plan.validate(n).unwrap();
        prop_assert_eq!(plan.stage1.len(), m);
        prop_assert_eq!(plan.num_views(), n);
        let cap = if narrow { 1 } else { 3 };
        for &t in plan.stage2.iter() {
            let refs = &plan.references[&t];
            prop_assert_eq!(refs.len(), cap.min(m));
            prop_assert!(refs.iter().all(|r| plan.stage1.contains(r)));
        }
    }

    #[test]
    fn pfm_round_trips(w in 1usize..6, h in 1usize..6, three in any::<bool>(), seed in any::<u32>()) {
        let channels = if three { 3 } else { 1 };
        let data = (0..w * h * channels)
            .map(|i| (i as f32 - seed as f32).sin() * 1e3)
            .collect();
        let pfm = Pfm { width: w, height: h, channels, data };
        prop_assert_eq!(decode_pfm(&encode_pfm(&pfm), Path::new("mem")).unwrap(), pfm);
    }

    #[test]
    fn downsampling_preserves_uniform_masks(w in 1usize..20, h in 1usize..20, tw in 1usize..10, th in 1usize..10, on in any::<bool>()) {
        let out = downsample_confidence(&Mask::filled(w, h, on), tw, th).unwrap();
        prop_assert_eq!(out, Mask::filled(tw, th, on));
    }

    #[test]
    fn downsampling_to_the_same_size_is_identity(m in mask_strategy()) {
        prop_assert_eq!(downsample_confidence(&m, W, H).unwrap(), m);
    }
}
