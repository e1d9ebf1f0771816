use nalgebra::Vector3;
use proptest::prelude::*;
use sweepkit::compound::{compound, USFrame};
use sweepkit::geom::{
    align_point_sets, alignment_rmse, image_to_base, orthonormality_defect, CameraIntrinsics,
    FrameGraph, FrameId, RigidTransform,
};
use sweepkit::imgproc::Plane;
use sweepkit::motion::{compute_compensation, Marker, MarkerRole, MarkerSet, ObjectFrameLedger};
use sweepkit::pathplan::{
    find_key_points, optimize_orientations, project_path, KeyPointParams, ProbePose,
};
use sweepkit::simscene::project;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn transform() -> impl Strategy<Value = RigidTransform<f64>> {
    (vec3(1.0), -3.0..3.0f64, vec3(300.0)).prop_map(|(axis, angle, t)| {
        let axis = if axis.norm() < 1e-3 {
            Vector3::z()
        } else {
            axis.normalize()
        };
        let r = RigidTransform::from_axis_angle(&axis, angle);
        RigidTransform::new(*r.rotation(), t).unwrap()
    })
}

/// Points with enough spread that the fit is well posed.
fn cloud() -> impl Strategy<Value = Vec<Vector3<f64>>> {
    prop::collection::vec(vec3(100.0), 4..12).prop_filter("non-degenerate", |pts| {
        let sv = sweepkit::geom::spread_singular_values(pts);
        sv[2] > 1.0
    })
}

fn marker_set(positions: &[Vector3<f64>]) -> MarkerSet<f64> {
    let markers = positions
        .iter()
        .enumerate()
        .map(|(i, p)| Marker {
            label: format!("m{i}"),
            role: if i + 1 == positions.len() {
                MarkerRole::Validation
            } else {
                MarkerRole::Registration
            },
            position: *p,
        })
        .collect();
    MarkerSet::new(markers).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn alignment_recovers_exact_transforms(t in transform(), src in cloud()) {
        let dst: Vec<_> = src.iter().map(|p| t.transform_point(p)).collect();
        let fit = align_point_sets(&src, &dst).unwrap();
        prop_assert!(fit.transform.rotation_angle_to(&t) < 1e-8);
        prop_assert!(fit.transform.translation_distance_to(&t) < 1e-6);
        prop_assert!(fit.rmse < 1e-6);
    }

    #[test]
    fn alignment_rmse_is_symmetric(t in transform(), src in cloud(), noise in prop::collection::vec(vec3(2.0), 12)) {
        let dst: Vec<_> = src.iter().zip(&noise).map(|(p, n)| t.transform_point(p) + n).collect();
        let forward = align_point_sets(&src, &dst).unwrap();
        let backward = align_point_sets(&dst, &src).unwrap();
        prop_assert!((forward.rmse - backward.rmse).abs() < 1e-6);
        prop_assert!((alignment_rmse(&forward.transform, &src, &dst) - forward.rmse).abs() < 1e-12);
    }

    #[test]
    fn composition_is_associative(a in transform(), b in transform(), c in transform(), p in vec3(200.0)) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!((left.transform_point(&p) - right.transform_point(&p)).norm() < 1e-9);
        prop_assert!((a.compose(&a.inverse()).transform_point(&p) - p).norm() < 1e-9);
    }

    #[test]
    fn projection_then_backprojection_is_identity(
        base_from_camera in transform(),
        u in 0.0..639.0f64,
        v in 0.0..479.0f64,
        depth in 1.0..3000.0f64,
    ) {
        let k = CameraIntrinsics::new(800.0, 790.0, 320.0, 240.0, 640, 480).unwrap();
        let graph = FrameGraph::new(k).with_edge(FrameId::Base, FrameId::Camera, base_from_camera);
        // A visible point: on the ray through (u, v) at the given depth.
        let c = Vector3::new((u - 320.0) / 800.0 * depth, (v - 240.0) / 790.0 * depth, depth);
        let p = base_from_camera.transform_point(&c);
        let px = project(&c, &k).unwrap();
        prop_assert!((image_to_base(&px, c.z, &graph).unwrap() - p).norm() < 1e-6);
    }

    #[test]
    fn lateral_coordinate_scales_with_the_path(pts in prop::collection::vec(vec3(100.0), 3..30), s in 0.1..10.0f64) {
        prop_assume!((pts[pts.len() - 1] - pts[0]).norm() * s.min(1.0) > 2.0);
        let a = project_path(&pts).unwrap();
        let scaled: Vec<_> = pts.iter().map(|p| p * s).collect();
        let b = project_path(&scaled).unwrap();
        for (ya, yb) in a.yp.iter().zip(&b.yp) {
            prop_assert!((ya * s - yb).abs() < 1e-9 * (1.0 + yb.abs()));
        }
    }

    #[test]
    fn plans_are_orthonormal_and_cover_the_path(
        bumps in prop::collection::vec(-30.0..30.0f64, 2..6),
        tilts in prop::collection::vec(vec3(0.3), 2..6),
    ) {
        // Piecewise-linear lateral profile along x, sampled every 0.5 mm.
        let n = 361;
        let pts: Vec<_> = (0..n)
            .map(|i| {
                let x = -90.0 + 0.5 * i as f64;
                let f = (x + 90.0) / 180.0 * (bumps.len() - 1) as f64;
                let k = (f.floor() as usize).min(bumps.len() - 2);
                let y = bumps[k] + (bumps[k + 1] - bumps[k]) * (f - k as f64);
                Vector3::new(x, y, 0.0)
            })
            .collect();
        let normals: Vec<_> = (0..n).map(|i| (Vector3::z() + tilts[i * tilts.len() / n]).normalize()).collect();
        let keys = find_key_points(&pts, &KeyPointParams::default()).unwrap();
        let plan = optimize_orientations(&pts, &keys, &normals, 50.0).unwrap();
        prop_assert_eq!(plan.segments.first().unwrap().start, 0);
        prop_assert_eq!(plan.segments.last().unwrap().end, n - 1);
        for w in plan.segments.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        for pose in plan.poses() {
            let r = pose.rotation();
            prop_assert!(orthonormality_defect(&r) < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn key_points_are_invariant_to_rigid_motion(t in transform(), apex in 10.0..60.0f64) {
        let pts: Vec<_> = (0..=360)
            .map(|i| {
                let x = -90.0 + 0.5 * i as f64;
                Vector3::new(x, apex * (1.0 - x.abs() / 90.0), 0.0)
            })
            .collect();
        let moved: Vec<_> = pts.iter().map(|p| t.transform_point(p)).collect();
        let params = KeyPointParams::default();
        prop_assert_eq!(find_key_points(&pts, &params).unwrap(), find_key_points(&moved, &params).unwrap());
    }

    #[test]
    fn compensation_error_matches_held_out_residual(
        t in transform(),
        noise in prop::collection::vec(vec3(2.0), 5),
    ) {
        let layout = [
            Vector3::new(-100.0, 0.0, 0.0),
            Vector3::new(100.0, 0.0, 0.0),
            Vector3::new(-50.0, 45.0, 3.0),
            Vector3::new(50.0, -45.0, -2.0),
            Vector3::new(-20.0, -35.0, 0.0),
        ];
        let moved: Vec<_> = layout.iter().zip(&noise).map(|(p, n)| t.transform_point(p) + n).collect();
        let c = compute_compensation(&marker_set(&layout), &marker_set(&moved)).unwrap();
        // Independent evaluation: refit on the registration markers only.
        let fit = align_point_sets(&layout[..4], &moved[..4]).unwrap().transform;
        let expected = (moved[4] - fit.transform_point(&layout[4])).norm();
        prop_assert!((c.e_mc - expected).abs() < 1e-9);
    }

    #[test]
    fn compounding_ignores_frame_order(seed in any::<u64>(), order in Just(()).prop_perturb(|_, mut rng| {
        let mut idx: Vec<usize> = (0..12).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        idx
    })) {
        let frames: Vec<USFrame> = (0..12)
            .map(|i| {
                let pixels = Plane::from_fn(9, 7, |c, r| ((seed as usize).wrapping_add(i * 31 + c * 7 + r * 3) % 251) as u8);
                USFrame {
                    pixels,
                    spacing: 0.7,
                    pose: ProbePose {
                        position: Vector3::new(i as f64 * 0.6, 0.3 * (i % 3) as f64, 0.0),
                        x_axis: Vector3::x(),
                        y_axis: Vector3::y(),
                        z_axis: Vector3::z(),
                    },
                    stage: 0,
                }
            })
            .collect();
        let ledger = ObjectFrameLedger::new();
        let shuffled: Vec<USFrame> = order.iter().map(|&i| frames[i].clone()).collect();
        let a = compound(&frames, &ledger, 0.5).unwrap();
        let b = compound(&shuffled, &ledger, 0.5).unwrap();
        prop_assert_eq!(a, b);
    }
}
