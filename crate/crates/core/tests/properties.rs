use edm_pose::edm::{apply_occlusion, pack_upper, unpack_upper};
use edm_pose::eval::{mpjpe, ProtocolSpec};
use edm_pose::mds::{recover_pose, RecoveryOptions};
use edm_pose::nn::{init_params, Checkpoint, ModelConfig};
use edm_pose::pose::normalize_2d;
use edm_pose::{build_edm, ObservedPose2D, Pose2D, Pose3D, Skeleton, Units};
use proptest::prelude::*;

fn points3(n: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-1000.0f64..1000.0), n)
}

fn points2(n: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(0.0f64..1000.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edm_is_symmetric_with_zero_diagonal(p in points3(14)) {
        let d = build_edm(&p, Units::Millimeters).unwrap();
        for i in 0..14 {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..14 {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
        prop_assert_eq!(unpack_upper(&pack_upper(&d), 14, Units::Millimeters).unwrap(), d);
    }

    #[test]
    fn normalized_input_ignores_image_scale_and_shift(p in points2(14), s in 0.2f64..5.0, dx in -300.0f64..300.0) {
        let a = Pose2D::raw(p.clone()).unwrap();
        let b = Pose2D::raw(p.iter().map(|q| [s * q[0] + dx, s * q[1] - dx]).collect()).unwrap();
        prop_assume!(p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max) - p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min) > 1.0);
        let (da, db) = (
            build_edm(&normalize_2d(&a).unwrap().joints, Units::Dimensionless).unwrap(),
            build_edm(&normalize_2d(&b).unwrap().joints, Units::Dimensionless).unwrap(),
        );
        for (x, y) in da.values().iter().zip(db.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn occlusion_only_touches_hidden_rows(p in points3(14), hide in prop::collection::btree_set(0usize..14, 0..10)) {
        let d = build_edm(&p, Units::Millimeters).unwrap();
        let vis: Vec<bool> = (0..14).map(|j| !hide.contains(&j)).collect();
        let o = apply_occlusion(&d, &vis).unwrap();
        for i in 0..14 {
            for j in 0..14 {
                let expect = if vis[i] && vis[j] { d.get(i, j) } else { 0.0 };
                prop_assert_eq!(o.get(i, j), expect);
            }
        }
    }

    #[test]
    fn recovery_reproduces_distances(p in points3(14)) {
        let pose = Pose3D::new(p).unwrap();
        prop_assume!(pose.diameter() > 100.0);
        let d = build_edm(&pose.joints, Units::Millimeters).unwrap();
        let r = recover_pose(&d, &Skeleton::default_14(), &RecoveryOptions::default()).unwrap();
        let back = build_edm(&r.pose.joints, Units::Millimeters).unwrap();
        let num: f64 = back.values().iter().zip(d.values()).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = d.values().iter().map(|a| a * a).sum();
        prop_assert!((num / den).sqrt() < 1e-6);
        prop_assert!(mpjpe(&r.pose, &pose, false).is_ok());
    }

    #[test]
    fn protocol_strings_round_trip(sigma in 0.0f64..50.0, seed in any::<u64>()) {
        let p = ProtocolSpec::noise(sigma, seed);
        let back: ProtocolSpec = p.to_string().parse().unwrap();
        prop_assert_eq!(back.kind, p.kind);
    }

    #[test]
    fn noise_protocol_keeps_hidden_joints(p in points2(14), hidden in 0usize..14, index in 0u64..1000) {
        let mut vis = vec![true; 14];
        vis[hidden] = false;
        let obs = ObservedPose2D::new(Pose2D::raw(p).unwrap(), vis).unwrap();
        let out = ProtocolSpec::noise(5.0, 3).apply(&obs, &Skeleton::default_14(), index).unwrap();
        prop_assert_eq!(out.pose.joints[hidden], obs.pose.joints[hidden]);
        prop_assert_eq!(&out.visibility, &obs.visibility);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), conv in any::<bool>()) {
        let cfg = if conv { ModelConfig::fconv() } else { ModelConfig::fconn() };
        let c = Checkpoint::new(cfg, init_params(&cfg, seed), 1000.0);
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
