mod common;

use partgen::dit::SampleOptions;
use partgen::error::Error;
use partgen::files::sha256_hex;
use partgen::geometry::Aabb;
use partgen::pipeline::*;
use partgen::rng::det_rng;
use partgen::synthdata::Category;
use rand::Rng;

fn opts(steps: usize, kmax: usize) -> GenerateOptions {
    GenerateOptions {
        steps,
        kmax,
        ..GenerateOptions::default()
    }
}

fn chair() -> (ConditionRef, Vec<Aabb>) {
    let c = ConditionRef::Sample {
        category: Category::Chair,
        seed: 3,
    };
    let boxes = c.sample().unwrap().boxes();
    (c, boxes)
}

fn random_boxes(n: usize, seed: u64) -> Vec<Aabb> {
    let mut rng = det_rng(seed);
    (0..n)
        .map(|_| {
            let lo: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.9..0.5));
            let hi: [f64; 3] = std::array::from_fn(|a| lo[a] + rng.random_range(0.1..0.4));
            Aabb::from_arrays(lo, hi).unwrap()
        })
        .collect()
}

#[test]
fn run_full_is_reproducible_and_counts_parts() {
    let models = common::untrained_models(8, 1);
    let (c, boxes) = chair();
    let a = run_full(&models, &c, Some(&boxes), 7, &opts(4, 8)).unwrap();
    let b = run_full(&models, &c, Some(&boxes), 7, &opts(4, 8)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.parts.len(), boxes.len());
    assert_eq!(a.box_source, BoxSource::Given);
    let ids: Vec<usize> = a.parts.iter().map(|p| p.part_id).collect();
    assert_eq!(ids, (1..=boxes.len()).collect::<Vec<_>>());
    let other = run_full(&models, &c, Some(&boxes), 8, &opts(4, 8)).unwrap();
    assert_ne!(a.scene_id, other.scene_id);
}

#[test]
fn saved_scene_round_trips_and_is_byte_stable() {
    let models = common::untrained_models(8, 2);
    let (c, boxes) = chair();
    let s = run_full(&models, &c, Some(&boxes), 7, &opts(3, 8)).unwrap();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let rec = s.save(d1.path()).unwrap();
    s.save(d2.path()).unwrap();
    assert_eq!(common::dir_hashes(d1.path()), common::dir_hashes(d2.path()));
    let back = SceneState::load(d1.path()).unwrap();
    assert_eq!(back, s);
    // Every file on disk is referenced from scene.json.
    let mut files = rec.files();
    files.sort();
    let on_disk: Vec<String> = common::dir_hashes(d1.path()).into_iter().map(|f| f.0).collect();
    assert_eq!(files, on_disk);
    for p in &rec.parts {
        let bytes = std::fs::read(d1.path().join(&p.files.ply)).unwrap();
        assert_eq!(sha256_hex(&bytes), p.files.ply_sha256);
    }
}

#[test]
fn thirty_five_boxes_come_back_in_order() {
    let models = common::untrained_models(30, 3);
    let boxes = random_boxes(35, 4);
    let s = run_full(&models, &ConditionRef::Unconditional, Some(&boxes), 1, &opts(2, 30)).unwrap();
    assert_eq!(s.parts.len(), 35);
    for (i, p) in s.parts.iter().enumerate() {
        assert_eq!(p.part_id, i + 1);
        assert_eq!(p.aabb, boxes[i]);
    }
}

#[test]
fn later_rounds_pin_the_global_slot_to_the_recorded_path() {
    let models = common::untrained_models(4, 5);
    let c = common::checks::sequential_check(&models, &random_boxes(10, 6), 4, 6);
    assert_eq!(c.parts, 10);
    assert_eq!(c.round_sizes, vec![4, 4, 2]);
    assert_eq!(c.checked, 2 * 7 * 64 * 64);
    assert_eq!(c.mismatches, 0);
}

#[test]
fn single_round_matches_generate_coarse() {
    let models = common::untrained_models(4, 8);
    let (c, boxes) = chair();
    let boxes = &boxes[..4];
    let sampler = SampleOptions {
        steps: 3,
        cfg_scale: 3.5,
    };
    let direct = models.coarse.generate_coarse(boxes, c.tokens().as_ref(), 5, sampler).unwrap();
    let s = run_full(&models, &c, Some(boxes), 5, &opts(3, 4)).unwrap();
    for (p, d) in s.parts.iter().zip(&direct.parts) {
        assert_eq!(p.grid, d.grid);
    }
}

#[test]
fn freeze_all_without_ops_is_identity() {
    let models = common::untrained_models(8, 9);
    let (c, boxes) = chair();
    let s = run_full(&models, &c, Some(&boxes), 7, &opts(3, 8)).unwrap();
    let req = EditRequest {
        ops: vec![],
        frozen: s.parts.iter().map(|p| p.part_id).collect(),
        seed: 1234,
    };
    let e = edit_scene(&models, &s, &req).unwrap();
    for (a, b) in s.parts.iter().zip(&e.parts) {
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.colors, b.colors);
        assert_eq!(a.coarse, b.coarse);
        assert!(b.frozen);
    }
}

#[test]
fn elongating_one_box_changes_only_that_part() {
    let models = common::untrained_models(8, 10);
    let (c, boxes) = chair();
    let s = run_full(&models, &c, Some(&boxes), 7, &opts(4, 8)).unwrap();
    let (d0, d1) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let before = s.save(d0.path()).unwrap();
    let target = s.parts[2].aabb;
    let mut max = target.max.to_array();
    max[0] = (max[0] + 0.5 * target.extent().x).min(1.0);
    let req = EditRequest {
        ops: vec![EditOp::Transform {
            part_id: 3,
            min: target.min.to_array(),
            max,
        }],
        frozen: s.parts.iter().map(|p| p.part_id).filter(|&id| id != 3).collect(),
        seed: 77,
    };
    let e = edit_scene(&models, &s, &req).unwrap();
    let after = e.save(d1.path()).unwrap();
    for (a, b) in before.parts.iter().zip(&after.parts) {
        if a.part_id == 3 {
            assert_ne!(a.files.pvox_sha256, b.files.pvox_sha256);
        } else {
            assert_eq!(a.files.pvox_sha256, b.files.pvox_sha256, "part {}", a.part_id);
            assert_eq!(a.files.ply_sha256, b.files.ply_sha256, "part {}", a.part_id);
        }
    }
    assert_eq!(e.box_source, BoxSource::Edited);
}

#[test]
fn freeze_none_equals_fresh_generation_over_edited_boxes() {
    let models = common::untrained_models(8, 11);
    let (c, boxes) = chair();
    let s = run_full(&models, &c, Some(&boxes), 7, &opts(3, 8)).unwrap();
    let mut edited = boxes.clone();
    edited[0] = Aabb::from_arrays([-0.5; 3], [0.1; 3]).unwrap();
    let req = EditRequest {
        ops: vec![EditOp::Transform {
            part_id: 1,
            min: [-0.5; 3],
            max: [0.1; 3],
        }],
        frozen: vec![],
        seed: 21,
    };
    let e = edit_scene(&models, &s, &req).unwrap();
    let fresh = run_full(&models, &c, Some(&edited), 21, &opts(3, 8)).unwrap();
    for (a, b) in e.parts.iter().zip(&fresh.parts) {
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.colors, b.colors);
    }
}

#[test]
fn add_and_delete_keep_ids_stable() {
    let models = common::untrained_models(8, 12);
    let (c, boxes) = chair();
    let s = run_full(&models, &c, Some(&boxes), 7, &opts(2, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path()).unwrap();
    let n = boxes.len();
    let req = EditRequest {
        ops: vec![
            EditOp::Delete { part_id: 2 },
            EditOp::Add {
                min: [0.5; 3],
                max: [0.9; 3],
            },
        ],
        frozen: vec![1],
        seed: 3,
    };
    let e = edit_scene(&models, &s, &req).unwrap();
    let ids: Vec<usize> = e.parts.iter().map(|p| p.part_id).collect();
    let mut want: Vec<usize> = (1..=n).filter(|&i| i != 2).collect();
    want.push(n + 1);
    assert_eq!(ids, want);
    assert_eq!(e.parts[0].grid, s.parts[0].grid);
    e.save(dir.path()).unwrap();
    assert!(!dir.path().join("part_2.pvox").exists());
    assert!(dir.path().join(format!("part_{}.ply", n + 1)).exists());
}

#[test]
fn invalid_edits_are_rejected_with_the_op() {
    let models = common::untrained_models(8, 13);
    let (c, boxes) = chair();
    let s = run_full(&models, &c, Some(&boxes), 7, &opts(2, 8)).unwrap();
    let both = EditRequest {
        ops: vec![
            EditOp::Add {
                min: [0.0; 3],
                max: [0.2; 3],
            },
            EditOp::Delete { part_id: 1 },
        ],
        frozen: vec![1],
        seed: 0,
    };
    let (op, e) = validate_edit(&s, &both).unwrap_err();
    assert_eq!(op.op_index, Some(1));
    assert!(matches!(e, Error::InvalidEdit(_)));
    assert!(matches!(edit_scene(&models, &s, &both), Err(Error::InvalidEdit(_))));

    let unknown = EditRequest {
        ops: vec![EditOp::Delete { part_id: 99 }],
        frozen: vec![],
        seed: 0,
    };
    assert!(matches!(validate_edit(&s, &unknown).unwrap_err().1, Error::UnknownPart(99)));
    let bad_box = EditRequest {
        ops: vec![EditOp::Add {
            min: [0.3; 3],
            max: [0.1; 3],
        }],
        frozen: vec![],
        seed: 0,
    };
    assert_eq!(validate_edit(&s, &bad_box).unwrap_err().0.op_index, Some(0));
    let unknown_frozen = EditRequest {
        ops: vec![],
        frozen: vec![42],
        seed: 0,
    };
    assert!(matches!(validate_edit(&s, &unknown_frozen).unwrap_err().1, Error::UnknownPart(42)));
}

#[test]
fn edit_request_json_shape() {
    let req: EditRequest = serde_json::from_str(
        r#"{"ops":[{"op":"transform","part_id":2,"min":[0,0,0],"max":[1,1,1]},{"op":"delete","part_id":3}],"frozen":[1],"seed":5}"#,
    )
    .unwrap();
    assert_eq!(req.ops.len(), 2);
    assert_eq!(req.ops[1], EditOp::Delete { part_id: 3 });
}

#[test]
fn missing_layout_checkpoint_is_reported() {
    let mut models = common::untrained_models(8, 14);
    models.layout = None;
    let (c, _) = chair();
    assert!(matches!(run_full(&models, &c, None, 1, &opts(2, 8)), Err(Error::InvalidArgument(_))));
    assert!(matches!(
        run_full(&models, &c, Some(&[]), 1, &opts(2, 8)),
        Err(Error::EmptyLayout)
    ));
}

#[test]
fn models_round_trip_through_checkpoints() {
    let models = common::untrained_models(8, 15);
    let dir = tempfile::tempdir().unwrap();
    models.save(dir.path()).unwrap();
    let back = Models::load(dir.path()).unwrap();
    let (c, boxes) = chair();
    let a = run_full(&models, &c, Some(&boxes), 2, &opts(2, 8)).unwrap();
    let b = run_full(&back, &c, Some(&boxes), 2, &opts(2, 8)).unwrap();
    assert_eq!(a, b);
}
