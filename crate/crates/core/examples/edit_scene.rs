//! Stretches one box with every other part frozen; only that part changes.

mod common;

use partgen::pipeline::{edit_scene, run_full, ConditionRef, EditOp, EditRequest, GenerateOptions};
use partgen::synthdata::Category;

fn main() {
    let models = common::models();
    let condition = ConditionRef::Sample {
        category: Category::Table,
        seed: 1,
    };
    let boxes = condition.sample().unwrap().boxes();
    let opts = GenerateOptions {
        steps: 20,
        kmax: 8,
        ..GenerateOptions::default()
    };
    let scene = run_full(&models, &condition, Some(&boxes), 7, &opts).unwrap();

    let b = scene.parts[0].aabb;
    let mut max = b.max.to_array();
    max[1] = (max[1] + 0.2).min(1.0);
    let req = EditRequest {
        ops: vec![EditOp::Transform {
            part_id: 1,
            min: b.min.to_array(),
            max,
        }],
        frozen: scene.parts.iter().skip(1).map(|p| p.part_id).collect(),
        seed: 5,
    };
    let edited = edit_scene(&models, &scene, &req).unwrap();
    for (a, b) in scene.parts.iter().zip(&edited.parts) {
        println!("part {}: occupancy changed {}", a.part_id, a.grid != b.grid);
    }
}
