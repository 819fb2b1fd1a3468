//! Generates a scene from a chair's silhouettes and its ground-truth boxes.
//!
//! cargo run --release --example generate_scene -- [checkpoint-dir]

mod common;

use partgen::pipeline::{run_full, ConditionRef, GenerateOptions};
use partgen::synthdata::Category;

fn main() {
    let models = common::models();
    let condition = ConditionRef::Sample {
        category: Category::Chair,
        seed: 3,
    };
    let boxes = condition.sample().unwrap().boxes();
    let opts = GenerateOptions {
        steps: 20,
        kmax: 8,
        ..GenerateOptions::default()
    };
    let scene = run_full(&models, &condition, Some(&boxes), 7, &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let record = scene.save(dir.path()).unwrap();
    for p in &record.parts {
        println!("part {} -> {} ({})", p.part_id, p.files.ply, &p.files.pvox_sha256[..12]);
    }
    let assembled = scene.assembled().unwrap();
    let triangles: usize = assembled.meshes.iter().map(|m| m.triangles.len()).sum();
    println!("scene {} assembled from {} part meshes, {triangles} triangles", scene.scene_id, assembled.meshes.len());
}
