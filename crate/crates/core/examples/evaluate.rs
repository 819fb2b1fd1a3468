//! Scores a generated scene against its ground-truth object.

mod common;

use partgen::eval::{eval_scene, EvalOptions};
use partgen::pipeline::{run_full, ConditionRef, GenerateOptions};
use partgen::synthdata::{generate_sample, Category};

fn main() {
    let models = common::models();
    let gt = generate_sample(2, Category::Lamp);
    let condition = ConditionRef::Sample {
        category: gt.category,
        seed: gt.seed,
    };
    let opts = GenerateOptions {
        steps: 20,
        kmax: 8,
        ..GenerateOptions::default()
    };
    let scene = run_full(&models, &condition, Some(&gt.boxes()), 7, &opts).unwrap();
    let m = eval_scene(&scene, &gt, &EvalOptions::default()).unwrap();
    println!("F-score@0.1 {:.3}  chamfer {:.4}  part chamfer {:?}", m.fscore, m.chamfer, m.part_chamfer);
}
