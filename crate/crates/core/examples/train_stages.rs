//! Trains small stage-2 and stage-3 models and writes checkpoints.
//!
//! cargo run --release --example train_stages -- <out-dir> [steps]

use partgen::config::StageConfig;
use partgen::pipeline::Models;
use partgen::stages::StageGeometry;
use partgen::synthdata::{corpus, Category};
use partgen::training::{train_coarse, train_refine};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "checkpoints".into());
    let steps: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let objects = corpus(11, &Category::ALL, 8).unwrap();
    let stage = StageConfig {
        depth: 4,
        width: 64,
        heads: 4,
        train_steps: steps,
        batch: 1,
        lr: 1e-3,
        warmup: 50,
    };
    let g = StageGeometry::new(16);
    let report = |name: &'static str| {
        move |step: usize, loss: f64| {
            if (step + 1) % 50 == 0 {
                println!("{name} step {} loss {loss:.4}", step + 1);
            }
        }
    };
    let (coarse, _) = train_coarse(&objects, &stage, g, 8, 0.5, 1, report("coarse")).unwrap();
    let (refine, _) = train_refine(&objects, &stage, g, 8, 1, report("refine")).unwrap();
    std::fs::create_dir_all(&out).unwrap();
    Models {
        layout: None,
        coarse,
        refine,
    }
    .save(out.as_ref())
    .unwrap();
    println!("checkpoints written to {out}");
}
