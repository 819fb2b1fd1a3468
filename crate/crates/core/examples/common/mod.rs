//! Models for the examples: loaded from a checkpoint directory given as the
//! first argument, or else trained for a few seconds on two objects.

use partgen::config::StageConfig;
use partgen::pipeline::Models;
use partgen::stages::StageGeometry;
use partgen::synthdata::{corpus, Category};
use partgen::training::{train_coarse, train_refine};

pub fn models() -> Models {
    if let Some(dir) = std::env::args().nth(1) {
        return Models::load(dir.as_ref()).expect("loading checkpoints");
    }
    let stage = StageConfig {
        depth: 2,
        width: 32,
        heads: 2,
        train_steps: 150,
        batch: 1,
        lr: 2e-3,
        warmup: 20,
    };
    let objects = corpus(11, &[Category::Chair, Category::Table], 2).unwrap();
    let g = StageGeometry::new(16);
    let (coarse, _) = train_coarse(&objects, &stage, g, 8, 0.0, 1, |_, _| {}).unwrap();
    let (refine, _) = train_refine(&objects, &stage, g, 8, 1, |_, _| {}).unwrap();
    Models {
        layout: None,
        coarse,
        refine,
    }
}
