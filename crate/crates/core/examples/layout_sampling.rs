//! Trains the box codec and a small layout model, then samples boxes and
//! prints each slot's validity.

use partgen::config::StageConfig;
use partgen::dit::SampleOptions;
use partgen::layout::FilterOptions;
use partgen::synthdata::{corpus, Category};
use partgen::training::train_layout;

fn main() {
    let objects = corpus(11, &[Category::Chair, Category::Table], 2).unwrap();
    let stage = StageConfig {
        depth: 2,
        width: 32,
        heads: 2,
        train_steps: 300,
        batch: 1,
        lr: 1e-3,
        warmup: 50,
    };
    let (model, losses) = train_layout(&objects, &stage, 1000, 8, 1, |_, _| {}).unwrap();
    println!("final layout loss {:.4}", losses.last().unwrap());
    let cond = objects[0].condition();
    // Keep every slot so the validity scores are visible.
    let filter = FilterOptions {
        validity_iou: 0.0,
        nms_iou: 1.0,
    };
    let (boxes, slots) = model.generate(Some(&cond), 7, SampleOptions::default(), filter).unwrap();
    for s in &slots {
        println!("slot {}: validity {:.3}", s.part_id, s.validity);
    }
    println!("{} boxes", boxes.len());
}
