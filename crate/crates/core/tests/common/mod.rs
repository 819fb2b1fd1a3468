#![allow(dead_code)]

pub mod checks;
pub mod oracle;

use partgen::config::StageConfig;
use partgen::dit::Dit;
use partgen::layout::{BoxCodec, CodecConfig};
use partgen::pipeline::Models;
use partgen::rng::{det_rng, gaussian};
use partgen::stages::StageGeometry;
use partgen::training::{new_coarse, new_layout, new_refine};

pub fn tiny_stage() -> StageConfig {
    StageConfig {
        depth: 2,
        width: 32,
        heads: 2,
        train_steps: 0,
        batch: 1,
        lr: 1e-3,
        warmup: 10,
    }
}

/// Jitters every weight so the zero-initialized output layers produce a
/// velocity that depends on the whole stream.
pub fn perturb(dit: &mut Dit<f32>, seed: u64, scale: f64) {
    let mut rng = det_rng(seed);
    for t in dit.params.tensors_mut() {
        for v in t.data.iter_mut() {
            *v += (scale * gaussian(&mut rng)) as f32;
        }
    }
}

/// Small untrained (but non-trivial) stage models at grid 16.
pub fn untrained_models(kmax: usize, seed: u64) -> Models {
    let g = StageGeometry::new(16);
    let mut coarse = new_coarse(&tiny_stage(), g, kmax, seed).unwrap();
    let mut refine = new_refine(&tiny_stage(), g, kmax, seed).unwrap();
    perturb(&mut coarse.dit, seed ^ 1, 0.05);
    perturb(&mut refine.dit, seed ^ 2, 0.05);
    let codec = BoxCodec::new(CodecConfig::default(), seed).unwrap();
    let layout = new_layout(&tiny_stage(), codec, kmax, seed).unwrap();
    Models {
        layout: Some(layout),
        coarse,
        refine,
    }
}

pub fn dir_hashes(dir: &std::path::Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let bytes = std::fs::read(e.path()).unwrap();
            (e.file_name().to_string_lossy().into_owned(), partgen::files::sha256_hex(&bytes))
        })
        .collect();
    out.sort();
    out
}
