//! Model construction and training for the three stages over a synthetic corpus.

use rand::Rng;

use crate::config::StageConfig;
use crate::dit::{train_loop, Dit, DitConfig, TrainExample, TrainSchedule, COND_DROP_PROB};
use crate::error::{Error, Result};
use crate::layout::{BoxCodec, CodecConfig, CodecTraining, LayoutModel};
use crate::rng::derive_seed;
use crate::stages::{CoarseModel, RefineModel, StageGeometry};
use crate::synthdata::ObjectSample;
use crate::tensor::Mat;

fn schedule(stage: &StageConfig, seed: u64) -> TrainSchedule {
    TrainSchedule {
        steps: stage.train_steps,
        batch: stage.batch,
        lr: stage.lr,
        warmup: stage.warmup,
        final_frac: 0.05,
        drop_prob: COND_DROP_PROB,
        seed,
    }
}

fn dit_config(stage: &StageConfig, payload: usize, tokens_per_slot: usize, kmax: usize, positional: bool) -> DitConfig {
    let mut c = DitConfig::new(stage.depth, stage.width, stage.heads, payload);
    c.tokens_per_slot = tokens_per_slot;
    c.kmax = kmax;
    c.positional = positional;
    c
}

/// Untrained stage-2 model.
pub fn new_coarse(stage: &StageConfig, geometry: StageGeometry, kmax: usize, seed: u64) -> Result<CoarseModel> {
    let c = dit_config(stage, geometry.coarse_payload(), geometry.patch_tokens(), kmax, true);
    CoarseModel::new(Dit::new(c, derive_seed(seed, "init-coarse", 0))?, geometry)
}

/// Untrained stage-3 model.
pub fn new_refine(stage: &StageConfig, geometry: StageGeometry, kmax: usize, seed: u64) -> Result<RefineModel> {
    let c = dit_config(stage, geometry.refine_payload(), geometry.budget, kmax, true);
    RefineModel::new(Dit::new(c, derive_seed(seed, "init-refine", 0))?, geometry)
}

/// Untrained stage-1 transformer around an existing codec.
pub fn new_layout(stage: &StageConfig, codec: BoxCodec, capacity: usize, seed: u64) -> Result<LayoutModel> {
    let c = dit_config(stage, codec.config.width, codec.config.tokens, capacity, false);
    LayoutModel::new(codec, Dit::new(c, derive_seed(seed, "init-layout", 0))?)
}

fn check_corpus(samples: &[ObjectSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    Ok(())
}

fn conditions(samples: &[ObjectSample]) -> Vec<Mat<f32>> {
    samples.iter().map(|s| s.condition()).collect()
}

/// Cycles through the corpus in order, `batch` examples per step.
fn pick(step: usize, k: usize, batch: usize, n: usize) -> usize {
    (step * batch + k) % n
}

/// Trains the box codec, then the stage-1 transformer.
pub fn train_layout(
    samples: &[ObjectSample],
    stage: &StageConfig,
    codec_steps: usize,
    capacity: usize,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<(LayoutModel, Vec<f64>)> {
    check_corpus(samples)?;
    let mut codec = BoxCodec::new(CodecConfig::default(), derive_seed(seed, "codec", 0))?;
    codec.train(CodecTraining {
        steps: codec_steps,
        seed: derive_seed(seed, "codec-train", 0),
        ..CodecTraining::default()
    })?;
    let mut model = new_layout(stage, codec, capacity, seed)?;
    let conds = conditions(samples);
    let examples = samples
        .iter()
        .zip(&conds)
        .map(|(s, c)| model.example(&s.boxes(), c))
        .collect::<Result<Vec<_>>>()?;
    let n = examples.len();
    let losses = train_loop(
        &mut model.dit,
        &schedule(stage, derive_seed(seed, "train-layout", 0)),
        |step, k, _| Ok(examples[pick(step, k, stage.batch, n)].clone()),
        &mut progress,
    )?;
    Ok((model, losses))
}

/// Trains stage 2. With probability `augment_prob` an example's part boxes
/// are perturbed and the parts re-voxelized in the perturbed boxes.
pub fn train_coarse(
    samples: &[ObjectSample],
    stage: &StageConfig,
    geometry: StageGeometry,
    kmax: usize,
    augment_prob: f64,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<(CoarseModel, Vec<f64>)> {
    check_corpus(samples)?;
    let model = new_coarse(stage, geometry, kmax, seed)?;
    let conds = conditions(samples);
    let plain = samples
        .iter()
        .zip(&conds)
        .map(|(s, c)| model.example(s, c, None))
        .collect::<Result<Vec<TrainExample<f32>>>>()?;
    let mut dit = model.dit.clone();
    let n = samples.len();
    let losses = train_loop(
        &mut dit,
        &schedule(stage, derive_seed(seed, "train-coarse", 0)),
        |step, k, rng| {
            let i = pick(step, k, stage.batch, n);
            if augment_prob > 0.0 && rng.random::<f64>() < augment_prob {
                model.example(&samples[i], &conds[i], Some(rng))
            } else {
                Ok(plain[i].clone())
            }
        },
        &mut progress,
    )?;
    Ok((CoarseModel { dit, geometry }, losses))
}

/// Trains stage 3 on ground-truth part grids and synthetic voxel colors.
pub fn train_refine(
    samples: &[ObjectSample],
    stage: &StageConfig,
    geometry: StageGeometry,
    kmax: usize,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<(RefineModel, Vec<f64>)> {
    check_corpus(samples)?;
    let mut model = new_refine(stage, geometry, kmax, seed)?;
    let conds = conditions(samples);
    let examples = samples
        .iter()
        .zip(&conds)
        .map(|(s, c)| model.example(s, c))
        .collect::<Result<Vec<_>>>()?;
    let n = examples.len();
    let losses = train_loop(
        &mut model.dit,
        &schedule(stage, derive_seed(seed, "train-refine", 0)),
        |step, k, _| Ok(examples[pick(step, k, stage.batch, n)].clone()),
        &mut progress,
    )?;
    Ok((model, losses))
}
