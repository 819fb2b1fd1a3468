//! Metrics harness: global F-score and chamfer on sampled surfaces, and
//! per-part chamfer under shared layout boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::sha256_hex;
use crate::geometry::{
    chamfer, chamfer_and_fscore, grid_to_cubes, sample_surface, voxelize, Aabb, TriMesh, FSCORE_TAU,
};
use crate::pipeline::{BoxSource, SceneState};
use crate::rng::derive_seed;
use crate::stages::PartOccupancy;
use crate::synthdata::ObjectSample;

pub const EVAL_POINTS: usize = 4096;
pub const REPORT_VERSION: u32 = 1;

/// Chamfer charged for a predicted part with no voxels while its ground
/// truth has some: the diagonal of the canonical cube, an upper bound on any
/// point distance inside it.
pub const EMPTY_PART_PENALTY: f64 = 3.464_101_615_137_754_6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub points: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            points: EVAL_POINTS,
            tau: FSCORE_TAU,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    pub fscore: f64,
    /// Unsquared L2 chamfer, mean of both directions.
    pub chamfer: f64,
}

fn merged(meshes: &[TriMesh]) -> Result<TriMesh> {
    let m = TriMesh::merge(meshes);
    if m.is_empty() {
        return Err(Error::Empty("surface"));
    }
    Ok(m)
}

/// Samples both union surfaces and compares them. Both sides share one
/// sampling seed, so identical inputs score exactly `(1, 0)`.
pub fn eval_global(pred: &[TriMesh], gt: &[TriMesh], opts: &EvalOptions) -> Result<GlobalMetrics> {
    let seed = derive_seed(opts.seed, "eval-surface", 0);
    let p = sample_surface(&merged(pred)?, opts.points, seed)?;
    let g = sample_surface(&merged(gt)?, opts.points, seed)?;
    let (chamfer, fscore) = chamfer_and_fscore(&p, &g, opts.tau)?;
    Ok(GlobalMetrics { fscore, chamfer })
}

/// Surface meshes of occupancy grids in their own boxes.
pub fn occupancy_meshes(parts: &[PartOccupancy]) -> Vec<TriMesh> {
    parts.iter().map(|p| grid_to_cubes(&p.grid, &p.aabb)).collect()
}

/// Chamfer of one part pair in the canonical `[-1, 1]^3` frame.
pub fn part_chamfer(pred: &PartOccupancy, gt: &PartOccupancy, opts: &EvalOptions) -> Result<f64> {
    let seed = derive_seed(opts.seed, "eval-part", pred.part_id as u64);
    match (pred.grid.is_empty(), gt.grid.is_empty()) {
        (true, true) => Ok(0.0),
        (true, false) | (false, true) => Ok(EMPTY_PART_PENALTY),
        (false, false) => {
            let p = sample_surface(&grid_to_cubes(&pred.grid, &Aabb::UNIT), opts.points, seed)?;
            let g = sample_surface(&grid_to_cubes(&gt.grid, &Aabb::UNIT), opts.points, seed)?;
            chamfer(&p, &g)
        }
    }
}

/// Mean per-part chamfer with parts matched by id. The prediction must have
/// been generated from the ground-truth boxes.
pub fn eval_parts(pred: &[PartOccupancy], gt: &[PartOccupancy], opts: &EvalOptions) -> Result<(f64, Vec<f64>)> {
    if pred.len() != gt.len() {
        return Err(Error::PartCountMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("parts"));
    }
    let mut per_part = Vec::with_capacity(pred.len());
    for g in gt {
        let p = pred
            .iter()
            .find(|p| p.part_id == g.part_id)
            .ok_or(Error::UnknownPart(g.part_id as u32))?;
        per_part.push(part_chamfer(p, g, opts)?);
    }
    Ok((per_part.iter().sum::<f64>() / per_part.len() as f64, per_part))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub fscore: f64,
    pub chamfer: f64,
    /// `None` when the scene was not generated from ground-truth boxes.
    pub part_chamfer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub fscore: f64,
    pub chamfer: f64,
    pub part_chamfer: Option<f64>,
    pub samples: usize,
    pub part_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub options: EvalOptions,
    pub samples: Vec<SampleMetrics>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    /// Builds a report; `config` is hashed so runs can be matched to settings.
    pub fn new(config: &str, options: EvalOptions, samples: Vec<SampleMetrics>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("evaluated samples"));
        }
        let n = samples.len() as f64;
        let parts: Vec<f64> = samples.iter().filter_map(|s| s.part_chamfer).collect();
        let aggregate = Aggregate {
            fscore: samples.iter().map(|s| s.fscore).sum::<f64>() / n,
            chamfer: samples.iter().map(|s| s.chamfer).sum::<f64>() / n,
            part_chamfer: (!parts.is_empty()).then(|| parts.iter().sum::<f64>() / parts.len() as f64),
            samples: samples.len(),
            part_samples: parts.len(),
        };
        Ok(EvalReport {
            version: REPORT_VERSION,
            seed: options.seed,
            config_hash: sha256_hex(config.as_bytes())[..16].to_string(),
            options,
            samples,
            aggregate,
        })
    }

    /// Aligned text table, one row per sample plus the mean.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let width = self
            .samples
            .iter()
            .map(|s| s.sample_id.len())
            .max()
            .unwrap_or(0)
            .max("sample".len());
        let mut out = format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}\n",
            "sample", "F-Score", "CD", "Part-CD"
        );
        for s in &self.samples {
            out += &format!(
                "{:<width$}  {:>10.4}  {:>10.4}  {:>10}\n",
                s.sample_id,
                s.fscore,
                s.chamfer,
                fmt(s.part_chamfer)
            );
        }
        let a = &self.aggregate;
        out += &format!(
            "{:<width$}  {:>10.4}  {:>10.4}  {:>10}\n",
            "mean",
            a.fscore,
            a.chamfer,
            fmt(a.part_chamfer)
        );
        out
    }
}

/// Ground-truth parts of a synthetic object at grid `n`, ids `1..`.
pub fn ground_truth_parts(sample: &ObjectSample, n: usize) -> Result<Vec<PartOccupancy>> {
    sample
        .parts
        .iter()
        .map(|p| {
            Ok(PartOccupancy {
                part_id: p.part_id,
                aabb: p.aabb,
                grid: voxelize(&p.solid, &p.aabb, n)?,
            })
        })
        .collect()
}

/// Part chamfer of a scene, or `PartCdNotApplicable` when its boxes did not
/// come from the ground truth.
pub fn scene_part_chamfer(scene: &SceneState, gt: &[PartOccupancy], opts: &EvalOptions) -> Result<f64> {
    if scene.box_source != BoxSource::Given {
        return Err(Error::PartCdNotApplicable(format!(
            "scene {} was not generated from ground-truth boxes",
            scene.scene_id
        )));
    }
    let boxes_match = scene.parts.len() == gt.len()
        && scene
            .parts
            .iter()
            .zip(gt)
            .all(|(p, g)| p.part_id == g.part_id && p.aabb == g.aabb);
    if !boxes_match {
        return Err(Error::PartCdNotApplicable(format!(
            "scene {} boxes differ from the ground-truth boxes",
            scene.scene_id
        )));
    }
    Ok(eval_parts(&scene.occupancies(), gt, opts)?.0)
}

/// Global metrics against the ground-truth object voxelized at the scene's
/// grid, plus part chamfer when applicable.
pub fn eval_scene(scene: &SceneState, gt: &ObjectSample, opts: &EvalOptions) -> Result<SampleMetrics> {
    let gt_parts = ground_truth_parts(gt, scene.geometry.grid)?;
    let pred = scene.occupancies();
    let g = eval_global(&occupancy_meshes(&pred), &occupancy_meshes(&gt_parts), opts)?;
    let part_chamfer = match scene_part_chamfer(scene, &gt_parts, opts) {
        Ok(v) => Some(v),
        Err(Error::PartCdNotApplicable(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SampleMetrics {
        sample_id: gt.sample_id.clone(),
        fscore: g.fscore,
        chamfer: g.chamfer,
        part_chamfer,
    })
}
