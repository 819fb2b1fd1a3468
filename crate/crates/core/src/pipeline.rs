//! End-to-end orchestration: layout, per-part occupancy, refinement, scene
//! persistence and box-level editing with frozen-part latent injection.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dit::{Checkpoint, SampleOptions, CFG_SCALE, SAMPLE_STEPS};
use crate::error::{Error, Result};
use crate::files::{sha256_hex, write_atomic};
use crate::geometry::{Aabb, VoxelGrid, NMS_IOU};
use crate::layout::{FilterOptions, LayoutModel, LAYOUT_CAPACITY, VALIDITY_IOU};
use crate::rng::{derive_seed, gaussian_mat};
use crate::stages::{
    assemble, decode_color, part_mesh, part_noise_seed, AssembledScene, CoarseModel, CoarseOutput, CoarsePart,
    Granularity, PartOccupancy, RefineModel, RefinePart, SlotLatent, SparseLayout, StageGeometry,
};
use crate::synthdata::{generate_sample, Category, ObjectSample};
use crate::tensor::Mat;

pub const SCENE_VERSION: u32 = 1;
pub const SCENE_FILE: &str = "scene.json";
pub const LATENTS_FILE: &str = "latents.ckpt";
pub const GLOBAL_FILE: &str = "global.pvox";

pub const LAYOUT_CHECKPOINT: &str = "layout.ckpt";
pub const COARSE_CHECKPOINT: &str = "coarse.ckpt";
pub const REFINE_CHECKPOINT: &str = "refine.ckpt";

/// The three trained stages. The layout model may be absent when every
/// request supplies its own boxes.
#[derive(Debug, Clone)]
pub struct Models {
    pub layout: Option<LayoutModel>,
    pub coarse: CoarseModel,
    pub refine: RefineModel,
}

pub fn save_coarse(model: &CoarseModel, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::new();
    ck.put_dit("coarse", &model.dit)?;
    ck.meta.insert("geometry".into(), serde_json::to_value(model.geometry)?);
    ck.write(path)
}

pub fn save_refine(model: &RefineModel, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::new();
    ck.put_dit("refine", &model.dit)?;
    ck.meta.insert("geometry".into(), serde_json::to_value(model.geometry)?);
    ck.write(path)
}

pub fn save_layout(model: &LayoutModel, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::new();
    model.put_into(&mut ck)?;
    ck.write(path)
}

fn geometry_of(ck: &Checkpoint) -> Result<StageGeometry> {
    let g = ck
        .meta
        .get("geometry")
        .ok_or_else(|| Error::format("checkpoint", "missing stage geometry"))?;
    Ok(serde_json::from_value(g.clone())?)
}

pub fn load_coarse(path: &Path) -> Result<CoarseModel> {
    let ck = Checkpoint::read(path)?;
    CoarseModel::new(ck.dit("coarse")?, geometry_of(&ck)?)
}

pub fn load_refine(path: &Path) -> Result<RefineModel> {
    let ck = Checkpoint::read(path)?;
    RefineModel::new(ck.dit("refine")?, geometry_of(&ck)?)
}

pub fn load_layout(path: &Path) -> Result<LayoutModel> {
    LayoutModel::from_checkpoint(&Checkpoint::read(path)?)
}

impl Models {
    /// Loads the stage checkpoints from a directory; the layout checkpoint is optional.
    pub fn load(dir: &Path) -> Result<Self> {
        let layout_path = dir.join(LAYOUT_CHECKPOINT);
        let layout = if layout_path.exists() {
            Some(load_layout(&layout_path)?)
        } else {
            None
        };
        let models = Models {
            layout,
            coarse: load_coarse(&dir.join(COARSE_CHECKPOINT))?,
            refine: load_refine(&dir.join(REFINE_CHECKPOINT))?,
        };
        if models.coarse.geometry != models.refine.geometry {
            return Err(Error::format("checkpoint", "stage-2 and stage-3 grids differ"));
        }
        Ok(models)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        if let Some(l) = &self.layout {
            save_layout(l, &dir.join(LAYOUT_CHECKPOINT))?;
        }
        save_coarse(&self.coarse, &dir.join(COARSE_CHECKPOINT))?;
        save_refine(&self.refine, &dir.join(REFINE_CHECKPOINT))
    }

    pub fn geometry(&self) -> StageGeometry {
        self.coarse.geometry
    }
}

/// What a scene is conditioned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionRef {
    /// Silhouettes of a synthetic object.
    Sample { category: Category, seed: u64 },
    Unconditional,
}

impl ConditionRef {
    pub fn sample(&self) -> Option<ObjectSample> {
        match *self {
            ConditionRef::Sample { category, seed } => Some(generate_sample(seed, category)),
            ConditionRef::Unconditional => None,
        }
    }

    pub fn tokens(&self) -> Option<Mat<f32>> {
        self.sample().map(|s| s.condition())
    }
}

/// Sampler and filter settings recorded with every scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub steps: usize,
    pub cfg_scale: f64,
    pub nms_iou: f64,
    pub validity_iou: f64,
    /// Parts sampled jointly per round; more boxes trigger sequential sampling.
    pub kmax: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            steps: SAMPLE_STEPS,
            cfg_scale: CFG_SCALE,
            nms_iou: NMS_IOU,
            validity_iou: VALIDITY_IOU,
            kmax: LAYOUT_CAPACITY,
        }
    }
}

impl GenerateOptions {
    pub fn sampler(&self) -> SampleOptions {
        SampleOptions {
            steps: self.steps,
            cfg_scale: self.cfg_scale,
        }
    }
}

/// Where a scene's boxes came from. Part chamfer is only defined for `Given`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxSource {
    /// Sampled by the layout model.
    Layout,
    /// Supplied with the request.
    Given,
    /// Changed by an edit after generation.
    Edited,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePart {
    pub part_id: usize,
    pub aabb: Aabb,
    pub grid: VoxelGrid,
    /// RGB per occupied voxel, in linear-index order.
    pub colors: Vec<[f32; 3]>,
    pub coarse: SlotLatent,
    /// Absent for parts whose occupancy came out empty.
    pub refine: Option<SlotLatent>,
    pub coarse_seed: u64,
    pub refine_seed: u64,
    pub frozen: bool,
}

impl ScenePart {
    pub fn occupancy(&self) -> PartOccupancy {
        PartOccupancy {
            part_id: self.part_id,
            aabb: self.aabb,
            grid: self.grid.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub scene_id: String,
    /// Number of edits applied since generation.
    pub revision: u32,
    pub condition: ConditionRef,
    pub seed: u64,
    pub options: GenerateOptions,
    pub geometry: StageGeometry,
    pub box_source: BoxSource,
    /// Whole-object grid of the first sampling round (diagnostic).
    pub global: VoxelGrid,
    pub parts: Vec<ScenePart>,
}

impl SceneState {
    pub fn part(&self, part_id: usize) -> Result<&ScenePart> {
        self.parts
            .iter()
            .find(|p| p.part_id == part_id)
            .ok_or(Error::UnknownPart(part_id as u32))
    }

    pub fn boxes(&self) -> Vec<Aabb> {
        self.parts.iter().map(|p| p.aabb).collect()
    }

    pub fn occupancies(&self) -> Vec<PartOccupancy> {
        self.parts.iter().map(|p| p.occupancy()).collect()
    }

    pub fn assembled(&self) -> Result<AssembledScene> {
        let colors: Vec<Option<Vec<[f32; 3]>>> = self.parts.iter().map(|p| Some(p.colors.clone())).collect();
        assemble(&self.occupancies(), &colors)
    }
}

fn scene_id_for(condition: &ConditionRef, seed: u64, options: &GenerateOptions, boxes: Option<&[Aabb]>) -> Result<String> {
    let key = serde_json::json!({
        "condition": condition,
        "seed": seed,
        "options": options,
        "boxes": boxes.map(|b| b.iter().map(|a| (a.min.to_array(), a.max.to_array())).collect::<Vec<_>>()),
    });
    Ok(format!("scene-{}", &sha256_hex(&serde_json::to_vec(&key)?)[..16]))
}

/// One sampling round of [`sequential_sample`] and the stream states it visited.
#[derive(Debug, Clone)]
pub struct RoundTrace {
    /// Input indices of the parts sampled in this round.
    pub parts: Vec<usize>,
    /// Rows of the global slot in the stream.
    pub global_rows: std::ops::Range<usize>,
    /// Stream state after clamping at each sampler time, final state included.
    pub states: Vec<Mat<f32>>,
}

/// Samples any number of parts in rounds of at most `kmax`. The first round
/// samples the global slot freely; later rounds pin it to the first round's
/// clean latent and noise so every batch sees the same whole-object anchor.
pub fn sequential_sample(
    model: &CoarseModel,
    parts: &[CoarsePart],
    global_noise: Mat<f32>,
    cond: Option<&Mat<f32>>,
    kmax: usize,
    opts: SampleOptions,
    mut trace: Option<&mut Vec<RoundTrace>>,
) -> Result<CoarseOutput> {
    if parts.is_empty() {
        return Err(Error::EmptyLayout);
    }
    if kmax == 0 || kmax > model.kmax() {
        return Err(Error::OutOfRange(format!(
            "round size {kmax} must lie in 1..={}",
            model.kmax()
        )));
    }
    let global_rows = 0..global_noise.rows;
    let mut result: Option<CoarseOutput> = None;
    let mut start = 0;
    for chunk in parts.chunks(kmax) {
        let clamp = result.as_ref().map(|r| r.global_latent.x0.clone());
        let mut states = Vec::new();
        let out = model.sample_parts(
            chunk,
            global_noise.clone(),
            clamp,
            cond,
            opts,
            trace.is_some().then_some(&mut states),
        )?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(RoundTrace {
                parts: (start..start + chunk.len()).collect(),
                global_rows: global_rows.clone(),
                states,
            });
        }
        start += chunk.len();
        match &mut result {
            None => result = Some(out),
            Some(r) => {
                r.parts.extend(out.parts);
                r.latents.extend(out.latents);
                r.empty.extend(out.empty);
            }
        }
    }
    Ok(result.expect("at least one round"))
}

/// Refines every non-empty part in rounds of at most `kmax`. Returns colors
/// and latents aligned with `jobs`.
fn refine_all(
    model: &RefineModel,
    jobs: &[RefinePart],
    cond: Option<&Mat<f32>>,
    kmax: usize,
    opts: SampleOptions,
) -> Result<Vec<(Vec<[f32; 3]>, Option<SlotLatent>)>> {
    let mut out: Vec<(Vec<[f32; 3]>, Option<SlotLatent>)> = vec![(Vec::new(), None); jobs.len()];
    let live: Vec<usize> = (0..jobs.len()).filter(|&i| !jobs[i].grid.is_empty()).collect();
    if live.is_empty() {
        return Err(Error::AllPartsEmpty);
    }
    for chunk in live.chunks(kmax.min(model.dit.config().kmax).max(1)) {
        let parts: Vec<RefinePart> = chunk.iter().map(|&i| jobs[i].clone()).collect();
        let r = model.refine(&parts, cond, opts)?;
        for ((&i, tokens), (_, latent)) in chunk.iter().zip(r.parts).zip(r.latents) {
            out[i] = (tokens.colors, Some(latent));
        }
    }
    Ok(out)
}

/// Colors a part from its stage-3 latent.
pub fn colors_from_latent(grid: &VoxelGrid, geometry: &StageGeometry, latent: &SlotLatent) -> Result<Vec<[f32; 3]>> {
    let layout = SparseLayout::new(grid, geometry);
    if latent.x0.rows != layout.tokens() {
        return Err(Error::Shape("stage-3 latent does not match the part grid".into()));
    }
    Ok(layout.unpack(&latent.x0).into_iter().map(decode_color).collect())
}

/// Per-part request for [`sample_parts`].
struct PartRequest {
    part_id: usize,
    aabb: Aabb,
    coarse_seed: u64,
    refine_seed: u64,
    frozen: Option<ScenePart>,
}

/// Stages 2 and 3 over a list of parts. Frozen parts are clamped to their
/// recorded latents in both stages.
fn sample_parts(
    models: &Models,
    requests: Vec<PartRequest>,
    cond: Option<&Mat<f32>>,
    global_seed: u64,
    options: &GenerateOptions,
) -> Result<(VoxelGrid, Vec<ScenePart>)> {
    let g = models.geometry();
    let (rows, cols) = (g.patch_tokens(), g.coarse_payload());
    let coarse_parts: Vec<CoarsePart> = requests
        .iter()
        .map(|r| match &r.frozen {
            Some(p) => CoarsePart {
                part_id: r.part_id,
                aabb: r.aabb,
                noise: p.coarse.eps.clone(),
                frozen: Some(p.coarse.x0.clone()),
            },
            None => CoarsePart {
                part_id: r.part_id,
                aabb: r.aabb,
                noise: gaussian_mat(r.coarse_seed, rows, cols),
                frozen: None,
            },
        })
        .collect();
    let coarse = sequential_sample(
        &models.coarse,
        &coarse_parts,
        gaussian_mat(global_seed, rows, cols),
        cond,
        options.kmax,
        options.sampler(),
        None,
    )?;
    // A frozen part's stage-3 noise is regenerated from its stored seed; its
    // grid is unchanged, so the token count matches the recorded latent.
    let jobs: Vec<RefinePart> = requests
        .iter()
        .zip(&coarse.parts)
        .map(|(r, occ)| RefinePart {
            part_id: r.part_id,
            aabb: r.aabb,
            grid: occ.grid.clone(),
            noise_seed: r.refine_seed,
            frozen: r.frozen.as_ref().and_then(|p| p.refine.as_ref().map(|l| l.x0.clone())),
        })
        .collect();
    let refined = refine_all(&models.refine, &jobs, cond, options.kmax, options.sampler())?;
    let parts = requests
        .into_iter()
        .zip(coarse.parts)
        .zip(coarse.latents)
        .zip(refined)
        .map(|(((r, occ), latent), (colors, refine))| ScenePart {
            part_id: r.part_id,
            aabb: r.aabb,
            grid: occ.grid,
            colors,
            coarse: latent,
            refine,
            coarse_seed: r.coarse_seed,
            refine_seed: r.refine_seed,
            frozen: r.frozen.is_some(),
        })
        .collect();
    Ok((coarse.global, parts))
}

/// Three-stage generation. With `boxes` the layout stage is skipped and the
/// given boxes are used as-is (part ids `1..=len`).
pub fn run_full(
    models: &Models,
    condition: &ConditionRef,
    boxes: Option<&[Aabb]>,
    seed: u64,
    options: &GenerateOptions,
) -> Result<SceneState> {
    let cond = condition.tokens();
    let (boxes, box_source) = match boxes {
        Some(b) => {
            for a in b {
                a.ensure_valid()?;
            }
            (b.to_vec(), BoxSource::Given)
        }
        None => {
            let layout = models
                .layout
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("no layout checkpoint loaded".into()))?;
            let filter = FilterOptions {
                validity_iou: options.validity_iou,
                nms_iou: options.nms_iou,
            };
            let (b, _) = layout.generate(cond.as_ref(), derive_seed(seed, "layout", 0), options.sampler(), filter)?;
            (b, BoxSource::Layout)
        }
    };
    if boxes.is_empty() {
        return Err(Error::EmptyLayout);
    }
    let requests = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| PartRequest {
            part_id: i + 1,
            aabb: *b,
            coarse_seed: part_noise_seed(seed, "coarse", i + 1),
            refine_seed: part_noise_seed(seed, "refine", i + 1),
            frozen: None,
        })
        .collect();
    let (global, parts) = sample_parts(
        models,
        requests,
        cond.as_ref(),
        part_noise_seed(seed, "coarse", 0),
        options,
    )?;
    let given = (box_source == BoxSource::Given).then_some(boxes.as_slice());
    Ok(SceneState {
        scene_id: scene_id_for(condition, seed, options, given)?,
        revision: 0,
        condition: condition.clone(),
        seed,
        options: *options,
        geometry: models.geometry(),
        box_source,
        global,
        parts,
    })
}

/// One box-level edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Add { min: [f64; 3], max: [f64; 3] },
    Delete { part_id: usize },
    Transform { part_id: usize, min: [f64; 3], max: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    #[serde(default)]
    pub ops: Vec<EditOp>,
    /// Parts regenerated bit-identically from their recorded latents.
    #[serde(default)]
    pub frozen: Vec<usize>,
    pub seed: u64,
}

/// Rejection of one op, with its index in the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpError {
    pub op_index: Option<usize>,
    pub message: String,
}

fn box_of(min: [f64; 3], max: [f64; 3]) -> Result<Aabb> {
    let b = Aabb::from_arrays(min, max)?;
    b.ensure_valid()?;
    if b.clamp_to(&Aabb::UNIT) != b {
        return Err(Error::DegenerateBox("box leaves [-1, 1]^3".into()));
    }
    Ok(b)
}

/// Checks an edit request against a scene; on failure reports the offending op.
pub fn validate_edit(state: &SceneState, req: &EditRequest) -> std::result::Result<(), (OpError, Error)> {
    let known: BTreeSet<usize> = state.parts.iter().map(|p| p.part_id).collect();
    let mut touched = BTreeMap::new();
    for (i, op) in req.ops.iter().enumerate() {
        let fail = |e: Error| {
            (
                OpError {
                    op_index: Some(i),
                    message: e.to_string(),
                },
                e,
            )
        };
        match op {
            EditOp::Add { min, max } => {
                box_of(*min, *max).map_err(fail)?;
            }
            EditOp::Delete { part_id } | EditOp::Transform { part_id, .. } => {
                if !known.contains(part_id) {
                    return Err(fail(Error::UnknownPart(*part_id as u32)));
                }
                if touched.insert(*part_id, i).is_some() {
                    return Err(fail(Error::InvalidEdit(format!("part {part_id} is edited twice"))));
                }
                if let EditOp::Transform { min, max, .. } = op {
                    box_of(*min, *max).map_err(fail)?;
                }
            }
        }
    }
    for id in &req.frozen {
        if !known.contains(id) {
            let e = Error::UnknownPart(*id as u32);
            return Err((
                OpError {
                    op_index: None,
                    message: e.to_string(),
                },
                e,
            ));
        }
        if let Some(&i) = touched.get(id) {
            let e = Error::InvalidEdit(format!("part {id} is both frozen and edited"));
            return Err((
                OpError {
                    op_index: Some(i),
                    message: e.to_string(),
                },
                e,
            ));
        }
    }
    Ok(())
}

/// Applies box edits and regenerates every non-frozen part under `req.seed`.
/// Frozen parts keep their grids and colors bit for bit. Part ids are stable;
/// added parts get fresh ids after the current maximum.
pub fn edit_scene(models: &Models, state: &SceneState, req: &EditRequest) -> Result<SceneState> {
    validate_edit(state, req).map_err(|(_, e)| e)?;
    if models.geometry() != state.geometry {
        return Err(Error::InvalidArgument("checkpoint grid differs from the scene grid".into()));
    }
    let frozen: BTreeSet<usize> = req.frozen.iter().copied().collect();
    let mut boxes: Vec<(usize, Aabb)> = state.parts.iter().map(|p| (p.part_id, p.aabb)).collect();
    let mut next_id = state.parts.iter().map(|p| p.part_id).max().unwrap_or(0) + 1;
    for op in &req.ops {
        match op {
            EditOp::Add { min, max } => {
                boxes.push((next_id, box_of(*min, *max)?));
                next_id += 1;
            }
            EditOp::Delete { part_id } => boxes.retain(|(id, _)| id != part_id),
            EditOp::Transform { part_id, min, max } => {
                let b = box_of(*min, *max)?;
                for entry in boxes.iter_mut().filter(|(id, _)| id == part_id) {
                    entry.1 = b;
                }
            }
        }
    }
    if boxes.is_empty() {
        return Err(Error::EmptyLayout);
    }
    let mut next = state.clone();
    next.revision += 1;
    if boxes.iter().all(|(id, _)| frozen.contains(id)) {
        // Every slot would be clamped for the whole trajectory: the result is
        // the recorded state, so skip sampling.
        next.parts.retain(|p| frozen.contains(&p.part_id));
        for p in &mut next.parts {
            p.frozen = true;
        }
        return Ok(next);
    }
    let requests = boxes
        .iter()
        .map(|&(id, aabb)| {
            let keep = frozen.contains(&id).then(|| state.part(id).cloned()).transpose()?;
            Ok(match keep {
                Some(p) => PartRequest {
                    part_id: id,
                    aabb,
                    coarse_seed: p.coarse_seed,
                    refine_seed: p.refine_seed,
                    frozen: Some(p),
                },
                None => PartRequest {
                    part_id: id,
                    aabb,
                    coarse_seed: part_noise_seed(req.seed, "coarse", id),
                    refine_seed: part_noise_seed(req.seed, "refine", id),
                    frozen: None,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cond = state.condition.tokens();
    let (global, parts) = sample_parts(
        models,
        requests,
        cond.as_ref(),
        part_noise_seed(req.seed, "coarse", 0),
        &state.options,
    )?;
    next.global = global;
    next.parts = parts;
    next.box_source = if req.ops.is_empty() {
        state.box_source
    } else {
        BoxSource::Edited
    };
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartFiles {
    pub pvox: String,
    pub ply: String,
    pub pvox_sha256: String,
    pub ply_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub part_id: usize,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub frozen: bool,
    pub occupied: usize,
    pub granularity: Option<Granularity>,
    pub coarse_seed: u64,
    pub refine_seed: u64,
    pub files: PartFiles,
}

/// `scene.json`: everything needed to reload a scene, plus file references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub version: u32,
    pub scene_id: String,
    pub revision: u32,
    pub condition: ConditionRef,
    pub seed: u64,
    pub options: GenerateOptions,
    pub geometry: StageGeometry,
    pub box_source: BoxSource,
    pub global: String,
    pub latents: String,
    pub parts: Vec<PartRecord>,
}

impl SceneRecord {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SCENE_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let rec: SceneRecord = serde_json::from_slice(&bytes)?;
        if rec.version != SCENE_VERSION {
            return Err(Error::format("scene", format!("unsupported version {}", rec.version)));
        }
        Ok(rec)
    }

    /// Every file the record references, relative to the scene directory.
    pub fn files(&self) -> Vec<String> {
        let mut f = vec![SCENE_FILE.to_string(), self.global.clone(), self.latents.clone()];
        for p in &self.parts {
            f.push(p.files.pvox.clone());
            f.push(p.files.ply.clone());
        }
        f
    }
}

fn latent_name(part_id: usize, stage: &str, what: &str) -> String {
    format!("part.{part_id}.{stage}.{what}")
}

impl SceneState {
    /// Writes the scene directory. Each file is written atomically and
    /// `scene.json` last; files of deleted parts are removed afterwards.
    pub fn save(&self, dir: &Path) -> Result<SceneRecord> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut latents = Checkpoint::new();
        latents.meta.insert("scene_id".into(), self.scene_id.clone().into());
        let mut parts = Vec::with_capacity(self.parts.len());
        for p in &self.parts {
            let pvox = p.grid.to_pvox();
            let ply = part_mesh(&p.occupancy(), Some(&p.colors)).to_ply_bytes();
            let files = PartFiles {
                pvox: format!("part_{}.pvox", p.part_id),
                ply: format!("part_{}.ply", p.part_id),
                pvox_sha256: sha256_hex(&pvox),
                ply_sha256: sha256_hex(&ply),
            };
            write_atomic(&dir.join(&files.pvox), &pvox)?;
            write_atomic(&dir.join(&files.ply), &ply)?;
            latents.tensors.push((latent_name(p.part_id, "coarse", "x0"), p.coarse.x0.clone()));
            latents.tensors.push((latent_name(p.part_id, "coarse", "eps"), p.coarse.eps.clone()));
            if let Some(r) = &p.refine {
                latents.tensors.push((latent_name(p.part_id, "refine", "x0"), r.x0.clone()));
                latents.tensors.push((latent_name(p.part_id, "refine", "eps"), r.eps.clone()));
            }
            parts.push(PartRecord {
                part_id: p.part_id,
                min: p.aabb.min.to_array(),
                max: p.aabb.max.to_array(),
                frozen: p.frozen,
                occupied: p.grid.count(),
                granularity: p
                    .refine
                    .as_ref()
                    .map(|_| SparseLayout::new(&p.grid, &self.geometry).granularity),
                coarse_seed: p.coarse_seed,
                refine_seed: p.refine_seed,
                files,
            });
        }
        write_atomic(&dir.join(GLOBAL_FILE), &self.global.to_pvox())?;
        latents.write(&dir.join(LATENTS_FILE))?;
        let record = SceneRecord {
            version: SCENE_VERSION,
            scene_id: self.scene_id.clone(),
            revision: self.revision,
            condition: self.condition.clone(),
            seed: self.seed,
            options: self.options,
            geometry: self.geometry,
            box_source: self.box_source,
            global: GLOBAL_FILE.into(),
            latents: LATENTS_FILE.into(),
            parts,
        };
        write_atomic(&dir.join(SCENE_FILE), &serde_json::to_vec_pretty(&record)?)?;
        remove_orphans(dir, &record)?;
        Ok(record)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let rec = SceneRecord::read(dir)?;
        let latents = Checkpoint::read(&dir.join(&rec.latents))?;
        let tensor = |name: String| {
            latents
                .tensor(&name)
                .cloned()
                .ok_or_else(|| Error::format("latents", format!("missing tensor {name}")))
        };
        let read_grid = |name: &str| -> Result<VoxelGrid> {
            let path = dir.join(name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            VoxelGrid::from_pvox(&bytes)
        };
        let mut parts = Vec::with_capacity(rec.parts.len());
        for p in &rec.parts {
            let grid = read_grid(&p.files.pvox)?;
            let coarse = SlotLatent {
                x0: tensor(latent_name(p.part_id, "coarse", "x0"))?,
                eps: tensor(latent_name(p.part_id, "coarse", "eps"))?,
            };
            let refine = match latents.tensor(&latent_name(p.part_id, "refine", "x0")) {
                Some(x0) => Some(SlotLatent {
                    x0: x0.clone(),
                    eps: tensor(latent_name(p.part_id, "refine", "eps"))?,
                }),
                None => None,
            };
            let colors = match &refine {
                Some(l) => colors_from_latent(&grid, &rec.geometry, l)?,
                None => Vec::new(),
            };
            parts.push(ScenePart {
                part_id: p.part_id,
                aabb: Aabb::from_arrays(p.min, p.max)?,
                grid,
                colors,
                coarse,
                refine,
                coarse_seed: p.coarse_seed,
                refine_seed: p.refine_seed,
                frozen: p.frozen,
            });
        }
        Ok(SceneState {
            scene_id: rec.scene_id,
            revision: rec.revision,
            condition: rec.condition,
            seed: rec.seed,
            options: rec.options,
            geometry: rec.geometry,
            box_source: rec.box_source,
            global: read_grid(&rec.global)?,
            parts,
        })
    }
}

/// Deletes part files no longer referenced by `record`.
fn remove_orphans(dir: &Path, record: &SceneRecord) -> Result<()> {
    let keep: BTreeSet<String> = record.files().into_iter().collect();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let generated = name.starts_with("part_") && (name.ends_with(".pvox") || name.ends_with(".ply"));
        if generated && !keep.contains(&name) {
            let path: PathBuf = entry.path();
            std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
