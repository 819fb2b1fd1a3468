//! Stage 2 (per-part occupancy at full resolution) and stage 3 (per-voxel
//! features), both sampled by the shared diffusion transformer.
//!
//! Every part is voxelized in its own canonical frame, so a small part gets
//! the same `N^3` resolution as a large one. Tokens learn where they sit in
//! the object through center-corner keys of their cells.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dit::{sample, BoundDit, Clamp, Dit, SampleOptions, StreamLayout, TrainExample};
use crate::encoding::{cell_key, grid_keys, CenterCornerKey};
use crate::error::{Error, Result};
use crate::geometry::{grid_to_cubes, voxelize, Aabb, TriMesh, Vec3, VoxelGrid};
use crate::rng::{derive_seed, gaussian_mat, DetRng};
use crate::synthdata::{voxel_colors, ObjectSample};
use crate::tensor::Mat;

/// Default patch edge for stage-2 tokens.
pub const PATCH: usize = 4;
/// Stage-3 parts with more occupied voxels than this switch to one token per
/// occupied patch.
pub const TOKEN_BUDGET: usize = 64;

/// Resolution settings shared by stages 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageGeometry {
    /// Voxels per axis of each part grid (N).
    pub grid: usize,
    /// Patch edge (p); `grid` must be divisible by it.
    pub patch: usize,
    /// Stage-3 per-voxel token budget per part.
    pub budget: usize,
}

impl StageGeometry {
    pub fn new(grid: usize) -> Self {
        StageGeometry {
            grid,
            patch: PATCH,
            budget: TOKEN_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 || !self.grid.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid {} must be a power of two",
                self.grid
            )));
        }
        if self.patch == 0 || self.grid % self.patch != 0 {
            return Err(Error::InvalidArgument(format!(
                "grid {} is not divisible by patch {}",
                self.grid, self.patch
            )));
        }
        Ok(())
    }

    /// Tokens per part in stage 2, `(N/p)^3`.
    pub fn patch_tokens(&self) -> usize {
        (self.grid / self.patch).pow(3)
    }

    /// Stage-2 payload width, `p^3`.
    pub fn coarse_payload(&self) -> usize {
        self.patch.pow(3)
    }

    /// Stage-3 payload width: three feature channels for each cell of a patch.
    pub fn refine_payload(&self) -> usize {
        3 * self.patch.pow(3)
    }
}

/// One part's occupancy in its own box frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PartOccupancy {
    pub part_id: usize,
    pub aabb: Aabb,
    pub grid: VoxelGrid,
}

/// Patchifies a binary grid: token `i` holds the `p^3` cells of patch `i`
/// (patches and cells both in x-fastest linear order) as -1 / +1.
pub fn occupancy_to_tokens(grid: &VoxelGrid, p: usize) -> Result<Mat<f32>> {
    let n = grid.n();
    if p == 0 || n % p != 0 {
        return Err(Error::InvalidArgument(format!("grid {n} is not divisible by patch {p}")));
    }
    let np = n / p;
    let mut m = Mat::zeros(np * np * np, p * p * p);
    for pz in 0..np {
        for py in 0..np {
            for px in 0..np {
                let row = m.row_mut(px + np * (py + np * pz));
                for dz in 0..p {
                    for dy in 0..p {
                        for dx in 0..p {
                            let on = grid.get(px * p + dx, py * p + dy, pz * p + dz);
                            row[dx + p * (dy + p * dz)] = if on { 1.0 } else { -1.0 };
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Inverse of [`occupancy_to_tokens`] with a sign threshold at 0.
pub fn tokens_to_occupancy(tokens: &Mat<f32>, n: usize, p: usize) -> Result<VoxelGrid> {
    if p == 0 || n % p != 0 {
        return Err(Error::InvalidArgument(format!("grid {n} is not divisible by patch {p}")));
    }
    let np = n / p;
    if tokens.shape() != (np * np * np, p * p * p) {
        return Err(Error::Shape(format!(
            "tokens {:?} do not match a {n}^3 grid with patch {p}",
            tokens.shape()
        )));
    }
    let mut g = VoxelGrid::new(n)?;
    for pz in 0..np {
        for py in 0..np {
            for px in 0..np {
                let row = tokens.row(px + np * (py + np * pz));
                for dz in 0..p {
                    for dy in 0..p {
                        for dx in 0..p {
                            if row[dx + p * (dy + p * dz)] > 0.0 {
                                g.set(px * p + dx, py * p + dy, pz * p + dz, true);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Center-corner keys of the `(n/p)^3` patch cells of a part box.
pub fn patch_keys(aabb: &Aabb, n: usize, p: usize, r: u32) -> Result<Vec<CenterCornerKey>> {
    if p == 0 || n % p != 0 {
        return Err(Error::InvalidArgument(format!("grid {n} is not divisible by patch {p}")));
    }
    aabb.ensure_valid()?;
    Ok(grid_keys(aabb, n / p, r))
}

/// Scales each axis of `b` about its center by `scale[a]`, shifts the center
/// by `jitter[a]` times the original extent and clamps to `[-1, 1]^3`.
pub fn augment_box_with(b: &Aabb, scale: [f64; 3], jitter: [f64; 3]) -> Aabb {
    let e = b.extent();
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        // Written as offsets from the original faces so the identity draw is exact.
        let shrink = e[a] * (1.0 - scale[a]) / 2.0;
        let shift = jitter[a] * e[a];
        lo[a] = (b.min[a] + shrink + shift).clamp(-1.0, 1.0);
        hi[a] = (b.max[a] - shrink + shift).clamp(-1.0, 1.0);
    }
    Aabb::from_arrays(lo, hi).expect("clamped bounds stay ordered")
}

/// Random box augmentation: per-axis scale in `[0.9, 1.1]` and center
/// jitter within 5% of the extent.
pub fn augment_box(b: &Aabb, rng: &mut impl Rng) -> Aabb {
    let scale = [0; 3].map(|_| rng.random_range(0.9..=1.1));
    let jitter = [0; 3].map(|_| rng.random_range(-0.05..=0.05));
    augment_box_with(b, scale, jitter)
}

/// One slot of a sampling request.
#[derive(Debug, Clone)]
pub struct SlotSpec {
    /// Row of the ID table (0 = global branch).
    pub slot_id: usize,
    pub keys: Vec<CenterCornerKey>,
    /// Initial state at `t = 1`, and the recorded noise of a clamped slot.
    pub noise: Mat<f32>,
    /// Clean latent to pin the slot to (frozen parts, anchored global slot).
    pub clamp_x0: Option<Mat<f32>>,
}

/// Samples all slots jointly and returns each slot's final rows. When
/// `trace` is given it receives the full stream state at every step.
pub fn sample_slots(
    dit: &Dit<f32>,
    slots: &[SlotSpec],
    cond: Option<&Mat<f32>>,
    opts: SampleOptions,
    trace: Option<&mut Vec<Mat<f32>>>,
) -> Result<Vec<Mat<f32>>> {
    if slots.is_empty() {
        return Err(Error::Empty("slots"));
    }
    let mut lengths = Vec::with_capacity(slots.len());
    let mut keys = Vec::new();
    let mut clamps = Vec::new();
    let mut start = 0;
    for s in slots {
        if s.keys.len() != s.noise.rows {
            return Err(Error::Shape("slot keys and noise rows differ".into()));
        }
        lengths.push((s.slot_id, s.noise.rows));
        keys.extend_from_slice(&s.keys);
        if let Some(x0) = &s.clamp_x0 {
            clamps.push(Clamp {
                rows: start..start + s.noise.rows,
                x0: x0.clone(),
                eps: s.noise.clone(),
            });
        }
        start += s.noise.rows;
    }
    let layout = StreamLayout::from_lengths(&lengths).with_keys(keys);
    let noise = Mat::vstack(&slots.iter().map(|s| &s.noise).collect::<Vec<_>>());
    let field = BoundDit {
        dit,
        layout: &layout,
    };
    let x = sample(&field, cond, noise, opts, &clamps, trace)?;
    Ok(layout.slots.iter().map(|s| x.rows_slice(s.start, s.start + s.len)).collect())
}

/// Noise seed of part `part_id` for stage `stage` under request seed `seed`.
pub fn part_noise_seed(seed: u64, stage: &str, part_id: usize) -> u64 {
    derive_seed(seed, stage, part_id as u64)
}

/// Clean latent and noise recorded for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLatent {
    pub x0: Mat<f32>,
    pub eps: Mat<f32>,
}

/// Per-part input to stage 2.
#[derive(Debug, Clone)]
pub struct CoarsePart {
    /// Identifier reported in the output.
    pub part_id: usize,
    pub aabb: Aabb,
    pub noise: Mat<f32>,
    pub frozen: Option<Mat<f32>>,
}

#[derive(Debug, Clone)]
pub struct CoarseOutput {
    pub parts: Vec<PartOccupancy>,
    pub latents: Vec<SlotLatent>,
    /// Whole-object occupancy from slot 0 (diagnostic).
    pub global: VoxelGrid,
    pub global_latent: SlotLatent,
    /// Parts whose sampled grid came out empty.
    pub empty: Vec<usize>,
}

/// Stage-2 model: a positional transformer over patch tokens.
#[derive(Debug, Clone)]
pub struct CoarseModel {
    pub dit: Dit<f32>,
    pub geometry: StageGeometry,
}

impl CoarseModel {
    pub fn new(dit: Dit<f32>, geometry: StageGeometry) -> Result<Self> {
        geometry.validate()?;
        let c = dit.config();
        if !c.positional || c.payload != geometry.coarse_payload() {
            return Err(Error::InvalidArgument(
                "stage-2 model needs positional keys and a p^3 payload".into(),
            ));
        }
        Ok(CoarseModel { dit, geometry })
    }

    pub fn kmax(&self) -> usize {
        self.dit.config().kmax
    }

    fn keys(&self, aabb: &Aabb) -> Result<Vec<CenterCornerKey>> {
        patch_keys(aabb, self.geometry.grid, self.geometry.patch, self.dit.config().lattice)
    }

    /// Samples per-part grids for `parts` (slot ids `1..`) plus the global
    /// slot, which is pinned when `global.clamp_x0` is set.
    pub fn sample_parts(
        &self,
        parts: &[CoarsePart],
        global_noise: Mat<f32>,
        global_clamp: Option<Mat<f32>>,
        cond: Option<&Mat<f32>>,
        opts: SampleOptions,
        trace: Option<&mut Vec<Mat<f32>>>,
    ) -> Result<CoarseOutput> {
        if parts.is_empty() {
            return Err(Error::EmptyLayout);
        }
        if parts.len() > self.kmax() {
            return Err(Error::OutOfRange(format!(
                "{} parts exceed the per-round capacity {}",
                parts.len(),
                self.kmax()
            )));
        }
        let (n, p) = (self.geometry.grid, self.geometry.patch);
        let mut specs = vec![SlotSpec {
            slot_id: 0,
            keys: self.keys(&Aabb::UNIT)?,
            noise: global_noise.clone(),
            clamp_x0: global_clamp,
        }];
        for (i, part) in parts.iter().enumerate() {
            specs.push(SlotSpec {
                slot_id: i + 1,
                keys: self.keys(&part.aabb)?,
                noise: part.noise.clone(),
                clamp_x0: part.frozen.clone(),
            });
        }
        let out = sample_slots(&self.dit, &specs, cond, opts, trace)?;
        let global = tokens_to_occupancy(&out[0], n, p)?;
        let mut occ = Vec::with_capacity(parts.len());
        let mut latents = Vec::with_capacity(parts.len());
        let mut empty = Vec::new();
        for (part, x0) in parts.iter().zip(&out[1..]) {
            let grid = tokens_to_occupancy(x0, n, p)?;
            if grid.is_empty() {
                empty.push(part.part_id);
            }
            occ.push(PartOccupancy {
                part_id: part.part_id,
                aabb: part.aabb,
                grid,
            });
            latents.push(SlotLatent {
                x0: x0.clone(),
                eps: part.noise.clone(),
            });
        }
        Ok(CoarseOutput {
            parts: occ,
            latents,
            global,
            global_latent: SlotLatent {
                x0: out[0].clone(),
                eps: global_noise,
            },
            empty,
        })
    }

    /// Fresh stage-2 generation for `boxes` (part ids `1..=len`), noise drawn
    /// from per-part sub-seeds of `seed`.
    pub fn generate_coarse(
        &self,
        boxes: &[Aabb],
        cond: Option<&Mat<f32>>,
        seed: u64,
        opts: SampleOptions,
    ) -> Result<CoarseOutput> {
        if boxes.is_empty() {
            return Err(Error::EmptyLayout);
        }
        let (rows, cols) = (self.geometry.patch_tokens(), self.geometry.coarse_payload());
        let parts: Vec<CoarsePart> = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| CoarsePart {
                part_id: i + 1,
                aabb: *b,
                noise: gaussian_mat(part_noise_seed(seed, "coarse", i + 1), rows, cols),
                frozen: None,
            })
            .collect();
        let g = gaussian_mat(part_noise_seed(seed, "coarse", 0), rows, cols);
        self.sample_parts(&parts, g, None, cond, opts, None)
    }

    /// Training stream for one sample. With `augment`, every part box is
    /// perturbed and the part re-voxelized inside the perturbed box.
    pub fn example(
        &self,
        sample: &ObjectSample,
        cond: &Mat<f32>,
        rng: Option<&mut DetRng>,
    ) -> Result<TrainExample<f32>> {
        let (n, p) = (self.geometry.grid, self.geometry.patch);
        let boxes: Vec<Aabb> = match rng {
            Some(rng) => sample.parts.iter().map(|q| augment_box(&q.aabb, rng)).collect(),
            None => sample.boxes(),
        };
        let parts = &sample.parts[..sample.parts.len().min(self.kmax())];
        let mut blocks = vec![occupancy_to_tokens(&sample.global_grid(&Aabb::UNIT, n)?, p)?];
        let mut keys = self.keys(&Aabb::UNIT)?;
        let mut lengths = vec![(0, blocks[0].rows)];
        for (i, part) in parts.iter().enumerate() {
            let grid = voxelize(&part.solid, &boxes[i], n)?;
            blocks.push(occupancy_to_tokens(&grid, p)?);
            keys.extend(self.keys(&boxes[i])?);
            lengths.push((i + 1, blocks[i + 1].rows));
        }
        Ok(TrainExample {
            x0: Mat::vstack(&blocks.iter().collect::<Vec<_>>()),
            layout: StreamLayout::from_lengths(&lengths).with_keys(keys),
            cond: cond.clone(),
            weights: None,
        })
    }
}

/// Token granularity of a stage-3 part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One token per occupied voxel.
    Voxel,
    /// One token per occupied `p^3` patch.
    Patch,
}

/// Occupied voxels of a part and their placement in stage-3 tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayout {
    pub granularity: Granularity,
    /// Occupied cells, sorted by linear index.
    pub positions: Vec<[usize; 3]>,
    /// Token cells: voxel coordinates, or patch coordinates on the `(n/p)^3` lattice.
    pub token_cells: Vec<[usize; 3]>,
    /// For each position, `(token, first payload column)`.
    pub slots: Vec<(usize, usize)>,
}

impl SparseLayout {
    pub fn new(grid: &VoxelGrid, geometry: &StageGeometry) -> Self {
        let p = geometry.patch;
        let positions: Vec<[usize; 3]> = grid.occupied().map(|i| grid.coords(i)).collect();
        if positions.len() <= geometry.budget {
            return SparseLayout {
                granularity: Granularity::Voxel,
                token_cells: positions.clone(),
                slots: (0..positions.len()).map(|i| (i, 0)).collect(),
                positions,
            };
        }
        let np = grid.n() / p;
        let patch_index = |c: &[usize; 3]| c[0] / p + np * (c[1] / p + np * (c[2] / p));
        let mut patches: Vec<usize> = positions.iter().map(patch_index).collect();
        patches.sort_unstable();
        patches.dedup();
        let token_cells = patches
            .iter()
            .map(|&i| [i % np, (i / np) % np, i / (np * np)])
            .collect();
        let slots = positions
            .iter()
            .map(|c| {
                let t = patches.binary_search(&patch_index(c)).expect("patch listed");
                let (dx, dy, dz) = (c[0] % p, c[1] % p, c[2] % p);
                (t, 3 * (dx + p * (dy + p * dz)))
            })
            .collect();
        SparseLayout {
            granularity: Granularity::Patch,
            positions,
            token_cells,
            slots,
        }
    }

    pub fn tokens(&self) -> usize {
        self.token_cells.len()
    }

    pub fn keys(&self, aabb: &Aabb, geometry: &StageGeometry, r: u32) -> Result<Vec<CenterCornerKey>> {
        let n = match self.granularity {
            Granularity::Voxel => geometry.grid,
            Granularity::Patch => geometry.grid / geometry.patch,
        };
        self.token_cells.iter().map(|c| cell_key(aabb, *c, n, r)).collect()
    }

    /// Packs per-voxel features into tokens; returns the tokens and the
    /// element mask of used payload entries.
    pub fn pack(&self, feats: &[[f32; 3]], width: usize) -> (Mat<f32>, Mat<f32>) {
        let mut x = Mat::zeros(self.tokens(), width);
        let mut w = Mat::zeros(self.tokens(), width);
        for (f, &(t, c)) in feats.iter().zip(&self.slots) {
            for k in 0..3 {
                *x.at_mut(t, c + k) = f[k];
                *w.at_mut(t, c + k) = 1.0;
            }
        }
        (x, w)
    }

    pub fn unpack(&self, tokens: &Mat<f32>) -> Vec<[f32; 3]> {
        self.slots
            .iter()
            .map(|&(t, c)| [tokens.at(t, c), tokens.at(t, c + 1), tokens.at(t, c + 2)])
            .collect()
    }
}

/// Toy feature decoder: elementwise sigmoid, so a zero feature is mid-gray.
pub fn decode_color(f: [f32; 3]) -> [f32; 3] {
    f.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Inverse of [`decode_color`] for training targets; colors are clamped away
/// from 0 and 1.
pub fn encode_color(c: [f32; 3]) -> [f32; 3] {
    c.map(|v| {
        let v = v.clamp(0.02, 0.98);
        (v / (1.0 - v)).ln()
    })
}

/// Per-voxel features of one part (Eq. (f_i, p_i) pairs).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVoxelTokens {
    pub part_id: usize,
    pub layout: SparseLayout,
    /// `L_k x 3` features in position order.
    pub features: Vec<[f32; 3]>,
    /// Decoded RGB in `[0, 1]`.
    pub colors: Vec<[f32; 3]>,
}

/// Per-part input to stage 3.
#[derive(Debug, Clone)]
pub struct RefinePart {
    pub part_id: usize,
    pub aabb: Aabb,
    pub grid: VoxelGrid,
    pub noise_seed: u64,
    pub frozen: Option<Mat<f32>>,
}

#[derive(Debug, Clone)]
pub struct RefineOutput {
    /// One entry per input part; empty parts carry no voxels.
    pub parts: Vec<SparseVoxelTokens>,
    /// Clean latent per non-empty part, keyed by part id.
    pub latents: Vec<(usize, SlotLatent)>,
}

/// Stage-3 model over sparse voxel (or patch) tokens.
#[derive(Debug, Clone)]
pub struct RefineModel {
    pub dit: Dit<f32>,
    pub geometry: StageGeometry,
}

impl RefineModel {
    pub fn new(dit: Dit<f32>, geometry: StageGeometry) -> Result<Self> {
        geometry.validate()?;
        let c = dit.config();
        if !c.positional || c.payload != geometry.refine_payload() {
            return Err(Error::InvalidArgument(
                "stage-3 model needs positional keys and a 3 p^3 payload".into(),
            ));
        }
        Ok(RefineModel { dit, geometry })
    }

    /// Samples features for every non-empty part jointly.
    pub fn refine(
        &self,
        parts: &[RefinePart],
        cond: Option<&Mat<f32>>,
        opts: SampleOptions,
    ) -> Result<RefineOutput> {
        let width = self.geometry.refine_payload();
        let r = self.dit.config().lattice;
        let layouts: Vec<SparseLayout> = parts
            .iter()
            .map(|p| SparseLayout::new(&p.grid, &self.geometry))
            .collect();
        let live: Vec<usize> = (0..parts.len()).filter(|&i| layouts[i].tokens() > 0).collect();
        if live.is_empty() {
            return Err(Error::AllPartsEmpty);
        }
        if live.len() > self.dit.config().kmax {
            return Err(Error::OutOfRange(format!(
                "{} parts exceed the per-round capacity {}",
                live.len(),
                self.dit.config().kmax
            )));
        }
        let mut specs = Vec::with_capacity(live.len());
        for (slot, &i) in live.iter().enumerate() {
            let l = &layouts[i];
            specs.push(SlotSpec {
                slot_id: slot + 1,
                keys: l.keys(&parts[i].aabb, &self.geometry, r)?,
                noise: gaussian_mat(parts[i].noise_seed, l.tokens(), width),
                clamp_x0: parts[i].frozen.clone(),
            });
        }
        let out = sample_slots(&self.dit, &specs, cond, opts, None)?;
        let mut result = Vec::with_capacity(parts.len());
        let mut latents = Vec::with_capacity(live.len());
        for (i, part) in parts.iter().enumerate() {
            let layout = layouts[i].clone();
            let features = match live.iter().position(|&j| j == i) {
                Some(s) => {
                    latents.push((
                        part.part_id,
                        SlotLatent {
                            x0: out[s].clone(),
                            eps: specs[s].noise.clone(),
                        },
                    ));
                    layout.unpack(&out[s])
                }
                None => Vec::new(),
            };
            result.push(SparseVoxelTokens {
                part_id: part.part_id,
                colors: features.iter().map(|f| decode_color(*f)).collect(),
                features,
                layout,
            });
        }
        Ok(RefineOutput {
            parts: result,
            latents,
        })
    }

    /// Training stream for one sample: ground-truth part grids and synthetic
    /// per-voxel colors, with masked payload entries excluded from the loss.
    pub fn example(&self, sample: &ObjectSample, cond: &Mat<f32>) -> Result<TrainExample<f32>> {
        let width = self.geometry.refine_payload();
        let r = self.dit.config().lattice;
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        let mut keys = Vec::new();
        let mut lengths = Vec::new();
        for part in sample.parts.iter().take(self.dit.config().kmax) {
            let grid = voxelize(&part.solid, &part.aabb, self.geometry.grid)?;
            let layout = SparseLayout::new(&grid, &self.geometry);
            if layout.tokens() == 0 {
                continue;
            }
            let feats: Vec<[f32; 3]> = voxel_colors(part, &grid).into_iter().map(encode_color).collect();
            let (x, w) = layout.pack(&feats, width);
            keys.extend(layout.keys(&part.aabb, &self.geometry, r)?);
            lengths.push((lengths.len() + 1, x.rows));
            xs.push(x);
            ws.push(w);
        }
        if xs.is_empty() {
            return Err(Error::AllPartsEmpty);
        }
        Ok(TrainExample {
            x0: Mat::vstack(&xs.iter().collect::<Vec<_>>()),
            layout: StreamLayout::from_lengths(&lengths).with_keys(keys),
            cond: cond.clone(),
            weights: Some(Mat::vstack(&ws.iter().collect::<Vec<_>>())),
        })
    }
}

/// Surface mesh of one part, placed in its box, with per-vertex colors taken
/// as the mean color of the occupied cells sharing the vertex.
pub fn part_mesh(occ: &PartOccupancy, colors: Option<&[[f32; 3]]>) -> TriMesh {
    let mut mesh = grid_to_cubes(&occ.grid, &occ.aabb);
    let Some(colors) = colors else {
        return mesh;
    };
    let n = occ.grid.n();
    let e = occ.aabb.extent();
    let mut cell_color = std::collections::HashMap::new();
    for (idx, c) in occ.grid.occupied().zip(colors) {
        cell_color.insert(occ.grid.coords(idx), *c);
    }
    let vcolors = mesh
        .positions
        .iter()
        .map(|p| {
            let l: [i64; 3] = std::array::from_fn(|a| {
                ((p[a] - occ.aabb.min[a]) / e[a] * n as f64).round() as i64
            });
            let mut sum = [0.0f32; 3];
            let mut cnt = 0.0f32;
            for corner in 0..8 {
                let c: [i64; 3] = std::array::from_fn(|a| l[a] - 1 + ((corner >> a) & 1) as i64);
                if c.iter().any(|&v| v < 0 || v >= n as i64) {
                    continue;
                }
                if let Some(col) = cell_color.get(&[c[0] as usize, c[1] as usize, c[2] as usize]) {
                    for k in 0..3 {
                        sum[k] += col[k];
                    }
                    cnt += 1.0;
                }
            }
            let cnt = cnt.max(1.0);
            sum.map(|s| ((s / cnt).clamp(0.0, 1.0) * 255.0).round() as u8)
        })
        .collect();
    mesh.colors = Some(vcolors);
    mesh
}

/// The assembled object: one mesh per non-empty part, each in its own box.
#[derive(Debug, Clone)]
pub struct AssembledScene {
    pub part_ids: Vec<usize>,
    pub meshes: Vec<TriMesh>,
}

/// Union assembly without boolean merging; part identity is preserved.
pub fn assemble(parts: &[PartOccupancy], colors: &[Option<Vec<[f32; 3]>>]) -> Result<AssembledScene> {
    let mut part_ids = Vec::new();
    let mut meshes = Vec::new();
    for (i, occ) in parts.iter().enumerate() {
        if occ.grid.is_empty() {
            continue;
        }
        part_ids.push(occ.part_id);
        meshes.push(part_mesh(occ, colors.get(i).and_then(|c| c.as_deref())));
    }
    if meshes.is_empty() {
        return Err(Error::AllPartsEmpty);
    }
    Ok(AssembledScene { part_ids, meshes })
}

/// Edge length of a voxel of `occ` along each axis.
pub fn voxel_edge(occ: &PartOccupancy) -> Vec3 {
    occ.aabb.extent() * (1.0 / occ.grid.n() as f64)
}
