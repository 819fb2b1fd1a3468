//! Stage 1: part boxes as token blocks.
//!
//! A [`BoxCodec`] maps a box to an `M x D` block of latent tokens and back to
//! eight vertices. [`assemble_layout`] stacks the blocks into the padded
//! sequence `[T_0, T_1, ..., T_K']` with the whole-object box in slot 0, and
//! [`decode_and_filter`] turns a sampled sequence back into clean boxes.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dit::{
    sample, AdamW, AdamWConfig, BoundDit, Checkpoint, Dit, ParamStore, SampleOptions, StreamLayout, TrainExample,
};
use crate::error::{Error, Result};
use crate::geometry::{nms_indices, Aabb, Hexahedron, Vec3};
use crate::rng::{derive_seed, det_rng, gaussian_mat};
use crate::tensor::{matmul, Mat};

/// Default validity threshold for IoU(decoded hexahedron, its own AABB).
pub const VALIDITY_IOU: f64 = 0.85;
/// Lattice resolution used to measure the validity IoU.
pub const VALIDITY_RES: usize = 64;
/// Default layout capacity K'.
pub const LAYOUT_CAPACITY: usize = 30;
/// Boxes with a smaller decoded volume are treated as empty slots.
pub const MIN_BOX_VOLUME: f64 = 1e-6;

/// One slot's token block.
#[derive(Debug, Clone, PartialEq)]
pub struct PartTokenSet {
    /// 0 is the global branch.
    pub part_id: usize,
    pub tokens: Mat<f32>,
}

/// Shape of a box codec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Tokens per box (M).
    pub tokens: usize,
    /// Token width (D).
    pub width: usize,
    /// Number of sinusoidal octaves applied to each box parameter.
    pub octaves: usize,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            tokens: 8,
            width: 16,
            octaves: 3,
        }
    }
}

impl CodecConfig {
    pub fn feature_width(&self) -> usize {
        6 * (1 + 2 * self.octaves)
    }
}

/// Small trainable stand-in for a shape VAE restricted to boxes.
///
/// Encoder: fixed sinusoidal features of `(min, max)` followed by one affine
/// map to `M x D`. Decoder: mean over the `M` rows, then a bias-free linear
/// map to 24 vertex coordinates, so an all-zero block decodes to a single
/// point (a degenerate box). Tokens are multiplied by `latent_scale` on the
/// way out of the encoder so diffusion sees roughly unit-variance data.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCodec {
    pub config: CodecConfig,
    pub enc_w: Mat<f64>,
    pub enc_b: Mat<f64>,
    pub dec_w: Mat<f64>,
    pub latent_scale: f64,
}

/// Sinusoidal featurization of the six box parameters.
pub fn box_features(b: &Aabb, octaves: usize) -> Vec<f64> {
    let p = [b.min.x, b.min.y, b.min.z, b.max.x, b.max.y, b.max.z];
    let mut f = Vec::with_capacity(6 * (1 + 2 * octaves));
    f.extend_from_slice(&p);
    for o in 0..octaves {
        let w = std::f64::consts::PI * (1u64 << o) as f64;
        for v in p {
            f.push((w * v).sin());
            f.push((w * v).cos());
        }
    }
    f
}

/// Random part-like box inside `[-1, 1]^3` used for codec training.
pub fn random_box(rng: &mut impl Rng) -> Aabb {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        let e = rng.random_range(0.04..1.6f64);
        let c = rng.random_range(-1.0 + e / 2.0..=1.0 - e / 2.0);
        lo[a] = c - e / 2.0;
        hi[a] = c + e / 2.0;
    }
    Aabb::from_arrays(lo, hi).expect("ordered bounds")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecTraining {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for CodecTraining {
    fn default() -> Self {
        CodecTraining {
            steps: 3000,
            batch: 64,
            lr: 1e-2,
            seed: 0,
        }
    }
}

impl BoxCodec {
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        if config.tokens == 0 || config.width == 0 {
            return Err(Error::InvalidArgument("codec shape must be positive".into()));
        }
        let mut rng = det_rng(seed);
        let nf = config.feature_width();
        let md = config.tokens * config.width;
        let s_enc = 1.0 / (nf as f64).sqrt();
        let s_dec = 1.0 / (config.width as f64).sqrt();
        Ok(BoxCodec {
            config,
            enc_w: Mat::from_fn(nf, md, |_, _| s_enc * crate::rng::gaussian(&mut rng)),
            enc_b: Mat::from_fn(1, md, |_, _| 0.1 * crate::rng::gaussian(&mut rng)),
            dec_w: Mat::from_fn(config.width, 24, |_, _| s_dec * crate::rng::gaussian(&mut rng)),
            latent_scale: 1.0,
        })
    }

    fn raw_encode(&self, feats: &Mat<f64>) -> Mat<f64> {
        let mut y = matmul(feats.view(), self.enc_w.view());
        for r in 0..y.rows {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.enc_b.data) {
                *v += *b;
            }
        }
        y
    }

    /// Mean of the `M` token rows of each flattened block.
    fn pool(&self, flat: &Mat<f64>) -> Mat<f64> {
        let (m, d) = (self.config.tokens, self.config.width);
        Mat::from_fn(flat.rows, d, |r, c| {
            (0..m).map(|i| flat.at(r, i * d + c)).sum::<f64>() / m as f64
        })
    }

    /// `M x D` latent block of a valid box (no ID term).
    pub fn encode_box(&self, b: &Aabb) -> Result<Mat<f32>> {
        b.ensure_valid()?;
        let f = Mat::from_vec(1, self.config.feature_width(), box_features(b, self.config.octaves));
        let flat = self.raw_encode(&f);
        Ok(Mat::from_fn(self.config.tokens, self.config.width, |r, c| {
            (flat.at(0, r * self.config.width + c) * self.latent_scale) as f32
        }))
    }

    /// Eight decoded vertices in binary corner order.
    pub fn decode(&self, tokens: &Mat<f32>) -> Result<[Vec3; 8]> {
        if tokens.shape() != (self.config.tokens, self.config.width) {
            return Err(Error::Shape(format!(
                "token block {:?} does not match codec {:?}",
                tokens.shape(),
                (self.config.tokens, self.config.width)
            )));
        }
        let flat = Mat::from_fn(1, tokens.len(), |_, j| tokens.data[j] as f64 / self.latent_scale);
        let y = matmul(self.pool(&flat).view(), self.dec_w.view());
        let mut v = [Vec3::ZERO; 8];
        for (i, out) in v.iter_mut().enumerate() {
            let c = &y.data[3 * i..3 * i + 3];
            *out = Vec3::try_new(c[0], c[1], c[2])?;
        }
        Ok(v)
    }

    /// Largest corner error of decode(encode(b)).
    pub fn roundtrip_error(&self, b: &Aabb) -> Result<f64> {
        let v = self.decode(&self.encode_box(b)?)?;
        Ok(v.iter()
            .zip(b.corners())
            .flat_map(|(p, q)| (0..3).map(move |a| (p[a] - q[a]).abs()))
            .fold(0.0, f64::max))
    }

    /// Fits encoder and decoder by corner reconstruction on random boxes,
    /// then calibrates `latent_scale`. Returns the final batch loss.
    pub fn train(&mut self, opts: CodecTraining) -> Result<f64> {
        let mut params = ParamStore::<f64>::default();
        params.add("enc.w", self.enc_w.clone());
        params.add("enc.b", self.enc_b.clone());
        params.add("dec.w", self.dec_w.clone());
        let mut opt = AdamW::new(
            AdamWConfig {
                lr: opts.lr,
                clip_norm: None,
                ..AdamWConfig::default()
            },
            &params,
        );
        self.latent_scale = 1.0;
        let mut rng = det_rng(opts.seed);
        let (m, d) = (self.config.tokens, self.config.width);
        let nf = self.config.feature_width();
        let mut loss = f64::NAN;
        for step in 0..opts.steps {
            let boxes: Vec<Aabb> = (0..opts.batch).map(|_| random_box(&mut rng)).collect();
            let feats = Mat::from_vec(
                opts.batch,
                nf,
                boxes.iter().flat_map(|b| box_features(b, self.config.octaves)).collect(),
            );
            let target = Mat::from_fn(opts.batch, 24, |r, j| boxes[r].corner(j / 3)[j % 3]);
            let [ew, eb, dw] = [0, 1, 2].map(|i| params.tensors()[i].clone());
            self.enc_w = ew;
            self.enc_b = eb;
            self.dec_w = dw;
            let flat = self.raw_encode(&feats);
            let pooled = self.pool(&flat);
            let y = matmul(pooled.view(), self.dec_w.view());
            let n = (opts.batch * 24) as f64;
            let dy = Mat::from_fn(y.rows, 24, |r, c| 2.0 * (y.at(r, c) - target.at(r, c)) / n);
            loss = y.sub(&target).data.iter().map(|v| v * v).sum::<f64>() / n;

            let mut grads = params.zeros_like();
            grads.tensors_mut()[2] = matmul(pooled.view().t(), dy.view());
            let dpool = matmul(dy.view(), self.dec_w.view().t());
            let dflat = Mat::from_fn(flat.rows, m * d, |r, j| dpool.at(r, j % d) / m as f64);
            grads.tensors_mut()[0] = matmul(feats.view().t(), dflat.view());
            grads.tensors_mut()[1] = Mat::from_vec(1, m * d, dflat.col_sums());
            // Cosine decay to a small floor keeps the final fit tight.
            let frac = step as f64 / opts.steps.max(1) as f64;
            let lr = opts.lr * (0.02 + 0.98 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()));
            opt.step_with_lr(&mut params, &grads, lr);
        }
        let [ew, eb, dw] = [0, 1, 2].map(|i| params.tensors()[i].clone());
        self.enc_w = ew;
        self.enc_b = eb;
        self.dec_w = dw;

        // Calibrate so encoded tokens have unit RMS over random boxes.
        let mut sq = 0.0;
        let mut count = 0usize;
        for _ in 0..256 {
            let b = random_box(&mut rng);
            let f = Mat::from_vec(1, nf, box_features(&b, self.config.octaves));
            for v in self.raw_encode(&f).data {
                sq += v * v;
                count += 1;
            }
        }
        self.latent_scale = 1.0 / (sq / count as f64).sqrt().max(1e-12);
        Ok(loss)
    }

    pub fn put_into(&self, ck: &mut Checkpoint) -> Result<()> {
        ck.meta.insert("codec".into(), serde_json::to_value(self.config)?);
        ck.meta
            .insert("codec.latent_scale".into(), serde_json::Value::from(self.latent_scale));
        for (name, m) in [("enc.w", &self.enc_w), ("enc.b", &self.enc_b), ("dec.w", &self.dec_w)] {
            ck.tensors.push((format!("codec.{name}"), m.cast()));
        }
        Ok(())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg = ck
            .meta
            .get("codec")
            .ok_or_else(|| Error::format("checkpoint", "no box codec"))?;
        let config: CodecConfig = serde_json::from_value(cfg.clone())?;
        let latent_scale = ck
            .meta
            .get("codec.latent_scale")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::format("checkpoint", "no codec latent scale"))?;
        let get = |n: &str| {
            ck.tensor(&format!("codec.{n}"))
                .map(|m| m.cast::<f64>())
                .ok_or_else(|| Error::format("checkpoint", format!("missing codec.{n}")))
        };
        let codec = BoxCodec {
            config,
            enc_w: get("enc.w")?,
            enc_b: get("enc.b")?,
            dec_w: get("dec.w")?,
            latent_scale,
        };
        let nf = config.feature_width();
        if codec.enc_w.shape() != (nf, config.tokens * config.width)
            || codec.enc_b.shape() != (1, config.tokens * config.width)
            || codec.dec_w.shape() != (config.width, 24)
        {
            return Err(Error::format("checkpoint", "codec tensor shapes do not match its config"));
        }
        Ok(codec)
    }
}

/// Adds `id_table[part_id]` to every row. The diffusion model performs the
/// same addition in its hidden space; this is the payload-space form.
pub fn add_box_id(set: &PartTokenSet, id_table: &Mat<f32>) -> Result<PartTokenSet> {
    if set.part_id >= id_table.rows {
        return Err(Error::OutOfRange(format!(
            "part id {} exceeds capacity {}",
            set.part_id,
            id_table.rows.saturating_sub(1)
        )));
    }
    if id_table.cols != set.tokens.cols {
        return Err(Error::Shape("ID table width differs from token width".into()));
    }
    let e = id_table.row(set.part_id);
    let mut tokens = set.tokens.clone();
    for r in 0..tokens.rows {
        for (v, a) in tokens.row_mut(r).iter_mut().zip(e) {
            *v += *a;
        }
    }
    Ok(PartTokenSet {
        part_id: set.part_id,
        tokens,
    })
}

/// Padded stage-1 sequence. `slots[0]` is the global branch, slots
/// `1..=capacity` hold kept boxes in input order followed by zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSequence {
    pub slots: Vec<PartTokenSet>,
    /// `mask[i]` is true for slot 0 and for slots holding a real box.
    pub mask: Vec<bool>,
    /// Input index of the box in each real part slot.
    pub kept: Vec<usize>,
}

impl LayoutSequence {
    pub fn capacity(&self) -> usize {
        self.slots.len() - 1
    }

    /// Rows of all blocks stacked in slot order.
    pub fn stacked(&self) -> Mat<f32> {
        Mat::vstack(&self.slots.iter().map(|s| &s.tokens).collect::<Vec<_>>())
    }

    /// Splits a stacked matrix back into blocks of `m` rows; every slot is
    /// treated as a candidate.
    pub fn from_stacked(x: &Mat<f32>, m: usize) -> Result<Self> {
        if m == 0 || x.rows % m != 0 || x.rows < m {
            return Err(Error::Shape(format!("{} rows do not split into blocks of {m}", x.rows)));
        }
        let k = x.rows / m;
        Ok(LayoutSequence {
            slots: (0..k)
                .map(|i| PartTokenSet {
                    part_id: i,
                    tokens: x.rows_slice(i * m, (i + 1) * m),
                })
                .collect(),
            mask: vec![true; k],
            kept: (0..k - 1).collect(),
        })
    }
}

/// Indices of the `capacity` largest boxes by volume (ties by index),
/// returned in input order.
pub fn largest_indices(boxes: &[Aabb], capacity: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .volume()
            .total_cmp(&boxes[a].volume())
            .then(a.cmp(&b))
    });
    order.truncate(capacity);
    order.sort_unstable();
    order
}

/// Builds `[T_0, T_1, ..., T_K']`: slot 0 encodes the enclosing box of all
/// inputs, then the kept boxes, then all-zero padding blocks.
pub fn assemble_layout(codec: &BoxCodec, boxes: &[Aabb], capacity: usize) -> Result<LayoutSequence> {
    if boxes.is_empty() {
        return Err(Error::Empty("layout boxes"));
    }
    for b in boxes {
        b.ensure_valid()?;
    }
    let kept = largest_indices(boxes, capacity);
    let (m, d) = (codec.config.tokens, codec.config.width);
    let global = Aabb::enclosing(boxes)?;
    let mut slots = vec![PartTokenSet {
        part_id: 0,
        tokens: codec.encode_box(&global)?,
    }];
    let mut mask = vec![true];
    for slot in 1..=capacity {
        let tokens = match kept.get(slot - 1) {
            Some(&i) => codec.encode_box(&boxes[i])?,
            None => Mat::zeros(m, d),
        };
        mask.push(slot <= kept.len());
        slots.push(PartTokenSet {
            part_id: slot,
            tokens,
        });
    }
    Ok(LayoutSequence { slots, mask, kept })
}

/// One decoded part slot and the reason it was kept or dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSlot {
    pub part_id: usize,
    pub vertices: [Vec3; 8],
    pub aabb: Aabb,
    pub validity: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub validity_iou: f64,
    pub nms_iou: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            validity_iou: VALIDITY_IOU,
            nms_iou: crate::geometry::NMS_IOU,
        }
    }
}

/// Validity of one decoded vertex set: `None` when the hexahedron is
/// degenerate, otherwise IoU(hexahedron, own AABB) on a 64^3 lattice.
pub fn slot_validity(vertices: &[Vec3; 8]) -> Option<f64> {
    let hex = Hexahedron::new(*vertices);
    let bb = hex.aabb();
    if !(bb.volume() > MIN_BOX_VOLUME) {
        return None;
    }
    Some(hex.aabb_iou(VALIDITY_RES))
}

/// Decodes every masked part slot (slot 0 is skipped), drops degenerate or
/// non-box-like shapes and suppresses duplicates. Returned AABBs are clamped
/// to `[-1, 1]^3` and listed in slot order together with the per-slot report.
pub fn decode_and_filter(
    codec: &BoxCodec,
    seq: &LayoutSequence,
    opts: FilterOptions,
) -> Result<(Vec<Aabb>, Vec<DecodedSlot>)> {
    let mut report = Vec::new();
    let mut candidates = Vec::new();
    for (slot, real) in seq.slots.iter().zip(&seq.mask).skip(1) {
        if !real {
            continue;
        }
        let vertices = codec.decode(&slot.tokens)?;
        let hex = Hexahedron::new(vertices);
        let aabb = hex.aabb().clamp_to(&Aabb::UNIT);
        let validity = slot_validity(&vertices).unwrap_or(0.0);
        let ok = aabb.is_valid() && aabb.volume() > MIN_BOX_VOLUME && validity >= opts.validity_iou;
        if ok {
            candidates.push((report.len(), aabb));
        }
        report.push(DecodedSlot {
            part_id: slot.part_id,
            vertices,
            aabb,
            validity,
            kept: ok,
        });
    }
    let boxes: Vec<Aabb> = candidates.iter().map(|c| c.1).collect();
    let survivors = nms_indices(&boxes, opts.nms_iou);
    for (ci, c) in candidates.iter().enumerate() {
        if !survivors.contains(&ci) {
            report[c.0].kept = false;
        }
    }
    Ok((survivors.iter().map(|&i| boxes[i]).collect(), report))
}

/// Stage-1 model: a box codec plus a transformer over the padded sequence.
#[derive(Debug, Clone)]
pub struct LayoutModel {
    pub codec: BoxCodec,
    pub dit: Dit<f32>,
}

impl LayoutModel {
    pub fn new(codec: BoxCodec, dit: Dit<f32>) -> Result<Self> {
        let c = dit.config();
        if c.payload != codec.config.width || c.positional {
            return Err(Error::InvalidArgument(
                "layout model payload must equal the codec width and carry no position keys".into(),
            ));
        }
        Ok(LayoutModel { codec, dit })
    }

    /// Part slots per sequence (K').
    pub fn capacity(&self) -> usize {
        self.dit.config().kmax
    }

    fn stream(&self) -> StreamLayout {
        StreamLayout::uniform(self.codec.config.tokens, &vec![true; self.capacity() + 1])
    }

    /// Training pair for one object. Padding slots are supervised toward the
    /// zero block, which decodes to a degenerate shape and is filtered out.
    pub fn example(&self, boxes: &[Aabb], cond: &Mat<f32>) -> Result<TrainExample<f32>> {
        let seq = assemble_layout(&self.codec, boxes, self.capacity())?;
        Ok(TrainExample {
            x0: seq.stacked(),
            layout: self.stream(),
            cond: cond.clone(),
            weights: None,
        })
    }

    /// Samples a layout and returns the surviving boxes with the per-slot report.
    pub fn generate(
        &self,
        cond: Option<&Mat<f32>>,
        seed: u64,
        opts: SampleOptions,
        filter: FilterOptions,
    ) -> Result<(Vec<Aabb>, Vec<DecodedSlot>)> {
        let layout = self.stream();
        let noise = gaussian_mat(derive_seed(seed, "layout", 0), layout.rows(), self.codec.config.width);
        let field = BoundDit {
            dit: &self.dit,
            layout: &layout,
        };
        let x = sample(&field, cond, noise, opts, &[], None)?;
        let seq = LayoutSequence::from_stacked(&x, self.codec.config.tokens)?;
        let (boxes, report) = decode_and_filter(&self.codec, &seq, filter)?;
        if boxes.is_empty() {
            return Err(Error::EmptyLayout);
        }
        Ok((boxes, report))
    }

    pub fn put_into(&self, ck: &mut Checkpoint) -> Result<()> {
        self.codec.put_into(ck)?;
        ck.put_dit("layout", &self.dit)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        LayoutModel::new(BoxCodec::from_checkpoint(ck)?, ck.dit("layout")?)
    }
}

/// Entry of the layout exchange format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutBox {
    pub part_id: usize,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl LayoutBox {
    pub fn aabb(&self) -> Result<Aabb> {
        let b = Aabb::from_arrays(self.min, self.max)?;
        b.ensure_valid()?;
        Ok(b)
    }
}

/// Layout boxes numbered from part id 1.
pub fn layout_boxes(boxes: &[Aabb]) -> Vec<LayoutBox> {
    boxes
        .iter()
        .enumerate()
        .map(|(i, b)| LayoutBox {
            part_id: i + 1,
            min: b.min.to_array(),
            max: b.max.to_array(),
        })
        .collect()
}

pub fn write_layout_json(path: &Path, boxes: &[LayoutBox]) -> Result<()> {
    crate::files::write_atomic(path, &serde_json::to_vec_pretty(boxes)?)
}

pub fn read_layout_json(path: &Path) -> Result<Vec<LayoutBox>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let boxes: Vec<LayoutBox> = serde_json::from_slice(&bytes)?;
    for b in &boxes {
        b.aabb()?;
    }
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(lo: [f64; 3], hi: [f64; 3]) -> Aabb {
        Aabb::from_arrays(lo, hi).unwrap()
    }

    #[test]
    fn encoding_is_deterministic_and_injective() {
        let c = BoxCodec::new(CodecConfig::default(), 1).unwrap();
        let a = b([-0.5; 3], [0.5; 3]);
        assert_eq!(c.encode_box(&a).unwrap(), c.encode_box(&a).unwrap());
        let wider = b([-0.5; 3], [0.7, 0.5, 0.5]);
        assert_ne!(c.encode_box(&a).unwrap(), c.encode_box(&wider).unwrap());
        assert!(c.encode_box(&b([0.0; 3], [0.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn zero_block_decodes_degenerate() {
        let c = BoxCodec::new(CodecConfig::default(), 1).unwrap();
        let v = c.decode(&Mat::zeros(8, 16)).unwrap();
        assert!(v.iter().all(|p| *p == Vec3::ZERO));
        assert_eq!(slot_validity(&v), None);
    }

    #[test]
    fn codec_training_reaches_corner_tolerance() {
        let mut c = BoxCodec::new(CodecConfig::default(), 2).unwrap();
        c.train(CodecTraining::default()).unwrap();
        let mut rng = det_rng(77);
        let worst = (0..200)
            .map(|_| c.roundtrip_error(&random_box(&mut rng)).unwrap())
            .fold(0.0, f64::max);
        assert!(worst <= 0.01, "worst corner error {worst}");
    }
}
