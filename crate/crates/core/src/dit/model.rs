use rand::Rng;

use super::config::{BlockKind, DitConfig};
use super::ops::{self, LayerNormCache};
use super::params::{ParamId, ParamStore};
use super::stream::{CondInput, Slot, StreamLayout};
use crate::encoding::{sinusoidal_axis_table, EmbeddingTableRef};
use crate::error::{Error, Result};
use crate::rng::{det_rng, gaussian};
use crate::tensor::{Mat, Scalar};

#[derive(Debug, Clone, Copy)]
struct LinearIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct NormIds {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct BlockIds {
    kind: BlockKind,
    ln1: NormIds,
    q: LinearIds,
    k: LinearIds,
    v: LinearIds,
    o: LinearIds,
    ln2: NormIds,
    cq: LinearIds,
    ck: LinearIds,
    cv: LinearIds,
    co: LinearIds,
    ln3: NormIds,
    fc1: LinearIds,
    fc2: LinearIds,
}

#[derive(Debug, Clone)]
struct DitIds {
    in_proj: LinearIds,
    time1: LinearIds,
    time2: LinearIds,
    id_table: ParamId,
    empty: ParamId,
    pos: Option<[ParamId; 3]>,
    /// Row offset within a slot; only for models without position keys,
    /// whose tokens would otherwise be interchangeable inside a slot.
    token: Option<ParamId>,
    cond_proj: LinearIds,
    cond_pos: ParamId,
    null_cond: ParamId,
    blocks: Vec<BlockIds>,
    ln_f: NormIds,
    out_proj: LinearIds,
}

struct Builder<'a, T: Scalar, R: Rng> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut R,
}

impl<T: Scalar, R: Rng> Builder<'_, T, R> {
    fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> ParamId {
        let data = (0..rows * cols)
            .map(|_| T::from_f64(gaussian(self.rng) * std))
            .collect();
        self.store.add(name, Mat::from_vec(rows, cols, data))
    }

    fn constant(&mut self, name: &str, rows: usize, cols: usize, v: f64) -> ParamId {
        let mut m = Mat::zeros(rows, cols);
        m.fill(T::from_f64(v));
        self.store.add(name, m)
    }

    fn linear(&mut self, name: &str, inp: usize, out: usize, gain: f64) -> LinearIds {
        let std = gain * (2.0 / (inp + out) as f64).sqrt();
        LinearIds {
            w: self.normal(&format!("{name}.w"), inp, out, std),
            b: self.constant(&format!("{name}.b"), 1, out, 0.0),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> NormIds {
        NormIds {
            g: self.constant(&format!("{name}.g"), 1, d, 1.0),
            b: self.constant(&format!("{name}.b"), 1, d, 0.0),
        }
    }
}

/// Diffusion transformer with hybrid intra/inter-part attention, condition
/// cross-attention and an additive timestep embedding.
#[derive(Debug, Clone)]
pub struct Dit<T> {
    config: DitConfig,
    ids: DitIds,
    pub params: ParamStore<T>,
}

struct BlockCache<T> {
    ln1: LayerNormCache<T>,
    a: Mat<T>,
    q: Mat<T>,
    k: Mat<T>,
    v: Mat<T>,
    att: Mat<T>,
    probs: Vec<Mat<T>>,
    ln2: LayerNormCache<T>,
    c: Mat<T>,
    cq: Mat<T>,
    ck: Mat<T>,
    cv: Mat<T>,
    catt: Mat<T>,
    cprobs: Vec<Mat<T>>,
    ln3: LayerNormCache<T>,
    m: Mat<T>,
    f1: Mat<T>,
    g: Mat<T>,
}

/// Activations retained by [`Dit::forward_cached`] for [`Dit::backward`].
pub struct ForwardCache<T> {
    x: Mat<T>,
    layout: StreamLayout,
    tf: Mat<T>,
    ta: Mat<T>,
    ts: Mat<T>,
    cond_payload: Option<Mat<T>>,
    cemb: Mat<T>,
    blocks: Vec<BlockCache<T>>,
    lnf: LayerNormCache<T>,
    z: Mat<T>,
}

/// `((query_start, query_len), (key_start, key_len))` pairs of one attention layer.
type Groups = Vec<((usize, usize), (usize, usize))>;

fn row_groups(kind: BlockKind, slots: &[Slot], rows: usize) -> Groups {
    match kind {
        BlockKind::Intra => slots.iter().map(|s| ((s.start, s.len), (s.start, s.len))).collect(),
        BlockKind::Inter => vec![((0, rows), (0, rows))],
    }
}

/// Multi-head attention over already projected rows. Probabilities are
/// returned group-major, head-minor.
fn attend<T: Scalar>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    heads: usize,
    groups: &[((usize, usize), (usize, usize))],
) -> (Mat<T>, Vec<Mat<T>>) {
    let dh = q.cols / heads;
    let scale = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut out = Mat::zeros(q.rows, v.cols);
    let mut probs = Vec::with_capacity(groups.len() * heads);
    for &((q0, ql), (k0, kl)) in groups {
        for hd in 0..heads {
            let c0 = hd * dh;
            probs.push(ops::attention(
                q.view().sub(q0, ql, c0, dh),
                k.view().sub(k0, kl, c0, dh),
                v.view().sub(k0, kl, c0, dh),
                scale,
                out.view_mut().sub(q0, ql, c0, dh),
            ));
        }
    }
    (out, probs)
}

/// Multi-head self-attention of projected `q`, `k`, `v`. Intra blocks let
/// each row attend only to the rows of its own slot; inter blocks attend
/// over the whole stream.
pub fn self_attention<T: Scalar>(
    q: &Mat<T>,
    k: &Mat<T>,
    v: &Mat<T>,
    heads: usize,
    kind: BlockKind,
    slots: &[Slot],
) -> Mat<T> {
    attend(q, k, v, heads, &row_groups(kind, slots, q.rows)).0
}

/// Multi-head attention of every query row to every condition row.
pub fn cross_attention<T: Scalar>(q: &Mat<T>, k: &Mat<T>, v: &Mat<T>, heads: usize) -> Mat<T> {
    attend(q, k, v, heads, &[((0, q.rows), (0, k.rows))]).0
}

impl<T: Scalar> Dit<T> {
    /// Deterministically initialized model; the output projection starts at
    /// zero so the initial velocity field is identically zero.
    pub fn new(config: DitConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let mut rng = det_rng(seed);
        let d = config.width;
        let c = &config;
        let mut b = Builder {
            store: &mut store,
            rng: &mut rng,
        };
        let in_proj = b.linear("in_proj", c.payload, d, 1.0);
        let time1 = b.linear("time.fc1", c.time_features, d, 1.0);
        let time2 = b.linear("time.fc2", d, d, 1.0);
        let id_table = b.store.add(
            "embed.id",
            sinusoidal_axis_table(c.kmax as u32 + 1, d, 0, 1.0),
        );
        let empty = b.normal("embed.empty", 1, d, 0.5);
        let pos = c.positional.then(|| {
            std::array::from_fn(|a| {
                b.store.add(
                    format!("embed.pos{}", ["x", "y", "z"][a]),
                    sinusoidal_axis_table(c.lattice, d, a, 1.0 / 9.0),
                )
            })
        });
        let token = (!c.positional).then(|| {
            b.store.add(
                "embed.token",
                sinusoidal_axis_table(c.tokens_per_slot as u32, d, 1, 1.0),
            )
        });
        let cond_proj = b.linear("cond.proj", c.cond_width, d, 1.0);
        let cond_pos = b.normal("cond.pos", c.cond_tokens, d, 0.1);
        let null_cond = b.normal("cond.null", c.cond_tokens, d, 0.1);
        let blocks = c
            .blocks
            .iter()
            .enumerate()
            .map(|(i, &kind)| {
                let p = format!("blocks.{i}");
                let out_gain = 1.0 / (2.0 * c.depth as f64).sqrt();
                BlockIds {
                    kind,
                    ln1: b.norm(&format!("{p}.ln1"), d),
                    q: b.linear(&format!("{p}.attn.q"), d, d, 1.0),
                    k: b.linear(&format!("{p}.attn.k"), d, d, 1.0),
                    v: b.linear(&format!("{p}.attn.v"), d, d, 1.0),
                    o: b.linear(&format!("{p}.attn.o"), d, d, out_gain),
                    ln2: b.norm(&format!("{p}.ln2"), d),
                    cq: b.linear(&format!("{p}.cross.q"), d, d, 1.0),
                    ck: b.linear(&format!("{p}.cross.k"), d, d, 1.0),
                    cv: b.linear(&format!("{p}.cross.v"), d, d, 1.0),
                    co: b.linear(&format!("{p}.cross.o"), d, d, out_gain),
                    ln3: b.norm(&format!("{p}.ln3"), d),
                    fc1: b.linear(&format!("{p}.mlp.fc1"), d, d * c.mlp_ratio, 1.0),
                    fc2: b.linear(&format!("{p}.mlp.fc2"), d * c.mlp_ratio, d, out_gain),
                }
            })
            .collect();
        let ln_f = b.norm("final.ln", d);
        let out_proj = LinearIds {
            w: b.constant("final.proj.w", d, c.payload, 0.0),
            b: b.constant("final.proj.b", 1, c.payload, 0.0),
        };
        let ids = DitIds {
            in_proj,
            time1,
            time2,
            id_table,
            empty,
            pos,
            token,
            cond_proj,
            cond_pos,
            null_cond,
            blocks,
            ln_f,
            out_proj,
        };
        Ok(Dit {
            config,
            ids,
            params: store,
        })
    }

    /// Rebuilds a model from stored tensors; names and shapes must match the config.
    pub fn from_params(config: DitConfig, params: ParamStore<T>) -> Result<Self> {
        let mut dit = Dit::new(config, 0)?;
        if dit.params.names() != params.names() {
            return Err(Error::Shape("parameter names do not match the config".into()));
        }
        for (a, b) in dit.params.tensors().iter().zip(params.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!(
                    "parameter shape {:?} does not match expected {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        dit.params = params;
        Ok(dit)
    }

    pub fn config(&self) -> &DitConfig {
        &self.config
    }

    pub fn cast<U: Scalar>(&self) -> Dit<U> {
        Dit {
            config: self.config.clone(),
            ids: self.ids.clone(),
            params: self.params.cast(),
        }
    }

    fn p(&self, id: ParamId) -> &Mat<T> {
        self.params.get(id)
    }

    fn lin(&self, x: &Mat<T>, l: LinearIds) -> Mat<T> {
        ops::linear(x, self.p(l.w), self.p(l.b))
    }

    fn norm(&self, x: &Mat<T>, n: NormIds) -> (Mat<T>, LayerNormCache<T>) {
        ops::layer_norm(x, self.p(n.g), self.p(n.b))
    }

    /// Borrowed center-corner tables (positional models only).
    pub fn embedding_table(&self) -> Option<EmbeddingTableRef<'_, T>> {
        self.ids.pos.map(|[x, y, z]| EmbeddingTableRef {
            pos: [self.p(x), self.p(y), self.p(z)],
            id: self.p(self.ids.id_table),
        })
    }

    /// The ID embedding row for `part_id`.
    pub fn id_embedding(&self, part_id: usize) -> &[T] {
        self.p(self.ids.id_table).row(part_id)
    }

    fn check_inputs(&self, x: &Mat<T>, layout: &StreamLayout, cond: &CondInput<'_, T>) -> Result<()> {
        let c = &self.config;
        if x.cols != c.payload {
            return Err(Error::Shape(format!(
                "payload width {} does not match model width {}",
                x.cols, c.payload
            )));
        }
        layout.validate(x.rows, c.kmax)?;
        if c.positional && layout.keys.is_none() {
            return Err(Error::Shape("positional model requires per-row keys".into()));
        }
        if !c.positional {
            if let Some(s) = layout.slots.iter().find(|s| s.len > c.tokens_per_slot) {
                return Err(Error::Shape(format!(
                    "slot of {} rows exceeds the {} token embeddings",
                    s.len, c.tokens_per_slot
                )));
            }
        }
        if let CondInput::Tokens(p) = cond {
            if p.shape() != (c.cond_tokens, c.cond_width) {
                return Err(Error::Shape(format!(
                    "condition shape {:?} does not match {:?}",
                    p.shape(),
                    (c.cond_tokens, c.cond_width)
                )));
            }
        }
        Ok(())
    }

    /// Velocity prediction `v(x, t | cond)`; output shape equals input shape.
    pub fn forward(
        &self,
        x: &Mat<T>,
        layout: &StreamLayout,
        t: T,
        cond: CondInput<'_, T>,
    ) -> Result<Mat<T>> {
        self.forward_cached(x, layout, t, cond).map(|(y, _)| y)
    }

    pub fn forward_cached(
        &self,
        x: &Mat<T>,
        layout: &StreamLayout,
        t: T,
        cond: CondInput<'_, T>,
    ) -> Result<(Mat<T>, ForwardCache<T>)> {
        self.check_inputs(x, layout, &cond)?;
        let c = &self.config;
        let d = c.width;
        let rows = x.rows;

        // Timestep embedding, broadcast to every row.
        let tf = ops::time_features(t, c.time_features);
        let ta = self.lin(&tf, self.ids.time1);
        let ts = ops::silu(&ta);
        let temb = self.lin(&ts, self.ids.time2);

        let mut h = self.lin(x, self.ids.in_proj);
        let empty = self.p(self.ids.empty);
        let id_table = self.p(self.ids.id_table);
        let table = self.embedding_table();
        let token = self.ids.token.map(|id| self.p(id));
        for s in &layout.slots {
            let slot_emb = if s.real {
                id_table.row(s.part_id)
            } else {
                empty.row(0)
            };
            for r in s.rows() {
                let hr = h.row_mut(r);
                for j in 0..d {
                    hr[j] += temb.data[j] + slot_emb[j];
                }
                if let Some(tok) = token {
                    for (o, v) in hr.iter_mut().zip(tok.row(r - s.start)) {
                        *o += *v;
                    }
                }
                if let (Some(table), Some(keys)) = (&table, &layout.keys) {
                    for q in keys[r].points() {
                        table.add_pos(q, hr);
                    }
                }
            }
        }

        let (cond_payload, cemb) = match cond {
            CondInput::Tokens(p) => {
                let mut e = self.lin(p, self.ids.cond_proj);
                e.add_assign(self.p(self.ids.cond_pos));
                (Some(p.clone()), e)
            }
            CondInput::Null => (None, self.p(self.ids.null_cond).clone()),
        };

        let heads = c.heads;
        let mut blocks = Vec::with_capacity(c.depth);
        for b in &self.ids.blocks {
            let (a, ln1) = self.norm(&h, b.ln1);
            let q = self.lin(&a, b.q);
            let k = self.lin(&a, b.k);
            let v = self.lin(&a, b.v);
            let groups = row_groups(b.kind, &layout.slots, rows);
            let (att, probs) = attend(&q, &k, &v, heads, &groups);
            h.add_assign(&self.lin(&att, b.o));

            let (cn, ln2) = self.norm(&h, b.ln2);
            let cq = self.lin(&cn, b.cq);
            let ck = self.lin(&cemb, b.ck);
            let cv = self.lin(&cemb, b.cv);
            let (catt, cprobs) = attend(&cq, &ck, &cv, heads, &[((0, rows), (0, ck.rows))]);
            h.add_assign(&self.lin(&catt, b.co));

            let (m, ln3) = self.norm(&h, b.ln3);
            let f1 = self.lin(&m, b.fc1);
            let g = ops::gelu(&f1);
            h.add_assign(&self.lin(&g, b.fc2));

            blocks.push(BlockCache {
                ln1,
                a,
                q,
                k,
                v,
                att,
                probs,
                ln2,
                c: cn,
                cq,
                ck,
                cv,
                catt,
                cprobs,
                ln3,
                m,
                f1,
                g,
            });
        }
        let (z, lnf) = self.norm(&h, self.ids.ln_f);
        let y = self.lin(&z, self.ids.out_proj);
        Ok((
            y,
            ForwardCache {
                x: x.clone(),
                layout: layout.clone(),
                tf,
                ta,
                ts,
                cond_payload,
                cemb,
                blocks,
                lnf,
                z,
            },
        ))
    }

    /// Backpropagates `dy` (gradient of the loss w.r.t. the output), adding
    /// parameter gradients into `grads` and returning the input gradient.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Mat<T>, grads: &mut ParamStore<T>) -> Mat<T> {
        let c = &self.config;
        let d = c.width;
        let rows = cache.x.rows;
        let heads = c.heads;
        let hdim = c.head_dim();
        let scale = T::from_f64(1.0 / (hdim as f64).sqrt());

        let lin_bwd = |grads: &mut ParamStore<T>, x: &Mat<T>, l: LinearIds, dy: &Mat<T>| {
            let mut dw = std::mem::replace(grads.get_mut(l.w), Mat::zeros(0, 0));
            let mut db = std::mem::replace(grads.get_mut(l.b), Mat::zeros(0, 0));
            let dx = ops::linear_backward(x, self.p(l.w), dy, &mut dw, &mut db);
            *grads.get_mut(l.w) = dw;
            *grads.get_mut(l.b) = db;
            dx
        };
        let norm_bwd = |grads: &mut ParamStore<T>, lc: &LayerNormCache<T>, n: NormIds, dy: &Mat<T>| {
            let mut dg = std::mem::replace(grads.get_mut(n.g), Mat::zeros(0, 0));
            let mut db = std::mem::replace(grads.get_mut(n.b), Mat::zeros(0, 0));
            let dx = ops::layer_norm_backward(lc, self.p(n.g), dy, &mut dg, &mut db);
            *grads.get_mut(n.g) = dg;
            *grads.get_mut(n.b) = db;
            dx
        };

        let dz = lin_bwd(grads, &cache.z, self.ids.out_proj, dy);
        let mut dh = norm_bwd(grads, &cache.lnf, self.ids.ln_f, &dz);
        let mut dcemb = Mat::zeros(cache.cemb.rows, d);

        for (b, bc) in self.ids.blocks.iter().zip(&cache.blocks).rev() {
            // Feed-forward branch.
            let dg = lin_bwd(grads, &bc.g, b.fc2, &dh);
            let df1 = ops::gelu_backward(&bc.f1, &dg);
            let dm = lin_bwd(grads, &bc.m, b.fc1, &df1);
            dh.add_assign(&norm_bwd(grads, &bc.ln3, b.ln3, &dm));

            // Cross-attention branch.
            let dcatt = lin_bwd(grads, &bc.catt, b.co, &dh);
            let mut dcq = Mat::zeros(rows, d);
            let mut dck = Mat::zeros(bc.ck.rows, d);
            let mut dcv = Mat::zeros(bc.cv.rows, d);
            let nc = bc.ck.rows;
            for hd in 0..heads {
                let c0 = hd * hdim;
                ops::attention_backward(
                    bc.cq.view().sub(0, rows, c0, hdim),
                    bc.ck.view().sub(0, nc, c0, hdim),
                    bc.cv.view().sub(0, nc, c0, hdim),
                    &bc.cprobs[hd],
                    dcatt.view().sub(0, rows, c0, hdim),
                    scale,
                    dcq.view_mut().sub(0, rows, c0, hdim),
                    dck.view_mut().sub(0, nc, c0, hdim),
                    dcv.view_mut().sub(0, nc, c0, hdim),
                );
            }
            dcemb.add_assign(&lin_bwd(grads, &cache.cemb, b.ck, &dck));
            dcemb.add_assign(&lin_bwd(grads, &cache.cemb, b.cv, &dcv));
            let dcn = lin_bwd(grads, &bc.c, b.cq, &dcq);
            dh.add_assign(&norm_bwd(grads, &bc.ln2, b.ln2, &dcn));

            // Self-attention branch.
            let datt = lin_bwd(grads, &bc.att, b.o, &dh);
            let mut dq = Mat::zeros(rows, d);
            let mut dk = Mat::zeros(rows, d);
            let mut dv = Mat::zeros(rows, d);
            let groups = row_groups(b.kind, &cache.layout.slots, rows);
            let mut pi = 0;
            for &((r0, len), _) in &groups {
                for hd in 0..heads {
                    let c0 = hd * hdim;
                    ops::attention_backward(
                        bc.q.view().sub(r0, len, c0, hdim),
                        bc.k.view().sub(r0, len, c0, hdim),
                        bc.v.view().sub(r0, len, c0, hdim),
                        &bc.probs[pi],
                        datt.view().sub(r0, len, c0, hdim),
                        scale,
                        dq.view_mut().sub(r0, len, c0, hdim),
                        dk.view_mut().sub(r0, len, c0, hdim),
                        dv.view_mut().sub(r0, len, c0, hdim),
                    );
                    pi += 1;
                }
            }
            let mut da = lin_bwd(grads, &bc.a, b.q, &dq);
            da.add_assign(&lin_bwd(grads, &bc.a, b.k, &dk));
            da.add_assign(&lin_bwd(grads, &bc.a, b.v, &dv));
            dh.add_assign(&norm_bwd(grads, &bc.ln1, b.ln1, &da));
        }

        // Condition embedding.
        match &cache.cond_payload {
            Some(p) => {
                grads.get_mut(self.ids.cond_pos).add_assign(&dcemb);
                lin_bwd(grads, p, self.ids.cond_proj, &dcemb);
            }
            None => grads.get_mut(self.ids.null_cond).add_assign(&dcemb),
        }

        // Input embedding: slot ids, empty marker, positions and time.
        let mut dtemb = Mat::zeros(1, d);
        for s in &cache.layout.slots {
            let target = if s.real {
                (self.ids.id_table, s.part_id)
            } else {
                (self.ids.empty, 0)
            };
            for r in s.rows() {
                let g = dh.row(r);
                for (o, v) in grads.get_mut(target.0).row_mut(target.1).iter_mut().zip(g) {
                    *o += *v;
                }
                for (o, v) in dtemb.data.iter_mut().zip(g) {
                    *o += *v;
                }
                if let Some(tok) = self.ids.token {
                    for (o, v) in grads.get_mut(tok).row_mut(r - s.start).iter_mut().zip(g) {
                        *o += *v;
                    }
                }
            }
        }
        if let (Some(pos), Some(keys)) = (self.ids.pos, &cache.layout.keys) {
            for (r, key) in keys.iter().enumerate() {
                for qc in key.points() {
                    for (a, id) in pos.iter().enumerate() {
                        let row = grads.get_mut(*id).row_mut(qc.axis(a) as usize);
                        for (o, v) in row.iter_mut().zip(dh.row(r)) {
                            *o += *v;
                        }
                    }
                }
            }
        }
        let dts = lin_bwd(grads, &cache.ts, self.ids.time2, &dtemb);
        let dta = ops::silu_backward(&cache.ta, &dts);
        lin_bwd(grads, &cache.tf, self.ids.time1, &dta);
        lin_bwd(grads, &cache.x, self.ids.in_proj, &dh)
    }
}
