//! Measurements shared by the integration tests and the acceptance harness.
//! Each returns the raw numbers; callers decide the tolerance.

use partgen::dit::{cfm_loss, cfm_loss_and_grad, self_attention, BlockKind, CondInput, Dit, DitConfig, Slot, StreamLayout};
use partgen::encoding::cell_key;
use partgen::geometry::Aabb;
use partgen::rng::{det_rng, gaussian};
use partgen::tensor::Mat;
use rand::Rng;

pub fn randn(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Naive multi-head attention with an explicit additive mask: `allowed(i, j)`
/// false means `-inf` before the softmax.
pub fn masked_attention(
    q: &Mat<f64>,
    k: &Mat<f64>,
    v: &Mat<f64>,
    heads: usize,
    allowed: impl Fn(usize, usize) -> bool,
) -> Mat<f64> {
    let dh = q.cols / heads;
    let mut out = Mat::zeros(q.rows, v.cols);
    for h in 0..heads {
        for i in 0..q.rows {
            let mut logits = vec![f64::NEG_INFINITY; k.rows];
            for (j, l) in logits.iter_mut().enumerate() {
                if allowed(i, j) {
                    let mut s = 0.0;
                    for c in 0..dh {
                        s += q.at(i, h * dh + c) * k.at(j, h * dh + c);
                    }
                    *l = s / (dh as f64).sqrt();
                }
            }
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = w.iter().sum();
            for c in 0..dh {
                let mut acc = 0.0;
                for j in 0..k.rows {
                    acc += w[j] / z * v.at(j, h * dh + c);
                }
                *out.at_mut(i, h * dh + c) = acc;
            }
        }
    }
    out
}

pub fn slot_of(slots: &[Slot], row: usize) -> usize {
    slots.iter().position(|s| s.rows().contains(&row)).unwrap()
}

/// Largest deviation of intra-part attention from the block-diagonal oracle
/// and of inter-part attention from the unmasked oracle over `instances`
/// random draws with `K <= 4`, `M <= 8`, `D <= 16`.
pub fn attention_deviation(instances: usize, seed: u64) -> (f64, f64) {
    let mut rng = det_rng(seed);
    let (mut intra_dev, mut inter_dev) = (0.0f64, 0.0f64);
    for _ in 0..instances {
        let k = rng.random_range(1..=4usize);
        let m = rng.random_range(1..=8usize);
        let heads = [1, 2, 4][rng.random_range(0..3)];
        let d = heads * rng.random_range(1..=16 / heads);
        let layout = StreamLayout::uniform(m, &vec![true; k]);
        let rows = layout.rows();
        let (q, kk, v) = (randn(rows, d, &mut rng), randn(rows, d, &mut rng), randn(rows, d, &mut rng));
        let intra = self_attention(&q, &kk, &v, heads, BlockKind::Intra, &layout.slots);
        let oracle = masked_attention(&q, &kk, &v, heads, |i, j| {
            slot_of(&layout.slots, i) == slot_of(&layout.slots, j)
        });
        intra_dev = intra_dev.max(intra.max_abs_diff(&oracle));
        let inter = self_attention(&q, &kk, &v, heads, BlockKind::Inter, &layout.slots);
        let full = masked_attention(&q, &kk, &v, heads, |_, _| true);
        inter_dev = inter_dev.max(inter.max_abs_diff(&full));
    }
    (intra_dev, inter_dev)
}

pub struct GradCheck {
    /// Worst relative error over entries with a non-negligible gradient.
    pub worst_rel: f64,
    pub checked: usize,
    /// Worst absolute error over entries where both gradients are ~0.
    pub worst_tiny_abs: f64,
}

/// Analytic CFM gradients of a depth-2, width-8 model in f64 against central
/// differences, on the largest entry of every tensor plus two random ones.
/// Without `positional` the stream carries no keys and the model uses
/// within-slot token embeddings instead.
pub fn gradient_check(seed: u64, positional: bool) -> GradCheck {
    let mut cfg = DitConfig::new(2, 8, 2, 3);
    cfg.cond_tokens = 3;
    cfg.cond_width = 5;
    cfg.kmax = 4;
    cfg.time_features = 8;
    cfg.mlp_ratio = 2;
    cfg.positional = positional;
    cfg.lattice = 64;
    cfg.tokens_per_slot = 3;
    let mut dit = Dit::<f64>::new(cfg, 5).unwrap();
    let mut rng = det_rng(seed);
    for t in dit.params.tensors_mut() {
        for a in &mut t.data {
            *a += 0.2 * gaussian(&mut rng);
        }
    }
    let boxes = [
        Aabb::from_arrays([-1.0; 3], [1.0; 3]).unwrap(),
        Aabb::from_arrays([-0.5, 0.0, -0.2], [0.3, 0.6, 0.9]).unwrap(),
        Aabb::from_arrays([0.1, -0.9, -0.4], [0.8, -0.1, 0.2]).unwrap(),
    ];
    let mut keys = Vec::new();
    for b in &boxes {
        for cell in [[0, 0, 0], [1, 0, 1], [1, 1, 1]] {
            keys.push(cell_key(b, cell, 2, 64).unwrap());
        }
    }
    let layout = StreamLayout::uniform(3, &[true, true, false]);
    let layout = if positional { layout.with_keys(keys) } else { layout };
    let x0 = randn(9, 3, &mut rng);
    let eps = randn(9, 3, &mut rng);
    let cond = randn(3, 5, &mut rng);
    let t = 0.37;
    let loss_at = |d: &Dit<f64>| cfm_loss(d, &x0, &layout, &eps, t, CondInput::Tokens(&cond), None).unwrap();
    let mut grads = dit.params.zeros_like();
    cfm_loss_and_grad(&dit, &x0, &layout, &eps, t, CondInput::Tokens(&cond), None, &mut grads, 1.0).unwrap();

    let h = 1e-5;
    let mut out = GradCheck {
        worst_rel: 0.0,
        checked: 0,
        worst_tiny_abs: 0.0,
    };
    for i in 0..dit.params.len() {
        let g = grads.tensors()[i].data.clone();
        let top = (0..g.len()).max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs())).unwrap();
        let picks = [top, rng.random_range(0..g.len()), rng.random_range(0..g.len())];
        for &j in &picks {
            let orig = dit.params.tensors()[i].data[j];
            dit.params.tensors_mut()[i].data[j] = orig + h;
            let lp = loss_at(&dit);
            dit.params.tensors_mut()[i].data[j] = orig - h;
            let lm = loss_at(&dit);
            dit.params.tensors_mut()[i].data[j] = orig;
            let num = (lp - lm) / (2.0 * h);
            let scale = g[j].abs().max(num.abs());
            if scale < 1e-7 {
                out.worst_tiny_abs = out.worst_tiny_abs.max((g[j] - num).abs());
            } else {
                out.worst_rel = out.worst_rel.max((g[j] - num).abs() / scale);
                out.checked += 1;
            }
        }
    }
    out
}

/// Largest gap between closed-form AABB IoU and the counting oracle over
/// `pairs` random pairs, half of them forced to overlap.
pub fn iou_deviation(pairs: usize, seed: u64) -> f64 {
    use super::oracle::{counted_iou, random_box};
    let mut rng = det_rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let b = if rng.random::<bool>() {
            let shift = (b.center() - a.center()) * 0.8;
            Aabb::new(b.min - shift, b.max - shift).unwrap().clamp_to(&Aabb::UNIT)
        } else {
            b
        };
        worst = worst.max((partgen::geometry::iou(&a, &b) - counted_iou(&a, &b, 64)).abs());
    }
    worst
}

/// Highest IoU among surviving pairs after NMS at `threshold`, over random
/// sets seeded with near-duplicates; also returns how many boxes were removed.
pub fn nms_worst_survivor(trials: usize, threshold: f64, seed: u64) -> (f64, usize) {
    use super::oracle::random_box;
    use partgen::geometry::{iou, nms, Vec3};
    let mut rng = det_rng(seed);
    let (mut worst, mut removed) = (0.0f64, 0);
    for _ in 0..trials {
        let mut boxes: Vec<Aabb> = (0..40).map(|_| random_box(&mut rng)).collect();
        for i in 0..10 {
            let b = boxes[i];
            boxes.push(Aabb::new(b.min, b.max - Vec3::splat(0.01 * b.extent().min_elem())).unwrap());
        }
        let kept = nms(&boxes, threshold);
        removed += boxes.len() - kept.len();
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                worst = worst.max(iou(&kept[i], &kept[j]));
            }
        }
    }
    (worst, removed)
}

/// Discretization IoU of a radius-0.125 sphere voxelized at 64^3 in its own
/// 0.25-wide box and on the shared object grid, both measured over the box.
pub fn sphere_discretization() -> (f64, f64) {
    use super::oracle::discretization_iou;
    use partgen::geometry::{voxelize, Solid, Vec3};
    let center = Vec3::new(0.31, -0.17, 0.05);
    let sphere = Solid::Sphere { center, radius: 0.125 };
    let part_box = Aabb::from_center_extent(center, Vec3::splat(0.25)).unwrap();
    let per_part = voxelize(&sphere, &part_box, 64).unwrap();
    let shared = voxelize(&sphere, &Aabb::UNIT, 64).unwrap();
    (
        discretization_iou(&per_part, &part_box, &sphere, &part_box, 128),
        discretization_iou(&shared, &Aabb::UNIT, &sphere, &part_box, 128),
    )
}

/// Number of random `n^3` grids that fail to survive patchify and back.
pub fn patchify_failures(count: usize, n: usize, p: usize, seed: u64) -> usize {
    use partgen::geometry::VoxelGrid;
    use partgen::stages::{occupancy_to_tokens, tokens_to_occupancy};
    let mut rng = det_rng(seed);
    (0..count)
        .filter(|_| {
            let density = rng.random::<f64>();
            let mut g = VoxelGrid::new(n).unwrap();
            for i in 0..g.len() {
                g.set_linear(i, rng.random::<f64>() < density);
            }
            let tokens = occupancy_to_tokens(&g, p).unwrap();
            tokens_to_occupancy(&tokens, n, p).unwrap() != g
        })
        .count()
}

/// Cells of the unit box at grid `n` whose center-corner key differs from
/// the integer lattice oracle.
pub fn unit_key_mismatches(n: usize) -> usize {
    use super::oracle::lattice_coord;
    use partgen::encoding::{grid_keys, LATTICE};
    let keys = grid_keys(&Aabb::UNIT, n, LATTICE);
    keys.iter()
        .enumerate()
        .filter(|(i, k)| {
            let cell = [i % n, (i / n) % n, i / (n * n)];
            (0..3).any(|a| {
                k.center.axis(a) != lattice_coord(2 * cell[a] + 1, 2 * n, LATTICE)
                    || k.corners
                        .iter()
                        .enumerate()
                        .any(|(c, q)| q.axis(a) != lattice_coord(cell[a] + ((c >> a) & 1), n, LATTICE))
            })
        })
        .count()
}

pub struct SequentialCheck {
    pub parts: usize,
    pub rounds: usize,
    /// Round sizes in order.
    pub round_sizes: Vec<usize>,
    /// Global-slot entries in rounds after the first that differ from
    /// `(1 - t) x0 + t eps` recomputed from the recorded latent.
    pub mismatches: usize,
    pub checked: usize,
}

/// Samples `boxes` sequentially with the global slot recorded in round one and
/// recomputes its interpolation at every step of every later round.
pub fn sequential_check(models: &partgen::pipeline::Models, boxes: &[Aabb], kmax: usize, steps: usize) -> SequentialCheck {
    use partgen::dit::{time_grid, SampleOptions};
    use partgen::pipeline::sequential_sample;
    use partgen::rng::gaussian_mat;
    use partgen::stages::{part_noise_seed, CoarsePart};
    use partgen::synthdata::{generate_sample, Category};
    let g = models.geometry();
    let parts: Vec<CoarsePart> = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| CoarsePart {
            part_id: i + 1,
            aabb: *b,
            noise: gaussian_mat(part_noise_seed(7, "coarse", i + 1), g.patch_tokens(), g.coarse_payload()),
            frozen: None,
        })
        .collect();
    let eps_g = gaussian_mat(part_noise_seed(7, "coarse", 0), g.patch_tokens(), g.coarse_payload());
    let sampler = SampleOptions { steps, cfg_scale: 3.5 };
    let cond = generate_sample(1, Category::Robot).condition();
    let mut trace = Vec::new();
    let out = sequential_sample(&models.coarse, &parts, eps_g.clone(), Some(&cond), kmax, sampler, Some(&mut trace)).unwrap();
    let x0_g = &out.global_latent.x0;
    let times = time_grid::<f32>(steps);
    let (mut mismatches, mut checked) = (0, 0);
    // Round one ends on the recorded latent itself.
    let last = trace[0].states.last().unwrap().rows_slice(trace[0].global_rows.start, trace[0].global_rows.end);
    mismatches += (last != *x0_g) as usize;
    for round in &trace[1..] {
        for (state, &t) in round.states.iter().zip(&times) {
            let got = state.rows_slice(round.global_rows.start, round.global_rows.end);
            for r in 0..got.rows {
                for c in 0..got.cols {
                    let want = (1.0 - t) * x0_g.at(r, c) + t * eps_g.at(r, c);
                    mismatches += (got.at(r, c) != want) as usize;
                    checked += 1;
                }
            }
        }
        mismatches += (round.states.len() != steps + 1) as usize;
    }
    SequentialCheck {
        parts: out.parts.len(),
        rounds: trace.len(),
        round_sizes: trace.iter().map(|r| r.parts.len()).collect(),
        mismatches,
        checked,
    }
}
