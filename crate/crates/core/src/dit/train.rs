use rand::Rng;

use super::model::Dit;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, AdamWConfig};
use super::stream::{CondInput, StreamLayout};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, det_rng, gaussian, DetRng};
use crate::tensor::{Mat, Scalar};

/// Default probability of replacing the condition with the null rows.
pub const COND_DROP_PROB: f64 = 0.1;

/// One training pair: clean stream and its condition payload.
#[derive(Debug, Clone)]
pub struct TrainExample<T> {
    pub x0: Mat<T>,
    pub layout: StreamLayout,
    pub cond: Mat<T>,
    /// Per-element loss weights; `None` weights every row of a real slot by 1.
    pub weights: Option<Mat<T>>,
}

/// Rectified-flow path point `x_t = (1 - t) x0 + t eps`.
pub fn interpolate<T: Scalar>(x0: &Mat<T>, eps: &Mat<T>, t: T) -> Mat<T> {
    let s = T::one() - t;
    Mat::from_vec(
        x0.rows,
        x0.cols,
        x0.data
            .iter()
            .zip(&eps.data)
            .map(|(a, e)| s * *a + t * *e)
            .collect(),
    )
}

/// Default weights: 1 on rows of real slots, 0 on padding.
pub fn slot_weights<T: Scalar>(layout: &StreamLayout, cols: usize) -> Mat<T> {
    let real = layout.real_rows();
    Mat::from_fn(real.len(), cols, |r, _| if real[r] { T::one() } else { T::zero() })
}

/// Masked mean squared error and its gradient w.r.t. `pred`.
fn weighted_mse<T: Scalar>(pred: &Mat<T>, target: &Mat<T>, w: &Mat<T>) -> (f64, Mat<T>) {
    let total: f64 = w.data.iter().map(|v| v.as_f64()).sum();
    if total == 0.0 {
        return (0.0, Mat::zeros(pred.rows, pred.cols));
    }
    let mut loss = 0.0;
    let inv = T::from_f64(2.0 / total);
    let grad = Mat::from_vec(
        pred.rows,
        pred.cols,
        pred.data
            .iter()
            .zip(&target.data)
            .zip(&w.data)
            .map(|((p, t), w)| {
                let d = *p - *t;
                loss += (w.as_f64()) * d.as_f64() * d.as_f64();
                inv * *w * d
            })
            .collect(),
    );
    (loss / total, grad)
}

/// Conditional flow-matching loss `mean |v(x_t, t) - (eps - x0)|^2` over the
/// weighted elements.
#[allow(clippy::too_many_arguments)]
pub fn cfm_loss<T: Scalar>(
    dit: &Dit<T>,
    x0: &Mat<T>,
    layout: &StreamLayout,
    eps: &Mat<T>,
    t: T,
    cond: CondInput<'_, T>,
    weights: Option<&Mat<T>>,
) -> Result<f64> {
    let (loss, _) = cfm_loss_inner(dit, x0, layout, eps, t, cond, weights, None)?;
    Ok(loss)
}

/// Loss plus gradients: parameter gradients scaled by `grad_scale` are added
/// to `grads`; the returned matrix is the gradient w.r.t. `x_t`.
#[allow(clippy::too_many_arguments)]
pub fn cfm_loss_and_grad<T: Scalar>(
    dit: &Dit<T>,
    x0: &Mat<T>,
    layout: &StreamLayout,
    eps: &Mat<T>,
    t: T,
    cond: CondInput<'_, T>,
    weights: Option<&Mat<T>>,
    grads: &mut super::params::ParamStore<T>,
    grad_scale: T,
) -> Result<(f64, Mat<T>)> {
    let (loss, dx) = cfm_loss_inner(dit, x0, layout, eps, t, cond, weights, Some((grads, grad_scale)))?;
    Ok((loss, dx.expect("gradient requested")))
}

#[allow(clippy::too_many_arguments)]
fn cfm_loss_inner<T: Scalar>(
    dit: &Dit<T>,
    x0: &Mat<T>,
    layout: &StreamLayout,
    eps: &Mat<T>,
    t: T,
    cond: CondInput<'_, T>,
    weights: Option<&Mat<T>>,
    grads: Option<(&mut super::params::ParamStore<T>, T)>,
) -> Result<(f64, Option<Mat<T>>)> {
    if eps.shape() != x0.shape() {
        return Err(Error::Shape("noise and clean latents differ in shape".into()));
    }
    let default_w;
    let w = match weights {
        Some(w) if w.shape() == x0.shape() => w,
        Some(_) => return Err(Error::Shape("loss weights differ in shape".into())),
        None => {
            default_w = slot_weights(layout, x0.cols);
            &default_w
        }
    };
    let xt = interpolate(x0, eps, t);
    let target = eps.sub(x0);
    let (v, cache) = dit.forward_cached(&xt, layout, t, cond)?;
    let (loss, mut dv) = weighted_mse(&v, &target, w);
    match grads {
        Some((g, s)) => {
            dv.scale(s);
            Ok((loss, Some(dit.backward(&cache, &dv, g))))
        }
        None => Ok((loss, None)),
    }
}

/// Bernoulli gate for classifier-free-guidance condition dropout.
pub fn drop_condition(rng: &mut impl Rng, drop_prob: f64) -> bool {
    rng.random::<f64>() < drop_prob
}

/// One optimizer step on the batch-mean CFM loss. Each example draws its own
/// time `t ~ U(0, 1)`, noise, and condition-dropout decision from `rng`.
pub fn train_step<T: Scalar>(
    dit: &mut Dit<T>,
    opt: &mut AdamW<T>,
    batch: &[TrainExample<T>],
    drop_prob: f64,
    rng: &mut DetRng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let mut grads = dit.params.zeros_like();
    let scale = T::from_f64(1.0 / batch.len() as f64);
    let mut total = 0.0;
    for ex in batch {
        // Keep t away from the endpoints where the path degenerates.
        let t = T::from_f64(rng.random::<f64>().clamp(1e-4, 1.0 - 1e-4));
        let eps = Mat::from_vec(
            ex.x0.rows,
            ex.x0.cols,
            (0..ex.x0.len()).map(|_| T::from_f64(gaussian(rng))).collect(),
        );
        let cond = if drop_condition(rng, drop_prob) {
            CondInput::Null
        } else {
            CondInput::Tokens(&ex.cond)
        };
        let (loss, _) = cfm_loss_and_grad(
            dit,
            &ex.x0,
            &ex.layout,
            &eps,
            t,
            cond,
            ex.weights.as_ref(),
            &mut grads,
            scale,
        )?;
        total += loss;
    }
    opt.step(&mut dit.params, &grads);
    Ok(total / batch.len() as f64)
}

/// Optimizer schedule for [`train_loop`]: linear warmup, then cosine decay
/// to `lr * final_frac`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub warmup: usize,
    pub final_frac: f64,
    pub drop_prob: f64,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            steps: 1000,
            batch: 1,
            lr: 1e-3,
            warmup: 100,
            final_frac: 0.05,
            drop_prob: COND_DROP_PROB,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn lr_at(&self, step: usize) -> f64 {
        let warm = ((step + 1) as f64 / self.warmup.max(1) as f64).min(1.0);
        let frac = step as f64 / self.steps.max(1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        self.lr * warm * (self.final_frac + (1.0 - self.final_frac) * cos)
    }
}

/// Runs `schedule.steps` optimizer steps. `example(step, k, rng)` supplies the
/// `k`-th example of each batch; `progress(step, loss)` sees every step's loss.
pub fn train_loop(
    dit: &mut Dit<f32>,
    schedule: &TrainSchedule,
    mut example: impl FnMut(usize, usize, &mut DetRng) -> Result<TrainExample<f32>>,
    mut progress: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if schedule.batch == 0 {
        return Err(Error::InvalidArgument("batch must be positive".into()));
    }
    let mut opt = AdamW::new(AdamWConfig::default(), &dit.params);
    let mut data_rng = det_rng(derive_seed(schedule.seed, "train-data", 0));
    let mut noise_rng = det_rng(derive_seed(schedule.seed, "train-noise", 0));
    let mut losses = Vec::with_capacity(schedule.steps);
    for step in 0..schedule.steps {
        let batch = (0..schedule.batch)
            .map(|k| example(step, k, &mut data_rng))
            .collect::<Result<Vec<_>>>()?;
        opt.config.lr = schedule.lr_at(step);
        let loss = train_step(dit, &mut opt, &batch, schedule.drop_prob, &mut noise_rng)?;
        if !loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at step {step}")));
        }
        progress(step, loss);
        losses.push(loss);
    }
    Ok(losses)
}
