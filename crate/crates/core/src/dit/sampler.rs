use std::ops::Range;

use super::model::Dit;
use super::stream::{CondInput, StreamLayout};
use crate::error::{Error, Result};
use crate::tensor::{Mat, Scalar};

/// Default number of Euler steps.
pub const SAMPLE_STEPS: usize = 50;
/// Default classifier-free guidance scale.
pub const CFG_SCALE: f64 = 3.5;

/// Anything that predicts a velocity for a whole stream state.
pub trait VelocityField<T: Scalar> {
    fn velocity(&self, x: &Mat<T>, t: T, cond: CondInput<'_, T>) -> Result<Mat<T>>;
}

/// A [`Dit`] bound to one stream layout.
pub struct BoundDit<'a, T> {
    pub dit: &'a Dit<T>,
    pub layout: &'a StreamLayout,
}

impl<T: Scalar> VelocityField<T> for BoundDit<'_, T> {
    fn velocity(&self, x: &Mat<T>, t: T, cond: CondInput<'_, T>) -> Result<Mat<T>> {
        self.dit.forward(x, self.layout, t, cond)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub steps: usize,
    pub cfg_scale: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            steps: SAMPLE_STEPS,
            cfg_scale: CFG_SCALE,
        }
    }
}

/// Rows pinned to the straight path between a recorded clean latent and its
/// recorded noise: at time `t` they are overwritten with `(1 - t) x0 + t eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clamp<T> {
    pub rows: Range<usize>,
    pub x0: Mat<T>,
    pub eps: Mat<T>,
}

impl<T: Scalar> Clamp<T> {
    pub fn state_at(&self, t: T) -> Mat<T> {
        let s = T::one() - t;
        Mat::from_vec(
            self.x0.rows,
            self.x0.cols,
            self.x0
                .data
                .iter()
                .zip(&self.eps.data)
                .map(|(x, e)| s * *x + t * *e)
                .collect(),
        )
    }

    fn apply(&self, x: &mut Mat<T>, t: T) {
        x.set_rows(self.rows.start, &self.state_at(t));
    }
}

/// Time grid `t_i = 1 - i / steps`, `i = 0..=steps`.
pub fn time_grid<T: Scalar>(steps: usize) -> Vec<T> {
    (0..=steps)
        .map(|i| T::from_f64(1.0 - i as f64 / steps as f64))
        .collect()
}

/// Guided velocity `v_u + s (v_c - v_u)`; `s = 1` and `s = 0` skip the
/// redundant pass and return `v_c` / `v_u` exactly.
pub fn guided_velocity<T: Scalar>(
    model: &impl VelocityField<T>,
    x: &Mat<T>,
    t: T,
    cond: Option<&Mat<T>>,
    cfg_scale: f64,
) -> Result<Mat<T>> {
    let Some(cond) = cond else {
        return model.velocity(x, t, CondInput::Null);
    };
    if cfg_scale == 1.0 {
        return model.velocity(x, t, CondInput::Tokens(cond));
    }
    let vu = model.velocity(x, t, CondInput::Null)?;
    if cfg_scale == 0.0 {
        return Ok(vu);
    }
    let vc = model.velocity(x, t, CondInput::Tokens(cond))?;
    let s = T::from_f64(cfg_scale);
    Ok(Mat::from_vec(
        vu.rows,
        vu.cols,
        vu.data
            .iter()
            .zip(&vc.data)
            .map(|(u, c)| *u + s * (*c - *u))
            .collect(),
    ))
}

/// Fixed-step Euler integration of `dx/dt = -v` from `t = 1` (state `noise`)
/// to `t = 0`. Clamped rows are re-pinned before every velocity evaluation
/// and once more at `t = 0`. When `trace` is given it receives the state
/// after clamping at each grid time, final state included.
pub fn sample<T: Scalar>(
    model: &impl VelocityField<T>,
    cond: Option<&Mat<T>>,
    noise: Mat<T>,
    opts: SampleOptions,
    clamps: &[Clamp<T>],
    mut trace: Option<&mut Vec<Mat<T>>>,
) -> Result<Mat<T>> {
    if opts.steps == 0 {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    for c in clamps {
        if c.rows.end > noise.rows || c.x0.shape() != (c.rows.len(), noise.cols) || c.eps.shape() != c.x0.shape() {
            return Err(Error::Shape(format!("clamp rows {:?} do not fit the stream", c.rows)));
        }
    }
    let grid = time_grid::<T>(opts.steps);
    let mut x = noise;
    for i in 0..opts.steps {
        let (t, t_next) = (grid[i], grid[i + 1]);
        for c in clamps {
            c.apply(&mut x, t);
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(x.clone());
        }
        let v = guided_velocity(model, &x, t, cond, opts.cfg_scale)?;
        let dt = t - t_next;
        for (xv, vv) in x.data.iter_mut().zip(&v.data) {
            *xv -= dt * *vv;
        }
    }
    for c in clamps {
        c.apply(&mut x, T::zero());
    }
    if let Some(tr) = trace {
        tr.push(x.clone());
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `v(x, t) = target - x`, a linear toy field.
    struct Linear {
        target: Mat<f64>,
    }

    impl VelocityField<f64> for Linear {
        fn velocity(&self, x: &Mat<f64>, _t: f64, _c: CondInput<'_, f64>) -> Result<Mat<f64>> {
            Ok(self.target.sub(x))
        }
    }

    #[test]
    fn euler_matches_scalar_recurrence() {
        let target = Mat::from_vec(1, 2, vec![0.25, -1.5]);
        let noise = Mat::from_vec(1, 2, vec![1.0, 0.5]);
        let steps = 7;
        let out = sample(
            &Linear {
                target: target.clone(),
            },
            None,
            noise.clone(),
            SampleOptions {
                steps,
                cfg_scale: 1.0,
            },
            &[],
            None,
        )
        .unwrap();
        for j in 0..2 {
            // x <- x - dt (e - x) with dt = 1/steps.
            let mut x = noise.data[j];
            let e = target.data[j];
            for i in 0..steps {
                let dt = (1.0 - i as f64 / steps as f64) - (1.0 - (i + 1) as f64 / steps as f64);
                x = x - dt * (e - x);
            }
            assert!((out.data[j] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let m = Linear {
            target: Mat::zeros(1, 1),
        };
        let r = sample(
            &m,
            None,
            Mat::zeros(1, 1),
            SampleOptions {
                steps: 0,
                cfg_scale: 1.0,
            },
            &[],
            None,
        );
        assert!(r.is_err());
    }
}
