//! Adaptive linearly implicit integrator for stiff autonomous systems.
//!
//! A Rosenbrock 2(3) pair (the scheme behind MATLAB's `ode23s`): L-stable,
//! one LU factorization of `I - h d J` per step, embedded third-order error
//! estimate and a free continuous extension for dense output.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest admissible step, in units of the system's time scale.
pub const MIN_STEP: f64 = 1e-12;

pub trait StiffSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, y: &[f64], out: &mut [f64]);
    fn jacobian(&self, y: &[f64], out: &mut DMatrix<f64>);
    /// Describe a bound violation larger than `tol`, if any.
    fn bound_violation(&self, _y: &[f64], _tol: f64) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
}

/// What the driver should do after an accepted step.
pub enum Flow {
    Continue,
    Stop,
}

/// One accepted step, handed to the observer.
pub struct StepView<'a> {
    pub t0: f64,
    pub h: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    /// `f(y1)`
    pub f1: &'a [f64],
    k1: &'a [f64],
    k2: &'a [f64],
}

impl StepView<'_> {
    /// Continuous extension at `t ∈ [t0, t0 + h]`.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let s = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let d = D;
        let c1 = s * (1.0 - s) / (1.0 - 2.0 * d);
        let c2 = s * (s - 2.0 * d) / (1.0 - 2.0 * d);
        for i in 0..out.len() {
            out[i] = self.y0[i] + self.h * (c1 * self.k1[i] + c2 * self.k2[i]);
        }
    }
}

const D: f64 = 0.292_893_218_813_452_5; // 1 / (2 + √2)
const E32: f64 = 7.414_213_562_373_095; // 6 + √2

pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub rejected: usize,
}

/// Integrate from `t0` towards `t_end`, calling `observe` after every
/// accepted step. Stops early when the observer returns [`Flow::Stop`].
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    ctrl: StepControl,
    mut observe: F,
) -> Result<Outcome>
where
    S: StiffSystem,
    F: FnMut(&StepView) -> Result<Flow>,
{
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; n];
    sys.rhs(&y, &mut f0);
    let mut jac = DMatrix::zeros(n, n);
    let mut h = ctrl.initial_step.min(ctrl.max_step).min(t_end - t0).max(MIN_STEP);

    let mut ytmp = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut steps = 0;
    let mut rejected = 0;
    let mut need_jac = true;

    while t < t_end {
        if need_jac {
            sys.jacobian(&y, &mut jac);
            need_jac = false;
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let w = DMatrix::<f64>::identity(n, n) - &jac * (h * D);
        let lu = w.lu();
        let solve = |rhs: &[f64]| -> Option<Vec<f64>> {
            lu.solve(&DVector::from_column_slice(rhs)).map(|v| v.data.into())
        };

        let Some(s1) = solve(&f0) else {
            h *= 0.5;
            rejected += 1;
            if h < MIN_STEP {
                return Err(Error::StiffnessFailure { t, h });
            }
            continue;
        };
        k1.copy_from_slice(&s1);
        for i in 0..n {
            ytmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(&ytmp, &mut f1);
        let r2: Vec<f64> = (0..n).map(|i| f1[i] - k1[i]).collect();
        let s2 = solve(&r2).expect("factorization already succeeded");
        for i in 0..n {
            k2[i] = s2[i] + k1[i];
            ynew[i] = y[i] + h * k2[i];
        }
        sys.rhs(&ynew, &mut f2);
        let r3: Vec<f64> = (0..n)
            .map(|i| f2[i] - E32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]))
            .collect();
        let k3 = solve(&r3).expect("factorization already succeeded");

        let mut err = 0.0f64;
        for i in 0..n {
            let e = h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]);
            let sc = ctrl.abs_tol + ctrl.rel_tol * y[i].abs().max(ynew[i].abs());
            err = err.max(e.abs() / sc);
        }
        let finite = ynew.iter().all(|v| v.is_finite());
        let in_bounds = finite && sys.bound_violation(&ynew, ctrl.abs_tol).is_none();
        if !finite || !in_bounds || err > 1.0 {
            rejected += 1;
            let fac = if finite && in_bounds {
                (0.8 * err.powf(-1.0 / 3.0)).clamp(0.1, 0.5)
            } else {
                0.25
            };
            h *= fac;
            if h < MIN_STEP {
                if finite && !in_bounds {
                    return Err(Error::InvariantViolation {
                        t,
                        what: sys.bound_violation(&ynew, ctrl.abs_tol).unwrap_or_default(),
                    });
                }
                return Err(Error::StiffnessFailure { t, h });
            }
            continue;
        }

        steps += 1;
        let view = StepView {
            t0: t,
            h,
            y0: &y,
            y1: &ynew,
            f1: &f2,
            k1: &k1,
            k2: &k2,
        };
        let flow = observe(&view)?;
        t = if last { t_end } else { t + h };
        std::mem::swap(&mut y, &mut ynew);
        std::mem::swap(&mut f0, &mut f2);
        need_jac = true;
        if matches!(flow, Flow::Stop) {
            break;
        }
        let fac = if err > 0.0 {
            (0.8 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h * fac).min(ctrl.max_step);
    }
    Ok(Outcome {
        t,
        y,
        steps,
        rejected,
    })
}
