use nalgebra::DMatrix;

use super::LindbladModel;
use crate::error::{Error, PropagationFailure, Result};
use crate::operator::{validate_density, DensityOperator, Operator, C64};

/// Relative positivity tolerance applied to every propagated state.
pub const POSITIVITY_TOLERANCE: f64 = 1e-7;
/// Largest allowed `|tr ρ(t) − tr ρ(t₀)|`.
pub const TRACE_DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct PropagationOptions {
    /// Store every `record_every`-th step; the endpoints are always stored.
    pub record_every: usize,
    pub positivity_tolerance: f64,
    pub trace_tolerance: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            record_every: 1,
            positivity_tolerance: POSITIVITY_TOLERANCE,
            trace_tolerance: TRACE_DRIFT_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityOperator>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &DensityOperator)> {
        Some((*self.times.last()?, self.states.last()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &DensityOperator)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}

/// One classical fourth-order Runge–Kutta step of the model's right-hand side.
pub fn rk4_step(model: &LindbladModel, rho: &Operator, dt: f64) -> Result<Operator> {
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {} but the model has {}",
            rho.dim(),
            model.dim()
        )));
    }
    Ok(Operator::wrap(rk4_matrix(model, rho.matrix(), dt)))
}

pub(crate) fn rk4_matrix(model: &LindbladModel, y: &DMatrix<C64>, dt: f64) -> DMatrix<C64> {
    let half = C64::new(0.5 * dt, 0.0);
    let full = C64::new(dt, 0.0);
    let k1 = model.rhs_matrix(y);
    let k2 = model.rhs_matrix(&(y + &k1 * half));
    let k3 = model.rhs_matrix(&(y + &k2 * half));
    let k4 = model.rhs_matrix(&(y + &k3 * full));
    y + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0)
}

pub fn propagate(model: &LindbladModel, rho0: &DensityOperator, t_span: (f64, f64), dt: f64) -> Result<Trajectory> {
    propagate_with(model, rho0, t_span, dt, &PropagationOptions::default())
}

/// Fixed-step RK4 from `t_span.0` to `t_span.1`. The last step is shortened
/// if `dt` does not divide the span. Every state is validated; a failure
/// returns the last good state in the error.
pub fn propagate_with(
    model: &LindbladModel,
    rho0: &DensityOperator,
    t_span: (f64, f64),
    dt: f64,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::param("t_span", format!("need t0 < t1, got ({t0}, {t1})")));
    }
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has dimension {} but the model has {}",
            rho0.dim(),
            model.dim()
        )));
    }
    let record_every = opts.record_every.max(1);
    let span = t1 - t0;
    // tolerate round-off in span/dt before adding a short final step
    let n_steps = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let trace0 = rho0.trace();

    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![rho0.clone()],
    };
    let mut last_good = (t0, rho0.clone());
    let mut y = rho0.matrix().clone();
    for k in 1..=n_steps {
        let t_prev = t0 + (k - 1) as f64 * dt;
        let t = if k == n_steps { t1 } else { t0 + k as f64 * dt };
        y = rk4_matrix(model, &y, t - t_prev);

        let fail = |reason: String, last: &(f64, DensityOperator)| {
            Error::Propagation(Box::new(PropagationFailure {
                time: t,
                reason,
                last_good_time: last.0,
                last_good: last.1.clone(),
            }))
        };
        let op = Operator::wrap(y.clone());
        if !op.is_finite() {
            return Err(fail("state became non-finite".into(), &last_good));
        }
        let drift = (op.trace().re - trace0).abs();
        if drift > opts.trace_tolerance {
            return Err(fail(format!("trace drift {drift:e}"), &last_good));
        }
        let state = match validate_density(op, opts.positivity_tolerance) {
            Ok(s) => s,
            Err(Error::InvalidDensity(d)) => return Err(fail(d.to_string(), &last_good)),
            Err(e) => return Err(e),
        };
        if k % record_every == 0 || k == n_steps {
            traj.times.push(t);
            traj.states.push(state.clone());
        }
        last_good = (t, state);
    }
    Ok(traj)
}
