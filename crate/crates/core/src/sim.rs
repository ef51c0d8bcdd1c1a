//! Fixed-step RK4 simulation of switched models with bisection-based
//! localization of mode changes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    check_dim, InputSample, InputSignal, ModeIndex, ModelError, Sample, SwitchEvent,
    SwitchedSystemModel, Trajectory,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("{count} mode changes within one step ending at t = {t} (chattering)")]
    Chattering { t: f64, count: usize },
    #[error("state became non-finite at t = {t}")]
    Divergence { t: f64 },
    #[error("no sign change or mode difference on [{t_a}, {t_b}]")]
    NoEvent { t_a: f64, t_b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub t_end: f64,
    pub step: f64,
    /// Width of the final bisection bracket, in seconds.
    pub event_tolerance: f64,
    pub max_events_per_step: usize,
    /// Keep every `record_stride`-th grid sample. Event and breakpoint
    /// samples are always kept.
    pub record_stride: usize,
    /// Relative drift allowed before re-projecting an algebraic mode.
    pub drift_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_end: 15.0,
            step: 1e-3,
            event_tolerance: 1e-10,
            max_events_per_step: 16,
            record_stride: 1,
            drift_tolerance: 1e-6,
        }
    }
}

impl SimConfig {
    pub fn new(t_end: f64, step: f64) -> Self {
        Self {
            t_end,
            step,
            ..Self::default()
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.into()));
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad("step must be positive and finite");
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad("t_end must be positive and finite");
        }
        if !(self.event_tolerance > 0.0 && self.event_tolerance < self.step) {
            return bad("event_tolerance must lie in (0, step)");
        }
        if self.max_events_per_step == 0 {
            return bad("max_events_per_step must be at least 1");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1");
        }
        if !(self.drift_tolerance > 0.0) {
            return bad("drift_tolerance must be positive");
        }
        Ok(())
    }

    /// Number of grid steps covering `[0, t_end]`.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.step - 1e-9).ceil().max(1.0) as usize
    }

    fn grid_time(&self, k: usize, n: usize) -> f64 {
        if k >= n {
            self.t_end
        } else {
            k as f64 * self.step
        }
    }
}

/// One classic fourth-order Runge-Kutta step in a fixed mode.
///
/// The input is sampled right-continuously at the step start and by its left
/// limit at the step end, so a breakpoint at `t0 + h` does not leak into the
/// step.
pub fn rk4_step(
    model: &SwitchedSystemModel,
    mode: ModeIndex,
    inputs: &dyn InputSignal,
    t0: f64,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    let u0 = inputs.sample(t0);
    let um = inputs.sample(t0 + 0.5 * h);
    let u1 = inputs.sample_left(t0 + h);
    let k1 = model.field_fast(mode, x, &u0);
    let k2 = model.field_fast(mode, &(x + &k1 * (0.5 * h)), &um);
    let k3 = model.field_fast(mode, &(x + &k2 * (0.5 * h)), &um);
    let k4 = model.field_fast(mode, &(x + &k3 * h), &u1);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

const SCAN_SUBDIVISIONS: usize = 16;

/// Earliest `t` in `(t_a, t_b]` where `label(t)` differs from `label(t_a)`,
/// returned as the right end of a bracket no wider than `tol`.
///
/// The interval is first scanned on a uniform sub-grid so that the earliest
/// of several changes is bracketed, then bisected.
pub fn locate_change<L, F>(label: F, t_a: f64, t_b: f64, tol: f64) -> Result<f64, SimError>
where
    L: PartialEq,
    F: Fn(f64) -> L,
{
    let reference = label(t_a);
    locate_change_from(&reference, &label, t_a, t_b, tol, SCAN_SUBDIVISIONS)
        .ok_or(SimError::NoEvent { t_a, t_b })
}

fn locate_change_from<L, F>(
    reference: &L,
    label: &F,
    t_a: f64,
    t_b: f64,
    tol: f64,
    subdivisions: usize,
) -> Option<f64>
where
    L: PartialEq,
    F: Fn(f64) -> L,
{
    let width = t_b - t_a;
    let mut lo = t_a;
    let mut hi = None;
    for k in 1..=subdivisions {
        let t = if k == subdivisions {
            t_b
        } else {
            t_a + width * k as f64 / subdivisions as f64
        };
        if label(t) != *reference {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let mut hi = hi?;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if label(mid) != *reference {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Localizes the earliest sign change of a scalar guard on `[t_a, t_b]`.
pub fn locate_event<G: Fn(f64) -> f64>(
    guard: G,
    t_a: f64,
    t_b: f64,
    tol: f64,
) -> Result<f64, SimError> {
    locate_change_from(&(guard(t_a) > 0.0), &|t| guard(t) > 0.0, t_a, t_b, tol, 64)
        .ok_or(SimError::NoEvent { t_a, t_b })
}

struct Recorder<'a> {
    model: &'a SwitchedSystemModel,
    inputs: &'a dyn InputSignal,
    traj: Trajectory,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, x: &DVector<f64>, mode: ModeIndex) {
        if let Some(last) = self.traj.samples.last_mut() {
            if last.t == t {
                // an event sample already sits at this instant; the grid
                // sample would duplicate it
                if last.mode == mode && last.x == *x {
                    return;
                }
            }
        }
        let input = self.inputs.sample(t);
        let y = self.model.output(x);
        let ydot = self.model.jacobian(x) * self.model.field_fast(mode, x, &input);
        self.traj.samples.push(Sample {
            t,
            x: x.clone(),
            input,
            y,
            ydot,
            mode,
        });
    }

    fn event(&mut self, t: f64, from: ModeIndex, to: ModeIndex, x: &DVector<f64>) {
        self.traj.switch_events.push(SwitchEvent {
            t,
            from,
            to,
            x: x.clone(),
        });
        self.push(t, x, to);
    }
}

fn project_or_keep(
    model: &SwitchedSystemModel,
    mode: ModeIndex,
    x: DVector<f64>,
    input: &InputSample,
) -> DVector<f64> {
    model.project(mode, &x, input).unwrap_or(x)
}

fn ensure_finite(x: &DVector<f64>, t: f64) -> Result<(), SimError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SimError::Divergence { t })
    }
}

/// Simulates `model` from `x0` under `inputs`.
pub fn simulate(
    model: &SwitchedSystemModel,
    x0: &DVector<f64>,
    inputs: &dyn InputSignal,
    config: &SimConfig,
) -> Result<Trajectory, SimError> {
    config.validate()?;
    model.check_state(x0)?;
    check_dim("input signal", model.input_dim, inputs.dim())?;
    ensure_finite(x0, 0.0)?;

    let law = &model.switching_law;
    let n = config.step_count();
    let mut breakpoints = inputs.breakpoints(0.0, config.t_end);
    breakpoints.extend(law.scheduled_times(0.0, config.t_end));
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let mut next_bp = 0usize;

    let u0 = inputs.sample(0.0);
    model.check_input(&u0)?;
    let mut mode = model.select_mode(0.0, model.mode(1)?, x0, &u0);
    let mut x = project_or_keep(model, mode, x0.clone(), &u0);
    let mut t = 0.0;

    let mut rec = Recorder {
        model,
        inputs,
        traj: Trajectory {
            samples: Vec::with_capacity(n / config.record_stride + 2),
            switch_events: Vec::new(),
            step: config.step,
        },
    };
    rec.push(t, &x, mode);

    for k in 1..=n {
        let target = config.grid_time(k, n);
        let mut events_this_step = 0usize;
        while t < target {
            while next_bp < breakpoints.len() && breakpoints[next_bp] <= t {
                next_bp += 1;
            }
            let (seg_end, at_breakpoint) = match breakpoints.get(next_bp) {
                Some(&b) if b < target => (b, true),
                Some(&b) if b == target => (b, true),
                _ => (target, false),
            };
            let h = seg_end - t;
            let x_end = rk4_step(model, mode, inputs, t, &x, h);
            ensure_finite(&x_end, seg_end)?;

            let end_mode = if law.is_state_dependent() {
                model.select_mode(seg_end, mode, &x_end, &inputs.sample_left(seg_end))
            } else {
                mode
            };

            if end_mode != mode {
                let (t0, x_start, from) = (t, x.clone(), mode);
                let label = |tau: f64| {
                    let xt = rk4_step(model, from, inputs, t0, &x_start, tau);
                    model.select_mode(t0 + tau, from, &xt, &inputs.sample_left(t0 + tau))
                };
                let tau = locate_change_from(
                    &from,
                    &label,
                    0.0,
                    h,
                    config.event_tolerance,
                    SCAN_SUBDIVISIONS,
                )
                .unwrap_or(h);
                let t_event = if tau >= h { seg_end } else { t0 + tau };
                let x_event = rk4_step(model, from, inputs, t0, &x_start, t_event - t0);
                ensure_finite(&x_event, t_event)?;
                let to = label(t_event - t0);
                let input_event = inputs.sample(t_event);
                let x_event = project_or_keep(model, to, x_event, &input_event);

                events_this_step += 1;
                if events_this_step > config.max_events_per_step {
                    return Err(SimError::Chattering {
                        t: target,
                        count: events_this_step,
                    });
                }
                rec.event(t_event, from, to, &x_event);
                t = t_event;
                x = x_event;
                mode = to;
                if t < seg_end || !at_breakpoint {
                    continue;
                }
            } else {
                let input_end = inputs.sample_left(seg_end);
                x = match model.project(mode, &x_end, &input_end) {
                    Some(projected) => {
                        if !at_breakpoint {
                            check_drift(&x_end, &projected, config.drift_tolerance, seg_end)?;
                        }
                        projected
                    }
                    None => x_end,
                };
                t = seg_end;
            }

            if at_breakpoint {
                let input_bp = inputs.sample(t);
                let new_mode = model.select_mode(t, mode, &x, &input_bp);
                if new_mode != mode {
                    events_this_step += 1;
                    if events_this_step > config.max_events_per_step {
                        return Err(SimError::Chattering {
                            t: target,
                            count: events_this_step,
                        });
                    }
                    x = project_or_keep(model, new_mode, x, &input_bp);
                    rec.event(t, mode, new_mode, &x);
                    mode = new_mode;
                } else {
                    x = project_or_keep(model, mode, x, &input_bp);
                    rec.push(t, &x, mode);
                }
            }
        }
        if k % config.record_stride == 0 || k == n {
            rec.push(t, &x, mode);
        }
    }
    Ok(rec.traj)
}

fn check_drift(
    before: &DVector<f64>,
    after: &DVector<f64>,
    tol: f64,
    t: f64,
) -> Result<(), SimError> {
    for (b, a) in before.iter().zip(after.iter()) {
        let drift = (a - b).abs();
        let limit = tol * b.abs().max(1.0);
        if drift > limit {
            return Err(ModelError::ConstraintDrift { t, drift, limit }.into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantInput, PiecewiseConstantInput, SwitchingLaw};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn locate_linear_root() {
        let t = locate_event(|t| t - 0.5, 0.0, 1.0, 1e-9).unwrap();
        assert!((t - 0.5).abs() <= 1e-9);
        assert!(t >= 0.5);
    }

    #[test]
    fn locate_returns_earliest_root() {
        let t = locate_event(|t| (t - 0.3) * (t - 0.7), 0.0, 1.0, 1e-9).unwrap();
        assert!((t - 0.3).abs() <= 1e-9, "{t}");
    }

    #[test]
    fn locate_without_crossing_errors() {
        assert!(matches!(
            locate_event(|_| 1.0, 0.0, 1.0, 1e-9),
            Err(SimError::NoEvent { .. })
        ));
    }

    #[test]
    fn locate_change_on_labels() {
        let t = locate_change(|t| if t < 0.25 { 'a' } else { 'b' }, 0.0, 1.0, 1e-12).unwrap();
        assert!((t - 0.25).abs() <= 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::default();
        assert!(c.validate().is_ok());
        c.event_tolerance = c.step;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.max_events_per_step = 0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.step = -1.0;
        assert!(c.validate().is_err());
    }

    fn decay() -> SwitchedSystemModel {
        SwitchedSystemModel::single_mode(
            "decay",
            1,
            1,
            |x, u| DVector::from_element(1, -x[0] + u.value[0]),
            |x| x.clone(),
            |_| DMatrix::from_element(1, 1, 1.0),
        )
    }

    #[test]
    fn stride_sample_count() {
        let cfg = SimConfig::new(15.0, 1e-3).with_stride(10);
        let traj = simulate(&decay(), &DVector::from_element(1, 1.0), &ConstantInput::zeros(1), &cfg)
            .unwrap();
        assert_eq!(traj.len(), 1501);
        assert_eq!(traj.last().unwrap().t, 15.0);
    }

    #[test]
    fn exponential_decay_accuracy() {
        let cfg = SimConfig::new(1.0, 1e-2);
        let traj = simulate(&decay(), &DVector::from_element(1, 1.0), &ConstantInput::zeros(1), &cfg)
            .unwrap();
        let end = traj.last().unwrap().x[0];
        assert!((end - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn breakpoint_forces_sample_and_uses_left_limit() {
        let input = PiecewiseConstantInput::new(vec![
            (0.0, DVector::from_element(1, 0.0)),
            (0.2505, DVector::from_element(1, 1.0)),
        ])
        .unwrap();
        let cfg = SimConfig::new(0.5, 1e-2);
        let traj = simulate(&decay(), &DVector::from_element(1, 0.0), &input, &cfg).unwrap();
        let bp = traj.samples.iter().find(|s| s.t == 0.2505).expect("breakpoint sample");
        assert_eq!(bp.x[0], 0.0);
        assert_eq!(bp.input.value[0], 1.0);
        let end = traj.last().unwrap().x[0];
        let expected = 1.0 - (-(0.5 - 0.2505f64)).exp();
        assert!((end - expected).abs() < 1e-9, "{end} vs {expected}");
        assert!(traj.times().collect::<Vec<_>>().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn time_schedule_switches_exactly() {
        let mut model = decay();
        model.modes.push(Arc::new(|x: &DVector<f64>, _u: &InputSample| DVector::from_element(1, x[0])));
        model.mode_names.push("grow".into());
        model.switching_law = SwitchingLaw::time_schedule(
            ModeIndex::new_unchecked(1),
            vec![(0.3333, ModeIndex::new_unchecked(2))],
        )
        .unwrap();
        let cfg = SimConfig::new(1.0, 1e-2);
        let traj = simulate(&model, &DVector::from_element(1, 1.0), &ConstantInput::zeros(1), &cfg).unwrap();
        assert_eq!(traj.switch_events.len(), 1);
        let ev = &traj.switch_events[0];
        assert_eq!(ev.t, 0.3333);
        let end = traj.last().unwrap().x[0];
        let expected = (-0.3333f64).exp() * (1.0 - 0.3333f64).exp();
        assert!((end - expected).abs() < 1e-9);
    }

    #[test]
    fn divergence_is_reported() {
        let model = SwitchedSystemModel::single_mode(
            "blowup",
            1,
            1,
            |x, _| DVector::from_element(1, x[0] * x[0]),
            |x| x.clone(),
            |_| DMatrix::from_element(1, 1, 1.0),
        );
        let res = simulate(&model, &DVector::from_element(1, 1.0), &ConstantInput::zeros(1), &SimConfig::new(5.0, 1e-2));
        assert!(matches!(res, Err(SimError::Divergence { .. })));
    }

    #[test]
    fn chattering_is_reported() {
        // relay with no hysteresis around x = 0: mode flips every sub-step
        let mut model = SwitchedSystemModel::single_mode(
            "relay",
            1,
            1,
            |_, _| DVector::from_element(1, -1.0),
            |x| x.clone(),
            |_| DMatrix::from_element(1, 1, 1.0),
        );
        model.modes.push(Arc::new(|_: &DVector<f64>, _: &InputSample| DVector::from_element(1, 1.0)));
        model.mode_names.push("up".into());
        model.switching_law = SwitchingLaw::StateGuard(Arc::new(|_, x, _| {
            ModeIndex::new_unchecked(if x[0] > 0.0 { 1 } else { 2 })
        }));
        let mut cfg = SimConfig::new(1.0, 1e-2);
        cfg.max_events_per_step = 4;
        let res = simulate(&model, &DVector::from_element(1, 0.1), &ConstantInput::zeros(1), &cfg);
        assert!(matches!(res, Err(SimError::Chattering { .. })), "{res:?}");
    }
}
