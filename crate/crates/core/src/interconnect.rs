//! Positive-feedback and cascade interconnections of two switched systems,
//! and the interconnection storage `W = V + Ṽ - hᵀh̃`.
//!
//! Joint states stack `(x, x̃)`. A joint mode is the pair `(i, j)` of the
//! subsystem modes, encoded as `(i - 1) * Ñ + j`, so either side's switch is
//! a joint switching instant.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::model::{
    check_dim, InputSample, ModeIndex, ModelError, Sample, StorageFamily, SwitchEvent,
    SwitchedSystemModel, SwitchingLaw, Trajectory,
};

/// A switched system together with the storage family that certifies it.
#[derive(Debug, Clone)]
pub struct DissipativeSystem {
    pub model: SwitchedSystemModel,
    pub storage: StorageFamily,
}

impl DissipativeSystem {
    pub fn new(model: SwitchedSystemModel, storage: StorageFamily) -> Result<Self, ModelError> {
        if storage.mode_count() != model.mode_count() {
            return Err(ModelError::IncompleteFamily {
                mode: model.mode_count(),
                available: storage.mode_count(),
            });
        }
        Ok(Self { model, storage })
    }
}

pub fn joint_mode(i: ModeIndex, j: ModeIndex, second_count: usize) -> ModeIndex {
    ModeIndex::new_unchecked(i.zero_based() * second_count + j.get())
}

pub fn split_mode(mode: ModeIndex, second_count: usize) -> (ModeIndex, ModeIndex) {
    let z = mode.zero_based();
    (
        ModeIndex::new_unchecked(z / second_count + 1),
        ModeIndex::new_unchecked(z % second_count + 1),
    )
}

fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Inputs, fields and output rates of both subsystems at one joint point.
#[derive(Debug, Clone)]
pub struct LoopSignals {
    pub x: DVector<f64>,
    pub x_tilde: DVector<f64>,
    /// Input `e` of the first system, with `ė`.
    pub e: InputSample,
    /// Input `ẽ` of the second system, with its rate.
    pub e_tilde: InputSample,
    pub dx: DVector<f64>,
    pub dx_tilde: DVector<f64>,
    pub ydot: DVector<f64>,
    pub ydot_tilde: DVector<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Wiring {
    Feedback,
    Cascade,
}

struct Pair {
    first: SwitchedSystemModel,
    second: SwitchedSystemModel,
    wiring: Wiring,
    /// In a feedback loop, whether the first system is resolved before the
    /// second. The side resolved first must not read its input derivative.
    first_leads: bool,
}

impl Pair {
    fn n1(&self) -> usize {
        self.first.state_dim
    }

    fn n2(&self) -> usize {
        self.second.state_dim
    }

    fn p(&self) -> usize {
        self.first.input_dim
    }

    fn split_state(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            z.rows(0, self.n1()).into_owned(),
            z.rows(self.n1(), self.n2()).into_owned(),
        )
    }

    /// External input channels `(u, ũ)`; `ũ` is empty for a cascade.
    fn split_input(&self, u_hat: &InputSample) -> (InputSample, InputSample) {
        let p = self.p();
        let head = InputSample::new(
            u_hat.value.rows(0, p).into_owned(),
            u_hat.derivative.rows(0, p).into_owned(),
        );
        match self.wiring {
            Wiring::Cascade => (head, InputSample::zeros(p)),
            Wiring::Feedback => (
                head,
                InputSample::new(
                    u_hat.value.rows(p, p).into_owned(),
                    u_hat.derivative.rows(p, p).into_owned(),
                ),
            ),
        }
    }

    fn resolve_parts(
        &self,
        i: ModeIndex,
        j: ModeIndex,
        x: DVector<f64>,
        x_tilde: DVector<f64>,
        u_hat: &InputSample,
    ) -> LoopSignals {
        let (u, u_tilde) = self.split_input(u_hat);
        let y = self.first.output(&x);
        let j1 = self.first.jacobian(&x);
        let j2 = self.second.jacobian(&x_tilde);
        match self.wiring {
            Wiring::Cascade => {
                let e = u;
                let dx = self.first.field_fast(i, &x, &e);
                let ydot = &j1 * &dx;
                let e_tilde = InputSample::new(y, ydot.clone());
                let dx_tilde = self.second.field_fast(j, &x_tilde, &e_tilde);
                let ydot_tilde = &j2 * &dx_tilde;
                LoopSignals { x, x_tilde, e, e_tilde, dx, dx_tilde, ydot, ydot_tilde }
            }
            Wiring::Feedback => {
                let y_tilde = self.second.output(&x_tilde);
                let e_val = &u.value + &y_tilde;
                let et_val = &u_tilde.value + &y;
                if self.first_leads {
                    let mut e = InputSample::new(e_val, u.derivative.clone());
                    let dx = self.first.field_fast(i, &x, &e);
                    let ydot = &j1 * &dx;
                    let e_tilde = InputSample::new(et_val, &u_tilde.derivative + &ydot);
                    let dx_tilde = self.second.field_fast(j, &x_tilde, &e_tilde);
                    let ydot_tilde = &j2 * &dx_tilde;
                    e.derivative += &ydot_tilde;
                    LoopSignals { x, x_tilde, e, e_tilde, dx, dx_tilde, ydot, ydot_tilde }
                } else {
                    let mut e_tilde = InputSample::new(et_val, u_tilde.derivative.clone());
                    let dx_tilde = self.second.field_fast(j, &x_tilde, &e_tilde);
                    let ydot_tilde = &j2 * &dx_tilde;
                    let e = InputSample::new(e_val, &u.derivative + &ydot_tilde);
                    let dx = self.first.field_fast(i, &x, &e);
                    let ydot = &j1 * &dx;
                    e_tilde.derivative += &ydot;
                    LoopSignals { x, x_tilde, e, e_tilde, dx, dx_tilde, ydot, ydot_tilde }
                }
            }
        }
    }

    fn resolve(&self, mode: ModeIndex, z: &DVector<f64>, u_hat: &InputSample) -> LoopSignals {
        let (i, j) = split_mode(mode, self.second.mode_count());
        let (x, x_tilde) = self.split_state(z);
        self.resolve_parts(i, j, x, x_tilde, u_hat)
    }

    fn select(&self, t: f64, current: ModeIndex, z: &DVector<f64>, u_hat: &InputSample) -> ModeIndex {
        let n2 = self.second.mode_count();
        let (ci, cj) = split_mode(current, n2);
        let (x, x_tilde) = self.split_state(z);
        let leads_first = self.wiring == Wiring::Cascade || self.first_leads;
        let s = self.resolve_parts(ci, cj, x.clone(), x_tilde.clone(), u_hat);
        if leads_first {
            let i = self.first.select_mode(t, ci, &s.x, &s.e);
            let s = self.resolve_parts(i, cj, x, x_tilde, u_hat);
            let j = self.second.select_mode(t, cj, &s.x_tilde, &s.e_tilde);
            joint_mode(i, j, n2)
        } else {
            let j = self.second.select_mode(t, cj, &s.x_tilde, &s.e_tilde);
            let s = self.resolve_parts(ci, j, x, x_tilde, u_hat);
            let i = self.first.select_mode(t, ci, &s.x, &s.e);
            joint_mode(i, j, n2)
        }
    }

    fn project(&self, mode: ModeIndex, z: &DVector<f64>, u_hat: &InputSample) -> Option<DVector<f64>> {
        let (i, j) = split_mode(mode, self.second.mode_count());
        let (x, x_tilde) = self.split_state(z);
        let s = self.resolve_parts(i, j, x, x_tilde, u_hat);
        let first = self.first.project(i, &s.x, &s.e);
        let x = first.clone().unwrap_or(s.x);
        let s = self.resolve_parts(i, j, x.clone(), s.x_tilde, u_hat);
        let second = self.second.project(j, &s.x_tilde, &s.e_tilde);
        if first.is_none() && second.is_none() {
            return None;
        }
        Some(concat(&x, &second.unwrap_or(s.x_tilde)))
    }

    fn into_model(self, name: String, input_dim: usize) -> SwitchedSystemModel {
        let n1_modes = self.first.mode_count();
        let n2_modes = self.second.mode_count();
        let mut mode_names = Vec::with_capacity(n1_modes * n2_modes);
        for a in &self.first.mode_names {
            for b in &self.second.mode_names {
                mode_names.push(format!("{a}/{b}"));
            }
        }
        let needs_input_derivative =
            self.first.needs_input_derivative || self.second.needs_input_derivative;
        let wiring = self.wiring;
        let direct_feedthrough = match wiring {
            Wiring::Feedback => self.first.direct_feedthrough || self.second.direct_feedthrough,
            Wiring::Cascade => self.first.direct_feedthrough && self.second.direct_feedthrough,
        };
        let state_dim = self.n1() + self.n2();
        let has_projection = self.first.projection.is_some() || self.second.projection.is_some();
        let both_fixed = matches!(self.first.switching_law, SwitchingLaw::SingleMode(_))
            && matches!(self.second.switching_law, SwitchingLaw::SingleMode(_));
        let pair = Arc::new(self);

        let modes = (1..=n1_modes * n2_modes)
            .map(|m| {
                let pair = Arc::clone(&pair);
                let mode = ModeIndex::new_unchecked(m);
                Arc::new(move |z: &DVector<f64>, u: &InputSample| {
                    let s = pair.resolve(mode, z, u);
                    concat(&s.dx, &s.dx_tilde)
                }) as crate::model::FieldFn
            })
            .collect();

        let out_pair = Arc::clone(&pair);
        let jac_pair = Arc::clone(&pair);
        let output_map: crate::model::OutputFn = match wiring {
            Wiring::Feedback => Arc::new(move |z| {
                let (x, xt) = out_pair.split_state(z);
                concat(&out_pair.first.output(&x), &out_pair.second.output(&xt))
            }),
            Wiring::Cascade => Arc::new(move |z| {
                let (_, xt) = out_pair.split_state(z);
                out_pair.second.output(&xt)
            }),
        };
        let output_jacobian: crate::model::JacobianFn = match wiring {
            Wiring::Feedback => Arc::new(move |z| {
                let (x, xt) = jac_pair.split_state(z);
                block_diag(&jac_pair.first.jacobian(&x), &jac_pair.second.jacobian(&xt))
            }),
            Wiring::Cascade => Arc::new(move |z| {
                let (_, xt) = jac_pair.split_state(z);
                let j2 = jac_pair.second.jacobian(&xt);
                let mut out = DMatrix::zeros(j2.nrows(), z.len());
                out.view_mut((0, jac_pair.n1()), j2.shape()).copy_from(&j2);
                out
            }),
        };

        let switching_law = if both_fixed {
            let n2 = pair.second.mode_count();
            let i = pair.first.switching_law.select(0.0, ModeIndex::new_unchecked(1), &DVector::zeros(0), &InputSample::zeros(0));
            let j = pair.second.switching_law.select(0.0, ModeIndex::new_unchecked(1), &DVector::zeros(0), &InputSample::zeros(0));
            SwitchingLaw::SingleMode(joint_mode(i, j, n2))
        } else {
            let sel_pair = Arc::clone(&pair);
            SwitchingLaw::Composite(Arc::new(move |t, current, z, u| sel_pair.select(t, current, z, u)))
        };
        let projection = has_projection.then(|| {
            let proj_pair = Arc::clone(&pair);
            Arc::new(move |mode: ModeIndex, z: &DVector<f64>, u: &InputSample| proj_pair.project(mode, z, u))
                as crate::model::ProjectionFn
        });

        SwitchedSystemModel {
            name,
            state_dim,
            input_dim,
            modes,
            mode_names,
            output_map,
            output_jacobian,
            needs_input_derivative,
            direct_feedthrough,
            switching_law,
            projection,
        }
    }
}

/// Closed loop `e = u + ỹ`, `ẽ = ũ + y` with joint input `û = (u, ũ)` and
/// joint output `ŷ = (y, ỹ)`.
#[derive(Debug, Clone)]
pub struct FeedbackLoop {
    pub h1: DissipativeSystem,
    pub h2: DissipativeSystem,
    pub model: SwitchedSystemModel,
    pub storage: InterconnectionStorage,
}

/// Wires `h1` and `h2` in positive feedback.
///
/// Rejected when both sides have direct feedthrough, or when both read their
/// input derivative (the loop rates would then be defined implicitly).
pub fn build_positive_feedback(
    h1: &DissipativeSystem,
    h2: &DissipativeSystem,
) -> Result<FeedbackLoop, ModelError> {
    let (m1, m2) = (&h1.model, &h2.model);
    check_dim("feedback loop channel width", m1.input_dim, m2.input_dim)?;
    if m1.direct_feedthrough && m2.direct_feedthrough {
        return Err(ModelError::WellPosedness(format!(
            "both '{}' and '{}' have direct feedthrough",
            m1.name, m2.name
        )));
    }
    if m1.needs_input_derivative && m2.needs_input_derivative {
        return Err(ModelError::WellPosedness(format!(
            "both '{}' and '{}' read their input derivative",
            m1.name, m2.name
        )));
    }
    let pair = Pair {
        first: m1.clone(),
        second: m2.clone(),
        wiring: Wiring::Feedback,
        first_leads: !m1.needs_input_derivative,
    };
    let p = m1.input_dim;
    let model = pair.into_model(format!("feedback({}, {})", m1.name, m2.name), 2 * p);
    let storage = InterconnectionStorage::new(h1, h2);
    Ok(FeedbackLoop {
        h1: h1.clone(),
        h2: h2.clone(),
        model,
        storage,
    })
}

impl FeedbackLoop {
    pub fn split_state(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n1 = self.h1.model.state_dim;
        (
            z.rows(0, n1).into_owned(),
            z.rows(n1, self.h2.model.state_dim).into_owned(),
        )
    }

    pub fn joint_state(&self, x: &DVector<f64>, x_tilde: &DVector<f64>) -> DVector<f64> {
        concat(x, x_tilde)
    }

    pub fn split_mode(&self, mode: ModeIndex) -> (ModeIndex, ModeIndex) {
        split_mode(mode, self.h2.model.mode_count())
    }

    pub fn joint_mode(&self, i: ModeIndex, j: ModeIndex) -> ModeIndex {
        joint_mode(i, j, self.h2.model.mode_count())
    }

    /// Loop signals at a joint point, for inspection and certificates.
    pub fn signals(&self, mode: ModeIndex, z: &DVector<f64>, u_hat: &InputSample) -> LoopSignals {
        let pair = Pair {
            first: self.h1.model.clone(),
            second: self.h2.model.clone(),
            wiring: Wiring::Feedback,
            first_leads: !self.h1.model.needs_input_derivative,
        };
        pair.resolve(mode, z, u_hat)
    }

    /// Per-subsystem views of a closed-loop trajectory, each carrying the
    /// subsystem's own input `e` (resp. `ẽ`) and output rate.
    pub fn split_trajectory(&self, traj: &Trajectory) -> (Trajectory, Trajectory) {
        let mut first = Trajectory {
            step: traj.step,
            ..Default::default()
        };
        let mut second = first.clone();
        for sample in &traj.samples {
            let s = self.signals(sample.mode, &sample.x, &sample.input);
            let (i, j) = self.split_mode(sample.mode);
            first.samples.push(Sample {
                t: sample.t,
                y: self.h1.model.output(&s.x),
                x: s.x,
                input: s.e,
                ydot: s.ydot,
                mode: i,
            });
            second.samples.push(Sample {
                t: sample.t,
                y: self.h2.model.output(&s.x_tilde),
                x: s.x_tilde,
                input: s.e_tilde,
                ydot: s.ydot_tilde,
                mode: j,
            });
        }
        for ev in &traj.switch_events {
            let (fi, fj) = self.split_mode(ev.from);
            let (ti, tj) = self.split_mode(ev.to);
            let (x, xt) = self.split_state(&ev.x);
            if fi != ti {
                first.switch_events.push(SwitchEvent { t: ev.t, from: fi, to: ti, x });
            }
            if fj != tj {
                second.switch_events.push(SwitchEvent { t: ev.t, from: fj, to: tj, x: xt });
            }
        }
        (first, second)
    }
}

/// Cascade `ũ = y`: the joint model takes the first system's input and
/// exposes the second system's output.
pub fn build_cascade(
    h1: &SwitchedSystemModel,
    h2: &SwitchedSystemModel,
) -> Result<SwitchedSystemModel, ModelError> {
    check_dim("cascade channel width", h1.input_dim, h2.input_dim)?;
    let p = h1.input_dim;
    let pair = Pair {
        first: h1.clone(),
        second: h2.clone(),
        wiring: Wiring::Cascade,
        first_leads: true,
    };
    Ok(pair.into_model(format!("cascade({} -> {})", h1.name, h2.name), p))
}

/// `W_(i,j)(x, x̃) = V_i(x) + Ṽ_j(x̃) - h(x)ᵀ h̃(x̃)` over joint modes.
#[derive(Debug, Clone)]
pub struct InterconnectionStorage {
    first: DissipativeSystem,
    second: DissipativeSystem,
    /// `min{ε, ε̃}`.
    pub epsilon_min: f64,
}

impl InterconnectionStorage {
    pub fn new(h1: &DissipativeSystem, h2: &DissipativeSystem) -> Self {
        Self {
            epsilon_min: h1.storage.epsilon.min(h2.storage.epsilon),
            first: h1.clone(),
            second: h2.clone(),
        }
    }

    pub fn mode_count(&self) -> usize {
        self.first.model.mode_count() * self.second.model.mode_count()
    }

    pub fn eval_w(
        &self,
        x: &DVector<f64>,
        x_tilde: &DVector<f64>,
        mode: ModeIndex,
    ) -> Result<f64, ModelError> {
        let (i, j) = split_mode(mode, self.second.model.mode_count());
        let v = self.first.storage.value(i, x)?;
        let vt = self.second.storage.value(j, x_tilde)?;
        let y = self.first.model.output(x);
        let yt = self.second.model.output(x_tilde);
        Ok(v + vt - y.dot(&yt))
    }

    pub fn eval_joint(&self, z: &DVector<f64>, mode: ModeIndex) -> Result<f64, ModelError> {
        let n1 = self.first.model.state_dim;
        let x = z.rows(0, n1).into_owned();
        let xt = z.rows(n1, z.len() - n1).into_owned();
        self.eval_w(&x, &xt, mode)
    }

    /// `W` as a storage family over the joint state, carrying `ε_min`.
    pub fn as_family(&self) -> StorageFamily {
        let n1 = self.first.model.state_dim;
        let n2_modes = self.second.model.mode_count();
        let mut values = Vec::with_capacity(self.mode_count());
        let mut gradients = Vec::with_capacity(self.mode_count());
        for m in 1..=self.mode_count() {
            let (i, j) = split_mode(ModeIndex::new_unchecked(m), n2_modes);
            let (a, b) = (self.first.clone(), self.second.clone());
            values.push(Arc::new(move |z: &DVector<f64>| {
                let x = z.rows(0, n1).into_owned();
                let xt = z.rows(n1, z.len() - n1).into_owned();
                a.storage.value(i, &x).unwrap_or(f64::NAN)
                    + b.storage.value(j, &xt).unwrap_or(f64::NAN)
                    - a.model.output(&x).dot(&b.model.output(&xt))
            }) as crate::model::StorageFn);
            let (a, b) = (self.first.clone(), self.second.clone());
            gradients.push(Arc::new(move |z: &DVector<f64>| {
                let x = z.rows(0, n1).into_owned();
                let xt = z.rows(n1, z.len() - n1).into_owned();
                let y = a.model.output(&x);
                let yt = b.model.output(&xt);
                let gx = a.storage.gradient(i, &x).unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN))
                    - a.model.jacobian(&x).transpose() * &yt;
                let gxt = b.storage.gradient(j, &xt).unwrap_or_else(|_| DVector::from_element(xt.len(), f64::NAN))
                    - b.model.jacobian(&xt).transpose() * &y;
                concat(&gx, &gxt)
            }) as crate::model::GradientFn);
        }
        StorageFamily::new(values, gradients, self.epsilon_min)
            .expect("one value and gradient per joint mode")
    }
}
