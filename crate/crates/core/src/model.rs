//! Domain vocabulary: mode indices, input signals, switching laws, switched
//! system models, storage families and trajectories.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors raised when a model is evaluated outside its contract.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("mode {mode} is outside the index set 1..={count}")]
    InvalidMode { mode: usize, count: usize },
    #[error("interconnection is not well posed: {0}")]
    WellPosedness(String),
    #[error("algebraic constraint drifted by {drift:e} (limit {limit:e}) at t = {t}")]
    ConstraintDrift { t: f64, drift: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("storage family has {available} modes but mode {mode} was requested")]
    IncompleteFamily { mode: usize, available: usize },
}

pub(crate) fn check_dim(
    context: &'static str,
    expected: usize,
    actual: usize,
) -> Result<(), ModelError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

/// One-based index into a model's finite mode set `{1..N}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex(usize);

impl ModeIndex {
    /// Builds an index, checking membership in `{1..count}`.
    pub fn new(value: usize, count: usize) -> Result<Self, ModelError> {
        if value >= 1 && value <= count {
            Ok(Self(value))
        } else {
            Err(ModelError::InvalidMode { mode: value, count })
        }
    }

    /// Index without a bound check. Callers own the membership invariant.
    pub const fn new_unchecked(value: usize) -> Self {
        Self(value)
    }

    pub const fn get(self) -> usize {
        self.0
    }

    pub const fn zero_based(self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Input value together with its time derivative.
///
/// The derivative channel is only read by systems that declare
/// `needs_input_derivative`; everyone else may receive zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSample {
    pub value: DVector<f64>,
    pub derivative: DVector<f64>,
}

impl InputSample {
    pub fn new(value: DVector<f64>, derivative: DVector<f64>) -> Self {
        debug_assert_eq!(value.len(), derivative.len());
        Self { value, derivative }
    }

    /// Constant input: derivative is zero.
    pub fn constant(value: DVector<f64>) -> Self {
        let derivative = DVector::zeros(value.len());
        Self { value, derivative }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::constant(DVector::zeros(dim))
    }

    pub fn scalar(value: f64, derivative: f64) -> Self {
        Self::new(DVector::from_element(1, value), DVector::from_element(1, derivative))
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }
}

/// External input signal supplied as analytic `(value, derivative)` pairs.
pub trait InputSignal: Send + Sync {
    fn dim(&self) -> usize;

    /// Right-continuous value and derivative at `t`.
    fn sample(&self, t: f64) -> InputSample;

    /// Left limit at `t`. Differs from [`InputSignal::sample`] only at
    /// breakpoints.
    fn sample_left(&self, t: f64) -> InputSample {
        self.sample(t)
    }

    /// Discontinuity instants in the open interval `(t0, t1)`, ascending.
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// Input held at a fixed value.
#[derive(Debug, Clone)]
pub struct ConstantInput(pub DVector<f64>);

impl ConstantInput {
    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self(DVector::from_column_slice(values))
    }
}

impl InputSignal for ConstantInput {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, _t: f64) -> InputSample {
        InputSample::constant(self.0.clone())
    }
}

/// Piecewise-constant input given as a `(start time, value)` table.
///
/// Before the first entry the first value applies. Each entry after the
/// first marks a breakpoint.
#[derive(Debug, Clone)]
pub struct PiecewiseConstantInput {
    table: Vec<(f64, DVector<f64>)>,
}

impl PiecewiseConstantInput {
    pub fn new(table: Vec<(f64, DVector<f64>)>) -> Result<Self, ModelError> {
        let Some(first) = table.first() else {
            return Err(ModelError::InvalidParameter(
                "piecewise-constant input needs at least one entry".into(),
            ));
        };
        let dim = first.1.len();
        for pair in table.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(ModelError::InvalidParameter(
                    "piecewise-constant breakpoints must be strictly increasing".into(),
                ));
            }
        }
        for (_, v) in &table {
            check_dim("piecewise-constant input", dim, v.len())?;
        }
        Ok(Self { table })
    }

    fn index_right(&self, t: f64) -> usize {
        // last entry with start <= t
        self.table
            .iter()
            .rposition(|(start, _)| *start <= t)
            .unwrap_or(0)
    }

    fn index_left(&self, t: f64) -> usize {
        self.table
            .iter()
            .rposition(|(start, _)| *start < t)
            .unwrap_or(0)
    }
}

impl InputSignal for PiecewiseConstantInput {
    fn dim(&self) -> usize {
        self.table[0].1.len()
    }

    fn sample(&self, t: f64) -> InputSample {
        InputSample::constant(self.table[self.index_right(t)].1.clone())
    }

    fn sample_left(&self, t: f64) -> InputSample {
        InputSample::constant(self.table[self.index_left(t)].1.clone())
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.table
            .iter()
            .skip(1)
            .map(|(s, _)| *s)
            .filter(|s| *s > t0 && *s < t1)
            .collect()
    }
}

type SignalFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Smooth input given by a value closure and its analytic derivative.
#[derive(Clone)]
pub struct FnInput {
    dim: usize,
    value: SignalFn,
    derivative: SignalFn,
}

impl FnInput {
    pub fn new<V, D>(dim: usize, value: V, derivative: D) -> Self
    where
        V: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        D: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            value: Arc::new(value),
            derivative: Arc::new(derivative),
        }
    }
}

impl InputSignal for FnInput {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, t: f64) -> InputSample {
        InputSample::new((self.value)(t), (self.derivative)(t))
    }
}

/// Two signals stacked into one channel `(u, ũ)`.
pub struct StackedInput<A, B> {
    pub first: A,
    pub second: B,
}

impl<A: InputSignal, B: InputSignal> StackedInput<A, B> {
    pub fn new(first: A, second: B) -> Self {
        Self { first, second }
    }
}

fn stack(a: InputSample, b: InputSample) -> InputSample {
    let value = DVector::from_iterator(
        a.dim() + b.dim(),
        a.value.iter().chain(b.value.iter()).copied(),
    );
    let derivative = DVector::from_iterator(
        a.dim() + b.dim(),
        a.derivative.iter().chain(b.derivative.iter()).copied(),
    );
    InputSample::new(value, derivative)
}

impl<A: InputSignal, B: InputSignal> InputSignal for StackedInput<A, B> {
    fn dim(&self) -> usize {
        self.first.dim() + self.second.dim()
    }

    fn sample(&self, t: f64) -> InputSample {
        stack(self.first.sample(t), self.second.sample(t))
    }

    fn sample_left(&self, t: f64) -> InputSample {
        stack(self.first.sample_left(t), self.second.sample_left(t))
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut all = self.first.breakpoints(t0, t1);
        all.extend(self.second.breakpoints(t0, t1));
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

impl InputSignal for Box<dyn InputSignal> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sample(&self, t: f64) -> InputSample {
        (**self).sample(t)
    }
    fn sample_left(&self, t: f64) -> InputSample {
        (**self).sample_left(t)
    }
    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        (**self).breakpoints(t0, t1)
    }
}

pub type FieldFn = Arc<dyn Fn(&DVector<f64>, &InputSample) -> DVector<f64> + Send + Sync>;
pub type OutputFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type GuardFn =
    Arc<dyn Fn(ModeIndex, &DVector<f64>, &InputSample) -> ModeIndex + Send + Sync>;
pub type TimedGuardFn =
    Arc<dyn Fn(f64, ModeIndex, &DVector<f64>, &InputSample) -> ModeIndex + Send + Sync>;
/// Returns the state re-projected onto the active mode's algebraic
/// constraint, or `None` when the mode is purely differential.
pub type ProjectionFn =
    Arc<dyn Fn(ModeIndex, &DVector<f64>, &InputSample) -> Option<DVector<f64>> + Send + Sync>;

/// Rule deciding the active mode.
///
/// Every variant is right-continuous: the mode reported at a switching
/// instant is the post-switch mode.
#[derive(Clone)]
pub enum SwitchingLaw {
    SingleMode(ModeIndex),
    /// Mode `initial` on `[0, t_1)`, then `i_k` on `[t_k, t_{k+1})`.
    TimeSchedule {
        initial: ModeIndex,
        switches: Vec<(f64, ModeIndex)>,
    },
    /// Mode chosen from `(current mode, x, u, u̇)`.
    StateGuard(GuardFn),
    /// Produced by the interconnection combinators: composes the laws of
    /// both subsystems, so it may depend on time as well as state.
    Composite(TimedGuardFn),
}

impl fmt::Debug for SwitchingLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SingleMode(i) => f.debug_tuple("SingleMode").field(i).finish(),
            Self::TimeSchedule { initial, switches } => f
                .debug_struct("TimeSchedule")
                .field("initial", initial)
                .field("switches", switches)
                .finish(),
            Self::StateGuard(_) => f.write_str("StateGuard(..)"),
            Self::Composite(_) => f.write_str("Composite(..)"),
        }
    }
}

impl SwitchingLaw {
    pub fn time_schedule(
        initial: ModeIndex,
        switches: Vec<(f64, ModeIndex)>,
    ) -> Result<Self, ModelError> {
        for pair in switches.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(ModelError::InvalidParameter(
                    "switching times must be strictly increasing".into(),
                ));
            }
        }
        if switches.iter().any(|(t, _)| !t.is_finite()) {
            return Err(ModelError::InvalidParameter(
                "switching times must be finite".into(),
            ));
        }
        Ok(Self::TimeSchedule { initial, switches })
    }

    pub fn select(
        &self,
        t: f64,
        current: ModeIndex,
        x: &DVector<f64>,
        input: &InputSample,
    ) -> ModeIndex {
        match self {
            Self::SingleMode(i) => *i,
            Self::TimeSchedule { initial, switches } => switches
                .iter()
                .rev()
                .find(|(tk, _)| *tk <= t)
                .map_or(*initial, |(_, i)| *i),
            Self::StateGuard(guard) => guard(current, x, input),
            Self::Composite(guard) => guard(t, current, x, input),
        }
    }

    /// Switching instants the simulator must land on exactly.
    pub fn scheduled_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        match self {
            Self::TimeSchedule { switches, .. } => switches
                .iter()
                .map(|(t, _)| *t)
                .filter(|t| *t > t0 && *t < t1)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// True when the mode can change between scheduled instants, so the
    /// simulator has to localize events.
    pub fn is_state_dependent(&self) -> bool {
        matches!(self, Self::StateGuard(_) | Self::Composite(_))
    }
}

/// A family of vector fields sharing one state, one input and one output.
#[derive(Clone)]
pub struct SwitchedSystemModel {
    pub name: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub modes: Vec<FieldFn>,
    pub mode_names: Vec<String>,
    pub output_map: OutputFn,
    /// `∂h/∂x`, a `p × n` matrix.
    pub output_jacobian: JacobianFn,
    pub needs_input_derivative: bool,
    /// Some mode's output is tied algebraically to the instantaneous input.
    pub direct_feedthrough: bool,
    pub switching_law: SwitchingLaw,
    pub projection: Option<ProjectionFn>,
}

impl fmt::Debug for SwitchedSystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SwitchedSystemModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("modes", &self.mode_names)
            .field("needs_input_derivative", &self.needs_input_derivative)
            .field("direct_feedthrough", &self.direct_feedthrough)
            .field("switching_law", &self.switching_law)
            .finish()
    }
}

impl SwitchedSystemModel {
    /// Single-mode model with `y = h(x)`.
    pub fn single_mode<F, H, J>(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        field: F,
        output: H,
        jacobian: J,
    ) -> Self
    where
        F: Fn(&DVector<f64>, &InputSample) -> DVector<f64> + Send + Sync + 'static,
        H: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            state_dim,
            input_dim,
            modes: vec![Arc::new(field)],
            mode_names: vec!["single".into()],
            output_map: Arc::new(output),
            output_jacobian: Arc::new(jacobian),
            needs_input_derivative: false,
            direct_feedthrough: false,
            switching_law: SwitchingLaw::SingleMode(ModeIndex(1)),
            projection: None,
        }
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, value: usize) -> Result<ModeIndex, ModelError> {
        ModeIndex::new(value, self.mode_count())
    }

    pub fn mode_name(&self, mode: ModeIndex) -> &str {
        self.mode_names
            .get(mode.zero_based())
            .map_or("?", String::as_str)
    }

    fn check_mode(&self, mode: ModeIndex) -> Result<(), ModelError> {
        ModeIndex::new(mode.get(), self.mode_count()).map(|_| ())
    }

    pub fn check_state(&self, x: &DVector<f64>) -> Result<(), ModelError> {
        check_dim("state", self.state_dim, x.len())
    }

    pub fn check_input(&self, input: &InputSample) -> Result<(), ModelError> {
        check_dim("input", self.input_dim, input.value.len())?;
        check_dim("input derivative", self.input_dim, input.derivative.len())
    }

    /// `f_i(x, u)` with contract checks.
    pub fn field(
        &self,
        mode: ModeIndex,
        x: &DVector<f64>,
        input: &InputSample,
    ) -> Result<DVector<f64>, ModelError> {
        self.check_mode(mode)?;
        self.check_state(x)?;
        self.check_input(input)?;
        let dx = (self.modes[mode.zero_based()])(x, input);
        check_dim("vector field output", self.state_dim, dx.len())?;
        Ok(dx)
    }

    /// Unchecked field evaluation for inner integration loops.
    pub(crate) fn field_fast(
        &self,
        mode: ModeIndex,
        x: &DVector<f64>,
        input: &InputSample,
    ) -> DVector<f64> {
        (self.modes[mode.zero_based()])(x, input)
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.output_map)(x)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.output_jacobian)(x)
    }

    pub fn select_mode(
        &self,
        t: f64,
        current: ModeIndex,
        x: &DVector<f64>,
        input: &InputSample,
    ) -> ModeIndex {
        self.switching_law.select(t, current, x, input)
    }

    pub fn project(
        &self,
        mode: ModeIndex,
        x: &DVector<f64>,
        input: &InputSample,
    ) -> Option<DVector<f64>> {
        self.projection.as_ref().and_then(|p| p(mode, x, input))
    }
}

/// `ẏ = (∂h/∂x) · f_i(x, u)`, evaluated analytically.
pub fn eval_output_derivative(
    model: &SwitchedSystemModel,
    x: &DVector<f64>,
    input: &InputSample,
    mode: ModeIndex,
) -> Result<DVector<f64>, ModelError> {
    let dx = model.field(mode, x, input)?;
    let jac = model.jacobian(x);
    if jac.nrows() != model.input_dim || jac.ncols() != model.state_dim {
        return Err(ModelError::DimensionMismatch {
            context: "output jacobian",
            expected: model.input_dim * model.state_dim,
            actual: jac.nrows() * jac.ncols(),
        });
    }
    Ok(jac * dx)
}

pub type StorageFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Per-mode storage functions `V_i` with gradients and an output-strictness
/// level `ε` (`ε = 0` is plain NI).
#[derive(Clone)]
pub struct StorageFamily {
    values: Vec<StorageFn>,
    gradients: Vec<GradientFn>,
    pub epsilon: f64,
}

impl fmt::Debug for StorageFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StorageFamily")
            .field("modes", &self.values.len())
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

impl StorageFamily {
    pub fn new(
        values: Vec<StorageFn>,
        gradients: Vec<GradientFn>,
        epsilon: f64,
    ) -> Result<Self, ModelError> {
        if values.len() != gradients.len() || values.is_empty() {
            return Err(ModelError::InvalidParameter(
                "storage family needs one value and one gradient per mode".into(),
            ));
        }
        if !(epsilon >= 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "output strictness must be nonnegative, got {epsilon}"
            )));
        }
        Ok(Self {
            values,
            gradients,
            epsilon,
        })
    }

    /// One storage function shared by all `modes`.
    pub fn common<V, G>(modes: usize, value: V, gradient: G, epsilon: f64) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let value: StorageFn = Arc::new(value);
        let gradient: GradientFn = Arc::new(gradient);
        Self {
            values: vec![value; modes.max(1)],
            gradients: vec![gradient; modes.max(1)],
            epsilon,
        }
    }

    pub fn mode_count(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, mode: ModeIndex, x: &DVector<f64>) -> Result<f64, ModelError> {
        self.values
            .get(mode.zero_based())
            .map(|v| v(x))
            .ok_or(ModelError::IncompleteFamily {
                mode: mode.get(),
                available: self.values.len(),
            })
    }

    pub fn gradient(
        &self,
        mode: ModeIndex,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        self.gradients
            .get(mode.zero_based())
            .map(|g| g(x))
            .ok_or(ModelError::IncompleteFamily {
                mode: mode.get(),
                available: self.gradients.len(),
            })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

/// One recorded point of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: DVector<f64>,
    pub input: InputSample,
    pub y: DVector<f64>,
    pub ydot: DVector<f64>,
    pub mode: ModeIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: ModeIndex,
    pub to: ModeIndex,
    pub x: DVector<f64>,
}

/// Time-stamped record of a run. Event instants appear both as a sample
/// (carrying the post-switch mode) and in `switch_events`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub switch_events: Vec<SwitchEvent>,
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Option<&Sample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    /// Index of the sample recorded at an event instant.
    pub fn event_sample_index(&self, event: &SwitchEvent) -> Option<usize> {
        self.samples
            .iter()
            .position(|s| s.t == event.t && s.mode == event.to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn damped() -> SwitchedSystemModel {
        SwitchedSystemModel::single_mode(
            "damped",
            2,
            1,
            |x, u| DVector::from_vec(vec![x[1], -x[0] - x[1] + u.value[0]]),
            |x| DVector::from_element(1, x[0]),
            |_| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
    }

    #[test]
    fn mode_index_bounds() {
        assert!(ModeIndex::new(0, 2).is_err());
        assert!(ModeIndex::new(3, 2).is_err());
        assert_eq!(ModeIndex::new(2, 2).unwrap().zero_based(), 1);
    }

    #[test]
    fn output_derivative_zero_field_is_zero() {
        let model = SwitchedSystemModel::single_mode(
            "still",
            3,
            1,
            |_, _| DVector::zeros(3),
            |x| DVector::from_element(1, x[0] * x[1] + x[2]),
            |x| DMatrix::from_row_slice(1, 3, &[x[1], x[0], 1.0]),
        );
        let x = DVector::from_vec(vec![0.3, -2.0, 7.0]);
        let ydot = eval_output_derivative(&model, &x, &InputSample::zeros(1), ModeIndex(1)).unwrap();
        assert_eq!(ydot[0], 0.0);
    }

    #[test]
    fn output_derivative_errors() {
        let model = damped();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let bad_x = DVector::from_vec(vec![1.0]);
        assert!(matches!(
            eval_output_derivative(&model, &bad_x, &InputSample::zeros(1), ModeIndex(1)),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            eval_output_derivative(&model, &x, &InputSample::zeros(2), ModeIndex(1)),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            eval_output_derivative(&model, &x, &InputSample::zeros(1), ModeIndex(2)),
            Err(ModelError::InvalidMode { mode: 2, count: 1 })
        ));
    }

    #[test]
    fn time_schedule_is_right_continuous() {
        let law = SwitchingLaw::time_schedule(
            ModeIndex(1),
            vec![(1.0, ModeIndex(2)), (2.0, ModeIndex(1))],
        )
        .unwrap();
        let x = DVector::zeros(1);
        let u = InputSample::zeros(1);
        assert_eq!(law.select(0.999, ModeIndex(1), &x, &u), ModeIndex(1));
        assert_eq!(law.select(1.0, ModeIndex(1), &x, &u), ModeIndex(2));
        assert_eq!(law.select(2.0, ModeIndex(2), &x, &u), ModeIndex(1));
        assert_eq!(law.scheduled_times(0.0, 1.5), vec![1.0]);
    }

    #[test]
    fn time_schedule_rejects_unordered_times() {
        assert!(SwitchingLaw::time_schedule(
            ModeIndex(1),
            vec![(1.0, ModeIndex(2)), (1.0, ModeIndex(1))]
        )
        .is_err());
    }

    #[test]
    fn piecewise_input_limits() {
        let input = PiecewiseConstantInput::new(vec![
            (0.0, DVector::from_element(1, 1.0)),
            (0.5, DVector::from_element(1, -1.0)),
        ])
        .unwrap();
        assert_eq!(input.sample(0.5).value[0], -1.0);
        assert_eq!(input.sample_left(0.5).value[0], 1.0);
        assert_eq!(input.sample(0.2).derivative[0], 0.0);
        assert_eq!(input.breakpoints(0.0, 1.0), vec![0.5]);
        assert!(input.breakpoints(0.5, 1.0).is_empty());
    }

    #[test]
    fn storage_family_reports_missing_mode() {
        let fam = StorageFamily::common(1, |x| x.norm_squared(), |x| 2.0 * x, 0.0);
        let x = DVector::zeros(2);
        assert!(matches!(
            fam.value(ModeIndex(2), &x),
            Err(ModelError::IncompleteFamily { mode: 2, .. })
        ));
    }
}
