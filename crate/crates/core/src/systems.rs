//! System library: the hybrid integrator-gain system (HIGS) and the
//! nonlinear mass-spring-damper plant, each with its storage function.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::model::{
    InputSample, ModeIndex, ModelError, StorageFamily, SwitchedSystemModel, SwitchingLaw,
};

/// Relative tolerance on the gain-line equality `u = k_h e` used by the mode guard.
pub const GUARD_TOLERANCE: f64 = 1e-9;

/// Relative tolerance on `|x_h - k_h e|` before gain-mode dynamics refuse to run.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HigsParams {
    /// Integrator frequency `ω_h` in rad/s, `ω_h >= 0`.
    pub omega_h: f64,
    /// Gain value `k_h > 0`. Also the upper slope of the sector `[0, k_h]`.
    pub k_h: f64,
}

impl HigsParams {
    pub fn new(omega_h: f64, k_h: f64) -> Result<Self, ModelError> {
        if !(omega_h >= 0.0) || !omega_h.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "omega_h must be finite and >= 0, got {omega_h}"
            )));
        }
        if !(k_h > 0.0) || !k_h.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "k_h must be finite and > 0, got {k_h}"
            )));
        }
        Ok(Self { omega_h, k_h })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HigsMode {
    Integrator,
    Gain,
}

impl HigsMode {
    pub const fn index(self) -> ModeIndex {
        match self {
            Self::Integrator => ModeIndex::new_unchecked(1),
            Self::Gain => ModeIndex::new_unchecked(2),
        }
    }

    pub fn from_index(mode: ModeIndex) -> Result<Self, ModelError> {
        match mode.get() {
            1 => Ok(Self::Integrator),
            2 => Ok(Self::Gain),
            other => Err(ModelError::InvalidMode {
                mode: other,
                count: 2,
            }),
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::Integrator => "integrator",
            Self::Gain => "gain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HigsState {
    pub x_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub x1: f64,
    pub x2: f64,
}

/// Membership in the sector `e u >= u^2 / k_h`.
pub fn in_sector(e: f64, u: f64, k_h: f64, tol: f64) -> bool {
    e * u >= u * u / k_h - tol
}

/// Active HIGS mode for input `e`, output `u = x_h` and input rate `ė`.
///
/// Gain is selected when `(e, u)` lies on the gain line `u = k_h e` and the
/// integrator flow would leave the sector (`ω_h e² > k_h e ė`). States that a
/// finite step pushed past the gain line are classified as if they sat on it.
/// Everything else, including the marginal case `ω_h e² = k_h e ė`, runs in
/// integrator mode.
pub fn higs_mode_select(e: f64, u: f64, edot: f64, params: &HigsParams) -> HigsMode {
    higs_mode_select_with(e, u, edot, params, GUARD_TOLERANCE)
}

pub fn higs_mode_select_with(
    e: f64,
    u: f64,
    edot: f64,
    params: &HigsParams,
    guard_tol: f64,
) -> HigsMode {
    let gap = u - params.k_h * e;
    let on_line = gap.abs() <= guard_tol * u.abs().max(1.0);
    let past_line = e * gap > 0.0;
    let leaving = params.omega_h * e * e > params.k_h * e * edot;
    if (on_line || past_line) && leaving {
        HigsMode::Gain
    } else {
        HigsMode::Integrator
    }
}

/// Returns `(ẋ_h, output)`. Gain mode propagates the time derivative of
/// `x_h = k_h e`.
pub fn higs_dynamics(
    state: HigsState,
    e: f64,
    edot: f64,
    mode: HigsMode,
    params: &HigsParams,
) -> Result<(f64, f64), ModelError> {
    let rate = match mode {
        HigsMode::Integrator => params.omega_h * e,
        HigsMode::Gain => {
            let drift = (state.x_h - params.k_h * e).abs();
            let limit = CONSISTENCY_TOLERANCE * state.x_h.abs().max(1.0);
            if drift > limit {
                return Err(ModelError::ConstraintDrift {
                    t: f64::NAN,
                    drift,
                    limit,
                });
            }
            params.k_h * edot
        }
    };
    Ok((rate, state.x_h))
}

/// Common storage `x_h² / (2 k_h)` for both HIGS modes.
pub fn higs_storage(state: HigsState, params: &HigsParams) -> f64 {
    state.x_h * state.x_h / (2.0 * params.k_h)
}

fn higs_base(params: HigsParams, law: SwitchingLaw, name: &str) -> SwitchedSystemModel {
    let HigsParams { omega_h, k_h } = params;
    let integrator = Arc::new(move |_x: &DVector<f64>, u: &InputSample| {
        DVector::from_element(1, omega_h * u.value[0])
    });
    let gain = Arc::new(move |_x: &DVector<f64>, u: &InputSample| {
        DVector::from_element(1, k_h * u.derivative[0])
    });
    SwitchedSystemModel {
        name: name.into(),
        state_dim: 1,
        input_dim: 1,
        modes: vec![integrator, gain],
        mode_names: vec![HigsMode::Integrator.name().into(), HigsMode::Gain.name().into()],
        output_map: Arc::new(|x: &DVector<f64>| DVector::from_element(1, x[0])),
        output_jacobian: Arc::new(|_x: &DVector<f64>| DMatrix::from_element(1, 1, 1.0)),
        needs_input_derivative: true,
        direct_feedthrough: true,
        switching_law: law,
        projection: Some(Arc::new(move |mode, _x, u| {
            (mode == HigsMode::Gain.index()).then(|| DVector::from_element(1, k_h * u.value[0]))
        })),
    }
}

/// HIGS as a switched system: state `x_h`, input `e` (with `ė`), output `x_h`.
pub fn higs_model(params: HigsParams) -> SwitchedSystemModel {
    let law = SwitchingLaw::StateGuard(Arc::new(move |_current, x, u| {
        higs_mode_select(u.value[0], x[0], u.derivative[0], &params).index()
    }));
    higs_base(params, law, "higs")
}

/// HIGS pinned to one mode, ignoring the sector guard.
pub fn higs_locked(params: HigsParams, mode: HigsMode) -> SwitchedSystemModel {
    higs_base(params, SwitchingLaw::SingleMode(mode.index()), "higs-locked")
}

/// HIGS storage family, certified NI (`ε = 0`).
pub fn higs_storage_family(params: HigsParams) -> StorageFamily {
    let k_h = params.k_h;
    StorageFamily::common(
        2,
        move |x| x[0] * x[0] / (2.0 * k_h),
        move |x| DVector::from_element(1, x[0] / k_h),
        0.0,
    )
}

/// Coefficients of `ẍ₁ = -c x₁³ - k x₁ - d ẋ₁ + u`. The default is the
/// unit-coefficient plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    pub cubic: f64,
    pub linear: f64,
    pub damping: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            cubic: 1.0,
            linear: 1.0,
            damping: 1.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = [self.cubic, self.linear, self.damping]
            .iter()
            .all(|c| c.is_finite() && *c >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidParameter(format!(
                "plant coefficients must be finite and >= 0, got {self:?}"
            )))
        }
    }

    /// The same plant with the damper removed.
    pub fn undamped() -> Self {
        Self {
            damping: 0.0,
            ..Self::default()
        }
    }
}

/// Returns `(ẋ₁, ẋ₂, y)` for the unit-coefficient plant.
pub fn plant_dynamics(state: PlantState, u: f64) -> (f64, f64, f64) {
    plant_dynamics_with(state, u, &PlantParams::default())
}

pub fn plant_dynamics_with(state: PlantState, u: f64, p: &PlantParams) -> (f64, f64, f64) {
    let PlantState { x1, x2 } = state;
    let x2_dot = -p.cubic * x1 * x1 * x1 - p.linear * x1 - p.damping * x2 + u;
    (x2, x2_dot, x1)
}

/// `¼x₁⁴ + ½x₁² + ½x₂²`.
pub fn plant_storage(state: PlantState) -> f64 {
    plant_storage_with(state, &PlantParams::default())
}

pub fn plant_storage_with(state: PlantState, p: &PlantParams) -> f64 {
    let PlantState { x1, x2 } = state;
    0.25 * p.cubic * x1.powi(4) + 0.5 * p.linear * x1 * x1 + 0.5 * x2 * x2
}

pub fn plant_model(params: PlantParams) -> SwitchedSystemModel {
    SwitchedSystemModel::single_mode(
        "plant",
        2,
        1,
        move |x, u| {
            let (d1, d2, _) = plant_dynamics_with(PlantState { x1: x[0], x2: x[1] }, u.value[0], &params);
            DVector::from_vec(vec![d1, d2])
        },
        |x| DVector::from_element(1, x[0]),
        |_| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
}

/// Plant storage with output strictness equal to the damping coefficient.
pub fn plant_storage_family(params: PlantParams) -> StorageFamily {
    StorageFamily::common(
        1,
        move |x| plant_storage_with(PlantState { x1: x[0], x2: x[1] }, &params),
        move |x| {
            DVector::from_vec(vec![
                params.cubic * x[0].powi(3) + params.linear * x[0],
                x[1],
            ])
        },
        params.damping,
    )
}
