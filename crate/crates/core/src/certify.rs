//! Numerical certificates: dissipation inequalities along trajectories,
//! storage monotonicity at switches, positive definiteness over grids,
//! the steady-state (DC) condition on cascades, observability-style
//! assumptions and Lyapunov decrease.
//!
//! Every residual follows one sign convention: larger is better, and a
//! check fails when its worst residual drops below the report's
//! `threshold`. Checks quantified over all states are grid falsifications
//! and can at best return [`Verdict::NotFalsified`].

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interconnect::FeedbackLoop;
use crate::model::{
    InputSample, InputSignal, ModeIndex, ModelError, StorageFamily, SwitchedSystemModel,
    Trajectory,
};
use crate::sim::{simulate, SimConfig, SimError};
use crate::systems::PlantParams;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_SETTLE_WINDOW: f64 = 0.5;
pub const DEFAULT_DECAY_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotFalsified,
    Inconclusive,
}

impl Verdict {
    /// Pass and not-falsified both count as success for exit codes.
    pub fn is_success(self) -> bool {
        matches!(self, Self::Pass | Self::NotFalsified)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::NotFalsified => "not-falsified",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstPoint {
    pub t: Option<f64>,
    pub x: Vec<f64>,
}

impl WorstPoint {
    fn at_time(t: f64, x: &DVector<f64>) -> Self {
        Self {
            t: Some(t),
            x: x.as_slice().to_vec(),
        }
    }

    fn at_state(x: &[f64]) -> Self {
        Self {
            t: None,
            x: x.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub check_name: String,
    pub samples_evaluated: usize,
    pub worst_residual: f64,
    pub worst_point: Option<WorstPoint>,
    pub verdict: Verdict,
    pub tolerance: f64,
    pub threshold: f64,
    /// Violating grid point closest to the origin, for region scans. Ties go
    /// to the later grid point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WorstPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.verdict.is_success()
    }
}

/// Running minimum of residuals with the point that attained it. Ties keep
/// the earliest point.
#[derive(Debug, Clone)]
struct Worst {
    value: f64,
    point: Option<WorstPoint>,
    count: usize,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::INFINITY,
            point: None,
            count: 0,
        }
    }

    fn offer(&mut self, value: f64, point: impl FnOnce() -> WorstPoint) {
        self.count += 1;
        // normalizes -0.0
        let value = value + 0.0;
        if value < self.value || (value.is_nan() && !self.value.is_nan()) {
            self.value = value;
            self.point = Some(point());
        }
    }

    fn report(self, name: &str, tol: f64, threshold: f64, success: Verdict) -> CertificateReport {
        let worst_residual = if self.value.is_finite() || self.value.is_nan() {
            self.value
        } else {
            0.0
        };
        let failed = worst_residual.is_nan() || worst_residual < threshold;
        CertificateReport {
            check_name: name.into(),
            samples_evaluated: self.count,
            worst_residual,
            worst_point: self.point,
            verdict: if failed { Verdict::Fail } else { success },
            tolerance: tol,
            threshold,
            witness: None,
            notes: Vec::new(),
        }
    }
}

/// Dissipation residual `uᵀẏ - ε‖ẏ‖² - ∇V_i(x)·f_i(x, u)` at one point.
pub fn ni_residual(
    model: &SwitchedSystemModel,
    storage: &StorageFamily,
    eps: f64,
    mode: ModeIndex,
    x: &DVector<f64>,
    input: &InputSample,
) -> Result<f64, ModelError> {
    let dx = model.field(mode, x, input)?;
    let ydot = model.jacobian(x) * &dx;
    let grad = storage.gradient(mode, x)?;
    Ok(input.value.dot(&ydot) - eps * ydot.norm_squared() - grad.dot(&dx))
}

/// Checks the (output-strict when `eps > 0`) NI inequality at every sample.
/// A single-mode model reduces this to the unswitched definition.
pub fn check_ni_dissipation(
    model: &SwitchedSystemModel,
    traj: &Trajectory,
    storage: &StorageFamily,
    eps: f64,
    tol: f64,
) -> Result<CertificateReport, CertifyError> {
    let mut worst = Worst::new();
    for s in &traj.samples {
        let dx = model.field(s.mode, &s.x, &s.input)?;
        let grad = storage.gradient(s.mode, &s.x)?;
        let r = s.input.value.dot(&s.ydot) - eps * s.ydot.norm_squared() - grad.dot(&dx);
        worst.offer(r, || WorstPoint::at_time(s.t, &s.x));
    }
    let name = if eps > 0.0 {
        format!("osni-dissipation[{}, eps={eps}]", model.name)
    } else {
        format!("ni-dissipation[{}]", model.name)
    };
    Ok(worst.report(&name, tol, -tol, Verdict::Pass))
}

/// Sector membership `e·x_h >= x_h²/k_h` along a HIGS trajectory.
pub fn check_higs_sector(traj: &Trajectory, k_h: f64, tol: f64) -> CertificateReport {
    let mut worst = Worst::new();
    for s in &traj.samples {
        let (e, xh) = (s.input.value[0], s.x[0]);
        worst.offer(e * xh - xh * xh / k_h, || WorstPoint::at_time(s.t, &s.x));
    }
    worst.report("higs-sector", tol, -tol, Verdict::Pass)
}

/// Grid over a box, optionally excluding a ball around the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub exclusion_radius: Option<f64>,
}

impl RegionSpec {
    pub fn cube(dim: usize, half_width: f64, count: usize) -> Self {
        Self {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
            counts: vec![count; dim],
            exclusion_radius: None,
        }
    }

    pub fn with_exclusion(mut self, radius: f64) -> Self {
        self.exclusion_radius = Some(radius);
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), CertifyError> {
        let d = self.lower.len();
        if d == 0 || self.upper.len() != d || self.counts.len() != d {
            return Err(CertifyError::InvalidRegion(
                "lower, upper and counts must have the same nonzero length".into(),
            ));
        }
        for k in 0..d {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
                return Err(CertifyError::InvalidRegion(format!(
                    "coordinate {k}: bounds [{lo}, {hi}] must be finite with upper > lower"
                )));
            }
            if self.counts[k] < 2 {
                return Err(CertifyError::InvalidRegion(format!(
                    "coordinate {k}: grid count must be at least 2"
                )));
            }
        }
        if let Some(r) = self.exclusion_radius {
            if !(r >= 0.0) {
                return Err(CertifyError::InvalidRegion(
                    "exclusion radius must be nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn point_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// Grid point for a flat index, first coordinate varying slowest.
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let d = self.dim();
        let mut p = vec![0.0; d];
        for k in (0..d).rev() {
            let n = self.counts[k];
            let i = index % n;
            index /= n;
            let frac = i as f64 / (n - 1) as f64;
            p[k] = if i == n - 1 {
                self.upper[k]
            } else {
                self.lower[k] + (self.upper[k] - self.lower[k]) * frac
            };
        }
        p
    }

    fn excluded(&self, p: &[f64]) -> bool {
        let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self.exclusion_radius {
            Some(r) if r > 0.0 => norm <= r,
            _ => norm == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct GridMin {
    value: f64,
    index: usize,
    /// smallest-norm violating point: (norm, index)
    nearest_violation: Option<(f64, usize)>,
    count: usize,
}

impl GridMin {
    fn identity() -> Self {
        Self {
            value: f64::INFINITY,
            index: usize::MAX,
            nearest_violation: None,
            count: 0,
        }
    }

    fn merge(a: Self, b: Self) -> Self {
        let (value, index) = if b.value < a.value || (b.value == a.value && b.index < a.index) {
            (b.value, b.index)
        } else {
            (a.value, a.index)
        };
        let nearest_violation = match (a.nearest_violation, b.nearest_violation) {
            (Some(x), Some(y)) => Some(if y.0 < x.0 || (y.0 == x.0 && y.1 > x.1) { y } else { x }),
            (x, None) => x,
            (None, y) => y,
        };
        Self {
            value,
            index,
            nearest_violation,
            count: a.count + b.count,
        }
    }
}

/// Minimum of `residual` over the region's grid (excluded points skipped),
/// plus the violating point (`residual < threshold`) nearest the origin.
/// Deterministic regardless of thread scheduling.
fn grid_scan<F>(region: &RegionSpec, threshold: f64, residual: F) -> GridMin
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..region.point_count())
        .into_par_iter()
        .fold(GridMin::identity, |mut acc, idx| {
            let p = region.point(idx);
            if region.excluded(&p) {
                return acc;
            }
            let r = residual(&p);
            acc.count += 1;
            let r_key = if r.is_nan() { f64::NEG_INFINITY } else { r };
            if r_key < acc.value || (r_key == acc.value && idx < acc.index) {
                acc.value = r_key;
                acc.index = idx;
            }
            if r_key < threshold {
                let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let better = acc
                    .nearest_violation
                    .is_none_or(|(n, i)| norm < n || (norm == n && idx > i));
                if better {
                    acc.nearest_violation = Some((norm, idx));
                }
            }
            acc
        })
        .reduce(GridMin::identity, GridMin::merge)
}

/// Falsification scan for strict positivity of `w` on a box: passes
/// (not-falsified) iff `min w > tol` outside the exclusion ball and
/// `|w(0)| <= tol`.
pub fn check_positive_definite<F>(
    w: F,
    region: &RegionSpec,
    tol: f64,
) -> Result<CertificateReport, CertifyError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    region.validate()?;
    let scan = grid_scan(region, tol, &w);
    let origin = vec![0.0; region.dim()];
    let w0 = w(&origin);
    let mut report = CertificateReport {
        check_name: "positive-definite".into(),
        samples_evaluated: scan.count + 1,
        worst_residual: if scan.index == usize::MAX { 0.0 } else { scan.value },
        worst_point: (scan.index != usize::MAX).then(|| WorstPoint::at_state(&region.point(scan.index))),
        verdict: Verdict::NotFalsified,
        tolerance: tol,
        threshold: tol,
        witness: scan
            .nearest_violation
            .map(|(_, idx)| WorstPoint::at_state(&region.point(idx))),
        notes: vec![format!("value at origin: {w0}")],
    };
    if scan.index != usize::MAX && report.worst_residual < tol {
        report.verdict = Verdict::Fail;
    }
    if !(w0.abs() <= tol) {
        report.verdict = Verdict::Fail;
        let r = -w0.abs();
        if r < report.worst_residual {
            report.worst_residual = r;
            report.worst_point = Some(WorstPoint::at_state(&origin));
        }
        report.notes.push("storage does not vanish at the origin".into());
    }
    Ok(report)
}

/// Nonnegativity scan (`w >= -tol`) for the hypothesis of the closed-loop
/// NI result. Never returns pass, only not-falsified or fail.
pub fn check_nonnegative<F>(
    w: F,
    region: &RegionSpec,
    tol: f64,
) -> Result<CertificateReport, CertifyError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    region.validate()?;
    let full = RegionSpec {
        exclusion_radius: Some(0.0),
        ..region.clone()
    };
    let scan = grid_scan(&full, -tol, &w);
    let mut worst = Worst::new();
    worst.count = scan.count.saturating_sub(1);
    worst.offer(scan.value, || WorstPoint::at_state(&full.point(scan.index)));
    let w0 = w(&vec![0.0; region.dim()]);
    worst.offer(w0, || WorstPoint::at_state(&vec![0.0; region.dim()]));
    let mut report = worst.report("nonnegative", tol, -tol, Verdict::NotFalsified);
    report.witness = scan
        .nearest_violation
        .map(|(_, idx)| WorstPoint::at_state(&full.point(idx)));
    Ok(report)
}

/// Storage must not increase at any switching instant. With a region, the
/// pairwise condition `V_next(x) <= V_prev(x)` is also scanned for every
/// observed mode pair, and the verdict becomes not-falsified.
pub fn check_switch_monotonicity(
    traj: &Trajectory,
    storage: &StorageFamily,
    region: Option<&RegionSpec>,
    tol: f64,
) -> Result<CertificateReport, CertifyError> {
    let mut worst = Worst::new();
    for ev in &traj.switch_events {
        let jump = storage.value(ev.to, &ev.x)? - storage.value(ev.from, &ev.x)?;
        worst.offer(-jump, || WorstPoint::at_time(ev.t, &ev.x));
    }
    let mut success = Verdict::Pass;
    let mut notes = Vec::new();
    if let Some(region) = region {
        region.validate()?;
        let mut pairs: Vec<(ModeIndex, ModeIndex)> =
            traj.switch_events.iter().map(|e| (e.from, e.to)).collect();
        pairs.sort();
        pairs.dedup();
        for (from, to) in pairs {
            storage.value(from, &DVector::zeros(region.dim()))?;
            storage.value(to, &DVector::zeros(region.dim()))?;
            let full = RegionSpec {
                exclusion_radius: Some(0.0),
                ..region.clone()
            };
            let scan = grid_scan(&full, -tol, |p| {
                let x = DVector::from_column_slice(p);
                storage.value(from, &x).unwrap_or(f64::NAN) - storage.value(to, &x).unwrap_or(f64::NAN)
            });
            worst.count += scan.count.saturating_sub(1);
            worst.offer(scan.value, || WorstPoint::at_state(&full.point(scan.index)));
            notes.push(format!("scanned mode pair {from}->{to}"));
        }
        success = Verdict::NotFalsified;
    }
    let mut report = worst.report("switch-monotonicity", tol, -tol, success);
    report.notes = notes;
    Ok(report)
}

/// Options for the Lyapunov decrease check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseOptions {
    pub tol: f64,
    pub decay_fraction: f64,
}

impl Default for DecreaseOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOLERANCE,
            decay_fraction: DEFAULT_DECAY_FRACTION,
        }
    }
}

/// `W` must be nonincreasing between samples (relative to `1 + |W|`), must
/// not jump up at switches, and must end below `decay_fraction * W(0)`.
pub fn check_lyapunov_decrease(
    traj: &Trajectory,
    w: &StorageFamily,
    opts: DecreaseOptions,
) -> Result<CertificateReport, CertifyError> {
    let mut worst = Worst::new();
    let mut notes = Vec::new();
    let Some(first) = traj.first() else {
        return Ok(worst.report("lyapunov-decrease", opts.tol, -opts.tol, Verdict::Pass));
    };
    let w0 = w.value(first.mode, &first.x)?;
    let mut prev_w = w0;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_jump = f64::NEG_INFINITY;
    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let flow_end = w.value(a.mode, &b.x)?;
        let increase = (flow_end - prev_w) / (1.0 + prev_w.abs());
        max_increase = max_increase.max(increase);
        worst.offer(-increase, || WorstPoint::at_time(b.t, &b.x));
        let w_b = w.value(b.mode, &b.x)?;
        if b.mode != a.mode {
            let jump = w_b - flow_end;
            max_jump = max_jump.max(jump);
            worst.offer(-jump, || WorstPoint::at_time(b.t, &b.x));
        }
        prev_w = w_b;
    }
    let last = traj.last().expect("nonempty");
    let terminal = opts.decay_fraction * w0 - prev_w;
    worst.offer(terminal, || WorstPoint::at_time(last.t, &last.x));
    notes.push(format!("W(0) = {w0}"));
    notes.push(format!("W(end) = {prev_w}"));
    notes.push(format!("decay fraction = {}", opts.decay_fraction));
    if max_increase.is_finite() {
        notes.push(format!("max relative inter-sample increase = {max_increase}"));
    }
    if max_jump.is_finite() {
        notes.push(format!("max switch jump = {max_jump}"));
    }
    let mut report = worst.report("lyapunov-decrease", opts.tol, -opts.tol, Verdict::Pass);
    report.notes = notes;
    Ok(report)
}

/// Falsification of the observability (I) and input-relevance (II)
/// assumptions over sliding windows of an ensemble of trajectories.
pub fn check_assumptions_i_ii(
    model: &SwitchedSystemModel,
    ensemble: &[Trajectory],
    window: f64,
    tol: f64,
) -> Result<CertificateReport, CertifyError> {
    let sqrt_tol = tol.sqrt();
    let mut worst = Worst::new();
    let mut windows = 0usize;
    let mut notes = Vec::new();
    for (k, traj) in ensemble.iter().enumerate() {
        let n = traj.len();
        if n < 2 {
            continue;
        }
        let rates: Vec<DVector<f64>> = traj
            .samples
            .iter()
            .map(|s| model.field(s.mode, &s.x, &s.input))
            .collect::<Result<_, _>>()?;
        let inf = |v: &DVector<f64>| v.amax();
        let mut start = 0usize;
        let mut end = 0usize;
        while start < n {
            while end + 1 < n && traj.samples[end].t - traj.samples[start].t < window {
                end += 1;
            }
            if traj.samples[end].t - traj.samples[start].t < window && start > 0 {
                break;
            }
            let span = start..=end;
            let ydot = span.clone().map(|i| inf(&traj.samples[i].ydot)).fold(0.0, f64::max);
            let xdot = span.clone().map(|i| inf(&rates[i])).fold(0.0, f64::max);
            let y = span.clone().map(|i| inf(&traj.samples[i].y)).fold(0.0, f64::max);
            let x = span.clone().map(|i| inf(&traj.samples[i].x)).fold(0.0, f64::max);
            let u0 = &traj.samples[start].input.value;
            let du = span
                .clone()
                .map(|i| inf(&(&traj.samples[i].input.value - u0)))
                .fold(0.0, f64::max);
            let u = span.clone().map(|i| inf(&traj.samples[i].input.value)).fold(0.0, f64::max);
            windows += 1;
            let t0 = traj.samples[start].t;
            let at = &traj.samples[start].x;
            let mut flag = |r: f64, what: &str| {
                if r < 0.0 {
                    notes.push(format!("trajectory {k}, window at t = {t0}: {what}"));
                }
                worst.offer(r, || WorstPoint::at_time(t0, at));
            };
            if ydot <= tol {
                flag(sqrt_tol - xdot, "I: output constant while state moves");
            }
            if y <= tol {
                flag(sqrt_tol - x, "I: output zero while state nonzero");
            }
            if xdot <= tol {
                flag(sqrt_tol - du, "II: state constant while input varies");
            }
            if x <= tol {
                flag(sqrt_tol - u, "II: state zero while input nonzero");
            }
            // half-overlapping windows
            let half_t = traj.samples[start].t + 0.5 * window;
            let next = traj.samples[start..].iter().position(|s| s.t >= half_t).map_or(n, |p| start + p.max(1));
            if end + 1 >= n && traj.samples[end].t - traj.samples[start].t < window {
                break;
            }
            start = next;
        }
    }
    notes.truncate(20);
    let mut report = worst.report("assumptions-i-ii", tol, 0.0, Verdict::NotFalsified);
    report.samples_evaluated = windows;
    report.notes = notes;
    Ok(report)
}

/// Settling criterion for steady-state detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleOptions {
    pub config: SimConfig,
    /// `‖ẋ‖∞` must stay below this over the trailing window.
    pub rate_tol: f64,
    pub window: f64,
    /// Required gap `|ū - ȳ|`.
    pub gap_tol: f64,
}

impl Default for SettleOptions {
    fn default() -> Self {
        Self {
            config: SimConfig {
                t_end: 80.0,
                step: 1e-2,
                event_tolerance: 1e-11,
                ..SimConfig::default()
            },
            rate_tol: DEFAULT_TOLERANCE,
            window: DEFAULT_SETTLE_WINDOW,
            gap_tol: DEFAULT_TOLERANCE,
        }
    }
}

/// Steady state reached by a cascade under one constant input.
#[derive(Debug, Clone, PartialEq)]
pub struct SettledPoint {
    pub input: f64,
    pub state: Option<DVector<f64>>,
    pub output: Option<f64>,
}

/// Simulates the cascade from `x0` under constant `input` and returns its
/// steady state, or `None` fields if it never settles.
pub fn settle_cascade(
    cascade: &SwitchedSystemModel,
    x0: &DVector<f64>,
    input: f64,
    opts: &SettleOptions,
) -> Result<SettledPoint, CertifyError> {
    let signal = crate::model::ConstantInput(DVector::from_element(cascade.input_dim, input));
    let traj = simulate(cascade, x0, &signal, &opts.config)?;
    let last = traj.last().expect("simulation records at least one sample");
    let t_from = last.t - opts.window;
    let mut settled = true;
    for s in traj.samples.iter().filter(|s| s.t >= t_from) {
        let rate = cascade.field(s.mode, &s.x, &s.input)?;
        if rate.amax() >= opts.rate_tol {
            settled = false;
            break;
        }
    }
    Ok(if settled {
        SettledPoint {
            input,
            output: Some(last.y[0]),
            state: Some(last.x.clone()),
        }
    } else {
        SettledPoint {
            input,
            state: None,
            output: None,
        }
    })
}

/// Simulation-based steady-state condition: for every nonzero constant
/// input `ū`, a settled cascade output must differ from `ū` by more than
/// `gap_tol`. Unsettled runs make the verdict inconclusive, never fail.
pub fn check_assumption_iii(
    cascade: &SwitchedSystemModel,
    x0: &DVector<f64>,
    inputs: &[f64],
    opts: &SettleOptions,
) -> Result<CertificateReport, CertifyError> {
    let mut worst = Worst::new();
    let mut notes = Vec::new();
    let mut unsettled = false;
    for &u in inputs.iter().filter(|u| **u != 0.0) {
        let point = settle_cascade(cascade, x0, u, opts)?;
        match (point.output, point.state) {
            (Some(y), Some(x)) => {
                let gap = (u - y).abs();
                notes.push(format!("u = {u}: settled output {y}, gap {gap}"));
                worst.offer(gap, || WorstPoint::at_state(x.as_slice()));
            }
            _ => {
                unsettled = true;
                notes.push(format!("u = {u}: did not settle within {} s", opts.config.t_end));
            }
        }
    }
    let mut report = worst.report("assumption-iii", opts.gap_tol, opts.gap_tol, Verdict::Pass);
    if unsettled && report.verdict != Verdict::Fail {
        report.verdict = Verdict::Inconclusive;
    }
    report.notes = notes;
    Ok(report)
}

/// Nonzero real solutions of `c x³ + k x = k_h x` (steady states of the
/// plant/HIGS cascade in gain mode with `ū = k_h x̄₁`).
pub fn plant_higs_dc_roots(plant: &PlantParams, k_h: f64) -> Vec<f64> {
    if plant.cubic == 0.0 {
        return Vec::new();
    }
    let sq = (k_h - plant.linear) / plant.cubic;
    if sq > 0.0 {
        let r = sq.sqrt();
        vec![-r, r]
    } else {
        Vec::new()
    }
}

/// Closed-form steady-state condition for the plant/HIGS cascade: fails with
/// the positive root as witness when nonzero roots exist.
pub fn check_plant_higs_dc(plant: &PlantParams, k_h: f64) -> CertificateReport {
    let roots = plant_higs_dc_roots(plant, k_h);
    let mut report = CertificateReport {
        check_name: format!("plant-higs-dc[k_h={k_h}]"),
        samples_evaluated: 1,
        worst_residual: 0.0,
        worst_point: None,
        verdict: Verdict::Pass,
        tolerance: 0.0,
        threshold: 0.0,
        witness: None,
        notes: Vec::new(),
    };
    if let Some(&r) = roots.iter().find(|r| **r > 0.0) {
        report.verdict = Verdict::Fail;
        report.worst_residual = -r;
        report.worst_point = Some(WorstPoint::at_state(&[r]));
        report.notes.push(format!("nonzero roots: {roots:?}"));
    } else {
        report.notes.push("only the zero root".into());
    }
    report
}

/// Damped Newton from each seed. A seed counts when it ends with
/// `|g| <= tol`; roots closer than `√tol` are merged, since multiple roots
/// only converge to about that accuracy.
pub fn newton_root_scan<G, D>(g: G, dg: D, seeds: &[f64], tol: f64) -> Vec<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut roots: Vec<f64> = Vec::new();
    for &seed in seeds {
        let mut x = seed;
        for _ in 0..500 {
            let gx = g(x);
            let d = dg(x);
            if gx == 0.0 || d == 0.0 || !d.is_finite() {
                break;
            }
            let full = gx / d;
            let mut lambda = 1.0;
            while lambda > 1e-6 && g(x - lambda * full).abs() >= gx.abs() {
                lambda *= 0.5;
            }
            x -= lambda * full;
            if (lambda * full).abs() <= 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        if g(x).abs() <= tol && !roots.iter().any(|r| (r - x).abs() <= tol.sqrt()) {
            roots.push(x);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Bundle of per-subsystem and closed-loop checks for a feedback run.
pub fn certify_feedback_run(
    fl: &FeedbackLoop,
    traj: &Trajectory,
    tol: f64,
) -> Result<Vec<CertificateReport>, CertifyError> {
    let (t1, t2) = fl.split_trajectory(traj);
    let w = fl.storage.as_family();
    let mut m1 = check_switch_monotonicity(&t1, &fl.h1.storage, None, tol)?;
    m1.check_name = format!("{}[{}]", m1.check_name, fl.h1.model.name);
    let mut m2 = check_switch_monotonicity(&t2, &fl.h2.storage, None, tol)?;
    m2.check_name = format!("{}[{}]", m2.check_name, fl.h2.model.name);
    Ok(vec![
        check_ni_dissipation(&fl.h1.model, &t1, &fl.h1.storage, fl.h1.storage.epsilon, tol)?,
        check_ni_dissipation(&fl.h2.model, &t2, &fl.h2.storage, fl.h2.storage.epsilon, tol)?,
        m1,
        m2,
        check_ni_dissipation(&fl.model, traj, &w, w.epsilon, tol)?,
    ])
}

/// Signal wrapper that tests can use to feed a recorded trajectory's inputs.
pub struct SampledInput<'a>(pub &'a Trajectory);

impl InputSignal for SampledInput<'_> {
    fn dim(&self) -> usize {
        self.0.first().map_or(0, |s| s.input.dim())
    }

    fn sample(&self, t: f64) -> InputSample {
        let samples = &self.0.samples;
        let idx = samples.partition_point(|s| s.t <= t).saturating_sub(1);
        samples[idx].input.clone()
    }
}
