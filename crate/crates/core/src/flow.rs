//! The balanced flow `d phi/dt = i ddbar *(rho ∧ *phi) + (n-1) Delta_BC phi`
//! on invariant (n-1,n-1)-forms, its RK4 integrator and the Iwasawa reference
//! formulas.

use crate::algebra::{InvariantForm, LieAlgebraModel};
use crate::chern;
use crate::error::{Error, Result};
use crate::hermitian::{self, BalancedStructure, InvariantMetric};
use crate::laplacians::Laplacians;
use crate::linalg::{self, CMatrix, I};

/// Right-hand side evaluator holding the operator cache of one flow instance.
#[derive(Debug)]
pub struct FlowEngine {
    model: LieAlgebraModel,
    lap: Laplacians,
}

impl FlowEngine {
    pub fn new(model: &LieAlgebraModel) -> Self {
        let n = model.n();
        Self {
            model: model.clone(),
            lap: Laplacians::new(model, &InvariantMetric::identity(n)),
        }
    }

    pub fn model(&self) -> &LieAlgebraModel {
        &self.model
    }

    pub fn laplacians(&self) -> &Laplacians {
        &self.lap
    }

    /// Points the operator cache at `metric`, clearing it if the metric changed.
    pub fn use_metric(&mut self, metric: &InvariantMetric) {
        if self.lap.metric().matrix() != metric.matrix() {
            self.lap.set_metric(metric);
        }
    }

    /// `i ddbar *(rho ∧ *phi)`.
    pub fn ricci_term(&self, phi: &InvariantForm, metric: &InvariantMetric) -> InvariantForm {
        let n = self.model.n();
        let rho = chern::chern_ricci(&self.model, metric);
        if rho.coeff_norm() == 0.0 {
            return InvariantForm::zero(n, n - 1, n - 1);
        }
        let star_phi = metric.hodge_star(phi);
        let inner = metric.hodge_star(&rho.wedge(&star_phi).expect("(2,2) fits for n >= 2"));
        self.model.ddbar(&inner).scale(I)
    }

    /// Flow velocity at `phi`; fails if `phi` is not positive.
    pub fn rhs(&mut self, phi: &InvariantForm) -> Result<InvariantForm> {
        let metric = hermitian::metric_from_phi(phi)?;
        Ok(self.rhs_with_metric(phi, &metric))
    }

    pub fn rhs_with_metric(&mut self, phi: &InvariantForm, metric: &InvariantMetric) -> InvariantForm {
        self.use_metric(metric);
        let n = self.model.n();
        let ricci_term = self.ricci_term(phi, metric);
        let bc = self.lap.apply_delta_bc(phi).scale_re(n as f64 - 1.0);
        (&ricci_term + &bc).real_part()
    }
}

/// Flow velocity of a balanced structure.
pub fn flow_rhs(model: &LieAlgebraModel, phi: &BalancedStructure) -> InvariantForm {
    FlowEngine::new(model).rhs_with_metric(phi.phi(), phi.metric())
}

/// Metric velocity induced by `phi_dot`, from differentiating
/// `g = (det Phi)^{1/(n-1)} Phi^{-1}`.
pub fn metric_velocity(phi: &InvariantForm, phi_dot: &InvariantForm) -> Result<CMatrix> {
    let n = phi.n() as f64;
    let big = linalg::hermitian_part(&hermitian::phi_matrix(phi));
    let dot = hermitian::phi_matrix(phi_dot);
    let inv = linalg::inverse(&big)?;
    let scale = big.determinant().re.powf(1.0 / (n - 1.0));
    let g = inv.scale(scale);
    let tr = (&inv * &dot).trace();
    Ok(g * (tr / (n - 1.0)) - (&inv * dot * &inv).scale(scale))
}

/// The printed reduced system for diagonal Iwasawa metrics:
/// `(-g3^2/(g1 g2^2), -g3^2/(g1^2 g2), g3^3/(g1^2 g2^2))`.
pub fn iwasawa_reduced_rhs(g1: f64, g2: f64, g3: f64) -> Result<[f64; 3]> {
    if !(g1 > 0.0 && g2 > 0.0 && g3 > 0.0) {
        return Err(Error::NotPositive {
            eigenvalue: g1.min(g2).min(g3),
        });
    }
    Ok([
        -g3 * g3 / (g1 * g2 * g2),
        -g3 * g3 / (g1 * g1 * g2),
        g3 * g3 * g3 / (g1 * g1 * g2 * g2),
    ])
}

/// Printed closed form `g1 = g2 = (1-6t)^{1/6}`, `g3 = (1-6t)^{-1/6}`, for `t < 1/6`.
pub fn iwasawa_exact_diag(t: f64) -> Result<[f64; 3]> {
    let base = 1.0 - 6.0 * t;
    if base <= 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("closed form defined for t < 1/6, got {t}")));
    }
    let s = base.powf(1.0 / 6.0);
    Ok([s, s, 1.0 / s])
}

pub fn iwasawa_exact(t: f64) -> Result<InvariantMetric> {
    InvariantMetric::diagonal(&iwasawa_exact_diag(t)?)
}

/// Solution of [`flow_rhs`] from the identity on Iwasawa:
/// `g1 = g2 = (1+6t)^{1/6}`, `g3 = (1+6t)^{-1/6}`, i.e. the closed form at `-t`.
pub fn iwasawa_flow_solution_diag(t: f64) -> Result<[f64; 3]> {
    iwasawa_exact_diag(-t)
}

/// Monitors recorded at every snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitors {
    /// `|d phi|` (coefficient norm).
    pub closedness: f64,
    /// Smallest eigenvalue of `Phi`.
    pub positivity_margin: f64,
    /// Norm of the part of `phi - phi0` orthogonal to `Im ddbar`.
    pub class_drift: f64,
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub phi: InvariantForm,
    pub metric: InvariantMetric,
    pub monitors: Monitors,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    ReachedEnd,
    /// Positivity is lost in `(last_safe, unsafe)`, an interval of width at most the bracket tolerance.
    PositivityLost { last_safe: f64, unsafe_time: f64 },
    StepUnderflow { t: f64, dt: f64 },
}

impl Termination {
    pub fn reason(&self) -> &'static str {
        match self {
            Termination::ReachedEnd => "reached t_end",
            Termination::PositivityLost { .. } => "positivity lost",
            Termination::StepUnderflow { .. } => "step underflow",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<FlowState>,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        self.snapshots.last().expect("trajectory holds the initial datum")
    }

    /// Last time at which the state is known to be positive.
    pub fn terminal_time(&self) -> f64 {
        match self.termination {
            Termination::PositivityLost { last_safe, .. } => last_safe,
            _ => self.last().t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OutputSchedule {
    EveryStep,
    /// Output times, monotone in the integration direction; steps are clipped to hit them.
    Times(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct FlowControl {
    /// Relative local error tolerance of the step-doubling estimate.
    pub tol: f64,
    /// Initial step (adaptive) or the step (fixed).
    pub dt: f64,
    pub fixed_step: bool,
    pub min_dt: f64,
    pub positivity_floor: f64,
    pub bracket_width: f64,
    pub max_steps: usize,
    pub output: OutputSchedule,
    pub monitor_class_drift: bool,
}

impl Default for FlowControl {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            dt: 1e-3,
            fixed_step: false,
            min_dt: 1e-12,
            positivity_floor: 1e-10,
            bracket_width: 1e-3,
            max_steps: 1_000_000,
            output: OutputSchedule::EveryStep,
            monitor_class_drift: true,
        }
    }
}

impl FlowControl {
    pub fn fixed(dt: f64) -> Self {
        Self {
            dt,
            fixed_step: true,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.tol, self.dt, self.min_dt, self.positivity_floor, self.bracket_width];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("flow tolerances and steps must be positive".into()));
        }
        Ok(())
    }
}

struct Integrator<'a> {
    engine: FlowEngine,
    phi0: InvariantForm,
    control: &'a FlowControl,
}

enum StepOutcome {
    Ok(InvariantForm),
    NotPositive,
}

impl Integrator<'_> {
    fn eval(&mut self, phi: &InvariantForm) -> Option<InvariantForm> {
        self.engine.rhs(phi).ok()
    }

    fn rk4(&mut self, y: &InvariantForm, h: f64) -> StepOutcome {
        let Some(k1) = self.eval(y) else { return StepOutcome::NotPositive };
        let Some(k2) = self.eval(&(y + &k1.scale_re(h / 2.0))) else { return StepOutcome::NotPositive };
        let Some(k3) = self.eval(&(y + &k2.scale_re(h / 2.0))) else { return StepOutcome::NotPositive };
        let Some(k4) = self.eval(&(y + &k3.scale_re(h))) else { return StepOutcome::NotPositive };
        let incr = &(&k1 + &k2.scale_re(2.0)) + &(&k3.scale_re(2.0) + &k4);
        let next = y + &incr.scale_re(h / 6.0);
        if hermitian::phi_positivity(&next) <= self.control.positivity_floor {
            return StepOutcome::NotPositive;
        }
        StepOutcome::Ok(next)
    }

    fn state(&mut self, t: f64, phi: InvariantForm) -> FlowState {
        let metric = hermitian::metric_from_phi(&phi).expect("accepted states are positive");
        self.engine.use_metric(&metric);
        let closedness = self.engine.model().d(&phi).norm();
        let positivity_margin = hermitian::phi_positivity(&phi);
        let class_drift = if self.control.monitor_class_drift {
            self.engine.laplacians().class_drift(&phi, &self.phi0)
        } else {
            f64::NAN
        };
        FlowState {
            t,
            phi,
            metric,
            monitors: Monitors {
                closedness,
                positivity_margin,
                class_drift,
            },
        }
    }
}

/// Integrates the flow from `phi0` to `t_end` (which may be negative).
pub fn integrate(
    model: &LieAlgebraModel,
    phi0: &BalancedStructure,
    t_end: f64,
    control: &FlowControl,
) -> Result<Trajectory> {
    control.validate()?;
    if !t_end.is_finite() {
        return Err(Error::InvalidArgument("t_end must be finite".into()));
    }
    let mut it = Integrator {
        engine: FlowEngine::new(model),
        phi0: phi0.phi().clone(),
        control,
    };
    let dir = if t_end >= 0.0 { 1.0 } else { -1.0 };
    let mut outputs: Vec<f64> = match &control.output {
        OutputSchedule::EveryStep => Vec::new(),
        OutputSchedule::Times(ts) => ts.iter().cloned().filter(|&s| s * dir > 0.0 && s * dir <= t_end * dir).collect(),
    };
    outputs.sort_by(|a, b| (a * dir).total_cmp(&(b * dir)));
    outputs.dedup();
    let mut next_out = 0;

    let mut t = 0.0;
    let mut y = phi0.phi().clone();
    let mut snapshots = vec![it.state(t, y.clone())];
    let mut h = control.dt.min(t_end.abs().max(f64::MIN_POSITIVE));
    let mut accepted = 0;
    let mut rejected = 0;
    let scale_tol = 1e-14 * t_end.abs().max(1.0);

    let termination = loop {
        let remaining = (t_end - t) * dir;
        if remaining <= scale_tol {
            break Termination::ReachedEnd;
        }
        if accepted + rejected >= control.max_steps {
            break Termination::StepUnderflow { t, dt: h };
        }
        let mut step = h.min(remaining);
        let mut hits_output = false;
        if next_out < outputs.len() {
            let to_out = (outputs[next_out] - t) * dir;
            if to_out <= step {
                step = to_out;
                hits_output = true;
            }
        }
        let hits_end = step >= remaining;
        let signed = step * dir;

        let (candidate, err) = if control.fixed_step {
            (it.rk4(&y, signed), 0.0)
        } else {
            match it.rk4(&y, signed) {
                StepOutcome::NotPositive => (StepOutcome::NotPositive, 0.0),
                StepOutcome::Ok(full) => match it.rk4(&y, signed / 2.0) {
                    StepOutcome::NotPositive => (StepOutcome::NotPositive, 0.0),
                    StepOutcome::Ok(half) => match it.rk4(&half, signed / 2.0) {
                        StepOutcome::NotPositive => (StepOutcome::NotPositive, 0.0),
                        StepOutcome::Ok(two) => {
                            let scale = two.coeff_norm().max(1.0);
                            let err = (&two - &full).coeff_norm() / (15.0 * scale);
                            (StepOutcome::Ok(two), err)
                        }
                    },
                },
            }
        };

        match candidate {
            StepOutcome::NotPositive => {
                rejected += 1;
                if step <= control.bracket_width {
                    break Termination::PositivityLost {
                        last_safe: t,
                        unsafe_time: t + signed,
                    };
                }
                h = step / 2.0;
            }
            StepOutcome::Ok(next) => {
                if !control.fixed_step && err > control.tol {
                    rejected += 1;
                    h = step * (0.9 * (control.tol / err).powf(0.2)).clamp(0.1, 1.0);
                    if h < control.min_dt {
                        break Termination::StepUnderflow { t, dt: h };
                    }
                    continue;
                }
                accepted += 1;
                let margin_before = hermitian::phi_positivity(&y);
                t = if hits_end {
                    t_end
                } else if hits_output {
                    outputs[next_out]
                } else {
                    t + signed
                };
                y = next;
                if hits_output {
                    next_out += 1;
                }
                let record = matches!(control.output, OutputSchedule::EveryStep) || hits_output || hits_end;
                if record {
                    snapshots.push(it.state(t, y.clone()));
                }
                if !control.fixed_step {
                    let factor = if err > 0.0 {
                        (0.9 * (control.tol / err).powf(0.2)).clamp(0.1, 4.0)
                    } else {
                        4.0
                    };
                    // keep the nominal step when a clipped step lands on an output time
                    let base = if hits_output || hits_end { h.max(step) } else { step };
                    h = base * factor;
                    if h < control.min_dt && !hits_end {
                        break Termination::StepUnderflow { t, dt: h };
                    }
                }
                // Near a degeneracy the controlled steps shrink geometrically; probe
                // one bracket-width step to see whether positivity is lost inside it.
                let margin = hermitian::phi_positivity(&y);
                let remaining = (t_end - t) * dir;
                if !control.fixed_step
                    && step < control.bracket_width
                    && margin < margin_before
                    && remaining > control.bracket_width
                {
                    let probe = control.bracket_width * dir;
                    if let StepOutcome::NotPositive = it.rk4(&y, probe) {
                        if !record {
                            snapshots.push(it.state(t, y.clone()));
                        }
                        break Termination::PositivityLost {
                            last_safe: t,
                            unsafe_time: t + probe,
                        };
                    }
                }
            }
        }
    };
    if snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(it.state(t, y));
    }
    Ok(Trajectory {
        snapshots,
        termination,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// Diagonal entries of a metric (real parts).
pub fn diagonal_of(metric: &InvariantMetric) -> Vec<f64> {
    (0..metric.n()).map(|k| metric.matrix()[(k, k)].re).collect()
}

/// Induced `(g1', g2', g3')` of the general flow at a diagonal Iwasawa metric.
pub fn iwasawa_general_velocity(g: [f64; 3]) -> Result<[f64; 3]> {
    let model = LieAlgebraModel::iwasawa();
    let metric = InvariantMetric::diagonal(&g)?;
    let structure = BalancedStructure::from_metric(&model, &metric)?;
    let phi_dot = flow_rhs(&model, &structure);
    let gdot = metric_velocity(structure.phi(), &phi_dot)?;
    Ok([gdot[(0, 0)].re, gdot[(1, 1)].re, gdot[(2, 2)].re])
}
