//! Closed-loop assembly, fixed-step RK4 integration and diagnostics.
//!
//! The controller path only reads measurable quantities: `x`, the reference
//! model state `x_n`, the filtered reference and its own integrals. The true
//! `Λ` and `δ` enter through the plant derivative and through the
//! diagnostics (energy function, oracle forms), never through a control law.

use crate::composite::Kappa;
use crate::control::{
    adaptive_signal, fixed_gain_control, gating_signal, lambda_hat_dot_leakage, nominal_control, w_hat_dot_standard,
    w_hat_dot_standard_leakage, w_hat_dot_symbiotic, AdaptiveState, ControllerVariant, Gains, SymbioticParams,
};
use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, solve_lyapunov, sym_eig_extremes, Matrix, Vector};
use crate::plant::{
    full_regressor, ideal_weight_and_eps, total_uncertainty, DomainGrid, IdealWeight, PlantSpec, ReferenceSignal,
    RegressorBasis,
};

/// Any state entry above this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Largest step accepted when the fixed-gain parameter is at least one.
pub const STIFF_DT_LIMIT: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_stride: usize,
    pub variant: ControllerVariant,
    pub plant: PlantSpec,
    pub gains: Gains,
    /// `R` in `A_nᵀP + PA_n + R = 0`.
    pub r_weight: Matrix,
    pub basis: RegressorBasis,
    /// Shared by every reference channel.
    pub reference: ReferenceSignal,
    /// Grid defining the ideal weight used by the diagnostics.
    pub domain: DomainGrid,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn with_variant(&self, variant: ControllerVariant) -> Self {
        SimConfig { variant, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        ClosedLoop::new(self).map(|_| ())
    }
}

/// Block sizes of the flattened state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub s: usize,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        3 * self.n + self.p + self.m + (self.s + self.m) * self.m + self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `(x, x_n, r_f, q, q_g, Ŵ, Λ̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub x: Vector,
    pub x_n: Vector,
    pub r_f: Vector,
    pub ctrl: AdaptiveState,
}

impl SimState {
    pub fn initial(layout: StateLayout, x0: &Vector) -> Self {
        SimState {
            x: x0.clone(),
            x_n: x0.clone(),
            r_f: Vector::zeros(layout.p),
            ctrl: AdaptiveState::zeros(layout.n, layout.m, layout.s),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.x.as_slice());
        out.extend_from_slice(self.x_n.as_slice());
        out.extend_from_slice(self.r_f.as_slice());
        out.extend_from_slice(self.ctrl.q.as_slice());
        out.extend_from_slice(self.ctrl.qg.as_slice());
        out.extend_from_slice(self.ctrl.w_hat.as_slice());
        out.extend_from_slice(self.ctrl.lambda_hat.as_slice());
        out
    }

    pub fn unflatten(layout: StateLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.len() {
            return Err(Error::dim(format!("state has {} entries, layout needs {}", flat.len(), layout.len())));
        }
        let StateLayout { n, m, p, s } = layout;
        let mut rest = flat;
        let mut take = |k: usize| {
            let (head, tail) = rest.split_at(k);
            rest = tail;
            head.to_vec()
        };
        let x = Vector::from_vec(take(n));
        let x_n = Vector::from_vec(take(n));
        let r_f = Vector::from_vec(take(p));
        let q = Vector::from_vec(take(n));
        let qg = Vector::from_vec(take(m));
        let w_hat = Matrix::from_raw(s + m, m, take((s + m) * m));
        let lambda_hat = Matrix::from_raw(m, m, take(m * m));
        Ok(SimState { x, x_n, r_f, ctrl: AdaptiveState { w_hat, lambda_hat, q, qg } })
    }

    pub fn error(&self) -> Vector {
        &self.x - &self.x_n
    }
}

/// Every signal of the loop at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Signals {
    pub u: Vector,
    pub u_n: Vector,
    pub u_f: Vector,
    pub u_a: Vector,
    pub u_g: Vector,
    pub e: Vector,
    pub sigma: Vector,
    /// `eᵀPe`.
    pub z: f64,
    /// `κ′(eᵀPe)`.
    pub kappa_slope: f64,
}

/// What a [`Trajectory`] stores per recorded sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub u: Vector,
    pub u_n: Vector,
    pub u_f: Vector,
    pub u_a: Vector,
    pub u_g: Vector,
    pub e: Vector,
    /// Energy function of the variant; NaN when no ideal weight exists.
    pub v: f64,
    /// Total uncertainty `π(x, u_n)`.
    pub pi: Vector,
    pub kappa_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub layout: StateLayout,
    pub times: Vec<f64>,
    pub states: Vec<SimState>,
    pub signals: Vec<SignalRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &SimState {
        self.states.last().expect("trajectory has at least the initial sample")
    }
}

/// A validated configuration with the matrices every derivative needs.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    cfg: SimConfig,
    layout: StateLayout,
    a_n: Matrix,
    b_n: Matrix,
    b_i: Matrix,
    p: Matrix,
    lambda: Matrix,
    ideal: Option<IdealWeight>,
}

impl ClosedLoop {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        if !(cfg.t_final >= cfg.dt && cfg.t_final.is_finite()) {
            return Err(Error::invalid("t_final must be at least dt"));
        }
        if cfg.record_stride == 0 {
            return Err(Error::invalid("record_stride must be at least 1"));
        }
        cfg.variant.validate()?;
        if cfg.variant.alpha().is_some_and(|a| a >= 1.0) && cfg.dt > STIFF_DT_LIMIT {
            return Err(Error::invalid(format!(
                "dt = {} exceeds {STIFF_DT_LIMIT} with alpha >= 1 (fixed-gain boundary layer is stiff)",
                cfg.dt
            )));
        }
        let plant = &cfg.plant;
        let n = plant.n();
        cfg.gains.validate(plant)?;
        cfg.reference.validate()?;
        if cfg.r_weight.shape() != (n, n) || !is_positive_definite(&cfg.r_weight) {
            return Err(Error::invalid("R must be an n x n symmetric positive-definite matrix"));
        }
        cfg.basis.validate(n)?;

        let a_n = cfg.gains.closed_loop_a(plant);
        let b_n = cfg.gains.closed_loop_b(plant);
        let p = solve_lyapunov(&a_n, &cfg.r_weight)?;
        let b_i = plant.b_pinv()?;
        let layout = StateLayout { n, m: plant.m(), p: cfg.gains.p(), s: cfg.basis.dim() };
        let ideal = ideal_weight_and_eps(plant, &cfg.basis, &cfg.domain).ok();
        Ok(ClosedLoop { cfg: cfg.clone(), layout, a_n, b_n, b_i, p, lambda: plant.lambda_matrix(), ideal })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    /// Lyapunov solution `P`.
    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn a_n(&self) -> &Matrix {
        &self.a_n
    }

    pub fn b_i(&self) -> &Matrix {
        &self.b_i
    }

    pub fn ideal(&self) -> Option<&IdealWeight> {
        self.ideal.as_ref()
    }

    pub fn initial_state(&self) -> SimState {
        SimState::initial(self.layout, self.cfg.plant.x0())
    }

    /// Control signals in dependency order `r → u_n → σ → u_a → u_f → u_g`.
    pub fn signals(&self, s: &SimState) -> Signals {
        let plant = &self.cfg.plant;
        let variant = &self.cfg.variant;
        let b = plant.b();
        let m = plant.m();

        let e = s.error();
        let u_n = nominal_control(&self.cfg.gains, &s.x, &s.r_f);
        let sigma = full_regressor(&self.cfg.basis, &s.x, &u_n);
        let u_a = if variant.is_adaptive() { adaptive_signal(&s.ctrl.w_hat, &sigma) } else { Vector::zeros(m) };
        let u_f = match variant.alpha() {
            Some(alpha) => fixed_gain_control(alpha, &self.b_i, &s.x, plant.x0(), &s.ctrl),
            None => Vector::zeros(m),
        };
        let z = e.dot(&self.p.matvec(&e));
        let (kappa_slope, u_g) = match variant.symbiotic() {
            Some(params) => {
                let kp = params.kappa.eval_energy(z).slope;
                (kp, gating_signal(params, kp, &self.p, &e, &s.ctrl.lambda_hat, b))
            }
            None => (1.0, Vector::zeros(m)),
        };
        let u = &(&u_n + &u_f) + &u_a;
        Signals { u, u_n, u_f, u_a, u_g, e, sigma, z, kappa_slope }
    }

    /// Time derivative of every block for a given raw reference value.
    pub fn derivative(&self, r_raw: f64, s: &SimState) -> SimState {
        let plant = &self.cfg.plant;
        let b = plant.b();
        let sig = self.signals(s);
        let layout = self.layout;

        let actuation = &sig.u + &plant.delta().eval(&s.x);
        let scaled: Vec<f64> = actuation.iter().zip(plant.lambda()).map(|(v, l)| v * l).collect();
        let x_dot = &plant.a().matvec(&s.x) + &b.matvec(&Vector::from_vec(scaled));

        let x_n_dot = &self.a_n.matvec(&s.x_n) + &self.b_n.matvec(&s.r_f);
        let tau = self.cfg.reference.filter_time_constant;
        let r_f_dot = Vector::from_vec(s.r_f.iter().map(|rf| (r_raw - rf) / tau).collect());
        let q_dot = &self.a_n.matvec(&s.x) + &self.b_n.matvec(&s.r_f);

        let (w_dot, lambda_dot) = match &self.cfg.variant {
            ControllerVariant::NominalOnly | ControllerVariant::FixedGainOnly { .. } => {
                (Matrix::zeros(layout.s + layout.m, layout.m), Matrix::zeros(layout.m, layout.m))
            }
            ControllerVariant::StandardAdaptive { beta } => {
                (w_hat_dot_standard(*beta, &sig.sigma, &sig.e, &self.p, b), Matrix::zeros(layout.m, layout.m))
            }
            ControllerVariant::StandardAdaptiveLeakage { beta1, beta2 } => (
                w_hat_dot_standard_leakage(*beta1, *beta2, &sig.sigma, &sig.e, &self.p, b, &s.ctrl.w_hat),
                Matrix::zeros(layout.m, layout.m),
            ),
            ControllerVariant::SymbioticParametric(params) | ControllerVariant::SymbioticNonparametric(params) => {
                let kp = sig.kappa_slope;
                (
                    w_hat_dot_symbiotic(params, kp, &sig.sigma, &sig.e, &self.p, b, &sig.u_f, &s.ctrl.w_hat),
                    lambda_hat_dot_leakage(
                        params.gamma1,
                        params.gamma2,
                        kp,
                        &sig.e,
                        &self.p,
                        b,
                        &sig.u_f,
                        &s.ctrl.lambda_hat,
                    ),
                )
            }
        };

        SimState {
            x: x_dot,
            x_n: x_n_dot,
            r_f: r_f_dot,
            ctrl: AdaptiveState { w_hat: w_dot, lambda_hat: lambda_dot, q: q_dot, qg: sig.u_g },
        }
    }

    fn derivative_flat(&self, r_raw: f64, y: &[f64]) -> Vec<f64> {
        let s = SimState::unflatten(self.layout, y).expect("layout is fixed by construction");
        self.derivative(r_raw, &s).flatten()
    }

    /// Raw reference held over the step starting at `t`. Sampling at the
    /// midpoint keeps square-wave edges on the step grid exact.
    fn held_reference(&self, t: f64) -> f64 {
        self.cfg.reference.raw(t + 0.5 * self.cfg.dt)
    }

    pub fn record(&self, s: &SimState) -> SignalRecord {
        let sig = self.signals(s);
        let pi = total_uncertainty(&self.cfg.plant, &s.x, &sig.u_n);
        let v = match &self.ideal {
            Some(ideal) => {
                let w_tilde = &s.ctrl.w_hat - &ideal.w;
                let lambda_tilde = &s.ctrl.lambda_hat - &self.lambda;
                energy_v(&self.cfg.variant, &self.p, &sig.e, &sig.u_f, &w_tilde, &lambda_tilde, self.cfg.plant.lambda())
            }
            None => f64::NAN,
        };
        SignalRecord {
            u: sig.u,
            u_n: sig.u_n,
            u_f: sig.u_f,
            u_a: sig.u_a,
            u_g: sig.u_g,
            e: sig.e,
            v,
            pi,
            kappa_slope: sig.kappa_slope,
        }
    }
}

/// Derivative of the closed loop at time `t`.
pub fn rhs(cfg: &SimConfig, t: f64, s: &SimState) -> Result<SimState> {
    if !s.flatten().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState { t });
    }
    let cl = ClosedLoop::new(cfg)?;
    Ok(cl.derivative(cfg.reference.raw(t), s))
}

/// One classical Runge–Kutta step.
pub fn rk4_step<F>(mut f: F, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let axpy = |k: &[f64], h: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &axpy(&k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, &axpy(&k2, 0.5 * dt));
    let k4 = f(t + dt, &axpy(&k3, dt));
    let out: Vec<f64> = (0..y.len()).map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFiniteState { t: t + dt })
    }
}

fn check_divergence(y: &[f64], t: f64, last_finite_t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT) {
        Ok(())
    } else {
        Err(Error::Diverged { t, last_finite_t })
    }
}

/// Integrates the closed loop from `t = 0` to `t_final`, recording every
/// `record_stride` steps plus the final step.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    let cl = ClosedLoop::new(cfg)?;
    let steps = cfg.steps();
    let mut y = cl.initial_state().flatten();
    let mut out = Trajectory { layout: cl.layout, times: Vec::new(), states: Vec::new(), signals: Vec::new() };
    let push = |t: f64, y: &[f64], out: &mut Trajectory| {
        let s = SimState::unflatten(cl.layout, y).expect("fixed layout");
        out.signals.push(cl.record(&s));
        out.states.push(s);
        out.times.push(t);
    };
    push(0.0, &y, &mut out);
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let r_raw = cl.held_reference(t);
        y = match rk4_step(|_, y| cl.derivative_flat(r_raw, y), t, &y, cfg.dt) {
            Ok(next) => next,
            Err(_) => return Err(Error::Diverged { t: t + cfg.dt, last_finite_t: t }),
        };
        let t_next = (k + 1) as f64 * cfg.dt;
        check_divergence(&y, t_next, t)?;
        if (k + 1) % cfg.record_stride == 0 || k + 1 == steps {
            push(t_next, &y, &mut out);
        }
    }
    Ok(out)
}

/// Truth-side form of the fixed-gain dynamics,
/// `u̇_f = −αΛ(u_f + u_a + π) + u_g`. Not implementable: it needs `Λ` and `π`.
pub fn oracle_uf_dot(
    truth: &PlantSpec,
    alpha: f64,
    u_f: &Vector,
    u_a: &Vector,
    u_n: &Vector,
    x: &Vector,
    u_g: &Vector,
) -> Vector {
    let pi = total_uncertainty(truth, x, u_n);
    let inner = &(u_f + u_a) + &pi;
    let scaled: Vec<f64> = inner.iter().zip(truth.lambda()).map(|(v, l)| -alpha * l * v).collect();
    &Vector::from_vec(scaled) + u_g
}

/// Result of integrating the oracle `u_f` next to the implementable one.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    /// `max_t ‖u_f,impl − u_f,oracle‖∞`.
    pub max_difference: f64,
    /// `max_t ‖u_f,impl‖∞`, for scale.
    pub max_uf: f64,
    pub steps: usize,
}

/// Integrates the closed loop with an extra `u_f` block driven by
/// [`oracle_uf_dot`] on the same `x(t)` trace.
pub fn compare_with_oracle(cfg: &SimConfig) -> Result<OracleComparison> {
    let cl = ClosedLoop::new(cfg)?;
    let alpha = cfg
        .variant
        .alpha()
        .ok_or_else(|| Error::invalid("oracle comparison needs a variant with a fixed-gain signal"))?;
    let layout = cl.layout;
    let base = layout.len();
    let mut y = cl.initial_state().flatten();
    y.extend(std::iter::repeat_n(0.0, layout.m));

    let aug = |r_raw: f64, y: &[f64]| -> Vec<f64> {
        let s = SimState::unflatten(layout, &y[..base]).expect("fixed layout");
        let mut d = cl.derivative(r_raw, &s).flatten();
        let sig = cl.signals(&s);
        let uf_oracle = Vector::from_vec(y[base..].to_vec());
        let uf_dot = oracle_uf_dot(&cfg.plant, alpha, &uf_oracle, &sig.u_a, &sig.u_n, &s.x, &sig.u_g);
        d.extend_from_slice(uf_dot.as_slice());
        d
    };

    let mut max_difference: f64 = 0.0;
    let mut max_uf: f64 = 0.0;
    let steps = cfg.steps();
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let r_raw = cl.held_reference(t);
        y = rk4_step(|_, y| aug(r_raw, y), t, &y, cfg.dt)?;
        check_divergence(&y, t + cfg.dt, t)?;
        let s = SimState::unflatten(layout, &y[..base])?;
        let uf = cl.signals(&s).u_f;
        let diff = uf.iter().zip(&y[base..]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        max_difference = max_difference.max(diff);
        max_uf = max_uf.max(uf.norm_inf());
    }
    Ok(OracleComparison { max_difference, max_uf, steps })
}

/// `Σ_j λ_j ‖W̃_{:,j}‖²`, i.e. `tr((W̃Λ^½)ᵀ(W̃Λ^½))` for diagonal `Λ`.
fn weighted_weight_error(w_tilde: &Matrix, lambda_true: &[f64]) -> f64 {
    (0..w_tilde.rows()).map(|i| w_tilde.row(i).iter().zip(lambda_true).map(|(w, l)| l * w * w).sum::<f64>()).sum()
}

/// Energy function of a variant.
///
/// Symbiotic variants use `β₁κ(eᵀPe) + β₂u_fᵀu_f + tr((W̃Λ^½)ᵀ(W̃Λ^½)) +
/// β₁γ₁⁻¹ tr(Λ̃ᵀΛ̃)`. The standard adaptive variants use the classical
/// `eᵀPe + β⁻¹ tr((W̃Λ^½)ᵀ(W̃Λ^½))` (with `β = β₁` under leakage), and the
/// non-adaptive variants `eᵀPe`.
pub fn energy_v(
    variant: &ControllerVariant,
    p: &Matrix,
    e: &Vector,
    u_f: &Vector,
    w_tilde: &Matrix,
    lambda_tilde: &Matrix,
    lambda_true: &[f64],
) -> f64 {
    let z = e.dot(&p.matvec(e));
    match variant {
        ControllerVariant::NominalOnly | ControllerVariant::FixedGainOnly { .. } => z,
        ControllerVariant::StandardAdaptive { beta } => z + weighted_weight_error(w_tilde, lambda_true) / beta,
        ControllerVariant::StandardAdaptiveLeakage { beta1, .. } => {
            z + weighted_weight_error(w_tilde, lambda_true) / beta1
        }
        ControllerVariant::SymbioticParametric(params) | ControllerVariant::SymbioticNonparametric(params) => {
            params.beta1 * params.kappa.eval_energy(z).value
                + params.beta2 * u_f.norm_sq()
                + weighted_weight_error(w_tilde, lambda_true)
                + params.beta1 / params.gamma1 * lambda_tilde.frobenius().powi(2)
        }
    }
}

/// Young-inequality splitting constants `d₁..d₄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DChoices {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
}

impl DChoices {
    /// `d₁ = λ̲(R)/2`, `d₂ = d₃ = d₄ = 1`.
    pub fn midpoints(r_weight: &Matrix) -> Result<Self> {
        let (lo, _) = sym_eig_extremes(r_weight)?;
        Ok(DChoices { d1: 0.5 * lo, d2: 1.0, d3: 1.0, d4: 1.0 })
    }
}

/// Constants of the ultimate bound on the symbiotic energy function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub d: DChoices,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    pub kappa_slope_min: f64,
    pub kappa_slope_max: f64,
    pub v_star: f64,
}

/// Everything [`bound_constants`] reads from the true system.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub p: &'a Matrix,
    pub r_weight: &'a Matrix,
    pub b: &'a Matrix,
    pub lambda_true: &'a [f64],
    pub w_true: &'a Matrix,
    pub eps_bar: f64,
}

/// `l₁..l₅` and `𝒱* = β₁λ̄(P)l₅/l₁ + β₂l₅/l₂ + λ̄(Λ)l₅/l₃ + β₁γ₁⁻¹l₅/l₄`.
///
/// `κ̲′ = ρ`; `κ̄′` is the largest slope found by scanning the composite, which
/// exceeds one inside the transition.
pub fn bound_constants(params: &SymbioticParams, inputs: BoundInputs<'_>, d: DChoices) -> Result<BoundConstants> {
    let (r_min, _) = sym_eig_extremes(inputs.r_weight)?;
    let (_, p_max) = sym_eig_extremes(inputs.p)?;
    let check = |index: usize, value: f64, hi: f64| {
        if value > 0.0 && value < hi {
            Ok(())
        } else {
            Err(Error::InvalidD { index, value })
        }
    };
    check(1, d.d1, r_min)?;
    check(2, d.d2, 2.0)?;
    check(3, d.d3, 2.0)?;
    check(4, d.d4, 2.0)?;

    let rho = params.kappa.rho();
    if rho <= 0.0 {
        return Err(Error::invalid("the ultimate bound needs rho > 0"));
    }
    let (_, slope_max) = params.kappa.slope_bounds();
    let kappa_slope_max = slope_max.max(1.0);
    let kappa_slope_min = match params.kappa {
        Kappa::Identity => 1.0,
        Kappa::Composite(_) => rho,
    };

    let lam_min = inputs.lambda_true.iter().copied().fold(f64::INFINITY, f64::min);
    let lam_max = inputs.lambda_true.iter().copied().fold(0.0, f64::max);
    let lam_norm = lam_max;
    let eps2 = inputs.eps_bar * inputs.eps_bar;
    let SymbioticParams { alpha, beta1, beta2, beta3, gamma1, gamma2, .. } = *params;

    let l1 = beta1 * (r_min - d.d1) * kappa_slope_min;
    let l2 = (2.0 - d.d2) * alpha * beta2 * lam_min;
    let l3 = (2.0 - d.d3) * beta3 * lam_min;
    let l4 = (2.0 - d.d4) * beta1 / gamma1 * gamma2;
    let l5 =
        beta1 * kappa_slope_max / d.d1 * inputs.p.norm2().powi(2) * inputs.b.norm2().powi(2) * lam_norm.powi(2) * eps2
            + alpha * beta2 / d.d2 * lam_norm * eps2
            + beta3 / d.d3 * inputs.w_true.frobenius().powi(2) * lam_max
            + beta1 / gamma1 * gamma2 / d.d4 * lam_max.powi(2);
    let v_star = beta1 * p_max * l5 / l1 + beta2 * l5 / l2 + lam_max * l5 / l3 + beta1 / gamma1 * l5 / l4;

    Ok(BoundConstants { d, l1, l2, l3, l4, l5, kappa_slope_min, kappa_slope_max, v_star })
}

/// Bound constants for a nonparametric symbiotic configuration.
pub fn bound_constants_for(cfg: &SimConfig, d: Option<DChoices>) -> Result<BoundConstants> {
    let cl = ClosedLoop::new(cfg)?;
    let params = cfg.variant.symbiotic().ok_or_else(|| Error::invalid("bound constants need a symbiotic variant"))?;
    let ideal = cl.ideal().ok_or(Error::RankDeficient)?;
    let d = match d {
        Some(d) => d,
        None => DChoices::midpoints(&cfg.r_weight)?,
    };
    let inputs = BoundInputs {
        p: cl.p(),
        r_weight: &cfg.r_weight,
        b: cfg.plant.b(),
        lambda_true: cfg.plant.lambda(),
        w_true: &ideal.w,
        eps_bar: ideal.eps_bar,
    };
    bound_constants(params, inputs, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// `∫‖x − x_ref‖² dt`.
    pub ise: f64,
    /// `max_t ‖x − x_ref‖₂`.
    pub sup_err: f64,
    /// `∫‖u‖² dt`.
    pub control_effort: f64,
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Deviation of `tr` from the `nominal` run's state on a shared time grid.
pub fn metrics(tr: &Trajectory, nominal: &Trajectory) -> Result<Metrics> {
    if tr.len() != nominal.len()
        || tr.times.iter().zip(&nominal.times).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(Error::GridMismatch);
    }
    let err2: Vec<f64> = tr.states.iter().zip(&nominal.states).map(|(a, b)| (&a.x - &b.x).norm_sq()).collect();
    let effort: Vec<f64> = tr.signals.iter().map(|s| s.u.norm_sq()).collect();
    Ok(Metrics {
        ise: trapezoid(&tr.times, &err2),
        sup_err: err2.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt(),
        control_effort: trapezoid(&tr.times, &effort),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::build_composite;
    use crate::plant::examples::*;
    use crate::plant::ReferenceShape;

    fn base_config(variant: ControllerVariant) -> SimConfig {
        SimConfig {
            dt: 1e-3,
            t_final: 10.0,
            record_stride: 10,
            variant,
            plant: parametric_plant(),
            gains: Gains::new(k1(), k2()),
            r_weight: Matrix::identity(2),
            basis: parametric_basis(),
            reference: ReferenceSignal::default(),
            domain: DomainGrid::default(),
        }
    }

    fn fig1_params(alpha: f64) -> SymbioticParams {
        SymbioticParams::parametric(alpha, 1.0, 1.0, 1.0, Kappa::Composite(build_composite(1.0, 2.0, 0.1).unwrap()))
    }

    #[test]
    fn layout_round_trip() {
        let cl = ClosedLoop::new(&base_config(ControllerVariant::NominalOnly)).unwrap();
        let layout = cl.layout();
        assert_eq!(layout, StateLayout { n: 2, m: 1, p: 1, s: 5 });
        let flat: Vec<f64> = (0..layout.len()).map(|i| i as f64 * 0.5 - 3.0).collect();
        let s = SimState::unflatten(layout, &flat).unwrap();
        assert_eq!(s.flatten(), flat);
        assert!(SimState::unflatten(layout, &flat[1..]).is_err());
    }

    #[test]
    fn rk4_constant_and_exponential() {
        let y = rk4_step(|_, y| vec![0.0; y.len()], 0.0, &[1.0, 2.0], 0.1).unwrap();
        assert_eq!(y, vec![1.0, 2.0]);
        let y = rk4_step(|_, y| vec![-y[0]], 0.0, &[1.0], 0.1).unwrap();
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-7);
        assert!((y[0] - 0.9048375).abs() < 1e-7);
        assert!(rk4_step(|_, _| vec![f64::NAN], 0.0, &[1.0], 0.1).is_err());
    }

    #[test]
    fn rk4_matches_truncated_exponential_on_linear_systems() {
        let a = Matrix::from_raw(2, 2, vec![0.0, 1.0, -2.0, -0.3]);
        let y0 = Vector::from_vec(vec![1.0, -0.5]);
        let h = 0.2;
        let y1 = rk4_step(|_, y| a.matvec(&Vector::from_vec(y.to_vec())).into_vec(), 0.0, y0.as_slice(), h).unwrap();
        // I + hA + (hA)²/2 + (hA)³/6 + (hA)⁴/24 applied to y0
        let mut term = y0.clone();
        let mut series = y0.clone();
        for k in 1..=4 {
            term = a.matvec(&term).scale(h / k as f64);
            series = &series + &term;
        }
        assert!((&Vector::from_vec(y1) - &series).norm_inf() < 1e-14);
    }

    #[test]
    fn reference_filter_closed_form() {
        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.reference = ReferenceSignal::step(1.0, 1.0);
        cfg.t_final = 1.0;
        let tr = simulate(&cfg).unwrap();
        let rf = tr.final_state().r_f[0];
        assert!((rf - (1.0 - (-1.0f64).exp())).abs() < 1e-12, "{rf}");
    }

    #[test]
    fn nominal_plant_matches_reference_model() {
        for variant in [ControllerVariant::NominalOnly, ControllerVariant::FixedGainOnly { alpha: 3.0 }] {
            let mut cfg = base_config(variant);
            cfg.plant = cfg.plant.without_uncertainty();
            let tr = simulate(&cfg).unwrap();
            for s in &tr.states {
                assert!(s.error().norm_inf() < 1e-10, "{:?}", s.error());
            }
        }
    }

    #[test]
    fn nominal_derivative_equals_reference_model() {
        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.plant = cfg.plant.without_uncertainty();
        let cl = ClosedLoop::new(&cfg).unwrap();
        let mut s = cl.initial_state();
        s.x = Vector::from_vec(vec![0.4, -0.3]);
        s.x_n = s.x.clone();
        s.r_f = Vector::from_vec(vec![0.7]);
        let d = cl.derivative(1.0, &s);
        assert!((&d.x - &d.x_n).norm_inf() < 1e-15);
    }

    #[test]
    fn zero_initial_conditions_give_quiet_start() {
        let cfg = base_config(ControllerVariant::SymbioticParametric(fig1_params(3.0)));
        let cl = ClosedLoop::new(&cfg).unwrap();
        let s = cl.initial_state();
        let sig = cl.signals(&s);
        assert_eq!(sig.e.norm_inf(), 0.0);
        assert_eq!(sig.u_f.norm_inf(), 0.0);
        assert_eq!(sig.u_g.norm_inf(), 0.0);
        let d = cl.derivative(1.0, &s);
        assert_eq!(d.ctrl.w_hat.max_abs(), 0.0);
        assert_eq!(d.ctrl.lambda_hat.max_abs(), 0.0);
    }

    #[test]
    fn rhs_rejects_non_finite_state() {
        let cfg = base_config(ControllerVariant::NominalOnly);
        let cl = ClosedLoop::new(&cfg).unwrap();
        let mut s = cl.initial_state();
        s.x[0] = f64::NAN;
        assert!(matches!(rhs(&cfg, 0.0, &s), Err(Error::NonFiniteState { .. })));
        let ok = rhs(&cfg, 0.0, &cl.initial_state()).unwrap();
        assert_eq!(ok.r_f[0], 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = base_config(ControllerVariant::FixedGainOnly { alpha: 3.0 });
        cfg.dt = 0.02;
        cfg.t_final = 1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("stiff"));
        cfg.variant = ControllerVariant::FixedGainOnly { alpha: 0.5 };
        assert!(cfg.validate().is_ok());

        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.record_stride = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.t_final = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.r_weight = Matrix::diag(&[1.0, -1.0]);
        assert!(cfg.validate().is_err());
        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.gains = Gains::new(Matrix::zeros(1, 2), k2());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn recording_stride_and_final_sample() {
        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.t_final = 0.105;
        cfg.record_stride = 10;
        let tr = simulate(&cfg).unwrap();
        assert_eq!(tr.times.len(), 12);
        assert!((tr.times[11] - 0.105).abs() < 1e-12);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.states.len(), tr.signals.len());
    }

    #[test]
    fn divergence_is_detected() {
        // u = u_n on a plant whose uncertainty is cubic in x1 blows up in finite time
        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.plant = PlantSpec::new(
            double_integrator_a(),
            double_integrator_b(),
            vec![1.0],
            crate::plant::TrueUncertainty {
                channels: vec![crate::plant::Polynomial::parse("5 x1^3 + 5 x2^3").unwrap()],
            },
            Vector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        cfg.t_final = 20.0;
        match simulate(&cfg) {
            Err(Error::Diverged { t, last_finite_t }) => assert!(t > last_finite_t && t < 20.0),
            other => panic!("expected divergence, got {:?}", other.map(|t| t.len())),
        }
    }

    #[test]
    fn oracle_uf_dot_examples() {
        let plant = parametric_plant();
        let x = Vector::zeros(2);
        let u_n = Vector::from_vec(vec![1.0]);
        // u_f = −π is the unique root
        let pi = total_uncertainty(&plant, &x, &u_n);
        let zero = Vector::zeros(1);
        assert!(oracle_uf_dot(&plant, 3.0, &-&pi, &zero, &u_n, &x, &zero).norm_inf() < 1e-15);
        let ug = Vector::from_vec(vec![0.3]);
        let anything = Vector::from_vec(vec![7.0]);
        assert_eq!(oracle_uf_dot(&plant, 0.0, &anything, &zero, &u_n, &x, &ug), ug);
        // α=1, Λ=0.9, u_f=1, π=−1/9: −0.9(1 − 1/9) = −0.8
        let d = oracle_uf_dot(&plant, 1.0, &Vector::from_vec(vec![1.0]), &zero, &u_n, &x, &zero);
        assert!((d[0] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn one_step_matches_oracle() {
        let mut cfg = base_config(ControllerVariant::FixedGainOnly { alpha: 3.0 });
        cfg.t_final = 0.01;
        let cmp = compare_with_oracle(&cfg).unwrap();
        assert!(cmp.max_difference < 1e-14, "{cmp:?}");
        assert!(cmp.max_uf > 0.0);
    }

    #[test]
    fn energy_examples() {
        let variant = ControllerVariant::SymbioticParametric(fig1_params(1.0));
        let p = Matrix::identity(2);
        let zero_e = Vector::zeros(2);
        let zero_u = Vector::zeros(1);
        let w0 = Matrix::zeros(6, 1);
        assert_eq!(energy_v(&variant, &p, &zero_e, &zero_u, &w0, &Matrix::zeros(1, 1), &[0.9]), 0.0);
        // Λ̂ = 0 leaves β₁γ⁻¹‖Λ‖²
        let v = energy_v(&variant, &p, &zero_e, &zero_u, &w0, &Matrix::diag(&[-0.9]), &[0.9]);
        assert!((v - 0.81).abs() < 1e-15);
        let v = energy_v(&variant, &p, &Vector::from_vec(vec![0.1, 0.0]), &zero_u, &w0, &Matrix::zeros(1, 1), &[0.9]);
        assert!(v > 0.0);
        // W̃ weighted by Λ
        let w = Matrix::from_raw(6, 1, vec![1.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let v = energy_v(&variant, &p, &zero_e, &zero_u, &w, &Matrix::zeros(1, 1), &[0.9]);
        assert!((v - 0.9 * 5.0).abs() < 1e-14);
    }

    #[test]
    fn bound_constants_structure() {
        let kappa = Kappa::Composite(build_composite(1.0, 2.0, 0.1).unwrap());
        let params = SymbioticParams::nonparametric(3.0, 1.0, 1.0, 2.0, 1.0, 2.0, kappa);
        let p = Matrix::identity(2);
        let r = Matrix::identity(2);
        let b = double_integrator_b();
        let w = Matrix::from_raw(2, 1, vec![0.5, -0.25]);
        let inputs = BoundInputs { p: &p, r_weight: &r, b: &b, lambda_true: &[0.8], w_true: &w, eps_bar: 0.3 };
        let d = DChoices::midpoints(&r).unwrap();
        let c = bound_constants(&params, inputs, d).unwrap();
        assert!((c.l2 - (2.0 - 1.0) * 3.0 * 1.0 * 0.8).abs() < 1e-15);
        assert!((c.l1 - 0.5 * 0.1).abs() < 1e-15);
        assert!(c.v_star.is_finite() && c.v_star > 0.0);

        // d1 → λ̲(R): l1 → 0 and 𝒱* grows without bound
        let mut last = c.v_star;
        for d1 in [0.9, 0.99, 0.999, 0.9999] {
            let c = bound_constants(&params, inputs, DChoices { d1, ..d }).unwrap();
            assert!(c.v_star > last);
            last = c.v_star;
        }
        assert!(last > 1e3 * c.v_star / 10.0);

        for bad in [
            DChoices { d1: 1.0, ..d },
            DChoices { d1: 0.0, ..d },
            DChoices { d2: 2.0, ..d },
            DChoices { d3: -0.1, ..d },
            DChoices { d4: 2.5, ..d },
        ] {
            assert!(matches!(bound_constants(&params, inputs, bad), Err(Error::InvalidD { .. })));
        }
    }

    #[test]
    fn metrics_examples() {
        let cfg = base_config(ControllerVariant::NominalOnly);
        let tr = simulate(&SimConfig { t_final: 2.0, ..cfg.clone() }).unwrap();
        let m = metrics(&tr, &tr).unwrap();
        assert_eq!((m.ise, m.sup_err), (0.0, 0.0));
        assert!(m.control_effort > 0.0);

        let mut shifted = tr.clone();
        for s in &mut shifted.states {
            s.x = &s.x + &Vector::from_vec(vec![0.3, 0.4]);
        }
        let m = metrics(&shifted, &tr).unwrap();
        assert!((m.ise - 0.25 * 2.0).abs() < 1e-12);
        assert!((m.sup_err - 0.5).abs() < 1e-12);

        let short = simulate(&SimConfig { t_final: 1.0, ..cfg }).unwrap();
        assert!(matches!(metrics(&short, &tr), Err(Error::GridMismatch)));
    }

    #[test]
    fn step_reference_shape_is_constant() {
        let mut cfg = base_config(ControllerVariant::NominalOnly);
        cfg.plant = cfg.plant.without_uncertainty();
        cfg.reference = ReferenceSignal { shape: ReferenceShape::Step, ..ReferenceSignal::default() };
        cfg.t_final = 30.0;
        let tr = simulate(&cfg).unwrap();
        assert!(tr.states.windows(2).all(|w| w[1].r_f[0] >= w[0].r_f[0]));
        assert!((tr.final_state().r_f[0] - 1.0).abs() < 1e-12);
    }
}
