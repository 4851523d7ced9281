//! Control signals and parameter-adjustment right-hand sides.
//!
//! Every function here is a pure formula. The integrator in [`crate::sim`]
//! owns the adaptive state and decides which laws are active for a variant.
//! Laws that are gated by the composite function take `kp = κ′(eᵀPe)` as an
//! argument so one derivative evaluation shares a single `κ′`.

use crate::composite::Kappa;
use crate::error::{Error, Result};
use crate::linalg::{is_hurwitz, Matrix, Vector};
use crate::plant::PlantSpec;

/// Nominal feedback `K₁` and feedforward `K₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub k1: Matrix,
    pub k2: Matrix,
}

impl Gains {
    pub fn new(k1: Matrix, k2: Matrix) -> Self {
        Gains { k1, k2 }
    }

    pub fn validate(&self, plant: &PlantSpec) -> Result<()> {
        let (n, m) = (plant.n(), plant.m());
        if self.k1.shape() != (m, n) {
            return Err(Error::invalid(format!("K1 must be {m}x{n}, got {:?}", self.k1.shape())));
        }
        if self.k2.rows() != m {
            return Err(Error::invalid(format!("K2 must have {m} rows")));
        }
        if !is_hurwitz(&self.closed_loop_a(plant)) {
            return Err(Error::invalid("A - B K1 is not Hurwitz"));
        }
        Ok(())
    }

    /// `A_n = A − B K₁`.
    pub fn closed_loop_a(&self, plant: &PlantSpec) -> Matrix {
        plant.a() - &plant.b().matmul(&self.k1)
    }

    /// `B_n = B K₂`.
    pub fn closed_loop_b(&self, plant: &PlantSpec) -> Matrix {
        plant.b().matmul(&self.k2)
    }

    /// Reference dimension `p`.
    pub fn p(&self) -> usize {
        self.k2.cols()
    }
}

/// Gains of the symbiotic architecture. The parametric architecture is the
/// special case `β₃ = γ₂ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbioticParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub kappa: Kappa,
}

impl SymbioticParams {
    pub fn parametric(alpha: f64, beta1: f64, beta2: f64, gamma: f64, kappa: Kappa) -> Self {
        SymbioticParams { alpha, beta1, beta2, beta3: 0.0, gamma1: gamma, gamma2: 0.0, kappa }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn nonparametric(
        alpha: f64,
        beta1: f64,
        beta2: f64,
        beta3: f64,
        gamma1: f64,
        gamma2: f64,
        kappa: Kappa,
    ) -> Self {
        SymbioticParams { alpha, beta1, beta2, beta3, gamma1, gamma2, kappa }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerVariant {
    /// `u = u_n`.
    NominalOnly,
    /// Integral fixed-gain signal only.
    FixedGainOnly {
        alpha: f64,
    },
    /// Direct adaptive learning without leakage.
    StandardAdaptive {
        beta: f64,
    },
    /// Direct adaptive learning with `−β₂Ŵ` leakage.
    StandardAdaptiveLeakage {
        beta1: f64,
        beta2: f64,
    },
    SymbioticParametric(SymbioticParams),
    SymbioticNonparametric(SymbioticParams),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

impl ControllerVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerVariant::NominalOnly => "nominal",
            ControllerVariant::FixedGainOnly { .. } => "fixed-gain",
            ControllerVariant::StandardAdaptive { .. } => "standard-adaptive",
            ControllerVariant::StandardAdaptiveLeakage { .. } => "standard-adaptive-leakage",
            ControllerVariant::SymbioticParametric(_) => "symbiotic-parametric",
            ControllerVariant::SymbioticNonparametric(_) => "symbiotic-nonparametric",
        }
    }

    /// Fixed-gain parameter `α` when the variant carries a fixed-gain signal.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            ControllerVariant::FixedGainOnly { alpha } => Some(*alpha),
            ControllerVariant::SymbioticParametric(p) | ControllerVariant::SymbioticNonparametric(p) => Some(p.alpha),
            _ => None,
        }
    }

    /// Copy with `α` replaced; `None` for variants without a fixed-gain signal.
    pub fn with_alpha(&self, alpha: f64) -> Option<Self> {
        let mut v = self.clone();
        match &mut v {
            ControllerVariant::FixedGainOnly { alpha: a } => *a = alpha,
            ControllerVariant::SymbioticParametric(p) | ControllerVariant::SymbioticNonparametric(p) => p.alpha = alpha,
            _ => return None,
        }
        Some(v)
    }

    pub fn symbiotic(&self) -> Option<&SymbioticParams> {
        match self {
            ControllerVariant::SymbioticParametric(p) | ControllerVariant::SymbioticNonparametric(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        !matches!(self, ControllerVariant::NominalOnly | ControllerVariant::FixedGainOnly { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControllerVariant::NominalOnly => Ok(()),
            ControllerVariant::FixedGainOnly { alpha } => positive("alpha", *alpha),
            ControllerVariant::StandardAdaptive { beta } => positive("beta", *beta),
            ControllerVariant::StandardAdaptiveLeakage { beta1, beta2 } => {
                positive("beta1", *beta1)?;
                positive("beta2", *beta2)
            }
            ControllerVariant::SymbioticParametric(p) => {
                positive("alpha", p.alpha)?;
                positive("beta1", p.beta1)?;
                positive("beta2", p.beta2)?;
                positive("gamma1", p.gamma1)?;
                if p.beta3 != 0.0 || p.gamma2 != 0.0 {
                    return Err(Error::invalid(
                        "symbiotic-parametric has no leakage terms: beta3 and gamma2 must be 0",
                    ));
                }
                Ok(())
            }
            ControllerVariant::SymbioticNonparametric(p) => {
                positive("alpha", p.alpha)?;
                positive("beta1", p.beta1)?;
                positive("beta2", p.beta2)?;
                positive("beta3", p.beta3)?;
                positive("gamma1", p.gamma1)?;
                positive("gamma2", p.gamma2)?;
                if p.kappa.rho() == 0.0 {
                    return Err(Error::invalid(
                        "symbiotic-nonparametric requires rho != 0 in the composite function \
                         (the ultimate bound needs a positive minimum slope)",
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Integrals carried alongside the adaptive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    /// `Ŵ`, (s+m)×m.
    pub w_hat: Matrix,
    /// `Λ̂`, m×m.
    pub lambda_hat: Matrix,
    /// `∫ (A_n x + B_n r) dt`.
    pub q: Vector,
    /// `∫ u_g dt`.
    pub qg: Vector,
}

impl AdaptiveState {
    pub fn zeros(n: usize, m: usize, s: usize) -> Self {
        AdaptiveState {
            w_hat: Matrix::zeros(s + m, m),
            lambda_hat: Matrix::zeros(m, m),
            q: Vector::zeros(n),
            qg: Vector::zeros(m),
        }
    }
}

/// `u_n = −K₁x + K₂r`.
pub fn nominal_control(g: &Gains, x: &Vector, r: &Vector) -> Vector {
    &g.k2.matvec(r) - &g.k1.matvec(x)
}

/// `u_f = −αB_i(x − x₀) + αB_i q + q_g`.
pub fn fixed_gain_control(alpha: f64, b_i: &Matrix, x: &Vector, x0: &Vector, st: &AdaptiveState) -> Vector {
    let drift = &st.q - &(x - x0);
    &b_i.matvec(&drift).scale(alpha) + &st.qg
}

/// `BᵀPe`.
pub fn error_feedback(p: &Matrix, b: &Matrix, e: &Vector) -> Vector {
    b.tr_matvec(&p.matvec(e))
}

/// `u_g = −β₁β₂⁻¹ κ′ Λ̂ BᵀPe`.
pub fn gating_signal(
    params: &SymbioticParams,
    kp: f64,
    p: &Matrix,
    e: &Vector,
    lambda_hat: &Matrix,
    b: &Matrix,
) -> Vector {
    let k = -params.beta1 / params.beta2 * kp;
    lambda_hat.matvec(&error_feedback(p, b, e)).scale(k)
}

/// `u_a = −Ŵᵀσ`.
pub fn adaptive_signal(w_hat: &Matrix, sigma: &Vector) -> Vector {
    -&w_hat.tr_matvec(sigma)
}

/// `β σ eᵀPB`.
pub fn w_hat_dot_standard(beta: f64, sigma: &Vector, e: &Vector, p: &Matrix, b: &Matrix) -> Matrix {
    sigma.outer(&error_feedback(p, b, e)).scale(beta)
}

/// `β₁ σ eᵀPB − β₂Ŵ`.
pub fn w_hat_dot_standard_leakage(
    beta1: f64,
    beta2: f64,
    sigma: &Vector,
    e: &Vector,
    p: &Matrix,
    b: &Matrix,
    w_hat: &Matrix,
) -> Matrix {
    &w_hat_dot_standard(beta1, sigma, e, p, b) - &w_hat.scale(beta2)
}

/// `β₁κ′ σ eᵀPB − β₂α σ u_fᵀ − β₃Ŵ`; `β₃ = 0` gives the parametric law.
#[allow(clippy::too_many_arguments)]
pub fn w_hat_dot_symbiotic(
    params: &SymbioticParams,
    kp: f64,
    sigma: &Vector,
    e: &Vector,
    p: &Matrix,
    b: &Matrix,
    u_f: &Vector,
    w_hat: &Matrix,
) -> Matrix {
    let learn = sigma.outer(&error_feedback(p, b, e)).scale(params.beta1 * kp);
    let coupling = sigma.outer(u_f).scale(params.beta2 * params.alpha);
    let mut out = &learn - &coupling;
    if params.beta3 != 0.0 {
        out = &out - &w_hat.scale(params.beta3);
    }
    out
}

pub fn w_hat_dot_symbiotic_parametric(
    params: &SymbioticParams,
    kp: f64,
    sigma: &Vector,
    e: &Vector,
    p: &Matrix,
    b: &Matrix,
    u_f: &Vector,
) -> Matrix {
    let no_leak = SymbioticParams { beta3: 0.0, ..params.clone() };
    let dummy = Matrix::zeros(sigma.dim(), u_f.dim());
    w_hat_dot_symbiotic(&no_leak, kp, sigma, e, p, b, u_f, &dummy)
}

#[allow(clippy::too_many_arguments)]
pub fn w_hat_dot_symbiotic_nonparametric(
    params: &SymbioticParams,
    kp: f64,
    sigma: &Vector,
    e: &Vector,
    p: &Matrix,
    b: &Matrix,
    u_f: &Vector,
    w_hat: &Matrix,
) -> Matrix {
    w_hat_dot_symbiotic(params, kp, sigma, e, p, b, u_f, w_hat)
}

/// `γ₁κ′ BᵀPe u_fᵀ − γ₂Λ̂`.
#[allow(clippy::too_many_arguments)]
pub fn lambda_hat_dot_leakage(
    gamma1: f64,
    gamma2: f64,
    kp: f64,
    e: &Vector,
    p: &Matrix,
    b: &Matrix,
    u_f: &Vector,
    lambda_hat: &Matrix,
) -> Matrix {
    let learn = error_feedback(p, b, e).outer(u_f).scale(gamma1 * kp);
    if gamma2 == 0.0 {
        learn
    } else {
        &learn - &lambda_hat.scale(gamma2)
    }
}

/// `γκ′ BᵀPe u_fᵀ`.
pub fn lambda_hat_dot_parametric(gamma: f64, kp: f64, e: &Vector, p: &Matrix, b: &Matrix, u_f: &Vector) -> Matrix {
    let m = u_f.dim();
    lambda_hat_dot_leakage(gamma, 0.0, kp, e, p, b, u_f, &Matrix::zeros(m, m))
}
