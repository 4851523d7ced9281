//! The twice continuously differentiable gate `κ` that scales adaptation by
//! how far the tracking error energy `z = eᵀPe` is from zero.
//!
//! `κ(z) = ρz` on `[0, a]`, a quintic transition on `(a, b)`, and `κ(z) = z`
//! on `[b, ∞)`. The quintic coefficients come from matching value, slope and
//! curvature at both ends.

use crate::error::{Error, Result};
use crate::linalg::{solve_linear, Matrix, Vector};

/// Number of samples used by the construction-time monotonicity scan.
pub const GRID_POINTS: usize = 1000;

/// `κ`, `κ′`, `κ″` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaValue {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeFn {
    a: f64,
    b: f64,
    rho: f64,
    psi: [f64; 6],
}

/// The 6×6 system matching `κ_c` to `ρz` at `a` and to `z` at `b` through
/// second derivatives.
pub fn transition_system(a: f64, b: f64, rho: f64) -> (Matrix, Vector) {
    let rows = |z: f64| {
        [
            vec![1.0, z, z * z, z.powi(3), z.powi(4), z.powi(5)],
            vec![0.0, 1.0, 2.0 * z, 3.0 * z * z, 4.0 * z.powi(3), 5.0 * z.powi(4)],
            vec![0.0, 0.0, 2.0, 6.0 * z, 12.0 * z * z, 20.0 * z.powi(3)],
        ]
    };
    let mut all = rows(a).to_vec();
    all.extend(rows(b));
    let m = Matrix::from_raw(6, 6, all.concat());
    let rhs = Vector::from_vec(vec![rho * a, rho, 0.0, b, 1.0, 0.0]);
    (m, rhs)
}

/// Solves for the transition coefficients and validates the result.
pub fn build_composite(a: f64, b: f64, rho: f64) -> Result<CompositeFn> {
    if !(a > 0.0 && b > a && b.is_finite()) {
        return Err(Error::InvalidInterval { a, b });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidRho(rho));
    }
    let (m, rhs) = transition_system(a, b, rho);
    let sol = solve_linear(&m, &rhs)?;
    let mut psi = [0.0; 6];
    psi.copy_from_slice(sol.as_slice());
    let f = CompositeFn { a, b, rho, psi };
    f.validate()?;
    Ok(f)
}

impl CompositeFn {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Transition coefficients `ψ₀..ψ₅` (ascending powers).
    pub fn psi(&self) -> [f64; 6] {
        self.psi
    }

    /// The quintic and its first two derivatives, evaluated by Horner's rule
    /// regardless of which branch `z` falls in.
    pub fn transition(&self, z: f64) -> KappaValue {
        let p = &self.psi;
        let value = p.iter().rev().fold(0.0, |acc, c| acc * z + c);
        let slope = (1..6).rev().fold(0.0, |acc, k| acc * z + k as f64 * p[k]);
        let curvature = (2..6).rev().fold(0.0, |acc, k| acc * z + (k * (k - 1)) as f64 * p[k]);
        KappaValue { value, slope, curvature }
    }

    pub fn eval(&self, z: f64) -> Result<KappaValue> {
        if z < 0.0 || z.is_nan() {
            return Err(Error::NegativeArgument(z));
        }
        Ok(self.eval_unchecked(z))
    }

    pub(crate) fn eval_unchecked(&self, z: f64) -> KappaValue {
        if z <= self.a {
            KappaValue { value: self.rho * z, slope: self.rho, curvature: 0.0 }
        } else if z < self.b {
            self.transition(z)
        } else {
            KappaValue { value: z, slope: 1.0, curvature: 0.0 }
        }
    }

    /// Scan of `κ′` over `[0, 2b]` returning `(min, max)`.
    pub fn slope_range(&self) -> (f64, f64) {
        grid(2.0 * self.b)
            .map(|z| self.eval_unchecked(z).slope)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)))
    }

    fn validate(&self) -> Result<()> {
        self.check_boundary()?;
        self.check_monotone()
    }

    fn tolerance(&self) -> f64 {
        1e-9 * self.b.max(1.0)
    }

    fn check_boundary(&self) -> Result<()> {
        let at_a = self.transition(self.a);
        let at_b = self.transition(self.b);
        let residual = [
            at_a.value - self.rho * self.a,
            at_a.slope - self.rho,
            at_a.curvature,
            at_b.value - self.b,
            at_b.slope - 1.0,
            at_b.curvature,
        ]
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
        if residual.is_nan() || residual > self.tolerance() {
            return Err(Error::BoundaryResidual(residual));
        }
        Ok(())
    }

    fn check_monotone(&self) -> Result<()> {
        let tol = self.tolerance();
        for z in grid(2.0 * self.b) {
            let k = self.eval_unchecked(z);
            let slope_ok = if self.rho > 0.0 { k.slope > 0.0 } else { k.slope >= -tol };
            if !slope_ok || k.value < -tol {
                return Err(Error::NonMonotone { z, slope: k.slope });
            }
        }
        Ok(())
    }
}

fn grid(upper: f64) -> impl Iterator<Item = f64> {
    let step = upper / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(move |i| i as f64 * step)
}

/// The gate actually used by a controller: either the identity (`κ′ ≡ 1`,
/// which recovers the ungated laws) or a constructed composite.
#[derive(Debug, Clone, PartialEq)]
pub enum Kappa {
    Identity,
    Composite(CompositeFn),
}

impl Kappa {
    pub fn eval(&self, z: f64) -> Result<KappaValue> {
        match self {
            Kappa::Identity => {
                if z < 0.0 || z.is_nan() {
                    Err(Error::NegativeArgument(z))
                } else {
                    Ok(KappaValue { value: z, slope: 1.0, curvature: 0.0 })
                }
            }
            Kappa::Composite(f) => f.eval(z),
        }
    }

    /// Evaluation for `z = eᵀPe`, which can dip a few ulps below zero.
    pub(crate) fn eval_energy(&self, z: f64) -> KappaValue {
        let z = z.max(0.0);
        match self {
            Kappa::Identity => KappaValue { value: z, slope: 1.0, curvature: 0.0 },
            Kappa::Composite(f) => f.eval_unchecked(z),
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            Kappa::Identity => 1.0,
            Kappa::Composite(f) => f.rho,
        }
    }

    /// Lower and upper bounds of `κ′` over `z ≥ 0`.
    pub fn slope_bounds(&self) -> (f64, f64) {
        match self {
            Kappa::Identity => (1.0, 1.0),
            Kappa::Composite(f) => f.slope_range(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain Gaussian elimination on the augmented 6×7 system, kept
    /// separate from `linalg::solve_linear`.
    fn oracle_psi(a: f64, b: f64, rho: f64) -> [f64; 6] {
        let (m, rhs) = transition_system(a, b, rho);
        let mut aug: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| m[(i, j)]).chain([rhs[i]]).collect()).collect();
        for k in 0..6 {
            let p = (k..6).max_by(|&i, &j| aug[i][k].abs().total_cmp(&aug[j][k].abs())).unwrap();
            aug.swap(k, p);
            for i in 0..6 {
                if i != k {
                    let f = aug[i][k] / aug[k][k];
                    for j in k..7 {
                        aug[i][j] -= f * aug[k][j];
                    }
                }
            }
        }
        let mut psi = [0.0; 6];
        for i in 0..6 {
            psi[i] = aug[i][6] / aug[i][i];
        }
        psi
    }

    fn fig1() -> CompositeFn {
        build_composite(1.0, 2.0, 0.1).unwrap()
    }

    #[test]
    fn coefficients_match_oracle_and_conditions() {
        let f = fig1();
        let want = oracle_psi(1.0, 2.0, 0.1);
        for (got, want) in f.psi().iter().zip(want) {
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }
        let at_a = f.transition(1.0);
        let at_b = f.transition(2.0);
        assert!((at_a.value - 0.1).abs() <= 1e-9);
        assert!((at_a.slope - 0.1).abs() <= 1e-9);
        assert!(at_a.curvature.abs() <= 1e-9);
        assert!((at_b.value - 2.0).abs() <= 1e-9);
        assert!((at_b.slope - 1.0).abs() <= 1e-9);
        assert!(at_b.curvature.abs() <= 1e-9);
    }

    #[test]
    fn branch_values() {
        let f = fig1();
        let k = f.eval(0.5).unwrap();
        assert!((k.value - 0.05).abs() < 1e-15);
        assert_eq!((k.slope, k.curvature), (0.1, 0.0));
        assert_eq!(f.eval(3.0).unwrap(), KappaValue { value: 3.0, slope: 1.0, curvature: 0.0 });
        assert_eq!(f.eval(7.25).unwrap().value, 7.25);
    }

    #[test]
    fn transition_midpoint() {
        // Horner of the oracle quintic at z = 1.5
        let psi = oracle_psi(1.0, 2.0, 0.1);
        let value: f64 = psi.iter().enumerate().map(|(k, c)| c * 1.5f64.powi(k as i32)).sum();
        let slope: f64 = psi.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c * 1.5f64.powi(k as i32 - 1)).sum();
        let k = fig1().eval(1.5).unwrap();
        assert!((k.value - value).abs() < 1e-9);
        assert!((k.slope - slope).abs() < 1e-9);
        assert!((k.value - 0.909375).abs() < 1e-9);
        assert!((k.slope - 3.08125).abs() < 1e-9);
        assert!((k.curvature - 1.35).abs() < 1e-9);
    }

    #[test]
    fn c2_stitching() {
        let f = fig1();
        let h = 1e-6;
        for z in [1.0, 2.0] {
            let lo = f.eval(z - h).unwrap();
            let hi = f.eval(z + h).unwrap();
            assert!((hi.value - lo.value).abs() <= 1e-4);
            assert!((hi.slope - lo.slope).abs() <= 1e-4);
            assert!((hi.curvature - lo.curvature).abs() <= 1e-4);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = fig1();
        let h = 1e-6;
        for i in 1..400 {
            let z = i as f64 * 4.0 / 400.0;
            let k = f.eval(z).unwrap();
            let fd1 = (f.eval(z + h).unwrap().value - f.eval(z - h).unwrap().value) / (2.0 * h);
            let fd2 = (f.eval(z + h).unwrap().slope - f.eval(z - h).unwrap().slope) / (2.0 * h);
            assert!((k.slope - fd1).abs() <= 1e-6, "slope at {z}");
            // one-sided third derivatives bias the central difference at the joins
            let tol = if z == 1.0 || z == 2.0 { 1e-4 } else { 1e-6 };
            assert!((k.curvature - fd2).abs() <= tol, "curvature at {z}: {} vs {fd2}", k.curvature);
        }
    }

    #[test]
    fn positivity_on_grid() {
        for rho in [0.0, 0.1, 0.5, 0.9] {
            let f = build_composite(1.0, 2.0, rho).unwrap();
            for z in grid(4.0) {
                let k = f.eval(z).unwrap();
                assert!(k.value >= -1e-12);
                if rho > 0.0 {
                    assert!(k.slope > 0.0);
                }
            }
        }
    }

    #[test]
    fn slope_range_of_fig1() {
        let (lo, hi) = fig1().slope_range();
        assert!((lo - 0.1).abs() < 1e-12);
        // the transition overshoots unit slope
        assert!(hi > 3.0 && hi < 3.11, "{hi}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(build_composite(2.0, 1.0, 0.1), Err(Error::InvalidInterval { .. })));
        assert!(matches!(build_composite(0.0, 1.0, 0.1), Err(Error::InvalidInterval { .. })));
        assert!(matches!(build_composite(1.0, 1.0, 0.1), Err(Error::InvalidInterval { .. })));
        assert!(matches!(build_composite(1.0, 2.0, 1.0), Err(Error::InvalidRho(_))));
        assert!(matches!(build_composite(1.0, 2.0, -0.1), Err(Error::InvalidRho(_))));
        assert!(matches!(fig1().eval(-1.0), Err(Error::NegativeArgument(_))));
    }

    #[test]
    fn validation_detects_bad_coefficients() {
        let mut f = fig1();
        f.psi[3] -= 2.0;
        assert!(matches!(f.validate(), Err(Error::BoundaryResidual(_))));

        // slope -1 inside (a, b)
        let mut g = fig1();
        g.psi = [0.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        assert!(matches!(g.check_monotone(), Err(Error::NonMonotone { .. })));

        // rho = 0 tolerates a flat start but not a negative value
        let mut h = build_composite(1.0, 2.0, 0.0).unwrap();
        assert!(h.check_monotone().is_ok());
        h.psi = [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(h.check_monotone().is_err());
    }

    #[test]
    fn identity_kappa() {
        let k = Kappa::Identity;
        assert_eq!(k.eval(2.5).unwrap(), KappaValue { value: 2.5, slope: 1.0, curvature: 0.0 });
        assert_eq!(k.slope_bounds(), (1.0, 1.0));
        assert!(k.eval(-0.1).is_err());
    }
}
