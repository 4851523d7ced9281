//! The uncertain plant `ẋ = Ax + BΛ(u + δ(x))`, its matched uncertainty,
//! the regressor bases the adaptive laws learn over, and reference signals.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{controllability_rank, is_positive_definite, left_pseudoinverse, solve_linear, Matrix, Vector};

/// `coef · Π x_i^{k_i}`. Trailing zero exponents are insignificant.
#[derive(Debug, Clone)]
pub struct Monomial {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

impl PartialEq for Monomial {
    fn eq(&self, other: &Self) -> bool {
        let trim = |e: &[u32]| e.len() - e.iter().rev().take_while(|k| **k == 0).count();
        let (a, b) = (&self.exponents, &other.exponents);
        self.coef == other.coef && a[..trim(a)] == b[..trim(b)]
    }
}

impl Monomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coef * monomial_value(&self.exponents, x)
    }
}

fn monomial_value(exponents: &[u32], x: &[f64]) -> f64 {
    exponents.iter().zip(x).filter(|(k, _)| **k > 0).map(|(k, xi)| xi.powi(*k as i32)).product()
}

/// A real polynomial in the state components, one per input channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn max_variable(&self) -> usize {
        self.terms.iter().map(|t| t.exponents.len()).max().unwrap_or(0)
    }

    /// Parses sums like `0.2 x1 + 0.8 x1*x2 - 0.1 x2^2`. Variables are
    /// 1-indexed; juxtaposition or `*` separates factors.
    pub fn parse(src: &str) -> Result<Self> {
        let bad = |msg: &str| Error::invalid(format!("polynomial `{src}`: {msg}"));
        let mut terms = Vec::new();
        let mut normalized = String::with_capacity(src.len() + 4);
        let mut prev = ' ';
        for c in src.chars() {
            if c == '-' && !matches!(prev, 'e' | 'E') {
                normalized.push('+');
            }
            normalized.push(c);
            prev = c;
        }
        for raw in normalized.split('+') {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let (sign, body) = match raw.strip_prefix('-') {
                Some(rest) => (-1.0, rest.trim()),
                None => (1.0, raw),
            };
            let mut coef = sign;
            let mut exponents: Vec<u32> = Vec::new();
            for factor in body.split(|c: char| c == '*' || c.is_whitespace()).filter(|f| !f.is_empty()) {
                if let Some(var) = factor.strip_prefix('x') {
                    let (idx, pow) = match var.split_once('^') {
                        Some((i, p)) => (i, p.parse::<u32>().map_err(|_| bad("bad exponent"))?),
                        None => (var, 1),
                    };
                    let idx: usize = idx.parse().map_err(|_| bad("bad variable index"))?;
                    if idx == 0 {
                        return Err(bad("variables are 1-indexed"));
                    }
                    if exponents.len() < idx {
                        exponents.resize(idx, 0);
                    }
                    exponents[idx - 1] += pow;
                } else {
                    let c: f64 = factor.parse().map_err(|_| bad("bad coefficient"))?;
                    coef *= c;
                }
            }
            terms.push(Monomial { coef, exponents });
        }
        if terms.is_empty() {
            return Err(bad("empty"));
        }
        Ok(Polynomial { terms })
    }
}

impl FromStr for Polynomial {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Polynomial::parse(s)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", t.coef)?;
            for (j, k) in t.exponents.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*x{}", j + 1)?,
                    _ => write!(f, "*x{}^{k}", j + 1)?,
                }
            }
        }
        Ok(())
    }
}

/// Matched uncertainty `δ(x)`, one polynomial per input channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrueUncertainty {
    pub channels: Vec<Polynomial>,
}

impl TrueUncertainty {
    pub fn zero(m: usize) -> Self {
        TrueUncertainty { channels: vec![Polynomial::default(); m] }
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        Vector::from_vec(self.channels.iter().map(|p| p.eval(x.as_slice())).collect())
    }
}

pub fn eval_delta(delta: &TrueUncertainty, x: &Vector) -> Vector {
    delta.eval(x)
}

/// One Gaussian bump `exp(−½ (x_coord − center)² / width²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfCenter {
    pub coord: usize,
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegressorBasis {
    /// Known monomials (exponent vectors), the parametric case.
    PolynomialFeatures { monomials: Vec<Vec<u32>> },
    /// Unity bias followed by scalar-coordinate Gaussian bumps.
    RbfWithBias { centers: Vec<RbfCenter>, width: f64 },
}

impl RegressorBasis {
    /// Bias plus one bump per `(coordinate, center)` pair, coordinates outer.
    pub fn rbf_grid(n: usize, centers: &[f64], width: f64) -> Self {
        let centers = (0..n).flat_map(|coord| centers.iter().map(move |&center| RbfCenter { coord, center })).collect();
        RegressorBasis::RbfWithBias { centers, width }
    }

    /// Output dimension `s`.
    pub fn dim(&self) -> usize {
        match self {
            RegressorBasis::PolynomialFeatures { monomials } => monomials.len(),
            RegressorBasis::RbfWithBias { centers, .. } => 1 + centers.len(),
        }
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        let xs = x.as_slice();
        match self {
            RegressorBasis::PolynomialFeatures { monomials } => {
                Vector::from_vec(monomials.iter().map(|e| monomial_value(e, xs)).collect())
            }
            RegressorBasis::RbfWithBias { centers, width } => {
                let inv = 1.0 / (width * width);
                let mut out = Vec::with_capacity(1 + centers.len());
                out.push(1.0);
                out.extend(centers.iter().map(|c| {
                    let d = xs[c.coord] - c.center;
                    (-0.5 * d * d * inv).exp()
                }));
                Vector::from_vec(out)
            }
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            RegressorBasis::PolynomialFeatures { monomials } => {
                if monomials.is_empty() {
                    return Err(Error::invalid("polynomial basis has no monomials"));
                }
                if monomials.iter().any(|e| e.len() > n) {
                    return Err(Error::invalid("basis monomial references a missing state"));
                }
            }
            RegressorBasis::RbfWithBias { centers, width } => {
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::invalid("RBF width must be positive"));
                }
                if centers.iter().any(|c| c.coord >= n || !c.center.is_finite()) {
                    return Err(Error::invalid("RBF center references a missing state"));
                }
            }
        }
        Ok(())
    }
}

pub fn eval_basis(basis: &RegressorBasis, x: &Vector) -> Vector {
    basis.eval(x)
}

/// `σ(x, u_n) = [σ_δ(x); u_n]`.
pub fn full_regressor(basis: &RegressorBasis, x: &Vector, u_n: &Vector) -> Vector {
    basis.eval(x).concat(u_n)
}

/// Plant `ẋ = Ax + BΛ(u + δ(x))`, `x(0) = x₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantSpec {
    a: Matrix,
    b: Matrix,
    lambda: Vec<f64>,
    delta: TrueUncertainty,
    x0: Vector,
}

impl PlantSpec {
    pub fn new(a: Matrix, b: Matrix, lambda: Vec<f64>, delta: TrueUncertainty, x0: Vector) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() {
            return Err(Error::invalid("A must be square"));
        }
        if b.rows() != n {
            return Err(Error::invalid(format!("B has {} rows, A is {n}x{n}", b.rows())));
        }
        let m = b.cols();
        if lambda.len() != m {
            return Err(Error::invalid(format!("lambda has {} entries, B has {m} columns", lambda.len())));
        }
        if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("control effectiveness entries must be positive"));
        }
        if delta.channels.len() != m {
            return Err(Error::invalid(format!("uncertainty has {} channels, expected {m}", delta.channels.len())));
        }
        if delta.channels.iter().any(|p| p.max_variable() > n) {
            return Err(Error::invalid("uncertainty references a missing state"));
        }
        if x0.dim() != n {
            return Err(Error::invalid("x0 dimension must match A"));
        }
        if !is_positive_definite(&b.transpose().matmul(&b)) {
            return Err(Error::invalid("B must have full column rank"));
        }
        if controllability_rank(&a, &b)? != n {
            return Err(Error::invalid("(A, B) is not controllable"));
        }
        Ok(PlantSpec { a, b, lambda, delta, x0 })
    }

    /// The same plant with `Λ = I` and `δ ≡ 0`.
    pub fn without_uncertainty(&self) -> Self {
        PlantSpec { lambda: vec![1.0; self.m()], delta: TrueUncertainty::zero(self.m()), ..self.clone() }
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda_matrix(&self) -> Matrix {
        Matrix::diag(&self.lambda)
    }

    pub fn delta(&self) -> &TrueUncertainty {
        &self.delta
    }

    pub fn x0(&self) -> &Vector {
        &self.x0
    }

    pub fn b_pinv(&self) -> Result<Matrix> {
        left_pseudoinverse(&self.b)
    }
}

/// `π = δ(x) + (I − Λ⁻¹) u_n`.
pub fn total_uncertainty(spec: &PlantSpec, x: &Vector, u_n: &Vector) -> Vector {
    let mut pi = spec.delta.eval(x);
    for (i, l) in spec.lambda.iter().enumerate() {
        pi[i] += (1.0 - 1.0 / l) * u_n[i];
    }
    pi
}

/// Tensor-product grid used to define the ideal weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    pub lower: f64,
    pub upper: f64,
    pub points_per_axis: usize,
}

impl Default for DomainGrid {
    fn default() -> Self {
        DomainGrid { lower: -4.0, upper: 4.0, points_per_axis: 41 }
    }
}

impl DomainGrid {
    pub fn points(&self, n: usize) -> Vec<Vector> {
        let k = self.points_per_axis.max(2);
        let step = (self.upper - self.lower) / (k - 1) as f64;
        let total = k.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                let mut x = vec![0.0; n];
                for xi in x.iter_mut() {
                    *xi = self.lower + (idx % k) as f64 * step;
                    idx /= k;
                }
                Vector::from_vec(x)
            })
            .collect()
    }
}

/// Least-squares weight of `δ` over the basis on a grid, with the grid's
/// worst residual norm.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealWeight {
    /// `W_δ`, s×m.
    pub w_delta: Matrix,
    /// `W = [W_δ; (I − Λ⁻¹)]`, (s+m)×m.
    pub w: Matrix,
    pub eps_bar: f64,
}

pub fn ideal_weight_and_eps(spec: &PlantSpec, basis: &RegressorBasis, grid: &DomainGrid) -> Result<IdealWeight> {
    let (s, m) = (basis.dim(), spec.m());
    let points = grid.points(spec.n());
    let mut gram = Matrix::zeros(s, s);
    let mut cross = Matrix::zeros(s, m);
    let mut samples = Vec::with_capacity(points.len());
    for x in &points {
        let phi = basis.eval(x);
        let d = spec.delta.eval(x);
        gram = &gram + &phi.outer(&phi);
        cross = &cross + &phi.outer(&d);
        samples.push((phi, d));
    }
    if !is_positive_definite(&gram) {
        return Err(Error::RankDeficient);
    }
    let mut w_delta = Matrix::zeros(s, m);
    for j in 0..m {
        let col = solve_linear(&gram, &cross.col(j)).map_err(|_| Error::RankDeficient)?;
        for i in 0..s {
            w_delta[(i, j)] = col[i];
        }
    }
    let eps_bar = samples.iter().map(|(phi, d)| (d - &w_delta.tr_matvec(phi)).norm2()).fold(0.0, f64::max);

    let effectiveness_gap: Vec<f64> = spec.lambda.iter().map(|l| 1.0 - 1.0 / l).collect();
    let w = w_delta.vcat(&Matrix::diag(&effectiveness_gap));
    Ok(IdealWeight { w_delta, w, eps_bar })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceShape {
    /// ±amplitude, 50% duty cycle, starting positive.
    Square,
    /// Constant +amplitude.
    Step,
}

/// Raw reference followed by a first-order lag `ṙ_f = (r − r_f)/τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    pub shape: ReferenceShape,
    pub amplitude: f64,
    pub period: f64,
    pub filter_time_constant: f64,
}

impl Default for ReferenceSignal {
    fn default() -> Self {
        ReferenceSignal { shape: ReferenceShape::Square, amplitude: 1.0, period: 40.0, filter_time_constant: 1.0 }
    }
}

impl ReferenceSignal {
    pub fn step(amplitude: f64, filter_time_constant: f64) -> Self {
        ReferenceSignal { shape: ReferenceShape::Step, amplitude, period: 40.0, filter_time_constant }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid("reference period must be positive"));
        }
        if !(self.filter_time_constant > 0.0 && self.filter_time_constant.is_finite()) {
            return Err(Error::invalid("reference filter time constant must be positive"));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("reference amplitude must be finite"));
        }
        Ok(())
    }

    pub fn raw(&self, t: f64) -> f64 {
        match self.shape {
            ReferenceShape::Step => self.amplitude,
            ReferenceShape::Square => {
                let phase = t.rem_euclid(self.period);
                if phase < 0.5 * self.period {
                    self.amplitude
                } else {
                    -self.amplitude
                }
            }
        }
    }

    /// Times in `(0, t_final)` where the raw signal switches.
    pub fn edges(&self, t_final: f64) -> Vec<f64> {
        match self.shape {
            ReferenceShape::Step => Vec::new(),
            ReferenceShape::Square => {
                let half = 0.5 * self.period;
                (1..).map(|k| k as f64 * half).take_while(|t| *t < t_final).collect()
            }
        }
    }
}

pub fn reference_square(sig: &ReferenceSignal, t: f64) -> f64 {
    sig.raw(t)
}

/// Builders for the two example systems: a double integrator with
/// `K₁ = [0.16 0.57]`, `K₂ = [0.16]`.
pub mod examples {
    use super::*;

    pub fn double_integrator_a() -> Matrix {
        Matrix::from_raw(2, 2, vec![0.0, 1.0, 0.0, 0.0])
    }

    pub fn double_integrator_b() -> Matrix {
        Matrix::from_raw(2, 1, vec![0.0, 1.0])
    }

    pub fn k1() -> Matrix {
        Matrix::from_raw(1, 2, vec![0.16, 0.57])
    }

    pub fn k2() -> Matrix {
        Matrix::from_raw(1, 1, vec![0.16])
    }

    /// Monomials `x₁, x₂, x₁x₂, x₁³, x₂²`.
    pub fn example_monomials() -> Vec<Vec<u32>> {
        vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![3, 0], vec![0, 2]]
    }

    fn uncertainty(coefs: [f64; 5]) -> TrueUncertainty {
        let terms =
            example_monomials().into_iter().zip(coefs).map(|(exponents, coef)| Monomial { coef, exponents }).collect();
        TrueUncertainty { channels: vec![Polynomial { terms }] }
    }

    pub fn parametric_delta() -> TrueUncertainty {
        uncertainty([0.2, 0.2, 0.8, 0.1, 0.1])
    }

    pub fn nonparametric_delta() -> TrueUncertainty {
        uncertainty([0.4, 0.4, 1.6, 0.2, 0.2])
    }

    pub fn parametric_plant() -> PlantSpec {
        PlantSpec::new(double_integrator_a(), double_integrator_b(), vec![0.9], parametric_delta(), Vector::zeros(2))
            .expect("example plant is valid")
    }

    pub fn nonparametric_plant() -> PlantSpec {
        PlantSpec::new(double_integrator_a(), double_integrator_b(), vec![0.8], nonparametric_delta(), Vector::zeros(2))
            .expect("example plant is valid")
    }

    pub fn parametric_basis() -> RegressorBasis {
        RegressorBasis::PolynomialFeatures { monomials: example_monomials() }
    }

    /// Bias plus bumps at ±1 on each coordinate, unit width.
    pub fn rbf_basis() -> RegressorBasis {
        RegressorBasis::rbf_grid(2, &[1.0, -1.0], 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::examples::*;
    use super::*;

    fn v(d: &[f64]) -> Vector {
        Vector::new(d.to_vec()).unwrap()
    }

    #[test]
    fn delta_examples() {
        let d = parametric_delta();
        assert_eq!(d.eval(&v(&[0.0, 0.0])).as_slice(), &[0.0]);
        assert!((d.eval(&v(&[1.0, 1.0]))[0] - 1.4).abs() < 1e-15);
        let d = nonparametric_delta();
        assert!((d.eval(&v(&[1.0, 0.0]))[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn polynomial_parse_round_trip() {
        let p = Polynomial::parse("0.2 x1 + 0.2*x2 + 0.8 x1 x2 + 0.1 x1^3 + 0.1 x2^2").unwrap();
        assert_eq!(p, parametric_delta().channels[0]);
        let again = Polynomial::parse(&p.to_string()).unwrap();
        assert_eq!(again, p);
        let sci = Polynomial::parse("1e-3 x1 - 2.5E-1 x2").unwrap();
        assert_eq!(sci.eval(&[1000.0, 4.0]), 0.0);
        let q = Polynomial::parse("1 - 2 x2").unwrap();
        assert_eq!(q.eval(&[5.0, 3.0]), -5.0);
        assert!(Polynomial::parse("").is_err());
        assert!(Polynomial::parse("0.2 y1").is_err());
        assert!(Polynomial::parse("x0").is_err());
    }

    #[test]
    fn rbf_basis_values() {
        let basis = rbf_basis();
        assert_eq!(basis.dim(), 5);
        let at_origin = basis.eval(&v(&[0.0, 0.0]));
        let e = (-0.5f64).exp();
        assert_eq!(at_origin.as_slice(), &[1.0, e, e, e, e]);
        let hit = basis.eval(&v(&[1.0, 7.0]));
        assert_eq!(hit[1], 1.0);
        for x in [[-3.0, 2.0], [0.3, -0.7], [10.0, 10.0]] {
            assert!(basis.eval(&v(&x)).iter().all(|s| *s > 0.0 && *s <= 1.0));
        }
    }

    #[test]
    fn regressor_concatenation() {
        let basis = parametric_basis();
        let sigma = full_regressor(&basis, &v(&[1.0, 1.0]), &v(&[2.0]));
        assert_eq!(sigma.as_slice(), &[1.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
        let sigma = full_regressor(&rbf_basis(), &v(&[0.1, 0.2]), &v(&[0.0]));
        assert_eq!(sigma.dim(), 6);
        assert_eq!(sigma[5], 0.0);
    }

    #[test]
    fn total_uncertainty_examples() {
        let ideal = parametric_plant().without_uncertainty();
        let x = v(&[0.3, -0.2]);
        assert_eq!(total_uncertainty(&ideal, &x, &v(&[4.0])).as_slice(), &[0.0]);

        let p = parametric_plant();
        let pi = total_uncertainty(&p, &v(&[0.0, 0.0]), &v(&[1.0]));
        assert!((pi[0] + 1.0 / 9.0).abs() < 1e-15);
        let p = nonparametric_plant();
        let pi = total_uncertainty(&p, &v(&[0.0, 0.0]), &v(&[1.0]));
        assert!((pi[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn plant_validation() {
        let a = double_integrator_a();
        let b = double_integrator_b();
        let d = parametric_delta();
        let x0 = Vector::zeros(2);
        assert!(PlantSpec::new(a.clone(), b.clone(), vec![0.0], d.clone(), x0.clone()).is_err());
        assert!(PlantSpec::new(a.clone(), b.clone(), vec![1.0, 1.0], d.clone(), x0.clone()).is_err());
        assert!(PlantSpec::new(Matrix::identity(2), b.clone(), vec![1.0], d.clone(), x0.clone()).is_err());
        assert!(PlantSpec::new(a.clone(), b.clone(), vec![1.0], d.clone(), Vector::zeros(3)).is_err());
        let cubic = TrueUncertainty { channels: vec![Polynomial::parse("x3").unwrap()] };
        assert!(PlantSpec::new(a, b, vec![1.0], cubic, x0).is_err());
    }

    #[test]
    fn ideal_weight_recovers_parametric_coefficients() {
        let iw = ideal_weight_and_eps(&parametric_plant(), &parametric_basis(), &DomainGrid::default()).unwrap();
        for (got, want) in iw.w_delta.as_slice().iter().zip([0.2, 0.2, 0.8, 0.1, 0.1]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!(iw.eps_bar <= 1e-8);
        assert_eq!(iw.w.shape(), (6, 1));
        assert!((iw.w[(5, 0)] - (1.0 - 1.0 / 0.9)).abs() < 1e-15);
    }

    #[test]
    fn ideal_weight_constant_with_bias_only() {
        let plant = PlantSpec::new(
            double_integrator_a(),
            double_integrator_b(),
            vec![1.0],
            TrueUncertainty { channels: vec![Polynomial::parse("2.5").unwrap()] },
            Vector::zeros(2),
        )
        .unwrap();
        let basis = RegressorBasis::RbfWithBias { centers: vec![], width: 1.0 };
        let iw = ideal_weight_and_eps(&plant, &basis, &DomainGrid::default()).unwrap();
        assert!((iw.w_delta[(0, 0)] - 2.5).abs() < 1e-12);
        assert!(iw.eps_bar < 1e-12);
    }

    #[test]
    fn ideal_weight_rank_deficient() {
        let basis = RegressorBasis::PolynomialFeatures { monomials: vec![vec![1, 0], vec![1, 0]] };
        let err = ideal_weight_and_eps(&parametric_plant(), &basis, &DomainGrid::default());
        assert!(matches!(err, Err(Error::RankDeficient)));
    }

    #[test]
    fn nonparametric_fit_has_residual() {
        let iw = ideal_weight_and_eps(&nonparametric_plant(), &rbf_basis(), &DomainGrid::default()).unwrap();
        assert!(iw.eps_bar > 1.0);
    }

    #[test]
    fn square_wave_phases() {
        let sig = ReferenceSignal::default();
        assert_eq!(sig.raw(1e-9), 1.0);
        assert_eq!(sig.raw(0.0), 1.0);
        assert_eq!(sig.raw(20.0 + 1e-9), -1.0);
        assert_eq!(sig.raw(40.0 + 1e-9), 1.0);
        assert_eq!(sig.edges(100.0), vec![20.0, 40.0, 60.0, 80.0]);
        let step = ReferenceSignal::step(2.0, 1.0);
        assert_eq!(step.raw(30.0), 2.0);
        assert!(step.edges(100.0).is_empty());
        let bad = ReferenceSignal { period: 0.0, ..ReferenceSignal::default() };
        assert!(bad.validate().is_err());
    }
}
