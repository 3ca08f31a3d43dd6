//! Linear state-space models, canonical realizations and fixed-step
//! trapezoidal integration.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::poly::{eigenvalues, Poly};

/// `x' = A x + B u`, `y = C x + D u`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(invalid("state matrix must be square"));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(invalid("input/output matrices do not match the state dimension"));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(invalid("feedthrough matrix has the wrong shape"));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("state-space entries must be finite"));
        }
        Ok(StateSpaceModel { a, b, c, d })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        eigenvalues(self.a.clone())
    }

    /// Frequency response `C (sI - A)^-1 B + D` at a complex `s`.
    pub fn transfer_at(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let n = self.states();
        let a = self.a.map(|v| Complex64::new(v, 0.0));
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let c = self.c.map(|v| Complex64::new(v, 0.0));
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(d);
        }
        let si = DMatrix::<Complex64>::identity(n, n) * s - a;
        let x = si
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical(format!("sI - A singular at s = {s}")))?;
        Ok(c * x + d)
    }
}

/// Controllable canonical realization of single-input transfer functions
/// sharing the denominator `den`, one output per numerator. Each numerator
/// must have degree at most `deg den`.
pub fn realize_common_denominator(numerators: &[Poly], den: &Poly) -> Result<StateSpaceModel> {
    let n = den.degree();
    let lead = den.leading();
    let a_coef: Vec<f64> = den.coeffs().iter().map(|c| c / lead).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    if n > 0 {
        for j in 0..n {
            a[(n - 1, j)] = -a_coef[j];
        }
    }
    let mut b = DMatrix::zeros(n, 1);
    if n > 0 {
        b[(n - 1, 0)] = 1.0;
    }
    let mut c = DMatrix::zeros(numerators.len(), n);
    let mut d = DMatrix::zeros(numerators.len(), 1);
    for (row, num) in numerators.iter().enumerate() {
        if !num.is_zero() && num.degree() > n {
            return Err(invalid(format!(
                "improper transfer function (numerator degree {} > {n})",
                num.degree()
            )));
        }
        let mut b_coef: Vec<f64> = num.coeffs().iter().map(|c| c / lead).collect();
        b_coef.resize(n + 1, 0.0);
        let feed = b_coef[n];
        d[(row, 0)] = feed;
        for j in 0..n {
            c[(row, j)] = b_coef[j] - feed * a_coef[j];
        }
    }
    StateSpaceModel::new(a, b, c, d)
}

/// Fixed-step trapezoidal (Tustin) integrator for a model.
pub struct Trapezoidal<'a> {
    model: &'a StateSpaceModel,
    phi: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl<'a> Trapezoidal<'a> {
    pub fn new(model: &'a StateSpaceModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("time step must be positive"));
        }
        let n = model.states();
        let id = DMatrix::<f64>::identity(n, n);
        let lu = (&id - &model.a * (0.5 * dt)).lu();
        let singular = || Error::Numerical("trapezoidal system matrix is singular".into());
        let phi = lu.solve(&(&id + &model.a * (0.5 * dt))).ok_or_else(singular)?;
        let gamma = lu.solve(&(&model.b * (0.5 * dt))).ok_or_else(singular)?;
        Ok(Trapezoidal { model, phi, gamma })
    }

    /// Advances `x` from input `u0` to input `u1`.
    pub fn step(&self, x: &DVector<f64>, u0: &DVector<f64>, u1: &DVector<f64>) -> DVector<f64> {
        &self.phi * x + &self.gamma * (u0 + u1)
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.model.c * x + &self.model.d * u
    }
}
