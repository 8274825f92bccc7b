//! Continuous-time linear state-space models and their simulation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateSpaceError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix {0} contains a non-finite entry")]
    NonFinite(&'static str),
    #[error("sample time must be positive, got {0}")]
    SampleTime(f64),
    #[error("input trace has {got} channels, model expects {expected}")]
    InputWidth { expected: usize, got: usize },
}

/// `ẋ = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, StateSpaceError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(StateSpaceError::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(StateSpaceError::Dimension(format!("B has {} rows, A is {n}x{n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(StateSpaceError::Dimension(format!("C has {} columns, A is {n}x{n}", c.ncols())));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(StateSpaceError::NonFinite(name));
            }
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Number of states.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Number of outputs.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// `C (jωI − A)⁻¹ B`, a `p × m` complex matrix.
    pub fn frequency_response(&self, omega: f64) -> DMatrix<Complex64> {
        let n = self.n();
        let s = Complex64::new(0.0, omega);
        let a = self.a.map(|v| Complex64::new(v, 0.0));
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let c = self.c.map(|v| Complex64::new(v, 0.0));
        let si_a = DMatrix::<Complex64>::identity(n, n) * s - a;
        let x = si_a.lu().solve(&b).expect("jω is an eigenvalue of A; frequency response undefined");
        c * x
    }

    /// Block-diagonal composition: states, inputs and outputs are stacked in
    /// argument order and no block feeds another.
    pub fn block_diagonal(models: &[StateSpaceModel]) -> Self {
        let a = crate::linalg::block_diag(&models.iter().map(|m| m.a.clone()).collect::<Vec<_>>());
        let b = crate::linalg::block_diag(&models.iter().map(|m| m.b.clone()).collect::<Vec<_>>());
        let c = crate::linalg::block_diag(&models.iter().map(|m| m.c.clone()).collect::<Vec<_>>());
        Self { a, b, c }
    }

    /// Exact zero-order-hold discretization at sample time `ts`.
    pub fn discretize(&self, ts: f64) -> Result<DiscreteStateSpace, StateSpaceError> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(StateSpaceError::SampleTime(ts));
        }
        let (a, b) = zero_order_hold(&self.a, &self.b, ts);
        Ok(DiscreteStateSpace { a, b, c: self.c.clone(), ts })
    }
}

/// `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub ts: f64,
}

impl DiscreteStateSpace {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }
}

/// `(exp(A·ts), ∫₀^ts exp(Aτ)dτ · B)` from a single exponential of the
/// block matrix `[[A, B], [0, 0]]·ts`.
pub fn zero_order_hold(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut block = DMatrix::<f64>::zeros(n + m, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    block.view_mut((0, n), (n, m)).copy_from(&(b * ts));
    let e = block.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Exact zero-order hold through the matrix exponential.
    #[default]
    ZeroOrderHold,
    /// `x(k+1) = x(k) + ts·(A x + B u)`; only for quick comparisons.
    ForwardEuler,
}

/// Simulates `model` from the zero state over `inputs` (one row per
/// sample, held constant across each interval). Row `k` of the result is
/// `y(k) = C x(k)`, taken before the input at `k` is applied.
pub fn simulate(
    model: &StateSpaceModel,
    inputs: &DMatrix<f64>,
    ts: f64,
    integrator: Integrator,
) -> Result<DMatrix<f64>, StateSpaceError> {
    if inputs.ncols() != model.m() {
        return Err(StateSpaceError::InputWidth { expected: model.m(), got: inputs.ncols() });
    }
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(StateSpaceError::SampleTime(ts));
    }
    let (ad, bd) = match integrator {
        Integrator::ZeroOrderHold => zero_order_hold(model.a(), model.b(), ts),
        Integrator::ForwardEuler => (DMatrix::identity(model.n(), model.n()) + model.a() * ts, model.b() * ts),
    };
    let steps = inputs.nrows();
    let mut out = DMatrix::zeros(steps, model.p());
    let mut x = DVector::zeros(model.n());
    for k in 0..steps {
        let y = model.c() * &x;
        out.row_mut(k).copy_from(&y.transpose());
        let u = inputs.row(k).transpose();
        x = &ad * &x + &bd * u;
    }
    Ok(out)
}
