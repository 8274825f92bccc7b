//! Dense convex QP solver.
//!
//! Minimizes `½ zᵀHz + fᵀz + c` subject to `G z ≤ h` and `E z = e` with
//! the dual active-set method of Goldfarb and Idnani. `H` must be positive
//! definite. When the dual method runs into a row it cannot satisfy, a
//! phase-1 problem over `(z, t)` minimizes the largest inequality
//! violation `t` subject to the equalities; a strictly positive phase-1
//! optimum (or an equality system without a solution) certifies that the
//! constraints are inconsistent.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("problem data contains a non-finite entry")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub f: DVector<f64>,
    /// Constant added to the reported objective.
    pub constant: f64,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub e_mat: DMatrix<f64>,
    pub e: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem in `n` variables.
    pub fn unconstrained(hessian: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            hessian,
            f,
            constant: 0.0,
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
            e_mat: DMatrix::zeros(0, n),
            e: DVector::zeros(0),
        }
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.g = g;
        self.h = h;
        self
    }

    pub fn with_equalities(mut self, e_mat: DMatrix<f64>, e: DVector<f64>) -> Self {
        self.e_mat = e_mat;
        self.e = e;
        self
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.f.dot(z) + self.constant
    }

    /// Largest violation over all rows; equalities count in both directions.
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let gi = (&self.g * z - &self.h).iter().fold(0.0f64, |m, v| m.max(*v));
        let ei = (&self.e_mat * z - &self.e).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        gi.max(ei)
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        let dims = [
            (self.hessian.shape(), (n, n), "H"),
            (self.g.shape(), (self.h.len(), n), "G"),
            (self.e_mat.shape(), (self.e.len(), n), "E"),
        ];
        for (got, want, name) in dims {
            if got != want {
                return Err(QpError::Dimension(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        let finite_v = |m: &DVector<f64>| m.iter().all(|v| v.is_finite());
        if !(finite(&self.hessian) && finite(&self.g) && finite(&self.e_mat))
            || !(finite_v(&self.f) && finite_v(&self.h) && finite_v(&self.e))
            || !self.constant.is_finite()
        {
            return Err(QpError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::IterationLimit => "iteration_limit",
        }
    }
}

impl std::fmt::Display for QpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub status: QpStatus,
    pub objective: f64,
    /// Inequality rows in the final working set.
    pub active: Vec<usize>,
    /// Multipliers of `G z ≤ h` (zero for inactive rows).
    pub lambda: DVector<f64>,
    /// Multipliers of `E z = e`.
    pub mu: DVector<f64>,
    pub iterations: usize,
    /// Phase-1 optimum (largest violation left), when phase 1 ran.
    pub phase1_violation: Option<f64>,
}

impl QpSolution {
    /// Stationarity, primal feasibility, dual feasibility and
    /// complementarity residuals, each as a max-norm.
    pub fn kkt_residuals(&self, p: &QpProblem) -> [f64; 4] {
        let grad = &p.hessian * &self.z + &p.f + p.g.transpose() * &self.lambda + p.e_mat.transpose() * &self.mu;
        let slack = &p.h - &p.g * &self.z;
        let stationarity = grad.amax();
        let primal = p.max_violation(&self.z);
        let dual = self.lambda.iter().fold(0.0f64, |m, l| m.max(-l));
        let compl = self.lambda.iter().zip(slack.iter()).fold(0.0f64, |m, (l, s)| m.max((l * s).abs()));
        [stationarity, primal, dual, compl]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iter: usize,
    /// Phase-1 violation above which the problem is declared infeasible.
    pub feasibility_tol: f64,
    pub phase1_regularization: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { max_iter: 500, feasibility_tol: 1e-9, phase1_regularization: 1e-8 }
    }
}

pub fn solve_qp(p: &QpProblem, max_iter: usize) -> Result<QpSolution, QpError> {
    solve_qp_with(p, &QpSettings { max_iter, ..QpSettings::default() })
}

pub fn solve_qp_with(p: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    p.validate()?;
    let n = p.n();
    let chol = Cholesky::new(p.hessian.clone()).ok_or(QpError::NotPositiveDefinite)?;
    let rows = Rows::new(p);

    let out = if rows.trivially_inconsistent(settings.feasibility_tol) {
        DualOutcome { z: DVector::zeros(n), status: QpStatus::Infeasible, active: Vec::new(), iterations: 0 }
    } else {
        dual_active_set(&chol, &p.f, &rows, settings.max_iter)
    };
    match out.status {
        QpStatus::Optimal => {
            let mut lambda = DVector::zeros(p.g.nrows());
            let mut mu = DVector::zeros(p.e.len());
            for a in &out.active {
                match a.row {
                    Row::Ineq(i) => lambda[i] = a.u / rows.g_scale[i],
                    Row::Eq(i) => mu[i] = -a.sign * a.u / rows.e_scale[i],
                }
            }
            let mut active: Vec<usize> = out
                .active
                .iter()
                .filter_map(|a| match a.row {
                    Row::Ineq(i) => Some(i),
                    Row::Eq(_) => None,
                })
                .collect();
            active.sort_unstable();
            Ok(QpSolution {
                objective: p.objective(&out.z),
                z: out.z,
                status: QpStatus::Optimal,
                active,
                lambda,
                mu,
                iterations: out.iterations,
                phase1_violation: None,
            })
        }
        QpStatus::IterationLimit => Ok(failed(p, out.z, QpStatus::IterationLimit, out.iterations, None)),
        QpStatus::Infeasible => {
            // the dual method found no way to satisfy some row; phase 1
            // measures by how much
            let (z, t, it, status) = phase_one(&rows, settings);
            let iterations = out.iterations + it;
            let verdict = if status == QpStatus::Optimal && t > settings.feasibility_tol {
                QpStatus::Infeasible
            } else {
                QpStatus::IterationLimit
            };
            Ok(failed(p, z, verdict, iterations, Some(t)))
        }
    }
}

fn failed(p: &QpProblem, z: DVector<f64>, status: QpStatus, iterations: usize, phase1: Option<f64>) -> QpSolution {
    QpSolution {
        objective: p.objective(&z),
        z,
        status,
        active: Vec::new(),
        lambda: DVector::zeros(p.g.nrows()),
        mu: DVector::zeros(p.e.len()),
        iterations,
        phase1_violation: phase1,
    }
}

/// Constraints as unit normals `n` and offsets `b`: inequalities read
/// `nᵀz ≥ b` (from `G z ≤ h`, so `n = −gᵀ/‖g‖`) and equalities `nᵀz = b`.
/// All-zero rows are kept aside and only checked for consistency.
struct Rows {
    normals: Vec<DVector<f64>>,
    offsets: Vec<f64>,
    kinds: Vec<Row>,
    g_scale: Vec<f64>,
    e_scale: Vec<f64>,
    /// Right-hand sides of all-zero inequality and equality rows.
    zero_ineq: Vec<f64>,
    zero_eq: Vec<f64>,
    /// Unit-normalized copies used by phase 1.
    g: DMatrix<f64>,
    h: DVector<f64>,
    e: DMatrix<f64>,
    e_rhs: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    Ineq(usize),
    Eq(usize),
}

impl Rows {
    fn new(p: &QpProblem) -> Self {
        let n = p.n();
        let mut out = Rows {
            normals: Vec::new(),
            offsets: Vec::new(),
            kinds: Vec::new(),
            g_scale: Vec::with_capacity(p.g.nrows()),
            e_scale: Vec::with_capacity(p.e.len()),
            zero_ineq: Vec::new(),
            zero_eq: Vec::new(),
            g: DMatrix::zeros(p.g.nrows(), n),
            h: DVector::zeros(p.g.nrows()),
            e: DMatrix::zeros(p.e.len(), n),
            e_rhs: DVector::zeros(p.e.len()),
        };
        for i in 0..p.e.len() {
            let norm = p.e_mat.row(i).norm();
            let s = if norm > 0.0 { norm } else { 1.0 };
            out.e_scale.push(s);
            out.e.row_mut(i).copy_from(&(p.e_mat.row(i) / s));
            out.e_rhs[i] = p.e[i] / s;
            if norm > 0.0 {
                out.normals.push(out.e.row(i).transpose());
                out.offsets.push(out.e_rhs[i]);
                out.kinds.push(Row::Eq(i));
            } else {
                out.zero_eq.push(p.e[i]);
            }
        }
        for i in 0..p.g.nrows() {
            let norm = p.g.row(i).norm();
            let s = if norm > 0.0 { norm } else { 1.0 };
            out.g_scale.push(s);
            out.g.row_mut(i).copy_from(&(p.g.row(i) / s));
            out.h[i] = p.h[i] / s;
            if norm > 0.0 {
                out.normals.push(-out.g.row(i).transpose());
                out.offsets.push(-out.h[i]);
                out.kinds.push(Row::Ineq(i));
            } else {
                out.zero_ineq.push(p.h[i]);
            }
        }
        out
    }

    fn trivially_inconsistent(&self, tol: f64) -> bool {
        self.zero_ineq.iter().any(|h| *h < -tol) || self.zero_eq.iter().any(|e| e.abs() > tol)
    }
}

struct ActiveRow {
    row: Row,
    /// Index into `Rows::normals`.
    idx: usize,
    /// `+1`, or `−1` when an equality was entered with flipped orientation.
    sign: f64,
    /// Multiplier of the oriented row.
    u: f64,
    /// `L⁻¹ n`, oriented.
    col: DVector<f64>,
}

struct DualOutcome {
    z: DVector<f64>,
    status: QpStatus,
    active: Vec<ActiveRow>,
    iterations: usize,
}

/// Dual active-set method of Goldfarb and Idnani. Starting from the
/// unconstrained minimizer, the most violated row is added at each major
/// step while the iterate stays optimal for the rows already active; rows
/// whose multipliers would turn negative on the way are released. A
/// violated row that no combination of active rows can move certifies
/// infeasibility.
///
/// With `H = L Lᵀ`, `J` the matrix of active columns `L⁻¹ nᵢ` and
/// `J = Q R`, a new row `n` moves the iterate along `s = L⁻ᵀ (I − QQᵀ) L⁻¹ n`
/// and the active multipliers along `−R⁻¹ Qᵀ L⁻¹ n`.
fn dual_active_set(chol: &Cholesky<f64, Dyn>, f: &DVector<f64>, rows: &Rows, max_iter: usize) -> DualOutcome {
    let l = chol.l();
    let solve_l = |v: &DVector<f64>| {
        let mut out = v.clone();
        l.solve_lower_triangular_mut(&mut out);
        out
    };
    let mut z = -chol.solve(f);
    let mut active: Vec<ActiveRow> = Vec::new();
    let mut is_active = vec![false; rows.normals.len()];
    let mut iterations = 0;
    let viol_tol = 1e-11;
    let dep_tol = 1e-11;

    // equalities first, then the most violated inequality each round
    let eq_count = rows.kinds.iter().filter(|k| matches!(k, Row::Eq(_))).count();
    let mut next_eq = 0;
    loop {
        let q = if next_eq < eq_count {
            next_eq += 1;
            next_eq - 1
        } else {
            let mut worst: Option<(usize, f64)> = None;
            for (i, nrm) in rows.normals.iter().enumerate().skip(eq_count) {
                if is_active[i] {
                    continue;
                }
                let c = nrm.dot(&z) - rows.offsets[i];
                if c < -viol_tol * (1.0 + rows.offsets[i].abs()) && worst.is_none_or(|(_, w)| c < w) {
                    worst = Some((i, c));
                }
            }
            match worst {
                None => {
                    polish(&l, f, rows, &mut z, &mut active);
                    return DualOutcome { z, status: QpStatus::Optimal, active, iterations };
                }
                Some((i, _)) => i,
            }
        };
        let is_eq = q < eq_count;
        let mut c = rows.normals[q].dot(&z) - rows.offsets[q];
        let sign = if is_eq && c > 0.0 { -1.0 } else { 1.0 };
        c *= sign;
        let n_q = &rows.normals[q] * sign;
        let col = solve_l(&n_q);
        let mut u_q = 0.0;

        loop {
            if iterations >= max_iter {
                return DualOutcome { z, status: QpStatus::IterationLimit, active, iterations };
            }
            iterations += 1;
            let k = active.len();
            let (d, r) = if k == 0 {
                (col.clone(), DVector::zeros(0))
            } else {
                let mut jm = DMatrix::zeros(col.len(), k);
                for (j, a) in active.iter().enumerate() {
                    jm.set_column(j, &a.col);
                }
                let qr = jm.qr();
                let (qm, rm) = (qr.q(), qr.r());
                let qt_n = qm.transpose() * &col;
                let d = &col - &qm * &qt_n;
                let r = rm.solve_upper_triangular(&qt_n).unwrap_or_else(|| DVector::zeros(k));
                (d, r)
            };
            // largest dual step keeping inequality multipliers nonnegative
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, a) in active.iter().enumerate() {
                if matches!(a.row, Row::Ineq(_)) && r[j] > 0.0 {
                    let t = a.u / r[j];
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let dn = d.norm_squared();
            if d.norm() <= dep_tol * col.norm() {
                // the new row is a combination of the active ones
                if is_eq && c.abs() <= viol_tol * (1.0 + rows.offsets[q].abs()) {
                    break;
                }
                let Some(j) = drop else {
                    return DualOutcome { z, status: QpStatus::Infeasible, active, iterations };
                };
                for (a, rj) in active.iter_mut().zip(r.iter()) {
                    a.u -= t1 * rj;
                }
                u_q += t1;
                release(&mut active, &mut is_active, j);
                continue;
            }
            let t2 = -c / dn;
            let t = t2.min(t1);
            let mut s = d.clone();
            l.tr_solve_lower_triangular_mut(&mut s);
            z += &s * t;
            for (a, rj) in active.iter_mut().zip(r.iter()) {
                a.u -= t * rj;
            }
            u_q += t;
            if t2 <= t1 {
                is_active[q] = true;
                active.push(ActiveRow { row: rows.kinds[q], idx: q, sign, u: u_q, col });
                break;
            }
            release(&mut active, &mut is_active, drop.expect("finite t1 has a blocking row"));
            c = (rows.normals[q].dot(&z) - rows.offsets[q]) * sign;
        }
    }
}

fn release(active: &mut Vec<ActiveRow>, is_active: &mut [bool], j: usize) {
    let a = active.remove(j);
    is_active[a.idx] = false;
}

/// Re-solves the equality-constrained problem on the final active set to
/// clean up rounding accumulated over the updates. Kept only when the
/// result is still primal and dual feasible.
fn polish(l: &DMatrix<f64>, f: &DVector<f64>, rows: &Rows, z: &mut DVector<f64>, active: &mut [ActiveRow]) {
    let k = active.len();
    if k == 0 {
        return;
    }
    let mut w = f.clone();
    l.solve_lower_triangular_mut(&mut w);
    let mut jm = DMatrix::zeros(w.len(), k);
    let mut b = DVector::zeros(k);
    for (j, a) in active.iter().enumerate() {
        jm.set_column(j, &a.col);
        b[j] = rows.offsets[a.idx] * a.sign;
    }
    if k > w.len() {
        return;
    }
    let qr = jm.clone().qr();
    let rm = qr.r();
    let diag = rm.diagonal().abs();
    if diag.min() <= 1e-11 * diag.max() {
        return;
    }
    // JᵀJ u = b + Jᵀw, then y = −w + J u and z = L⁻ᵀ y
    let mut u = &b + jm.transpose() * &w;
    if !rm.tr_solve_upper_triangular_mut(&mut u) || !rm.solve_upper_triangular_mut(&mut u) {
        return;
    }
    let mut y = &jm * &u - &w;
    l.tr_solve_lower_triangular_mut(&mut y);
    let dual_ok = active.iter().zip(u.iter()).all(|(a, v)| matches!(a.row, Row::Eq(_)) || *v >= 0.0);
    let primal_ok = rows
        .normals
        .iter()
        .zip(&rows.offsets)
        .zip(&rows.kinds)
        .all(|((n, b), kind)| matches!(kind, Row::Eq(_)) || n.dot(&y) - b >= -1e-11 * (1.0 + b.abs()));
    if dual_ok && primal_ok {
        z.copy_from(&y);
        for (a, v) in active.iter_mut().zip(u.iter()) {
            a.u = *v;
        }
    }
}

/// Phase 1: `min t + ε/2 (‖z‖² + t²)` over `E z = e`, `G z − t ≤ h`,
/// `t ≥ −1`, on unit-normalized rows. Equalities without any solution are
/// detected first by least squares and reported through their residual.
fn phase_one(rows: &Rows, settings: &QpSettings) -> (DVector<f64>, f64, usize, QpStatus) {
    let n = rows.g.ncols();
    let n_eq = rows.e.nrows();
    if n_eq > 0 {
        let svd = rows.e.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let z0 = svd.solve(&rows.e_rhs, 1e-12 * smax.max(1e-300)).unwrap_or_else(|_| DVector::zeros(n));
        let left = (&rows.e * &z0 - &rows.e_rhs).amax();
        if left > settings.feasibility_tol {
            return (z0, left, 0, QpStatus::Optimal);
        }
    }
    let m_g = rows.g.nrows();
    let mut g = DMatrix::zeros(m_g + 1, n + 1);
    let mut h = DVector::zeros(m_g + 1);
    g.view_mut((0, 0), (m_g, n)).copy_from(&rows.g);
    h.rows_mut(0, m_g).copy_from(&rows.h);
    for i in 0..m_g {
        g[(i, n)] = -1.0;
    }
    g[(m_g, n)] = -1.0;
    h[m_g] = 1.0;
    let mut e = DMatrix::zeros(n_eq, n + 1);
    e.view_mut((0, 0), (n_eq, n)).copy_from(&rows.e);
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let sub = QpProblem {
        hessian: DMatrix::from_diagonal_element(n + 1, n + 1, settings.phase1_regularization),
        f,
        constant: 0.0,
        g,
        h,
        e_mat: e,
        e: rows.e_rhs.clone(),
    };
    let chol = Cholesky::new(sub.hessian.clone()).expect("positive regularization");
    let out = dual_active_set(&chol, &sub.f, &Rows::new(&sub), settings.max_iter);
    let t = out.z[n].max(0.0);
    (out.z.rows(0, n).into_owned(), t, out.iterations, out.status)
}
