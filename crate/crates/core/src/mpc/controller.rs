use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::qp::{solve_qp_with, QpError, QpProblem, QpSettings, QpStatus};
use super::riccati::{incremental_terminal_weight, RiccatiError};
use super::{MpcConfig, MpcLimits, MpcWeights};
use crate::prediction::{
    AugmentedModel, DiscreteModel, OUTPUTS, OUT_FORCE, OUT_OMEGA, OUT_POS, OUT_ROT, OUT_TILT, OUT_VEL, U_ACC, U_TILT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("terminal weight: {0}")]
    Riccati(#[from] RiccatiError),
    #[error("QP: {0}")]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Terminal rest and specific-force equality rows with a Riccati
    /// terminal weight.
    WithCotc,
    /// Stage weight at the horizon end and no terminal rows.
    WithoutCotc,
}

/// Free response and forced-response matrices of the incremental model
/// over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedModel {
    pub n_p: usize,
    pub n_c: usize,
    /// `C A^i` stacked for `i = 1..N_p`.
    pub phi: DMatrix<f64>,
    /// Block `(i, j)` is `C A^{i−1−j} B` for `j < i`, zero otherwise.
    pub gamma: DMatrix<f64>,
    /// `A^{N_p}`.
    pub a_np: DMatrix<f64>,
    /// Maps `z` to the state at `N_p`: blocks `A^{N_p−1−j} B`.
    pub gamma_x: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl CondensedModel {
    pub fn new(aug: &AugmentedModel, n_p: usize, n_c: usize) -> Self {
        let (n, m, p) = (aug.n(), aug.m(), aug.p());
        let mut phi = DMatrix::zeros(n_p * p, n);
        let mut markov = Vec::with_capacity(n_p);
        let mut powers_b = Vec::with_capacity(n_p);
        let mut ca = aug.c.clone();
        let mut ab = aug.b.clone();
        let mut a_np = DMatrix::identity(n, n);
        for i in 1..=n_p {
            markov.push(&aug.c * &ab);
            powers_b.push(ab.clone());
            ab = &aug.a * ab;
            ca = ca * &aug.a;
            a_np = &aug.a * a_np;
            phi.view_mut(((i - 1) * p, 0), (p, n)).copy_from(&ca);
        }
        let mut gamma = DMatrix::zeros(n_p * p, n_c * m);
        for i in 1..=n_p {
            for j in 0..n_c.min(i) {
                gamma.view_mut(((i - 1) * p, j * m), (p, m)).copy_from(&markov[i - 1 - j]);
            }
        }
        let mut gamma_x = DMatrix::zeros(n, n_c * m);
        for j in 0..n_c.min(n_p) {
            gamma_x.view_mut((0, j * m), (n, m)).copy_from(&powers_b[n_p - 1 - j]);
        }
        Self { n_p, n_c, phi, gamma, a_np, gamma_x, c: aug.c.clone(), n, m, p }
    }

    pub fn phi_block(&self, i: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.phi.view(((i - 1) * self.p, 0), (self.p, self.n))
    }

    pub fn gamma_block(&self, i: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.gamma.view(((i - 1) * self.p, 0), (self.p, self.n_c * self.m))
    }

    /// Predicted outputs `y(k+i)`, one row per `i = 1..N_p`.
    pub fn predict_outputs(&self, x0: &DVector<f64>, z: &DVector<f64>) -> DMatrix<f64> {
        let y = &self.phi * x0 + &self.gamma * z;
        DMatrix::from_fn(self.n_p, self.p, |i, c| y[i * self.p + c])
    }

    pub fn predict_terminal_state(&self, x0: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        &self.a_np * x0 + &self.gamma_x * z
    }
}

/// Outputs driven to zero at the end of the horizon by the terminal rows.
pub const TERMINAL_REST_OUTPUTS: [std::ops::Range<usize>; 3] = [OUT_POS, OUT_VEL, OUT_ROT];
/// Specific-force channels whose current demand the terminal tilt must
/// sustain.
pub const TERMINAL_FORCE_OUTPUTS: [usize; 2] = [OUT_FORCE.start, OUT_FORCE.start + 1];

/// Perceived horizontal specific force per radian of tilt once the
/// platform has been still long enough for the otolith transients to
/// die out: row `i` is force channel `i`, column `c` tilt channel `c`.
///
/// Found by tilting through one radian in a single sample and letting
/// the sampled model settle (`A^(2^14)` by repeated squaring).
pub fn sustained_tilt_gain(base: &DiscreteModel) -> DMatrix<f64> {
    let mut settle = base.a.clone();
    for _ in 0..14 {
        settle = &settle * &settle;
    }
    let mut gain = DMatrix::zeros(2, 2);
    for c in 0..2 {
        let x1 = base.b.column(U_TILT.start + c) / base.ts;
        let y = &base.c * (&settle * x1);
        let tilt = y[OUT_TILT.start + c];
        for i in 0..2 {
            gain[(i, c)] = y[OUT_FORCE.start + i] / tilt;
        }
    }
    gain
}

/// Time-invariant parts of the condensed QP. With `R` the stacked
/// references `r(k+1..k+N_p)` and `u⁻` the last applied input:
/// `f = Fx x0 + Fr R + Fu u⁻`, `h = h0 + Hx x0 + Hu u⁻`,
/// `e = Ex x0 + Er r(k) + Eu u⁻`.
#[derive(Debug, Clone, PartialEq)]
struct Template {
    hessian: DMatrix<f64>,
    fx: DMatrix<f64>,
    fr: DMatrix<f64>,
    fu: DMatrix<f64>,
    stage_weight: DVector<f64>,
    s: DVector<f64>,
    g: DMatrix<f64>,
    h0: DVector<f64>,
    hx: DMatrix<f64>,
    hu: DMatrix<f64>,
    e_mat: DMatrix<f64>,
    ex: DMatrix<f64>,
    er: DMatrix<f64>,
    eu: DMatrix<f64>,
}

fn build_template(
    cm: &CondensedModel,
    w: &MpcWeights,
    limits: &MpcLimits,
    variant: Variant,
    terminal: Option<&DMatrix<f64>>,
    tilt_gain: &DMatrix<f64>,
) -> Template {
    let (n, m, p, n_p, n_c) = (cm.n, cm.m, cm.p, cm.n_p, cm.n_c);
    let nz = n_c * m;

    // stage output weights, i = 1..N_p−1 always, i = N_p without terminal rows
    let mut stage_weight = DVector::zeros(n_p * p);
    for i in 1..=n_p {
        if i < n_p || variant == Variant::WithoutCotc {
            stage_weight.rows_mut((i - 1) * p, p).copy_from(&w.q);
        }
    }
    let mut qg = cm.gamma.clone();
    for (r, mut row) in qg.row_iter_mut().enumerate() {
        row *= stage_weight[r];
    }
    let mut hess = cm.gamma.transpose() * &qg;
    let mut fx = qg.transpose() * &cm.phi;
    let mut fr = -qg.transpose();

    if let Some(pt) = terminal {
        let gp = cm.gamma_x.transpose() * pt;
        hess += &gp * &cm.gamma_x;
        fx += &gp * &cm.a_np;
        let mut block = fr.view_mut((0, (n_p - 1) * p), (nz, p));
        block -= gp.columns(n - p, p);
    }

    // Σ_{j=1}^{N_c−1} ‖u(k+j)‖²_S + ‖Δu(k+j)‖²_R
    let mut fu = DMatrix::zeros(nz, m);
    for a in 0..n_c {
        for b in 0..n_c {
            let count = n_c.saturating_sub(a.max(b).max(1));
            for d in 0..m {
                hess[(a * m + d, b * m + d)] += count as f64 * w.s[d];
            }
        }
        let count = n_c.saturating_sub(a.max(1));
        for d in 0..m {
            fu[(a * m + d, d)] = count as f64 * w.s[d];
        }
        if a >= 1 {
            for d in 0..m {
                hess[(a * m + d, a * m + d)] += w.r[d];
            }
        }
    }
    let mut hessian = hess * 2.0;
    crate::linalg::symmetrize(&mut hessian);

    // inequality rows
    let ky = limits.output.len();
    let kl = limits.leg_rate_output.nrows();
    let ku = limits.input.len();
    let kd = limits.rate.len();
    let rows = 2 * (n_p * ky + n_p * kl + n_c * ku + n_c * kd);
    let mut g = DMatrix::zeros(rows, nz);
    let mut h0 = DVector::zeros(rows);
    let mut hx = DMatrix::zeros(rows, n);
    let mut hu = DMatrix::zeros(rows, m);
    let mut row = 0;
    let mut push_pair =
        |g_row: &DMatrix<f64>, hx_row: Option<&DMatrix<f64>>, hu_row: Option<&DMatrix<f64>>, lo: f64, hi: f64| {
            // g_row z ≤ hi + hx_row x0 + hu_row u⁻ and its mirror for lo
            g.row_mut(row).copy_from(&g_row.row(0));
            g.row_mut(row + 1).copy_from(&(-g_row.row(0)));
            h0[row] = hi;
            h0[row + 1] = -lo;
            if let Some(v) = hx_row {
                hx.row_mut(row).copy_from(&v.row(0));
                hx.row_mut(row + 1).copy_from(&(-v.row(0)));
            }
            if let Some(v) = hu_row {
                hu.row_mut(row).copy_from(&v.row(0));
                hu.row_mut(row + 1).copy_from(&(-v.row(0)));
            }
            row += 2;
        };

    // L_j: cumulative-sum selector so that u(k+j) = u⁻ + L_j z
    let cumulative = |j: usize, coeff: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(coeff.nrows(), nz);
        for l in 0..=j.min(n_c - 1) {
            out.view_mut((0, l * m), (coeff.nrows(), m)).copy_from(coeff);
        }
        out
    };

    for i in 1..=n_p {
        let cg = &limits.output.rows * cm.gamma_block(i);
        let cphi = -(&limits.output.rows * cm.phi_block(i));
        for r in 0..ky {
            push_pair(
                &cg.rows(r, 1).into_owned(),
                Some(&cphi.rows(r, 1).into_owned()),
                None,
                limits.output.lo[r],
                limits.output.hi[r],
            );
        }
    }
    for i in 0..n_p {
        let (gy, yx) = if i == 0 {
            (DMatrix::zeros(kl, nz), &limits.leg_rate_output * &cm.c)
        } else {
            (&limits.leg_rate_output * cm.gamma_block(i), &limits.leg_rate_output * cm.phi_block(i))
        };
        let gl = gy + cumulative(i, &limits.leg_rate_input);
        let neg_yx = -yx;
        let neg_ju = -&limits.leg_rate_input;
        for r in 0..kl {
            push_pair(
                &gl.rows(r, 1).into_owned(),
                Some(&neg_yx.rows(r, 1).into_owned()),
                Some(&neg_ju.rows(r, 1).into_owned()),
                -limits.leg_rate,
                limits.leg_rate,
            );
        }
    }
    for j in 0..n_c {
        let gl = cumulative(j, &limits.input.rows);
        let neg = -&limits.input.rows;
        for r in 0..ku {
            push_pair(
                &gl.rows(r, 1).into_owned(),
                None,
                Some(&neg.rows(r, 1).into_owned()),
                limits.input.lo[r],
                limits.input.hi[r],
            );
        }
    }
    for j in 0..n_c {
        for r in 0..kd {
            let mut gr = DMatrix::zeros(1, nz);
            gr.view_mut((0, j * m), (1, m)).copy_from(&limits.rate.rows.rows(r, 1));
            push_pair(&gr, None, None, limits.rate.lo[r], limits.rate.hi[r]);
        }
    }
    debug_assert_eq!(row, rows);

    // terminal equality rows: the platform at rest at N_p (displacement,
    // velocity, rotation and the held acceleration all zero) and tilted so
    // that the force it sustains from there equals the demand r(k)
    let (e_mat, ex, er, eu) = if variant == Variant::WithCotc {
        let rest: Vec<usize> = TERMINAL_REST_OUTPUTS.iter().flat_map(|r| r.clone()).collect();
        let k_rows = rest.len() + TERMINAL_FORCE_OUTPUTS.len() + U_ACC.len();
        let gn = cm.gamma_block(n_p);
        let pn = cm.phi_block(n_p);
        let mut e_mat = DMatrix::zeros(k_rows, nz);
        let mut ex = DMatrix::zeros(k_rows, n);
        let mut er = DMatrix::zeros(k_rows, p);
        let mut eu = DMatrix::zeros(k_rows, m);
        for (k, &o) in rest.iter().enumerate() {
            e_mat.row_mut(k).copy_from(&gn.row(o));
            ex.row_mut(k).copy_from(&(-pn.row(o)));
        }
        for (i, &o) in TERMINAL_FORCE_OUTPUTS.iter().enumerate() {
            let k = rest.len() + i;
            for c in 0..2 {
                let t = OUT_TILT.start + c;
                let gain = tilt_gain[(i, c)];
                let mut row = e_mat.row_mut(k);
                row += gn.row(t) * gain;
                let mut row = ex.row_mut(k);
                row -= pn.row(t) * gain;
            }
            er[(k, o)] = 1.0;
        }
        for (j, d) in U_ACC.enumerate() {
            let k = rest.len() + TERMINAL_FORCE_OUTPUTS.len() + j;
            for l in 0..n_c {
                e_mat[(k, l * m + d)] = 1.0;
            }
            eu[(k, d)] = -1.0;
        }
        (e_mat, ex, er, eu)
    } else {
        (DMatrix::zeros(0, nz), DMatrix::zeros(0, n), DMatrix::zeros(0, p), DMatrix::zeros(0, m))
    };

    Template {
        hessian,
        fx: fx * 2.0,
        fr: fr * 2.0,
        fu: fu * 2.0,
        stage_weight,
        s: w.s.clone(),
        g,
        h0,
        hx,
        hu,
        e_mat,
        ex,
        er,
        eu,
    }
}

/// `N_p + 1` output references `r(k), …, r(k+N_p)` from a trace of
/// perceived specific force and angular velocity (`samples × 6`). Samples
/// past the end repeat the last one; non-perceived outputs are zero.
pub fn reference_window(perceived: &DMatrix<f64>, k: usize, n_p: usize) -> Vec<DVector<f64>> {
    let last = perceived.nrows().saturating_sub(1);
    (0..=n_p)
        .map(|i| {
            let mut r = DVector::zeros(OUTPUTS);
            if perceived.nrows() > 0 {
                let row = perceived.row((k + i).min(last));
                for c in 0..3 {
                    r[OUT_FORCE.start + c] = row[c];
                    r[OUT_OMEGA.start + c] = row[3 + c];
                }
            }
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub u: DVector<f64>,
    pub delta_u: DVector<f64>,
    pub status: QpStatus,
    /// Full optimal move sequence when the solve succeeded.
    pub z: Option<DVector<f64>>,
    pub objective: f64,
    pub iterations: usize,
    /// The move came from the previous plan instead of a fresh solve.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct MpcController {
    variant: Variant,
    weights: MpcWeights,
    model: CondensedModel,
    template: Template,
    terminal: Option<DMatrix<f64>>,
    tilt_gain: DMatrix<f64>,
    settings: QpSettings,
    u_prev: DVector<f64>,
    /// Remaining moves of the last optimal plan.
    plan: Vec<DVector<f64>>,
}

impl MpcController {
    pub fn new(
        aug: &AugmentedModel,
        weights: MpcWeights,
        limits: &MpcLimits,
        variant: Variant,
        cfg: &MpcConfig,
    ) -> Result<Self, MpcError> {
        weights.validate(aug.p(), aug.m()).map_err(MpcError::Weights)?;
        if limits.output.rows.ncols() != aug.p() || limits.input.rows.ncols() != aug.m() {
            return Err(MpcError::Dimension("limit rows do not match the model".into()));
        }
        let model = CondensedModel::new(aug, weights.n_p, weights.n_c);
        let terminal = match variant {
            Variant::WithCotc => {
                let d = &aug.base;
                let q = DMatrix::from_diagonal(&weights.q);
                let r = DMatrix::from_diagonal(&weights.r);
                Some(incremental_terminal_weight(&d.a, &d.b, &d.c, &q, &r, cfg.riccati_tol, cfg.riccati_max_iter)?)
            }
            Variant::WithoutCotc => None,
        };
        let tilt_gain = sustained_tilt_gain(&aug.base);
        let template = build_template(&model, &weights, limits, variant, terminal.as_ref(), &tilt_gain);
        Ok(Self {
            variant,
            u_prev: DVector::zeros(aug.m()),
            weights,
            model,
            template,
            terminal,
            tilt_gain,
            settings: QpSettings { max_iter: cfg.max_iter, ..QpSettings::default() },
            plan: Vec::new(),
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn weights(&self) -> &MpcWeights {
        &self.weights
    }

    pub fn model(&self) -> &CondensedModel {
        &self.model
    }

    pub fn terminal_weight(&self) -> Option<&DMatrix<f64>> {
        self.terminal.as_ref()
    }

    /// See [`sustained_tilt_gain`].
    pub fn tilt_gain(&self) -> &DMatrix<f64> {
        &self.tilt_gain
    }

    pub fn last_input(&self) -> &DVector<f64> {
        &self.u_prev
    }

    /// Overrides the input the next increment is applied to (used when an
    /// external mixer applies something else than this controller's move).
    pub fn set_last_input(&mut self, u: &DVector<f64>) {
        self.u_prev.copy_from(u);
    }

    pub fn reset(&mut self) {
        self.u_prev.fill(0.0);
        self.plan.clear();
    }

    /// Condensed QP at augmented state `x0` for references
    /// `r(k), …, r(k+N_p)`.
    pub fn build_qp(&self, x0: &DVector<f64>, refs: &[DVector<f64>]) -> Result<QpProblem, MpcError> {
        let (n, p, n_p) = (self.model.n, self.model.p, self.model.n_p);
        if x0.len() != n {
            return Err(MpcError::Dimension(format!("state has {} entries, expected {n}", x0.len())));
        }
        if refs.len() < n_p + 1 || refs.iter().any(|r| r.len() != p) {
            return Err(MpcError::Dimension(format!("need {} references of length {p}", n_p + 1)));
        }
        let t = &self.template;
        let mut stacked = DVector::zeros(n_p * p);
        for i in 1..=n_p {
            stacked.rows_mut((i - 1) * p, p).copy_from(&refs[i]);
        }
        // the terminal rows pin the horizontal force to r(k); the terminal
        // cost aims at the same value so it does not fight the constraint
        // through the off-diagonal terms of P
        let mut terminal_ref = refs[n_p].clone();
        if self.variant == Variant::WithCotc {
            for o in TERMINAL_FORCE_OUTPUTS {
                stacked[(n_p - 1) * p + o] = refs[0][o];
                terminal_ref[o] = refs[0][o];
            }
        }
        let u = &self.u_prev;
        let f = &t.fx * x0 + &t.fr * &stacked + &t.fu * u;

        let free = &self.model.phi * x0 - &stacked;
        let mut constant = free.iter().zip(t.stage_weight.iter()).map(|(e, w)| w * e * e).sum::<f64>();
        let n_s = self.model.n_c.saturating_sub(1) as f64;
        constant += n_s * u.iter().zip(t.s.iter()).map(|(v, s)| s * v * v).sum::<f64>();
        if let Some(pt) = &self.terminal {
            let mut e = &self.model.a_np * x0;
            let mut tail = e.rows_mut(n - p, p);
            tail -= &terminal_ref;
            constant += e.dot(&(pt * &e));
        }

        let h = &t.h0 + &t.hx * x0 + &t.hu * u;
        let e = &t.ex * x0 + &t.er * &refs[0] + &t.eu * u;
        Ok(QpProblem { hessian: t.hessian.clone(), f, constant, g: t.g.clone(), h, e_mat: t.e_mat.clone(), e })
    }

    /// One receding-horizon step: solve, apply the first increment and
    /// remember the rest of the plan. When the QP has no optimal solution
    /// the next move of the last optimal plan is used instead (zero once
    /// the plan is exhausted).
    pub fn step(&mut self, x0: &DVector<f64>, refs: &[DVector<f64>]) -> Result<StepOutcome, MpcError> {
        let m = self.model.m;
        let qp = self.build_qp(x0, refs)?;
        let sol = solve_qp_with(&qp, &self.settings)?;
        let (delta, fallback, z) = if sol.status == QpStatus::Optimal {
            let z = sol.z.clone();
            self.plan = (1..self.model.n_c).map(|j| z.rows(j * m, m).into_owned()).collect();
            (z.rows(0, m).into_owned(), false, Some(z))
        } else {
            let d = if self.plan.is_empty() { DVector::zeros(m) } else { self.plan.remove(0) };
            (d, true, None)
        };
        self.u_prev += &delta;
        Ok(StepOutcome {
            u: self.u_prev.clone(),
            delta_u: delta,
            status: sol.status,
            z,
            objective: sol.objective,
            iterations: sol.iterations,
            fallback,
        })
    }
}

fn one_shot(
    aug: &AugmentedModel,
    w: &MpcWeights,
    x0: &DVector<f64>,
    u_prev: &DVector<f64>,
    refs: &[DVector<f64>],
    limits: &MpcLimits,
    cfg: &MpcConfig,
    variant: Variant,
) -> Result<QpProblem, MpcError> {
    let mut c = MpcController::new(aug, w.clone(), limits, variant, cfg)?;
    c.set_last_input(u_prev);
    c.build_qp(x0, refs)
}

/// Condensed QP of the variant with terminal constraints, for one state.
pub fn build_qp_with_cotc(
    aug: &AugmentedModel,
    w: &MpcWeights,
    x0: &DVector<f64>,
    u_prev: &DVector<f64>,
    refs: &[DVector<f64>],
    limits: &MpcLimits,
    cfg: &MpcConfig,
) -> Result<QpProblem, MpcError> {
    one_shot(aug, w, x0, u_prev, refs, limits, cfg, Variant::WithCotc)
}

/// Condensed QP of the variant without terminal constraints.
pub fn build_qp_without_cotc(
    aug: &AugmentedModel,
    w: &MpcWeights,
    x0: &DVector<f64>,
    u_prev: &DVector<f64>,
    refs: &[DVector<f64>],
    limits: &MpcLimits,
    cfg: &MpcConfig,
) -> Result<QpProblem, MpcError> {
    one_shot(aug, w, x0, u_prev, refs, limits, cfg, Variant::WithoutCotc)
}
