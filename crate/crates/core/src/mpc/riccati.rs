//! Terminal weighting from the discrete algebraic Riccati equation
//! `P = AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA + Q`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::symmetrize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("R is not positive definite")]
    InputWeight,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// `‖RHS(P) − P‖∞` of the Riccati fixed point.
pub fn dare_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let pa = p * a;
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let k =
        s.lu().solve(&(pb.transpose() * a)).unwrap_or_else(|| DMatrix::from_element(b.ncols(), a.ncols(), f64::NAN));
    let rhs = a.transpose() * &pa - a.transpose() * &pb * k + q;
    (rhs - p).abs().max()
}

/// Stabilizing DARE solution by the structure-preserving doubling
/// algorithm. With `B = 0` this reduces to the doubling form of the
/// Stein equation `P = AᵀPA + Q`.
pub fn terminal_weight(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>, RiccatiError> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(RiccatiError::Dimension(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let r_chol = r.clone().cholesky().ok_or(RiccatiError::InputWeight)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r_chol.solve(&b.transpose());
    let mut hk = q.clone();
    symmetrize(&mut gk);

    for it in 1..=max_iter {
        let w = &eye + &gk * &hk;
        let lu = w.lu();
        let (Some(w_a), Some(w_g)) = (lu.solve(&ak), lu.solve(&gk)) else {
            return Err(RiccatiError::NoConvergence { iterations: it, residual: f64::INFINITY });
        };
        let h_next = &hk + ak.transpose() * &hk * &w_a;
        let g_next = &gk + &ak * &w_g * ak.transpose();
        let a_next = &ak * &w_a;
        let change = (&h_next - &hk).abs().max();
        hk = h_next;
        gk = g_next;
        ak = a_next;
        symmetrize(&mut hk);
        symmetrize(&mut gk);
        if hk.iter().any(|v| !v.is_finite()) {
            return Err(RiccatiError::NoConvergence { iterations: it, residual: f64::INFINITY });
        }
        if change <= tol * hk.abs().max().max(1.0) * 1e-3 || ak.abs().max() < 1e-300 {
            break;
        }
        if it == max_iter {
            let residual = dare_residual(a, b, q, r, &hk);
            return Err(RiccatiError::NoConvergence { iterations: it, residual });
        }
    }
    let residual = dare_residual(a, b, q, r, &hk);
    if !(residual <= tol * hk.abs().max().max(1.0)) {
        return Err(RiccatiError::NoConvergence { iterations: max_iter, residual });
    }
    Ok(hk)
}

/// Orthonormal basis of the complement of the left null space of
/// `[A − I, B]`. Each left null vector `y` is a conserved quantity
/// (`yᵀA = yᵀ`, `yᵀB = 0`): a unit-eigenvalue mode no input can move.
/// Trajectories that start at rest never leave the returned subspace.
pub fn conserved_complement(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut k = DMatrix::zeros(n, n + b.ncols());
    k.view_mut((0, 0), (n, n)).copy_from(&(a - DMatrix::<f64>::identity(n, n)));
    k.view_mut((0, n), (n, b.ncols())).copy_from(b);
    let svd = k.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol * smax).collect();
    DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])])
}

/// Terminal weight of the incremental model
/// `[Δx(k); y(k)]` built from `(A, B, C)`.
///
/// The incremental state is the image `x = N ζ` of the minimal coordinates
/// `ζ = [x(k−1); u(k−1)]`, restricted to the part of `x` not pinned by
/// conserved quantities. There the dynamics
/// `ζ(k+1) = [[A, B], [0, I]] ζ(k) + [0; I] Δu(k)` are stabilizable, so the
/// Riccati equation with state weight `NᵀQN` has a stabilizing solution
/// `P_ζ`, which is mapped back as `P = N⁺ᵀ P_ζ N⁺`. On every incremental
/// state reachable from rest `P` satisfies the Riccati fixed point of the
/// incremental model itself.
pub fn incremental_terminal_weight(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>, RiccatiError> {
    let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
    if q.shape() != (p, p) {
        return Err(RiccatiError::Dimension(format!("Q is {:?}, expected {p}x{p}", q.shape())));
    }
    let basis = incremental_basis(a, b, c);
    let reach = conserved_complement(a, b, 1e-10);
    let nr = reach.ncols();

    // ζ-space restricted to span(reach) ⊕ R^m
    let mut v = DMatrix::zeros(n + m, nr + m);
    v.view_mut((0, 0), (n, nr)).copy_from(&reach);
    v.view_mut((n, nr), (m, m)).fill_with_identity();
    let mut az = DMatrix::zeros(n + m, n + m);
    az.view_mut((0, 0), (n, n)).copy_from(a);
    az.view_mut((0, n), (n, m)).copy_from(b);
    az.view_mut((n, n), (m, m)).fill_with_identity();
    let mut bz = DMatrix::zeros(n + m, m);
    bz.view_mut((n, 0), (m, m)).fill_with_identity();

    let ar = v.transpose() * az * &v;
    let br = v.transpose() * bz;
    let nmat = &basis * &v;
    let y_block = nmat.rows(n, p);
    let qr = y_block.transpose() * q * y_block;
    let pr = terminal_weight(&ar, &br, &qr, r, tol, max_iter)?;

    let pinv = nmat
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|_| RiccatiError::Dimension("incremental map has no pseudo-inverse".into()))?;
    let mut out = pinv.transpose() * pr * pinv;
    symmetrize(&mut out);
    Ok(out)
}

/// `N = [[A − I, B], [C A, C B]]`: maps `[x(k−1); u(k−1)]` to
/// `[x(k) − x(k−1); y(k)]`.
pub fn incremental_basis(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
    let mut out = DMatrix::zeros(n + p, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(&(a - DMatrix::<f64>::identity(n, n)));
    out.view_mut((0, n), (n, m)).copy_from(b);
    out.view_mut((n, 0), (p, n)).copy_from(&(c * a));
    out.view_mut((n, n), (p, m)).copy_from(&(c * b));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_matches_fixed_point_iteration() {
        // plain iteration of the Riccati map from P = Q
        let mut p = 1.0f64;
        for _ in 0..10_000 {
            let next = 0.25 * p - 0.25 * p * p / (1.0 + p) + 1.0;
            if (next - p).abs() < 1e-15 {
                break;
            }
            p = next;
        }
        let got = terminal_weight(&scalar(0.5), &scalar(1.0), &scalar(1.0), &scalar(1.0), 1e-12, 100).unwrap();
        assert!((got[(0, 0)] - p).abs() < 1e-12);
        assert!((got[(0, 0)] - 1.1328).abs() < 1e-4);
    }

    #[test]
    fn zero_input_gives_lyapunov_series() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]);
        let mut series = DMatrix::zeros(2, 2);
        let mut ak = DMatrix::identity(2, 2);
        for _ in 0..200 {
            series += ak.transpose() * &q * &ak;
            ak = &a * ak;
        }
        let p = terminal_weight(&a, &DMatrix::zeros(2, 1), &q, &scalar(1.0), 1e-12, 100).unwrap();
        assert!((p - series).abs().max() < 1e-12);
    }

    #[test]
    fn zero_state_weight() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 0.1]);
        let p = terminal_weight(&a, &b, &DMatrix::zeros(2, 2), &scalar(1.0), 1e-12, 100).unwrap();
        assert_eq!(p.abs().max(), 0.0);
    }

    #[test]
    fn unstable_uncontrollable_mode_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        assert!(matches!(
            terminal_weight(&a, &b, &q, &scalar(1.0), 1e-10, 60),
            Err(RiccatiError::NoConvergence { .. })
        ));
    }

    fn augmented(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
        let mut aa = DMatrix::zeros(n + p, n + p);
        aa.view_mut((0, 0), (n, n)).copy_from(a);
        aa.view_mut((n, 0), (p, n)).copy_from(&(c * a));
        aa.view_mut((n, n), (p, p)).fill_with_identity();
        let mut ba = DMatrix::zeros(n + p, m);
        ba.view_mut((0, 0), (n, m)).copy_from(b);
        ba.view_mut((n, 0), (p, m)).copy_from(&(c * b));
        let mut ca = DMatrix::zeros(p, n + p);
        ca.view_mut((0, n), (p, p)).fill_with_identity();
        (aa, ba, ca)
    }

    #[test]
    fn incremental_weight_matches_direct_solution_when_minimal() {
        // square incremental model (p = m): the direct equation is well posed
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.7]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let q = scalar(2.0);
        let r = scalar(0.1);
        let (aa, ba, ca) = augmented(&a, &b, &c);
        let direct = terminal_weight(&aa, &ba, &(ca.transpose() * &q * &ca), &r, 1e-12, 100).unwrap();
        let reduced = incremental_terminal_weight(&a, &b, &c, &q, &r, 1e-12, 100).unwrap();
        assert!((direct - reduced).abs().max() < 1e-8);
    }

    #[test]
    fn incremental_weight_with_duplicate_integrators() {
        // two integrators fed by one input plus a stable mode: one conserved
        // quantity and a non-minimal incremental model
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.6]);
        let b = DMatrix::from_column_slice(3, 1, &[0.1, 0.1, 1.0]);
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5]));
        let r = scalar(0.2);
        assert_eq!(conserved_complement(&a, &b, 1e-10).ncols(), 2);
        let (aa, ba, ca) = augmented(&a, &b, &c);
        let q_aug = ca.transpose() * &q * &ca;
        let p = incremental_terminal_weight(&a, &b, &c, &q, &r, 1e-12, 100).unwrap();
        // fixed point holds on incremental states reachable from rest
        let reach = conserved_complement(&a, &b, 1e-10);
        let mut v = DMatrix::zeros(4, 3);
        v.view_mut((0, 0), (3, 2)).copy_from(&reach);
        v[(3, 2)] = 1.0;
        let nmat = incremental_basis(&a, &b, &c) * v;
        let pb = &p * &ba;
        let gain = (&r + ba.transpose() * &pb).lu().solve(&(pb.transpose() * &aa)).unwrap();
        let rhs = aa.transpose() * &p * &aa - aa.transpose() * &pb * gain + q_aug;
        let res = nmat.transpose() * (rhs - &p) * &nmat;
        assert!(res.abs().max() < 1e-9, "{res}");
    }
}
