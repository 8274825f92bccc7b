//! Small dense linear-algebra helpers shared across modules.

use nalgebra::DMatrix;

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Orthonormal basis of the column space of `m`, with singular values
/// below `tol · σ_max` treated as zero. `scale` overrides `σ_max` when
/// given.
pub fn orth(m: &DMatrix<f64>, tol: f64, scale: Option<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = scale.unwrap_or_else(|| svd.singular_values.max());
    if smax <= 0.0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let keep: Vec<usize> =
        svd.singular_values.iter().enumerate().filter(|(_, s)| **s > tol * smax).map(|(i, _)| i).collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

pub fn rank(m: &DMatrix<f64>, tol: f64) -> usize {
    orth(m, tol, None).ncols()
}

/// Orthonormal basis of the controllable subspace of `(a, b)`, grown one
/// Krylov block at a time with fresh directions orthogonalized against
/// the basis found so far.
pub fn controllable_basis(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let a_norm = a.norm();
    let mut basis = orth(b, tol, None);
    let mut frontier = basis.clone();
    while basis.ncols() < n && frontier.ncols() > 0 && a_norm > 0.0 {
        let mut next = a * &frontier;
        // two passes of Gram-Schmidt against the current basis
        for _ in 0..2 {
            let proj = &basis * (basis.transpose() * &next);
            next -= proj;
        }
        let fresh = orth(&next, tol, Some(a_norm));
        if fresh.ncols() == 0 {
            break;
        }
        let mut grown = DMatrix::zeros(n, basis.ncols() + fresh.ncols());
        grown.columns_mut(0, basis.ncols()).copy_from(&basis);
        grown.columns_mut(basis.ncols(), fresh.ncols()).copy_from(&fresh);
        basis = grown;
        frontier = fresh;
    }
    basis
}

/// Dimension of the controllable subspace equals the state dimension.
pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    controllable_basis(a, b, tol).ncols() == a.nrows()
}

/// Observability of `(a, c)` by duality.
pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: f64) -> bool {
    is_controllable(&a.transpose(), &c.transpose(), tol)
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_diag_layout() {
        let a = DMatrix::from_element(1, 2, 1.0);
        let b = DMatrix::from_element(2, 1, 2.0);
        let d = block_diag(&[a, b]);
        assert_eq!(d.shape(), (3, 3));
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(2, 2)], 2.0);
        assert_eq!(d[(0, 2)], 0.0);
        assert_eq!(d[(1, 0)], 0.0);
    }

    #[test]
    fn detects_uncontrollable_duplicate_integrator() {
        // two integrators driven by the same input
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert_eq!(controllable_basis(&a, &b, 1e-10).ncols(), 1);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(is_controllable(&a, &b, 1e-10));
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(!is_observable(&a, &c, 1e-10));
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let t = 0.3f64;
        let r = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]) * 0.9;
        assert!((spectral_radius(&r) - 0.9).abs() < 1e-12);
    }
}
