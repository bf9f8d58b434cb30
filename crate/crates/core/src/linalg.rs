//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::basis::C64;
use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Singular values below this fraction of the largest one are discarded.
pub const SVD_CUTOFF: f64 = 1e-12;

/// Least-squares solution of `min ||A X - B||_F`.
///
/// Full-column-rank, tall systems are solved by Householder QR; otherwise an
/// SVD with relative singular-value cutoff [`SVD_CUTOFF`] gives the minimum-norm
/// solution. Returns the solution and the 2-norm condition number of `A`.
pub fn lstsq<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<(DMatrix<T>, f64)>
where
    T: ComplexField<RealField = f64>,
{
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "lstsq: A has {} rows, B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = if a.ncols() > a.nrows() { 0.0 } else { sv.min() };
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond < 1.0 / SVD_CUTOFF {
        let qr = a.clone().qr();
        let qtb = qr.q().adjoint() * b;
        let x = qr
            .r()
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Dimension("lstsq: singular triangular factor".into()))?;
        return Ok((x, cond));
    }
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(b, SVD_CUTOFF * smax)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok((x, cond))
}

/// Moore-Penrose pseudo-inverse.
pub fn pinv(a: &CMatrix) -> CMatrix {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.pseudo_inverse(SVD_CUTOFF * smax.max(f64::MIN_POSITIVE))
        .expect("svd computed with u and v")
}

/// Orthogonal projector onto the complement of the column space of `a`.
pub fn projector_perp(a: &CMatrix) -> CMatrix {
    let m = a.nrows();
    CMatrix::identity(m, m) - a * pinv(a)
}

/// 2-norm condition number.
pub fn condition_number(a: &CMatrix) -> f64 {
    let sv = a.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

/// Orthonormal basis of the span of `cols` by modified Gram-Schmidt.
///
/// Columns whose residual falls below `rel_tol` times their norm are dropped,
/// matching the range of the pseudo-inverse projector. Returns the basis and
/// the number of dropped columns.
pub fn orthonormalize(cols: &[&CVector], rel_tol: f64) -> (Vec<CVector>, usize) {
    let mut basis: Vec<CVector> = Vec::with_capacity(cols.len());
    let mut dropped = 0;
    for c in cols {
        let norm0 = c.norm();
        let mut v = (*c).clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dotc(&v);
                v.axpy(-proj, q, C64::new(1.0, 0.0));
            }
        }
        let n = v.norm();
        if norm0 == 0.0 || n <= rel_tol * norm0 {
            dropped += 1;
            continue;
        }
        v.unscale_mut(n);
        basis.push(v);
    }
    (basis, dropped)
}

/// `Re tr{ (I - Q Q^H) R }` for an orthonormal set `Q` and Hermitian `R`.
pub fn residual_power(r: &CMatrix, basis: &[CVector]) -> f64 {
    let mut total = r.trace().re;
    for q in basis {
        total -= quad_form(r, q);
    }
    total
}

/// `Re{ v^H R v }`.
pub fn quad_form(r: &CMatrix, v: &CVector) -> f64 {
    let m = v.len();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..m {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..m {
            row += r[(i, j)] * v[j];
        }
        acc += v[i].conj() * row;
    }
    acc.re
}

/// Largest eigenpair of the Hermitian pencil `x h = lambda y h` for 2x2 `x`, `y`
/// with `y` positive definite.
pub fn max_generalized_eig_2x2(x: &[[C64; 2]; 2], y: &[[C64; 2]; 2]) -> (f64, [C64; 2]) {
    // det(x - l y) = a l^2 + b l + c
    let det = |m: &[[C64; 2]; 2]| m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let a = det(y).re;
    let c = det(x).re;
    let b = -(x[0][0] * y[1][1] + x[1][1] * y[0][0] - x[0][1] * y[1][0] - x[1][0] * y[0][1]).re;
    let lambda = if a.abs() < 1e-300 {
        if b.abs() < 1e-300 {
            0.0
        } else {
            -c / b
        }
    } else {
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        let q = -0.5 * (b + b.signum() * disc);
        let r1 = q / a;
        let r2 = if q != 0.0 { c / q } else { r1 };
        r1.max(r2)
    };
    let m = [
        [x[0][0] - y[0][0] * lambda, x[0][1] - y[0][1] * lambda],
        [x[1][0] - y[1][0] * lambda, x[1][1] - y[1][1] * lambda],
    ];
    // null vector of m from the row with the larger norm
    let r0 = m[0][0].norm_sqr() + m[0][1].norm_sqr();
    let r1 = m[1][0].norm_sqr() + m[1][1].norm_sqr();
    let h = if r0.max(r1) < 1e-300 {
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    } else if r0 >= r1 {
        [m[0][1], -m[0][0]]
    } else {
        [m[1][1], -m[1][0]]
    };
    (lambda, h)
}

/// Inverse of a real symmetric positive semidefinite matrix after diagonal
/// equilibration. Eigenvalues below `SVD_CUTOFF` times the largest are
/// treated as zero (pseudo-inverse); the flag reports whether that happened.
pub fn sym_psd_inverse(f: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let n = f.nrows();
    let scale = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let d = f[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        }),
    );
    let mut s = f.clone();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] *= scale[i] * scale[j];
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut degenerate = scale.iter().any(|&v| v == 0.0);
    let mut inv = DMatrix::zeros(n, n);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if lmax <= 0.0 || l <= SVD_CUTOFF * lmax {
            degenerate = true;
            continue;
        }
        let v = eig.eigenvectors.column(k);
        inv += (v * v.transpose()) / l;
    }
    for i in 0..n {
        for j in 0..n {
            inv[(i, j)] *= scale[i] * scale[j];
        }
    }
    (inv, degenerate)
}

/// Serde adapter writing a complex matrix as rows of `[re, im]` pairs.
pub mod serde_cmatrix {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use super::CMatrix;
    use crate::basis::C64;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = m.row_iter().map(|r| r.iter().map(|z| [z.re, z.im]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged complex matrix"));
        }
        Ok(CMatrix::from_fn(rows.len(), ncols, |i, j| {
            C64::new(rows[i][j][0], rows[i][j][1])
        }))
    }
}

/// Serde adapter for a real matrix as nested rows.
pub mod serde_rmatrix {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}
