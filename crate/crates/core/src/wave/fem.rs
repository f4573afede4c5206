//! Piecewise-linear finite elements on `[0, 1]` with homogeneous Dirichlet
//! ends.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::PsdMatrix;

/// Nodes and weights of 10-point Gauss–Legendre quadrature on `[-1, 1]`.
const GAUSS_10: [(f64, f64); 5] = [
    (0.148_874_338_981_631_2, 0.295_524_224_714_752_9),
    (0.433_395_394_129_247_2, 0.269_266_719_309_996_3),
    (0.679_409_568_299_024_4, 0.219_086_362_515_982_0),
    (0.865_063_366_688_984_5, 0.149_451_349_150_580_6),
    (0.973_906_528_517_171_7, 0.066_671_344_308_688_1),
];

/// Equispaced mesh with `n_interior` interior nodes, `h = 1/(n_interior + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FemMesh1D {
    pub n_interior: usize,
    pub h: f64,
}

impl FemMesh1D {
    pub fn new(n_interior: usize) -> Result<Self> {
        if n_interior == 0 {
            return Err(Error::InvalidParameter("mesh needs at least one interior node".into()));
        }
        Ok(Self {
            n_interior,
            h: 1.0 / (n_interior + 1) as f64,
        })
    }

    /// Coordinate of interior node `i` (0-based).
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }
}

fn tridiag(n: usize, diag: f64, off: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag
        } else if i.abs_diff(j) == 1 {
            off
        } else {
            0.0
        }
    })
}

/// Mass `(h/6)·tridiag(1, 4, 1)` and stiffness `(1/h)·tridiag(−1, 2, −1)`.
pub fn assemble_fem(mesh: &FemMesh1D) -> Result<(PsdMatrix<f64>, PsdMatrix<f64>)> {
    let n = mesh.n_interior;
    let h = mesh.h;
    let mass = tridiag(n, 4.0 * h / 6.0, h / 6.0);
    let stiffness = tridiag(n, 2.0 / h, -1.0 / h);
    Ok((PsdMatrix::new(mass)?, PsdMatrix::new(stiffness)?))
}

/// `∫₀¹ f φ_i dx` for every interior hat `φ_i`, by 10-point Gauss–Legendre
/// quadrature on each element.
pub fn load_vector(mesh: &FemMesh1D, f: impl Fn(f64) -> f64) -> DVector<f64> {
    let n = mesh.n_interior;
    let h = mesh.h;
    let mut out = DVector::zeros(n);
    for e in 0..=n {
        let left = e as f64 * h;
        for &(xi, wi) in &GAUSS_10 {
            for s in [-xi, xi] {
                let x = left + (s + 1.0) * h / 2.0;
                let fw = f(x) * wi * h / 2.0;
                // element e spans nodes e (left, index e-1) and e+1 (right, index e)
                if e >= 1 {
                    out[e - 1] += fw * (left + h - x) / h;
                }
                if e < n {
                    out[e] += fw * (x - left) / h;
                }
            }
        }
    }
    out
}

/// Coarse hats written in the fine hat basis: column `j` holds the
/// interpolation weights `1 − |d|/k` around fine node `(j+1)·k`, with
/// `k = (n_f + 1)/(n_c + 1)`.
pub fn interpolation_embedding(n_f: usize, n_c: usize) -> Result<DMatrix<f64>> {
    if n_c == 0 || n_f == 0 || n_c > n_f || (n_f + 1) % (n_c + 1) != 0 {
        return Err(Error::IncompatibleMeshes {
            fine_plus_one: n_f + 1,
            coarse_plus_one: n_c + 1,
        });
    }
    let k = (n_f + 1) / (n_c + 1);
    let mut e = DMatrix::zeros(n_f, n_c);
    for j in 0..n_c {
        let centre = (j + 1) * k;
        for d in 0..k {
            let w = 1.0 - d as f64 / k as f64;
            e[(centre - 1 + d, j)] = w;
            e[(centre - 1 - d, j)] = w;
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_matrices() {
        let mesh = FemMesh1D::new(2).unwrap();
        let (m, k) = assemble_fem(&mesh).unwrap();
        let k_expect = DMatrix::from_row_slice(2, 2, &[6.0, -3.0, -3.0, 6.0]);
        let m_expect = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 4.0]) / 18.0;
        assert!((k.as_matrix() - k_expect).amax() < 1e-13);
        assert!((m.as_matrix() - m_expect).amax() < 1e-15);
    }

    #[test]
    fn stiffness_is_positive_definite() {
        let (m, k) = assemble_fem(&FemMesh1D::new(10).unwrap()).unwrap();
        assert!(k.is_positive_definite(1e-12));
        assert!(m.is_positive_definite(1e-12));
    }

    #[test]
    fn load_of_polynomials_is_exact() {
        // ∫ φ_i = h and ∫ x φ_i = h x_i for interior hats
        let mesh = FemMesh1D::new(7).unwrap();
        let ones = load_vector(&mesh, |_| 1.0);
        let lin = load_vector(&mesh, |x| x);
        for i in 0..7 {
            assert!((ones[i] - mesh.h).abs() < 1e-15);
            assert!((lin[i] - mesh.h * mesh.node(i)).abs() < 1e-15);
        }
    }

    #[test]
    fn embedding_weights() {
        let e = interpolation_embedding(5, 2).unwrap();
        let expect = DMatrix::from_row_slice(5, 2, &[0.5, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0, 0.0, 0.5]);
        assert_eq!(e, expect);
        assert_eq!(interpolation_embedding(4, 4).unwrap(), DMatrix::identity(4, 4));
        assert!(matches!(
            interpolation_embedding(65, 4),
            Err(Error::IncompatibleMeshes { .. })
        ));
    }
}
