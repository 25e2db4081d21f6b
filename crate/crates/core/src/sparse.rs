//! Sparse symmetric matrices in CSR form and a Jacobi-preconditioned
//! conjugate-gradient solver.
//!
//! The stiffness and screened systems assembled by the solvers are symmetric
//! positive (semi)definite; CG convergence doubles as the convexity
//! certificate for the Newton steps. All reductions are sequential, so a
//! solve is bitwise reproducible regardless of how callers schedule
//! independent solves.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("conjugate gradient failed to reach {target:e} within {iterations} iterations (achieved {achieved:e})")]
    NoConvergence {
        target: f64,
        achieved: f64,
        iterations: usize,
    },
    #[error("matrix is not positive definite: p·Ap = {0:e}")]
    NotPositiveDefinite(f64),
    #[error("dimension mismatch: matrix {matrix}, vector {vector}")]
    DimensionMismatch { matrix: usize, vector: usize },
}

/// Symmetric sparse matrix, CSR layout, both triangles stored.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

/// Accumulates (i, j, v) triplets; duplicates are summed.
#[derive(Debug)]
pub struct CooBuilder {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl CooBuilder {
    pub fn new(n: usize) -> Self {
        CooBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i as u32, j as u32, v));
    }

    /// Adds the symmetric pair `(i, j)` and `(j, i)`.
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.add(i, j, v);
        if i != j {
            self.add(j, i, v);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries
            .sort_unstable_by_key(|&(i, j, _)| ((i as u64) << 32) | j as u64);
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut k = 0;
        while k < self.entries.len() {
            let (i, j, mut v) = self.entries[k];
            k += 1;
            while k < self.entries.len() && self.entries[k].0 == i && self.entries[k].1 == j {
                v += self.entries[k].2;
                k += 1;
            }
            cols.push(j as usize);
            vals.push(v);
            row_ptr[i as usize + 1] += 1;
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

impl CsrMatrix {
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    d[i] += self.vals[k];
                }
            }
        }
        d
    }

    /// `self + diag(d)`, assuming every diagonal slot is present (the
    /// assemblers always emit one).
    pub fn plus_diagonal(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            let mut found = false;
            for k in out.row_ptr[i]..out.row_ptr[i + 1] {
                if out.cols[k] == i {
                    out.vals[k] += d[i];
                    found = true;
                    break;
                }
            }
            assert!(found, "missing diagonal slot in row {i}");
        }
        out
    }

    /// `self * a`, scaling every entry.
    pub fn scaled(&self, a: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= a;
        }
        out
    }

    /// Largest absolute row sum (induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.row_ptr[i]..self.row_ptr[i + 1]
            })
            .map(|r| r.map(|k| self.vals[k].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// `tol` is relative to `‖b‖`; a non-positive curvature direction aborts with
/// `NotPositiveDefinite`, which doubles as the convexity check for Newton
/// systems.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution, SparseError> {
    let n = a.n;
    if b.len() != n {
        return Err(SparseError::DimensionMismatch {
            matrix: n,
            vector: b.len(),
        });
    }
    let norm_b = dot(b, b).sqrt();
    if norm_b == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = a.matvec(&x);
        for i in 0..n {
            r[i] -= ax[i];
        }
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut residual = dot(&r, &r).sqrt() / norm_b;

    for iter in 0..max_iter {
        if residual <= tol {
            return Ok(CgSolution {
                x,
                iterations: iter,
                relative_residual: residual,
            });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(SparseError::NotPositiveDefinite(pap));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        residual = dot(&r, &r).sqrt() / norm_b;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if residual <= tol {
        Ok(CgSolution {
            x,
            iterations: max_iter,
            relative_residual: residual,
        })
    } else {
        Err(SparseError::NoConvergence {
            target: tol,
            achieved: residual,
            iterations: max_iter,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_path(n: usize) -> CsrMatrix {
        // 1D path graph Laplacian plus identity: SPD, well conditioned.
        let mut b = CooBuilder::new(n);
        for i in 0..n {
            let mut deg = 1.0; // +I
            if i > 0 {
                b.add_sym(i, i - 1, -1.0);
                deg += 1.0;
            }
            if i + 1 < n {
                deg += 1.0;
            }
            b.add(i, i, deg);
        }
        b.build()
    }

    #[test]
    fn builder_sums_duplicates() {
        let mut b = CooBuilder::new(2);
        b.add(0, 0, 1.0);
        b.add(0, 0, 2.0);
        b.add(1, 1, 1.0);
        b.add(0, 1, 0.5);
        let m = b.build();
        assert_eq!(m.matvec(&[1.0, 0.0]), vec![3.0, 0.0]);
        assert_eq!(m.matvec(&[0.0, 1.0]), vec![0.5, 1.0]);
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 200;
        let a = laplacian_path(n);
        let x_true: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let b = a.matvec(&x_true);
        let sol = conjugate_gradient(&a, &b, None, 1e-13, 10 * n).unwrap();
        let err = sol
            .x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn cg_warm_start_converges_faster() {
        let n = 400;
        let a = laplacian_path(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
        let b = a.matvec(&x_true);
        let cold = conjugate_gradient(&a, &b, None, 1e-12, 10 * n).unwrap();
        let mut near = x_true.clone();
        near[0] += 1e-3;
        let warm = conjugate_gradient(&a, &b, Some(&near), 1e-12, 10 * n).unwrap();
        assert!(warm.iterations < cold.iterations);
    }

    #[test]
    fn cg_rejects_indefinite() {
        let mut b = CooBuilder::new(2);
        b.add(0, 0, 1.0);
        b.add(1, 1, -1.0);
        let a = b.build();
        let r = conjugate_gradient(&a, &[0.0, 1.0], None, 1e-12, 100);
        assert!(matches!(r, Err(SparseError::NotPositiveDefinite(_))));
    }
}
