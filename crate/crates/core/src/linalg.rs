//! Small dense LU factorization used for simplex bases and `M^{-1}` solves.

/// Row-major LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors the row-major `n x n` matrix `a`. Returns `None` when a pivot
    /// falls below `rel_tol` times the largest absolute entry of `a`.
    pub fn factor(a: &[f64], n: usize, rel_tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs <= rel_tol * scale {
                return None;
            }
            if pivot_row != col {
                for k in 0..n {
                    lu.swap(col * n + k, pivot_row * n + k);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = lu[col * n + col];
            for r in (col + 1)..n {
                let factor = lu[r * n + col] / pivot;
                lu[r * n + col] = factor;
                if factor != 0.0 {
                    for k in (col + 1)..n {
                        lu[r * n + k] -= factor * lu[col * n + k];
                    }
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for k in 0..r {
                acc -= self.lu[r * n + k] * x[k];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for k in (r + 1)..n {
                acc -= self.lu[r * n + k] * x[k];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // A = P^T L U, so A^T x = b  <=>  U^T L^T (P x) = b
        let mut w = b.to_vec();
        for r in 0..n {
            let mut acc = w[r];
            for k in 0..r {
                acc -= self.lu[k * n + r] * w[k];
            }
            w[r] = acc / self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            let mut acc = w[r];
            for k in (r + 1)..n {
                acc -= self.lu[k * n + r] * w[k];
            }
            w[r] = acc;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        (0..n).map(|r| (0..n).map(|c| a[r * n + c] * x[c]).sum()).collect()
    }

    fn transpose(a: &[f64], n: usize) -> Vec<f64> {
        let mut t = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                t[c * n + r] = a[r * n + c];
            }
        }
        t
    }

    #[test]
    fn solves_and_transposed_solves() {
        let a = [0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, -1.0, 4.0];
        let lu = Lu::factor(&a, 3, 1e-12).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b);
        for (u, v) in matvec(&a, &x, 3).iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let y = lu.solve_transpose(&b);
        for (u, v) in matvec(&transpose(&a, 3), &y, 3).iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_singular() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(Lu::factor(&a, 2, 1e-12).is_none());
        assert!(Lu::factor(&[0.0; 4], 2, 1e-12).is_none());
    }
}
