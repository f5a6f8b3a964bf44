//! Symmetric tridiagonal eigenproblems: Sturm-sequence bisection for
//! eigenvalues and inverse iteration for eigenvectors. O(N) memory and
//! O(N) work per bisection step.

/// Symmetric tridiagonal matrix stored as its diagonal and first
/// off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty(), "empty matrix");
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length must be n - 1");
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn norm_bound(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly below `x` (Sturm count from the
    /// pivots of the LDLᵀ factorization of T − xI).
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = f64::MIN_POSITIVE.max(f64::EPSILON * f64::EPSILON * self.max_off_sq());
        let mut count = 0;
        let mut d = self.diag[0] - x;
        if d.abs() < pivmin {
            d = -pivmin;
        }
        if d < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let e = self.off[i - 1];
            d = self.diag[i] - x - e * e / d;
            if d.abs() < pivmin {
                d = -pivmin;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn max_off_sq(&self) -> f64 {
        self.off.iter().map(|e| e * e).fold(1.0, f64::max)
    }

    /// The `index`-th smallest eigenvalue (0-based), bisected until the
    /// bracket is no wider than `abs_tol` or a few ulps.
    pub fn eigenvalue(&self, index: usize, abs_tol: f64) -> f64 {
        assert!(index < self.len(), "eigenvalue index out of range");
        let (mut lo, mut hi) = self.gershgorin();
        let pad = f64::EPSILON * (lo.abs().max(hi.abs())) + f64::MIN_POSITIVE;
        lo -= pad;
        hi += pad;
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            let width = hi - lo;
            if width <= abs_tol || width <= 4.0 * f64::EPSILON * mid.abs() || mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The `k` smallest eigenvalues in ascending order. The default
    /// tolerance is the backward-error floor ε‖T‖.
    pub fn smallest_eigenvalues(&self, k: usize) -> Vec<f64> {
        let tol = f64::EPSILON * self.norm_bound();
        (0..k.min(self.len())).map(|i| self.eigenvalue(i, tol)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * x[i];
                if i > 0 {
                    y += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Solves (T − σI)x = b by Gaussian elimination with partial pivoting.
    /// Exactly singular pivots are perturbed, as inverse iteration wants.
    pub fn solve_shifted(&self, sigma: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        let tiny = f64::EPSILON * self.norm_bound().max(f64::MIN_POSITIVE);
        if n == 1 {
            let d = self.diag[0] - sigma;
            return vec![rhs[0] / if d == 0.0 { tiny } else { d }];
        }
        // Row i of U holds (u0[i], u1[i], u2[i]) on columns i, i+1, i+2.
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut b = rhs.to_vec();

        let mut cur_diag = self.diag[0] - sigma;
        let mut cur_sup = self.off[0];
        for i in 0..n - 1 {
            let sub = self.off[i];
            let next_diag = self.diag[i + 1] - sigma;
            let next_sup = if i + 2 < n { self.off[i + 1] } else { 0.0 };
            if cur_diag.abs() >= sub.abs() {
                let piv = if cur_diag == 0.0 { tiny } else { cur_diag };
                let m = sub / piv;
                u0[i] = piv;
                u1[i] = cur_sup;
                u2[i] = 0.0;
                b[i + 1] -= m * b[i];
                cur_diag = next_diag - m * cur_sup;
                cur_sup = next_sup;
            } else {
                // swap rows i and i+1
                let m = cur_diag / sub;
                u0[i] = sub;
                u1[i] = next_diag;
                u2[i] = next_sup;
                b.swap(i, i + 1);
                b[i + 1] -= m * b[i];
                cur_diag = cur_sup - m * next_diag;
                cur_sup = -m * next_sup;
            }
        }
        u0[n - 1] = if cur_diag == 0.0 { tiny } else { cur_diag };

        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= u2[i] * x[i + 2];
            }
            x[i] = s / u0[i];
        }
        x
    }

    /// Eigenvector for an eigenvalue estimate by inverse iteration,
    /// orthogonalized against `previous` (unit vectors of neighbouring
    /// eigenvalues). Returned with unit 2-norm.
    pub fn eigenvector(&self, eigenvalue: f64, previous: &[Vec<f64>]) -> Vec<f64> {
        let n = self.len();
        // deterministic, non-symmetric start so that odd and even modes both
        // have a component
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
            .collect();
        let shift = eigenvalue - 4.0 * f64::EPSILON * self.norm_bound();
        for _ in 0..4 {
            orthogonalize(&mut v, previous);
            normalize(&mut v);
            v = self.solve_shifted(shift, &v);
        }
        orthogonalize(&mut v, previous);
        normalize(&mut v);
        v
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;

    fn dense(t: &SymTridiagonal) -> DMatrix<f64> {
        let n = t.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                t.diag[i]
            } else if i + 1 == j {
                t.off[i]
            } else if j + 1 == i {
                t.off[j]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        // eigenvalues 2 − 2cos(kπ/(n+1))
        let n = 50;
        let t = SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]);
        let ev = t.smallest_eigenvalues(5);
        for (k, v) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13, "{v} vs {exact}");
        }
    }

    #[test]
    fn inverse_iteration_gives_eigenvectors() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 3.0 + 4.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| -0.5 - 0.01 * i as f64).collect();
        let t = SymTridiagonal::new(diag, off);
        let ev = t.smallest_eigenvalues(4);
        let mut vecs: Vec<Vec<f64>> = Vec::new();
        for &lam in &ev {
            let v = t.eigenvector(lam, &vecs);
            let tv = t.mul_vec(&v);
            let resid = tv.iter().zip(&v).map(|(a, b)| (a - lam * b).abs()).fold(0.0, f64::max);
            assert!(resid < 1e-10, "residual {resid}");
            vecs.push(v);
        }
    }

    #[test]
    fn shifted_solve_matches_dense() {
        let t = SymTridiagonal::new(vec![1.0, -2.0, 0.5, 3.0, 0.0], vec![4.0, 0.1, -2.0, 1.5]);
        let b = [1.0, 2.0, -1.0, 0.5, 3.0];
        let x = t.solve_shifted(0.3, &b);
        let a = dense(&t) - DMatrix::identity(5, 5) * 0.3;
        let r = &a * nalgebra::DVector::from_column_slice(&x) - nalgebra::DVector::from_column_slice(&b);
        assert!(r.amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn bisection_matches_dense_solver(
            diag in proptest::collection::vec(-5.0f64..5.0, 2..30),
            seed in proptest::collection::vec(-2.0f64..2.0, 30),
        ) {
            let n = diag.len();
            let off = seed[..n - 1].to_vec();
            let t = SymTridiagonal::new(diag, off);
            let mut exact = SymmetricEigen::new(dense(&t)).eigenvalues.as_slice().to_vec();
            exact.sort_by(f64::total_cmp);
            let ours = t.smallest_eigenvalues(n);
            for (a, b) in ours.iter().zip(&exact) {
                prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
            }
        }
    }
}
