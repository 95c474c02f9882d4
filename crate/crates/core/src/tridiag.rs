//! Symmetric tridiagonal eigensolver for the lowest part of the spectrum.
//!
//! Eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
//! iteration with Gram-Schmidt reorthogonalization inside clusters of close
//! eigenvalues.

use crate::error::{Error, Result};

/// A real symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// Off-diagonal, length `n - 1`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty());
        assert_eq!(off.len() + 1, diag.len());
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `y = T x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn norm_inf(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs())
    }

    /// Number of eigenvalues strictly less than `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let pivmin = f64::MIN_POSITIVE.sqrt() * (1.0 + self.norm_hint());
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let e = self.off[i - 1];
            q = self.diag[i] - x - e * e / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn norm_hint(&self) -> f64 {
        self.off.iter().fold(0.0f64, |m, e| m.max(e.abs()))
    }

    /// The `index`-th smallest eigenvalue (0-based), refined to machine precision.
    pub fn eigenvalue(&self, index: usize, bounds: (f64, f64)) -> f64 {
        let (mut lo, mut hi) = bounds;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
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

    /// Solve `(T - shift I) x = b` by LU with partial pivoting, in place.
    fn shifted_solve(&self, shift: f64, b: &mut [f64]) {
        let n = self.len();
        let tiny = f64::EPSILON * self.norm_inf().max(f64::MIN_POSITIVE);
        // Rows after pivoting hold up to three entries: u0 (diag), u1, u2.
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];

        let mut d = self.diag[0] - shift;
        let mut up = if n > 1 { self.off[0] } else { 0.0 };
        for i in 0..n.saturating_sub(1) {
            let sub = self.off[i];
            let next_d = self.diag[i + 1] - shift;
            let next_up = if i + 2 < n { self.off[i + 1] } else { 0.0 };
            if sub.abs() > d.abs() {
                // swap row i with row i+1
                swapped[i] = true;
                let m = d / sub;
                mult[i] = m;
                u0[i] = sub;
                u1[i] = next_d;
                u2[i] = next_up;
                d = up - m * next_d;
                up = -m * next_up;
            } else {
                if d == 0.0 {
                    d = tiny;
                }
                let m = sub / d;
                mult[i] = m;
                u0[i] = d;
                u1[i] = up;
                u2[i] = 0.0;
                d = next_d - m * up;
                up = next_up;
            }
        }
        if d == 0.0 {
            d = tiny;
        }
        u0[n - 1] = d;

        for i in 0..n.saturating_sub(1) {
            if swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= mult[i] * b[i];
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            if i + 1 < n {
                acc -= u1[i] * b[i + 1];
            }
            if i + 2 < n {
                acc -= u2[i] * b[i + 2];
            }
            let piv = if u0[i].abs() < tiny { tiny.copysign(u0[i]) } else { u0[i] };
            b[i] = acc / piv;
        }
    }
}

/// Eigenpairs of the lowest part of a spectrum; vectors have unit 2-norm.
#[derive(Debug, Clone)]
pub struct LowestEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let nrm = dot(v, v).sqrt();
    if nrm > 0.0 {
        v.iter_mut().for_each(|x| *x /= nrm);
    }
    nrm
}

/// Compute the `count` smallest eigenpairs. Vectors are sign-fixed so that
/// their largest-magnitude component is positive.
pub fn lowest_eigenpairs(t: &SymTridiagonal, count: usize) -> Result<LowestEigen> {
    let n = t.len();
    if count > n {
        return Err(Error::Convergence(format!(
            "requested {count} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let (glo, ghi) = t.gershgorin();
    let pad = 1e-12 * (glo.abs() + ghi.abs()) + f64::MIN_POSITIVE;
    let bounds = (glo - pad, ghi + pad);
    let values: Vec<f64> = (0..count).map(|k| t.eigenvalue(k, bounds)).collect();

    let tnorm = t.norm_inf();
    let cluster_gap = 1e-3 * tnorm;
    let perturb = 10.0 * f64::EPSILON * tnorm;

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut cluster_start = 0;
    for k in 0..count {
        if k > 0 && values[k] - values[k - 1] > cluster_gap {
            cluster_start = k;
        }
        // Separate coincident eigenvalues so each gets its own solve.
        let mut shift = values[k];
        if k > cluster_start {
            let prev = values[k - 1];
            if shift - prev < perturb {
                shift = prev + perturb * (k - cluster_start) as f64;
            }
        }
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (k as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
                0.5 + (h >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        normalize(&mut v);
        let mut converged = false;
        for _ in 0..8 {
            t.shifted_solve(shift, &mut v);
            for prev in &vectors[cluster_start..k] {
                let c = dot(&v, prev);
                v.iter_mut().zip(prev).for_each(|(x, p)| *x -= c * p);
            }
            let growth = normalize(&mut v);
            if !growth.is_finite() || growth == 0.0 {
                return Err(Error::Convergence(format!("inverse iteration broke down for eigenvalue {k}")));
            }
            if growth * f64::EPSILON * tnorm.max(1.0) > 1e-3 {
                converged = true;
                // one extra sweep tightens the vector after a large growth
                t.shifted_solve(shift, &mut v);
                for prev in &vectors[cluster_start..k] {
                    let c = dot(&v, prev);
                    v.iter_mut().zip(prev).for_each(|(x, p)| *x -= c * p);
                }
                normalize(&mut v);
                break;
            }
        }
        if !converged {
            log::debug!("inverse iteration for eigenvalue {k} ended without large growth");
        }
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
        if v[imax] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.push(v);
    }
    Ok(LowestEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 200;
        let t = laplacian(n);
        let e = lowest_eigenpairs(&t, 10).unwrap();
        for (k, &lam) in e.values.iter().enumerate() {
            let theta = (k as f64 + 1.0) * std::f64::consts::PI / (n as f64 + 1.0);
            let exact = 2.0 - 2.0 * theta.cos();
            assert!((lam - exact).abs() < 1e-13, "k={k} {lam} vs {exact}");
        }
    }

    #[test]
    fn residuals_and_orthogonality() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 * 0.1).collect();
        let t = SymTridiagonal::new(diag, vec![-0.5; n - 1]);
        let e = lowest_eigenpairs(&t, 20).unwrap();
        for (lam, v) in e.values.iter().zip(&e.vectors) {
            let tv = t.mul_vec(v);
            let r: f64 = tv.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
            assert!(r < 1e-12, "residual {r}");
        }
        for i in 0..e.vectors.len() {
            for j in 0..i {
                assert!(dot(&e.vectors[i], &e.vectors[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nearly_degenerate_pairs_are_orthogonal() {
        // two decoupled blocks joined by a tiny link
        let n = 101;
        let diag = vec![2.0; n];
        let mut off = vec![-1.0; n - 1];
        off[50] = -1e-14;
        let t = SymTridiagonal::new(diag, off);
        let e = lowest_eigenpairs(&t, 6).unwrap();
        for i in 0..6 {
            for j in 0..i {
                assert!(dot(&e.vectors[i], &e.vectors[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn count_below_matches_values() {
        let t = laplacian(50);
        let e = lowest_eigenpairs(&t, 5).unwrap();
        assert_eq!(t.count_below(e.values[2] + 1e-8), 3);
        assert_eq!(t.count_below(-1.0), 0);
        assert_eq!(t.count_below(5.0), 50);
    }
}
