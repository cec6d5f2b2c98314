//! Small dense complex eigenproblems and polynomial roots.
//!
//! Eigenvalues come from balancing, Householder reduction to upper Hessenberg form
//! and a single-shift complex QR iteration with Wilkinson shifts. Matrices here are
//! at most 6x6 (companion matrices of the steady-state polynomials and the 4x4
//! stability Jacobians).

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "row {i} has wrong length");
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Coefficients of det(zI - M), ascending, via Faddeev-LeVerrier.
    pub fn characteristic_polynomial(&self) -> Vec<Complex64> {
        let n = self.n;
        let mut coeffs = vec![ZERO; n + 1];
        coeffs[n] = ONE;
        let mut mk = SquareMatrix::zeros(n);
        for k in 1..=n {
            // M_k = A (M_{k-1} + c_{n-k+1} I)
            let mut prev = mk.clone();
            for i in 0..n {
                prev[(i, i)] += coeffs[n - k + 1];
            }
            mk = self.matmul(&prev);
            let trace: Complex64 = (0..n).map(|i| mk[(i, i)]).sum();
            coeffs[n - k] = -trace / k as f64;
        }
        coeffs
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik == ZERO {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

impl std::fmt::Display for SquareMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.n {
                if j > 0 {
                    write!(f, ", ")?;
                }
                let z = self[(i, j)];
                write!(f, "{:.6e}{:+.6e}i", z.re, z.im)?;
            }
        }
        write!(f, "]")
    }
}

/// Diagonal similarity scaling by powers of two so rows and columns have
/// comparable norms.
fn balance(m: &mut SquareMatrix) {
    let n = m.n;
    let radix = 2.0_f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].norm();
                    r += m[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix * radix;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix * radix;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form (similarity, eigenvalues kept).
fn hessenberg(m: &mut SquareMatrix) {
    let n = m.n;
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let alpha_norm: f64 = (k + 1..n).map(|i| m[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = m[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| m[(i, k)]).collect();
        v[0] += phase * alpha_norm;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // H = I - 2 v v^H / (v^H v); apply from left then right.
        for j in 0..n {
            let dot: Complex64 = v
                .iter()
                .enumerate()
                .map(|(r, vr)| vr.conj() * m[(k + 1 + r, j)])
                .sum();
            let f = dot * (2.0 / vnorm2);
            for (r, vr) in v.iter().enumerate() {
                m[(k + 1 + r, j)] -= vr * f;
            }
        }
        for i in 0..n {
            let dot: Complex64 = v
                .iter()
                .enumerate()
                .map(|(r, vr)| m[(i, k + 1 + r)] * vr)
                .sum();
            let f = dot * (2.0 / vnorm2);
            for (r, vr) in v.iter().enumerate() {
                m[(i, k + 1 + r)] -= f * vr.conj();
            }
        }
        for i in k + 2..n {
            m[(i, k)] = ZERO;
        }
    }
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let mu1 = (a + d) * 0.5 + disc;
    let mu2 = (a + d) * 0.5 - disc;
    if (mu1 - d).norm() < (mu2 - d).norm() {
        mu1
    } else {
        mu2
    }
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(matrix: &SquareMatrix) -> Result<Vec<Complex64>> {
    let n = matrix.n;
    if !matrix.is_finite() {
        return Err(Error::EigenNonConvergence(format!("non-finite input {matrix}")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = matrix.clone();
    balance(&mut h);
    hessenberg(&mut h);

    let eps = f64::EPSILON;
    let scale = h.max_abs().max(f64::MIN_POSITIVE);
    let mut eig = vec![ZERO; n];
    let mut hi = n - 1;
    let mut iter = 0usize;
    let max_iter = 60 * n;
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        // Find the start of the unreduced block ending at `hi`.
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let tol = if diag == 0.0 { eps * scale } else { eps * diag };
            if sub <= tol {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > max_iter {
            return Err(Error::EigenNonConvergence(format!("{matrix}")));
        }
        let mu = if iter % 11 == 0 {
            // Exceptional shift to break cycles.
            h[(hi, hi)] + Complex64::new(h[(hi, hi - 1)].norm(), 0.0) * 1.5
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };
        for i in lo..=hi {
            h[(i, i)] -= mu;
        }
        let mut rotations = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let x = h[(k, k)];
            let y = h[(k + 1, k)];
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (1.0, ZERO)
            } else if x.norm() == 0.0 {
                (0.0, ONE)
            } else {
                let c = x.norm() / r;
                let s = (x / x.norm()) * y.conj() / r;
                (c, s)
            };
            for j in k..=hi {
                let u = h[(k, j)];
                let w = h[(k + 1, j)];
                h[(k, j)] = u * c + s * w;
                h[(k + 1, j)] = -s.conj() * u + w * c;
            }
            rotations.push((k, c, s));
        }
        for (k, c, s) in rotations {
            let top = (k + 2).min(hi);
            for i in lo..=top {
                let u = h[(i, k)];
                let w = h[(i, k + 1)];
                h[(i, k)] = u * c + s.conj() * w;
                h[(i, k + 1)] = -s * u + w * c;
            }
        }
        for i in lo..=hi {
            h[(i, i)] += mu;
        }
    }
    if eig.iter().any(|z| !z.is_finite()) {
        return Err(Error::EigenNonConvergence(format!("{matrix}")));
    }
    Ok(eig)
}

/// Evaluates a real polynomial (ascending coefficients) and its derivative at `z`.
pub fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All complex roots of a real polynomial with ascending coefficients.
///
/// Roots are eigenvalues of the companion matrix of the monic polynomial, then
/// refined with a few Newton steps on the original coefficients. Callers should
/// pass coefficients of a nondimensionalized variable.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Conditioning("non-finite coefficient".into()));
    }
    let cmax = coeffs.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
    if cmax == 0.0 {
        return Err(Error::Conditioning("identically zero polynomial".into()));
    }
    let mut hi = coeffs.len() - 1;
    while coeffs[hi] == 0.0 {
        hi -= 1;
    }
    let mut lo = 0;
    while coeffs[lo] == 0.0 {
        lo += 1;
    }
    let nonzero_min = coeffs[lo..=hi]
        .iter()
        .filter(|c| **c != 0.0)
        .fold(f64::INFINITY, |acc, c| acc.min(c.abs()));
    if cmax / nonzero_min > 1.0e280 {
        return Err(Error::Conditioning(format!(
            "coefficient spread {:.3e}",
            cmax / nonzero_min
        )));
    }
    let mut roots = vec![ZERO; lo];
    let reduced = &coeffs[lo..=hi];
    let degree = reduced.len() - 1;
    if degree == 0 {
        return Ok(roots);
    }
    let lead = reduced[degree];
    let mut companion = SquareMatrix::zeros(degree);
    for i in 1..degree {
        companion[(i, i - 1)] = ONE;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = Complex64::new(-reduced[i] / lead, 0.0);
    }
    let eig = eigenvalues(&companion)?;
    for (i, z0) in eig.iter().enumerate() {
        let sep = eig
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, z)| (z - z0).norm())
            .fold(f64::INFINITY, f64::min);
        // Newton may move a root by a fraction of the gap to its neighbours.
        let max_step = (0.25 * sep).max(1.0e-6 * z0.norm().max(1.0e-6));
        roots.push(polish(reduced, *z0, max_step));
    }
    Ok(roots)
}

fn polish(coeffs: &[f64], z0: Complex64, max_step: f64) -> Complex64 {
    let mut z = z0;
    let (mut p, _) = horner(coeffs, z);
    for _ in 0..12 {
        let (pz, dp) = horner(coeffs, z);
        if dp.norm() == 0.0 || pz.norm() == 0.0 {
            break;
        }
        let step = pz / dp;
        if step.norm() > max_step || (z - step - z0).norm() > max_step {
            break;
        }
        let candidate = z - step;
        let (pc, _) = horner(coeffs, candidate);
        if pc.norm() < p.norm() {
            z = candidate;
            p = pc;
        } else {
            break;
        }
    }
    z
}

/// Roots accepted as real: |Im z| < 1e-7 |z| + 1e-10.
pub fn real_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut out: Vec<f64> = roots
        .iter()
        .filter(|z| z.im.abs() < 1.0e-7 * z.norm() + 1.0e-10)
        .map(|z| z.re)
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn diagonal_and_triangular() {
        let m = SquareMatrix::from_rows(&[
            vec![c(1.0, 1.0), c(5.0, 0.0), c(0.0, 2.0)],
            vec![ZERO, c(-2.0, 0.0), c(3.0, 3.0)],
            vec![ZERO, ZERO, c(0.5, -4.0)],
        ]);
        let e = sorted(eigenvalues(&m).unwrap());
        let want = sorted(vec![c(1.0, 1.0), c(-2.0, 0.0), c(0.5, -4.0)]);
        for (a, b) in e.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let m = SquareMatrix::from_rows(&[vec![ZERO, c(-1.0, 0.0)], vec![ONE, ZERO]]);
        let e = sorted(eigenvalues(&m).unwrap());
        assert!((e[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((e[1] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn characteristic_polynomial_of_companion() {
        // (z-1)(z-2)(z+3) = z^3 - 7z + 6
        let coeffs = [6.0, -7.0, 0.0, 1.0];
        let roots = poly_roots(&coeffs).unwrap();
        let r = real_roots(&roots);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_roots_factored() {
        // z^2 (z - 4)
        let roots = poly_roots(&[0.0, 0.0, -4.0, 1.0]).unwrap();
        let r = real_roots(&roots);
        assert_eq!(r, vec![0.0, 0.0, 4.0]);
    }

    #[test]
    fn complex_pair_is_not_real() {
        let roots = poly_roots(&[1.0, 0.0, 1.0]).unwrap();
        assert!(real_roots(&roots).is_empty());
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(poly_roots(&[0.0, 0.0]), Err(Error::Conditioning(_))));
        assert!(matches!(poly_roots(&[1.0, f64::NAN]), Err(Error::Conditioning(_))));
        assert!(poly_roots(&[3.0]).unwrap().is_empty());
    }

    #[test]
    fn nonfinite_matrix_is_an_error() {
        let m = SquareMatrix::from_rows(&[vec![c(f64::NAN, 0.0)]]);
        assert!(matches!(eigenvalues(&m), Err(Error::EigenNonConvergence(_))));
    }
}
