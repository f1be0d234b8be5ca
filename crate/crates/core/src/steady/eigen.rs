//! Eigenvalues of small dense real matrices: balancing, reduction to upper
//! Hessenberg form by stabilised elimination, then the Francis double-shift
//! QR iteration.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    a: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, a: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("matrix must be square"));
        }
        Ok(Matrix {
            n,
            a: rows.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut m = self.clone();
        let mut det = 1.0;
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| m.get(i, c).abs().total_cmp(&m.get(j, c).abs()))
                .expect("non-empty");
            if m.get(p, c) == 0.0 {
                return 0.0;
            }
            if p != c {
                for j in 0..n {
                    m.a.swap(p * n + j, c * n + j);
                }
                det = -det;
            }
            let piv = m.get(c, c);
            det *= piv;
            for i in c + 1..n {
                let f = m.get(i, c) / piv;
                for j in c..n {
                    let v = m.get(c, j);
                    *m.at(i, j) -= f * v;
                }
            }
        }
        det
    }

    /// Solves `self * x = b` by LU with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let mut m = self.clone();
        let mut x = b.to_vec();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| m.get(i, c).abs().total_cmp(&m.get(j, c).abs()))
                .expect("non-empty");
            if m.get(p, c) == 0.0 || !m.get(p, c).is_finite() {
                return Err(Error::Numerical("singular matrix".into()));
            }
            if p != c {
                for j in 0..n {
                    m.a.swap(p * n + j, c * n + j);
                }
                x.swap(p, c);
            }
            let piv = m.get(c, c);
            for i in c + 1..n {
                let f = m.get(i, c) / piv;
                if f != 0.0 {
                    for j in c..n {
                        let v = m.get(c, j);
                        *m.at(i, j) -= f * v;
                    }
                    x[i] -= f * x[c];
                }
            }
        }
        for c in (0..n).rev() {
            let s: f64 = (c + 1..n).map(|j| m.get(c, j) * x[j]).sum();
            x[c] = (x[c] - s) / m.get(c, c);
        }
        Ok(x)
    }
}

const RADIX: f64 = 2.0;

/// Diagonal similarity scaling that equalises row and column norms.
fn balance(m: &mut Matrix) {
    let n = m.n;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let (mut r, mut c) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += m.get(j, i).abs();
                    r += m.get(i, j).abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        *m.at(i, j) *= g;
                    }
                    for j in 0..n {
                        *m.at(j, i) *= f;
                    }
                }
            }
        }
    }
}

/// Reduction to upper Hessenberg form by elimination with pivoting.
fn hessenberg(m: &mut Matrix) {
    let n = m.n;
    for k in 1..n.saturating_sub(1) {
        let mut x: f64 = 0.0;
        let mut piv = k;
        for j in k..n {
            if m.get(j, k - 1).abs() > x.abs() {
                x = m.get(j, k - 1);
                piv = j;
            }
        }
        if piv != k {
            for j in k - 1..n {
                m.a.swap(piv * n + j, k * n + j);
            }
            for j in 0..n {
                m.a.swap(j * n + piv, j * n + k);
            }
        }
        if x != 0.0 {
            for i in k + 1..n {
                let mut y = m.get(i, k - 1);
                if y != 0.0 {
                    y /= x;
                    m.set(i, k - 1, y);
                    for j in k..n {
                        let v = m.get(k, j);
                        *m.at(i, j) -= y * v;
                    }
                    for j in 0..n {
                        let v = m.get(j, i);
                        *m.at(j, k) += y * v;
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            m.set(i, j, 0.0);
        }
    }
}

#[inline]
fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Eigenvalues of an upper Hessenberg matrix (destroyed).
fn hqr(h: &mut Matrix) -> Result<Vec<Complex64>> {
    let n = h.n;
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += h.get(i, j).abs();
        }
    }
    let max_sweeps = 30 * n.max(1);
    let mut sweeps = 0;
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let g = |h: &Matrix, i: isize, j: isize| h.get(i as usize, j as usize);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 1 {
                let mut s = g(h, l - 1, l - 1).abs() + g(h, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if g(h, l, l - 1).abs() + s == s {
                    h.set(l as usize, l as usize - 1, 0.0);
                    break;
                }
                l -= 1;
            }
            let mut x = g(h, nn, nn);
            if l == nn {
                wr[nn as usize] = x + t;
                wi[nn as usize] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = g(h, nn - 1, nn - 1);
            let mut w = g(h, nn, nn - 1) * g(h, nn - 1, nn);
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                let (a, b) = (nn as usize - 1, nn as usize);
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[a] = x + z;
                    wr[b] = x + z;
                    if z != 0.0 {
                        wr[b] = x - w / z;
                    }
                    wi[a] = 0.0;
                    wi[b] = 0.0;
                } else {
                    wr[a] = x + p;
                    wr[b] = x + p;
                    wi[a] = -z;
                    wi[b] = z;
                }
                nn -= 2;
                break;
            }
            if sweeps >= max_sweeps {
                return Err(Error::Numerical(format!(
                    "QR iteration did not converge within {max_sweeps} sweeps"
                )));
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nn as usize {
                    *h.at(i, i) -= x;
                }
                let s = g(h, nn, nn - 1).abs() + g(h, nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            sweeps += 1;

            let (mut p, mut q, mut r, mut z);
            let mut m = nn - 2;
            loop {
                z = g(h, m, m);
                r = x - z;
                let s = y - z;
                p = (r * s - w) / g(h, m + 1, m) + g(h, m, m + 1);
                q = g(h, m + 1, m + 1) - z - r - s;
                r = g(h, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = g(h, m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (g(h, m - 1, m - 1).abs() + z.abs() + g(h, m + 1, m + 1).abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                h.set(i as usize, i as usize - 2, 0.0);
                if i != m + 2 {
                    h.set(i as usize, i as usize - 3, 0.0);
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = g(h, k, k - 1);
                    q = g(h, k + 1, k - 1);
                    r = 0.0;
                    if k != nn - 1 {
                        r = g(h, k + 2, k - 1);
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    let (ku, k1) = (k as usize, k as usize + 1);
                    if k == m {
                        if l != m {
                            let v = -g(h, k, k - 1);
                            h.set(ku, ku - 1, v);
                        }
                    } else {
                        h.set(ku, ku - 1, -s * x);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in ku..=nn as usize {
                        p = h.get(ku, j) + q * h.get(k1, j);
                        if k != nn - 1 {
                            p += r * h.get(ku + 2, j);
                            *h.at(ku + 2, j) -= p * z;
                        }
                        *h.at(k1, j) -= p * y;
                        *h.at(ku, j) -= p * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in l as usize..=mmin as usize {
                        p = x * h.get(i, ku) + y * h.get(i, k1);
                        if k != nn - 1 {
                            p += z * h.get(i, ku + 2);
                            *h.at(i, ku + 2) -= p * r;
                        }
                        *h.at(i, k1) -= p * q;
                        *h.at(i, ku) -= p;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).map(|(r, i)| Complex64::new(r, i)).collect())
}

/// Sorts by real part, then imaginary part, so conjugate pairs are adjacent
/// with the negative imaginary part first.
pub fn sort_eigenvalues(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// All eigenvalues of `m`, sorted by [`sort_eigenvalues`].
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if m.a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mut h = m.clone();
    balance(&mut h);
    hessenberg(&mut h);
    let mut ev = hqr(&mut h)?;
    sort_eigenvalues(&mut ev);
    Ok(ev)
}
