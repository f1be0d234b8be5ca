/// Nelder–Mead downhill simplex with reflection, expansion, contraction and
/// shrink coefficients (1, 2, 0.5, 0.5).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below
    /// `f_tol_abs + f_tol_rel * |f_best|`.
    pub f_tol_abs: f64,
    pub f_tol_rel: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_evals: 20_000,
            f_tol_abs: 1e-32,
            f_tol_rel: 1e-14,
        }
    }
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

impl NelderMead {
    /// Initial simplex edge along coordinate j.
    pub fn edge(x: f64) -> f64 {
        (0.05 * x.abs()).max(0.01)
    }

    /// Minimises `f` from `x0`; returns the best point and its value.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> (Vec<f64>, f64) {
        let n = x0.len();
        if n == 0 {
            let v = f(x0);
            return (Vec::new(), v);
        }
        let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
        for j in 0..n {
            let mut p = x0.to_vec();
            p[j] += Self::edge(x0[j]);
            pts.push(p);
        }
        let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
        let mut evals = n + 1;
        let mut order: Vec<usize> = (0..=n).collect();

        while evals < self.max_evals {
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            let (best, worst, second) = (order[0], order[n], order[n - 1]);
            if (vals[worst] - vals[best]).abs() <= self.f_tol_abs + self.f_tol_rel * vals[best].abs() {
                break;
            }
            let mut centroid = vec![0.0; n];
            for &i in &order[..n] {
                for (c, &v) in centroid.iter_mut().zip(&pts[i]) {
                    *c += v / n as f64;
                }
            }
            let along = |coef: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&pts[worst])
                    .map(|(&c, &w)| c + coef * (c - w))
                    .collect()
            };
            let xr = along(ALPHA);
            let fr = f(&xr);
            evals += 1;
            if fr < vals[best] {
                let xe = along(GAMMA);
                let fe = f(&xe);
                evals += 1;
                if fe < fr {
                    pts[worst] = xe;
                    vals[worst] = fe;
                } else {
                    pts[worst] = xr;
                    vals[worst] = fr;
                }
                continue;
            }
            if fr < vals[second] {
                pts[worst] = xr;
                vals[worst] = fr;
                continue;
            }
            let (xc, fc) = if fr < vals[worst] {
                let xc = along(RHO * ALPHA);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-RHO);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[worst].min(fr) {
                pts[worst] = xc;
                vals[worst] = fc;
                continue;
            }
            // shrink towards the best vertex
            let xb = pts[best].clone();
            for &i in &order[1..] {
                for (p, &b) in pts[i].iter_mut().zip(&xb) {
                    *p = b + SIGMA * (*p - b);
                }
                vals[i] = f(&pts[i]);
                evals += 1;
            }
        }
        let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("non-empty");
        (pts[best].clone(), vals[best])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, v) = NelderMead::default().minimize(f, &[-1.2, 1.0]);
        assert!(v < 1e-12, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (v - i as f64).powi(2)).sum();
        let (x, _) = NelderMead::default().minimize(f, &[5.0; 4]);
        for (i, v) in x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-6);
        }
    }
}
