//! Fixed points of the deterministic system under constant light, with
//! Jacobian eigenvalues and stability classification.

mod eigen;
mod nelder_mead;

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use eigen::{eigenvalues, sort_eigenvalues, Matrix};
pub use nelder_mead::NelderMead;

use crate::error::{Error, Result};
use crate::model::{Kinetics, Network};
use crate::trace::fmt_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    StableNode,
    StableFocus,
    Unstable,
    Marginal,
}

/// Imaginary parts smaller than this count as zero.
pub const IMAG_TOL: f64 = 1e-9;
/// Real parts this close to zero are marginal.
pub const MARGINAL_TOL: f64 = 1e-9;

pub fn classify(eigenvalues: &[Complex64]) -> Stability {
    if eigenvalues.iter().any(|e| e.re > MARGINAL_TOL) {
        Stability::Unstable
    } else if eigenvalues.iter().any(|e| e.re.abs() <= MARGINAL_TOL) {
        Stability::Marginal
    } else if eigenvalues.iter().any(|e| e.im.abs() >= IMAG_TOL) {
        Stability::StableFocus
    } else {
        Stability::StableNode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    /// Required Euclidean norm of the right-hand side.
    pub tol: f64,
    pub restarts: usize,
    pub polish: bool,
    pub simplex: NelderMeadSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadSettings {
    pub max_evals: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tol: 1e-10,
            restarts: 5,
            polish: true,
            simplex: NelderMeadSettings { max_evals: 20_000 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub light: f64,
    pub state: Vec<f64>,
    pub residual: f64,
    /// Residual reached by the simplex search before Newton polishing.
    pub residual_before_polish: f64,
    pub eigenvalues: Vec<(f64, f64)>,
    pub classification: Stability,
}

impl FixedPoint {
    pub fn eigenvalues_complex(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|&(r, i)| Complex64::new(r, i)).collect()
    }
}

struct System {
    kin: Kinetics,
    light: f64,
    buf: Vec<f64>,
    out: Vec<f64>,
}

impl System {
    fn new(net: &Network, light: f64) -> Result<Self> {
        if light != 0.0 && light != 1.0 {
            return Err(Error::invalid("light must be 0 or 1"));
        }
        let kin = net.compile()?;
        let n = kin.n_species();
        Ok(System {
            kin,
            light,
            buf: vec![0.0; n],
            out: vec![0.0; n],
        })
    }

    /// Right-hand side at `max(x, 0)`.
    fn f(&mut self, x: &[f64]) -> Result<&[f64]> {
        for (b, &v) in self.buf.iter_mut().zip(x) {
            *b = v.max(0.0);
        }
        self.kin.rhs(&self.buf, self.light, 0.0, &mut self.out)?;
        Ok(&self.out)
    }

    fn norm(&mut self, x: &[f64]) -> Result<f64> {
        Ok(self.f(x)?.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    fn jacobian(&mut self, x: &[f64]) -> Result<Matrix> {
        let n = x.len();
        let mut jac = Matrix::zeros(n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let h = (1e-6 * x[j].abs()).max(1e-6);
            // one-sided near zero so no negative state is evaluated
            let (lo, hi) = if x[j] < h { (x[j], x[j] + h) } else { (x[j] - h, x[j] + h) };
            xp[j] = hi;
            let fp = self.f(&xp)?.to_vec();
            xp[j] = lo;
            let fm = self.f(&xp)?.to_vec();
            xp[j] = x[j];
            let d = hi - lo;
            for i in 0..n {
                jac.set(i, j, (fp[i] - fm[i]) / d);
            }
        }
        Ok(jac)
    }
}

/// Finite-difference Jacobian of the right-hand side at `state`.
pub fn jacobian(net: &Network, state: &[f64], light: f64) -> Result<Matrix> {
    check_state(net, state)?;
    System::new(net, light)?.jacobian(state)
}

fn check_state(net: &Network, state: &[f64]) -> Result<()> {
    if state.len() != net.species().len() {
        return Err(Error::invalid("state has the wrong length"));
    }
    if state.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("state entries must be finite and non-negative"));
    }
    Ok(())
}

/// Eigenvalues of the finite-difference Jacobian, ascending by real part.
pub fn jacobian_eigenvalues(net: &Network, state: &[f64], light: f64) -> Result<Vec<Complex64>> {
    eigenvalues(&jacobian(net, state, light)?)
}

/// Damped Newton iteration; never increases the residual.
fn newton_polish(sys: &mut System, x: &mut Vec<f64>, tol: f64) -> Result<f64> {
    let mut res = sys.norm(x)?;
    for _ in 0..100 {
        if res < tol * 1e-3 {
            break;
        }
        let jac = sys.jacobian(x)?;
        let f: Vec<f64> = sys.f(x)?.iter().map(|v| -v).collect();
        let dx = match jac.solve(&f) {
            Ok(dx) => dx,
            Err(_) => break,
        };
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(&a, &d)| (a + lambda * d).max(0.0)).collect();
            let r = sys.norm(&trial)?;
            if r < res {
                *x = trial;
                res = r;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(res)
}

/// Locates a fixed point of the system under constant `light` (0 or 1),
/// starting from `guess`.
pub fn find_fixed_point(
    net: &Network,
    light: f64,
    guess: &[f64],
    cfg: &FixedPointConfig,
) -> Result<FixedPoint> {
    check_state(net, guess)?;
    let mut sys = System::new(net, light)?;
    let nm = NelderMead {
        max_evals: cfg.simplex.max_evals,
        ..NelderMead::default()
    };

    let mut x = guess.to_vec();
    let mut res = sys.norm(&x)?;
    let mut failure: Option<Error> = None;
    for _ in 0..=cfg.restarts {
        if res < cfg.tol {
            break;
        }
        let objective = |p: &[f64]| -> f64 {
            // penalise leaving the non-negative orthant
            let pen: f64 = p.iter().map(|&v| v.min(0.0).powi(2)).sum();
            match sys.f(p) {
                Ok(f) => f.iter().map(|v| v * v).sum::<f64>() + pen,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        };
        let (best, _) = nm.minimize(objective, &x);
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let best: Vec<f64> = best.into_iter().map(|v| v.max(0.0)).collect();
        let r = sys.norm(&best)?;
        if r <= res {
            x = best;
            res = r;
        } else {
            break;
        }
    }
    let before = res;
    if cfg.polish && res >= cfg.tol * 1e-3 {
        res = newton_polish(&mut sys, &mut x, cfg.tol)?;
    }
    if !(res < cfg.tol) {
        return Err(Error::ConvergenceFailure { best_residual: res });
    }
    let ev = eigenvalues(&sys.jacobian(&x)?)?;
    Ok(FixedPoint {
        light,
        classification: classify(&ev),
        eigenvalues: ev.iter().map(|c| (c.re, c.im)).collect(),
        state: x,
        residual: res,
        residual_before_polish: before,
    })
}

/// Plain-text report: one CSV-style block per fixed point.
pub fn write_report<W: Write>(net: &Network, points: &[FixedPoint], mut w: W) -> std::io::Result<()> {
    for (i, fp) in points.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
        }
        let label = if fp.light == 0.0 { "DD" } else { "LL" };
        writeln!(w, "# fixed point, light = {} ({label})", fp.light)?;
        writeln!(w, "classification,{:?}", fp.classification)?;
        writeln!(w, "residual,{:e}", fp.residual)?;
        writeln!(w, "species,value")?;
        for (s, &v) in net.species().iter().zip(&fp.state) {
            writeln!(w, "{},{}", s.name, fmt_value(v))?;
        }
        writeln!(w, "eigenvalue,re,im")?;
        for (k, &(re, im)) in fp.eigenvalues.iter().enumerate() {
            writeln!(w, "{k},{},{}", fmt_value(re), fmt_value(im))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_network;

    #[test]
    fn classification_rules() {
        let c = |v: &[(f64, f64)]| classify(&v.iter().map(|&(r, i)| Complex64::new(r, i)).collect::<Vec<_>>());
        assert_eq!(c(&[(-1.0, 0.0), (-2.0, 0.0)]), Stability::StableNode);
        assert_eq!(c(&[(-1.0, 0.5), (-1.0, -0.5), (-3.0, 0.0)]), Stability::StableFocus);
        assert_eq!(c(&[(0.1, 0.0), (-1.0, 0.0)]), Stability::Unstable);
        assert_eq!(c(&[(0.0, 1.0), (0.0, -1.0)]), Stability::Marginal);
        assert_eq!(c(&[(-1.0, 1e-12), (-1.0, -1e-12)]), Stability::StableNode);
    }

    #[test]
    fn linear_birth_death_fixed_point() {
        let net = parse_network(
            "[parameters]\nk = 3\nd = 0.5\n[species]\nX = 1\n[omega]\n1\n[reactions]\n\
             birth: -> X @ k\ndeath: X -> @ d * X\n",
        )
        .unwrap();
        let fp = find_fixed_point(&net, 0.0, &[1.0], &FixedPointConfig::default()).unwrap();
        assert!((fp.state[0] - 6.0).abs() < 1e-9);
        assert!(fp.residual < 1e-10);
        assert!((fp.eigenvalues[0].0 + 0.5).abs() < 1e-6);
        assert_eq!(fp.classification, Stability::StableNode);
        assert!(fp.residual <= fp.residual_before_polish);
    }

    #[test]
    fn mass_action_jacobian_is_the_rate_matrix() {
        let net = parse_network(
            "[parameters]\na = 0.7\nb = 1.3\nc = 0.2\n[species]\nX = 5\nY = 2\n[omega]\n1\n[reactions]\n\
             xy: X -> Y @ a * X\nyx: Y -> X @ b * Y\nyloss: Y -> @ c * Y\n",
        )
        .unwrap();
        let j = jacobian(&net, &[5.0, 2.0], 0.0).unwrap();
        let want = [[-0.7, 1.3], [0.7, -1.5]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((j.get(i, k) - want[i][k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_negative_guess() {
        let net = parse_network("[species]\nX = 1\n[omega]\n1\n").unwrap();
        assert!(matches!(
            find_fixed_point(&net, 0.0, &[-1.0], &FixedPointConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unreachable_tolerance_reports_best_residual() {
        // constant production with no loss has no fixed point
        let net = parse_network(
            "[parameters]\nk = 1\n[species]\nX = 0\n[omega]\n1\n[reactions]\nb: -> X @ k\n",
        )
        .unwrap();
        let err = find_fixed_point(&net, 0.0, &[0.0], &FixedPointConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ConvergenceFailure { best_residual } if best_residual >= 0.99));
    }
}
