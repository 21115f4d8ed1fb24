//! Box-constrained maximization: projected limited-memory quasi-Newton with
//! backtracking line search, optional ball localization, and deterministic
//! Latin-hypercube restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    /// Per-coordinate [lo, hi] box.
    pub bounds: Vec<(f64, f64)>,
    pub max_iters: usize,
    /// Convergence threshold on the projected-gradient infinity norm.
    pub grad_tol: f64,
    /// Convergence threshold on the step infinity norm.
    pub step_tol: f64,
    /// Additional deterministic restarts from Latin-hypercube points.
    pub restarts: usize,
    /// Optional localization ball (center, radius); iterates stay inside.
    pub localization: Option<(Vec<f64>, f64)>,
    /// Seed for the restart jitter.
    pub seed: u64,
    /// L-BFGS memory.
    pub memory: usize,
}

impl OptConfig {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            bounds,
            max_iters: 300,
            grad_tol: 1e-6,
            step_tol: 1e-12,
            restarts: 0,
            localization: None,
            seed: 0,
            memory: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidInput("each bound must satisfy lo < hi".into()));
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Project onto the box, then (when set) onto box ∩ localization ball by
    /// Dykstra alternation.
    pub fn project(&self, x: &mut [f64]) {
        for (xi, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *xi = xi.clamp(*lo, *hi);
        }
        if let Some((center, radius)) = &self.localization {
            for _ in 0..32 {
                let mut dist2 = 0.0;
                for (xi, ci) in x.iter().zip(center) {
                    dist2 += (xi - ci) * (xi - ci);
                }
                let dist = dist2.sqrt();
                if dist <= *radius * (1.0 + 1e-14) {
                    break;
                }
                let scale = radius / dist;
                for (xi, ci) in x.iter_mut().zip(center) {
                    *xi = ci + (*xi - ci) * scale;
                }
                for (xi, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
                    *xi = xi.clamp(*lo, *hi);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub theta_hat: Vec<f64>,
    /// Objective value at `theta_hat` (maximization scale).
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub projected_grad_norm: f64,
    /// Objective values at accepted iterates (monotone nondecreasing).
    pub accepted_values: Vec<f64>,
}

/// Maximize `objective` (value and gradient) over the box from `init`.
///
/// Deterministic given (objective, cfg, init). With restarts, the best run by
/// objective value wins; if no run converges the best iterate is returned with
/// `converged = false`.
pub fn maximize<F>(mut objective: F, cfg: &OptConfig, init: &[f64]) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    if init.len() != cfg.bounds.len() {
        return Err(Error::InvalidInput(format!(
            "init dimension {} != bounds dimension {}",
            init.len(),
            cfg.bounds.len()
        )));
    }
    let mut starts = vec![init.to_vec()];
    if cfg.restarts > 0 {
        starts.extend(latin_hypercube(cfg, cfg.restarts));
    }
    let mut best: Option<OptResult> = None;
    for (run, start) in starts.iter().enumerate() {
        let mut x0 = start.clone();
        cfg.project(&mut x0);
        let res = solve_single(&mut objective, cfg, &x0);
        let res = match res {
            Ok(r) => r,
            Err(e) => {
                if run == 0 {
                    return Err(e);
                }
                continue;
            }
        };
        let better = match &best {
            None => true,
            Some(b) => res.loglik > b.loglik,
        };
        if better {
            best = Some(res);
        }
    }
    best.ok_or_else(|| Error::OptimFailed("no restart produced a usable iterate".into()))
}

/// Deterministic Latin-hypercube points over the box (mid-stratum jitter).
fn latin_hypercube(cfg: &OptConfig, n: usize) -> Vec<Vec<f64>> {
    let dim = cfg.bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    // one stratum permutation per coordinate
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            p.swap(i, j);
        }
        perms.push(p);
    }
    (0..n)
        .map(|r| {
            (0..dim)
                .map(|i| {
                    let (lo, hi) = cfg.bounds[i];
                    let u: f64 = rng.gen_range(0.25..0.75);
                    lo + (perms[i][r] as f64 + u) / n as f64 * (hi - lo)
                })
                .collect()
        })
        .collect()
}

fn solve_single<F>(objective: &mut F, cfg: &OptConfig, init: &[f64]) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dim = init.len();
    let mut x = init.to_vec();
    let (mut fx, mut gx) = objective(&x)?;
    if !fx.is_finite() {
        return Err(Error::OptimFailed(format!("objective non-finite at init ({fx})")));
    }
    let mut accepted_values = vec![fx];
    // L-BFGS pairs in minimization convention (f = -objective, g = -grad)
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut iters = 0usize;
    let mut pg_norm = projected_grad_norm(cfg, &x, &gx);

    for it in 0..cfg.max_iters {
        iters = it + 1;
        pg_norm = projected_grad_norm(cfg, &x, &gx);
        if pg_norm < cfg.grad_tol {
            converged = true;
            break;
        }
        // ascent direction from two-loop recursion on minimization pairs
        let mut d = two_loop(&s_hist, &y_hist, &gx);
        // safeguard: ensure ascent w.r.t. the objective
        let dd: f64 = d.iter().zip(&gx).map(|(di, gi)| di * gi).sum();
        if !dd.is_finite() || dd <= 0.0 {
            d = gx.clone();
        }
        // backtracking on the projection arc
        let mut t = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        let mut g_new = gx.clone();
        for _ in 0..60 {
            for i in 0..dim {
                x_new[i] = x[i] + t * d[i];
            }
            cfg.project(&mut x_new);
            let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step_norm < cfg.step_tol {
                break;
            }
            let gd: f64 = gx.iter().zip(&step).map(|(g, s)| g * s).sum();
            match objective(&x_new) {
                Ok((fv, gv)) if fv.is_finite() => {
                    if fv >= fx + 1e-4 * gd.max(0.0) && fv >= fx {
                        f_new = fv;
                        g_new = gv;
                        accepted = true;
                        break;
                    }
                }
                _ => {}
            }
            t *= 0.5;
        }
        if !accepted {
            // no improving step along this direction
            converged = pg_norm < cfg.grad_tol.max(1e-4);
            break;
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gx.iter().zip(&g_new).map(|(old, new)| old - new).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-10 * ss.sqrt() * yy.sqrt() {
            s_hist.push(s.clone());
            y_hist.push(y);
            if s_hist.len() > cfg.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let step_norm = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x = x_new.clone();
        fx = f_new;
        gx = g_new;
        accepted_values.push(fx);
        if step_norm < cfg.step_tol {
            converged = true;
            break;
        }
    }
    pg_norm = projected_grad_norm(cfg, &x, &gx);
    if pg_norm < cfg.grad_tol {
        converged = true;
    }
    Ok(OptResult {
        theta_hat: x,
        loglik: fx,
        converged,
        iterations: iters,
        projected_grad_norm: pg_norm,
        accepted_values,
    })
}

/// Infinity norm of P(x + g) - x (ascent convention).
fn projected_grad_norm(cfg: &OptConfig, x: &[f64], g: &[f64]) -> f64 {
    let mut xp: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi + gi).collect();
    cfg.project(&mut xp);
    xp.iter().zip(x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Two-loop recursion returning an ascent direction for gradient `g` of the
/// objective (pairs stored in objective convention).
fn two_loop(s_hist: &[Vec<f64>], y_hist: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let m = s_hist.len();
    let mut q: Vec<f64> = g.to_vec();
    if m == 0 {
        return q;
    }
    let mut alphas = vec![0.0; m];
    let mut rhos = vec![0.0; m];
    for i in (0..m).rev() {
        let sy: f64 = s_hist[i].iter().zip(&y_hist[i]).map(|(a, b)| a * b).sum();
        rhos[i] = 1.0 / sy;
        let sq: f64 = s_hist[i].iter().zip(&q).map(|(a, b)| a * b).sum();
        alphas[i] = rhos[i] * sq;
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alphas[i] * yj;
        }
    }
    let last = m - 1;
    let sy: f64 = s_hist[last].iter().zip(&y_hist[last]).map(|(a, b)| a * b).sum();
    let yy: f64 = y_hist[last].iter().map(|v| v * v).sum();
    let gamma = sy / yy;
    for qj in q.iter_mut() {
        *qj *= gamma;
    }
    for i in 0..m {
        let yq: f64 = y_hist[i].iter().zip(&q).map(|(a, b)| a * b).sum();
        let beta = rhos[i] * yq;
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alphas[i] - beta) * sj;
        }
    }
    q
}
