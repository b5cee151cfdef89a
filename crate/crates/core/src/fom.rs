//! Full-order model: inviscid 1D Burgers on a periodic interval.
//!
//! `u_t + u u_x = 0` is discretized with backward Euler in time and a
//! first-order backward (upwind) difference in space. The grid stores
//! `n_cells + 1` nodes; the last node duplicates the first, so each implicit
//! step solves for `n_cells` unknowns with node 0's left neighbour being node
//! `n_cells - 1`.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How Newton's linear systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JacobianSolver {
    /// Dense LU with partial pivoting on the assembled Jacobian.
    #[default]
    Dense,
    /// Direct O(n) elimination exploiting the cyclic lower-bidiagonal structure.
    Banded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurgersConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default)]
    pub solver: JacobianSolver,
}

fn default_newton_tol() -> f64 {
    1e-9
}

fn default_newton_max_iter() -> usize {
    10
}

impl BurgersConfig {
    /// 6 / 0.006 = 1000 cells, dt = 1e-3 on [0, 1].
    pub fn full_scale() -> Self {
        BurgersConfig {
            x_min: -3.0,
            x_max: 3.0,
            n_cells: 1000,
            dt: 1e-3,
            t_max: 1.0,
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
            solver: JacobianSolver::Dense,
        }
    }

    /// dx = 0.05 (121 nodes), dt = 5e-3 on [0, 1].
    pub fn desk_scale() -> Self {
        BurgersConfig {
            n_cells: 120,
            dt: 5e-3,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return bad("x_min must be < x_max");
        }
        if self.n_cells < 2 {
            return bad("n_cells must be >= 2");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be >= 1");
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    /// Number of stored nodes, `N_u`.
    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    /// Number of time steps, `N_t`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }
}

/// Initial-condition parameters `(a, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub a: f64,
    pub w: f64,
}

impl ParamVector {
    pub fn new(a: f64, w: f64) -> Self {
        ParamVector { a, w }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.a, self.w]
    }
}

/// One FOM trajectory: row `n` holds the field at `t = n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub values: Array2<f64>,
    pub dt: f64,
    pub dx: f64,
}

/// `a exp(-x^2 / (2 w^2))` sampled on every stored node.
pub fn initial_condition(p: ParamVector, cfg: &BurgersConfig) -> Result<Vec<f64>> {
    if p.w == 0.0 || !p.w.is_finite() || !p.a.is_finite() {
        return Err(Error::DegenerateParameter(format!(
            "initial condition needs finite a and nonzero w, got a={}, w={}",
            p.a, p.w
        )));
    }
    let two_w2 = 2.0 * p.w * p.w;
    Ok((0..cfg.n_nodes())
        .map(|i| {
            let x = cfg.node(i);
            p.a * (-x * x / two_w2).exp()
        })
        .collect())
}

/// Advances one backward-Euler step. Returns the new field (all `N_u` nodes).
pub fn step(u_n: &[f64], cfg: &BurgersConfig) -> Result<Vec<f64>> {
    step_with_stats(u_n, cfg).map(|(u, _)| u)
}

/// Like [`step`], also reporting the number of Newton updates applied.
pub fn step_with_stats(u_n: &[f64], cfg: &BurgersConfig) -> Result<(Vec<f64>, usize)> {
    let n_nodes = cfg.n_nodes();
    if u_n.len() != n_nodes {
        return Err(Error::Shape(format!(
            "field has {} entries, grid has {n_nodes} nodes",
            u_n.len()
        )));
    }
    if u_n.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("field contains non-finite values".into()));
    }
    let n = cfg.n_cells;
    let c = cfg.dt / cfg.dx();
    let prev = &u_n[..n];
    let mut u = prev.to_vec();
    let mut res = vec![0.0; n];
    let mut iterations = 0;
    loop {
        residual(&u, prev, c, &mut res);
        let norm = res.iter().map(|r| r * r).sum::<f64>().sqrt();
        if norm <= cfg.newton_tol {
            break;
        }
        if iterations == cfg.newton_max_iter || !norm.is_finite() {
            return Err(Error::NewtonDivergence {
                iterations,
                residual: norm,
            });
        }
        let delta = match cfg.solver {
            JacobianSolver::Dense => solve_dense(&u, c, &res),
            JacobianSolver::Banded => solve_cyclic(&u, c, &res),
        }
        .ok_or(Error::NewtonDivergence {
            iterations,
            residual: norm,
        })?;
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui -= di;
        }
        iterations += 1;
    }
    let first = u[0];
    u.push(first);
    Ok((u, iterations))
}

#[inline]
fn left(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}

// R_i = u_i - u^n_i + c u_i (u_i - u_{i-1})
fn residual(u: &[f64], prev: &[f64], c: f64, out: &mut [f64]) {
    let n = u.len();
    for i in 0..n {
        let ul = u[left(i, n)];
        out[i] = u[i] - prev[i] + c * u[i] * (u[i] - ul);
    }
}

// dR_i/du_i = 1 + c (2 u_i - u_{i-1}),  dR_i/du_{i-1} = -c u_i
#[inline]
fn jacobian_entries(u: &[f64], c: f64, i: usize) -> (f64, f64) {
    let ul = u[left(i, u.len())];
    (1.0 + c * (2.0 * u[i] - ul), -c * u[i])
}

fn solve_dense(u: &[f64], c: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = u.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let (d, l) = jacobian_entries(u, c, i);
        jac[(i, i)] = d;
        jac[(i, left(i, n))] += l;
    }
    let sol = jac.lu().solve(&DVector::from_column_slice(rhs))?;
    let out: Vec<f64> = sol.iter().copied().collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

// Forward elimination writes x_i = p_i + q_i x_{n-1}; the wrap row closes it.
fn solve_cyclic(u: &[f64], c: f64, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = u.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (d, l) = jacobian_entries(u, c, i);
        if d == 0.0 {
            return None;
        }
        if i == 0 {
            p[0] = rhs[0] / d;
            q[0] = -l / d;
        } else {
            p[i] = (rhs[i] - l * p[i - 1]) / d;
            q[i] = -l * q[i - 1] / d;
        }
    }
    let denom = 1.0 - q[n - 1];
    if denom == 0.0 {
        return None;
    }
    let last = p[n - 1] / denom;
    let out: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { last } else { p[i] + q[i] * last })
        .collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Integrates from the analytic initial condition to `t_max`.
pub fn solve_fom(p: ParamVector, cfg: &BurgersConfig) -> Result<SnapshotMatrix> {
    cfg.validate()?;
    let u0 = initial_condition(p, cfg)?;
    let n_steps = cfg.n_steps();
    let n_nodes = cfg.n_nodes();
    let mut values = Array2::<f64>::zeros((n_steps + 1, n_nodes));
    values.row_mut(0).assign(&ndarray::ArrayView1::from(&u0));
    let mut u = u0;
    for n in 1..=n_steps {
        u = step(&u, cfg).map_err(|e| Error::FomStep {
            step: n,
            source: Box::new(e),
        })?;
        values.row_mut(n).assign(&ndarray::ArrayView1::from(&u));
    }
    Ok(SnapshotMatrix {
        values,
        dt: cfg.dt,
        dx: cfg.dx(),
    })
}
