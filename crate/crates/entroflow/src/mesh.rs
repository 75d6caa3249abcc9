//! Uniform 1D P1 finite elements on `(0, L)` with lumped (diagonal) mass.
//!
//! Lumping makes nonlinear terms act nodewise, so Newton Jacobians stay
//! tridiagonal. The boundary consists of the two endpoints; the Robin
//! operator reduces to the point terms `alpha0 u(0) v(0) + alpha1 u(L) v(L)`.
//!
//! Besides mass/stiffness the mesh provides the two Green operators of the
//! scheme: `neumann_green` solves `(M + K) x = M g` (the discrete
//! `(1 - Lap)^{-1}` with no-flux conditions) and `zero_mean_green` solves
//! `K w = M v` on the zero-mean complement (the discrete inverse Neumann
//! Laplacian `N`). The dual norms are realized through them:
//! `||v||_{V*}^2 = (M v) . w` with `(M+K) w = M v`, and
//! `||v||_{V0*}^2 = (M v) . N v` for zero-mean `v`.

use crate::Error;

/// Nodal grid function values, one per mesh node.
pub type GridFunction = Vec<f64>;

#[derive(Debug, Clone)]
pub struct Mesh {
    n_cells: usize,
    length: f64,
    dx: f64,
    nodes: Vec<f64>,
    lumped_mass: Vec<f64>,
    alpha0: f64,
    alpha1: f64,
}

impl Mesh {
    /// `alpha0`, `alpha1` are the Robin weights at the left/right endpoint.
    pub fn new(n_cells: usize, length: f64, alpha0: f64, alpha1: f64) -> Result<Self, Error> {
        if n_cells < 2 {
            return Err(Error::Config(format!(
                "mesh needs at least 2 cells, got {n_cells}"
            )));
        }
        if !(length > 0.0) {
            return Err(Error::Config(format!(
                "mesh length must be positive, got {length}"
            )));
        }
        if !(alpha0 > 0.0 && alpha1 > 0.0) {
            return Err(Error::Config(format!(
                "Robin weights must be positive, got ({alpha0}, {alpha1})"
            )));
        }
        let dx = length / n_cells as f64;
        let n_nodes = n_cells + 1;
        let nodes = (0..n_nodes).map(|i| i as f64 * dx).collect();
        let mut lumped_mass = vec![dx; n_nodes];
        lumped_mass[0] = 0.5 * dx;
        lumped_mass[n_nodes - 1] = 0.5 * dx;
        Ok(Mesh {
            n_cells,
            length,
            dx,
            nodes,
            lumped_mass,
            alpha0,
            alpha1,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    /// Stiffness application `K u` for `K_ij = int grad phi_i . grad phi_j`.
    pub fn apply_stiffness(&self, u: &[f64]) -> GridFunction {
        let n = self.n_nodes();
        debug_assert_eq!(u.len(), n);
        let inv = 1.0 / self.dx;
        let mut out = vec![0.0; n];
        out[0] = (u[0] - u[1]) * inv;
        for i in 1..n - 1 {
            out[i] = (2.0 * u[i] - u[i - 1] - u[i + 1]) * inv;
        }
        out[n - 1] = (u[n - 1] - u[n - 2]) * inv;
        out
    }

    /// Diagonal of the stiffness matrix.
    pub fn stiffness_diag(&self, i: usize) -> f64 {
        let inv = 1.0 / self.dx;
        if i == 0 || i == self.n_cells {
            inv
        } else {
            2.0 * inv
        }
    }

    /// Robin boundary weight at node `i` (zero away from the endpoints).
    pub fn robin_diag(&self, i: usize) -> f64 {
        if i == 0 {
            self.alpha0
        } else if i == self.n_cells {
            self.alpha1
        } else {
            0.0
        }
    }

    /// Lumped inner product `(u, v)_M = sum_i M_i u_i v_i`.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.n_nodes());
        debug_assert_eq!(v.len(), self.n_nodes());
        self.lumped_mass
            .iter()
            .zip(u.iter().zip(v.iter()))
            .map(|(m, (a, b))| m * a * b)
            .sum()
    }

    pub fn mass_norm_sq(&self, u: &[f64]) -> f64 {
        self.mass_inner(u, u)
    }

    pub fn mass_norm(&self, u: &[f64]) -> f64 {
        self.mass_norm_sq(u).sqrt()
    }

    /// `u . K u = sum over cells of (u_{i+1} - u_i)^2 / dx`, the squared
    /// discrete H1 seminorm. Nonnegative by construction.
    pub fn grad_norm_sq(&self, u: &[f64]) -> f64 {
        let inv = 1.0 / self.dx;
        u.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0]) * inv).sum()
    }

    /// `u . K v` via the cellwise difference form.
    pub fn grad_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let inv = 1.0 / self.dx;
        u.windows(2)
            .zip(v.windows(2))
            .map(|(a, b)| (a[1] - a[0]) * (b[1] - b[0]) * inv)
            .sum()
    }

    /// Squared `V` norm: `||grad u||^2 + ||u||_M^2`.
    pub fn v_norm_sq(&self, u: &[f64]) -> f64 {
        self.grad_norm_sq(u) + self.mass_norm_sq(u)
    }

    /// M-weighted mean `(1/L) sum_i M_i u_i`.
    pub fn mean(&self, u: &[f64]) -> f64 {
        let total: f64 = self
            .lumped_mass
            .iter()
            .zip(u.iter())
            .map(|(m, x)| m * x)
            .sum();
        total / self.length
    }

    /// Return `u` shifted to zero M-mean.
    pub fn project_zero_mean(&self, u: &[f64]) -> GridFunction {
        let mean = self.mean(u);
        u.iter().map(|x| x - mean).collect()
    }

    /// Discrete `(1 - Lap)^{-1}` with no-flux conditions: solves
    /// `(M + K) x = M g`. Linear, self-adjoint in the M-inner product,
    /// positive, and 1-Lipschitz in the M-norm.
    pub fn neumann_green(&self, g: &[f64]) -> GridFunction {
        let n = self.n_nodes();
        debug_assert_eq!(g.len(), n);
        let diag: Vec<f64> = (0..n)
            .map(|i| self.lumped_mass[i] + self.stiffness_diag(i))
            .collect();
        let off = vec![-1.0 / self.dx; n - 1];
        let rhs: Vec<f64> = (0..n).map(|i| self.lumped_mass[i] * g[i]).collect();
        thomas_symmetric(&diag, &off, &rhs)
    }

    /// Discrete inverse Neumann Laplacian `N`: for zero-M-mean `v`, the
    /// zero-M-mean `w` with `K w = M v`.
    ///
    /// Errors when the input mean is not negligible relative to `||v||_M`.
    pub fn zero_mean_green(&self, v: &[f64]) -> Result<GridFunction, Error> {
        let n = self.n_nodes();
        debug_assert_eq!(v.len(), n);
        let norm = self.mass_norm(v);
        let mean_total = self.mean(v) * self.length;
        if mean_total.abs() > 1e-10 * norm {
            return Err(Error::Precondition(format!(
                "zero_mean_green input has M-mean {mean_total:.3e} (norm {norm:.3e})"
            )));
        }
        if norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        // Pin node 0 to zero and solve the reduced system on nodes 1..n;
        // row 0 then holds automatically because row sums of K vanish and
        // the right side has zero total. Shift to zero M-mean afterwards.
        let inv = 1.0 / self.dx;
        let m = n - 1;
        let mut diag = vec![2.0 * inv; m];
        diag[m - 1] = inv;
        let off = vec![-inv; m - 1];
        let rhs: Vec<f64> = (1..n).map(|i| self.lumped_mass[i] * v[i]).collect();
        let reduced = thomas_symmetric(&diag, &off, &rhs);
        let mut w = Vec::with_capacity(n);
        w.push(0.0);
        w.extend(reduced);
        Ok(self.project_zero_mean(&w))
    }

    /// `||v||_{V0*} = sqrt( (M v) . N v )` for zero-M-mean `v`.
    pub fn dual_norm_v0(&self, v: &[f64]) -> Result<f64, Error> {
        let w = self.zero_mean_green(v)?;
        Ok(self.mass_inner(v, &w).max(0.0).sqrt())
    }

    /// `||v||_{V*} = sqrt( (M v) . w )` with `(M + K) w = M v`.
    pub fn dual_norm_v(&self, v: &[f64]) -> f64 {
        let w = self.neumann_green(v);
        self.mass_inner(v, &w).max(0.0).sqrt()
    }
}

/// Thomas solve of a symmetric tridiagonal SPD system.
/// `diag` has length n, `off` length n-1.
pub(crate) fn thomas_symmetric(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    debug_assert_eq!(off.len(), n - 1);
    debug_assert_eq!(rhs.len(), n);
    let mut d = diag.to_vec();
    let mut r = rhs.to_vec();
    for i in 1..n {
        let w = off[i - 1] / d[i - 1];
        d[i] -= w * off[i - 1];
        r[i] -= w * r[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = r[n - 1] / d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (r[i] - off[i] * x[i + 1]) / d[i];
    }
    x
}
