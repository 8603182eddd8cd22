//! Damped Newton iteration on the stacked equation residuals.
//!
//! This is the independent cross-check for the tree solver: it assembles
//! the unknown vector (all non-root pressures, then all edge flows), the
//! residual vector (valve characteristics, pipe losses, junction
//! balances), and iterates full Newton steps with backtracking on the
//! residual infinity norm. Curve slopes are regularized away from zero so
//! the Jacobian stays regular at the flat point of `q|q|`.

use alloc::vec::Vec;

use crate::curves::power_loss;
use crate::math::abs;
use crate::network::{NetworkSpec, VertexKind};

use super::{
    assemble_solution, finish_with_guard, pipe_slope, valve_drop, valve_slope,
    EquilibriumSolution, SolveDiagnostics, SolverConfig, SolverError, SolverMethod, ValveSettings,
};

struct System<'a> {
    net: &'a NetworkSpec,
    u: &'a ValveSettings,
    pump_pressure: f64,
    alpha: f64,
    n: usize,
    m: usize,
}

impl<'a> System<'a> {
    fn new(net: &'a NetworkSpec, u: &'a ValveSettings, pump_pressure: f64) -> Self {
        let n = net.vertex_count();
        Self {
            net,
            u,
            pump_pressure,
            alpha: net.loss_form().alpha(),
            n,
            m: (n - 1) + net.edge_count(),
        }
    }

    #[inline]
    fn pressure_var(&self, vertex: usize) -> Option<usize> {
        (vertex != 0).then(|| vertex - 1)
    }

    #[inline]
    fn flow_var(&self, edge: usize) -> usize {
        (self.n - 1) + edge
    }

    #[inline]
    fn pressure_at(&self, x: &[f64], vertex: usize) -> f64 {
        match self.pressure_var(vertex) {
            Some(var) => x[var],
            None => self.pump_pressure,
        }
    }

    /// Residual rows: valves (leaves ascending), pipes (edges ascending),
    /// junction balances (ascending).
    fn residuals(&self, x: &[f64], out: &mut [f64]) {
        let net = self.net;
        let mut row = 0;
        for &l in &net.leaf_indices {
            let curve = match net.kind_at(l) {
                VertexKind::Valve { curve } => curve,
                _ => unreachable!(),
            };
            let opening = self.u.opening(net.id_of(l)).expect("settings cover leaves");
            let (_, e) = net.parent[l].expect("leaves have parents");
            let q = x[self.flow_var(e)];
            out[row] = self.pressure_at(x, l) - valve_drop(curve, q, opening);
            row += 1;
        }
        for (e, edge) in net.edges.iter().enumerate() {
            let q = x[self.flow_var(e)];
            out[row] = self.pressure_at(x, edge.tail)
                - self.pressure_at(x, edge.head)
                - power_loss(edge.k, self.alpha, q);
            row += 1;
        }
        for v in 0..self.n {
            if v == 0 || net.is_leaf(v) {
                continue;
            }
            let (_, in_edge) = net.parent[v].expect("junctions have parents");
            let mut balance = x[self.flow_var(in_edge)];
            for &(_, out_edge) in &net.children[v] {
                balance -= x[self.flow_var(out_edge)];
            }
            out[row] = balance;
            row += 1;
        }
        debug_assert_eq!(row, self.m);
    }

    /// Dense row-major Jacobian of [`Self::residuals`].
    fn jacobian(&self, x: &[f64], jac: &mut [f64]) {
        let net = self.net;
        jac.fill(0.0);
        let m = self.m;
        let mut row = 0;
        for &l in &net.leaf_indices {
            let curve = match net.kind_at(l) {
                VertexKind::Valve { curve } => curve,
                _ => unreachable!(),
            };
            let opening = self.u.opening(net.id_of(l)).expect("settings cover leaves");
            let (_, e) = net.parent[l].expect("leaves have parents");
            let q = x[self.flow_var(e)];
            if let Some(var) = self.pressure_var(l) {
                jac[row * m + var] = 1.0;
            }
            jac[row * m + self.flow_var(e)] = -valve_slope(curve, q, opening);
            row += 1;
        }
        for (e, edge) in net.edges.iter().enumerate() {
            let q = x[self.flow_var(e)];
            if let Some(var) = self.pressure_var(edge.tail) {
                jac[row * m + var] = 1.0;
            }
            if let Some(var) = self.pressure_var(edge.head) {
                jac[row * m + var] = -1.0;
            }
            jac[row * m + self.flow_var(e)] = -pipe_slope(edge.k, self.alpha, q);
            row += 1;
        }
        for v in 0..self.n {
            if v == 0 || net.is_leaf(v) {
                continue;
            }
            let (_, in_edge) = net.parent[v].expect("junctions have parents");
            jac[row * m + self.flow_var(in_edge)] = 1.0;
            for &(_, out_edge) in &net.children[v] {
                jac[row * m + self.flow_var(out_edge)] = -1.0;
            }
            row += 1;
        }
        debug_assert_eq!(row, self.m);
    }

    /// Small positive flows everywhere, pressures propagated from the pump.
    fn initial_iterate(&self) -> Vec<f64> {
        const Q0: f64 = 1e-3;
        let mut x = alloc::vec![0.0f64; self.m];
        for e in 0..self.net.edge_count() {
            x[self.flow_var(e)] = Q0;
        }
        let mut pressure = alloc::vec![0.0f64; self.n];
        pressure[0] = self.pump_pressure;
        for &v in &self.net.topo {
            for &(c, e) in &self.net.children[v] {
                pressure[c] = pressure[v] - power_loss(self.net.edges[e].k, self.alpha, Q0);
            }
        }
        for v in 1..self.n {
            x[self.pressure_var(v).unwrap()] = pressure[v];
        }
        x
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|&x| abs(x)).fold(0.0f64, f64::max)
}

/// Gaussian elimination with partial pivoting; `a` is row-major `m x m`,
/// overwritten; `b` is overwritten with the solution.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> Result<(), SolverError> {
    for col in 0..m {
        let mut pivot_row = col;
        let mut pivot_mag = abs(a[col * m + col]);
        for r in (col + 1)..m {
            let mag = abs(a[r * m + col]);
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = r;
            }
        }
        if pivot_mag < 1e-300 {
            return Err(SolverError::SingularJacobian { row: col });
        }
        if pivot_row != col {
            for c in col..m {
                a.swap(pivot_row * m + c, col * m + c);
            }
            b.swap(pivot_row, col);
        }
        let pivot = a[col * m + col];
        for r in (col + 1)..m {
            let factor = a[r * m + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[r * m + col] = 0.0;
            for c in (col + 1)..m {
                a[r * m + c] -= factor * a[col * m + c];
            }
            b[r] -= factor * b[col];
        }
    }
    for col in (0..m).rev() {
        let mut sum = b[col];
        for c in (col + 1)..m {
            sum -= a[col * m + c] * b[c];
        }
        b[col] = sum / a[col * m + col];
    }
    Ok(())
}

/// Solves the equilibrium by damped Newton iteration on the stacked
/// residuals, independent of the tree decomposition.
pub fn solve_newton(
    net: &NetworkSpec,
    pump_pressure: f64,
    u: &ValveSettings,
    cfg: &SolverConfig,
) -> Result<EquilibriumSolution, SolverError> {
    cfg.validate()?;
    u.covers(net)?;
    if !pump_pressure.is_finite() {
        return Err(SolverError::NonFinitePressure {
            value: pump_pressure,
        });
    }

    let sys = System::new(net, u, pump_pressure);
    let m = sys.m;
    let mut x = sys.initial_iterate();
    let mut r = alloc::vec![0.0f64; m];
    let mut r_trial = alloc::vec![0.0f64; m];
    let mut jac = alloc::vec![0.0f64; m * m];
    let mut step = alloc::vec![0.0f64; m];
    let mut x_trial = alloc::vec![0.0f64; m];

    sys.residuals(&x, &mut r);
    let mut norm = inf_norm(&r);
    let mut iterations = 0u32;
    // Once converged, a couple of extra full steps sharpen the solution
    // well past the tolerance, which the cross-solver comparisons rely on.
    let mut polish_left = 2u32;

    loop {
        if norm <= cfg.residual_tolerance && polish_left == 0 {
            break;
        }
        if iterations >= cfg.max_newton_iterations {
            if norm <= cfg.residual_tolerance {
                break;
            }
            return Err(SolverError::MaxIterations {
                iterations: cfg.max_newton_iterations,
            });
        }

        sys.jacobian(&x, &mut jac);
        step.copy_from_slice(&r);
        for s in step.iter_mut() {
            *s = -*s;
        }
        solve_dense(&mut jac, &mut step, m)?;

        if norm <= cfg.residual_tolerance {
            // polish: accept only strict improvements, no damping search
            for (xt, (xi, si)) in x_trial.iter_mut().zip(x.iter().zip(step.iter())) {
                *xt = xi + si;
            }
            sys.residuals(&x_trial, &mut r_trial);
            let trial_norm = inf_norm(&r_trial);
            polish_left -= 1;
            if trial_norm < norm {
                x.copy_from_slice(&x_trial);
                r.copy_from_slice(&r_trial);
                norm = trial_norm;
                iterations += 1;
                continue;
            }
            continue;
        }

        let mut lambda = 1.0f64;
        loop {
            for (xt, (xi, si)) in x_trial.iter_mut().zip(x.iter().zip(step.iter())) {
                *xt = xi + lambda * si;
            }
            sys.residuals(&x_trial, &mut r_trial);
            let trial_norm = inf_norm(&r_trial);
            if trial_norm < norm {
                x.copy_from_slice(&x_trial);
                r.copy_from_slice(&r_trial);
                norm = trial_norm;
                break;
            }
            lambda *= 0.5;
            if lambda < cfg.newton_damping_floor {
                return Err(SolverError::NewtonStalled {
                    iteration: iterations,
                });
            }
        }
        iterations += 1;
    }

    let mut pressure = alloc::vec![0.0f64; sys.n];
    pressure[0] = pump_pressure;
    for v in 1..sys.n {
        pressure[v] = x[v - 1];
    }
    let mut edge_flow = alloc::vec![0.0f64; net.edge_count()];
    for e in 0..net.edge_count() {
        edge_flow[e] = x[sys.flow_var(e)];
    }
    let mut root_out = 0.0;
    for &(_, e) in &net.children[0] {
        root_out += edge_flow[e];
    }

    let solution = assemble_solution(
        net,
        &pressure,
        &edge_flow,
        -root_out,
        SolveDiagnostics {
            residual_inf_norm: norm,
            outer_iterations: iterations,
            method: SolverMethod::Newton,
        },
    );
    finish_with_guard(net, solution, u, pump_pressure, cfg)
}
