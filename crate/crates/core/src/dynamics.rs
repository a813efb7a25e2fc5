//! Semi-discrete Galerkin evolution of the elastodynamics system with
//! trapezoidal (average-acceleration) time stepping: forward solves with
//! Dirichlet data on Gamma0 via harmonic-lift splitting, time-reversed
//! (final-condition) solves, energy accounting, and the transposition
//! pairing check.

use crate::elliptic::{gamma0_dof_values, HarmonicLift};
use crate::fields::SeparableField;
use crate::geometry::BoundaryTag;
use crate::lin::{add_scaled, CsrMatrix, SparseLlt};
use crate::spaces::{assemble_load, AssembledForms, Field, FeSpace, LameParameters};
use crate::traces::{fd_time_derivative, stress_vector_trace};
use crate::{Error, Result};
use std::sync::Arc;

/// Uniform time grid on [0, T].
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || steps < 1 {
            return Err(Error::InvalidArgument(format!(
                "bad time grid: T={t_final}, steps={steps}"
            )));
        }
        Ok(TimeGrid { t_final, steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.t_final * n as f64 / self.steps as f64).collect()
    }
}

/// Problem data of one evolution run. The boundary displacement g is
/// sampled at the Gamma0 dofs each step; `require_compatibility` enforces
/// g(., 0) = u0 on Gamma0 to 1e-12.
pub struct ProblemData {
    pub force: Option<SeparableField>,
    pub u0: Field,
    pub u1: Field,
    pub boundary: Option<SeparableField>,
    pub require_compatibility: bool,
}

impl ProblemData {
    pub fn homogeneous(u0: Field, u1: Field) -> ProblemData {
        ProblemData { force: None, u0, u1, boundary: None, require_compatibility: true }
    }
}

/// Time-indexed solution: displacement, velocity and acceleration
/// coefficient vectors plus the discrete energy per step.
pub struct Trajectory {
    pub space: Arc<FeSpace>,
    pub grid: TimeGrid,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn displacement_fields(&self) -> Vec<Field> {
        self.u
            .iter()
            .zip(self.times())
            .map(|(c, t)| Field { space: self.space.clone(), coeffs: c.clone(), time: Some(t) })
            .collect()
    }

    /// Energy-series CSV: step, t, E, ||v||_L2, ||u||_H1.
    pub fn energy_csv(&self, forms: &AssembledForms) -> String {
        let mut s = String::from("step,t,energy,v_l2,u_h1\n");
        for (n, t) in self.times().iter().enumerate() {
            let vl2 = forms.mass.bilinear(&self.v[n], &self.v[n]).max(0.0).sqrt();
            let uh1 = forms.gram_h1.bilinear(&self.u[n], &self.u[n]).max(0.0).sqrt();
            s.push_str(&format!("{n},{t:.17e},{:.17e},{vl2:.17e},{uh1:.17e}\n", self.energy[n]));
        }
        s
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        let scale = e0.abs().max(1.0);
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / scale
    }
}

/// Trapezoidal-rule (Newmark beta=1/4, gamma=1/2) integrator with a fixed
/// step size; the effective operator is factored once per (space, dt).
pub struct NewmarkSolver {
    pub space: Arc<FeSpace>,
    pub forms: Arc<AssembledForms>,
    pub lame: LameParameters,
    dt: f64,
    free: Vec<usize>,
    m_ff: CsrMatrix,
    k_ff: CsrMatrix,
    factor_eff: SparseLlt,
    factor_mass: SparseLlt,
    lift: Option<HarmonicLift>,
}

impl NewmarkSolver {
    pub fn new(
        space: &Arc<FeSpace>,
        forms: &Arc<AssembledForms>,
        lame: LameParameters,
        dt: f64,
        with_lift: bool,
    ) -> Result<NewmarkSolver> {
        let free = space.free_vector_dofs();
        let m_ff = forms.mass.restrict(&free);
        let k_ff = forms.stiffness.restrict(&free);
        let eff = add_scaled(&m_ff, &k_ff, dt * dt / 4.0);
        let factor_eff = SparseLlt::new(&eff)?;
        let factor_mass = SparseLlt::new(&m_ff)?;
        let lift = if with_lift { Some(HarmonicLift::new(space)?) } else { None };
        Ok(NewmarkSolver {
            space: space.clone(),
            forms: forms.clone(),
            lame,
            dt,
            free,
            m_ff,
            k_ff,
            factor_eff,
            factor_mass,
            lift,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if (grid.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::InvalidArgument(format!(
                "grid step {} does not match solver step {}",
                grid.dt(),
                self.dt
            )));
        }
        Ok(())
    }

    /// Forward solve. Nonzero boundary data is split as u = w + ghat with
    /// ghat the per-step harmonic lift; the homogeneous part w evolves on
    /// the Gamma0-constrained dofs, so constrained dofs carry g exactly.
    pub fn solve_forward(&self, data: &ProblemData, grid: &TimeGrid) -> Result<Trajectory> {
        self.check_grid(grid)?;
        let space = &self.space;
        let d = space.dim();
        let n = grid.steps;
        let times = grid.times();
        let ndof = space.n_vector_dofs();
        if data.u0.coeffs.len() != ndof || data.u1.coeffs.len() != ndof {
            return Err(Error::InvalidArgument("initial data on wrong space".into()));
        }
        if data.u0.coeffs.iter().chain(data.u1.coeffs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite initial data".into()));
        }
        // boundary lift series and its time derivatives
        let (ghat, ghat_dot, ghat_ddot) = if let Some(g) = &data.boundary {
            let lift = self
                .lift
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("solver built without lift support".into()))?;
            if n < 3 {
                return Err(Error::InvalidArgument("boundary data needs at least 3 steps".into()));
            }
            let mut series = Vec::with_capacity(n + 1);
            for &t in &times {
                let vals = gamma0_dof_values(space, |x| g.value(x, t));
                series.push(lift.lift(&vals)?.coeffs);
            }
            // compatibility of g(., 0) with u0 on the constrained dofs
            if data.require_compatibility {
                let g0 = &series[0];
                let mut worst: f64 = 0.0;
                let mut scale: f64 = 1.0;
                for &s in &space.gamma0_scalar {
                    for c in 0..d {
                        let i = s * d + c;
                        worst = worst.max((g0[i] - data.u0.coeffs[i]).abs());
                        scale = scale.max(data.u0.coeffs[i].abs());
                    }
                }
                if worst > 1e-12 * scale {
                    return Err(Error::Incompatible(format!(
                        "g(.,0) != u0 on Gamma0: max deviation {worst:.3e}"
                    )));
                }
            }
            let dot = fd_time_derivative(&series, self.dt);
            let ddot = fd_second_derivative(&series, self.dt);
            (series, dot, ddot)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        let has_g = !ghat.is_empty();
        // per-term force loads
        let force_loads: Vec<(Vec<f64>, &crate::fields::TimeFactor)> = match &data.force {
            Some(f) => f
                .terms
                .iter()
                .map(|(x, tau)| Ok((assemble_load(space, |p| x.value(p))?, tau)))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let load_at = |step: usize| -> Vec<f64> {
            let t = times[step];
            let mut load = vec![0.0; ndof];
            for (l, tau) in &force_loads {
                let c = tau.value(t);
                if c != 0.0 {
                    crate::lin::axpy(&mut load, c, l);
                }
            }
            if has_g {
                // - M ghat'' - K ghat
                let mg = self.forms.mass.mul_vec(&ghat_ddot[step]);
                let kg = self.forms.stiffness.mul_vec(&ghat[step]);
                for i in 0..ndof {
                    load[i] -= mg[i] + kg[i];
                }
            }
            load
        };
        // free-dof initial data
        let restrict = |full: &[f64]| -> Vec<f64> { self.free.iter().map(|&i| full[i]).collect() };
        let mut w: Vec<f64>;
        let mut wd: Vec<f64>;
        if has_g {
            let mut u0h = data.u0.coeffs.clone();
            let mut u1h = data.u1.coeffs.clone();
            for i in 0..ndof {
                u0h[i] -= ghat[0][i];
                u1h[i] -= ghat_dot[0][i];
            }
            w = restrict(&u0h);
            wd = restrict(&u1h);
        } else {
            w = restrict(&data.u0.coeffs);
            wd = restrict(&data.u1.coeffs);
        }
        // initial acceleration: M a0 = r0 - K w0
        let r0 = restrict(&load_at(0));
        let kw = self.k_ff.mul_vec(&w);
        let rhs0: Vec<f64> = r0.iter().zip(&kw).map(|(r, k)| r - k).collect();
        let mut wa = self.factor_mass.solve(&rhs0);
        let nf = self.free.len();
        let mut u_series = Vec::with_capacity(n + 1);
        let mut v_series = Vec::with_capacity(n + 1);
        let mut a_series = Vec::with_capacity(n + 1);
        let expand = |free_vec: &[f64], add: Option<&[f64]>| -> Vec<f64> {
            let mut full = match add {
                Some(base) => base.to_vec(),
                None => vec![0.0; ndof],
            };
            for (k, &i) in self.free.iter().enumerate() {
                full[i] += free_vec[k];
            }
            full
        };
        let store =
            |us: &mut Vec<Vec<f64>>, vs: &mut Vec<Vec<f64>>, as_: &mut Vec<Vec<f64>>,
             step: usize, w: &[f64], wd: &[f64], wa: &[f64]| {
                if has_g {
                    us.push(expand(w, Some(&ghat[step])));
                    vs.push(expand(wd, Some(&ghat_dot[step])));
                    as_.push(expand(wa, Some(&ghat_ddot[step])));
                } else {
                    us.push(expand(w, None));
                    vs.push(expand(wd, None));
                    as_.push(expand(wa, None));
                }
            };
        store(&mut u_series, &mut v_series, &mut a_series, 0, &w, &wd, &wa);
        let dt = self.dt;
        for step in 1..=n {
            // predictor
            let mut pred = vec![0.0; nf];
            for i in 0..nf {
                pred[i] = w[i] + dt * wd[i] + dt * dt / 4.0 * wa[i];
            }
            let r = restrict(&load_at(step));
            let kp = self.k_ff.mul_vec(&pred);
            let rhs: Vec<f64> = r.iter().zip(&kp).map(|(a, b)| a - b).collect();
            let wa_new = self.factor_eff.solve(&rhs);
            for i in 0..nf {
                w[i] = pred[i] + dt * dt / 4.0 * wa_new[i];
                wd[i] += dt / 2.0 * (wa[i] + wa_new[i]);
            }
            wa = wa_new;
            store(&mut u_series, &mut v_series, &mut a_series, step, &w, &wd, &wa);
        }
        let energy: Vec<f64> = u_series
            .iter()
            .zip(&v_series)
            .map(|(u, v)| {
                0.5 * self.forms.mass.bilinear(v, v) + 0.5 * self.forms.stiffness.bilinear(u, u)
            })
            .collect();
        Ok(Trajectory { space: space.clone(), grid: *grid, u: u_series, v: v_series, a: a_series, energy })
    }

    /// Solve the final-condition problem
    ///   phi_tt = div P(phi) + psi,  phi(T) = phi_t(T) = 0,
    ///   phi = 0 on Gamma0, P(phi).n = 0 on Gamma1,
    /// by a forward solve on the time-reversed load.
    pub fn solve_backward(&self, psi_loads: &[Vec<f64>], grid: &TimeGrid) -> Result<Trajectory> {
        self.check_grid(grid)?;
        if psi_loads.len() != grid.steps + 1 {
            return Err(Error::InvalidArgument("load trajectory length mismatch".into()));
        }
        let ndof = self.space.n_vector_dofs();
        let n = grid.steps;
        let nf = self.free.len();
        let restrict = |full: &[f64]| -> Vec<f64> { self.free.iter().map(|&i| full[i]).collect() };
        let mut w = vec![0.0; nf];
        let mut wd = vec![0.0; nf];
        let r0 = restrict(&psi_loads[n]);
        let mut wa = self.factor_mass.solve(&r0);
        let dt = self.dt;
        let mut u_rev = Vec::with_capacity(n + 1);
        let mut v_rev = Vec::with_capacity(n + 1);
        let mut a_rev = Vec::with_capacity(n + 1);
        let expand = |fv: &[f64]| -> Vec<f64> {
            let mut full = vec![0.0; ndof];
            for (k, &i) in self.free.iter().enumerate() {
                full[i] = fv[k];
            }
            full
        };
        u_rev.push(expand(&w));
        v_rev.push(expand(&wd));
        a_rev.push(expand(&wa));
        for step in 1..=n {
            let mut pred = vec![0.0; nf];
            for i in 0..nf {
                pred[i] = w[i] + dt * wd[i] + dt * dt / 4.0 * wa[i];
            }
            let r = restrict(&psi_loads[n - step]);
            let kp = self.k_ff.mul_vec(&pred);
            let rhs: Vec<f64> = r.iter().zip(&kp).map(|(a, b)| a - b).collect();
            let wa_new = self.factor_eff.solve(&rhs);
            for i in 0..nf {
                w[i] = pred[i] + dt * dt / 4.0 * wa_new[i];
                wd[i] += dt / 2.0 * (wa[i] + wa_new[i]);
            }
            wa = wa_new;
            u_rev.push(expand(&w));
            v_rev.push(expand(&wd));
            a_rev.push(expand(&wa));
        }
        // reverse time: phi_n = chi_{N-n}, velocities flip sign
        let mut u: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        for step in 0..=n {
            u.push(u_rev[n - step].clone());
            v.push(v_rev[n - step].iter().map(|x| -x).collect::<Vec<f64>>());
            a.push(a_rev[n - step].clone());
        }
        let energy: Vec<f64> = u
            .iter()
            .zip(&v)
            .map(|(uu, vv)| {
                0.5 * self.forms.mass.bilinear(vv, vv) + 0.5 * self.forms.stiffness.bilinear(uu, uu)
            })
            .collect();
        Ok(Trajectory { space: self.space.clone(), grid: *grid, u, v, a, energy })
    }
}

/// Second-order finite-difference second time derivative.
pub fn fd_second_derivative(series: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = series.len();
    assert!(n >= 4, "need at least 4 samples");
    let m = series[0].len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; m];
        if i == 0 {
            for k in 0..m {
                row[k] = (2.0 * series[0][k] - 5.0 * series[1][k] + 4.0 * series[2][k]
                    - series[3][k])
                    / (dt * dt);
            }
        } else if i == n - 1 {
            for k in 0..m {
                row[k] = (2.0 * series[n - 1][k] - 5.0 * series[n - 2][k] + 4.0 * series[n - 3][k]
                    - series[n - 4][k])
                    / (dt * dt);
            }
        } else {
            for k in 0..m {
                row[k] = (series[i + 1][k] - 2.0 * series[i][k] + series[i - 1][k]) / (dt * dt);
            }
        }
        out.push(row);
    }
    out
}

/// Both sides of the transposition pairing
///   int (u, psi) dt = <u1, phi(0)> - (u0, phi_t(0))
///                     - int_{Gamma0} g . (P(phi) n) + int <F, phi> dt
/// with phi the final-condition solve of the load psi, plus their relative
/// residual.
pub struct TranspositionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn check_transposition_identity(
    solver: &NewmarkSolver,
    data: &ProblemData,
    psi: &SeparableField,
    grid: &TimeGrid,
) -> Result<TranspositionCheck> {
    let space = &solver.space;
    let times = grid.times();
    // per-term loads of psi
    let psi_loads: Vec<Vec<f64>> = {
        let term_loads: Vec<(Vec<f64>, &crate::fields::TimeFactor)> = psi
            .terms
            .iter()
            .map(|(x, tau)| Ok((assemble_load(space, |p| x.value(p))?, tau)))
            .collect::<Result<_>>()?;
        times
            .iter()
            .map(|&t| {
                let mut l = vec![0.0; space.n_vector_dofs()];
                for (lv, tau) in &term_loads {
                    crate::lin::axpy(&mut l, tau.value(t), lv);
                }
                l
            })
            .collect()
    };
    let u = solver.solve_forward(data, grid)?;
    let phi = solver.solve_backward(&psi_loads, grid)?;
    // LHS: quadrature-consistent pairing sum_n w_n u_n . load_psi(t_n)
    let tw = trapezoid_weights(grid);
    let lhs: f64 = (0..=grid.steps).map(|n| tw[n] * crate::lin::dot(&u.u[n], &psi_loads[n])).sum();
    // RHS
    let mut rhs = crate::lin::dot(&data.u1.coeffs, &solver.forms.mass.mul_vec(&phi.u[0]));
    rhs -= crate::lin::dot(&data.u0.coeffs, &solver.forms.mass.mul_vec(&phi.v[0]));
    // boundary term: - int g . (P(phi) n)
    if let Some(g) = &data.boundary {
        let phi_fields = phi.displacement_fields();
        let refs: Vec<&Field> = phi_fields.iter().collect();
        let tr = stress_vector_trace(space, &refs, &solver.lame, BoundaryTag::Gamma0, &times);
        let mut btotal = 0.0;
        for (n, &t) in times.iter().enumerate() {
            let mut bn = 0.0;
            for (q, p) in tr.points.iter().enumerate() {
                let gv = g.value(&p.x[..space.dim()], t);
                let pn = tr.values[n][q];
                bn += p.weight * (0..space.dim()).map(|k| gv[k] * pn[k]).sum::<f64>();
            }
            btotal += tw[n] * bn;
        }
        rhs -= btotal;
    }
    // force term: int <F, phi> dt by the same per-term loads
    if let Some(f) = &data.force {
        let term_loads: Vec<(Vec<f64>, &crate::fields::TimeFactor)> = f
            .terms
            .iter()
            .map(|(x, tau)| Ok((assemble_load(space, |p| x.value(p))?, tau)))
            .collect::<Result<_>>()?;
        let mut ftotal = 0.0;
        for (n, &t) in times.iter().enumerate() {
            let mut load = vec![0.0; space.n_vector_dofs()];
            for (lv, tau) in &term_loads {
                crate::lin::axpy(&mut load, tau.value(t), lv);
            }
            ftotal += tw[n] * crate::lin::dot(&load, &phi.u[n]);
        }
        rhs += ftotal;
    }
    Ok(TranspositionCheck { lhs, rhs, residual: crate::rel_residual(lhs, rhs) })
}

pub fn trapezoid_weights(grid: &TimeGrid) -> Vec<f64> {
    let dt = grid.dt();
    let mut w = vec![dt; grid.steps + 1];
    w[0] = dt / 2.0;
    w[grid.steps] = dt / 2.0;
    w
}

/// Lowest elasticity eigenmode on the constrained subspace, M-normalized,
/// as a full-size field, with its Rayleigh quotient omega^2.
pub fn lowest_eigenmode(
    space: &Arc<FeSpace>,
    forms: &AssembledForms,
    seed: u64,
) -> Result<(f64, Field)> {
    let free = space.free_vector_dofs();
    let k_ff = forms.stiffness.restrict(&free);
    let m_ff = forms.mass.restrict(&free);
    let pairs = crate::lin::smallest_gen_eigenpairs(&k_ff, &m_ff, 1, 200, seed)?;
    let (omega_sq, wf) = &pairs[0];
    let mut coeffs = vec![0.0; space.n_vector_dofs()];
    for (k, &i) in free.iter().enumerate() {
        coeffs[i] = wf[k];
    }
    Ok((*omega_sq, Field { space: space.clone(), coeffs, time: None }))
}
