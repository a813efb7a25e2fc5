//! Machine verification of the boundary calculus identities for fields
//! vanishing on Gamma0 (exact derivatives, no discretization error) and of
//! the multiplier identity behind the boundary trace estimate, evaluated
//! along discrete trajectories as a convergence statement.

use crate::fields::{random_vanishing_on_gamma0, SeparableField, SpatialField};
use crate::geometry::{AuxiliaryFields, BoundaryTag};
use crate::spaces::{cell_rule, FeSpace, LameParameters};
use crate::traces::trace_points;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};

/// Generator of vector fields vanishing identically on |x| = r0:
/// polynomials in (|x|^2 - r0^2) times random smooth factors.
#[derive(Debug, Clone)]
pub struct TestFieldFamily {
    pub dim: usize,
    pub r0: f64,
    pub seed: u64,
    pub count: usize,
    pub max_mode: usize,
    pub smoothness: f64,
    pub powers: usize,
}

impl TestFieldFamily {
    pub fn new(dim: usize, r0: f64, seed: u64, count: usize) -> TestFieldFamily {
        TestFieldFamily { dim, r0, seed, count, max_mode: 4, smoothness: 1.0, powers: 2 }
    }

    pub fn field(&self, index: usize) -> SpatialField {
        let mut rng =
            rand_chacha::ChaCha12Rng::seed_from_u64(self.seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(index as u64 + 1)));
        random_vanishing_on_gamma0(self.dim, self.r0, &mut rng, self.max_mode, self.smoothness, self.powers)
    }

    /// Exact points on the boundary sphere/circle |x| = r0.
    pub fn boundary_points(&self, n: usize) -> Vec<[f64; 3]> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(self.seed ^ 0xabcd_1234);
        (0..n)
            .map(|_| {
                if self.dim == 2 {
                    let th = rng.gen_range(0.0..std::f64::consts::TAU);
                    [self.r0 * th.cos(), self.r0 * th.sin(), 0.0]
                } else {
                    loop {
                        let v = [
                            rng.gen_range(-1.0f64..1.0),
                            rng.gen_range(-1.0f64..1.0),
                            rng.gen_range(-1.0f64..1.0),
                        ];
                        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                        if n2 > 1e-3 && n2 < 1.0 {
                            let s = self.r0 / n2.sqrt();
                            break [v[0] * s, v[1] * s, v[2] * s];
                        }
                    }
                }
            })
            .collect()
    }
}

/// Max normalized residual of each of the five identities.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct AppendixAResiduals {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
}

impl AppendixAResiduals {
    pub fn max(&self) -> f64 {
        self.a1.max(self.a2).max(self.a3).max(self.a4).max(self.a5)
    }
}

/// Evaluate the five identities at exact boundary points with exact
/// derivatives. Residuals are |LHS - RHS| / (1 + |LHS|); any field not
/// vanishing on the boundary signals a generator bug.
pub fn check_appendix_a(family: &TestFieldFamily, n_points: usize) -> Result<AppendixAResiduals> {
    let points = family.boundary_points(n_points);
    let d = family.dim;
    let mut res = AppendixAResiduals { a1: 0.0, a2: 0.0, a3: 0.0, a4: 0.0, a5: 0.0 };
    for idx in 0..family.count {
        let phi = family.field(idx);
        for x in &points {
            let j = phi.eval(&x[..d]);
            let vnorm = (0..d).map(|i| j.value[i] * j.value[i]).sum::<f64>().sqrt();
            if vnorm > 1e-13 {
                return Err(Error::Numerical(format!(
                    "field {idx} does not vanish on Gamma0: |phi| = {vnorm:.3e}"
                )));
            }
            // outward normal of the solid points into the cavity
            let n: Vec<f64> = (0..d).map(|k| -x[k] / family.r0).collect();
            let grad = j.grad;
            let div = j.div();
            // grad phi . n
            let mut gn = [0.0f64; 3];
            for i in 0..d {
                for k in 0..d {
                    gn[i] += grad[i][k] * n[k];
                }
            }
            let gn_norm_sq: f64 = (0..d).map(|i| gn[i] * gn[i]).sum();
            let grad_sq = j.grad_frobenius_sq();
            // A1: grad phi = (grad phi . n) (x) n
            let mut a1_diff: f64 = 0.0;
            for i in 0..d {
                for k in 0..d {
                    a1_diff = a1_diff.max((grad[i][k] - gn[i] * n[k]).abs());
                }
            }
            res.a1 = res.a1.max(a1_diff / (1.0 + grad_sq.sqrt()));
            // A2: |grad phi| = |grad phi . n|
            let a2 = (grad_sq.sqrt() - gn_norm_sq.sqrt()).abs();
            res.a2 = res.a2.max(a2 / (1.0 + grad_sq.sqrt()));
            // A3: div (n . grad phi . n) = div^2
            let ngn: f64 = (0..d).map(|i| n[i] * gn[i]).sum();
            let a3 = (div * ngn - div * div).abs();
            res.a3 = res.a3.max(a3 / (1.0 + div * div));
            // A4: 2|e|^2 = |grad|^2 + div^2
            let e = j.strain();
            let mut e_sq = 0.0;
            for i in 0..d {
                for k in 0..d {
                    e_sq += e[i][k] * e[i][k];
                }
            }
            let a4 = (2.0 * e_sq - grad_sq - div * div).abs();
            res.a4 = res.a4.max(a4 / (1.0 + 2.0 * e_sq));
            // A5: 4|e.n|^2 = |grad|^2 + 3 div^2
            let mut en = [0.0f64; 3];
            for i in 0..d {
                for k in 0..d {
                    en[i] += e[i][k] * n[k];
                }
            }
            let en_sq: f64 = (0..d).map(|i| en[i] * en[i]).sum();
            let a5 = (4.0 * en_sq - grad_sq - 3.0 * div * div).abs();
            res.a5 = res.a5.max(a5 / (1.0 + 4.0 * en_sq));
        }
    }
    Ok(res)
}

/// Stress-vector decomposition on Gamma0 for fields vanishing there:
/// |P(phi) n|^2 = mu^2 (|grad phi|^2 + 3 div^2) + (4 mu lambda + lambda^2) div^2.
pub fn check_stress_decomposition(
    family: &TestFieldFamily,
    n_points: usize,
    lame: &LameParameters,
) -> Result<f64> {
    let points = family.boundary_points(n_points);
    let d = family.dim;
    let mut worst: f64 = 0.0;
    for idx in 0..family.count {
        let phi = family.field(idx);
        for x in &points {
            let j = phi.eval(&x[..d]);
            let n: Vec<f64> = (0..d).map(|k| -x[k] / family.r0).collect();
            let p = j.piola(lame);
            let mut pn = [0.0f64; 3];
            for i in 0..d {
                for k in 0..d {
                    pn[i] += p[i][k] * n[k];
                }
            }
            let lhs: f64 = (0..d).map(|i| pn[i] * pn[i]).sum();
            let div = j.div();
            let rhs = lame.mu * lame.mu * (j.grad_frobenius_sq() + 3.0 * div * div)
                + (4.0 * lame.mu * lame.lambda + lame.lambda * lame.lambda) * div * div;
            worst = worst.max((lhs - rhs).abs() / (1.0 + lhs));
        }
    }
    Ok(worst)
}

/// Both sides of the multiplier identity along a discrete trajectory with
/// homogeneous Dirichlet data, the eight right-hand-side terms, and the
/// relative residual.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MultiplierIdentity {
    pub lhs: f64,
    pub terms: [f64; 8],
    pub rhs: f64,
    pub residual: f64,
}

/// Evaluate the identity
///   1/2 int_0^T int_{Gamma0} [mu |grad u|^2 + (lambda+mu) (div u)^2]
///     = [u_t(T) . (grad u(T) h)] - [u1 . (grad u0 h)]
///       + 1/2 iint |u_t|^2 div h - mu/2 iint |grad u|^2 div h
///       + mu iint grad u : (grad u grad h)
///       - (lambda+mu)/2 iint (div u)^2 div h
///       + (lambda+mu) iint div u (grad u : (grad h)^T)
///       - iint F . (grad u h)
/// with h and grad h evaluated analytically.
pub fn check_multiplier_identity(
    traj: &crate::dynamics::Trajectory,
    aux: &AuxiliaryFields,
    lame: &LameParameters,
    force: Option<&SeparableField>,
) -> Result<MultiplierIdentity> {
    let space = &traj.space;
    let d = space.dim();
    let times = traj.times();
    let nsteps = traj.grid.steps;
    // the identity is the zero-boundary-condition form
    let mut scale: f64 = 1.0;
    for u in &traj.u {
        for &v in u.iter() {
            scale = scale.max(v.abs());
        }
    }
    for &s in &space.gamma0_scalar {
        for c in 0..d {
            for u in &traj.u {
                if u[s * d + c].abs() > 1e-10 * scale {
                    return Err(Error::InvalidArgument(
                        "multiplier identity requires g = 0 (nonzero Gamma0 dof found)".into(),
                    ));
                }
            }
        }
    }
    let tw = crate::dynamics::trapezoid_weights(&traj.grid);
    // boundary LHS
    let pts = trace_points(space, BoundaryTag::Gamma0);
    let facet_info: Vec<(usize, Vec<f64>, Vec<[f64; 3]>)> = {
        // (cell, bary, shape gradients) per quadrature point
        let rule = crate::spaces::facet_rule(d, space.degree);
        let mut out = Vec::with_capacity(pts.len());
        for (fi, f) in space.mesh.facets.iter().enumerate() {
            if f.tag != BoundaryTag::Gamma0 {
                continue;
            }
            let gl = space.grad_lambda(f.cell);
            for fb in &rule.points {
                let bary = crate::spaces::facet_point_to_cell_bary(space, fi, fb);
                let grads = space.shape_gradients(&bary, &gl);
                out.push((f.cell, bary, grads));
            }
        }
        out
    };
    let mut lhs = 0.0;
    for (step, wt) in tw.iter().enumerate() {
        let u = &traj.u[step];
        let mut acc = 0.0;
        for (q, p) in pts.iter().enumerate() {
            let (cell, _, grads) = &facet_info[q];
            let dofs = space.cell_scalar_dofs(*cell);
            let mut grad = [[0.0f64; 3]; 3];
            for (l, &sd) in dofs.iter().enumerate() {
                for i in 0..d {
                    let c = u[sd * d + i];
                    for k in 0..d {
                        grad[i][k] += c * grads[l][k];
                    }
                }
            }
            let mut g2 = 0.0;
            let mut div = 0.0;
            for i in 0..d {
                div += grad[i][i];
                for k in 0..d {
                    g2 += grad[i][k] * grad[i][k];
                }
            }
            acc += p.weight * (lame.mu * g2 + (lame.lambda + lame.mu) * div * div);
        }
        lhs += 0.5 * wt * acc;
    }
    // volume terms
    let rule = cell_rule(d, space.degree);
    let n_cells = space.mesh.n_cells();
    // per-cell static data
    struct CellQuad {
        dofs: Vec<usize>,
        qp: Vec<([f64; 3], f64, Vec<f64>, Vec<[f64; 3]>)>, // (x, w, shape vals, shape grads)
    }
    let cells: Vec<CellQuad> = (0..n_cells)
        .map(|c| {
            let vol = space.mesh.cell_volume(c);
            let gl = space.grad_lambda(c);
            let nodes = space.mesh.cell_nodes(c);
            let qp = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(bary, w)| {
                    let mut x = [0.0f64; 3];
                    for (k, &nd) in nodes.iter().enumerate() {
                        for r in 0..d {
                            x[r] += bary[k] * space.mesh.node(nd)[r];
                        }
                    }
                    (x, w * vol, space.shape_values(bary), space.shape_gradients(bary, &gl))
                })
                .collect();
            CellQuad { dofs: space.cell_scalar_dofs(c).to_vec(), qp }
        })
        .collect();
    let eval_at = |coeffs: &[f64], cq: &CellQuad, q: usize| -> ([f64; 3], [[f64; 3]; 3]) {
        let (_, _, vals, grads) = &cq.qp[q];
        let mut value = [0.0f64; 3];
        let mut grad = [[0.0f64; 3]; 3];
        for (l, &sd) in cq.dofs.iter().enumerate() {
            for i in 0..d {
                let c = coeffs[sd * d + i];
                value[i] += c * vals[l];
                for k in 0..d {
                    grad[i][k] += c * grads[l][k];
                }
            }
        }
        (value, grad)
    };
    // endpoint terms 1 and 2
    let endpoint_term = |uc: &[f64], vc: &[f64]| -> f64 {
        let mut acc = 0.0;
        for cq in &cells {
            for q in 0..cq.qp.len() {
                let (x, w, _, _) = &cq.qp[q];
                let (vval, ugrad) = {
                    let (v, _) = eval_at(vc, cq, q);
                    let (_, g) = eval_at(uc, cq, q);
                    (v, g)
                };
                let h = aux.h(&x[..d]);
                let mut dot = 0.0;
                for i in 0..d {
                    let mut gh = 0.0;
                    for k in 0..d {
                        gh += ugrad[i][k] * h[k];
                    }
                    dot += vval[i] * gh;
                }
                acc += w * dot;
            }
        }
        acc
    };
    let t1 = endpoint_term(&traj.u[nsteps], &traj.v[nsteps]);
    let t2 = -endpoint_term(&traj.u[0], &traj.v[0]);
    // time-integrated volume terms 3..8
    let mut t3 = 0.0;
    let mut t4 = 0.0;
    let mut t5 = 0.0;
    let mut t6 = 0.0;
    let mut t7 = 0.0;
    let mut t8 = 0.0;
    for (step, wt) in tw.iter().enumerate() {
        let u = &traj.u[step];
        let v = &traj.v[step];
        let t = times[step];
        let mut s3 = 0.0;
        let mut s4 = 0.0;
        let mut s5 = 0.0;
        let mut s6 = 0.0;
        let mut s7 = 0.0;
        let mut s8 = 0.0;
        for cq in &cells {
            for q in 0..cq.qp.len() {
                let (x, w, _, _) = &cq.qp[q];
                let (vval, _) = eval_at(v, cq, q);
                let (_, ugrad) = eval_at(u, cq, q);
                let h = aux.h(&x[..d]);
                let gh = aux.grad_h(&x[..d]);
                let divh = (0..d).map(|i| gh[i][i]).sum::<f64>();
                let mut v2 = 0.0;
                let mut g2 = 0.0;
                let mut div = 0.0;
                for i in 0..d {
                    v2 += vval[i] * vval[i];
                    div += ugrad[i][i];
                    for k in 0..d {
                        g2 += ugrad[i][k] * ugrad[i][k];
                    }
                }
                s3 += w * v2 * divh;
                s4 += w * g2 * divh;
                // grad u : (grad u grad h) = u_{i,k} u_{i,j} h_{j,k}
                let mut guugh = 0.0;
                for i in 0..d {
                    for k in 0..d {
                        let mut inner = 0.0;
                        for jj in 0..d {
                            inner += ugrad[i][jj] * gh[jj][k];
                        }
                        guugh += ugrad[i][k] * inner;
                    }
                }
                s5 += w * guugh;
                s6 += w * div * div * divh;
                // grad u : (grad h)^T = u_{i,j} h_{j,i}
                let mut gught = 0.0;
                for i in 0..d {
                    for jj in 0..d {
                        gught += ugrad[i][jj] * gh[jj][i];
                    }
                }
                s7 += w * div * gught;
                if let Some(f) = force {
                    let fv = f.value(&x[..d], t);
                    let mut dot = 0.0;
                    for i in 0..d {
                        let mut ghv = 0.0;
                        for k in 0..d {
                            ghv += ugrad[i][k] * h[k];
                        }
                        dot += fv[i] * ghv;
                    }
                    s8 += w * dot;
                }
            }
        }
        t3 += 0.5 * wt * s3;
        t4 -= 0.5 * lame.mu * wt * s4;
        t5 += lame.mu * wt * s5;
        t6 -= 0.5 * (lame.lambda + lame.mu) * wt * s6;
        t7 += (lame.lambda + lame.mu) * wt * s7;
        t8 -= wt * s8;
    }
    let terms = [t1, t2, t3, t4, t5, t6, t7, t8];
    let rhs: f64 = terms.iter().sum();
    Ok(MultiplierIdentity { lhs, terms, rhs, residual: crate::rel_residual(lhs, rhs) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{lowest_eigenmode, NewmarkSolver, ProblemData, TimeGrid};
    use crate::geometry::{build_mesh, DomainSpec};
    use crate::jets::Jet2;
    use crate::spaces::{AssembledForms, Field, FeSpace};
    use std::sync::Arc;

    #[test]
    fn appendix_a_hand_example() {
        // phi = (|x|^2 - r0^2) e1 at (r0, 0) in 2D
        let r0 = 1.3f64;
        let phi = SpatialField::from_jets(2, move |x| {
            let s = x[0] * x[0] + x[1] * x[1] + (-r0 * r0);
            [s, Jet2::constant(0.0), Jet2::constant(0.0)]
        });
        let j = phi.eval(&[r0, 0.0]);
        // grad phi = 2 r0 e1 (x) e1
        assert!((j.grad[0][0] - 2.0 * r0).abs() < 1e-14);
        assert!(j.grad[0][1].abs() < 1e-14 && j.grad[1][0].abs() < 1e-14);
        let div = j.div();
        assert!((div - 2.0 * r0).abs() < 1e-14);
        // A2: |grad| = |grad . n| = 2 r0
        assert!((j.grad_frobenius_sq().sqrt() - 2.0 * r0).abs() < 1e-14);
        // A3: div (n . grad . n) = 4 r0^2
        let n = [-1.0, 0.0];
        let ngn = n[0] * (j.grad[0][0] * n[0] + j.grad[0][1] * n[1]);
        assert!((div * ngn - 4.0 * r0 * r0).abs() < 1e-12);
        // A5: 4 |e n|^2 = |grad|^2 + 3 div^2 = 16 r0^2
        let e = j.strain();
        let en = [e[0][0] * n[0] + e[0][1] * n[1], e[1][0] * n[0] + e[1][1] * n[1]];
        let lhs = 4.0 * (en[0] * en[0] + en[1] * en[1]);
        assert!((lhs - 16.0 * r0 * r0).abs() < 1e-12);
    }

    #[test]
    fn appendix_a_random_families_both_dimensions() {
        for dim in [2usize, 3] {
            let fam = TestFieldFamily::new(dim, 1.0, 99, 20);
            let res = check_appendix_a(&fam, 25).unwrap();
            assert!(res.max() <= 1e-12, "dim {dim}: residuals {res:?}");
        }
    }

    #[test]
    fn stress_decomposition_two_lame_pairs() {
        let fam = TestFieldFamily::new(2, 1.0, 7, 10);
        for (mu, lambda) in [(1.0, 1.0), (1.0, 10.0)] {
            let lame = LameParameters::new(mu, lambda).unwrap();
            let worst = check_stress_decomposition(&fam, 20, &lame).unwrap();
            assert!(worst <= 1e-12, "(mu,lambda)=({mu},{lambda}): {worst}");
        }
        let fam3 = TestFieldFamily::new(3, 1.0, 8, 5);
        let lame = LameParameters::new(1.0, 10.0).unwrap();
        assert!(check_stress_decomposition(&fam3, 10, &lame).unwrap() <= 1e-12);
    }

    #[test]
    fn zero_trajectory_gives_zero_residual() {
        let mesh = build_mesh(&DomainSpec::new(2, 1.0, 2.0, 0).unwrap()).unwrap();
        let space = FeSpace::new(Arc::new(mesh), 2).unwrap();
        let lame = LameParameters::new(1.0, 1.0).unwrap();
        let forms = Arc::new(AssembledForms::new(&space, &lame).unwrap());
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let solver = NewmarkSolver::new(&space, &forms, lame, grid.dt(), false).unwrap();
        let data = ProblemData::homogeneous(Field::zeros(&space), Field::zeros(&space));
        let traj = solver.solve_forward(&data, &grid).unwrap();
        let aux = AuxiliaryFields::new(&space.mesh);
        let id = check_multiplier_identity(&traj, &aux, &lame, None).unwrap();
        assert_eq!(id.lhs, 0.0);
        assert_eq!(id.residual, 0.0);
    }

    #[test]
    fn multiplier_identity_residual_decreases() {
        let lame = LameParameters::new(1.0, 1.0).unwrap();
        let mut residuals = Vec::new();
        for (level, steps) in [(0u32, 16), (1u32, 32)] {
            let mesh = build_mesh(&DomainSpec::new(2, 1.0, 2.0, level).unwrap()).unwrap();
            let space = FeSpace::new(Arc::new(mesh), 2).unwrap();
            let forms = Arc::new(AssembledForms::new(&space, &lame).unwrap());
            let grid = TimeGrid::new(1.0, steps).unwrap();
            let solver = NewmarkSolver::new(&space, &forms, lame, grid.dt(), false).unwrap();
            let (_, mode) = lowest_eigenmode(&space, &forms, 5).unwrap();
            let data = ProblemData::homogeneous(mode, Field::zeros(&space));
            let traj = solver.solve_forward(&data, &grid).unwrap();
            let aux = AuxiliaryFields::new(&space.mesh);
            let id = check_multiplier_identity(&traj, &aux, &lame, None).unwrap();
            residuals.push(id.residual);
        }
        assert!(
            residuals[1] <= residuals[0] / 1.5,
            "insufficient decrease: {residuals:?}"
        );
    }

    #[test]
    fn multiplier_identity_rejects_nonzero_boundary() {
        let mesh = build_mesh(&DomainSpec::new(2, 1.0, 2.0, 0).unwrap()).unwrap();
        let space = FeSpace::new(Arc::new(mesh), 2).unwrap();
        let lame = LameParameters::new(1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let traj = crate::dynamics::Trajectory {
            space: space.clone(),
            grid,
            u: vec![vec![1.0; space.n_vector_dofs()]; 5],
            v: vec![vec![0.0; space.n_vector_dofs()]; 5],
            a: vec![vec![0.0; space.n_vector_dofs()]; 5],
            energy: vec![0.0; 5],
        };
        let aux = AuxiliaryFields::new(&space.mesh);
        assert!(check_multiplier_identity(&traj, &aux, &lame, None).is_err());
    }

    #[test]
    fn multiplier_identity_invariant_under_rotation() {
        let lame = LameParameters::new(1.0, 1.0).unwrap();
        let th = 0.61f64;
        let rot = [
            [th.cos(), -th.sin(), 0.0],
            [th.sin(), th.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ];
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
        let u0f = random_vanishing_on_gamma0(2, 1.0, &mut rng, 3, 1.5, 1);
        let u1f = random_vanishing_on_gamma0(2, 1.0, &mut rng, 3, 1.5, 1);
        let forcef = SeparableField::single(
            crate::fields::random_smooth_field(2, &mut rng, 3, 1.5),
            crate::fields::TimeFactor::Cosine { amp: 1.0, omega: 1.2, phase: 0.4 },
        );
        let run = |rotate: bool| -> f64 {
            let mesh0 = build_mesh(&DomainSpec::new(2, 1.0, 2.0, 1).unwrap()).unwrap();
            let mesh = if rotate { mesh0.rotated(&rot) } else { mesh0 };
            let space = FeSpace::new(Arc::new(mesh), 2).unwrap();
            let forms = Arc::new(AssembledForms::new(&space, &lame).unwrap());
            let grid = TimeGrid::new(1.0, 16).unwrap();
            let solver = NewmarkSolver::new(&space, &forms, lame, grid.dt(), false).unwrap();
            let (u0r, u1r, fr) = if rotate {
                (u0f.rotated(rot), u1f.rotated(rot), forcef.rotated(rot))
            } else {
                (u0f.clone(), u1f.clone(), forcef.clone())
            };
            let data = ProblemData {
                force: Some(fr.clone()),
                u0: Field::interpolate(&space, |x| u0r.value(x)),
                u1: Field::interpolate(&space, |x| u1r.value(x)),
                boundary: None,
                require_compatibility: false,
            };
            let traj = solver.solve_forward(&data, &grid).unwrap();
            let aux = AuxiliaryFields::new(&space.mesh);
            check_multiplier_identity(&traj, &aux, &lame, Some(&fr)).unwrap().residual
        };
        let r0 = run(false);
        let r1 = run(true);
        assert!((r0 - r1).abs() <= 1e-10, "residuals {r0} vs {r1}");
    }
}
