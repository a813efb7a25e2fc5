//! Vector Lagrange finite-element spaces on simplicial meshes: dof
//! management, Gauss quadrature, assembly of mass / elasticity stiffness /
//! H1 Gram / boundary mass matrices and load vectors, Dirichlet dof sets,
//! and Korn-constant estimation.

use crate::geometry::{BoundaryTag, Mesh};
use crate::lin::CsrMatrix;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Lame constants of isotropic linear elasticity, both strictly positive.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LameParameters {
    pub mu: f64,
    pub lambda: f64,
}

impl LameParameters {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0) || !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Lame constants must be positive: mu={mu}, lambda={lambda}"
            )));
        }
        Ok(LameParameters { mu, lambda })
    }
}

/// Quadrature rule in barycentric coordinates; weights sum to 1 and are
/// applied against the cell/facet measure.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub name: &'static str,
}

/// Degree-(2p) Gauss rule on triangles.
pub fn triangle_rule(degree_exactness: usize) -> QuadRule {
    if degree_exactness <= 2 {
        let a = 2.0 / 3.0;
        let b = 1.0 / 6.0;
        QuadRule {
            points: vec![vec![a, b, b], vec![b, a, b], vec![b, b, a]],
            weights: vec![1.0 / 3.0; 3],
            name: "tri-3pt-deg2",
        }
    } else {
        // Dunavant degree-4, 6 points
        let a = 0.445948490915965;
        let wa = 0.223381589678011;
        let b = 0.091576213509771;
        let wb = 0.109951743655322;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (v, w) in [(a, wa), (b, wb)] {
            for k in 0..3 {
                let mut p = vec![v; 3];
                p[k] = 1.0 - 2.0 * v;
                points.push(p);
                weights.push(w);
            }
        }
        QuadRule { points, weights, name: "tri-6pt-deg4" }
    }
}

/// Degree-(2p) rule on tetrahedra.
pub fn tet_rule(degree_exactness: usize) -> QuadRule {
    if degree_exactness <= 2 {
        let a = (5.0 - 5.0f64.sqrt()) / 20.0;
        let mut points = Vec::new();
        for k in 0..4 {
            let mut p = vec![a; 4];
            p[k] = 1.0 - 3.0 * a;
            points.push(p);
        }
        QuadRule { points, weights: vec![0.25; 4], name: "tet-4pt-deg2" }
    } else {
        // Keast degree-4, 11 points; weights normalized to sum to 1
        let mut points = vec![vec![0.25; 4]];
        let mut weights = vec![-74.0 / 5625.0];
        let c = 11.0 / 14.0;
        let d = 1.0 / 14.0;
        for k in 0..4 {
            let mut p = vec![d; 4];
            p[k] = c;
            points.push(p);
            weights.push(343.0 / 45000.0);
        }
        let a = (1.0 + (5.0f64 / 14.0).sqrt()) / 4.0;
        let b = (1.0 - (5.0f64 / 14.0).sqrt()) / 4.0;
        for i in 0..4 {
            for j in i + 1..4 {
                let mut p = vec![b; 4];
                p[i] = a;
                p[j] = a;
                points.push(p);
                weights.push(56.0 / 2250.0);
            }
        }
        // normalize from reference-volume weights to unit sum
        let s: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= s;
        }
        QuadRule { points, weights, name: "tet-11pt-deg4" }
    }
}

/// Gauss rule on a segment in barycentric (2-coordinate) form.
pub fn segment_rule(degree_exactness: usize) -> QuadRule {
    if degree_exactness <= 3 {
        let g = 1.0 / 3.0f64.sqrt();
        let p1 = 0.5 * (1.0 - g);
        let p2 = 0.5 * (1.0 + g);
        QuadRule {
            points: vec![vec![1.0 - p1, p1], vec![1.0 - p2, p2]],
            weights: vec![0.5, 0.5],
            name: "seg-2pt-deg3",
        }
    } else {
        let g = (3.0f64 / 5.0).sqrt();
        let pts = [0.5 * (1.0 - g), 0.5, 0.5 * (1.0 + g)];
        let ws = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        QuadRule {
            points: pts.iter().map(|&p| vec![1.0 - p, p]).collect(),
            weights: ws.to_vec(),
            name: "seg-3pt-deg5",
        }
    }
}

pub fn cell_rule(dim: usize, degree: usize) -> QuadRule {
    let exact = 2 * degree;
    if dim == 2 {
        triangle_rule(exact)
    } else {
        tet_rule(exact)
    }
}

pub fn facet_rule(dim: usize, degree: usize) -> QuadRule {
    let exact = 2 * degree;
    if dim == 2 {
        segment_rule(exact)
    } else {
        triangle_rule(exact)
    }
}

/// Scalar Lagrange space of degree 1 or 2 on a simplicial mesh, vector
/// valued with `dim` interleaved components (dof = scalar_dof * dim + comp).
#[derive(Debug)]
pub struct FeSpace {
    pub mesh: Arc<Mesh>,
    pub degree: usize,
    /// number of scalar dofs (nodes, plus edge midpoints for degree 2)
    pub n_scalar: usize,
    /// scalar dofs per cell, stride `local_dofs()`
    pub cell_dofs: Vec<usize>,
    /// coordinates of scalar dofs, stride dim
    pub dof_coords: Vec<f64>,
    /// sorted scalar dofs whose support node lies on Gamma0 / Gamma1
    pub gamma0_scalar: Vec<usize>,
    pub gamma1_scalar: Vec<usize>,
    /// per facet: scalar dofs supported on it
    pub facet_dofs: Vec<Vec<usize>>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Arc<FeSpace>> {
        if degree != 1 && degree != 2 {
            return Err(Error::InvalidArgument(format!("degree must be 1 or 2, got {degree}")));
        }
        let dim = mesh.dim;
        let n_nodes = mesh.n_nodes();
        let n_loc_vertices = dim + 1;
        let edges_per_cell: &[(usize, usize)] = if dim == 2 {
            &[(0, 1), (1, 2), (2, 0)]
        } else {
            &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        };
        let mut edge_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut cell_dofs = Vec::new();
        for c in 0..mesh.n_cells() {
            let nodes = mesh.cell_nodes(c);
            for &n in nodes {
                cell_dofs.push(n);
            }
            if degree == 2 {
                for &(a, b) in edges_per_cell {
                    let key = (nodes[a].min(nodes[b]), nodes[a].max(nodes[b]));
                    let next = edge_ids.len();
                    let id = *edge_ids.entry(key).or_insert(next);
                    cell_dofs.push(n_nodes + id);
                }
            }
        }
        let n_scalar = if degree == 1 { n_nodes } else { n_nodes + edge_ids.len() };
        let mut dof_coords = vec![0.0; n_scalar * dim];
        dof_coords[..n_nodes * dim].copy_from_slice(&mesh.coords);
        for (&(a, b), &id) in edge_ids.iter() {
            for k in 0..dim {
                dof_coords[(n_nodes + id) * dim + k] = 0.5 * (mesh.node(a)[k] + mesh.node(b)[k]);
            }
        }
        // boundary dof sets and per-facet dofs
        let mut g0 = Vec::new();
        let mut g1 = Vec::new();
        let mut facet_dofs = Vec::with_capacity(mesh.facets.len());
        for f in &mesh.facets {
            let mut dofs: Vec<usize> = f.nodes.clone();
            if degree == 2 {
                let pairs: Vec<(usize, usize)> = if dim == 2 {
                    vec![(f.nodes[0], f.nodes[1])]
                } else {
                    vec![
                        (f.nodes[0], f.nodes[1]),
                        (f.nodes[1], f.nodes[2]),
                        (f.nodes[2], f.nodes[0]),
                    ]
                };
                for (a, b) in pairs {
                    let key = (a.min(b), a.max(b));
                    let id = edge_ids[&key];
                    dofs.push(n_nodes + id);
                }
            }
            match f.tag {
                BoundaryTag::Gamma0 => g0.extend_from_slice(&dofs),
                BoundaryTag::Gamma1 => g1.extend_from_slice(&dofs),
            }
            facet_dofs.push(dofs);
        }
        g0.sort_unstable();
        g0.dedup();
        g1.sort_unstable();
        g1.dedup();
        Ok(Arc::new(FeSpace {
            mesh,
            degree,
            n_scalar,
            cell_dofs,
            dof_coords,
            gamma0_scalar: g0,
            gamma1_scalar: g1,
            facet_dofs,
        }))
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    /// scalar dofs per cell
    pub fn local_dofs(&self) -> usize {
        let d = self.dim();
        if self.degree == 1 {
            d + 1
        } else if d == 2 {
            6
        } else {
            10
        }
    }

    pub fn n_vector_dofs(&self) -> usize {
        self.n_scalar * self.dim()
    }

    pub fn cell_scalar_dofs(&self, c: usize) -> &[usize] {
        let n = self.local_dofs();
        &self.cell_dofs[c * n..(c + 1) * n]
    }

    pub fn dof_coord(&self, s: usize) -> &[f64] {
        let d = self.dim();
        &self.dof_coords[s * d..(s + 1) * d]
    }

    /// Vector dofs constrained on the given boundary, sorted.
    pub fn boundary_vector_dofs(&self, tag: BoundaryTag) -> Vec<usize> {
        let s = match tag {
            BoundaryTag::Gamma0 => &self.gamma0_scalar,
            BoundaryTag::Gamma1 => &self.gamma1_scalar,
        };
        let d = self.dim();
        let mut out = Vec::with_capacity(s.len() * d);
        for &sd in s {
            for c in 0..d {
                out.push(sd * d + c);
            }
        }
        out
    }

    /// Vector dofs not constrained on Gamma0, sorted.
    pub fn free_vector_dofs(&self) -> Vec<usize> {
        let mut constrained = vec![false; self.n_vector_dofs()];
        for v in self.boundary_vector_dofs(BoundaryTag::Gamma0) {
            constrained[v] = true;
        }
        (0..self.n_vector_dofs()).filter(|&v| !constrained[v]).collect()
    }

    /// Shape function values at a barycentric point.
    pub fn shape_values(&self, bary: &[f64]) -> Vec<f64> {
        let nv = self.dim() + 1;
        if self.degree == 1 {
            return bary[..nv].to_vec();
        }
        let mut vals = Vec::with_capacity(self.local_dofs());
        for &l in &bary[..nv] {
            vals.push(l * (2.0 * l - 1.0));
        }
        let edges: &[(usize, usize)] = if self.dim() == 2 {
            &[(0, 1), (1, 2), (2, 0)]
        } else {
            &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        };
        for &(a, b) in edges {
            vals.push(4.0 * bary[a] * bary[b]);
        }
        vals
    }

    /// Shape gradients at a barycentric point, given the cell's constant
    /// barycentric gradients `grad_lambda` (rows: vertex, cols: x).
    pub fn shape_gradients(&self, bary: &[f64], grad_lambda: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let d = self.dim();
        let nv = d + 1;
        if self.degree == 1 {
            return grad_lambda[..nv].to_vec();
        }
        let mut grads = Vec::with_capacity(self.local_dofs());
        for k in 0..nv {
            let mut g = [0.0; 3];
            for x in 0..d {
                g[x] = (4.0 * bary[k] - 1.0) * grad_lambda[k][x];
            }
            grads.push(g);
        }
        let edges: &[(usize, usize)] = if d == 2 {
            &[(0, 1), (1, 2), (2, 0)]
        } else {
            &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        };
        for &(a, b) in edges {
            let mut g = [0.0; 3];
            for x in 0..d {
                g[x] = 4.0 * (bary[a] * grad_lambda[b][x] + bary[b] * grad_lambda[a][x]);
            }
            grads.push(g);
        }
        grads
    }

    /// Constant gradients of the barycentric coordinates of cell `c`.
    pub fn grad_lambda(&self, c: usize) -> Vec<[f64; 3]> {
        let mesh = &self.mesh;
        let d = self.dim();
        let nodes = mesh.cell_nodes(c);
        let a = mesh.node(nodes[0]);
        // J columns: p_k - p_0
        let mut j = [[0.0f64; 3]; 3];
        for k in 1..=d {
            let p = mesh.node(nodes[k]);
            for r in 0..d {
                j[r][k - 1] = p[r] - a[r];
            }
        }
        let inv = invert_small(&j, d);
        let mut grads = vec![[0.0f64; 3]; d + 1];
        for k in 1..=d {
            for x in 0..d {
                grads[k][x] = inv[k - 1][x];
            }
        }
        for x in 0..d {
            grads[0][x] = -(1..=d).map(|k| grads[k][x]).sum::<f64>();
        }
        grads
    }
}

fn invert_small(a: &[[f64; 3]; 3], n: usize) -> [[f64; 3]; 3] {
    let mut inv = [[0.0f64; 3]; 3];
    if n == 2 {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        inv[0][0] = a[1][1] / det;
        inv[0][1] = -a[0][1] / det;
        inv[1][0] = -a[1][0] / det;
        inv[1][1] = a[0][0] / det;
    } else {
        let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
        let c = |r: usize, s: usize| -> f64 {
            let (r1, r2) = match r {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (s1, s2) = match s {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let m = a[r1][s1] * a[r2][s2] - a[r1][s2] * a[r2][s1];
            if (r + s) % 2 == 0 {
                m
            } else {
                -m
            }
        };
        for r in 0..3 {
            for s in 0..3 {
                inv[r][s] = c(s, r) / det;
            }
        }
    }
    inv
}

/// FE coefficient vector with its space and an optional time stamp.
#[derive(Debug, Clone)]
pub struct Field {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
    pub time: Option<f64>,
}

impl Field {
    pub fn zeros(space: &Arc<FeSpace>) -> Field {
        Field { space: space.clone(), coeffs: vec![0.0; space.n_vector_dofs()], time: None }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Field> {
        if coeffs.len() != space.n_vector_dofs() {
            return Err(Error::InvalidArgument("coefficient length mismatch".into()));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite field coefficients".into()));
        }
        Ok(Field { space: space.clone(), coeffs, time: None })
    }

    /// Nodal interpolation of an analytic vector function.
    pub fn interpolate(space: &Arc<FeSpace>, f: impl Fn(&[f64]) -> [f64; 3]) -> Field {
        let d = space.dim();
        let mut coeffs = vec![0.0; space.n_vector_dofs()];
        for s in 0..space.n_scalar {
            let v = f(space.dof_coord(s));
            for c in 0..d {
                coeffs[s * d + c] = v[c];
            }
        }
        Field { space: space.clone(), coeffs, time: None }
    }

    /// Value at a barycentric point of a cell.
    pub fn value_in_cell(&self, c: usize, bary: &[f64]) -> [f64; 3] {
        let sp = &self.space;
        let d = sp.dim();
        let vals = sp.shape_values(bary);
        let dofs = sp.cell_scalar_dofs(c);
        let mut out = [0.0; 3];
        for (l, &sd) in dofs.iter().enumerate() {
            for k in 0..d {
                out[k] += vals[l] * self.coeffs[sd * d + k];
            }
        }
        out
    }

    /// Gradient (grad u)_{ij} = du_i/dx_j at a barycentric point of a cell.
    pub fn gradient_in_cell(&self, c: usize, bary: &[f64], grad_lambda: &[[f64; 3]]) -> [[f64; 3]; 3] {
        let sp = &self.space;
        let d = sp.dim();
        let grads = sp.shape_gradients(bary, grad_lambda);
        let dofs = sp.cell_scalar_dofs(c);
        let mut g = [[0.0; 3]; 3];
        for (l, &sd) in dofs.iter().enumerate() {
            for i in 0..d {
                let ci = self.coeffs[sd * d + i];
                for j in 0..d {
                    g[i][j] += ci * grads[l][j];
                }
            }
        }
        g
    }

    /// Plain-text export: header "field <ndof> <time>" then one
    /// coefficient per line with 17 significant digits.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let t = self.time.map(|t| format!("{t:.16e}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!("field {} {}\n", self.coeffs.len(), t));
        for v in &self.coeffs {
            s.push_str(&format!("{v:.16e}\n"));
        }
        s
    }
}

/// First Piola-Kirchhoff stress P(u) = 2 mu e(u) + lambda (div u) I from a
/// displacement gradient.
pub fn piola_from_gradient(grad: &[[f64; 3]; 3], lame: &LameParameters, dim: usize) -> [[f64; 3]; 3] {
    let mut p = [[0.0; 3]; 3];
    let div: f64 = (0..dim).map(|i| grad[i][i]).sum();
    for i in 0..dim {
        for j in 0..dim {
            let e = 0.5 * (grad[i][j] + grad[j][i]);
            p[i][j] = 2.0 * lame.mu * e;
            if i == j {
                p[i][j] += lame.lambda * div;
            }
        }
    }
    p
}

/// Evaluate P(u) at an arbitrary point inside the mesh.
pub fn apply_piola_stress(u: &Field, lame: &LameParameters, point: &[f64]) -> Result<[[f64; 3]; 3]> {
    let mesh = &u.space.mesh;
    let (c, bary) = mesh
        .locate(point)
        .ok_or_else(|| Error::InvalidArgument("point outside mesh".into()))?;
    let gl = u.space.grad_lambda(c);
    let grad = u.gradient_in_cell(c, &bary, &gl);
    Ok(piola_from_gradient(&grad, lame, mesh.dim))
}

/// Assembled bilinear forms of a space: mass, elasticity stiffness, H1
/// Gram and the Gamma0 boundary mass, all on the full dof set.
pub struct AssembledForms {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub gram_h1: CsrMatrix,
    pub boundary_mass_g0: CsrMatrix,
}

impl AssembledForms {
    pub fn new(space: &Arc<FeSpace>, lame: &LameParameters) -> Result<AssembledForms> {
        Ok(AssembledForms {
            mass: assemble_mass(space),
            stiffness: assemble_stiffness(space, lame)?,
            gram_h1: assemble_h1_gram(space),
            boundary_mass_g0: assemble_boundary_mass(space, BoundaryTag::Gamma0),
        })
    }
}

/// Element loop shared by the volume bilinear forms. The element matrices
/// are computed cell-parallel and merged in deterministic cell order.
fn assemble_cellwise(
    space: &FeSpace,
    element: impl Fn(usize) -> Vec<(usize, usize, f64)> + Sync + Send,
) -> CsrMatrix {
    use rayon::prelude::*;
    let n = space.n_vector_dofs();
    let per_cell: Vec<Vec<(usize, usize, f64)>> =
        (0..space.mesh.n_cells()).into_par_iter().map(element).collect();
    let mut trip = Vec::with_capacity(per_cell.iter().map(|v| v.len()).sum());
    for v in per_cell {
        trip.extend(v);
    }
    CsrMatrix::from_triplets(n, n, trip)
}

/// Mass matrix  M_{(a i),(b j)} = delta_ij \int N_a N_b.
pub fn assemble_mass(space: &FeSpace) -> CsrMatrix {
    let d = space.dim();
    let rule = cell_rule(d, space.degree);
    assemble_cellwise(space, |c| {
        let vol = space.mesh.cell_volume(c);
        let dofs = space.cell_scalar_dofs(c);
        let nl = dofs.len();
        let mut local = vec![0.0; nl * nl];
        for (q, bary) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * vol;
            let vals = space.shape_values(bary);
            for a in 0..nl {
                for b in 0..nl {
                    local[a * nl + b] += w * vals[a] * vals[b];
                }
            }
        }
        let mut out = Vec::with_capacity(nl * nl * d);
        for a in 0..nl {
            for b in 0..nl {
                let v = local[a * nl + b];
                for k in 0..d {
                    out.push((dofs[a] * d + k, dofs[b] * d + k, v));
                }
            }
        }
        out
    })
}

/// Elasticity stiffness from B(v,w) = 2 mu (e(v), e(w)) + lambda (div v, div w).
pub fn assemble_stiffness(space: &FeSpace, lame: &LameParameters) -> Result<CsrMatrix> {
    LameParameters::new(lame.mu, lame.lambda)?;
    let d = space.dim();
    let rule = cell_rule(d, space.degree);
    Ok(assemble_cellwise(space, |c| {
        let vol = space.mesh.cell_volume(c);
        let gl = space.grad_lambda(c);
        let dofs = space.cell_scalar_dofs(c);
        let nl = dofs.len();
        let mut out = vec![0.0; (nl * d) * (nl * d)];
        for (q, bary) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * vol;
            let grads = space.shape_gradients(bary, &gl);
            for a in 0..nl {
                for b in 0..nl {
                    let mut gdot = 0.0;
                    for x in 0..d {
                        gdot += grads[a][x] * grads[b][x];
                    }
                    for i in 0..d {
                        for j in 0..d {
                            // 2 mu e(N_a e_i) : e(N_b e_j) = mu (delta_ij grad.grad + dN_a/dx_j dN_b/dx_i)
                            let mut v = lame.mu * grads[a][j] * grads[b][i]
                                + lame.lambda * grads[a][i] * grads[b][j];
                            if i == j {
                                v += lame.mu * gdot;
                            }
                            out[(a * d + i) * (nl * d) + (b * d + j)] += w * v;
                        }
                    }
                }
            }
        }
        let mut trip = Vec::with_capacity(out.len());
        for a in 0..nl {
            for i in 0..d {
                for b in 0..nl {
                    for j in 0..d {
                        trip.push((
                            dofs[a] * d + i,
                            dofs[b] * d + j,
                            out[(a * d + i) * (nl * d) + (b * d + j)],
                        ));
                    }
                }
            }
        }
        trip
    }))
}

/// H1 Gram matrix  G = (v, w)_{L2} + (grad v, grad w)_{L2}.
pub fn assemble_h1_gram(space: &FeSpace) -> CsrMatrix {
    let d = space.dim();
    let rule = cell_rule(d, space.degree);
    assemble_cellwise(space, |c| {
        let vol = space.mesh.cell_volume(c);
        let gl = space.grad_lambda(c);
        let dofs = space.cell_scalar_dofs(c);
        let nl = dofs.len();
        let mut local = vec![0.0; nl * nl];
        for (q, bary) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * vol;
            let vals = space.shape_values(bary);
            let grads = space.shape_gradients(bary, &gl);
            for a in 0..nl {
                for b in 0..nl {
                    let mut v = vals[a] * vals[b];
                    for x in 0..d {
                        v += grads[a][x] * grads[b][x];
                    }
                    local[a * nl + b] += w * v;
                }
            }
        }
        let mut out = Vec::with_capacity(nl * nl * d);
        for a in 0..nl {
            for b in 0..nl {
                let v = local[a * nl + b];
                for k in 0..d {
                    out.push((dofs[a] * d + k, dofs[b] * d + k, v));
                }
            }
        }
        out
    })
}

/// Scalar Laplace stiffness (for the componentwise harmonic lift).
pub fn assemble_scalar_laplace(space: &FeSpace) -> CsrMatrix {
    let d = space.dim();
    let rule = cell_rule(d, space.degree);
    use rayon::prelude::*;
    let per_cell: Vec<Vec<(usize, usize, f64)>> = (0..space.mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let vol = space.mesh.cell_volume(c);
            let gl = space.grad_lambda(c);
            let dofs = space.cell_scalar_dofs(c);
            let nl = dofs.len();
            let mut local = vec![0.0; nl * nl];
            for (q, bary) in rule.points.iter().enumerate() {
                let w = rule.weights[q] * vol;
                let grads = space.shape_gradients(bary, &gl);
                for a in 0..nl {
                    for b in 0..nl {
                        let mut v = 0.0;
                        for x in 0..d {
                            v += grads[a][x] * grads[b][x];
                        }
                        local[a * nl + b] += w * v;
                    }
                }
            }
            let mut out = Vec::with_capacity(nl * nl);
            for a in 0..nl {
                for b in 0..nl {
                    out.push((dofs[a], dofs[b], local[a * nl + b]));
                }
            }
            out
        })
        .collect();
    let mut trip = Vec::new();
    for v in per_cell {
        trip.extend(v);
    }
    CsrMatrix::from_triplets(space.n_scalar, space.n_scalar, trip)
}

/// Map a facet quadrature point to cell barycentric coordinates.
pub fn facet_point_to_cell_bary(space: &FeSpace, facet: usize, fbary: &[f64]) -> Vec<f64> {
    let mesh = &space.mesh;
    let d = mesh.dim;
    let f = &mesh.facets[facet];
    let cnodes = mesh.cell_nodes(f.cell);
    let mut bary = vec![0.0; d + 1];
    for (k, &fn_id) in f.nodes.iter().enumerate() {
        let local = cnodes.iter().position(|&n| n == fn_id).expect("facet node in cell");
        bary[local] = fbary[k];
    }
    bary
}

/// Physical coordinates of a facet barycentric point.
pub fn facet_point(mesh: &Mesh, facet: usize, fbary: &[f64]) -> [f64; 3] {
    let f = &mesh.facets[facet];
    let mut x = [0.0; 3];
    for (k, &n) in f.nodes.iter().enumerate() {
        for r in 0..mesh.dim {
            x[r] += fbary[k] * mesh.node(n)[r];
        }
    }
    x
}

/// Boundary mass matrix on the tagged boundary (vector-valued, full size;
/// kernel = all dofs not supported on that boundary).
pub fn assemble_boundary_mass(space: &FeSpace, tag: BoundaryTag) -> CsrMatrix {
    let mesh = &space.mesh;
    let d = mesh.dim;
    let rule = facet_rule(d, space.degree);
    let n = space.n_vector_dofs();
    let mut trip = Vec::new();
    for (fi, f) in mesh.facets.iter().enumerate() {
        if f.tag != tag {
            continue;
        }
        let measure = mesh.facet_measure(fi);
        let dofs = space.cell_scalar_dofs(f.cell).to_vec();
        let nl = dofs.len();
        let mut local = vec![0.0; nl * nl];
        for (q, fb) in rule.points.iter().enumerate() {
            let w = rule.weights[q] * measure;
            let bary = facet_point_to_cell_bary(space, fi, fb);
            let vals = space.shape_values(&bary);
            for a in 0..nl {
                for b in 0..nl {
                    local[a * nl + b] += w * vals[a] * vals[b];
                }
            }
        }
        for a in 0..nl {
            for b in 0..nl {
                let v = local[a * nl + b];
                if v != 0.0 {
                    for k in 0..d {
                        trip.push((dofs[a] * d + k, dofs[b] * d + k, v));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, trip)
}

/// Load vector  l_{(a i)} = \int F_i N_a  by degree-(2p) Gauss quadrature.
pub fn assemble_load(space: &FeSpace, f: impl Fn(&[f64]) -> [f64; 3] + Sync) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let d = space.dim();
    let rule = cell_rule(d, space.degree);
    let per_cell: Vec<(usize, Vec<f64>)> = (0..space.mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let vol = space.mesh.cell_volume(c);
            let nodes = space.mesh.cell_nodes(c);
            let nl = space.local_dofs();
            let mut local = vec![0.0; nl * d];
            for (q, bary) in rule.points.iter().enumerate() {
                let w = rule.weights[q] * vol;
                let mut x = [0.0; 3];
                for (k, &nd) in nodes.iter().enumerate() {
                    for r in 0..d {
                        x[r] += bary[k] * space.mesh.node(nd)[r];
                    }
                }
                let fv = f(&x[..d]);
                let vals = space.shape_values(bary);
                for a in 0..nl {
                    for i in 0..d {
                        local[a * d + i] += w * fv[i] * vals[a];
                    }
                }
            }
            (c, local)
        })
        .collect();
    let mut load = vec![0.0; space.n_vector_dofs()];
    for (c, local) in per_cell {
        let dofs = space.cell_scalar_dofs(c);
        for (a, &sd) in dofs.iter().enumerate() {
            for i in 0..d {
                load[sd * d + i] += local[a * d + i];
            }
        }
    }
    if load.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite load (F not evaluable?)".into()));
    }
    Ok(load)
}

/// Korn constants: the extreme generalized eigenvalues of (K, G) on the
/// Gamma0-constrained subspace. Fails if the smallest is not positive.
pub fn estimate_korn_constants(
    stiffness: &CsrMatrix,
    gram_h1: &CsrMatrix,
    free_dofs: &[usize],
) -> Result<(f64, f64)> {
    let k = stiffness.restrict(free_dofs);
    let g = gram_h1.restrict(free_dofs);
    let vals = crate::lin::generalized_sym_eigenvalues(&k, &g)?;
    let k1 = vals[0];
    let k2 = *vals.last().unwrap();
    if !(k1 > 0.0) {
        return Err(Error::Numerical(format!(
            "smallest constrained eigenvalue {k1} is not positive: assembly or constraint bug"
        )));
    }
    Ok((k1, k2))
}
