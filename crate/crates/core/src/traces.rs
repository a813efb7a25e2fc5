//! Boundary traces on Gamma0 and the norms appearing in the estimates:
//! L2 and tangential-H1 boundary norms, fractional H^s via the Gagliardo
//! double integral, the space-time dual norm H^{1*}, and Bochner norms of
//! field trajectories.

use crate::geometry::BoundaryTag;
use crate::lin;
use crate::spaces::{facet_point, facet_point_to_cell_bary, facet_rule, Field, FeSpace, LameParameters};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::sync::Arc;

// fixed enumeration of norm names used in reports
pub const N_L2T_L2G0: &str = "L2T_L2G0";
pub const N_L2T_H1G0: &str = "L2T_H1G0";
pub const N_H1T_L2G0: &str = "H1T_L2G0";
pub const N_H1STAR_G0: &str = "H1STAR_G0";
pub const N_LINFT_L2: &str = "LinfT_L2";
pub const N_LINFT_H1: &str = "LinfT_H1";
pub const N_LINFT_H2: &str = "LinfT_H2";
pub const N_L2T_L2: &str = "L2T_L2";
pub const N_L2T_H1: &str = "L2T_H1";
pub const N_L1T_L2: &str = "L1T_L2";
pub const N_H1T_L2: &str = "H1T_L2";
pub const N_H2T_L2: &str = "H2T_L2";

/// One boundary quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub x: [f64; 3],
    pub weight: f64,
    pub normal: [f64; 3],
    pub facet: usize,
}

/// Per-time-step samples of a (vector-valued) quantity at the boundary
/// quadrature points of one tagged boundary.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub tag: BoundaryTag,
    pub dim: usize,
    pub points: Vec<TracePoint>,
    /// values[step][point]
    pub values: Vec<Vec<[f64; 3]>>,
    pub times: Vec<f64>,
}

/// Quadrature points of the tagged boundary with facet normals and
/// weights (weights sum to the discrete boundary measure).
pub fn trace_points(space: &FeSpace, tag: BoundaryTag) -> Vec<TracePoint> {
    let mesh = &space.mesh;
    let rule = facet_rule(mesh.dim, space.degree);
    let mut out = Vec::new();
    for (fi, f) in mesh.facets.iter().enumerate() {
        if f.tag != tag {
            continue;
        }
        let measure = mesh.facet_measure(fi);
        for (q, fb) in rule.points.iter().enumerate() {
            out.push(TracePoint {
                x: facet_point(mesh, fi, fb),
                weight: rule.weights[q] * measure,
                normal: f.normal,
                facet: fi,
            });
        }
    }
    out
}

impl BoundaryTrace {
    pub fn boundary_measure(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    /// L2(Gamma) norm of one time step.
    pub fn space_l2_at(&self, step: usize) -> f64 {
        self.points
            .iter()
            .zip(&self.values[step])
            .map(|(p, v)| p.weight * (0..self.dim).map(|k| v[k] * v[k]).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn n_steps(&self) -> usize {
        self.values.len()
    }

    /// CSV dump: step, facet, point index, coordinates, components.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,facet,point,x0,x1,x2,v0,v1,v2\n");
        for (n, row) in self.values.iter().enumerate() {
            for (q, (p, v)) in self.points.iter().zip(row).enumerate() {
                s.push_str(&format!(
                    "{n},{},{q},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    p.facet, p.x[0], p.x[1], p.x[2], v[0], v[1], v[2]
                ));
            }
        }
        s
    }
}

/// Stress vector P(u) . n at the boundary quadrature points, one row per
/// field; gradients are taken one-sided from the adjacent interior cell.
pub fn stress_vector_trace(
    space: &Arc<FeSpace>,
    fields: &[&Field],
    lame: &LameParameters,
    tag: BoundaryTag,
    times: &[f64],
) -> BoundaryTrace {
    let mesh = &space.mesh;
    let dim = mesh.dim;
    let rule = facet_rule(dim, space.degree);
    let pts = trace_points(space, tag);
    // precompute per facet: cell barycentric coords + grad_lambda
    let facet_ids: Vec<usize> = mesh
        .facets
        .iter()
        .enumerate()
        .filter(|(_, f)| f.tag == tag)
        .map(|(i, _)| i)
        .collect();
    let mut per_facet = Vec::with_capacity(facet_ids.len());
    for &fi in &facet_ids {
        let gl = space.grad_lambda(mesh.facets[fi].cell);
        let barys: Vec<Vec<f64>> =
            rule.points.iter().map(|fb| facet_point_to_cell_bary(space, fi, fb)).collect();
        per_facet.push((fi, gl, barys));
    }
    let nq = rule.points.len();
    let mut values = Vec::with_capacity(fields.len());
    for u in fields {
        let mut row = Vec::with_capacity(pts.len());
        for (kf, (fi, gl, barys)) in per_facet.iter().enumerate() {
            let cell = mesh.facets[*fi].cell;
            let normal = mesh.facets[*fi].normal;
            for bary in barys {
                let grad = u.gradient_in_cell(cell, bary, gl);
                let p = crate::spaces::piola_from_gradient(&grad, lame, dim);
                let mut pn = [0.0; 3];
                for i in 0..dim {
                    for j in 0..dim {
                        pn[i] += p[i][j] * normal[j];
                    }
                }
                row.push(pn);
            }
            debug_assert_eq!(pts[kf * nq].facet, *fi);
        }
        values.push(row);
    }
    BoundaryTrace { tag, dim, points: pts, values, times: times.to_vec() }
}

/// Trace of the fields themselves (values, not stresses).
pub fn field_trace(
    space: &Arc<FeSpace>,
    fields: &[&Field],
    tag: BoundaryTag,
    times: &[f64],
) -> BoundaryTrace {
    let mesh = &space.mesh;
    let dim = mesh.dim;
    let rule = facet_rule(dim, space.degree);
    let pts = trace_points(space, tag);
    let facet_ids: Vec<usize> = mesh
        .facets
        .iter()
        .enumerate()
        .filter(|(_, f)| f.tag == tag)
        .map(|(i, _)| i)
        .collect();
    let mut values = Vec::with_capacity(fields.len());
    for u in fields {
        let mut row = Vec::with_capacity(pts.len());
        for &fi in &facet_ids {
            let cell = mesh.facets[fi].cell;
            for fb in &rule.points {
                let bary = facet_point_to_cell_bary(space, fi, fb);
                row.push(u.value_in_cell(cell, &bary));
            }
        }
        values.push(row);
    }
    BoundaryTrace { tag, dim, points: pts, values, times: times.to_vec() }
}

/// Sample an analytic space-time function at the trace points.
pub fn function_trace(
    points: &[TracePoint],
    dim: usize,
    tag: BoundaryTag,
    times: &[f64],
    f: impl Fn(&[f64], f64) -> [f64; 3],
) -> BoundaryTrace {
    let values: Vec<Vec<[f64; 3]>> = times
        .iter()
        .map(|&t| points.iter().map(|p| f(&p.x[..dim], t)).collect())
        .collect();
    BoundaryTrace { tag, dim, points: points.to_vec(), values, times: times.to_vec() }
}

fn time_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let dt = times[i + 1] - times[i];
        w[i] += 0.5 * dt;
        w[i + 1] += 0.5 * dt;
    }
    w
}

/// Second-order finite-difference time derivative of a sampled series
/// (centered inside, one-sided at the ends).
pub fn fd_time_derivative(series: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let n = series.len();
    assert!(n >= 3, "need at least 3 samples for second-order differences");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = if i == 0 {
            series[0]
                .iter()
                .zip(series[1].iter().zip(series[2].iter()))
                .map(|(a, (b, c))| (-3.0 * a + 4.0 * b - c) / (2.0 * dt))
                .collect()
        } else if i == n - 1 {
            series[n - 1]
                .iter()
                .zip(series[n - 2].iter().zip(series[n - 3].iter()))
                .map(|(a, (b, c))| (3.0 * a - 4.0 * b + c) / (2.0 * dt))
                .collect()
        } else {
            series[i + 1]
                .iter()
                .zip(series[i - 1].iter())
                .map(|(a, b)| (a - b) / (2.0 * dt))
                .collect()
        };
        out.push(row);
    }
    out
}

/// || . ||_{L2(0,T; L2(Gamma))}: facet quadrature in space, trapezoid in time.
pub fn norm_l2_gamma0(trace: &BoundaryTrace) -> f64 {
    let tw = time_weights(&trace.times);
    let mut acc = 0.0;
    for (n, wt) in tw.iter().enumerate() {
        let s = trace.space_l2_at(n);
        acc += wt * s * s;
    }
    acc.sqrt()
}

/// Tangential gradient at each facet by weighted linear least squares of
/// the quadrature values in facet-local coordinates.
fn facet_tangential_sq(trace: &BoundaryTrace, step: usize) -> f64 {
    let dim = trace.dim;
    // group points per facet
    let mut per_facet: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (q, p) in trace.points.iter().enumerate() {
        per_facet.entry(p.facet).or_default().push(q);
    }
    let mut acc = 0.0;
    for (_f, qs) in per_facet {
        let wsum: f64 = qs.iter().map(|&q| trace.points[q].weight).sum();
        if dim == 2 {
            // facet direction from the two extreme points
            let a = trace.points[qs[0]].x;
            let b = trace.points[*qs.last().unwrap()].x;
            let mut t = [b[0] - a[0], b[1] - a[1]];
            let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
            t[0] /= len;
            t[1] /= len;
            let ss: Vec<f64> = qs
                .iter()
                .map(|&q| (trace.points[q].x[0] - a[0]) * t[0] + (trace.points[q].x[1] - a[1]) * t[1])
                .collect();
            let sbar: f64 =
                qs.iter().zip(&ss).map(|(&q, s)| trace.points[q].weight * s).sum::<f64>() / wsum;
            let sxx: f64 = qs
                .iter()
                .zip(&ss)
                .map(|(&q, s)| trace.points[q].weight * (s - sbar) * (s - sbar))
                .sum();
            for comp in 0..2 {
                let vbar: f64 = qs
                    .iter()
                    .map(|&q| trace.points[q].weight * trace.values[step][q][comp])
                    .sum::<f64>()
                    / wsum;
                let sxv: f64 = qs
                    .iter()
                    .zip(&ss)
                    .map(|(&q, s)| {
                        trace.points[q].weight * (s - sbar) * (trace.values[step][q][comp] - vbar)
                    })
                    .sum();
                let slope = if sxx > 0.0 { sxv / sxx } else { 0.0 };
                acc += wsum * slope * slope;
            }
        } else {
            // facet-plane axes from the triangle
            let f = &trace.points[qs[0]];
            let mesh_facet = f.facet;
            let _ = mesh_facet;
            let a = trace.points[qs[0]].x;
            // build two orthonormal in-plane axes from the facet normal
            let n = trace.points[qs[0]].normal;
            let mut e1 = [n[1], -n[0], 0.0];
            let l1 = (e1[0] * e1[0] + e1[1] * e1[1]).sqrt();
            if l1 < 1e-8 {
                e1 = [0.0, n[2], -n[1]];
            }
            let l1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
            for v in e1.iter_mut() {
                *v /= l1;
            }
            let e2 = [
                n[1] * e1[2] - n[2] * e1[1],
                n[2] * e1[0] - n[0] * e1[2],
                n[0] * e1[1] - n[1] * e1[0],
            ];
            let coords: Vec<[f64; 2]> = qs
                .iter()
                .map(|&q| {
                    let d = [
                        trace.points[q].x[0] - a[0],
                        trace.points[q].x[1] - a[1],
                        trace.points[q].x[2] - a[2],
                    ];
                    [
                        d[0] * e1[0] + d[1] * e1[1] + d[2] * e1[2],
                        d[0] * e2[0] + d[1] * e2[1] + d[2] * e2[2],
                    ]
                })
                .collect();
            // weighted least squares for each component: v ~ c + g1 xi1 + g2 xi2
            let mut m = [[0.0f64; 3]; 3];
            for (&q, c) in qs.iter().zip(&coords) {
                let w = trace.points[q].weight;
                let row = [1.0, c[0], c[1]];
                for i in 0..3 {
                    for j in 0..3 {
                        m[i][j] += w * row[i] * row[j];
                    }
                }
            }
            for comp in 0..3 {
                let mut rhs = [0.0f64; 3];
                for (&q, c) in qs.iter().zip(&coords) {
                    let w = trace.points[q].weight;
                    let v = trace.values[step][q][comp];
                    rhs[0] += w * v;
                    rhs[1] += w * c[0] * v;
                    rhs[2] += w * c[1] * v;
                }
                if let Some(sol) = solve3(&m, &rhs) {
                    acc += wsum * (sol[1] * sol[1] + sol[2] * sol[2]);
                }
            }
        }
    }
    acc
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap())?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        for r in 0..3 {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..4 {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// || . ||_{L2(0,T; H1(Gamma0))} with the tangential-derivative seminorm
/// realized by per-facet surface fits.
pub fn norm_h1_gamma0(trace: &BoundaryTrace) -> Result<f64> {
    let n_facets = trace.points.iter().map(|p| p.facet).collect::<std::collections::BTreeSet<_>>().len();
    if n_facets < 8 {
        return Err(Error::InvalidArgument(format!(
            "boundary too coarse for tangential differencing: {n_facets} facets"
        )));
    }
    let tw = time_weights(&trace.times);
    let mut acc = 0.0;
    for (n, wt) in tw.iter().enumerate() {
        let l2 = trace.space_l2_at(n);
        acc += wt * (l2 * l2 + facet_tangential_sq(trace, n));
    }
    Ok(acc.sqrt())
}

/// || . ||_{H1(0,T; L2(Gamma0))}: L2 norms of the values and of their
/// second-order finite-difference time derivative.
pub fn norm_h1_time_l2_gamma0(trace: &BoundaryTrace) -> f64 {
    let n = trace.n_steps();
    assert!(n >= 3);
    let dt = trace.times[1] - trace.times[0];
    let flat: Vec<Vec<f64>> = trace
        .values
        .iter()
        .map(|row| row.iter().flat_map(|v| v[..trace.dim].to_vec()).collect())
        .collect();
    let dflat = fd_time_derivative(&flat, dt);
    let tw = time_weights(&trace.times);
    let mut acc = 0.0;
    for (step, wt) in tw.iter().enumerate() {
        let mut l2v = 0.0;
        let mut l2d = 0.0;
        for (q, p) in trace.points.iter().enumerate() {
            for k in 0..trace.dim {
                let v = trace.values[step][q][k];
                let d = dflat[step][q * trace.dim + k];
                l2v += p.weight * v * v;
                l2d += p.weight * d * d;
            }
        }
        acc += wt * (l2v + l2d);
    }
    acc.sqrt()
}

/// Fractional boundary norm of one snapshot by the Gagliardo double sum
/// over quadrature points, excluding same-facet pairs; the L2 part is
/// included. Exact chord distances are used.
pub fn norm_hs_gamma0(trace: &BoundaryTrace, step: usize, s: f64) -> Result<f64> {
    if !(0.0 < s && s < 1.0) {
        return Err(Error::InvalidArgument(format!("s must be in (0,1), got {s}")));
    }
    let dim = trace.dim;
    let expo = (dim - 1) as f64 + 2.0 * s;
    let vals = &trace.values[step];
    let mut semi = 0.0;
    for (qa, pa) in trace.points.iter().enumerate() {
        for (qb, pb) in trace.points.iter().enumerate().skip(qa + 1) {
            if pa.facet == pb.facet {
                continue;
            }
            let mut d2 = 0.0;
            for k in 0..dim {
                d2 += (pa.x[k] - pb.x[k]) * (pa.x[k] - pb.x[k]);
            }
            let mut dv2 = 0.0;
            for k in 0..dim {
                dv2 += (vals[qa][k] - vals[qb][k]) * (vals[qa][k] - vals[qb][k]);
            }
            semi += 2.0 * pa.weight * pb.weight * dv2 / d2.sqrt().powf(expo);
        }
    }
    let l2 = trace.space_l2_at(step);
    Ok((l2 * l2 + semi).sqrt())
}

/// Gagliardo seminorm squared of the same snapshot (no L2 part).
pub fn gagliardo_sq(trace: &BoundaryTrace, step: usize, s: f64) -> Result<f64> {
    let full = norm_hs_gamma0(trace, step, s)?;
    let l2 = trace.space_l2_at(step);
    Ok((full * full - l2 * l2).max(0.0))
}

// ---------------------------------------------------------------------------
// space-time dual norm H^{1*}(Gamma0 x (0,T))
// ---------------------------------------------------------------------------

/// Discretization of the zero-endpoint space-time test space on Gamma0:
/// P1 in space on the boundary polygon, P1 (hat) in time on the interior
/// grid nodes. The Gram is
///   ||w||^2 = ||dw/dt||^2_{L2 L2} + ||w||^2_{L2 H1},
/// block-diagonalized by the spatial generalized eigenbasis so each block
/// is a tridiagonal solve in time.
pub struct H1StarDual {
    dim: usize,
    /// Gamma0 vertex nodes, deterministic order
    pub nodes: Vec<usize>,
    /// facets as (node index a, node index b, length) into `nodes`
    segments: Vec<(usize, usize, f64)>,
    /// spatial eigenpairs of (M_s + K_s) psi = sigma M_s psi
    sigma: Vec<f64>,
    /// psi[:, j] column-major, M_s-orthonormal
    psi: faer::Mat<f64>,
    node_pos: BTreeMap<usize, usize>,
}

impl H1StarDual {
    pub fn new(space: &FeSpace, tag: BoundaryTag) -> Result<H1StarDual> {
        let mesh = &space.mesh;
        if mesh.dim != 2 {
            return Err(Error::InvalidArgument(
                "space-time dual norm implemented for the annulus boundary".into(),
            ));
        }
        let mut nodes: Vec<usize> = mesh
            .facets
            .iter()
            .filter(|f| f.tag == tag)
            .flat_map(|f| f.nodes.iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        let node_pos: BTreeMap<usize, usize> =
            nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut segments = Vec::new();
        for (fi, f) in mesh.facets.iter().enumerate() {
            if f.tag == tag {
                segments.push((node_pos[&f.nodes[0]], node_pos[&f.nodes[1]], mesh.facet_measure(fi)));
            }
        }
        let d = mesh.dim;
        let nn = nodes.len();
        let nv = nn * d;
        let mut ms = faer::Mat::<f64>::zeros(nv, nv);
        let mut hs = faer::Mat::<f64>::zeros(nv, nv);
        for &(a, b, len) in &segments {
            for comp in 0..d {
                let (ia, ib) = (a * d + comp, b * d + comp);
                // P1 segment mass and stiffness
                ms[(ia, ia)] += len / 3.0;
                ms[(ib, ib)] += len / 3.0;
                ms[(ia, ib)] += len / 6.0;
                ms[(ib, ia)] += len / 6.0;
                hs[(ia, ia)] += 1.0 / len;
                hs[(ib, ib)] += 1.0 / len;
                hs[(ia, ib)] -= 1.0 / len;
                hs[(ib, ia)] -= 1.0 / len;
            }
        }
        // H_s = M_s + K_s
        for i in 0..nv {
            for j in 0..nv {
                hs[(i, j)] += ms[(i, j)];
            }
        }
        // generalized eigov H_s psi = sigma M_s psi via M = L L^T
        let llt = ms
            .llt(faer::Side::Lower)
            .map_err(|_| Error::Numerical("boundary mass not SPD".into()))?;
        let l = llt.L().to_owned();
        let mut c = hs.clone();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            l.as_ref(),
            c.as_mut(),
            faer::Par::Seq,
        );
        let mut ct = c.transpose().to_owned();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            l.as_ref(),
            ct.as_mut(),
            faer::Par::Seq,
        );
        let mut sym = faer::Mat::<f64>::zeros(nv, nv);
        for i in 0..nv {
            for j in 0..nv {
                sym[(i, j)] = 0.5 * (ct[(i, j)] + ct[(j, i)]);
            }
        }
        let (sigma, vecs) = lin::sym_eigen(&sym)?;
        // psi = L^-T vecs
        let mut psi = vecs.clone();
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(
            l.transpose(),
            psi.as_mut(),
            faer::Par::Seq,
        );
        Ok(H1StarDual { dim: d, nodes, segments, sigma, psi, node_pos })
    }

    pub fn n_space(&self) -> usize {
        self.nodes.len() * self.dim
    }

    /// Space-time load of the trace: f[n-1][i] = dt * sum_q w_q N_i(x_q) v(x_q, t_n)
    /// for the interior time nodes n = 1..N-1.
    fn load(&self, trace: &BoundaryTrace, space: &FeSpace) -> Vec<Vec<f64>> {
        let mesh = &space.mesh;
        let d = self.dim;
        let nv = self.n_space();
        let nt = trace.n_steps();
        let dt = trace.times[1] - trace.times[0];
        let mut out = vec![vec![0.0; nv]; nt.saturating_sub(2)];
        for (q, p) in trace.points.iter().enumerate() {
            let f = &mesh.facets[p.facet];
            let (na, nb) = (f.nodes[0], f.nodes[1]);
            let (ia, ib) = (self.node_pos[&na], self.node_pos[&nb]);
            let a = mesh.node(na);
            let b = mesh.node(nb);
            let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
            let tloc =
                (((p.x[0] - a[0]) * (b[0] - a[0]) + (p.x[1] - a[1]) * (b[1] - a[1])) / len2).clamp(0.0, 1.0);
            for step in 1..nt.saturating_sub(1) {
                let row = &mut out[step - 1];
                for comp in 0..d {
                    let v = trace.values[step][q][comp];
                    row[ia * d + comp] += dt * p.weight * (1.0 - tloc) * v;
                    row[ib * d + comp] += dt * p.weight * tloc * v;
                }
            }
        }
        out
    }

    /// The dual norm sqrt(f^T G^-1 f) of the trace.
    pub fn dual_norm(&self, trace: &BoundaryTrace, space: &FeSpace) -> Result<f64> {
        let f = self.load(trace, space);
        Ok(self.dual_norm_of_load(&f, trace.times[1] - trace.times[0]))
    }

    fn dual_norm_of_load(&self, f: &[Vec<f64>], dt: f64) -> f64 {
        let nv = self.n_space();
        let nt_int = f.len();
        if nt_int == 0 {
            return 0.0;
        }
        // transform the spatial index to the eigenbasis: ft[n][j] = psi[:,j] . f[n]
        let mut ft = vec![vec![0.0; nv]; nt_int];
        for (n, row) in f.iter().enumerate() {
            for j in 0..nv {
                let mut acc = 0.0;
                for i in 0..nv {
                    acc += self.psi[(i, j)] * row[i];
                }
                ft[n][j] = acc;
            }
        }
        // per spatial mode: (A_t + sigma_j M_t) tridiagonal on interior nodes
        let mut total = 0.0;
        for j in 0..nv {
            let sj = self.sigma[j];
            let diag: Vec<f64> = (0..nt_int).map(|_| 2.0 / dt + sj * 2.0 * dt / 3.0).collect();
            let off: Vec<f64> = (0..nt_int.saturating_sub(1))
                .map(|_| -1.0 / dt + sj * dt / 6.0)
                .collect();
            let mut rhs: Vec<f64> = (0..nt_int).map(|n| ft[n][j]).collect();
            let fj = rhs.clone();
            lin::tridiag_solve(&diag, &off, &mut rhs);
            total += lin::dot(&fj, &rhs);
        }
        total.max(0.0).sqrt()
    }

    /// ||w||^2_{H1(Gamma0 x (0,T))} of discrete coefficients
    /// w[n-1][i] at interior time nodes (zero endpoints).
    pub fn h1_norm_sq(&self, w: &[Vec<f64>], dt: f64) -> f64 {
        let nv = self.n_space();
        let nt_int = w.len();
        let d = self.dim;
        // assemble via segment loops: for each pair of time nodes hat functions
        // use 1D mass (dt) and stiffness (1/dt) tridiagonal forms
        let mut total = 0.0;
        // spatial matrices applied per time combination
        let msv = |x: &[f64], y: &[f64]| -> f64 {
            let mut acc = 0.0;
            for &(a, b, len) in &self.segments {
                for comp in 0..d {
                    let (ia, ib) = (a * d + comp, b * d + comp);
                    acc += len / 3.0 * (x[ia] * y[ia] + x[ib] * y[ib])
                        + len / 6.0 * (x[ia] * y[ib] + x[ib] * y[ia]);
                }
            }
            acc
        };
        let hsv = |x: &[f64], y: &[f64]| -> f64 {
            let mut acc = msv(x, y);
            for &(a, b, len) in &self.segments {
                for comp in 0..d {
                    let (ia, ib) = (a * d + comp, b * d + comp);
                    acc += (x[ia] - x[ib]) * (y[ia] - y[ib]) / len;
                }
            }
            acc
        };
        for n in 0..nt_int {
            for m in 0..nt_int {
                let (mt, at) = time_p1_entries(n, m, nt_int, dt);
                if mt != 0.0 {
                    total += mt * hsv(&w[n], &w[m]);
                }
                if at != 0.0 {
                    total += at * msv(&w[n], &w[m]);
                }
            }
        }
        let _ = nv;
        total
    }
}

/// (mass, stiffness) entries of interior P1 hat functions in time.
fn time_p1_entries(n: usize, m: usize, nt_int: usize, dt: f64) -> (f64, f64) {
    let _ = nt_int;
    if n == m {
        (2.0 * dt / 3.0, 2.0 / dt)
    } else if n + 1 == m || m + 1 == n {
        (dt / 6.0, -1.0 / dt)
    } else {
        (0.0, 0.0)
    }
}

/// Space-time dual norm of a boundary trace (see [`H1StarDual`]).
pub fn norm_h1star_dual(trace: &BoundaryTrace, space: &FeSpace) -> Result<f64> {
    let dual = H1StarDual::new(space, trace.tag)?;
    dual.dual_norm(trace, space)
}

// ---------------------------------------------------------------------------
// Bochner norms of trajectories of FE fields
// ---------------------------------------------------------------------------

/// Broken H2 seminorm matrix: cellwise-constant second derivatives of the
/// shape functions (exact for P1/P2).
pub fn assemble_broken_h2_semi(space: &FeSpace) -> crate::lin::CsrMatrix {
    let d = space.dim();
    let n = space.n_vector_dofs();
    let mut trip = Vec::new();
    for c in 0..space.mesh.n_cells() {
        let vol = space.mesh.cell_volume(c);
        let gl = space.grad_lambda(c);
        let dofs = space.cell_scalar_dofs(c);
        let nl = dofs.len();
        // constant Hessians per local shape function
        let mut hess = vec![[[0.0f64; 3]; 3]; nl];
        if space.degree == 2 {
            let nv = d + 1;
            for k in 0..nv {
                for a in 0..d {
                    for b in 0..d {
                        hess[k][a][b] = 4.0 * gl[k][a] * gl[k][b];
                    }
                }
            }
            let edges: &[(usize, usize)] = if d == 2 {
                &[(0, 1), (1, 2), (2, 0)]
            } else {
                &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
            };
            for (e, &(i, j)) in edges.iter().enumerate() {
                for a in 0..d {
                    for b in 0..d {
                        hess[nv + e][a][b] = 4.0 * (gl[i][a] * gl[j][b] + gl[j][a] * gl[i][b]);
                    }
                }
            }
        }
        for p in 0..nl {
            for q in 0..nl {
                let mut dd = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        dd += hess[p][a][b] * hess[q][a][b];
                    }
                }
                if dd != 0.0 {
                    for comp in 0..d {
                        trip.push((dofs[p] * d + comp, dofs[q] * d + comp, vol * dd));
                    }
                }
            }
        }
    }
    crate::lin::CsrMatrix::from_triplets(n, n, trip)
}

/// Spatial Gram matrices used by the Bochner norms of FE trajectories.
pub struct SpatialNorms {
    pub mass: crate::lin::CsrMatrix,
    pub gram_h1: crate::lin::CsrMatrix,
    pub h2_semi: crate::lin::CsrMatrix,
}

impl SpatialNorms {
    pub fn l2(&self, u: &[f64]) -> f64 {
        self.mass.bilinear(u, u).max(0.0).sqrt()
    }
    pub fn h1(&self, u: &[f64]) -> f64 {
        self.gram_h1.bilinear(u, u).max(0.0).sqrt()
    }
    pub fn h2(&self, u: &[f64]) -> f64 {
        (self.gram_h1.bilinear(u, u) + self.h2_semi.bilinear(u, u)).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceNormKind {
    L2,
    H1,
    H2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeNormKind {
    L1,
    L2,
    Linf,
}

/// Composite Bochner norm of a coefficient series.
pub fn bochner_norm(
    series: &[Vec<f64>],
    times: &[f64],
    norms: &SpatialNorms,
    time_kind: TimeNormKind,
    space_kind: SpaceNormKind,
) -> f64 {
    let spatial = |u: &[f64]| match space_kind {
        SpaceNormKind::L2 => norms.l2(u),
        SpaceNormKind::H1 => norms.h1(u),
        SpaceNormKind::H2 => norms.h2(u),
    };
    let vals: Vec<f64> = series.iter().map(|u| spatial(u)).collect();
    match time_kind {
        TimeNormKind::Linf => vals.iter().fold(0.0f64, |m, v| m.max(*v)),
        TimeNormKind::L1 => time_weights(times).iter().zip(&vals).map(|(w, v)| w * v).sum(),
        TimeNormKind::L2 => time_weights(times)
            .iter()
            .zip(&vals)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt(),
    }
}

/// H^k(0,T;X) norm via finite-difference time derivatives (k <= 2).
pub fn bochner_hk_time(
    series: &[Vec<f64>],
    times: &[f64],
    norms: &SpatialNorms,
    space_kind: SpaceNormKind,
    k: usize,
) -> f64 {
    assert!(k <= 2);
    let mut acc = bochner_norm(series, times, norms, TimeNormKind::L2, space_kind).powi(2);
    let dt = times[1] - times[0];
    let mut current: Vec<Vec<f64>> = series.to_vec();
    for _ in 0..k {
        current = fd_time_derivative(&current, dt);
        acc += bochner_norm(&current, times, norms, TimeNormKind::L2, space_kind).powi(2);
    }
    acc.sqrt()
}

/// Norm report: named values plus run metadata, serialized with sorted keys.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NormReport {
    pub mesh_level: u32,
    pub degree: usize,
    pub steps: usize,
    pub t_final: f64,
    pub mu: f64,
    pub lambda: f64,
    pub values: BTreeMap<String, f64>,
}

impl NormReport {
    pub fn insert(&mut self, name: &str, v: f64) {
        self.values.insert(name.to_string(), v);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,value\n");
        for (k, v) in &self.values {
            s.push_str(&format!("{k},{v:.17e}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, BoundaryTag, DomainSpec};
    use crate::spaces::FeSpace;
    use std::sync::Arc;

    fn space2(level: u32, degree: usize) -> Arc<FeSpace> {
        let mesh = build_mesh(&DomainSpec::new(2, 1.0, 2.0, level).unwrap()).unwrap();
        FeSpace::new(Arc::new(mesh), degree).unwrap()
    }

    fn const_trace(space: &Arc<FeSpace>, v: [f64; 3], times: &[f64]) -> BoundaryTrace {
        let pts = trace_points(space, BoundaryTag::Gamma0);
        function_trace(&pts, 2, BoundaryTag::Gamma0, times, move |_, _| v)
    }

    #[test]
    fn weights_sum_to_boundary_measure() {
        let sp = space2(1, 2);
        let pts = trace_points(&sp, BoundaryTag::Gamma0);
        let total: f64 = pts.iter().map(|p| p.weight).sum();
        let exact = 2.0 * std::f64::consts::PI;
        assert!((total - exact).abs() / exact < 1e-2);
        assert!((total - sp.mesh.boundary_measure(BoundaryTag::Gamma0)).abs() < 1e-12);
    }

    #[test]
    fn stress_trace_of_identity_displacement_3d() {
        let mesh = build_mesh(&DomainSpec::new(3, 1.0, 2.0, 0).unwrap()).unwrap();
        let sp = FeSpace::new(Arc::new(mesh), 1).unwrap();
        let lame = LameParameters::new(1.0, 1.0).unwrap();
        let u = Field::interpolate(&sp, |x| [x[0], x[1], x[2]]);
        let tr = stress_vector_trace(&sp, &[&u], &lame, BoundaryTag::Gamma0, &[0.0]);
        let want = 2.0 * lame.mu + 3.0 * lame.lambda;
        for (p, v) in tr.points.iter().zip(&tr.values[0]) {
            for k in 0..3 {
                assert!(
                    (v[k] - want * p.normal[k]).abs() < 1e-12,
                    "stress {v:?} vs normal {:?}",
                    p.normal
                );
            }
        }
        // rigid motion: zero stress
        let r = Field::interpolate(&sp, |x| [-x[1], x[0], 0.0]);
        let tr = stress_vector_trace(&sp, &[&r], &lame, BoundaryTag::Gamma0, &[0.0]);
        for v in &tr.values[0] {
            assert!(v[0].abs() + v[1].abs() + v[2].abs() < 1e-12);
        }
    }

    #[test]
    fn l2_norm_of_constant_and_fourier_trace() {
        let sp = space2(2, 2);
        let t1 = 2.0;
        let times: Vec<f64> = (0..=16).map(|i| t1 * i as f64 / 16.0).collect();
        let c = [0.3, -0.4, 0.0];
        let tr = const_trace(&sp, c, &times);
        let exact = 0.5 * (2.0 * std::f64::consts::PI * t1).sqrt();
        let got = norm_l2_gamma0(&tr);
        assert!((got - exact).abs() / exact < 1e-2, "{got} vs {exact}");
        // cos(3 theta) scalar: sqrt(pi r0 T)
        let pts = trace_points(&sp, BoundaryTag::Gamma0);
        let tr = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, |x, _| {
            let th = x[1].atan2(x[0]);
            [(3.0 * th).cos(), 0.0, 0.0]
        });
        let exact = (std::f64::consts::PI * t1).sqrt();
        let got = norm_l2_gamma0(&tr);
        assert!((got - exact).abs() / exact < 1e-2, "{got} vs {exact}");
    }

    #[test]
    fn h1_norm_constant_equals_l2_and_fourier_seminorm() {
        let sp = space2(2, 2);
        let times = vec![0.0, 1.0];
        let tr = const_trace(&sp, [1.0, 2.0, 0.0], &times);
        let h1 = norm_h1_gamma0(&tr).unwrap();
        let l2 = norm_l2_gamma0(&tr);
        assert!((h1 - l2).abs() < 1e-12 * l2);
        // cos(k theta): |d/ds| = k/r0 |sin|, seminorm = (k/r0) ||cos||
        let k = 3.0;
        for (level, tol) in [(2u32, 0.05), (3u32, 0.02)] {
            let sp = space2(level, 2);
            let pts = trace_points(&sp, BoundaryTag::Gamma0);
            let tr = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, |x, _| {
                let th = x[1].atan2(x[0]);
                [(k * th).cos(), 0.0, 0.0]
            });
            let l2 = norm_l2_gamma0(&tr);
            let h1 = norm_h1_gamma0(&tr).unwrap();
            let semi = (h1 * h1 - l2 * l2).max(0.0).sqrt();
            let want = k * l2;
            assert!((semi - want).abs() / want < tol, "level {level}: {semi} vs {want}");
        }
        // homogeneity
        let pts = trace_points(&sp, BoundaryTag::Gamma0);
        let tr1 = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, |x, _| [x[0] * x[1], 0.0, 0.0]);
        let tr2 = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, |x, _| {
            [-2.5 * x[0] * x[1], 0.0, 0.0]
        });
        let a = norm_h1_gamma0(&tr1).unwrap();
        let b = norm_h1_gamma0(&tr2).unwrap();
        assert!((b - 2.5 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn h1_norm_rejects_too_coarse_boundary() {
        // a fake trace with fewer than 8 facets
        let sp = space2(0, 1);
        let pts: Vec<TracePoint> = trace_points(&sp, BoundaryTag::Gamma0)
            .into_iter()
            .filter(|p| p.facet < 4)
            .collect();
        let tr = function_trace(&pts, 2, BoundaryTag::Gamma0, &[0.0], |_, _| [1.0, 0.0, 0.0]);
        assert!(norm_h1_gamma0(&tr).is_err());
    }

    #[test]
    fn gagliardo_constant_zero_and_scaling() {
        let sp = space2(1, 2);
        let times = vec![0.0];
        let tr = const_trace(&sp, [0.7, 0.1, 0.0], &times);
        let semi = gagliardo_sq(&tr, 0, 0.5).unwrap();
        assert!(semi < 1e-13);
        let full = norm_hs_gamma0(&tr, 0, 0.5).unwrap();
        let l2 = tr.space_l2_at(0);
        assert!((full - l2).abs() < 1e-12);
        assert!(norm_hs_gamma0(&tr, 0, 1.2).is_err());
        // scaling and L2-part ordering
        let pts = trace_points(&sp, BoundaryTag::Gamma0);
        let tr1 = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, |x, _| [x[0] - x[1], 0.0, 0.0]);
        let tr3 = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, |x, _| {
            [3.0 * (x[0] - x[1]), 0.0, 0.0]
        });
        let a = norm_hs_gamma0(&tr1, 0, 0.5).unwrap();
        let b = norm_hs_gamma0(&tr3, 0, 0.5).unwrap();
        assert!((b - 3.0 * a).abs() < 1e-12 * b);
        assert!(tr1.space_l2_at(0) <= a);
    }

    #[test]
    fn gagliardo_fourier_growth_matches_dense_oracle() {
        // H^{1/2} seminorm^2 of cos(k theta) grows linearly in k: dense
        // 10^4-point double-quadrature oracle, ratios ~ 2 within 10%
        let npts = 10_000usize;
        let dth = std::f64::consts::TAU / npts as f64;
        let semi_sq = |k: f64| -> f64 {
            let mut acc = 0.0;
            // |x - y| = 2 sin(|dtheta|/2) on the unit circle
            for d in 1..npts {
                let delta = dth * d as f64;
                let chord = 2.0 * (delta / 2.0).sin();
                // average over base angle of (cos k a - cos k(a+delta))^2 = 1 - cos(k delta)
                let mean_diff_sq = 1.0 - (k * delta).cos();
                acc += mean_diff_sq / chord.powi(2) * dth;
            }
            acc * std::f64::consts::TAU
        };
        let s2 = semi_sq(2.0);
        let s4 = semi_sq(4.0);
        let s8 = semi_sq(8.0);
        assert!((s4 / s2 - 2.0).abs() < 0.2, "{}", s4 / s2);
        assert!((s8 / s4 - 2.0).abs() < 0.2, "{}", s8 / s4);
        // the production quadrature version agrees with the oracle within a few %
        let sp = space2(3, 2);
        let pts = trace_points(&sp, BoundaryTag::Gamma0);
        for k in [2.0f64, 4.0] {
            let tr = function_trace(&pts, 2, BoundaryTag::Gamma0, &[0.0], |x, _| {
                let th = x[1].atan2(x[0]);
                [(k * th).cos(), 0.0, 0.0]
            });
            let got = gagliardo_sq(&tr, 0, 0.5).unwrap();
            let want = semi_sq(k);
            assert!((got - want).abs() / want < 0.08, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn h1star_dual_zero_duality_and_ascent_oracle() {
        use rand::{Rng, SeedableRng};
        let sp = space2(0, 1); // 16 facets
        let dual = H1StarDual::new(&sp, BoundaryTag::Gamma0).unwrap();
        let n_t = 4usize; // 3 interior time nodes? use N=4 steps -> times 0..4
        let t1 = 1.0;
        let times: Vec<f64> = (0..=n_t).map(|i| t1 * i as f64 / n_t as f64).collect();
        let pts = trace_points(&sp, BoundaryTag::Gamma0);
        // zero trace
        let tr0 = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, |_, _| [0.0; 3]);
        assert!(dual.dual_norm(&tr0, &sp).unwrap() < 1e-14);
        // nonzero smooth trace
        let tr = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, |x, t| {
            let th = x[1].atan2(x[0]);
            [(2.0 * th).cos() * (1.0 + t), th.sin() * t, 0.0]
        });
        let value = dual.dual_norm(&tr, &sp).unwrap();
        assert!(value > 0.0);
        // duality bound: |int w . v| <= ||v||_* ||w||_H1 for random discrete w
        let f = dual.load(&tr, &sp);
        let dt = t1 / n_t as f64;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let nv = dual.n_space();
        let nt_int = n_t - 1;
        for _ in 0..100 {
            let w: Vec<Vec<f64>> = (0..nt_int)
                .map(|_| (0..nv).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let pair: f64 = w
                .iter()
                .zip(&f)
                .map(|(wn, fn_)| lin::dot(wn, fn_))
                .sum();
            let wnorm = dual.h1_norm_sq(&w, dt).sqrt();
            assert!(pair.abs() <= value * wnorm * (1.0 + 1e-10), "{} > {}", pair.abs(), value * wnorm);
        }
        // ascent oracle from below: maximize f.w / ||w||_G
        let mut best: f64 = 0.0;
        for start in 0..24 {
            let mut w: Vec<Vec<f64>> = (0..nt_int)
                .map(|_| (0..nv).map(|_| rng.gen_range(-1.0f64..1.0)).collect())
                .collect();
            let _ = start;
            for _ in 0..400 {
                // numerical gradient ascent on q(w) = f.w / ||w||_G
                let wn = dual.h1_norm_sq(&w, dt).sqrt();
                let fw: f64 = w.iter().zip(&f).map(|(a, b)| lin::dot(a, b)).sum();
                let q = fw / wn;
                best = best.max(q.abs());
                // gradient: f/||w|| - (f.w) G w / ||w||^3 ; use G w via h1 bilinear
                // approximate by coordinatewise bump (small dim), step fixed
                let mut grad = vec![vec![0.0; nv]; nt_int];
                for n in 0..nt_int {
                    for i in 0..nv {
                        // d/dw (fw) = f ; d/dw ||w|| = (G w)/||w||: compute via symmetric difference of norm
                        let mut wp = w.clone();
                        wp[n][i] += 1e-6;
                        let np = dual.h1_norm_sq(&wp, dt).sqrt();
                        let dn = (np - wn) / 1e-6;
                        grad[n][i] = f[n][i] / wn - fw * dn / (wn * wn);
                    }
                }
                let gn: f64 = grad.iter().map(|g| lin::dot(g, g)).sum::<f64>().sqrt();
                if gn < 1e-12 {
                    break;
                }
                for n in 0..nt_int {
                    for i in 0..nv {
                        w[n][i] += 0.5 * grad[n][i] / gn;
                    }
                }
            }
        }
        assert!(best <= value * (1.0 + 1e-9));
        assert!(best >= 0.99 * value, "ascent reached {best} of {value}");
    }

    #[test]
    fn bochner_norms_basic() {
        let sp = space2(0, 1);
        let norms = SpatialNorms {
            mass: crate::spaces::assemble_mass(&sp),
            gram_h1: crate::spaces::assemble_h1_gram(&sp),
            h2_semi: assemble_broken_h2_semi(&sp),
        };
        let t1 = 2.0;
        let nsteps = 20usize;
        let times: Vec<f64> = (0..=nsteps).map(|i| t1 * i as f64 / nsteps as f64).collect();
        let w = Field::interpolate(&sp, |x| [x[0], -x[1], 0.0]);
        let series: Vec<Vec<f64>> = times.iter().map(|_| w.coeffs.clone()).collect();
        let wl2 = norms.l2(&w.coeffs);
        let l2t = bochner_norm(&series, &times, &norms, TimeNormKind::L2, SpaceNormKind::L2);
        assert!((l2t - t1.sqrt() * wl2).abs() < 1e-12 * l2t);
        let l1t = bochner_norm(&series, &times, &norms, TimeNormKind::L1, SpaceNormKind::L2);
        assert!((l1t - t1 * wl2).abs() < 1e-12 * l1t);
        let linf = bochner_norm(&series, &times, &norms, TimeNormKind::Linf, SpaceNormKind::H1);
        assert!((linf - norms.h1(&w.coeffs)).abs() < 1e-12 * linf);
        // u(t) = t v: || du/dt ||_{L2(0,T;L2)} = sqrt(T) ||v|| exactly under
        // the second-order differences
        let series: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| w.coeffs.iter().map(|c| c * t).collect())
            .collect();
        let d = fd_time_derivative(&series, t1 / nsteps as f64);
        let dn = bochner_norm(&d, &times, &norms, TimeNormKind::L2, SpaceNormKind::L2);
        assert!((dn - t1.sqrt() * wl2).abs() < 1e-10 * dn);
        // H1(0,T;L2) of the same: sqrt(T ||v||^2 T^2/3 ... ) just sanity-check monotone
        let h1t = bochner_hk_time(&series, &times, &norms, SpaceNormKind::L2, 1);
        assert!(h1t > dn);
    }

    #[test]
    fn triangle_inequality_on_random_traces() {
        use rand::{Rng, SeedableRng};
        let sp = space2(1, 2);
        let pts = trace_points(&sp, BoundaryTag::Gamma0);
        let times: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..5 {
            let (a1, b1, c1): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let (a2, b2, c2): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let f1 = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, move |x, t| {
                [a1 * x[0] + b1 * t, c1 * x[1], 0.0]
            });
            let f2 = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, move |x, t| {
                [a2 * x[1].sin(), b2 * x[0] * t + c2, 0.0]
            });
            let sum = function_trace(&pts, 2, BoundaryTag::Gamma0, &times, move |x, t| {
                let u = [a1 * x[0] + b1 * t, c1 * x[1], 0.0];
                let v = [a2 * x[1].sin(), b2 * x[0] * t + c2, 0.0];
                [u[0] + v[0], u[1] + v[1], 0.0]
            });
            for norm in [norm_l2_gamma0 as fn(&BoundaryTrace) -> f64, |t: &BoundaryTrace| {
                norm_h1_time_l2_gamma0(t)
            }] {
                let (na, nb, ns) = (norm(&f1), norm(&f2), norm(&sum));
                assert!(ns <= na + nb + 1e-10);
            }
            let (na, nb, ns) = (
                norm_hs_gamma0(&f1, 0, 0.5).unwrap(),
                norm_hs_gamma0(&f2, 0, 0.5).unwrap(),
                norm_hs_gamma0(&sum, 0, 0.5).unwrap(),
            );
            assert!(ns <= na + nb + 1e-10);
        }
    }
}
