//! Annulus (d=2) and spherical-shell (d=3) simplicial meshes with tagged
//! boundary facets, outward normals, and the boundary-adapted auxiliary
//! fields: the multiplier extension h (h = n on the inner boundary, 0 on
//! the outer), the radial cutoff eta, and tangential chart fields.

use crate::{Error, Result};

pub const TAG_GAMMA0: &str = "GAMMA0";
pub const TAG_GAMMA1: &str = "GAMMA1";

/// Base angular resolution of the level-0 annulus mesh.
const BASE_NTHETA: usize = 16;
/// Base radial layer count of the level-0 annulus mesh.
const BASE_NR: usize = 4;
/// Base radial layer count of the level-0 shell mesh.
const BASE_NR_3D: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundaryTag {
    Gamma0,
    Gamma1,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Gamma0 => TAG_GAMMA0,
            BoundaryTag::Gamma1 => TAG_GAMMA1,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            TAG_GAMMA0 => Ok(BoundaryTag::Gamma0),
            TAG_GAMMA1 => Ok(BoundaryTag::Gamma1),
            _ => Err(Error::Parse(format!("unknown boundary tag {s:?}"))),
        }
    }
}

/// Concentric annulus/shell domain description.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DomainSpec {
    pub dimension: usize,
    pub r0: f64,
    pub r1: f64,
    pub level: u32,
}

impl DomainSpec {
    pub fn new(dimension: usize, r0: f64, r1: f64, level: u32) -> Result<Self> {
        let s = DomainSpec { dimension, r0, r1, level };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 2 && self.dimension != 3 {
            return Err(Error::Domain(format!("dimension must be 2 or 3, got {}", self.dimension)));
        }
        if !(self.r0 > 0.0) {
            return Err(Error::Domain(format!("inner radius must be positive, got {}", self.r0)));
        }
        if !(self.r1 > self.r0) {
            return Err(Error::Domain(format!("outer radius {} must exceed inner radius {}", self.r1, self.r0)));
        }
        Ok(())
    }

    pub fn refined(&self, level: u32) -> Self {
        DomainSpec { level, ..*self }
    }
}

/// Boundary facet: node indices, the unique adjacent cell, tag and unit
/// outward (w.r.t. the solid) normal of the flat facet.
#[derive(Debug, Clone)]
pub struct Facet {
    pub nodes: Vec<usize>,
    pub cell: usize,
    pub tag: BoundaryTag,
    pub normal: [f64; 3],
}

/// Straight simplicial mesh. Coordinates are stored flat with stride
/// `dim`; cells with stride `dim + 1`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub cells: Vec<usize>,
    pub facets: Vec<Facet>,
    pub r0: f64,
    pub r1: f64,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.cells[c * (self.dim + 1)..(c + 1) * (self.dim + 1)]
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 3] {
        let mut m = [0.0; 3];
        let nodes = self.cell_nodes(c);
        for &n in nodes {
            for k in 0..self.dim {
                m[k] += self.node(n)[k];
            }
        }
        for v in m.iter_mut() {
            *v /= nodes.len() as f64;
        }
        m
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        let nodes = self.cell_nodes(c);
        let a = self.node(nodes[0]);
        if self.dim == 2 {
            let b = self.node(nodes[1]);
            let p = self.node(nodes[2]);
            0.5 * ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]))
        } else {
            let b = self.node(nodes[1]);
            let p = self.node(nodes[2]);
            let q = self.node(nodes[3]);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
            let w = [q[0] - a[0], q[1] - a[1], q[2] - a[2]];
            (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
                + u[2] * (v[0] * w[1] - v[1] * w[0]))
                / 6.0
        }
    }

    /// Length (d=2) or area (d=3) of a boundary facet.
    pub fn facet_measure(&self, f: usize) -> f64 {
        let fc = &self.facets[f];
        let a = self.node(fc.nodes[0]);
        let b = self.node(fc.nodes[1]);
        if self.dim == 2 {
            let dx = b[0] - a[0];
            let dy = b[1] - a[1];
            (dx * dx + dy * dy).sqrt()
        } else {
            let c = self.node(fc.nodes[2]);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let cr = cross(&u, &v);
            0.5 * (cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2]).sqrt()
        }
    }

    pub fn boundary_measure(&self, tag: BoundaryTag) -> f64 {
        (0..self.facets.len())
            .filter(|&f| self.facets[f].tag == tag)
            .map(|f| self.facet_measure(f))
            .sum()
    }

    pub fn facet_ids(&self, tag: BoundaryTag) -> Vec<usize> {
        (0..self.facets.len()).filter(|&f| self.facets[f].tag == tag).collect()
    }

    pub fn max_diameter(&self) -> f64 {
        let mut h: f64 = 0.0;
        for c in 0..self.n_cells() {
            let nodes = self.cell_nodes(c);
            for i in 0..nodes.len() {
                for j in i + 1..nodes.len() {
                    let a = self.node(nodes[i]);
                    let b = self.node(nodes[j]);
                    let mut d = 0.0;
                    for k in 0..self.dim {
                        d += (a[k] - b[k]) * (a[k] - b[k]);
                    }
                    h = h.max(d.sqrt());
                }
            }
        }
        h
    }

    /// Locate the cell containing `x`, returning barycentric coordinates.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, Vec<f64>)> {
        let tol = -1e-10;
        for c in 0..self.n_cells() {
            if let Some(b) = self.barycentric(c, x) {
                if b.iter().all(|&v| v >= tol) {
                    return Some((c, b));
                }
            }
        }
        None
    }

    pub fn barycentric(&self, c: usize, x: &[f64]) -> Option<Vec<f64>> {
        let nodes = self.cell_nodes(c);
        let d = self.dim;
        let a = self.node(nodes[0]);
        // solve J * lambda_rest = x - a, lambda_0 = 1 - sum
        let mut j = [[0.0f64; 3]; 3];
        for k in 1..=d {
            let p = self.node(nodes[k]);
            for r in 0..d {
                j[r][k - 1] = p[r] - a[r];
            }
        }
        let mut rhs = [0.0f64; 3];
        for r in 0..d {
            rhs[r] = x[r] - a[r];
        }
        let sol = solve_small(&j, &rhs, d)?;
        let mut b = vec![0.0; d + 1];
        let mut s = 0.0;
        for k in 0..d {
            b[k + 1] = sol[k];
            s += sol[k];
        }
        b[0] = 1.0 - s;
        Some(b)
    }

    /// Apply an orthogonal map to all coordinates (and normals).
    pub fn rotated(&self, rot: &[[f64; 3]; 3]) -> Mesh {
        let mut m = self.clone();
        let d = self.dim;
        for i in 0..self.n_nodes() {
            let x = self.node(i);
            let mut y = [0.0; 3];
            for r in 0..d {
                for c in 0..d {
                    y[r] += rot[r][c] * x[c];
                }
            }
            for r in 0..d {
                m.coords[i * d + r] = y[r];
            }
        }
        for f in m.facets.iter_mut() {
            let n = f.normal;
            let mut y = [0.0; 3];
            for r in 0..d {
                for c in 0..d {
                    y[r] += rot[r][c] * n[c];
                }
            }
            f.normal = y;
        }
        m
    }

    /// Plain-text export. Optional `#`-prefixed metadata lines come first,
    /// then "dim nnodes ncells nfacets", the node block (17 significant
    /// digits), the 0-based cell block, and the facet block with tags.
    pub fn export_text(&self, metadata: &[String]) -> String {
        let mut s = String::new();
        for m in metadata {
            s.push_str(&format!("# {m}\n"));
        }
        s.push_str(&format!("{} {} {} {}\n", self.dim, self.n_nodes(), self.n_cells(), self.facets.len()));
        for i in 0..self.n_nodes() {
            let x = self.node(i);
            let parts: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&parts.join(" "));
            s.push('\n');
        }
        for c in 0..self.n_cells() {
            let parts: Vec<String> = self.cell_nodes(c).iter().map(|v| v.to_string()).collect();
            s.push_str(&parts.join(" "));
            s.push('\n');
        }
        for f in &self.facets {
            let parts: Vec<String> = f.nodes.iter().map(|v| v.to_string()).collect();
            s.push_str(&parts.join(" "));
            s.push(' ');
            s.push_str(f.tag.as_str());
            s.push('\n');
        }
        s
    }

    pub fn import_text(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty mesh file".into()))?;
        let hp: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("bad header: {e}"))))
            .collect::<Result<_>>()?;
        if hp.len() != 4 {
            return Err(Error::Parse("mesh header must be: dim nnodes ncells nfacets".into()));
        }
        let (dim, nn, nc, nf) = (hp[0], hp[1], hp[2], hp[3]);
        let mut coords = Vec::with_capacity(nn * dim);
        for _ in 0..nn {
            let l = lines.next().ok_or_else(|| Error::Parse("truncated node block".into()))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("bad coordinate: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(Error::Parse("wrong coordinate arity".into()));
            }
            coords.extend_from_slice(&vals);
        }
        let mut cells = Vec::with_capacity(nc * (dim + 1));
        for _ in 0..nc {
            let l = lines.next().ok_or_else(|| Error::Parse("truncated cell block".into()))?;
            let vals: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("bad cell index: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim + 1 {
                return Err(Error::Parse("wrong cell arity".into()));
            }
            cells.extend_from_slice(&vals);
        }
        let mut facet_raw = Vec::with_capacity(nf);
        for _ in 0..nf {
            let l = lines.next().ok_or_else(|| Error::Parse("truncated facet block".into()))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != dim + 1 {
                return Err(Error::Parse("wrong facet arity".into()));
            }
            let nodes: Vec<usize> = toks[..dim]
                .iter()
                .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("bad facet index: {e}"))))
                .collect::<Result<_>>()?;
            let tag = BoundaryTag::parse(toks[dim])?;
            facet_raw.push((nodes, tag));
        }
        // radii recovered from node positions
        let mut rmin = f64::INFINITY;
        let mut rmax: f64 = 0.0;
        for i in 0..nn {
            let x = &coords[i * dim..(i + 1) * dim];
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        let mut mesh = Mesh { dim, coords, cells, facets: Vec::new(), r0: rmin, r1: rmax };
        // recover adjacency and normals
        let mut node_cells: Vec<Vec<usize>> = vec![Vec::new(); nn];
        for c in 0..mesh.n_cells() {
            for &n in mesh.cell_nodes(c) {
                node_cells[n].push(c);
            }
        }
        let mut facets = Vec::with_capacity(nf);
        for (nodes, tag) in facet_raw {
            let cell = node_cells[nodes[0]]
                .iter()
                .copied()
                .find(|&c| nodes.iter().all(|n| mesh.cell_nodes(c).contains(n)))
                .ok_or_else(|| Error::Parse("facet without adjacent cell".into()))?;
            let normal = facet_normal(&mesh, &nodes, cell);
            facets.push(Facet { nodes, cell, tag, normal });
        }
        mesh.facets = facets;
        Ok(mesh)
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], n: usize) -> Option<Vec<f64>> {
    let mut m = [[0.0f64; 4]; 3];
    for r in 0..n {
        for c in 0..n {
            m[r][c] = a[r][c];
        }
        m[r][n] = b[r];
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some((0..n).map(|r| m[r][n] / m[r][r]).collect())
}

/// Unit normal of a facet pointing away from the adjacent cell centroid.
fn facet_normal(mesh: &Mesh, nodes: &[usize], cell: usize) -> [f64; 3] {
    let a = mesh.node(nodes[0]);
    let b = mesh.node(nodes[1]);
    let mut n = [0.0f64; 3];
    if mesh.dim == 2 {
        let t = [b[0] - a[0], b[1] - a[1]];
        n[0] = t[1];
        n[1] = -t[0];
    } else {
        let c = mesh.node(nodes[2]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        n = cross(&u, &v);
    }
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    for v in n.iter_mut() {
        *v /= len;
    }
    // orient outward: away from the cell centroid
    let cen = mesh.cell_centroid(cell);
    let mut mid = [0.0f64; 3];
    for &nd in nodes {
        for k in 0..mesh.dim {
            mid[k] += mesh.node(nd)[k];
        }
    }
    for v in mid.iter_mut() {
        *v /= nodes.len() as f64;
    }
    let dot: f64 = (0..mesh.dim).map(|k| n[k] * (mid[k] - cen[k])).sum();
    if dot < 0.0 {
        for v in n.iter_mut() {
            *v = -*v;
        }
    }
    n
}

/// Build the level-`spec.level` mesh. Each level halves the maximum
/// element diameter.
pub fn build_mesh(spec: &DomainSpec) -> Result<Mesh> {
    spec.validate()?;
    if spec.dimension == 2 {
        build_annulus(spec)
    } else {
        build_shell(spec)
    }
}

fn build_annulus(spec: &DomainSpec) -> Result<Mesh> {
    let nt = BASE_NTHETA << spec.level;
    let nr = BASE_NR << spec.level;
    let (r0, r1) = (spec.r0, spec.r1);
    let node_id = |ir: usize, it: usize| ir * nt + (it % nt);
    let mut coords = Vec::with_capacity((nr + 1) * nt * 2);
    for ir in 0..=nr {
        let r = r0 + (r1 - r0) * (ir as f64) / (nr as f64);
        for it in 0..nt {
            let th = 2.0 * std::f64::consts::PI * (it as f64) / (nt as f64);
            coords.push(r * th.cos());
            coords.push(r * th.sin());
        }
    }
    let mut cells = Vec::with_capacity(nr * nt * 2 * 3);
    for ir in 0..nr {
        for it in 0..nt {
            let a = node_id(ir, it);
            let b = node_id(ir, it + 1);
            let c = node_id(ir + 1, it + 1);
            let d = node_id(ir + 1, it);
            cells.extend_from_slice(&[a, b, c]);
            cells.extend_from_slice(&[a, c, d]);
        }
    }
    let mut mesh = Mesh { dim: 2, coords, cells, facets: Vec::new(), r0, r1 };
    fix_orientation(&mut mesh);
    let mut facets = Vec::new();
    for it in 0..nt {
        // inner: edge (a, b) of quad (0, it) belongs to its first triangle
        let a = node_id(0, it);
        let b = node_id(0, it + 1);
        let cell = 2 * it;
        let nodes = vec![a, b];
        let normal = facet_normal(&mesh, &nodes, cell);
        facets.push(Facet { nodes, cell, tag: BoundaryTag::Gamma0, normal });
    }
    for it in 0..nt {
        // outer: edge (d, c) of quad (nr-1, it) belongs to its second triangle
        let c = node_id(nr, it + 1);
        let d = node_id(nr, it);
        let cell = 2 * ((nr - 1) * nt + it) + 1;
        let nodes = vec![d, c];
        let normal = facet_normal(&mesh, &nodes, cell);
        facets.push(Facet { nodes, cell, tag: BoundaryTag::Gamma1, normal });
    }
    mesh.facets = facets;
    Ok(mesh)
}

fn fix_orientation(mesh: &mut Mesh) {
    let stride = mesh.dim + 1;
    for c in 0..mesh.n_cells() {
        if mesh.cell_volume(c) < 0.0 {
            mesh.cells.swap(c * stride + 1, c * stride + 2);
        }
    }
}

/// Icosphere surface: unit-sphere vertices and CCW (outward) triangles.
fn icosphere(subdiv: u32) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut verts: Vec<[f64; 3]> = raw
        .iter()
        .map(|v| {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            [v[0] / n, v[1] / n, v[2] / n]
        })
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut midpoint: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = midpoint.get(&key) {
                return m;
            }
            let pa = verts[a];
            let pb = verts[b];
            let mut p = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0, (pa[2] + pb[2]) / 2.0];
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            for v in p.iter_mut() {
                *v /= n;
            }
            verts.push(p);
            let id = verts.len() - 1;
            midpoint.insert(key, id);
            id
        };
        for f in &faces {
            let ab = mid(f[0], f[1], &mut verts);
            let bc = mid(f[1], f[2], &mut verts);
            let ca = mid(f[2], f[0], &mut verts);
            new_faces.push([f[0], ab, ca]);
            new_faces.push([ab, f[1], bc]);
            new_faces.push([ca, bc, f[2]]);
            new_faces.push([ab, bc, ca]);
        }
        faces = new_faces;
    }
    // enforce outward orientation
    for f in faces.iter_mut() {
        let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = cross(&u, &v);
        let cen = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0, (a[2] + b[2] + c[2]) / 3.0];
        if n[0] * cen[0] + n[1] * cen[1] + n[2] * cen[2] < 0.0 {
            f.swap(1, 2);
        }
    }
    (verts, faces)
}

/// Split the prism with bottom (v0 v1 v2) and top (v3 v4 v5) into three
/// tetrahedra with face diagonals through the smallest global vertex index
/// of each quad face, so adjacent prisms decompose conformingly.
fn split_prism(v: [usize; 6]) -> [[usize; 4]; 3] {
    const ROT: [[usize; 6]; 6] = [
        [0, 1, 2, 3, 4, 5],
        [1, 2, 0, 4, 5, 3],
        [2, 0, 1, 5, 3, 4],
        [3, 5, 4, 0, 2, 1],
        [4, 3, 5, 1, 0, 2],
        [5, 4, 3, 2, 1, 0],
    ];
    let min_pos = (0..6).min_by_key(|&i| v[i]).unwrap();
    let p = ROT[min_pos];
    let w = [v[p[0]], v[p[1]], v[p[2]], v[p[3]], v[p[4]], v[p[5]]];
    if w[1].min(w[5]) < w[2].min(w[4]) {
        [[w[0], w[1], w[2], w[5]], [w[0], w[1], w[5], w[4]], [w[0], w[4], w[5], w[3]]]
    } else {
        [[w[0], w[1], w[2], w[4]], [w[0], w[4], w[2], w[5]], [w[0], w[4], w[5], w[3]]]
    }
}

fn build_shell(spec: &DomainSpec) -> Result<Mesh> {
    let subdiv = 1 + spec.level;
    let nr = BASE_NR_3D << spec.level;
    let (verts, faces) = icosphere(subdiv);
    let n_surf = verts.len();
    let (r0, r1) = (spec.r0, spec.r1);
    let mut coords = Vec::with_capacity((nr + 1) * n_surf * 3);
    for ir in 0..=nr {
        let r = r0 + (r1 - r0) * (ir as f64) / (nr as f64);
        for v in &verts {
            coords.push(r * v[0]);
            coords.push(r * v[1]);
            coords.push(r * v[2]);
        }
    }
    let mut cells = Vec::new();
    let mut prism_tets: Vec<[usize; 3]> = Vec::new(); // tet ids per prism
    for ir in 0..nr {
        for f in &faces {
            let bottom = [ir * n_surf + f[0], ir * n_surf + f[1], ir * n_surf + f[2]];
            let top = [(ir + 1) * n_surf + f[0], (ir + 1) * n_surf + f[1], (ir + 1) * n_surf + f[2]];
            let tets = split_prism([bottom[0], bottom[1], bottom[2], top[0], top[1], top[2]]);
            let base = cells.len() / 4;
            for t in &tets {
                cells.extend_from_slice(t);
            }
            prism_tets.push([base, base + 1, base + 2]);
        }
    }
    let mut mesh = Mesh { dim: 3, coords, cells, facets: Vec::new(), r0, r1 };
    fix_orientation(&mut mesh);
    let mut facets = Vec::new();
    let find_cell = |mesh: &Mesh, tets: &[usize; 3], tri: &[usize; 3]| -> usize {
        *tets
            .iter()
            .find(|&&t| tri.iter().all(|n| mesh.cell_nodes(t).contains(n)))
            .expect("prism decomposition must contain its triangular faces")
    };
    for (pi, f) in faces.iter().enumerate() {
        // inner surface belongs to the first radial layer of prisms
        let tri = [f[0], f[1], f[2]];
        let cell = find_cell(&mesh, &prism_tets[pi], &tri);
        let nodes = tri.to_vec();
        let normal = facet_normal(&mesh, &nodes, cell);
        facets.push(Facet { nodes, cell, tag: BoundaryTag::Gamma0, normal });
    }
    let top_layer_base = (nr - 1) * faces.len();
    for (pi, f) in faces.iter().enumerate() {
        let tri = [nr * n_surf + f[0], nr * n_surf + f[1], nr * n_surf + f[2]];
        let cell = find_cell(&mesh, &prism_tets[top_layer_base + pi], &tri);
        let nodes = tri.to_vec();
        let normal = facet_normal(&mesh, &nodes, cell);
        facets.push(Facet { nodes, cell, tag: BoundaryTag::Gamma1, normal });
    }
    mesh.facets = facets;
    Ok(mesh)
}

/// Quintic smoothstep on [0,1]: s(0)=0, s(1)=1, with two vanishing
/// derivatives at both ends.
pub fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

pub fn smoothstep5_d1(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (t - 1.0) * (t - 1.0)
}

pub fn smoothstep5_d2(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    60.0 * t * (2.0 * t - 1.0) * (t - 1.0)
}

/// Analytic auxiliary fields of the annulus/shell: the multiplier
/// extension h (h = n on Gamma0, 0 on Gamma1, built from the quintic
/// smoothstep profile chi), the cutoff eta (1 near Gamma0, 0 near
/// Gamma1), and tangential chart fields b^alpha with b^alpha . n = 0.
#[derive(Debug, Clone, Copy)]
pub struct AuxiliaryFields {
    pub dim: usize,
    pub r0: f64,
    pub r1: f64,
}

impl AuxiliaryFields {
    pub fn new(mesh: &Mesh) -> Self {
        AuxiliaryFields { dim: mesh.dim, r0: mesh.r0, r1: mesh.r1 }
    }

    /// Radial profile chi with chi(r0)=1, chi(r1)=0; C^2 across both ends.
    pub fn chi(&self, r: f64) -> f64 {
        1.0 - smoothstep5((r - self.r0) / (self.r1 - self.r0))
    }

    pub fn chi_d1(&self, r: f64) -> f64 {
        let d = self.r1 - self.r0;
        -smoothstep5_d1((r - self.r0) / d) / d
    }

    /// h(x) = -(x/|x|) chi(|x|); equals the outward normal (pointing into
    /// the cavity) on Gamma0 and vanishes on Gamma1.
    pub fn h(&self, x: &[f64]) -> [f64; 3] {
        let r = radius(x, self.dim);
        let c = self.chi(r);
        let mut out = [0.0; 3];
        for k in 0..self.dim {
            out[k] = -x[k] / r * c;
        }
        out
    }

    /// Gradient of h: (grad h)_{ij} = dh_i/dx_j.
    pub fn grad_h(&self, x: &[f64]) -> [[f64; 3]; 3] {
        let r = radius(x, self.dim);
        let c = self.chi(r);
        let cp = self.chi_d1(r);
        let mut g = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let delta = if i == j { 1.0 } else { 0.0 };
                g[i][j] = -(delta * c / r + x[i] * x[j] * (cp * r - c) / (r * r * r));
            }
        }
        g
    }

    pub fn div_h(&self, x: &[f64]) -> f64 {
        let g = self.grad_h(x);
        (0..self.dim).map(|i| g[i][i]).sum()
    }

    /// Scalar cutoff: 1 on [r0, ra], 0 on [rb, r1] with a smooth ramp,
    /// where ra, rb sit at 20% / 80% of the gap.
    pub fn eta(&self, x: &[f64]) -> f64 {
        let r = radius(x, self.dim);
        let ra = self.r0 + 0.2 * (self.r1 - self.r0);
        let rb = self.r0 + 0.8 * (self.r1 - self.r0);
        1.0 - smoothstep5((r - ra) / (rb - ra))
    }

    /// Number of tangential charts: one for the circle, two for the sphere
    /// (equatorial belt about the z-axis and polar caps about the x-axis).
    pub fn n_charts(&self) -> usize {
        if self.dim == 2 {
            1
        } else {
            2
        }
    }

    /// Partition-of-unity weight of chart `c` at x (weights sum to 1 on
    /// the boundary spheres).
    pub fn chart_weight(&self, c: usize, x: &[f64]) -> f64 {
        if self.dim == 2 {
            return 1.0;
        }
        let r = radius(x, 3);
        let z = (x[2] / r).abs();
        // belt chart fades out for |z|/r in (0.6, 0.85); caps chart is the complement
        let wcap = smoothstep5((z - 0.6) / 0.25);
        match c {
            0 => 1.0 - wcap,
            _ => wcap,
        }
    }

    /// Tangential fields b^alpha (alpha = 0..dim-2) of chart `c`.
    /// Each is smooth, unit-length and exactly tangent to the spheres
    /// |x| = const on the chart support.
    pub fn tangential(&self, c: usize, alpha: usize, x: &[f64]) -> [f64; 3] {
        if self.dim == 2 {
            let r = radius(x, 2);
            return [-x[1] / r, x[0] / r, 0.0];
        }
        let r = radius(x, 3);
        if c == 0 {
            // chart about the z-axis: azimuthal and meridional directions
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if alpha == 0 {
                [-x[1] / rho, x[0] / rho, 0.0]
            } else {
                [x[0] * x[2] / (r * rho), x[1] * x[2] / (r * rho), -rho / r]
            }
        } else {
            // chart about the x-axis, regular at the z-poles
            let rho = (x[1] * x[1] + x[2] * x[2]).sqrt();
            if alpha == 0 {
                [0.0, -x[2] / rho, x[1] / rho]
            } else {
                [-rho / r, x[1] * x[0] / (r * rho), x[2] * x[0] / (r * rho)]
            }
        }
    }

    /// The chart carrying the largest weight at x.
    pub fn dominant_chart(&self, x: &[f64]) -> usize {
        (0..self.n_charts())
            .max_by(|&a, &b| {
                self.chart_weight(a, x).partial_cmp(&self.chart_weight(b, x)).unwrap()
            })
            .unwrap()
    }
}

pub fn radius(x: &[f64], dim: usize) -> f64 {
    x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2(level: u32) -> DomainSpec {
        DomainSpec::new(2, 1.0, 2.0, level).unwrap()
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(DomainSpec::new(2, 2.0, 1.0, 0).is_err());
        assert!(DomainSpec::new(4, 1.0, 2.0, 0).is_err());
        assert!(DomainSpec::new(2, -1.0, 2.0, 0).is_err());
    }

    #[test]
    fn annulus_boundary_nodes_on_circles() {
        let mesh = build_mesh(&spec2(0)).unwrap();
        for f in &mesh.facets {
            let want = match f.tag {
                BoundaryTag::Gamma0 => 1.0,
                BoundaryTag::Gamma1 => 2.0,
            };
            for &n in &f.nodes {
                let r = radius(mesh.node(n), 2);
                assert!((r - want).abs() < 1e-9, "boundary node off circle: {r}");
            }
        }
        assert!(!mesh.facet_ids(BoundaryTag::Gamma0).is_empty());
    }

    #[test]
    fn annulus_gamma0_length_matches_chord_oracle() {
        for level in 0..3 {
            let mesh = build_mesh(&spec2(level)).unwrap();
            let n = (BASE_NTHETA << level) as f64;
            let oracle = n * 2.0 * 1.0 * (std::f64::consts::PI / n).sin();
            let got = mesh.boundary_measure(BoundaryTag::Gamma0);
            assert!((got - oracle).abs() < 1e-12 * oracle.max(1.0));
        }
    }

    #[test]
    fn annulus_gamma0_converges_to_circumference_quadratically() {
        let two_pi = 2.0 * std::f64::consts::PI;
        let errs: Vec<f64> = (0..3)
            .map(|l| (build_mesh(&spec2(l)).unwrap().boundary_measure(BoundaryTag::Gamma0) - two_pi).abs())
            .collect();
        // rate >= 1.8 per refinement means error ratio >= 2^1.8
        assert!(errs[0] / errs[1] >= 2.0f64.powf(1.8));
        assert!(errs[1] / errs[2] >= 2.0f64.powf(1.8));
    }

    #[test]
    fn cells_positive_and_diameter_halves() {
        let m0 = build_mesh(&spec2(0)).unwrap();
        let m1 = build_mesh(&spec2(1)).unwrap();
        for c in 0..m0.n_cells() {
            assert!(m0.cell_volume(c) > 0.0);
        }
        let ratio = m0.max_diameter() / m1.max_diameter();
        assert!(ratio > 1.6 && ratio < 2.4, "diameter ratio {ratio}");
    }

    #[test]
    fn normals_unit_and_oriented() {
        for spec in [spec2(0), DomainSpec::new(3, 1.0, 2.0, 0).unwrap()] {
            let mesh = build_mesh(&spec).unwrap();
            for f in &mesh.facets {
                let len = (f.normal[0].powi(2) + f.normal[1].powi(2) + f.normal[2].powi(2)).sqrt();
                assert!((len - 1.0).abs() < 1e-14);
                let mut mid = [0.0; 3];
                for &n in &f.nodes {
                    for k in 0..mesh.dim {
                        mid[k] += mesh.node(n)[k] / f.nodes.len() as f64;
                    }
                }
                let dot: f64 = (0..mesh.dim).map(|k| f.normal[k] * mid[k]).sum();
                match f.tag {
                    BoundaryTag::Gamma0 => assert!(dot < 0.0, "Gamma0 normal must point inward"),
                    BoundaryTag::Gamma1 => assert!(dot > 0.0, "Gamma1 normal must point outward"),
                }
            }
        }
    }

    #[test]
    fn shell_volumes_positive_and_area_converges() {
        let four_pi = 4.0 * std::f64::consts::PI;
        let mut prev_err = f64::INFINITY;
        for level in 0..2 {
            let spec = DomainSpec::new(3, 1.0, 2.0, level).unwrap();
            let mesh = build_mesh(&spec).unwrap();
            for c in 0..mesh.n_cells() {
                assert!(mesh.cell_volume(c) > 0.0, "negative tet at level {level}");
            }
            let area = mesh.boundary_measure(BoundaryTag::Gamma0);
            let err = (area - four_pi).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
    }

    #[test]
    fn shell_total_volume_close() {
        let spec = DomainSpec::new(3, 1.0, 2.0, 0).unwrap();
        let mesh = build_mesh(&spec).unwrap();
        let vol: f64 = (0..mesh.n_cells()).map(|c| mesh.cell_volume(c)).sum();
        // inscribed polyhedron: volume deficit at the coarsest level is ~13%
        let exact = 4.0 / 3.0 * std::f64::consts::PI * (8.0 - 1.0);
        assert!((vol - exact).abs() / exact < 0.15, "shell volume {vol} vs {exact}");
        let fine = build_mesh(&DomainSpec::new(3, 1.0, 2.0, 1).unwrap()).unwrap();
        let vol1: f64 = (0..fine.n_cells()).map(|c| fine.cell_volume(c)).sum();
        assert!((vol1 - exact).abs() < (vol - exact).abs() / 3.0);
    }

    #[test]
    fn export_import_round_trip_bit_exact() {
        for spec in [spec2(0), DomainSpec::new(3, 1.0, 2.0, 0).unwrap()] {
            let mesh = build_mesh(&spec).unwrap();
            let meta = vec!["seed=42".to_string()];
            let text = mesh.export_text(&meta);
            let back = Mesh::import_text(&text).unwrap();
            let text2 = back.export_text(&meta);
            assert_eq!(text, text2);
            assert_eq!(mesh.facets.len(), back.facets.len());
            for (a, b) in mesh.facets.iter().zip(back.facets.iter()) {
                assert_eq!(a.cell, b.cell);
                for k in 0..3 {
                    assert!((a.normal[k] - b.normal[k]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn multiplier_field_boundary_values() {
        let mesh = build_mesh(&spec2(1)).unwrap();
        let aux = AuxiliaryFields::new(&mesh);
        // on Gamma0 nodes: h = -x / r0 (the outward normal points into the cavity)
        let h = aux.h(&[1.0, 0.0]);
        assert!((h[0] + 1.0).abs() < 1e-15 && h[1].abs() < 1e-15);
        // on Gamma1: zero
        let h1 = aux.h(&[0.0, 2.0]);
        assert!(h1[0].abs() < 1e-15 && h1[1].abs() < 1e-15);
        // mid radius: |h| = chi(mid)
        let mid = 1.5;
        let hm = aux.h(&[mid, 0.0]);
        let norm = (hm[0] * hm[0] + hm[1] * hm[1]).sqrt();
        assert!((norm - aux.chi(mid)).abs() < 1e-14);
    }

    #[test]
    fn grad_h_matches_jet_differentiation() {
        use crate::jets::Jet2;
        let aux = AuxiliaryFields { dim: 2, r0: 1.0, r1: 2.0 };
        let xs = [[1.3, 0.4], [1.0, 0.9], [-1.2, 0.8]];
        for x in xs {
            let g = aux.grad_h(&x);
            // jet evaluation of h_i(x) = -x_i/r * chi(r), chi via smoothstep jets
            let xv = Jet2::var(x[0], 0);
            let yv = Jet2::var(x[1], 1);
            let r = (xv * xv + yv * yv).sqrt();
            let t = (r + (-aux.r0)) * (1.0 / (aux.r1 - aux.r0));
            let s = t * t * t * (t * t * 6.0 + t * (-15.0) + 10.0);
            let chi = -s + 1.0;
            let hx = -(xv * chi) * rinv(r);
            let hy = -(yv * chi) * rinv(r);
            assert!((hx.g[0] - g[0][0]).abs() < 1e-11);
            assert!((hx.g[1] - g[0][1]).abs() < 1e-11);
            assert!((hy.g[0] - g[1][0]).abs() < 1e-11);
            assert!((hy.g[1] - g[1][1]).abs() < 1e-11);
        }
    }

    fn rinv(r: crate::jets::Jet2) -> crate::jets::Jet2 {
        use crate::jets::Jet2;
        // 1/r via chain rule on r^2 would lose the jet; implement directly
        let v = 1.0 / r.v;
        let mut out = Jet2::constant(v);
        for a in 0..crate::jets::MAX_VARS {
            out.g[a] = -r.g[a] * v * v;
        }
        for a in 0..crate::jets::MAX_VARS {
            for b in 0..crate::jets::MAX_VARS {
                out.h[a][b] = (2.0 * r.g[a] * r.g[b] * v - r.h[a][b]) * v * v;
            }
        }
        out
    }

    #[test]
    fn tangential_fields_2d_values() {
        let aux = AuxiliaryFields { dim: 2, r0: 1.0, r1: 2.0 };
        let b = aux.tangential(0, 0, &[1.0, 0.0]);
        assert!((b[0]).abs() < 1e-15 && (b[1] - 1.0).abs() < 1e-15);
        let b = aux.tangential(0, 0, &[0.0, 1.0]);
        assert!((b[0] + 1.0).abs() < 1e-15 && b[1].abs() < 1e-15);
    }

    #[test]
    fn tangential_fields_3d_pole_uses_cap_chart() {
        let aux = AuxiliaryFields { dim: 3, r0: 1.0, r1: 2.0 };
        let pole = [0.0, 0.0, 1.0];
        assert_eq!(aux.dominant_chart(&pole), 1);
        assert!(aux.chart_weight(0, &pole).abs() < 1e-15);
        for alpha in 0..2 {
            let b = aux.tangential(1, alpha, &pole);
            let dot = b[2]; // radial direction at the pole is e_z
            assert!(dot.abs() < 1e-10, "tangency violated at pole");
            let len = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-12);
        }
        // generic point: every chart field tangent where its weight is positive
        let x = [0.3, -0.5, 0.9];
        let r = radius(&x, 3);
        for c in 0..2 {
            if aux.chart_weight(c, &x) > 0.0 {
                for alpha in 0..2 {
                    let b = aux.tangential(c, alpha, &x);
                    let dot = (b[0] * x[0] + b[1] * x[1] + b[2] * x[2]) / r;
                    assert!(dot.abs() < 1e-13);
                }
            }
        }
    }
}
