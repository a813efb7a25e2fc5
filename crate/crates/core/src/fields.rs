//! Analytic vector fields with exact derivatives (via forward AD jets),
//! separable space-time fields for data ensembles and manufactured
//! solutions, and dense-quadrature norms of analytic data.
//!
//! Data norms on the right-hand side of the estimates are computed here
//! from the analytic representation (mesh independent); only solution
//! norms use the FE machinery.

use crate::jets::Jet2;
use crate::spaces::LameParameters;
use rand::Rng;
use std::sync::Arc;

/// Value, gradient and Hessian of a vector field at one point.
#[derive(Debug, Clone, Copy)]
pub struct FieldJet {
    pub dim: usize,
    pub value: [f64; 3],
    /// grad[i][j] = d u_i / d x_j
    pub grad: [[f64; 3]; 3],
    /// hess[i][j][k] = d2 u_i / (d x_j d x_k)
    pub hess: [[[f64; 3]; 3]; 3],
}

impl FieldJet {
    pub fn div(&self) -> f64 {
        (0..self.dim).map(|i| self.grad[i][i]).sum()
    }

    pub fn strain(&self) -> [[f64; 3]; 3] {
        let mut e = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                e[i][j] = 0.5 * (self.grad[i][j] + self.grad[j][i]);
            }
        }
        e
    }

    pub fn piola(&self, lame: &LameParameters) -> [[f64; 3]; 3] {
        crate::spaces::piola_from_gradient(&self.grad, lame, self.dim)
    }

    /// div P(u) = mu lap(u) + (lambda + mu) grad(div u).
    pub fn div_piola(&self, lame: &LameParameters) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            let lap: f64 = (0..self.dim).map(|j| self.hess[i][j][j]).sum();
            let grad_div: f64 = (0..self.dim).map(|j| self.hess[j][j][i]).sum();
            out[i] = lame.mu * lap + (lame.lambda + lame.mu) * grad_div;
        }
        out
    }

    pub fn grad_frobenius_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.grad[i][j] * self.grad[i][j];
            }
        }
        s
    }
}

type JetClosure = Arc<dyn Fn(&[Jet2; 3]) -> [Jet2; 3] + Send + Sync>;
type ValueClosure = Arc<dyn Fn(&[f64]) -> [f64; 3] + Send + Sync>;

#[derive(Clone)]
enum SpatialKind {
    /// exact derivatives through jets
    Jet(JetClosure),
    /// value-only closure; derivatives by central finite differences
    Value { f: ValueClosure, step: f64 },
}

/// A smooth vector field on the domain.
#[derive(Clone)]
pub struct SpatialField {
    pub dim: usize,
    kind: SpatialKind,
}

impl SpatialField {
    pub fn from_jets(dim: usize, f: impl Fn(&[Jet2; 3]) -> [Jet2; 3] + Send + Sync + 'static) -> Self {
        SpatialField { dim, kind: SpatialKind::Jet(Arc::new(f)) }
    }

    pub fn from_values(dim: usize, f: impl Fn(&[f64]) -> [f64; 3] + Send + Sync + 'static) -> Self {
        SpatialField { dim, kind: SpatialKind::Value { f: Arc::new(f), step: 1e-5 } }
    }

    pub fn zero(dim: usize) -> Self {
        SpatialField::from_jets(dim, |_| [Jet2::constant(0.0); 3])
    }

    pub fn value(&self, x: &[f64]) -> [f64; 3] {
        match &self.kind {
            SpatialKind::Jet(f) => {
                let jets = seed(x, self.dim, false);
                let out = f(&jets);
                [out[0].v, out[1].v, out[2].v]
            }
            SpatialKind::Value { f, .. } => f(x),
        }
    }

    pub fn eval(&self, x: &[f64]) -> FieldJet {
        match &self.kind {
            SpatialKind::Jet(f) => {
                let jets = seed(x, self.dim, true);
                let out = f(&jets);
                let mut fj = FieldJet {
                    dim: self.dim,
                    value: [0.0; 3],
                    grad: [[0.0; 3]; 3],
                    hess: [[[0.0; 3]; 3]; 3],
                };
                for i in 0..3 {
                    fj.value[i] = out[i].v;
                    for j in 0..self.dim {
                        fj.grad[i][j] = out[i].g[j];
                        for k in 0..self.dim {
                            fj.hess[i][j][k] = out[i].h[j][k];
                        }
                    }
                }
                fj
            }
            SpatialKind::Value { f, step } => {
                let d = self.dim;
                let mut fj = FieldJet {
                    dim: d,
                    value: f(x),
                    grad: [[0.0; 3]; 3],
                    hess: [[[0.0; 3]; 3]; 3],
                };
                let h = *step;
                let mut xp = [0.0; 3];
                let mut xm = [0.0; 3];
                xp[..d].copy_from_slice(&x[..d]);
                xm[..d].copy_from_slice(&x[..d]);
                for j in 0..d {
                    xp[j] += h;
                    xm[j] -= h;
                    let vp = f(&xp[..d]);
                    let vm = f(&xm[..d]);
                    for i in 0..d {
                        fj.grad[i][j] = (vp[i] - vm[i]) / (2.0 * h);
                    }
                    xp[j] = x[j];
                    xm[j] = x[j];
                }
                fj
            }
        }
    }

    pub fn scaled(&self, s: f64) -> SpatialField {
        let inner = self.clone();
        match &self.kind {
            SpatialKind::Jet(_) => SpatialField::from_jets(self.dim, move |x| {
                let SpatialKind::Jet(f) = &inner.kind else { unreachable!() };
                let v = f(x);
                [v[0] * s, v[1] * s, v[2] * s]
            }),
            SpatialKind::Value { .. } => SpatialField::from_values(self.dim, move |x| {
                let v = inner.value(x);
                [v[0] * s, v[1] * s, v[2] * s]
            }),
        }
    }

    pub fn plus(&self, other: &SpatialField) -> SpatialField {
        let a = self.clone();
        let b = other.clone();
        match (&self.kind, &other.kind) {
            (SpatialKind::Jet(_), SpatialKind::Jet(_)) => SpatialField::from_jets(self.dim, move |x| {
                let (SpatialKind::Jet(fa), SpatialKind::Jet(fb)) = (&a.kind, &b.kind) else {
                    unreachable!()
                };
                let u = fa(x);
                let v = fb(x);
                [u[0] + v[0], u[1] + v[1], u[2] + v[2]]
            }),
            _ => SpatialField::from_values(self.dim, move |x| {
                let u = a.value(x);
                let v = b.value(x);
                [u[0] + v[0], u[1] + v[1], u[2] + v[2]]
            }),
        }
    }

    /// The field x -> div P(self)(x); derivatives of the result fall back
    /// to finite differences (used only in data norms).
    pub fn div_piola_field(&self, lame: &LameParameters) -> SpatialField {
        let inner = self.clone();
        let lame = *lame;
        SpatialField::from_values(self.dim, move |x| inner.eval(x).div_piola(&lame))
    }

    /// Conjugated field x -> R u(R^T x) for an orthogonal R.
    pub fn rotated(&self, rot: [[f64; 3]; 3]) -> SpatialField {
        let inner = self.clone();
        let d = self.dim;
        match &self.kind {
            SpatialKind::Jet(_) => SpatialField::from_jets(d, move |x| {
                let SpatialKind::Jet(f) = &inner.kind else { unreachable!() };
                let mut y = [Jet2::constant(0.0); 3];
                for r in 0..d {
                    for c in 0..d {
                        y[r] = y[r] + x[c] * rot[c][r]; // (R^T x)_r
                    }
                }
                let u = f(&y);
                let mut out = [Jet2::constant(0.0); 3];
                for r in 0..d {
                    for c in 0..d {
                        out[r] = out[r] + u[c] * rot[r][c];
                    }
                }
                out
            }),
            SpatialKind::Value { .. } => SpatialField::from_values(d, move |x| {
                let mut y = [0.0; 3];
                for r in 0..d {
                    for c in 0..d {
                        y[r] += rot[c][r] * x[c];
                    }
                }
                let u = inner.value(&y[..d]);
                let mut out = [0.0; 3];
                for r in 0..d {
                    for c in 0..d {
                        out[r] += rot[r][c] * u[c];
                    }
                }
                out
            }),
        }
    }
}

fn seed(x: &[f64], dim: usize, with_derivs: bool) -> [Jet2; 3] {
    let mut jets = [Jet2::constant(0.0); 3];
    for k in 0..dim {
        jets[k] = if with_derivs { Jet2::var(x[k], k) } else { Jet2::constant(x[k]) };
    }
    jets
}

/// Quintic smoothstep lifted to jets (0 for t<=0, 1 for t>=1, C^2 joins).
pub fn jet_smoothstep5(t: Jet2) -> Jet2 {
    if t.v <= 0.0 {
        Jet2::constant(0.0)
    } else if t.v >= 1.0 {
        Jet2::constant(1.0)
    } else {
        t * t * t * (t * t * 6.0 + t * (-15.0) + 10.0)
    }
}

/// Closed-form time factor with exact derivatives of any order.
#[derive(Debug, Clone, serde::Serialize)]
pub enum TimeFactor {
    /// amp * cos(omega t + phase)
    Cosine { amp: f64, omega: f64, phase: f64 },
    /// sum_k c[k] t^k
    Poly(Vec<f64>),
}

impl TimeFactor {
    pub fn constant(c: f64) -> TimeFactor {
        TimeFactor::Poly(vec![c])
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative_value(t, 0)
    }

    pub fn derivative_value(&self, t: f64, order: usize) -> f64 {
        match self {
            TimeFactor::Cosine { amp, omega, phase } => {
                let shift = (order as f64) * std::f64::consts::FRAC_PI_2;
                amp * omega.powi(order as i32) * (omega * t + phase + shift).cos()
            }
            TimeFactor::Poly(c) => {
                let mut acc = 0.0;
                for (k, &ck) in c.iter().enumerate().skip(order) {
                    let mut fall = 1.0;
                    for j in 0..order {
                        fall *= (k - j) as f64;
                    }
                    acc += ck * fall * t.powi((k - order) as i32);
                }
                acc
            }
        }
    }

    pub fn derivative(&self) -> TimeFactor {
        match self {
            TimeFactor::Cosine { amp, omega, phase } => TimeFactor::Cosine {
                amp: amp * omega,
                omega: *omega,
                phase: phase + std::f64::consts::FRAC_PI_2,
            },
            TimeFactor::Poly(c) => {
                let d: Vec<f64> = c.iter().enumerate().skip(1).map(|(k, &ck)| ck * k as f64).collect();
                TimeFactor::Poly(if d.is_empty() { vec![0.0] } else { d })
            }
        }
    }
}

/// Sum of separable terms  U(x, t) = sum_m X_m(x) tau_m(t).
#[derive(Clone)]
pub struct SeparableField {
    pub dim: usize,
    pub terms: Vec<(SpatialField, TimeFactor)>,
}

impl SeparableField {
    pub fn new(dim: usize) -> Self {
        SeparableField { dim, terms: Vec::new() }
    }

    pub fn single(spatial: SpatialField, tau: TimeFactor) -> Self {
        let dim = spatial.dim;
        SeparableField { dim, terms: vec![(spatial, tau)] }
    }

    pub fn stationary(spatial: SpatialField) -> Self {
        SeparableField::single(spatial, TimeFactor::constant(1.0))
    }

    pub fn push(&mut self, spatial: SpatialField, tau: TimeFactor) {
        self.terms.push((spatial, tau));
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn value(&self, x: &[f64], t: f64) -> [f64; 3] {
        self.dt_value(x, t, 0)
    }

    pub fn dt_value(&self, x: &[f64], t: f64, order: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (xf, tf) in &self.terms {
            let c = tf.derivative_value(t, order);
            if c != 0.0 {
                let v = xf.value(x);
                for k in 0..3 {
                    out[k] += c * v[k];
                }
            }
        }
        out
    }

    /// Spatial jet of the (order-th time derivative of the) field at (x, t).
    pub fn eval(&self, x: &[f64], t: f64, order: usize) -> FieldJet {
        let mut acc = FieldJet {
            dim: self.dim,
            value: [0.0; 3],
            grad: [[0.0; 3]; 3],
            hess: [[[0.0; 3]; 3]; 3],
        };
        for (xf, tf) in &self.terms {
            let c = tf.derivative_value(t, order);
            if c == 0.0 {
                continue;
            }
            let j = xf.eval(x);
            for i in 0..3 {
                acc.value[i] += c * j.value[i];
                for a in 0..3 {
                    acc.grad[i][a] += c * j.grad[i][a];
                    for b in 0..3 {
                        acc.hess[i][a][b] += c * j.hess[i][a][b];
                    }
                }
            }
        }
        acc
    }

    /// Term-wise time derivative of the field.
    pub fn time_derivative(&self) -> SeparableField {
        SeparableField {
            dim: self.dim,
            terms: self.terms.iter().map(|(x, t)| (x.clone(), t.derivative())).collect(),
        }
    }

    /// Manufactured body force F = U_tt - div P(U) for which `self` is the
    /// exact solution of the momentum equation.
    pub fn manufactured_force(&self, lame: &LameParameters) -> SeparableField {
        let mut out = SeparableField::new(self.dim);
        for (x, t) in &self.terms {
            out.push(x.clone(), t.derivative().derivative());
            out.push(x.div_piola_field(lame).scaled(-1.0), t.clone());
        }
        out
    }

    pub fn rotated(&self, rot: [[f64; 3]; 3]) -> SeparableField {
        SeparableField {
            dim: self.dim,
            terms: self.terms.iter().map(|(x, t)| (x.rotated(rot), t.clone())).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// random field generators
// ---------------------------------------------------------------------------

/// Harmonic-polynomial pair (Re, Im) of (x + i y)^k on jets.
fn harmonic_pair(x: Jet2, y: Jet2, k: usize) -> (Jet2, Jet2) {
    let mut re = Jet2::constant(1.0);
    let mut im = Jet2::constant(0.0);
    for _ in 0..k {
        let nre = re * x - im * y;
        let nim = re * y + im * x;
        re = nre;
        im = nim;
    }
    (re, im)
}

/// Random smooth vector field: components are combinations of harmonic
/// polynomials (d=2) or low-degree monomials (d=3) with spectrum decaying
/// like (1+k)^-smoothness.
pub fn random_smooth_field(dim: usize, rng: &mut impl Rng, max_mode: usize, smoothness: f64) -> SpatialField {
    if dim == 2 {
        // coeffs[c][k] = (a, b) multiplying Re/Im (x+iy)^k, scaled to keep
        // magnitudes comparable on the annulus
        let mut coeffs = vec![vec![(0.0f64, 0.0f64); max_mode + 1]; 2];
        for comp in coeffs.iter_mut() {
            for (k, c) in comp.iter_mut().enumerate() {
                let sigma = (1.0 + k as f64).powf(-smoothness) / 2.0f64.powi(k as i32);
                c.0 = sigma * rng.gen_range(-1.0..1.0);
                c.1 = sigma * rng.gen_range(-1.0..1.0);
            }
        }
        SpatialField::from_jets(2, move |xs| {
            let mut out = [Jet2::constant(0.0); 3];
            for (i, comp) in coeffs.iter().enumerate() {
                let mut acc = Jet2::constant(0.0);
                for (k, &(a, b)) in comp.iter().enumerate() {
                    let (re, im) = harmonic_pair(xs[0], xs[1], k);
                    acc = acc + re * a + im * b;
                }
                out[i] = acc;
            }
            out
        })
    } else {
        // monomials x^a y^b z^c with a+b+c <= 3
        let mut monos = Vec::new();
        for a in 0..=3usize {
            for b in 0..=3 - a {
                for c in 0..=3 - a - b {
                    monos.push((a, b, c));
                }
            }
        }
        let mut coeffs = vec![vec![0.0f64; monos.len()]; 3];
        for comp in coeffs.iter_mut() {
            for (m, &(a, b, c)) in monos.iter().enumerate() {
                let deg = (a + b + c) as f64;
                comp[m] = (1.0 + deg).powf(-smoothness) / 2.0f64.powf(deg) * rng.gen_range(-1.0..1.0);
            }
        }
        let monos = Arc::new(monos);
        SpatialField::from_jets(3, move |xs| {
            let mut out = [Jet2::constant(0.0); 3];
            for (i, comp) in coeffs.iter().enumerate() {
                let mut acc = Jet2::constant(0.0);
                for (m, &(a, b, c)) in monos.iter().enumerate() {
                    let term = xs[0].powi(a as i32) * xs[1].powi(b as i32) * xs[2].powi(c as i32);
                    acc = acc + term * comp[m];
                }
                out[i] = acc;
            }
            out
        })
    }
}

/// Field vanishing identically on |x| = r0: (|x|^2 - r0^2)^p times a random
/// smooth factor, summed over p = 1..=powers.
pub fn random_vanishing_on_gamma0(
    dim: usize,
    r0: f64,
    rng: &mut impl Rng,
    max_mode: usize,
    smoothness: f64,
    powers: usize,
) -> SpatialField {
    let factors: Vec<SpatialField> =
        (0..powers).map(|_| random_smooth_field(dim, rng, max_mode, smoothness)).collect();
    combine_with_radial_powers(dim, r0, factors)
}

fn combine_with_radial_powers(dim: usize, r0: f64, factors: Vec<SpatialField>) -> SpatialField {
    let inner: Vec<JetClosure> = factors
        .into_iter()
        .map(|f| match f.kind {
            SpatialKind::Jet(c) => c,
            _ => unreachable!("generator fields are jet-backed"),
        })
        .collect();
    SpatialField::from_jets(dim, move |xs| {
        let mut q = Jet2::constant(-r0 * r0);
        for k in 0..dim {
            q = q + xs[k] * xs[k];
        }
        let mut out = [Jet2::constant(0.0); 3];
        let mut qp = q;
        for f in &inner {
            let w = f(xs);
            for k in 0..3 {
                out[k] = out[k] + qp * w[k];
            }
            qp = qp * q;
        }
        out
    })
}

/// Degree-7 smoothstep on jets (0 for t<=0, 1 for t>=1, C^3 joins);
/// used for cutoffs multiplying manufactured solutions, where the extra
/// smoothness keeps the P2 convergence rate clean.
pub fn jet_smoothstep7(t: Jet2) -> Jet2 {
    if t.v <= 0.0 {
        Jet2::constant(0.0)
    } else if t.v >= 1.0 {
        Jet2::constant(1.0)
    } else {
        t.powi(4) * 35.0 + t.powi(5) * (-84.0) + t.powi(6) * 70.0 + t.powi(7) * (-20.0)
    }
}

/// Multiply a jet field by the radial cutoff that is identically 1 for
/// r <= ra and identically 0 for r >= rb (so tractions vanish on Gamma1).
pub fn with_gamma1_cutoff(field: SpatialField, r0: f64, r1: f64) -> SpatialField {
    let dim = field.dim;
    let SpatialKind::Jet(inner) = field.kind else {
        panic!("cutoff requires a jet-backed field");
    };
    // expressed in r^2 to stay smooth in x
    let ra2 = (r0 + 0.45 * (r1 - r0)).powi(2);
    let rb2 = (r0 + 0.85 * (r1 - r0)).powi(2);
    SpatialField::from_jets(dim, move |xs| {
        let mut q = Jet2::constant(0.0);
        for k in 0..dim {
            q = q + xs[k] * xs[k];
        }
        let t = (q + (-ra2)) * (1.0 / (rb2 - ra2));
        let cut = -jet_smoothstep7(t) + 1.0;
        let w = inner(xs);
        [w[0] * cut, w[1] * cut, w[2] * cut]
    })
}

/// Random ensemble of time factors: cosines with frequencies in
/// [omega_lo, omega_hi] and random phases.
pub fn random_time_factors(rng: &mut impl Rng, n: usize, omega_lo: f64, omega_hi: f64) -> Vec<TimeFactor> {
    (0..n)
        .map(|_| TimeFactor::Cosine {
            amp: rng.gen_range(0.5..1.5),
            omega: rng.gen_range(omega_lo..omega_hi),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// dense analytic quadrature for data norms
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Dense quadrature grid on the annulus r0 < |x| < r1 (d = 2):
/// Gauss-Legendre radially, uniform (spectrally accurate) in angle.
pub struct AnnulusGrid {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl AnnulusGrid {
    pub fn new(r0: f64, r1: f64, nr: usize, ntheta: usize) -> Self {
        let (gx, gw) = gauss_legendre(nr);
        let mut points = Vec::with_capacity(nr * ntheta);
        let mut weights = Vec::with_capacity(nr * ntheta);
        let dtheta = std::f64::consts::TAU / ntheta as f64;
        for i in 0..nr {
            let r = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * gx[i];
            let wr = 0.5 * (r1 - r0) * gw[i];
            for j in 0..ntheta {
                let th = dtheta * j as f64;
                points.push([r * th.cos(), r * th.sin()]);
                weights.push(wr * dtheta * r);
            }
        }
        AnnulusGrid { points, weights }
    }
}

/// Pairwise spatial Gram matrices of a list of fields: L2 inner products
/// of values, gradients and Hessians over the annulus.
pub struct VolumeGrams {
    pub l2: Vec<Vec<f64>>,
    pub h1semi: Vec<Vec<f64>>,
    pub h2semi: Vec<Vec<f64>>,
}

pub fn volume_grams(fields: &[SpatialField], grid: &AnnulusGrid) -> VolumeGrams {
    let m = fields.len();
    let mut l2 = vec![vec![0.0; m]; m];
    let mut h1 = vec![vec![0.0; m]; m];
    let mut h2 = vec![vec![0.0; m]; m];
    let dim = if m > 0 { fields[0].dim } else { 2 };
    for (p, w) in grid.points.iter().zip(&grid.weights) {
        let jets: Vec<FieldJet> = fields.iter().map(|f| f.eval(p)).collect();
        for a in 0..m {
            for b in a..m {
                let (ja, jb) = (&jets[a], &jets[b]);
                let mut v = 0.0;
                let mut g = 0.0;
                let mut hh = 0.0;
                for i in 0..dim {
                    v += ja.value[i] * jb.value[i];
                    for r in 0..dim {
                        g += ja.grad[i][r] * jb.grad[i][r];
                        for s in 0..dim {
                            hh += ja.hess[i][r][s] * jb.hess[i][r][s];
                        }
                    }
                }
                l2[a][b] += w * v;
                h1[a][b] += w * g;
                h2[a][b] += w * hh;
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            l2[a][b] = l2[b][a];
            h1[a][b] = h1[b][a];
            h2[a][b] = h2[b][a];
        }
    }
    VolumeGrams { l2, h1semi: h1, h2semi: h2 }
}

/// Boundary Gram matrices on the circle |x| = r0: L2, first and second
/// tangential-derivative inner products, by dense uniform quadrature.
pub struct BoundaryGrams {
    pub l2: Vec<Vec<f64>>,
    pub h1semi: Vec<Vec<f64>>,
    pub h2semi: Vec<Vec<f64>>,
}

pub fn boundary_grams(fields: &[SpatialField], r0: f64, ntheta: usize) -> BoundaryGrams {
    let m = fields.len();
    let mut l2 = vec![vec![0.0; m]; m];
    let mut h1 = vec![vec![0.0; m]; m];
    let mut h2 = vec![vec![0.0; m]; m];
    let dth = std::f64::consts::TAU / ntheta as f64;
    for j in 0..ntheta {
        let th = dth * j as f64;
        let (c, s) = (th.cos(), th.sin());
        let x = [r0 * c, r0 * s];
        let tangent = [-s, c];
        // d/ds of the tangent along arc length: -x_hat / r0
        let dtan = [-c / r0, -s / r0];
        let w = dth * r0;
        let jets: Vec<FieldJet> = fields.iter().map(|f| f.eval(&x)).collect();
        for a in 0..m {
            for b in a..m {
                let (ja, jb) = (&jets[a], &jets[b]);
                let mut v = 0.0;
                let mut g = 0.0;
                let mut hh = 0.0;
                for i in 0..2 {
                    v += ja.value[i] * jb.value[i];
                    let da: f64 = (0..2).map(|r| ja.grad[i][r] * tangent[r]).sum();
                    let db: f64 = (0..2).map(|r| jb.grad[i][r] * tangent[r]).sum();
                    g += da * db;
                    let dda = second_tangential(ja, i, &tangent, &dtan);
                    let ddb = second_tangential(jb, i, &tangent, &dtan);
                    hh += dda * ddb;
                }
                l2[a][b] += w * v;
                h1[a][b] += w * g;
                h2[a][b] += w * hh;
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            l2[a][b] = l2[b][a];
            h1[a][b] = h1[b][a];
            h2[a][b] = h2[b][a];
        }
    }
    BoundaryGrams { l2, h1semi: h1, h2semi: h2 }
}

/// d^2 u_i / ds^2 along the circle: t.H.t + grad u_i . dt/ds.
fn second_tangential(j: &FieldJet, i: usize, tangent: &[f64; 2], dtan: &[f64; 2]) -> f64 {
    let mut acc = 0.0;
    for r in 0..2 {
        for s in 0..2 {
            acc += tangent[r] * j.hess[i][r][s] * tangent[s];
        }
        acc += j.grad[i][r] * dtan[r];
    }
    acc
}

/// Composite Simpson integral on [0, T].
pub fn simpson(f: impl Fn(f64) -> f64, t1: f64, n_panels: usize) -> f64 {
    let n = n_panels * 2;
    let h = t1 / n as f64;
    let mut acc = f(0.0) + f(t1);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(h * k as f64);
    }
    acc * h / 3.0
}

/// Bochner norms of a separable field against a fixed spatial Gram.
/// `gram[a][b]` must be the inner product of the spatial factors in the
/// chosen spatial norm; `dt_order` differentiates the time factors.
pub struct BochnerCalc<'a> {
    pub taus: Vec<&'a TimeFactor>,
    pub gram: &'a [Vec<f64>],
}

impl<'a> BochnerCalc<'a> {
    pub fn new(field: &'a SeparableField, gram: &'a [Vec<f64>]) -> Self {
        BochnerCalc { taus: field.terms.iter().map(|(_, t)| t).collect(), gram }
    }

    /// || d^j/dt^j U (t) ||_X^2 at one time.
    pub fn norm_sq_at(&self, t: f64, dt_order: usize) -> f64 {
        let m = self.taus.len();
        let vals: Vec<f64> = self.taus.iter().map(|tf| tf.derivative_value(t, dt_order)).collect();
        let mut acc = 0.0;
        for a in 0..m {
            for b in 0..m {
                acc += vals[a] * vals[b] * self.gram[a][b];
            }
        }
        acc.max(0.0)
    }

    pub fn norm_l2_time(&self, t1: f64, dt_order: usize) -> f64 {
        let n = (t1 * 128.0).ceil() as usize + 64;
        simpson(|t| self.norm_sq_at(t, dt_order), t1, n).max(0.0).sqrt()
    }

    pub fn norm_l1_time(&self, t1: f64, dt_order: usize) -> f64 {
        let n = (t1 * 128.0).ceil() as usize + 64;
        simpson(|t| self.norm_sq_at(t, dt_order).sqrt(), t1, n)
    }

    pub fn norm_linf_time(&self, t1: f64, dt_order: usize) -> f64 {
        let n = (t1 * 256.0).ceil() as usize + 128;
        (0..=n)
            .map(|k| self.norm_sq_at(t1 * k as f64 / n as f64, dt_order))
            .fold(0.0f64, f64::max)
            .sqrt()
    }

    /// H^k(0, T; X) norm: sum of L2-in-time norms of derivatives 0..=k.
    pub fn norm_hk_time(&self, t1: f64, k: usize) -> f64 {
        let mut acc = 0.0;
        for j in 0..=k {
            let v = self.norm_l2_time(t1, j);
            acc += v * v;
        }
        acc.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn manufactured_force_of_static_linear_field_vanishes() {
        // U = (x, y) constant in time: U_tt = 0 and div P = 0
        let lame = LameParameters::new(1.0, 1.0).unwrap();
        let u = SeparableField::stationary(SpatialField::from_jets(2, |x| {
            [x[0], x[1], Jet2::constant(0.0)]
        }));
        let f = u.manufactured_force(&lame);
        let v = f.value(&[1.3, 0.4], 0.7);
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn manufactured_force_matches_hand_computation() {
        // U = (x^2, 0) * (1 + t^2): div P(U) = (2(2mu+lambda), 0), U_tt = 2(x^2, 0)
        let lame = LameParameters::new(1.0, 2.0).unwrap();
        let u = SeparableField::single(
            SpatialField::from_jets(2, |x| [x[0] * x[0], Jet2::constant(0.0), Jet2::constant(0.0)]),
            TimeFactor::Poly(vec![1.0, 0.0, 1.0]),
        );
        let f = u.manufactured_force(&lame);
        let x = [1.5, 0.3];
        let t = 0.8;
        let want0 = 2.0 * x[0] * x[0] - (1.0 + t * t) * 2.0 * (2.0 * lame.mu + lame.lambda);
        let got = f.value(&x, t);
        assert!((got[0] - want0).abs() < 1e-9, "{} vs {want0}", got[0]);
        assert!(got[1].abs() < 1e-9);
    }

    #[test]
    fn vanishing_family_is_zero_on_gamma0() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let f = random_vanishing_on_gamma0(2, 1.0, &mut rng, 4, 1.5, 2);
        for k in 0..50 {
            let th = 0.13 * k as f64;
            let v = f.value(&[th.cos(), th.sin()]);
            assert!(v[0].abs() < 1e-13 && v[1].abs() < 1e-13);
        }
        // and not identically zero inside
        let v = f.value(&[1.5, 0.2]);
        assert!(v[0].abs() + v[1].abs() > 1e-8);
    }

    #[test]
    fn cutoff_kills_field_near_gamma1() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let base = random_smooth_field(2, &mut rng, 3, 1.0);
        let f = with_gamma1_cutoff(base, 1.0, 2.0);
        for k in 0..20 {
            let th = 0.3 * k as f64;
            for r in [1.9, 1.95, 2.0] {
                let j = f.eval(&[r * th.cos(), r * th.sin()]);
                assert!(j.value[0].abs() < 1e-14 && j.value[1].abs() < 1e-14);
                assert!(j.grad[0][0].abs() < 1e-13 && j.grad[1][1].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        // degree 15 exactness: check t^14 over [-1,1] = 2/15
        let q: f64 = x.iter().zip(&w).map(|(t, w)| w * t.powi(14)).sum();
        assert!((q - 2.0 / 15.0).abs() < 1e-13);
        let q: f64 = x.iter().zip(&w).map(|(t, w)| w * t.powi(3)).sum();
        assert!(q.abs() < 1e-14);
    }

    #[test]
    fn annulus_grid_measures_area() {
        let g = AnnulusGrid::new(1.0, 2.0, 24, 96);
        let area: f64 = g.weights.iter().sum();
        let exact = std::f64::consts::PI * 3.0;
        assert!((area - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn volume_gram_of_unit_field() {
        let f = SpatialField::from_jets(2, |_| {
            [Jet2::constant(1.0), Jet2::constant(0.0), Jet2::constant(0.0)]
        });
        let grid = AnnulusGrid::new(1.0, 2.0, 16, 64);
        let g = volume_grams(&[f], &grid);
        let area = std::f64::consts::PI * 3.0;
        assert!((g.l2[0][0] - area).abs() < 1e-10);
        assert!(g.h1semi[0][0].abs() < 1e-12);
    }

    #[test]
    fn boundary_gram_of_fourier_mode() {
        // g = cos(2 theta) e_x on the unit circle: ||g||^2 = pi, ||dg/ds||^2 = 4 pi
        let f = SpatialField::from_jets(2, |x| {
            let (re, _) = super::harmonic_pair(x[0], x[1], 2);
            // on r=1, Re (x+iy)^2 = cos 2theta
            [re, Jet2::constant(0.0), Jet2::constant(0.0)]
        });
        let g = boundary_grams(&[f], 1.0, 512);
        assert!((g.l2[0][0] - std::f64::consts::PI).abs() < 1e-10);
        assert!((g.h1semi[0][0] - 4.0 * std::f64::consts::PI).abs() < 1e-9);
        assert!((g.h2semi[0][0] - 16.0 * std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn bochner_norms_of_constant_in_time() {
        let f = SeparableField::single(
            SpatialField::from_jets(2, |_| {
                [Jet2::constant(1.0), Jet2::constant(0.0), Jet2::constant(0.0)]
            }),
            TimeFactor::constant(1.0),
        );
        let gram = vec![vec![4.0]]; // pretend ||X||^2 = 4
        let b = BochnerCalc::new(&f, &gram);
        let t1 = 2.0;
        assert!((b.norm_l2_time(t1, 0) - 2.0 * t1.sqrt()).abs() < 1e-10);
        assert!((b.norm_l1_time(t1, 0) - 2.0 * t1).abs() < 1e-10);
        assert!((b.norm_linf_time(t1, 0) - 2.0).abs() < 1e-12);
        assert!(b.norm_l2_time(t1, 1).abs() < 1e-12);
    }

    #[test]
    fn rotation_conjugation_preserves_values() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let f = random_smooth_field(2, &mut rng, 3, 1.0);
        let th = 0.7f64;
        let rot = [
            [th.cos(), -th.sin(), 0.0],
            [th.sin(), th.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ];
        let fr = f.rotated(rot);
        // fr(R x) = R f(x)
        let x = [1.4, 0.3];
        let rx = [rot[0][0] * x[0] + rot[0][1] * x[1], rot[1][0] * x[0] + rot[1][1] * x[1]];
        let v = f.value(&x);
        let vr = fr.value(&rx);
        let want = [rot[0][0] * v[0] + rot[0][1] * v[1], rot[1][0] * v[0] + rot[1][1] * v[1]];
        assert!((vr[0] - want[0]).abs() < 1e-12 && (vr[1] - want[1]).abs() < 1e-12);
    }

    #[test]
    fn time_factor_derivatives() {
        let c = TimeFactor::Cosine { amp: 2.0, omega: 3.0, phase: 0.5 };
        let t = 0.7;
        assert!((c.derivative().value(t) - c.derivative_value(t, 1)).abs() < 1e-13);
        assert!((c.derivative_value(t, 1) + 6.0 * (3.0 * t + 0.5).sin()).abs() < 1e-13);
        let p = TimeFactor::Poly(vec![1.0, 2.0, 3.0]);
        assert!((p.derivative_value(t, 1) - (2.0 + 6.0 * t)).abs() < 1e-14);
        assert!((p.derivative_value(t, 2) - 6.0).abs() < 1e-14);
        assert!(p.derivative_value(t, 3).abs() < 1e-14);
    }
}
