//! Forward-mode automatic differentiation.
//!
//! `Jet2` carries value, gradient and Hessian with respect to up to
//! [`MAX_VARS`] independent variables; analytic test fields evaluate their
//! derivatives through it exactly (up to roundoff), so identity checks do
//! not see discretization error. `Taylor` carries a 1-D truncated Taylor
//! series and supplies high-order time derivatives for the interpolation
//! experiments.

pub const MAX_VARS: usize = 4;

/// Value + gradient + Hessian truncation of a scalar quantity.
///
/// The number of active variables is fixed per expression tree by the
/// seeding calls; slots beyond it stay zero and cost little.
#[derive(Debug, Clone, Copy)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; MAX_VARS],
    pub h: [[f64; MAX_VARS]; MAX_VARS],
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Jet2 { v, g: [0.0; MAX_VARS], h: [[0.0; MAX_VARS]; MAX_VARS] }
    }

    /// Independent variable number `i` with value `v`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut j = Jet2::constant(v);
        j.g[i] = 1.0;
        j
    }

    pub fn powi(self, n: i32) -> Self {
        match n {
            0 => Jet2::constant(1.0),
            1 => self,
            _ => {
                let f = self.v.powi(n - 2);
                let fp = (n as f64) * f * self.v;
                let fpp = (n as f64) * ((n - 1) as f64) * f;
                self.compose(f * self.v * self.v, fp, fpp)
            }
        }
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.compose(r, 0.5 / r, -0.25 / (r * r * r))
    }

    pub fn sin(self) -> Self {
        self.compose(self.v.sin(), self.v.cos(), -self.v.sin())
    }

    pub fn cos(self) -> Self {
        self.compose(self.v.cos(), -self.v.sin(), -self.v.cos())
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose(e, e, e)
    }

    /// Chain rule for a scalar function with the given value and first two
    /// derivatives at `self.v`.
    fn compose(self, f: f64, fp: f64, fpp: f64) -> Self {
        let mut out = Jet2::constant(f);
        for a in 0..MAX_VARS {
            out.g[a] = fp * self.g[a];
        }
        for a in 0..MAX_VARS {
            for b in 0..MAX_VARS {
                out.h[a][b] = fpp * self.g[a] * self.g[b] + fp * self.h[a][b];
            }
        }
        out
    }
}

impl std::ops::Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut r = self;
        r.v += o.v;
        for a in 0..MAX_VARS {
            r.g[a] += o.g[a];
            for b in 0..MAX_VARS {
                r.h[a][b] += o.h[a][b];
            }
        }
        r
    }
}

impl std::ops::Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        let mut r = self;
        r.v -= o.v;
        for a in 0..MAX_VARS {
            r.g[a] -= o.g[a];
            for b in 0..MAX_VARS {
                r.h[a][b] -= o.h[a][b];
            }
        }
        r
    }
}

impl std::ops::Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        let mut r = self;
        r.v = -r.v;
        for a in 0..MAX_VARS {
            r.g[a] = -r.g[a];
            for b in 0..MAX_VARS {
                r.h[a][b] = -r.h[a][b];
            }
        }
        r
    }
}

impl std::ops::Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let mut r = Jet2::constant(self.v * o.v);
        for a in 0..MAX_VARS {
            r.g[a] = self.g[a] * o.v + self.v * o.g[a];
        }
        for a in 0..MAX_VARS {
            for b in 0..MAX_VARS {
                r.h[a][b] = self.h[a][b] * o.v
                    + self.g[a] * o.g[b]
                    + self.g[b] * o.g[a]
                    + self.v * o.h[a][b];
            }
        }
        r
    }
}

impl std::ops::Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, s: f64) -> Jet2 {
        let mut r = self;
        r.v *= s;
        for a in 0..MAX_VARS {
            r.g[a] *= s;
            for b in 0..MAX_VARS {
                r.h[a][b] *= s;
            }
        }
        r
    }
}

impl std::ops::Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(self, s: f64) -> Jet2 {
        let mut r = self;
        r.v += s;
        r
    }
}

/// Degree-capped 1-D Taylor series a_0 + a_1 t + ... + a_N t^N around the
/// expansion point; coefficient k equals f^(k)/k!.
#[derive(Debug, Clone)]
pub struct Taylor {
    pub c: Vec<f64>,
}

impl Taylor {
    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Taylor { c }
    }

    /// The variable t evaluated at `t0`.
    pub fn var(t0: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = t0;
        if order >= 1 {
            c[1] = 1.0;
        }
        Taylor { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// k-th derivative value (k! * coefficient k).
    pub fn derivative(&self, k: usize) -> f64 {
        if k >= self.c.len() {
            return 0.0;
        }
        let mut fact = 1.0;
        for i in 1..=k {
            fact *= i as f64;
        }
        self.c[k] * fact
    }

    pub fn add(&self, o: &Taylor) -> Taylor {
        let n = self.c.len().max(o.c.len());
        let mut c = vec![0.0; n];
        for (i, v) in self.c.iter().enumerate() {
            c[i] += v;
        }
        for (i, v) in o.c.iter().enumerate() {
            c[i] += v;
        }
        Taylor { c }
    }

    pub fn scale(&self, s: f64) -> Taylor {
        Taylor { c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn mul(&self, o: &Taylor) -> Taylor {
        let n = self.order().max(o.order());
        let mut c = vec![0.0; n + 1];
        for i in 0..self.c.len() {
            for j in 0..o.c.len() {
                if i + j <= n {
                    c[i + j] += self.c[i] * o.c[j];
                }
            }
        }
        Taylor { c }
    }

    pub fn powi(&self, p: usize) -> Taylor {
        let mut r = Taylor::constant(1.0, self.order());
        for _ in 0..p {
            r = r.mul(self);
        }
        r
    }

    /// sin and cos of the series, by the standard coupled recurrence.
    pub fn sin_cos(&self) -> (Taylor, Taylor) {
        let n = self.order();
        let mut s = vec![0.0; n + 1];
        let mut c = vec![0.0; n + 1];
        s[0] = self.c[0].sin();
        c[0] = self.c[0].cos();
        for k in 1..=n {
            let mut sa = 0.0;
            let mut ca = 0.0;
            for j in 1..=k {
                let uj = (j as f64) * self.c[j];
                sa += uj * c[k - j];
                ca += uj * s[k - j];
            }
            s[k] = sa / (k as f64);
            c[k] = -ca / (k as f64);
        }
        (Taylor { c: s }, Taylor { c })
    }
}
