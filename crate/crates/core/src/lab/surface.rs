use crate::error::{Error, Result};
use crate::geom::UnitVector3;
use crate::jet::{monomial_exponents, monomial_index, n_coeffs, normal_from_gradient, JetCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Plane,
    Sphere,
    MongePoly,
    MongeTrig,
}

/// A height function `z = f(x, y)` over the parameter plane with `f(0, 0) = 0`.
/// The query point of every sampled patch is the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticSurface {
    /// `z = gx x + gy y`.
    Plane { gx: f64, gy: f64 },
    /// Lower cap of the sphere of radius `radius` centered at `(0, 0, radius)`,
    /// so the origin is the pole with normal +z.
    Sphere { radius: f64 },
    /// `z = sum c_{p,q} x^p y^q` with a zero constant term.
    MongePoly { coeffs: JetCoefficients },
    /// `z = a [sin(w (x + x0)) cos(w (y + y0)) - sin(w x0) cos(w y0)]`: the
    /// surface `a sin(wx) cos(wy)` seen from the query point `(x0, y0)`.
    MongeTrig { amplitude: f64, freq: f64, x0: f64, y0: f64 },
}

impl AnalyticSurface {
    /// `sin(x) cos(y)` around `(0.7, 0.4)`, a point where every Taylor
    /// coefficient up to degree 5 is nonzero.
    pub fn sin_cos() -> Self {
        AnalyticSurface::MongeTrig { amplitude: 1.0, freq: 1.0, x0: 0.7, y0: 0.4 }
    }

    /// `sin(x) cos(y)` around `(pi/2, 0)`, a critical point (normal +z).
    pub fn sin_cos_crest() -> Self {
        AnalyticSurface::MongeTrig {
            amplitude: 1.0,
            freq: 1.0,
            x0: std::f64::consts::FRAC_PI_2,
            y0: 0.0,
        }
    }

    pub fn monge_poly(coeffs: JetCoefficients) -> Result<Self> {
        if coeffs.get(0, 0) != 0.0 {
            return Err(Error::InvalidArgument("polynomial surface needs zero constant term".into()));
        }
        Ok(AnalyticSurface::MongePoly { coeffs })
    }

    pub fn kind(&self) -> SurfaceKind {
        match self {
            AnalyticSurface::Plane { .. } => SurfaceKind::Plane,
            AnalyticSurface::Sphere { .. } => SurfaceKind::Sphere,
            AnalyticSurface::MongePoly { .. } => SurfaceKind::MongePoly,
            AnalyticSurface::MongeTrig { .. } => SurfaceKind::MongeTrig,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind() {
            SurfaceKind::Plane => "plane",
            SurfaceKind::Sphere => "sphere",
            SurfaceKind::MongePoly => "monge_poly",
            SurfaceKind::MongeTrig => "monge_trig",
        }
    }

    /// Checks that a disk of radius `h` around the query is inside the domain.
    pub fn check_window(&self, h: f64) -> Result<()> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!("patch radius must be > 0, got {h}")));
        }
        if let AnalyticSurface::Sphere { radius } = self {
            if h >= *radius {
                return Err(Error::InvalidArgument(format!(
                    "patch radius {h} must be below sphere radius {radius}"
                )));
            }
        }
        Ok(())
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self {
            AnalyticSurface::Plane { gx, gy } => gx * x + gy * y,
            AnalyticSurface::Sphere { radius } => {
                let r = *radius;
                let rho2 = x * x + y * y;
                // r - sqrt(r^2 - rho^2), written to avoid cancellation near the pole.
                rho2 / (r + (r * r - rho2).sqrt())
            }
            AnalyticSurface::MongePoly { coeffs } => coeffs.eval(x, y),
            AnalyticSurface::MongeTrig { amplitude, freq, x0, y0 } => {
                let w = *freq;
                amplitude * ((w * (x + x0)).sin() * (w * (y + y0)).cos() - (w * x0).sin() * (w * y0).cos())
            }
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            AnalyticSurface::Plane { gx, gy } => (*gx, *gy),
            AnalyticSurface::Sphere { radius } => {
                let s = (radius * radius - x * x - y * y).sqrt();
                (x / s, y / s)
            }
            AnalyticSurface::MongePoly { coeffs } => {
                let (mut gx, mut gy) = (0.0, 0.0);
                for (&(px, py), c) in monomial_exponents(coeffs.order()).iter().zip(coeffs.as_slice()) {
                    if px > 0 {
                        gx += c * px as f64 * x.powi(px as i32 - 1) * y.powi(py as i32);
                    }
                    if py > 0 {
                        gy += c * py as f64 * x.powi(px as i32) * y.powi(py as i32 - 1);
                    }
                }
                (gx, gy)
            }
            AnalyticSurface::MongeTrig { amplitude, freq, x0, y0 } => {
                let w = *freq;
                let (u, v) = (w * (x + x0), w * (y + y0));
                (amplitude * w * u.cos() * v.cos(), -amplitude * w * u.sin() * v.sin())
            }
        }
    }

    pub fn normal(&self, x: f64, y: f64) -> UnitVector3 {
        let (gx, gy) = self.gradient(x, y);
        normal_from_gradient(gx, gy)
    }

    /// Taylor coefficients of `f` at the origin, up to total degree `order`.
    pub fn taylor(&self, order: usize) -> Result<JetCoefficients> {
        let mut c = vec![0.0; n_coeffs(order)];
        match self {
            AnalyticSurface::Plane { gx, gy } => {
                c[monomial_index(1, 0)] = *gx;
                c[monomial_index(0, 1)] = *gy;
            }
            AnalyticSurface::Sphere { radius } => {
                // f = -R sum_{k>=1} binom(1/2, k) (-s)^k, s = (x^2 + y^2) / R^2.
                let r = *radius;
                let mut binom = 1.0; // binom(1/2, k)
                for k in 1..=order / 2 {
                    binom *= (0.5 - (k - 1) as f64) / k as f64;
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let scale = -r * binom * sign / r.powi(2 * k as i32);
                    let mut pascal = 1.0; // binom(k, i)
                    for i in 0..=k {
                        if i > 0 {
                            pascal *= (k - i + 1) as f64 / i as f64;
                        }
                        c[monomial_index(2 * i, 2 * (k - i))] += scale * pascal;
                    }
                }
            }
            AnalyticSurface::MongePoly { coeffs } => {
                for (&(px, py), v) in monomial_exponents(coeffs.order()).iter().zip(coeffs.as_slice()) {
                    if (px + py) as usize <= order {
                        c[monomial_index(px as usize, py as usize)] = *v;
                    }
                }
            }
            AnalyticSurface::MongeTrig { amplitude, freq, x0, y0 } => {
                let w = *freq;
                let phase = std::f64::consts::FRAC_PI_2;
                for (i, &(px, py)) in monomial_exponents(order).iter().enumerate() {
                    if px + py == 0 {
                        continue;
                    }
                    let dx = w.powi(px as i32) * (w * x0 + px as f64 * phase).sin();
                    let dy = w.powi(py as i32) * (w * y0 + py as f64 * phase).cos();
                    c[i] = amplitude * dx * dy / (factorial(px) * factorial(py));
                }
            }
        }
        JetCoefficients::new(order, c)
    }

    /// Total degree if the surface is a polynomial.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match self {
            AnalyticSurface::Plane { .. } => Some(1),
            AnalyticSurface::MongePoly { coeffs } => {
                let exps = monomial_exponents(coeffs.order());
                Some(
                    exps.iter()
                        .zip(coeffs.as_slice())
                        .filter(|(_, c)| **c != 0.0)
                        .map(|(&(px, py), _)| (px + py) as usize)
                        .max()
                        .unwrap_or(0),
                )
            }
            _ => None,
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}
