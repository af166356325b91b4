//! Log-concave probability densities, weighted quadrature on masked
//! grids, marginals, and the one-dimensional tail inequality.
//!
//! All densities are normalized to unit mass. Unbounded supports are
//! truncated at the radius where the remaining tail mass drops below
//! `truncation_mass` (default 1e-10); the radius is stored and reported
//! with run records. Quadrature reductions use a fixed-shape pairwise
//! tree sum, so results are bit-stable across thread counts.

use crate::convex::ConvexBody;
use crate::field::{Grid, ScalarField};
use crate::linalg::pairwise_sum;
use crate::vec3::{self, Point};
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_TRUNCATION_MASS: f64 = 1e-10;
/// Slack added to the right side of the tail inequality.
pub const TAIL_BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("grid too coarse: {cells} cells across bbox, need at least 16")]
    GridTooCoarse { cells: usize },
    #[error("slice quadrature non-convergent: marginal mass {mass} deviates from 1")]
    NonConvergent { mass: f64 },
    #[error("marginal is not symmetric (max asymmetry {asymmetry:.3e})")]
    AsymmetricMarginal { asymmetry: f64 },
    #[error("invalid density parameter: {0}")]
    InvalidParameter(String),
}

/// One-dimensional symmetric log-concave factor for product densities.
#[derive(Debug, Clone, Copy)]
pub enum Factor1d {
    Gauss { sigma: f64 },
    /// `w(s) = (rate/2) exp(-rate |s|)`; log-concave but not strictly.
    Laplace { rate: f64 },
    Uniform { half_width: f64 },
}

impl Factor1d {
    pub fn potential(&self, s: f64) -> f64 {
        match *self {
            Factor1d::Gauss { sigma } => s * s / (2.0 * sigma * sigma),
            Factor1d::Laplace { rate } => rate * s.abs(),
            Factor1d::Uniform { half_width } => {
                if s.abs() <= half_width {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn z(&self) -> f64 {
        match *self {
            Factor1d::Gauss { sigma } => (2.0 * std::f64::consts::PI).sqrt() * sigma,
            Factor1d::Laplace { rate } => 2.0 / rate,
            Factor1d::Uniform { half_width } => 2.0 * half_width,
        }
    }

    pub fn grad(&self, s: f64) -> f64 {
        match *self {
            Factor1d::Gauss { sigma } => s / (sigma * sigma),
            Factor1d::Laplace { rate } => {
                if s == 0.0 {
                    0.0
                } else {
                    rate * s.signum()
                }
            }
            Factor1d::Uniform { .. } => 0.0,
        }
    }

    pub fn hess(&self, _s: f64) -> f64 {
        match *self {
            Factor1d::Gauss { sigma } => 1.0 / (sigma * sigma),
            Factor1d::Laplace { .. } | Factor1d::Uniform { .. } => 0.0,
        }
    }

    pub fn truncation_radius(&self, tail_mass: f64) -> f64 {
        match *self {
            // One-sided tail of a centered gaussian is below exp(-R^2/2s^2)/2.
            Factor1d::Gauss { sigma } => sigma * (2.0 * (1.0 / tail_mass).ln()).sqrt(),
            Factor1d::Laplace { rate } => (1.0 / (2.0 * tail_mass)).ln() / rate,
            Factor1d::Uniform { half_width } => half_width,
        }
    }
}

#[derive(Debug, Clone)]
pub enum DensityKind {
    Uniform(ConvexBody),
    Gaussian { sigma: f64 },
    PowerExp { beta: f64, scale: f64 },
    Product1d(Vec<Factor1d>),
    Custom { grid: Arc<Grid>, potential: Vec<f64> },
}

/// Normalized weight `w = e^{-V} / Z` with analytic `V`, gradient, and
/// Hessian for the built-in kinds.
#[derive(Debug, Clone)]
pub struct Density {
    pub dim: usize,
    pub kind: DensityKind,
    z: f64,
    pub truncation_mass: f64,
    pub truncation_radius: f64,
    pub symmetric: bool,
}

impl Density {
    pub fn uniform(body: ConvexBody) -> Self {
        let z = body.volume();
        let radius = {
            let e = body.bbox;
            let corners = [e.lo, e.hi];
            let mut r: f64 = 0.0;
            for c in corners {
                r = r.max(vec3::norm(c));
            }
            r
        };
        Density {
            dim: body.dim,
            symmetric: body.symmetric,
            kind: DensityKind::Uniform(body),
            z,
            truncation_mass: 0.0,
            truncation_radius: radius,
        }
    }

    pub fn gaussian(dim: usize, sigma: f64) -> Self {
        Self::gaussian_truncated(dim, sigma, DEFAULT_TRUNCATION_MASS)
    }

    pub fn gaussian_truncated(dim: usize, sigma: f64, truncation_mass: f64) -> Self {
        // In 2D the radial tail is exactly exp(-R^2 / 2 sigma^2); in 3D this
        // radius is still conservative within a factor close to one.
        let radius = sigma * (2.0 * (1.0 / truncation_mass).ln()).sqrt();
        Density {
            dim,
            kind: DensityKind::Gaussian { sigma },
            z: (2.0 * std::f64::consts::PI * sigma * sigma).powf(dim as f64 / 2.0),
            truncation_mass,
            truncation_radius: radius,
            symmetric: true,
        }
    }

    /// `V = (|x|/scale)^beta` with `beta > 1`.
    ///
    /// `beta` in `[1, 2)` is the regime where bounded minimizers are known
    /// to occur; `beta = 1` itself is excluded so `V` stays strictly
    /// convex away from the origin.
    pub fn power_exp(dim: usize, beta: f64, scale: f64) -> Result<Self, MeasureError> {
        if !(beta > 1.0) {
            return Err(MeasureError::InvalidParameter(format!(
                "power_exp beta must be > 1, got {beta}"
            )));
        }
        let z = match dim {
            2 => 2.0 * std::f64::consts::PI * scale * scale * gamma_fn(2.0 / beta) / beta,
            3 => 4.0 * std::f64::consts::PI * scale.powi(3) * gamma_fn(3.0 / beta) / beta,
            _ => unreachable!(),
        };
        // Bisection for the radius with tail mass below target.
        let mass = DEFAULT_TRUNCATION_MASS;
        let radial = |r: f64| r.powi(dim as i32 - 1) * (-(r / scale).powf(beta)).exp();
        let tail = |r0: f64| simpson(&radial, r0, r0 + 80.0 * scale, 8000);
        let total = simpson(&radial, 0.0, 80.0 * scale, 16000);
        let mut lo = 0.0;
        let mut hi = 80.0 * scale;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if tail(mid) / total > mass {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Density {
            dim,
            kind: DensityKind::PowerExp { beta, scale },
            z,
            truncation_mass: mass,
            truncation_radius: hi,
            symmetric: true,
        })
    }

    pub fn product(factors: Vec<Factor1d>) -> Self {
        let dim = factors.len();
        assert!(dim == 2 || dim == 3);
        let z = factors.iter().map(|f| f.z()).product();
        let radius = factors
            .iter()
            .map(|f| f.truncation_radius(DEFAULT_TRUNCATION_MASS))
            .fold(0.0, f64::max);
        Density {
            dim,
            kind: DensityKind::Product1d(factors),
            z,
            truncation_mass: DEFAULT_TRUNCATION_MASS,
            truncation_radius: radius,
            symmetric: true,
        }
    }

    /// Density from a sampled potential on a grid. Normalization and a
    /// sampled symmetry check happen here; convexity is the caller's
    /// responsibility (see [`Density::convexity_residual`]).
    pub fn custom(grid: Arc<Grid>, potential: Vec<f64>) -> Self {
        assert_eq!(potential.len(), grid.cell_count());
        let hn = grid.h.powi(grid.dim as i32);
        let contributions: Vec<f64> = (0..grid.cell_count())
            .map(|i| grid.mask[i] * (-potential[i]).exp() * hn)
            .collect();
        let z = pairwise_sum(&contributions);
        let dim = grid.dim;
        let mut symmetric = true;
        for k in 0..64 {
            let t = k as f64 / 64.0;
            let p = [
                grid.origin[0] + t * (grid.extent()[0]),
                grid.origin[1] + (1.0 - t) * (grid.extent()[1]),
                0.0,
            ];
            let q = vec3::scale(p, -1.0);
            let field = ScalarField {
                grid: grid.clone(),
                values: potential.clone(),
            };
            if (field.sample(p) - field.sample(q)).abs() > 1e-6 {
                symmetric = false;
                break;
            }
        }
        let radius = grid
            .extent()
            .iter()
            .take(dim)
            .fold(0.0f64, |a, &b| a.max(b));
        Density {
            dim,
            kind: DensityKind::Custom { grid, potential },
            z,
            truncation_mass: 0.0,
            truncation_radius: radius,
            symmetric,
        }
    }

    pub fn normalization(&self) -> f64 {
        self.z
    }

    pub fn potential(&self, x: Point) -> f64 {
        match &self.kind {
            DensityKind::Uniform(body) => {
                if body.halfspaces.iter().all(|h| h.contains(x)) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            DensityKind::Gaussian { sigma } => vec3::dot(x, x) / (2.0 * sigma * sigma),
            DensityKind::PowerExp { beta, scale } => (vec3::norm(x) / scale).powf(*beta),
            DensityKind::Product1d(fs) => {
                let mut acc = 0.0;
                for (d, f) in fs.iter().enumerate() {
                    acc += f.potential(x[d]);
                    if !acc.is_finite() {
                        return f64::INFINITY;
                    }
                }
                acc
            }
            DensityKind::Custom { grid, potential } => {
                if !grid.in_bounds(x) {
                    return f64::INFINITY;
                }
                let field = ScalarField {
                    grid: grid.clone(),
                    values: potential.clone(),
                };
                field.sample(x)
            }
        }
    }

    pub fn grad_potential(&self, x: Point) -> Point {
        match &self.kind {
            DensityKind::Uniform(_) => vec3::ORIGIN,
            DensityKind::Gaussian { sigma } => vec3::scale(x, 1.0 / (sigma * sigma)),
            DensityKind::PowerExp { beta, scale } => {
                let r = vec3::norm(x);
                if r < 1e-300 {
                    return vec3::ORIGIN;
                }
                vec3::scale(x, beta * r.powf(beta - 2.0) / scale.powf(*beta))
            }
            DensityKind::Product1d(fs) => {
                let mut g = vec3::ORIGIN;
                for (d, f) in fs.iter().enumerate() {
                    g[d] = f.grad(x[d]);
                }
                g
            }
            DensityKind::Custom { grid, potential } => {
                let field = ScalarField {
                    grid: grid.clone(),
                    values: potential.clone(),
                };
                field.sample_gradient(x)
            }
        }
    }

    /// Quadratic form of the Hessian, `nu' (Hess V) nu`.
    pub fn hess_potential_nn(&self, x: Point, nu: Point) -> f64 {
        match &self.kind {
            DensityKind::Uniform(_) => 0.0,
            DensityKind::Gaussian { sigma } => vec3::dot(nu, nu) / (sigma * sigma),
            DensityKind::PowerExp { beta, scale } => {
                let r = vec3::norm(x);
                if r < 1e-300 {
                    return 0.0;
                }
                let xu = vec3::scale(x, 1.0 / r);
                let c = vec3::dot(xu, nu);
                beta * r.powf(beta - 2.0) / scale.powf(*beta)
                    * (vec3::dot(nu, nu) + (beta - 2.0) * c * c)
            }
            DensityKind::Product1d(fs) => {
                let mut acc = 0.0;
                for (d, f) in fs.iter().enumerate() {
                    acc += f.hess(x[d]) * nu[d] * nu[d];
                }
                acc
            }
            DensityKind::Custom { .. } => {
                // Central second difference along nu.
                let h = 1e-4;
                let vp = self.potential(vec3::add(x, vec3::scale(nu, h)));
                let vm = self.potential(vec3::sub(x, vec3::scale(nu, h)));
                let v0 = self.potential(x);
                if vp.is_finite() && vm.is_finite() && v0.is_finite() {
                    (vp - 2.0 * v0 + vm) / (h * h)
                } else {
                    0.0
                }
            }
        }
    }

    /// Normalized weight `e^{-V(x)} / Z`; zero where `V` is infinite.
    pub fn eval(&self, x: Point) -> f64 {
        let v = self.potential(x);
        if v.is_finite() {
            (-v).exp() / self.z
        } else {
            0.0
        }
    }

    /// Weight used with masked quadrature: for uniform densities the mask
    /// already carries the geometry, so the bulk value applies on every
    /// masked cell regardless of where its center falls.
    pub fn weight_in_support(&self, x: Point) -> f64 {
        match &self.kind {
            DensityKind::Uniform(_) => 1.0 / self.z,
            _ => self.eval(x),
        }
    }

    /// Worst violation of midpoint convexity of `V` over random segment
    /// samples inside the truncation box. Nonpositive up to roundoff for
    /// a convex potential.
    pub fn convexity_residual(&self, seed: u64, samples: usize) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = self.truncation_radius;
        let mut worst = f64::NEG_INFINITY;
        let mut tested = 0;
        while tested < samples {
            let mut p = vec3::ORIGIN;
            let mut q = vec3::ORIGIN;
            for d in 0..self.dim {
                p[d] = rng.gen_range(-r..r);
                q[d] = rng.gen_range(-r..r);
            }
            let vp = self.potential(p);
            let vq = self.potential(q);
            let vm = self.potential(vec3::scale(vec3::add(p, q), 0.5));
            if vp.is_finite() && vq.is_finite() && vm.is_finite() {
                worst = worst.max(vm - 0.5 * (vp + vq));
                tested += 1;
            }
        }
        worst
    }
}

/// Pointwise membership test used by quadrature.
pub trait Region: Sync {
    fn inside(&self, x: Point) -> bool;
}

impl<F: Fn(Point) -> bool + Sync> Region for F {
    fn inside(&self, x: Point) -> bool {
        self(x)
    }
}

/// `{f > 0}` for a scalar field, by bilinear sampling.
pub struct FieldRegion<'a>(pub &'a ScalarField);

impl Region for FieldRegion<'_> {
    fn inside(&self, x: Point) -> bool {
        self.0.sample(x) > 0.0
    }
}

pub struct WholeSpace;

impl Region for WholeSpace {
    fn inside(&self, _x: Point) -> bool {
        true
    }
}

/// Weighted mass of a region by the masked midpoint rule. Cells whose
/// corners disagree about membership are refined with 4^n subsamples.
pub fn measure(d: &Density, region: &dyn Region, grid: &Grid) -> Result<f64, MeasureError> {
    let min_cells = (0..grid.dim).map(|a| grid.shape[a]).min().unwrap_or(0);
    if min_cells < 16 {
        return Err(MeasureError::GridTooCoarse { cells: min_cells });
    }
    let hn = grid.h.powi(grid.dim as i32);
    let contributions: Vec<f64> = (0..grid.cell_count())
        .into_par_iter()
        .map(|i| {
            let m = grid.mask[i];
            if m == 0.0 {
                return 0.0;
            }
            let c = grid.cell_center(i);
            let frac = cell_fraction(region, grid, c);
            if frac == 0.0 {
                return 0.0;
            }
            m * frac * d.weight_in_support(c) * hn
        })
        .collect();
    Ok(pairwise_sum(&contributions))
}

/// Fraction of the cell centered at `c` inside the region: corner
/// classification first, refined by subsampling only when mixed.
pub fn cell_fraction(region: &dyn Region, grid: &Grid, c: Point) -> f64 {
    let h2 = grid.h / 2.0;
    let mut all_in = true;
    let mut all_out = true;
    let corners = 1usize << grid.dim;
    for k in 0..corners {
        let mut p = c;
        for d in 0..grid.dim {
            p[d] += if k >> d & 1 == 1 { h2 } else { -h2 };
        }
        if region.inside(p) {
            all_out = false;
        } else {
            all_in = false;
        }
    }
    if all_in {
        return 1.0;
    }
    if all_out && !region.inside(c) {
        return 0.0;
    }
    // 4^n subsamples at subcell midpoints.
    let per_axis = 4usize;
    let mut count = 0usize;
    let total = per_axis.pow(grid.dim as u32);
    for k in 0..total {
        let mut kk = k;
        let mut p = c;
        for d in 0..grid.dim {
            let j = kk % per_axis;
            kk /= per_axis;
            p[d] += -h2 + grid.h * (j as f64 + 0.5) / per_axis as f64;
        }
        if region.inside(p) {
            count += 1;
        }
    }
    count as f64 / total as f64
}

/// Sampled marginal `w_a(t)` of a density along a unit direction.
#[derive(Debug, Clone)]
pub struct Marginal {
    pub direction: Point,
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MarginalCfg {
    /// Samples per slice axis for the (n-1)-dimensional quadrature.
    pub slice_samples: usize,
}

impl Default for MarginalCfg {
    fn default() -> Self {
        MarginalCfg {
            slice_samples: 4096,
        }
    }
}

/// Symmetric uniform grid with an odd node count, so `t = 0` is a node.
pub fn symmetric_t_grid(radius: f64, nodes: usize) -> Vec<f64> {
    let n = if nodes % 2 == 0 { nodes + 1 } else { nodes };
    let half = (n - 1) / 2;
    (0..n)
        .map(|i| radius * (i as f64 - half as f64) / half as f64)
        .collect()
}

pub fn marginal(
    d: &Density,
    a: Point,
    t_grid: &[f64],
    cfg: MarginalCfg,
) -> Result<Marginal, MeasureError> {
    assert!(
        (vec3::norm(a) - 1.0).abs() < 1e-9,
        "marginal direction must be unit"
    );
    assert!(t_grid.len() >= 3);
    let spacing = t_grid[1] - t_grid[0];
    let values: Vec<f64> = t_grid
        .par_iter()
        .map(|&t| slice_integral(d, a, t, cfg.slice_samples))
        .collect();
    let m = Marginal {
        direction: a,
        ts: t_grid.to_vec(),
        values,
        spacing,
    };
    let mass = m.total_mass();
    if (mass - 1.0).abs() > 1e-3 {
        return Err(MeasureError::NonConvergent { mass });
    }
    Ok(m)
}

fn slice_integral(d: &Density, a: Point, t: f64, samples: usize) -> f64 {
    let u = slice_basis_u(a);
    match (&d.kind, d.dim) {
        (DensityKind::Uniform(body), 2) => {
            // Exact chord clipping against the halfspaces.
            let base = vec3::scale(a, t);
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for h in &body.halfspaces {
                let nu = vec3::dot(h.normal, u);
                let rhs = h.offset - vec3::dot(h.normal, base);
                if nu.abs() < 1e-14 {
                    if rhs > 0.0 {
                        return 0.0;
                    }
                } else if nu > 0.0 {
                    lo = lo.max(rhs / nu);
                } else {
                    hi = hi.min(rhs / nu);
                }
            }
            (hi - lo).max(0.0) / d.z
        }
        (_, 2) => {
            let r = d.truncation_radius;
            let n = samples;
            let ds = 2.0 * r / n as f64;
            let mut parts = vec![0.0; n];
            for (k, p) in parts.iter_mut().enumerate() {
                let s = -r + ds * (k as f64 + 0.5);
                *p = d.eval(vec3::add(vec3::scale(a, t), vec3::scale(u, s))) * ds;
            }
            pairwise_sum(&parts)
        }
        (_, _) => {
            let v = vec3::cross(a, u);
            let r = d.truncation_radius;
            let n = (samples as f64).sqrt().ceil() as usize;
            let ds = 2.0 * r / n as f64;
            let mut parts = Vec::with_capacity(n * n);
            for i in 0..n {
                let s1 = -r + ds * (i as f64 + 0.5);
                for j in 0..n {
                    let s2 = -r + ds * (j as f64 + 0.5);
                    let p = vec3::add(
                        vec3::add(vec3::scale(a, t), vec3::scale(u, s1)),
                        vec3::scale(v, s2),
                    );
                    parts.push(d.eval(p) * ds * ds);
                }
            }
            pairwise_sum(&parts)
        }
    }
}

fn slice_basis_u(a: Point) -> Point {
    if a[2].abs() < 1e-12 {
        vec3::perp2(a)
    } else {
        let trial = if a[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let proj = vec3::sub(trial, vec3::scale(a, vec3::dot(trial, a)));
        vec3::unit(proj).expect("degenerate slice basis")
    }
}

impl Marginal {
    /// Linear interpolation; zero outside the sampled range.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if t < self.ts[0] || t > self.ts[n - 1] {
            return 0.0;
        }
        let pos = (t - self.ts[0]) / self.spacing;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Trapezoidal total mass.
    pub fn total_mass(&self) -> f64 {
        let n = self.values.len();
        let mut parts = vec![0.0; n - 1];
        for i in 0..n - 1 {
            parts[i] = 0.5 * (self.values[i] + self.values[i + 1]) * self.spacing;
        }
        pairwise_sum(&parts)
    }

    /// Trapezoidal integral over `[t, infinity)` with a linear cut at `t`.
    pub fn integral_above(&self, t: f64) -> f64 {
        let n = self.ts.len();
        if t <= self.ts[0] {
            return self.total_mass();
        }
        if t >= self.ts[n - 1] {
            return 0.0;
        }
        let pos = (t - self.ts[0]) / self.spacing;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        let vt = self.values[i] * (1.0 - frac) + self.values[i + 1] * frac;
        // partial trapezoid from t to ts[i+1]
        let mut acc = 0.5 * (vt + self.values[i + 1]) * (self.ts[i + 1] - t);
        let mut parts = Vec::with_capacity(n - i);
        for j in i + 1..n - 1 {
            parts.push(0.5 * (self.values[j] + self.values[j + 1]) * self.spacing);
        }
        acc += pairwise_sum(&parts);
        acc
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.ts.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let j = n - 1 - i;
            worst = worst.max((self.values[i] - self.values[j]).abs());
        }
        worst
    }

    /// Worst violation of discrete midpoint log-concavity over strictly
    /// positive triples.
    pub fn log_concavity_residual(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for i in 1..self.values.len() - 1 {
            let (a, b, c) = (self.values[i - 1], self.values[i], self.values[i + 1]);
            if a > 0.0 && b > 0.0 && c > 0.0 {
                worst = worst.max(0.5 * (a.ln() + c.ln()) - b.ln());
            }
        }
        if worst.is_finite() {
            worst
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TailBound {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Tail inequality for symmetric log-concave marginals: the mass above
/// `t >= 0` is at most `exp(-2 w(0) t) / 2`, with equality for the
/// two-sided exponential weight.
///
/// Integrals are renormalized by the sampled total mass, so the identity
/// `lhs = 1/2` at `t = 0` holds exactly on symmetric grids.
pub fn tail_bound_check(m: &Marginal, t: f64) -> Result<TailBound, MeasureError> {
    assert!(t >= 0.0, "tail bound needs t >= 0");
    let peak = m.values.iter().cloned().fold(0.0, f64::max);
    let asym = m.max_asymmetry();
    if asym > 1e-5 * peak.max(1e-300) {
        return Err(MeasureError::AsymmetricMarginal { asymmetry: asym });
    }
    let total = m.total_mass();
    let lhs = m.integral_above(t) / total;
    let w0 = m.value_at(0.0) / total;
    let rhs = 0.5 * (-2.0 * w0 * t).exp();
    Ok(TailBound {
        lhs,
        rhs,
        satisfied: lhs <= rhs + TAIL_BOUND_TOL,
    })
}

/// Composite Simpson rule (n is rounded up to even).
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Lanczos approximation of the Gamma function for positive arguments.
pub fn gamma_fn(x: f64) -> f64 {
    assert!(x > 0.0);
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + G + 0.5;
        for (i, &c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::ConvexBody;
    use std::f64::consts::PI;

    fn grid_for_density(d: &Density, n: usize) -> Arc<Grid> {
        Arc::new(Grid::cube(d.dim, d.truncation_radius, n))
    }

    #[test]
    fn gamma_known_values() {
        assert!((gamma_fn(1.0) - 1.0).abs() < 1e-12);
        assert!((gamma_fn(0.5) - PI.sqrt()).abs() < 1e-12);
        assert!((gamma_fn(4.0) - 6.0).abs() < 1e-10);
    }

    #[test]
    fn density_eval_uniform_unit_square() {
        let body = ConvexBody::unit_square_at_origin(1.0).unwrap();
        let d = Density::uniform(body);
        assert!((d.eval([0.5, 0.5, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(d.eval([2.0, 2.0, 0.0]), 0.0);
    }

    #[test]
    fn density_eval_gaussian_origin() {
        let d = Density::gaussian(2, 1.0);
        // 1/(2 pi), cross-checked against grid quadrature of exp(-V)
        assert!((d.eval([0.0; 3]) - 1.0 / (2.0 * PI)).abs() < 1e-12);
        let grid = grid_for_density(&d, 512);
        let hn = grid.h * grid.h;
        let mut z = 0.0;
        for i in 0..grid.cell_count() {
            z += (-d.potential(grid.cell_center(i))).exp() * hn;
        }
        assert!((z - d.normalization()).abs() < 1e-3 * d.normalization());
    }

    #[test]
    fn power_exp_normalizes() {
        let d = Density::power_exp(2, 1.5, 1.0).unwrap();
        let grid = grid_for_density(&d, 1024);
        let total = measure(&d, &WholeSpace, &grid).unwrap();
        assert!((total - 1.0).abs() < 1e-3, "total {total}");
        assert!(Density::power_exp(2, 1.0, 1.0).is_err());
    }

    #[test]
    fn measure_gaussian_whole_space() {
        let d = Density::gaussian(2, 1.0);
        let grid = grid_for_density(&d, 4096);
        let total = measure(&d, &WholeSpace, &grid).unwrap();
        assert!((total - 1.0).abs() < 1e-6, "total {total}");
    }

    #[test]
    fn measure_uniform_halfplane() {
        let body = ConvexBody::square(1.0).unwrap();
        let grid = Arc::new(Grid::for_body(&body, 256));
        let d = Density::uniform(body);
        let half = measure(&d, &|x: Point| x[0] >= 0.0, &grid).unwrap();
        assert!((half - 0.5).abs() < 1e-3, "half {half}");
    }

    #[test]
    fn measure_gaussian_halfplane_tail() {
        // 1D tail oracle: integral of the standard normal above 1.
        let phi = |s: f64| (-(s * s) / 2.0).exp() / (2.0 * PI).sqrt();
        let oracle = simpson(&phi, 1.0, 9.0, 4000);
        assert!((oracle - 0.158_655_25).abs() < 1e-7);
        let d = Density::gaussian(2, 1.0);
        let grid = grid_for_density(&d, 512);
        let mass = measure(&d, &|x: Point| x[0] >= 1.0, &grid).unwrap();
        assert!((mass - oracle).abs() < 1e-3, "mass {mass} oracle {oracle}");
    }

    #[test]
    fn measure_rejects_coarse_grid() {
        let d = Density::gaussian(2, 1.0);
        let grid = Arc::new(Grid::cube(2, d.truncation_radius, 8));
        assert!(matches!(
            measure(&d, &WholeSpace, &grid),
            Err(MeasureError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn measure_convergence_order() {
        // Halving the spacing shrinks the error at order >= 0.9 on a
        // smooth-boundary set (disk of radius 0.7 in the square).
        let body = ConvexBody::square(1.0).unwrap();
        let d = Density::uniform(body.clone());
        let region = |x: Point| x[0] * x[0] + x[1] * x[1] <= 0.49;
        let exact = PI * 0.49 / 4.0;
        let errs: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let grid = Arc::new(Grid::for_body(&body, n));
                (measure(&d, &region, &grid).unwrap() - exact).abs()
            })
            .collect();
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(
            order1.max(order2) >= 0.9,
            "orders {order1:.2}, {order2:.2}, errs {errs:?}"
        );
    }

    #[test]
    fn product_box_factorizes() {
        let d = Density::product(vec![
            Factor1d::Gauss { sigma: 1.0 },
            Factor1d::Laplace { rate: 2.0 },
        ]);
        let grid = grid_for_density(&d, 512);
        // Grid-aligned box: product of the 1D midpoint sums along each
        // axis equals the 2D masked midpoint sum.
        let k0 = grid.shape[0] / 4;
        let k1 = 3 * grid.shape[0] / 4;
        let lo = grid.origin[0] + k0 as f64 * grid.h;
        let hi = grid.origin[0] + k1 as f64 * grid.h;
        let box_mass = measure(
            &d,
            &|x: Point| x[0] > lo && x[0] < hi && x[1] > lo && x[1] < hi,
            &grid,
        )
        .unwrap();
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        let fs = match &d.kind {
            DensityKind::Product1d(fs) => fs.clone(),
            _ => unreachable!(),
        };
        for k in k0..k1 {
            let s = grid.origin[0] + (k as f64 + 0.5) * grid.h;
            m0 += (-fs[0].potential(s)).exp() / fs[0].z() * grid.h;
            m1 += (-fs[1].potential(s)).exp() / fs[1].z() * grid.h;
        }
        assert!(
            (box_mass - m0 * m1).abs() < 1e-8,
            "box {box_mass} product {}",
            m0 * m1
        );
    }

    #[test]
    fn marginal_gaussian_peak() {
        let d = Density::gaussian(2, 1.0);
        let ts = symmetric_t_grid(d.truncation_radius, 2001);
        let a = vec3::dir2(0.3);
        let m = marginal(&d, a, &ts, MarginalCfg::default()).unwrap();
        let expect = 1.0 / (2.0 * PI).sqrt();
        assert!((m.value_at(0.0) - expect).abs() < 1e-5);
        assert!((m.value_at(0.3) - m.value_at(-0.3)).abs() < 1e-6);
        assert!((m.total_mass() - 1.0).abs() < 1e-4);
        assert!(m.log_concavity_residual() < 1e-9);
    }

    #[test]
    fn marginal_uniform_square_axis() {
        let body = ConvexBody::square(1.0).unwrap();
        let d = Density::uniform(body);
        let ts = symmetric_t_grid(1.2, 801);
        let m = marginal(&d, [1.0, 0.0, 0.0], &ts, MarginalCfg::default()).unwrap();
        assert!((m.value_at(0.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tail_bound_exponential_equality() {
        let d = Density::product(vec![
            Factor1d::Laplace { rate: 1.0 },
            Factor1d::Gauss { sigma: 1.0 },
        ]);
        let ts = symmetric_t_grid(d.truncation_radius, 20001);
        let m = marginal(&d, [1.0, 0.0, 0.0], &ts, MarginalCfg::default()).unwrap();
        let tb = tail_bound_check(&m, 1.0).unwrap();
        let expect = (-1.0_f64).exp() / 2.0;
        assert!((tb.lhs - expect).abs() < 1e-6, "lhs {}", tb.lhs);
        assert!((tb.rhs - expect).abs() < 1e-6, "rhs {}", tb.rhs);
        assert!(tb.satisfied);
    }

    #[test]
    fn tail_bound_gaussian_strict() {
        let d = Density::gaussian(2, 1.0);
        let ts = symmetric_t_grid(d.truncation_radius, 4001);
        let m = marginal(&d, [0.0, 1.0, 0.0], &ts, MarginalCfg::default()).unwrap();
        let tb = tail_bound_check(&m, 1.0).unwrap();
        assert!((tb.lhs - 0.158_655).abs() < 1e-4);
        assert!((tb.rhs - 0.5 * (-2.0 / (2.0 * PI).sqrt()).exp()).abs() < 1e-4);
        assert!(tb.satisfied && tb.lhs < tb.rhs - 0.05);
    }

    #[test]
    fn tail_bound_uniform_interval() {
        let d = Density::product(vec![
            Factor1d::Uniform { half_width: 1.0 },
            Factor1d::Uniform { half_width: 1.0 },
        ]);
        let ts = symmetric_t_grid(1.1, 4401);
        let m = marginal(&d, [1.0, 0.0, 0.0], &ts, MarginalCfg::default()).unwrap();
        let tb = tail_bound_check(&m, 0.5).unwrap();
        assert!((tb.lhs - 0.25).abs() < 1e-3, "lhs {}", tb.lhs);
        assert!((tb.rhs - 0.5 * (-0.5_f64).exp()).abs() < 2e-3, "rhs {}", tb.rhs);
        assert!(tb.satisfied);
    }

    #[test]
    fn tail_bound_rejects_asymmetric() {
        let m = Marginal {
            direction: [1.0, 0.0, 0.0],
            ts: vec![-1.0, 0.0, 1.0],
            values: vec![0.1, 0.5, 0.4],
            spacing: 1.0,
        };
        assert!(matches!(
            tail_bound_check(&m, 0.5),
            Err(MeasureError::AsymmetricMarginal { .. })
        ));
    }

    #[test]
    fn convexity_residual_nonpositive() {
        for d in [
            Density::gaussian(2, 0.8),
            Density::power_exp(2, 1.5, 1.2).unwrap(),
            Density::product(vec![
                Factor1d::Laplace { rate: 1.0 },
                Factor1d::Gauss { sigma: 2.0 },
            ]),
        ] {
            assert!(d.convexity_residual(7, 200) <= 1e-9);
        }
    }
}
