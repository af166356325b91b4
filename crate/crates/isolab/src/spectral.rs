//! Neumann eigenproblem on 2D convex bodies, hot-spots diagnostics,
//! nodal sets, and deformation continuation.
//!
//! The discretization is a masked finite-volume form of the 5-point
//! Laplacian: interior faces carry the exactly clipped aperture fraction
//! of the face inside the body, boundary faces carry none (the no-flux
//! closure). The operator is symmetric, annihilates constants exactly,
//! and is paired with the lumped mass of the cell inside-fractions.

use crate::convex::ConvexBody;
use crate::field::{Grid, ScalarField};
use crate::linalg::{smallest_eigenpairs, LinalgError, SymCsr};
use crate::surface::{self, GraphFit, Interface, SurfaceError};
use crate::vec3::{self, Point};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("grid too coarse for the eigenproblem: {cells} cells across, need >= 64")]
    GridTooCoarse { cells: usize },
    #[error("body must be 2D for the Neumann solver")]
    NotPlanar,
    #[error("eigensolver failed: {0}")]
    Solver(#[from] LinalgError),
    #[error("empty nodal set: mean-zero eigenfunction without zeros signals solver failure")]
    EmptyNodalSet(#[source] SurfaceError),
    #[error("support-function interpolation produced an invalid body: {0}")]
    NonConvexInterpolant(String),
    #[error(transparent)]
    Convex(#[from] crate::convex::ConvexError),
}

/// One converged Neumann eigenpair.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    pub u: ScalarField,
    pub residual: f64,
    /// Set on both members of a near-degenerate pair
    /// (`|l1 - l2| / l1 < 1e-6`).
    pub degenerate_pair: bool,
}

/// First `k` nonconstant Neumann eigenpairs, sorted by eigenvalue.
pub fn solve_neumann(
    body: &ConvexBody,
    grid: &Arc<Grid>,
    k: usize,
    seed: u64,
) -> Result<Vec<EigenResult>, SpectralError> {
    if body.dim != 2 {
        return Err(SpectralError::NotPlanar);
    }
    let across = (0..2).map(|d| grid.shape[d]).min().unwrap();
    if across < 64 {
        return Err(SpectralError::GridTooCoarse { cells: across });
    }
    let sys = assemble(body, grid);
    let ones = vec![1.0; sys.a.n];
    let pairs = smallest_eigenpairs(&sys.a, &sys.mass, &[ones], k, seed, 1e-7, 3000)?;
    let mut out = Vec::with_capacity(pairs.len());
    for p in &pairs {
        // scatter back to the full grid; deterministic sign
        let mut u = vec![0.0; grid.cell_count()];
        for (compact, &cell) in sys.cells.iter().enumerate() {
            u[cell] = p.vector[compact];
        }
        let amax = u
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.abs().partial_cmp(&y.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if u[amax] < 0.0 {
            for v in u.iter_mut() {
                *v = -*v;
            }
        }
        out.push(EigenResult {
            lambda: p.value,
            u: ScalarField {
                grid: grid.clone(),
                values: u,
            },
            residual: p.residual,
            degenerate_pair: false,
        });
    }
    for i in 0..out.len().saturating_sub(1) {
        if (out[i + 1].lambda - out[i].lambda).abs() / out[i].lambda.max(1e-300) < 1e-6 {
            out[i].degenerate_pair = true;
            out[i + 1].degenerate_pair = true;
        }
    }
    Ok(out)
}

struct NeumannSystem {
    a: SymCsr,
    mass: Vec<f64>,
    /// Full-grid cell index per compact unknown.
    cells: Vec<usize>,
}

/// Minimum face aperture kept in the stiffness. Weaker links, paired
/// with sliver cell masses, would otherwise seed spurious low modes (the
/// usual cut-cell small-cell problem).
const APERTURE_FLOOR: f64 = 0.05;

/// Stiffness (face apertures) and lumped mass (cell fractions) for the
/// masked Neumann Laplacian, compressed to coupled active cells. Face
/// apertures are clipped exactly against the halfspace list.
fn assemble(body: &ConvexBody, grid: &Grid) -> NeumannSystem {
    let (nx, ny) = (grid.shape[0], grid.shape[1]);
    let h = grid.h;
    let idx = |ix: usize, iy: usize| iy * nx + ix;
    // face apertures on the full grid
    let mut links: Vec<(usize, usize, f64)> = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let i = idx(ix, iy);
            if !grid.active(i) {
                continue;
            }
            let c = grid.cell_center(i);
            if ix + 1 < nx && grid.active(idx(ix + 1, iy)) {
                let a = face_aperture(
                    body,
                    [c[0] + h / 2.0, c[1] - h / 2.0, 0.0],
                    [c[0] + h / 2.0, c[1] + h / 2.0, 0.0],
                );
                if a > APERTURE_FLOOR {
                    links.push((i, idx(ix + 1, iy), a));
                }
            }
            if iy + 1 < ny && grid.active(idx(ix, iy + 1)) {
                let a = face_aperture(
                    body,
                    [c[0] - h / 2.0, c[1] + h / 2.0, 0.0],
                    [c[0] + h / 2.0, c[1] + h / 2.0, 0.0],
                );
                if a > APERTURE_FLOOR {
                    links.push((i, idx(ix, iy + 1), a));
                }
            }
        }
    }
    // keep only cells that participate in at least one face
    let mut coupled = vec![false; grid.cell_count()];
    for &(i, j, _) in &links {
        coupled[i] = true;
        coupled[j] = true;
    }
    let mut compact = vec![usize::MAX; grid.cell_count()];
    let mut cells = Vec::new();
    for (i, &c) in coupled.iter().enumerate() {
        if c {
            compact[i] = cells.len();
            cells.push(i);
        }
    }
    let triplets: Vec<(usize, usize, f64)> = links
        .iter()
        .flat_map(|&(i, j, a)| {
            let (ci, cj) = (compact[i], compact[j]);
            [(ci, ci, a), (cj, cj, a), (ci, cj, -a)]
        })
        .collect();
    let a = SymCsr::from_upper_triplets(cells.len(), &triplets);
    let mass: Vec<f64> = cells.iter().map(|&i| grid.mask[i] * h * h).collect();
    NeumannSystem { a, mass, cells }
}

/// Fraction of the segment `[p, q]` inside the body (1D clip against
/// every halfspace).
fn face_aperture(body: &ConvexBody, p: Point, q: Point) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let d = vec3::sub(q, p);
    for hs in &body.halfspaces {
        let a = vec3::dot(hs.normal, d);
        let b = hs.offset - vec3::dot(hs.normal, p);
        // need a*t >= b for t in [lo, hi]
        if a.abs() < 1e-14 {
            if b > 0.0 {
                return 0.0;
            }
        } else if a > 0.0 {
            lo = lo.max(b / a);
        } else {
            hi = hi.min(b / a);
        }
        if lo >= hi {
            return 0.0;
        }
    }
    (hi - lo).max(0.0)
}

/// Hot-spots diagnostics for one eigenfunction.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HotSpotsReport {
    pub argmax: Point,
    pub argmin: Point,
    pub max_boundary_distance: f64,
    pub min_boundary_distance: f64,
    /// Direction maximizing the worst-case directional derivative.
    pub direction: Point,
    /// `min_cells a . grad u` after normalizing `sup |grad u| = 1`;
    /// positive means a strict monotone witness was found.
    pub margin: f64,
    /// Width of the boundary collar excluded from the margin scan.
    pub collar: f64,
    pub lambda: f64,
    pub nodal_lipschitz: f64,
    pub nodal_direction: Point,
}

/// Locates extrema, scans 720 directions for a monotonicity witness on
/// cells at distance > 2h from the boundary, and attaches the nodal-set
/// Lipschitz data.
pub fn hot_spots_check(
    e: &EigenResult,
    body: &ConvexBody,
) -> Result<HotSpotsReport, SpectralError> {
    let grid = &e.u.grid;
    let collar = 2.0 * grid.h;
    let mut argmax = vec3::ORIGIN;
    let mut argmin = vec3::ORIGIN;
    let mut vmax = f64::NEG_INFINITY;
    let mut vmin = f64::INFINITY;
    for i in 0..e.u.values.len() {
        if grid.mask[i] < 0.5 {
            continue;
        }
        let v = e.u.values[i];
        let c = grid.cell_center(i);
        if v > vmax {
            vmax = v;
            argmax = c;
        }
        if v < vmin {
            vmin = v;
            argmin = c;
        }
    }
    // gradients on interior cells beyond the collar
    let mut cells: Vec<(Point, Point)> = Vec::new();
    for i in 0..e.u.values.len() {
        if grid.mask[i] < 1.0 {
            continue;
        }
        let c = grid.cell_center(i);
        if body.boundary_distance(c) <= collar {
            continue;
        }
        let mut g = vec3::ORIGIN;
        let mut full = true;
        for d in 0..2 {
            let (dv, la, ra) = e.u.deriv(i, d);
            if !(la && ra) {
                full = false;
            }
            g[d] = dv;
        }
        if full {
            cells.push((c, g));
        }
    }
    let sup = cells
        .iter()
        .map(|(_, g)| vec3::norm(*g))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut best_dir = [1.0, 0.0, 0.0];
    let mut best_margin = f64::NEG_INFINITY;
    for k in 0..720 {
        let a = vec3::dir2(2.0 * std::f64::consts::PI * k as f64 / 720.0);
        let margin = cells
            .iter()
            .map(|(_, g)| vec3::dot(a, *g) / sup)
            .fold(f64::INFINITY, f64::min);
        if margin > best_margin {
            best_margin = margin;
            best_dir = a;
        }
    }
    let nodal = nodal_set(e)?;
    Ok(HotSpotsReport {
        argmax,
        argmin,
        max_boundary_distance: body.boundary_distance(argmax).max(0.0),
        min_boundary_distance: body.boundary_distance(argmin).max(0.0),
        direction: best_dir,
        margin: best_margin,
        collar,
        lambda: e.lambda,
        nodal_lipschitz: nodal.1.lipschitz,
        nodal_direction: nodal.1.direction,
    })
}

/// Zero set of the eigenfunction with its Lipschitz-graph fit.
pub fn nodal_set(e: &EigenResult) -> Result<(Interface, GraphFit), SpectralError> {
    let s = surface::extract(&e.u, 0.0).map_err(SpectralError::EmptyNodalSet)?;
    let fit = surface::graph_fit(&s);
    Ok((s, fit))
}

/// One continuation step of a deformation family.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DeformStep {
    pub t: f64,
    pub lambda: f64,
    pub margin: f64,
    pub direction: Point,
    pub lipschitz: f64,
    pub extrema_boundary_distance: f64,
}

#[derive(Debug, Clone)]
pub struct DeformReport {
    pub steps: Vec<DeformStep>,
    /// First `t` with a nonpositive monotonicity margin, if any.
    pub first_nonmonotone: Option<f64>,
}

/// Interpolates the support functions of two symmetric bodies,
/// reconstructs each intermediate body from halfspaces at 256 scanned
/// directions, solves, and reports margins and nodal Lipschitz data.
pub fn deform_family(
    body0: &ConvexBody,
    body1: &ConvexBody,
    steps: usize,
    resolution: usize,
    seed: u64,
) -> Result<DeformReport, SpectralError> {
    assert!(body0.symmetric && body1.symmetric, "bodies must be symmetric");
    let dirs = vec3::planar_directions(256, 2.0 * std::f64::consts::PI);
    let mut out = Vec::new();
    let mut first_nonmonotone = None;
    for step in 0..=steps {
        let t = step as f64 / steps as f64;
        let mut hs = Vec::with_capacity(dirs.len());
        for &a in &dirs {
            let h0 = crate::convex::support(body0, a)?;
            let h1 = crate::convex::support(body1, a)?;
            let ht = (1.0 - t) * h0 + t * h1;
            // {x : a.x <= ht} = {x : (-a).x >= -ht}
            hs.push(crate::convex::Halfspace::new(vec3::scale(a, -1.0), -ht).unwrap());
        }
        let body = ConvexBody::new(2, hs, true, crate::convex::BodyKind::Polygon)
            .map_err(|e| SpectralError::NonConvexInterpolant(e.to_string()))?;
        // reconstruction must reproduce the interpolated support values
        for &a in dirs.iter().step_by(37) {
            let h0 = crate::convex::support(body0, a)?;
            let h1 = crate::convex::support(body1, a)?;
            let want = (1.0 - t) * h0 + t * h1;
            let got = crate::convex::support(&body, a)?;
            if got > want + 1e-6 {
                return Err(SpectralError::NonConvexInterpolant(format!(
                    "support overshoot {} at direction {a:?}",
                    got - want
                )));
            }
        }
        let grid = Arc::new(Grid::for_body(&body, resolution));
        let eig = solve_neumann(&body, &grid, 1, seed)?;
        let report = hot_spots_check(&eig[0], &body)?;
        if report.margin <= 0.0 && first_nonmonotone.is_none() {
            first_nonmonotone = Some(t);
        }
        out.push(DeformStep {
            t,
            lambda: report.lambda,
            margin: report.margin,
            direction: report.direction,
            lipschitz: report.nodal_lipschitz,
            extrema_boundary_distance: report
                .max_boundary_distance
                .max(report.min_boundary_distance),
        });
    }
    Ok(DeformReport {
        steps: out,
        first_nonmonotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rectangle_eigenvalue_and_mode() {
        // [0,2]x[0,1] rectangle centered: lambda_1 = pi^2/4, u ~ cos
        let body = ConvexBody::rectangle(1.0, 0.5).unwrap();
        let grid = Arc::new(Grid::for_body(&body, 128));
        let eig = solve_neumann(&body, &grid, 2, 3).unwrap();
        let exact = PI * PI / 4.0;
        assert!(
            (eig[0].lambda - exact).abs() / exact < 0.01,
            "lambda {} vs {exact}",
            eig[0].lambda
        );
        assert!(!eig[0].degenerate_pair);
        // second eigenvalue pi^2 (two half-waves along x)
        assert!((eig[1].lambda - PI * PI).abs() / (PI * PI) < 0.02);
    }

    #[test]
    fn square_degenerate_pair_flagged() {
        let body = ConvexBody::square(0.5).unwrap();
        let grid = Arc::new(Grid::for_body(&body, 96));
        let eig = solve_neumann(&body, &grid, 2, 5).unwrap();
        assert!(eig[0].degenerate_pair && eig[1].degenerate_pair);
        let exact = PI * PI;
        assert!((eig[0].lambda - exact).abs() / exact < 0.01);
    }

    #[test]
    fn eigenfunctions_orthogonal_and_mean_zero() {
        let body = ConvexBody::rectangle(1.0, 0.5).unwrap();
        let grid = Arc::new(Grid::for_body(&body, 96));
        let eig = solve_neumann(&body, &grid, 3, 7).unwrap();
        let h2 = grid.h * grid.h;
        for a in 0..eig.len() {
            let mut mean = 0.0;
            for i in 0..grid.cell_count() {
                mean += eig[a].u.values[i] * grid.mask[i] * h2;
            }
            assert!(mean.abs() < 1e-6, "mean {mean}");
            for b in a + 1..eig.len() {
                let mut dot = 0.0;
                for i in 0..grid.cell_count() {
                    dot += eig[a].u.values[i] * eig[b].u.values[i] * grid.mask[i] * h2;
                }
                assert!(dot.abs() < 1e-6, "dot {dot}");
            }
        }
    }

    #[test]
    fn rectangle_richardson_order() {
        let body = ConvexBody::rectangle(1.0, 0.5).unwrap();
        let exact = PI * PI / 4.0;
        let errs: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let grid = Arc::new(Grid::for_body(&body, n));
                let eig = solve_neumann(&body, &grid, 1, 11).unwrap();
                (eig[0].lambda - exact).abs()
            })
            .collect();
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order >= 1.8, "order {order}, errs {errs:?}");
    }

    #[test]
    fn domain_monotonicity() {
        let long = ConvexBody::rectangle(1.0, 0.5).unwrap();
        let square = ConvexBody::square(0.5).unwrap();
        let l_long = {
            let grid = Arc::new(Grid::for_body(&long, 96));
            solve_neumann(&long, &grid, 1, 1).unwrap()[0].lambda
        };
        let l_square = {
            let grid = Arc::new(Grid::for_body(&square, 96));
            solve_neumann(&square, &grid, 1, 1).unwrap()[0].lambda
        };
        assert!(l_long < l_square);
    }

    #[test]
    fn rectangle_hot_spots_monotone() {
        let body = ConvexBody::rectangle(1.0, 0.5).unwrap();
        let grid = Arc::new(Grid::for_body(&body, 128));
        let eig = solve_neumann(&body, &grid, 1, 3).unwrap();
        let report = hot_spots_check(&eig[0], &body).unwrap();
        assert!(report.margin > 0.0, "margin {}", report.margin);
        assert!(report.direction[0].abs() > 0.99, "direction {:?}", report.direction);
        // extrema on the short sides
        assert!(report.argmax[0].abs() > 0.9);
        assert!(report.argmin[0].abs() > 0.9);
        assert!(report.max_boundary_distance < 2.0 * grid.h);
        // nodal set is the vertical midline: Lipschitz ~ 0
        assert!(report.nodal_lipschitz <= 0.05, "L {}", report.nodal_lipschitz);
    }

    #[test]
    fn coarse_grid_rejected() {
        let body = ConvexBody::square(0.5).unwrap();
        let grid = Arc::new(Grid::for_body(&body, 32));
        assert!(matches!(
            solve_neumann(&body, &grid, 1, 1),
            Err(SpectralError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn equivariance_under_rotation() {
        // rotating the body rotates the monotone direction
        let rect = ConvexBody::rectangle(1.0, 0.5).unwrap();
        let angle = 0.5f64;
        let pts: Vec<Point> = rect
            .vertices()
            .iter()
            .map(|v| {
                [
                    angle.cos() * v[0] - angle.sin() * v[1],
                    angle.sin() * v[0] + angle.cos() * v[1],
                    0.0,
                ]
            })
            .collect();
        let mut rotated = crate::convex::convex_hull(&pts, 2).unwrap();
        rotated.symmetric = true;
        let grid = Arc::new(Grid::for_body(&rotated, 128));
        let eig = solve_neumann(&rotated, &grid, 1, 3).unwrap();
        let report = hot_spots_check(&eig[0], &rotated).unwrap();
        let expect = vec3::dir2(angle);
        let align = vec3::dot(report.direction, expect).abs();
        assert!(align > 0.995, "direction {:?} vs {expect:?}", report.direction);
    }

    #[test]
    fn deform_square_to_rectangle_stays_monotone() {
        let sq = ConvexBody::square(0.5).unwrap();
        let rect = ConvexBody::rectangle(1.0, 0.5).unwrap();
        let rep = deform_family(&sq, &rect, 4, 80, 5).unwrap();
        assert_eq!(rep.steps.len(), 5);
        assert!(rep.first_nonmonotone.is_none(), "steps {:?}", rep.steps);
        for s in &rep.steps {
            assert!(s.margin > 0.0);
        }
    }

    #[test]
    fn deform_constant_family() {
        let disk = ConvexBody::disk(0.8, 64).unwrap();
        let rep = deform_family(&disk, &disk, 2, 80, 9).unwrap();
        let l0 = rep.steps[0].lambda;
        for s in &rep.steps {
            assert!((s.lambda - l0).abs() / l0 < 1e-6);
        }
    }
}
