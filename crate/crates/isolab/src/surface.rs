//! Interface extraction and discrete differential geometry.
//!
//! Zero level sets of scalar fields become piecewise-linear interfaces
//! (marching squares in 2D) with per-vertex normals oriented out of
//! `{f > 0}`. On top of that: weighted perimeter, curvature data by
//! circumcircle fits, contact angles against the body boundary,
//! Lipschitz-graph fitting by direction scans, and intrinsic distances
//! along the interface graph.

use crate::convex::{BodyKind, ConvexBody};
use crate::field::ScalarField;
use crate::measure::Density;
use crate::vec3::{self, Point};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("field has no sign change on masked cells; no interface to extract")]
    EmptyInterface,
    #[error("component needs at least 3 vertices, has {0}")]
    TooFewVertices(usize),
    #[error("endpoint {point:?} is {distance:.4} from the boundary, beyond 2h = {limit:.4}")]
    ContactClassification {
        point: Point,
        distance: f64,
        limit: f64,
    },
    #[error("interface has no boundary vertices")]
    NoBoundaryVertices,
    #[error("3D interface extraction is not implemented in this release")]
    Unsupported3d,
}

/// Piecewise-linear hypersurface: polyline segments in 2D with unit
/// normals per vertex, oriented out of the enclosed set.
#[derive(Debug, Clone)]
pub struct Interface {
    pub dim: usize,
    pub vertices: Vec<Point>,
    pub normals: Vec<Point>,
    pub segments: Vec<[usize; 2]>,
    /// Vertices of degree 1 (chain endpoints).
    pub boundary_vertices: Vec<usize>,
    /// Resolution hint from the source grid (0 for analytic interfaces).
    pub h: f64,
}

impl Interface {
    pub fn from_parts(
        vertices: Vec<Point>,
        normals: Vec<Point>,
        segments: Vec<[usize; 2]>,
        h: f64,
    ) -> Self {
        let mut degree = vec![0usize; vertices.len()];
        for s in &segments {
            degree[s[0]] += 1;
            degree[s[1]] += 1;
        }
        assert!(
            degree.iter().all(|&d| d <= 2),
            "non-manifold interface: vertex with degree > 2"
        );
        for n in &normals {
            debug_assert!((vec3::norm(*n) - 1.0).abs() < 1e-9);
        }
        let boundary_vertices = degree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 1)
            .map(|(i, _)| i)
            .collect();
        Interface {
            dim: 2,
            vertices,
            normals,
            segments,
            boundary_vertices,
            h,
        }
    }

    /// Closed polygonal circle of radius `r`, normals outward (boundary
    /// of the disk).
    pub fn circle(r: f64, n: usize) -> Self {
        let mut vertices = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut segments = Vec::with_capacity(n);
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            vertices.push(vec3::scale(vec3::dir2(th), r));
            normals.push(vec3::dir2(th));
            segments.push([k, (k + 1) % n]);
        }
        Interface::from_parts(vertices, normals, segments, 0.0)
    }

    /// Straight segment sampled with `n` vertices; the normal is the +90
    /// degree rotation of the direction.
    pub fn segment(p: Point, q: Point, n: usize) -> Self {
        assert!(n >= 2);
        let dir = vec3::unit(vec3::sub(q, p)).expect("degenerate segment");
        let normal = vec3::perp2(dir);
        let mut vertices = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut segments = Vec::with_capacity(n - 1);
        for k in 0..n {
            let t = k as f64 / (n - 1) as f64;
            vertices.push(vec3::add(p, vec3::scale(vec3::sub(q, p), t)));
            normals.push(normal);
            if k + 1 < n {
                segments.push([k, k + 1]);
            }
        }
        Interface::from_parts(vertices, normals, segments, 0.0)
    }

    /// Open polyline through the given points with normals per vertex.
    pub fn polyline(points: Vec<Point>, normals: Vec<Point>) -> Self {
        let n = points.len();
        let segments = (0..n - 1).map(|k| [k, k + 1]).collect();
        Interface::from_parts(points, normals, segments, 0.0)
    }

    pub fn edge_length(&self, s: [usize; 2]) -> f64 {
        vec3::dist(self.vertices[s[0]], self.vertices[s[1]])
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| self.edge_length(*s)).sum()
    }

    /// Dual vertex weight: half the length of the incident edges.
    pub fn vertex_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.vertices.len()];
        for s in &self.segments {
            let l = self.edge_length(*s);
            w[s[0]] += 0.5 * l;
            w[s[1]] += 0.5 * l;
        }
        w
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for s in &self.segments {
            adj[s[0]].push(s[1]);
            adj[s[1]].push(s[0]);
        }
        adj
    }

    /// Maximal chains: open chains start at degree-1 vertices, the rest
    /// are closed loops.
    pub fn chains(&self) -> Vec<Chain> {
        let adj = self.adjacency();
        let mut visited = vec![false; self.vertices.len()];
        let mut chains = Vec::new();
        // open chains
        for start in 0..self.vertices.len() {
            if visited[start] || adj[start].len() != 1 {
                continue;
            }
            let mut path = vec![start];
            visited[start] = true;
            let mut prev = start;
            let mut cur = adj[start][0];
            loop {
                path.push(cur);
                visited[cur] = true;
                let next = adj[cur].iter().copied().find(|&x| x != prev);
                match next {
                    Some(nx) if !visited[nx] => {
                        prev = cur;
                        cur = nx;
                    }
                    _ => break,
                }
            }
            chains.push(Chain {
                vertices: path,
                closed: false,
            });
        }
        // loops
        for start in 0..self.vertices.len() {
            if visited[start] || adj[start].is_empty() {
                continue;
            }
            let mut path = vec![start];
            visited[start] = true;
            let mut prev = start;
            let mut cur = adj[start][0];
            while cur != start {
                path.push(cur);
                visited[cur] = true;
                let next = adj[cur].iter().copied().find(|&x| x != prev).unwrap_or(start);
                prev = cur;
                cur = next;
            }
            chains.push(Chain {
                vertices: path,
                closed: true,
            });
        }
        chains
    }

    pub fn is_connected(&self) -> bool {
        self.chains().len() <= 1
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub vertices: Vec<usize>,
    pub closed: bool,
}

/// Marching squares on the dual grid of cell centers; linear
/// interpolation along edges, normals from the sampled gradient of `f`,
/// oriented out of `{f > 0}`.
pub fn extract(f: &ScalarField, level: f64) -> Result<Interface, SurfaceError> {
    let g = &f.grid;
    if g.dim != 2 {
        return Err(SurfaceError::Unsupported3d);
    }
    let shifted: Vec<f64> = f.values.iter().map(|v| v - level).collect();
    let (nx, ny) = (g.shape[0], g.shape[1]);
    let node = |ix: usize, iy: usize| -> usize { (iy * nx) + ix };

    let mut any_positive = false;
    let mut any_negative = false;
    for i in 0..shifted.len() {
        if g.active(i) {
            if shifted[i] > 0.0 {
                any_positive = true;
            } else if shifted[i] < 0.0 {
                any_negative = true;
            }
        }
    }
    if !(any_positive && any_negative) {
        return Err(SurfaceError::EmptyInterface);
    }

    // Crossing vertices keyed by (lower node index, axis).
    let mut vertex_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let mut segments: Vec<[usize; 2]> = Vec::new();

    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let c00 = node(ix, iy);
            let c10 = node(ix + 1, iy);
            let c01 = node(ix, iy + 1);
            let c11 = node(ix + 1, iy + 1);
            if !(g.active(c00) && g.active(c10) && g.active(c01) && g.active(c11)) {
                continue;
            }
            let s00 = shifted[c00] > 0.0;
            let s10 = shifted[c10] > 0.0;
            let s01 = shifted[c01] > 0.0;
            let s11 = shifted[c11] > 0.0;
            let case = (s00 as u8) | (s10 as u8) << 1 | (s11 as u8) << 2 | (s01 as u8) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let mut edge = |a: usize, b: usize, axis: usize| -> usize {
                let key = (a.min(b), axis);
                if let Some(&v) = vertex_of.get(&key) {
                    return v;
                }
                let fa = shifted[a];
                let fb = shifted[b];
                let t = if (fa - fb).abs() < 1e-300 {
                    0.5
                } else {
                    (fa / (fa - fb)).clamp(0.0, 1.0)
                };
                let pa = g.cell_center(a);
                let pb = g.cell_center(b);
                let p = vec3::add(pa, vec3::scale(vec3::sub(pb, pa), t));
                vertices.push(p);
                let id = vertices.len() - 1;
                vertex_of.insert(key, id);
                id
            };
            // edges: 0 bottom (c00-c10), 1 right (c10-c11), 2 top
            // (c01-c11), 3 left (c00-c01)
            let e0 = if (s00 != s10) { Some(edge(c00, c10, 0)) } else { None };
            let e1 = if (s10 != s11) { Some(edge(c10, c11, 1)) } else { None };
            let e2 = if (s01 != s11) { Some(edge(c01, c11, 0)) } else { None };
            let e3 = if (s00 != s01) { Some(edge(c00, c01, 1)) } else { None };
            match case {
                1 | 14 => segments.push([e3.unwrap(), e0.unwrap()]),
                2 | 13 => segments.push([e0.unwrap(), e1.unwrap()]),
                4 | 11 => segments.push([e1.unwrap(), e2.unwrap()]),
                8 | 7 => segments.push([e2.unwrap(), e3.unwrap()]),
                3 | 12 => segments.push([e3.unwrap(), e1.unwrap()]),
                6 | 9 => segments.push([e0.unwrap(), e2.unwrap()]),
                5 | 10 => {
                    // saddle: pair by the sign of the center average
                    let center =
                        (shifted[c00] + shifted[c10] + shifted[c01] + shifted[c11]) / 4.0;
                    let joins_00_11 = (center > 0.0) == s00;
                    if joins_00_11 {
                        segments.push([e3.unwrap(), e2.unwrap()]);
                        segments.push([e0.unwrap(), e1.unwrap()]);
                    } else {
                        segments.push([e3.unwrap(), e0.unwrap()]);
                        segments.push([e1.unwrap(), e2.unwrap()]);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    if vertices.is_empty() {
        return Err(SurfaceError::EmptyInterface);
    }
    let normals: Vec<Point> = vertices
        .iter()
        .map(|&p| {
            let grad = f.sample_gradient(p);
            match vec3::unit(vec3::scale(grad, -1.0)) {
                Some(n) => n,
                None => [1.0, 0.0, 0.0],
            }
        })
        .collect();
    Ok(Interface::from_parts(vertices, normals, segments, g.h))
}

/// Weighted perimeter: sum over elements of length times the normalized
/// density at the midpoint.
pub fn perimeter(s: &Interface, d: &Density) -> f64 {
    s.segments
        .iter()
        .map(|&e| {
            let mid = vec3::scale(vec3::add(s.vertices[e[0]], s.vertices[e[1]]), 0.5);
            s.edge_length(e) * d.weight_in_support(mid)
        })
        .sum()
}

/// Euclidean length (weight 1).
pub fn euclidean_length(s: &Interface) -> f64 {
    s.total_length()
}

/// Per-vertex curvature data: signed curvature from the circumcircle of
/// consecutive vertex triples, squared second fundamental form, and the
/// weighted mean curvature `kappa - nu . grad V`.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub h_s: Vec<f64>,
    pub a_sq: Vec<f64>,
    pub h_mu: Vec<f64>,
    /// Vertices with a full two-sided stencil.
    pub interior: Vec<bool>,
}

pub fn curvature(s: &Interface, d: &Density) -> Result<CurvatureData, SurfaceError> {
    let n = s.vertices.len();
    if n < 3 {
        return Err(SurfaceError::TooFewVertices(n));
    }
    let mut h_s = vec![0.0; n];
    let mut interior = vec![false; n];
    for chain in s.chains() {
        let verts = &chain.vertices;
        let m = verts.len();
        if m < 3 {
            continue;
        }
        // cumulative arclength
        let mut arc = vec![0.0; m];
        for k in 1..m {
            arc[k] = arc[k - 1] + vec3::dist(s.vertices[verts[k]], s.vertices[verts[k - 1]]);
        }
        let total = if chain.closed {
            arc[m - 1] + vec3::dist(s.vertices[verts[m - 1]], s.vertices[verts[0]])
        } else {
            arc[m - 1]
        };
        // Extracted vertices carry O(h^2) position noise; a circumcircle
        // over an arc window of order sqrt(h * L) averages it down to
        // O(h) curvature error. Analytic interfaces (h = 0) use the
        // consecutive triple, which is exact on circles.
        let max_edge = (1..m)
            .map(|k| arc[k] - arc[k - 1])
            .fold(0.0f64, f64::max);
        let span = (2.5 * s.h).max(0.6 * (s.h * total).sqrt());
        let wide = span > max_edge && total > 2.0 * span;
        for k in 0..m {
            let v = verts[k];
            if wide {
                let t = arc[k];
                let (lo, hi) = if chain.closed {
                    (t - span, t + span)
                } else if t < span {
                    (0.0, 2.0 * span)
                } else if t > total - span {
                    (total - 2.0 * span, total)
                } else {
                    (t - span, t + span)
                };
                let a = point_at_arc(s, verts, &arc, total, chain.closed, lo);
                let c = point_at_arc(s, verts, &arc, total, chain.closed, hi);
                h_s[v] = signed_circumcurvature(a, s.vertices[v], c, s.normals[v]);
                interior[v] = chain.closed || (t >= span && t <= total - span);
            } else {
                let prev = if k > 0 {
                    Some(verts[k - 1])
                } else if chain.closed {
                    Some(verts[m - 1])
                } else {
                    None
                };
                let next = if k + 1 < m {
                    Some(verts[k + 1])
                } else if chain.closed {
                    Some(verts[0])
                } else {
                    None
                };
                if let (Some(a), Some(c)) = (prev, next) {
                    h_s[v] = signed_circumcurvature(
                        s.vertices[a],
                        s.vertices[v],
                        s.vertices[c],
                        s.normals[v],
                    );
                    interior[v] = true;
                }
            }
        }
        // endpoints copy the adjacent interior value
        if !chain.closed && m >= 3 && !wide {
            h_s[verts[0]] = h_s[verts[1]];
            h_s[verts[m - 1]] = h_s[verts[m - 2]];
        }
    }
    let a_sq: Vec<f64> = h_s.iter().map(|k| k * k).collect();
    let h_mu: Vec<f64> = (0..n)
        .map(|i| h_s[i] - vec3::dot(s.normals[i], d.grad_potential(s.vertices[i])))
        .collect();
    Ok(CurvatureData {
        h_s,
        a_sq,
        h_mu,
        interior,
    })
}

/// Point on the polyline at the given arc parameter (wrapping for
/// closed chains, clamping for open ones).
fn point_at_arc(
    s: &Interface,
    verts: &[usize],
    arc: &[f64],
    total: f64,
    closed: bool,
    t: f64,
) -> Point {
    let m = verts.len();
    let t = if closed {
        t.rem_euclid(total)
    } else {
        t.clamp(0.0, arc[m - 1])
    };
    // binary search for the segment containing t
    let mut lo = 0usize;
    let mut hi = m - 1;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if arc[mid] <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if closed && t >= arc[m - 1] {
        let seg = total - arc[m - 1];
        let frac = if seg > 1e-300 { (t - arc[m - 1]) / seg } else { 0.0 };
        let a = s.vertices[verts[m - 1]];
        let b = s.vertices[verts[0]];
        return vec3::add(a, vec3::scale(vec3::sub(b, a), frac));
    }
    let seg = arc[hi] - arc[lo];
    let frac = if seg > 1e-300 { (t - arc[lo]) / seg } else { 0.0 };
    let a = s.vertices[verts[lo]];
    let b = s.vertices[verts[hi]];
    vec3::add(a, vec3::scale(vec3::sub(b, a), frac))
}

/// Signed curvature of the circumcircle through three points; positive
/// when the curve bends away from `nu` (a circle with outward normals
/// has curvature +1/r).
fn signed_circumcurvature(a: Point, b: Point, c: Point, nu: Point) -> f64 {
    let ab = vec3::sub(b, a);
    let ac = vec3::sub(c, a);
    let cross = ab[0] * ac[1] - ab[1] * ac[0];
    let la = vec3::dist(b, c);
    let lb = vec3::dist(a, c);
    let lc = vec3::dist(a, b);
    let denom = la * lb * lc;
    if denom < 1e-300 {
        return 0.0;
    }
    let kappa = 2.0 * cross.abs() / denom;
    if kappa == 0.0 {
        return 0.0;
    }
    let mid = vec3::scale(vec3::add(a, c), 0.5);
    let bend = vec3::sub(mid, b);
    if vec3::dot(bend, nu) <= 0.0 {
        kappa
    } else {
        -kappa
    }
}

/// Spread of the weighted mean curvature over interior vertices away
/// from the body boundary: (standard deviation, mean of |H|).
///
/// Vertices within `1.5 h` of the boundary are excluded from the
/// statistics (contact-zone pollution).
pub fn weighted_cmc_spread(
    s: &Interface,
    cur: &CurvatureData,
    body: Option<&ConvexBody>,
) -> (f64, f64) {
    let mut vals = Vec::new();
    for i in 0..s.vertices.len() {
        if !cur.interior[i] {
            continue;
        }
        if let Some(b) = body {
            if b.boundary_distance(s.vertices[i]) < 1.5 * s.h {
                continue;
            }
        }
        vals.push(cur.h_mu[i]);
    }
    if vals.is_empty() {
        return (0.0, 0.0);
    }
    let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
    let var: f64 =
        vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
    let mean_abs: f64 = vals.iter().map(|v| v.abs()).sum::<f64>() / vals.len() as f64;
    (var.sqrt(), mean_abs)
}

/// Contact angle report for one interface endpoint.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ContactAngle {
    pub vertex: usize,
    pub angle_degrees: f64,
    pub deviation_degrees: f64,
}

/// Angle between the interface tangent at each endpoint and the boundary
/// tangent of the body, reported as deviation from 90 degrees.
pub fn contact_angle(
    s: &Interface,
    body: &ConvexBody,
) -> Result<Vec<ContactAngle>, SurfaceError> {
    if s.boundary_vertices.is_empty() {
        return Err(SurfaceError::NoBoundaryVertices);
    }
    let limit = 2.0 * s.h.max(1e-9);
    let mut out = Vec::new();
    for chain in s.chains() {
        if chain.closed {
            continue;
        }
        let m = chain.vertices.len();
        for (end, dir) in [(0usize, 1isize), (m - 1, -1isize)] {
            let v = chain.vertices[end];
            let p = s.vertices[v];
            let dist = body.boundary_distance(p);
            if dist > limit {
                return Err(SurfaceError::ContactClassification {
                    point: p,
                    distance: dist,
                    limit,
                });
            }
            // chord tangent over the first ~3h of arc
            let mut far = v;
            let mut k = end as isize;
            let mut arc = 0.0;
            while arc < 3.0 * s.h.max(1e-9) {
                let next = k + dir;
                if next < 0 || next >= m as isize {
                    break;
                }
                let nv = chain.vertices[next as usize];
                arc += vec3::dist(s.vertices[far], s.vertices[nv]);
                far = nv;
                k = next;
            }
            let tangent = match vec3::unit(vec3::sub(s.vertices[far], p)) {
                Some(t) => t,
                None => continue,
            };
            let facet = body.nearest_facet(p);
            let boundary_tangent = vec3::perp2(body.halfspaces[facet].normal);
            let cosang = vec3::dot(tangent, boundary_tangent).abs().min(1.0);
            let angle = cosang.acos().to_degrees();
            out.push(ContactAngle {
                vertex: v,
                angle_degrees: angle,
                deviation_degrees: (angle - 90.0).abs(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GraphFit {
    /// Graph ("vertical") direction minimizing the Lipschitz constant.
    pub direction: Point,
    pub lipschitz: f64,
    pub is_graph: bool,
}

/// Scans 720 directions (0.25 degree resolution over a half turn) for
/// those in which the interface is single-valued over the orthogonal
/// axis, and returns the one with the smallest maximum slope between
/// consecutive vertices. `is_graph = false` with infinite constant when
/// no direction works.
pub fn graph_fit(s: &Interface) -> GraphFit {
    let chains = s.chains();
    let scan = 720usize;
    let mut best: Option<(f64, Point)> = None;
    for k in 0..scan {
        let theta = std::f64::consts::PI * k as f64 / scan as f64;
        let a = vec3::dir2(theta); // candidate vertical
        let u = vec3::perp2(a); // horizontal axis
        let mut max_slope: f64 = 0.0;
        let mut ok = true;
        let mut ranges: Vec<(f64, f64)> = Vec::new();
        for chain in &chains {
            if chain.closed {
                ok = false;
                break;
            }
            let us: Vec<f64> = chain
                .vertices
                .iter()
                .map(|&v| vec3::dot(s.vertices[v], u))
                .collect();
            let vs: Vec<f64> = chain
                .vertices
                .iter()
                .map(|&v| vec3::dot(s.vertices[v], a))
                .collect();
            let mut sign = 0.0f64;
            for i in 0..us.len() - 1 {
                let du = us[i + 1] - us[i];
                let dv = vs[i + 1] - vs[i];
                if du.abs() < 1e-14 {
                    if dv.abs() < 1e-14 {
                        continue; // duplicate point
                    }
                    ok = false;
                    break;
                }
                if sign == 0.0 {
                    sign = du.signum();
                } else if du.signum() != sign {
                    ok = false; // not single-valued over the axis
                    break;
                }
                max_slope = max_slope.max((dv / du).abs());
            }
            if !ok {
                break;
            }
            let lo = us.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ranges.push((lo, hi));
        }
        if !ok {
            continue;
        }
        // chains must occupy disjoint horizontal ranges
        ranges.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        for w in ranges.windows(2) {
            if w[1].0 < w[0].1 - 1e-12 {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        match best {
            Some((l, _)) if l <= max_slope => {}
            _ => best = Some((max_slope, a)),
        }
    }
    match best {
        Some((l, a)) => GraphFit {
            direction: a,
            lipschitz: l,
            is_graph: true,
        },
        None => GraphFit {
            direction: [0.0, 0.0, 0.0],
            lipschitz: f64::INFINITY,
            is_graph: false,
        },
    }
}

#[derive(Debug, Clone)]
pub struct IntrinsicRatio {
    pub max_ratio: f64,
    /// Some pairs were in different components.
    pub disconnected: bool,
}

/// Maximum over the given vertex pairs of intrinsic (shortest-path along
/// the interface graph) over extrinsic (straight-line) distance.
pub fn intrinsic_extrinsic_ratio(s: &Interface, pairs: &[(usize, usize)]) -> IntrinsicRatio {
    let adj = s.adjacency();
    let mut max_ratio: f64 = 0.0;
    let mut disconnected = false;
    for &(p, q) in pairs {
        match dijkstra(s, &adj, p, q) {
            Some(dpq) => {
                let chord = vec3::dist(s.vertices[p], s.vertices[q]);
                if chord > 1e-12 {
                    max_ratio = max_ratio.max(dpq / chord);
                }
            }
            None => disconnected = true,
        }
    }
    IntrinsicRatio {
        max_ratio,
        disconnected,
    }
}

fn dijkstra(s: &Interface, adj: &[Vec<usize>], from: usize, to: usize) -> Option<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0
                .partial_cmp(&other.0)
                .unwrap_or(std::cmp::Ordering::Equal)
        }
    }
    let mut dist = vec![f64::INFINITY; s.vertices.len()];
    dist[from] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Entry(0.0, from)));
    while let Some(Reverse(Entry(d, v))) = heap.pop() {
        if v == to {
            return Some(d);
        }
        if d > dist[v] {
            continue;
        }
        for &w in &adj[v] {
            let nd = d + vec3::dist(s.vertices[v], s.vertices[w]);
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Reverse(Entry(nd, w)));
            }
        }
    }
    None
}

/// Outward boundary curvature of the body at a contact point, evaluated
/// on the tangential component of the conormal. Zero on polytope facets;
/// analytic for m-gon approximations of disks. Corner contacts (two
/// active facets) return the exterior angle smeared over `smear`, with a
/// flag marking the divergent limit.
pub fn boundary_second_fundamental(
    body: &ConvexBody,
    p: Point,
    conormal: Point,
    smear: f64,
) -> (f64, bool) {
    if let BodyKind::Disk { radius, .. } = body.kind {
        let t = vec3::perp2(vec3::unit(p).unwrap_or([1.0, 0.0, 0.0]));
        let c = vec3::dot(conormal, t);
        return (c * c / radius, false);
    }
    let active = body.active_facets(p, 2.0 * smear.max(1e-9));
    if active.len() >= 2 {
        let n1 = body.halfspaces[active[0]].normal;
        let n2 = body.halfspaces[active[1]].normal;
        let exterior = vec3::dot(n1, n2).clamp(-1.0, 1.0).acos();
        (exterior / smear.max(1e-9), true)
    } else {
        (0.0, false)
    }
}

/// Max distance from interface vertices to the line through `point` with
/// direction `dir`.
pub fn hausdorff_to_line(s: &Interface, point: Point, dir: Point) -> f64 {
    let d = vec3::unit(dir).expect("zero line direction");
    let mut worst: f64 = 0.0;
    for v in &s.vertices {
        let rel = vec3::sub(*v, point);
        let along = vec3::dot(rel, d);
        let off = vec3::dist(rel, vec3::scale(d, along));
        worst = worst.max(off);
    }
    worst
}

/// Best line through the origin fitting the interface vertices (total
/// least squares), returning (direction, max offset).
pub fn best_line_through_origin(s: &Interface) -> (Point, f64) {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for v in &s.vertices {
        sxx += v[0] * v[0];
        sxy += v[0] * v[1];
        syy += v[1] * v[1];
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc;
    let dir = if sxy.abs() > 1e-300 {
        vec3::unit([sxy, l1 - sxx, 0.0]).unwrap()
    } else if sxx >= syy {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    (dir, hausdorff_to_line(s, vec3::ORIGIN, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::ConvexBody;
    use crate::field::{Grid, ScalarField};
    use crate::measure::Density;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn square_grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::cube(2, 1.0, n))
    }

    #[test]
    fn extract_horizontal_line() {
        let grid = square_grid(64);
        let f = ScalarField::from_fn(grid, |p| p[1]);
        let s = extract(&f, 0.0).unwrap();
        let len = euclidean_length(&s);
        assert!((len - 2.0).abs() < 0.04, "length {len}");
        for v in &s.vertices {
            assert!(v[1].abs() < 1e-12);
        }
        // normals point out of {y > 0}: -e_y
        for n in &s.normals {
            assert!(n[1] < -0.99);
        }
    }

    #[test]
    fn extract_circle_converges() {
        let r = 0.5;
        let lens: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let grid = square_grid(n);
                let f = ScalarField::from_fn(grid, |p| p[0] * p[0] + p[1] * p[1] - r * r);
                euclidean_length(&extract(&f, 0.0).unwrap())
            })
            .collect();
        let exact = 2.0 * PI * r;
        let errs: Vec<f64> = lens.iter().map(|l| (l - exact).abs()).collect();
        assert!(errs[2] < 2e-3, "errors {errs:?}");
        assert!(errs[2] < errs[0], "errors {errs:?}");
    }

    #[test]
    fn extract_no_zero_errors() {
        let grid = square_grid(32);
        let f = ScalarField::from_fn(grid, |_| 1.0);
        assert!(matches!(extract(&f, 0.0), Err(SurfaceError::EmptyInterface)));
    }

    #[test]
    fn perimeter_weighted_examples() {
        // diameter of the unit disk under the normalized uniform weight:
        // length 2 / area pi
        let disk = ConvexBody::disk(1.0, 256).unwrap();
        let d = Density::uniform(disk);
        let s = Interface::segment([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 200);
        let p = perimeter(&s, &d);
        assert!((p - 2.0 / PI).abs() < 1e-3, "weighted {p}");
        assert!((euclidean_length(&s) - 2.0).abs() < 1e-12);
        // bisecting line under the standard gaussian: 1/sqrt(2 pi)
        let g = Density::gaussian(2, 1.0);
        let r = g.truncation_radius;
        let line = Interface::segment([-r, 0.0, 0.0], [r, 0.0, 0.0], 4000);
        let pg = perimeter(&line, &g);
        assert!(
            (pg - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-3,
            "gaussian cut {pg}"
        );
    }

    #[test]
    fn curvature_straight_and_circle() {
        let d = Density::uniform(ConvexBody::square(2.0).unwrap());
        let seg = Interface::segment([-1.0, -0.3, 0.0], [1.0, 0.4, 0.0], 50);
        let c = curvature(&seg, &d).unwrap();
        for i in 0..seg.vertices.len() {
            assert!(c.h_s[i].abs() < 1e-9);
            assert!(c.h_mu[i].abs() < 1e-9);
        }
        let r = 0.7;
        let circ = Interface::circle(r, 256);
        let c = curvature(&circ, &d).unwrap();
        for i in 0..circ.vertices.len() {
            assert!((c.h_s[i] - 1.0 / r).abs() < 1e-9, "kappa {}", c.h_s[i]);
            assert!((c.a_sq[i] - 1.0 / (r * r)).abs() < 1e-6);
        }
    }

    #[test]
    fn curvature_weighted_constant_on_circle() {
        // V = |x|^2 (gaussian with sigma^2 = 1/2): the weighted mean
        // curvature on the unit circle is 1 - 2 = -1, constant.
        let d = Density::gaussian(2, 0.5f64.sqrt());
        let circ = Interface::circle(1.0, 512);
        let c = curvature(&circ, &d).unwrap();
        for i in 0..circ.vertices.len() {
            assert!((c.h_mu[i] + 1.0).abs() < 1e-9, "H_mu {}", c.h_mu[i]);
        }
        let (spread, _) = weighted_cmc_spread(&circ, &c, None);
        assert!(spread < 1e-10);
    }

    #[test]
    fn curvature_convergence_order() {
        let d = Density::uniform(ConvexBody::square(2.0).unwrap());
        let errs: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| {
                let grid = square_grid(n);
                // E = {f > 0} is the disk, so normals point outward
                let f =
                    ScalarField::from_fn(grid, |p| 0.25 - p[0] * p[0] - p[1] * p[1]);
                let s = extract(&f, 0.0).unwrap();
                let c = curvature(&s, &d).unwrap();
                let mut acc = 0.0;
                let mut cnt = 0usize;
                for i in 0..s.vertices.len() {
                    if c.interior[i] {
                        acc += (c.h_s[i] - 2.0).abs();
                        cnt += 1;
                    }
                }
                acc / cnt as f64
            })
            .collect();
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order >= 1.0, "order {order}, errs {errs:?}");
    }

    #[test]
    fn contact_angles_diameter_in_disk() {
        let disk = ConvexBody::disk(1.0, 256).unwrap();
        let mut s = Interface::segment([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 100);
        s.h = 0.02;
        let angles = contact_angle(&s, &disk).unwrap();
        assert_eq!(angles.len(), 2);
        for a in angles {
            assert!(a.deviation_degrees < 1.0, "deviation {}", a.deviation_degrees);
        }
    }

    #[test]
    fn contact_classification_error_far_endpoint() {
        let disk = ConvexBody::disk(1.0, 64).unwrap();
        let mut s = Interface::segment([-0.5, 0.0, 0.0], [0.5, 0.0, 0.0], 10);
        s.h = 0.01;
        assert!(matches!(
            contact_angle(&s, &disk),
            Err(SurfaceError::ContactClassification { .. })
        ));
    }

    #[test]
    fn graph_fit_segment_and_vee() {
        let seg = Interface::segment([-1.0, 0.2, 0.0], [1.0, 0.2, 0.0], 30);
        let fit = graph_fit(&seg);
        assert!(fit.is_graph);
        assert!(fit.lipschitz < 1e-9, "L {}", fit.lipschitz);
        // V shape with slopes +-1: best direction is the bisector, L = 1
        let mut pts = Vec::new();
        for k in 0..41 {
            let x = -1.0 + k as f64 / 20.0;
            pts.push([x, x.abs(), 0.0]);
        }
        let normals = vec![[0.0, 1.0, 0.0]; pts.len()];
        let vee = Interface::polyline(pts, normals);
        let fit = graph_fit(&vee);
        assert!(fit.is_graph);
        assert!((fit.lipschitz - 1.0).abs() < 0.01, "L {}", fit.lipschitz);
        assert!(fit.direction[1].abs() > 0.99, "direction {:?}", fit.direction);
    }

    #[test]
    fn graph_fit_circle_not_graph() {
        let fit = graph_fit(&Interface::circle(1.0, 128));
        assert!(!fit.is_graph);
        assert!(fit.lipschitz.is_infinite());
    }

    #[test]
    fn intrinsic_ratio_examples() {
        let seg = Interface::segment([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 20);
        let r = intrinsic_extrinsic_ratio(&seg, &[(0, 19)]);
        assert!((r.max_ratio - 1.0).abs() < 1e-9);
        // semicircle: arc/chord = pi/2
        let mut pts = Vec::new();
        for k in 0..201 {
            let th = PI * k as f64 / 200.0;
            pts.push([th.cos(), th.sin(), 0.0]);
        }
        let normals: Vec<Point> = pts.iter().map(|p| vec3::unit(*p).unwrap()).collect();
        let semi = Interface::polyline(pts, normals);
        let r = intrinsic_extrinsic_ratio(&semi, &[(0, 200)]);
        assert!((r.max_ratio - PI / 2.0).abs() < 0.02, "ratio {}", r.max_ratio);
        assert!(!r.disconnected);
    }

    #[test]
    fn length_rotation_invariance() {
        // anisotropy bound: extracted length of a rotated ellipse moves
        // by under 2%
        let grid = square_grid(128);
        let ellipse = |angle: f64| {
            let f = ScalarField::from_fn(grid.clone(), move |p| {
                let c = angle.cos();
                let s = angle.sin();
                let x = c * p[0] + s * p[1];
                let y = -s * p[0] + c * p[1];
                (x / 0.7) * (x / 0.7) + (y / 0.4) * (y / 0.4) - 1.0
            });
            euclidean_length(&extract(&f, 0.0).unwrap())
        };
        let l0 = ellipse(0.0);
        let l1 = ellipse(0.5);
        assert!((l0 - l1).abs() / l0 < 0.02, "l0 {l0} l1 {l1}");
    }
}
