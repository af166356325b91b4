//! Convex bodies as halfspace intersections, plus cones, hulls, and
//! support queries.
//!
//! Bodies are stored as `{x : n_i . x >= c_i}` intersections. Smooth
//! bodies (disk) are approximated by regular m-gon halfspace sets so that
//! one representation serves quadrature masks, hulls, and support
//! queries. Vertices are enumerated at construction, which also validates
//! boundedness and a nonempty interior.

use crate::vec3::{self, Point};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for unit-normal validation.
pub const NORMAL_TOL: f64 = 1e-12;
/// Tolerance for the symmetric-pair invariant.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Margin used by the interior containment test.
pub const CONTAINS_MARGIN: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ConvexError {
    #[error("dimension mismatch: body is {body}D, point is {point}D")]
    DimensionMismatch { body: usize, point: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("body has empty interior")]
    EmptyInterior,
    #[error("body is unbounded")]
    Unbounded,
    #[error("body marked symmetric but halfspace ({normal:?}, {offset}) lacks its mirror")]
    AsymmetricHalfspaces { normal: Point, offset: f64 },
    #[error("invalid cone: {0}")]
    InvalidCone(String),
}

/// Closed halfspace `{x : normal . x >= offset}` with a unit normal.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Point,
    pub offset: f64,
}

impl Halfspace {
    /// Normalizes the given normal; rejects near-zero input.
    pub fn new(normal: Point, offset: f64) -> Result<Self, ConvexError> {
        let n = vec3::norm(normal);
        if n < 1e-14 {
            return Err(ConvexError::Degenerate("zero halfspace normal".into()));
        }
        Ok(Halfspace {
            normal: vec3::scale(normal, 1.0 / n),
            offset: offset / n,
        })
    }

    #[inline]
    pub fn contains(&self, x: Point) -> bool {
        vec3::dot(self.normal, x) >= self.offset - CONTAINS_MARGIN
    }

    /// Signed slack `normal . x - offset`; nonnegative inside.
    #[inline]
    pub fn slack(&self, x: Point) -> f64 {
        vec3::dot(self.normal, x) - self.offset
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Point,
    pub hi: Point,
}

impl Aabb {
    pub fn extent(&self) -> Point {
        vec3::sub(self.hi, self.lo)
    }
}

/// How the body was generated. Carries the analytic data that a facet
/// list cannot, e.g. the boundary curvature of a disk approximated by an
/// m-gon.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum BodyKind {
    Square { half_width: f64 },
    Box { half_widths: [f64; 3] },
    Disk { radius: f64, facets: usize },
    Polygon,
    Hull,
}

/// Bounded convex domain as a halfspace intersection.
#[derive(Debug, Clone)]
pub struct ConvexBody {
    pub dim: usize,
    pub halfspaces: Vec<Halfspace>,
    pub bbox: Aabb,
    pub symmetric: bool,
    pub kind: BodyKind,
    vertices: Vec<Point>,
    interior_point: Point,
}

impl ConvexBody {
    /// Validates invariants and enumerates vertices.
    pub fn new(
        dim: usize,
        halfspaces: Vec<Halfspace>,
        symmetric: bool,
        kind: BodyKind,
    ) -> Result<Self, ConvexError> {
        assert!(dim == 2 || dim == 3, "dim must be 2 or 3");
        for h in &halfspaces {
            if (vec3::norm(h.normal) - 1.0).abs() > NORMAL_TOL {
                return Err(ConvexError::Degenerate("non-unit halfspace normal".into()));
            }
            if dim == 2 && h.normal[2].abs() > NORMAL_TOL {
                return Err(ConvexError::Degenerate(
                    "2D halfspace normal with z component".into(),
                ));
            }
        }
        if symmetric {
            for h in &halfspaces {
                let mirrored = halfspaces.iter().any(|g| {
                    vec3::dist(g.normal, vec3::scale(h.normal, -1.0)) < SYMMETRY_TOL
                        && (g.offset - h.offset).abs() < SYMMETRY_TOL
                });
                if !mirrored {
                    return Err(ConvexError::AsymmetricHalfspaces {
                        normal: h.normal,
                        offset: h.offset,
                    });
                }
            }
        }
        if dim == 2 && !normals_span_plane(&halfspaces) {
            return Err(ConvexError::Unbounded);
        }
        let vertices = if dim == 2 {
            enumerate_vertices_2d(&halfspaces)?
        } else {
            enumerate_vertices_3d(&halfspaces)?
        };
        if vertices.len() < dim + 1 {
            return Err(ConvexError::EmptyInterior);
        }
        let mut interior = vec3::ORIGIN;
        for v in &vertices {
            interior = vec3::add(interior, *v);
        }
        interior = vec3::scale(interior, 1.0 / vertices.len() as f64);
        let margin = halfspaces
            .iter()
            .map(|h| h.slack(interior))
            .fold(f64::INFINITY, f64::min);
        if margin <= 1e-12 {
            return Err(ConvexError::EmptyInterior);
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        if dim == 2 {
            lo[2] = 0.0;
            hi[2] = 0.0;
        }
        Ok(ConvexBody {
            dim,
            halfspaces,
            bbox: Aabb { lo, hi },
            symmetric,
            kind,
            vertices,
            interior_point: interior,
        })
    }

    /// Axis-aligned square `[-half, half]^2`.
    pub fn square(half_width: f64) -> Result<Self, ConvexError> {
        Self::box_body(2, [half_width, half_width, 0.0], BodyKind::Square { half_width })
    }

    /// Square translated so its corner sits at the origin: `[0, side]^2`.
    pub fn unit_square_at_origin(side: f64) -> Result<Self, ConvexError> {
        let hs = vec![
            Halfspace::new([1.0, 0.0, 0.0], 0.0)?,
            Halfspace::new([-1.0, 0.0, 0.0], -side)?,
            Halfspace::new([0.0, 1.0, 0.0], 0.0)?,
            Halfspace::new([0.0, -1.0, 0.0], -side)?,
        ];
        Self::new(2, hs, false, BodyKind::Polygon)
    }

    /// Axis-aligned box `prod [-w_d, w_d]`.
    pub fn box_body(dim: usize, half_widths: [f64; 3], kind: BodyKind) -> Result<Self, ConvexError> {
        let mut hs = Vec::new();
        for d in 0..dim {
            let mut n = vec3::ORIGIN;
            n[d] = 1.0;
            hs.push(Halfspace::new(n, -half_widths[d])?);
            n[d] = -1.0;
            hs.push(Halfspace::new(n, -half_widths[d])?);
        }
        Self::new(dim, hs, true, kind)
    }

    /// Axis-aligned rectangle `[-wx, wx] x [-wy, wy]`.
    pub fn rectangle(wx: f64, wy: f64) -> Result<Self, ConvexError> {
        let mut b = Self::box_body(2, [wx, wy, 0.0], BodyKind::Polygon)?;
        b.symmetric = true;
        Ok(b)
    }

    /// Disk of radius `r` as a regular `m`-gon of tangent halfspaces:
    /// inradius `r`, circumradius `r / cos(pi/m)`.
    pub fn disk(radius: f64, facets: usize) -> Result<Self, ConvexError> {
        assert!(facets >= 8);
        let hs = (0..facets)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / facets as f64;
                Halfspace::new(vec3::scale(vec3::dir2(th), -1.0), -radius)
            })
            .collect::<Result<Vec<_>, _>>()?;
        // A halfspace count divisible by 2 with the half-step phase gives
        // exact mirror pairs, so the symmetric claim validates.
        Self::new(2, hs, facets % 2 == 0, BodyKind::Disk { radius, facets })
    }

    /// Regular m-gon with circumradius `r` and phase `phase`.
    pub fn regular_polygon(r: f64, m: usize, phase: f64) -> Result<Self, ConvexError> {
        assert!(m >= 3);
        let pts: Vec<Point> = (0..m)
            .map(|k| {
                let th = phase + 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                vec3::scale(vec3::dir2(th), r)
            })
            .collect();
        convex_hull(&pts, 2)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn interior_point(&self) -> Point {
        self.interior_point
    }

    /// Area (2D) or volume (3D).
    pub fn volume(&self) -> f64 {
        if self.dim == 2 {
            polygon_area(&order_ccw(&self.vertices))
        } else {
            hull_volume_3d(&self.vertices)
        }
    }

    /// Distance from an interior point to the boundary. Exact for
    /// halfspace intersections.
    pub fn boundary_distance(&self, x: Point) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.slack(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Halfspace whose facet is nearest to `x`.
    pub fn nearest_facet(&self, x: Point) -> usize {
        let mut best = 0;
        let mut best_slack = f64::INFINITY;
        for (i, h) in self.halfspaces.iter().enumerate() {
            let s = h.slack(x).abs();
            if s < best_slack {
                best_slack = s;
                best = i;
            }
        }
        best
    }

    /// Facets active (within `tol`) at `x`; two or more means a corner.
    pub fn active_facets(&self, x: Point, tol: f64) -> Vec<usize> {
        self.halfspaces
            .iter()
            .enumerate()
            .filter(|(_, h)| h.slack(x).abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Membership test: `normal . x >= offset` for every halfspace.
pub fn contains(body: &ConvexBody, x: Point, x_dim: usize) -> Result<bool, ConvexError> {
    if x_dim != body.dim {
        return Err(ConvexError::DimensionMismatch {
            body: body.dim,
            point: x_dim,
        });
    }
    Ok(body.halfspaces.iter().all(|h| h.contains(x)))
}

/// Support function `h(a) = max_{x in body} a . x`, evaluated over the
/// vertex enumeration.
pub fn support(body: &ConvexBody, direction: Point) -> Result<f64, ConvexError> {
    if (vec3::norm(direction) - 1.0).abs() > 1e-9 {
        return Err(ConvexError::Degenerate("support direction not unit".into()));
    }
    if body.vertices.is_empty() {
        return Err(ConvexError::Unbounded);
    }
    Ok(body
        .vertices
        .iter()
        .map(|v| vec3::dot(*v, direction))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Minimal convex polytope containing the points, as a halfspace list.
pub fn convex_hull(points: &[Point], dim: usize) -> Result<ConvexBody, ConvexError> {
    match dim {
        2 => convex_hull_2d(points),
        3 => convex_hull_3d(points),
        _ => Err(ConvexError::Degenerate("hull dimension must be 2 or 3".into())),
    }
}

/// Open circular cone.
#[derive(Debug, Clone, Copy)]
pub struct Cone {
    pub apex: Point,
    pub axis: Point,
    pub half_angle: f64,
}

impl Cone {
    pub fn new(apex: Point, axis: Point, half_angle: f64) -> Result<Self, ConvexError> {
        let axis = vec3::unit(axis)
            .ok_or_else(|| ConvexError::InvalidCone("zero axis".into()))?;
        if !(half_angle > 0.0 && half_angle <= std::f64::consts::FRAC_PI_2) {
            return Err(ConvexError::InvalidCone(format!(
                "half angle {half_angle} outside (0, pi/2]"
            )));
        }
        Ok(Cone {
            apex,
            axis,
            half_angle,
        })
    }
}

/// True iff the angle between `x - apex` and the axis is at most the half
/// angle. The apex itself is excluded (the cone is open).
pub fn cone_contains(cone: &Cone, x: Point) -> bool {
    let d = vec3::sub(x, cone.apex);
    let r = vec3::norm(d);
    if r < 1e-300 {
        return false;
    }
    let c = vec3::dot(d, cone.axis) / r;
    c >= cone.half_angle.cos() - 1e-12
}

fn normals_span_plane(hs: &[Halfspace]) -> bool {
    if hs.len() < 3 {
        return false;
    }
    let mut angles: Vec<f64> = hs.iter().map(|h| h.normal[1].atan2(h.normal[0])).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut max_gap: f64 = 0.0;
    for i in 0..angles.len() {
        let next = if i + 1 < angles.len() {
            angles[i + 1]
        } else {
            angles[0] + 2.0 * std::f64::consts::PI
        };
        max_gap = max_gap.max(next - angles[i]);
    }
    max_gap < std::f64::consts::PI - 1e-9
}

fn enumerate_vertices_2d(hs: &[Halfspace]) -> Result<Vec<Point>, ConvexError> {
    let m = hs.len();
    let mut verts: Vec<Point> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let a = hs[i].normal;
            let b = hs[j].normal;
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (hs[i].offset * b[1] - hs[j].offset * a[1]) / det;
            let y = (a[0] * hs[j].offset - b[0] * hs[i].offset) / det;
            let p = [x, y, 0.0];
            if hs.iter().all(|h| h.slack(p) >= -1e-9) {
                if !verts.iter().any(|v| vec3::dist(*v, p) < 1e-9) {
                    verts.push(p);
                }
            }
        }
    }
    Ok(verts)
}

fn enumerate_vertices_3d(hs: &[Halfspace]) -> Result<Vec<Point>, ConvexError> {
    let m = hs.len();
    let mut verts: Vec<Point> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            for k in (j + 1)..m {
                if let Some(p) = plane_intersection_3(&hs[i], &hs[j], &hs[k]) {
                    if hs.iter().all(|h| h.slack(p) >= -1e-9)
                        && !verts.iter().any(|v| vec3::dist(*v, p) < 1e-9)
                    {
                        verts.push(p);
                    }
                }
            }
        }
    }
    Ok(verts)
}

fn plane_intersection_3(a: &Halfspace, b: &Halfspace, c: &Halfspace) -> Option<Point> {
    // Solve [n_a; n_b; n_c] x = [c_a; c_b; c_c] by Cramer's rule.
    let det = vec3::dot(a.normal, vec3::cross(b.normal, c.normal));
    if det.abs() < 1e-12 {
        return None;
    }
    let t = vec3::add(
        vec3::add(
            vec3::scale(vec3::cross(b.normal, c.normal), a.offset),
            vec3::scale(vec3::cross(c.normal, a.normal), b.offset),
        ),
        vec3::scale(vec3::cross(a.normal, b.normal), c.offset),
    );
    Some(vec3::scale(t, 1.0 / det))
}

/// CCW ordering of an unordered convex polygon vertex set.
pub fn order_ccw(verts: &[Point]) -> Vec<Point> {
    let mut c = vec3::ORIGIN;
    for v in verts {
        c = vec3::add(c, *v);
    }
    c = vec3::scale(c, 1.0 / verts.len() as f64);
    let mut out = verts.to_vec();
    out.sort_by(|a, b| {
        let ta = (a[1] - c[1]).atan2(a[0] - c[0]);
        let tb = (b[1] - c[1]).atan2(b[0] - c[0]);
        ta.partial_cmp(&tb).unwrap()
    });
    out
}

/// Shoelace area of a CCW-ordered polygon.
pub fn polygon_area(verts: &[Point]) -> f64 {
    let n = verts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = verts[i];
        let q = verts[(i + 1) % n];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    acc.abs() / 2.0
}

fn convex_hull_2d(points: &[Point]) -> Result<ConvexBody, ConvexError> {
    if points.len() < 3 {
        return Err(ConvexError::Degenerate(
            "need at least dim+1 points for a 2D hull".into(),
        ));
    }
    // Andrew's monotone chain.
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        a[0].partial_cmp(&b[0])
            .unwrap()
            .then(a[1].partial_cmp(&b[1]).unwrap())
    });
    pts.dedup_by(|a, b| vec3::dist(*a, *b) < 1e-12);
    if pts.len() < 3 {
        return Err(ConvexError::Degenerate("all hull points coincide".into()));
    }
    let cross2 = |o: Point, a: Point, b: Point| -> f64 {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross2(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    let hull: Vec<Point> = lower.into_iter().chain(upper).collect();
    if hull.len() < 3 {
        return Err(ConvexError::Degenerate(
            "points are affinely dependent (collinear)".into(),
        ));
    }
    let mut hs = Vec::with_capacity(hull.len());
    for i in 0..hull.len() {
        let p = hull[i];
        let q = hull[(i + 1) % hull.len()];
        let edge = vec3::sub(q, p);
        // Inward normal for CCW ordering is the +90 degree rotation.
        let n = vec3::perp2(edge);
        hs.push(Halfspace::new(n, vec3::dot(n, p))?);
    }
    ConvexBody::new(2, hs, false, BodyKind::Hull)
}

fn convex_hull_3d(points: &[Point]) -> Result<ConvexBody, ConvexError> {
    let faces = incremental_hull_3d(points)?;
    let mut hs: Vec<Halfspace> = Vec::new();
    for f in &faces {
        let h = Halfspace::new(vec3::scale(f.normal, -1.0), -f.offset)?;
        if !hs
            .iter()
            .any(|g| vec3::dist(g.normal, h.normal) < 1e-9 && (g.offset - h.offset).abs() < 1e-9)
        {
            hs.push(h);
        }
    }
    ConvexBody::new(3, hs, false, BodyKind::Hull)
}

struct HullFace {
    v: [usize; 3],
    normal: Point, // outward
    offset: f64,   // normal . x = offset on the face plane
}

fn incremental_hull_3d(points: &[Point]) -> Result<Vec<HullFace>, ConvexError> {
    if points.len() < 4 {
        return Err(ConvexError::Degenerate(
            "need at least dim+1 points for a 3D hull".into(),
        ));
    }
    let eps = {
        let mut span: f64 = 0.0;
        for d in 0..3 {
            let lo = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
            span = span.max(hi - lo);
        }
        1e-10 * span.max(1e-30)
    };
    // Initial tetrahedron from affinely independent picks.
    let i0 = 0;
    let i1 = (1..points.len())
        .find(|&i| vec3::dist(points[i], points[i0]) > eps)
        .ok_or_else(|| ConvexError::Degenerate("all points coincide".into()))?;
    let e1 = vec3::sub(points[i1], points[i0]);
    let i2 = (1..points.len())
        .find(|&i| vec3::norm(vec3::cross(e1, vec3::sub(points[i], points[i0]))) > eps * vec3::norm(e1))
        .ok_or_else(|| ConvexError::Degenerate("points are collinear".into()))?;
    let n0 = vec3::cross(e1, vec3::sub(points[i2], points[i0]));
    let i3 = (1..points.len())
        .find(|&i| vec3::dot(n0, vec3::sub(points[i], points[i0])).abs() > eps * vec3::norm(n0))
        .ok_or_else(|| ConvexError::Degenerate("points are coplanar".into()))?;

    let make_face = |a: usize, b: usize, c: usize, inside: Point| -> HullFace {
        let n = vec3::cross(
            vec3::sub(points[b], points[a]),
            vec3::sub(points[c], points[a]),
        );
        let n = vec3::unit(n).expect("degenerate face");
        let off = vec3::dot(n, points[a]);
        if vec3::dot(n, inside) > off {
            HullFace {
                v: [a, c, b],
                normal: vec3::scale(n, -1.0),
                offset: -off,
            }
        } else {
            HullFace {
                v: [a, b, c],
                normal: n,
                offset: off,
            }
        }
    };
    let centroid = vec3::scale(
        vec3::add(
            vec3::add(points[i0], points[i1]),
            vec3::add(points[i2], points[i3]),
        ),
        0.25,
    );
    let mut faces = vec![
        make_face(i0, i1, i2, centroid),
        make_face(i0, i1, i3, centroid),
        make_face(i0, i2, i3, centroid),
        make_face(i1, i2, i3, centroid),
    ];

    // Insert far points first so most later points land inside quickly.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let da = vec3::dist(points[a], centroid);
        let db = vec3::dist(points[b], centroid);
        db.partial_cmp(&da).unwrap()
    });

    for &pi in &order {
        let p = points[pi];
        let visible: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| vec3::dot(f.normal, p) - f.offset > eps)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            continue;
        }
        // Horizon: edges of visible faces shared with exactly one visible face.
        use std::collections::HashMap;
        let mut edge_count: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                let a = v[k];
                let b = v[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                let e = edge_count.entry(key).or_insert((0, 0));
                e.0 += 1;
                // remember oriented edge (a->b) of this visible face
                e.1 = if a < b { 0 } else { 1 };
            }
        }
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                let a = v[k];
                let b = v[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                if edge_count[&key].0 == 1 {
                    horizon.push((a, b));
                }
            }
        }
        let mut keep: Vec<HullFace> = Vec::new();
        for (i, f) in faces.drain(..).enumerate() {
            if !visible.contains(&i) {
                keep.push(f);
            }
        }
        for (a, b) in horizon {
            keep.push(make_face(a, b, pi, centroid));
        }
        faces = keep;
    }
    Ok(faces)
}

fn hull_volume_3d(verts: &[Point]) -> f64 {
    let faces = match incremental_hull_3d(verts) {
        Ok(f) => f,
        Err(_) => return 0.0,
    };
    let mut c = vec3::ORIGIN;
    for v in verts {
        c = vec3::add(c, *v);
    }
    c = vec3::scale(c, 1.0 / verts.len() as f64);
    let mut vol = 0.0;
    for f in &faces {
        let a = vec3::sub(verts[f.v[0]], c);
        let b = vec3::sub(verts[f.v[1]], c);
        let d = vec3::sub(verts[f.v[2]], c);
        vol += vec3::dot(a, vec3::cross(b, d)).abs() / 6.0;
    }
    vol
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn unit_square() -> ConvexBody {
        ConvexBody::square(1.0).unwrap()
    }

    #[test]
    fn contains_center_and_outside() {
        let sq = unit_square();
        assert!(contains(&sq, [0.0, 0.0, 0.0], 2).unwrap());
        assert!(!contains(&sq, [2.0, 0.0, 0.0], 2).unwrap());
    }

    #[test]
    fn contains_dimension_mismatch() {
        let sq = unit_square();
        assert!(matches!(
            contains(&sq, [0.0, 0.0, 0.0], 3),
            Err(ConvexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn contains_near_disk_boundary() {
        // 64-gon disk, x=(0.99, 0): inside since the inradius is cos(pi/64).
        let disk = ConvexBody::disk(1.0, 64).unwrap();
        assert!(contains(&disk, [0.99, 0.0, 0.0], 2).unwrap());
        // hand-check: evaluate all 64 inequalities directly
        for h in &disk.halfspaces {
            assert!(h.slack([0.99, 0.0, 0.0]) >= -1e-12);
        }
    }

    #[test]
    fn support_square() {
        let sq = unit_square();
        assert!((support(&sq, [1.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        let diag = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
        assert!((support(&sq, diag).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn support_disk_polygon_bound() {
        // inradius 1 <= h(a) <= circumradius 1/cos(pi/m) for the 64-gon
        let disk = ConvexBody::disk(1.0, 64).unwrap();
        for k in 0..17 {
            let a = vec3::dir2(0.37 * k as f64);
            let s = support(&disk, a).unwrap();
            assert!(s >= 1.0 - 1e-9 && s <= 1.0 / (PI / 64.0).cos() + 1e-9);
            assert!((s - 1.0).abs() < 2e-3);
        }
    }

    #[test]
    fn support_symmetry_invariant() {
        let disk = ConvexBody::disk(1.0, 256).unwrap();
        for k in 0..32 {
            let a = vec3::dir2(0.21 * k as f64);
            let s1 = support(&disk, a).unwrap();
            let s2 = support(&disk, vec3::scale(a, -1.0)).unwrap();
            assert!((s1 - s2).abs() < 1e-9);
            assert!(s1 + s2 >= 0.0);
        }
    }

    #[test]
    fn hull_diamond() {
        let pts = vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
        ];
        let hull = convex_hull(&pts, 2).unwrap();
        assert_eq!(hull.halfspaces.len(), 4);
        // |x|+|y| <= 1
        assert!(contains(&hull, [0.4, 0.4, 0.0], 2).unwrap());
        assert!(!contains(&hull, [0.8, 0.4, 0.0], 2).unwrap());
        for p in &pts {
            assert!(contains(&hull, *p, 2).unwrap());
        }
        assert!((hull.volume() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hull_square_corners() {
        let pts = vec![
            [1.0, 1.0, 0.0],
            [-1.0, 1.0, 0.0],
            [-1.0, -1.0, 0.0],
            [1.0, -1.0, 0.0],
        ];
        let hull = convex_hull(&pts, 2).unwrap();
        assert!((hull.volume() - 4.0).abs() < 1e-12);
        for p in &pts {
            assert!(contains(&hull, *p, 2).unwrap());
        }
    }

    #[test]
    fn hull_half_disk_area() {
        // 1000 samples of the half-disk boundary: area pi/2 within 1%
        let mut pts = Vec::new();
        for k in 0..600 {
            let th = PI * k as f64 / 599.0;
            pts.push([th.cos(), th.sin(), 0.0]);
        }
        for k in 0..400 {
            let x = -1.0 + 2.0 * k as f64 / 399.0;
            pts.push([x, 0.0, 0.0]);
        }
        let hull = convex_hull(&pts, 2).unwrap();
        let area = hull.volume();
        assert!((area - PI / 2.0).abs() / (PI / 2.0) < 0.01, "area {area}");
    }

    #[test]
    fn hull_degenerate_collinear() {
        let pts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [2.0, 2.0, 0.0],
            [3.0, 3.0, 0.0],
        ];
        assert!(matches!(
            convex_hull(&pts, 2),
            Err(ConvexError::Degenerate(_))
        ));
    }

    #[test]
    fn hull_contains_inputs_property() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point> = (0..60)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0])
            .collect();
        let hull = convex_hull(&pts, 2).unwrap();
        for p in &pts {
            assert!(contains(&hull, *p, 2).unwrap(), "hull lost {p:?}");
        }
    }

    #[test]
    fn hull_3d_box() {
        let mut pts = Vec::new();
        for &x in &[-1.0, 1.0] {
            for &y in &[-1.0, 1.0] {
                for &z in &[-1.0, 1.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        pts.push([0.0, 0.0, 0.0]); // interior point should not matter
        let hull = convex_hull(&pts, 3).unwrap();
        assert!((hull.volume() - 8.0).abs() < 1e-9);
        assert!(contains(&hull, [0.9, 0.9, 0.9], 3).unwrap());
        assert!(!contains(&hull, [1.1, 0.0, 0.0], 3).unwrap());
    }

    #[test]
    fn cone_membership() {
        let cone = Cone::new(vec3::ORIGIN, [0.0, 1.0, 0.0], FRAC_PI_4).unwrap();
        assert!(cone_contains(&cone, [0.0, 1.0, 0.0]));
        assert!(!cone_contains(&cone, [1.0, 0.0, 0.0]));
        // half-space limit
        let half = Cone::new(vec3::ORIGIN, [0.0, 1.0, 0.0], FRAC_PI_2).unwrap();
        assert!(cone_contains(&half, [5.0, 0.1, 0.0]));
        assert!(!cone_contains(&half, [0.0, -0.1, 0.0]));
        // apex excluded
        assert!(!cone_contains(&cone, vec3::ORIGIN));
    }

    #[test]
    fn symmetric_claim_validated() {
        let hs = vec![
            Halfspace::new([1.0, 0.0, 0.0], -1.0).unwrap(),
            Halfspace::new([-1.0, 0.0, 0.0], -0.5).unwrap(),
            Halfspace::new([0.0, 1.0, 0.0], -1.0).unwrap(),
            Halfspace::new([0.0, -1.0, 0.0], -1.0).unwrap(),
        ];
        assert!(matches!(
            ConvexBody::new(2, hs, true, BodyKind::Polygon),
            Err(ConvexError::AsymmetricHalfspaces { .. })
        ));
    }

    #[test]
    fn unbounded_rejected() {
        let hs = vec![
            Halfspace::new([1.0, 0.0, 0.0], 0.0).unwrap(),
            Halfspace::new([0.0, 1.0, 0.0], 0.0).unwrap(),
        ];
        assert!(matches!(
            ConvexBody::new(2, hs, false, BodyKind::Polygon),
            Err(ConvexError::Unbounded)
        ));
    }

    #[test]
    fn empty_interior_rejected() {
        let hs = vec![
            Halfspace::new([1.0, 0.0, 0.0], 1.0).unwrap(),
            Halfspace::new([-1.0, 0.0, 0.0], 1.0).unwrap(),
            Halfspace::new([0.0, 1.0, 0.0], -1.0).unwrap(),
            Halfspace::new([0.0, -1.0, 0.0], -1.0).unwrap(),
        ];
        assert!(ConvexBody::new(2, hs, false, BodyKind::Polygon).is_err());
    }

    #[test]
    fn disk_volume_close_to_pi() {
        let disk = ConvexBody::disk(1.0, 256).unwrap();
        assert!((disk.volume() - PI).abs() / PI < 1e-3);
    }
}
