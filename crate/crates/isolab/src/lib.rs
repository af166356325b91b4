//! Numerical laboratory for isoperimetric sets on convex bodies and
//! log-concave densities.
//!
//! The crate computes approximate isoperimetric sets by constrained
//! phase-field minimization, extracts and measures their interfaces,
//! assembles second-variation stability verdicts, solves Neumann
//! eigenproblems for hot-spots diagnostics, and runs a battery of
//! quantitative checks (two-hyperplane margin, hull fraction, cone fit,
//! KLS-type ratios, and a one-dimensional tail inequality).
//!
//! Module map:
//!
//! - [`convex`] — halfspace-represented convex bodies, cones, hulls,
//!   support queries.
//! - [`measure`] — log-concave densities, weighted grid quadrature,
//!   marginals, the tail bound.
//! - [`field`] — masked Cartesian grids and the constrained phase-field
//!   minimizer.
//! - [`surface`] — interface extraction and discrete differential
//!   geometry (perimeter, curvature, contact angles, graph fitting).
//! - [`stability`] — second-variation quadratic forms, translation
//!   tests, minimum-eigenvalue verdicts, the reduced Simons-cone
//!   analysis.
//! - [`spectral`] — Neumann eigenproblems on 2D bodies, hot-spots
//!   reports, nodal sets, deformation continuation.
//! - [`conjectures`] — the conjecture battery producing
//!   [`conjectures::ConjectureReport`]s.
//! - [`lab`] — experiment configs, run persistence, reports, and the
//!   `isolab` CLI entry points.
//!
//! Each major capability has a runnable example under `examples/`:
//!
//! ```bash
//! cargo run --release -p isolab --example isoperimetric_disk
//! cargo run --release -p isolab --example gaussian_halfspace
//! cargo run --release -p isolab --example hot_spots_rectangle
//! cargo run --release -p isolab --example deform_family
//! cargo run --release -p isolab --example symmetry_breaking_circle
//! cargo run --release -p isolab --example simons_cone
//! cargo run --release -p isolab --example conjecture_battery
//! cargo run --release -p isolab --example milman_chain
//! cargo run --release -p isolab --example tail_bound
//! ```
//!
//! The CLI wraps the same pipelines:
//!
//! ```bash
//! isolab run config.toml --out runs/demo --seed 7
//! isolab report runs/demo
//! isolab suite configs/
//! ```

pub mod conjectures;
pub mod convex;
pub mod field;
pub mod lab;
pub mod linalg;
pub mod measure;
pub mod spectral;
pub mod stability;
pub mod surface;
pub mod vec3;
