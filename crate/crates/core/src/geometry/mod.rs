//! Scenario catalogue: coordinate models of the catalogued manifolds with
//! analytic invariant functions, invariant metrics and group actions.

pub mod action;
pub mod catalogue;
pub mod field;
pub mod jet;
pub mod metric;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3, ZERO_VEC};

pub use action::{GroupAction, GroupElement, GroupKind};
pub use catalogue::build_scenario;
pub use field::{ScalarField, SliceModel, StabilizationSite};
pub use metric::MetricField;

/// Squared stereographic radius beyond which the flow integrator switches to
/// the opposite sphere chart.
const CHART_SWITCH_RHO: f64 = 4.0;
/// Validity radius of a stereographic chart.
const CHART_VALID_RADIUS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub chart: usize,
    pub x: Vec3,
}

impl Point {
    pub fn new(chart: usize, x: Vec3) -> Self {
        Point { chart, x }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Axis {
    Periodic { period: f64 },
    Bounded { lo: f64, hi: f64 },
}

#[derive(Clone, Debug)]
pub struct CoordinateChart {
    pub id: String,
    pub coordinate_names: Vec<&'static str>,
    pub axes: Vec<Axis>,
    /// Human-readable gluing rule, when one applies at a chart boundary.
    pub identification: Option<String>,
    /// For disc-shaped stereographic charts: maximum coordinate radius.
    pub validity_radius: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldKind {
    Sphere,
    Torus2,
    MappingTorus,
}

/// How the first negative-frame vector of an orbit is oriented.
#[derive(Clone, Copy, Debug)]
pub enum RadialScalar {
    /// Orient along increasing `1 - z` (away from the sphere's north pole).
    OneMinusZ,
    /// Orient along the increasing Morse radius of stabilization site `i`.
    SiteT2(usize),
}

#[derive(Clone, Debug)]
pub struct RadialZone {
    pub center: Point,
    pub radius: f64,
    pub scalar: RadialScalar,
}

/// Deterministic orientation conventions for negative frames.
#[derive(Clone, Debug)]
pub struct FrameConvention {
    /// Coordinate axes tried in order: the first frame vector is signed to
    /// have positive component along the first axis it is not orthogonal to.
    pub axes: Vec<usize>,
    /// Radial overrides near stabilization centers.
    pub radial_zones: Vec<RadialZone>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub manifold: ManifoldKind,
    pub dimension: usize,
    pub charts: Vec<CoordinateChart>,
    pub function: ScalarField,
    pub metric: MetricField,
    pub action: GroupAction,
    pub catalogue_params: BTreeMap<String, f64>,
    pub frame_convention: FrameConvention,
    /// Anchor points with display labels for the expected critical orbits.
    pub label_anchors: Vec<(Point, String)>,
    /// Orientation signs for rank-0 descending frames, matched by anchor.
    pub zero_dim_signs: Vec<(Point, i32)>,
    /// Additional invariant metrics for stability cross-checks.
    pub alt_metrics: Vec<MetricField>,
    /// Bound on slice-ball radii in Morse coordinates.
    pub injectivity_bound: f64,
}

pub fn wrap_into(x: f64, period: f64) -> f64 {
    let w = x.rem_euclid(period);
    if w == period {
        0.0
    } else {
        w
    }
}

fn wrap_dist(d: f64, period: f64) -> f64 {
    let w = d.rem_euclid(period);
    w.min(period - w)
}

impl Scenario {
    // ----- manifold structure -------------------------------------------

    /// Reduce periodic coordinates to canonical representatives and apply
    /// the mapping-torus gluing, pushing the given tangent vectors along.
    pub fn canonicalize_moving(&self, p: &Point, vecs: &mut [Vec3]) -> Point {
        let mut out = *p;
        match self.manifold {
            ManifoldKind::Sphere => {}
            ManifoldKind::Torus2 => {
                out.x[0] = wrap_into(out.x[0], action::TAU);
                out.x[1] = wrap_into(out.x[1], action::TAU);
            }
            ManifoldKind::MappingTorus => {
                let wraps = out.x[2].floor() as i64;
                if wraps != 0 {
                    out.x[2] -= wraps as f64;
                    if wraps.rem_euclid(2) == 1 {
                        out.x[0] = -out.x[0];
                        for v in vecs.iter_mut() {
                            v[0] = -v[0];
                        }
                    }
                }
                out.x[0] = wrap_into(out.x[0], 1.0);
                out.x[1] = wrap_into(out.x[1], 1.0);
            }
        }
        out
    }

    pub fn canonicalize(&self, p: &Point) -> Point {
        self.canonicalize_moving(p, &mut [])
    }

    /// Canonical representative across charts (sphere points prefer the
    /// chart in which they lie inside the unit disc).
    pub fn to_canonical_chart(&self, p: &Point) -> Point {
        let p = self.canonicalize(p);
        if self.manifold != ManifoldKind::Sphere {
            return p;
        }
        let rho = p.x[0] * p.x[0] + p.x[1] * p.x[1];
        if rho <= 1.0 + 1e-12 {
            p
        } else {
            self.transition_sphere(&p, &mut [])
        }
    }

    /// Stereographic chart transition, pushing tangent vectors along.
    fn transition_sphere(&self, p: &Point, vecs: &mut [Vec3]) -> Point {
        let (u, v) = (p.x[0], p.x[1]);
        let rho = u * u + v * v;
        assert!(rho > 0.0, "chart transition undefined at the projection pole");
        for w in vecs.iter_mut() {
            let dot = u * w[0] + v * w[1];
            let nu = (w[0] * rho - 2.0 * u * dot) / (rho * rho);
            let nv = (w[1] * rho - 2.0 * v * dot) / (rho * rho);
            w[0] = nu;
            w[1] = nv;
        }
        Point {
            chart: 1 - p.chart,
            x: [u / rho, v / rho, 0.0],
        }
    }

    /// Switch sphere charts when the integrator drifts too far out.
    pub fn maybe_switch_chart(&self, p: &Point, vecs: &mut [Vec3]) -> Point {
        if self.manifold != ManifoldKind::Sphere {
            return *p;
        }
        let rho = p.x[0] * p.x[0] + p.x[1] * p.x[1];
        if rho > CHART_SWITCH_RHO {
            self.transition_sphere(p, vecs)
        } else {
            *p
        }
    }

    pub fn chart_valid(&self, p: &Point) -> bool {
        match self.manifold {
            ManifoldKind::Sphere => {
                let r = (p.x[0] * p.x[0] + p.x[1] * p.x[1]).sqrt();
                p.chart < 2 && r <= CHART_VALID_RADIUS + 1e-9
            }
            _ => p.chart == 0,
        }
    }

    /// Ambient coordinates used for reporting and for sphere distances.
    pub fn ambient(&self, p: &Point) -> [f64; 3] {
        match self.manifold {
            ManifoldKind::Sphere => {
                let (u, v) = (p.x[0], p.x[1]);
                let rho = u * u + v * v;
                let denom = 1.0 + rho;
                let z = (1.0 - rho) / denom;
                if p.chart == 0 {
                    [2.0 * u / denom, 2.0 * v / denom, z]
                } else {
                    [2.0 * u / denom, 2.0 * v / denom, -z]
                }
            }
            ManifoldKind::Torus2 => {
                let (big_r, small_r) = (2.0, 1.0);
                let a = big_r + small_r * p.x[1].cos();
                [a * p.x[0].cos(), a * p.x[0].sin(), small_r * p.x[1].sin()]
            }
            ManifoldKind::MappingTorus => {
                let q = self.canonicalize(p);
                q.x
            }
        }
    }

    /// Shortest coordinate displacement from `b` to `a` (same chart),
    /// wrapping periodic axes. On the mapping torus the glued representative
    /// is used when it is shorter.
    pub fn wrapped_diff(&self, a: &Point, b: &Point) -> Vec3 {
        let shortest = |d: f64, period: f64| {
            let w = d.rem_euclid(period);
            if w > period / 2.0 {
                w - period
            } else {
                w
            }
        };
        match self.manifold {
            ManifoldKind::Sphere => {
                let b = if a.chart != b.chart {
                    self.transition_sphere(b, &mut [])
                } else {
                    *b
                };
                linalg::sub(self.dimension, &a.x, &b.x)
            }
            ManifoldKind::Torus2 => {
                let a = self.canonicalize(a);
                let b = self.canonicalize(b);
                [
                    shortest(a.x[0] - b.x[0], action::TAU),
                    shortest(a.x[1] - b.x[1], action::TAU),
                    0.0,
                ]
            }
            ManifoldKind::MappingTorus => {
                let a = self.canonicalize(a);
                let b = self.canonicalize(b);
                let direct = [
                    shortest(a.x[0] - b.x[0], 1.0),
                    shortest(a.x[1] - b.x[1], 1.0),
                    a.x[2] - b.x[2],
                ];
                let glued = [
                    shortest(a.x[0] + b.x[0], 1.0),
                    shortest(a.x[1] - b.x[1], 1.0),
                    a.x[2] - b.x[2] + if a.x[2] > b.x[2] { -1.0 } else { 1.0 },
                ];
                if linalg::norm(3, &glued) < linalg::norm(3, &direct) {
                    glued
                } else {
                    direct
                }
            }
        }
    }

    /// Coordinate distance between points, respecting periodicity and the
    /// gluing. For the sphere this is the ambient chordal distance.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        match self.manifold {
            ManifoldKind::Sphere => {
                let pa = self.ambient(a);
                let pb = self.ambient(b);
                ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2))
                    .sqrt()
            }
            ManifoldKind::Torus2 => {
                let a = self.canonicalize(a);
                let b = self.canonicalize(b);
                let d0 = wrap_dist(a.x[0] - b.x[0], action::TAU);
                let d1 = wrap_dist(a.x[1] - b.x[1], action::TAU);
                (d0 * d0 + d1 * d1).sqrt()
            }
            ManifoldKind::MappingTorus => {
                let a = self.canonicalize(a);
                let b = self.canonicalize(b);
                let direct = {
                    let d0 = wrap_dist(a.x[0] - b.x[0], 1.0);
                    let d1 = wrap_dist(a.x[1] - b.x[1], 1.0);
                    let d2 = (a.x[2] - b.x[2]).abs();
                    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
                };
                // Representative of b glued across the tau seam.
                let glued = {
                    let d0 = wrap_dist(a.x[0] + b.x[0], 1.0);
                    let d1 = wrap_dist(a.x[1] - b.x[1], 1.0);
                    let d2 = (1.0 - (a.x[2] - b.x[2]).abs()).abs();
                    (d0 * d0 + d1 * d1 + d2 * d2).sqrt()
                };
                direct.min(glued)
            }
        }
    }

    // ----- evaluation ----------------------------------------------------

    pub fn value(&self, p: &Point) -> f64 {
        self.function.jet(p.chart, &p.x, self.dimension).v
    }

    /// Differential `df` as a covector of coordinate partials.
    pub fn df(&self, p: &Point) -> Vec3 {
        self.function.jet(p.chart, &p.x, self.dimension).g
    }

    /// Coordinate Hessian (matrix of second partials). At critical points
    /// this is the invariant Hessian bilinear form.
    pub fn hessian(&self, p: &Point) -> Mat3 {
        self.function.jet(p.chart, &p.x, self.dimension).h
    }

    /// Gradient vector field `grad_g f = g^{ij} d_j f`.
    pub fn grad(&self, p: &Point) -> Vec3 {
        let df = self.df(p);
        metric::raise(self.dimension, &self.metric.inverse(p), &df)
    }

    /// The operation `evaluate_gradient`: gradient with a domain check.
    pub fn evaluate_gradient(&self, p: &Point) -> Result<Vec3> {
        if !self.chart_valid(p) {
            return Err(Error::Geometry(format!(
                "point outside all chart domains: chart {} coords {:?}",
                p.chart, p.x
            )));
        }
        Ok(self.grad(p))
    }

    /// Jacobian of the gradient vector field in chart coordinates,
    /// `J[i][k] = d_k (grad f)^i`. Used by Newton polishing and by the
    /// variational (linearized flow) transport.
    pub fn grad_jacobian(&self, p: &Point) -> Mat3 {
        let jet = self.function.jet(p.chart, &p.x, self.dimension);
        let inv = self.metric.inverse(p);
        let dinv = self.metric.inverse_partials(p);
        let n = self.dimension;
        let mut out = [[0.0; 3]; 3];
        for i in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += dinv[k][i][j] * jet.g[j] + inv[i][j] * jet.h[j][k];
                }
                out[i][k] = s;
            }
        }
        out
    }

    pub fn metric_at(&self, p: &Point) -> Mat3 {
        self.metric.matrix(p)
    }

    pub fn g_norm(&self, p: &Point, v: &Vec3) -> f64 {
        linalg::g_norm(self.dimension, &self.metric_at(p), v)
    }

    // ----- group action ----------------------------------------------------

    pub fn act(&self, elem: GroupElement, p: &Point) -> Point {
        let (q, _) = self.action.act_raw(elem, p);
        self.canonicalize(&q)
    }

    /// Pushforward of a tangent vector under the action (`act_on_tangent`).
    pub fn act_on_tangent(&self, elem: GroupElement, p: &Point, v: &Vec3) -> (Point, Vec3) {
        let q = self.act(elem, p);
        let w = self.action.push_forward(elem, p, v);
        (q, w)
    }

    pub fn fundamental_field(&self, p: &Point) -> Option<Vec3> {
        self.action.fundamental_field(p)
    }

    pub fn group_kind(&self) -> GroupKind {
        self.action.kind()
    }

    pub fn circle_period(&self) -> f64 {
        self.action.circle_period()
    }

    // ----- sampling --------------------------------------------------------

    /// Deterministic grid of sample points covering all chart domains with
    /// `density` points per coordinate, plus each chart's center, reduced to
    /// canonical representatives and deduplicated.
    pub fn sample_points(&self, density: usize) -> Vec<Point> {
        assert!(density >= 2, "sample density must be at least 2");
        let mut points: Vec<Point> = Vec::new();
        for (ci, chart) in self.charts.iter().enumerate() {
            let axis_values: Vec<Vec<f64>> = chart
                .axes
                .iter()
                .map(|axis| match axis {
                    Axis::Periodic { period } => (0..density)
                        .map(|k| period * (k as f64) / (density as f64))
                        .collect(),
                    Axis::Bounded { lo, hi } => (0..density)
                        .map(|k| lo + (hi - lo) * (k as f64) / ((density - 1) as f64))
                        .collect(),
                })
                .collect();
            let dim = chart.axes.len();
            let mut idx = vec![0usize; dim];
            loop {
                let mut x = ZERO_VEC;
                for (d, vals) in axis_values.iter().enumerate() {
                    x[d] = vals[idx[d]];
                }
                let p = Point { chart: ci, x };
                if self.chart_valid(&p) {
                    points.push(self.to_canonical_chart(&p));
                }
                // Odometer increment.
                let mut d = 0;
                loop {
                    if d == dim {
                        break;
                    }
                    idx[d] += 1;
                    if idx[d] < density {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == dim {
                    break;
                }
            }
            // Chart centers keep the poles in every sphere sample set.
            points.push(self.to_canonical_chart(&Point {
                chart: ci,
                x: ZERO_VEC,
            }));
        }
        points.sort_by(|a, b| point_key(a).cmp(&point_key(b)));
        points.dedup_by(|a, b| point_key(a) == point_key(b));
        points
    }

    /// Covector of the radial reference scalar for frame orientation.
    pub fn radial_covector(&self, scalar: RadialScalar, p: &Point) -> Vec3 {
        match scalar {
            RadialScalar::OneMinusZ => field::z_jet(p.chart, &p.x, self.dimension)
                .scale(-1.0)
                .g,
            RadialScalar::SiteT2(i) => {
                let sites = self.function.sites();
                sites[i].t2_jet(p.chart, &p.x, self.dimension).g
            }
        }
    }

    /// Scenario with the metric replaced by an (invariant) alternative.
    pub fn with_metric(&self, metric: MetricField) -> Scenario {
        let mut s = self.clone();
        s.metric = metric;
        s
    }
}

/// Quantized sort/equality key for deduplication of canonical points.
fn point_key(p: &Point) -> (usize, [i64; 3]) {
    let q = |x: f64| (x / 1e-9).round() as i64;
    (p.chart, [q(p.x[0]), q(p.x[1]), q(p.x[2])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_torus_gluing_is_an_involution() {
        let s = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
        let p = Point::new(0, [0.3, 0.7, 0.4]);
        // Applying the identification twice returns the canonical point.
        let once = s.canonicalize(&Point::new(0, [-p.x[0], p.x[1], p.x[2] + 1.0]));
        let twice = s.canonicalize(&Point::new(0, [-once.x[0], once.x[1], once.x[2] + 1.0]));
        let back = s.canonicalize(&p);
        assert!(s.distance(&twice, &back) < 1e-12);
    }

    #[test]
    fn sphere_samples_include_both_poles_at_density_two() {
        let s = build_scenario("sphere_height", &BTreeMap::new()).unwrap();
        let pts = s.sample_points(2);
        let north = Point::new(0, ZERO_VEC);
        let south = Point::new(1, ZERO_VEC);
        assert!(pts.iter().any(|p| s.distance(p, &north) < 1e-12));
        assert!(pts.iter().any(|p| s.distance(p, &south) < 1e-12));
    }

    #[test]
    fn mapping_torus_grid_has_the_expected_count() {
        let s = build_scenario("mapping_torus", &BTreeMap::new()).unwrap();
        let pts = s.sample_points(4);
        assert_eq!(pts.len(), 64);
    }

    #[test]
    fn chart_transition_round_trips_tangent_vectors() {
        let s = build_scenario("sphere_height", &BTreeMap::new()).unwrap();
        let p = Point::new(0, [1.3, -0.4, 0.0]);
        let mut vecs = [[0.7, 0.2, 0.0]];
        let q = s.transition_sphere(&p, &mut vecs);
        let mut back_vecs = [vecs[0]];
        let back = s.transition_sphere(&q, &mut back_vecs);
        assert!(s.distance(&p, &back) < 1e-12);
        assert!((back_vecs[0][0] - 0.7).abs() < 1e-12);
        assert!((back_vecs[0][1] - 0.2).abs() < 1e-12);
    }
}
