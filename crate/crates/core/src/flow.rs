//! Negative gradient flow: adaptive integration with orbit capture,
//! descending-sphere shooting, moduli-space covering data with orientation
//! signs from the linearized flow, and transversality diagnostics.

use rayon::prelude::*;

use crate::critstruct::{self, ComponentParam, CriticalOrbit};
use crate::error::{Error, Result};
use crate::geometry::{ManifoldKind, Point, Scenario};
use crate::linalg::{self, Vec3, ZERO_VEC};

#[derive(Clone, Copy, Debug)]
pub struct FlowSettings {
    pub t_max: f64,
    pub capture_radius: f64,
    pub step_tol: f64,
    /// Fan size on two-dimensional descending spheres.
    pub directions: usize,
    /// Sample points along a circle source orbit.
    pub samples: usize,
    pub max_steps: usize,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            t_max: 400.0,
            capture_radius: 1e-3,
            step_tol: 1e-10,
            directions: 16,
            samples: 32,
            max_steps: 400_000,
        }
    }
}

/// Seed radius for shots off a critical orbit.
const SHOOT_RADIUS: f64 = 1e-3;
/// A capture is confirmed at this fraction of the capture radius.
const CONFIRM_FRACTION: f64 = 0.3;
/// Orbit-distance threshold treating the start point as already critical.
const ALREADY_CRITICAL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowDirection {
    Down,
    Up,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowOutcome {
    Captured { orbit: usize },
    OutOfTime,
    Constant,
}

#[derive(Clone, Debug)]
pub struct FlowLine {
    pub start_orbit: Option<usize>,
    pub end_orbit: Option<usize>,
    pub outcome: FlowOutcome,
    /// (time, point) along the trajectory.
    pub samples: Vec<(f64, Point)>,
    /// Orbit parameter of the source point (circle sources).
    pub start_param: f64,
    /// Coefficients of the shooting direction in the source frame.
    pub start_direction: Vec<f64>,
    pub sign: Option<i32>,
}

// ---------------------------------------------------------------------------
// Quick orbit geometry for capture tests
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum OrbitGeom {
    /// Distance to a fixed point of the scenario.
    FixedPoint(Point),
    /// Circle of constant height on the sphere (ambient distance).
    SphereCircle { z: f64, rho: f64 },
    /// Mapping-torus circle: one or two (theta1, theta2) branches, tau free.
    MappingCircle { branches: Vec<[f64; 2]> },
    /// Coordinate circle psi = const on the 2-torus.
    TorusPsiCircle { psi: f64 },
    /// Fallback: distance to the traced component.
    Generic,
}

pub struct FlowContext<'a> {
    pub scenario: &'a Scenario,
    pub orbits: &'a [CriticalOrbit],
    geoms: Vec<OrbitGeom>,
}

impl<'a> FlowContext<'a> {
    pub fn new(scenario: &'a Scenario, orbits: &'a [CriticalOrbit]) -> Self {
        let geoms = orbits.iter().map(|o| orbit_geom(scenario, o)).collect();
        FlowContext {
            scenario,
            orbits,
            geoms,
        }
    }

    pub fn orbit_distance(&self, orbit: usize, p: &Point) -> f64 {
        let s = self.scenario;
        match &self.geoms[orbit] {
            OrbitGeom::FixedPoint(q) => s.distance(q, p),
            OrbitGeom::SphereCircle { z, rho } => {
                let a = s.ambient(p);
                let r = (a[0] * a[0] + a[1] * a[1]).sqrt();
                ((a[2] - z).powi(2) + (r - rho).powi(2)).sqrt()
            }
            OrbitGeom::MappingCircle { branches } => {
                let q = s.canonicalize(p);
                let mut best = f64::INFINITY;
                for b in branches {
                    let d0 = wrap_half(q.x[0] - b[0], 1.0);
                    let d1 = wrap_half(q.x[1] - b[1], 1.0);
                    best = best.min((d0 * d0 + d1 * d1).sqrt());
                }
                best
            }
            OrbitGeom::TorusPsiCircle { psi } => {
                let q = s.canonicalize(p);
                wrap_half(q.x[1] - psi, std::f64::consts::TAU)
            }
            OrbitGeom::Generic => critstruct::component_distance(s, &self.orbits[orbit], p),
        }
    }

    fn nearest_orbit(&self, p: &Point, skip: Option<usize>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..self.orbits.len() {
            if Some(i) == skip {
                continue;
            }
            let d = self.orbit_distance(i, p);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

fn wrap_half(d: f64, period: f64) -> f64 {
    let w: f64 = d.rem_euclid(period);
    w.min(period - w)
}

fn orbit_geom(s: &Scenario, orbit: &CriticalOrbit) -> OrbitGeom {
    match (&orbit.component, s.manifold) {
        (ComponentParam::Point, _) => OrbitGeom::FixedPoint(orbit.representative),
        (ComponentParam::GroupCircle { .. }, ManifoldKind::Sphere) => {
            let a = s.ambient(&orbit.representative);
            OrbitGeom::SphereCircle {
                z: a[2],
                rho: (a[0] * a[0] + a[1] * a[1]).sqrt(),
            }
        }
        (ComponentParam::GroupCircle { orbit_period }, ManifoldKind::MappingTorus) => {
            let rep = s.canonicalize(&orbit.representative);
            let mut branches = vec![[rep.x[0], rep.x[1]]];
            if *orbit_period > 1.5 {
                let flipped = crate::geometry::wrap_into(-rep.x[0], 1.0);
                branches.push([flipped, rep.x[1]]);
            }
            OrbitGeom::MappingCircle { branches }
        }
        (ComponentParam::TracedLoop { samples }, ManifoldKind::Torus2) => {
            // Detect a coordinate circle psi = const.
            let psi0 = samples[0].x[1];
            if samples
                .iter()
                .all(|q| wrap_half(q.x[1] - psi0, std::f64::consts::TAU) < 1e-7)
            {
                OrbitGeom::TorusPsiCircle { psi: psi0 }
            } else {
                OrbitGeom::Generic
            }
        }
        _ => OrbitGeom::Generic,
    }
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) integration
// ---------------------------------------------------------------------------

const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_FLAT: usize = 12;

#[derive(Clone, Copy)]
struct FlatState {
    y: [f64; MAX_FLAT],
    len: usize,
}

/// Integration state: a point in covering coordinates plus optional
/// transported frame columns for the variational equation.
#[derive(Clone)]
struct FlowState {
    p: Point,
    cols: Vec<Vec3>,
}

impl FlowState {
    fn flatten(&self, dim: usize) -> FlatState {
        let mut y = [0.0; MAX_FLAT];
        y[..dim].copy_from_slice(&self.p.x[..dim]);
        for (c, col) in self.cols.iter().enumerate() {
            let base = dim * (c + 1);
            y[base..base + dim].copy_from_slice(&col[..dim]);
        }
        FlatState {
            y,
            len: dim * (1 + self.cols.len()),
        }
    }

    fn unflatten(&self, dim: usize, flat: &FlatState) -> FlowState {
        let mut p = self.p;
        p.x[..dim].copy_from_slice(&flat.y[..dim]);
        let mut cols = self.cols.clone();
        for (c, col) in cols.iter_mut().enumerate() {
            let base = dim * (c + 1);
            col[..dim].copy_from_slice(&flat.y[base..base + dim]);
        }
        FlowState { p, cols }
    }
}

fn flow_rhs(s: &Scenario, dir: f64, chart: usize, flat: &FlatState, with_cols: usize) -> FlatState {
    let dim = s.dimension;
    let mut x = ZERO_VEC;
    x[..dim].copy_from_slice(&flat.y[..dim]);
    let p = Point { chart, x };
    let grad = s.grad(&p);
    let mut out = [0.0; MAX_FLAT];
    for i in 0..dim {
        out[i] = dir * grad[i];
    }
    if with_cols > 0 {
        let jac = s.grad_jacobian(&p);
        for c in 0..with_cols {
            let base = dim * (c + 1);
            for i in 0..dim {
                let mut v = 0.0;
                for k in 0..dim {
                    v += jac[i][k] * flat.y[base + k];
                }
                out[base + i] = dir * v;
            }
        }
    }
    FlatState {
        y: out,
        len: flat.len,
    }
}

struct StepResult {
    state: FlatState,
    error: f64,
}

fn dopri_step(
    s: &Scenario,
    dir: f64,
    chart: usize,
    flat: &FlatState,
    h: f64,
    with_cols: usize,
    tol: f64,
) -> StepResult {
    let n = flat.len;
    let mut k: [FlatState; 7] = [*flat; 7];
    for stage in 0..7 {
        let mut yi = *flat;
        for (j, kj) in k.iter().enumerate().take(stage) {
            for idx in 0..n {
                yi.y[idx] += h * DP_A[stage][j] * kj.y[idx];
            }
        }
        k[stage] = flow_rhs(s, dir, chart, &yi, with_cols);
    }
    let mut y5 = *flat;
    let mut err = 0.0f64;
    let dim = s.dimension;
    for idx in 0..n {
        let mut d5 = 0.0;
        let mut d4 = 0.0;
        for stage in 0..7 {
            d5 += DP_B5[stage] * k[stage].y[idx];
            d4 += DP_B4[stage] * k[stage].y[idx];
        }
        y5.y[idx] += h * d5;
        // Error control on the position components only: the transported
        // columns are slaved to the position and re-orthonormalized after
        // every step, and keeping them out of the controller makes the
        // transported trajectory take exactly the same steps as a plain one.
        if idx < dim {
            let scale = tol + tol * flat.y[idx].abs();
            err = err.max((h * (d5 - d4)).abs() / scale);
        }
    }
    StepResult { state: y5, error: err }
}

struct Trajectory {
    outcome: FlowOutcome,
    samples: Vec<(f64, Point)>,
    /// Minimal distance to the watched orbit along the whole trajectory.
    watch_min: f64,
    f_monotone: bool,
}

struct IntegrateOptions {
    direction: FlowDirection,
    /// Never capture at this orbit (the shot's source).
    skip_orbit: Option<usize>,
    /// Track the minimal distance to this orbit.
    watch_orbit: Option<usize>,
    /// Track but do not capture at this orbit.
    disable_capture: Option<usize>,
    record: bool,
}

fn integrate_inner(
    ctx: &FlowContext,
    start: &FlowState,
    settings: &FlowSettings,
    opts: &IntegrateOptions,
) -> Trajectory {
    let s = ctx.scenario;
    let dim = s.dimension;
    let dir = match opts.direction {
        FlowDirection::Down => -1.0,
        FlowDirection::Up => 1.0,
    };
    let mut state = start.clone();
    state.p = s.canonicalize_moving(&state.p, &mut state.cols);
    let mut t = 0.0;
    let mut h: f64 = 1e-4;
    let mut samples = Vec::new();
    if opts.record {
        samples.push((t, state.p));
    }
    let mut watch_min = f64::INFINITY;
    let mut pending: Option<usize> = None;
    let mut f_prev = s.value(&state.p);
    let mut f_monotone = true;

    for _step in 0..settings.max_steps {
        if t >= settings.t_max {
            break;
        }
        let h_try = h.min(settings.t_max - t).min(0.2);
        let flat = state.flatten(dim);
        let res = dopri_step(
            s,
            dir,
            state.p.chart,
            &flat,
            h_try,
            state.cols.len(),
            settings.step_tol,
        );
        if res.error > 1.0 {
            h = h_try * (0.9 * res.error.powf(-0.2)).max(0.2);
            if h < 1e-14 {
                break;
            }
            continue;
        }
        t += h_try;
        h = h_try * (0.9 * res.error.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        state = state.unflatten(dim, &res.state);
        state.p = s.canonicalize_moving(&state.p, &mut state.cols);
        state.p = s.maybe_switch_chart(&state.p, &mut state.cols);
        if !state.cols.is_empty() {
            // Re-orthonormalize the transported frame; positive-diagonal
            // Gram-Schmidt keeps the span orientation.
            let mut eye = [[0.0; 3]; 3];
            for i in 0..dim {
                eye[i][i] = 1.0;
            }
            state.cols = linalg::g_orthonormalize(dim, &eye, &state.cols);
        }
        let f_now = s.value(&state.p);
        if dir < 0.0 && f_now > f_prev + 1e-9 {
            f_monotone = false;
        }
        if dir > 0.0 && f_now < f_prev - 1e-9 {
            f_monotone = false;
        }
        f_prev = f_now;
        if opts.record {
            samples.push((t, state.p));
        }
        if let Some(w) = opts.watch_orbit {
            watch_min = watch_min.min(ctx.orbit_distance(w, &state.p));
        }

        // Capture with confirmation: entering the capture ball arms an
        // orbit; reaching the confirmation fraction resolves the limit,
        // leaving the doubled ball clears it (a passing trajectory).
        if let Some(orbit) = pending {
            let d = ctx.orbit_distance(orbit, &state.p);
            if d <= CONFIRM_FRACTION * settings.capture_radius {
                return Trajectory {
                    outcome: FlowOutcome::Captured { orbit },
                    samples,
                    watch_min,
                    f_monotone,
                };
            }
            if d > 2.0 * settings.capture_radius {
                pending = None;
            }
        }
        if pending.is_none() {
            let (near, d) = ctx.nearest_orbit(&state.p, opts.skip_orbit);
            if near != usize::MAX
                && d <= settings.capture_radius
                && Some(near) != opts.disable_capture
            {
                pending = Some(near);
            }
        }
    }
    Trajectory {
        outcome: FlowOutcome::OutOfTime,
        samples,
        watch_min,
        f_monotone,
    }
}

/// Integrate downward with frame transport, stopping at the entry of the
/// target's capture ball (the comparison point for orientation transport).
fn integrate_to_ball(
    ctx: &FlowContext,
    start: &FlowState,
    target: usize,
    settings: &FlowSettings,
    skip_orbit: Option<usize>,
) -> Option<FlowState> {
    let s = ctx.scenario;
    let dim = s.dimension;
    let mut state = start.clone();
    state.p = s.canonicalize_moving(&state.p, &mut state.cols);
    let mut t = 0.0;
    let mut h: f64 = 1e-4;
    let mut pending: Option<usize> = None;
    for _step in 0..settings.max_steps {
        if t >= settings.t_max {
            return None;
        }
        let h_try = h.min(settings.t_max - t).min(0.2);
        let flat = state.flatten(dim);
        let res = dopri_step(
            s,
            -1.0,
            state.p.chart,
            &flat,
            h_try,
            state.cols.len(),
            settings.step_tol,
        );
        if res.error > 1.0 {
            h = h_try * (0.9 * res.error.powf(-0.2)).max(0.2);
            if h < 1e-14 {
                return None;
            }
            continue;
        }
        t += h_try;
        h = h_try * (0.9 * res.error.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        state = state.unflatten(dim, &res.state);
        state.p = s.canonicalize_moving(&state.p, &mut state.cols);
        state.p = s.maybe_switch_chart(&state.p, &mut state.cols);
        if !state.cols.is_empty() {
            let mut eye = [[0.0; 3]; 3];
            for i in 0..dim {
                eye[i][i] = 1.0;
            }
            state.cols = linalg::g_orthonormalize(dim, &eye, &state.cols);
        }
        if ctx.orbit_distance(target, &state.p) <= settings.capture_radius {
            return Some(state);
        }
        // Abort once a different orbit has confirmed its capture.
        if let Some(orbit) = pending {
            let d = ctx.orbit_distance(orbit, &state.p);
            if d <= CONFIRM_FRACTION * settings.capture_radius {
                return None;
            }
            if d > 2.0 * settings.capture_radius {
                pending = None;
            }
        }
        if pending.is_none() {
            let (near, d) = ctx.nearest_orbit(&state.p, skip_orbit);
            if near != usize::MAX && d <= settings.capture_radius && near != target {
                pending = Some(near);
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Public flow operations
// ---------------------------------------------------------------------------

/// Integrate the gradient flow from `x0`. Returns a constant fragment when
/// the start point already lies on a critical orbit.
pub fn integrate_flow(
    ctx: &FlowContext,
    x0: &Point,
    direction: FlowDirection,
    t_max: f64,
    settings: &FlowSettings,
) -> Result<FlowLine> {
    let (near, d) = ctx.nearest_orbit(x0, None);
    if d <= ALREADY_CRITICAL {
        return Ok(FlowLine {
            start_orbit: Some(near),
            end_orbit: Some(near),
            outcome: FlowOutcome::Constant,
            samples: vec![(0.0, *x0)],
            start_param: 0.0,
            start_direction: Vec::new(),
            sign: None,
        });
    }
    let mut local = *settings;
    local.t_max = t_max;
    let state = FlowState {
        p: *x0,
        cols: Vec::new(),
    };
    let traj = integrate_inner(
        ctx,
        &state,
        &local,
        &IntegrateOptions {
            direction,
            skip_orbit: None,
            watch_orbit: None,
            disable_capture: None,
            record: true,
        },
    );
    if !traj.f_monotone {
        return Err(Error::Flow(format!(
            "energy not monotone along trajectory from {:?}",
            x0.x
        )));
    }
    let end_orbit = match traj.outcome {
        FlowOutcome::Captured { orbit } => Some(orbit),
        _ => None,
    };
    Ok(FlowLine {
        start_orbit: None,
        end_orbit,
        outcome: traj.outcome,
        samples: traj.samples,
        start_param: 0.0,
        start_direction: Vec::new(),
        sign: None,
    })
}

/// Direction of a fan angle in the source frame.
fn fan_direction(frame: &[Vec3], coeffs: &[f64], dim: usize) -> Vec3 {
    let mut v = ZERO_VEC;
    for (c, col) in coeffs.iter().zip(frame.iter()) {
        v = linalg::axpy(dim, &v, *c, col);
    }
    v
}

fn shoot_state(s: &Scenario, p: &Point, v: &Vec3) -> FlowState {
    let x = linalg::axpy(s.dimension, &p.x, SHOOT_RADIUS, v);
    FlowState {
        p: s.canonicalize(&Point { chart: p.chart, x }),
        cols: Vec::new(),
    }
}

/// Fan coefficients on the descending sphere of an orbit of the given index.
fn fan_coeffs(index: usize, directions: usize) -> Vec<Vec<f64>> {
    match index {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..directions)
            .map(|i| {
                let a = std::f64::consts::TAU * (i as f64) / (directions as f64);
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// Shoot the descending sphere of `source`: seeds spread along the orbit and
/// over the unit sphere of the negative frame, integrated downward to
/// capture. Flow lines are grouped by (orbit parameter, direction).
pub fn shoot_descending_sphere(
    ctx: &FlowContext,
    source: usize,
    directions: usize,
    samples: usize,
    settings: &FlowSettings,
) -> Result<Vec<FlowLine>> {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    if src.index == 0 {
        return Err(Error::Flow(format!(
            "orbit {} has index 0; no descending sphere to shoot",
            src.label
        )));
    }
    if src.neg_frame.is_empty() {
        return Err(Error::Flow(format!(
            "orbit {} has no negative frame (unstable?)",
            src.label
        )));
    }
    let params = source_params(src, samples);
    let coeff_list = fan_coeffs(src.index, directions);
    let jobs: Vec<(f64, Vec<f64>)> = params
        .iter()
        .flat_map(|&t| coeff_list.iter().map(move |c| (t, c.clone())))
        .collect();
    let lines: Vec<FlowLine> = jobs
        .par_iter()
        .map(|(t, coeffs)| {
            let (p, frame) = critstruct::frame_at(s, src, *t);
            let v = fan_direction(&frame, coeffs, s.dimension);
            let state = shoot_state(s, &p, &v);
            let traj = integrate_inner(
                ctx,
                &state,
                settings,
                &IntegrateOptions {
                    direction: FlowDirection::Down,
                    skip_orbit: Some(source),
                    watch_orbit: None,
                    disable_capture: None,
                    record: true,
                },
            );
            FlowLine {
                start_orbit: Some(source),
                end_orbit: match traj.outcome {
                    FlowOutcome::Captured { orbit } => Some(orbit),
                    _ => None,
                },
                outcome: traj.outcome,
                samples: traj.samples,
                start_param: *t,
                start_direction: coeffs.clone(),
                sign: None,
            }
        })
        .collect();
    for l in &lines {
        if l.outcome == FlowOutcome::OutOfTime {
            return Err(Error::Flow(format!(
                "unresolved asymptotics shooting from {} at parameter {} direction {:?}",
                src.label, l.start_param, l.start_direction
            )));
        }
    }
    Ok(lines)
}

/// Orbit parameters at which a circle source is sampled.
fn source_params(src: &CriticalOrbit, samples: usize) -> Vec<f64> {
    match &src.component {
        ComponentParam::GroupCircle { orbit_period } => (0..samples)
            .map(|k| orbit_period * (k as f64) / (samples as f64))
            .collect(),
        _ => vec![0.0],
    }
}

// ---------------------------------------------------------------------------
// Orientation signs
// ---------------------------------------------------------------------------

/// Orientation sign of an isolated flow line from `source` (shot at orbit
/// parameter `t` in frame direction `coeffs`) to `target`.
///
/// The full negative frame of the source is transported along the
/// variational equation; at the entry of the target's capture ball it is
/// expressed against (flow direction, target descending frame) and the sign
/// of the determinant, times the target's rank-0 orientation, is returned.
pub fn orientation_sign(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    t: f64,
    coeffs: &[f64],
    settings: &FlowSettings,
) -> Result<i32> {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let tgt = &ctx.orbits[target];
    let moduli_dim = src.index as i64 - tgt.index as i64 - 1;
    if moduli_dim != 0 {
        return Err(Error::Orientation(format!(
            "pointwise moduli between {} and {} has dimension {moduli_dim}; sign undefined",
            src.label, tgt.label
        )));
    }
    let (p, frame) = critstruct::frame_at(s, src, t);
    let v = fan_direction(&frame, coeffs, s.dimension);
    let mut state = shoot_state(s, &p, &v);
    state.cols = frame.clone();
    let end = integrate_to_ball(ctx, &state, target, settings, Some(source)).ok_or_else(|| {
        Error::Flow(format!(
            "no connection from {} to {} at parameter {t}",
            src.label, tgt.label
        ))
    })?;
    frame_sign(ctx, target, &end)
}

/// Determinant comparison at the capture-ball entry point.
fn frame_sign(ctx: &FlowContext, target: usize, end: &FlowState) -> Result<i32> {
    let s = ctx.scenario;
    let dim = s.dimension;
    let tgt = &ctx.orbits[target];
    let grad = s.grad(&end.p);
    let gn = linalg::norm(dim, &grad);
    if gn < 1e-12 {
        return Err(Error::Orientation(
            "flow direction vanishes at the comparison point".into(),
        ));
    }
    let flow_dir = linalg::scale(dim, &grad, -1.0 / gn);
    let mut basis: Vec<Vec3> = vec![flow_dir];
    if tgt.index > 0 {
        let tparam = nearest_orbit_param(ctx, target, &end.p);
        let (_, tframe) = critstruct::frame_at(s, tgt, tparam);
        basis.extend(tframe);
    }
    if basis.len() != end.cols.len() {
        return Err(Error::Orientation(format!(
            "dimension mismatch comparing frames into {}",
            tgt.label
        )));
    }
    let (m, residual) = linalg::express_in_basis(dim, &basis, &end.cols);
    if residual > 0.05 {
        return Err(Error::Orientation(format!(
            "transported frame misaligned with flow/target frame (residual {residual:.2e})"
        )));
    }
    let det = linalg::det_k(basis.len(), &m);
    if det.abs() < 1e-6 {
        return Err(Error::Orientation(format!(
            "orientation determinant {det:.2e} below tolerance"
        )));
    }
    let sign = if det > 0.0 { 1 } else { -1 };
    Ok(sign * tgt.descending_orientation)
}

/// Orbit parameter of the nearest point of a circle orbit (0 for points).
pub fn nearest_orbit_param(ctx: &FlowContext, orbit: usize, x: &Point) -> f64 {
    let s = ctx.scenario;
    let o = &ctx.orbits[orbit];
    match &o.component {
        ComponentParam::GroupCircle { orbit_period } => match s.manifold {
            ManifoldKind::MappingTorus => {
                let q = s.canonicalize(x);
                let rep = s.canonicalize(&o.representative);
                // Parameter along the orbit is tau, shifted onto the second
                // branch when the theta coordinates match the flipped copy.
                let tau = (q.x[2] - rep.x[2]).rem_euclid(1.0);
                if *orbit_period > 1.5 {
                    let direct = wrap_half(q.x[0] - rep.x[0], 1.0);
                    let flipped = wrap_half(q.x[0] + rep.x[0], 1.0);
                    let base = if direct <= flipped { 0.0 } else { 1.0 };
                    (tau + base).rem_euclid(2.0)
                } else {
                    tau
                }
            }
            ManifoldKind::Sphere => {
                let q = s.canonicalize(x);
                let ang = q.x[1].atan2(q.x[0]);
                let rep = s.canonicalize(&o.representative);
                let ang0 = rep.x[1].atan2(rep.x[0]);
                // Both stereographic charts rotate by the same angle under
                // the action, so no chart correction is needed.
                let t = ((ang - ang0) / std::f64::consts::TAU).rem_euclid(1.0);
                t * s.circle_period()
            }
            _ => critstruct::circle_orbit_distance(s, &o.representative, x).1,
        },
        _ => 0.0,
    }
}

// ---------------------------------------------------------------------------
// Moduli covers
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CoverSheet {
    pub sign: i32,
    /// Covering degree of e- over the source orbit.
    pub e_minus_degree: u32,
    /// Winding of the e+ endpoint around the target per source loop.
    pub target_winding: i32,
    /// Coefficient of the pulled-back normalized 1-form: the endpoint
    /// parameter rate for 0-dimensional fibers, the fiber integral for
    /// 1-dimensional fibers; snapped to a small rational.
    pub one_form_coeff: Option<(i64, i64)>,
}

#[derive(Clone, Debug)]
pub struct ModuliCover {
    pub source: usize,
    pub target: usize,
    pub index_gap: usize,
    /// Moduli dimension ind(src) - ind(tgt) + dim(src) - 1.
    pub dim: i64,
    pub fiber_dim: i64,
    pub sheets: Vec<CoverSheet>,
    /// Set when the virtual dimension is negative but a connection exists.
    pub negative_dimension_witness: bool,
}

impl ModuliCover {
    pub fn empty(source: usize, target: usize, gap: usize, dim: i64, fiber: i64) -> Self {
        ModuliCover {
            source,
            target,
            index_gap: gap,
            dim,
            fiber_dim: fiber,
            sheets: Vec::new(),
            negative_dimension_witness: false,
        }
    }
}

/// Snap a float to a rational with denominator at most 4.
fn snap_rational(x: f64) -> Result<(i64, i64)> {
    for den in 1..=4i64 {
        let num = (x * den as f64).round() as i64;
        if (x - num as f64 / den as f64).abs() <= 1e-3 {
            let g = gcd(num.abs(), den).max(1);
            return Ok((num / g, den / g));
        }
    }
    Err(Error::Assembly(format!(
        "coefficient {x} does not snap to a rational with denominator <= 4"
    )))
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Extract the covering description of the moduli space of flow lines from
/// `source` to `target` by shooting the descending sphere.
pub fn extract_moduli_cover(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    settings: &FlowSettings,
) -> Result<ModuliCover> {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let tgt = &ctx.orbits[target];
    let gap = src.index.saturating_sub(tgt.index);
    let dim = src.index as i64 - tgt.index as i64 + src.orbit_dim as i64 - 1;
    let fiber = dim - src.orbit_dim as i64;
    if source == target || dim < 0 {
        let mut cover = ModuliCover::empty(source, target, gap, dim, fiber);
        if dim < 0 && source != target {
            cover.negative_dimension_witness =
                find_witness(ctx, source, target, settings)?.is_some();
        }
        return Ok(cover);
    }
    if src.index == 0 || s.value(&src.representative) <= s.value(&tgt.representative) {
        return Ok(ModuliCover::empty(source, target, gap, dim, fiber));
    }
    if !matches!(src.component, ComponentParam::GroupCircle { .. }) {
        return Err(Error::Flow(format!(
            "cover extraction only supports circle source orbits, not {}",
            src.label
        )));
    }
    match (src.index, fiber) {
        (1, 0) => extract_index1_cover(ctx, source, target, settings, dim),
        (2, 0) => extract_saddle_cover(ctx, source, target, settings, dim),
        (2, 1) => extract_fiber_cover(ctx, source, target, settings, dim),
        _ => Err(Error::Flow(format!(
            "unsupported cover shape: source index {}, fiber dimension {fiber}",
            src.index
        ))),
    }
}

/// Covers with an index-1 source: the two rays of the descending sphere.
fn extract_index1_cover(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    settings: &FlowSettings,
    dim: i64,
) -> Result<ModuliCover> {
    let src = &ctx.orbits[source];
    let tgt = &ctx.orbits[target];
    let gap = src.index - tgt.index;
    let params = source_params(src, settings.samples);
    let mut sheets = Vec::new();
    for ray in [1.0f64, -1.0] {
        // Classify the ray at every source parameter; the end orbit must be
        // the same all along, otherwise the cover structure is unstable.
        let ends: Vec<Option<usize>> = params
            .par_iter()
            .map(|&t| classify_shot(ctx, source, t, &[ray], settings))
            .collect();
        let first = ends[0];
        if ends.iter().any(|e| *e != first) {
            return Err(Error::CoverUnstable(format!(
                "ray {ray} from {} ends at varying orbits across source samples",
                src.label
            )));
        }
        if first != Some(target) {
            continue;
        }
        let (winding, rate) = endpoint_winding(ctx, source, target, &[ray], settings)?;
        let sign = sheet_sign(ctx, source, target, &params, |_t| vec![ray], settings)?;
        sheets.push(CoverSheet {
            sign,
            e_minus_degree: 1,
            target_winding: winding,
            one_form_coeff: if tgt.orbit_dim == 1 {
                Some(snap_rational(rate)?)
            } else {
                None
            },
        });
    }
    Ok(ModuliCover {
        source,
        target,
        index_gap: gap,
        dim,
        fiber_dim: 0,
        sheets,
        negative_dimension_witness: false,
    })
}

/// Orientation sign evaluated at three spread source parameters; all must
/// agree (the signs are G-invariant along a sheet).
fn sheet_sign(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    params: &[f64],
    coeffs_at: impl Fn(f64) -> Vec<f64>,
    settings: &FlowSettings,
) -> Result<i32> {
    let src = &ctx.orbits[source];
    let tgt = &ctx.orbits[target];
    let mut sign = 0;
    for &t in &[params[0], params[params.len() / 3], params[2 * params.len() / 3]] {
        let sg = orientation_sign(ctx, source, target, t, &coeffs_at(t), settings)?;
        if sign == 0 {
            sign = sg;
        } else if sign != sg {
            return Err(Error::Orientation(format!(
                "sign varies along the sheet from {} to {}",
                src.label, tgt.label
            )));
        }
    }
    Ok(sign)
}

fn classify_shot(
    ctx: &FlowContext,
    source: usize,
    t: f64,
    coeffs: &[f64],
    settings: &FlowSettings,
) -> Option<usize> {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let (p, frame) = critstruct::frame_at(s, src, t);
    let v = fan_direction(&frame, coeffs, s.dimension);
    let state = shoot_state(s, &p, &v);
    let traj = integrate_inner(
        ctx,
        &state,
        settings,
        &IntegrateOptions {
            direction: FlowDirection::Down,
            skip_orbit: Some(source),
            watch_orbit: None,
            disable_capture: None,
            record: false,
        },
    );
    match traj.outcome {
        FlowOutcome::Captured { orbit } => Some(orbit),
        _ => None,
    }
}

/// Track the e+ endpoint parameter along one loop of the source orbit;
/// returns (winding, d endpoint-parameter / d source-parameter).
fn endpoint_winding(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    coeffs: &[f64],
    settings: &FlowSettings,
) -> Result<(i32, f64)> {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let tgt = &ctx.orbits[target];
    let src_period = match &src.component {
        ComponentParam::GroupCircle { orbit_period } => *orbit_period,
        _ => return Ok((0, 0.0)),
    };
    let tgt_period = match (&tgt.component, tgt.orbit_dim) {
        (ComponentParam::GroupCircle { orbit_period }, 1) => *orbit_period,
        _ => return Ok((0, 0.0)),
    };
    let n_track = 16;
    let mut unwrapped = 0.0;
    let mut prev: Option<f64> = None;
    for k in 0..=n_track {
        let t = src_period * (k as f64) / (n_track as f64);
        let (p, frame) = critstruct::frame_at(s, src, t);
        let v = fan_direction(&frame, coeffs, s.dimension);
        let state = shoot_state(s, &p, &v);
        let end = integrate_to_ball(ctx, &state, target, settings, Some(source)).ok_or_else(|| {
            Error::Flow(format!(
                "sheet from {} lost its connection to {} at parameter {t}",
                src.label, tgt.label
            ))
        })?;
        let sp = nearest_orbit_param(ctx, target, &end.p);
        if let Some(pv) = prev {
            unwrapped += wrap_signed(sp - pv, tgt_period);
        }
        prev = Some(sp);
    }
    let winding_f = unwrapped / tgt_period;
    let winding = winding_f.round() as i32;
    if (winding_f - winding as f64).abs() > 1e-2 {
        return Err(Error::CoverUnstable(format!(
            "winding {winding_f} does not snap to an integer"
        )));
    }
    Ok((winding, unwrapped / src_period))
}

fn wrap_signed(d: f64, period: f64) -> f64 {
    let mut d = d.rem_euclid(period);
    if d > period / 2.0 {
        d -= period;
    }
    d
}

/// Saddle-to-saddle covers from an index-2 source: isolated separatrix
/// directions located by scanning the fan and minimizing the dip distance.
fn extract_saddle_cover(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    settings: &FlowSettings,
    dim: i64,
) -> Result<ModuliCover> {
    let src = &ctx.orbits[source];
    let tgt = &ctx.orbits[target];
    let gap = src.index - tgt.index;
    let params = source_params(src, settings.samples);

    let all_angles: Vec<Vec<f64>> = params
        .par_iter()
        .map(|&t| connection_angles(ctx, source, target, t, settings))
        .collect::<Result<_>>()?;
    let count = all_angles[0].len();
    if all_angles.iter().any(|a| a.len() != count) {
        return Err(Error::CoverUnstable(format!(
            "connection count from {} to {} varies along the source orbit",
            src.label, tgt.label
        )));
    }
    if count == 0 {
        return Ok(ModuliCover::empty(source, target, gap, dim, 0));
    }
    let mut sheets = Vec::new();
    for &alpha0 in &all_angles[0] {
        let nearest = |t_idx: usize, alpha: f64| -> f64 {
            *all_angles[t_idx]
                .iter()
                .min_by(|a, b| {
                    angle_dist(**a, alpha)
                        .partial_cmp(&angle_dist(**b, alpha))
                        .unwrap()
                })
                .unwrap()
        };
        let sign = sheet_sign(
            ctx,
            source,
            target,
            &params,
            |t| {
                let idx = params
                    .iter()
                    .position(|&q| (q - t).abs() < 1e-12)
                    .unwrap_or(0);
                let a = nearest(idx, alpha0);
                vec![a.cos(), a.sin()]
            },
            settings,
        )?;
        let (winding, rate) =
            saddle_endpoint_winding(ctx, source, target, &params, &all_angles, alpha0, settings)?;
        sheets.push(CoverSheet {
            sign,
            e_minus_degree: 1,
            target_winding: winding,
            one_form_coeff: if tgt.orbit_dim == 1 {
                Some(snap_rational(rate)?)
            } else {
                None
            },
        });
    }
    Ok(ModuliCover {
        source,
        target,
        index_gap: gap,
        dim,
        fiber_dim: 0,
        sheets,
        negative_dimension_witness: false,
    })
}

fn angle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

fn saddle_endpoint_winding(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    params: &[f64],
    all_angles: &[Vec<f64>],
    alpha0: f64,
    settings: &FlowSettings,
) -> Result<(i32, f64)> {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let tgt = &ctx.orbits[target];
    let src_period = match &src.component {
        ComponentParam::GroupCircle { orbit_period } => *orbit_period,
        _ => return Ok((0, 0.0)),
    };
    let tgt_period = match (&tgt.component, tgt.orbit_dim) {
        (ComponentParam::GroupCircle { orbit_period }, 1) => *orbit_period,
        _ => return Ok((0, 0.0)),
    };
    let n = params.len();
    let mut unwrapped = 0.0;
    let mut prev: Option<f64> = None;
    let mut alpha = alpha0;
    for k in 0..=n {
        let idx = k % n;
        let t = src_period * (k as f64) / (n as f64);
        alpha = *all_angles[idx]
            .iter()
            .min_by(|a, b| {
                angle_dist(**a, alpha)
                    .partial_cmp(&angle_dist(**b, alpha))
                    .unwrap()
            })
            .unwrap();
        let coeffs = vec![alpha.cos(), alpha.sin()];
        let (p, frame) = critstruct::frame_at(s, src, t);
        let v = fan_direction(&frame, &coeffs, s.dimension);
        let state = shoot_state(s, &p, &v);
        let end = integrate_to_ball(ctx, &state, target, settings, Some(source)).ok_or_else(|| {
            Error::Flow(format!(
                "lost saddle connection from {} to {} at parameter {t}",
                src.label, tgt.label
            ))
        })?;
        let sp = nearest_orbit_param(ctx, target, &end.p);
        if let Some(pv) = prev {
            unwrapped += wrap_signed(sp - pv, tgt_period);
        }
        prev = Some(sp);
    }
    let winding_f = unwrapped / tgt_period;
    Ok((winding_f.round() as i32, unwrapped / src_period))
}

/// Locate the isolated fan angles whose trajectories connect to the saddle
/// `target`: scan the fan; rays that capture the target directly are
/// connections, and every bracket whose neighbouring rays end at different
/// orbits is refined by minimizing the dip distance to the target.
fn connection_angles(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    t: f64,
    settings: &FlowSettings,
) -> Result<Vec<f64>> {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let n_fan = settings.directions.max(8);
    let fan: Vec<f64> = (0..n_fan)
        .map(|i| std::f64::consts::TAU * (i as f64) / (n_fan as f64))
        .collect();
    let classes: Vec<Option<usize>> = fan
        .iter()
        .map(|&a| classify_shot(ctx, source, t, &[a.cos(), a.sin()], settings))
        .collect();
    let dip = |alpha: f64| -> f64 {
        let (p, frame) = critstruct::frame_at(s, src, t);
        let v = fan_direction(&frame, &[alpha.cos(), alpha.sin()], s.dimension);
        let state = shoot_state(s, &p, &v);
        let traj = integrate_inner(
            ctx,
            &state,
            settings,
            &IntegrateOptions {
                direction: FlowDirection::Down,
                skip_orbit: Some(source),
                watch_orbit: Some(target),
                disable_capture: Some(target),
                record: false,
            },
        );
        traj.watch_min
    };
    let mut angles = Vec::new();
    for i in 0..n_fan {
        let j = (i + 1) % n_fan;
        if classes[i] == Some(target) {
            angles.push(fan[i]);
            continue;
        }
        if classes[i] == classes[j] || classes[i].is_none() || classes[j].is_none() {
            continue;
        }
        if classes[j] == Some(target) {
            continue; // counted at index j
        }
        let (a, b) = (fan[i], fan[i] + std::f64::consts::TAU / n_fan as f64);
        // Coarse pre-scan to bracket the dip minimum, then golden section.
        let pre = 16;
        let mut best = (f64::INFINITY, 0.5 * (a + b));
        for k in 0..=pre {
            let alpha = a + (b - a) * (k as f64) / (pre as f64);
            let d = dip(alpha);
            if d < best.0 {
                best = (d, alpha);
            }
        }
        let w = (b - a) / pre as f64;
        let mut lo = (best.1 - w).max(a);
        let mut hi = (best.1 + w).min(b);
        let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - gr * (hi - lo);
        let mut d = lo + gr * (hi - lo);
        let mut fc = dip(c);
        let mut fd = dip(d);
        for _ in 0..60 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - gr * (hi - lo);
                fc = dip(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + gr * (hi - lo);
                fd = dip(d);
            }
        }
        let alpha_star = 0.5 * (lo + hi);
        if dip(alpha_star) <= CONFIRM_FRACTION * settings.capture_radius {
            angles.push(alpha_star.rem_euclid(std::f64::consts::TAU));
        }
    }
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    angles.dedup_by(|x, y| angle_dist(*x, *y) < 1e-6);
    Ok(angles)
}

/// Covers with 1-dimensional fibers: arcs of the fan flowing to a minimum.
/// The fiber integral of the pulled-back normalized 1-form reduces to the
/// net drift of the endpoint parameter across the arc.
fn extract_fiber_cover(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    settings: &FlowSettings,
    dim: i64,
) -> Result<ModuliCover> {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let tgt = &ctx.orbits[target];
    let gap = src.index - tgt.index;
    let n_fan = 64;
    let fan: Vec<f64> = (0..n_fan)
        .map(|i| std::f64::consts::TAU * (i as f64) / (n_fan as f64))
        .collect();
    let src_period = match &src.component {
        ComponentParam::GroupCircle { orbit_period } => *orbit_period,
        _ => 1.0,
    };
    // A few source parameters; the invariant pushforward must agree.
    let check_params: Vec<f64> = [0.0, 0.29, 0.61].iter().map(|f| f * src_period).collect();
    let mut arc_count: Option<usize> = None;
    let mut integrals: Vec<f64> = Vec::new();
    for &t in &check_params {
        let classes: Vec<Option<usize>> = fan
            .par_iter()
            .map(|&a| classify_shot(ctx, source, t, &[a.cos(), a.sin()], settings))
            .collect();
        // Contiguous runs of fan indices captured by the target (cyclic).
        let mut arcs: Vec<Vec<usize>> = Vec::new();
        let mut visited = vec![false; n_fan];
        for i0 in 0..n_fan {
            if visited[i0] || classes[i0] != Some(target) {
                continue;
            }
            // Walk back to the start of the run.
            let mut start = i0;
            while classes[(start + n_fan - 1) % n_fan] == Some(target)
                && (start + n_fan - 1) % n_fan != i0
            {
                start = (start + n_fan - 1) % n_fan;
                if start == i0 {
                    break;
                }
            }
            let mut run = Vec::new();
            let mut k = start;
            loop {
                if classes[k] != Some(target) || visited[k] {
                    break;
                }
                visited[k] = true;
                run.push(k);
                k = (k + 1) % n_fan;
                if run.len() >= n_fan {
                    break;
                }
            }
            arcs.push(run);
        }
        match arc_count {
            None => arc_count = Some(arcs.len()),
            Some(c) if c != arcs.len() => {
                return Err(Error::CoverUnstable(format!(
                    "fiber arc count from {} to {} varies along the source orbit",
                    src.label, tgt.label
                )))
            }
            _ => {}
        }
        if tgt.orbit_dim == 0 {
            integrals.extend(arcs.iter().map(|_| 0.0));
            continue;
        }
        let tgt_period = match &tgt.component {
            ComponentParam::GroupCircle { orbit_period } => *orbit_period,
            _ => 1.0,
        };
        for run in &arcs {
            let mut unwrapped = 0.0;
            let mut prev: Option<f64> = None;
            for &k in run {
                let alpha = fan[k];
                let (p, frame) = critstruct::frame_at(s, src, t);
                let v = fan_direction(&frame, &[alpha.cos(), alpha.sin()], s.dimension);
                let state = shoot_state(s, &p, &v);
                if let Some(end) = integrate_to_ball(ctx, &state, target, settings, Some(source)) {
                    let sp = nearest_orbit_param(ctx, target, &end.p);
                    if let Some(pv) = prev {
                        unwrapped += wrap_signed(sp - pv, tgt_period);
                    }
                    prev = Some(sp);
                }
            }
            integrals.push(unwrapped);
        }
    }
    let count = arc_count.unwrap_or(0);
    if count == 0 {
        return Ok(ModuliCover::empty(source, target, gap, dim, 1));
    }
    let v0 = integrals[0];
    for v in &integrals {
        if (v - v0).abs() > 1e-3 {
            return Err(Error::CoverUnstable(format!(
                "fiber integral varies along the source orbit: {v} vs {v0}"
            )));
        }
    }
    let snapped = snap_rational(v0)?;
    let sheets = (0..count)
        .map(|_| CoverSheet {
            sign: 1,
            e_minus_degree: 1,
            target_winding: 0,
            one_form_coeff: Some(snapped),
        })
        .collect();
    Ok(ModuliCover {
        source,
        target,
        index_gap: gap,
        dim,
        fiber_dim: 1,
        sheets,
        negative_dimension_witness: false,
    })
}

// ---------------------------------------------------------------------------
// Transversality diagnostics
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransversalityVerdict {
    Transverse,
    FailureDetected,
    Inconclusive,
}

impl std::fmt::Display for TransversalityVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransversalityVerdict::Transverse => write!(f, "transverse"),
            TransversalityVerdict::FailureDetected => write!(f, "failure_detected"),
            TransversalityVerdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransversalityReport {
    pub source: usize,
    pub target: usize,
    pub verdict: TransversalityVerdict,
    pub witness: Option<FlowLine>,
    /// Expected dimension of the pointwise moduli ind(p) - ind(S') - 1.
    pub expected_dim: i64,
    pub observed_family_dim: i64,
    pub weak_self_indexing_violation: bool,
}

/// Ascending unit directions transverse to the component at `p`.
fn ascending_directions(s: &Scenario, orbit: &CriticalOrbit, p: &Point) -> Vec<Vec3> {
    let n = s.dimension;
    let g = s.metric_at(p);
    let mut seed: Vec<Vec3> = Vec::new();
    if let Some(t) = critstruct::component_tangent(s, orbit, p) {
        seed.push(t);
    }
    let mut id = Vec::new();
    for i in 0..n {
        let mut v = ZERO_VEC;
        v[i] = 1.0;
        id.push(v);
    }
    let full: Vec<Vec3> = seed.iter().cloned().chain(id).collect();
    let basis: Vec<Vec3> = linalg::g_orthonormalize(n, &g, &full)
        .into_iter()
        .skip(seed.len())
        .collect();
    let h = s.hessian(p);
    let k = basis.len();
    let mut a = [[0.0; 3]; 3];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = linalg::bilinear(n, &h, &basis[i], &basis[j]);
        }
    }
    let (vals, vecs) = linalg::sym_eigen(k, &a);
    let mut out = Vec::new();
    for i in 0..k {
        if vals[i] > 1e-7 {
            let mut v = ZERO_VEC;
            for (j, b) in basis.iter().enumerate() {
                v = linalg::axpy(n, &v, vecs[i][j], b);
            }
            out.push(v);
        }
    }
    out
}

/// Search for a connecting flow line from `hi` down to `lo` by shooting
/// upward along the ascending directions of `lo`.
pub fn find_witness(
    ctx: &FlowContext,
    hi: usize,
    lo: usize,
    settings: &FlowSettings,
) -> Result<Option<FlowLine>> {
    let s = ctx.scenario;
    let lo_orbit = &ctx.orbits[lo];
    for p in critstruct::component_points(s, lo_orbit, 8) {
        for dir in ascending_directions(s, lo_orbit, &p) {
            for sgn in [1.0, -1.0] {
                let v = linalg::scale(s.dimension, &dir, sgn);
                let state = shoot_state(s, &p, &v);
                let traj = integrate_inner(
                    ctx,
                    &state,
                    settings,
                    &IntegrateOptions {
                        direction: FlowDirection::Up,
                        skip_orbit: Some(lo),
                        watch_orbit: None,
                        disable_capture: None,
                        record: true,
                    },
                );
                if traj.outcome == (FlowOutcome::Captured { orbit: hi }) {
                    // Record the witness downward (reversed trajectory).
                    let mut samples = traj.samples;
                    samples.reverse();
                    let t_end = samples.first().map(|(t, _)| *t).unwrap_or(0.0);
                    let samples = samples.into_iter().map(|(t, q)| (t_end - t, q)).collect();
                    return Ok(Some(FlowLine {
                        start_orbit: Some(hi),
                        end_orbit: Some(lo),
                        outcome: FlowOutcome::Captured { orbit: lo },
                        samples,
                        start_param: 0.0,
                        start_direction: vec![sgn],
                        sign: None,
                    }));
                }
            }
        }
    }
    Ok(None)
}

/// Transversality diagnostics over ordered pairs of critical orbits.
pub fn diagnose_transversality(
    ctx: &FlowContext,
    pairs: &[(usize, usize)],
    settings: &FlowSettings,
) -> Result<Vec<TransversalityReport>> {
    let mut out = Vec::new();
    for &(hi, lo) in pairs {
        let a = &ctx.orbits[hi];
        let b = &ctx.orbits[lo];
        if hi == lo || a.f_value <= b.f_value + 1e-9 {
            continue;
        }
        let expected = a.index as i64 - b.index as i64 - 1;
        let witness = find_witness(ctx, hi, lo, settings)?;
        let exists = witness.is_some();
        let weak_violation = exists && a.index <= b.index;
        let verdict = if exists && (expected < 0 || weak_violation) {
            TransversalityVerdict::FailureDetected
        } else if exists {
            TransversalityVerdict::Transverse
        } else {
            TransversalityVerdict::Inconclusive
        };
        out.push(TransversalityReport {
            source: hi,
            target: lo,
            verdict,
            witness,
            expected_dim: expected,
            observed_family_dim: if exists { 0 } else { -1 },
            weak_self_indexing_violation: weak_violation,
        });
    }
    Ok(out)
}

/// All ordered pairs with descending f-values, the default diagnostic set.
pub fn default_pairs(orbits: &[CriticalOrbit]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for a in orbits {
        for b in orbits {
            if a.id != b.id && a.f_value > b.f_value + 1e-9 {
                pairs.push((a.id, b.id));
            }
        }
    }
    pairs
}

// Debug probes used by the examples; not part of the public surface.
#[doc(hidden)]
pub fn debug_classify(
    ctx: &FlowContext,
    source: usize,
    t: f64,
    angle: f64,
    settings: &FlowSettings,
) -> Option<usize> {
    classify_shot(ctx, source, t, &[angle.cos(), angle.sin()], settings)
}

#[doc(hidden)]
pub fn debug_connection_angles(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    t: f64,
    settings: &FlowSettings,
) -> Result<Vec<f64>> {
    connection_angles(ctx, source, target, t, settings)
}

#[doc(hidden)]
pub fn debug_dip(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    t: f64,
    alpha: f64,
    settings: &FlowSettings,
) -> f64 {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let (p, frame) = critstruct::frame_at(s, src, t);
    let v = fan_direction(&frame, &[alpha.cos(), alpha.sin()], s.dimension);
    let state = shoot_state(s, &p, &v);
    let traj = integrate_inner(
        ctx,
        &state,
        settings,
        &IntegrateOptions {
            direction: FlowDirection::Down,
            skip_orbit: Some(source),
            watch_orbit: Some(target),
            disable_capture: Some(target),
            record: false,
        },
    );
    traj.watch_min
}

#[doc(hidden)]
pub fn debug_transport_trace(
    ctx: &FlowContext,
    source: usize,
    target: usize,
    t_param: f64,
    alpha: f64,
    settings: &FlowSettings,
) {
    let s = ctx.scenario;
    let src = &ctx.orbits[source];
    let (p, frame) = critstruct::frame_at(s, src, t_param);
    let v = fan_direction(&frame, &[alpha.cos(), alpha.sin()], s.dimension);
    let mut state = shoot_state(s, &p, &v);
    state.cols = frame.clone();
    let dim = s.dimension;
    state.p = s.canonicalize_moving(&state.p, &mut state.cols);
    let mut t = 0.0;
    let mut h: f64 = 1e-4;
    let mut steps = 0usize;
    let mut rejects = 0usize;
    for _step in 0..settings.max_steps {
        if t >= settings.t_max {
            break;
        }
        let h_try = h.min(settings.t_max - t).min(0.2);
        let flat = state.flatten(dim);
        let res = dopri_step(s, -1.0, state.p.chart, &flat, h_try, state.cols.len(), settings.step_tol);
        if res.error > 1.0 {
            rejects += 1;
            h = h_try * (0.9 * res.error.powf(-0.2)).max(0.2);
            if h < 1e-14 {
                println!("STEP COLLAPSE at t={t} steps={steps} rejects={rejects}");
                return;
            }
            continue;
        }
        t += h_try;
        steps += 1;
        h = h_try * (0.9 * res.error.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        state = state.unflatten(dim, &res.state);
        state.p = s.canonicalize_moving(&state.p, &mut state.cols);
        state.p = s.maybe_switch_chart(&state.p, &mut state.cols);
        if !state.cols.is_empty() {
            let mut eye = [[0.0; 3]; 3];
            for i in 0..dim {
                eye[i][i] = 1.0;
            }
            state.cols = linalg::g_orthonormalize(dim, &eye, &state.cols);
        }
        if steps % 500 == 0 {
            println!(
                "t={:.3} h={:.2e} pos={:?} dist={:.3e} ncols={}",
                t, h, state.p.x, ctx.orbit_distance(target, &state.p), state.cols.len()
            );
        }
        if ctx.orbit_distance(target, &state.p) <= settings.capture_radius {
            println!("BALL ENTRY at t={t} steps={steps} pos={:?}", state.p.x);
            return;
        }
    }
    println!("NO ENTRY: t={t} steps={steps} rejects={rejects} pos={:?}", state.p.x);
}
