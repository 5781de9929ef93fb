//! Critical orbit structure: detection of critical components, normal
//! Hessian data, Morse indices, isotropy groups, the trivial/nontrivial
//! splitting of the normal space by stabilizer averaging, stability flags
//! and invariant frames for negative normal bundles.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{GroupElement, GroupKind, Point, RadialZone, Scenario};
use crate::linalg::{self, Vec3, ZERO_VEC};

/// Convergence threshold for the slice Newton residual.
const NEWTON_RESIDUAL_TOL: f64 = 1e-13;
/// Final acceptance: g-norm of the gradient at a critical point.
const CRITICAL_GRAD_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 60;
/// Eigenvalues of the normal Hessian inside this band are degenerate.
const DEGENERACY_TOL: f64 = 1e-7;
/// Coordinate distance under which converged points are duplicates.
const DEDUP_TOL: f64 = 1e-5;
/// Distance after optimal group parameter for orbit membership.
const ORBIT_MATCH_TOL: f64 = 1e-6;
/// Predictor step while tracing a critical circle that is not an orbit.
const TRACE_STEP: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IsotropyKind {
    Trivial,
    Cyclic(u32),
    FullCircle,
}

impl std::fmt::Display for IsotropyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IsotropyKind::Trivial => write!(f, "trivial"),
            IsotropyKind::Cyclic(m) => write!(f, "Z{m}"),
            IsotropyKind::FullCircle => write!(f, "circle"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IsotropyDescriptor {
    pub kind: IsotropyKind,
    pub generators: Vec<GroupElement>,
}

/// How a critical component is parametrized.
#[derive(Clone, Debug)]
pub enum ComponentParam {
    Point,
    /// A free or cyclically-stabilized circle orbit of the circle action;
    /// `orbit_period` is the minimal positive return time.
    GroupCircle { orbit_period: f64 },
    /// A critical circle that is not a group orbit (finite actions), stored
    /// as a densely traced closed polyline.
    TracedLoop { samples: Vec<Point> },
}

#[derive(Clone, Debug)]
pub struct CriticalOrbit {
    pub id: usize,
    pub label: String,
    pub representative: Point,
    /// Dimension of the critical component (0 or 1 in the catalogue).
    pub orbit_dim: usize,
    /// Whether the component tangent agrees with the group-orbit tangent,
    /// i.e. the G-Morse-Bott condition at this component.
    pub is_group_orbit: bool,
    pub index: usize,
    pub isotropy: IsotropyDescriptor,
    pub stable: bool,
    pub f_value: f64,
    /// g-orthonormal basis of the negative normal space at the
    /// representative (empty when unstable or index 0).
    pub neg_frame: Vec<Vec3>,
    /// Orientation sign of the rank-0 descending frame (index-0 orbits).
    pub descending_orientation: i32,
    pub component: ComponentParam,
}

impl CriticalOrbit {
    pub fn is_circle(&self) -> bool {
        self.orbit_dim == 1
    }
}

#[derive(Clone, Debug)]
pub struct CritResult {
    pub orbits: Vec<CriticalOrbit>,
    pub warnings: Vec<String>,
}

/// Normal-space data at the representative of a critical orbit.
#[derive(Clone, Debug)]
pub struct NormalDecomposition {
    /// g-orthonormal coordinate vectors spanning `N_p`.
    pub normal_basis: Vec<Vec3>,
    /// Averaging projector in the normal basis.
    pub projector: Vec<Vec3>,
    /// Basis of the isotropy-fixed part `N'` (coordinates in normal basis).
    pub trivial_part: Vec<Vec3>,
    /// Basis of the complement `N''` (coordinates in normal basis).
    pub nontrivial_part: Vec<Vec3>,
    /// Hessian operator `A_p` in the normal basis.
    pub hessian_op: Vec<Vec3>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors in normal-basis coordinates, matching `eigenvalues`.
    pub eigenvectors: Vec<Vec3>,
}

impl NormalDecomposition {
    pub fn negative_count(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l < -DEGENERACY_TOL).count()
    }

    pub fn zero_count(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| l.abs() <= DEGENERACY_TOL)
            .count()
    }
}

// ---------------------------------------------------------------------------
// Newton refinement
// ---------------------------------------------------------------------------

/// Slice basis at `p`: Euclidean-orthonormal complement of the fundamental
/// field span (the full coordinate basis when the field vanishes).
fn slice_basis(s: &Scenario, p: &Point) -> Vec<Vec3> {
    let n = s.dimension;
    let mut seed: Vec<Vec3> = Vec::new();
    if let Some(xf) = s.fundamental_field(p) {
        if linalg::norm(n, &xf) > 1e-6 {
            seed.push(xf);
        }
    }
    let id = identity_vectors(n);
    let full: Vec<Vec3> = seed.iter().cloned().chain(id).collect();
    let mut eye = [[0.0; 3]; 3];
    for i in 0..n {
        eye[i][i] = 1.0;
    }
    let ortho = linalg::g_orthonormalize(n, &eye, &full);
    ortho.into_iter().skip(seed.len().min(1)).collect()
}

fn identity_vectors(n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|i| {
            let mut v = ZERO_VEC;
            v[i] = 1.0;
            v
        })
        .collect()
}

/// Newton iteration for `df = 0` restricted to a local slice transverse to
/// the orbit directions. Returns the converged critical point.
pub fn newton_refine(s: &Scenario, seed: &Point) -> Option<Point> {
    let n = s.dimension;
    let mut p = s.to_canonical_chart(seed);
    for _ in 0..NEWTON_MAX_ITERS {
        if !s.chart_valid(&p) {
            return None;
        }
        let basis = slice_basis(s, &p);
        let k = basis.len();
        let df = s.df(&p);
        let mut rhs = ZERO_VEC;
        for (i, b) in basis.iter().enumerate() {
            rhs[i] = -linalg::dot(n, b, &df);
        }
        let new_res = linalg::norm(k, &rhs);
        if new_res <= NEWTON_RESIDUAL_TOL {
            break;
        }
        let h = s.hessian(&p);
        // Reduced Hessian on the slice.
        let mut hr = [[0.0; 3]; 3];
        for i in 0..k {
            for j in 0..k {
                hr[i][j] = linalg::bilinear(n, &h, &basis[i], &basis[j]);
            }
        }
        let c = linalg::solve_sym_truncated(k, &hr, &rhs, 1e-6);
        let mut step = ZERO_VEC;
        for i in 0..k {
            step = linalg::axpy(n, &step, c[i], &basis[i]);
        }
        // Damped update: shrink until the slice residual does not grow.
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..20 {
            let cand = Point {
                chart: p.chart,
                x: linalg::axpy(n, &p.x, lambda, &step),
            };
            let cand = s.to_canonical_chart(&cand);
            if s.chart_valid(&cand) {
                let dfc = s.df(&cand);
                let cb = slice_basis(s, &cand);
                let mut r = ZERO_VEC;
                for (i, b) in cb.iter().enumerate() {
                    r[i] = linalg::dot(n, b, &dfc);
                }
                let rn = linalg::norm(cb.len(), &r);
                if rn < new_res || rn <= NEWTON_RESIDUAL_TOL {
                    accepted = Some((cand, rn));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((cand, rn)) => {
                p = cand;
                if rn <= NEWTON_RESIDUAL_TOL {
                    break;
                }
            }
            None => return None,
        }
    }
    let grad = s.grad(&p);
    if s.g_norm(&p, &grad) <= CRITICAL_GRAD_TOL {
        Some(p)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Orbit membership and component distance
// ---------------------------------------------------------------------------

/// Minimal distance from `x` to the circle orbit through `p`, together with
/// the minimizing group parameter (coarse scan plus golden-section refine).
pub fn circle_orbit_distance(s: &Scenario, p: &Point, x: &Point) -> (f64, f64) {
    let period = s.circle_period();
    let n_scan = 256;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..n_scan {
        let t = period * (k as f64) / (n_scan as f64);
        let d = s.distance(&s.act(GroupElement::Circle(t), p), x);
        if d < best.0 {
            best = (d, t);
        }
    }
    // Golden-section refinement around the best scan node.
    let gr = (5.0_f64.sqrt() - 1.0) / 2.0;
    let window = period / (n_scan as f64);
    let mut a = best.1 - window;
    let mut b = best.1 + window;
    let eval = |t: f64| s.distance(&s.act(GroupElement::Circle(t.rem_euclid(period)), p), x);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = eval(d);
        }
    }
    let t = 0.5 * (a + b);
    let dist = eval(t);
    if dist < best.0 {
        (dist, t.rem_euclid(period))
    } else {
        best
    }
}

/// Distance from `x` to a critical component.
pub fn component_distance(s: &Scenario, orbit: &CriticalOrbit, x: &Point) -> f64 {
    match &orbit.component {
        ComponentParam::Point => s.distance(&orbit.representative, x),
        ComponentParam::GroupCircle { .. } => {
            circle_orbit_distance(s, &orbit.representative, x).0
        }
        ComponentParam::TracedLoop { samples } => {
            // Distance to the polyline: nearest point on any segment,
            // computed with wrapped coordinate displacements.
            let n = s.dimension;
            let mut best = f64::INFINITY;
            for i in 0..samples.len() {
                let a = &samples[i];
                let b = &samples[(i + 1) % samples.len()];
                let seg = s.wrapped_diff(b, a);
                let to_x = s.wrapped_diff(x, a);
                let len2 = linalg::dot(n, &seg, &seg);
                let t = if len2 > 0.0 {
                    (linalg::dot(n, &to_x, &seg) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let foot = linalg::axpy(n, &to_x, -t, &seg);
                best = best.min(linalg::norm(n, &foot));
            }
            best
        }
    }
}

/// Points sampled along a critical component (for invariant checks and for
/// shooting descending spheres from circle orbits).
pub fn component_points(s: &Scenario, orbit: &CriticalOrbit, count: usize) -> Vec<Point> {
    match &orbit.component {
        ComponentParam::Point => vec![orbit.representative],
        ComponentParam::GroupCircle { orbit_period } => (0..count)
            .map(|k| {
                let t = orbit_period * (k as f64) / (count as f64);
                s.act(GroupElement::Circle(t), &orbit.representative)
            })
            .collect(),
        ComponentParam::TracedLoop { samples } => {
            let stride = (samples.len() / count).max(1);
            samples.iter().step_by(stride).cloned().collect()
        }
    }
}

/// Unit tangent of the component at one of its points (None for points).
pub fn component_tangent(s: &Scenario, orbit: &CriticalOrbit, p: &Point) -> Option<Vec3> {
    match &orbit.component {
        ComponentParam::Point => None,
        ComponentParam::GroupCircle { .. } => {
            let xf = s.fundamental_field(p)?;
            let norm = s.g_norm(p, &xf);
            (norm > 1e-12).then(|| linalg::scale(s.dimension, &xf, 1.0 / norm))
        }
        ComponentParam::TracedLoop { samples } => {
            // Tangent from the nearest pair of loop samples.
            let (i, _) = samples
                .iter()
                .enumerate()
                .map(|(i, q)| (i, s.distance(q, p)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())?;
            let next = &samples[(i + 1) % samples.len()];
            let prev = &samples[(i + samples.len() - 1) % samples.len()];
            let d = s.wrapped_diff(next, prev);
            let n = s.g_norm(p, &d);
            (n > 1e-12).then(|| linalg::scale(s.dimension, &d, 1.0 / n))
        }
    }
}

// ---------------------------------------------------------------------------
// Finding critical orbits
// ---------------------------------------------------------------------------

pub fn find_critical_orbits(s: &Scenario, seeds: &[Point]) -> Result<CritResult> {
    let mut warnings = Vec::new();
    let converged: Vec<Point> = seeds
        .par_iter()
        .filter_map(|seed| newton_refine(s, seed))
        .collect();
    let failed = seeds.len() - converged.len();
    if failed > 0 {
        warnings.push(format!(
            "newton: {failed} of {} seeds did not converge",
            seeds.len()
        ));
    }
    if converged.is_empty() {
        return Err(Error::Degenerate("no critical points found from any seed".into()));
    }

    // Deduplicate.
    let mut unique: Vec<Point> = Vec::new();
    for p in converged {
        if !unique.iter().any(|q| s.distance(q, &p) < DEDUP_TOL) {
            unique.push(p);
        }
    }

    // Cluster points lying on a common connected component: the circle orbit
    // through a point (continuous group parameter search), or a traced
    // critical circle transverse to a degenerate Hessian direction.
    let mut assigned = vec![usize::MAX; unique.len()];
    let mut components: Vec<ComponentSeed> = Vec::new();
    for i in 0..unique.len() {
        if assigned[i] != usize::MAX {
            continue;
        }
        let rep = unique[i];
        let comp = classify_component(s, &rep)?;
        let id = components.len();
        assigned[i] = id;
        for j in (i + 1)..unique.len() {
            if assigned[j] != usize::MAX {
                continue;
            }
            if comp.contains(s, &unique[j]) {
                assigned[j] = id;
            }
        }
        components.push(comp);
    }

    let mut orbits: Vec<CriticalOrbit> = components
        .into_iter()
        .map(|c| build_orbit(s, c))
        .collect::<Result<_>>()?;

    // Deterministic order and labels.
    orbits.sort_by(|a, b| {
        a.f_value
            .partial_cmp(&b.f_value)
            .unwrap()
            .then_with(|| a.label.cmp(&b.label))
    });
    assign_labels(s, &mut orbits)?;
    orbits.sort_by(|a, b| {
        a.f_value
            .partial_cmp(&b.f_value)
            .unwrap()
            .then_with(|| a.label.cmp(&b.label))
    });
    for (i, o) in orbits.iter_mut().enumerate() {
        o.id = i;
    }
    Ok(CritResult { orbits, warnings })
}

struct ComponentSeed {
    rep: Point,
    param: ComponentParam,
}

impl ComponentSeed {
    fn contains(&self, s: &Scenario, x: &Point) -> bool {
        match &self.param {
            ComponentParam::Point => s.distance(&self.rep, x) < DEDUP_TOL,
            ComponentParam::GroupCircle { .. } => {
                circle_orbit_distance(s, &self.rep, x).0 < ORBIT_MATCH_TOL
            }
            ComponentParam::TracedLoop { samples } => samples
                .iter()
                .any(|q| s.distance(q, x) < TRACE_STEP),
        }
    }
}

/// Decide whether the critical point `p` lies on a positive-dimensional
/// critical component and parametrize that component.
fn classify_component(s: &Scenario, p: &Point) -> Result<ComponentSeed> {
    let n = s.dimension;
    // Group-circle component: nonvanishing fundamental field.
    if s.group_kind() == GroupKind::Circle {
        if let Some(xf) = s.fundamental_field(p) {
            if s.g_norm(p, &xf) > 1e-9 {
                let orbit_period = minimal_return_time(s, p);
                return Ok(ComponentSeed {
                    rep: *p,
                    param: ComponentParam::GroupCircle { orbit_period },
                });
            }
        }
    }
    // Bott component transverse to the orbit directions: look for a
    // degenerate Hessian direction and trace it.
    let h = s.hessian(p);
    let (vals, vecs) = linalg::sym_eigen(n, &h);
    let mut null_dirs: Vec<Vec3> = Vec::new();
    for k in 0..n {
        if vals[k].abs() <= DEGENERACY_TOL {
            null_dirs.push(vecs[k]);
        }
    }
    if null_dirs.is_empty() {
        return Ok(ComponentSeed {
            rep: *p,
            param: ComponentParam::Point,
        });
    }
    if null_dirs.len() > 1 {
        return Err(Error::Degenerate(format!(
            "critical point {:?} has {}-dimensional Hessian kernel",
            p.x,
            null_dirs.len()
        )));
    }
    let samples = trace_critical_loop(s, p, &null_dirs[0])?;
    Ok(ComponentSeed {
        rep: *p,
        param: ComponentParam::TracedLoop { samples },
    })
}

/// Minimal `t > 0` with `act(t, p) = p`, assuming `p` lies on a circle orbit.
fn minimal_return_time(s: &Scenario, p: &Point) -> f64 {
    let period = s.circle_period();
    let stab = isotropy(s, p);
    match stab.kind {
        IsotropyKind::Cyclic(m) => period / m as f64,
        _ => period,
    }
}

/// Predictor-corrector tracing of a critical circle along a Hessian null
/// direction. Fails with a degeneracy error when the corrector cannot keep
/// the curve critical, which is what distinguishes a genuine Bott circle
/// from a degenerate critical point.
fn trace_critical_loop(s: &Scenario, start: &Point, dir0: &Vec3) -> Result<Vec<Point>> {
    let n = s.dimension;
    let mut samples = vec![*start];
    let mut p = *start;
    let mut dir = *dir0;
    for step in 0..4000 {
        let pred = Point {
            chart: p.chart,
            x: linalg::axpy(n, &p.x, TRACE_STEP, &dir),
        };
        let pred = s.to_canonical_chart(&pred);
        // Corrector: Newton in the hyperplane orthogonal to the step.
        let corrected = correct_on_hyperplane(s, &pred, &dir).ok_or_else(|| {
            Error::Degenerate(format!(
                "failed to continue critical curve from {:?}; Hessian kernel does not extend",
                start.x
            ))
        })?;
        // Refresh the null direction, keeping orientation.
        let h = s.hessian(&corrected);
        let (vals, vecs) = linalg::sym_eigen(n, &h);
        let mut best: Option<Vec3> = None;
        for k in 0..n {
            if vals[k].abs() <= 10.0 * DEGENERACY_TOL {
                best = Some(vecs[k]);
            }
        }
        let mut new_dir = best.ok_or_else(|| {
            Error::Degenerate(format!(
                "critical curve from {:?} lost its null direction",
                start.x
            ))
        })?;
        if linalg::dot(n, &new_dir, &dir) < 0.0 {
            new_dir = linalg::scale(n, &new_dir, -1.0);
        }
        dir = new_dir;
        p = corrected;
        samples.push(p);
        if step > 3 && s.distance(&p, start) < TRACE_STEP {
            return Ok(samples);
        }
    }
    Err(Error::Degenerate(format!(
        "critical curve from {:?} did not close after 4000 steps",
        start.x
    )))
}

fn correct_on_hyperplane(s: &Scenario, seed: &Point, dir: &Vec3) -> Option<Point> {
    let n = s.dimension;
    let mut p = *seed;
    for _ in 0..40 {
        let df = s.df(&p);
        // Basis of the hyperplane orthogonal to dir.
        let mut eye = [[0.0; 3]; 3];
        for i in 0..n {
            eye[i][i] = 1.0;
        }
        let full: Vec<Vec3> = std::iter::once(*dir).chain(identity_vectors(n)).collect();
        let basis: Vec<Vec3> = linalg::g_orthonormalize(n, &eye, &full)
            .into_iter()
            .skip(1)
            .collect();
        let mut rhs = ZERO_VEC;
        for (i, b) in basis.iter().enumerate() {
            rhs[i] = -linalg::dot(n, b, &df);
        }
        if linalg::norm(basis.len(), &rhs) <= 1e-12 {
            let grad = s.grad(&p);
            if s.g_norm(&p, &grad) <= 1e-8 {
                return Some(p);
            }
            return None;
        }
        let h = s.hessian(&p);
        let mut hr = [[0.0; 3]; 3];
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                hr[i][j] = linalg::bilinear(n, &h, &basis[i], &basis[j]);
            }
        }
        let c = linalg::solve_sym_truncated(basis.len(), &hr, &rhs, 1e-8);
        let mut step = ZERO_VEC;
        for i in 0..basis.len() {
            step = linalg::axpy(n, &step, c[i], &basis[i]);
        }
        p = s.to_canonical_chart(&Point {
            chart: p.chart,
            x: linalg::add(n, &p.x, &step),
        });
    }
    None
}

fn build_orbit(s: &Scenario, seed: ComponentSeed) -> Result<CriticalOrbit> {
    let rep = canonical_representative(s, &seed);
    let param = match seed.param {
        ComponentParam::TracedLoop { samples } => ComponentParam::TracedLoop { samples },
        ComponentParam::GroupCircle { orbit_period } => ComponentParam::GroupCircle { orbit_period },
        ComponentParam::Point => ComponentParam::Point,
    };
    let orbit_dim = match &param {
        ComponentParam::Point => 0,
        _ => 1,
    };
    let iso = isotropy(s, &rep);
    let fundamental_rank = match s.fundamental_field(&rep) {
        Some(xf) if s.g_norm(&rep, &xf) > 1e-9 => 1,
        _ => 0,
    };
    let is_group_orbit = orbit_dim == fundamental_rank;

    // Morse index from the Hessian transverse to the component.
    let stub = CriticalOrbit {
        id: 0,
        label: String::new(),
        representative: rep,
        orbit_dim,
        is_group_orbit,
        index: 0,
        isotropy: iso.clone(),
        stable: false,
        f_value: s.value(&rep),
        neg_frame: Vec::new(),
        descending_orientation: 1,
        component: param,
    };
    let index = transverse_index(s, &stub, &rep)?;

    let mut orbit = CriticalOrbit { index, ..stub };

    // Stability through the normal decomposition (with respect to the group
    // orbit tangent). Vacuously stable when N'' is empty.
    let nd = normal_decomposition(s, &orbit)?;
    orbit.stable = check_stability(&nd);

    if orbit.stable && orbit.index > 0 {
        orbit.neg_frame = negative_frame_from_decomposition(s, &orbit, &nd)?;
    }
    if orbit.index == 0 {
        orbit.descending_orientation = zero_dim_orientation(s, &orbit);
    }
    Ok(orbit)
}

/// Number of negative eigenvalues of the Hessian transverse to the
/// component; errors when an eigenvalue sits in the degeneracy band.
pub fn transverse_index(s: &Scenario, orbit: &CriticalOrbit, p: &Point) -> Result<usize> {
    let n = s.dimension;
    let g = s.metric_at(p);
    let mut seed: Vec<Vec3> = Vec::new();
    if let Some(t) = component_tangent(s, orbit, p) {
        seed.push(t);
    }
    let full: Vec<Vec3> = seed.iter().cloned().chain(identity_vectors(n)).collect();
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
    let (vals, _) = linalg::sym_eigen(k, &a);
    let mut index = 0;
    for i in 0..k {
        if vals[i].abs() <= DEGENERACY_TOL {
            return Err(Error::Degenerate(format!(
                "normal Hessian eigenvalue {} at {:?} within tolerance band",
                vals[i], p.x
            )));
        }
        if vals[i] < 0.0 {
            index += 1;
        }
    }
    Ok(index)
}

fn canonical_representative(s: &Scenario, seed: &ComponentSeed) -> Point {
    match &seed.param {
        ComponentParam::Point => s.to_canonical_chart(&seed.rep),
        ComponentParam::GroupCircle { .. } => {
            let period = s.circle_period();
            match s.manifold {
                crate::geometry::ManifoldKind::MappingTorus => {
                    // Zero the tau coordinate; two branches may land there.
                    let t1 = (-seed.rep.x[2]).rem_euclid(period);
                    let a = s.act(GroupElement::Circle(t1), &seed.rep);
                    let b = s.act(GroupElement::Circle((t1 + 1.0).rem_euclid(period)), &seed.rep);
                    if lex_less(&a, &b) {
                        a
                    } else {
                        b
                    }
                }
                crate::geometry::ManifoldKind::Sphere => {
                    // Rotate so the representative sits on the positive u-axis.
                    let ang = seed.rep.x[1].atan2(seed.rep.x[0]);
                    let t = (-ang / crate::geometry::action::TAU).rem_euclid(period);
                    let mut q = s.act(GroupElement::Circle(t), &seed.rep);
                    if q.x[1].abs() < 1e-12 {
                        q.x[1] = 0.0;
                    }
                    q
                }
                _ => s.to_canonical_chart(&seed.rep),
            }
        }
        ComponentParam::TracedLoop { samples } => {
            let best = samples
                .iter()
                .min_by(|a, b| lex_key(a).partial_cmp(&lex_key(b)).unwrap())
                .unwrap();
            newton_refine(s, best).unwrap_or(*best)
        }
    }
}

fn lex_key(p: &Point) -> (usize, [f64; 3]) {
    (p.chart, p.x)
}

fn lex_less(a: &Point, b: &Point) -> bool {
    lex_key(a).partial_cmp(&lex_key(b)) == Some(std::cmp::Ordering::Less)
}

fn assign_labels(s: &Scenario, orbits: &mut [CriticalOrbit]) -> Result<()> {
    let mut taken = vec![false; orbits.len()];
    for (anchor, label) in &s.label_anchors {
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in orbits.iter().enumerate() {
            let d = component_distance(s, o, anchor);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, d)) = best {
            if d < 1e-4 {
                if taken[i] && orbits[i].label != *label {
                    return Err(Error::Internal(format!(
                        "label anchors {label} and {} match the same orbit",
                        orbits[i].label
                    )));
                }
                orbits[i].label = label.clone();
                taken[i] = true;
            }
        }
    }
    let mut counter = 0;
    for o in orbits.iter_mut() {
        if o.label.is_empty() {
            o.label = format!("C{counter}");
            counter += 1;
        }
    }
    Ok(())
}

fn zero_dim_orientation(s: &Scenario, orbit: &CriticalOrbit) -> i32 {
    for (anchor, sign) in &s.zero_dim_signs {
        if component_distance(s, orbit, anchor) < 1e-4 {
            return *sign;
        }
    }
    1
}

// ---------------------------------------------------------------------------
// Isotropy
// ---------------------------------------------------------------------------

pub fn isotropy(s: &Scenario, p: &Point) -> IsotropyDescriptor {
    match s.group_kind() {
        GroupKind::Trivial => IsotropyDescriptor {
            kind: IsotropyKind::Trivial,
            generators: Vec::new(),
        },
        GroupKind::FiniteCyclic(n) => {
            let mut fixers = Vec::new();
            for k in 1..n {
                let q = s.act(GroupElement::Finite(k), p);
                if s.distance(&q, p) <= 1e-10 {
                    fixers.push(k);
                }
            }
            if fixers.is_empty() {
                IsotropyDescriptor {
                    kind: IsotropyKind::Trivial,
                    generators: Vec::new(),
                }
            } else {
                let m = fixers.len() as u32 + 1;
                IsotropyDescriptor {
                    kind: IsotropyKind::Cyclic(m),
                    generators: vec![GroupElement::Finite(fixers[0])],
                }
            }
        }
        GroupKind::Circle => {
            let xf = s.fundamental_field(p).unwrap_or(ZERO_VEC);
            if s.g_norm(p, &xf) <= 1e-9 {
                return IsotropyDescriptor {
                    kind: IsotropyKind::FullCircle,
                    generators: Vec::new(),
                };
            }
            let period = s.circle_period();
            let n_scan = 512;
            let mut best: Option<f64> = None;
            for k in 1..n_scan {
                let t = period * (k as f64) / (n_scan as f64);
                let d = s.distance(&s.act(GroupElement::Circle(t), p), p);
                if d < 0.05 {
                    // Refine by scanning a fine local window.
                    let mut local = (d, t);
                    let w = period / n_scan as f64;
                    for j in 0..=200 {
                        let tt = t - w + 2.0 * w * (j as f64) / 200.0;
                        if tt <= 1e-9 || tt >= period - 1e-9 {
                            continue;
                        }
                        let dd = s.distance(&s.act(GroupElement::Circle(tt), p), p);
                        if dd < local.0 {
                            local = (dd, tt);
                        }
                    }
                    if local.0 <= 1e-10 {
                        best = Some(best.map_or(local.1, |b: f64| b.min(local.1)));
                    }
                }
            }
            match best {
                Some(tmin) => {
                    let m = (period / tmin).round();
                    if (period / tmin - m).abs() < 1e-6 && m >= 2.0 {
                        IsotropyDescriptor {
                            kind: IsotropyKind::Cyclic(m as u32),
                            generators: vec![GroupElement::Circle(tmin)],
                        }
                    } else {
                        IsotropyDescriptor {
                            kind: IsotropyKind::Trivial,
                            generators: Vec::new(),
                        }
                    }
                }
                None => IsotropyDescriptor {
                    kind: IsotropyKind::Trivial,
                    generators: Vec::new(),
                },
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Normal decomposition, stability, frames
// ---------------------------------------------------------------------------

/// Stabilizer elements used to average over the isotropy group.
fn isotropy_elements(s: &Scenario, iso: &IsotropyDescriptor) -> Vec<GroupElement> {
    match iso.kind {
        IsotropyKind::Trivial => vec![GroupElement::Identity],
        IsotropyKind::Cyclic(m) => match s.group_kind() {
            GroupKind::Circle => {
                let step = s.circle_period() / m as f64;
                (0..m).map(|k| GroupElement::Circle(step * k as f64)).collect()
            }
            GroupKind::FiniteCyclic(n) => {
                let step = n / m;
                (0..m).map(|k| GroupElement::Finite(step * k)).collect()
            }
            GroupKind::Trivial => vec![GroupElement::Identity],
        },
        IsotropyKind::FullCircle => Vec::new(), // handled by quadrature
    }
}

pub fn normal_decomposition(s: &Scenario, orbit: &CriticalOrbit) -> Result<NormalDecomposition> {
    normal_decomposition_in_metric(s, orbit, None)
}

/// Normal decomposition with an optional metric override (used by the
/// stability equivalence checks).
pub fn normal_decomposition_in_metric(
    s: &Scenario,
    orbit: &CriticalOrbit,
    metric: Option<&crate::geometry::MetricField>,
) -> Result<NormalDecomposition> {
    let scen;
    let s_eff: &Scenario = match metric {
        Some(m) => {
            scen = s.with_metric(*m);
            &scen
        }
        None => s,
    };
    let n = s_eff.dimension;
    let p = &orbit.representative;
    let g = s_eff.metric_at(p);

    // Normal space: g-orthogonal complement of the group-orbit tangent.
    let mut seed: Vec<Vec3> = Vec::new();
    if let Some(xf) = s_eff.fundamental_field(p) {
        if s_eff.g_norm(p, &xf) > 1e-9 {
            seed.push(xf);
        }
    }
    let full: Vec<Vec3> = seed.iter().cloned().chain(identity_vectors(n)).collect();
    let basis: Vec<Vec3> = linalg::g_orthonormalize(n, &g, &full)
        .into_iter()
        .skip(seed.len())
        .collect();
    let k = basis.len();

    // Averaging projector over the stabilizer.
    let mut avg: Vec<Vec3> = vec![ZERO_VEC; k];
    match orbit.isotropy.kind {
        IsotropyKind::FullCircle => {
            // Trapezoid quadrature of the pushforward over the circle.
            let nodes = 64;
            let period = s_eff.circle_period();
            for j in 0..k {
                let mut acc = ZERO_VEC;
                for q in 0..nodes {
                    let t = period * (q as f64) / (nodes as f64);
                    let (_, w) = s_eff.act_on_tangent(GroupElement::Circle(t), p, &basis[j]);
                    acc = linalg::add(n, &acc, &w);
                }
                avg[j] = linalg::scale(n, &acc, 1.0 / nodes as f64);
            }
        }
        _ => {
            let elems = isotropy_elements(s_eff, &orbit.isotropy);
            let m = elems.len().max(1);
            for j in 0..k {
                let mut acc = ZERO_VEC;
                for e in &elems {
                    let (_, w) = s_eff.act_on_tangent(*e, p, &basis[j]);
                    acc = linalg::add(n, &acc, &w);
                }
                avg[j] = linalg::scale(n, &acc, 1.0 / m as f64);
            }
        }
    }
    // Projector matrix in the (g-orthonormal) normal basis.
    let mut proj: Vec<Vec3> = vec![ZERO_VEC; k];
    for i in 0..k {
        for j in 0..k {
            proj[i][j] = linalg::g_dot(n, &g, &basis[i], &avg[j]);
        }
    }
    // Idempotence check.
    let mut p2 = vec![ZERO_VEC; k];
    for i in 0..k {
        for j in 0..k {
            let mut v = 0.0;
            for l in 0..k {
                v += proj[i][l] * proj[l][j];
            }
            p2[i][j] = v;
        }
    }
    let mut idem_err = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            idem_err = idem_err.max((p2[i][j] - proj[i][j]).abs());
        }
    }
    if idem_err > 1e-8 {
        return Err(Error::Internal(format!(
            "averaging projector fails idempotence: residual {idem_err}"
        )));
    }

    // N' = fixed space (eigenvalue 1), N'' = complement (eigenvalue 0).
    let mut proj_mat = [[0.0; 3]; 3];
    for i in 0..k {
        for j in 0..k {
            proj_mat[i][j] = 0.5 * (proj[i][j] + proj[j][i]);
        }
    }
    let (pvals, pvecs) = linalg::sym_eigen(k, &proj_mat);
    let mut trivial = Vec::new();
    let mut nontrivial = Vec::new();
    for i in 0..k {
        if pvals[i] > 0.5 {
            trivial.push(pvecs[i]);
        } else {
            nontrivial.push(pvecs[i]);
        }
    }

    // Hessian operator in the normal basis.
    let h = s_eff.hessian(p);
    let mut a = vec![ZERO_VEC; k];
    let mut a_mat = [[0.0; 3]; 3];
    for i in 0..k {
        for j in 0..k {
            let v = linalg::bilinear(n, &h, &basis[i], &basis[j]);
            a[i][j] = v;
            a_mat[i][j] = v;
        }
    }
    let mut asym = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            asym = asym.max((a_mat[i][j] - a_mat[j][i]).abs());
        }
    }
    if asym > 1e-9 {
        return Err(Error::Internal(format!(
            "normal Hessian operator not symmetric: residual {asym}"
        )));
    }
    let (avals, avecs) = linalg::sym_eigen(k, &a_mat);

    Ok(NormalDecomposition {
        normal_basis: basis,
        projector: proj,
        trivial_part: trivial,
        nontrivial_part: nontrivial,
        hessian_op: a,
        eigenvalues: avals[..k].to_vec(),
        eigenvectors: avecs[..k].to_vec(),
    })
}

/// Stability: the Hessian restricted to `N''` is positive definite
/// (vacuously true when `N''` is zero).
pub fn check_stability(nd: &NormalDecomposition) -> bool {
    let k = nd.normal_basis.len();
    let m = nd.nontrivial_part.len();
    if m == 0 {
        return true;
    }
    let mut a_res = [[0.0; 3]; 3];
    for i in 0..m {
        for j in 0..m {
            let mut v = 0.0;
            for r in 0..k {
                for c in 0..k {
                    v += nd.nontrivial_part[i][r] * nd.hessian_op[r][c] * nd.nontrivial_part[j][c];
                }
            }
            a_res[i][j] = v;
        }
    }
    let (vals, _) = linalg::sym_eigen(m, &a_res);
    vals[0] > DEGENERACY_TOL
}

#[derive(Clone, Debug)]
pub struct StabilityEquivalenceEntry {
    pub metric_name: String,
    pub containment_residual: f64,
    pub verdict_stable: bool,
}

#[derive(Clone, Debug)]
pub struct StabilityEquivalenceReport {
    pub orbit_label: String,
    pub entries: Vec<StabilityEquivalenceEntry>,
}

/// Cross-check the metric-independent stability characterization: for each
/// invariant metric, the negative (and zero) eigenspace of the normal
/// Hessian operator must lie in `N'` exactly when the orbit is stable.
pub fn check_stability_equivalences(
    s: &Scenario,
    orbit: &CriticalOrbit,
    metrics: &[(String, crate::geometry::MetricField)],
) -> Result<StabilityEquivalenceReport> {
    let reference = orbit.stable;
    let mut entries = Vec::new();
    for (name, metric) in metrics {
        let nd = normal_decomposition_in_metric(s, orbit, Some(metric))?;
        let k = nd.normal_basis.len();
        // Residual of projecting each non-positive eigenvector onto N'.
        let mut residual = 0.0f64;
        let mut any_nonpos = false;
        for i in 0..k {
            if nd.eigenvalues[i] < DEGENERACY_TOL {
                any_nonpos = true;
                let v = nd.eigenvectors[i];
                // Projection onto the trivial part.
                let mut proj = ZERO_VEC;
                for b in &nd.trivial_part {
                    let c = linalg::dot(k, b, &v);
                    proj = linalg::axpy(k, &proj, c, b);
                }
                let diff = linalg::sub(k, &v, &proj);
                residual = residual.max(linalg::norm(k, &diff));
            }
        }
        let contained = !any_nonpos || residual <= 1e-8;
        if contained != reference {
            return Err(Error::Internal(format!(
                "stability equivalence violated for orbit {} under metric {name}: containment {contained}, stability {reference}",
                orbit.label
            )));
        }
        entries.push(StabilityEquivalenceEntry {
            metric_name: name.clone(),
            containment_residual: residual,
            verdict_stable: contained,
        });
    }
    Ok(StabilityEquivalenceReport {
        orbit_label: orbit.label.clone(),
        entries,
    })
}

/// Negative frame of a stable orbit: g-orthonormal eigenvectors of the
/// negative normal eigenspace, ordered by ascending eigenvalue and signed
/// per the scenario's frame convention. Errors on unstable orbits, whose
/// negative normal bundle is not guaranteed trivial.
pub fn negative_frame(s: &Scenario, orbit: &CriticalOrbit) -> Result<Vec<Vec3>> {
    if !orbit.stable {
        return Err(Error::Geometry(format!(
            "frame not guaranteed trivial: orbit {} is unstable",
            orbit.label
        )));
    }
    if orbit.index == 0 {
        return Ok(Vec::new());
    }
    let nd = normal_decomposition(s, orbit)?;
    negative_frame_from_decomposition(s, orbit, &nd)
}

fn negative_frame_from_decomposition(
    s: &Scenario,
    orbit: &CriticalOrbit,
    nd: &NormalDecomposition,
) -> Result<Vec<Vec3>> {
    let n = s.dimension;
    let k = nd.normal_basis.len();
    let p = &orbit.representative;
    let mut frame: Vec<Vec3> = Vec::new();
    for i in 0..k {
        if nd.eigenvalues[i] < -DEGENERACY_TOL {
            // Convert from normal-basis coordinates to chart coordinates.
            let mut v = ZERO_VEC;
            for (j, b) in nd.normal_basis.iter().enumerate() {
                v = linalg::axpy(n, &v, nd.eigenvectors[i][j], b);
            }
            frame.push(v);
        }
    }
    // Ascending eigenvalue order is already guaranteed by sym_eigen.
    let g = s.metric_at(p);
    let mut frame = linalg::g_orthonormalize(n, &g, &frame);
    orient_frame(s, orbit, &mut frame);

    // Well-definedness of the invariant extension: the stabilizer must fix
    // the frame vectors pointwise.
    for e in isotropy_elements(s, &orbit.isotropy) {
        if e == GroupElement::Identity {
            continue;
        }
        for v in &frame {
            let (_, w) = s.act_on_tangent(e, p, v);
            let d = linalg::sub(n, &w, v);
            if linalg::norm(n, &d) > 1e-8 {
                return Err(Error::Internal(format!(
                    "negative frame of stable orbit {} not isotropy-fixed",
                    orbit.label
                )));
            }
        }
    }
    Ok(frame)
}

fn orient_frame(s: &Scenario, orbit: &CriticalOrbit, frame: &mut [Vec3]) {
    let n = s.dimension;
    let p = &orbit.representative;
    let zone: Option<&RadialZone> = s
        .frame_convention
        .radial_zones
        .iter()
        .find(|z| s.distance(&z.center, p) <= z.radius);
    for (slot, v) in frame.iter_mut().enumerate() {
        let mut oriented = false;
        if slot == 0 {
            if let Some(z) = zone {
                let covec = s.radial_covector(z.scalar, p);
                let pairing = linalg::dot(n, &covec, v);
                if pairing.abs() > 1e-6 {
                    if pairing < 0.0 {
                        *v = linalg::scale(n, v, -1.0);
                    }
                    oriented = true;
                }
            }
        }
        if !oriented {
            for &axis in &s.frame_convention.axes {
                if v[axis].abs() > 1e-6 {
                    if v[axis] < 0.0 {
                        *v = linalg::scale(n, v, -1.0);
                    }
                    break;
                }
            }
        }
    }
}

/// The G-invariant frame transported to the orbit point `act(t, rep)`.
pub fn frame_at(s: &Scenario, orbit: &CriticalOrbit, t: f64) -> (Point, Vec<Vec3>) {
    let elem = GroupElement::Circle(t.rem_euclid(s.circle_period().max(1e-300)));
    let q = s.act(elem, &orbit.representative);
    let frame = orbit
        .neg_frame
        .iter()
        .map(|v| s.act_on_tangent(elem, &orbit.representative, v).1)
        .collect();
    (q, frame)
}
