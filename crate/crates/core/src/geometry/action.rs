//! Group actions of the catalogue: trivial and cyclic rotations, the circle
//! rotating the sphere, and the circle generated by the suspension flow of
//! the mapping torus.

use crate::linalg::Vec3;

use super::{wrap_into, Point};

pub const TAU: f64 = std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroupElement {
    Identity,
    /// `k`-th power of the generator of a finite cyclic group.
    Finite(u32),
    /// Circle parameter, taken modulo the action's period.
    Circle(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKind {
    Trivial,
    FiniteCyclic(u32),
    Circle,
}

impl std::fmt::Display for GroupKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupKind::Trivial => write!(f, "trivial"),
            GroupKind::FiniteCyclic(n) => write!(f, "Z{n}"),
            GroupKind::Circle => write!(f, "circle"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum GroupAction {
    Trivial,
    /// Rotation of the first torus coordinate by multiples of `2 pi / n`.
    CyclicPhi { n: u32 },
    /// Rotation of the sphere about the z-axis; `Circle(t)` rotates by
    /// angle `2 pi t`, so the period is 1.
    CircleSphere,
    /// Time-`t` flow of the suspension field on the mapping torus. The
    /// time-2 map is the identity, so the period is 2; the time-1 map is the
    /// monodromy `theta_1 -> -theta_1`.
    CircleMappingTorus,
}

impl GroupAction {
    pub fn kind(&self) -> GroupKind {
        match self {
            GroupAction::Trivial => GroupKind::Trivial,
            GroupAction::CyclicPhi { n } => GroupKind::FiniteCyclic(*n),
            GroupAction::CircleSphere | GroupAction::CircleMappingTorus => GroupKind::Circle,
        }
    }

    /// Parameter length of a full loop of the acting circle (0 for finite
    /// or trivial groups).
    pub fn circle_period(&self) -> f64 {
        match self {
            GroupAction::CircleSphere => 1.0,
            GroupAction::CircleMappingTorus => 2.0,
            _ => 0.0,
        }
    }

    pub fn compose(&self, a: GroupElement, b: GroupElement) -> GroupElement {
        match (self, a, b) {
            (_, GroupElement::Identity, x) | (_, x, GroupElement::Identity) => x,
            (GroupAction::CyclicPhi { n }, GroupElement::Finite(j), GroupElement::Finite(k)) => {
                GroupElement::Finite((j + k) % n)
            }
            (_, GroupElement::Circle(s), GroupElement::Circle(t)) => {
                GroupElement::Circle((s + t).rem_euclid(self.circle_period()))
            }
            _ => panic!("group element does not belong to this action"),
        }
    }

    /// Apply the action; returns raw chart coordinates plus the parity of
    /// monodromy applications (mapping torus only; callers must flip the
    /// first component of transported vectors when odd).
    pub fn act_raw(&self, elem: GroupElement, p: &Point) -> (Point, bool) {
        match (self, elem) {
            (_, GroupElement::Identity) => (*p, false),
            (GroupAction::Trivial, _) => (*p, false),
            (GroupAction::CyclicPhi { n }, GroupElement::Finite(k)) => {
                let mut x = p.x;
                x[0] = wrap_into(x[0] + TAU * (k as f64) / (*n as f64), TAU);
                (Point { chart: p.chart, x }, false)
            }
            (GroupAction::CircleSphere, GroupElement::Circle(t)) => {
                let ang = TAU * t;
                let (c, s) = (ang.cos(), ang.sin());
                let (u, v) = (p.x[0], p.x[1]);
                (
                    Point {
                        chart: p.chart,
                        x: [c * u - s * v, s * u + c * v, 0.0],
                    },
                    false,
                )
            }
            (GroupAction::CircleMappingTorus, GroupElement::Circle(t)) => {
                let tau = p.x[2] + t;
                let wraps = tau.floor() as i64;
                let odd = wraps.rem_euclid(2) == 1;
                let theta1 = if odd { -p.x[0] } else { p.x[0] };
                let x = [
                    wrap_into(theta1, 1.0),
                    wrap_into(p.x[1], 1.0),
                    tau - wraps as f64,
                ];
                (Point { chart: p.chart, x }, odd)
            }
            _ => panic!("group element does not belong to this action"),
        }
    }

    /// Differential of the action applied to a tangent vector at `p`.
    pub fn push_forward(&self, elem: GroupElement, p: &Point, v: &Vec3) -> Vec3 {
        match (self, elem) {
            (_, GroupElement::Identity) | (GroupAction::Trivial, _) => *v,
            (GroupAction::CyclicPhi { .. }, GroupElement::Finite(_)) => *v,
            (GroupAction::CircleSphere, GroupElement::Circle(t)) => {
                let ang = TAU * t;
                let (c, s) = (ang.cos(), ang.sin());
                [c * v[0] - s * v[1], s * v[0] + c * v[1], 0.0]
            }
            (GroupAction::CircleMappingTorus, GroupElement::Circle(_)) => {
                let (_, odd) = self.act_raw(elem, p);
                if odd {
                    [-v[0], v[1], v[2]]
                } else {
                    *v
                }
            }
            _ => panic!("group element does not belong to this action"),
        }
    }

    /// Fundamental vector field of the circle action at `p` (None for finite
    /// or trivial groups).
    pub fn fundamental_field(&self, p: &Point) -> Option<Vec3> {
        match self {
            GroupAction::CircleSphere => Some([-TAU * p.x[1], TAU * p.x[0], 0.0]),
            GroupAction::CircleMappingTorus => Some([0.0, 0.0, 1.0]),
            _ => None,
        }
    }

    /// Deterministic list of group elements used by invariance checks.
    pub fn sample_elements(&self) -> Vec<GroupElement> {
        match self {
            GroupAction::Trivial => vec![GroupElement::Identity],
            GroupAction::CyclicPhi { n } => (0..*n).map(GroupElement::Finite).collect(),
            _ => {
                let period = self.circle_period();
                [0.15, 0.37, 0.5, 0.81]
                    .iter()
                    .map(|f| GroupElement::Circle(f * period))
                    .chain(std::iter::once(GroupElement::Circle(1.0)))
                    .collect()
            }
        }
    }

    pub fn inverse(&self, elem: GroupElement) -> GroupElement {
        match (self, elem) {
            (_, GroupElement::Identity) => GroupElement::Identity,
            (GroupAction::CyclicPhi { n }, GroupElement::Finite(k)) => {
                GroupElement::Finite((n - k % n) % n)
            }
            (_, GroupElement::Circle(t)) => {
                GroupElement::Circle((-t).rem_euclid(self.circle_period()))
            }
            _ => panic!("group element does not belong to this action"),
        }
    }
}
