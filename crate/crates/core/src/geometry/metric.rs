//! Invariant metrics of the catalogue, with closed-form inverses and
//! coordinate partials of the inverse (needed to linearize gradient fields).

use crate::linalg::{Mat3, Vec3, ZERO_MAT};

use super::Point;

#[derive(Clone, Copy, Debug)]
pub enum MetricField {
    /// Round metric on the unit sphere in either stereographic chart:
    /// `g = 4 / (1 + r^2)^2 * (du^2 + dv^2)`.
    RoundSphere,
    /// Rotation-invariant conformal rescale `(1 + z^2) * round`; used as an
    /// alternative invariant metric in stability cross-checks.
    RoundSphereScaled,
    /// Pullback of the Euclidean metric under the doughnut embedding with
    /// radii `(big_r, small_r)`: `(R + r cos psi)^2 dphi^2 + r^2 dpsi^2`.
    EmbeddedTorus { big_r: f64, small_r: f64 },
    /// Embedded-torus metric with the psi direction rescaled.
    EmbeddedTorusScaled { big_r: f64, small_r: f64, psi_scale: f64 },
    /// Flat product metric on the mapping torus.
    FlatMapping,
    /// Product metric with the theta_2 direction rescaled.
    FlatMappingScaled { theta2_scale: f64 },
}

impl MetricField {
    pub fn matrix(&self, p: &Point) -> Mat3 {
        let mut g = ZERO_MAT;
        match self {
            MetricField::RoundSphere => {
                let c = round_factor(p);
                g[0][0] = c;
                g[1][1] = c;
            }
            MetricField::RoundSphereScaled => {
                let c = round_factor(p) * (1.0 + z_sq(p));
                g[0][0] = c;
                g[1][1] = c;
            }
            MetricField::EmbeddedTorus { big_r, small_r } => {
                let a = big_r + small_r * p.x[1].cos();
                g[0][0] = a * a;
                g[1][1] = small_r * small_r;
            }
            MetricField::EmbeddedTorusScaled {
                big_r,
                small_r,
                psi_scale,
            } => {
                let a = big_r + small_r * p.x[1].cos();
                g[0][0] = a * a;
                g[1][1] = (small_r * psi_scale) * (small_r * psi_scale);
            }
            MetricField::FlatMapping => {
                g[0][0] = 1.0;
                g[1][1] = 1.0;
                g[2][2] = 1.0;
            }
            MetricField::FlatMappingScaled { theta2_scale } => {
                g[0][0] = 1.0;
                g[1][1] = theta2_scale * theta2_scale;
                g[2][2] = 1.0;
            }
        }
        g
    }

    pub fn inverse(&self, p: &Point) -> Mat3 {
        let g = self.matrix(p);
        let mut inv = ZERO_MAT;
        for i in 0..3 {
            if g[i][i] != 0.0 {
                inv[i][i] = 1.0 / g[i][i];
            }
        }
        inv
    }

    /// Coordinate partials of the inverse metric, `out[k][i][j] = d_k g^{ij}`.
    pub fn inverse_partials(&self, p: &Point) -> [Mat3; 3] {
        let mut out = [ZERO_MAT; 3];
        match self {
            MetricField::RoundSphere => {
                // g^{ij} = (1 + rho)^2 / 4 * delta, rho = u^2 + v^2.
                let rho = p.x[0] * p.x[0] + p.x[1] * p.x[1];
                let dfac = (1.0 + rho) / 2.0;
                for k in 0..2 {
                    let drho = 2.0 * p.x[k];
                    out[k][0][0] = dfac * drho;
                    out[k][1][1] = dfac * drho;
                }
            }
            MetricField::RoundSphereScaled => {
                // g^{ij} = delta / m(rho), m = 8 (1 + rho^2) / (1 + rho)^4.
                let rho = p.x[0] * p.x[0] + p.x[1] * p.x[1];
                let m = 8.0 * (1.0 + rho * rho) / (1.0 + rho).powi(4);
                let dm = 8.0 * (2.0 * rho * (1.0 + rho) - 4.0 * (1.0 + rho * rho))
                    / (1.0 + rho).powi(5);
                for k in 0..2 {
                    let drho = 2.0 * p.x[k];
                    let d = -dm / (m * m) * drho;
                    out[k][0][0] = d;
                    out[k][1][1] = d;
                }
            }
            MetricField::EmbeddedTorus { big_r, small_r }
            | MetricField::EmbeddedTorusScaled { big_r, small_r, .. } => {
                let a = big_r + small_r * p.x[1].cos();
                // d_psi (1 / A^2) = 2 r sin(psi) / A^3
                out[1][0][0] = 2.0 * small_r * p.x[1].sin() / (a * a * a);
            }
            MetricField::FlatMapping | MetricField::FlatMappingScaled { .. } => {}
        }
        out
    }
}

fn round_factor(p: &Point) -> f64 {
    let rho = p.x[0] * p.x[0] + p.x[1] * p.x[1];
    4.0 / ((1.0 + rho) * (1.0 + rho))
}

fn z_sq(p: &Point) -> f64 {
    let rho = p.x[0] * p.x[0] + p.x[1] * p.x[1];
    let z = (1.0 - rho) / (1.0 + rho);
    z * z
}

/// Convenience: apply the inverse metric to a covector.
pub fn raise(dim: usize, inv: &Mat3, covec: &Vec3) -> Vec3 {
    crate::linalg::matvec(dim, inv, covec)
}
