//! Constraint functions and their XPBD projections.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// `|x_a − x_b| − rest_length`.
    Distance { vertices: [usize; 2], rest_length: f64, compliance: f64 },
    /// Dihedral angle across edge `(v[2], v[3])` between triangles
    /// `(v[2], v[3], v[0])` and `(v[3], v[2], v[1])`, minus the rest angle.
    Bending { vertices: [usize; 4], rest_angle: f64, compliance: f64 },
    /// Kinematic anchor; the vertex has zero inverse mass while pinned.
    Pin { vertex: usize, anchor: Vector3<f64> },
    /// `y − height ≥ 0`, zero compliance.
    Ground { vertex: usize, height: f64 },
}

impl Constraint {
    pub fn compliance(&self) -> f64 {
        match self {
            Constraint::Distance { compliance, .. } | Constraint::Bending { compliance, .. } => *compliance,
            Constraint::Pin { .. } | Constraint::Ground { .. } => 0.0,
        }
    }

    pub fn vertices(&self) -> Vec<usize> {
        match self {
            Constraint::Distance { vertices, .. } => vertices.to_vec(),
            Constraint::Bending { vertices, .. } => vertices.to_vec(),
            Constraint::Pin { vertex, .. } | Constraint::Ground { vertex, .. } => vec![*vertex],
        }
    }

    /// Current constraint value.
    pub fn value(&self, x: &[Vector3<f64>]) -> f64 {
        match self {
            Constraint::Distance { vertices: [a, b], rest_length, .. } => (x[*a] - x[*b]).norm() - rest_length,
            Constraint::Bending { vertices, rest_angle, .. } => {
                wrap_angle(dihedral_angle(vertices.map(|v| x[v])) - rest_angle)
            }
            Constraint::Pin { vertex, anchor } => (x[*vertex] - anchor).norm(),
            Constraint::Ground { vertex, height } => x[*vertex].y - height,
        }
    }
}

/// Wraps into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Signed dihedral angle, zero when flat; positive when the wings fold
/// toward the side the first triangle's normal points to.
pub fn dihedral_angle(p: [Vector3<f64>; 4]) -> f64 {
    let [x1, x2, x3, x4] = p;
    let e = x4 - x3;
    let n1 = (x1 - x3).cross(&(x1 - x4));
    let n2 = (x2 - x4).cross(&(x2 - x3));
    let len = e.norm();
    let n1n = n1.norm();
    let n2n = n2.norm();
    if len == 0.0 || n1n == 0.0 || n2n == 0.0 {
        return 0.0;
    }
    let (n1, n2) = (n1 / n1n, n2 / n2n);
    n1.cross(&n2).dot(&(e / len)).atan2(n1.dot(&n2))
}

/// Gradient of [`dihedral_angle`] with respect to the four vertices;
/// `None` for degenerate wings.
pub fn dihedral_gradient(p: [Vector3<f64>; 4]) -> Option<[Vector3<f64>; 4]> {
    let [x1, x2, x3, x4] = p;
    let e = x4 - x3;
    let len = e.norm();
    let n1 = (x1 - x3).cross(&(x1 - x4));
    let n2 = (x2 - x4).cross(&(x2 - x3));
    let (s1, s2) = (n1.norm_squared(), n2.norm_squared());
    if len < 1e-12 || s1 < 1e-24 || s2 < 1e-24 {
        return None;
    }
    let (m1, m2) = (n1 / s1, n2 / s2);
    let u1 = -len * m1;
    let u2 = -len * m2;
    let u3 = -((x1 - x4).dot(&e) / len * m1 + (x2 - x4).dot(&e) / len * m2);
    let u4 = (x1 - x3).dot(&e) / len * m1 + (x2 - x3).dot(&e) / len * m2;
    Some([u1, u2, u3, u4])
}

/// One Gauss–Seidel projection. Returns the multiplier increment, or `None`
/// if it was not finite.
pub(crate) fn project(
    c: &Constraint,
    x: &mut [Vector3<f64>],
    w: &[f64],
    lambda: &mut f64,
    h: f64,
) -> Option<f64> {
    let alpha = c.compliance() / (h * h);
    match c {
        Constraint::Distance { vertices: [a, b], rest_length, .. } => {
            let d = x[*a] - x[*b];
            let len = d.norm();
            let wsum = w[*a] + w[*b];
            if len < 1e-15 || wsum + alpha == 0.0 {
                return Some(0.0);
            }
            let n = d / len;
            let dl = (-(len - rest_length) - alpha * *lambda) / (wsum + alpha);
            if !dl.is_finite() {
                return None;
            }
            *lambda += dl;
            x[*a] += w[*a] * dl * n;
            x[*b] -= w[*b] * dl * n;
            Some(dl)
        }
        Constraint::Bending { vertices, rest_angle, .. } => {
            let p = vertices.map(|v| x[v]);
            let Some(g) = dihedral_gradient(p) else { return Some(0.0) };
            let cval = wrap_angle(dihedral_angle(p) - rest_angle);
            let denom: f64 = (0..4).map(|i| w[vertices[i]] * g[i].norm_squared()).sum::<f64>() + alpha;
            if denom == 0.0 {
                return Some(0.0);
            }
            let dl = (-cval - alpha * *lambda) / denom;
            if !dl.is_finite() {
                return None;
            }
            *lambda += dl;
            for i in 0..4 {
                x[vertices[i]] += w[vertices[i]] * dl * g[i];
            }
            Some(dl)
        }
        Constraint::Pin { .. } => Some(0.0),
        Constraint::Ground { vertex, height } => {
            let cval = x[*vertex].y - height;
            if cval >= 0.0 || w[*vertex] == 0.0 {
                return Some(0.0);
            }
            // Inequality: the accumulated multiplier stays non-negative.
            let dl = (-cval / w[*vertex]).max(-*lambda);
            *lambda += dl;
            x[*vertex].y += w[*vertex] * dl;
            Some(dl)
        }
    }
}
