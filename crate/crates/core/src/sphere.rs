//! The round sphere as the base curve: stereographic coordinates, the
//! curvature +1 Kähler metric, rotations, and canonical frames.
//!
//! The base carries `ω_Y = h(w)·i dw∧dw̄` with `h(w) = 2/(1+|w|²)²`. The
//! associated Riemannian metric is `2h|dw|²`, which is exactly the unit round
//! sphere pulled through stereographic projection: total area `4π`, Gauss
//! curvature `+1`, and the Kähler-normalized curvature identity
//! `∂_w ∂_w̄ log h = -h`.

use crate::C64;

/// Kähler density of the round metric: `h(w) = 2/(1+|w|²)²`.
pub fn round_density(w: C64) -> f64 {
    let u = 1.0 + w.norm_sqr();
    2.0 / (u * u)
}

/// `∂_w log h = -2 w̄ / (1+|w|²)`.
pub fn round_log_density_dw(w: C64) -> C64 {
    -2.0 * w.conj() / (1.0 + w.norm_sqr())
}

/// `∂_w ∂_w̄ log h`, evaluated through the quotient-rule route
/// `(h ∂∂̄h − ∂h ∂̄h)/h²` so it can be compared against the closed form `-h`.
pub fn round_log_density_ddbar(w: C64) -> f64 {
    let u = 1.0 + w.norm_sqr();
    let h = 2.0 / (u * u);
    let dh = -4.0 * w.conj() / (u * u * u); // ∂_w h
    let ddh = 12.0 * w.norm_sqr() / u.powi(4) - 4.0 / u.powi(3); // ∂_w ∂_w̄ h
    (h * ddh - (dh * dh.conj()).re) / (h * h)
}

/// Pointwise residual of the curvature +1 identity `∂∂̄ log h + h = 0`.
pub fn curvature_identity_residual(w: C64) -> f64 {
    (round_log_density_ddbar(w) + round_density(w)).abs()
}

/// Total area `∫ ω_Y` by radial Gauss-Legendre quadrature on `|w| <= r_max`
/// plus the analytic tail `4π/(1+r_max²)`.
pub fn round_total_area(r_max: f64, nodes: usize) -> f64 {
    // ∫_C h(w) i dw∧dw̄ = ∫ 2h(w) dx dy = ∫_0^∞ 4/(1+r²)² · 2πr dr
    let (xs, ws) = gauss_legendre(nodes);
    let mut total = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        let r = 0.5 * r_max * (x + 1.0);
        let jac = 0.5 * r_max;
        let u = 1.0 + r * r;
        total += w * jac * (4.0 / (u * u)) * 2.0 * std::f64::consts::PI * r;
    }
    total + 4.0 * std::f64::consts::PI / (1.0 + r_max * r_max)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

// ---------------------------------------------------------------------------
// Stereographic projection and rotations
// ---------------------------------------------------------------------------

/// Point of the unit sphere for a finite stereographic coordinate;
/// `w = 0` is the south pole, `w = ∞` the north pole.
pub fn to_sphere(w: C64) -> [f64; 3] {
    let d = 1.0 + w.norm_sqr();
    [2.0 * w.re / d, 2.0 * w.im / d, (w.norm_sqr() - 1.0) / d]
}

/// Stereographic coordinate of a unit vector (undefined at the north pole).
pub fn from_sphere(p: [f64; 3]) -> C64 {
    C64::new(p[0], p[1]) / (1.0 - p[2])
}

/// Chordal distance between two stereographic coordinates (diameter 2).
pub fn chordal(w1: C64, w2: C64) -> f64 {
    2.0 * (w1 - w2).norm() / ((1.0 + w1.norm_sqr()) * (1.0 + w2.norm_sqr())).sqrt()
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub fn normalize3(a: [f64; 3]) -> [f64; 3] {
    let n = norm3(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Rotation of the sphere, acting on stereographic coordinates as a Möbius
/// transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3 {
    /// Row-major orthogonal matrix.
    pub rows: [[f64; 3]; 3],
}

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3 {
            rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation about `axis` by `angle` (Rodrigues).
    pub fn about_axis(axis: [f64; 3], angle: f64) -> Self {
        let u = normalize3(axis);
        let (s, c) = angle.sin_cos();
        let mut rows = [[0.0; 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, val) in row.iter_mut().enumerate() {
                let eye = if i == j { 1.0 } else { 0.0 };
                // ε_{ikj} u_k, written out
                let skew = match (i, j) {
                    (0, 1) => -u[2],
                    (1, 0) => u[2],
                    (0, 2) => u[1],
                    (2, 0) => -u[1],
                    (1, 2) => -u[0],
                    (2, 1) => u[0],
                    _ => 0.0,
                };
                *val = c * eye + s * skew + (1.0 - c) * u[i] * u[j];
            }
        }
        Rotation3 { rows }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        [
            dot3(self.rows[0], p),
            dot3(self.rows[1], p),
            dot3(self.rows[2], p),
        ]
    }

    pub fn transpose(&self) -> Rotation3 {
        let r = &self.rows;
        Rotation3 {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    /// Action on a stereographic coordinate.
    pub fn mobius(&self, w: C64) -> C64 {
        from_sphere(self.apply(to_sphere(w)))
    }

    /// Complex derivative of the Möbius action at `w`. The modulus comes
    /// from the isometry identity `h(Rw)|R'(w)|² = h(w)`; the phase from a
    /// short central difference.
    pub fn mobius_derivative(&self, w: C64) -> C64 {
        let modulus = (round_density(w) / round_density(self.mobius(w))).sqrt();
        let delta = 1e-5 * (1.0 + w.norm());
        let diff = self.mobius(w + C64::new(delta, 0.0)) - self.mobius(w - C64::new(delta, 0.0));
        let phase = diff / diff.norm();
        modulus * phase
    }
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric 3x3
/// matrix by cyclic Jacobi rotations.
pub fn symmetric_eigen3(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..50 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off < 1e-15 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-30 {
                continue;
            }
            let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for k in 0..3 {
                let (vkp, vkq) = (v[k][p], v[k][q]);
                v[k][p] = c * vkp - s * vkq;
                v[k][q] = s * vkp + c * vkq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let vals = [a[order[0]][order[0]], a[order[1]][order[1]], a[order[2]][order[2]]];
    let mut vecs = [[0.0; 3]; 3];
    for (col, &oi) in order.iter().enumerate() {
        for row in 0..3 {
            vecs[row][col] = v[row][oi];
        }
    }
    (vals, vecs)
}

/// Minimal rotation taking unit vector `from` to unit vector `to`.
pub fn rotation_between(from: [f64; 3], to: [f64; 3]) -> Rotation3 {
    let c = dot3(from, to).clamp(-1.0, 1.0);
    let axis = cross3(from, to);
    let s = norm3(axis);
    if s < 1e-12 {
        if c > 0.0 {
            return Rotation3::identity();
        }
        // antipodal: rotate π about any axis orthogonal to `from`
        let trial = if from[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let proj = dot3(trial, from);
        let axis = normalize3([
            trial[0] - proj * from[0],
            trial[1] - proj * from[1],
            trial[2] - proj * from[2],
        ]);
        return Rotation3::about_axis(axis, std::f64::consts::PI);
    }
    Rotation3::about_axis(axis, s.atan2(c))
}

/// Sphere rotation bringing an anchor point to `w = 0`, as an explicit
/// Möbius map `w ↦ (e^{-iθ}w - r)/(r e^{-iθ} w + 1)` with `r e^{iθ}` the
/// anchor. Used as a local computation frame: quantities on a mesh face are
/// assembled in the frame anchored at the face, where the round density is
/// at its smoothest, and moved between frames by the exact derivative.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    /// `e^{-iθ}`
    pub phase: C64,
    pub r: f64,
}

impl LocalFrame {
    pub fn at(anchor: C64) -> Self {
        let r = anchor.norm();
        let phase = if r > 0.0 {
            anchor.conj() / r
        } else {
            C64::new(1.0, 0.0)
        };
        LocalFrame { phase, r }
    }

    pub fn map(&self, w: C64) -> C64 {
        let t = self.phase * w;
        (t - self.r) / (self.r * t + 1.0)
    }

    /// `d(local)/dw`, holomorphic and nonvanishing.
    pub fn derivative(&self, w: C64) -> C64 {
        let denom = self.r * self.phase * w + 1.0;
        self.phase * (1.0 + self.r * self.r) / (denom * denom)
    }
}

/// Canonical frame of a configuration, equivariant under rotations: the
/// least-inertia axis of the points goes to the north pole (keeping the far
/// field clear of them), and the first point lands on the positive real
/// axis. Rotated copies of a configuration canonicalize to the same point
/// tuple up to floating-point noise.
pub fn canonical_rotation(points: &[C64]) -> Rotation3 {
    canonical_rotation_with(points, None)
}

/// Canonical frame of a configuration together with a tangent direction
/// (complex branch-point velocities). The residual spin about the pole is
/// anchored on the velocities when they give a usable phase, so equal
/// geometric families of rotated (even relabeled) inputs land on the
/// identical canonical mesh with the identical moving point.
pub fn canonical_rotation_with(points: &[C64], velocities: Option<&[C64]>) -> Rotation3 {
    assert!(!points.is_empty());
    let ps: Vec<[f64; 3]> = points.iter().map(|&p| to_sphere(p)).collect();
    let mut m = [[0.0f64; 3]; 3];
    for p in &ps {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += p[i] * p[j];
            }
        }
    }
    let (vals, vecs) = symmetric_eigen3(m);
    let mut u = normalize3([vecs[0][0], vecs[1][0], vecs[2][0]]);
    if ps.len() >= 2 && vals[1] - vals[0] < 1e-9 * (1.0 + vals[2].abs()) {
        // degenerate least axis: fall back to the plane of the first two points
        let c = cross3(ps[0], ps[1]);
        if norm3(c) > 1e-9 {
            u = normalize3(c);
        }
    }
    // orient the axis with the first nonvanishing pair cross product
    for k in 1..ps.len() {
        let d = dot3(u, cross3(ps[0], ps[k]));
        if d.abs() > 1e-12 {
            if d < 0.0 {
                u = [-u[0], -u[1], -u[2]];
            }
            break;
        }
    }
    let r0 = rotation_between(u, [0.0, 0.0, 1.0]);
    // Residual spin about the pole, fixed by a label-free functional: the
    // first non-vanishing power sum of the point phases. A configuration
    // and any rotated relabeling of it then canonicalize to the same point
    // set, so equal geometric families land on the identical mesh.
    let qs: Vec<C64> = points.iter().map(|&p| r0.mobius(p)).collect();
    let mut phi = None;
    if let Some(vels) = velocities {
        // velocity anchor: spins rotate positions and tangent phases
        // together, so this pins the pair with no modular ambiguity
        let a: C64 = qs
            .iter()
            .zip(points.iter().zip(vels))
            .map(|(&q, (&p, &c))| round_density(q) * r0.mobius_derivative(p) * c)
            .sum();
        if a.norm() > 1e-9 * points.len() as f64 {
            phi = Some(a.im.atan2(a.re));
        }
    }
    if phi.is_none() {
        // configuration anchor: first non-vanishing power sum of the phases
        for m in 1..=points.len() as i32 {
            let s: C64 = qs
                .iter()
                .map(|q| {
                    let u = q / q.norm();
                    u.powi(m)
                })
                .sum();
            if s.norm() > 1e-8 * points.len() as f64 {
                phi = Some(s.im.atan2(s.re) / m as f64);
                break;
            }
        }
    }
    let phi = phi.unwrap_or_else(|| qs[0].im.atan2(qs[0].re));
    let spin = Rotation3::about_axis([0.0, 0.0, 1.0], -phi);
    // compose: spin ∘ r0
    let mut rows = [[0.0; 3]; 3];
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, val) in row.iter_mut().enumerate() {
            *val = (0..3).map(|k| spin.rows[i][k] * r0.rows[k][j]).sum();
        }
    }
    Rotation3 { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_value_at_origin() {
        assert!((round_density(C64::new(0.0, 0.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn total_area_is_4pi() {
        let area = round_total_area(120.0, 160);
        let rel = (area - 4.0 * std::f64::consts::PI).abs() / (4.0 * std::f64::consts::PI);
        assert!(rel < 1e-9, "relative error {rel:e}");
    }

    #[test]
    fn curvature_identity_pointwise() {
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..500 {
            let w = rng.complex_in_square(3.0);
            let res = curvature_identity_residual(w);
            assert!(res < 1e-12, "residual {res:e} at {w}");
        }
    }

    #[test]
    fn stereographic_round_trip() {
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..100 {
            let w = rng.complex_in_square(5.0);
            let back = from_sphere(to_sphere(w));
            assert!((back - w).norm() < 1e-12 * (1.0 + w.norm_sqr()));
        }
    }

    #[test]
    fn rotations_are_metric_isometries() {
        let rot = Rotation3::about_axis([0.3, -0.5, 0.81], 0.77);
        let mut rng = crate::rng::SplitMix64::new(9);
        for _ in 0..50 {
            let w1 = rng.complex_in_square(2.0);
            let w2 = rng.complex_in_square(2.0);
            let d1 = chordal(w1, w2);
            let d2 = chordal(rot.mobius(w1), rot.mobius(w2));
            assert!((d1 - d2).abs() < 1e-12);
        }
    }

    #[test]
    fn mobius_derivative_matches_difference_quotient() {
        let rot = Rotation3::about_axis([0.1, 0.9, 0.4], -0.33);
        let w = C64::new(0.7, -0.2);
        let d = rot.mobius_derivative(w);
        let eps = 1e-6;
        let fd = (rot.mobius(w + C64::new(0.0, eps)) - rot.mobius(w - C64::new(0.0, eps)))
            / C64::new(0.0, 2.0 * eps);
        assert!((d - fd).norm() < 1e-6, "d = {d}, fd = {fd}");
    }

    #[test]
    fn symmetric_eigen_diagonalizes() {
        let m = [[2.0, 0.4, -0.1], [0.4, 1.0, 0.3], [-0.1, 0.3, 3.0]];
        let (vals, vecs) = symmetric_eigen3(m);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        for c in 0..3 {
            let v = [vecs[0][c], vecs[1][c], vecs[2][c]];
            let mv = [
                m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
                m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
                m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
            ];
            for d in 0..3 {
                assert!((mv[d] - vals[c] * v[d]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn local_frame_is_an_isometry_with_exact_derivative() {
        let mut rng = crate::rng::SplitMix64::new(21);
        for _ in 0..50 {
            let anchor = rng.complex_in_square(3.0);
            let frame = LocalFrame::at(anchor);
            assert!(frame.map(anchor).norm() < 1e-12);
            let w1 = rng.complex_in_square(2.0);
            let w2 = rng.complex_in_square(2.0);
            assert!((chordal(w1, w2) - chordal(frame.map(w1), frame.map(w2))).abs() < 1e-12);
            // analytic derivative against a difference quotient
            let d = 1e-6;
            let fd = (frame.map(w1 + C64::new(d, 0.0)) - frame.map(w1 - C64::new(d, 0.0)))
                / (2.0 * d);
            assert!((frame.derivative(w1) - fd).norm() < 1e-7);
            // density equivariance: h(T w)|T'|² = h(w)
            let lhs = round_density(frame.map(w1)) * frame.derivative(w1).norm_sqr();
            assert!((lhs - round_density(w1)).abs() < 1e-12 * round_density(w1));
        }
    }

    #[test]
    fn canonical_rotation_fixes_frame() {
        let pts: Vec<C64> = (0..6)
            .map(|j| C64::from_polar(1.0, std::f64::consts::PI / 3.0 * j as f64))
            .collect();
        let rot = canonical_rotation(&pts);
        // equatorial hexagon: least-inertia axis goes to the pole
        let first = rot.mobius(pts[0]);
        assert!((first.norm() - 1.0).abs() < 1e-12);

        // a rotated copy canonicalizes to the same tuple
        let extra = Rotation3::about_axis([0.2, 0.3, 0.9], 0.41);
        let moved: Vec<C64> = pts.iter().map(|&p| extra.mobius(p)).collect();
        let rot2 = canonical_rotation(&moved);
        for (a, b) in pts.iter().zip(&moved) {
            let ca = rot.mobius(*a);
            let cb = rot2.mobius(*b);
            assert!((ca - cb).norm() < 1e-9, "{ca} vs {cb}");
        }
    }
}
