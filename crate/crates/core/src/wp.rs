//! The generalized Weil-Petersson inner product of a branch-point-moving
//! family, assembled from five hyperbolic metrics at the stencil parameters
//! `s ∈ {0, ±ε, ±iε}`.
//!
//! With `v = log g` sampled per vertex in its own chart, the tensors are
//!   `g_sz̄ = ∂_s ∂_z̄ v`, `g_ss̄ = ∂_s ∂_s̄ v`, `a = -g_sz̄/g`, `μ = ∂_z̄ a`,
//!   `φ = g_ss̄ - |g_sz̄|²/g`,
//! the horizontal-lift norm and harmonic Beltrami data of the family. The
//! two components of the inner product are
//!   `G₀ = ∫ φ |ζ|² h(β) i dz∧dz̄`  (also reachable as `(□+1)⁻¹‖μ‖²`
//!   integrated against `β*ω_Y`) and
//!   `G₁ = ∫ |aζ + ξ|² h(β) · g i dz∧dz̄`,
//! and the fiber integral of `ω_X ∧ β*ω_Y` equals their sum identically,
//! per corner and hence — with one shared quadrature rule — to machine
//! precision in the integrals.
//!
//! Vertices move along holomorphic lines `x(s) = x + V s` in their charts
//! (`V = 0` in z-charts and the far field), so sampled derivatives carry
//! the material corrections `v_s = D_s ṽ - V ∂_z v` and
//! `g_ss̄ = D_s D_s̄ ṽ - |V|² g - 2 Re(V̄ g_sz̄)`, using `∂_z∂_z̄ v = g`.

use serde::Serialize;
use thiserror::Error;

use crate::covering::CoveringError;
use crate::hyperbolic::{
    hyperbolic_mass, screened_poisson, solve_liouville, LiouvilleSettings, MetricField, SolveError,
};
use crate::mesh::{
    background_geometry, operators_for_motion, BranchConfiguration, Chart, CoverSurface,
    DiscreteOperators, MeshError, Motion,
};
use crate::rng::SplitMix64;
use crate::sphere::{canonical_rotation_with, round_density};
use crate::C64;

#[derive(Debug, Error)]
pub enum WpError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Covering(#[from] CoveringError),
    #[error("invalid family direction: {0}")]
    BadDirection(String),
    #[error("step ε = {epsilon} exceeds an eighth of the moving disk radius {radius}")]
    StepTooLarge { epsilon: f64, radius: f64 },
}

/// A tangent direction of the space of branch configurations.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    /// the constant family (every branch point fixed)
    Frozen,
    /// unit-speed motion of a single branch point (0-based index)
    BranchPoint(usize),
    /// a complex velocity per branch point
    Velocities(Vec<C64>),
}

impl Direction {
    pub fn to_motion(&self, b: usize) -> Result<Motion, WpError> {
        match self {
            Direction::Frozen => Ok(Motion::frozen(b)),
            Direction::BranchPoint(k) => {
                if *k >= b {
                    return Err(WpError::BadDirection(format!(
                        "branch index {k} out of range 0..{b}"
                    )));
                }
                Ok(Motion::single(b, *k))
            }
            Direction::Velocities(c) => {
                if c.len() != b {
                    return Err(WpError::BadDirection(format!(
                        "{} velocities for {b} branch points",
                        c.len()
                    )));
                }
                Ok(Motion {
                    disk_velocity: c.clone(),
                })
            }
        }
    }

    /// Push the direction through a Möbius rotation: `c_j ↦ R'(p_j)·c_j`.
    pub fn rotate(&self, points: &[C64], rot: &crate::sphere::Rotation3) -> Direction {
        match self {
            Direction::Frozen => Direction::Frozen,
            Direction::BranchPoint(k) => {
                let mut c = vec![C64::new(0.0, 0.0); points.len()];
                c[*k] = rot.mobius_derivative(points[*k]);
                Direction::Velocities(c)
            }
            Direction::Velocities(cs) => Direction::Velocities(
                cs.iter()
                    .zip(points)
                    .map(|(&c, &p)| rot.mobius_derivative(p) * c)
                    .collect(),
            ),
        }
    }

    /// Round-metric norm squared of the direction, `Σ h(p_j)|c_j|²`:
    /// invariant under simultaneous rotation of points and direction.
    pub fn sphere_norm_sq(&self, points: &[C64]) -> f64 {
        match self {
            Direction::Frozen => 0.0,
            Direction::BranchPoint(k) => round_density(points[*k]),
            Direction::Velocities(cs) => cs
                .iter()
                .zip(points)
                .map(|(c, &p)| round_density(p) * c.norm_sqr())
                .sum(),
        }
    }
}

/// Round-sphere Kähler density on the base: `h(w) = 2/(1+|w|²)²`.
pub fn target_metric(w: C64) -> f64 {
    round_density(w)
}

/// Hyperbolic metrics at the five stencil parameters of a one-parameter
/// family, on a fixed chart atlas.
pub struct FamilyStencil<'s> {
    pub surface: &'s CoverSurface,
    pub motion: Motion,
    pub epsilon: f64,
    /// operators at `s = 0` carrying the motion's corner velocities
    pub operators: DiscreteOperators,
    /// fields at `s = 0, +ε, -ε, +iε, -iε`
    pub fields: [MetricField; 5],
}

/// Builds the stencil, solving the four shifted metrics concurrently
/// (warm-started from the center solution). Results are identical for any
/// worker count: each solve is independent and internally sequential.
pub fn build_stencil<'s>(
    surface: &'s CoverSurface,
    motion: &Motion,
    epsilon: f64,
    workers: usize,
    settings: &LiouvilleSettings,
) -> Result<FamilyStencil<'s>, WpError> {
    if !motion.is_frozen() {
        let min_radius = motion
            .disk_velocity
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(j, _)| surface.base.core_radius[j])
            .fold(f64::INFINITY, f64::min);
        if !(epsilon > 0.0) || epsilon > min_radius / 8.0 {
            return Err(WpError::StepTooLarge {
                epsilon,
                radius: min_radius,
            });
        }
    }
    let operators = operators_for_motion(surface, motion)?;
    let center = solve_liouville(&operators.geometry, None, settings)?;
    let steps = [
        C64::new(epsilon, 0.0),
        C64::new(-epsilon, 0.0),
        C64::new(0.0, epsilon),
        C64::new(0.0, -epsilon),
    ];
    let solve_at = |s: C64, u0: &[f64]| -> Result<MetricField, WpError> {
        let geom = background_geometry(surface, motion, s)?;
        Ok(solve_liouville(&geom, Some(u0), settings)?)
    };
    let mut fields_shifted: Vec<MetricField> = Vec::with_capacity(4);
    if workers > 1 {
        let results: Vec<Result<MetricField, WpError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = steps
                .iter()
                .map(|&s| {
                    let u0 = &center.u;
                    scope.spawn(move || solve_at(s, u0))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            fields_shifted.push(r?);
        }
    } else {
        for &s in &steps {
            fields_shifted.push(solve_at(s, &center.u)?);
        }
    }
    let mut it = fields_shifted.into_iter();
    let fields = [
        center,
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ];
    Ok(FamilyStencil {
        surface,
        motion: motion.clone(),
        epsilon,
        operators,
        fields,
    })
}

/// Per-corner tensor data of one face, everything in the face's chart.
#[derive(Debug, Clone)]
struct FaceTensors {
    chart_area: f64,
    g: [f64; 3],
    inv_g: [f64; 3],
    g_ssbar: [f64; 3],
    g_szbar: [C64; 3],
    zeta: [C64; 3],
    xi: [C64; 3],
    h_beta: [f64; 3],
}

/// Assembled per-vertex tensors plus the per-face corner data feeding the
/// shared-quadrature integrals.
pub struct WpTensors {
    /// hyperbolic Kähler density in the vertex chart
    pub g: Vec<f64>,
    pub g_szbar: Vec<C64>,
    pub g_ssbar: Vec<f64>,
    /// horizontal-lift coefficient `a = -g_sz̄/g`
    pub a: Vec<C64>,
    /// Beltrami coefficient `μ = ∂_z̄ a`
    pub mu: Vec<C64>,
    /// horizontal-lift norm `φ = g_ss̄ - |g_sz̄|²/g`
    pub phi: Vec<f64>,
    pub zeta: Vec<C64>,
    pub xi: Vec<C64>,
    pub h_beta: Vec<f64>,
    faces: Vec<FaceTensors>,
}

fn five_point_ds(v: &[f64; 5], eps: f64) -> C64 {
    C64::new((v[1] - v[2]) / (4.0 * eps), -(v[3] - v[4]) / (4.0 * eps))
}

fn five_point_dssbar(v: &[f64; 5], eps: f64) -> f64 {
    (v[1] + v[2] + v[3] + v[4] - 4.0 * v[0]) / (4.0 * eps * eps)
}




/// Recovered vertex value of a field sampled at face barycenters: a ridge-
/// stabilized least-squares fit of `c₀ + c₁x + c₂x̄` over the patch around
/// the vertex (positions normalized to unit scale), evaluated at the vertex.
/// Degenerate patches fall back toward the weighted mean through the ridge.
fn recover_at_vertex(samples: &[(C64, C64, f64)]) -> C64 {
    let mut mean = C64::new(0.0, 0.0);
    let mut wsum = 0.0;
    let mut scale2 = 0.0;
    for &(x, v, w) in samples {
        mean += v * w;
        wsum += w;
        scale2 += x.norm_sqr() * w;
    }
    let mean = mean / wsum;
    if samples.len() < 4 {
        return mean;
    }
    let scale = (scale2 / wsum).sqrt();
    if !(scale > 0.0) {
        return mean;
    }
    let mut a = [[C64::new(0.0, 0.0); 3]; 3];
    let mut b = [C64::new(0.0, 0.0); 3];
    for &(x, v, w) in samples {
        let d = x / scale;
        let basis = [C64::new(1.0, 0.0), d, d.conj()];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += basis[i].conj() * basis[j] * w;
            }
            b[i] += basis[i].conj() * v * w;
        }
    }
    // ridge on the gradient block keeps near-collinear patches tame
    let ridge = 0.05 * wsum;
    a[1][1] += ridge;
    a[2][2] += ridge;
    let mut m = a;
    let mut rhs = b;
    for col in 0..3 {
        let mut piv = col;
        for r in col + 1..3 {
            if m[r][col].norm() > m[piv][col].norm() {
                piv = r;
            }
        }
        if m[piv][col].norm() < 1e-300 {
            return mean;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for cc in col..3 {
                let sub = f * m[col][cc];
                m[r][cc] -= sub;
            }
            let sub = f * rhs[col];
            rhs[r] -= sub;
        }
    }
    let mut c = [C64::new(0.0, 0.0); 3];
    for r in (0..3).rev() {
        let mut acc = rhs[r];
        for cc in r + 1..3 {
            acc -= m[r][cc] * c[cc];
        }
        c[r] = acc / m[r][r];
    }
    c[0]
}

/// Builds all family tensors from the stencil.
pub fn assemble_tensors(st: &FamilyStencil) -> Result<WpTensors, WpError> {
    let surface = st.surface;
    let topo = &surface.topo;
    let charts = &st.operators.charts;
    let geometry = &st.operators.geometry;
    let eps = st.epsilon;
    let nv = topo.verts.len();
    let nf = topo.faces.len();
    let frozen = st.motion.is_frozen();

    let steps = [
        C64::new(0.0, 0.0),
        C64::new(eps, 0.0),
        C64::new(-eps, 0.0),
        C64::new(0.0, eps),
        C64::new(0.0, -eps),
    ];
    // log-density λ/2 in the face chart at stencil parameter k; the
    // s-independent |2z|² factor of z-charts is dropped (finite-difference
    // input only), so cone corners stay finite
    let loglam = |chart: Chart, x: C64, vel: C64, k: usize| -> f64 {
        match chart {
            Chart::Z { disk } => {
                let center = surface.points[disk] + st.motion.disk_velocity[disk] * steps[k];
                round_density(x * x + center).ln()
            }
            // face-local frame: rotations preserve the round density, so the
            // same formula serves every w-type face, pole region included
            Chart::W | Chart::WInf => round_density(x + vel * steps[k]).ln(),
        }
    };
    // true hyperbolic density at s = 0 in the face chart (0 at cone corners)
    let density0 = |chart: Chart, x: C64, u: f64| -> f64 {
        let lam_half = match chart {
            Chart::Z { disk } => round_density(x * x + surface.points[disk]) * 4.0 * x.norm_sqr(),
            Chart::W | Chart::WInf => round_density(x),
        };
        lam_half * (2.0 * u).exp()
    };
    let h_of_beta = |chart: Chart, x: C64| -> f64 {
        match chart {
            Chart::Z { disk } => round_density(x * x + surface.points[disk]),
            Chart::W | Chart::WInf => round_density(x),
        }
    };
    let zeta_of = |chart: Chart, x: C64| -> C64 {
        match chart {
            Chart::Z { .. } => 2.0 * x,
            Chart::W | Chart::WInf => C64::new(1.0, 0.0),
        }
    };
    let xi_of = |chart: Chart| -> C64 {
        match chart {
            Chart::Z { disk } => st.motion.disk_velocity[disk],
            Chart::W | Chart::WInf => C64::new(0.0, 0.0),
        }
    };

    // --- pass A: face-chart corner derivatives ---------------------------
    let mut face_g_szbar = vec![C64::new(0.0, 0.0); nf];
    let mut corner_gssbar = vec![[0.0f64; 3]; nf];
    let mut corner_g = vec![[0.0f64; 3]; nf];
    let mut corner_ds = vec![[C64::new(0.0, 0.0); 3]; nf];
    let mut corner_lg = vec![[0.0f64; 3]; nf];
    for fid in 0..nf {
        let face = &topo.faces[fid];
        let chart = face.chart;
        let coords = charts.corner_coords[fid];
        let vels = charts.corner_velocity[fid];
        let mut series = [[0.0f64; 5]; 3];
        for c in 0..3 {
            let vid = face.verts[c];
            for k in 0..5 {
                series[c][k] = 2.0 * st.fields[k].u[vid] + loglam(chart, coords[c], vels[c], k);
            }
            corner_g[fid][c] = density0(chart, coords[c], st.fields[0].u[vid]);
            corner_lg[fid][c] = series[c][0];
            if !frozen {
                corner_ds[fid][c] = five_point_ds(&series[c], eps);
            }
        }
        if frozen {
            continue;
        }
        for c in 0..3 {
            corner_gssbar[fid][c] = five_point_dssbar(&series[c], eps);
        }
    }
    // Pre-smooth the sampled material derivative before the recovered
    // gradient can amplify its rough part. In the gauge of the global
    // w-chart, M = Ds + 2Re(V_w·∂_w ln J_f) is frame-invariant (the frame
    // term of log g drifts along moving corners by exactly that rate), so a
    // vertex average of M is well defined; each corner then converts back.
    // z-chart corners mix with ξ-terms under transitions and stay raw.
    if !frozen {
        // ln|J_f(w+V_w s)|² is holomorphic plus antiholomorphic in s, so its
        // complex ∂_s keeps only the holomorphic half: the gauge is V_w·L_f.
        let gauge = |fid: usize, c: usize| -> C64 {
            let jac = charts.corner_jacobian[fid][c];
            let v_w = charts.corner_velocity[fid][c] / jac;
            v_w * charts.corner_frame_lder[fid][c]
        };
        let mut acc = vec![(C64::new(0.0, 0.0), 0.0f64); nv];
        for fid in 0..nf {
            if matches!(topo.faces[fid].chart, Chart::Z { .. }) {
                continue;
            }
            let face = &topo.faces[fid];
            let wgt = geometry.face_area[fid];
            for c in 0..3 {
                let vid = face.verts[c];
                if !matches!(topo.verts[vid].chart, Chart::Z { .. }) {
                    acc[vid].0 += (corner_ds[fid][c] + gauge(fid, c)) * wgt;
                    acc[vid].1 += wgt;
                }
            }
        }
        for fid in 0..nf {
            if matches!(topo.faces[fid].chart, Chart::Z { .. }) {
                continue;
            }
            let face = &topo.faces[fid];
            for c in 0..3 {
                let vid = face.verts[c];
                if !matches!(topo.verts[vid].chart, Chart::Z { .. }) && acc[vid].1 > 0.0 {
                    corner_ds[fid][c] = acc[vid].0 / acc[vid].1 - gauge(fid, c);
                }
            }
        }
    }
    if !frozen {
        for fid in 0..nf {
            let vels = charts.corner_velocity[fid];
            // Material first derivative m = v_s + V·∂_z v sampled at the
            // corners. Differentiating m and correcting afterwards keeps the
            // rough O(h) pointwise error of the recovered gradient ∂_z v out
            // of the z̄-derivative: with linear V on the face,
            //   ∂_z̄ m = g_sz̄ + (∂_z̄V)·∂_z v + V·∂_z∂_z̄ v,
            // and `∂_z∂_z̄ v = g` is the hyperbolicity of the fibers.
            let moving = vels.iter().any(|v| v.norm() > 0.0);
            let m = corner_ds[fid];
            let grad_m: C64 = (0..3).map(|c| charts.grad_zbar[fid][c] * m[c]).sum();
            let gszb = if moving {
                // such faces are w-type, where the series at k = 0 is the
                // full log g (no dropped |2z|² term)
                let vz: C64 = (0..3)
                    .map(|c| charts.grad_z[fid][c] * corner_lg[fid][c])
                    .sum();
                let dzb_v: C64 = (0..3).map(|c| charts.grad_zbar[fid][c] * vels[c]).sum();
                let v_g_mean: C64 = (0..3)
                    .map(|c| vels[c] * corner_g[fid][c])
                    .sum::<C64>()
                    / 3.0;
                grad_m - dzb_v * vz - v_g_mean
            } else {
                grad_m
            };
            face_g_szbar[fid] = gszb;
            for c in 0..3 {
                corner_gssbar[fid][c] += -vels[c].norm_sqr() * corner_g[fid][c]
                    - 2.0 * (vels[c].conj() * gszb).re;
            }
        }
    }

    // --- pass B: vertex fields (same-chart face averages) ----------------
    let compatible = |vchart: Chart, fchart: Chart| -> bool {
        match (vchart, fchart) {
            (Chart::Z { disk: a }, Chart::Z { disk: b }) => a == b,
            (Chart::Z { .. }, _) | (_, Chart::Z { .. }) => false,
            _ => true, // any two w-type frames convert exactly
        }
    };
    let mut vertex_faces: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    for fid in 0..nf {
        let face = &topo.faces[fid];
        for c in 0..3 {
            let vid = face.verts[c];
            if compatible(topo.verts[vid].chart, face.chart) {
                vertex_faces[vid].push((fid, c));
            }
        }
    }
    let mut g = vec![0.0f64; nv];
    let mut g_szbar_v = vec![C64::new(0.0, 0.0); nv];
    let mut g_ssbar_v = vec![0.0f64; nv];
    let mut zeta = vec![C64::new(0.0, 0.0); nv];
    let mut xi = vec![C64::new(0.0, 0.0); nv];
    let mut h_beta = vec![0.0f64; nv];
    for vid in 0..nv {
        let incident = &vertex_faces[vid];
        if incident.is_empty() {
            return Err(WpError::BadDirection(format!(
                "vertex {vid} has no face in its own chart"
            )));
        }
        let jv = charts.vertex_jacobian[vid];
        let mut wsum = 0.0;
        let mut acc_ssb = 0.0;
        let mut szb_samples: Vec<(C64, C64, f64)> = Vec::with_capacity(incident.len());
        for &(fid, c) in incident {
            let w = geometry.face_area[fid];
            wsum += w;
            // tensor transport face frame -> vertex frame: with
            // T' = dv/df = J_v/J_f at the corner, g_sz̄ picks up 1/conj(T'),
            // positions map by T', and g_ss̄ is invariant
            let t = jv / charts.corner_jacobian[fid][c];
            let coords = charts.corner_coords[fid];
            let offset = (coords[0] + coords[1] + coords[2]) / 3.0 - coords[c];
            szb_samples.push((offset * t, face_g_szbar[fid] / t.conj(), w));
            acc_ssb += corner_gssbar[fid][c] * w;
        }
        g_szbar_v[vid] = recover_at_vertex(&szb_samples);
        g_ssbar_v[vid] = acc_ssb / wsum;
        let chart = topo.verts[vid].chart;
        // density and target data in the vertex's own frame; every w-type
        // vertex sits at the origin of its frame
        match chart {
            Chart::Z { disk } => {
                let z = topo.verts[vid].z;
                let w = z * z + surface.points[disk];
                g[vid] = round_density(w) * 4.0 * z.norm_sqr()
                    * (2.0 * st.fields[0].u[vid]).exp();
                zeta[vid] = 2.0 * z;
                xi[vid] = st.motion.disk_velocity[disk];
                h_beta[vid] = round_density(w);
            }
            Chart::W | Chart::WInf => {
                let w = surface.base.verts[topo.verts[vid].base].w;
                g[vid] = 2.0 * (2.0 * st.fields[0].u[vid]).exp();
                zeta[vid] = C64::new(1.0, 0.0);
                xi[vid] = C64::new(0.0, 0.0);
                h_beta[vid] = round_density(w);
            }
        }
    }
    let is_ram = {
        let mut flags = vec![false; nv];
        for &rv in &topo.ram_verts {
            flags[rv] = true;
        }
        flags
    };
    let mut a = vec![C64::new(0.0, 0.0); nv];
    let mut phi = vec![0.0f64; nv];
    for vid in 0..nv {
        if is_ram[vid] || g[vid] <= 0.0 {
            continue;
        }
        a[vid] = -g_szbar_v[vid] / g[vid];
        phi[vid] = g_ssbar_v[vid] - g_szbar_v[vid].norm_sqr() / g[vid];
    }

    // --- pass C: Beltrami coefficient μ = ∂_z̄ a --------------------------
    // corner a in the face chart; cross-chart corners convert exactly
    // (the lift a is a vector component: a_w = ξ_z + (dw/dz)·a_z)
    let corner_a = |fid: usize, c: usize| -> C64 {
        let face = &topo.faces[fid];
        let vid = face.verts[c];
        let jf = charts.corner_jacobian[fid][c];
        match (topo.verts[vid].chart, face.chart) {
            (Chart::Z { disk: a_disk }, Chart::Z { disk: b_disk }) if a_disk == b_disk => a[vid],
            (Chart::Z { disk }, _) => {
                // ring vertex seen from a w-type face: through the global
                // w-chart (a_w = ξ + 2z·a_z, the lift is one vector field),
                // then into the face frame
                let z = topo.verts[vid].z;
                jf * (st.motion.disk_velocity[disk] + 2.0 * z * a[vid])
            }
            _ => {
                // between two w-type frames: a is a vector component
                a[vid] * (jf / charts.vertex_jacobian[vid])
            }
        }
    };
    let mut face_mu = vec![C64::new(0.0, 0.0); nf];
    for fid in 0..nf {
        let av = [corner_a(fid, 0), corner_a(fid, 1), corner_a(fid, 2)];
        face_mu[fid] = (0..3).map(|c| charts.grad_zbar[fid][c] * av[c]).sum();
    }
    let mut mu = vec![C64::new(0.0, 0.0); nv];
    for vid in 0..nv {
        let jv = charts.vertex_jacobian[vid];
        let mut samples: Vec<(C64, C64, f64)> = Vec::with_capacity(vertex_faces[vid].len());
        for &(fid, c) in &vertex_faces[vid] {
            let w = geometry.face_area[fid];
            // Beltrami coefficients transport by the phase conj(T')/T'
            let t = jv / charts.corner_jacobian[fid][c];
            let coords = charts.corner_coords[fid];
            let offset = (coords[0] + coords[1] + coords[2]) / 3.0 - coords[c];
            samples.push((offset * t, face_mu[fid] * (t.conj() / t), w));
        }
        mu[vid] = recover_at_vertex(&samples);
    }
    // cone vertices: replace by 1-ring same-chart averages
    for &rv in &topo.ram_verts {
        let mut same: Vec<usize> = Vec::new();
        for e in &topo.edges {
            let other = if e.verts[0] == rv {
                e.verts[1]
            } else if e.verts[1] == rv {
                e.verts[0]
            } else {
                continue;
            };
            if topo.verts[other].chart == topo.verts[rv].chart {
                same.push(other);
            }
        }
        if !same.is_empty() {
            let inv = 1.0 / same.len() as f64;
            g[rv] = same.iter().map(|&u| g[u]).sum::<f64>() * inv;
            phi[rv] = same.iter().map(|&u| phi[u]).sum::<f64>() * inv;
            a[rv] = same.iter().map(|&u| a[u]).sum::<C64>() * inv;
            mu[rv] = same.iter().map(|&u| mu[u]).sum::<C64>() * inv;
            g_szbar_v[rv] = same.iter().map(|&u| g_szbar_v[u]).sum::<C64>() * inv;
            g_ssbar_v[rv] = same.iter().map(|&u| g_ssbar_v[u]).sum::<f64>() * inv;
        }
    }

    // --- pass D: per-face integral data ----------------------------------
    let mut faces = Vec::with_capacity(nf);
    for fid in 0..nf {
        let face = &topo.faces[fid];
        let coords = charts.corner_coords[fid];
        let mut ft = FaceTensors {
            chart_area: charts.chart_area[fid],
            g: corner_g[fid],
            inv_g: [0.0; 3],
            g_ssbar: corner_gssbar[fid],
            g_szbar: [C64::new(0.0, 0.0); 3],
            zeta: [C64::new(0.0, 0.0); 3],
            xi: [C64::new(0.0, 0.0); 3],
            h_beta: [0.0; 3],
        };
        for c in 0..3 {
            let vid = face.verts[c];
            ft.inv_g[c] = if ft.g[c] > 0.0 { 1.0 / ft.g[c] } else { 0.0 };
            // hybrid: the (smoother) vertex average when charts agree, the
            // face value otherwise — both sides of the fiber-integrand
            // identity use this same value, keeping the identity exact
            ft.g_szbar[c] = if compatible(topo.verts[vid].chart, face.chart) && !is_ram[vid] {
                // vertex value moved into the face frame
                let t = charts.corner_jacobian[fid][c] / charts.vertex_jacobian[vid];
                g_szbar_v[vid] / t.conj()
            } else {
                face_g_szbar[fid]
            };
            ft.zeta[c] = zeta_of(face.chart, coords[c]);
            ft.xi[c] = xi_of(face.chart);
            ft.h_beta[c] = h_of_beta(face.chart, coords[c]);
        }
        faces.push(ft);
    }

    Ok(WpTensors {
        g,
        g_szbar: g_szbar_v,
        g_ssbar: g_ssbar_v,
        a,
        mu,
        phi,
        zeta,
        xi,
        h_beta,
        faces,
    })
}

fn face_mean(vals: [f64; 3]) -> f64 {
    (vals[0] + vals[1] + vals[2]) / 3.0
}

impl WpTensors {
    fn corner_phi(ft: &FaceTensors, c: usize) -> f64 {
        ft.g_ssbar[c] - ft.g_szbar[c].norm_sqr() * ft.inv_g[c]
    }

    fn corner_lift(ft: &FaceTensors, c: usize) -> C64 {
        -ft.g_szbar[c] * ft.inv_g[c] * ft.zeta[c] + ft.xi[c]
    }
}

/// `G₀ = ∫ φ |ζ|² h(β) i dz∧dz̄`, per-face linear quadrature.
pub fn wp_g0_direct(t: &WpTensors) -> f64 {
    t.faces
        .iter()
        .map(|ft| {
            let vals =
                [0, 1, 2].map(|c| WpTensors::corner_phi(ft, c) * ft.zeta[c].norm_sqr() * ft.h_beta[c]);
            face_mean(vals) * 2.0 * ft.chart_area
        })
        .sum()
}

/// `G₁ = ∫ |aζ + ξ|² h(β) g i dz∧dz̄`, same quadrature rule.
pub fn wp_g1(t: &WpTensors) -> f64 {
    t.faces
        .iter()
        .map(|ft| {
            let vals = [0, 1, 2]
                .map(|c| WpTensors::corner_lift(ft, c).norm_sqr() * ft.h_beta[c] * ft.g[c]);
            face_mean(vals) * 2.0 * ft.chart_area
        })
        .sum()
}

/// Coefficient of `i ds∧ds̄` in `∫ ω_X ∧ β*ω_Y`:
/// `∫ (g_ss̄|ζ|² - 2Re(g_sz̄ ζ ξ̄) + g|ξ|²)·h(β) i dz∧dz̄`.
pub fn fiber_integral(t: &WpTensors) -> f64 {
    t.faces
        .iter()
        .map(|ft| {
            let vals = [0, 1, 2].map(|c| fiber_corner(ft, c));
            face_mean(vals) * 2.0 * ft.chart_area
        })
        .sum()
}

fn fiber_corner(ft: &FaceTensors, c: usize) -> f64 {
    (ft.g_ssbar[c] * ft.zeta[c].norm_sqr()
        - 2.0 * (ft.g_szbar[c] * ft.zeta[c] * ft.xi[c].conj()).re
        + ft.g[c] * ft.xi[c].norm_sqr())
        * ft.h_beta[c]
}

/// Largest relative violation, over all face corners, of the pointwise
/// identity `g_ss̄|ζ|² - 2Re(g_sz̄ζξ̄) + g|ξ|² = φ|ζ|² + |aζ+ξ|²g`.
pub fn integrand_identity_residual(t: &WpTensors) -> f64 {
    let mut worst = 0.0f64;
    for ft in &t.faces {
        for c in 0..3 {
            let lhs = fiber_corner(ft, c);
            let rhs = (WpTensors::corner_phi(ft, c) * ft.zeta[c].norm_sqr()
                + WpTensors::corner_lift(ft, c).norm_sqr() * ft.g[c])
                * ft.h_beta[c];
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    worst
}

/// The pointwise identity on arbitrary tensor values: largest relative
/// residual over `samples` random draws. Independent of any mesh.
pub fn random_identity_residual(samples: usize, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let g = rng.range_f64(0.05, 3.0);
        let g_szbar = rng.complex_in_square(2.0);
        let g_ssbar = rng.range_f64(-3.0, 3.0);
        let zeta = rng.complex_in_square(2.0);
        let xi = rng.complex_in_square(2.0);
        let h = rng.range_f64(0.05, 2.0);
        let lhs = (g_ssbar * zeta.norm_sqr() - 2.0 * (g_szbar * zeta * xi.conj()).re
            + g * xi.norm_sqr())
            * h;
        let a = -g_szbar / g;
        let phi = g_ssbar - g_szbar.norm_sqr() / g;
        let rhs = (phi * zeta.norm_sqr() + (a * zeta + xi).norm_sqr() * g) * h;
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

/// `G₀` through the elliptic route: solve `(□+1)φ = ‖μ‖²` and integrate the
/// solution against `β*ω_Y`. Independent of the parameter finite differences
/// entering [`wp_g0_direct`] except through `μ` itself.
pub fn wp_g0_pde(st: &FamilyStencil, t: &WpTensors) -> Result<f64, WpError> {
    let rhs: Vec<f64> = t.mu.iter().map(|m| m.norm_sqr()).collect();
    let phi_hat = screened_poisson(&st.operators.geometry, &st.fields[0], &rhs)?;
    let topo = &st.surface.topo;
    let mut total = 0.0;
    for (fid, ft) in t.faces.iter().enumerate() {
        let face = &topo.faces[fid];
        let vals =
            [0, 1, 2].map(|c| phi_hat[face.verts[c]] * ft.zeta[c].norm_sqr() * ft.h_beta[c]);
        total += face_mean(vals) * 2.0 * ft.chart_area;
    }
    Ok(total)
}

/// Residuals of the screened-Poisson identity `(□+1)φ = ‖μ‖²` for the
/// finite-difference `φ`, in the hyperbolic L² norm.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EqellResiduals {
    /// `‖φ_fd − (□+1)⁻¹‖μ‖²‖ / ‖(□+1)⁻¹‖μ‖²‖` (solution-space residual)
    pub solved: f64,
    /// `‖(□+1)φ_fd − ‖μ‖²‖ / ‖‖μ‖²‖` (strong residual)
    pub strong: f64,
}

pub fn eqell_residuals(st: &FamilyStencil, t: &WpTensors) -> Result<EqellResiduals, WpError> {
    let rhs: Vec<f64> = t.mu.iter().map(|m| m.norm_sqr()).collect();
    let phi_hat = screened_poisson(&st.operators.geometry, &st.fields[0], &rhs)?;
    let mass = hyperbolic_mass(&st.operators.geometry, &st.fields[0]);
    let norm = |v: &[f64]| -> f64 {
        v.iter()
            .zip(&mass)
            .map(|(&x, &m)| m * x * x)
            .sum::<f64>()
            .sqrt()
    };
    let diff: Vec<f64> = t.phi.iter().zip(&phi_hat).map(|(&a, &b)| a - b).collect();
    let solved = norm(&diff) / norm(&phi_hat).max(1e-300);
    let applied = crate::hyperbolic::apply_screened(&st.operators.geometry, &st.fields[0], &t.phi);
    let strong_diff: Vec<f64> = applied.iter().zip(&rhs).map(|(&x, &f)| x - f).collect();
    let strong = norm(&strong_diff) / norm(&rhs).max(1e-300);
    Ok(EqellResiduals { solved, strong })
}

/// Curvature of the determinant line bundle with its Quillen metric, and of
/// the Deligne pairing: both equal `ω_WP/(4π²)`.
pub fn curvature_scalings(wp_total: f64) -> (f64, f64) {
    let c = wp_total / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
    (c, c)
}

/// Everything the family computation produces.
#[derive(Debug, Clone, Serialize)]
pub struct WpResult {
    pub g0_direct: f64,
    pub g0_pde: f64,
    pub g1: f64,
    /// `G₀ + G₁` (by definition)
    pub wp_total: f64,
    pub fiber_integral: f64,
    pub det_curvature: f64,
    pub deligne_curvature: f64,
    /// `wp_total` per unit round-metric direction norm; the rotation
    /// invariant of the computation
    pub wp_normalized: f64,
    pub epsilon: f64,
    pub refinement: usize,
    pub residuals: WpResiduals,
}

#[derive(Debug, Clone, Serialize)]
pub struct WpResiduals {
    pub integrand_identity: f64,
    pub eqell_solved: f64,
    pub eqell_strong: f64,
    pub phi_min: f64,
    pub mu_max: f64,
    pub newton_residuals: Vec<f64>,
}

/// Evaluates every component and residual of the stencil's family.
pub fn evaluate(st: &FamilyStencil, sphere_norm_sq: f64) -> Result<(WpResult, WpTensors), WpError> {
    let tensors = assemble_tensors(st)?;
    let g0_direct = wp_g0_direct(&tensors);
    let g1 = wp_g1(&tensors);
    let wp_total = g0_direct + g1;
    let fiber = fiber_integral(&tensors);
    let g0_pde = wp_g0_pde(st, &tensors)?;
    let eqell = eqell_residuals(st, &tensors)?;
    let (det_curv, del_curv) = curvature_scalings(wp_total);
    let phi_min = tensors.phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let mu_max = tensors.mu.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let result = WpResult {
        g0_direct,
        g0_pde,
        g1,
        wp_total,
        fiber_integral: fiber,
        det_curvature: det_curv,
        deligne_curvature: del_curv,
        wp_normalized: if sphere_norm_sq > 0.0 {
            wp_total / sphere_norm_sq
        } else {
            0.0
        },
        epsilon: st.epsilon,
        refinement: st.surface.refinement,
        residuals: WpResiduals {
            integrand_identity: integrand_identity_residual(&tensors),
            eqell_solved: eqell.solved,
            eqell_strong: eqell.strong,
            phi_min,
            mu_max,
            newton_residuals: st.fields.iter().map(|f| f.final_residual).collect(),
        },
    };
    Ok((result, tensors))
}

/// Full computation for a configuration: canonicalize the frame (rotated
/// inputs land on one canonical mesh, making the result rotation-invariant
/// to rounding), build the cover, solve the stencil, and evaluate.
pub fn weil_petersson(
    config: &BranchConfiguration,
    direction: &Direction,
    epsilon: Option<f64>,
    refinement: usize,
    workers: usize,
) -> Result<WpReport, WpError> {
    let velocities = match direction.to_motion(config.branch_count()) {
        Ok(m) if !m.is_frozen() => Some(m.disk_velocity),
        _ => None,
    };
    let rot = canonical_rotation_with(&config.points, velocities.as_deref());
    // Snap canonical coordinates to a fixed grid: configurations equal up to
    // rotation then canonicalize to bitwise-identical meshes, so mesh-level
    // tie-break decisions cannot flip between equivalent inputs.
    let snap = |x: f64| (x * 1e6).round() / 1e6;
    let points: Vec<C64> = config
        .points
        .iter()
        .map(|&p| {
            let q = rot.mobius(p);
            C64::new(snap(q.re), snap(q.im))
        })
        .collect();
    let canonical = BranchConfiguration {
        points,
        datum: config.datum.clone(),
        radius_scale: config.radius_scale,
    };
    canonical.validate()?;
    let direction_canonical = direction.rotate(&config.points, &rot);
    let sphere_norm = direction.sphere_norm_sq(&config.points);
    let surface = crate::mesh::build_cover(&canonical, refinement)?;
    let motion = direction_canonical.to_motion(canonical.branch_count())?;
    let settings = LiouvilleSettings::default();
    let min_radius = surface
        .base
        .core_radius
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let eps = epsilon.unwrap_or(min_radius / 8.2);
    let stencil = build_stencil(&surface, &motion, eps, workers, &settings)?;
    let (result, _) = evaluate(&stencil, sphere_norm)?;
    Ok(WpReport {
        result,
        canonical_points: canonical.points.clone(),
        epsilon: eps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WpReport {
    pub result: WpResult,
    #[serde(serialize_with = "serialize_points")]
    pub canonical_points: Vec<C64>,
    pub epsilon: f64,
}

fn serialize_points<S: serde::Serializer>(points: &[C64], ser: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(points.len()))?;
    for p in points {
        seq.serialize_element(&(p.re, p.im))?;
    }
    seq.end()
}

/// Richardson step check: halve ε until successive `wp_total` values agree
/// to `tol` relative, returning the accepted ε and the trail of values.
pub fn choose_epsilon(
    surface: &CoverSurface,
    motion: &Motion,
    initial: f64,
    tol: f64,
    workers: usize,
) -> Result<(f64, Vec<(f64, f64)>), WpError> {
    let settings = LiouvilleSettings::default();
    let mut eps = initial;
    let mut trail = Vec::new();
    let stencil = build_stencil(surface, motion, eps, workers, &settings)?;
    let (res, _) = evaluate(&stencil, 1.0)?;
    let mut value = res.wp_total;
    trail.push((eps, value));
    for _ in 0..6 {
        let next_eps = eps / 2.0;
        let stencil = build_stencil(surface, motion, next_eps, workers, &settings)?;
        let (res, _) = evaluate(&stencil, 1.0)?;
        trail.push((next_eps, res.wp_total));
        let rel = (res.wp_total - value).abs() / res.wp_total.abs().max(1e-300);
        if rel < tol {
            // agreement validates the pair; keep the larger step, which is
            // the less noise-amplifying of the two
            return Ok((eps, trail));
        }
        eps = next_eps;
        value = res.wp_total;
        if eps < 1e-4 {
            break;
        }
    }
    Ok((eps, trail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::MonodromyDatum;

    #[test]
    fn random_tensor_identity_is_machine_exact() {
        let worst = random_identity_residual(1000, 7);
        assert!(worst < 1e-12, "residual {worst:e}");
    }

    fn hexagon() -> BranchConfiguration {
        let datum = MonodromyDatum::genus_zero(2, &[(1, 2); 6]).unwrap();
        BranchConfiguration::regular_polygon(datum).unwrap()
    }

    #[test]
    fn frozen_family_vanishes() {
        let config = hexagon();
        let surface = crate::mesh::build_cover(&config, 0).unwrap();
        let motion = Motion::frozen(6);
        let st = build_stencil(&surface, &motion, 0.01, 1, &LiouvilleSettings::default()).unwrap();
        let (result, tensors) = evaluate(&st, 0.0).unwrap();
        assert!(result.g0_direct.abs() < 1e-12, "g0 = {:e}", result.g0_direct);
        assert!(result.g1.abs() < 1e-12, "g1 = {:e}", result.g1);
        assert!(result.fiber_integral.abs() < 1e-12);
        let mu_max = tensors.mu.iter().map(|m| m.norm()).fold(0.0, f64::max);
        assert!(mu_max < 1e-12);
    }

    #[test]
    fn single_direction_is_positive_and_consistent() {
        let config = hexagon();
        let surface = crate::mesh::build_cover(&config, 1).unwrap();
        let motion = Motion::single(6, 0);
        let st = build_stencil(&surface, &motion, 0.01, 2, &LiouvilleSettings::default()).unwrap();
        let (result, _) = evaluate(&st, 1.0).unwrap();
        assert!(result.g0_direct > 0.0, "g0 = {}", result.g0_direct);
        assert!(result.g1 > 0.0, "g1 = {}", result.g1);
        // exact route: shared quadrature makes the fiber integral the sum
        let rel = (result.fiber_integral - result.wp_total).abs() / result.wp_total;
        assert!(rel < 1e-10, "identity violated: {rel:e}");
        assert!(result.residuals.integrand_identity < 1e-12);
        assert_eq!(result.det_curvature, result.deligne_curvature);
        let four_pi_sq = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        assert!((result.det_curvature - result.wp_total / four_pi_sq).abs() < 1e-15);
    }
}
