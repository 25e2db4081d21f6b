//! Background geometry of a cover at a family parameter `s`: edge lengths of
//! the pulled-back round metric, angle defects, lumped areas, the cotangent
//! Laplacian, and the per-face chart gradients used by the tensor assembly.
//!
//! A family moves each branch point `p_j` at a complex velocity `c_j`. The
//! moving z-disk keeps its z-coordinates and maps by `w = z² + p_j + c_j s`;
//! w-chart vertices translate by `χ(|w - p_j|)·c_j·s`, where the blend `χ` is
//! 1 through the gluing ring and 0 outside the annulus, so the deformation
//! is absorbed inside the patch.

use crate::sparse::{CooBuilder, CsrMatrix};
use crate::sphere::round_density;
use crate::C64;

use super::cover::Chart;
use super::{CoverSurface, MeshError};

/// Branch-point velocity field defining a one-parameter family direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    /// `c_j` per branch point; all zeros is the frozen (constant) family.
    pub disk_velocity: Vec<C64>,
}

impl Motion {
    pub fn frozen(b: usize) -> Self {
        Motion {
            disk_velocity: vec![C64::new(0.0, 0.0); b],
        }
    }

    /// Unit-speed motion of branch point `k` alone.
    pub fn single(b: usize, k: usize) -> Self {
        let mut m = Self::frozen(b);
        m.disk_velocity[k] = C64::new(1.0, 0.0);
        m
    }

    pub fn is_frozen(&self) -> bool {
        self.disk_velocity.iter().all(|c| c.norm() == 0.0)
    }
}

/// Cutoff profile of the branch-point motion: 1 through the gluing ring and
/// well past the patch, smoothstep down to 0 across a wide far-field band.
/// The band is wide on purpose: the mesh deforms only where the blend
/// varies, and concentrating that deformation far from the disks keeps the
/// parameter-derivative of the discretization error small.
pub fn blend_profile(r: f64, lo: f64, hi: f64) -> f64 {
    if r <= lo {
        1.0
    } else if r >= hi {
        0.0
    } else {
        // quintic smoothstep: C² at both ends keeps the deformation strain
        // of the family mesh smooth
        let t = (r - lo) / (hi - lo);
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Inner and outer blend radii around branch point `j`.
pub fn blend_radii(surface: &CoverSurface, j: usize) -> (f64, f64) {
    (surface.blend_lo[j], surface.blend_hi)
}

/// w-chart velocity of every cover vertex under a motion.
pub fn vertex_velocities(surface: &CoverSurface, motion: &Motion) -> Vec<C64> {
    let pts = &surface.points;
    surface
        .topo
        .verts
        .iter()
        .map(|cv| {
            let w = surface.base.verts[cv.base].w;
            let mut v = C64::new(0.0, 0.0);
            for (j, &c) in motion.disk_velocity.iter().enumerate() {
                if c.norm() > 0.0 {
                    let (lo, hi) = blend_radii(surface, j);
                    v += c * blend_profile((w - pts[j]).norm(), lo, hi);
                }
            }
            v
        })
        .collect()
}

/// Piecewise-flat background metric data at family parameter `s`.
#[derive(Debug, Clone)]
pub struct BackgroundGeometry {
    /// flat length of each cover edge
    pub lengths: Vec<f64>,
    /// interior angle at each face corner
    pub angles: Vec<[f64; 3]>,
    pub face_area: Vec<f64>,
    /// lumped (one-third) vertex areas
    pub vertex_area: Vec<f64>,
    /// angle defect per vertex; sums to 2πχ exactly
    pub defect: Vec<f64>,
    pub laplacian: CsrMatrix,
    pub total_area: f64,
}

/// Chart-level data at `s = 0`: per-face corner coordinates, linear-gradient
/// coefficient stencils, and flat chart areas for the shared quadrature rule.
///
/// z-disk faces use their z-chart. Every other face computes in a local
/// frame — the rotation bringing its barycenter to `w = 0` — so recovered
/// gradients are uniformly accurate over the sphere; the exact frame
/// derivatives at the corners move tensor components between frames.
#[derive(Debug, Clone)]
pub struct ChartData {
    pub corner_coords: Vec<[C64; 3]>,
    /// `∂_z f = Σ_k grad_z[f][k]·f_k` for vertexwise-linear `f`
    pub grad_z: Vec<[C64; 3]>,
    pub grad_zbar: Vec<[C64; 3]>,
    /// flat area of the face in its chart coordinates
    pub chart_area: Vec<f64>,
    /// face-chart velocity of each corner under the operators' motion
    pub corner_velocity: Vec<[C64; 3]>,
    /// derivative of the face frame map at each corner (1 on z-faces)
    pub corner_jacobian: Vec<[C64; 3]>,
    /// `∂_w ln J_f` of the face frame at each corner (0 on z-faces):
    /// the gauge drift of frame-local samples under corner motion
    pub corner_frame_lder: Vec<[C64; 3]>,
    /// derivative of each vertex's own frame at the vertex (1 on z-vertices)
    pub vertex_jacobian: Vec<C64>,
    /// each w-type face's local frame (None on z-faces)
    pub face_frame: Vec<Option<crate::sphere::LocalFrame>>,
    /// face anchor: the frame center in `w` (w-faces) or the z-barycenter
    /// (z-faces)
    pub face_anchor: Vec<C64>,
}

/// Cotangent stiffness operator, background measure, and gradient stencils.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub geometry: BackgroundGeometry,
    pub charts: ChartData,
}

const GAUSS4_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_9,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GAUSS4_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_727,
    0.326_072_577_431_273,
    0.326_072_577_431_273,
    0.173_927_422_568_727,
];

/// √(Riemannian density) along a straight w-chart segment.
fn w_segment_length(a: C64, b: C64) -> f64 {
    let step = b - a;
    let len = step.norm();
    let mut total = 0.0;
    for (t, wgt) in GAUSS4_NODES.iter().zip(&GAUSS4_WEIGHTS) {
        let x = a + step * *t;
        total += wgt * (2.0 * round_density(x)).sqrt();
    }
    total * len
}

/// Pulled-back length between z-chart points of a disk (`w = z² + center`),
/// measured along the straight chord of the base image. This is the exact
/// cone geodesic at the ramification point (total angle 4π emerges from the
/// fan), and it agrees with the w-chart chord convention on shared edges.
fn z_segment_length(a: C64, b: C64, center: C64) -> f64 {
    let wa = a * a;
    let wb = b * b;
    let step = wb - wa;
    let len = step.norm();
    let mut total = 0.0;
    for (t, wgt) in GAUSS4_NODES.iter().zip(&GAUSS4_WEIGHTS) {
        let w = wa + step * *t + center;
        total += wgt * (2.0 * round_density(w)).sqrt();
    }
    total * len
}

fn stable_triangle_area(a: f64, b: f64, c: f64) -> Result<f64, MeshError> {
    // sort a >= b >= c
    let mut s = [a, b, c];
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let [a, b, c] = s;
    let arg = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    if !(arg > 0.0) {
        return Err(MeshError::Degenerate(format!(
            "degenerate background triangle with lengths {a:.3e}, {b:.3e}, {c:.3e}"
        )));
    }
    Ok(0.25 * arg.sqrt())
}

/// Assembles the background geometry at parameter `s` for a family moving
/// the branch points at the motion's velocities.
pub fn background_geometry(
    surface: &CoverSurface,
    motion: &Motion,
    s: C64,
) -> Result<BackgroundGeometry, MeshError> {
    let topo = &surface.topo;
    let nv = topo.verts.len();
    let velocities = vertex_velocities(surface, motion);
    let w_at = |cv: usize| surface.base.verts[topo.verts[cv].base].w + velocities[cv] * s;

    let mut lengths = Vec::with_capacity(topo.edges.len());
    for (eid, e) in topo.edges.iter().enumerate() {
        let len = match surface.edge_chart[eid] {
            Chart::Z { disk } => {
                let za = topo.verts[e.verts[0]].z;
                let zb = topo.verts[e.verts[1]].z;
                let center = surface.points[disk] + motion.disk_velocity[disk] * s;
                z_segment_length(za, zb, center)
            }
            Chart::WInf => {
                // the far field never moves; the reciprocal chart shares the
                // density formula by the inversion symmetry of the metric
                if velocities[e.verts[0]].norm() != 0.0 || velocities[e.verts[1]].norm() != 0.0 {
                    return Err(MeshError::Degenerate(
                        "branch-point motion reaches the polar chart".into(),
                    ));
                }
                let wa = surface.base.verts[topo.verts[e.verts[0]].base].w;
                let wb = surface.base.verts[topo.verts[e.verts[1]].base].w;
                w_segment_length(1.0 / wa, 1.0 / wb)
            }
            Chart::W => w_segment_length(w_at(e.verts[0]), w_at(e.verts[1])),
        };
        if !(len > 0.0) {
            return Err(MeshError::Degenerate(format!(
                "edge {eid} has non-positive background length"
            )));
        }
        lengths.push(len);
    }

    let mut angles = Vec::with_capacity(topo.faces.len());
    let mut face_area = Vec::with_capacity(topo.faces.len());
    let mut vertex_area = vec![0.0; nv];
    let mut angle_sum = vec![0.0; nv];
    let mut builder = CooBuilder::new(nv);
    for i in 0..nv {
        builder.add(i, i, 0.0);
    }
    for (fid, face) in topo.faces.iter().enumerate() {
        let l = [
            lengths[topo.face_edges[fid][0]],
            lengths[topo.face_edges[fid][1]],
            lengths[topo.face_edges[fid][2]],
        ];
        let area = stable_triangle_area(l[0], l[1], l[2])?;
        let mut ang = [0.0; 3];
        for k in 0..3 {
            let (opp, u, v) = (l[k], l[(k + 1) % 3], l[(k + 2) % 3]);
            let cosv = ((u * u + v * v - opp * opp) / (2.0 * u * v)).clamp(-1.0, 1.0);
            ang[k] = cosv.acos();
            angle_sum[face.verts[k]] += ang[k];
            vertex_area[face.verts[k]] += area / 3.0;
        }
        // cotangent weights: the angle at corner k weights the opposite edge
        for k in 0..3 {
            let (i, j) = (face.verts[(k + 1) % 3], face.verts[(k + 2) % 3]);
            let w = 0.5 * ang[k].cos() / ang[k].sin();
            builder.add_sym(i, j, -w);
            builder.add(i, i, w);
            builder.add(j, j, w);
        }
        angles.push(ang);
        face_area.push(area);
    }
    let defect: Vec<f64> = angle_sum
        .iter()
        .map(|&a| 2.0 * std::f64::consts::PI - a)
        .collect();
    let total_area = face_area.iter().sum();
    Ok(BackgroundGeometry {
        lengths,
        angles,
        face_area,
        vertex_area,
        defect,
        laplacian: builder.build(),
        total_area,
    })
}

/// Chart coordinates, gradient stencils, quadrature areas, and corner
/// velocities at `s = 0`.
pub fn chart_data(surface: &CoverSurface, motion: &Motion) -> Result<ChartData, MeshError> {
    let topo = &surface.topo;
    let velocities = vertex_velocities(surface, motion);
    let nf = topo.faces.len();
    let mut corner_coords = Vec::with_capacity(nf);
    let mut grad_z = Vec::with_capacity(nf);
    let mut grad_zbar = Vec::with_capacity(nf);
    let mut chart_area = Vec::with_capacity(nf);
    let mut corner_velocity = Vec::with_capacity(nf);
    let mut corner_jacobian = Vec::with_capacity(nf);
    let mut corner_frame_lder = Vec::with_capacity(nf);
    let mut face_frame = Vec::with_capacity(nf);
    let mut face_anchor = Vec::with_capacity(nf);
    for (fid, face) in topo.faces.iter().enumerate() {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let (coords, vel, jac, lder): ([C64; 3], [C64; 3], [C64; 3], [C64; 3]) = match face.chart
        {
            Chart::Z { .. } => {
                let zs = [
                    topo.verts[face.verts[0]].z,
                    topo.verts[face.verts[1]].z,
                    topo.verts[face.verts[2]].z,
                ];
                face_frame.push(None);
                face_anchor.push((zs[0] + zs[1] + zs[2]) / 3.0);
                (zs, [zero; 3], [one; 3], [zero; 3])
            }
            Chart::W | Chart::WInf => {
                // local frame anchored at the spherical barycenter
                let mut bary = [0.0f64; 3];
                for &cv in &face.verts {
                    let p = surface.base.verts[topo.verts[cv].base].pos;
                    for d in 0..3 {
                        bary[d] += p[d] / 3.0;
                    }
                }
                let anchor = crate::sphere::from_sphere(crate::sphere::normalize3(bary));
                let frame = crate::sphere::LocalFrame::at(anchor);
                face_frame.push(Some(frame));
                face_anchor.push(anchor);
                let mut coords = [zero; 3];
                let mut vel = [zero; 3];
                let mut jac = [one; 3];
                let mut lder = [zero; 3];
                for c in 0..3 {
                    let w = surface.base.verts[topo.verts[face.verts[c]].base].w;
                    coords[c] = frame.map(w);
                    jac[c] = frame.derivative(w);
                    vel[c] = jac[c] * velocities[face.verts[c]];
                    lder[c] = -2.0 * frame.r * frame.phase / (frame.r * frame.phase * w + 1.0);
                }
                (coords, vel, jac, lder)
            }
        };
        let e1 = coords[1] - coords[0];
        let e2 = coords[2] - coords[0];
        let twice_area = (e1.conj() * e2).im;
        if !(twice_area > 0.0) {
            return Err(MeshError::Degenerate(format!(
                "face {fid} has non-positive chart area"
            )));
        }
        let d = e1 * e2.conj() - e2 * e1.conj(); // = -4i · area
        let gz = [
            (e1.conj() - e2.conj()) / d,
            e2.conj() / d,
            -e1.conj() / d,
        ];
        // for real-linear interpolation, ∂_z̄ coefficients conjugate ∂_z ones
        let gzb = [gz[0].conj(), gz[1].conj(), gz[2].conj()];
        corner_coords.push(coords);
        grad_z.push(gz);
        grad_zbar.push(gzb);
        chart_area.push(0.5 * twice_area);
        corner_velocity.push(vel);
        corner_jacobian.push(jac);
        corner_frame_lder.push(lder);
    }
    let vertex_jacobian: Vec<C64> = topo
        .verts
        .iter()
        .map(|cv| match cv.chart {
            Chart::Z { .. } => C64::new(1.0, 0.0),
            Chart::W | Chart::WInf => {
                let w = surface.base.verts[cv.base].w;
                crate::sphere::LocalFrame::at(w).derivative(w)
            }
        })
        .collect();
    Ok(ChartData {
        corner_coords,
        grad_z,
        grad_zbar,
        chart_area,
        corner_velocity,
        corner_jacobian,
        corner_frame_lder,
        vertex_jacobian,
        face_frame,
        face_anchor,
    })
}

/// Operators of the static surface (`s = 0`, no motion).
pub fn assemble_operators(surface: &CoverSurface) -> Result<DiscreteOperators, MeshError> {
    operators_for_motion(surface, &Motion::frozen(surface.points.len()))
}

/// Operators at `s = 0` with corner velocities for the given motion.
pub fn operators_for_motion(
    surface: &CoverSurface,
    motion: &Motion,
) -> Result<DiscreteOperators, MeshError> {
    Ok(DiscreteOperators {
        geometry: background_geometry(surface, motion, C64::new(0.0, 0.0))?,
        charts: chart_data(surface, motion)?,
    })
}
