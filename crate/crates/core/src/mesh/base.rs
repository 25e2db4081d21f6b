//! Base-sphere triangulation: a subdivided icosahedron carrying the far
//! field, a graded polar patch around every branch point, and an angular
//! zipper stitching each patch into the icosphere hole cut for it.
//!
//! The polar patch for a branch point has core rings at radii `ρ(q/Q)²`
//! whose preimage under `w = z² + p` is a uniform polar mesh in `z`, and a
//! geometric annulus bridging the core spacing to the icosphere edge length.
//! Orientation convention: every face is counterclockwise in the `w`-chart,
//! equivalently `det[v₁ v₂ v₃] < 0` on the sphere.

use crate::sphere::{from_sphere, normalize3, to_sphere, Rotation3};
use crate::C64;

use super::MeshError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseVertexKind {
    /// Branch point `disk`, the center of its polar patch.
    BranchCenter { disk: usize },
    /// Polar-patch vertex: core rings `1..=rings_core`, annulus above.
    Disk { disk: usize, ring: usize },
    /// Far-field icosphere vertex.
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceRegion {
    /// Inside the gluing ring of disk `disk`; the branched sheets of these
    /// faces live in the z-chart.
    DiskCore { disk: usize },
    DiskAnnulus { disk: usize },
    Zipper { disk: usize },
    Sphere,
}

#[derive(Debug, Clone)]
pub struct BaseVertex {
    pub w: C64,
    pub pos: [f64; 3],
    pub kind: BaseVertexKind,
}

#[derive(Debug, Clone)]
pub struct BaseEdge {
    pub verts: [usize; 2],
    pub faces: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct BaseMesh {
    pub verts: Vec<BaseVertex>,
    pub faces: Vec<[usize; 3]>,
    pub regions: Vec<FaceRegion>,
    pub edges: Vec<BaseEdge>,
    /// Edge opposite each face corner.
    pub face_edges: Vec<[usize; 3]>,
    /// Counterclockwise face fan around each vertex.
    pub fans: Vec<Vec<usize>>,
    /// Per disk: radius of the gluing ring (z-chart boundary) in `w` units.
    pub core_radius: Vec<f64>,
    /// Per disk: number of core rings.
    pub rings_core: Vec<usize>,
    /// Per disk: outer radius of the annulus.
    pub outer_radius: Vec<f64>,
}

/// Build parameters derived from a refinement level.
#[derive(Debug, Clone, Copy)]
pub struct Resolution {
    pub ico_level: usize,
    pub core_rings: usize,
}

impl Resolution {
    pub fn from_refinement(refinement: usize) -> Self {
        Resolution {
            ico_level: refinement + 3,
            core_rings: 3.max(2 << refinement),
        }
    }
}

/// Fixed generic attitude for the icosphere so that cut rays and branch
/// points never align with its symmetry axes.
fn generic_attitude() -> Rotation3 {
    Rotation3::about_axis([0.2117, 0.3411, 0.9192], 0.3731)
}

fn icosahedron() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let verts: Vec<[f64; 3]> = raw.iter().map(|&v| normalize3(v)).collect();
    // Outward-oriented faces of the standard icosahedron.
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (verts, faces)
}

/// Subdivided icosahedron on the unit sphere in the fixed generic attitude.
pub fn icosphere(level: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let (mut verts, mut faces) = icosahedron();
    for _ in 0..level {
        let mut midpoint: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mids[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = normalize3([
                        verts[a][0] + verts[b][0],
                        verts[a][1] + verts[b][1],
                        verts[a][2] + verts[b][2],
                    ]);
                    verts.push(m);
                    verts.len() - 1
                });
            }
            new_faces.push([f[0], mids[0], mids[2]]);
            new_faces.push([f[1], mids[1], mids[0]]);
            new_faces.push([f[2], mids[2], mids[1]]);
            new_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = new_faces;
    }
    let att = generic_attitude();
    for v in &mut verts {
        *v = att.apply(*v);
    }
    (verts, faces)
}

/// Mean icosphere edge length in radians at subdivision `level`.
pub fn ico_edge_radians(level: usize) -> f64 {
    1.1071 / (1 << level) as f64
}

/// Local `w`-plane length of a sphere arc of `rad` radians at `w`.
pub fn w_scale(w: C64, rad: f64) -> f64 {
    rad * (1.0 + w.norm_sqr()) / 2.0
}

struct Patch {
    /// vertex ids ring by ring; ring 0 is the center alone
    rings: Vec<Vec<usize>>,
    core_rings: usize,
    core_radius: f64,
    outer_radius: f64,
}

/// Angular offset for ring `q`, alternating quarter turns so consecutive
/// rings interleave (no spoke of ring `q` aligns with one of ring `q±1`)
/// and no vertex lands on the cut ray.
fn ring_offset(q: usize) -> f64 {
    if q % 2 == 1 {
        0.25
    } else {
        0.75
    }
}

/// Unwrapped angles along a counterclockwise cycle around `center`; errors
/// unless the cycle winds exactly once.
fn unwrap_cycle(center: C64, ids: &[usize], verts: &[BaseVertex]) -> Result<Vec<f64>, MeshError> {
    let angle = |vid: usize| {
        let d = verts[vid].w - center;
        d.im.atan2(d.re)
    };
    let mut out = Vec::with_capacity(ids.len());
    let mut prev = angle(ids[0]);
    let mut acc = prev;
    out.push(acc);
    for &vid in &ids[1..] {
        let a = angle(vid);
        let mut step = a - prev;
        while step <= -std::f64::consts::PI {
            step += std::f64::consts::TAU;
        }
        while step > std::f64::consts::PI {
            step -= std::f64::consts::TAU;
        }
        acc += step;
        out.push(acc);
        prev = a;
    }
    // closing step back to the first vertex
    let mut close = out[0] - prev;
    while close <= -std::f64::consts::PI {
        close += std::f64::consts::TAU;
    }
    while close > std::f64::consts::PI {
        close -= std::f64::consts::TAU;
    }
    let winding = (acc + close - out[0]) / std::f64::consts::TAU;
    if (winding - 1.0).abs() > 1e-6 {
        return Err(MeshError::Degenerate(format!(
            "ring cycle winds {winding:.3} times around its center"
        )));
    }
    Ok(out)
}

/// Min-angle of a w-plane triangle; negative orientation maps to -∞.
fn w_triangle_quality(verts: &[BaseVertex], a: usize, b: usize, c: usize) -> f64 {
    let (wa, wb, wc) = (verts[a].w, verts[b].w, verts[c].w);
    let area2 = ((wb - wa).conj() * (wc - wa)).im;
    if area2 <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let (la, lb, lc) = ((wb - wc).norm(), (wc - wa).norm(), (wa - wb).norm());
    let mut min_angle = f64::INFINITY;
    for (opp, u, v) in [(la, lb, lc), (lb, lc, la), (lc, la, lb)] {
        let cosv = ((u * u + v * v - opp * opp) / (2.0 * u * v)).clamp(-1.0, 1.0);
        min_angle = min_angle.min(cosv.acos());
    }
    min_angle
}

/// Quality-improving edge flips restricted to the interior edges of one band
/// of faces (its boundary edges, shared with neighbors outside the band,
/// stay put). Runs until no flip improves the local minimum angle.
fn flip_band(faces: &mut [[usize; 3]], band: std::ops::Range<usize>, verts: &[BaseVertex]) {
    for _ in 0..30 {
        let mut edge_faces: std::collections::HashMap<(usize, usize), Vec<usize>> =
            std::collections::HashMap::new();
        for fid in band.clone() {
            let f = faces[fid];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edge_faces.entry((a.min(b), a.max(b))).or_default().push(fid);
            }
        }
        let mut flipped = false;
        let mut touched: std::collections::HashSet<usize> = std::collections::HashSet::new();
        let mut keys: Vec<(usize, usize)> = edge_faces.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let fs = &edge_faces[&key];
            if fs.len() != 2 || touched.contains(&fs[0]) || touched.contains(&fs[1]) {
                continue;
            }
            let (f1, f2) = (fs[0], fs[1]);
            let (u, v) = key;
            let has_dir = |f: [usize; 3], a: usize, b: usize| {
                (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b)
            };
            // face traversing u -> v keeps corner c; the other keeps d
            let (fc, fd) = if has_dir(faces[f1], u, v) {
                (f1, f2)
            } else {
                (f2, f1)
            };
            let c = faces[fc].iter().copied().find(|&x| x != u && x != v).unwrap();
            let d = faces[fd].iter().copied().find(|&x| x != u && x != v).unwrap();
            if c == d {
                continue;
            }
            let old_q = w_triangle_quality(verts, faces[f1][0], faces[f1][1], faces[f1][2])
                .min(w_triangle_quality(verts, faces[f2][0], faces[f2][1], faces[f2][2]));
            // flip the diagonal of the quad u -> d -> v -> c
            let t1 = [u, d, c];
            let t2 = [d, v, c];
            let new_q = w_triangle_quality(verts, t1[0], t1[1], t1[2])
                .min(w_triangle_quality(verts, t2[0], t2[1], t2[2]));
            if new_q > old_q + 1e-12 && new_q > 0.0 {
                faces[fc] = t1;
                faces[fd] = t2;
                touched.insert(f1);
                touched.insert(f2);
                flipped = true;
            }
        }
        if !flipped {
            break;
        }
    }
}

/// Merge two concentric counterclockwise vertex cycles into a band of
/// triangles, counterclockwise in `w`. Consecutive cycle vertices become the
/// band's boundary edges, so existing neighbors stay conforming.
fn zip_rings(
    center: C64,
    inner: &[usize],
    outer: &[usize],
    verts: &[BaseVertex],
    out_faces: &mut Vec<[usize; 3]>,
    out_regions: &mut Vec<FaceRegion>,
    region: FaceRegion,
) -> Result<(), MeshError> {
    let (n_in, n_out) = (inner.len(), outer.len());
    if n_in < 3 || n_out < 3 {
        return Err(MeshError::Degenerate(
            "zipper ring with fewer than 3 vertices".into(),
        ));
    }
    let band_start = out_faces.len();
    let inner_u = unwrap_cycle(center, inner, verts)?;
    let outer_u_raw = unwrap_cycle(center, outer, verts)?;
    // rotate the outer cycle so it starts just at or after the inner start
    let base = inner_u[0];
    let shifted: Vec<f64> = outer_u_raw
        .iter()
        .map(|&u| {
            let mut x = u - base;
            x -= (x / std::f64::consts::TAU).floor() * std::f64::consts::TAU;
            x + base
        })
        .collect();
    let o0 = shifted
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    // clean monotone unwrap of the rotated outer cycle
    let rotated: Vec<usize> = (0..n_out).map(|o| outer[(o0 + o) % n_out]).collect();
    let mut outer_mono = unwrap_cycle(center, &rotated, verts)?;
    let shift0 = {
        let mut x = outer_mono[0] - base;
        x -= (x / std::f64::consts::TAU).floor() * std::f64::consts::TAU;
        x + base - outer_mono[0]
    };
    for u in &mut outer_mono {
        *u += shift0;
    }
    let inner_at = |i: usize| {
        if i >= n_in {
            inner_u[i - n_in] + std::f64::consts::TAU
        } else {
            inner_u[i]
        }
    };
    let outer_at = |o: usize| {
        if o >= n_out {
            outer_mono[o - n_out] + std::f64::consts::TAU
        } else {
            outer_mono[o]
        }
    };
    // smallest corner angle of the flat w-triangle; inverted gets -∞
    let quality = |a: usize, b: usize, c: usize| -> f64 {
        let (wa, wb, wc) = (verts[a].w, verts[b].w, verts[c].w);
        let area2 = ((wb - wa).conj() * (wc - wa)).im;
        if area2 <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (la, lb, lc) = ((wb - wc).norm(), (wc - wa).norm(), (wa - wb).norm());
        let mut min_angle = f64::INFINITY;
        for (opp, u, v) in [(la, lb, lc), (lb, lc, la), (lc, la, lb)] {
            let cosv = ((u * u + v * v - opp * opp) / (2.0 * u * v)).clamp(-1.0, 1.0);
            min_angle = min_angle.min(cosv.acos());
        }
        min_angle
    };
    let mut i = 0usize;
    let mut o = 0usize;
    // angular comparison drives the interleave; triangle quality breaks
    // near-ties, which is where slivers would otherwise appear
    let tie_window = 0.6 * (std::f64::consts::TAU / n_in.max(n_out) as f64);
    while i < n_in || o < n_out {
        let advance_inner = if i >= n_in {
            false
        } else if o >= n_out {
            true
        } else if (inner_at(i + 1) - outer_at(o + 1)).abs() < tie_window {
            let q_in = quality(inner[i % n_in], rotated[o % n_out], inner[(i + 1) % n_in]);
            let q_out = quality(
                inner[i % n_in],
                rotated[o % n_out],
                rotated[(o + 1) % n_out],
            );
            q_in >= q_out
        } else {
            inner_at(i + 1) <= outer_at(o + 1)
        };
        if advance_inner {
            out_faces.push([inner[i % n_in], rotated[o % n_out], inner[(i + 1) % n_in]]);
            i += 1;
        } else {
            out_faces.push([
                inner[i % n_in],
                rotated[o % n_out],
                rotated[(o + 1) % n_out],
            ]);
            o += 1;
        }
        out_regions.push(region);
    }
    let band_end = out_faces.len();
    flip_band(out_faces, band_start..band_end, verts);
    Ok(())
}

pub struct BaseBuildInput<'a> {
    pub points: &'a [C64],
    pub core_radius: &'a [f64],
    pub resolution: Resolution,
}

/// Assembles the full base triangulation.
pub fn build_base(input: &BaseBuildInput) -> Result<BaseMesh, MeshError> {
    let res = input.resolution;
    let mut verts: Vec<BaseVertex> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut regions: Vec<FaceRegion> = Vec::new();

    // --- polar patches ------------------------------------------------
    let q_core = res.core_rings;
    let mut patches = Vec::new();
    for (j, (&p, &rho)) in input.points.iter().zip(input.core_radius).enumerate() {
        let edge_w = w_scale(p, ico_edge_radians(res.ico_level));
        let mut rings: Vec<Vec<usize>> = Vec::new();
        let center = verts.len();
        verts.push(BaseVertex {
            w: p,
            pos: to_sphere(p),
            kind: BaseVertexKind::BranchCenter { disk: j },
        });
        rings.push(vec![center]);
        let ray_dir = p.im.atan2(p.re);
        let mut radii: Vec<f64> = (1..=q_core)
            .map(|q| rho * (q as f64 / q_core as f64).powi(2))
            .collect();
        // annulus: grow the core spacing geometrically, capped near the
        // icosphere edge length, out to ~1.55 ρ
        let mut gap = rho * (2.0 * q_core as f64 - 1.0) / (q_core as f64).powi(2);
        let mut r = rho;
        while (r < 1.5 * rho || gap < 0.55 * edge_w) && r < 2.2 * rho {
            gap = (gap * 1.35).min(0.9 * edge_w);
            r += gap;
            radii.push(r);
            if radii.len() > q_core + 200 {
                return Err(MeshError::Degenerate(format!(
                    "annulus growth around branch point {j} does not terminate"
                )));
            }
        }
        // annulus rings widen their vertex count with the radius so the
        // spacing stays near the core's outermost spacing
        let annulus_spacing = 1.15 * std::f64::consts::TAU * rho / (3 * q_core) as f64;
        for (qi, &rq) in radii.iter().enumerate() {
            let q = qi + 1;
            let count = if q <= q_core {
                3 * q
            } else {
                (3 * q_core).max((std::f64::consts::TAU * rq / annulus_spacing).ceil() as usize)
            };
            let offset = ring_offset(q);
            let mut ring = Vec::with_capacity(count);
            for m in 0..count {
                let theta = ray_dir
                    + std::f64::consts::TAU * (m as f64 + offset) / count as f64;
                let w = p + C64::from_polar(rq, theta);
                ring.push(verts.len());
                verts.push(BaseVertex {
                    w,
                    pos: to_sphere(w),
                    kind: BaseVertexKind::Disk { disk: j, ring: q },
                });
            }
            rings.push(ring);
        }
        // fan around the center
        let r1 = &rings[1];
        for m in 0..r1.len() {
            faces.push([center, r1[m], r1[(m + 1) % r1.len()]]);
            regions.push(FaceRegion::DiskCore { disk: j });
        }
        // ring bands
        for q in 1..rings.len() - 1 {
            let region = if q < q_core {
                FaceRegion::DiskCore { disk: j }
            } else {
                FaceRegion::DiskAnnulus { disk: j }
            };
            zip_rings(
                p,
                &rings[q],
                &rings[q + 1],
                &verts,
                &mut faces,
                &mut regions,
                region,
            )?;
        }
        patches.push(Patch {
            core_rings: q_core,
            core_radius: rho,
            outer_radius: *radii.last().unwrap(),
            rings,
        });
    }

    // --- icosphere far field -------------------------------------------
    let (ico_verts, ico_faces) = icosphere(res.ico_level);
    let ico_edge = ico_edge_radians(res.ico_level);
    // removal radii in w units around each branch point
    let removal: Vec<f64> = patches
        .iter()
        .zip(input.points)
        .map(|(patch, &p)| patch.outer_radius + 0.55 * w_scale(p, ico_edge))
        .collect();
    for (j, &p) in input.points.iter().enumerate() {
        for (k, &q) in input.points.iter().enumerate() {
            if j < k && removal[j] + removal[k] + w_scale(p, ico_edge) >= (p - q).norm() {
                return Err(MeshError::Degenerate(format!(
                    "branch points {j} and {k} are too close for their patch radii"
                )));
            }
        }
    }
    let mut keep_map = vec![usize::MAX; ico_verts.len()];
    for (vid, &pos) in ico_verts.iter().enumerate() {
        if pos[2] > 1.0 - 1e-9 {
            return Err(MeshError::Degenerate(
                "icosphere vertex at the north pole; perturb the configuration".into(),
            ));
        }
        let w = from_sphere(pos);
        let removed = input
            .points
            .iter()
            .zip(&removal)
            .any(|(&p, &rm)| (w - p).norm() < rm);
        if !removed {
            keep_map[vid] = verts.len();
            verts.push(BaseVertex {
                w,
                pos,
                kind: BaseVertexKind::Sphere,
            });
        }
    }
    let mut kept_ico_faces: Vec<[usize; 3]> = Vec::new();
    for f in &ico_faces {
        if f.iter().all(|&v| keep_map[v] != usize::MAX) {
            // flip to the w-counterclockwise convention
            kept_ico_faces.push([keep_map[f[0]], keep_map[f[2]], keep_map[f[1]]]);
        }
    }

    // --- hole boundaries and zippers -------------------------------------
    // Extract one boundary cycle per hole, enlarging holes vertex by vertex
    // until every cycle is free of pinches and angularly monotone around its
    // branch point (backward steps would fold the zipper band).
    let mut extra_removed: std::collections::HashSet<usize> = std::collections::HashSet::new();
    let (kept_final, cycle_of_disk) = loop {
        let kept: Vec<[usize; 3]> = kept_ico_faces
            .iter()
            .copied()
            .filter(|f| f.iter().all(|v| !extra_removed.contains(v)))
            .collect();
        let mut edge_use: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        for f in &kept {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_use.entry(key).or_insert(0) += 1;
            }
        }
        // pinch: a vertex with two outgoing boundary edges
        let mut successor: std::collections::HashMap<usize, usize> =
            std::collections::HashMap::new();
        let mut pinched: Vec<usize> = Vec::new();
        for f in &kept {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if edge_use[&(a.min(b), a.max(b))] == 1 && successor.insert(a, b).is_some() {
                    pinched.push(a);
                }
            }
        }
        if !pinched.is_empty() {
            extra_removed.extend(pinched);
            if extra_removed.len() > verts.len() {
                return Err(MeshError::Degenerate("hole cleanup removed everything".into()));
            }
            continue;
        }
        let mut cycles: Vec<Vec<usize>> = Vec::new();
        let mut remaining = successor.clone();
        while let Some((&start, _)) = remaining.iter().min_by_key(|&(&k, _)| k) {
            let mut cycle = vec![start];
            let mut cur = remaining.remove(&start).unwrap();
            while cur != start {
                cycle.push(cur);
                cur = remaining.remove(&cur).ok_or_else(|| {
                    MeshError::Degenerate("hole boundary does not close into a cycle".into())
                })?;
            }
            cycle.reverse(); // clockwise around the hole -> counterclockwise
            cycles.push(cycle);
        }
        if cycles.len() != input.points.len() {
            return Err(MeshError::Degenerate(format!(
                "{} hole boundary cycles for {} branch points; holes merged or mesh too coarse",
                cycles.len(),
                input.points.len()
            )));
        }
        // claim each cycle for its branch point
        let mut claimed: Vec<Option<Vec<usize>>> = vec![None; input.points.len()];
        for cycle in cycles {
            let centroid_w: C64 =
                cycle.iter().map(|&v| verts[v].w).sum::<C64>() / cycle.len() as f64;
            let (j, _) = input
                .points
                .iter()
                .enumerate()
                .map(|(j, &p)| (j, (centroid_w - p).norm()))
                .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            if claimed[j].is_some() {
                return Err(MeshError::Degenerate(format!(
                    "two hole boundary cycles claim branch point {j}"
                )));
            }
            claimed[j] = Some(cycle);
        }
        // monotonicity: every angular step along a cycle must be decently
        // positive; offenders with the smaller radius get removed
        let mut offenders: Vec<usize> = Vec::new();
        for (j, cycle) in claimed.iter().enumerate() {
            let cycle = cycle.as_ref().unwrap();
            let p = input.points[j];
            let m = cycle.len();
            if m < 4 {
                return Err(MeshError::Degenerate(format!(
                    "hole boundary around branch point {j} has {m} vertices; refine the mesh"
                )));
            }
            let margin = 0.12 * std::f64::consts::TAU / m as f64;
            let angle = |vid: usize| {
                let d = verts[vid].w - p;
                d.im.atan2(d.re)
            };
            for k in 0..m {
                let (a, b) = (cycle[k], cycle[(k + 1) % m]);
                let mut step = angle(b) - angle(a);
                while step <= -std::f64::consts::PI {
                    step += std::f64::consts::TAU;
                }
                while step > std::f64::consts::PI {
                    step -= std::f64::consts::TAU;
                }
                if step < margin {
                    let ra = (verts[a].w - p).norm();
                    let rb = (verts[b].w - p).norm();
                    offenders.push(if ra <= rb { a } else { b });
                }
            }
        }
        if offenders.is_empty() {
            break (kept, claimed);
        }
        extra_removed.extend(offenders);
    };
    let kept_ico_faces = kept_final;
    for (j, cycle) in cycle_of_disk.iter().enumerate() {
        let cycle = cycle.as_ref().unwrap();
        let outer_ring = patches[j].rings.last().unwrap();
        zip_rings(
            input.points[j],
            outer_ring,
            cycle,
            &verts,
            &mut faces,
            &mut regions,
            FaceRegion::Zipper { disk: j },
        )?;
    }
    for f in kept_ico_faces {
        faces.push(f);
        regions.push(FaceRegion::Sphere);
    }

    let mut mesh = BaseMesh {
        verts,
        faces,
        regions,
        edges: Vec::new(),
        face_edges: Vec::new(),
        fans: Vec::new(),
        core_radius: patches.iter().map(|p| p.core_radius).collect(),
        rings_core: patches.iter().map(|p| p.core_rings).collect(),
        outer_radius: patches.iter().map(|p| p.outer_radius).collect(),
    };
    mesh.build_adjacency()?;
    mesh.validate_orientation()?;
    Ok(mesh)
}

impl BaseMesh {
    fn build_adjacency(&mut self) -> Result<(), MeshError> {
        let mut edge_ids: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut edges: Vec<BaseEdge> = Vec::new();
        let mut face_edges = vec![[usize::MAX; 3]; self.faces.len()];
        for (fid, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                // edge opposite corner k
                let (a, b) = (f[(k + 1) % 3], f[(k + 2) % 3]);
                let key = (a.min(b), a.max(b));
                let eid = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(BaseEdge {
                        verts: [key.0, key.1],
                        faces: [usize::MAX; 2],
                    });
                    edges.len() - 1
                });
                let e = &mut edges[eid];
                if e.faces[0] == usize::MAX {
                    e.faces[0] = fid;
                } else if e.faces[1] == usize::MAX {
                    e.faces[1] = fid;
                } else {
                    return Err(MeshError::Degenerate(format!(
                        "edge {key:?} bounds more than two faces"
                    )));
                }
                face_edges[fid][k] = eid;
            }
        }
        for (eid, e) in edges.iter().enumerate() {
            if e.faces[1] == usize::MAX {
                return Err(MeshError::Degenerate(format!(
                    "edge {eid} ({:?}) is open; the surface must be closed",
                    e.verts
                )));
            }
        }
        // counterclockwise fans: from face f at vertex v, the next face
        // shares the edge (v, previous corner of f)
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); self.verts.len()];
        for (fid, f) in self.faces.iter().enumerate() {
            for &v in f {
                incident[v].push(fid);
            }
        }
        let mut fans = Vec::with_capacity(self.verts.len());
        for v in 0..self.verts.len() {
            let degree = incident[v].len();
            if degree < 3 {
                return Err(MeshError::Degenerate(format!(
                    "vertex {v} has degree {degree}"
                )));
            }
            let start = incident[v][0];
            let mut fan = vec![start];
            let mut current = start;
            loop {
                let f = &self.faces[current];
                let i = f.iter().position(|&x| x == v).unwrap();
                let prev = f[(i + 2) % 3];
                let key = (v.min(prev), v.max(prev));
                let eid = edge_ids[&key];
                let e = &edges[eid];
                let next = if e.faces[0] == current {
                    e.faces[1]
                } else {
                    e.faces[0]
                };
                if next == start {
                    break;
                }
                fan.push(next);
                current = next;
                if fan.len() > degree {
                    return Err(MeshError::Degenerate(format!(
                        "vertex {v} fan does not close"
                    )));
                }
            }
            if fan.len() != degree {
                return Err(MeshError::Degenerate(format!(
                    "vertex {v} fan covers {} of {degree} faces",
                    fan.len()
                )));
            }
            fans.push(fan);
        }
        self.edges = edges;
        self.face_edges = face_edges;
        self.fans = fans;
        Ok(())
    }

    fn validate_orientation(&self) -> Result<(), MeshError> {
        // Every face counterclockwise in w <=> negative triple product, and
        // neighbors traverse shared edges in opposite directions.
        for (fid, f) in self.faces.iter().enumerate() {
            let (a, b, c) = (
                self.verts[f[0]].pos,
                self.verts[f[1]].pos,
                self.verts[f[2]].pos,
            );
            let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]);
            if det >= 0.0 {
                return Err(MeshError::Degenerate(format!(
                    "face {fid} ({:?}, verts {:?} at {:?}) has inconsistent orientation (det {det:e})",
                    self.regions[fid],
                    f,
                    [self.verts[f[0]].w, self.verts[f[1]].w, self.verts[f[2]].w],
                )));
            }
        }
        let mut directed: std::collections::HashSet<(usize, usize)> =
            std::collections::HashSet::new();
        for f in &self.faces {
            for k in 0..3 {
                if !directed.insert((f[k], f[(k + 1) % 3])) {
                    return Err(MeshError::Degenerate(
                        "duplicate directed edge; orientation broken".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.verts.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        let (v, f) = icosphere(0);
        assert_eq!((v.len(), f.len()), (12, 20));
        let (v, f) = icosphere(3);
        assert_eq!(f.len(), 20 * 64);
        assert_eq!(v.len() as i64 - (f.len() as i64 * 3 / 2) + f.len() as i64, 2);
    }

    fn hexagon() -> Vec<C64> {
        (0..6)
            .map(|j| C64::from_polar(1.0, std::f64::consts::PI / 3.0 * j as f64))
            .collect()
    }

    #[test]
    fn base_mesh_is_a_sphere() {
        for refinement in [0usize, 1] {
            let pts = hexagon();
            let rho = vec![1.0 / 7.0; 6];
            let mesh = build_base(&BaseBuildInput {
                points: &pts,
                core_radius: &rho,
                resolution: Resolution::from_refinement(refinement),
            })
            .unwrap();
            assert_eq!(mesh.euler_characteristic(), 2, "refinement {refinement}");
        }
    }

    #[test]
    fn base_mesh_four_points() {
        let pts: Vec<C64> = (0..4)
            .map(|j| C64::from_polar(1.0, std::f64::consts::FRAC_PI_2 * j as f64 + 0.35))
            .collect();
        let rho = vec![std::f64::consts::SQRT_2 / 7.0; 4];
        let mesh = build_base(&BaseBuildInput {
            points: &pts,
            core_radius: &rho,
            resolution: Resolution::from_refinement(1),
        })
        .unwrap();
        assert_eq!(mesh.euler_characteristic(), 2);
    }

    #[test]
    fn too_close_points_rejected() {
        let pts = vec![C64::new(1.0, 0.0), C64::new(1.05, 0.0)];
        let rho = vec![0.2; 2];
        let err = build_base(&BaseBuildInput {
            points: &pts,
            core_radius: &rho,
            resolution: Resolution::from_refinement(0),
        });
        assert!(err.is_err());
    }
}
