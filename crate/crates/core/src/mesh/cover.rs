//! The n-sheeted branched cover of the base triangulation.
//!
//! Sheets are trivialized over the complement of a system of cut rays, one
//! per branch point, running radially from the branch point to the north
//! pole (the common base point of the cut tree). Crossing the ray of branch
//! point `j` permutes sheet labels by its transposition `τ_j`; every face
//! adjacency carries the ordered product of the rays its dual segment
//! crosses. Cover vertices are orbits of the holonomy around each base
//! vertex, which doubles the fan exactly at the ramification points.

use crate::covering::{MonodromyDatum, Permutation};
use crate::sphere::{cross3, dot3, normalize3, to_sphere};
use crate::C64;

use super::base::{BaseMesh, BaseVertexKind, FaceRegion};
use super::MeshError;

pub const MAX_SHEETS: usize = 8;

/// Permutation of sheet labels `0..n`, inline storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SheetMap {
    pub n: u8,
    m: [u8; MAX_SHEETS],
}

impl SheetMap {
    pub fn identity(n: usize) -> Self {
        let mut m = [0u8; MAX_SHEETS];
        for (i, v) in m.iter_mut().enumerate() {
            *v = i as u8;
        }
        SheetMap { n: n as u8, m }
    }

    pub fn from_permutation(p: &Permutation) -> Self {
        let mut s = Self::identity(p.degree());
        for i in 0..p.degree() {
            s.m[i] = p.apply0(i) as u8;
        }
        s
    }

    pub fn to_permutation(self) -> Permutation {
        Permutation::from_one_line(
            &(0..self.n as usize)
                .map(|i| self.m[i] as usize + 1)
                .collect::<Vec<_>>(),
        )
        .expect("sheet map is a bijection")
    }

    #[inline]
    pub fn apply(&self, s: u8) -> u8 {
        self.m[s as usize]
    }

    /// `self` first, `next` second.
    pub fn then(&self, next: &SheetMap) -> SheetMap {
        let mut out = *self;
        for i in 0..self.n as usize {
            out.m[i] = next.m[self.m[i] as usize];
        }
        out
    }

    pub fn inverse(&self) -> SheetMap {
        let mut out = *self;
        for i in 0..self.n as usize {
            out.m[self.m[i] as usize] = i as u8;
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        (0..self.n as usize).all(|i| self.m[i] == i as u8)
    }
}

/// Great-circle cut ray from a branch point to the north pole, radially
/// outward in the `w`-chart.
#[derive(Debug, Clone)]
pub struct CutRay {
    pub origin: [f64; 3],
    /// unit normal of the great-circle plane
    pub normal: [f64; 3],
    /// unit tangent at the origin pointing along the ray
    pub tangent: [f64; 3],
    /// arc length in radians from branch point to the pole
    pub arc: f64,
}

pub fn make_rays(points: &[C64]) -> Result<Vec<CutRay>, MeshError> {
    const NORTH: [f64; 3] = [0.0, 0.0, 1.0];
    points
        .iter()
        .map(|&p| {
            let origin = to_sphere(p);
            let raw_normal = cross3(origin, NORTH);
            let sin_arc = dot3(raw_normal, raw_normal).sqrt();
            if sin_arc < 1e-8 {
                return Err(MeshError::Degenerate(format!(
                    "branch point {p} is too close to 0 or ∞ for a radial cut"
                )));
            }
            let normal = normalize3(raw_normal);
            let tangent = normalize3([
                NORTH[0] - origin[0] * origin[2],
                NORTH[1] - origin[1] * origin[2],
                NORTH[2] - origin[2] * origin[2],
            ]);
            let arc = dot3(origin, NORTH).clamp(-1.0, 1.0).acos();
            Ok(CutRay {
                origin,
                normal,
                tangent,
                arc,
            })
        })
        .collect()
}

/// Crossing parameter of segment `[a, b]` with the ray, if any.
fn crossing(ray: &CutRay, a: [f64; 3], b: [f64; 3]) -> Result<Option<f64>, MeshError> {
    let da = dot3(a, ray.normal);
    let db = dot3(b, ray.normal);
    if da == 0.0 || db == 0.0 {
        return Err(MeshError::Degenerate(
            "dual segment touches a cut plane exactly; perturb the configuration".into(),
        ));
    }
    if da.signum() == db.signum() {
        return Ok(None);
    }
    let t = da / (da - db);
    let x = [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ];
    let u = dot3(x, ray.origin);
    let v = dot3(x, ray.tangent);
    let phi = v.atan2(u);
    if phi <= 0.0 || phi >= ray.arc {
        return Ok(None);
    }
    Ok(Some(t))
}

/// Sheet transition along the straight path `a -> b`: ordered product of the
/// crossed cut transpositions.
pub fn path_transition(
    rays: &[CutRay],
    taus: &[SheetMap],
    n: usize,
    a: [f64; 3],
    b: [f64; 3],
) -> Result<SheetMap, MeshError> {
    let mut crossings: Vec<(f64, usize)> = Vec::new();
    for (j, ray) in rays.iter().enumerate() {
        if let Some(t) = crossing(ray, a, b)? {
            crossings.push((t, j));
        }
    }
    crossings.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut g = SheetMap::identity(n);
    for &(_, j) in &crossings {
        g = g.then(&taus[j]);
    }
    Ok(g)
}

/// Vertices and faces with `|w|` beyond this radius use the reciprocal
/// far-field chart `w' = 1/w`, which stays regular through the north pole.
pub const POLE_CHART_RADIUS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    W,
    /// reciprocal chart `w' = 1/w` around the north pole
    WInf,
    Z { disk: usize },
}

#[derive(Debug, Clone)]
pub struct CoverVertex {
    pub base: usize,
    /// least sheet label of the holonomy orbit, anchored at the first fan face
    pub anchor: u8,
    pub orbit_size: u8,
    pub chart: Chart,
    /// z-chart coordinate; meaningful only when `chart` is `Z`
    pub z: C64,
}

#[derive(Debug, Clone)]
pub struct CoverFace {
    pub base: usize,
    pub sheet: u8,
    pub verts: [usize; 3],
    pub chart: Chart,
}

#[derive(Debug, Clone)]
pub struct CoverEdge {
    pub verts: [usize; 2],
    pub faces: [usize; 2],
    pub base: usize,
    /// sheet label on the side of the base edge's first face
    pub sheet: u8,
}

#[derive(Debug, Clone)]
pub struct CoverTopology {
    pub n_sheets: usize,
    pub verts: Vec<CoverVertex>,
    pub faces: Vec<CoverFace>,
    pub edges: Vec<CoverEdge>,
    /// edge opposite each corner of each cover face
    pub face_edges: Vec<[usize; 3]>,
    /// ramification cover-vertex per branch point
    pub ram_verts: Vec<usize>,
    /// transition across each base edge, oriented faces[0] -> faces[1]
    pub transitions: Vec<SheetMap>,
    /// holonomy around each base vertex, anchored at its first fan face
    pub vertex_holonomy: Vec<SheetMap>,
    /// per base vertex, per fan position: inverse prefix transition
    pub fan_prefix_inv: Vec<Vec<SheetMap>>,
    /// per base vertex: cover vertex id for each orbit representative
    pub lift_of: Vec<[u32; MAX_SHEETS]>,
    pub rays: Vec<CutRay>,
    /// sheet support pair of each branch transposition
    pub disk_sheets: Vec<(u8, u8)>,
}

fn barycenter(base: &BaseMesh, f: usize) -> [f64; 3] {
    let [a, b, c] = base.faces[f];
    let (pa, pb, pc) = (base.verts[a].pos, base.verts[b].pos, base.verts[c].pos);
    [
        (pa[0] + pb[0] + pc[0]) / 3.0,
        (pa[1] + pb[1] + pc[1]) / 3.0,
        (pa[2] + pb[2] + pc[2]) / 3.0,
    ]
}

fn orbit_rep(h: &SheetMap, s: u8) -> (u8, u8) {
    let mut rep = s;
    let mut size = 1u8;
    let mut cur = h.apply(s);
    while cur != s {
        rep = rep.min(cur);
        size += 1;
        cur = h.apply(cur);
    }
    (rep, size)
}

impl CoverTopology {
    /// Cover vertex at a corner of the lifted face `(base_face, sheet)`.
    pub fn corner_vertex(&self, base: &BaseMesh, face: usize, corner: usize, sheet: u8) -> usize {
        let v = base.faces[face][corner];
        let pos = base.fans[v]
            .iter()
            .position(|&f| f == face)
            .expect("face is in the fan of its corners");
        let anchor = self.fan_prefix_inv[v][pos].apply(sheet);
        let (rep, _) = orbit_rep(&self.vertex_holonomy[v], anchor);
        self.lift_of[v][rep as usize] as usize
    }

    /// Transition from face `from` to its neighbor across base edge `e`.
    pub fn edge_transition(&self, base: &BaseMesh, e: usize, from: usize) -> SheetMap {
        if base.edges[e].faces[0] == from {
            self.transitions[e]
        } else {
            self.transitions[e].inverse()
        }
    }
}

pub fn build_cover_topology(
    base: &BaseMesh,
    datum: &MonodromyDatum,
    points: &[C64],
) -> Result<CoverTopology, MeshError> {
    let n = datum.degree;
    if n < 2 || n > MAX_SHEETS {
        return Err(MeshError::BadConfiguration(format!(
            "sheet count {n} outside the supported range 2..={MAX_SHEETS}"
        )));
    }
    let rays = make_rays(points)?;
    let taus: Vec<SheetMap> = datum
        .transpositions
        .iter()
        .map(SheetMap::from_permutation)
        .collect();
    let disk_sheets: Vec<(u8, u8)> = datum
        .transpositions
        .iter()
        .map(|t| {
            let s = t.support();
            ((s[0] - 1) as u8, (s[1] - 1) as u8)
        })
        .collect();

    // --- edge transitions -------------------------------------------------
    let mut transitions = Vec::with_capacity(base.edges.len());
    for e in &base.edges {
        let a = barycenter(base, e.faces[0]);
        let b = barycenter(base, e.faces[1]);
        transitions.push(path_transition(&rays, &taus, n, a, b)?);
    }

    // --- per-vertex holonomy and fan prefixes ------------------------------
    let mut vertex_holonomy = Vec::with_capacity(base.verts.len());
    let mut fan_prefix_inv = Vec::with_capacity(base.verts.len());
    for (v, fan) in base.fans.iter().enumerate() {
        let mut prefix = SheetMap::identity(n);
        let mut inv_list = Vec::with_capacity(fan.len());
        inv_list.push(prefix.inverse());
        for k in 0..fan.len() {
            let (fa, fb) = (fan[k], fan[(k + 1) % fan.len()]);
            // shared edge between consecutive fan faces at v
            let eid = base.face_edges[fa]
                .iter()
                .copied()
                .find(|&e| base.edges[e].faces.contains(&fb) && base.edges[e].verts.contains(&v))
                .ok_or_else(|| {
                    MeshError::Degenerate(format!("fan of vertex {v} is not edge-connected"))
                })?;
            let g = if base.edges[eid].faces[0] == fa {
                transitions[eid]
            } else {
                transitions[eid].inverse()
            };
            prefix = prefix.then(&g);
            if k + 1 < fan.len() {
                inv_list.push(prefix.inverse());
            }
        }
        let holonomy = prefix;
        // sanity: identity away from branch points, τ_j at branch point j
        match base.verts[v].kind {
            BaseVertexKind::BranchCenter { disk } => {
                if holonomy != taus[disk] {
                    return Err(MeshError::Monodromy(format!(
                        "holonomy at branch point {disk} is {}, expected {}",
                        holonomy.to_permutation(),
                        datum.transpositions[disk]
                    )));
                }
            }
            _ => {
                if !holonomy.is_identity() {
                    return Err(MeshError::Monodromy(format!(
                        "nontrivial holonomy {} at regular vertex {v}; \
                         cut system and datum are inconsistent",
                        holonomy.to_permutation()
                    )));
                }
            }
        }
        vertex_holonomy.push(holonomy);
        fan_prefix_inv.push(inv_list);
    }

    // --- cover vertices -----------------------------------------------------
    let mut verts: Vec<CoverVertex> = Vec::new();
    let mut lift_of = vec![[u32::MAX; MAX_SHEETS]; base.verts.len()];
    let mut ram_verts = vec![usize::MAX; points.len()];
    for v in 0..base.verts.len() {
        let h = &vertex_holonomy[v];
        for s in 0..n as u8 {
            let (rep, size) = orbit_rep(h, s);
            if rep != s {
                continue;
            }
            let id = verts.len();
            lift_of[v][s as usize] = id as u32;
            if size == 2 {
                let BaseVertexKind::BranchCenter { disk } = base.verts[v].kind else {
                    return Err(MeshError::Monodromy(format!(
                        "holonomy orbit of size 2 at non-branch vertex {v}"
                    )));
                };
                ram_verts[disk] = id;
            }
            verts.push(CoverVertex {
                base: v,
                anchor: s,
                orbit_size: size,
                chart: Chart::W,
                z: C64::new(0.0, 0.0),
            });
        }
    }
    for (j, &rv) in ram_verts.iter().enumerate() {
        if rv == usize::MAX {
            return Err(MeshError::Monodromy(format!(
                "branch point {j} has no ramification vertex"
            )));
        }
    }

    // --- cover faces --------------------------------------------------------
    let mut topo = CoverTopology {
        n_sheets: n,
        verts,
        faces: Vec::with_capacity(base.faces.len() * n),
        edges: Vec::new(),
        face_edges: Vec::new(),
        ram_verts,
        transitions,
        vertex_holonomy,
        fan_prefix_inv,
        lift_of,
        rays,
        disk_sheets,
    };
    let far_face: Vec<bool> = (0..base.faces.len())
        .map(|f| {
            base.regions[f] == FaceRegion::Sphere
                && base.faces[f]
                    .iter()
                    .all(|&v| base.verts[v].w.norm() > POLE_CHART_RADIUS)
        })
        .collect();
    for f in 0..base.faces.len() {
        let region = base.regions[f];
        for s in 0..n as u8 {
            let chart = match region {
                FaceRegion::DiskCore { disk } => {
                    let (a, b) = topo.disk_sheets[disk];
                    if s == a || s == b {
                        Chart::Z { disk }
                    } else {
                        Chart::W
                    }
                }
                _ if far_face[f] => Chart::WInf,
                _ => Chart::W,
            };
            let verts = [
                topo.corner_vertex(base, f, 0, s),
                topo.corner_vertex(base, f, 1, s),
                topo.corner_vertex(base, f, 2, s),
            ];
            topo.faces.push(CoverFace {
                base: f,
                sheet: s,
                verts,
                chart,
            });
        }
    }

    // --- cover edges ----------------------------------------------------------
    // cover face id = base_face * n + sheet
    let mut face_edges = vec![[usize::MAX; 3]; topo.faces.len()];
    for (eid, e) in base.edges.iter().enumerate() {
        let g = topo.transitions[eid];
        for s in 0..n as u8 {
            let f0 = e.faces[0] * n + s as usize;
            let f1 = e.faces[1] * n + g.apply(s) as usize;
            // endpoints, resolved on the f0 side
            let base_f0 = e.faces[0];
            let corner_of = |vid: usize| {
                base.faces[base_f0]
                    .iter()
                    .position(|&x| x == vid)
                    .expect("edge endpoint belongs to its face")
            };
            let va = topo.corner_vertex(base, base_f0, corner_of(e.verts[0]), s);
            let vb = topo.corner_vertex(base, base_f0, corner_of(e.verts[1]), s);
            topo.edges.push(CoverEdge {
                verts: [va, vb],
                faces: [f0, f1],
                base: eid,
                sheet: s,
            });
            for (fid, base_fid) in [(f0, e.faces[0]), (f1, e.faces[1])] {
                let slot = base.face_edges[base_fid]
                    .iter()
                    .position(|&x| x == eid)
                    .expect("edge belongs to face");
                if face_edges[fid][slot] != usize::MAX {
                    return Err(MeshError::Monodromy(format!(
                        "cover face {fid} reached twice across base edge {eid}"
                    )));
                }
                face_edges[fid][slot] = eid * n + s as usize;
            }
        }
    }
    if face_edges.iter().flatten().any(|&x| x == usize::MAX) {
        return Err(MeshError::Monodromy(
            "cover face with unresolved edge".into(),
        ));
    }
    topo.face_edges = face_edges;

    assign_vertex_charts(base, &mut topo)?;
    assign_z_coordinates(base, points, &mut topo)?;
    Ok(topo)
}

/// Vertices of the branched pair over each disk core live in that disk's
/// z-chart; far-field vertices whose whole fan is beyond the pole radius use
/// the reciprocal chart; everything else stays in the w-chart.
fn assign_vertex_charts(base: &BaseMesh, topo: &mut CoverTopology) -> Result<(), MeshError> {
    let core = |v: usize| -> Option<usize> {
        match base.verts[v].kind {
            BaseVertexKind::BranchCenter { disk } => Some(disk),
            BaseVertexKind::Disk { disk, ring } if ring <= base.rings_core[disk] => Some(disk),
            _ => None,
        }
    };
    let far_fan: Vec<bool> = (0..base.verts.len())
        .map(|v| {
            base.fans[v].iter().all(|&f| {
                base.regions[f] == FaceRegion::Sphere
                    && base.faces[f]
                        .iter()
                        .all(|&u| base.verts[u].w.norm() > POLE_CHART_RADIUS)
            })
        })
        .collect();
    for cv in &mut topo.verts {
        if let Some(disk) = core(cv.base) {
            let (a, b) = topo.disk_sheets[disk];
            if cv.anchor == a || cv.anchor == b || cv.orbit_size == 2 {
                cv.chart = Chart::Z { disk };
            }
        } else if far_fan[cv.base] {
            cv.chart = Chart::WInf;
        }
    }
    Ok(())
}

/// Continuous branch of `√(w - p)` over the two branched sheets of each
/// disk core, propagated face to face by angular continuity.
fn assign_z_coordinates(
    base: &BaseMesh,
    points: &[C64],
    topo: &mut CoverTopology,
) -> Result<(), MeshError> {
    for (disk, &p) in points.iter().enumerate() {
        // collect z-chart faces of this disk
        let face_ids: Vec<usize> = (0..topo.faces.len())
            .filter(|&fid| topo.faces[fid].chart == Chart::Z { disk })
            .collect();
        if face_ids.is_empty() {
            return Err(MeshError::Monodromy(format!(
                "disk {disk} has no z-chart faces"
            )));
        }
        let mut assigned: std::collections::HashMap<usize, C64> = std::collections::HashMap::new();
        assigned.insert(topo.ram_verts[disk], C64::new(0.0, 0.0));

        // deterministic seed: the lowest z-face id; anchor its first
        // non-center corner on the principal branch
        let mut queue = std::collections::VecDeque::new();
        let in_disk: std::collections::HashSet<usize> = face_ids.iter().copied().collect();
        let mut visited: std::collections::HashSet<usize> = std::collections::HashSet::new();
        queue.push_back(face_ids[0]);
        visited.insert(face_ids[0]);
        while let Some(fid) = queue.pop_front() {
            let face = topo.faces[fid].clone();
            // assign any unassigned corners
            // reference: an assigned corner with z != 0 if available
            let mut reference: Option<C64> = face
                .verts
                .iter()
                .filter_map(|&cv| assigned.get(&cv).copied())
                .find(|z| z.norm() > 0.0);
            for &cv in &face.verts {
                if assigned.contains_key(&cv) {
                    continue;
                }
                let w = base.verts[topo.verts[cv].base].w;
                let principal = (w - p).sqrt();
                let z = match reference {
                    None => principal,
                    Some(zr) => {
                        // pick the branch angularly closest to the reference
                        let d1 = (principal / zr).arg().abs();
                        let d2 = (-principal / zr).arg().abs();
                        if d1 <= d2 {
                            principal
                        } else {
                            -principal
                        }
                    }
                };
                assigned.insert(cv, z);
                if z.norm() > 0.0 && reference.is_none() {
                    reference = Some(z);
                }
            }
            // enqueue z-chart neighbors
            for k in 0..3 {
                let eid = topo.face_edges[fid][k];
                let e = &topo.edges[eid];
                let other = if e.faces[0] == fid {
                    e.faces[1]
                } else {
                    e.faces[0]
                };
                if in_disk.contains(&other) && visited.insert(other) {
                    queue.push_back(other);
                }
            }
        }
        // write back and validate
        for (&cv, &z) in &assigned {
            let vert = &mut topo.verts[cv];
            if vert.chart != (Chart::Z { disk }) {
                return Err(MeshError::Monodromy(format!(
                    "z-assignment reached vertex {cv} outside disk {disk}"
                )));
            }
            let w = base.verts[vert.base].w;
            if (z * z + p - w).norm() > 1e-9 * (1.0 + w.norm()) {
                return Err(MeshError::Monodromy(format!(
                    "z-coordinate of vertex {cv} does not square to w"
                )));
            }
            vert.z = z;
        }
        // every z-chart vertex of this disk must be assigned
        for (vid, cv) in topo.verts.iter().enumerate() {
            if cv.chart == (Chart::Z { disk }) && !assigned.contains_key(&vid) {
                return Err(MeshError::Monodromy(format!(
                    "z-chart vertex {vid} of disk {disk} was not reached"
                )));
            }
        }
        // orientation: lifted faces must stay counterclockwise in z
        for &fid in &face_ids {
            let f = &topo.faces[fid];
            let z: Vec<C64> = f.verts.iter().map(|&cv| topo.verts[cv].z).collect();
            let area2 = ((z[1] - z[0]).conj() * (z[2] - z[0])).im;
            if area2 <= 0.0 {
                return Err(MeshError::Monodromy(format!(
                    "z-lift of face {fid} is degenerate or flipped"
                )));
            }
            // all corners distinct
            if (z[0] - z[1]).norm() == 0.0
                || (z[1] - z[2]).norm() == 0.0
                || (z[2] - z[0]).norm() == 0.0
            {
                return Err(MeshError::Monodromy(format!(
                    "z-lift of face {fid} collapses an edge"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sheet_map_algebra() {
        let t12 = SheetMap::from_permutation(&Permutation::transposition(3, 1, 2).unwrap());
        let t13 = SheetMap::from_permutation(&Permutation::transposition(3, 1, 3).unwrap());
        // "t12 then t13" sends 0 -> 1 -> 1_then: apply t12 first: 0->1, then t13: 1->1
        let c = t12.then(&t13);
        assert_eq!(c.apply(0), 1);
        assert_eq!(c.apply(1), 2);
        assert_eq!(c.apply(2), 0);
        assert!(c.then(&c.inverse()).is_identity());
    }
}
