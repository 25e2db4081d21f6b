//! Triangulated model of an n-sheeted simple branched cover of the sphere
//! with its pulled-back round background geometry and cone vertices at the
//! ramification points.

mod base;
mod cover;
mod geometry;

pub use base::{BaseMesh, BaseVertex, BaseVertexKind, FaceRegion, Resolution};
pub use cover::{Chart, CoverEdge, CoverFace, CoverTopology, CoverVertex, CutRay, SheetMap};
pub use geometry::{
    assemble_operators, background_geometry, blend_profile, chart_data, operators_for_motion,
    vertex_velocities, BackgroundGeometry, ChartData, DiscreteOperators, Motion,
};

use serde::Serialize;
use thiserror::Error;

use crate::covering::{CoveringError, MonodromyDatum, Permutation};
use crate::sphere::{cross3, dot3, to_sphere};
use crate::C64;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid branch configuration: {0}")]
    BadConfiguration(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("monodromy/gluing inconsistency: {0}")]
    Monodromy(String),
    #[error(transparent)]
    Covering(#[from] CoveringError),
}

/// Branch points on the sphere with the monodromy datum assigning a
/// transposition to each, and the (radial) cut system implied by them.
///
/// Geometric preconditions, all validated: points are finite, away from
/// `0` and `∞`, have pairwise distinct arguments, their cyclic angular
/// order matches the datum order, and the minimum pairwise distance exceeds
/// four disk radii.
#[derive(Debug, Clone)]
pub struct BranchConfiguration {
    pub points: Vec<C64>,
    pub datum: MonodromyDatum,
    /// multiplies the default ramification-disk radius
    pub radius_scale: f64,
}

impl BranchConfiguration {
    pub fn new(points: Vec<C64>, datum: MonodromyDatum) -> Result<Self, MeshError> {
        let config = BranchConfiguration {
            points,
            datum,
            radius_scale: 1.0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_radius_scale(mut self, scale: f64) -> Result<Self, MeshError> {
        self.radius_scale = scale;
        self.validate()?;
        Ok(self)
    }

    /// Branch points at the b-th roots of unity, in datum order.
    pub fn regular_polygon(datum: MonodromyDatum) -> Result<Self, MeshError> {
        let b = datum.branch_count();
        let points = (0..b)
            .map(|j| C64::from_polar(1.0, std::f64::consts::TAU * j as f64 / b as f64))
            .collect();
        Self::new(points, datum)
    }

    pub fn branch_count(&self) -> usize {
        self.points.len()
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (i, &p) in self.points.iter().enumerate() {
            for &q in &self.points[i + 1..] {
                d = d.min((p - q).norm());
            }
        }
        d
    }

    /// Ramification-disk radius (in `w` units) for each branch point.
    pub fn disk_radii(&self) -> Vec<f64> {
        let d_min = self.min_pairwise_distance();
        self.points
            .iter()
            .map(|p| self.radius_scale * (d_min / 7.0).min(0.35 * p.norm()).min(0.45))
            .collect()
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        self.datum
            .validate()
            .map_err(|issue| MeshError::BadConfiguration(format!("datum: {issue}")))?;
        if self.datum.base_genus != 0 {
            return Err(MeshError::BadConfiguration(
                "numerics support base genus 0 only".into(),
            ));
        }
        if self.points.len() != self.datum.branch_count() {
            return Err(MeshError::BadConfiguration(format!(
                "{} points but {} transpositions",
                self.points.len(),
                self.datum.branch_count()
            )));
        }
        if !(self.radius_scale > 0.0 && self.radius_scale <= 1.5) {
            return Err(MeshError::BadConfiguration(
                "radius_scale must lie in (0, 1.5]".into(),
            ));
        }
        for (j, p) in self.points.iter().enumerate() {
            if !p.re.is_finite() || !p.im.is_finite() {
                return Err(MeshError::BadConfiguration(format!(
                    "branch point {j} is not finite"
                )));
            }
            let r = p.norm();
            if !(0.05..=3.0).contains(&r) {
                return Err(MeshError::BadConfiguration(format!(
                    "branch point {j} has |w| = {r:.3}; supported range is [0.05, 3] \
                     (rotate the configuration away from 0 and ∞)"
                )));
            }
        }
        // pairwise distinct arguments, for disjoint radial cuts
        let mut args: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(j, p)| (p.im.atan2(p.re), j))
            .collect();
        args.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let b = args.len();
        for k in 0..b {
            let gap = if k + 1 < b {
                args[k + 1].0 - args[k].0
            } else {
                args[0].0 + std::f64::consts::TAU - args[k].0
            };
            if gap < 1e-4 {
                return Err(MeshError::BadConfiguration(
                    "two branch points share their argument; radial cuts would collide".into(),
                ));
            }
        }
        // cyclic angular order must match the datum order (up to rotation
        // and orientation), or the cut-system monodromy cannot close up
        let order: Vec<usize> = args.iter().map(|&(_, j)| j).collect();
        if !cyclic_order_compatible(&order) {
            return Err(MeshError::BadConfiguration(
                "branch points must be listed in cyclic angular order (either orientation); \
                 reorder points and transpositions together"
                    .into(),
            ));
        }
        let radii = self.disk_radii();
        let max_r = radii.iter().cloned().fold(0.0, f64::max);
        if self.min_pairwise_distance() <= 4.0 * max_r {
            return Err(MeshError::BadConfiguration(format!(
                "minimum pairwise branch distance {:.4} must exceed 4 x disk radius {:.4}",
                self.min_pairwise_distance(),
                max_r
            )));
        }
        Ok(())
    }
}

fn cyclic_order_compatible(order: &[usize]) -> bool {
    let b = order.len();
    if b <= 2 {
        return true;
    }
    let start = order.iter().position(|&j| j == 0).unwrap();
    let forward = (0..b).all(|k| order[(start + k) % b] == k);
    let backward = (0..b).all(|k| order[(start + b - k % b) % b] == k % b);
    forward || backward
}

/// A triangulated n-sheeted branched cover with charts: one z-disk per
/// ramification point (`w = z² + p_j`), w-charts everywhere else.
#[derive(Debug, Clone)]
pub struct CoverSurface {
    pub points: Vec<C64>,
    pub datum: MonodromyDatum,
    pub refinement: usize,
    pub genus: usize,
    pub base: BaseMesh,
    pub topo: CoverTopology,
    /// chart in which each cover edge's background length is measured
    pub edge_chart: Vec<Chart>,
    /// per-disk inner radius of the motion blend (the whole patch,
    /// hole boundary included, translates rigidly inside it)
    pub blend_lo: Vec<f64>,
    /// common outer radius of the motion blend
    pub blend_hi: f64,
}

/// Builds the cover surface at the given refinement level.
pub fn build_cover(config: &BranchConfiguration, refinement: usize) -> Result<CoverSurface, MeshError> {
    config.validate()?;
    if refinement > 6 {
        return Err(MeshError::BadConfiguration(format!(
            "refinement {refinement} exceeds the supported maximum 6"
        )));
    }
    let genus = config.datum.cover_genus()?;
    let radii = config.disk_radii();
    let base = base::build_base(&base::BaseBuildInput {
        points: &config.points,
        core_radius: &radii,
        resolution: Resolution::from_refinement(refinement),
    })?;
    validate_rays_clear_disks(config, &base)?;
    let topo = cover::build_cover_topology(&base, &config.datum, &config.points)?;

    // measurement chart per cover edge: z only when both incident faces are
    // in the same z-chart (ring edges fall back to w, where both endpoints
    // carry w-coordinates)
    let edge_chart: Vec<Chart> = topo
        .edges
        .iter()
        .map(|e| {
            let ca = topo.faces[e.faces[0]].chart;
            let cb = topo.faces[e.faces[1]].chart;
            match (ca, cb) {
                (Chart::Z { disk: a }, Chart::Z { disk: b }) if a == b => Chart::Z { disk: a },
                (Chart::WInf, Chart::WInf) => Chart::WInf,
                _ => Chart::W,
            }
        })
        .collect();

    // Motion blend band. Everything out to the patch boundary (plus a
    // margin of icosphere edges) translates rigidly with its branch point,
    // so the structured patches never deform; the smoothstep ramp lives in
    // the far field between patches and dies off before the next patch and
    // before the polar chart.
    let d_min = config.min_pairwise_distance();
    let max_abs = config.points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let ico_edge = base::ico_edge_radians(Resolution::from_refinement(refinement).ico_level);
    let blend_lo: Vec<f64> = config
        .points
        .iter()
        .zip(&base.outer_radius)
        .map(|(&p, &outer)| outer + 1.5 * base::w_scale(p, ico_edge))
        .collect();
    let max_lo = blend_lo.iter().cloned().fold(0.0, f64::max);
    let blend_hi = (d_min - max_lo - ico_edge)
        .min(cover::POLE_CHART_RADIUS - 0.6 - max_abs)
        .max(1.15 * max_lo);
    let surface = CoverSurface {
        points: config.points.clone(),
        datum: config.datum.clone(),
        refinement,
        genus,
        base,
        topo,
        edge_chart,
        blend_lo,
        blend_hi,
    };
    let chi = surface.euler_characteristic();
    let expected = 2 - 2 * genus as i64;
    if chi != expected {
        return Err(MeshError::Monodromy(format!(
            "Euler characteristic {chi} does not match 2 - 2p = {expected}"
        )));
    }
    Ok(surface)
}

fn validate_rays_clear_disks(
    config: &BranchConfiguration,
    base: &BaseMesh,
) -> Result<(), MeshError> {
    // the radial ray of point i must stay clear of every other patch
    for (i, &p) in config.points.iter().enumerate() {
        let dir = p / p.norm();
        for (j, &q) in config.points.iter().enumerate() {
            if i == j {
                continue;
            }
            // distance from q to the ray {p + t·dir : t >= 0}
            let t = ((q - p) * dir.conj()).re;
            let d = if t <= 0.0 {
                (q - p).norm()
            } else {
                (q - p - dir * t).norm()
            };
            if d <= 1.3 * base.outer_radius[j] {
                return Err(MeshError::BadConfiguration(format!(
                    "the cut ray of branch point {i} passes through the patch of point {j}"
                )));
            }
        }
    }
    Ok(())
}

impl CoverSurface {
    pub fn n_sheets(&self) -> usize {
        self.topo.n_sheets
    }

    pub fn vertex_count(&self) -> usize {
        self.topo.verts.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.topo.verts.len() as i64 - self.topo.edges.len() as i64 + self.topo.faces.len() as i64
    }

    /// w-coordinate of a cover vertex (from its base vertex).
    pub fn vertex_w(&self, cv: usize) -> C64 {
        self.base.verts[self.topo.verts[cv].base].w
    }

    /// Monodromy of a walked loop around branch point `j`: composes the
    /// actual face-to-face sheet transitions along a circle of 1.12 x the
    /// patch radius, exercising the glued mesh end to end.
    pub fn monodromy_walk(&self, j: usize) -> Result<Permutation, MeshError> {
        let p = self.points[j];
        let radius = 1.12 * self.base.outer_radius[j];
        let samples = 720;
        let point = |k: usize| {
            let theta = std::f64::consts::TAU * k as f64 / samples as f64;
            to_sphere(p + C64::from_polar(radius, theta))
        };
        let mut face = self
            .locate_base_face(point(0))
            .ok_or_else(|| MeshError::Degenerate("walk start outside the mesh".into()))?;
        let mut g = SheetMap::identity(self.n_sheets());
        for k in 1..=samples {
            let target = point(k % samples);
            let (new_face, step) = self.walk_to(face, target)?;
            face = new_face;
            g = g.then(&step);
        }
        Ok(g.to_permutation())
    }

    fn locate_base_face(&self, x: [f64; 3]) -> Option<usize> {
        (0..self.base.faces.len()).find(|&f| self.face_contains(f, x))
    }

    fn face_contains(&self, f: usize, x: [f64; 3]) -> bool {
        let [a, b, c] = self.base.faces[f];
        let (pa, pb, pc) = (
            self.base.verts[a].pos,
            self.base.verts[b].pos,
            self.base.verts[c].pos,
        );
        let tol = 1e-14;
        dot3(x, cross3(pa, pb)) <= tol
            && dot3(x, cross3(pb, pc)) <= tol
            && dot3(x, cross3(pc, pa)) <= tol
    }

    /// Hops from `face` to the face containing `target`, composing sheet
    /// transitions along the way.
    fn walk_to(&self, mut face: usize, target: [f64; 3]) -> Result<(usize, SheetMap), MeshError> {
        let mut g = SheetMap::identity(self.n_sheets());
        for _ in 0..10_000 {
            let [a, b, c] = self.base.faces[face];
            let (pa, pb, pc) = (
                self.base.verts[a].pos,
                self.base.verts[b].pos,
                self.base.verts[c].pos,
            );
            // violations against the three edge planes, in corner order:
            // plane (a,b) is crossed toward the face opposite corner c
            let viol = [
                (dot3(target, cross3(pb, pc)), 0usize), // edge opposite a
                (dot3(target, cross3(pc, pa)), 1usize),
                (dot3(target, cross3(pa, pb)), 2usize),
            ];
            let (worst, corner) = viol
                .iter()
                .cloned()
                .max_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
                .unwrap();
            if worst <= 1e-14 {
                return Ok((face, g));
            }
            let eid = self.base.face_edges[face][corner];
            let e = &self.base.edges[eid];
            let next = if e.faces[0] == face {
                e.faces[1]
            } else {
                e.faces[0]
            };
            g = g.then(&self.topo.edge_transition(&self.base, eid, face));
            face = next;
        }
        Err(MeshError::Degenerate(
            "face walk failed to reach its target".into(),
        ))
    }

    /// Serializable snapshot of the mesh (debugging/plotting format).
    pub fn to_mesh_json(&self) -> MeshJson {
        MeshJson {
            n_sheets: self.n_sheets(),
            genus: self.genus,
            refinement: self.refinement,
            branch_points: self.points.iter().map(|p| (p.re, p.im)).collect(),
            vertices: self
                .topo
                .verts
                .iter()
                .enumerate()
                .map(|(vid, v)| MeshVertexJson {
                    id: vid,
                    w: {
                        let w = self.vertex_w(vid);
                        (w.re, w.im)
                    },
                    chart: match v.chart {
                        Chart::W => "w".to_string(),
                        Chart::WInf => "w_inf".to_string(),
                        Chart::Z { disk } => format!("z{disk}"),
                    },
                    z: match v.chart {
                        Chart::Z { .. } => Some((v.z.re, v.z.im)),
                        _ => None,
                    },
                    sheet: v.anchor as usize,
                    ramification: v.orbit_size == 2,
                })
                .collect(),
            faces: self
                .topo
                .faces
                .iter()
                .map(|f| MeshFaceJson {
                    vertices: f.verts,
                    sheet: f.sheet as usize,
                    chart: match f.chart {
                        Chart::W => "w".to_string(),
                        Chart::WInf => "w_inf".to_string(),
                        Chart::Z { disk } => format!("z{disk}"),
                    },
                })
                .collect(),
            cone_vertices: self.topo.ram_verts.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MeshJson {
    pub n_sheets: usize,
    pub genus: usize,
    pub refinement: usize,
    pub branch_points: Vec<(f64, f64)>,
    pub vertices: Vec<MeshVertexJson>,
    pub faces: Vec<MeshFaceJson>,
    pub cone_vertices: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct MeshVertexJson {
    pub id: usize,
    pub w: (f64, f64),
    pub chart: String,
    pub z: Option<(f64, f64)>,
    pub sheet: usize,
    pub ramification: bool,
}

#[derive(Debug, Serialize)]
pub struct MeshFaceJson {
    pub vertices: [usize; 3],
    pub sheet: usize,
    pub chart: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn hexagon_config() -> BranchConfiguration {
        let datum = MonodromyDatum::genus_zero(2, &[(1, 2); 6]).unwrap();
        BranchConfiguration::regular_polygon(datum).unwrap()
    }

    pub fn square_config() -> BranchConfiguration {
        // degree 3, four branch points: a valid transitive tuple
        let datum =
            MonodromyDatum::genus_zero(3, &[(1, 2), (1, 2), (1, 3), (1, 3)]).unwrap();
        BranchConfiguration::regular_polygon(datum).unwrap()
    }

    #[test]
    fn hexagon_cover_is_genus_two() {
        let surface = build_cover(&hexagon_config(), 0).unwrap();
        assert_eq!(surface.genus, 2);
        assert_eq!(surface.euler_characteristic(), -2);
        assert_eq!(surface.topo.ram_verts.len(), 6);
    }

    #[test]
    fn degree_three_cover_is_genus_zero() {
        let surface = build_cover(&square_config(), 0).unwrap();
        assert_eq!(surface.genus, 0);
        assert_eq!(surface.euler_characteristic(), 2);
    }

    #[test]
    fn monodromy_walk_recovers_transpositions() {
        for config in [hexagon_config(), square_config()] {
            let surface = build_cover(&config, 0).unwrap();
            for j in 0..config.branch_count() {
                let walked = surface.monodromy_walk(j).unwrap();
                assert_eq!(
                    walked, config.datum.transpositions[j],
                    "branch point {j}"
                );
            }
        }
    }

    #[test]
    fn gauss_bonnet_exact() {
        for (config, chi) in [(hexagon_config(), -2.0), (square_config(), 2.0)] {
            let surface = build_cover(&config, 1).unwrap();
            let geom = background_geometry(
                &surface,
                &Motion::frozen(config.branch_count()),
                C64::new(0.0, 0.0),
            )
            .unwrap();
            let total_defect: f64 = geom.defect.iter().sum();
            let expected = 2.0 * std::f64::consts::PI * chi;
            assert!(
                (total_defect - expected).abs() < 1e-9 * expected.abs().max(1.0),
                "defect sum {total_defect} vs {expected}"
            );
        }
    }

    #[test]
    fn ramification_vertices_carry_doubled_angle() {
        let surface = build_cover(&hexagon_config(), 1).unwrap();
        let geom = background_geometry(&surface, &Motion::frozen(6), C64::new(0.0, 0.0)).unwrap();
        for &rv in &surface.topo.ram_verts {
            let angle = 2.0 * std::f64::consts::PI - geom.defect[rv];
            let four_pi = 4.0 * std::f64::consts::PI;
            assert!(
                (angle - four_pi).abs() < 1e-3 * four_pi,
                "cone angle {angle} should be near 4π"
            );
        }
    }

    #[test]
    fn background_area_approximates_sheeted_sphere() {
        let surface = build_cover(&hexagon_config(), 1).unwrap();
        let geom = background_geometry(&surface, &Motion::frozen(6), C64::new(0.0, 0.0)).unwrap();
        let expected = 2.0 * 4.0 * std::f64::consts::PI;
        let rel = (geom.total_area - expected).abs() / expected;
        assert!(rel < 0.02, "area {} vs {expected} (rel {rel})", geom.total_area);
    }

    #[test]
    fn laplacian_kills_constants() {
        let surface = build_cover(&square_config(), 0).unwrap();
        let geom = background_geometry(&surface, &Motion::frozen(4), C64::new(0.0, 0.0)).unwrap();
        let ones = vec![1.0; surface.vertex_count()];
        let lu = geom.laplacian.matvec(&ones);
        let max = lu.iter().cloned().fold(0.0, f64::max);
        assert!(max.abs() < 1e-12 * geom.laplacian.norm_inf());
    }

    #[test]
    fn gradient_stencils_kill_antiholomorphic_part() {
        let surface = build_cover(&hexagon_config(), 0).unwrap();
        let charts = chart_data(&surface, &Motion::frozen(6)).unwrap();
        for fid in 0..surface.topo.faces.len() {
            let coords = charts.corner_coords[fid];
            // f = 3 + 2z: holomorphic linear
            let f: Vec<C64> = coords.iter().map(|&x| C64::new(3.0, 0.0) + 2.0 * x).collect();
            let dzb: C64 = (0..3).map(|k| charts.grad_zbar[fid][k] * f[k]).sum();
            let dz: C64 = (0..3).map(|k| charts.grad_z[fid][k] * f[k]).sum();
            assert!(dzb.norm() < 1e-10, "residual {dzb}");
            assert!((dz - C64::new(2.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn chart_overlap_density_ratio() {
        // background densities in overlapping charts differ by |dw/dz|² = |2z|²
        let surface = build_cover(&hexagon_config(), 1).unwrap();
        let mut checked = 0;
        for cv in 0..surface.vertex_count() {
            let v = &surface.topo.verts[cv];
            if let Chart::Z { disk } = v.chart {
                if v.z.norm() > 0.0 {
                    let w = surface.vertex_w(cv);
                    let lambda_w = 2.0 * crate::sphere::round_density(w);
                    let lambda_z = lambda_w * (2.0 * v.z).norm_sqr();
                    let direct =
                        2.0 * crate::sphere::round_density(v.z * v.z + surface.points[disk])
                            * (2.0 * v.z).norm_sqr();
                    assert!((lambda_z - direct).abs() <= 1e-9 * lambda_z.abs());
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn refinement_improves_area_and_angles() {
        let mut errors = Vec::new();
        for refinement in [0usize, 1, 2] {
            let surface = build_cover(&hexagon_config(), refinement).unwrap();
            let geom =
                background_geometry(&surface, &Motion::frozen(6), C64::new(0.0, 0.0)).unwrap();
            let expected = 8.0 * std::f64::consts::PI;
            errors.push((geom.total_area - expected).abs() / expected);
            // mesh quality: minimum corner angle bounded below
            let min_angle = geom
                .angles
                .iter()
                .flat_map(|a| a.iter().cloned())
                .fold(f64::INFINITY, f64::min);
            assert!(min_angle > 0.08, "min angle {min_angle} at refinement {refinement}");
        }
        assert!(errors[1] < errors[0]);
        assert!(errors[2] < errors[1]);
    }
}
