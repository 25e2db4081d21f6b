//! Subcommand implementations.

use anyhow::{anyhow, Result};
use hurwitz_core::covering::{
    automorphism_order, braid_orbits, enumerate_classes, CoveringError, MonodromyDatum,
};
use hurwitz_core::hyperbolic::{solve_liouville, LiouvilleSettings};
use hurwitz_core::mesh::{assemble_operators, build_cover, Motion};
use hurwitz_core::wp::{
    build_stencil, evaluate, random_identity_residual, weil_petersson, Direction, WpError,
};
use hurwitz_core::{cohomology, C64};
use serde::Serialize;

use crate::config::{FileConfig, SurfaceSpec};
use crate::output::{out_dir, write_csv, write_json, Provenance, Report};
use crate::{Cli, CliError, Command};

fn classify_wp(err: WpError) -> CliError {
    match &err {
        WpError::Solve(_) => CliError::solver(anyhow!("{err}")),
        WpError::Covering(CoveringError::BudgetExceeded { .. }) => {
            CliError::budget(anyhow!("{err}"))
        }
        _ => CliError::invalid(anyhow!("{err}")),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref()).map_err(CliError::invalid)?;
    let dir = out_dir(cli.out.as_deref());
    let workers = match cli.workers {
        Some(w) => w,
        None => file
            .get("workers")
            .map_err(CliError::invalid)?
            .unwrap_or(4),
    };
    if workers == 0 {
        return Err(CliError::invalid(anyhow!("workers must be positive")));
    }

    match cli.command {
        Command::Enumerate { n, b } => {
            let (n, b) = resolve_nb(n, b, &file)?;
            let classes = enumerate_classes(n, b).map_err(classify_covering)?;
            #[derive(Serialize)]
            struct Out {
                count: usize,
                classes: Vec<MonodromyDatum>,
                automorphism_orders: Vec<usize>,
            }
            let orders = classes
                .iter()
                .map(automorphism_order)
                .collect::<Result<Vec<_>, _>>()
                .map_err(classify_covering)?;
            let report = Report {
                provenance: provenance("enumerate", vec![kv("n", n), kv("b", b)]),
                result: Out {
                    count: classes.len(),
                    classes,
                    automorphism_orders: orders,
                },
            };
            write_json(&dir, &format!("classes_n{n}_b{b}.json"), &report)
                .map_err(CliError::invalid)?;
            println!("{} classes", report.result.count);
            Ok(())
        }
        Command::Orbits { n, b } => {
            let (n, b) = resolve_nb(n, b, &file)?;
            let classes = enumerate_classes(n, b).map_err(classify_covering)?;
            let orbits = braid_orbits(&classes).map_err(classify_covering)?;
            #[derive(Serialize)]
            struct Out {
                class_count: usize,
                orbit_count: usize,
                orbits: Vec<Vec<usize>>,
            }
            let report = Report {
                provenance: provenance("orbits", vec![kv("n", n), kv("b", b)]),
                result: Out {
                    class_count: classes.len(),
                    orbit_count: orbits.len(),
                    orbits,
                },
            };
            write_json(&dir, &format!("orbits_n{n}_b{b}.json"), &report)
                .map_err(CliError::invalid)?;
            println!("{} orbits over {} classes", report.result.orbit_count, report.result.class_count);
            Ok(())
        }
        Command::Dims { n, h, b } => {
            let n = resolve(n, "n", &file)?;
            let h = resolve(h, "h", &file)?;
            let b = resolve(b, "b", &file)?;
            let profile = cohomology::cohomology_profile(n, h, b)
                .map_err(|e| CliError::invalid(anyhow!("{e}")))?;
            #[derive(Serialize)]
            struct Out {
                profile: cohomology::CohomologyProfile,
                degrees: cohomology::BundleDegrees,
                tangent_dims: (usize, usize, usize),
                hypercohomology_dims: (usize, usize, usize),
                obstruction_vanishes: bool,
                genus: usize,
            }
            let genus = hurwitz_core::covering::genus_from_relation(n, h, b)
                .map_err(classify_covering)?;
            let report = Report {
                provenance: provenance("dims", vec![kv("n", n), kv("h", h), kv("b", b)]),
                result: Out {
                    profile,
                    degrees: cohomology::BundleDegrees::new(n, h, b)
                        .map_err(|e| CliError::invalid(anyhow!("{e}")))?,
                    tangent_dims: cohomology::tangent_dims(b),
                    hypercohomology_dims: cohomology::hypercohomology_dims(b),
                    obstruction_vanishes: cohomology::obstruction_vanishes(genus, b),
                    genus,
                },
            };
            write_json(&dir, &format!("dims_n{n}_h{h}_b{b}.json"), &report)
                .map_err(CliError::invalid)?;
            Ok(())
        }
        Command::SolveMetric {
            preset,
            points,
            transpositions,
            degree,
            refinement,
            dump_fields,
            mesh_out,
        } => {
            let spec = SurfaceSpec {
                preset,
                points,
                transpositions,
                degree,
            };
            let config = spec.resolve(&file).map_err(CliError::invalid)?;
            let refinement = match refinement {
                Some(r) => r,
                None => file
                    .get("refinement")
                    .map_err(CliError::invalid)?
                    .unwrap_or(2),
            };
            let surface =
                build_cover(&config, refinement).map_err(|e| CliError::invalid(anyhow!("{e}")))?;
            let ops = assemble_operators(&surface).map_err(|e| CliError::invalid(anyhow!("{e}")))?;
            let metric = solve_liouville(&ops.geometry, None, &LiouvilleSettings::default())
                .map_err(|e| CliError::solver(anyhow!("{e}")))?;
            #[derive(Serialize)]
            struct Out {
                vertices: usize,
                faces: usize,
                euler_characteristic: i64,
                genus: usize,
                hyperbolic_area: f64,
                expected_area: f64,
                newton_iterations: usize,
                final_residual: f64,
                residual_history: Vec<f64>,
            }
            let expected = 4.0 * std::f64::consts::PI * (surface.genus as f64 - 1.0);
            let mut cfg = spec.describe(&file);
            cfg.push(kv("refinement", refinement));
            let report = Report {
                provenance: provenance("solve-metric", cfg),
                result: Out {
                    vertices: surface.vertex_count(),
                    faces: surface.topo.faces.len(),
                    euler_characteristic: surface.euler_characteristic(),
                    genus: surface.genus,
                    hyperbolic_area: metric.hyperbolic_area,
                    expected_area: expected,
                    newton_iterations: metric.newton_iterations,
                    final_residual: metric.final_residual,
                    residual_history: metric.residual_history.clone(),
                },
            };
            write_json(&dir, &format!("metric_r{refinement}.json"), &report)
                .map_err(CliError::invalid)?;
            if dump_fields {
                let rows: Vec<String> = (0..surface.vertex_count())
                    .map(|v| {
                        let w = surface.vertex_w(v);
                        format!(
                            "{v},{},{},{:.17e},{:.17e},{:.17e}",
                            w.re, w.im, metric.u[v], ops.geometry.vertex_area[v], ops.geometry.defect[v]
                        )
                    })
                    .collect();
                write_csv(
                    &dir,
                    &format!("metric_fields_r{refinement}.csv"),
                    "vertex,re_w,im_w,u,area,defect",
                    &rows,
                )
                .map_err(CliError::invalid)?;
            }
            if mesh_out {
                let mesh = surface.to_mesh_json();
                let report = Report {
                    provenance: provenance("solve-metric --mesh-out", spec.describe(&file)),
                    result: mesh,
                };
                write_json(&dir, &format!("mesh_r{refinement}.json"), &report)
                    .map_err(CliError::invalid)?;
            }
            println!(
                "area {} vs {} ({} Newton iterations)",
                report.result.hyperbolic_area, expected, report.result.newton_iterations
            );
            Ok(())
        }
        Command::WpNorm {
            preset,
            points,
            transpositions,
            degree,
            moving,
            velocities,
            epsilon,
            refinement,
            dump_fields,
        } => {
            let spec = SurfaceSpec {
                preset,
                points,
                transpositions,
                degree,
            };
            let config = spec.resolve(&file).map_err(CliError::invalid)?;
            let refinement = match refinement {
                Some(r) => r,
                None => file
                    .get("refinement")
                    .map_err(CliError::invalid)?
                    .unwrap_or(2),
            };
            let moving = match moving {
                Some(k) => Some(k),
                None => file.get("moving").map_err(CliError::invalid)?,
            };
            let direction = match (moving, velocities) {
                (Some(k), None) => Direction::BranchPoint(k),
                (None, Some(spec)) => Direction::Velocities(
                    crate::config::parse_points(&spec).map_err(CliError::invalid)?,
                ),
                (None, None) => Direction::BranchPoint(0),
                _ => {
                    return Err(CliError::invalid(anyhow!(
                        "--moving and --velocities are mutually exclusive"
                    )))
                }
            };
            let epsilon = match epsilon {
                Some(e) => Some(e),
                None => file.get("epsilon").map_err(CliError::invalid)?,
            };
            let report_core = weil_petersson(&config, &direction, epsilon, refinement, workers)
                .map_err(classify_wp)?;
            let mut cfg = spec.describe(&file);
            cfg.push(kv("refinement", refinement));
            cfg.push(("direction".into(), format!("{direction:?}")));
            cfg.push(kv("epsilon", report_core.epsilon));
            cfg.push(kv("workers", workers));
            let report = Report {
                provenance: provenance("wp-norm", cfg),
                result: &report_core,
            };
            write_json(&dir, &format!("wp_norm_r{refinement}.json"), &report)
                .map_err(CliError::invalid)?;
            if dump_fields {
                // recompute tensors for the dump
                let surface = build_cover(&config, refinement)
                    .map_err(|e| CliError::invalid(anyhow!("{e}")))?;
                let motion = direction
                    .to_motion(config.branch_count())
                    .map_err(classify_wp)?;
                let st = build_stencil(
                    &surface,
                    &motion,
                    report_core.epsilon,
                    workers,
                    &LiouvilleSettings::default(),
                )
                .map_err(classify_wp)?;
                let (_, tensors) = evaluate(&st, 1.0).map_err(classify_wp)?;
                let rows: Vec<String> = (0..surface.vertex_count())
                    .map(|v| {
                        let w = surface.vertex_w(v);
                        format!(
                            "{v},{},{},{:.17e},{:.17e},{:.17e}",
                            w.re,
                            w.im,
                            tensors.phi[v],
                            tensors.mu[v].norm_sqr(),
                            tensors.g[v]
                        )
                    })
                    .collect();
                write_csv(
                    &dir,
                    &format!("wp_fields_r{refinement}.csv"),
                    "vertex,re_w,im_w,phi,mu_sq,g",
                    &rows,
                )
                .map_err(CliError::invalid)?;
            }
            println!(
                "wp_total = {} (g0 = {}, g1 = {}, fiber integral = {})",
                report_core.result.wp_total,
                report_core.result.g0_direct,
                report_core.result.g1,
                report_core.result.fiber_integral
            );
            Ok(())
        }
        Command::Convergence {
            preset,
            points,
            transpositions,
            degree,
            refinements,
            moving,
            epsilon,
        } => {
            let spec = SurfaceSpec {
                preset,
                points,
                transpositions,
                degree,
            };
            let config = spec.resolve(&file).map_err(CliError::invalid)?;
            let refinements: Vec<usize> = match refinements
                .or_else(|| file.get_string("refinements"))
            {
                Some(spec) => spec
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::invalid(anyhow!("refinements: {e}")))?,
                None => vec![1, 2, 3],
            };
            if refinements.len() < 3 {
                return Err(CliError::invalid(anyhow!(
                    "a convergence study needs at least 3 refinement levels"
                )));
            }
            if !refinements.windows(2).all(|w| w[0] < w[1]) {
                return Err(CliError::invalid(anyhow!(
                    "refinement levels must be strictly increasing"
                )));
            }
            let moving = moving.unwrap_or(0);
            let direction = Direction::BranchPoint(moving);
            let epsilon = match epsilon {
                Some(e) => Some(e),
                None => file.get("epsilon").map_err(CliError::invalid)?,
            };
            let report =
                convergence_study(&config, &direction, epsilon, &refinements, workers, &spec, &file)
                    .map_err(classify_wp)?;
            write_json(&dir, "convergence.json", &report).map_err(CliError::invalid)?;
            let rows: Vec<String> = report
                .result
                .rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{:.6e},{:.6e},{:.6e},{:.17e}",
                        r.refinement, r.area_error, r.eqell_residual, r.route_gap, r.wp_total
                    )
                })
                .collect();
            write_csv(
                &dir,
                "convergence.csv",
                "refinement,area_error,eqell_residual,route_gap,wp_total",
                &rows,
            )
            .map_err(CliError::invalid)?;
            Ok(())
        }
        Command::IdentityCheck { samples, seed } => {
            let samples = match samples {
                Some(s) => s,
                None => file
                    .get("samples")
                    .map_err(CliError::invalid)?
                    .unwrap_or(1000),
            };
            let seed = match seed {
                Some(s) => s,
                None => file.get("seed").map_err(CliError::invalid)?.unwrap_or(7),
            };
            let residual = random_identity_residual(samples, seed);
            #[derive(Serialize)]
            struct Out {
                samples: usize,
                seed: u64,
                max_relative_residual: f64,
            }
            let report = Report {
                provenance: provenance(
                    "identity-check",
                    vec![kv("samples", samples), kv("seed", seed)],
                ),
                result: Out {
                    samples,
                    seed,
                    max_relative_residual: residual,
                },
            };
            write_json(&dir, "identity_check.json", &report).map_err(CliError::invalid)?;
            println!("max residual {residual:e} over {samples} samples");
            Ok(())
        }
    }
}

#[derive(Serialize)]
pub struct ConvergenceRow {
    pub refinement: usize,
    pub area_error: f64,
    pub eqell_residual: f64,
    pub route_gap: f64,
    pub wp_total: f64,
    pub epsilon: f64,
}

#[derive(Serialize)]
pub struct ConvergenceOut {
    pub rows: Vec<ConvergenceRow>,
    pub area_error_decreasing: bool,
    pub eqell_decreasing: bool,
    pub route_gap_decreasing: bool,
    pub wp_differences_decreasing: bool,
}

fn convergence_study(
    config: &hurwitz_core::mesh::BranchConfiguration,
    direction: &Direction,
    epsilon: Option<f64>,
    refinements: &[usize],
    workers: usize,
    spec: &SurfaceSpec,
    file: &FileConfig,
) -> Result<Report<ConvergenceOut>, WpError> {
    let mut rows = Vec::new();
    for &refinement in refinements {
        let rep = weil_petersson(config, direction, epsilon, refinement, workers)?;
        // background-area error against n x sphere area
        let surface = build_cover(config, refinement)?;
        let motion = Motion::frozen(config.branch_count());
        let geom =
            hurwitz_core::mesh::background_geometry(&surface, &motion, C64::new(0.0, 0.0))?;
        let expected = surface.n_sheets() as f64 * 4.0 * std::f64::consts::PI;
        rows.push(ConvergenceRow {
            refinement,
            area_error: (geom.total_area - expected).abs() / expected,
            eqell_residual: rep.result.residuals.eqell_solved,
            route_gap: (rep.result.g0_pde - rep.result.g0_direct).abs()
                / rep.result.g0_direct.abs().max(1e-300),
            wp_total: rep.result.wp_total,
            epsilon: rep.epsilon,
        });
    }
    let decreasing = |f: &dyn Fn(&ConvergenceRow) -> f64| rows.windows(2).all(|w| f(&w[1]) < f(&w[0]));
    let wp_diffs: Vec<f64> = rows
        .windows(2)
        .map(|w| (w[1].wp_total - w[0].wp_total).abs())
        .collect();
    let out = ConvergenceOut {
        area_error_decreasing: decreasing(&|r| r.area_error),
        eqell_decreasing: decreasing(&|r| r.eqell_residual),
        route_gap_decreasing: decreasing(&|r| r.route_gap),
        wp_differences_decreasing: wp_diffs.windows(2).all(|w| w[1] < w[0]),
        rows,
    };
    let mut cfg = spec.describe(file);
    cfg.push((
        "refinements".into(),
        refinements
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(","),
    ));
    Ok(Report {
        provenance: provenance("convergence", cfg),
        result: out,
    })
}

fn classify_covering(err: CoveringError) -> CliError {
    match err {
        CoveringError::BudgetExceeded { .. } => CliError::budget(anyhow!("{err}")),
        _ => CliError::invalid(anyhow!("{err}")),
    }
}

fn resolve_nb(
    n: Option<usize>,
    b: Option<usize>,
    file: &FileConfig,
) -> Result<(usize, usize), CliError> {
    Ok((resolve(n, "n", file)?, resolve(b, "b", file)?))
}

fn resolve(
    flag: Option<usize>,
    key: &str,
    file: &FileConfig,
) -> Result<usize, CliError> {
    match flag {
        Some(v) => Ok(v),
        None => file
            .get(key)
            .map_err(CliError::invalid)?
            .ok_or_else(|| CliError::invalid(anyhow!("missing required option --{key}"))),
    }
}

fn kv<T: std::fmt::Display>(key: &str, value: T) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn provenance(command: &str, config: Vec<(String, String)>) -> Provenance {
    Provenance::new(command, config)
}
