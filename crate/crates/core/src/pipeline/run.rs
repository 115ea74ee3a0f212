use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use faer::Mat;
use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{load_any_mesh, read_json};
use super::report::{evaluate_transfer, timing_report, EvaluationReport, FunctionError, TimingReport};
use super::{AtStage, DemonstrationBundle, PipelineConfig, PipelineError, Scene, SkillRecord, Stage};
use crate::descriptors::{project, wks};
use crate::fmap::{
    descriptor_operators, select_match, zoomout_refine, DescriptorOperators, FunctionKind, FunctionTransfer, FunctionalMap, MatchCandidate,
    PointToPointMap, SurfaceFunction,
};
use crate::imitation::{
    align_supports, build_goal_list, filter_grasps, final_poses, ExecutableTrajectory, GraspCandidate, ImitationError, SegmentSpan,
};
use crate::mesh::{spectral_basis_with, MeshFormat, SpectralBasis, TriangleMesh};
use crate::screw::{UnitDualQuaternion, Waypoint};

/// Optional per-scene settings next to the mesh files.
pub const SCENE_FILE: &str = "scene.json";

/// Transferred RIF MAE allowed for an operation to count as a success.
const SUCCESS_MAE: f64 = 0.2;

/// A scene to imitate in: its objects plus optional robot start pose and
/// externally detected grasp candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct NewScene {
    pub scene: Scene,
    pub start: Option<UnitDualQuaternion>,
    pub grasps: Option<Vec<GraspCandidate>>,
}

#[derive(Deserialize)]
struct SceneFile {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    start: Option<Waypoint>,
    #[serde(default)]
    grasps: Option<Vec<GraspCandidate>>,
}

/// Every mesh file in `dir` (sorted by name) plus the optional `scene.json`.
pub fn load_scene(dir: impl AsRef<Path>) -> Result<NewScene, PipelineError> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::input(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && MeshFormat::from_path(p).is_some())
        .collect();
    paths.sort();
    let objects = paths.iter().map(|p| load_any_mesh(p)).collect::<Result<Vec<_>, _>>()?;
    if objects.is_empty() {
        return Err(PipelineError::input(dir, "scene contains no mesh files"));
    }
    let settings_path = dir.join(SCENE_FILE);
    let settings: Option<SceneFile> = if settings_path.exists() { Some(read_json(&settings_path)?) } else { None };
    let (id, start, grasps) = match settings {
        Some(s) => {
            let start = s.start.map(|w| w.to_pose()).transpose().map_err(|e| PipelineError::input(&settings_path, e))?;
            (s.id, start, s.grasps)
        }
        None => (None, None, None),
    };
    let id = id.unwrap_or_else(|| dir.file_name().and_then(|s| s.to_str()).unwrap_or("scene").to_string());
    Ok(NewScene { scene: Scene::new(id, objects, Vec::new())?, start, grasps })
}

/// A mesh with its area-normalized basis (`k_final` pairs), descriptor
/// coefficients and `k_init` descriptor operators.
#[derive(Debug, Clone)]
pub struct PreparedShape {
    pub mesh: TriangleMesh,
    pub basis: SpectralBasis,
    pub coeffs: Mat<f64>,
    pub operators: DescriptorOperators,
}

impl PreparedShape {
    pub fn candidate(&self) -> MatchCandidate<'_> {
        MatchCandidate { basis: &self.basis, coeffs: self.coeffs.as_ref(), operators: &self.operators }
    }
}

/// Returns the prepared shape and the time spent on its basis and descriptors.
pub fn prepare_shape(mesh: &TriangleMesh, config: &PipelineConfig) -> Result<(PreparedShape, Duration, Duration), PipelineError> {
    let t = Instant::now();
    let basis = spectral_basis_with(mesh, config.fmap.k_final, &config.eigen()).at(Stage::Basis)?.area_normalized();
    let t_basis = t.elapsed();
    let t = Instant::now();
    let d = wks(&basis, &config.wks).at(Stage::Descriptors)?;
    let coeffs = project(&basis, d.values.as_ref()).at(Stage::Descriptors)?;
    let operators = descriptor_operators(&basis, d.values.as_ref(), config.fmap.k_init, config.fmap.descr_stride).at(Stage::Descriptors)?;
    Ok((PreparedShape { mesh: mesh.clone(), basis, coeffs, operators }, t_basis, t.elapsed()))
}

fn prepare_all(meshes: &[&TriangleMesh], config: &PipelineConfig, timings: &mut Vec<(Stage, Duration)>) -> Result<Vec<PreparedShape>, PipelineError> {
    let results: Vec<_> = meshes.par_iter().map(|m| prepare_shape(m, config)).collect();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let (shape, tb, td) = r?;
        timings.push((Stage::Basis, tb));
        timings.push((Stage::Descriptors, td));
        out.push(shape);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub index: usize,
    /// Diagonal-dominance score per scene object.
    pub scores: Vec<f64>,
    /// Refined `k_final` map from the demonstrated object to the selection.
    pub map: FunctionalMap,
    /// Per selected-object vertex, the corresponding demonstrated vertex.
    pub p2p: PointToPointMap,
}

/// Selects the best-matching scene object at `k_init`, then refines the
/// map to `k_final`.
pub fn match_operation(
    sel: &PreparedShape,
    scene: &[PreparedShape],
    config: &PipelineConfig,
    timings: &mut Vec<(Stage, Duration)>,
) -> Result<MatchOutcome, PipelineError> {
    let t = Instant::now();
    let cands: Vec<MatchCandidate<'_>> = scene.iter().map(PreparedShape::candidate).collect();
    let selection = select_match(&sel.candidate(), &cands, &config.fmap).at(Stage::Selection)?;
    timings.push((Stage::Selection, t.elapsed()));
    let t = Instant::now();
    let f = &config.fmap;
    let init = selection.map.orthogonalized().at(Stage::Refinement)?;
    let (map, p2p) = zoomout_refine(&init, &sel.basis, &scene[selection.index].basis, f.k_init, f.k_final, f.step).at(Stage::Refinement)?;
    timings.push((Stage::Refinement, t.elapsed()));
    Ok(MatchOutcome { index: selection.index, scores: selection.scores.iter().map(|s| s.score).collect(), map, p2p })
}

/// Carries every function of `record` through `map`.
pub fn transfer_operation(
    record: &SkillRecord,
    map: &FunctionalMap,
    sel: &PreparedShape,
    target: &PreparedShape,
) -> Result<Vec<SurfaceFunction>, PipelineError> {
    let t = FunctionTransfer::new(map, &sel.basis, &target.basis).at(Stage::Transfer)?;
    record.functions.iter().map(|f| t.apply(f).at(Stage::Transfer)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationReport {
    pub object: String,
    pub selected: String,
    pub selected_index: usize,
    pub scores: Vec<f64>,
    pub grasp_region: usize,
    pub grasp: Waypoint,
    pub final_pose: Waypoint,
    /// Closed-form and final ICP RMS of the support alignment (m).
    pub alignment_rms: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationReport {
    pub seed: u64,
    pub operations: Vec<OperationReport>,
    pub timing: TimingReport,
}

#[derive(Debug, Clone)]
pub struct ImitationOutput {
    pub trajectory: ExecutableTrajectory,
    pub report: ImitationReport,
    /// Transferred functions per operation.
    pub functions: Vec<Vec<SurfaceFunction>>,
    pub maps: Vec<FunctionalMap>,
}

/// Reproduces every demonstrated operation in `scene`.
///
/// Per operation: select the matching object, transfer the interaction
/// functions, threshold the RIF into a grasp region, choose a grasp, align
/// the environment supports to get the final pose and synthesize the
/// blended trajectory through the resulting goals.
pub fn imitate(bundle: &DemonstrationBundle, scene: &NewScene, config: &PipelineConfig) -> Result<ImitationOutput, PipelineError> {
    config.validate()?;
    bundle.validate()?;
    let mut timings = Vec::new();
    let scene_meshes: Vec<&TriangleMesh> = scene.scene.objects.iter().collect();
    let scene_shapes = prepare_all(&scene_meshes, config, &mut timings)?;

    let mut demo_ids: Vec<&str> = bundle.operations.iter().map(|o| o.object.as_str()).collect();
    demo_ids.sort();
    demo_ids.dedup();
    let demo_meshes: Vec<&TriangleMesh> = demo_ids.iter().map(|id| bundle.scene.object(id).expect("validated")).collect();
    let demo_shapes: HashMap<&str, PreparedShape> = demo_ids.iter().copied().zip(prepare_all(&demo_meshes, config, &mut timings)?).collect();

    let mut trajectory: Option<ExecutableTrajectory> = None;
    let mut reports = Vec::new();
    let mut functions = Vec::new();
    let mut maps = Vec::new();
    for op in &bundle.operations {
        let sel = &demo_shapes[op.object.as_str()];
        let outcome = match_operation(sel, &scene_shapes, config, &mut timings)?;
        let target = &scene_shapes[outcome.index];

        let t = Instant::now();
        let transferred = transfer_operation(op, &outcome.map, sel, target)?;
        timings.push((Stage::Transfer, t.elapsed()));

        let x0 = match &trajectory {
            Some(tr) => *tr.waypoints.last().expect("non-empty"),
            None => scene.start.unwrap_or(*op.segments[0].first()),
        };
        let t = Instant::now();
        let plan = plan_operation(op, sel, target, &outcome, &transferred, scene.grasps.as_deref(), config, &mut timings)?;
        let mut goals = vec![x0, plan.grasp];
        goals.extend_from_slice(&plan.later_goals);
        let demos: Vec<_> = op.segments.iter().collect();
        let exec = build_goal_list(&goals, &demos, &config.blend).at(Stage::Goals)?;
        timings.push((Stage::Goals, t.elapsed()));
        trajectory = Some(match trajectory {
            None => exec,
            Some(prev) => concatenate(prev, exec),
        });

        reports.push(OperationReport {
            object: op.object.clone(),
            selected: target.mesh.id().to_string(),
            selected_index: outcome.index,
            scores: outcome.scores.clone(),
            grasp_region: plan.region_size,
            grasp: plan.grasp.to_waypoint(),
            final_pose: goals.last().expect("non-empty").to_waypoint(),
            alignment_rms: plan.alignment_rms,
        });
        functions.push(transferred);
        maps.push(outcome.map);
    }
    Ok(ImitationOutput {
        trajectory: trajectory.expect("bundle has operations"),
        report: ImitationReport { seed: config.seed, operations: reports, timing: timing_report(&timings) },
        functions,
        maps,
    })
}

struct Plan {
    grasp: UnitDualQuaternion,
    /// Goals after the grasp, one per remaining segment.
    later_goals: Vec<UnitDualQuaternion>,
    region_size: usize,
    alignment_rms: Option<(f64, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn plan_operation(
    op: &SkillRecord,
    sel: &PreparedShape,
    target: &PreparedShape,
    outcome: &MatchOutcome,
    transferred: &[SurfaceFunction],
    external: Option<&[GraspCandidate]>,
    config: &PipelineConfig,
    timings: &mut Vec<(Stage, Duration)>,
) -> Result<Plan, PipelineError> {
    let t = Instant::now();
    let rif = transferred.iter().find(|f| f.kind == FunctionKind::Rif).expect("validated bundle has a RIF");
    let (centre, region_size, radius) = region_centre(&target.mesh, &rif.values, config.delta);
    // the demonstrated RIF as seen through the same band-limited transfer
    let k = outcome.map.k_source().min(outcome.map.k_target());
    let identity = FunctionalMap::identity(k, sel.mesh.id(), sel.mesh.id());
    let own = FunctionTransfer::new(&identity, &sel.basis, &sel.basis).at(Stage::GraspRegion)?;
    let demo_rif = own.apply(op.function(FunctionKind::Rif).expect("validated")).at(Stage::GraspRegion)?;
    let (demo_centre, _, _) = region_centre(&sel.mesh, &demo_rif.values, config.delta);
    timings.push((Stage::GraspRegion, t.elapsed()));
    let (Some(centre), Some(demo_centre)) = (centre, demo_centre) else {
        return Err(ImitationError::NoFeasibleGrasp { candidates: 0 }).at(Stage::GraspRegion);
    };

    let t = Instant::now();
    let g_dem = *op.grasp_pose();
    let offset = g_dem.translation() - demo_centre.coords;
    let a_dem = Vector3::from(op.approach);
    let grasp = match external {
        Some(cands) => {
            let reach = radius + config.lambda_d + offset.norm();
            filter_grasps(cands, &a_dem, config.theta, |g| (Point3::from(g.pose.translation()) - centre).norm() <= reach)
        }
        None => {
            let fallback = GraspCandidate {
                pose: UnitDualQuaternion::from_pose(&(centre.coords + offset), &g_dem.rotation()),
                score: 1.0,
                approach: op.approach,
            };
            filter_grasps(&[fallback], &a_dem, config.theta, |_| true)
        }
    }
    .at(Stage::Grasp)?
    .pose;
    timings.push((Stage::Grasp, t.elapsed()));

    // manipulation goals: the demonstrated gripper-frame motion after the grasp
    let mut later_goals: Vec<UnitDualQuaternion> = op.segments[1..].iter().map(|s| grasp * (g_dem.conj() * *s.last())).collect();
    let mut alignment_rms = None;
    if op.is_grasp() {
        let t = Instant::now();
        let displacement = op.displacement.to_pose().map_err(|e| PipelineError::BundleInconsistent(e.to_string()))?;
        let sel_support = support_union(op.eifs().map(|f| f.values.as_slice()), sel.mesh.vertex_count());
        let tgt_support = support_union(transferred.iter().filter(|f| f.kind == FunctionKind::Eif).map(|f| f.values.as_slice()), target.mesh.vertex_count());
        let sv = sel.mesh.vertices();
        let sel_pts: Vec<Point3<f64>> = sel_support.iter().map(|&i| displacement.transform_point(&sv[i])).collect();
        let tgt_pts: Vec<Point3<f64>> = tgt_support.iter().map(|&i| target.mesh.vertices()[i]).collect();
        let corr: Vec<usize> = tgt_support
            .iter()
            .map(|&y| {
                let s = sv[outcome.p2p.assignment[y]];
                let mut best = (0, f64::INFINITY);
                for (j, &i) in sel_support.iter().enumerate() {
                    let d = (sv[i] - s).norm_squared();
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best.0
            })
            .collect();
        let al = align_supports(&tgt_pts, &sel_pts, &corr, &config.icp).at(Stage::Alignment)?;
        let (_, x_eff_n) = final_poses(&grasp, &(al.transform * grasp), &grasp);
        *later_goals.last_mut().expect("grasp skills have a manipulation segment") = x_eff_n;
        alignment_rms = Some((al.closed_form_rms, *al.rms_history.last().expect("non-empty")));
        timings.push((Stage::Alignment, t.elapsed()));
    }
    Ok(Plan { grasp, later_goals, region_size, alignment_rms })
}

/// RIF-weighted centroid of the vertices at or above `delta`, the region
/// size and its radius about the centroid.
fn region_centre(mesh: &TriangleMesh, values: &[f64], delta: f64) -> (Option<Point3<f64>>, usize, f64) {
    let region: Vec<usize> = (0..values.len()).filter(|&i| values[i] >= delta && values[i] > 0.0).collect();
    let w: f64 = region.iter().map(|&i| values[i]).sum();
    if region.is_empty() || w <= 0.0 {
        return (None, 0, 0.0);
    }
    let v = mesh.vertices();
    let c: Vector3<f64> = region.iter().map(|&i| v[i].coords * values[i]).sum::<Vector3<f64>>() / w;
    let c = Point3::from(c);
    let radius = region.iter().map(|&i| (v[i] - c).norm()).fold(0.0, f64::max);
    (Some(c), region.len(), radius)
}

fn support_union<'a>(fs: impl Iterator<Item = &'a [f64]>, n: usize) -> Vec<usize> {
    let mut mark = vec![false; n];
    for f in fs {
        for (m, &v) in mark.iter_mut().zip(f) {
            *m |= v == 1.0;
        }
    }
    (0..n).filter(|&i| mark[i]).collect()
}

/// Appends `next`, whose first waypoint repeats the last one of `prev`.
fn concatenate(mut prev: ExecutableTrajectory, next: ExecutableTrajectory) -> ExecutableTrajectory {
    let shift = prev.waypoints.len() - 1;
    prev.waypoints.extend_from_slice(&next.waypoints[1..]);
    prev.segments.extend(next.segments.iter().map(|s| SegmentSpan { start: s.start + shift, end: s.end + shift }));
    prev
}

/// Transfers the functions of operation `op` into `scene` and compares
/// them with annotated per-vertex ground truth.
pub fn evaluate(
    bundle: &DemonstrationBundle,
    scene: &NewScene,
    op: usize,
    truth: &[(FunctionKind, Vec<f64>)],
    config: &PipelineConfig,
) -> Result<(EvaluationReport, Vec<SurfaceFunction>), PipelineError> {
    config.validate()?;
    bundle.validate()?;
    let record = bundle
        .operations
        .get(op)
        .ok_or_else(|| PipelineError::BundleInconsistent(format!("operation {op} of {}", bundle.operations.len())))?;
    let start = Instant::now();
    let mut timings = Vec::new();
    let sel_mesh = bundle.scene.object(&record.object).expect("validated");
    let mut meshes: Vec<&TriangleMesh> = vec![sel_mesh];
    meshes.extend(scene.scene.objects.iter());
    let mut shapes = prepare_all(&meshes, config, &mut timings)?;
    let sel = shapes.remove(0);
    let outcome = match_operation(&sel, &shapes, config, &mut timings)?;
    let target = &shapes[outcome.index];
    let transferred = transfer_operation(record, &outcome.map, &sel, target)?;
    let transfer_seconds = start.elapsed().as_secs_f64();

    let mut errors = Vec::new();
    let mut success = true;
    for (kind, gt) in truth {
        let Some(f) = transferred.iter().find(|f| f.kind == *kind) else {
            return Err(PipelineError::BundleInconsistent(format!("operation {op} has no {kind:?} function")));
        };
        let (mae, std) = evaluate_transfer(&f.values, gt)?;
        if *kind == FunctionKind::Rif {
            let v = target.mesh.vertices();
            let peak = |vals: &[f64]| vals.iter().enumerate().fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0;
            success &= (v[peak(&f.values)] - v[peak(gt)]).norm() <= config.lambda_d;
        }
        success &= mae <= SUCCESS_MAE;
        errors.push(FunctionError { kind: *kind, mae, std });
    }
    let total_mae = if errors.is_empty() { 0.0 } else { errors.iter().map(|e| e.mae).sum::<f64>() / errors.len() as f64 };
    Ok((EvaluationReport { functions: errors, total_mae, transfer_seconds, success: vec![success] }, transferred))
}
