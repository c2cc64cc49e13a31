//! One room end to end: voxelise, place, simulate both bands, merge, gate.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::output::{generator_version, write_ambix, ManifestEntry, PairIds, CONVENTION_TAG};
use super::placement::sample_placements;
use super::{JobSpec, Positions};
use crate::dsp::ComplementaryBank;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::hybrid::{hybridize, AmbisonicIR, CrossoverSpec};
use crate::materials::{broadband_admittance, MaterialTable, TokenOverlapMatcher, NUM_BANDS};
use crate::metrics::MetricsReport;
use crate::rayengine::{deposit_to_sh, trace, RayScene, TraceParams};
use crate::scene::{load_mesh, voxelize, Placement, TriMesh, VoxelGrid};
use crate::sharm::{build_encoder, encode_frames, load_grid, EncodingMatrix, ShConfig, ARRAY_RADIUS};
use crate::wavesolver::{
    self, deconvolve_pulse, make_batches, resample_and_limit, FdtdParams, PressureTraces, ProbeMode, ReceiverBatch,
    SimulationPlan, SourcePulse,
};

/// Wiener regulariser for removing the excitation pulse.
const DECONV_EPS: f64 = 1e-4;
/// The wave band is kept up to this multiple of the crossover before merging.
const LOW_BAND_HEADROOM: f64 = 1.25;

/// Counts wave-solver runs.
#[derive(Debug, Default)]
pub struct RunCounter(AtomicUsize);

impl RunCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }
}

/// Everything about a room that precedes simulation.
#[derive(Debug, Clone)]
pub struct PreparedRoom {
    pub scene_id: String,
    pub mesh: TriMesh,
    pub table: MaterialTable,
    pub grid: VoxelGrid,
    pub placement: Placement,
    pub air_volume: f64,
    /// Surface-area-weighted absorption per band.
    pub mean_absorption: [f64; NUM_BANDS],
    pub plan: SimulationPlan,
}

pub fn fdtd_params(job: &JobSpec) -> FdtdParams {
    FdtdParams {
        f_max: job.crossover_hz,
        ppw: job.ppw,
        dx_override: job.dx_override,
        duration: job.fdtd_seconds(),
        memory_budget: job.memory_budget,
        ..FdtdParams::default()
    }
}

pub fn prepare_room(job: &JobSpec) -> Result<PreparedRoom> {
    job.validate()?;
    let loaded = load_mesh(&job.mesh)?;
    if loaded.dropped_degenerate > 0 {
        log::warn!(
            "{}: dropped {} degenerate triangles",
            job.mesh.display(),
            loaded.dropped_degenerate
        );
    }
    let mut mesh = loaded.mesh;
    let table = match &job.materials {
        Some(p) => MaterialTable::load(p)?,
        None => MaterialTable::bundled(),
    };
    let overrides: HashMap<String, String> = job.overrides.clone().into_iter().collect();
    mesh.assign_materials(&table, &overrides, &TokenOverlapMatcher)?;

    let params = fdtd_params(job);
    let admittance: Vec<f64> = table
        .entries()
        .iter()
        .map(|m| broadband_admittance(m, params.f_max))
        .collect();
    let grid = voxelize(&mesh, params.dx(), &admittance, job.cell_budget)?;

    let (ns, nr) = (job.sources.len(), job.receivers.len());
    let mut placement = match (&job.sources, &job.receivers) {
        (Positions::Explicit(_), Positions::Explicit(_)) => Placement {
            sources: vec![],
            receivers: vec![],
            receiver_height: crate::scene::RECEIVER_HEIGHT,
        },
        _ => sample_placements(&grid, mesh.bounds().min.z, ns, nr, job.seed)?,
    };
    if let Positions::Explicit(v) = &job.sources {
        placement.sources = v.iter().map(|p| Vec3::from(*p)).collect();
    }
    if let Positions::Explicit(v) = &job.receivers {
        placement.receivers = v.iter().map(|p| Vec3::from(*p)).collect();
    }
    let region = placement.validate(&grid, ARRAY_RADIUS)?;

    let mut absorption = [0.0; NUM_BANDS];
    let mut area = 0.0;
    for t in 0..mesh.triangle_count() {
        let a = mesh.triangle_area(t);
        area += a;
        for (acc, alpha) in absorption.iter_mut().zip(&table.get(mesh.material_ids[t]).absorption) {
            *acc += a * alpha;
        }
    }
    let plan = wavesolver::plan(&params, &grid)?;
    Ok(PreparedRoom {
        scene_id: job.scene_id(),
        air_volume: grid.air_volume(region),
        mean_absorption: absorption.map(|x| x / area),
        mesh,
        table,
        grid,
        placement,
        plan,
    })
}

/// Outcome of one room.
#[derive(Debug, Clone)]
pub struct RoomReport {
    pub scene_id: String,
    /// Sorted by pair.
    pub entries: Vec<ManifestEntry>,
    pub gated: bool,
    pub mean_rt60: Option<f64>,
    pub solver_runs: usize,
}

struct PairFailure {
    kind: String,
    message: String,
}

impl From<&Error> for PairFailure {
    fn from(e: &Error) -> Self {
        PairFailure {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

struct PairResult {
    report: MetricsReport,
    file: String,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn pair_seed(seed: u64, pair: PairIds) -> u64 {
    splitmix(splitmix(seed) ^ ((pair.source as u64) << 32 | pair.receiver as u64))
}

fn fit_length(mut x: Vec<f64>, len: usize) -> Vec<f64> {
    x.resize(len, 0.0);
    x
}

/// Encoded low band for every array of one batch.
fn low_band(
    job: &JobSpec,
    plan: &SimulationPlan,
    grid: &VoxelGrid,
    source: &Vec3,
    batch: &ReceiverBatch,
    enc: &EncodingMatrix,
) -> Result<Vec<AmbisonicIR>> {
    let raw = wavesolver::run(plan, grid, source, batch)?;
    let pulse = SourcePulse::for_f_max(plan.f_max);
    let traces = PressureTraces {
        traces: deconvolve_pulse(&raw.traces, &pulse, raw.fs, DECONV_EPS),
        ..raw
    };
    let limited = resample_and_limit(&traces, job.fs_out, LOW_BAND_HEADROOM * job.crossover_hz)?;
    let len = (job.duration * job.fs_out).round() as usize;
    let mics = enc.mics();
    (0..batch.array_centers.len())
        .map(|a| {
            let sigs: Vec<Vec<f64>> = limited
                .array(a, mics)
                .iter()
                .map(|s| fit_length(s.clone(), len))
                .collect();
            AmbisonicIR::new(enc.config, job.fs_out, encode_frames(&sigs, enc)?)
        })
        .collect()
}

/// Simulates every source-receiver pair of `job`, writes the WAVs under
/// `<out_root>/<scene>/` unless the room is gated, and returns its manifest
/// records. A room fails only when every pair fails.
pub fn run_room(job: &JobSpec, out_root: &Path, counter: &RunCounter) -> Result<RoomReport> {
    let scene = job.scene_id();
    let tag = |e: Error| e.tagged(format!("room {scene}"));
    let room = prepare_room(job).map_err(tag)?;
    let sphere = load_grid(&job.grid).map_err(tag)?;
    let grid_order = ((sphere.len() as f64).sqrt().floor() as usize).saturating_sub(1);
    let low_order = job.order.min(grid_order);
    if low_order < job.order {
        log::warn!(
            "{scene}: wave band limited to order {low_order} by the {} grid",
            sphere.name
        );
    }
    let enc = build_encoder(&sphere, ShConfig::ambix(low_order).map_err(tag)?, job.regularization).map_err(tag)?;
    let high_config = ShConfig::ambix(job.order).map_err(tag)?;
    let ray_scene = RayScene::new(&room.mesh, &room.table).map_err(tag)?;
    let bank = ComplementaryBank::new(job.fs_out);
    let crossover = CrossoverSpec {
        f_c: job.crossover_hz,
        ..CrossoverSpec::default()
    };
    let batches = make_batches(
        &room.grid,
        &sphere,
        &room.placement.receivers,
        job.batch_size,
        ProbeMode::Snap,
    )
    .map_err(tag)?;

    let staging = out_root.join(format!(".{scene}.staging"));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;

    let runs = AtomicUsize::new(0);
    let sources = &room.placement.sources;
    let receivers = &room.placement.receivers;
    let outcomes: Vec<Vec<std::result::Result<PairResult, PairFailure>>> = sources
        .par_iter()
        .enumerate()
        .map(|(s, src)| {
            let mut lows: Vec<std::result::Result<AmbisonicIR, PairFailure>> = Vec::new();
            for batch in &batches {
                counter.bump();
                runs.fetch_add(1, Ordering::SeqCst);
                match low_band(job, &room.plan, &room.grid, src, batch, &enc) {
                    Ok(irs) => lows.extend(irs.into_iter().map(Ok)),
                    Err(e) => {
                        let e = e.tagged(format!("room {scene} source {s}"));
                        lows.extend(batch.array_centers.iter().map(|_| Err(PairFailure::from(&e))));
                    }
                }
            }
            lows.into_par_iter()
                .enumerate()
                .map(|(r, low)| {
                    let pair = PairIds { source: s, receiver: r };
                    let low = low?;
                    run_pair(
                        job,
                        &ray_scene,
                        &bank,
                        &crossover,
                        high_config,
                        src,
                        &receivers[r],
                        pair,
                        &low,
                        &staging,
                    )
                    .map_err(|e| PairFailure::from(&e.tagged(format!("room {scene} source {s} receiver {r}"))))
                })
                .collect()
        })
        .collect();

    let generator = generator_version();
    let rt60s: Vec<f64> = outcomes
        .iter()
        .flatten()
        .filter_map(|o| o.as_ref().ok().and_then(|p| p.report.rt60()))
        .collect();
    let ok_pairs = outcomes.iter().flatten().filter(|o| o.is_ok()).count();
    if ok_pairs == 0 {
        std::fs::remove_dir_all(&staging)?;
        let first = outcomes.iter().flatten().find_map(|o| o.as_ref().err());
        return Err(Error::Config(format!(
            "room {scene}: every pair failed{}",
            first.map_or(String::new(), |f| format!("; first: {}", f.message))
        )));
    }
    let mean_rt60 = (!rt60s.is_empty()).then(|| rt60s.iter().sum::<f64>() / rt60s.len() as f64);
    let gated = mean_rt60.is_some_and(|m| m > job.rt60_gate);

    let mut entries = Vec::new();
    if gated {
        std::fs::remove_dir_all(&staging)?;
        entries.push(ManifestEntry::Gate {
            scene_id: scene.clone(),
            pair: None,
            rt60: mean_rt60.expect("gated rooms have a mean"),
            rt60_gate: job.rt60_gate,
            generator: generator.clone(),
        });
    }
    for (s, row) in outcomes.iter().enumerate() {
        for (r, o) in row.iter().enumerate() {
            let pair = PairIds { source: s, receiver: r };
            match o {
                Err(f) => entries.push(ManifestEntry::Error {
                    scene_id: scene.clone(),
                    pair: Some(pair),
                    error_kind: f.kind.clone(),
                    message: f.message.clone(),
                    generator: generator.clone(),
                }),
                Ok(_) if gated => {}
                Ok(p) => {
                    let rt60 = p.report.rt60();
                    if let Some(t) = rt60.filter(|&t| t > job.rt60_gate) {
                        std::fs::remove_file(staging.join(&p.file))?;
                        entries.push(ManifestEntry::Gate {
                            scene_id: scene.clone(),
                            pair: Some(pair),
                            rt60: t,
                            rt60_gate: job.rt60_gate,
                            generator: generator.clone(),
                        });
                        continue;
                    }
                    entries.push(ManifestEntry::Rir {
                        rir_id: format!("{scene}/{}", p.file.trim_end_matches(".wav")),
                        scene_id: scene.clone(),
                        pair,
                        source_position: sources[s].into(),
                        receiver_position: receivers[r].into(),
                        rt60,
                        t20_bands: p.report.bands.iter().map(|b| b.as_ref().and_then(|b| b.t20)).collect(),
                        drr_db: p.report.broadband.drr,
                        path: format!("{scene}/{}", p.file),
                        convention: CONVENTION_TAG.into(),
                        order: low_order,
                        channels: (low_order + 1) * (low_order + 1),
                        fs: job.fs_out,
                        crossover_hz: job.crossover_hz,
                        air_volume_m3: room.air_volume,
                        mean_absorption: room.mean_absorption,
                        generator: generator.clone(),
                    });
                }
            }
        }
    }
    if !gated {
        let dest = out_root.join(&scene);
        if dest.exists() {
            std::fs::remove_dir_all(&dest)?;
        }
        std::fs::rename(&staging, &dest)?;
    }
    entries.sort_by_key(|e| e.sort_key());
    Ok(RoomReport {
        scene_id: scene,
        entries,
        gated,
        mean_rt60,
        solver_runs: runs.into_inner(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_pair(
    job: &JobSpec,
    ray_scene: &RayScene,
    bank: &ComplementaryBank,
    crossover: &CrossoverSpec,
    high_config: ShConfig,
    src: &Vec3,
    rcv: &Vec3,
    pair: PairIds,
    low: &AmbisonicIR,
    staging: &Path,
) -> Result<PairResult> {
    let params = TraceParams {
        ray_count: job.ray_count,
        max_bounces: job.max_bounces,
        seed: pair_seed(job.seed, pair),
        max_time: job.duration,
        ..TraceParams::default()
    };
    let traced = trace(ray_scene, src, rcv, &params)?;
    let acc = deposit_to_sh(&traced.deposits, high_config, job.fs_out, job.duration, bank)?;
    let high = AmbisonicIR::new(high_config, job.fs_out, acc.channels)?;
    let (merged, info) = hybridize(low, &high, crossover)?;
    log::debug!(
        "pair {}/{}: offset {} samples, gain {:.4}",
        pair.source,
        pair.receiver,
        info.offset_samples,
        info.gain
    );
    let report = MetricsReport::analyze(merged.w(), merged.fs())?;
    let file = format!("s{}_r{}.wav", pair.source, pair.receiver);
    write_ambix(&merged, &staging.join(&file))?;
    Ok(PairResult { report, file })
}

/// Runs several rooms on a pool of `workers` threads and appends their
/// records to `<out_root>/manifest.jsonl` in job order. Room failures become
/// error records.
pub fn run_jobs(jobs: &[JobSpec], out_root: &Path, workers: usize, counter: &RunCounter) -> Result<Vec<RoomReport>> {
    std::fs::create_dir_all(out_root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<RoomReport>> =
        pool.install(|| jobs.par_iter().map(|j| run_room(j, out_root, counter)).collect());
    let manifest = out_root.join("manifest.jsonl");
    let mut reports = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(rep) => {
                super::append_manifest(&manifest, &rep.entries)?;
                reports.push(rep);
            }
            Err(e) => {
                log::error!("{e}");
                let entry = ManifestEntry::Error {
                    scene_id: job.scene_id(),
                    pair: None,
                    error_kind: e.kind().into(),
                    message: e.to_string(),
                    generator: generator_version(),
                };
                super::append_manifest(&manifest, std::slice::from_ref(&entry))?;
                reports.push(RoomReport {
                    scene_id: job.scene_id(),
                    entries: vec![entry],
                    gated: false,
                    mean_rt60: None,
                    solver_runs: 0,
                });
            }
        }
    }
    Ok(reports)
}
