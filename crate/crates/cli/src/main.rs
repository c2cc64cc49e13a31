use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use hoarir::metrics::format_comparison_table;
use hoarir::pipeline::{self, JobSpec, RunCounter};
use hoarir::{materials, MetricsReport, BAND_CENTERS_HZ};

#[derive(Parser)]
#[command(
    name = "hoarir",
    version,
    about = "Hybrid wave / ray simulator for Ambisonic room impulse responses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more rooms and write WAVs plus manifest.jsonl.
    Simulate {
        /// Job config (TOML); repeat for several rooms.
        #[arg(long, required = true)]
        scene: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed of every job.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Print acoustic parameters of one RIR's W channel as JSON.
    Metrics {
        #[arg(long)]
        rir: PathBuf,
        /// Analyse this ACN channel instead of W.
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Compare two directories of RIRs paired by relative path.
    Compare {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Emit JSON instead of the tab-separated table.
        #[arg(long)]
        json: bool,
    },
    /// RT60 histogram, volume and absorption summary of a manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Load, voxelise and place a scene without simulating it.
    ValidateScene {
        #[arg(long)]
        scene: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprint!("{msg}");
            error_line("usage", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<hoarir::Error>())
                .map_or("other", |h| h.kind());
            error_line(kind, &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

/// One JSON object on stderr for scripts to parse.
fn error_line(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            scene,
            out,
            seed,
            workers,
        } => simulate(&scene, &out, seed, workers),
        Command::Metrics { rir, channel } => {
            let ir = pipeline::read_ambix(&rir).with_context(|| format!("reading {}", rir.display()))?;
            let ch = ir
                .channels()
                .get(channel)
                .with_context(|| format!("{} has no channel {channel}", rir.display()))?;
            let report = MetricsReport::analyze(ch, ir.fs())?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Command::Compare { sim, reference, json } => {
            let stats = pipeline::compare_dirs(&sim, &reference)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{}", format_comparison_table(&stats));
            }
            Ok(())
        }
        Command::Stats { manifest } => {
            let entries = pipeline::read_manifest(&manifest)?;
            print!("{}", pipeline::dataset_stats(&entries)?);
            Ok(())
        }
        Command::ValidateScene { scene } => validate_scene(&scene),
    }
}

fn simulate(scenes: &[PathBuf], out: &Path, seed: Option<u64>, workers: usize) -> Result<()> {
    let jobs = scenes
        .iter()
        .map(|p| {
            let mut job = JobSpec::load(p)?;
            if let Some(s) = seed {
                job.seed = s;
            }
            Ok(job)
        })
        .collect::<Result<Vec<_>>>()?;
    let counter = RunCounter::new();
    let reports = pipeline::run_jobs(&jobs, out, workers, &counter)?;
    let mut failed = 0;
    for r in &reports {
        let rirs = r
            .entries
            .iter()
            .filter(|e| matches!(e, pipeline::ManifestEntry::Rir { .. }))
            .count();
        let errors = r
            .entries
            .iter()
            .filter(|e| matches!(e, pipeline::ManifestEntry::Error { .. }))
            .count();
        let rt = r.mean_rt60.map_or("-".into(), |t| format!("{t:.3}"));
        println!(
            "{}\trirs={rirs}\terrors={errors}\tgated={}\tmean_rt60={rt}\tsolver_runs={}",
            r.scene_id, r.gated, r.solver_runs
        );
        if rirs == 0 && !r.gated {
            failed += 1;
        }
    }
    println!("manifest\t{}", out.join("manifest.jsonl").display());
    if failed == reports.len() {
        anyhow::bail!("no room produced impulse responses");
    }
    Ok(())
}

fn validate_scene(path: &Path) -> Result<()> {
    let job = JobSpec::load(path)?;
    let room = pipeline::prepare_room(&job)?;
    let mesh = &room.mesh;
    println!("scene\t{}", room.scene_id);
    println!("triangles\t{}", mesh.triangle_count());
    let mut labels: Vec<(&str, &str)> = mesh
        .surface_labels
        .iter()
        .zip(&mesh.material_ids)
        .map(|(l, &m)| (l.as_str(), room.table.get(m).name.as_str()))
        .collect();
    labels.sort();
    labels.dedup();
    for (label, material) in labels {
        println!("material\t{label}\t{material}");
    }
    let [nx, ny, nz] = room.grid.dims();
    println!("grid\t{nx}x{ny}x{nz}\tdx={:.4}", room.grid.dx());
    println!("air_regions\t{}", room.grid.region_count());
    println!("air_volume_m3\t{:.2}", room.air_volume);
    println!(
        "wave_plan\tfs={:.1}\tsteps={}\tmemory_bytes={}",
        room.plan.fs_int, room.plan.steps, room.plan.memory_bytes
    );
    for (i, p) in room.placement.sources.iter().enumerate() {
        println!("source\t{i}\t{:.3}\t{:.3}\t{:.3}", p.x, p.y, p.z);
    }
    for (i, p) in room.placement.receivers.iter().enumerate() {
        println!("receiver\t{i}\t{:.3}\t{:.3}\t{:.3}", p.x, p.y, p.z);
    }
    for (b, fc) in BAND_CENTERS_HZ.iter().enumerate() {
        match materials::sabine_rt60(mesh, &room.table, b) {
            Ok(t) => println!("sabine_rt60\t{fc}\t{t:.3}"),
            Err(e) => println!("sabine_rt60\t{fc}\t-\t{e}"),
        }
    }
    Ok(())
}
