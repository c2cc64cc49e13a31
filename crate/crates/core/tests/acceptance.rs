//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use hoarir::dsp::magnitude_spectrum;
use hoarir::hybrid::merge;
use hoarir::materials::{sabine_rt60, MaterialSpec};
use hoarir::metrics::{compare, drr, format_comparison_table, onset_detect, rt_from_edf, schroeder_edf, T20_RANGE};
use hoarir::pipeline::{self, compare_dirs, read_ambix, read_manifest, run_jobs, write_ambix, RunCounter};
use hoarir::rayengine::{image_source_oracle, trace, RayScene, Shoebox};
use hoarir::scene::{load_mesh, voxelize};
use hoarir::sharm::{build_encoder, load_grid, ShConfig};
use hoarir::wavesolver::{self, make_batches, FdtdParams, ProbeMode, Simulation};
use hoarir::{
    AmbisonicIR, CrossoverSpec, ManifestEntry, MaterialTable, MetricsReport, TraceParams, TriMesh, Vec3, NUM_BANDS,
    SPEED_OF_SOUND,
};
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Two runs of the bundled sample rooms with one and two workers.
struct SampleRuns {
    _tmp: TempDir,
    a: std::path::PathBuf,
    b: std::path::PathBuf,
    seconds: f64,
}

fn sample_runs() -> SampleRuns {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("w1"), tmp.path().join("w2"));
    let jobs = common::sample_jobs();
    let t = Instant::now();
    run_jobs(&jobs, &a, 1, &RunCounter::new()).unwrap();
    run_jobs(&jobs, &b, 2, &RunCounter::new()).unwrap();
    SampleRuns {
        _tmp: tmp,
        a,
        b,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn modal_accuracy() -> Outcome {
    let t = Instant::now();
    let size = [5.0, 4.0, 3.0];
    let dx = 1.0 / 27.0;
    let mut mesh = TriMesh::cuboid(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0), "wall").unwrap();
    mesh.set_uniform_material(0);
    let grid = voxelize(&mesh, dx, &[0.0], u64::MAX).unwrap();
    let params = FdtdParams {
        dx_override: Some(dx),
        duration: 1.0,
        ..FdtdParams::default()
    };
    let ppw = SPEED_OF_SOUND / (params.f_max * dx);
    let plan = wavesolver::plan(&params, &grid).unwrap();
    let mut sim = Simulation::new(&plan, &grid, &Vec3::new(0.31, 0.27, 0.35)).unwrap();
    let probe = grid.cell_of(&Vec3::new(4.62, 3.71, 2.58)).unwrap();
    let mut trace = Vec::with_capacity(plan.steps);
    for _ in 0..plan.steps {
        sim.step();
        trace.push(f64::from(sim.pressure()[probe]));
    }
    let mean = trace.iter().sum::<f64>() / trace.len() as f64;
    let n = trace.len();
    let windowed: Vec<f64> = trace
        .iter()
        .enumerate()
        .map(|(k, v)| (v - mean) * (0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos()))
        .collect();
    let n_fft = 1 << 20;
    let spec = magnitude_spectrum(&windowed, n_fft);
    let df = plan.fs_int / n_fft as f64;

    let mut modes: Vec<f64> = Vec::new();
    for l in 0..4 {
        for m in 0..4 {
            for k in 0..4 {
                if l + m + k > 0 {
                    let q = |i: usize, len: f64| (i as f64 / len).powi(2);
                    modes.push(SPEED_OF_SOUND / 2.0 * (q(l, size[0]) + q(m, size[1]) + q(k, size[2])).sqrt());
                }
            }
        }
    }
    modes.sort_by(f64::total_cmp);
    // a mode counts when a local maximum inside the window is within 20 dB of
    // the strongest low mode; Hann sidelobes sit more than 31 dB down
    let top = spec[(20.0 / df) as usize..(80.0 / df) as usize]
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    let mut found = Vec::new();
    for &f in &modes[..5] {
        let (lo, hi) = ((0.98 * f / df).ceil() as usize, (1.02 * f / df).floor() as usize);
        let bin = (lo..=hi)
            .filter(|&i| spec[i] > spec[i - 1] && spec[i] > spec[i + 1] && spec[i] > 0.1 * top)
            .min_by(|a, b| (*a as f64 * df - f).abs().total_cmp(&(*b as f64 * df - f).abs()));
        let Some(bin) = bin else {
            return Err(format!("no spectral peak within 2% of the {f:.2} Hz mode"));
        };
        let peak = bin as f64 * df;
        worst = worst.max((peak / f - 1.0).abs());
        found.push(format!("{f:.1}->{peak:.2}"));
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst < 0.02 && ppw >= 10.0 && secs < 60.0,
        format!(
            "ppw {ppw:.1}, modes [{}] Hz, worst {:.2}% (tol 2%), {secs:.1} s (target < 60 s)",
            found.join(", "),
            100.0 * worst
        ),
    )
}

fn geometric_accuracy() -> Outcome {
    let t = Instant::now();
    let fs = 48000.0;
    let mut mesh = load_mesh(&common::scenes_dir().join("shoebox.obj")).unwrap().mesh;
    mesh.set_uniform_material(0);
    let table = MaterialTable::new(vec![MaterialSpec::uniform("rigid", 0.0, 0.0).unwrap()], 0).unwrap();
    let scene = RayScene::new(&mesh, &table).unwrap();
    let room = Shoebox::from_mesh(&mesh).unwrap();
    let (s, r) = (Vec3::new(1.2, 1.1, 1.3), Vec3::new(3.6, 2.7, 1.5));
    let params = TraceParams {
        ray_count: 50_000,
        max_bounces: 2,
        max_time: 0.1,
        ..TraceParams::default()
    };
    let out = trace(&scene, &s, &r, &params).unwrap();
    let images = image_source_oracle(&room, &[0.0; NUM_BANDS], &s, &r, 2, SPEED_OF_SOUND).unwrap();
    let sample = |t: f64| (t * fs).round() as i64;
    let missing = images
        .iter()
        .filter(|img| {
            !out.deposits
                .iter()
                .any(|d| (sample(d.time) - sample(img.time)).abs() <= 1)
        })
        .count();
    let secs = t.elapsed().as_secs_f64();
    check(
        missing == 0 && images.len() == 25 && secs < 30.0,
        format!(
            "{} of {} image arrivals (orders 0-2) matched within 1 sample, {} deposits, {secs:.1} s (target < 30 s)",
            images.len() - missing,
            images.len(),
            out.deposits.len()
        ),
    )
}

fn rt60_oracle(runs: &SampleRuns) -> Outcome {
    let entries = read_manifest(&runs.a.join("manifest.jsonl")).unwrap();
    let rts: Vec<f64> = entries
        .iter()
        .filter(|e| e.scene_id() == "shoebox")
        .filter_map(|e| match e {
            ManifestEntry::Rir { rt60, .. } => *rt60,
            _ => None,
        })
        .collect();
    if rts.is_empty() {
        return Err("shoebox produced no RT60 values".into());
    }
    let job = &common::sample_jobs()[0];
    let mut mesh = load_mesh(&job.mesh).unwrap().mesh;
    let table = MaterialTable::load(job.materials.as_ref().unwrap()).unwrap();
    mesh.set_uniform_material(0);
    let sabine = sabine_rt60(&mesh, &table, 2).unwrap();
    let mean = rts.iter().sum::<f64>() / rts.len() as f64;
    let err = mean / 0.514 - 1.0;
    check(
        err.abs() <= 0.25 && (sabine - 0.514).abs() < 1e-3,
        format!(
            "mean broadband RT60 {mean:.3} s over {} pairs vs Sabine {sabine:.3} s: {:+.1}% (tol 25%); sample run took {:.0} s",
            rts.len(),
            100.0 * err,
            runs.seconds / 2.0
        ),
    )
}

fn crossover_transparency() -> Outcome {
    let fs = 48000.0;
    let len = 48000;
    let mut x = vec![0.0; len];
    x[len / 2] = 1.0;
    let ir = AmbisonicIR::new(ShConfig::ambix(1).unwrap(), fs, vec![x.clone(); 4]).unwrap();
    let out = merge(&ir, &ir, &CrossoverSpec::default()).unwrap();
    let n_fft = 1 << 17;
    let a = magnitude_spectrum(&x, n_fft);
    let mut worst: f64 = 0.0;
    for ch in out.channels() {
        let b = magnitude_spectrum(ch, n_fft);
        for k in 0..a.len() {
            let f = k as f64 * fs / n_fft as f64;
            if (20.0..=20000.0).contains(&f) {
                worst = worst.max((20.0 * (b[k] / a[k]).log10()).abs());
            }
        }
    }
    check(
        worst <= 0.5,
        format!("max deviation {worst:.2e} dB over 20 Hz-20 kHz (tol 0.5 dB)"),
    )
}

fn sh_round_trip(runs: &SampleRuns) -> Outcome {
    let grid = load_grid("fliege64").unwrap();
    let cfg = ShConfig::ambix(7).unwrap();
    let enc = build_encoder(&grid, cfg, 0.0).unwrap();
    let product = &enc.matrix * grid.sampling_matrix(&cfg);
    let mut leak: f64 = 0.0;
    for i in 0..product.nrows() {
        for j in 0..product.ncols() {
            let want = if i == j { 1.0 } else { 0.0 };
            leak = leak.max((product[(i, j)] - want).abs());
        }
    }
    let entries = read_manifest(&runs.a.join("manifest.jsonl")).unwrap();
    let mut files = 0;
    let mut bad = Vec::new();
    for e in &entries {
        if let ManifestEntry::Rir {
            path, channels, order, ..
        } = e
        {
            let ir = read_ambix(&runs.a.join(path)).unwrap();
            files += 1;
            if *channels != 64 || *order != 7 || ir.channels().len() != 64 {
                bad.push(path.clone());
            }
        }
    }
    check(
        leak < 1e-6 && cfg.channels() == 64 && files > 0 && bad.is_empty(),
        format!(
            "max |E·Y - I| = {leak:.2e} (tol 1e-6), {files} output WAVs with 64 channels, {} mismatched",
            bad.len()
        ),
    )
}

fn batching() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let job = common::cuboid_job(
        tmp.path(),
        "batching",
        [6.0, 5.0, 3.0],
        0.5,
        0.3,
        "sources = 5\nreceivers = 10\nduration = 0.15\nppw = 5.0\nray_count = 1500\nseed = 4",
    );
    let counter = RunCounter::new();
    let reports = run_jobs(std::slice::from_ref(&job), &tmp.path().join("out"), 1, &counter).unwrap();
    let pairs = reports[0].entries.iter().filter(|e| e.pair().is_some()).count();
    let conceptual = 5 * 10 * 64;
    let runs = counter.get();
    let formula = wavesolver::run_count(5, 10, job.batch_size);

    // batched vs one-array-per-run traces on a small scene
    let mut mesh = load_mesh(&common::scenes_dir().join("shoebox.obj")).unwrap().mesh;
    mesh.set_uniform_material(0);
    let grid = voxelize(&mesh, 0.1, &[0.05], u64::MAX).unwrap();
    let params = FdtdParams {
        dx_override: Some(0.1),
        duration: 0.05,
        ..FdtdParams::default()
    };
    let plan = wavesolver::plan(&params, &grid).unwrap();
    let sphere = load_grid("fliege64").unwrap();
    let centers = [
        Vec3::new(2.5, 2.0, 1.5),
        Vec3::new(1.2, 1.0, 1.4),
        Vec3::new(3.8, 3.0, 1.6),
    ];
    let src = Vec3::new(3.9, 1.1, 2.2);
    let joint = make_batches(&grid, &sphere, &centers, 3, ProbeMode::Snap).unwrap();
    let single = make_batches(&grid, &sphere, &centers, 1, ProbeMode::Snap).unwrap();
    let together = wavesolver::run(&plan, &grid, &src, &joint[0]).unwrap().traces;
    let apart: Vec<Vec<f64>> = single
        .iter()
        .flat_map(|b| wavesolver::run(&plan, &grid, &src, b).unwrap().traces)
        .collect();
    let identical = together == apart;
    check(
        runs == 10 && formula == 10 && conceptual / runs == 320 && pairs == 50 && identical,
        format!(
            "{runs} solver runs for 5x10 pairs (formula {formula}), ratio {} vs {conceptual} single-probe runs, {pairs} pair records; batched traces bit-identical: {identical}",
            conceptual / runs.max(1)
        ),
    )
}

fn gate() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let job = common::cuboid_job(
        tmp.path(),
        "live",
        [5.0, 4.0, 3.0],
        0.07,
        0.3,
        "sources = [[1.2, 1.1, 1.3]]\nreceivers = [[3.6, 2.7, 1.5]]\nduration = 1.0\nppw = 5.0\nray_count = 4000\nmax_bounces = 400\nseed = 2",
    );
    let mut mesh = load_mesh(&job.mesh).unwrap().mesh;
    mesh.set_uniform_material(0);
    let sabine = sabine_rt60(&mesh, &MaterialTable::load(job.materials.as_ref().unwrap()).unwrap(), 2).unwrap();
    let out = tmp.path().join("out");
    let reports = run_jobs(std::slice::from_ref(&job), &out, 1, &RunCounter::new()).unwrap();
    let rep = &reports[0];
    let rirs = rep
        .entries
        .iter()
        .filter(|e| matches!(e, ManifestEntry::Rir { .. }))
        .count();
    let gate_rt = rep.entries.iter().find_map(|e| match e {
        ManifestEntry::Gate { pair: None, rt60, .. } => Some(*rt60),
        _ => None,
    });
    let wavs = common::tree_bytes(&out)
        .keys()
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .count();
    check(
        rep.gated && rirs == 0 && wavs == 0 && gate_rt.is_some_and(|t| t > 1.2),
        format!(
            "Sabine {sabine:.2} s room: gated {}, gate record RT60 {}, {rirs} RIR records, {wavs} WAV files",
            rep.gated,
            gate_rt.map_or("-".into(), |t| format!("{t:.2} s"))
        ),
    )
}

fn metric_oracles() -> Outcome {
    let fs = 48000.0;
    let mut errs = Vec::new();
    for target in [0.2, 0.5, 1.0] {
        let ir: Vec<f64> = (0..(2.0 * target * fs) as usize)
            .map(|n| 10f64.powf(-3.0 * n as f64 / (fs * target)))
            .collect();
        let edf = schroeder_edf(&ir, 0).unwrap();
        let t20 = rt_from_edf(&edf, fs, T20_RANGE).unwrap();
        errs.push((t20 / target - 1.0).abs());
    }
    let mut two = vec![0.0; 48000];
    two[4800] = 1.0;
    two[4800 + 960] = 0.5;
    let d = drr(&two, fs, onset_detect(&two).unwrap()).unwrap();

    let noise: Vec<f64> = (0..24000)
        .map(|n| (((n * 7919) % 1009) as f64 / 504.5 - 1.0) * (-(n as f64) / 3000.0).exp())
        .collect();
    let rep = MetricsReport::analyze(&noise, fs).unwrap();
    let stats = compare(std::slice::from_ref(&rep), std::slice::from_ref(&rep)).unwrap();
    let zero = std::iter::once(&stats.broadband).chain(&stats.bands).all(|b| {
        [b.t20_mape, b.edf_mse, b.drr_mse]
            .iter()
            .all(|v| v.is_none_or(|x| x == 0.0))
    }) && stats.broadband.t20_mape == Some(0.0);
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    check(
        worst < 0.005 && (d - 6.02).abs() <= 0.05 && zero,
        format!(
            "T20 errors {:.3}/{:.3}/{:.3}% (tol 0.5%), two-spike DRR {d:.3} dB (6.02 +/- 0.05), compare(x, x) all zero: {zero}",
            100.0 * errs[0],
            100.0 * errs[1],
            100.0 * errs[2]
        ),
    )
}

fn determinism(runs: &SampleRuns) -> Outcome {
    let (a, b) = (common::tree_bytes(&runs.a), common::tree_bytes(&runs.b));
    let wavs = a.keys().filter(|p| p.extension().is_some_and(|x| x == "wav")).count();
    let differing =
        a.iter().filter(|(k, v)| b.get(*k) != Some(v)).count() + b.keys().filter(|k| !a.contains_key(*k)).count();
    check(
        differing == 0 && wavs > 0 && a.contains_key(std::path::Path::new("manifest.jsonl")),
        format!(
            "3-room sample with 1 and 2 workers: {} files ({wavs} WAVs + manifest), {differing} differ",
            a.len()
        ),
    )
}

fn comparison_report(runs: &SampleRuns) -> Outcome {
    let identity = compare_dirs(&runs.a, &runs.b).unwrap();
    let table = format_comparison_table(&identity);
    let lines: Vec<&str> = table.lines().collect();
    let names = ["broadband", "125", "250", "500", "1000", "2000", "4000"];
    let shape_ok = lines.len() == 8
        && lines[0] == "band\tt20_mape_pct\tedf_mse_db2\tdrr_mse_db2\tpairs"
        && lines[1..]
            .iter()
            .zip(names)
            .all(|(l, n)| l.split('\t').count() == 5 && l.starts_with(&format!("{n}\t")));
    let zero = std::iter::once(&identity.broadband).chain(&identity.bands).all(|b| {
        [b.t20_mape, b.edf_mse, b.drr_mse]
            .iter()
            .all(|v| v.is_none_or(|x| x == 0.0))
    });

    // a reference set with a faster decay must give non-zero errors
    let tmp = tempfile::tempdir().unwrap();
    for e in read_manifest(&runs.a.join("manifest.jsonl")).unwrap() {
        if let ManifestEntry::Rir { path, .. } = e {
            let ir = read_ambix(&runs.a.join(&path)).unwrap();
            let fs = ir.fs();
            let chans = ir
                .channels()
                .iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .map(|(n, v)| v * (-(n as f64) / (0.08 * fs)).exp())
                        .collect()
                })
                .collect();
            let damped = AmbisonicIR::new(ir.config(), fs, chans).unwrap();
            let dest = tmp.path().join(&path);
            std::fs::create_dir_all(dest.parent().unwrap()).unwrap();
            write_ambix(&damped, &dest).unwrap();
        }
    }
    let other = compare_dirs(&runs.a, tmp.path()).unwrap();
    let moved = other.broadband.t20_mape.is_some_and(|v| v > 1.0) && other.broadband.edf_mse.is_some_and(|v| v > 0.0);
    check(
        shape_ok && zero && moved && identity.broadband.pairs > 0,
        format!(
            "table 8x5 ok: {shape_ok}, identity all zero over {} pairs: {zero}, damped reference T20 MAPE {:.1}%",
            identity.broadband.pairs,
            other.broadband.t20_mape.unwrap_or(f64::NAN)
        ),
    )
}

fn main() -> ExitCode {
    let _ = pipeline::generator_version();
    let runs = sample_runs();
    let criteria: Vec<Criterion> = vec![
        ("modal accuracy", Box::new(modal_accuracy)),
        ("geometric accuracy", Box::new(geometric_accuracy)),
        ("rt60 oracle band", Box::new(|| rt60_oracle(&runs))),
        ("crossover transparency", Box::new(crossover_transparency)),
        ("sh round trip", Box::new(|| sh_round_trip(&runs))),
        ("batching", Box::new(batching)),
        ("gate", Box::new(gate)),
        ("metric oracles", Box::new(metric_oracles)),
        ("determinism", Box::new(|| determinism(&runs))),
        ("comparison report", Box::new(|| comparison_report(&runs))),
    ];
    let mut passed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => {
                passed += 1;
                println!("PASS [{}] {name}: {detail}", i + 1);
            }
            Err(detail) => println!("FAIL [{}] {name}: {detail}", i + 1),
        }
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed == criteria.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
