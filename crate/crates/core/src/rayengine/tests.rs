use proptest::prelude::*;

use super::*;
use crate::dsp::ComplementaryBank;
use crate::materials::MaterialSpec;
use crate::sharm::{sh_basis, ShConfig};

const FS: f64 = 48000.0;

fn uniform_room(min: Vec3, max: Vec3, alpha: f64, scattering: f64) -> RayScene {
    let mut mesh = TriMesh::cuboid(min, max, "wall").unwrap();
    mesh.set_uniform_material(0);
    let table = MaterialTable::new(vec![MaterialSpec::uniform("m", alpha, scattering).unwrap()], 0).unwrap();
    RayScene::new(&mesh, &table).unwrap()
}

fn shoebox(alpha: f64, scattering: f64) -> RayScene {
    uniform_room(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0), alpha, scattering)
}

fn params(rays: usize, max_time: f64) -> TraceParams {
    TraceParams {
        ray_count: rays,
        max_time,
        ..TraceParams::default()
    }
}

#[test]
fn absorbing_single_wall_leaves_only_direct_path() {
    let v = [
        Vec3::new(0.0, -5.0, -5.0),
        Vec3::new(0.0, 5.0, -5.0),
        Vec3::new(0.0, 5.0, 5.0),
        Vec3::new(0.0, -5.0, 5.0),
    ];
    // a lone plane is not a valid room, so build it directly
    let mesh = TriMesh {
        vertices: v.to_vec(),
        triangles: vec![[0, 1, 2], [0, 2, 3]],
        surface_labels: vec!["wall".into(), "wall".into()],
        material_ids: vec![0, 0],
    };
    let table = MaterialTable::new(vec![MaterialSpec::uniform("m", 1.0, 0.0).unwrap()], 0).unwrap();
    let scene = RayScene::new(&mesh, &table).unwrap();
    assert!(!scene.is_closed());
    let out = trace(
        &scene,
        &Vec3::new(2.0, 0.0, 0.0),
        &Vec3::new(4.0, 0.0, 0.0),
        &params(100_000, 0.5),
    )
    .unwrap();
    assert_eq!(out.deposits.len(), 1);
    let d = &out.deposits[0];
    assert!((d.time - 2.0 / 343.0).abs() < 1.0 / FS);
    // 1/d² convention, Monte-Carlo tolerance
    assert!((d.band_energy[0] - 0.25).abs() < 0.025, "{}", d.band_energy[0]);
    assert!((d.direction - Vec3::new(-1.0, 0.0, 0.0)).norm() < 0.05);
    assert_eq!(d.sign, 1.0);
}

#[test]
fn first_order_deposits_match_image_sources() {
    let scene = shoebox(0.0, 0.0);
    let (s, r) = (Vec3::new(1.0, 1.0, 1.0), Vec3::new(3.6, 2.7, 1.8));
    let mut p = params(100_000, 0.5);
    p.max_bounces = 1;
    let out = trace(&scene, &s, &r, &p).unwrap();
    let room = Shoebox::new(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0)).unwrap();
    let oracle = image_source_oracle(&room, &[0.0; NUM_BANDS], &s, &r, 1, 343.0).unwrap();
    assert_eq!(oracle.len(), 7);
    assert_eq!(out.deposits.len(), 7);
    for (a, b) in out.deposits.iter().zip(&oracle) {
        assert!((a.time - b.time).abs() < 1.0 / FS);
        assert!((a.band_energy[2] / b.band_energy[2] - 1.0).abs() < 0.15);
    }
}

#[test]
fn second_order_image_times_are_all_found() {
    let scene = shoebox(0.0, 0.0);
    let (s, r) = (Vec3::new(1.2, 1.1, 1.3), Vec3::new(3.5, 2.6, 1.5));
    let out = trace(&scene, &s, &r, &params(50_000, 0.06)).unwrap();
    let room = Shoebox::new(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0)).unwrap();
    let oracle = image_source_oracle(&room, &[0.0; NUM_BANDS], &s, &r, 2, 343.0).unwrap();
    assert_eq!(oracle.len(), 25);
    for img in &oracle {
        assert!(
            out.deposits.iter().any(|d| (d.time - img.time).abs() < 1.0 / FS),
            "image at {} s not traced",
            img.time
        );
    }
}

#[test]
fn deterministic_and_thread_count_independent() {
    let scene = shoebox(0.1, 0.4);
    let (s, r) = (Vec3::new(1.0, 1.0, 1.0), Vec3::new(4.0, 3.0, 2.0));
    let p = params(3000, 0.2);
    let a = trace(&scene, &s, &r, &p).unwrap();
    let b = trace(&scene, &s, &r, &p).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| trace(&scene, &s, &r, &p).unwrap());
    assert_eq!(a.deposits, b.deposits);
    assert_eq!(a.deposits, c.deposits);
    assert_eq!(a.budget, c.budget);
    let mut q = p.clone();
    q.seed = 7;
    assert_ne!(trace(&scene, &s, &r, &q).unwrap().deposits, a.deposits);
}

#[test]
fn energy_budget_balances() {
    let mut mesh = TriMesh::cuboid(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0), "wall").unwrap();
    let table = MaterialTable::bundled();
    let carpet = table.position("carpet").unwrap();
    let curtain = table.position("curtain").unwrap();
    mesh.set_uniform_material(carpet);
    for t in 0..4 {
        mesh.material_ids[t] = curtain;
    }
    let scene = RayScene::new(&mesh, &table).unwrap();
    let (s, r) = (Vec3::new(1.0, 1.0, 1.0), Vec3::new(4.0, 3.0, 2.0));
    let out = trace(&scene, &s, &r, &params(2000, 0.5)).unwrap();
    let b = &out.budget;
    let direct = (r - s).norm() / 343.0;
    for k in 0..NUM_BANDS {
        assert!((b.emitted[k] - 4.0 * std::f64::consts::PI).abs() < 1e-9);
        let lhs = b.emitted[k] + b.reweighted[k];
        let rhs = b.absorbed[k] + b.escaped[k] + b.residual[k];
        assert!((lhs - rhs).abs() <= 1e-9 * lhs, "band {k}: {lhs} vs {rhs}");
        assert_eq!(b.escaped[k], 0.0);
    }
    for d in &out.deposits {
        assert!(d.time >= direct - 1e-12);
        assert!(d.band_energy.iter().all(|&e| e >= 0.0));
    }
}

#[test]
fn more_rays_converge() {
    let scene = shoebox(0.0, 0.3);
    let (s, r) = (Vec3::new(1.0, 1.0, 1.0), Vec3::new(4.0, 3.0, 2.0));
    let total = |n| -> f64 {
        trace(&scene, &s, &r, &params(n, 0.15))
            .unwrap()
            .deposits
            .iter()
            .map(|d| d.band_energy[3])
            .sum()
    };
    let (a, b) = (total(4000), total(16000));
    assert!((a / b - 1.0).abs() < 0.05, "{a} vs {b}");
}

#[test]
fn late_field_is_diffuse() {
    let scene = shoebox(0.05, 0.5);
    let (s, r) = (Vec3::new(1.0, 1.0, 1.0), Vec3::new(3.7, 2.8, 1.6));
    let dur = 0.4;
    let out = trace(&scene, &s, &r, &params(20_000, dur)).unwrap();
    let config = ShConfig::ambix(7).unwrap();
    let acc = deposit_to_sh(&out.deposits, config, FS, dur, &ComplementaryBank::new(FS)).unwrap();
    let tail = acc.channels[0].len() * 3 / 4;
    let energy = |c: usize| acc.channels[c][tail..].iter().map(|v| v * v).sum::<f64>();
    let e0 = energy(0);
    for c in 49..64 {
        assert!(e0 > energy(c), "channel {c}");
    }
}

#[test]
fn rejects_bad_inputs() {
    let scene = shoebox(0.1, 0.1);
    let inside = Vec3::new(1.0, 1.0, 1.0);
    let outside = Vec3::new(6.0, 1.0, 1.0);
    assert!(matches!(
        trace(&scene, &outside, &inside, &params(10, 0.1)),
        Err(Error::Placement(_))
    ));
    assert!(matches!(
        trace(&scene, &inside, &outside, &params(10, 0.1)),
        Err(Error::Placement(_))
    ));
    assert!(matches!(
        trace(&scene, &inside, &Vec3::new(3.0, 2.0, 1.0), &params(0, 0.1)),
        Err(Error::Domain(_))
    ));
}

#[test]
fn furniture_interior_is_outside() {
    let mut mesh = TriMesh::cuboid(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0), "wall").unwrap();
    mesh.append(&TriMesh::cuboid(Vec3::new(1.0, 1.0, 0.0), Vec3::new(2.0, 2.0, 1.0), "box").unwrap());
    let scene = RayScene::new(&mesh, &MaterialTable::bundled()).unwrap();
    assert!(scene.is_closed());
    assert!(scene.contains(&Vec3::new(3.0, 3.0, 2.0)));
    assert!(!scene.contains(&Vec3::new(1.5, 1.5, 0.5)));
    assert!(!scene.contains(&Vec3::new(-1.0, 1.5, 0.5)));
}

#[test]
fn oracle_examples() {
    let cube = Shoebox::new(Vec3::zeros(), Vec3::repeat(2.0)).unwrap();
    let c = Vec3::repeat(1.0);
    assert!(image_source_oracle(&cube, &[0.0; 6], &c, &c, 0, 343.0)
        .unwrap()
        .is_empty());
    let first = image_source_oracle(&cube, &[0.0; 6], &c, &c, 1, 343.0).unwrap();
    assert_eq!(first.len(), 6);
    for d in &first {
        assert!((d.time - 2.0 / 343.0).abs() < 1e-15);
        assert!((d.band_energy[0] - 0.25).abs() < 1e-15);
    }

    let room = Shoebox::new(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0)).unwrap();
    let (s, r) = (Vec3::new(1.0, 1.0, 1.0), Vec3::new(4.0, 3.0, 2.0));
    let alpha = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let dep = image_source_oracle(&room, &alpha, &s, &r, 1, 343.0).unwrap();
    assert!((dep[0].time - 14f64.sqrt() / 343.0).abs() < 1e-15);
    assert!((dep[0].band_energy[5] - 1.0 / 14.0).abs() < 1e-15);
    assert!((dep[0].direction - (s - r) / 14f64.sqrt()).norm() < 1e-15);
    // floor image at z = -1
    let floor = Vec3::new(1.0, 1.0, -1.0);
    let d2 = (floor - r).norm_squared();
    let hit = dep.iter().find(|d| (d.time - d2.sqrt() / 343.0).abs() < 1e-15).unwrap();
    assert!((hit.band_energy[1] - 0.8 / d2).abs() < 1e-15);
}

#[test]
fn shoebox_detection() {
    let m = TriMesh::cuboid(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(4.0, 4.0, 3.0), "w").unwrap();
    let b = Shoebox::from_mesh(&m).unwrap();
    assert_eq!(b.min, Vec3::new(-1.0, 0.0, 0.0));
    let mut furnished = m.clone();
    furnished.append(&TriMesh::cuboid(Vec3::new(1.0, 1.0, 0.0), Vec3::new(2.0, 2.0, 1.0), "t").unwrap());
    assert!(matches!(Shoebox::from_mesh(&furnished), Err(Error::InvalidMesh(_))));
}

#[test]
fn sh_deposit_examples() {
    let config = ShConfig::ambix(3).unwrap();
    let bank = ComplementaryBank::new(FS);
    let up = EnergyDeposit {
        time: 0.01,
        direction: Vec3::z(),
        band_energy: [1.0; NUM_BANDS],
        sign: 1.0,
    };
    let acc = deposit_to_sh(std::slice::from_ref(&up), config, FS, 0.05, &bank).unwrap();
    let y = sh_basis(&Vec3::z(), &config).unwrap();
    let k = 480;
    assert!((acc.channels[0][k] - 1.0).abs() < 1e-9);
    assert!((acc.channels[2][k] / acc.channels[0][k] - 1.0).abs() < 1e-12);
    for c in 0..16 {
        assert!((acc.channels[c][k] - y[c]).abs() < 1e-9);
    }

    let down = EnergyDeposit {
        direction: -Vec3::z(),
        ..up.clone()
    };
    let side = EnergyDeposit {
        direction: Vec3::x(),
        ..up.clone()
    };
    let anti = EnergyDeposit {
        direction: -Vec3::x(),
        ..up.clone()
    };
    let acc = deposit_to_sh(&[up.clone(), down, side, anti], config, FS, 0.05, &bank).unwrap();
    for c in 1..4 {
        assert!(acc.channels[c].iter().all(|v| v.abs() < 1e-10));
    }
    assert!((acc.channels[0][k] - 4.0).abs() < 1e-9);

    let empty = deposit_to_sh(&[], config, FS, 0.05, &bank).unwrap();
    assert!(empty.channels.iter().all(|ch| ch.iter().all(|&v| v == 0.0)));
    assert_eq!(empty.channels.len(), 16);

    let late = EnergyDeposit { time: 0.2, ..up };
    assert_eq!(deposit_to_sh(&[late], config, FS, 0.05, &bank).unwrap().dropped, 1);
}

#[test]
fn band_energy_shapes_spectrum() {
    let config = ShConfig::ambix(1).unwrap();
    let bank = ComplementaryBank::new(FS);
    let mut e = [0.0; NUM_BANDS];
    e[0] = 1.0;
    let low = EnergyDeposit {
        time: 0.1,
        direction: Vec3::x(),
        band_energy: e,
        sign: 1.0,
    };
    let acc = deposit_to_sh(&[low], config, FS, 0.2, &bank).unwrap();
    let spec = crate::dsp::magnitude_spectrum(&acc.channels[0], 9600);
    // 5 Hz bins
    assert!((spec[20] - 1.0).abs() < 0.02, "{}", spec[20]);
    assert!(spec[800] < 1e-3);
}

#[test]
fn dump_round_trip() {
    let scene = shoebox(0.2, 0.5);
    let out = trace(
        &scene,
        &Vec3::new(1.0, 1.0, 1.0),
        &Vec3::new(4.0, 3.0, 2.0),
        &params(500, 0.1),
    )
    .unwrap();
    let back = read_deposit_dump(&write_deposit_dump(&out.deposits)).unwrap();
    assert_eq!(back.len(), out.deposits.len());
    for (a, b) in back.iter().zip(&out.deposits) {
        assert!((a.time - b.time).abs() < 1e-9);
        assert_eq!(a.sign, b.sign);
        for k in 0..NUM_BANDS {
            assert!((a.band_energy[k] / b.band_energy[k] - 1.0).abs() < 1e-8);
        }
    }
    assert!(read_deposit_dump("0.1 0 0 1 1 1 1 1\n").is_err());
}

fn sample_deposit(time: f64, e: f64) -> EnergyDeposit {
    EnergyDeposit {
        time,
        direction: Vec3::x(),
        band_energy: [e; NUM_BANDS],
        sign: 1.0,
    }
}

#[test]
fn air_absorption_trivial_cases() {
    let mut d = vec![sample_deposit(0.0, 2.0)];
    air_absorption(&mut d, &AirAbsorption::default(), 343.0);
    assert_eq!(d[0].band_energy, [2.0; NUM_BANDS]);
    let mut d = vec![sample_deposit(0.5, 2.0)];
    air_absorption(&mut d, &AirAbsorption::none(), 343.0);
    assert_eq!(d[0].band_energy, [2.0; NUM_BANDS]);
}

proptest! {
    #[test]
    fn air_absorption_never_increases_with_distance(t1 in 0.0..2.0f64, dt in 0.0..2.0f64) {
        let mut d = vec![sample_deposit(t1, 1.0), sample_deposit(t1 + dt, 1.0)];
        air_absorption(&mut d, &AirAbsorption::default(), 343.0);
        for b in 0..NUM_BANDS {
            prop_assert!(d[1].band_energy[b] <= d[0].band_energy[b]);
            prop_assert!(d[0].band_energy[b] <= 1.0);
        }
    }

    #[test]
    fn oracle_energy_falls_as_inverse_square(
        sx in 0.5..4.5f64, sy in 0.5..3.5f64, sz in 0.5..2.5f64,
        rx in 0.5..4.5f64, ry in 0.5..3.5f64, rz in 0.5..2.5f64,
    ) {
        let room = Shoebox::new(Vec3::zeros(), Vec3::new(5.0, 4.0, 3.0)).unwrap();
        let dep = image_source_oracle(&room, &[0.0; 6], &Vec3::new(sx, sy, sz), &Vec3::new(rx, ry, rz), 2, 343.0).unwrap();
        for d in &dep {
            let dist = d.time * 343.0;
            prop_assert!((d.band_energy[0] * dist * dist - 1.0).abs() < 1e-9);
        }
    }
}
