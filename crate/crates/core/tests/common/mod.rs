#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hoarir::scene::write_obj;
use hoarir::{JobSpec, TriMesh, Vec3};

pub fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

pub fn sample_jobs() -> Vec<JobSpec> {
    ["shoebox", "living_room", "bedroom"]
        .iter()
        .map(|s| JobSpec::load(&scenes_dir().join(format!("{s}.toml"))).unwrap())
        .collect()
}

/// Writes a uniform-material cuboid room and its job file into `dir`;
/// `extra` is appended to the job TOML.
pub fn cuboid_job(dir: &Path, name: &str, size: [f64; 3], alpha: f64, scattering: f64, extra: &str) -> JobSpec {
    let mesh = TriMesh::cuboid(Vec3::zeros(), Vec3::new(size[0], size[1], size[2]), "wall").unwrap();
    std::fs::write(dir.join(format!("{name}.obj")), write_obj(&mesh)).unwrap();
    let row = |v: f64| format!("[{v}, {v}, {v}, {v}, {v}, {v}]");
    std::fs::write(
        dir.join(format!("{name}_materials.toml")),
        format!(
            "default = \"wall\"\n[[material]]\nname = \"wall\"\nabsorption = {}\nscattering = {}\n",
            row(alpha),
            row(scattering)
        ),
    )
    .unwrap();
    let text = format!("name = \"{name}\"\nmesh = \"{name}.obj\"\nmaterials = \"{name}_materials.toml\"\n{extra}\n");
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    JobSpec::load(&path).unwrap()
}

/// Every file under `root` by relative path.
pub fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
