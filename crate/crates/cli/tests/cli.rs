use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use affseg::synth::{generate_scene, SceneConfig};
use tempfile::TempDir;

fn affseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affseg"))
        .args(args)
        .output()
        .expect("failed to launch affseg")
}

fn ok(args: &[&str]) -> Output {
    let out = affseg(args);
    assert!(
        out.status.success(),
        "affseg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Scene {
    dir: TempDir,
}

impl Scene {
    fn new(seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut scene = generate_scene(&SceneConfig {
            seed,
            max_objects: 5,
            ..Default::default()
        });
        for v in &mut scene.mesh.vertices {
            v.semantic_class = None;
            v.instance_id = None;
        }
        scene.mesh.save(dir.path().join("scene.ply"), &[]).unwrap();
        scene.labels.save(dir.path().join("labels.txt")).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn version_lists_format_versions() {
    let out = ok(&["--version"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
    assert!(text.contains("affinity=1"));
}

#[test]
fn missing_required_argument_is_a_usage_error() {
    let s = Scene::new(1);
    let out = affseg(&[
        "cluster",
        "--mesh",
        &s.arg("scene.ply"),
        "--clusters",
        &s.arg("c.txt"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let s = Scene::new(1);
    std::fs::write(s.path("run.cfg"), "seed = 3\nvoxelsize = 0.1\n").unwrap();
    let out = affseg(&[
        "--config",
        &s.arg("run.cfg"),
        "voxelize",
        "--mesh",
        &s.arg("scene.ply"),
        "--out",
        &s.arg("v.txt"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn malformed_input_is_a_data_error() {
    let s = Scene::new(1);
    std::fs::write(s.path("broken.ply"), "ply\nformat ascii 1.0\nelement vertex 2\n").unwrap();
    let out = affseg(&[
        "voxelize",
        "--mesh",
        &s.arg("broken.ply"),
        "--out",
        &s.arg("v.txt"),
    ]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(s.path("short.txt"), "5 1\n").unwrap();
    let out = affseg(&[
        "densify",
        "--mesh",
        &s.arg("scene.ply"),
        "--labels",
        &s.arg("short.txt"),
        "--out",
        &s.arg("d.ply"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_is_reproducible_across_thread_counts() {
    let s = Scene::new(2);
    let run = |threads: &str, out: &str| {
        ok(&[
            "--threads",
            threads,
            "--flip-probability",
            "0.05",
            "pipeline",
            "--mesh",
            &s.arg("scene.ply"),
            "--labels",
            &s.arg("labels.txt"),
            "--out",
            &s.arg(out),
        ])
        .stdout
    };
    let a = run("1", "a.txt");
    let b = run("4", "b.txt");
    assert_eq!(a, b);
    assert_eq!(read(&s.path("a.txt")), read(&s.path("b.txt")));
}

#[test]
fn chained_commands_match_pipeline() {
    let s = Scene::new(3);
    let noise = [
        "--flip-probability",
        "0.05",
        "--jitter-stddev",
        "0.1",
        "--seed",
        "11",
    ];
    let with = |args: &[&str]| -> Vec<String> { noise.iter().chain(args).map(|a| a.to_string()).collect() };
    let run = |args: Vec<String>| ok(&args.iter().map(String::as_str).collect::<Vec<_>>());

    let report = run(with(&[
        "pipeline",
        "--mesh",
        &s.arg("scene.ply"),
        "--labels",
        &s.arg("labels.txt"),
        "--out",
        &s.arg("pipeline.txt"),
    ]))
    .stdout;

    run(with(&[
        "densify",
        "--mesh",
        &s.arg("scene.ply"),
        "--labels",
        &s.arg("labels.txt"),
        "--out",
        &s.arg("dense.ply"),
        "--format",
        "binary-little-endian",
    ]));
    run(with(&[
        "oracle-affinity",
        "--mesh",
        &s.arg("dense.ply"),
        "--out",
        &s.arg("aff.txt"),
    ]));
    run(with(&[
        "cluster",
        "--mesh",
        &s.arg("dense.ply"),
        "--affinity",
        &s.arg("aff.txt"),
        "--semantics",
        &s.arg("labels.txt"),
        "--out",
        &s.arg("chained.txt"),
        "--clusters",
        &s.arg("clusters.txt"),
    ]));
    assert_eq!(read(&s.path("pipeline.txt")), read(&s.path("chained.txt")));

    run(with(&[
        "assemble",
        "--mesh",
        &s.arg("dense.ply"),
        "--affinity",
        &s.arg("aff.txt"),
        "--clusters",
        &s.arg("clusters.txt"),
        "--semantics",
        &s.arg("labels.txt"),
        "--out",
        &s.arg("assembled.txt"),
    ]));
    assert_eq!(read(&s.path("pipeline.txt")), read(&s.path("assembled.txt")));

    let evaluated = run(with(&[
        "evaluate",
        "--pred",
        &s.arg("chained.txt"),
        "--labels",
        &s.arg("labels.txt"),
        "--dump",
        &s.arg("ap.txt"),
    ]))
    .stdout;
    assert_eq!(report, evaluated);
    assert!(
        String::from_utf8(read(&s.path("ap.txt")))
            .unwrap()
            .lines()
            .count()
            > 0
    );
}

#[test]
fn supplied_field_reproduces_the_pipeline() {
    let s = Scene::new(4);
    ok(&[
        "densify",
        "--mesh",
        &s.arg("scene.ply"),
        "--labels",
        &s.arg("labels.txt"),
        "--out",
        &s.arg("dense.ply"),
    ]);
    ok(&[
        "gen-affinity",
        "--mesh",
        &s.arg("dense.ply"),
        "--out",
        &s.arg("gt.txt"),
    ]);
    let out = ok(&[
        "pipeline",
        "--mesh",
        &s.arg("scene.ply"),
        "--labels",
        &s.arg("labels.txt"),
        "--affinity",
        &s.arg("gt.txt"),
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().last().unwrap().ends_with("1.000"), "{table}");
}

#[test]
fn voxelize_writes_every_scale() {
    let s = Scene::new(5);
    ok(&[
        "--num-scales",
        "3",
        "voxelize",
        "--mesh",
        &s.arg("scene.ply"),
        "--out",
        &s.arg("v.txt"),
    ]);
    let text = String::from_utf8(read(&s.path("v.txt"))).unwrap();
    let scales: std::collections::BTreeSet<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_whitespace().next())
        .collect();
    assert_eq!(scales.into_iter().collect::<Vec<_>>(), ["0", "1", "2"]);
}

#[test]
fn unlabeled_mesh_needs_labels_for_affinity() {
    let s = Scene::new(6);
    let out = affseg(&[
        "gen-affinity",
        "--mesh",
        &s.arg("scene.ply"),
        "--out",
        &s.arg("a.txt"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    ok(&[
        "gen-affinity",
        "--mesh",
        &s.arg("scene.ply"),
        "--labels",
        &s.arg("labels.txt"),
        "--out",
        &s.arg("a.txt"),
    ]);
}
