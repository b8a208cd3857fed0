use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracobs::io::read_field;
use fracobs_cli::artifacts::{sha256_file, Manifest, LOCK_FILE};

const TRIVIAL: &str = r#"
name = "trivial"
[problem]
dimension = 1
length = 16.0
s = 1.5
variant = "bounded"
domain_radius = 2.0
grids = [64, 128]
obstacle = { kind = "constant", value = -1.0 }
[extension]
top = 2.0
dtn_modes = 5
dtn_min_nodes = 256
[output]
dir = "unused"
"#;

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracobs"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn setup(text: &str) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    (dir, cfg, out)
}

fn preset(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"));
    fs::read_to_string(path).unwrap()
}

#[test]
fn trivial_study_writes_zero_solution_and_manifest() {
    let (_d, cfg, out) = setup(TRIVIAL);
    let o = run("study", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for nodes in [64, 128] {
        let dir = out.join(format!("trivial-N{nodes}"));
        assert_eq!(read_field(&dir.join("u")).unwrap().max_abs(), 0.0);
        let m = Manifest::load(&dir).unwrap();
        for rec in m.stages.values() {
            for (name, sum) in &rec.files {
                assert_eq!(sha256_file(&dir.join(name)).unwrap(), *sum);
            }
        }
        assert_eq!(m.stages.len(), 2);
    }
    let table = fs::read_to_string(out.join("study.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.contains(",true,")), "{table}");
    assert!(!out.join(LOCK_FILE).exists());
}

#[test]
fn invalid_configs_exit_one_without_artifacts() {
    for text in [
        TRIVIAL.replace("s = 1.5", "s = 1.5\nbeta = 1"),
        TRIVIAL.replace("s = 1.5", "s = 0.5"),
        TRIVIAL.replace("value = -1.0", "value = 1.0"),
        "name = [".to_string(),
    ] {
        let (_d, cfg, out) = setup(&text);
        let o = run("solve", &cfg, &out);
        assert_eq!(o.status.code(), Some(1));
        assert!(!out.exists());
    }
    let (_d, cfg, out) = setup(&TRIVIAL.replace("s = 1.5", "s = 1.5\nbeta = 1"));
    let err = String::from_utf8_lossy(&run("solve", &cfg, &out).stderr).into_owned();
    assert!(err.contains("problem") && err.contains("beta"), "{err}");
}

#[test]
fn verify_needs_artifacts() {
    let (_d, cfg, out) = setup(TRIVIAL);
    assert_eq!(run("verify", &cfg, &out).status.code(), Some(1));
    assert_eq!(run("solve", &cfg, &out).status.code(), Some(0));
    assert_eq!(run("verify", &cfg, &out).status.code(), Some(1));
    assert_eq!(run("extend", &cfg, &out).status.code(), Some(0));
    assert_eq!(run("verify", &cfg, &out).status.code(), Some(0));
    let first = fs::read(out.join("verify.csv")).unwrap();
    assert_eq!(run("verify", &cfg, &out).status.code(), Some(0));
    assert_eq!(fs::read(out.join("verify.csv")).unwrap(), first);
}

#[test]
fn locked_output_is_rejected() {
    let (_d, cfg, out) = setup(TRIVIAL);
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(LOCK_FILE), "1").unwrap();
    let o = run("study", &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
    assert!(!out.join("trivial-N64").exists());
}

#[test]
fn study_resumes_completed_grids() {
    let (_d, cfg, out) = setup(TRIVIAL);
    assert_eq!(run("study", &cfg, &out).status.code(), Some(0));
    let u64 = out.join("trivial-N64/u.bin");
    let stamp = fs::metadata(&u64).unwrap().modified().unwrap();
    let o = run("study", &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::metadata(&u64).unwrap().modified().unwrap(), stamp);
    let log = String::from_utf8_lossy(&o.stderr);
    assert_eq!(log.matches("skipping").count(), 4, "{log}");

    fs::write(out.join("trivial-N128/u.bin"), [0u8; 8]).unwrap();
    let o = run("study", &cfg, &out);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stderr).matches("skipping").count(), 2);
    assert_eq!(read_field(&out.join("trivial-N128/u")).unwrap().values.len(), 128);
}

#[test]
fn non_convergence_exits_two() {
    let text = preset("paraboloid").replace("max_iter = 200000", "max_iter = 3");
    let (_d, cfg, out) = setup(&text);
    let o = run("solve", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Manifest::complete(&out.join("paraboloid-N128"), fracobs_cli::config::Stage::Solve, "").unwrap());
}

#[test]
fn divergent_control_fails_verification() {
    let (_d, cfg, out) = setup(&preset("control"));
    let o = run("study", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let table = fs::read_to_string(out.join("study.csv")).unwrap();
    let c11 = table.lines().find(|l| l.starts_with("c11,")).unwrap();
    assert!(c11.contains(",false,"), "{c11}");
}

#[test]
fn shipped_presets_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        fracobs_cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 5);
}
