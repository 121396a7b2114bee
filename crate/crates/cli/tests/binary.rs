use std::path::Path;
use std::process::{Command, Output};

use spdclab::commands::{header, Command as Cmd};
use spdclab::SimulationConfig;

fn spdclab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spdclab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SPDCLAB_CONFIG")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn match_with_the_default_target_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = spdclab(&["match"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("751"), "{err}");
}

#[test]
fn feasible_match_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = spdclab(&["match", "--override", "match.target_lifetime_ps=1000"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let overlap = read(dir.path(), "overlap.txt");
    assert!(overlap.contains("temporal_overlap"));
    assert!(dir.path().join("match_trace.csv").exists());
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = spdclab(&["gain", "--override", "cavity.mirror_reflectivity_high=1.2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mirror_reflectivity in (0,1)"));
    let missing = dir.path().join("missing.toml");
    let out = spdclab(&["gain", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    let text = SimulationConfig::default().canonical().replace("seed = 20240501", "seed = 5");
    std::fs::write(&path, &text).unwrap();
    let out_dir = dir.path().join("o");
    let out = spdclab(&["wavepacket", "--config", path.to_str().unwrap()], &out_dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(&out_dir, "wavepacket_fit.txt").contains("# seed = 5"));
}

#[test]
fn seeded_output_is_byte_identical_across_runs_and_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(spdclab(&["wavepacket", "--threads", "1"], a.path()).status.success());
    assert!(spdclab(&["wavepacket", "--threads", "3"], b.path()).status.success());
    for name in ["wavepacket.csv", "wavepacket_fit.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let c = tempfile::tempdir().unwrap();
    assert!(spdclab(&["wavepacket", "--seed", "1"], c.path()).status.success());
    assert_ne!(read(a.path(), "wavepacket.csv"), read(c.path(), "wavepacket.csv"));
}

#[test]
fn headers_carry_version_hash_and_seed() {
    let c = SimulationConfig::default();
    let h = header(Cmd::Wavepacket, &c);
    assert!(h.contains(env!("CARGO_PKG_VERSION")));
    assert!(h.contains(&c.hash()));
    assert!(h.contains("# seed = 20240501"));
    assert!(!header(Cmd::Gain, &c).contains("seed"));
    let dir = tempfile::tempdir().unwrap();
    assert!(spdclab(&["gain"], dir.path()).status.success());
    let gain = read(dir.path(), "gain.csv");
    assert!(gain.starts_with(&header(Cmd::Gain, &c)), "{}", &gain[..200]);
}
