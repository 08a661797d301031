use std::fs;
use std::path::Path;
use std::process::Command;

use modscat::harness::series::read_series;
use modscat::harness::{parse_config_str, read_snapshot, run_scenario, verify_manifest};

const SMALL: &str = "equation = \"hartree\"\nd = 2\nepsilon = 0.1\nn = 32\nL = 8\nt_end = 8\nlens_ratio = 0.05\ndirect_nodes = 3\n";

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, body).unwrap();
    p
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modscat"))
}

fn walk(dir: &Path, root: &Path, out: &mut Vec<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            walk(&p, root, out);
        } else {
            out.push(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
        }
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(SMALL, a.path()).unwrap();
    run_scenario(&cfg, Some(a.path()), false).unwrap();
    run_scenario(&cfg, Some(b.path()), false).unwrap();
    for f in ["series.csv", "checkpoints/snapshot_003.bin", "gamma/convolution_003.bin", "profile.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_lists_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(SMALL, dir.path()).unwrap();
    run_scenario(&cfg, Some(dir.path()), false).unwrap();
    let m = verify_manifest(dir.path()).unwrap();
    let mut files = Vec::new();
    walk(dir.path(), dir.path(), &mut files);
    let listed: Vec<&str> = m.artifacts.iter().map(|a| a.path.as_str()).collect();
    for f in files.iter().filter(|f| *f != "manifest.json") {
        assert!(listed.contains(&f.as_str()), "{f} missing from manifest");
    }
    assert_eq!(m.status, "complete");
}

#[test]
fn resume_reproduces_an_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let cut = tempfile::tempdir().unwrap();
    let cfg = parse_config_str(SMALL, full.path()).unwrap();
    run_scenario(&cfg, Some(full.path()), false).unwrap();
    run_scenario(&cfg, Some(cut.path()), false).unwrap();
    for k in 2..4 {
        for f in [format!("checkpoints/state_{k:03}.json"), format!("checkpoints/snapshot_{k:03}.bin")] {
            fs::remove_file(cut.path().join(f)).unwrap();
        }
    }
    fs::remove_file(cut.path().join("manifest.json")).unwrap();
    let r = run_scenario(&cfg, Some(cut.path()), true).unwrap();
    assert_eq!(r.manifest.resumed_from, Some(2.0));
    for f in ["series.csv", "checkpoints/snapshot_003.bin", "gamma/direct_003.bin", "profile.json", "report.json"] {
        assert_eq!(fs::read(full.path().join(f)).unwrap(), fs::read(cut.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_series(&cut.path().join("series.csv")).unwrap(), r.series);
    let (field, header) = read_snapshot(&cut.path().join("checkpoints/snapshot_003.bin")).unwrap();
    assert_eq!(header.t, 8.0);
    assert_eq!(field.grid.n, 32);
}

#[test]
fn cli_run_report_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("trace");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let rep = bin().args(["report", "--trace"]).arg(&out).output().unwrap();
    assert!(rep.status.success());
    let text = String::from_utf8(rep.stdout).unwrap();
    assert!(text.contains("decay slope") && text.contains("phase slope rel. error"), "{text}");
    let exp = bin().args(["export-csv", "--trace"]).arg(&out).output().unwrap();
    assert!(exp.status.success());
    let gamma = fs::read_to_string(out.join("gamma.csv")).unwrap();
    assert!(gamma.starts_with("t,node,v1,v2,v3,"));
    assert!(fs::read_to_string(out.join("profile.csv")).unwrap().lines().count() > 1);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "equation = \"hartree\"\nd = 2\nepsilon = 0.9\n");
    let st = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&st.stderr).contains("line 3"));

    let unknown = write_config(dir.path(), "equation = \"hartree\"\nd = 2\nepsilon = 0.1\nspeed = 3\n");
    assert_eq!(bin().args(["run", "--config"]).arg(&unknown).output().unwrap().status.code(), Some(3));

    let breach = write_config(dir.path(), &format!("{SMALL}boundary_limit = 1e-300\n"));
    let out = dir.path().join("breach");
    let st = bin().args(["run", "--config"]).arg(&breach).arg("--out").arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert_eq!(verify_manifest(&out).unwrap().status, "failed");

    assert_eq!(bin().args(["oracle", "--suite", "nothing"]).output().unwrap().status.code(), Some(3));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(3));
    let bad_oracle = bin().args(["oracle", "--suite", "kernels", "--perturb", "1e-3"]).output().unwrap();
    assert_eq!(bad_oracle.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_oracle.stdout).contains("FAIL"));
}
