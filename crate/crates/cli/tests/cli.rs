use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phasespace(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasespace"))
        .env("PHASESPACE_OUT", root)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &str = "n = 64\nL = 8.0\nnq = 16\nm = 16\nP = 3.0\nN_list = [4, 8]\nt_final = 0.02\ndt = 0.005\n\
                     phi_q_radius = 3.0\nphi_p_radius = 2.5\n";

#[test]
fn potential_writes_the_scaling_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(&phasespace(dir.path(), &["potential", "--dim", "1", "--beta", "0.5", "--n", "64", "--out", "pot"]));
    let csv = fs::read_to_string(dir.path().join("pot/beta_scaling.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("beta,grad_sup_norm"));
    assert_eq!(lines.count(), 5);
    assert!(dir.path().join("pot/kernel.bin").exists());
}

#[test]
fn state_check_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    ok(&phasespace(dir.path(), &["state", "init-slater", "--orbitals", "lowest-modes", "--N", "4", "--n", "64", "--out", "s.bin"]));
    let state = dir.path().join("s.bin");
    let report = ok(&phasespace(dir.path(), &["check", "--suite", "semiclassical", "--state", state.to_str().unwrap()]));
    for name in ["husimi_bounds", "mass_identity", "wigner_convolution"] {
        assert!(report.contains(name), "{name} missing");
    }

    let mut bytes = fs::read(&state).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&state, bytes).unwrap();
    let out = phasespace(dir.path(), &["check", "--suite", "state", "--state", state.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("checksum mismatch"));
}

#[test]
fn unknown_suite_fails_without_crashing() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(phasespace(dir.path(), &["check", "--suite", "nonsense"]).status.code(), Some(1));
}

#[test]
fn trajectory_to_residuals() {
    let dir = tempfile::tempdir().unwrap();
    ok(&phasespace(dir.path(), &["state", "init-slater", "--N", "2", "--n", "64", "--hbar", "0.5", "--out", "s.bin"]));
    let state = dir.path().join("s.bin");
    let state = state.to_str().unwrap();
    for cmd in ["evolve-hf", "evolve-exact"] {
        ok(&phasespace(dir.path(), &[cmd, "--state", state, "--dt", "0.01", "--steps", "4", "--snapshot-every", "2", "--out", cmd]));
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(cmd).join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["snapshots"].as_array().unwrap().len(), 3);
    }
    let traj = dir.path().join("evolve-hf");
    let out = phasespace(
        dir.path(),
        &["residuals", "--trajectory", traj.to_str().unwrap(), "--nq", "16", "--m", "16", "--P", "3", "--phi-p-radius", "2.5",
            "--max-mismatch", "1e-30", "--out", "res"],
    );
    // the verdict is requested and cannot pass at this tolerance
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("res/residuals.json").exists());
    assert!(dir.path().join("res/residuals_state_s000002.bin").exists());
}

#[test]
fn vlasov_from_husimi() {
    let dir = tempfile::tempdir().unwrap();
    ok(&phasespace(dir.path(), &["state", "init-slater", "--N", "4", "--n", "64", "--out", "s.bin"]));
    let state = dir.path().join("s.bin");
    ok(&phasespace(dir.path(), &["husimi", "--state", state.to_str().unwrap(), "--nq", "16", "--m", "16", "--out", "h.bin"]));
    let h = format!("from-husimi:{}", dir.path().join("h.bin").display());
    ok(&phasespace(dir.path(), &["evolve-vlasov", "--init", &h, "--dt", "0.01", "--steps", "4", "--out", "v"]));
    assert!(dir.path().join("v/vlasov_s000004.bin").exists());
    let bad = phasespace(dir.path(), &["evolve-vlasov", "--init", "analytic:nothing", "--dt", "0.01", "--steps", "1", "--out", "w"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, format!("{SMALL}pipeline = [\"sweep\"]\n")).unwrap();
    let out = phasespace(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--out", "sw"]);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("N,hbar,beta,pairing_r_tilde,pairing_r1,pairing_r2,vlasov_distance"));
    assert_eq!(csv.lines().count(), 3);

    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL).unwrap();
    let first = ok(&phasespace(dir.path(), &["run", "--config", cfg.to_str().unwrap()]));
    let second = ok(&phasespace(dir.path(), &["run", "--config", cfg.to_str().unwrap()]));
    assert_eq!(first, second);
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, format!("{SMALL}epsilon = 0.05\n")).unwrap();
    let out = phasespace(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}
