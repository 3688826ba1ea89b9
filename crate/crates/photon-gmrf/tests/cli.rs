//! End-to-end checks of the command-line contract: flags, files, exit codes.

use std::path::Path;
use std::process::{Command, Output};

use photon_gmrf::io::{self, Dtype, Manifest};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_photon-gmrf")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).args(args).current_dir(dir).output().unwrap()
}

fn assert_code(out: &Output, code: i32, ctx: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{ctx}: expected exit {code}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &[]);
    assert_code(&out, 2, "no arguments");
    let out = run_in(dir.path(), &["denoise", "--no-such-flag"]);
    assert_code(&out, 2, "unknown flag");
    let out = run_in(
        dir.path(),
        &["simulate", "--model", "bernoulli"], // neither --scene nor --input
    );
    assert_code(&out, 2, "missing scene/input");
}

#[test]
fn simulate_writes_the_documented_files_with_matching_digests() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate",
            "--scene",
            "piecewise",
            "--rows",
            "16",
            "--cols",
            "16",
            "--frames",
            "2",
            "--target-mean",
            "0.5",
            "--model",
            "bernoulli",
            "--seed",
            "3",
            "--mask-fraction",
            "0.05",
            "--out",
            "sim",
        ],
    );
    assert_code(&out, 0, "simulate");

    let (truth, truth_dtype) = io::read_fstk(&dir.path().join("sim.truth.fstk")).unwrap();
    assert_eq!(truth_dtype, Dtype::F64);
    let mean = truth.mean();
    assert!((mean - 0.5).abs() < 1e-12, "target mean not honored: {mean}");

    let (obs, obs_dtype) = io::read_fstk(&dir.path().join("sim.obs.fstk")).unwrap();
    assert_eq!(obs_dtype, Dtype::U1);
    assert_eq!(obs.dims(), truth.dims());

    let (eta, _) = io::read_fstk(&dir.path().join("sim.eta.fstk")).unwrap();
    assert!(eta.data().iter().all(|&v| v == 1.0));

    let (mask, mask_dtype) = io::read_fstk(&dir.path().join("sim.mask.fstk")).unwrap();
    assert_eq!(mask_dtype, Dtype::U1);
    // Masked sites read zero in the observations.
    for (m, y) in mask.data().iter().zip(obs.data()) {
        if *m == 0.0 {
            assert_eq!(*y, 0.0);
        }
    }

    let manifest = Manifest::read(&dir.path().join("sim.manifest.txt")).unwrap();
    for key in ["truth", "obs", "eta", "mask"] {
        let path = dir.path().join(format!("sim.{key}.fstk"));
        let digest = io::sha256_hex(&path).unwrap();
        assert_eq!(manifest.get(&format!("{key}_sha256")), Some(digest.as_str()), "{key} digest mismatch");
    }
    assert_eq!(manifest.get("command"), Some("simulate"));
    assert_eq!(manifest.get("seed"), Some("3"));
}

#[test]
fn poisson_simulation_writes_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate",
            "--scene",
            "smooth",
            "--rows",
            "12",
            "--cols",
            "12",
            "--target-mean",
            "4.0",
            "--model",
            "poisson",
            "--seed",
            "1",
            "--out",
            "p",
        ],
    );
    assert_code(&out, 0, "poisson simulate");
    let (obs, dtype) = io::read_fstk(&dir.path().join("p.obs.fstk")).unwrap();
    assert_eq!(dtype, Dtype::U32);
    assert!(obs.data().iter().any(|&v| v > 1.0), "bright counts expected");
}

#[test]
fn denoise_writes_estimates_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate",
            "--scene",
            "smooth",
            "--rows",
            "12",
            "--cols",
            "12",
            "--target-mean",
            "1.0",
            "--model",
            "bernoulli",
            "--seed",
            "2",
            "--out",
            "sim",
        ],
    );
    assert_code(&out, 0, "simulate");
    let out = run_in(
        dir.path(),
        &[
            "denoise",
            "--input",
            "sim.obs.fstk",
            "--model",
            "bernoulli",
            "--iters",
            "60",
            "--burnin",
            "20",
            "--adapt",
            "alpha",
            "--seed",
            "7",
            "--quantiles",
            "--out",
            "rec",
        ],
    );
    assert_code(&out, 0, "denoise");

    let (mmse, _) = io::read_fstk(&dir.path().join("rec.x_mmse.fstk")).unwrap();
    assert!(mmse.data().iter().all(|&v| v > 0.0));
    let (var, _) = io::read_fstk(&dir.path().join("rec.x_var.fstk")).unwrap();
    assert!(var.data().iter().all(|&v| v >= 0.0));
    let (acc, _) = io::read_fstk(&dir.path().join("rec.accept.fstk")).unwrap();
    assert!(acc.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    for q in ["x_q05", "x_q50", "x_q95"] {
        io::read_fstk(&dir.path().join(format!("rec.{q}.fstk"))).unwrap();
    }

    let manifest = Manifest::read(&dir.path().join("rec.manifest.txt")).unwrap();
    assert_eq!(manifest.get("command"), Some("denoise"));
    assert_eq!(manifest.get("iterations"), Some("60"));
    assert_eq!(manifest.get("kept"), Some("40"));
    let digest = io::sha256_hex(&dir.path().join("rec.x_mmse.fstk")).unwrap();
    assert_eq!(manifest.get("x_mmse_sha256"), Some(digest.as_str()));

    // Traces cover every iteration.
    let hyper = std::fs::read_to_string(dir.path().join("rec.hyper_trace.csv")).unwrap();
    assert_eq!(hyper.lines().count(), 61);
    let ll = std::fs::read_to_string(dir.path().join("rec.loglik_trace.csv")).unwrap();
    assert_eq!(ll.lines().count(), 61);
}

#[test]
fn few_kept_draws_warn_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &[
            "simulate",
            "--scene",
            "smooth",
            "--rows",
            "8",
            "--cols",
            "8",
            "--target-mean",
            "1.0",
            "--model",
            "bernoulli",
            "--seed",
            "2",
            "--out",
            "sim",
        ],
    );
    let out = run_in(
        dir.path(),
        &[
            "denoise",
            "--input",
            "sim.obs.fstk",
            "--model",
            "bernoulli",
            "--iters",
            "6",
            "--burnin",
            "4",
            "--seed",
            "7",
            "--out",
            "rec",
        ],
    );
    assert_code(&out, 0, "short denoise");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning") && stderr.contains("2 draws"), "stderr: {stderr}");
}

#[test]
fn invalid_observations_exit_3_naming_the_site() {
    let dir = tempfile::tempdir().unwrap();
    // Hand-written stack with a 2 where binary data is claimed.
    std::fs::write(dir.path().join("bad.fstk"), "FSTK 1\n2 2 1 u32\n0 1\n2 0\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "denoise",
            "--input",
            "bad.fstk",
            "--model",
            "bernoulli",
            "--iters",
            "10",
            "--burnin",
            "2",
            "--out",
            "rec",
        ],
    );
    assert_code(&out, 3, "non-binary observation under the binary model");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 1") && stderr.contains("col 0"), "site not named: {stderr}");
}

#[test]
fn unreadable_or_malformed_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        run_in(dir.path(), &["denoise", "--input", "missing.fstk", "--model", "poisson", "--out", "rec"]);
    assert_code(&out, 3, "missing input");

    std::fs::write(dir.path().join("garbage.fstk"), "not a stack\n1 2 3\n").unwrap();
    let out =
        run_in(dir.path(), &["denoise", "--input", "garbage.fstk", "--model", "poisson", "--out", "rec"]);
    assert_code(&out, 3, "bad magic");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("garbage.fstk:1"), "file:line not named: {stderr}");
}

#[test]
fn vanishing_support_mass_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // A million counts pin the conditional at intensity ~1e6, so a support
    // capped at 1 carries no mass and the chain must report a numerical
    // failure rather than silently clamp.
    std::fs::write(dir.path().join("huge.fstk"), "FSTK 1\n2 2 1 u32\n1000000 0\n0 0\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "denoise",
            "--input",
            "huge.fstk",
            "--model",
            "poisson",
            "--iters",
            "10",
            "--burnin",
            "2",
            "--support-max",
            "1.0",
            "--out",
            "rec",
        ],
    );
    assert_code(&out, 4, "no-mass support");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("vanishing mass"), "stderr: {stderr}");
}

#[test]
fn evaluate_prints_per_frame_rows_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &[
            "simulate",
            "--scene",
            "smooth",
            "--rows",
            "10",
            "--cols",
            "10",
            "--frames",
            "2",
            "--target-mean",
            "1.0",
            "--model",
            "bernoulli",
            "--seed",
            "4",
            "--out",
            "sim",
        ],
    );
    let out = run_in(
        dir.path(),
        &["evaluate", "--truth", "sim.truth.fstk", "--estimate", "sim.truth.fstk", "--obs", "sim.obs.fstk"],
    );
    assert_code(&out, 0, "evaluate");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "frame,nmse,nse_std,detection_rate");
    assert_eq!(lines.len(), 4); // header, frames 0-1, aggregate
    assert!(lines[1].starts_with("0,0.000000000e0"));
    assert!(lines[3].starts_with("all,"));

    // Same table lands in a file with --out.
    let out = run_in(
        dir.path(),
        &["evaluate", "--truth", "sim.truth.fstk", "--estimate", "sim.truth.fstk", "--out", "metrics.csv"],
    );
    assert_code(&out, 0, "evaluate to file");
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("frame,nmse,nse_std\n"));
}

#[test]
fn integrate_merges_groups_and_warns_about_the_remainder() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &[
            "simulate",
            "--scene",
            "smooth",
            "--rows",
            "6",
            "--cols",
            "6",
            "--frames",
            "7",
            "--target-mean",
            "0.5",
            "--model",
            "bernoulli",
            "--seed",
            "6",
            "--out",
            "sim",
        ],
    );
    let out = run_in(
        dir.path(),
        &["integrate", "--input", "sim.obs.fstk", "--group-size", "3", "--out", "merged.fstk"],
    );
    assert_code(&out, 0, "integrate");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("dropping 1 trailing frame"), "stderr: {stderr}");

    let (merged, dtype) = io::read_fstk(&dir.path().join("merged.fstk")).unwrap();
    // Binary stacks stay binary after merging.
    assert_eq!(dtype, Dtype::U1);
    assert_eq!(merged.dims().frames, 2);
    merged.validate_binary("merged").unwrap();
}
