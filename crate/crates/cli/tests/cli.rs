use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn pksvd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pksvd"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pksvd(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn train_writes_pair_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cam = data("camera128.pgm");
    let report = ok(
        dir.path(),
        &[
            "train",
            cam.to_str().unwrap(),
            "--out",
            "p.pk",
            "--max-iters",
            "5",
        ],
    );
    assert!(report.contains("parseval psi"));
    assert_eq!(
        entries(dir.path()),
        ["p.dual.pk", "p.pk", "p.summary.txt", "p.trace.csv"]
    );
    let trace = std::fs::read_to_string(dir.path().join("p.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 6);
    assert!(trace.starts_with("iter,"));
    let verify = ok(dir.path(), &["verify", "p.pk", "p.dual.pk"]);
    assert!(verify.contains("||psi phi^T - I||_F^2"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cam = data("camera128.pgm");
    std::fs::write(
        dir.path().join("run.cfg"),
        "# desk\nmethod = ksvd\nksvd_iters = 2\nout = from_file.pk\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &["--config", "run.cfg", "train", cam.to_str().unwrap()],
    );
    assert!(dir.path().join("from_file.pk").exists());
    ok(
        dir.path(),
        &[
            "--config",
            "run.cfg",
            "train",
            cam.to_str().unwrap(),
            "--out",
            "flag.pk",
        ],
    );
    assert!(dir.path().join("flag.pk").exists());
    assert!(!dir.path().join("flag.dual.pk").exists());
}

#[test]
fn unknown_keys_and_missing_outputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "rho9 = 1\n").unwrap();
    let out = pksvd(
        dir.path(),
        &["--config", "bad.cfg", "theory", "--out", "t.csv"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key `rho9`"));

    let out = pksvd(dir.path(), &["theory", "--set", "nope=2", "--out", "t.csv"]);
    assert!(!out.status.success());

    let out = pksvd(dir.path(), &["theory"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing required key `out`"));
    assert!(entries(dir.path()) == ["bad.cfg"]);
}

#[test]
fn failed_commands_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.pk"), b"not a dictionary").unwrap();
    let cam = data("camera128.pgm");
    let out = pksvd(
        dir.path(),
        &[
            "denoise",
            cam.to_str().unwrap(),
            "--dict",
            "junk.pk",
            "--out-prefix",
            "dn",
        ],
    );
    assert!(!out.status.success());
    let out = pksvd(dir.path(), &["train", "missing.pgm", "--out", "never.pk"]);
    assert!(!out.status.success());
    assert_eq!(entries(dir.path()), ["junk.pk"]);
}

#[test]
fn restoration_commands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cam = data("camera128.pgm");
    let cam = cam.to_str().unwrap();
    ok(
        dir.path(),
        &["train", cam, "--out", "d.pk", "--max-iters", "5"],
    );
    ok(
        dir.path(),
        &[
            "denoise",
            cam,
            "--dict",
            "d.pk",
            "--dual",
            "d.dual.pk",
            "--out-prefix",
            "dn",
            "--eps",
            "10",
        ],
    );
    let csv = std::fs::read_to_string(dir.path().join("dn.csv")).unwrap();
    assert!(
        csv.starts_with("image,sigma_or_fraction,dictionary,psnr,ssim,eps_used\ncamera128,20,d,")
    );
    ok(
        dir.path(),
        &[
            "inpaint",
            cam,
            "--dict",
            "d.pk",
            "--out-prefix",
            "ip",
            "--fraction",
            "0.3",
        ],
    );
    ok(
        dir.path(),
        &[
            "compress",
            cam,
            "--dict",
            "d.pk",
            "--out-prefix",
            "c",
            "--steps",
            "2,8,32",
        ],
    );
    let rd = std::fs::read_to_string(dir.path().join("c.rd.csv")).unwrap();
    assert_eq!(rd.lines().count(), 4);
    ok(
        dir.path(),
        &["reconstruct", cam, "--dict", "d.pk", "--out", "r.pgm"],
    );
    for f in [
        "dn.noisy.pgm",
        "dn.denoised.pgm",
        "ip.masked.pgm",
        "ip.inpainted.pgm",
        "ip.csv",
        "r.pgm",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn theory_report_lists_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let report = ok(dir.path(), &["theory", "--out", "t.csv"]);
    assert_eq!(
        report
            .lines()
            .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
            .count(),
        6
    );
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(csv.starts_with("trial,quantity,value\n"));
}
