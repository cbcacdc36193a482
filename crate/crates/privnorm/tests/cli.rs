//! End-to-end checks of the command-line surface and its exit codes.

use std::fs;
use std::process::Command;

fn privnorm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_privnorm"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

const CONFIG: &str = "\
n=1024
m=20000
alpha=0.3
epsilon=8
delta=1e-6
M=800
c_xi=0.9
c_inst=0.05
c_s=0.1
c_div=0.0001
width_full=65536
width_sub=65536
";

#[test]
fn gen_sketch_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.txt");
    let config = dir.path().join("config.txt");
    let release = dir.path().join("release.txt");
    let ledger = dir.path().join("ledger.tsv");
    fs::write(&config, CONFIG).unwrap();

    run_ok(privnorm()
        .args(["gen", "--out"])
        .arg(&stream)
        .args(["--n", "1024", "--m", "20000", "--dist", "zipf:1.1", "--seed", "1"]));

    run_ok(privnorm()
        .args(["sketch", "--stream"])
        .arg(&stream)
        .arg("--config")
        .arg(&config)
        .args(["--seed", "7", "--pin-noise", "--j0", "--out"])
        .arg(&release)
        .arg("--ledger")
        .arg(&ledger));

    let ledger_text = fs::read_to_string(&ledger).unwrap();
    assert!(ledger_text.contains("TOTAL"));

    // pinned-noise release should match the exact norm within (1 + alpha)
    let estimate_field = |line: &str| -> f64 {
        line.split_whitespace()
            .find_map(|tok| tok.strip_prefix("estimate="))
            .unwrap_or_else(|| panic!("no estimate= field in {line:?}"))
            .parse()
            .unwrap()
    };
    for norm in ["lp:1", "lp:2", "topk:10"] {
        let query_out = run_ok(privnorm()
            .args(["query", "--release"])
            .arg(&release)
            .args(["--norm", norm]));
        assert!(query_out.starts_with(&format!("norm={norm} estimate=")), "{query_out}");
        assert!(query_out.contains("instances="), "{query_out}");
        let got = estimate_field(&query_out);
        let want = estimate_field(&run_ok(privnorm()
            .args(["exact", "--stream"])
            .arg(&stream)
            .args(["--norm", norm])));
        let rel = (got - want).abs() / want;
        assert!(rel <= 0.3, "{norm}: got {got}, want {want}");
    }

    // eval prints all three numbers in one go
    let eval = run_ok(privnorm()
        .args(["eval", "--stream"])
        .arg(&stream)
        .arg("--config")
        .arg(&config)
        .args(["--seed", "7", "--pin-noise", "--j0", "--norm", "lp:2"]));
    assert!(eval.contains("rel_err"), "{eval}");

    // queries are deterministic post-processing of the same artifact
    let a = run_ok(privnorm().args(["query", "--release"]).arg(&release).args(["--norm", "lp:1.5"]));
    let b = run_ok(privnorm().args(["query", "--release"]).arg(&release).args(["--norm", "lp:1.5"]));
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.txt");
    let config = dir.path().join("config.txt");
    let release = dir.path().join("release.txt");
    fs::write(&config, CONFIG).unwrap();
    run_ok(privnorm()
        .args(["gen", "--out"])
        .arg(&stream)
        .args(["--n", "1024", "--m", "2000", "--seed", "2"]));
    run_ok(privnorm()
        .args(["sketch", "--stream"])
        .arg(&stream)
        .arg("--config")
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&release));

    // 2: usage errors (bad norm syntax, unreadable inputs)
    assert_eq!(
        exit_code(privnorm().args(["query", "--release"]).arg(&release).args(["--norm", "lq:2"])),
        2
    );
    assert_eq!(
        exit_code(privnorm()
            .args(["query", "--release", "/nonexistent", "--norm", "lp:2"])),
        2
    );

    // 3: infeasible parameters (derived sketch widths blow the memory cap)
    let infeasible = dir.path().join("infeasible.txt");
    fs::write(&infeasible, "n=1024\nm=20000\nalpha=0.01\nepsilon=0.01\nM=800\n").unwrap();
    assert_eq!(
        exit_code(privnorm()
            .args(["sketch", "--stream"])
            .arg(&stream)
            .arg("--config")
            .arg(&infeasible)
            .args(["--seed", "3", "--out"])
            .arg(dir.path().join("x.txt"))),
        3
    );

    // 4: norm not calibrated for this release (mmc bound exceeds M)
    let tight = dir.path().join("tight.txt");
    fs::write(&tight, CONFIG.replace("M=800", "M=5")).unwrap();
    let tight_release = dir.path().join("tight_release.txt");
    run_ok(privnorm()
        .args(["sketch", "--stream"])
        .arg(&stream)
        .arg("--config")
        .arg(&tight)
        .args(["--seed", "3", "--out"])
        .arg(&tight_release));
    assert_eq!(
        exit_code(privnorm()
            .args(["query", "--release"])
            .arg(&tight_release)
            .args(["--norm", "lp:1"])),
        4
    );
}

#[test]
fn audit_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.txt");
    let config = dir.path().join("config.txt");
    fs::write(
        &config,
        "n=256\nm=2000\nalpha=0.4\nepsilon=2\nM=100\nc_inst=0.05\nc_s=0.15\nwidth_full=4096\nwidth_sub=4096\n",
    )
    .unwrap();
    run_ok(privnorm()
        .args(["gen", "--out"])
        .arg(&stream)
        .args(["--n", "256", "--m", "2000", "--seed", "4"]));
    let out = run_ok(privnorm()
        .args(["audit", "--stream"])
        .arg(&stream)
        .arg("--config")
        .arg(&config)
        .args(["--seed", "5", "--samples", "400"]));
    assert!(out.contains("audit PASS"), "{out}");
}
