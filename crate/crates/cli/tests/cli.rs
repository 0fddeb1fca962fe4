use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn feds(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feds")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn ratio_and_fedepl_dim() {
    let dir = tempfile::tempdir().unwrap();
    let out = feds(&["ratio", "0.7", "4", "256"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "0.7642");
    let out = feds(&["ratio", "0.4", "4", "256"], dir.path());
    assert_eq!(stdout(&out).trim(), "0.5238");
    let out = feds(&["fedepl-dim", "0.4", "4", "256"], dir.path());
    assert_eq!(stdout(&out).trim(), "135");
    assert!(!feds(&["fedepl-dim", "1.0", "4", "256"], dir.path()).status.success());
}

#[test]
fn bad_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let out = feds(&["run", "--config", "nope.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.cfg"), "{err}");
    assert_eq!(feds(&["frobnicate"], dir.path()).status.code(), Some(2));

    fs::write(dir.path().join("bad.cfg"), "dataset = kg.tsv\nwidth = 3\n").unwrap();
    let out = feds(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));
}

#[test]
fn generate_partition_run_compare() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let gen = ["generate", "--out", "kg.tsv", "--entities", "150", "--relations", "6", "--triples", "500", "--clusters", "3"];
    assert!(feds(&gen, root).status.success());
    let out = feds(&["partition", "kg.tsv", "--clients", "3", "--seed", "2", "--out", "fed"], root);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("client ")).count(), 3);

    for strategy in ["feds", "fedep"] {
        let cfg = format!(
            "# smoke\ndataset = fed\nstrategy = {strategy}\ndim = 8\nmax_rounds = 4\neval_every = 2\nbatch_size = 128\n"
        );
        fs::write(root.join(format!("{strategy}.cfg")), cfg).unwrap();
        let out = feds(&["run", "--config", &format!("{strategy}.cfg"), "--seed", "3"], root);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let run_dir = root.join(format!("runs/{strategy}-seed3"));
        for name in ["config.cfg", "runlog.csv", "ledger.csv", "summary.json", "best_embeddings.bin"] {
            assert!(run_dir.join(name).exists(), "{strategy}: {name}");
        }
    }

    let out = feds(&["compare", "runs/feds-seed3", "runs/fedep-seed3/summary.json", "--json", "cmp.json"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = stdout(&out);
    assert!(table.contains("MRR@CG") && table.contains("P@98"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("cmp.json")).unwrap()).unwrap();
    assert_eq!(json["baseline"], "fedep");

    // rerunning the saved config reproduces the run byte for byte
    let out = feds(&["run", "--config", "runs/feds-seed3/config.cfg", "--out", "again"], root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["runlog.csv", "ledger.csv"] {
        assert_eq!(fs::read(root.join("again").join(name)).unwrap(), fs::read(root.join("runs/feds-seed3").join(name)).unwrap());
    }
}
