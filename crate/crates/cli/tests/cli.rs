use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY: &str = "\
dataset.synthetic = sines
dataset.length = 900
forecast.lookback = 48
forecast.horizon = 12
model.d_model = 8
model.heads = 2
model.d_state = 3
train.epochs = 2
train.steps_per_epoch = 4
train.batch_size = 8
";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace { dir: tempfile::tempdir().unwrap() };
        fs::write(ws.path("toy.cfg"), TOY).unwrap();
        ws
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn mou(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mou")).args(args).current_dir(self.dir.path()).env_remove("MOU_SEED").output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.mou(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn csv_matrix(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn train_writes_the_run_directory() {
    let ws = Workspace::new();
    ws.ok(&["train", "-c", "toy.cfg", "--set", "forecast.horizon=6", "--set", "run.name=h6"]);
    for f in ["config.resolved", "checkpoint.bin", "report.csv", "metrics.json", "timing.json"] {
        assert!(ws.path(&format!("runs/h6/{f}")).exists(), "{f}");
    }
    let metrics = ws.read("runs/h6/metrics.json");
    assert!(metrics.contains("\"T\":6") && metrics.contains("\"L\":48"), "{metrics}");
    assert_eq!(metrics.lines().count(), 1);
    assert!(ws.read("runs/h6/config.resolved").contains("forecast.horizon = 6"));
    assert!(ws.read("runs/h6/report.csv").starts_with("epoch,train_loss,val_mse,val_mae\n"));

    let eval = ws.ok(&["evaluate", "--checkpoint", "runs/h6/checkpoint.bin"]);
    let mse = metrics.split("\"mse\":").nth(1).unwrap().split(',').next().unwrap();
    assert!(eval.contains(&format!("\"mse\":{mse}")), "{eval} vs {metrics}");
}

#[test]
fn reruns_and_default_order_are_identical() {
    let ws = Workspace::new();
    ws.ok(&["train", "-c", "toy.cfg", "--set", "run.name=a"]);
    ws.ok(&["train", "-c", "toy.cfg", "--set", "run.name=b", "--set", "model.order=MFCA"]);
    assert_eq!(ws.read("runs/a/metrics.json"), ws.read("runs/b/metrics.json"));
    let first = fs::read(ws.path("runs/a/checkpoint.bin")).unwrap();
    ws.ok(&["train", "-c", "toy.cfg", "--set", "run.name=a"]);
    assert_eq!(fs::read(ws.path("runs/a/checkpoint.bin")).unwrap(), first);
}

#[test]
fn seed_environment_variable_is_overridden_by_flags() {
    let ws = Workspace::new();
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mou"));
        c.args(["train", "-c", "toy.cfg"]).args(extra).current_dir(ws.dir.path());
        match env {
            Some(v) => c.env("MOU_SEED", v),
            None => c.env_remove("MOU_SEED"),
        };
        assert!(c.output().unwrap().status.success());
    };
    run(Some("11"), &["--set", "run.name=env"]);
    assert!(ws.read("runs/env/metrics.json").contains("\"seed\":11"));
    run(Some("11"), &["--set", "run.name=flag", "--set", "train.seed=12"]);
    assert!(ws.read("runs/flag/metrics.json").contains("\"seed\":12"));
}

#[test]
fn configuration_failures_exit_with_two() {
    let ws = Workspace::new();
    let out = ws.mou(&["train", "--set", "dataset.path=missing.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    let out = ws.mou(&["train", "-c", "toy.cfg", "--set", "model.heads=3"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.heads"));

    let out = ws.mou(&["flops", "-c", "toy.cfg", "--set", "model.order=MXA"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.order"));

    fs::write(ws.path("bad.cfg"), "dataset.synthetic = sines\nnot a key\n").unwrap();
    let out = ws.mou(&["train", "-c", "bad.cfg"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2"));

    fs::write(ws.path("blank.csv"), "date,OT\n1,1.0\n2,\n").unwrap();
    let out = ws.mou(&["train", "--set", "dataset.path=blank.csv"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3"));
}

#[test]
fn divergence_exits_with_one() {
    let ws = Workspace::new();
    let out = ws.mou(&["train", "-c", "toy.cfg", "--set", "train.lr=1e30", "--set", "model.extractor=linear"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn extractor_sweep_has_four_rows() {
    let ws = Workspace::new();
    ws.ok(&["ablate", "-c", "toy.cfg", "--axis", "extractor", "--set", "train.epochs=1"]);
    let csv = ws.read("runs/default/ablate-extractor/results.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (row, name) in rows.iter().zip(["mof", "sem", "linear", "dyconv"]) {
        assert!(row.starts_with(&format!("extractor,{name},")), "{row}");
    }
}

#[test]
fn lookback_sweep_values_depend_on_the_dataset() {
    let ws = Workspace::new();
    ws.ok(&[
        "ablate", "-c", "toy.cfg", "--axis", "lookback", "--values", "24,36", "--seeds", "2", "--set", "train.epochs=1",
    ]);
    let csv = ws.read("runs/default/ablate-lookback/results.csv");
    assert_eq!(csv.lines().count(), 1 + 4);
    let cfg = mou_cli::RunConfig::resolve(None, None, &["dataset.synthetic=sines".into()]).unwrap();
    assert_eq!(mou_cli::commands::Axis::Lookback.values(&cfg), ["192", "336", "512", "720"]);
    let ili = mou_cli::RunConfig::resolve(None, None, &["dataset.path=data/national_illness.csv".into(), "dataset.name=ILI".into()])
        .unwrap();
    assert_eq!(mou_cli::commands::Axis::Lookback.values(&ili), ["48", "60", "104", "144"]);
}

#[test]
fn inspection_dumps() {
    let ws = Workspace::new();
    ws.ok(&["train", "-c", "toy.cfg", "--set", "run.name=insp", "--set", "model.order=MAMA"]);
    let ckpt = "runs/insp/checkpoint.bin";

    ws.ok(&["inspect", "--checkpoint", ckpt, "--what", "router", "--sample", "3"]);
    let router = ws.read("runs/insp/inspect/router.csv");
    // 48-point window, patches of 16 every 8 → 5 tokens.
    assert_eq!(router.lines().count(), 1 + 5);
    for line in router.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((cells[3..].iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(cells[2], cells[3 + cells[1] as usize]);
    }

    let files = ws.ok(&["inspect", "--checkpoint", ckpt, "--what", "attention"]);
    assert_eq!(files.lines().count(), 2 * 2, "two attention layers, two heads");
    for f in files.lines() {
        for row in csv_matrix(&ws.path(f)) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    let files = ws.ok(&["inspect", "--checkpoint", ckpt, "--what", "ssm-map", "--layer", "2", "--channel", "5"]);
    assert_eq!(files.trim(), ws.path("runs/insp/inspect/ssm_layer2_channel5.csv").strip_prefix(ws.dir.path()).unwrap().to_str().unwrap());
    let m = csv_matrix(&ws.path(files.trim()));
    for (t, row) in m.iter().enumerate() {
        assert!(row[t + 1..].iter().all(|&v| v == 0.0));
    }

    for bad in [
        vec!["--what", "router", "--sample", "99999"],
        vec!["--what", "ssm-map", "--channel", "16"],
        vec!["--what", "ssm-map", "--layer", "1"],
        vec!["--what", "attention", "--layer", "0"],
    ] {
        let mut args = vec!["inspect", "--checkpoint", ckpt];
        args.extend(bad.iter());
        assert_eq!(code(&ws.mou(&args)), 2, "{bad:?}");
    }
}

#[test]
fn flops_report() {
    let ws = Workspace::new();
    let text = ws.ok(&["flops", "--set", "dataset.synthetic=sines", "--set", "forecast.lookback=512", "--set", "model.d_model=128"]);
    assert!(text.contains("C_MoU") && text.contains("C_MHSA"));
    let report = mou_core::model::count_flops(&{
        let mut c = mou_core::ModelConfig::default();
        c.lookback = 512;
        c.d_model = 128;
        c
    });
    for (term, count) in &report.exact {
        let line = text.lines().find(|l| l.starts_with(term)).unwrap();
        assert!(line.contains(&count.to_string()), "{line}");
    }
    assert!(text.contains("2·ND^2 [MoF]") && text.contains("1·ND^2 [FFN]"));
}
