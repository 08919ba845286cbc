use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use holoquant_core::kan::{Domain, KanLayer, KanNetwork, SplineGrid};
use holoquant_core::lutham::{deserialize, serialize, Model};
use tempfile::TempDir;

const MINIMAL: &str = "[task]\nfunction = \"radial-bump\"\ninput_dim = 2\nsamples = 64\nseed = 3\n\n[network]\nwidths = [2, 3, 1]\ngrid_size = 5\n\n[train]\nepochs = 5\n";

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo.toml")
}

fn holoquant(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holoquant"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .env_remove("HOLOQUANT_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(&o), stderr(&o));
    o
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn trained_minimal(dir: &TempDir) -> PathBuf {
    let config = write(dir.path(), "c.toml", MINIMAL);
    let out = dir.path().join("train");
    ok(holoquant(&out, &["train", "--config", s(&config)]));
    out.join("model.skan")
}

fn save(dir: &Path, name: &str, model: &Model) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serialize(model).unwrap()).unwrap();
    p
}

#[test]
fn train_writes_three_files_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "c.toml", MINIMAL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(holoquant(out, &["train", "--config", s(&config), "--seed", "11"]));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["loss.csv", "model.skan", "train.manifest.toml"]);
    for f in ["model.skan", "loss.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let loss = fs::read_to_string(a.join("loss.csv")).unwrap();
    assert!(loss.starts_with("epoch,train_mse\n1,"));
    assert_eq!(loss.lines().count(), 6);
    let manifest = fs::read_to_string(a.join("train.manifest.toml")).unwrap();
    assert!(manifest.contains("train = 11") && manifest.contains("[config.network]"), "{manifest}");
    assert!(deserialize(&fs::read(a.join("model.skan")).unwrap()).unwrap().is_dense());
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let missing = write(dir.path(), "m.toml", &MINIMAL.replace("grid_size = 5\n", ""));
    let o = holoquant(dir.path(), &["train", "--config", s(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid_size"), "{}", stderr(&o));

    let broken = write(dir.path(), "b.toml", &MINIMAL.replace("samples = 64", "samples = ="));
    let o = holoquant(dir.path(), &["train", "--config", s(&broken)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let o = holoquant(dir.path(), &["train", "--config", "/nonexistent.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let o = holoquant(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compress_reports_r_squared_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let model = trained_minimal(&dir);
    let before = fs::read(&model).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = ok(holoquant(out, &["compress", s(&model), "--k", "2", "--restarts", "2", "--seed", "4"]));
        let text = stdout(&o);
        assert!(text.contains("per-edge storage: 65 bits"), "{text}");
        assert!(text.contains("layer 1 R^2") && text.contains("aggregate R^2"), "{text}");
    }
    for f in ["compressed.skan", "r_squared.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("r_squared.csv")).unwrap();
    assert!(csv.starts_with("layer,r_squared\n0,") && csv.contains("\naggregate,"), "{csv}");
    assert_eq!(fs::read(&model).unwrap(), before, "input must not change");

    let o = ok(holoquant(&a, &["compress", s(&model), "--k", "1"]));
    assert!(stdout(&o).contains("aggregate R^2"));
    assert_eq!(holoquant(&a, &["compress", s(&model), "--k", "0"]).status.code(), Some(1));
    let o = holoquant(&a, &["compress", s(&a.join("compressed.skan")), "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(holoquant(&a, &["compress", "/nonexistent.skan", "--k", "2"]).status.code(), Some(2));
}

#[test]
fn int8_large_codebook_storage_and_inspect() {
    let dir = TempDir::new().unwrap();
    let net = holoquant_core::trainer::init_network(&[2, 2], 10, 0.3, 1).unwrap();
    let model = save(dir.path(), "dense.skan", &Model::dense(&net));
    let o = ok(holoquant(dir.path(), &["compress", s(&model), "--k", "65536", "--int8"]));
    assert!(stdout(&o).contains("per-edge storage: 32 bits"), "{}", stdout(&o));

    let compressed = dir.path().join("compressed.skan");
    let o = ok(holoquant(dir.path(), &["inspect", s(&compressed)]));
    let text = stdout(&o);
    assert!(text.contains("codebook: 655,360 B"), "{text}");

    // reported sizes are exactly the memory plan
    let plan = deserialize(&fs::read(&compressed).unwrap()).unwrap().plan().unwrap();
    let group = |n: u64| {
        let d = n.to_string();
        d.chars()
            .enumerate()
            .fold(String::new(), |mut acc, (i, c)| {
                if i > 0 && (d.len() - i) % 3 == 0 {
                    acc.push(',');
                }
                acc.push(c);
                acc
            })
    };
    for (label, v) in [
        ("  stored: ", plan.stored_bytes()),
        ("  working set: ", plan.working_set_bytes()),
        ("  file: ", plan.file_bytes),
        ("  scratch: ", plan.scratch_bytes),
    ] {
        assert!(text.contains(&format!("{label}{} B\n", group(v))), "{label} {v}\n{text}");
    }
    assert!(dir.path().join("inspect.manifest.toml").exists());
}

#[test]
fn inspect_dense_and_corrupt_files() {
    let dir = TempDir::new().unwrap();
    let model = trained_minimal(&dir);
    let o = ok(holoquant(dir.path(), &["inspect", s(&model)]));
    assert!(stdout(&o).contains("compression ratio: uncompressed"), "{}", stdout(&o));

    let bytes = fs::read(&model).unwrap();
    let plan = deserialize(&bytes).unwrap().plan().unwrap();
    let cut = plan.layers[1].sections[0].offset as usize + 3;
    let truncated = dir.path().join("t.skan");
    fs::write(&truncated, &bytes[..cut]).unwrap();
    let o = holoquant(dir.path(), &["inspect", s(&truncated)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("truncated coefficients section"), "{}", stderr(&o));

    let mut bad = bytes.clone();
    bad[4] = 7;
    let corrupt = dir.path().join("c.skan");
    fs::write(&corrupt, bad).unwrap();
    let o = holoquant(dir.path(), &["inspect", s(&corrupt)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("offset 4"), "{}", stderr(&o));
}

#[test]
fn run_matches_lossless_compression_and_validates_rows() {
    let dir = TempDir::new().unwrap();
    let model = trained_minimal(&dir);
    // 9 edges in the widest layer: K = 9 keeps every shape
    ok(holoquant(dir.path(), &["compress", s(&model), "--k", "9"]));
    let mut rows = String::new();
    for n in 0..50 {
        let t = n as f64 / 49.0;
        rows += &format!("{},{}\n", 2.2 * t - 1.1, (7.0 * t).sin());
    }
    let input = write(dir.path(), "in.csv", &rows);
    let (a, b) = (dir.path().join("dense"), dir.path().join("vq"));
    ok(holoquant(&a, &["run", s(&model), s(&input)]));
    ok(holoquant(&b, &["run", s(&dir.path().join("compressed.skan")), s(&input)]));
    let read = |p: &Path| -> Vec<f64> {
        fs::read_to_string(p.join("output.csv")).unwrap().lines().map(|l| l.parse().unwrap()).collect()
    };
    let (ya, yb) = (read(&a), read(&b));
    assert_eq!(ya.len(), 50);
    for (x, y) in ya.iter().zip(&yb) {
        assert!((x - y).abs() < 1e-5, "{x} vs {y}");
    }

    let empty = write(dir.path(), "empty.csv", "");
    ok(holoquant(&a, &["run", s(&model), s(&empty)]));
    assert_eq!(fs::read_to_string(a.join("output.csv")).unwrap(), "");

    let malformed = write(dir.path(), "bad.csv", "0.1,0.2\n0.3,oops\n");
    let o = holoquant(&a, &["run", s(&model), s(&malformed)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    let wide = write(dir.path(), "wide.csv", "0.1,0.2,0.3\n");
    let o = holoquant(&a, &["run", s(&model), s(&wide)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("expects 2") && stderr(&o).contains("has 3"), "{}", stderr(&o));
}

#[test]
fn bench_prints_ratio_and_records_warmup() {
    let dir = TempDir::new().unwrap();
    let paths: Vec<PathBuf> = [5, 40]
        .iter()
        .map(|&g| {
            let net = holoquant_core::trainer::init_network(&[4, 8, 2], g, 0.2, 1).unwrap();
            save(dir.path(), &format!("g{g}.skan"), &Model::dense(&net))
        })
        .collect();
    let o = ok(holoquant(
        dir.path(),
        &["bench", s(&paths[0]), s(&paths[1]), "--warmup", "7", "--repeats", "20", "--batch", "8"],
    ));
    assert!(stdout(&o).contains("median ratio (max/min): "), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(csv.starts_with("G,median_us,p25_us,p75_us\n5,"), "{csv}");
    assert_eq!(csv.lines().count(), 3);
    let manifest = fs::read_to_string(dir.path().join("bench.manifest.toml")).unwrap();
    assert!(manifest.contains("warmup = 7"), "{manifest}");

    assert_eq!(holoquant(dir.path(), &["bench", s(&paths[0])]).status.code(), Some(1));
    let other = save(
        dir.path(),
        "other.skan",
        &Model::dense(&holoquant_core::trainer::init_network(&[4, 3, 2], 5, 0.2, 1).unwrap()),
    );
    assert_eq!(holoquant(dir.path(), &["bench", s(&paths[0]), s(&other)]).status.code(), Some(2));
}

#[test]
fn spectrum_of_a_rank_one_model() {
    let dir = TempDir::new().unwrap();
    let shape = [0.3, -0.2, 0.9, 0.1, -0.7, 0.4];
    let grids = (0..6)
        .map(|e| SplineGrid::new(shape.iter().map(|v| v * (e as f64 + 1.0)).collect(), Domain::UNIT).unwrap())
        .collect();
    let net = KanNetwork::new(vec![KanLayer::new(2, 3, grids).unwrap()]).unwrap();
    let model = save(dir.path(), "rank1.skan", &Model::dense(&net));
    let o = ok(holoquant(dir.path(), &["analyze", s(&model), "--mode", "spectrum"]));
    assert!(stdout(&o).contains("raw rank-1: 100.0% at r=1"), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("rank,sigma,cumfrac\n1,"), "{csv}");
    assert!(dir.path().join("spectrum.summary.txt").exists());
    assert!(dir.path().join("analyze.manifest.toml").exists());
}

#[test]
fn analyze_modes_on_the_demo_model() {
    let dir = TempDir::new().unwrap();
    let config = demo_config();
    ok(holoquant(dir.path(), &["train", "--config", s(&config)]));
    let model = dir.path().join("model.skan");

    let o = ok(holoquant(dir.path(), &["analyze", s(&model), "--mode", "prune-vs-vq", "--config", s(&config)]));
    assert!(stdout(&o).contains("VQ wins at every matched budget (3/3)"), "{}", stdout(&o));
    let csv = fs::read_to_string(dir.path().join("prune_vs_vq.csv")).unwrap();
    assert!(csv.starts_with("budget_bits,prune_mse,vq_mse\n"));
    assert_eq!(csv.lines().count(), 4);

    ok(holoquant(dir.path(), &["analyze", s(&model), "--mode", "ablation", "--config", s(&config), "--k", "4,16,64"]));
    let csv = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(csv.starts_with("x,y,seed\n4,"));

    let o = ok(holoquant(dir.path(), &["analyze", s(&model), "--mode", "prune-sweep", "--config", s(&config)]));
    assert!(stdout(&o).contains("baseline MSE"));
    let first = fs::read(dir.path().join("prune_sweep.csv")).unwrap();
    ok(holoquant(dir.path(), &["analyze", s(&model), "--mode", "prune-sweep", "--config", s(&config)]));
    assert_eq!(fs::read(dir.path().join("prune_sweep.csv")).unwrap(), first);

    let o = holoquant(dir.path(), &["analyze", s(&model), "--mode", "prune-sweep"]);
    assert_eq!(o.status.code(), Some(1));
    let o = holoquant(dir.path(), &["analyze", s(&model), "--mode", "spectra"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let model = trained_minimal(&dir);
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_holoquant"))
            .arg("--out-dir")
            .arg(dir.path())
            .args(["analyze", s(&model), "--mode", "spectrum"])
            .env("HOLOQUANT_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    let o = run("zero");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("HOLOQUANT_THREADS"));
}
