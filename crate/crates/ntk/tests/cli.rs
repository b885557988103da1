use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ntk::formats::gram::read_gram;
use ntk::model::ModelDocument;
use ntk_core::kernel::{gram_matrix, KernelConfig};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn ntk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntk")).args(args).output().expect("binary runs")
}

fn manifest(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn kernel_two_samples_matches_library_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("two.csv"), "a,b,y\n0.6,0.8,p\n1.0,0.0,q\n").unwrap();
    let m = manifest(
        dir.path(),
        "k.toml",
        "seed = 5\noutput_dir = \"out\"\n[kernel]\ndepth = 1\n[data]\nformat = \"csv\"\npath = \"two.csv\"\n",
    );
    let m = m.to_str().unwrap();
    ok(&ntk(&["kernel", m, "--csv"]));
    let out = dir.path().join("out");
    let g = read_gram(&out.join("gram.ntkg")).unwrap();
    let want = gram_matrix(&[vec![0.6, 0.8], vec![1.0, 0.0]], None, &KernelConfig::ntk(1, 0)).unwrap();
    assert_eq!(g, want);
    assert_eq!((g.rows(), g.cols()), (2, 2));
    let side = json(&out.join("gram.json"));
    assert_eq!(side["inputs"].as_array().unwrap().len(), 1);
    assert_eq!(side["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(side["wall_time_seconds"].is_number());
    assert!(out.join("manifest.resolved.toml").exists());
    assert!(out.join("gram.csv").exists());

    let first = std::fs::read(out.join("gram.ntkg")).unwrap();
    ok(&ntk(&["kernel", m]));
    assert_eq!(std::fs::read(out.join("gram.ntkg")).unwrap(), first);
}

#[test]
fn missing_data_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), "k.toml", "[data]\nformat = \"csv\"\npath = \"absent.csv\"\n");
    let out = ntk(&["kernel", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));

    let out = ntk(&["kernel", dir.path().join("no-manifest.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-manifest.toml"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let blobs = data_dir().join("toy_blobs.csv");
    let m = manifest(
        dir.path(),
        "p.toml",
        &format!("[data]\nformat = \"csv\"\npath = {:?}\n[protocol]\nname = \"bogus-protocol\"\n", blobs),
    );
    let out = ntk(&["fit-eval", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus-protocol"));

    let m = manifest(dir.path(), "q.toml", "[kernel]\ndepht = 2\n");
    assert_eq!(ntk(&["kernel", m.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(ntk(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ntk(&["kernel"]).status.code(), Some(2));
    assert!(ntk(&["--help"]).status.success());
}

#[test]
fn uci_cv_on_toy_data_reports_four_folds() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 1\noutput_dir = \"out\"\n[data]\nformat = \"csv\"\npath = {:?}\n[protocol]\nname = \"uci-cv\"\nmax_depth = 2\n",
        data_dir().join("toy_blobs.csv")
    );
    let m = manifest(dir.path(), "u.toml", &body);
    let stdout = ok(&ntk(&["fit-eval", m.to_str().unwrap()]));
    assert!(stdout.contains("4-fold accuracy"));
    let out = dir.path().join("out");
    let summary = json(&out.join("summary.json"));
    let folds = summary["fold_accuracies"].as_array().unwrap();
    assert_eq!(folds.len(), 4);
    let mean = folds.iter().map(|v| v.as_f64().unwrap()).sum::<f64>() / 4.0;
    assert!((summary["accuracy"]["mean"].as_f64().unwrap() - mean).abs() < 1e-15);
    // L in 1..=2 gives 3 kernels, times 7 costs
    let grid = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 21);
    assert_eq!(std::fs::read_to_string(out.join("folds.csv")).unwrap().lines().count(), 5);

    // the saved model reproduces its own training predictions
    let doc = ModelDocument::load(&out.join("model.json")).unwrap();
    let ds = ntk::data::load_csv(&data_dir().join("toy_blobs.csv"), &Default::default()).unwrap();
    let cfg = doc.kernel.dense();
    let g = gram_matrix(&ds.features, None, &cfg).unwrap();
    let pred = doc.predict(&g, &g).unwrap();
    assert_eq!(pred.len(), ds.len());
    let other = gram_matrix(&ds.features, None, &KernelConfig::ntk(cfg.depth + 1, 0)).unwrap();
    assert!(doc.verify(&other).is_err());

    let before = std::fs::read(out.join("summary.json")).unwrap();
    ok(&ntk(&["fit-eval", m.to_str().unwrap()]));
    assert_eq!(std::fs::read(out.join("summary.json")).unwrap(), before);
}

#[test]
fn fewshot_k1_reports_ten_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 2\noutput_dir = \"out\"\n[kernel]\nkind = \"cntk\"\nconv_layers = 1\nfilter_size = 1\nnormalize = true\n\
         [data]\nformat = \"tensor-csv\"\npath = {:?}\ntest_path = {:?}\n[protocol]\nname = \"fewshot\"\nk = 1\n",
        data_dir().join("toy_fewshot_train.csv"),
        data_dir().join("toy_fewshot_test.csv")
    );
    let m = manifest(dir.path(), "f.toml", &body);
    ok(&ntk(&["fit-eval", m.to_str().unwrap()]));
    let out = dir.path().join("out");
    let s = json(&out.join("summary.json"));
    assert_eq!(s["repeats"], 10);
    assert_eq!(s["costs"].as_array().unwrap().len(), 26);
    assert_eq!(s["tuning_classes"], serde_json::json!([0, 1]));
    assert_eq!(s["held_out_classes"], serde_json::json!([2, 3, 4]));
    let map = s["held_out_map"]["mean"].as_f64().unwrap();
    assert!(map > 0.2 && map <= 1.0, "{map}");
    // 5 classes x 10 repeats
    assert_eq!(std::fs::read_to_string(out.join("episodes.csv")).unwrap().lines().count(), 51);
}

#[test]
fn compare_toy_table() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("output_dir = \"out\"\n[compare]\ntable = {:?}\n", data_dir().join("toy_accuracy.csv"));
    let m = manifest(dir.path(), "c.toml", &body);
    ok(&ntk(&["compare", m.to_str().unwrap()]));
    let out = dir.path().join("out");
    let r = json(&out.join("metrics.json"));
    assert_eq!(r["friedman_rank"], serde_json::json!([2.0, 2.0, 2.0]));
    assert_eq!(r["datasets"], 2);
    let w = std::fs::read_to_string(out.join("wilcoxon.csv")).unwrap();
    // 3 x 2 ordered pairs; two datasets is too few for the test
    assert_eq!(w.lines().count(), 7);
    assert!(w.contains("at least 6"));

    std::fs::write(dir.path().join("one.csv"), "dataset,only\nd1,0.5\n").unwrap();
    let m = manifest(dir.path(), "d.toml", "[compare]\ntable = \"one.csv\"\n");
    let out = ntk(&["compare", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2 classifier columns"));

    std::fs::write(dir.path().join("ragged.csv"), "dataset,a,b\nd1,0.5,0.4\nd2,0.5\n").unwrap();
    let m = manifest(dir.path(), "e.toml", "[compare]\ntable = \"ragged.csv\"\n");
    let out = ntk(&["compare", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
}

#[test]
fn oracle_modes_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(
        dir.path(),
        "w.toml",
        "seed = 3\noutput_dir = \"sweep\"\n[oracle]\nmode = \"width-sweep\"\nwidths = [16, 64]\nseeds = 3\npairs = 4\ndim = 3\n",
    );
    ok(&ntk(&["oracle", m.to_str().unwrap()]));
    let csv = std::fs::read_to_string(dir.path().join("sweep/width_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let body = format!(
        "seed = 4\noutput_dir = \"train\"\n[data]\nformat = \"csv\"\npath = {:?}\n\
         [oracle]\nmode = \"train\"\nwidth = 32\ndepth = 2\nepochs = 20\nlearning_rate = 0.2\n",
        data_dir().join("toy_blobs.csv")
    );
    let m = manifest(dir.path(), "t.toml", &body);
    ok(&ntk(&["oracle", m.to_str().unwrap()]));
    let out = dir.path().join("train");
    let trace = std::fs::read_to_string(out.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "epoch,loss,train_accuracy");
    assert_eq!(trace.lines().count(), 21);
    let w = ntk::formats::tensor::read_tensors(&out.join("weights/layer1.ntkt")).unwrap();
    assert_eq!(w[0].shape(), (1, 32, 4));
    let w = ntk::formats::tensor::read_tensors(&out.join("weights/layer3.ntkt")).unwrap();
    assert_eq!(w[0].shape(), (1, 3, 32));
}

#[test]
fn nn_baseline_kernel_column_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 3\noutput_dir = \"out\"\n[data]\nformat = \"csv\"\npath = {:?}\n\
         [protocol]\nname = \"nn-baseline\"\nseeds = 4\nwidth = 64\nepochs = 30\nlearning_rate = 0.5\n",
        data_dir().join("toy_blobs.csv")
    );
    let m = manifest(dir.path(), "n.toml", &body);
    ok(&ntk(&["--workers", "1", "fit-eval", m.to_str().unwrap()]));
    let s = json(&dir.path().join("out/summary.json"));
    assert_eq!(s["ntk_accuracy"]["std"], 0.0);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/seeds.csv")).unwrap().lines().count(), 5);
}

#[test]
fn image_subsample_on_toy_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "seed = 9\noutput_dir = \"out\"\n[kernel]\nkind = \"cntk\"\nconv_layers = 2\nnormalize = true\n\
         [data]\nformat = \"tensor-csv\"\npath = {:?}\ntest_path = {:?}\n\
         [protocol]\nname = \"image-subsample\"\nn = 10\nrepeats = 6\ntest_subset = 25\n",
        data_dir().join("toy_fewshot_train.csv"),
        data_dir().join("toy_fewshot_test.csv")
    );
    let m = manifest(dir.path(), "i.toml", &body);
    ok(&ntk(&["fit-eval", m.to_str().unwrap()]));
    let s = json(&dir.path().join("out/summary.json"));
    assert_eq!(s["test_samples"], 25);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/episodes.csv")).unwrap().lines().count(), 7);
    let acc = s["accuracy"]["mean"].as_f64().unwrap();
    assert!(acc > 0.4, "{acc}");

    // n must split evenly over the 5 classes
    let bad = body.replace("n = 10", "n = 7");
    let m = manifest(dir.path(), "j.toml", &bad);
    assert_eq!(ntk(&["fit-eval", m.to_str().unwrap()]).status.code(), Some(3));
}
