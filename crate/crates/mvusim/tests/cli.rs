use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvusim::matrix_io::{read_matrix, write_matrix, MatrixFile};
use mvusim::report::{random_vectors, random_weights};
use mvusim::{parse_config, ConfigFile, SweptParameter};
use mvusim_core::oracle::reference_mvp;
use mvusim_core::presets::nid_layers;
use mvusim_core::{ImageMatrix, WeightMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn mvusim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvusim")).args(args).output().expect("spawn mvusim")
}

fn sample(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, contents: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, contents).unwrap();
    p.display().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn trace_lines(bytes: &[u8]) -> Vec<Value> {
    std::str::from_utf8(bytes).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn sample_configs_validate() {
    for name in ["pe_sweep.toml", "nid.toml", "conv_layer.toml"] {
        let o = mvusim(&["validate", &sample(name)]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
    let ConfigFile::Sweep(spec) = parse_config(Path::new(&sample("pe_sweep.toml"))).unwrap() else { panic!() };
    assert_eq!(spec.parameter, SweptParameter::Pe);
    assert_eq!(spec.values, [2, 4, 8, 16, 32, 64]);
    assert_eq!(spec.points().unwrap().len(), 18);
    let ConfigFile::Pipeline(layers) = parse_config(Path::new(&sample("nid.toml"))).unwrap() else { panic!() };
    assert_eq!(layers, nid_layers());
}

#[test]
fn invalid_config_names_the_invariant() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", "[layer]\nifm_channels = 6\nofm_channels = 4\npe = 2\nsimd = 4\n");
    let o = mvusim(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("NonDivisibleSimd"), "{}", stderr(&o));
}

#[test]
fn parse_error_reports_line_and_column() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "typo.toml", "[layer]\nifm_channels = 8\npe = = 2\n");
    let o = mvusim(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("typo.toml:3:6"), "{}", stderr(&o));
}

#[test]
fn io_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let o = mvusim(&["validate", &path(&dir, "missing.toml")]);
    assert_eq!(o.status.code(), Some(2));
    let o = mvusim(&["run", &sample("conv_layer.toml"), "--weights", &path(&dir, "missing.mvum")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(mvusim(&["frobnicate"]).status.code(), Some(1));
    let o = mvusim(&["run", &sample("conv_layer.toml"), "--sink-prob", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mvusim(&["sweep", &sample("conv_layer.toml")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_reports_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "sweep.toml",
        "[sweep]\nifm_channels = 16\nifm_dim = 6\nofm_channels = 16\nkernel_dim = 3\npe = \"*\"\nsimd = 16\n\
         values = [1, 2, 4, 8, 16]\ndatapaths = [\"xnor\", \"standard\"]\n",
    );
    let run = |tag: &str, seed: &str| {
        let (csv, json) = (path(&dir, &format!("{tag}.csv")), path(&dir, &format!("{tag}.json")));
        let o = mvusim(&["sweep", &cfg, "--seed", seed, "--sink-prob", "0.8", "--csv", &csv, "--json", &json]);
        assert!(o.status.success(), "{}", stderr(&o));
        (fs::read(csv).unwrap(), fs::read(json).unwrap())
    };
    let a = run("a", "7");
    assert_eq!(a, run("b", "7"));
    assert_ne!(a.1, run("c", "8").1);

    let doc: Value = serde_json::from_slice(&a.1).unwrap();
    assert_eq!(doc["parameter"], "pe");
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    let csv = String::from_utf8(a.0).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("ifm_channels,ifm_dim,ofm_channels,ofm_dim,kernel_dim,pe,simd,datapath"));
}

#[test]
fn nid_latency_ignores_weight_values() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut files = vec![];
    for (i, cfg) in nid_layers().iter().enumerate() {
        let p = path(&dir, &format!("w{i}.mvum"));
        let m = MatrixFile::from_weights(&random_weights(cfg, &mut rng), cfg.datapath()).unwrap();
        write_matrix(Path::new(&p), &m).unwrap();
        files.push(p);
    }
    let exec = |extra: &[String]| {
        let json = path(&dir, "nid.json");
        let mut args = vec!["nid".to_string(), "--inferences".into(), "50".into(), "--json".into(), json.clone()];
        args.extend_from_slice(extra);
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = mvusim(&argv);
        assert!(o.status.success(), "{}", stderr(&o));
        let doc: Value = serde_json::from_slice(&fs::read(json).unwrap()).unwrap();
        let cycles: Vec<u64> =
            doc["layers"].as_array().unwrap().iter().map(|l| l["exec_cycles"].as_u64().unwrap()).collect();
        (cycles, doc["pipeline"]["interval_cycles"].as_f64().unwrap())
    };
    let random = exec(&[]);
    assert_eq!(random, (vec![17, 13, 13, 13], 12.0));
    let mut with_files = vec!["--config".to_string(), sample("nid.toml")];
    for f in &files {
        with_files.extend(["--weights".to_string(), f.clone()]);
    }
    assert_eq!(exec(&with_files), random);
}

#[test]
fn run_with_files_matches_reference() {
    let dir = TempDir::new().unwrap();
    let ConfigFile::Layer(cfg) = parse_config(Path::new(&sample("conv_layer.toml"))).unwrap() else { panic!() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random_weights(&cfg, &mut rng);
    let cols = random_vectors(&cfg, cfg.shape().output_pixels(), &mut rng);
    let image = ImageMatrix::from_columns(cfg.shape().synapses(), &cols).unwrap();
    let (wp, ip, op, rp) = (path(&dir, "w.txt"), path(&dir, "x.mvum"), path(&dir, "y.mvum"), path(&dir, "r.json"));
    write_matrix(Path::new(&wp), &MatrixFile::from_weights(&w, cfg.datapath()).unwrap()).unwrap();
    write_matrix(Path::new(&ip), &MatrixFile::from_image(&image, cfg.datapath()).unwrap()).unwrap();

    let conv = sample("conv_layer.toml");
    let o = mvusim(&[
        "run",
        &conv,
        "--weights",
        &wp,
        "--input",
        &ip,
        "--output",
        &op,
        "--report",
        &rp,
        "--sink-prob",
        "0.05",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = read_matrix(Path::new(&op)).unwrap();
    assert_eq!((out.rows, out.cols), (cfg.shape().output_pixels(), cfg.shape().ofm_channels));
    for (r, x) in cols.iter().enumerate() {
        assert_eq!(
            &out.data[r * out.cols..(r + 1) * out.cols],
            reference_mvp(&w, x, cfg.datapath()).unwrap().as_slice()
        );
    }
    let report: Value = serde_json::from_slice(&fs::read(&rp).unwrap()).unwrap();
    assert_eq!(report["whole_image"], true);
    assert!(report["stall_cycles_backpressure"].as_u64().unwrap() > 0);

    // weights of the wrong shape are a user error
    let small = path(&dir, "small.txt");
    write_matrix(
        Path::new(&small),
        &MatrixFile::from_weights(&WeightMatrix::from_fn(2, 2, |_, _| 0), cfg.datapath()).unwrap(),
    )
    .unwrap();
    assert_eq!(mvusim(&["run", &conv, "--weights", &small]).status.code(), Some(1));
}

#[test]
fn pipeline_run_writes_final_output() {
    let dir = TempDir::new().unwrap();
    let op = path(&dir, "y.txt");
    let o = mvusim(&["run", &sample("nid.toml"), "--output", &op, "--source-prob", "0.5", "--sink-prob", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = read_matrix(Path::new(&op)).unwrap();
    assert_eq!((out.rows, out.cols), (1, 1));
}

fn layer(dir: &TempDir, name: &str, ic: usize, oc: usize, pe: usize, simd: usize) -> String {
    write(dir, name, &format!("[layer]\nifm_channels = {ic}\nofm_channels = {oc}\npe = {pe}\nsimd = {simd}\n"))
}

#[test]
fn trace_of_unfolded_layer_has_unit_interval() {
    let dir = TempDir::new().unwrap();
    let cfg = layer(&dir, "u.toml", 8, 4, 4, 8);
    let o = mvusim(&["trace", &cfg, "--vectors", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let l = trace_lines(&o.stdout);
    assert_eq!(l[0]["vectors"], 6);
    let cycles = |key: &str, ready: &str| -> Vec<u64> {
        l[1..].iter().filter(|r| r[key] == true && r[ready] == true).map(|r| r["cycle"].as_u64().unwrap()).collect()
    };
    assert_eq!(cycles("in_tvalid", "in_tready"), [0, 1, 2, 3, 4, 5]);
    assert_eq!(cycles("out_tvalid", "out_tready"), [5, 6, 7, 8, 9, 10]);
}

#[test]
fn trace_with_stalled_sink_fills_fifo_then_idles() {
    let dir = TempDir::new().unwrap();
    let cfg = layer(&dir, "f.toml", 8, 8, 2, 4);
    let o = mvusim(&["trace", &cfg, "--vectors", "8", "--sink-prob", "0", "--fifo-depth", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let l = trace_lines(&o.stdout);
    let body = &l[1..];
    assert_eq!(body.iter().filter(|r| r["fifo_push"] == true).count(), 3);
    assert!(body.iter().all(|r| r["out_tready"] == false));
    let tail = &body[body.len() - 100..];
    assert!(tail.iter().all(|r| r["state"] == "idle" && r["fifo_len"] == 3));
}

#[test]
fn trace_of_empty_input_is_header_only() {
    let dir = TempDir::new().unwrap();
    let cfg = layer(&dir, "e.toml", 8, 4, 2, 4);
    let input = write(&dir, "empty.txt", "# no vectors\n8 0\n");
    let out = path(&dir, "t.jsonl");
    let o = mvusim(&["trace", &cfg, "--input", &input, "--output", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let l = trace_lines(&fs::read(PathBuf::from(out)).unwrap());
    assert_eq!(l.len(), 1);
    assert_eq!(l[0]["vectors"], 0);
}

#[test]
fn matrix_files_round_trip_through_both_formats() {
    let dir = TempDir::new().unwrap();
    let m = MatrixFile::new(3, 5, 3, true, (0..15).map(|v| v % 8 - 4).collect()).unwrap();
    let (bin, txt) = (path(&dir, "m.mvum"), path(&dir, "m.txt"));
    write_matrix(Path::new(&bin), &m).unwrap();
    write_matrix(Path::new(&txt), &m).unwrap();
    assert_eq!(read_matrix(Path::new(&bin)).unwrap(), m);
    assert_eq!(read_matrix(Path::new(&txt)).unwrap().data, m.data);
    assert!(fs::read(&bin).unwrap().starts_with(b"MVUM"));
}
