use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use ssan::charset::Charset;
use ssan::checkpoint;
use ssan::data::{sample_rng, LengthDistribution};
use ssan::image::GrayImage;
use ssan::{ModelConfig, Recognizer};

fn ssan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssan")).args(args).output().expect("spawn ssan")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// `length → count` rows printed by `generate`.
fn histogram(out: &str) -> BTreeMap<usize, usize> {
    out.lines()
        .skip_while(|l| *l != "length\tcount")
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

/// A one-character digit dataset and a checkpoint overfit on its first
/// sample, shared by the tests that need a trained model.
struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    run: PathBuf,
    train_stdout: String,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d");
        let run = dir.path().join("run");
        let g = ssan(&["generate", "--out", path_str(&data), "--count", "4", "--seed", "1", "--lengths", "1-1", "--charset", "digits"]);
        assert_eq!(code(&g), 0, "{}", stderr(&g));
        let t = ssan(&["train", "--data", path_str(&data), "--steps", "200", "--overfit1", "--out", path_str(&run)]);
        assert_eq!(code(&t), 0, "{}", stderr(&t));
        Fixture { train_stdout: stdout(&t), _dir: dir, data, run }
    })
}

#[test]
fn help_exits_zero_everywhere() {
    assert_eq!(code(&ssan(&["--help"])), 0);
    for sub in ["generate", "train", "eval", "ablate", "gradcheck", "visualize"] {
        let o = ssan(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{}", sub);
        assert!(stdout(&o).contains("--"), "{}", sub);
    }
}

#[test]
fn unknown_flags_and_short_flags_exit_two() {
    assert_eq!(code(&ssan(&["generate", "--bogus"])), 2);
    assert_eq!(code(&ssan(&["gradcheck", "-o", "add"])), 2);
    assert_eq!(code(&ssan(&["frobnicate"])), 2);
    assert_eq!(code(&ssan(&[])), 2);
}

#[test]
fn generate_is_byte_for_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = ssan(&["generate", "--count", "100", "--seed", "7", "--out", path_str(d)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).starts_with("samples\t100\n"));
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() > 100);
    assert_eq!(ta, tb);
}

#[test]
fn generate_histogram_matches_the_seeded_draws() {
    let dir = tempfile::tempdir().unwrap();
    let o = ssan(&["generate", "--count", "100", "--seed", "7", "--lengths", "1:0.5,5:0.5", "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed = histogram(&stdout(&o));

    let dist: LengthDistribution = "1:0.5,5:0.5".parse().unwrap();
    let mut oracle = BTreeMap::new();
    for i in 0..100 {
        *oracle.entry(dist.sample(&mut sample_rng(7, i))).or_insert(0) += 1;
    }
    assert_eq!(printed, oracle);
    assert_eq!(printed.keys().copied().collect::<Vec<_>>(), vec![1, 5]);
    assert!(printed.values().all(|&n| (35..=65).contains(&n)), "{:?}", printed);

    let manifest = fs::read_to_string(dir.path().join("manifest.tsv")).unwrap();
    let mut from_files = BTreeMap::new();
    for line in manifest.lines() {
        let label = line.split('\t').nth(1).unwrap();
        *from_files.entry(label.chars().count()).or_insert(0) += 1;
    }
    assert_eq!(from_files, oracle);
}

#[test]
fn generate_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = ssan(&["generate", "--count", "0", "--out", path_str(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("count"), "{}", stderr(&o));

    assert_eq!(code(&ssan(&["generate", "--lengths", "3-1", "--out", path_str(&out)])), 2);
    assert_eq!(code(&ssan(&["generate", "--jitter", "0.9,0.5", "--out", path_str(&out)])), 2);

    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let target = blocker.join("sub");
    let o = ssan(&["generate", "--count", "2", "--out", path_str(&target)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains(path_str(&blocker)), "{}", stderr(&o));
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# shared settings\ncount = 20\nseed=3\nsteps=5\ninvert=true\n\ncharset=digits\n").unwrap();

    let from_config = ssan(&["generate", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("a"))]);
    assert_eq!(code(&from_config), 0, "{}", stderr(&from_config));
    assert!(stdout(&from_config).starts_with("samples\t20\n"));

    let overridden = ssan(&["generate", "--config", path_str(&cfg), "--count=10", "--out", path_str(&dir.path().join("b"))]);
    assert_eq!(code(&overridden), 0, "{}", stderr(&overridden));
    assert!(stdout(&overridden).starts_with("samples\t10\n"));

    let explicit = ssan(&[
        "generate", "--count", "10", "--seed", "3", "--invert", "--charset", "digits", "--out",
        path_str(&dir.path().join("c")),
    ]);
    assert_eq!(code(&explicit), 0);
    assert_eq!(tree(&dir.path().join("b")), tree(&dir.path().join("c")));

    fs::write(&cfg, "count=5\nnot_a_flag=1\n").unwrap();
    let o = ssan(&["generate", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("d"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not_a_flag"));

    fs::write(&cfg, "count 5\n").unwrap();
    assert_eq!(code(&ssan(&["generate", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("e"))])), 2);

    let missing = dir.path().join("missing.cfg");
    assert_eq!(code(&ssan(&["generate", "--config", path_str(&missing), "--out", path_str(&dir.path().join("f"))])), 2);
}

#[test]
fn overfitting_one_sample_prints_a_small_final_loss() {
    let f = fixture();
    let line = f.train_stdout.lines().find(|l| l.starts_with("final_loss\t")).expect("final loss line");
    let loss: f64 = line["final_loss\t".len()..].parse().unwrap();
    assert!(loss < 0.01, "final loss {}", loss);

    let curve = fs::read_to_string(f.run.join("loss.tsv")).unwrap();
    assert_eq!(curve.lines().count(), 201);
    assert!(curve.starts_with("step\tloss\n"));
    assert!(f.run.join("last.ckpt").is_file() && f.run.join("best.ckpt").is_file());
}

#[test]
fn training_is_reproducible_under_a_seed() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut ckpts = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = ssan(&[
            "train", "--data", path_str(&f.data), "--steps", "6", "--batch-size", "2", "--seed", "4", "--encoder",
            "safe:48x32,24x32", "--charset", "digits", "--out", path_str(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        ckpts.push((fs::read(out.join("last.ckpt")).unwrap(), fs::read(out.join("loss.tsv")).unwrap()));
    }
    assert_eq!(ckpts[0], ckpts[1]);
}

#[test]
fn training_errors_map_to_exit_codes() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();

    let o = ssan(&["train", "--data", path_str(&dir.path().join("nowhere")), "--steps", "1"]);
    assert_eq!(code(&o), 2);

    let o = ssan(&["train", "--data", path_str(&f.data), "--steps", "1", "--charset", "abc"]);
    assert_eq!(code(&o), 2, "labels outside the charset: {}", stderr(&o));

    let config = ModelConfig { encoder: "safe:48x32,24x32".into(), width_div: 16, charset: Charset::digits() };
    let mut model = Recognizer::<f32>::new(config, 0).unwrap();
    for (_, e) in model.params_mut().iter_mut() {
        e.value.data_mut().fill(f32::NAN);
    }
    let poisoned = dir.path().join("nan.ckpt");
    checkpoint::save(&model, &poisoned).unwrap();
    let o = ssan(&["train", "--data", path_str(&f.data), "--steps", "3", "--resume", path_str(&poisoned)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn resume_continues_from_the_checkpoint() {
    let f = fixture();
    let o = ssan(&["train", "--data", path_str(&f.data), "--steps", "1", "--overfit1", "--resume", path_str(&f.run.join("last.ckpt"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let loss: f64 = stdout(&o).lines().last().unwrap()["final_loss\t".len()..].parse().unwrap();
    assert!(loss < 0.05, "resumed loss {}", loss);
}

#[test]
fn eval_reports_both_decoders_with_a_lexicon() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let words = dir.path().join("words.txt");
    fs::write(&words, "0\n1\n2\n3\n4\n5\n6\n7\n8\n9\n").unwrap();
    let ckpt = f.run.join("best.ckpt");
    let o = ssan(&["eval", "--ckpt", path_str(&ckpt), "--data", path_str(&f.data), "--lexicon", path_str(&words)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = stdout(&o);
    assert!(report.starts_with(ssan::train::REPORT_HEADER));
    assert!(report.lines().any(|l| l.starts_with("greedy\toverall\tall\t4\t")));
    assert!(report.lines().any(|l| l.starts_with("lexicon\toverall\tall\t4\t")));

    let plain = ssan(&["eval", "--ckpt", path_str(&ckpt), "--data", path_str(&f.data)]);
    assert!(!stdout(&plain).contains("\nlexicon\t"));

    let out = dir.path().join("report.tsv");
    let o = ssan(&["eval", "--ckpt", path_str(&ckpt), "--data", path_str(&f.data), "--lexicon", path_str(&words), "--out", path_str(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&out).unwrap(), report);
}

#[test]
fn eval_without_a_checkpoint_exits_two() {
    let f = fixture();
    let missing = f.run.join("absent.ckpt");
    let o = ssan(&["eval", "--ckpt", path_str(&missing), "--data", path_str(&f.data)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("absent.ckpt"), "{}", stderr(&o));

    let garbage = f.run.join("loss.tsv");
    assert_eq!(code(&ssan(&["eval", "--ckpt", path_str(&garbage), "--data", path_str(&f.data)])), 2);
}

#[test]
fn gradcheck_filters_by_op() {
    let o = ssan(&["gradcheck", "--op", "conv2d"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows: Vec<String> = stdout(&o).lines().skip(1).map(str::to_string).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("conv2d\t") && rows[0].ends_with("\tpass"));

    assert_eq!(code(&ssan(&["gradcheck", "--op", "no_such_op"])), 2);
}

#[test]
fn gradcheck_passes_every_operation() {
    let list = stdout(&ssan(&["gradcheck", "--list"]));
    let names: Vec<&str> = list.lines().collect();
    assert!(names.contains(&"conv2d") && names.contains(&ssan::gradcheck::MICRO_NAME));
    // The end-to-end micro check takes minutes; the acceptance target runs it.
    let mut args = vec!["gradcheck"];
    for n in names.iter().filter(|n| **n != ssan::gradcheck::MICRO_NAME) {
        args.extend(["--op", n]);
    }
    let o = ssan(&args);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), names.len() - 1);
    for row in rows {
        let cols: Vec<&str> = row.split('\t').collect();
        let err: f64 = cols[2].parse().unwrap();
        let tol: f64 = cols[1].parse().unwrap();
        assert!(tol <= 1e-3 && err <= tol, "{}", row);
    }
}

#[test]
fn injected_fault_fails_exactly_that_op() {
    let o = ssan(&["gradcheck", "--op", "conv2d", "--op", "tanh", "--op", "linear", "--inject-fault", "tanh"]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    let failed: Vec<&str> = out.lines().filter(|l| l.ends_with("\tFAIL")).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(failed, vec!["tanh"]);
    assert!(stderr(&o).contains("tanh"));
    assert!(!stdout(&ssan(&["gradcheck", "--help"])).contains("inject"));
}

fn first_image(f: &Fixture) -> PathBuf {
    f.data.join("images").join("000000.pgm")
}

#[test]
fn visualize_emits_one_map_per_scale_and_step() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let o = ssan(&[
        "visualize", "--ckpt", path_str(&f.run.join("best.ckpt")), "--image", path_str(&first_image(f)), "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let text = out.lines().find_map(|l| l.strip_prefix("text\t")).unwrap();
    assert_eq!(text.chars().count(), 1, "overfit model should read one digit");
    let steps = out.lines().filter(|l| l.starts_with("step\t")).count();
    assert_eq!(steps, text.chars().count() + 1);
    let scales = out.lines().filter(|l| l.starts_with("scale\t")).count();
    let levels = checkpoint::load(&f.run.join("best.ckpt")).unwrap().levels().len();
    assert!(levels > 1);
    assert_eq!(scales, levels);
    let files = fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, steps + scales);

    let step0 = fs::read(dir.path().join("step_00.ppm")).unwrap();
    let image = GrayImage::load_pgm(&first_image(f)).unwrap();
    let header = format!("P6\n{} {}\n255\n", image.width(), image.height());
    assert!(step0.starts_with(header.as_bytes()));
    assert_eq!(step0.len(), header.len() + 3 * image.width() * image.height());
}

#[test]
fn single_scale_overlay_is_flat() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let config = ModelConfig { encoder: "1cnn:96x32".into(), width_div: 16, charset: Charset::digits() };
    let ckpt = dir.path().join("one.ckpt");
    checkpoint::save(&Recognizer::<f32>::new(config, 2).unwrap(), &ckpt).unwrap();
    let out = dir.path().join("viz");
    let o = ssan(&[
        "visualize", "--ckpt", path_str(&ckpt), "--image", path_str(&first_image(f)), "--out", path_str(&out),
        "--format", "pgm", "--max-steps", "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("scale\t")).count(), 1);

    // Saliency 1.0 everywhere: each pixel is 0.5·x + 0.5.
    let x = GrayImage::load_pgm(&first_image(f)).unwrap().resize(96, 32);
    let overlay = GrayImage::load_pgm(&out.join("scale_0_96x32.pgm")).unwrap();
    assert_eq!((overlay.width(), overlay.height()), (96, 32));
    for (o, x) in overlay.pixels().iter().zip(x.pixels()) {
        assert!((o - (0.5 * x + 0.5)).abs() <= 0.5 / 255.0 + 1e-6, "{} vs {}", o, x);
    }
}

#[test]
fn visualize_rejects_a_bad_checkpoint() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    fs::write(&bad, b"SAFE0 definitely not a checkpoint").unwrap();
    let o = ssan(&["visualize", "--ckpt", path_str(&bad), "--image", path_str(&first_image(f)), "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn ablate_runs_every_variant_on_identical_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ablation.tsv");
    let o = ssan(&[
        "ablate", "--variant", "safe:48x32,24x32", "--variant", "1cnn:48x32", "--steps", "3", "--batch-size", "4",
        "--train-count", "12", "--test-count", "4", "--max-len", "2", "--out", path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(&out).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), "variant\tparameters\tfinal_loss\tbalanced\tsingle");
    assert!(lines.next().unwrap().starts_with("safe:48x32,24x32\t"));
    assert!(lines.next().unwrap().starts_with("1cnn:48x32\t"));

    assert_eq!(code(&ssan(&["ablate", "--variant", "safe", "--steps", "1"])), 2);
}
