use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use jsr_core::imagecore::{read_color, upsample, write_color, write_luma, ColorImage};
use jsr_core::{synth, LumaImage};
use tempfile::TempDir;

fn jsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jsr"))
        .args(args)
        .env_remove("JSR_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = jsr(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = jsr(args);
    assert_eq!(out.status.code(), Some(1), "{args:?}");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small corpus and a dictionary trained from it, shared by the tests.
fn fixture() -> &'static (TempDir, PathBuf) {
    static FIX: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    FIX.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        std::fs::create_dir(&corpus).unwrap();
        for (name, img) in synth::corpus(48, 11) {
            write_luma(corpus.join(format!("{name}.png")), &img).unwrap();
        }
        let dict = dir.path().join("d.dict");
        ok(&[
            "train-dict", "--corpus", s(&corpus), "--out", s(&dict), "--atoms", "40", "--epochs", "2", "--factor", "2",
        ]);
        (dir, dict)
    })
}

fn colour_input(dir: &Path) -> PathBuf {
    let y = synth::shapes(18, 20, 4);
    let img = ColorImage {
        cb: y.map(|v| 0.3 + 0.4 * v),
        cr: synth::gradient(18, 20, 2),
        luma: y,
    };
    let p = dir.join("in.png");
    write_color(&p, &img).unwrap();
    p
}

#[test]
fn bicubic_upscales_every_channel() {
    let dir = tempfile::tempdir().unwrap();
    let input = colour_input(dir.path());
    let out = dir.path().join("out.png");
    ok(&["upscale", "--input", s(&input), "--output", s(&out), "--mode", "bicubic", "--factor", "2"]);
    let src = read_color(&input).unwrap();
    let expect = src.with_upscaled_luma(upsample(&src.luma, 2).unwrap().clamped(), 2).unwrap();
    let reference = dir.path().join("ref.png");
    write_color(&reference, &expect).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&reference).unwrap());
}

#[test]
fn joint_without_dictionary_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = colour_input(dir.path());
    let out = dir.path().join("out.png");
    let err = fails(&["upscale", "--input", s(&input), "--output", s(&out), "--mode", "joint"]);
    assert!(err.contains("--dict"), "{err}");
    assert!(!out.exists());
}

#[test]
fn corrupt_or_missing_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"\x89PNG\r\n\x1a\nthis is not a png").unwrap();
    let out = dir.path().join("o.png");
    let err = fails(&["upscale", "--input", s(&bad), "--output", s(&out), "--mode", "bicubic"]);
    assert!(err.starts_with("error:"), "{err}");
    let err = fails(&["upscale", "--input", "/nonexistent.png", "--output", s(&out), "--mode", "bicubic"]);
    assert!(err.contains("nonexistent"), "{err}");
    let err = fails(&["upscale", "--input", s(&bad), "--output", s(&out), "--mode", "lanczos"]);
    assert!(err.contains("unknown mode"), "{err}");
}

#[test]
fn joint_writes_image_weights_and_trace_identically_across_threads() {
    let (_, dict) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let input = colour_input(dir.path());
    let run = |threads: &str| {
        let out = dir.path().join(format!("out{threads}.png"));
        let wm = dir.path().join(format!("w{threads}.png"));
        let tr = dir.path().join(format!("t{threads}.csv"));
        ok(&[
            "--threads", threads, "upscale", "--input", s(&input), "--output", s(&out), "--dict", s(dict), "--factor",
            "2", "--lambda", "0.01", "--iterations", "3", "--epitome-iterations", "2", "--weight-map", s(&wm),
            "--trace", s(&tr),
        ]);
        let csv = std::fs::read_to_string(wm.with_extension("csv")).unwrap();
        assert!(csv.starts_with("row,col,omega,s\n"));
        let trace = std::fs::read_to_string(&tr).unwrap();
        assert!(trace.starts_with("iteration,objective\n"));
        (std::fs::read(out).unwrap(), std::fs::read(wm).unwrap(), csv, trace)
    };
    let a = run("1");
    assert_eq!(read_color(dir.path().join("out1.png")).unwrap().dims(), (36, 40));
    assert_eq!(a, run("3"));
}

#[test]
fn epitome_cache_is_written_then_reused() {
    let dir = tempfile::tempdir().unwrap();
    let input = colour_input(dir.path());
    let cache = dir.path().join("e.epi");
    let base = ["upscale", "--input", s(&input), "--mode", "epi", "--factor", "2", "--epitome-iterations", "2"];
    let first = dir.path().join("a.png");
    let second = dir.path().join("b.png");
    ok(&[&base[..], &["--output", s(&first), "--epitome", s(&cache)]].concat());
    assert!(cache.exists());
    ok(&[&base[..], &["--output", s(&second), "--epitome", s(&cache)]].concat());
    assert_eq!(std::fs::read(first).unwrap(), std::fs::read(second).unwrap());

    let trained = dir.path().join("t.epi");
    ok(&["train-epitome", "--input", s(&input), "--out", s(&trained), "--factor", "2", "--epitome-iterations", "2"]);
    assert_eq!(std::fs::read(&trained).unwrap(), std::fs::read(&cache).unwrap());
}

#[test]
fn dictionary_training_is_reproducible_and_rejects_bad_corpora() {
    let (dir, dict) = fixture();
    let corpus = dir.path().join("corpus");
    let again = tempfile::tempdir().unwrap();
    let second = again.path().join("d.dict");
    ok(&[
        "train-dict", "--corpus", s(&corpus), "--out", s(&second), "--atoms", "40", "--epochs", "2", "--factor", "2",
    ]);
    assert_eq!(std::fs::read(dict).unwrap(), std::fs::read(&second).unwrap());

    let flat = again.path().join("flat");
    std::fs::create_dir(&flat).unwrap();
    write_luma(flat.join("c.png"), &LumaImage::filled(40, 40, 0.5)).unwrap();
    let err = fails(&["train-dict", "--corpus", s(&flat), "--out", s(&again.path().join("x"))]);
    assert!(err.contains("training"), "{err}");

    let empty = again.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    std::fs::write(empty.join("notes.txt"), "hello").unwrap();
    let err = fails(&["train-dict", "--corpus", s(&empty), "--out", s(&again.path().join("x"))]);
    assert!(err.contains("no readable images"), "{err}");
}

#[test]
fn evaluate_tabulates_every_image_and_mode() {
    let (_, dict) = fixture();
    let dir = tempfile::tempdir().unwrap();
    write_luma(dir.path().join("a.png"), &synth::bricks(24, 24, 1)).unwrap();
    write_luma(dir.path().join("b.png"), &synth::shapes(24, 26, 2)).unwrap();
    let manifest = dir.path().join("m.csv");
    std::fs::write(&manifest, "truth,image,factor\na.png,,\nb.png,,2\nmissing.png,,\n").unwrap();
    let table = dir.path().join("t.csv");
    let stdout = ok(&[
        "evaluate", "--manifest", s(&manifest), "--modes", "bicubic,joint-fixed", "--dict", s(dict), "--factor", "2",
        "--lambda", "0.01", "--iterations", "2", "--epitome-iterations", "1", "--out", s(&table),
    ]);
    assert!(stdout.starts_with("image"), "{stdout}");
    let mut rdr = csv::Reader::from_path(&table).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["image", "factor", "mode", "psnr", "ssim", "seconds", "error"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    // 3 images x (bicubic + joint-fixed) + 5 sweep rows per image.
    assert_eq!(rows.len(), 3 * 2 + 3 * 5);
    for r in &rows[..14] {
        assert!(r[3].parse::<f64>().unwrap() > 10.0, "{r:?}");
        assert!(r[6].is_empty());
    }
    for r in &rows[14..] {
        assert_eq!(&r[0], "missing.png");
        assert!(r[3].is_empty() && !r[6].is_empty());
    }
    let modes: Vec<&str> = rows[..7].iter().map(|r| r.get(2).unwrap()).collect();
    assert_eq!(
        modes,
        [
            "bicubic",
            "joint-fixed(1)",
            "joint-fixed(0.1)",
            "joint-fixed(1)",
            "joint-fixed(3)",
            "joint-fixed(5)",
            "joint-fixed(10)"
        ]
    );

    let err = fails(&["evaluate", "--manifest", s(&manifest), "--modes", ""]);
    assert!(err.contains("--modes"), "{err}");
}

#[test]
fn metrics_on_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    write_luma(&a, &synth::bricks(30, 30, 1)).unwrap();
    write_luma(&b, &synth::bricks(30, 30, 1).map(|v| (v + 1.0 / 255.0).min(1.0))).unwrap();
    let out = ok(&["metrics", "--estimate", s(&a), "--truth", s(&a)]);
    assert_eq!(out.trim(), "psnr=inf ssim=1.000000");
    let out = ok(&["metrics", "--estimate", s(&a), "--truth", s(&b), "--shave", "2"]);
    assert!(out.starts_with("psnr=48.13"), "{out}");
}

#[test]
fn bradley_terry_ranking_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.csv");
    std::fs::write(&m, "a,b\n0,9\n1,0\n").unwrap();
    let out = dir.path().join("s.csv");
    let chart = ok(&["bt-rank", "--matrix", s(&m), "--anchor", "b", "--out", s(&out)]);
    assert!(chart.starts_with('a'), "{chart}");
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rank,method,score"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let second: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!((first[1], second[1]), ("a", "b"));
    let (sa, sb): (f64, f64) = (first[2].parse().unwrap(), second[2].parse().unwrap());
    assert_eq!(sb, 1.0);
    assert!((sa - sb - 9f64.ln()).abs() < 1e-6);

    let err = fails(&["bt-rank", "--matrix", s(&m), "--anchor", "zz"]);
    assert!(err.contains("available: a, b"), "{err}");

    // Seven methods on a ring where each beats the next more often.
    let labels: Vec<String> = (0..7).map(|i| format!("m{i}")).collect();
    let mut csv = labels.join(",") + "\n";
    for i in 0..7 {
        let row: Vec<String> = (0..7)
            .map(|j| match (j + 7 - i) % 7 {
                0 => 0,
                1 => 6 + i as u64,
                6 => 4,
                _ => 2,
            })
            .map(|v| v.to_string())
            .collect();
        csv += &(row.join(",") + "\n");
    }
    std::fs::write(&m, csv).unwrap();
    ok(&["bt-rank", "--matrix", s(&m), "--anchor", "m3", "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().any(|r| r.ends_with(",m3,1.0000000000")), "{text}");

    std::fs::write(&m, "a,b,c\n0,3,0\n2,0,0\n0,0,0\n").unwrap();
    let err = fails(&["bt-rank", "--matrix", s(&m)]);
    assert!(err.contains("not connected"), "{err}");
}

#[test]
fn config_file_sets_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let input = colour_input(dir.path());
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "threads = 1\n[upscale]\nmode = \"bicubic\"\nfactor = 4\n").unwrap();
    let out = dir.path().join("o.png");
    ok(&["--config", s(&cfg), "upscale", "--input", s(&input), "--output", s(&out)]);
    assert_eq!(read_color(&out).unwrap().dims(), (72, 80));
    ok(&["--config", s(&cfg), "upscale", "--input", s(&input), "--output", s(&out), "--factor", "2"]);
    assert_eq!(read_color(&out).unwrap().dims(), (36, 40));

    std::fs::write(&cfg, "[upscale]\nbogus = 1\n").unwrap();
    let out = jsr(&["--config", s(&cfg), "upscale", "--input", s(&input), "--output", "x.png"]);
    assert!(!out.status.success());
}

#[test]
fn help_documents_defaults() {
    for sub in ["upscale", "train-dict", "train-epitome", "evaluate", "metrics", "bt-rank"] {
        let help = ok(&[sub, "--help"]);
        assert!(help.contains("[default:"), "{sub}");
    }
    let help = ok(&["train-dict", "--help"]);
    assert!(help.contains("[default: 512]"));
}
