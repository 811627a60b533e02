use std::path::Path;
use std::process::{Command, Output};

use avse::io;
use avse::model::LipEmbeddingSequence;
use avse::tensor::Tensor;

fn avse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avse")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = avse(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], category: &str, code: i32) {
    let out = avse(args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {stderr}");
    let line = stderr.lines().last().unwrap_or("");
    assert!(line.starts_with(&format!("error[{category}]: ")), "{line}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn error_categories_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    fails(&["mix", "--bogus"], "usage", 2);
    let missing = dir.path().join("missing.wav");
    fails(&["mix", "--clean", p(&missing), "--noise", p(&missing), "--out", p(&missing)], "io", 3);
    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"RIFX0000WAVE").unwrap();
    fails(&["mix", "--clean", p(&junk), "--noise", p(&junk), "--out", p(&missing)], "format", 4);
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "items = many\n").unwrap();
    fails(&["--config", p(&cfg), "synth", "--out", p(dir.path())], "config", 7);
}

#[test]
fn mix_eval_round_trip_and_identity_enhance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus");
    ok(&["synth", "--items", "1", "--out", p(&corpus), "--seed", "5"]);
    let clean = corpus.join("item0000_clean.wav");
    let noise = corpus.join("item0000_noise.wav");
    assert!(clean.exists(), "synth names items item0000, ...");
    let noisy = d.join("noisy.wav");
    let scaled = d.join("scaled.wav");
    ok(&["mix", "--clean", p(&clean), "--noise", p(&noise), "--snr", "-6", "--out", p(&noisy), "--out-noise", p(&scaled)]);

    let enhanced = d.join("enhanced.wav");
    ok(&["enhance", "--in", p(&noisy), "--out", p(&enhanced), "--debug-ones-mask"]);
    let a = io::read_wav(&noisy).unwrap();
    let b = io::read_wav(&enhanced).unwrap();
    assert_eq!(a.len(), b.len());
    let worst = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-5, "{worst}");

    let mask = d.join("mask.avse");
    ok(&["oracle-ibm", "--clean", p(&clean), "--noise", p(&scaled), "--lc", "0", "--out", p(&mask)]);
    let m = io::read_mask(&mask, avse::mask::MaskKind::Binary).unwrap();
    assert_eq!(m.frames(), 225);

    let manifest = d.join("pairs.tsv");
    std::fs::write(
        &manifest,
        format!("id\tsnr_db\tclean\tnoisy\tenhanced\nu0\t-6\t{}\tnoisy.wav\tenhanced.wav\n", p(&clean)),
    )
    .unwrap();
    let results = d.join("results.tsv");
    ok(&["eval", "--pairs", p(&manifest), "--out", p(&results)]);
    let text = std::fs::read_to_string(&results).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split('\t').collect();
    assert_eq!(&header[..6], ["id", "snr_db", "si_sdr_noisy", "si_sdr_enhanced", "stoi_noisy", "stoi_enhanced"]);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    let measured: f64 = row[6].parse().unwrap();
    assert!((measured + 6.0).abs() <= 0.01, "{measured}");
    assert!(text.lines().any(|l| l.starts_with("mean\t-6")));
}

#[test]
fn synth_is_reproducible_from_seed_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# two short items\nitems = 2\nseed = 9\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["--config", p(&cfg), "synth", "--out", p(&a)]);
    ok(&["synth", "--items", "2", "--seed", "9", "--out", p(&b)]);
    for f in ["manifest.tsv", "item0001_clean.wav", "item0001.lipe"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn train_then_enhance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus");
    ok(&["synth", "--items", "2", "--out", p(&corpus)]);
    for audio_only in [false, true] {
        let w = d.join(format!("w{audio_only}.avse"));
        let mut args = vec!["train", "--data", p(&corpus), "--epochs", "1", "--lr", "1e-3", "--out", p(&w), "--toy"];
        if audio_only {
            args.push("--audio-only");
        }
        let log = ok(&args);
        assert_eq!(log.lines().count(), 3, "{log}");
        let out = d.join("out.wav");
        let noisy = corpus.join("item0000_clean.wav");
        let emb = corpus.join("item0000.lipe");
        ok(&["enhance", "--in", p(&noisy), "--emb", p(&emb), "--weights", p(&w), "--out", p(&out), "--mask-mode", "binary"]);
        assert_eq!(io::read_wav(&out).unwrap().len(), io::read_wav(&noisy).unwrap().len());
        let streamed = d.join("streamed.wav");
        ok(&["enhance", "--in", p(&noisy), "--emb", p(&emb), "--weights", p(&w), "--out", p(&streamed), "--mask-mode", "binary", "--chunk", "700"]);
        let (a, b) = (io::read_wav(&out).unwrap(), io::read_wav(&streamed).unwrap());
        assert_eq!(a.len(), b.len());
        let worst = a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-4, "streaming differs from offline by {worst}");
        if !audio_only {
            let half = d.join("half.lipe");
            let e = io::read_embeddings(&emb).unwrap();
            let keep = e.frames() / 2;
            let cut = Tensor::new(&[keep, 512], e.tensor().data()[..keep * 512].to_vec()).unwrap();
            io::write_embeddings(&half, &LipEmbeddingSequence::new(cut).unwrap()).unwrap();
            let stream = ["enhance", "--in", p(&noisy), "--emb", p(&half), "--weights", p(&w), "--out", p(&streamed), "--chunk", "700"];
            fails(&stream, "alignment", 9);
            ok(&[&stream[..], &["--freewheel"]].concat());
            fails(&[&stream[..], &["--mask-out", p(&half)]].concat(), "usage", 2);
            fails(&["enhance", "--in", p(&noisy), "--weights", p(&w), "--out", p(&out)], "usage", 2);
            fails(&["enhance", "--in", p(&noisy), "--weights", p(&w), "--out", p(&out), "--audio-only"], "config", 7);
        }
    }
}

#[test]
fn profile_and_gan_demo() {
    let json = ok(&["profile", "--toy", "--seconds", "5", "--json"]);
    let stages: Vec<serde_json::Value> = json.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(stages.iter().any(|v| v["stage"] == "model"));
    assert_eq!(stages.last().unwrap()["algorithmic_delay_samples"], 1455);
    fails(&["profile", "--toy", "--seconds", "2"], "usage", 2);

    let dir = tempfile::tempdir().unwrap();
    ok(&["gan-demo", "--out", p(dir.path()), "--steps", "2"]);
    let grid = std::fs::read(dir.path().join("grid_step2.pgm")).unwrap();
    assert!(grid.starts_with(b"P5\n96 128\n255\n"));
    let losses = std::fs::read_to_string(dir.path().join("losses.tsv")).unwrap();
    assert_eq!(losses.lines().count(), 3);
}
