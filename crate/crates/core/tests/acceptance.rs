//! Acceptance suite: one PASS/FAIL line per criterion. Pass criterion
//! numbers as arguments to run a subset, e.g. `cargo test --test acceptance -- 3 11`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use avse::dsp::{istft, stft, AnalysisConfig, AudioBuffer, SAMPLE_RATE};
use avse::gan::{
    cyclegan_losses, darken, patch_map_len, receptive_field, synth_lip_image, CycleGan, Discriminator, GanConfig,
    Generator, IdentityTranslator, LipImage, PATCH_KERNEL, PATCH_STRIDES,
};
use avse::io;
use avse::mask::{apply_mask, ideal_binary_mask, resynthesize, MaskConfig, MaskKind, SpectralMask};
use avse::metrics::{si_sdr_slices, stoi, SI_SDR_CAP_DB};
use avse::mixer::{mix, synth_corpus, MixtureSpec, TrainingItem, SNR_GRID};
use avse::model::{
    frame_accuracy, lr_schedule, train, AvModel, LipEmbeddingSequence, ModelConfig, PlateauScheduler, TrainConfig,
};
use avse::runtime::{enhance_offline, enhance_streaming, profile, StreamConfig, PUBLISHED_MS};
use avse::tensor::gradcheck::gradcheck;
use avse::tensor::{init, Conv2dSpec, NamedTensorStore, Pad2d, Tape, Tensor, Var};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rand_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = init::seeded(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rand_t(dims: &[usize], seed: u64) -> Tensor {
    let mut rng = init::seeded(seed);
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

fn audio(v: Vec<f64>) -> AudioBuffer {
    AudioBuffer::new(v, SAMPLE_RATE)
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

const STFT_REL_TOL: f64 = 1e-6;
const STFT_BUDGET: Duration = Duration::from_secs(5);

fn c1_stft_round_trip() -> Check {
    let cfg = AnalysisConfig::default();
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, len) in [1242, 5000, 16000, 48000, 160000].into_iter().enumerate() {
        let x = rand_vec(len, i as u64);
        let y = istft(&stft(&audio(x.clone()), &cfg).map_err(|e| e.to_string())?, &cfg).map_err(|e| e.to_string())?;
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = x.iter().zip(&y.samples).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / peak);
    }
    let took = t0.elapsed();
    ensure(
        worst < STFT_REL_TOL && took < STFT_BUDGET,
        format!("max rel err {worst:.2e} (< {STFT_REL_TOL:e}), {took:.2?} (< {STFT_BUDGET:?})"),
    )
}

fn c2_frame_alignment() -> Check {
    let cfg = AnalysisConfig::default();
    let frames = stft(&audio(vec![0.0; 48000]), &cfg).map_err(|e| e.to_string())?.frames();
    let emb = LipEmbeddingSequence::new(rand_t(&[75, 512], 1)).map_err(|e| e.to_string())?;
    let up = emb.upsample();
    let rows_ok = (0..225).all(|r| &up.data()[r * 512..(r + 1) * 512] == emb.row(r / 3));
    ensure(
        frames == 225 && up.dims() == [225, 512] && rows_ok,
        format!("48000 samples -> {frames} frames; 75 embeddings -> {:?}", up.dims()),
    )
}

const SNR_TOL_DB: f64 = 0.01;

fn c3_mixing_accuracy() -> Check {
    let item = &synth_corpus(3, 1).map_err(|e| e.to_string())?[0];
    let mut worst: f64 = 0.0;
    for (i, &target) in SNR_GRID.iter().enumerate() {
        let m = mix(&MixtureSpec {
            clean: item.clean.clone(),
            noise: item.noise.clone(),
            target_snr_db: target,
            offset_seed: i as u64,
        })
        .map_err(|e| e.to_string())?;
        let noise: Vec<f64> = m.noisy.samples.iter().zip(&item.clean.samples).map(|(y, s)| y - s).collect();
        let measured = 10.0 * (energy(&item.clean.samples) / energy(&noise)).log10();
        worst = worst.max((measured - target).abs());
    }
    ensure(worst <= SNR_TOL_DB, format!("8 SNRs, worst |measured - target| = {worst:.2e} dB (<= {SNR_TOL_DB})"))
}

fn c4_ibm_semantics() -> Check {
    let cfg = AnalysisConfig::default();
    let mc = MaskConfig::default();
    let clean = stft(&audio(rand_vec(8000, 4)), &cfg).map_err(|e| e.to_string())?;
    let silent = stft(&audio(vec![0.0; 8000]), &cfg).map_err(|e| e.to_string())?;
    let ones = ideal_binary_mask(&clean, &silent, &mc).map_err(|e| e.to_string())?;
    let all_ones = ones.values().data().iter().all(|&v| v == 1.0);
    let tie = ideal_binary_mask(&clean, &clean, &mc).map_err(|e| e.to_string())?;
    let all_zero = tie.values().data().iter().all(|&v| v == 0.0);
    let noise = stft(&audio(rand_vec(8000, 5)), &cfg).map_err(|e| e.to_string())?;
    let ibm = ideal_binary_mask(&clean, &noise, &mc).map_err(|e| e.to_string())?;
    let mut rng = init::seeded(6);
    let soft = SpectralMask::new(
        Tensor::from_fn(&[clean.frames(), clean.bins()], |_| rng.random_range(0.0..=1.0)),
        MaskKind::Soft,
    )
    .map_err(|e| e.to_string())?;
    let mut non_expanding = true;
    for m in [&ibm, &soft, &ones] {
        let out = apply_mask(&noise, m).map_err(|e| e.to_string())?;
        non_expanding &= out.data().iter().zip(noise.data()).all(|(a, b)| a.norm() <= b.norm());
    }
    ensure(
        all_ones && all_zero && non_expanding,
        format!("zero noise -> all ones: {all_ones}; tie at LC -> 0: {all_zero}; |masked| <= |noisy|: {non_expanding}"),
    )
}

const ORACLE_ITEMS: usize = 32;
const ORACLE_BUDGET: Duration = Duration::from_secs(120);

fn c5_oracle_upper_bound() -> Check {
    let t0 = Instant::now();
    let cfg = AnalysisConfig::default();
    let corpus = synth_corpus(5, ORACLE_ITEMS).map_err(|e| e.to_string())?;
    let mut noisy_means = Vec::new();
    let mut oracle_means = Vec::new();
    for (k, &snr) in SNR_GRID.iter().enumerate() {
        let (mut noisy, mut oracle) = (Vec::new(), Vec::new());
        for (i, item) in corpus.iter().enumerate() {
            let m = mix(&MixtureSpec {
                clean: item.clean.clone(),
                noise: item.noise.clone(),
                target_snr_db: snr,
                offset_seed: (k * 1000 + i) as u64,
            })
            .map_err(|e| e.to_string())?;
            let ibm = ideal_binary_mask(
                &stft(&item.clean, &cfg).map_err(|e| e.to_string())?,
                &stft(&m.scaled_noise, &cfg).map_err(|e| e.to_string())?,
                &MaskConfig::default(),
            )
            .map_err(|e| e.to_string())?;
            let enhanced = resynthesize(&m.noisy, &ibm, &cfg).map_err(|e| e.to_string())?.audio;
            noisy.push(si_sdr_slices(&m.noisy.samples, &item.clean.samples).map_err(|e| e.to_string())?);
            oracle.push(si_sdr_slices(&enhanced.samples, &item.clean.samples).map_err(|e| e.to_string())?);
        }
        noisy_means.push(mean(&noisy));
        oracle_means.push(mean(&oracle));
    }
    let beats = SNR_GRID.iter().zip(noisy_means.iter().zip(&oracle_means)).all(|(&s, (n, o))| s > 0.0 || o > n);
    let monotone = oracle_means.windows(2).all(|w| w[1] > w[0]);
    let took = t0.elapsed();
    let table: Vec<String> = SNR_GRID
        .iter()
        .zip(noisy_means.iter().zip(&oracle_means))
        .map(|(s, (n, o))| format!("{s}:{n:.1}->{o:.1}"))
        .collect();
    ensure(
        beats && monotone && took < ORACLE_BUDGET,
        format!("SI-SDR noisy->oracle {}; monotone {monotone}; {took:.1?}", table.join(" ")),
    )
}

const SCALE_TOL: f64 = 1e-9;
const ORTHO_TOL: f64 = 1e-6;

fn c6_si_sdr() -> Check {
    let s = rand_vec(16000, 7);
    let capped = si_sdr_slices(&s, &s).map_err(|e| e.to_string())?;
    let mut rng = init::seeded(8);
    let est: Vec<f64> = s.iter().map(|v| v + 0.5 * rng.random_range(-1.0..1.0)).collect();
    let base = si_sdr_slices(&est, &s).map_err(|e| e.to_string())?;
    let mut scale_dev: f64 = 0.0;
    for c in [0.1, 1.0, 10.0] {
        let scaled: Vec<f64> = est.iter().map(|v| v * c).collect();
        scale_dev = scale_dev.max((si_sdr_slices(&scaled, &s).map_err(|e| e.to_string())? - base).abs());
    }
    // Residual orthogonal to s with energy a tenth of s.
    let e = rand_vec(16000, 9);
    let proj = e.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / energy(&s);
    let mut r: Vec<f64> = e.iter().zip(&s).map(|(a, b)| a - proj * b).collect();
    let g = (energy(&s) / (10.0 * energy(&r))).sqrt();
    r.iter_mut().for_each(|v| *v *= g);
    let est: Vec<f64> = s.iter().zip(&r).map(|(a, b)| a + b).collect();
    let ortho = si_sdr_slices(&est, &s).map_err(|e| e.to_string())?;
    ensure(
        capped == SI_SDR_CAP_DB && scale_dev <= SCALE_TOL && (ortho - 10.0).abs() <= ORTHO_TOL,
        format!("self {capped} dB (cap {SI_SDR_CAP_DB}); scale deviation {scale_dev:.1e}; orthogonal case {ortho:.9} dB"),
    )
}

const STOI_TOL: f64 = 0.01;

fn c7_stoi_fixtures() -> Check {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stoi");
    let table = std::fs::read_to_string(dir.join("expected.tsv")).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    let mut self_min: f64 = 1.0;
    for line in table.lines().skip(1) {
        let (id, want) = line.split_once('\t').ok_or("bad fixture table")?;
        let want: f64 = want.trim().parse().map_err(|_| "bad fixture value")?;
        let clean = io::read_wav(dir.join(format!("{id}_clean.wav"))).map_err(|e| e.to_string())?;
        let degraded = io::read_wav(dir.join(format!("{id}_degraded.wav"))).map_err(|e| e.to_string())?;
        worst = worst.max((stoi(&degraded, &clean).map_err(|e| e.to_string())? - want).abs());
        self_min = self_min.min(stoi(&clean, &clean).map_err(|e| e.to_string())?);
        n += 1;
    }
    ensure(
        n == 10 && worst <= STOI_TOL && self_min >= 0.99,
        format!("{n} pairs, worst |stoi - reference| = {worst:.2e} (<= {STOI_TOL}); min stoi(s,s) = {self_min:.4}"),
    )
}

const GRAD_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(60);

type Layer = Box<dyn Fn(&mut Tape, &[Var]) -> avse::error::Result<Var>>;

fn mse_to(seed: u64) -> impl Fn(&mut Tape, Var) -> avse::error::Result<Var> + Clone {
    move |t: &mut Tape, y: Var| {
        let target = rand_t(t.value(y).dims(), seed);
        t.mse(y, &target)
    }
}

fn c8_gradient_checks() -> Check {
    let t0 = Instant::now();
    let r = mse_to(99);
    let mut rng = init::seeded(10);
    let bits = Tensor::from_fn(&[3, 4], |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    let shifted = rand_t(&[3, 4], 11).map(|v| v + 0.1 * v.signum());
    let off_kink = rand_t(&[3, 4], 12).map(|v| v + 0.1 * v.signum());
    let cases: Vec<(&str, Vec<Tensor>, Layer)> = vec![
        ("conv2d", vec![rand_t(&[6, 5, 2], 1), rand_t(&[3, 3, 2, 3], 2), rand_t(&[3], 3)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.conv2d(v[0], v[1], v[2], Conv2dSpec::explicit(2, Pad2d::uniform(1)))?;
                r(t, y)
            })
        }),
        ("conv2d causal", vec![rand_t(&[6, 5, 2], 1), rand_t(&[3, 3, 2, 2], 2), rand_t(&[2], 3)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let pad = Pad2d { top: 2, bottom: 0, left: 1, right: 1 };
                let y = t.conv2d(v[0], v[1], v[2], Conv2dSpec::explicit(1, pad))?;
                r(t, y)
            })
        }),
        ("conv transpose", vec![rand_t(&[3, 4, 2], 4), rand_t(&[3, 3, 2, 2], 5), rand_t(&[2], 6)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.conv_transpose2d(v[0], v[1], v[2], 2, 1, 1)?;
                r(t, y)
            })
        }),
        ("reflect pad", vec![rand_t(&[4, 5, 2], 7)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.reflect_pad(v[0], Pad2d { top: 1, bottom: 2, left: 3, right: 1 })?;
                r(t, y)
            })
        }),
        ("instance norm", vec![rand_t(&[4, 5, 3], 8)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.instance_norm(v[0])?;
                r(t, y)
            })
        }),
        ("dense", vec![rand_t(&[4, 5], 9), rand_t(&[5, 3], 10), rand_t(&[3], 11)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.dense(v[0], v[1], v[2])?;
                r(t, y)
            })
        }),
        ("lstm", vec![rand_t(&[5, 4], 12), rand_t(&[4, 12], 13), rand_t(&[3, 12], 14), rand_t(&[12], 15)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.lstm(v[0], v[1], v[2], v[3])?;
                r(t, y)
            })
        }),
        ("relu", vec![off_kink.clone()], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.relu(v[0]);
                r(t, y)
            })
        }),
        ("leaky relu", vec![off_kink.clone()], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.leaky_relu(v[0], 0.2);
                r(t, y)
            })
        }),
        ("sigmoid", vec![rand_t(&[3, 4], 16)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.sigmoid(v[0]);
                r(t, y)
            })
        }),
        ("tanh", vec![rand_t(&[3, 4], 17)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.tanh(v[0]);
                r(t, y)
            })
        }),
        ("log1p", vec![rand_t(&[3, 4], 18).map(f64::abs)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.log1p(v[0]);
                r(t, y)
            })
        }),
        ("concat", vec![rand_t(&[3, 4], 19), rand_t(&[3, 2], 20)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.concat(v[0], v[1])?;
                r(t, y)
            })
        }),
        ("broadcast rows", vec![rand_t(&[5], 21)], {
            let r = r.clone();
            Box::new(move |t, v| {
                let y = t.broadcast_rows(v[0], 3)?;
                r(t, y)
            })
        }),
        ("bce", vec![rand_t(&[3, 4], 22).map(|v| 0.5 + 0.4 * v)], Box::new(move |t, v| t.bce(v[0], &bits))),
        ("l1", vec![rand_t(&[3, 4], 11)], {
            let s = shifted.clone();
            Box::new(move |t, v| t.l1(v[0], &s))
        }),
        ("mse", vec![rand_t(&[3, 4], 23)], Box::new(move |t, v| t.mse(v[0], &shifted))),
    ];
    let mut worst: (f64, &str) = (0.0, "-");
    for (name, inputs, f) in &cases {
        let e = gradcheck(inputs, GRAD_EPS, f).map_err(|e| format!("{name}: {e}"))?.max_rel_err();
        if e > worst.0 {
            worst = (e, name);
        }
    }
    let took = t0.elapsed();
    ensure(
        worst.0 < GRAD_TOL && took < GRAD_BUDGET,
        format!("{} layer types, worst rel err {:.2e} ({}) (< {GRAD_TOL:e}); {took:.1?}", cases.len(), worst.0, worst.1),
    )
}

const C9_ITEMS: &str = "64";
const C9_EPOCHS: &str = "50";
const C9_LR: &str = "3e-4";

fn c9_toy_training() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let bin = env!("CARGO_BIN_EXE_avse");
    let corpus = d.join("corpus");
    let weights = d.join("toy.avse");
    let run = |args: &[&str]| -> std::result::Result<String, String> {
        let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    };
    let p = |x: &Path| x.to_str().unwrap().to_string();
    run(&["synth", "--items", C9_ITEMS, "--out", &p(&corpus), "--seed", "0"])?;
    let log = run(&[
        "train", "--toy", "--data", &p(&corpus), "--epochs", C9_EPOCHS, "--lr", C9_LR, "--out", &p(&weights), "--seed", "0",
    ])?;
    let bce: Vec<f64> = log
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).and_then(|v| v.parse().ok()).ok_or("bad train log"))
        .collect::<std::result::Result<_, _>>()?;
    let (initial, last) = (bce[0], *bce.last().unwrap());

    // Plateau rule: halve after exactly three epochs without improvement.
    let mut s = PlateauScheduler::new(3, 0.5);
    let lrs: Vec<f64> = [1.0, 0.9, 0.95, 0.92, 0.91, 0.8].iter().map(|&l| s.step(l, 3e-4)).collect();
    let rule = lrs == [3e-4, 3e-4, 3e-4, 3e-4, 1.5e-4, 3e-4]
        && lr_schedule(&[1.0, 1.0, 1.0], 3e-4) == 3e-4
        && lr_schedule(&[1.0, 1.0, 1.0, 1.0], 3e-4) == 1.5e-4;
    ensure(
        bce.len() == 51 && last <= 0.5 * initial && rule,
        format!("train BCE {initial:.4} -> {last:.4} (ratio {:.3} <= 0.5); plateau halving rule {rule}", last / initial),
    )
}

/// Criterion 10 regime: identical toy training for both models, targets at
/// a local criterion 5 dB below the mixture SNR.
const C10_SEEDS: u64 = 3;
const C10_ITEMS: usize = 48;
const C10_EPOCHS: usize = 20;
const C10_LR: f64 = 1e-3;
const C10_LC: MaskConfig = MaskConfig {
    lc_db: -5.0,
    lc_relative: true,
    binarize_threshold: 0.5,
    output_kind: MaskKind::Binary,
};
const C10_SNRS: [f64; 3] = [-12.0, -9.0, -6.0];

fn c10_av_advantage() -> Check {
    let analysis = AnalysisConfig::default();
    let test_corpus = synth_corpus(99, 12).map_err(|e| e.to_string())?;
    let mut tests: Vec<Vec<TrainingItem>> = Vec::new();
    for &snr in &C10_SNRS {
        let mut set = Vec::new();
        for it in &test_corpus {
            set.extend(it.segments_at(snr, &analysis, &C10_LC).map_err(|e| e.to_string())?);
        }
        tests.push(set);
    }
    let mut mean = [[0.0; 3]; 2];
    let mut lines = Vec::new();
    for seed in 0..C10_SEEDS {
        let corpus = synth_corpus(1000 + seed, C10_ITEMS).map_err(|e| e.to_string())?;
        let mut items = Vec::new();
        for it in &corpus {
            items.extend(it.segments(&analysis, &C10_LC).map_err(|e| e.to_string())?);
        }
        let cfg = TrainConfig { epochs: C10_EPOCHS, lr: C10_LR, seed, ..Default::default() };
        let mut acc = [[0.0; 3]; 2];
        for (k, audio_only) in [false, true].into_iter().enumerate() {
            let m = AvModel::new(ModelConfig::toy().with_audio_only(audio_only), seed).map_err(|e| e.to_string())?;
            let (m, _) = train(m, &items, &[], &cfg).map_err(|e| e.to_string())?;
            for (j, set) in tests.iter().enumerate() {
                acc[k][j] = frame_accuracy(&m, set, 0.5).map_err(|e| e.to_string())?;
            }
        }
        for k in 0..2 {
            for j in 0..3 {
                mean[k][j] += acc[k][j] / C10_SEEDS as f64;
            }
        }
        let cells: Vec<String> = (0..3).map(|j| format!("{}:{:.4}/{:.4}", C10_SNRS[j], acc[0][j], acc[1][j])).collect();
        lines.push(format!("seed {seed} AV/AO {}", cells.join(" ")));
    }
    let cells: Vec<String> = (0..3).map(|j| format!("{}:{:.4}/{:.4}", C10_SNRS[j], mean[0][j], mean[1][j])).collect();
    lines.insert(0, format!("mean AV/AO {}", cells.join(" ")));
    ensure((0..3).all(|j| mean[0][j] > mean[1][j]), lines.join("; "))
}

const STREAM_TOL: f64 = 1e-5;

fn c11_streaming_equivalence() -> Check {
    let model = AvModel::new(ModelConfig::toy(), 11).map_err(|e| e.to_string())?;
    let item = &synth_corpus(12, 1).map_err(|e| e.to_string())?[0];
    let noisy: Vec<f64> = item.clean.samples.iter().zip(&item.noise.samples).map(|(a, b)| a + b).collect();
    let cfg = StreamConfig::default();
    let (offline, _) = enhance_offline(&model, &audio(noisy.clone()), Some(&item.embeddings), &cfg.analysis, &cfg.mask)
        .map_err(|e| e.to_string())?;
    let mut reference: Option<Vec<f64>> = None;
    let mut identical = true;
    let mut worst: f64 = 0.0;
    let chunks = [1, 97, 213, 1000, 4800, 7919];
    for chunk in chunks {
        let out = enhance_streaming(&model, &noisy, Some(&item.embeddings), cfg.clone(), chunk)
            .map_err(|e| e.to_string())?;
        if out.len() != offline.audio.len() {
            return Err(format!("chunk {chunk}: {} samples vs {}", out.len(), offline.audio.len()));
        }
        worst = worst.max(out.iter().zip(&offline.audio.samples).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
        match &reference {
            None => reference = Some(out),
            Some(r) => identical &= *r == out,
        }
    }
    ensure(
        worst <= STREAM_TOL && identical,
        format!("chunks {chunks:?}: max |stream - offline| {worst:.2e} (<= {STREAM_TOL:e}); bit-identical {identical}"),
    )
}

fn c12_latency_report() -> Check {
    let model = AvModel::new(ModelConfig::toy(), 12).map_err(|e| e.to_string())?;
    let report = profile(&model, StreamConfig::default(), 10.0, 12).map_err(|e| e.to_string())?;
    let table = report.to_table();
    let published = [12.0, 0.5, 0.5, 7.0, 20.0];
    let column: Vec<f64> = PUBLISHED_MS.iter().map(|p| p.1).collect();
    let verbatim = column == published
        && table.lines().skip(1).take(5).zip(published).all(|(l, p)| l.split_whitespace().last() == Some(&p.to_string()));
    let rtf = report.real_time_factor();
    ensure(
        verbatim && rtf < 1.0 && report.algorithmic_delay_samples == 1455,
        format!(
            "published column {verbatim}; real-time factor {rtf:.4} (< 1, hardware-dependent); delay {} samples",
            report.algorithmic_delay_samples
        ),
    )
}

const GAN_STEPS: usize = 200;
const GAN_REDUCTION: f64 = 0.3;

fn c13_gan() -> Check {
    let reduced = GanConfig { base_channels: 4, ..GanConfig::default() };
    let g = Generator::new(&reduced, "g.", 1).map_err(|e| e.to_string())?;
    let mut rng = init::seeded(13);
    let img96 = synth_lip_image(96, &mut rng);
    let out = g.forward(&img96).map_err(|e| e.to_string())?;
    let bottleneck = g.bottleneck_dims(&img96).map_err(|e| e.to_string())?;
    let shapes = out.tensor().dims() == [96, 96, 1] && bottleneck[..2] == [24, 24];
    let rf = receptive_field(PATCH_KERNEL, &PATCH_STRIDES);

    let tiny = GanConfig { base_channels: 2, residual_blocks: 1, ..GanConfig::default() };
    let d_a = Discriminator::new(&tiny, "d_a.", 2).map_err(|e| e.to_string())?;
    let d_b = Discriminator::new(&tiny, "d_b.", 3).map_err(|e| e.to_string())?;
    let a = darken(&synth_lip_image(32, &mut rng));
    let b = synth_lip_image(32, &mut rng);
    let id = cyclegan_losses(&a, &b, &IdentityTranslator, &IdentityTranslator, &d_a, &d_b, &tiny)
        .map_err(|e| e.to_string())?;
    let identity_zero = id.cycle_a == 0.0 && id.cycle_b == 0.0;

    let mut gan = CycleGan::new(GanConfig::toy(), 0).map_err(|e| e.to_string())?;
    let mut rng = init::derived(0, 100);
    let mut losses = Vec::with_capacity(GAN_STEPS);
    for _ in 0..GAN_STEPS {
        let a = darken(&synth_lip_image(32, &mut rng));
        let b = synth_lip_image(32, &mut rng);
        losses.push(gan.train_step(&[a], &[b]).map_err(|e| e.to_string())?.total);
    }
    let start = mean(&losses[..10]);
    let end = mean(&losses[GAN_STEPS - 10..]);
    let reduction = 1.0 - end / start;
    ensure(
        shapes && rf == 70 && patch_map_len(96).is_some() && identity_zero && reduction >= GAN_REDUCTION,
        format!(
            "96x96 -> {:?}, bottleneck {bottleneck:?}; receptive field {rf}; identity cycle loss {}/{}; \
             G loss {start:.3} -> {end:.3} ({:.0}% reduction, >= {:.0}%)",
            out.tensor().dims(),
            id.cycle_a,
            id.cycle_b,
            100.0 * reduction,
            100.0 * GAN_REDUCTION
        ),
    )
}

fn c14_round_trips_and_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let e = |x: avse::error::Error| x.to_string();
    let wav = audio((0..48000).map(|i| ((i * 7919) % 65536) as f64 / 32768.0 - 1.0).collect());
    io::write_wav(d.join("a.wav"), &wav).map_err(e)?;
    let wav_ok = io::read_wav(d.join("a.wav")).map_err(e)? == wav;
    let emb = LipEmbeddingSequence::new(rand_t(&[75, 512], 14).map(|v| v as f32 as f64)).map_err(e)?;
    io::write_embeddings(d.join("a.lipe"), &emb).map_err(e)?;
    let lipe_ok = io::read_embeddings(d.join("a.lipe")).map_err(e)? == emb;
    let mut store: NamedTensorStore = AvModel::new(ModelConfig::toy(), 14).map_err(e)?.into_weights();
    store.quantize_f32();
    io::write_weights(d.join("w.avse"), &store).map_err(e)?;
    let avse_ok = io::read_weights(d.join("w.avse")).map_err(e)? == store;
    let mask = SpectralMask::new(rand_t(&[225, 622], 15).map(|v| if v > 0.0 { 1.0 } else { 0.0 }), MaskKind::Binary)
        .map_err(e)?;
    io::write_mask(d.join("m.avse"), &mask).map_err(e)?;
    let mask_ok = io::read_mask(d.join("m.avse"), MaskKind::Binary).map_err(e)? == mask;

    let corpus_a = synth_corpus(21, 2).map_err(e)?;
    let corpus_b = synth_corpus(21, 2).map_err(e)?;
    let synth_same = corpus_a.iter().zip(&corpus_b).all(|(x, y)| x.clean == y.clean && x.noise == y.noise);
    let analysis = AnalysisConfig::default();
    let items = corpus_a[0].segments(&analysis, &MaskConfig::default()).map_err(e)?;
    let cfg = TrainConfig { epochs: 2, lr: 1e-3, seed: 4, ..Default::default() };
    let run = || -> avse::error::Result<(NamedTensorStore, Vec<f64>)> {
        let (m, h) = train(AvModel::new(ModelConfig::toy(), 4)?, &items, &[], &cfg)?;
        Ok((m.into_weights(), h.records.iter().map(|r| r.train_bce).collect()))
    };
    let train_same = run().map_err(e)? == run().map_err(e)?;
    let gan_run = || -> avse::error::Result<Vec<[f64; 7]>> {
        let mut gan = CycleGan::new(GanConfig { base_channels: 2, residual_blocks: 1, ..GanConfig::toy() }, 5)?;
        let mut rng = init::seeded(5);
        let img: Vec<LipImage> = (0..3).map(|_| synth_lip_image(32, &mut rng)).collect();
        img.iter().map(|b| Ok(gan.train_step(&[darken(b)], std::slice::from_ref(b))?.values())).collect()
    };
    let gan_same = gan_run().map_err(e)? == gan_run().map_err(e)?;
    ensure(
        wav_ok && lipe_ok && avse_ok && mask_ok && synth_same && train_same && gan_same,
        format!(
            "round trips wav {wav_ok} lipe {lipe_ok} avse {avse_ok} mask {mask_ok}; \
             reproducible synth {synth_same} train {train_same} gan {gan_same}"
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Check);

const CRITERIA: [Criterion; 14] = [
    (1, "STFT round trip", c1_stft_round_trip),
    (2, "frame alignment", c2_frame_alignment),
    (3, "mixing accuracy", c3_mixing_accuracy),
    (4, "IBM semantics", c4_ibm_semantics),
    (5, "oracle upper bound", c5_oracle_upper_bound),
    (6, "SI-SDR correctness", c6_si_sdr),
    (7, "STOI fixture agreement", c7_stoi_fixtures),
    (8, "gradient checks", c8_gradient_checks),
    (9, "toy training convergence", c9_toy_training),
    (10, "AV advantage", c10_av_advantage),
    (11, "streaming equivalence", c11_streaming_equivalence),
    (12, "latency report", c12_latency_report),
    (13, "GAN structure", c13_gan),
    (14, "round trips and determinism", c14_round_trips_and_determinism),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({secs:.1} s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({secs:.1} s) {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
