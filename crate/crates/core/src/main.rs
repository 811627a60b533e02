use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use avse::dsp::{stft, AnalysisConfig, AudioBuffer};
use avse::error::{Error, Result};
use avse::gan::{darken, synth_lip_image, CycleGan, GanConfig, LipImage};
use avse::io::{self, ConfigFile};
use avse::mask::{ideal_binary_mask, resynthesize, MaskConfig, MaskKind, SpectralMask};
use avse::metrics::{evaluate, measured_snr, si_sdr, stoi};
use avse::mixer::{mix, synth_corpus_with, MixtureSpec, SynthConfig};
use avse::model::{train, AvModel, ModelConfig, TrainConfig};
use avse::runtime::{enhance_offline, enhance_streaming, profile, StreamConfig};
use avse::tensor::init;

#[derive(Parser)]
#[command(name = "avse", version, about = "Audio-visual speech enhancement")]
struct Cli {
    /// Seed for every random choice the subcommand makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` file overriding defaults; flags override the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mix clean speech with noise at a target SNR.
    Mix {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        snr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        out_noise: Option<PathBuf>,
    },
    /// Compute the ideal binary mask of a clean/noise pair.
    OracleIbm {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lc: Option<f64>,
        /// Treat `--lc` as an offset from the measured mixture SNR.
        #[arg(long)]
        lc_relative: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance a noisy recording with a trained model.
    Enhance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask_mode: Option<String>,
        #[arg(long)]
        audio_only: bool,
        /// Write the applied mask to an AVSE container.
        #[arg(long)]
        mask_out: Option<PathBuf>,
        /// Debug: apply an all-ones mask instead of the network.
        #[arg(long)]
        debug_ones_mask: bool,
        /// Run the streaming engine, pushing this many samples at a time.
        #[arg(long)]
        chunk: Option<usize>,
        /// Streaming only: reuse the newest embedding when video runs out.
        #[arg(long)]
        freewheel: bool,
    },
    /// Train a mask model on a `synth`-style corpus directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        toy: bool,
        #[arg(long)]
        audio_only: bool,
        /// Local criterion of the oracle targets, in dB.
        #[arg(long, allow_negative_numbers = true)]
        lc: Option<f64>,
        /// Treat `--lc` as an offset from each item's SNR.
        #[arg(long)]
        lc_relative: bool,
        /// Also write the epoch log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write a hermetic synthetic corpus.
    Synth {
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        seconds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score enhanced files listed in a manifest.
    Eval {
        /// TSV with columns id, snr_db, clean, noisy, enhanced.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the streaming pipeline stage by stage.
    Profile {
        #[arg(long)]
        seconds: Option<f64>,
        #[arg(long)]
        toy: bool,
        #[arg(long)]
        audio_only: bool,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Train a small CycleGAN on synthetic lip crops and write image grids.
    GanDemo {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
}

struct Ctx {
    file: ConfigFile,
    seed: u64,
}

impl Ctx {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.file.parse_value(key)?.unwrap_or(default)),
        }
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.file.parse_value(key)?.unwrap_or(false))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => file.parse_value("seed")?.unwrap_or(0),
    };
    let ctx = Ctx { file, seed };
    match cli.cmd {
        Cmd::Mix { clean, noise, snr, out, out_noise } => {
            let mut m = mix(&MixtureSpec {
                clean: io::read_pipeline_wav(&clean)?,
                noise: io::read_pipeline_wav(&noise)?,
                target_snr_db: ctx.pick(snr, "snr", 0.0)?,
                offset_seed: ctx.seed,
            })?;
            let clipped = m.noisy.clamp_unit();
            if clipped > 0 {
                eprintln!("warning: {clipped} mixture samples clipped to [-1, 1]");
            }
            io::write_wav(&out, &m.noisy)?;
            if let Some(p) = out_noise {
                io::write_wav(p, &m.scaled_noise)?;
            }
            println!("gain\t{:.6}", m.gain);
            Ok(())
        }
        Cmd::OracleIbm { clean, noise, lc, lc_relative, out } => {
            let analysis = AnalysisConfig::default();
            let rel = MaskConfig {
                lc_db: ctx.pick(lc, "lc", 0.0)?,
                lc_relative: ctx.flag(lc_relative, "lc-relative")?,
                ..MaskConfig::default()
            };
            rel.validate()?;
            let c = io::read_pipeline_wav(&clean)?;
            let n = io::read_pipeline_wav(&noise)?;
            if c.len() != n.len() {
                return Err(Error::Usage(format!("clean has {} samples, noise {}", c.len(), n.len())));
            }
            let cfg = rel.at_snr(measured_snr(&c.samples, &n.samples)?);
            let mask = ideal_binary_mask(&stft(&c, &analysis)?, &stft(&n, &analysis)?, &cfg)?;
            io::write_mask(&out, &mask)
        }
        Cmd::Enhance { input, emb, weights, out, mask_mode, audio_only, mask_out, debug_ones_mask, chunk, freewheel } => {
            let analysis = AnalysisConfig::default();
            let noisy = io::read_pipeline_wav(&input)?;
            let (mut enhanced, mask) = if debug_ones_mask {
                let mask = SpectralMask::ones(analysis.frame_count(noisy.len()), analysis.bins());
                (resynthesize(&noisy, &mask, &analysis)?.audio, mask)
            } else {
                let kind = MaskKind::from_str(&ctx.pick(mask_mode, "mask-mode", "soft".to_string())?)?;
                let weights = weights
                    .or_else(|| ctx.file.get("weights").map(PathBuf::from))
                    .ok_or_else(|| Error::Usage("enhance needs --weights".into()))?;
                let model = AvModel::from_weights(io::read_weights(&weights)?)?;
                let audio_only = ctx.flag(audio_only, "audio-only")?;
                if audio_only && !model.audio_only() {
                    return Err(Error::Config(format!(
                        "{} holds audio-visual weights but --audio-only was given",
                        weights.display()
                    )));
                }
                let emb = if model.audio_only() {
                    None
                } else {
                    let p = emb.ok_or_else(|| Error::Usage("audio-visual weights need --emb".into()))?;
                    Some(io::read_embeddings(p)?)
                };
                let mask_cfg = MaskConfig { output_kind: kind, ..MaskConfig::default() };
                if let Some(chunk) = chunk.or(ctx.file.parse_value("chunk")?) {
                    if mask_out.is_some() {
                        return Err(Error::Usage("--mask-out is only available offline".into()));
                    }
                    let cfg = StreamConfig { analysis, mask: mask_cfg, freewheel: ctx.flag(freewheel, "freewheel")? };
                    let samples = enhance_streaming(&model, &noisy.samples, emb.as_ref(), cfg, chunk)?;
                    io::write_wav(&out, &AudioBuffer::new(samples, noisy.sample_rate))?;
                    return Ok(());
                }
                let (res, mask) = enhance_offline(&model, &noisy, emb.as_ref(), &analysis, &mask_cfg)?;
                (res.audio, mask)
            };
            let clipped = enhanced.clamp_unit();
            if clipped > 0 {
                eprintln!("warning: {clipped} output samples clipped to [-1, 1]");
            }
            io::write_wav(&out, &enhanced)?;
            if let Some(p) = mask_out {
                io::write_mask(p, &mask)?;
            }
            Ok(())
        }
        Cmd::Train { data, epochs, lr, out, toy, audio_only, lc, lc_relative, log } => {
            let defaults = TrainConfig::default();
            let cfg = TrainConfig {
                epochs: ctx.pick(epochs, "epochs", defaults.epochs)?,
                lr: ctx.pick(lr, "lr", defaults.lr)?,
                seed: ctx.seed,
                ..defaults
            };
            let base = if ctx.flag(toy, "toy")? { ModelConfig::toy() } else { ModelConfig::default() };
            let model = AvModel::new(base.with_audio_only(ctx.flag(audio_only, "audio-only")?), ctx.seed)?;
            let analysis = AnalysisConfig::default();
            let mask = MaskConfig {
                lc_db: ctx.pick(lc, "lc", 0.0)?,
                lc_relative: ctx.flag(lc_relative, "lc-relative")?,
                ..MaskConfig::default()
            };
            mask.validate()?;
            let mut segments = Vec::new();
            for item in io::read_corpus(&data)? {
                segments.extend(item.segments(&analysis, &mask)?);
            }
            let (model, history) = train(model, &segments, &[], &cfg)?;
            let text = history.to_log();
            print!("{text}");
            if let Some(p) = log {
                fs::write(&p, &text).map_err(|e| io_err(&p, e))?;
            }
            io::write_weights(&out, model.weights())
        }
        Cmd::Synth { items, seconds, out } => {
            let defaults = SynthConfig::default();
            let cfg = SynthConfig {
                seconds: ctx.pick(seconds, "seconds", defaults.seconds)?,
                ..defaults
            };
            let corpus = synth_corpus_with(ctx.seed, ctx.pick(items, "items", 64)?, &cfg)?;
            io::write_corpus(&out, &corpus)?;
            println!("wrote {} items to {}", corpus.len(), out.display());
            Ok(())
        }
        Cmd::Eval { pairs, out } => run_eval(&pairs, &out),
        Cmd::Profile { seconds, toy, audio_only, weights, json } => {
            let model = match weights {
                Some(p) => AvModel::from_weights(io::read_weights(p)?)?,
                None => {
                    let base = if ctx.flag(toy, "toy")? { ModelConfig::toy() } else { ModelConfig::default() };
                    AvModel::new(base.with_audio_only(ctx.flag(audio_only, "audio-only")?), ctx.seed)?
                }
            };
            let report = profile(&model, StreamConfig::default(), ctx.pick(seconds, "seconds", 10.0)?, ctx.seed)?;
            if ctx.flag(json, "json")? {
                print!("{}", report.to_json_lines());
            } else {
                print!("{}", report.to_table());
            }
            Ok(())
        }
        Cmd::GanDemo { out, steps, size } => {
            run_gan_demo(&ctx, &out, ctx.pick(steps, "steps", 200)?, ctx.pick(size, "size", 32)?)
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

struct EvalRow {
    id: String,
    snr_db: f64,
    values: [f64; 5],
}

fn run_eval(pairs: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(pairs).map_err(|e| io_err(pairs, e))?;
    let dir = pairs.parent().unwrap_or(Path::new("."));
    let rel = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() { p.to_path_buf() } else { dir.join(p) }
    };
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if line.trim().is_empty() || line.starts_with('#') || cols[0] == "id" {
            continue;
        }
        if cols.len() < 5 {
            return Err(Error::Config(format!(
                "{} line {}: expected id, snr_db, clean, noisy, enhanced",
                pairs.display(),
                n + 1
            )));
        }
        let snr_db: f64 = cols[1]
            .parse()
            .map_err(|_| Error::Config(format!("{} line {}: snr_db is not a number", pairs.display(), n + 1)))?;
        let clean = io::read_pipeline_wav(rel(cols[2]))?;
        let noisy = io::read_pipeline_wav(rel(cols[3]))?;
        let enhanced = io::read_pipeline_wav(rel(cols[4]))?;
        if noisy.len() != clean.len() {
            return Err(Error::Usage(format!("{}: noisy and clean lengths differ", cols[0])));
        }
        let noise = AudioBuffer::new(
            noisy.samples.iter().zip(&clean.samples).map(|(y, s)| y - s).collect(),
            clean.sample_rate,
        );
        let base = evaluate(&noisy, &clean, &noise.samples)?;
        let values = [
            si_sdr(&noisy, &clean)?,
            si_sdr(&enhanced, &clean)?,
            base.stoi,
            stoi(&enhanced, &clean)?,
            base.measured_snr_db,
        ];
        rows.push(EvalRow { id: cols[0].to_string(), snr_db, values });
    }
    if rows.is_empty() {
        return Err(Error::Usage(format!("{} lists no pairs", pairs.display())));
    }
    let mut s = String::from("id\tsnr_db\tsi_sdr_noisy\tsi_sdr_enhanced\tstoi_noisy\tstoi_enhanced\tmeasured_snr_db\n");
    let line = |id: &str, snr: f64, v: &[f64; 5]| {
        format!("{id}\t{snr}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n", v[0], v[1], v[2], v[3], v[4])
    };
    for r in &rows {
        s.push_str(&line(&r.id, r.snr_db, &r.values));
    }
    let mut snrs: Vec<f64> = rows.iter().map(|r| r.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    for snr in snrs {
        let group: Vec<&EvalRow> = rows.iter().filter(|r| r.snr_db == snr).collect();
        let mut mean = [0.0; 5];
        for r in &group {
            for (m, v) in mean.iter_mut().zip(&r.values) {
                *m += v / group.len() as f64;
            }
        }
        s.push_str(&line("mean", snr, &mean));
    }
    fs::write(out, &s).map_err(|e| io_err(out, e))?;
    print!("{s}");
    Ok(())
}

/// Binary greyscale PGM of `[H, W, 1]` images laid side by side per row.
fn write_grid(path: &Path, rows: &[Vec<LipImage>]) -> Result<()> {
    let (h, w) = (rows[0][0].height(), rows[0][0].width());
    let cols = rows[0].len();
    let (gh, gw) = (rows.len() * h, cols * w);
    let mut bytes = format!("P5\n{gw} {gh}\n255\n").into_bytes();
    for row in rows {
        for y in 0..h {
            for img in row {
                let d = img.tensor().data();
                for x in 0..w {
                    let v = d[(y * w + x) * img.channels()];
                    bytes.push(((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn run_gan_demo(ctx: &Ctx, out: &Path, steps: usize, size: usize) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let cfg = GanConfig {
        residual_blocks: ctx.file.parse_value("residual-blocks")?.unwrap_or(GanConfig::toy().residual_blocks),
        ..GanConfig::toy()
    };
    let mut gan = CycleGan::new(cfg, ctx.seed)?;
    let mut rng = init::derived(ctx.seed, 100);
    let mut preview = init::derived(ctx.seed, 101);
    let samples: Vec<LipImage> = (0..4).map(|_| darken(&synth_lip_image(size, &mut preview))).collect();
    let grid = |gan: &CycleGan, path: &Path| -> Result<()> {
        let mut rows = Vec::new();
        for a in &samples {
            let fake = gan.g_ab.forward(a)?;
            let back = gan.g_ba.forward(&fake)?;
            rows.push(vec![a.clone(), fake, back]);
        }
        write_grid(path, &rows)
    };
    grid(&gan, &out.join("grid_step0.pgm"))?;
    let mut log = String::from("step\tdisc_b\tdisc_a\tadv_ab\tadv_ba\tcycle_a\tcycle_b\tgen_total\n");
    for step in 1..=steps {
        let a = darken(&synth_lip_image(size, &mut rng));
        let b = synth_lip_image(size, &mut rng);
        let rec = gan.train_step(&[a], &[b])?;
        log.push_str(&step.to_string());
        for v in rec.values() {
            log.push_str(&format!("\t{v:.6}"));
        }
        log.push('\n');
    }
    grid(&gan, &out.join(format!("grid_step{steps}.pgm")))?;
    let log_path = out.join("losses.tsv");
    fs::write(&log_path, &log).map_err(|e| io_err(&log_path, e))?;
    println!("wrote grids and losses to {}", out.display());
    Ok(())
}
