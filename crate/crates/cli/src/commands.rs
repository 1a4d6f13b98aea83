use std::collections::HashSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;
use wisp_core::audio::{load_audio, log_mel_spectrogram, AudioBuffer, NoiseKind, N_FRAMES};
use wisp_core::eval::{
    self, EvalError, EvalManifest, EvalOptions, EvalReport, EvalSummary, ManifestEntry, NoisePoint,
    TextNormalization,
};
use wisp_core::longform::{self, ablation_matrix, Asr, LongformError, TranscribeOptions};
use wisp_core::model::{ModelConfig, ModelWeights, Whisper};
use wisp_core::normalize::{Normalizer, NormalizerConfig};
use wisp_core::vocab::{Task, Vocabulary, LANGUAGES};

use crate::output::write_atomic;
use crate::{
    AblateArgs, CmdResult, DecodeArgs, DetectArgs, EvaluateArgs, Failure, InputContext, ManifestArgs, ModeArg,
    ModelArgs, NoiseSweepArgs, NormalizeArgs, NormalizerArg, RandomWeightsArgs, TaskArg, TranscribeArgs,
};

fn load_vocab(path: Option<&Path>) -> Result<Vocabulary, Failure> {
    match path {
        Some(p) => Vocabulary::load(p, None)
            .with_context(|| format!("loading vocabulary {}", p.display()))
            .input(),
        None => Ok(Vocabulary::byte_level()),
    }
}

fn load_model(a: &ModelArgs) -> Result<Asr, Failure> {
    let config = ModelConfig::load(&a.config)
        .with_context(|| format!("loading config {}", a.config.display()))
        .input()?;
    let vocab = load_vocab(a.vocab.as_deref())?;
    let weights = ModelWeights::load(&a.model, &config)
        .with_context(|| format!("loading weights {}", a.model.display()))
        .input()?;
    Asr::new(Whisper::new(weights), vocab).input()
}

fn transcribe_options(d: &DecodeArgs) -> Result<TranscribeOptions, Failure> {
    let mut o = TranscribeOptions::default();
    o.decode.task.language = (d.language != "auto").then(|| d.language.clone());
    o.decode.task.task = match d.task {
        TaskArg::Transcribe => Task::Transcribe,
        TaskArg::Translate => Task::Translate,
    };
    o.decode.task.timestamps = !d.no_timestamps;
    o.decode.beam_size = d.beam_size;
    if let Some(t) = d.temperature {
        o.decode.temperature = t;
        o.decode.temperatures = vec![t];
    }
    o.decode.max_tokens = d.max_tokens;
    o.decode.seed = d.seed;
    o.condition_on_previous_text = !d.no_condition_on_previous;
    o.decode.task.validate().input()?;
    o.validate().input()?;
    Ok(o)
}

fn classify(e: LongformError) -> Failure {
    match e {
        LongformError::Audio(_) | LongformError::Input(_) | LongformError::Vocab(_) => Failure::Input(e.into()),
        _ => Failure::Internal(e.into()),
    }
}

fn classify_eval(e: EvalError) -> Failure {
    match e {
        EvalError::Manifest(_) | EvalError::Io { .. } | EvalError::Options(_) => Failure::Input(e.into()),
        _ => Failure::Internal(e.into()),
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    if jobs == Some(0) {
        return Err(Failure::Input(anyhow!("--jobs must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Internal(e.into()))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .input()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    write_atomic(path, contents).input()
}

/// Options for one manifest item: an item language pins decoding to it.
fn item_options(base: &TranscribeOptions, entry: &ManifestEntry) -> TranscribeOptions {
    let mut o = base.clone();
    if let Some(l) = &entry.language {
        o.decode.task.language = Some(l.clone());
    }
    o
}

pub fn transcribe(a: TranscribeArgs) -> CmdResult {
    let opts = transcribe_options(&a.decode)?;
    let asr = load_model(&a.model)?;
    let mut stems = HashSet::new();
    let mut targets = Vec::new();
    for input in &a.inputs {
        let stem = input
            .file_stem()
            .ok_or_else(|| Failure::Input(anyhow!("{} has no file name", input.display())))?;
        if !stems.insert(stem.to_owned()) {
            return Err(Failure::Input(anyhow!(
                "two inputs share the output name {}",
                stem.to_string_lossy()
            )));
        }
        targets.push(a.output_dir.join(stem).with_extension(a.output_format.extension()));
    }
    create_dir(&a.output_dir)?;

    let run_one = |input: &PathBuf, target: &PathBuf| -> CmdResult {
        let audio = load_audio(input)
            .with_context(|| format!("reading {}", input.display()))
            .input()?;
        let t = longform::transcribe(&audio, &asr, &opts).map_err(classify)?;
        write(target, a.output_format.render(&t))
    };
    let results: Vec<CmdResult> = pool(a.jobs)?.install(|| {
        a.inputs
            .par_iter()
            .zip(&targets)
            .map(|(i, t)| run_one(i, t))
            .collect()
    });

    let mut worst: Option<Failure> = None;
    let mut failed = 0;
    for ((input, target), r) in a.inputs.iter().zip(&targets).zip(results) {
        match r {
            Ok(()) => println!("{}", target.display()),
            Err(f) => {
                failed += 1;
                eprintln!("{}: {:#}", input.display(), f.error_ref());
                if !matches!(worst, Some(Failure::Internal(_))) {
                    worst = Some(f);
                }
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(f) => {
            let msg = anyhow!("{failed} of {} files failed", a.inputs.len());
            Err(match f {
                Failure::Input(_) => Failure::Input(msg),
                Failure::Internal(_) => Failure::Internal(msg),
            })
        }
    }
}

pub fn detect_language(a: DetectArgs) -> CmdResult {
    let asr = load_model(&a.model)?;
    for input in &a.inputs {
        let audio = load_audio(input)
            .with_context(|| format!("reading {}", input.display()))
            .input()?;
        let mel = log_mel_spectrogram(&audio).input()?.pad_or_trim(N_FRAMES);
        let features = asr.model().encode(&mel).map_err(|e| Failure::Internal(e.into()))?;
        let probs = asr
            .model()
            .detect_language(&features)
            .map_err(|e| Failure::Internal(e.into()))?;
        let mut ranked: Vec<(usize, f64)> = probs.into_iter().enumerate().collect();
        ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for (i, p) in ranked.into_iter().take(a.top.max(1)) {
            println!("{}\t{}\t{:.4}", input.display(), LANGUAGES[i], p);
        }
    }
    Ok(())
}

struct Prepared {
    manifest: EvalManifest,
    asr: Asr,
    opts: TranscribeOptions,
    eval: EvalOptions,
}

fn prepare(c: &ManifestArgs) -> Result<Prepared, Failure> {
    let opts = transcribe_options(&c.decode)?;
    let manifest = EvalManifest::load(&c.manifest).map_err(classify_eval)?;
    let asr = load_model(&c.model)?;
    let normalization = match c.normalizer {
        NormalizerArg::Auto => TextNormalization::ByLanguage,
        NormalizerArg::English => TextNormalization::Fixed(Normalizer::new(NormalizerConfig::english())),
        NormalizerArg::Basic => TextNormalization::Fixed(Normalizer::new(NormalizerConfig::basic(None))),
        NormalizerArg::None => TextNormalization::None,
    };
    if c.jobs == Some(0) {
        return Err(Failure::Input(anyhow!("--jobs must be at least 1")));
    }
    create_dir(&c.output_dir)?;
    Ok(Prepared {
        manifest,
        asr,
        opts,
        eval: EvalOptions {
            normalization,
            jobs: c.jobs,
        },
    })
}

impl Prepared {
    fn pipeline(&self) -> impl Fn(&ManifestEntry, &AudioBuffer) -> Result<String, String> + Sync + '_ {
        |entry, audio| {
            longform::transcribe(audio, &self.asr, &item_options(&self.opts, entry))
                .map(|t| t.text())
                .map_err(|e| e.to_string())
        }
    }
}

fn print_summary(s: &EvalSummary) {
    println!(
        "overall\tWER {:.4}\titems {}\tfailed {}\twords {}",
        s.overall.wer, s.overall.items, s.overall.failed, s.overall.ref_words
    );
    for (tag, g) in &s.by_tag {
        println!("{tag}\tWER {:.4}\titems {}\tfailed {}\twords {}", g.wer, g.items, g.failed, g.ref_words);
    }
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let p = prepare(&a.common)?;
    let report = eval::evaluate(&p.manifest, &p.pipeline(), &p.eval).map_err(classify_eval)?;
    let dir = &a.common.output_dir;
    write(&dir.join("report.tsv"), report.to_tsv())?;
    write(&dir.join("summary.json"), report.summary_json() + "\n")?;
    print_summary(&report.summary());
    Ok(())
}

#[derive(Serialize)]
struct SweepDoc {
    curve: Vec<NoisePoint>,
    reports: Vec<SweepLevel>,
}

#[derive(Serialize)]
struct SweepLevel {
    snr_db: f64,
    summary: EvalSummary,
}

pub fn noise_sweep(a: NoiseSweepArgs) -> CmdResult {
    let kind = if a.noise == "white" {
        NoiseKind::White
    } else {
        NoiseKind::Sample(
            load_audio(&a.noise)
                .with_context(|| format!("reading noise {}", a.noise))
                .input()?,
        )
    };
    let p = prepare(&a.common)?;
    let (curve, reports) = eval::noise_sweep(&p.manifest, &p.pipeline(), &a.snr, &kind, a.common.decode.seed, &p.eval)
        .map_err(classify_eval)?;
    let mut tsv = String::from("snr_db\twer\n");
    for pt in &curve {
        tsv.push_str(&format!("{}\t{:.6}\n", pt.snr_db, pt.wer));
    }
    let doc = SweepDoc {
        curve: curve.clone(),
        reports: reports
            .iter()
            .zip(&curve)
            .map(|(r, pt): (&EvalReport, _)| SweepLevel {
                snr_db: pt.snr_db,
                summary: r.summary(),
            })
            .collect(),
    };
    let dir = &a.common.output_dir;
    write(&dir.join("noise_curve.tsv"), &tsv)?;
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Internal(e.into()))?;
    write(&dir.join("noise_sweep.json"), json + "\n")?;
    print!("{tsv}");
    Ok(())
}

pub fn ablate(a: AblateArgs) -> CmdResult {
    let p = prepare(&a.common)?;
    let table = ablation_matrix(&p.manifest, &p.asr, &p.opts, &p.eval).map_err(classify_eval)?;
    let dir = &a.common.output_dir;
    let tsv = table.to_tsv();
    write(&dir.join("ablation.tsv"), &tsv)?;
    let json = serde_json::to_string_pretty(&table).map_err(|e| Failure::Internal(e.into()))?;
    write(&dir.join("ablation.json"), json + "\n")?;
    print!("{tsv}");
    Ok(())
}

pub fn normalize(a: NormalizeArgs) -> CmdResult {
    let config = match a.mode {
        ModeArg::English => NormalizerConfig::english(),
        ModeArg::Basic => NormalizerConfig::basic(a.language.as_deref()),
    };
    let n = Normalizer::new(config);
    if a.text.is_empty() {
        for line in std::io::stdin().lock().lines() {
            println!("{}", n.normalize(&line.input()?));
        }
    } else {
        for t in &a.text {
            println!("{}", n.normalize(t));
        }
    }
    Ok(())
}

pub fn random_weights(a: RandomWeightsArgs) -> CmdResult {
    let vocab = load_vocab(a.vocab.as_deref())?;
    let config = match &a.preset {
        Some(p) => ModelConfig::preset(p, vocab.len()).input()?,
        None => {
            let c = ModelConfig {
                name: a.name.clone(),
                n_layers: a.layers,
                width: a.width,
                heads: a.heads,
                vocab_size: vocab.len(),
                ..ModelConfig::preset("tiny", vocab.len()).input()?
            };
            c.validate().input()?;
            c
        }
    };
    let weights = ModelWeights::random(&config, a.seed).map_err(|e| Failure::Internal(e.into()))?;
    create_dir(&a.output_dir)?;
    let toml = a.output_dir.join(format!("{}.toml", a.name));
    let bin = a.output_dir.join(format!("{}.bin", a.name));
    write(&toml, config.to_toml())?;
    write(&bin, weights.to_bytes())?;
    println!("{}\n{}", toml.display(), bin.display());
    Ok(())
}
