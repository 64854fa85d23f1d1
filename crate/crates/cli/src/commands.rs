use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use sigclass_core::data::{
    batch_indices, load_dataset, make_batch, split, SampleSource, SignalDataset,
};
use sigclass_core::nn::{
    load_checkpoint, read_checkpoint, save_checkpoint, InceptionConfig, ModelSpec, ResNet2DConfig,
};
use sigclass_core::ops::softmax;
use sigclass_core::synth::{generate, SynthConfig};
use sigclass_core::train::{
    argmax, evaluate, lr_find, train, Approach, LrFindConfig, LrPolicy, Precision, TrainConfig,
};
use sigclass_core::wavelet::{signal_image, write_png, Colormap, ScalogramImages, WaveletConfig};
use sigclass_core::{Error, Mode, Scalar};
use thiserror::Error;

use crate::config::{self, ConfigError, Resolver};
use crate::manifest::Manifest;
use crate::{
    Cli, Command, CwtExportArgs, DataArgs, EvalArgs, LrFindArgs, PredictArgs, SynthArgs, TrainArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Core(Error::Config { .. }) => 1,
            CliError::Core(Error::NonFinite(_)) => 3,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn path_opt(r: &mut Resolver, key: &str, flag: Option<PathBuf>) -> Res<Option<PathBuf>> {
    Ok(r.opt::<String>(key, flag.map(|p| p.display().to_string()))?
        .map(PathBuf::from))
}

fn required(r: &mut Resolver, key: &str, flag: Option<PathBuf>) -> Res<PathBuf> {
    path_opt(r, key, flag)?
        .ok_or_else(|| CliError::Usage(format!("--{} is required", key.replace('_', "-"))))
}

fn path_or(r: &mut Resolver, key: &str, flag: Option<PathBuf>, default: &str) -> Res<PathBuf> {
    Ok(path_opt(r, key, flag)?.unwrap_or_else(|| PathBuf::from(default)))
}

/// Every run echoes its fully resolved configuration before doing work.
fn finish(r: Resolver, command: &str) -> Res<BTreeMap<String, String>> {
    let resolved = r.finish()?;
    eprintln!("# {command}");
    for (k, v) in &resolved {
        eprintln!("{k} = {v}");
    }
    Ok(resolved)
}

fn create_dir(p: &Path) -> Res<()> {
    std::fs::create_dir_all(p).map_err(io_err(p))
}

fn write_text(p: &Path, text: &str) -> Res<()> {
    std::fs::write(p, text).map_err(io_err(p))
}

fn write_manifest(m: &Manifest, p: &Path) -> Res<()> {
    m.write(p).map_err(io_err(p))
}

pub fn run(cli: Cli) -> Res<()> {
    let file = match &cli.config {
        Some(p) => config::load(p)?,
        None => BTreeMap::new(),
    };
    let r = Resolver::new(file);
    match cli.command {
        Command::Synth(a) => synth(a, r),
        Command::Train(a) => train_cmd(a, r),
        Command::LrFind(a) => lr_find_cmd(a, r),
        Command::CwtExport(a) => cwt_export(a, r),
        Command::Eval(a) => eval_cmd(a, r),
        Command::Predict(a) => predict(a, r),
    }
}

fn synth(a: SynthArgs, mut r: Resolver) -> Res<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n: r.get("n", a.n, d.n)?,
        len: r.get("length", a.length, d.len)?,
        seed: r.get("seed", a.seed, d.seed)?,
        noise: r.get("noise", a.noise, d.noise)?,
    };
    let out = path_or(&mut r, "out", a.out, "data.csv")?;
    let resolved = finish(r, "synth")?;
    let ds = generate(&cfg)?;
    ds.write(&out)?;
    eprintln!(
        "wrote {} signals of length {} to {}",
        ds.n(),
        ds.signal_len(),
        out.display()
    );
    let mut m = Manifest::new("synth", resolved);
    m.output(&out);
    write_manifest(&m, &sidecar(&out))
}

/// `data.csv` → `data.csv.manifest.json`
fn sidecar(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn parse_approach(s: &str) -> Res<Approach> {
    match s {
        "direct" => Ok(Approach::Direct),
        "wavelet" => Ok(Approach::Wavelet),
        other => Err(CliError::Usage(format!(
            "approach {other:?} is not direct or wavelet"
        ))),
    }
}

fn approach_name(a: Approach) -> &'static str {
    match a {
        Approach::Direct => "direct",
        Approach::Wavelet => "wavelet",
    }
}

/// Settings shared by commands that train on a dataset.
struct DataSetup {
    data: PathBuf,
    out: PathBuf,
    seed: u64,
    approach: Approach,
    batch_size: usize,
    valid_frac: f64,
}

fn data_setup(a: DataArgs, r: &mut Resolver, default_out: &str) -> Res<DataSetup> {
    let data = required(r, "data", a.data)?;
    let out = path_or(r, "out", a.out, default_out)?;
    let approach = parse_approach(&r.get("approach", a.approach, "direct".to_string())?)?;
    Ok(DataSetup {
        data,
        out,
        seed: r.get("seed", a.seed, 42)?,
        approach,
        batch_size: r.get("batch_size", a.batch_size, 64)?,
        valid_frac: r.get("valid_frac", a.valid_frac, 0.2)?,
    })
}

fn model_spec(approach: Approach, len: usize) -> ModelSpec {
    match approach {
        Approach::Direct => ModelSpec::InceptionTime(InceptionConfig {
            seq_len: len,
            ..Default::default()
        }),
        Approach::Wavelet => ModelSpec::Resnet2d(ResNet2DConfig {
            input_size: (len, len),
            ..Default::default()
        }),
    }
}

fn approach_of(spec: &ModelSpec) -> Approach {
    match spec {
        ModelSpec::InceptionTime(_) => Approach::Direct,
        ModelSpec::Resnet2d(_) => Approach::Wavelet,
    }
}

/// The dataset itself, or its scalogram images.
fn source(ds: SignalDataset, approach: Approach) -> Res<Box<dyn SampleSource>> {
    Ok(match approach {
        Approach::Direct => Box::new(ds),
        Approach::Wavelet => {
            eprintln!("computing {} scalograms", ds.n());
            Box::new(ScalogramImages::from_dataset(
                &ds,
                &WaveletConfig::default(),
                Colormap::Viridis,
            )?)
        }
    })
}

fn train_cmd(a: TrainArgs, mut r: Resolver) -> Res<()> {
    let s = data_setup(a.data, &mut r, "runs/train")?;
    let epochs = r.get("epochs", a.epochs, 20)?;
    let lr = r.opt("lr", a.lr)?;
    let lr_min = r.opt("lr_min", a.lr_min)?;
    let lr_max = r.opt("lr_max", a.lr_max)?;
    let inferred = if lr_min.is_some() {
        "slice"
    } else if lr_max.is_some() || (lr.is_none() && s.approach == Approach::Wavelet) {
        "one-cycle"
    } else {
        "fixed"
    };
    let policy_name = r.get("lr_policy", a.lr_policy, inferred.to_string())?;
    let lr_policy = match policy_name.as_str() {
        "fixed" => LrPolicy::Fixed {
            lr: lr.unwrap_or(1e-3),
        },
        "one-cycle" | "one_cycle" => LrPolicy::OneCycle {
            lr_max: lr_max.or(lr).unwrap_or(2e-2),
        },
        "slice" => LrPolicy::Slice {
            lr_min: lr_min.unwrap_or(1e-6),
            lr_max: lr_max.unwrap_or(1e-2),
        },
        other => {
            return Err(CliError::Usage(format!(
                "lr-policy {other:?} is not fixed, one-cycle or slice"
            )))
        }
    };
    // echo the effective rates, defaults included
    let rates = match lr_policy {
        LrPolicy::Fixed { lr } => vec![("lr", lr)],
        LrPolicy::OneCycle { lr_max } => vec![("lr_max", lr_max)],
        LrPolicy::Slice { lr_min, lr_max } => vec![("lr_min", lr_min), ("lr_max", lr_max)],
    };
    for (k, v) in rates {
        r.resolved.insert(k.into(), v.to_string());
    }
    let weight_decay = r.get("weight_decay", a.weight_decay, 0.01)?;
    let precision = match r.get("precision", a.precision, "f32".to_string())?.as_str() {
        "f32" => Precision::F32,
        "f64" => Precision::F64,
        other => {
            return Err(CliError::Usage(format!(
                "precision {other:?} is not f32 or f64"
            )))
        }
    };
    let resolved = finish(r, "train")?;
    let cfg = TrainConfig {
        approach: s.approach,
        epochs,
        batch_size: s.batch_size,
        lr_policy,
        seed: s.seed,
        weight_decay,
        precision,
    };
    cfg.validate()?;
    match precision {
        Precision::F32 => train_with::<f32>(&s, &cfg, resolved),
        Precision::F64 => train_with::<f64>(&s, &cfg, resolved),
    }
}

fn train_with<T: Scalar>(
    s: &DataSetup,
    cfg: &TrainConfig,
    resolved: BTreeMap<String, String>,
) -> Res<()> {
    let ds = load_dataset(&s.data)?;
    let spec = model_spec(s.approach, ds.signal_len());
    let sp = split(ds.n(), s.valid_frac, s.seed)?;
    let src = source(ds, s.approach)?;
    let mut model = spec.build::<T>(s.seed)?;
    eprintln!(
        "{} training, {} validation, {} parameters",
        sp.train.len(),
        sp.valid.len(),
        model.store().numel()
    );
    let out = train(model.as_mut(), src.as_ref(), &sp, cfg, |e| {
        eprintln!(
            "epoch {:>3}  train_loss {:.5}  valid_loss {:.5}  accuracy {:.4}",
            e.epoch, e.train_loss, e.valid_loss, e.accuracy
        )
    })?;
    eprintln!(
        "best accuracy {:.4} at epoch {}",
        out.history.best_accuracy, out.history.best_epoch
    );
    create_dir(&s.out)?;
    let (hist, report, ckpt) = (
        s.out.join("history.json"),
        s.out.join("report.json"),
        s.out.join("model.ckpt"),
    );
    write_text(&hist, &(out.history.to_json() + "\n"))?;
    write_text(
        &report,
        &(serde_json::to_string_pretty(&out.report).expect("report json") + "\n"),
    )?;
    let mut meta = BTreeMap::new();
    meta.insert(
        "approach".to_string(),
        approach_name(s.approach).to_string(),
    );
    meta.insert("seed".to_string(), s.seed.to_string());
    meta.insert("valid_frac".to_string(), s.valid_frac.to_string());
    meta.insert("precision".to_string(), T::DTYPE.to_string());
    meta.insert("best_epoch".to_string(), out.history.best_epoch.to_string());
    save_checkpoint(&ckpt, &spec, model.as_ref(), &meta)?;
    let mut m = Manifest::new("train", resolved);
    m.input(&s.data);
    for p in [&hist, &report, &ckpt] {
        m.output(p);
    }
    m.note(
        "seeds",
        json!({ "split": s.seed, "init": s.seed, "shuffle": s.seed }),
    );
    m.note("epoch_seconds", json!(out.epoch_seconds));
    write_manifest(&m, &s.out.join("manifest.json"))
}

fn lr_find_cmd(a: LrFindArgs, mut r: Resolver) -> Res<()> {
    let s = data_setup(a.data, &mut r, "runs/lr-find")?;
    let d = LrFindConfig::default();
    let cfg = LrFindConfig {
        start: r.get("start", a.start, d.start)?,
        end: r.get("end", a.end, d.end)?,
        n_iter: r.get("iters", a.iters, d.n_iter)?,
        batch_size: s.batch_size,
        seed: s.seed,
        weight_decay: r.get("weight_decay", a.weight_decay, d.weight_decay)?,
    };
    let resolved = finish(r, "lr-find")?;
    cfg.validate()?;
    let ds = load_dataset(&s.data)?;
    let spec = model_spec(s.approach, ds.signal_len());
    let sp = split(ds.n(), s.valid_frac, s.seed)?;
    let src = source(ds, s.approach)?;
    let mut model = spec.build::<f32>(s.seed)?;
    let res = lr_find(model.as_mut(), src.as_ref(), &sp.train, &cfg)?;
    match res.suggestion {
        Some(lr) => eprintln!(
            "suggested learning rate {lr:.3e} ({} iterations)",
            res.lrs.len()
        ),
        None => eprintln!("no suggestion: the loss diverged immediately"),
    }
    create_dir(&s.out)?;
    let path = s.out.join("lr_find.json");
    write_text(
        &path,
        &(serde_json::to_string_pretty(&res).expect("json") + "\n"),
    )?;
    let mut m = Manifest::new("lr-find", resolved);
    m.input(&s.data);
    m.output(&path);
    write_manifest(&m, &s.out.join("manifest.json"))
}

fn cwt_export(a: CwtExportArgs, mut r: Resolver) -> Res<()> {
    let data = required(&mut r, "data", a.data)?;
    let out = path_or(&mut r, "out", a.out, "scalograms")?;
    let limit = r.opt("limit", a.limit)?;
    let resolved = finish(r, "cwt-export")?;
    let ds = load_dataset(&data)?;
    create_dir(&out)?;
    let stem = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    let n = limit.unwrap_or(ds.n()).min(ds.n());
    let cfg = WaveletConfig::default();
    let mut m = Manifest::new("cwt-export", resolved);
    m.input(&data);
    for i in 0..n {
        let img = signal_image(ds.signal(i), &cfg, Colormap::Viridis)?;
        let path = out.join(format!("{stem}_{i}_{}.png", ds.labels()[i]));
        write_png(&path, &img)?;
        m.output(&path);
    }
    eprintln!("wrote {n} heatmaps to {}", out.display());
    write_manifest(&m, &out.join("manifest.json"))
}

fn checkpoint_precision(path: &Path) -> Res<Precision> {
    let ck = read_checkpoint::<f64>(path)?;
    Ok(match ck.meta.get("precision").map(String::as_str) {
        Some("f64") => Precision::F64,
        _ => Precision::F32,
    })
}

fn eval_cmd(a: EvalArgs, mut r: Resolver) -> Res<()> {
    let ckpt = required(&mut r, "checkpoint", a.checkpoint)?;
    let data = required(&mut r, "data", a.data)?;
    let out = path_opt(&mut r, "out", a.out)?;
    let seed = r.opt("seed", a.seed)?;
    let valid_frac = r.opt("valid_frac", a.valid_frac)?;
    let all = r.get("all", a.all.then_some(true), false)?;
    let batch_size = r.get("batch_size", a.batch_size, 64)?;
    let resolved = finish(r, "eval")?;
    let args = EvalRun {
        ckpt,
        data,
        out,
        seed,
        valid_frac,
        all,
        batch_size,
    };
    match checkpoint_precision(&args.ckpt)? {
        Precision::F32 => eval_with::<f32>(&args, resolved),
        Precision::F64 => eval_with::<f64>(&args, resolved),
    }
}

struct EvalRun {
    ckpt: PathBuf,
    data: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    valid_frac: Option<f64>,
    all: bool,
    batch_size: usize,
}

fn meta_or<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str, default: T) -> T {
    meta.get(key)
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn eval_with<T: Scalar>(a: &EvalRun, resolved: BTreeMap<String, String>) -> Res<()> {
    let (spec, mut model, meta) = load_checkpoint::<T>(&a.ckpt)?;
    let ds = load_dataset(&a.data)?;
    let indices: Vec<usize> = if a.all {
        (0..ds.n()).collect()
    } else {
        let seed = a.seed.unwrap_or_else(|| meta_or(&meta, "seed", 42));
        let frac = a
            .valid_frac
            .unwrap_or_else(|| meta_or(&meta, "valid_frac", 0.2));
        split(ds.n(), frac, seed)?.valid
    };
    let src = source(ds, approach_of(&spec))?;
    let report = evaluate(model.as_mut(), src.as_ref(), &indices, a.batch_size)?;
    eprintln!(
        "accuracy {:.4} loss {:.5} over {} signals",
        report.accuracy,
        report.loss,
        report.total()
    );
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.ckpt.with_file_name("eval.json"));
    write_text(
        &out,
        &(serde_json::to_string_pretty(&report).expect("json") + "\n"),
    )?;
    let mut m = Manifest::new("eval", resolved);
    m.input(&a.ckpt);
    m.input(&a.data);
    m.output(&out);
    write_manifest(&m, &sidecar(&out))
}

fn predict(a: PredictArgs, mut r: Resolver) -> Res<()> {
    let ckpt = required(&mut r, "checkpoint", a.checkpoint)?;
    let input = required(&mut r, "input", a.input)?;
    let out = path_or(&mut r, "out", a.out, "predictions.csv")?;
    let batch_size = r.get("batch_size", a.batch_size, 64)?;
    let resolved = finish(r, "predict")?;
    match checkpoint_precision(&ckpt)? {
        Precision::F32 => predict_with::<f32>(&ckpt, &input, &out, batch_size, resolved),
        Precision::F64 => predict_with::<f64>(&ckpt, &input, &out, batch_size, resolved),
    }
}

fn predict_with<T: Scalar>(
    ckpt: &Path,
    input: &Path,
    out: &Path,
    batch_size: usize,
    resolved: BTreeMap<String, String>,
) -> Res<()> {
    let (spec, mut model, _) = load_checkpoint::<T>(ckpt)?;
    let ds = load_dataset(input)?;
    let n = ds.n();
    let src = source(ds, approach_of(&spec))?;
    let k = model.n_classes();
    let mut text = String::from("index,label,predicted");
    for c in 0..k {
        write!(text, ",p{c}").expect("string write");
    }
    text.push('\n');
    let all: Vec<usize> = (0..n).collect();
    let mut correct = 0;
    if batch_size == 0 {
        return Err(CliError::Usage("batch-size must be positive".into()));
    }
    for idx in batch_indices(&all, batch_size, false, 0, 0) {
        let batch = make_batch::<T>(src.as_ref(), &idx)?;
        let probs = softmax(&model.predict(&batch.inputs, Mode::Eval)?)?;
        for ((&i, &label), row) in idx.iter().zip(&batch.labels).zip(probs.data().chunks(k)) {
            let p = argmax(row);
            correct += usize::from(p == label);
            write!(text, "{i},{label},{p}").expect("string write");
            for v in row {
                write!(text, ",{:.6}", v.f64()).expect("string write");
            }
            text.push('\n');
        }
    }
    write_text(out, &text)?;
    eprintln!(
        "wrote {n} predictions to {} ({correct} match the file's labels)",
        out.display()
    );
    let mut m = Manifest::new("predict", resolved);
    m.input(ckpt);
    m.input(input);
    m.output(out);
    write_manifest(&m, &sidecar(out))
}
