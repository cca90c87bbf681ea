//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;
use sketchlattice::audit::{finite_diff_audit, small_audit_setup};
use sketchlattice::dataset::{Dataset, Split};
use sketchlattice::encoder::{count_parameters, parameter_count_closed_form, EncoderParams};
use sketchlattice::eval::{edge_to_sketch, embed_gallery, heal, healing_sweep, retrieve, HealOutput, HealRequest};
use sketchlattice::sketch_data::{parse_quickdraw_line, rasterize, render_svg, RasterSketch};
use sketchlattice::train::{fit, load_training_checkpoint, OptimizerState, TrainConfig};
use sketchlattice::{EmbedMode, Error, ErrorClass, Model, ModelConfig, VectorSketch};

use crate::config::FileConfig;
use crate::manifest::RunManifest;
use crate::{Cli, Command};

/// Splits are drawn with a fixed seed so `train` and `eval` agree on raw inputs
/// whatever `--seed` is.
const SPLIT_SEED: u64 = 0;
const DEFAULT_TEST_PER_CATEGORY: usize = 50;
/// Relative error above which `audit-grad` reports a mismatch.
const AUDIT_TOLERANCE: f64 = 1e-3;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    GradientMismatch(f64),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::GradientMismatch(r) => write!(f, "worst relative gradient error {r:.3e} exceeds {AUDIT_TOLERANCE:e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self.class() {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Model => 4,
        }
    }

    fn class(&self) -> ErrorClass {
        match self {
            CliError::Core(e) => e.class(),
            CliError::GradientMismatch(_) => ErrorClass::Model,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::GradientMismatch(_) => "GradientMismatch",
        }
    }

    /// One-line diagnostic for stderr.
    pub fn line(&self) -> String {
        let class = match self.class() {
            ErrorClass::Usage => "usage",
            ErrorClass::Data => "data",
            ErrorClass::Model => "model",
        };
        let message = self.to_string().replace('\n', " ");
        format!("error code={} class={class} message={message}", self.code())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Options resolved from defaults, the configuration file and flags.
struct Context {
    file: FileConfig,
    seed: u64,
    pmask: Option<f64>,
    checkpoint: Option<PathBuf>,
    out: PathBuf,
    workers: usize,
}

impl Context {
    fn new(cli: &Cli) -> CliResult<Context> {
        let mut file = match &cli.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if cli.n.is_some() {
            file.n = cli.n;
        }
        if cli.seed.is_some() {
            file.seed = cli.seed;
        }
        if cli.pmask.is_some() {
            file.pmask = cli.pmask;
        }
        if cli.workers.is_some() {
            file.workers = cli.workers;
        }
        if let Some(p) = file.pmask {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("--pmask {p} must lie in [0, 1]")).into());
            }
        }
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out)?;
        Ok(Context {
            seed: file.seed.unwrap_or(0),
            pmask: file.pmask,
            workers: file.workers.unwrap_or(1).max(1),
            checkpoint: cli.checkpoint.clone(),
            out,
            file,
        })
    }

    fn model_config(&self) -> CliResult<ModelConfig> {
        let mut cfg = ModelConfig::default();
        self.file.apply_model(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        self.file.apply_train(&mut cfg);
        cfg.seed = self.seed;
        if let Some(p) = self.pmask {
            cfg.p_mask_train = p;
        }
        cfg
    }

    fn test_per_category(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.test_per_category).unwrap_or(DEFAULT_TEST_PER_CATEGORY)
    }

    fn checkpoint_path(&self) -> CliResult<&Path> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| Error::Config("--checkpoint is required for this command".into()).into())
    }

    fn load_model(&self, manifest: &mut RunManifest) -> CliResult<Model> {
        let path = self.checkpoint_path()?;
        let model = Model::load(path)?;
        manifest.checkpoint(path)?;
        if let Some(cfg) = manifest.config.as_object_mut() {
            cfg.insert("n".into(), json!(self.file.n.unwrap_or(model.config.lattice_n)));
        }
        Ok(model)
    }

    /// `--n` when given, otherwise the model's own grid.
    fn lattice_n(&self) -> Option<usize> {
        self.file.n
    }

    fn manifest(&self, command: &str, config: serde_json::Value) -> RunManifest {
        RunManifest::new(command, config, self.seed)
    }

    fn write(&self, manifest: &mut RunManifest, name: &str, bytes: impl AsRef<[u8]>) -> CliResult {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        manifest.output(name);
        Ok(())
    }
}

pub fn run(cli: Cli) -> CliResult {
    let ctx = Context::new(&cli)?;
    match cli.command {
        Command::Ingest { inputs, test_per_category } => ingest(&ctx, &inputs, test_per_category),
        Command::Train { inputs, resume, iterations } => train(&ctx, &inputs, resume, iterations),
        Command::Heal { inputs } => heal_files(&ctx, &inputs),
        Command::Generate { input, count } => generate(&ctx, input.as_deref(), count),
        Command::Img2sketch { input } => img2sketch(&ctx, &input),
        Command::Eval { inputs, pmasks } => evaluate(&ctx, &inputs, &pmasks),
        Command::AuditGrad { step } => audit(&ctx, step),
        Command::Render { input, pgm } => render(&ctx, &input, pgm),
        Command::Params => params(&ctx),
    }
}

fn load_dataset(inputs: &[PathBuf], n_max: usize, test_per_category: usize) -> CliResult<Dataset> {
    let mut data = Dataset::load(inputs)?;
    let dropped = data.retain_fitting(n_max);
    if dropped > 0 {
        eprintln!("dropped {dropped} sketches that are empty or longer than n_max = {n_max}");
    }
    if data.is_empty() {
        return Err(Error::DatasetEmpty.into());
    }
    data.assign_splits(test_per_category, SPLIT_SEED);
    Ok(data)
}

fn ingest(ctx: &Context, inputs: &[PathBuf], test_per_category: Option<usize>) -> CliResult {
    let cfg = ctx.model_config()?;
    let tpc = ctx.test_per_category(test_per_category);
    let data = load_dataset(inputs, cfg.decoder.n_max, tpc)?;
    let mut manifest = ctx.manifest("ingest", json!({ "test_per_category": tpc, "n_max": cfg.decoder.n_max })).inputs(inputs);
    data.write_ndjson(&ctx.out.join("dataset.ndjson"))?;
    manifest.output("dataset.ndjson");
    for (i, item) in data.items.iter().enumerate() {
        let split = match item.split {
            Some(Split::Test) => "test",
            _ => "train",
        };
        let name = format!("rasters/{split}/{}-{i:05}.pgm", item.word);
        ctx.write(&mut manifest, &name, rasterize(&item.sketch, cfg.side).to_pgm_bytes())?;
    }
    let test = data.subset(Split::Test).len();
    println!("{} sketches in {} categories ({} train, {test} test)", data.len(), data.categories().len(), data.len() - test);
    manifest.write(&ctx.out)?;
    Ok(())
}

fn train(ctx: &Context, inputs: &[PathBuf], resume: bool, iterations: Option<u64>) -> CliResult {
    let mut tcfg = ctx.train_config();
    if let Some(it) = iterations {
        tcfg.iterations = it;
    }
    let resumed = match resume {
        true => Some(load_training_checkpoint(ctx.checkpoint_path()?)?),
        false => None,
    };
    let model_cfg = match &resumed {
        Some((m, _, _)) => m.config.clone(),
        None => ctx.model_config()?,
    };
    let tpc = ctx.test_per_category(None);
    let data = load_dataset(inputs, model_cfg.decoder.n_max, tpc)?;
    let categories = data.categories();
    let train_split = data.subset(Split::Train);
    if train_split.is_empty() {
        return Err(Error::DatasetEmpty.into());
    }
    let (mut model, mut opt) = match resumed {
        Some((model, opt, _)) => (model, opt),
        None => {
            let mut cfg = model_cfg;
            cfg.offset_scale = train_split.offset_scale();
            let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
            rng.set_stream(u64::MAX);
            let model = Model::new(cfg, &mut rng)?;
            let opt = OptimizerState::new(&model.params);
            (model, opt)
        }
    };
    let prepared = train_split.prepare(&model.config, &categories, ctx.workers)?;
    let mut manifest = ctx
        .manifest("train", json!({ "model": model.config, "train": tcfg, "categories": categories, "test_per_category": tpc }))
        .inputs(inputs);
    if resume {
        manifest.checkpoint(ctx.checkpoint_path()?)?;
    }
    let report = fit(&prepared, &mut model, &mut opt, &tcfg, &ctx.out, |r| {
        if r.iteration % 100 == 0 || r.iteration == tcfg.iterations {
            eprintln!("iter {:>6}  lr {:.3e}  loss {:.5}", r.iteration, r.lr, r.loss);
        }
    })?;
    manifest.output("loss.csv");
    for c in &report.checkpoints {
        manifest.output(file_name(c));
    }
    manifest.output(file_name(&report.final_checkpoint));
    manifest.checkpoint(&report.final_checkpoint)?;
    if report.skipped > 0 {
        eprintln!("skipped {} items with empty lattices", report.skipped);
    }
    println!("{}", report.final_checkpoint.display());
    manifest.write(&ctx.out)?;
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sketch".into())
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))).into()
}

fn read_raster(path: &Path) -> CliResult<RasterSketch> {
    let file = fs::File::open(path).map_err(with_path(path))?;
    RasterSketch::read_pgm(std::io::BufReader::new(file))
        .map_err(|e| match e {
            Error::InvalidImage(msg) => Error::InvalidImage(format!("{}: {msg}", path.display())),
            other => other,
        })
        .map_err(CliError::from)
}

fn write_sketch(ctx: &Context, manifest: &mut RunManifest, stem: &str, out: &HealOutput, p_mask: f64, seed: u64) -> CliResult {
    ctx.write(manifest, &format!("{stem}.svg"), render_svg(&out.sketch))?;
    let doc = json!({
        "steps": out.sketch.to_steps_json()["steps"],
        "lattice": out.lattice.to_json(),
        "p_mask": p_mask,
        "seed": seed,
    });
    ctx.write(manifest, &format!("{stem}.json"), serde_json::to_string(&doc).expect("json") + "\n")
}

fn heal_files(ctx: &Context, inputs: &[PathBuf]) -> CliResult {
    let p_mask = ctx.pmask.unwrap_or(0.0);
    let mut manifest = ctx.manifest("heal", json!({ "p_mask": p_mask, "n": ctx.lattice_n() })).inputs(inputs);
    let model = ctx.load_model(&mut manifest)?;
    for path in inputs {
        let raster = read_raster(path)?;
        let out = heal(&HealRequest { raster, p_mask, n: ctx.lattice_n(), seed: ctx.seed }, &model)?;
        write_sketch(ctx, &mut manifest, &stem(path), &out, p_mask, ctx.seed)?;
        println!("{}: {} lattice points, {} steps", path.display(), out.lattice.len(), out.sketch.len());
    }
    manifest.write(&ctx.out)?;
    Ok(())
}

fn generate(ctx: &Context, input: Option<&Path>, count: usize) -> CliResult {
    let p_mask = ctx.pmask.unwrap_or(0.0);
    let inputs: Vec<PathBuf> = input.map(Path::to_path_buf).into_iter().collect();
    let mut manifest = ctx.manifest("generate", json!({ "count": count, "p_mask": p_mask, "n": ctx.lattice_n() })).inputs(&inputs);
    let model = ctx.load_model(&mut manifest)?;
    let raster = input.map(read_raster).transpose()?;
    for k in 0..count {
        let seed = ctx.seed.wrapping_add(k as u64);
        let name = format!("generated-{k:03}");
        match &raster {
            Some(r) => {
                let out = heal(&HealRequest { raster: r.clone(), p_mask, n: ctx.lattice_n(), seed }, &model)?;
                write_sketch(ctx, &mut manifest, &name, &out, p_mask, seed)?;
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let z = Array1::from_shape_simple_fn(model.config.encoder.d, || StandardNormal.sample(&mut rng));
                let sketch = model.generate(z.view(), &mut rng)?;
                ctx.write(&mut manifest, &format!("{name}.svg"), render_svg(&sketch))?;
                let doc = json!({ "steps": sketch.to_steps_json()["steps"], "seed": seed });
                ctx.write(&mut manifest, &format!("{name}.json"), serde_json::to_string(&doc).expect("json") + "\n")?;
            }
        }
    }
    manifest.write(&ctx.out)?;
    Ok(())
}

fn img2sketch(ctx: &Context, input: &Path) -> CliResult {
    let mut manifest = ctx.manifest("img2sketch", json!({ "n": ctx.lattice_n() })).inputs(&[input.to_path_buf()]);
    let model = ctx.load_model(&mut manifest)?;
    let edges = read_raster(input)?;
    let out = edge_to_sketch(&edges, &model, ctx.lattice_n(), ctx.seed)?;
    write_sketch(ctx, &mut manifest, &stem(input), &out, 0.0, ctx.seed)?;
    println!("{}: {} lattice points, {} steps", input.display(), out.lattice.len(), out.sketch.len());
    manifest.write(&ctx.out)?;
    Ok(())
}

fn rasters_of(model: &Model, data: &Dataset, categories: &[String]) -> (Vec<RasterSketch>, Vec<usize>) {
    data.items
        .iter()
        .filter_map(|it| Some((rasterize(&it.sketch, model.config.side), Dataset::label_of(categories, &it.word)?)))
        .unzip()
}

fn evaluate(ctx: &Context, inputs: &[PathBuf], pmasks: &[f64]) -> CliResult {
    if let Some(p) = pmasks.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("p_mask {p} must lie in [0, 1]")).into());
    }
    let tpc = ctx.test_per_category(None);
    let mut manifest = ctx
        .manifest("eval", json!({ "pmasks": pmasks, "n": ctx.lattice_n(), "test_per_category": tpc }))
        .inputs(inputs);
    let model = ctx.load_model(&mut manifest)?;
    let data = load_dataset(inputs, model.config.decoder.n_max, tpc)?;
    let categories = data.categories();
    let (test, test_labels) = rasters_of(&model, &data.subset(Split::Test), &categories);
    let (train, train_labels) = rasters_of(&model, &data.subset(Split::Train), &categories);
    if test.is_empty() {
        return Err(Error::DatasetEmpty.into());
    }

    let sweep = healing_sweep(&test, &test_labels, &model, pmasks, ctx.lattice_n(), ctx.seed)?;
    ctx.write(&mut manifest, "sweep.csv", sweep.to_csv())?;
    println!("healing retrieval against the clean test set");
    print!("{}", sweep.to_table());

    if !train.is_empty() {
        let queries = embed_gallery(&test, &model, ctx.lattice_n())?;
        let gallery = embed_gallery(&train, &model, ctx.lattice_n())?;
        let ql: Vec<usize> = queries.kept.iter().map(|&i| test_labels[i]).collect();
        let gl: Vec<usize> = gallery.kept.iter().map(|&i| train_labels[i]).collect();
        let plain = retrieve(queries.rows.view(), &ql, gallery.rows.view(), &gl, None)?;
        println!("clean test vs train gallery: top1 {:.3} top3 {:.3}", plain.top1, plain.top3);
        let doc = json!({
            "categories": categories,
            "top1": plain.top1,
            "top3": plain.top3,
            "confusion": plain.confusion,
            "queries": ql.len(),
            "gallery": gl.len(),
        });
        ctx.write(&mut manifest, "retrieval.json", serde_json::to_string_pretty(&doc).expect("json") + "\n")?;
    }
    manifest.write(&ctx.out)?;
    Ok(())
}

fn audit(ctx: &Context, step: f64) -> CliResult {
    let mut manifest = ctx.manifest("audit-grad", json!({ "step": step }));
    let (model, items, noise) = small_audit_setup(ctx.seed)?;
    let report = finite_diff_audit(&model, &items, &noise, step)?;
    let table = report.table();
    print!("{table}");
    ctx.write(&mut manifest, "audit.txt", &table)?;
    manifest.write(&ctx.out)?;
    let worst = report.worst();
    println!("worst relative error {worst:.3e}");
    if worst > AUDIT_TOLERANCE || !worst.is_finite() {
        return Err(CliError::GradientMismatch(worst));
    }
    Ok(())
}

fn read_sketch(path: &Path) -> CliResult<VectorSketch> {
    let text = fs::read_to_string(path).map_err(with_path(path))?;
    let line = text.trim();
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| Error::MalformedRecord(format!("{}: invalid JSON: {e}", path.display())))?;
    let sketch = if value.get("steps").is_some() {
        VectorSketch::from_steps_json(&value)?
    } else {
        parse_quickdraw_line(line)?.sketch
    };
    Ok(sketch)
}

fn render(ctx: &Context, input: &Path, pgm: bool) -> CliResult {
    let mut manifest = ctx.manifest("render", json!({ "pgm": pgm })).inputs(&[input.to_path_buf()]);
    let sketch = read_sketch(input)?;
    sketch.validate()?;
    let name = stem(input);
    ctx.write(&mut manifest, &format!("{name}.svg"), render_svg(&sketch))?;
    if pgm {
        let side = ctx.model_config()?.side;
        ctx.write(&mut manifest, &format!("{name}.pgm"), rasterize(&sketch, side).to_pgm_bytes())?;
    }
    manifest.write(&ctx.out)?;
    Ok(())
}

fn params(ctx: &Context) -> CliResult {
    let cfg = ctx.model_config()?;
    let mut manifest = ctx.manifest("params", json!({ "model": cfg }));
    let enc = EncoderParams::zeros(&cfg.encoder);
    let count = count_parameters(&enc);
    let mut out = String::new();
    for (name, shape, n) in &count.entries {
        out += &format!("{name:<40} {:<14} {n:>10}\n", format!("{shape:?}"));
    }
    out += &format!("total {}\n", count.total);
    let mut joint = cfg.encoder.clone();
    joint.embed_mode = match cfg.encoder.embed_mode {
        EmbedMode::Factorized => EmbedMode::Joint,
        EmbedMode::Joint => EmbedMode::Factorized,
    };
    out += &format!("total with {:?} embedding: {}\n", joint.embed_mode, parameter_count_closed_form(&joint));
    let model = Model::zeros(cfg)?;
    let decoder: usize = model.params.tensors().iter().filter(|(n, _)| n.starts_with("decoder.")).map(|(_, v)| v.len()).sum();
    out += &format!("decoder total {decoder}\n");
    out += &format!("model total {}\n", model.params.total());
    print!("{out}");
    ctx.write(&mut manifest, "params.txt", &out)?;
    manifest.write(&ctx.out)?;
    Ok(())
}
