//! `octdenoise` command-line tool.
//!
//! Every command reads an optional `key = value` config file, overlays the
//! command-line flags on top of it and writes the effective configuration to
//! `<out>/config.txt`, so each output directory documents how it was made.
//!
//! Exit codes: [`EXIT_OK`] on success, [`EXIT_RUNTIME`] when a command fails
//! while running, [`EXIT_USAGE`] for invalid invocations or configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use octdenoise::datasets::{
    corrupt, ingest_directory, load_image, make_synthetic, resize_to, save_image, CarveSpec, IngestOptions,
    LabeledDataset, Split,
};
use octdenoise::harness::{
    apply_method, image_seed, parse_methods, report_csv, run_bench, summary_table, BenchConfig, KeyValueConfig, Method,
    MethodParams,
};
use octdenoise::metrics::{accuracy, psnr};
use octdenoise::models::{Autoencoder, Checkpoint, Classifier};
use octdenoise::training::{evaluate_classifier, train_autoencoder, train_classifier, CsvLogWriter, EpochLog};
use octdenoise::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const CONFIG_ECHO: &str = "config.txt";
pub const CLASSIFIER_FILE: &str = "classifier.octd";
pub const CLASSIFIER_LOG: &str = "classifier_log.csv";
pub const AUTOENCODER_FILE: &str = "autoencoder.octd";
pub const AUTOENCODER_LOG: &str = "autoencoder_log.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const PER_IMAGE_FILE: &str = "per_image.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            // bad values in a config file are a usage problem, not a crash
            Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "octdenoise", version, about = "Denoising benchmark for retinal OCT images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic four-class dataset as `<out>/<split>/<CLASS>/<index>.png`.
    MakeSynthetic {
        #[command(flatten)]
        common: CommonArgs,
        /// Images generated per class.
        #[arg(long)]
        per_class: Option<usize>,
        /// Side length of the square images.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Stage 1: train the classifier on clean images.
    TrainClassifier {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Stage 2: train the denoising autoencoder against a frozen classifier.
    TrainAe {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Checkpoint written by `train-classifier`.
        #[arg(long, required = true)]
        classifier: PathBuf,
        /// Weight of the classification term.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Corrupt one image and denoise it with a single method.
    Denoise {
        #[command(flatten)]
        common: CommonArgs,
        /// Clean input image (PNG, PGM or JPEG).
        #[arg(long)]
        input: PathBuf,
        /// One of corrupted, tv, wavelet, ad, ae.
        #[arg(long, default_value = "tv")]
        method: String,
        /// Autoencoder checkpoint, required for method ae.
        #[arg(long)]
        ae: Option<PathBuf>,
        /// Test-set index whose noise seed is reused, matching `bench`.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Evaluate every requested method on the test split.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated subset of corrupted,tv,wavelet,ad,ae.
        #[arg(long)]
        methods: Option<String>,
        /// Frozen classifier used for the accuracy column.
        #[arg(long)]
        classifier: Option<PathBuf>,
        /// Autoencoder checkpoint, required for method ae.
        #[arg(long)]
        ae: Option<PathBuf>,
    },
}

/// Flags shared by every command.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Standard deviation of the corruption noise.
    #[arg(long)]
    pub sigma: Option<f64>,
}

/// Dataset selection: a folder tree, or the synthetic generator when absent.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset root laid out as `<split>/<CLASS>/*.png`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic images per class when no `--data` is given.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Image side length; folder datasets are resampled to it.
    #[arg(long)]
    pub size: Option<usize>,
    /// Generator seed of the synthetic dataset.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Stop after this many epochs without a new best validation loss.
    #[arg(long)]
    pub early_stop: Option<usize>,
}

const DEFAULT_PER_CLASS: usize = 150;
const DEFAULT_SIZE: usize = 32;
const DEFAULT_DATA_SEED: u64 = 42;

fn set_opt<T: ToString>(config: &mut KeyValueConfig, key: &str, value: &Option<T>) {
    if let Some(v) = value {
        config.set(key, v.to_string());
    }
}

fn set_path(config: &mut KeyValueConfig, key: &str, value: &Option<PathBuf>) {
    if let Some(p) = value {
        config.set(key, p.display().to_string());
    }
}

fn base_config(common: &CommonArgs) -> CliResult<KeyValueConfig> {
    let mut config = match &common.config {
        Some(path) => KeyValueConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => CliError::Usage(e.to_string()),
            other => other.into(),
        })?,
        None => KeyValueConfig::new(),
    };
    set_opt(&mut config, "seed", &common.seed);
    set_opt(&mut config, "sigma", &common.sigma);
    Ok(config)
}

fn apply_data_args(config: &mut KeyValueConfig, data: &DataArgs) {
    set_path(config, "data", &data.data);
    set_opt(config, "per_class", &data.per_class);
    set_opt(config, "size", &data.size);
    set_opt(config, "data_seed", &data.data_seed);
}

fn apply_train_args(config: &mut KeyValueConfig, train: &TrainArgs) {
    set_opt(config, "epochs", &train.epochs);
    set_opt(config, "batch_size", &train.batch_size);
    set_opt(config, "lr", &train.lr);
    set_opt(config, "early_stop", &train.early_stop);
}

fn create_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| {
        CliError::Runtime(Error::Io {
            path: out.to_path_buf(),
            source: e,
        })
    })
}

/// Creates the output directory and echoes the effective configuration into it.
fn prepare_out(out: &Path, config: &KeyValueConfig) -> CliResult<()> {
    create_out(out)?;
    config.save(out.join(CONFIG_ECHO))?;
    Ok(())
}

fn seed_of(config: &KeyValueConfig) -> CliResult<u64> {
    Ok(config.get_or("seed", 0)?)
}

fn sigma_of(config: &KeyValueConfig) -> CliResult<f64> {
    let sigma = config.get_or("sigma", 0.1)?;
    if !(sigma >= 0.0 && f64::is_finite(sigma)) {
        return Err(CliError::Usage(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(sigma)
}

/// Loads the dataset described by the `data`, `per_class`, `size`,
/// `data_seed`, `carve_val` and `carve_test` keys.
pub fn load_dataset(config: &KeyValueConfig) -> CliResult<LabeledDataset> {
    let size: Option<usize> = config.get("size")?;
    if size == Some(0) {
        return Err(CliError::Usage("size must be positive".into()));
    }
    match config.raw("data") {
        Some(root) => {
            let carve = match (config.get::<usize>("carve_val")?, config.get::<usize>("carve_test")?) {
                (None, None) => None,
                (val, test) => Some(CarveSpec {
                    val: val.unwrap_or(0),
                    test: test.unwrap_or(0),
                    seed: config.get_or("data_seed", DEFAULT_DATA_SEED)?,
                }),
            };
            let options = IngestOptions { size, carve };
            Ok(ingest_directory(root, &options)?)
        }
        None => {
            let per_class = config.get_or("per_class", DEFAULT_PER_CLASS)?;
            if per_class == 0 {
                return Err(CliError::Usage("per_class must be positive".into()));
            }
            let seed = config.get_or("data_seed", DEFAULT_DATA_SEED)?;
            Ok(make_synthetic(per_class, size.unwrap_or(DEFAULT_SIZE), seed))
        }
    }
}

fn load_classifier(path: &Path) -> CliResult<Classifier<f32>> {
    let mut model = Classifier::from_checkpoint(&Checkpoint::load(path)?)?;
    model.freeze();
    Ok(model)
}

fn load_autoencoder(path: &Path) -> CliResult<Autoencoder<f32>> {
    Ok(Autoencoder::from_checkpoint(&Checkpoint::load(path)?)?)
}

fn log_writer(path: &Path) -> CliResult<CsvLogWriter<fs::File>> {
    let io = |e| {
        CliError::Runtime(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    };
    CsvLogWriter::new(fs::File::create(path).map_err(io)?).map_err(io)
}

/// Streams epoch records to the CSV log; the first write error is kept.
fn epoch_observer<'a>(
    writer: &'a mut CsvLogWriter<fs::File>,
    failure: &'a mut Option<std::io::Error>,
) -> impl FnMut(&EpochLog) + 'a {
    move |log: &EpochLog| {
        info!(
            "epoch {:>3}  train {:.5}  val {:.5}  lr {:.1e}  {:.1}s",
            log.epoch, log.train_loss, log.val_loss, log.lr, log.seconds
        );
        if failure.is_none() {
            if let Err(e) = writer.write(log) {
                *failure = Some(e);
            }
        }
    }
}

fn check_log(path: &Path, failure: Option<std::io::Error>) -> CliResult<()> {
    match failure {
        Some(e) => Err(CliError::Runtime(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })),
        None => Ok(()),
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::MakeSynthetic {
            common,
            per_class,
            size,
        } => {
            let mut config = base_config(&common)?;
            set_opt(&mut config, "per_class", &per_class);
            set_opt(&mut config, "size", &size);
            cmd_make_synthetic(&common.out, &config)
        }
        Command::TrainClassifier { common, data, train } => {
            let mut config = base_config(&common)?;
            apply_data_args(&mut config, &data);
            apply_train_args(&mut config, &train);
            cmd_train_classifier(&common.out, &config)
        }
        Command::TrainAe {
            common,
            data,
            train,
            classifier,
            alpha,
        } => {
            let mut config = base_config(&common)?;
            apply_data_args(&mut config, &data);
            apply_train_args(&mut config, &train);
            set_opt(&mut config, "alpha", &alpha);
            config.set("classifier", classifier.display());
            cmd_train_ae(&common.out, &config)
        }
        Command::Denoise {
            common,
            input,
            method,
            ae,
            index,
        } => {
            let mut config = base_config(&common)?;
            config.set("input", input.display());
            config.set("method", method);
            set_path(&mut config, "ae", &ae);
            config.set("index", index);
            cmd_denoise(&common.out, &config)
        }
        Command::Bench {
            common,
            data,
            methods,
            classifier,
            ae,
        } => {
            let mut config = base_config(&common)?;
            apply_data_args(&mut config, &data);
            set_opt(&mut config, "methods", &methods);
            set_path(&mut config, "classifier", &classifier);
            set_path(&mut config, "ae", &ae);
            cmd_bench(&common.out, &config)
        }
    }
}

pub fn cmd_make_synthetic(out: &Path, config: &KeyValueConfig) -> CliResult<()> {
    let per_class = config.get_or("per_class", DEFAULT_PER_CLASS)?;
    let size = config.get_or("size", DEFAULT_SIZE)?;
    if per_class == 0 || size == 0 {
        return Err(CliError::Usage("per_class and size must be positive".into()));
    }
    // the generator seed is the command's --seed
    let seed = seed_of(config)?;
    prepare_out(out, config)?;
    let dataset = make_synthetic(per_class, size, seed);
    let mut written = 0;
    for split in Split::ALL {
        let mut counters = [0usize; 4];
        for sample in dataset.split(split) {
            let dir = out.join(split.dir_name()).join(sample.label.dir_name());
            create_out(&dir)?;
            let index = &mut counters[sample.label.index()];
            save_image(&sample.image, dir.join(format!("{:05}.png", *index)))?;
            *index += 1;
            written += 1;
        }
    }
    let (train, val, test) = dataset.sizes();
    println!(
        "wrote {written} images to {} (train {train}, val {val}, test {test})",
        out.display()
    );
    Ok(())
}

pub fn cmd_train_classifier(out: &Path, config: &KeyValueConfig) -> CliResult<()> {
    let train_config = config.train_config()?;
    let model_config = config.classifier_config()?;
    let dataset = load_dataset(config)?;
    if dataset.image_size() != Some(model_config.input_size) {
        return Err(CliError::Usage(format!(
            "dataset images are not {0}x{0}; pass --size {0} or set `size`",
            model_config.input_size
        )));
    }
    prepare_out(out, config)?;
    let model = Classifier::new(model_config, train_config.seed)?;
    let log_path = out.join(CLASSIFIER_LOG);
    let mut writer = log_writer(&log_path)?;
    let mut failure = None;
    let run = train_classifier(
        &dataset,
        model,
        &train_config,
        &mut epoch_observer(&mut writer, &mut failure),
    )?;
    check_log(&log_path, failure)?;
    run.model.to_checkpoint(run.meta()).save(out.join(CLASSIFIER_FILE))?;

    let score = |samples: &[octdenoise::datasets::LabeledSample]| -> CliResult<f64> {
        let predicted = evaluate_classifier(&run.model, samples, train_config.batch_size)?;
        let truth: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
        Ok(accuracy(&predicted, &truth)?)
    };
    println!(
        "best epoch {} (val loss {:.5}); val accuracy {:.2}%, test accuracy {:.2}%",
        run.best_epoch,
        run.best_val_loss,
        score(&dataset.val)?,
        score(&dataset.test)?
    );
    Ok(())
}

pub fn cmd_train_ae(out: &Path, config: &KeyValueConfig) -> CliResult<()> {
    let train_config = config.train_config()?;
    let classifier_path = config
        .raw("classifier")
        .ok_or_else(|| CliError::Usage("train-ae requires --classifier".into()))?;
    let classifier = load_classifier(Path::new(classifier_path))?;
    let mut config = config.clone();
    if !config.contains("size") {
        config.set("size", classifier.config().input_size);
    }
    let model_config = config.autoencoder_config()?;
    let dataset = load_dataset(&config)?;
    prepare_out(out, &config)?;
    let model = Autoencoder::new(model_config, train_config.seed)?;
    let log_path = out.join(AUTOENCODER_LOG);
    let mut writer = log_writer(&log_path)?;
    let mut failure = None;
    let run = train_autoencoder(
        &dataset,
        model,
        &classifier,
        &train_config,
        &mut epoch_observer(&mut writer, &mut failure),
    )?;
    check_log(&log_path, failure)?;
    run.model.to_checkpoint(run.meta()).save(out.join(AUTOENCODER_FILE))?;
    let best = &run.logs[run.best_epoch - 1];
    println!(
        "best epoch {}: val loss {:.5} (reconstruction {:.5}, cross entropy {:.5})",
        run.best_epoch, best.val_loss, best.val_lr_term, best.val_lc_term
    );
    Ok(())
}

pub fn cmd_denoise(out: &Path, config: &KeyValueConfig) -> CliResult<()> {
    let input = PathBuf::from(
        config
            .raw("input")
            .ok_or_else(|| CliError::Usage("denoise requires --input".into()))?,
    );
    let method: Method = config.raw("method").unwrap_or("tv").parse()?;
    let index: usize = config.get_or("index", 0)?;
    let sigma = sigma_of(config)?;
    let seed = seed_of(config)?;
    let params = MethodParams {
        tv: config.tv_params()?,
        wavelet: config.wavelet_params()?,
        diffusion: config.diffusion_params()?,
    };
    let autoencoder = match (method, config.raw("ae")) {
        (Method::Ae, None) => return Err(CliError::Usage("method ae requires --ae".into())),
        (Method::Ae, Some(path)) => Some(load_autoencoder(Path::new(path))?),
        _ => None,
    };
    let mut clean = load_image(&input)?;
    if let Some(ae) = &autoencoder {
        clean = resize_to(&clean, ae.config().input_size);
    }
    prepare_out(out, config)?;
    let noisy = corrupt(&clean, sigma, image_seed(seed, index))?;
    let start = Instant::now();
    let denoised = apply_method(method, &noisy, &params, autoencoder.as_ref())?;
    let millis = start.elapsed().as_secs_f64() * 1e3;

    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    save_image(&clean, out.join(format!("{stem}.orig.png")))?;
    save_image(&noisy, out.join(format!("{stem}.noisy.png")))?;
    save_image(&denoised, out.join(format!("{stem}.{}.png", method.name())))?;
    println!("corrupted PSNR {:.4} dB", psnr(&clean, &noisy)?);
    println!("{method} PSNR {:.4} dB ({millis:.3} ms)", psnr(&clean, &denoised)?);
    Ok(())
}

pub fn cmd_bench(out: &Path, config: &KeyValueConfig) -> CliResult<()> {
    let classifier = config
        .raw("classifier")
        .map(|p| load_classifier(Path::new(p)))
        .transpose()?;
    let autoencoder = config.raw("ae").map(|p| load_autoencoder(Path::new(p))).transpose()?;
    let methods = match config.raw("methods") {
        Some(list) => parse_methods(list)?,
        None => {
            let mut all = Method::ALL.to_vec();
            if autoencoder.is_none() {
                all.retain(|&m| m != Method::Ae);
            }
            all
        }
    };
    if methods.contains(&Method::Ae) && (autoencoder.is_none() || classifier.is_none()) {
        return Err(CliError::Usage("method ae requires both --classifier and --ae".into()));
    }
    let bench = BenchConfig {
        sigma: sigma_of(config)?,
        methods,
        seed: seed_of(config)?,
        params: MethodParams {
            tv: config.tv_params()?,
            wavelet: config.wavelet_params()?,
            diffusion: config.diffusion_params()?,
        },
    };
    let mut config = config.clone();
    let model_size = classifier
        .as_ref()
        .map(|c| c.config().input_size)
        .or(autoencoder.as_ref().map(|a| a.config().input_size));
    if let (false, Some(size)) = (config.contains("size"), model_size) {
        config.set("size", size);
    }
    let dataset = load_dataset(&config)?;
    prepare_out(out, &config)?;
    let result = run_bench(&dataset.test, &bench, classifier.as_ref(), autoencoder.as_ref())?;

    let write = |name: &str, text: String| -> CliResult<()> {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| CliError::Runtime(Error::Io { path, source: e }))
    };
    write(REPORT_FILE, report_csv(&result.reports))?;
    let mut per_image = String::from("index,method,psnr,predicted,ms\n");
    for r in &result.per_image {
        let predicted = r.predicted.map_or(String::new(), |p| p.to_string());
        per_image.push_str(&format!(
            "{},{},{:.6},{predicted},{:.3}\n",
            r.index, r.method, r.psnr, r.millis
        ));
    }
    write(PER_IMAGE_FILE, per_image)?;
    print!("{}", summary_table(&result.reports));
    Ok(())
}
