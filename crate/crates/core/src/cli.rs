//! Command-line front end. `run` returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::FileConfig;
use crate::corpus::{load_split, split_stats, to_jsonl, WicInstance};
use crate::error::{Error, Result};
use crate::eval::{
    calibrate_layer, check_compatible, evaluate_layers, layer_sweep, split_similarities,
    LabeledStore, ShareStats, SweepOptions, ThresholdGrid,
};
use crate::extract::extract_toy_store;
use crate::geometry::StandardizeMode;
use crate::report::{
    format_table, parse_report_csv, render_svg, report_csv, CalibrationFile, Series,
};
use crate::store::{read_store, write_store, RepStore};
use crate::toy_model::{ToyConfig, ToyModel};
use crate::transforms::{ProbeSetting, PromptTemplate, SettingKind};

#[derive(Debug, Parser)]
#[command(
    name = "lexprobe",
    version,
    about = "Layer-wise Word-in-Context probing of transformer hidden states"
)]
pub struct Cli {
    /// TOML run manifest; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a split, print its statistics and write a JSONL dump.
    Prepare(PrepareArgs),
    /// Extract pooled per-layer vectors with the seeded toy model.
    ExtractToy(ExtractArgs),
    /// Calibrate on dev, evaluate on test, write JSON, CSV and SVG.
    Sweep(SweepArgs),
    /// Calibrate per-layer thresholds on a dev store.
    Calibrate(CalibrateArgs),
    /// Evaluate a test store with previously calibrated thresholds.
    Evaluate(EvaluateArgs),
    /// Render report CSVs into one chart.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SettingArg {
    Base,
    Repeat,
    RepeatPrev,
    Prompt,
}

impl From<SettingArg> for SettingKind {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Base => SettingKind::Base,
            SettingArg::Repeat => SettingKind::Repeat,
            SettingArg::RepeatPrev => SettingKind::RepeatPrev,
            SettingArg::Prompt => SettingKind::Prompt,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShareArg {
    Split,
    Dev,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory holding `<split>/<split>.data.txt` and `.gold.txt`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    split: String,
    /// Output directory for `<split>.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    split: String,
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long)]
    prompt_template: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    max_seq: Option<usize>,
    /// Output `.lexrep` path (default `<out dir>/<split>.<setting>.lexrep`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Debug, Args)]
struct NormArgs {
    /// Z-score vectors per layer before the cosine (default).
    #[arg(long, overrides_with = "no_standardize")]
    standardize: bool,
    #[arg(long, overrides_with = "standardize")]
    no_standardize: bool,
    /// Subtract the mean only instead of full z-scoring.
    #[arg(long)]
    center_only: bool,
    /// Pool for test-split standardization stats.
    #[arg(long, value_enum)]
    share_stats: Option<ShareArg>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    dev_store: Option<PathBuf>,
    #[arg(long)]
    test_store: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    norm: NormArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    dev_store: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    norm: NormArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    test_store: Option<PathBuf>,
    /// Needed only when the calibration shares dev stats.
    #[arg(long)]
    dev_store: Option<PathBuf>,
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report CSVs, one series each.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    /// Series labels, in CSV order (default: file stem).
    #[arg(long)]
    label: Vec<String>,
    #[arg(long, default_value = "Layer-wise accuracy")]
    title: String,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

struct Ctx {
    file: FileConfig,
}

impl Ctx {
    fn data_dir(&self, args: &DataArgs) -> Result<PathBuf> {
        args.data_dir
            .clone()
            .or_else(|| self.file.data_dir.clone())
            .ok_or_else(|| Error::Usage("--data-dir is required".into()))
    }

    fn out_dir(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone()
            .or_else(|| self.file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn grid(&self, g: &GridArgs) -> Result<ThresholdGrid> {
        let d = ThresholdGrid::default();
        let defaults = d.values();
        ThresholdGrid::new(
            g.grid_min.or(self.file.grid_min).unwrap_or(defaults[0]),
            g.grid_max
                .or(self.file.grid_max)
                .unwrap_or(defaults[defaults.len() - 1]),
            g.grid_step.or(self.file.grid_step).unwrap_or(0.05),
        )
    }

    fn sweep_options(&self, grid: &GridArgs, n: &NormArgs) -> Result<SweepOptions> {
        let standardize = if n.no_standardize {
            false
        } else if n.standardize {
            true
        } else {
            self.file.standardize.unwrap_or(true)
        };
        let mode = if n.center_only {
            StandardizeMode::CenterOnly
        } else {
            self.file.standardize_mode.unwrap_or_default()
        };
        let share_stats = match n.share_stats {
            Some(ShareArg::Split) => ShareStats::Split,
            Some(ShareArg::Dev) => ShareStats::Dev,
            None => self.file.share_stats.unwrap_or_default(),
        };
        Ok(SweepOptions {
            grid: self.grid(grid)?,
            standardize,
            mode,
            share_stats,
        })
    }

    fn store_path(flag: &Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| file.clone())
            .ok_or_else(|| Error::Usage(format!("--{name} is required")))
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_labeled(data_dir: &Path, store: &RepStore) -> Result<Vec<WicInstance>> {
    let (instances, has_gold) = load_split(data_dir, &store.meta().split)?;
    if !has_gold {
        return Err(Error::validation(format!(
            "split {:?} has no gold file; labels are required here",
            store.meta().split
        )));
    }
    Ok(instances)
}

fn prepare(ctx: &Ctx, args: &PrepareArgs, out: &mut dyn Write) -> Result<()> {
    let dir = ctx.data_dir(&args.data)?;
    let (instances, has_gold) = load_split(&dir, &args.split)?;
    if !has_gold {
        eprintln!(
            "warning: no gold file for split {:?}; instances loaded without labels",
            args.split
        );
    }
    let stats = split_stats(&instances);
    let dump = ctx.out_dir(&args.out).join(format!("{}.jsonl", args.split));
    write_file(&dump, to_jsonl(&instances).as_bytes())?;
    let _ = writeln!(
        out,
        "{} instances (noun {}, verb {}, true {}, false {})",
        stats.n_instances, stats.n_noun, stats.n_verb, stats.n_true, stats.n_false
    );
    let _ = writeln!(out, "wrote {}", dump.display());
    Ok(())
}

fn extract_toy(ctx: &Ctx, args: &ExtractArgs, out: &mut dyn Write) -> Result<()> {
    let f = &ctx.file;
    let dir = ctx.data_dir(&args.data)?;
    let kind = match (args.setting, &f.setting) {
        (Some(s), _) => s.into(),
        (None, Some(s)) => s.parse()?,
        (None, None) => SettingKind::Base,
    };
    let template = match args
        .prompt_template
        .clone()
        .or_else(|| f.prompt_template.clone())
    {
        Some(t) => PromptTemplate::new(t).map_err(|e| Error::Usage(e.to_string()))?,
        None => PromptTemplate::default(),
    };
    let setting = ProbeSetting {
        kind,
        prompt_template: template,
    };
    let defaults = ToyConfig::default();
    let config = ToyConfig {
        d_model: args.d_model.or(f.d_model).unwrap_or(defaults.d_model),
        n_layers: args.n_layers.or(f.n_layers).unwrap_or(defaults.n_layers),
        n_heads: args.n_heads.or(f.n_heads).unwrap_or(defaults.n_heads),
        max_seq: args.max_seq.or(f.max_seq).unwrap_or(defaults.max_seq),
        seed: args.seed.or(f.seed).unwrap_or(defaults.seed),
        ..defaults
    };
    let model = ToyModel::init(config)?;
    let (instances, _) = load_split(&dir, &args.split)?;
    let store = extract_toy_store(&model, &instances, &args.split, &setting)?;
    let path = args.out.clone().unwrap_or_else(|| {
        ctx.out_dir(&None)
            .join(format!("{}.{}.lexrep", args.split, kind))
    });
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_store(&store, &path)?;
    let _ = writeln!(
        out,
        "header [{}, 2, {}, {}]; pooling {}; wrote {}",
        store.n_instances(),
        store.layer_count(),
        store.dim(),
        store.meta().pooling,
        path.display()
    );
    Ok(())
}

fn calibration_file(
    store: &RepStore,
    options: &SweepOptions,
    layers: Vec<crate::eval::LayerCalibration>,
) -> CalibrationFile {
    CalibrationFile {
        model_name: store.meta().model_name.clone(),
        setting: store.meta().setting,
        standardized: options.standardize,
        standardize_mode: options.mode,
        share_stats: options.share_stats,
        layers,
    }
}

fn sweep(ctx: &Ctx, args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let dir = ctx.data_dir(&args.data)?;
    let dev = read_store(&Ctx::store_path(
        &args.dev_store,
        &ctx.file.dev_store,
        "dev-store",
    )?)?;
    let test = read_store(&Ctx::store_path(
        &args.test_store,
        &ctx.file.test_store,
        "test-store",
    )?)?;
    let options = ctx.sweep_options(&args.grid, &args.norm)?;
    let dev_instances = load_labeled(&dir, &dev)?;
    let test_instances = load_labeled(&dir, &test)?;
    let result = layer_sweep(
        &LabeledStore::new(&dev, &dev_instances)?,
        &LabeledStore::new(&test, &test_instances)?,
        &options,
    )?;

    let out_dir = ctx.out_dir(&args.out);
    let setting = result.report.setting;
    let tag = if options.standardize {
        setting.to_string()
    } else {
        format!("{setting}_raw")
    };
    let cal = calibration_file(&dev, &options, result.calibrations.clone());
    write_file(
        &out_dir.join(format!("{tag}.calibration.json")),
        cal.to_json().as_bytes(),
    )?;
    write_file(
        &out_dir.join(format!("{tag}.report.csv")),
        report_csv(&result.report.rows).as_bytes(),
    )?;
    let svg = render_svg(
        &[Series {
            label: tag.clone(),
            rows: result.report.rows.clone(),
        }],
        &format!("Layer-wise accuracy: {} ({tag})", dev.meta().model_name),
    );
    write_file(&out_dir.join(format!("{tag}.svg")), svg.as_bytes())?;
    let _ = write!(
        out,
        "{}",
        format_table(&result.report, Some(&result.calibrations))
    );
    let _ = writeln!(
        out,
        "wrote {}/{tag}.{{calibration.json,report.csv,svg}}",
        out_dir.display()
    );
    Ok(())
}

fn calibrate(ctx: &Ctx, args: &CalibrateArgs, out: &mut dyn Write) -> Result<()> {
    let dir = ctx.data_dir(&args.data)?;
    let dev = read_store(&Ctx::store_path(
        &args.dev_store,
        &ctx.file.dev_store,
        "dev-store",
    )?)?;
    let options = ctx.sweep_options(&args.grid, &args.norm)?;
    let instances = load_labeled(&dir, &dev)?;
    let labeled = LabeledStore::new(&dev, &instances)?;
    let layers = (0..dev.layer_count())
        .map(|layer| {
            let (sims, _) = split_similarities(&dev, &dev, layer, &options)?;
            calibrate_layer(layer, &sims, &labeled.gold, &options.grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let cal = calibration_file(&dev, &options, layers);
    let tag = if options.standardize {
        cal.setting.to_string()
    } else {
        format!("{}_raw", cal.setting)
    };
    let path = ctx
        .out_dir(&args.out)
        .join(format!("{tag}.calibration.json"));
    write_file(&path, cal.to_json().as_bytes())?;
    for c in &cal.layers {
        let _ = writeln!(
            out,
            "layer {:>3}  gamma {:.2}  dev {:.1}",
            c.layer, c.gamma, c.dev_accuracy
        );
    }
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(())
}

fn evaluate_cmd(ctx: &Ctx, args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let dir = ctx.data_dir(&args.data)?;
    let test = read_store(&Ctx::store_path(
        &args.test_store,
        &ctx.file.test_store,
        "test-store",
    )?)?;
    let text =
        fs::read_to_string(&args.calibration).map_err(|e| Error::io(&args.calibration, e))?;
    let cal = CalibrationFile::from_json(&text)?;
    if cal.setting != test.meta().setting {
        return Err(Error::validation(format!(
            "calibration is for setting {}, store is {}",
            cal.setting,
            test.meta().setting
        )));
    }
    let dev = args
        .dev_store
        .clone()
        .or_else(|| ctx.file.dev_store.clone())
        .map(|p| read_store(&p))
        .transpose()?;
    if let Some(dev) = &dev {
        check_compatible(dev, &test)?;
    }
    let options = SweepOptions {
        grid: ThresholdGrid::default(),
        standardize: cal.standardized,
        mode: cal.standardize_mode,
        share_stats: cal.share_stats,
    };
    let instances = load_labeled(&dir, &test)?;
    let labeled = LabeledStore::new(&test, &instances)?;
    let report = evaluate_layers(&labeled, dev.as_ref(), &cal.layers, &options)?;
    let tag = if cal.standardized {
        cal.setting.to_string()
    } else {
        format!("{}_raw", cal.setting)
    };
    let path = ctx.out_dir(&args.out).join(format!("{tag}.report.csv"));
    write_file(&path, report_csv(&report.rows).as_bytes())?;
    let _ = write!(out, "{}", format_table(&report, Some(&cal.layers)));
    let _ = writeln!(out, "wrote {}", path.display());
    Ok(())
}

fn report_cmd(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    if !args.label.is_empty() && args.label.len() != args.csv.len() {
        return Err(Error::Usage(format!(
            "{} labels given for {} CSV files",
            args.label.len(),
            args.csv.len()
        )));
    }
    let series = args
        .csv
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let label = args.label.get(i).cloned().unwrap_or_else(|| {
                path.file_stem()
                    .map(|s| s.to_string_lossy().trim_end_matches(".report").to_string())
                    .unwrap_or_default()
            });
            Ok(Series {
                label,
                rows: parse_report_csv(&text)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_file(&args.out, render_svg(&series, &args.title).as_bytes())?;
    for s in &series {
        if let Some(best) = s
            .rows
            .iter()
            .fold(None::<&crate::eval::ReportRow>, |b, r| match b {
                Some(b) if r.accuracy_all <= b.accuracy_all => Some(b),
                _ => Some(r),
            })
        {
            let _ = writeln!(
                out,
                "{}: best layer {} at {:.1}",
                s.label, best.layer, best.accuracy_all
            );
        }
    }
    let _ = writeln!(out, "wrote {}", args.out.display());
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx { file };
    match &cli.command {
        Command::Prepare(a) => prepare(&ctx, a, out),
        Command::ExtractToy(a) => extract_toy(&ctx, a, out),
        Command::Sweep(a) => sweep(&ctx, a, out),
        Command::Calibrate(a) => calibrate(&ctx, a, out),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a, out),
        Command::Report(a) => report_cmd(a, out),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 success, 1 usage, 2 data/format, 3 numerical/validation.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
