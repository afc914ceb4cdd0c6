mod dataset;
mod manifest;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ssrno::art::reference::beam_irradiance;
use ssrno::art::{build_prior_cube, compose_beam_irradiance, SpectrumTable, TransmittanceFactor, TransmittanceKind};
use ssrno::cube::{linspace, parse_grid};
use ssrno::io::{checkpoint_dtype, decode_checkpoint, read_hsi, read_msi, write_checkpoint, write_hsi};
use ssrno::operator::OperatorConfig;
use ssrno::pipeline::{evaluate, evaluate_scenes, stage1_upsample, synth_dataset, train, Model, TrainConfig};
use ssrno::srf::{discretize_srf, find_sensor, load_srf_database, synthetic_sensor_database, tabulated_srf, SrfMatrix};
use ssrno::{Dtype, Error, MsiImage};

use manifest::{manifest_path, Manifest};

#[derive(Parser)]
#[command(name = "ssrno", version, about = "Spectral super-resolution from multispectral images")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Common {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Storage and compute precision: f32 or f64.
    #[arg(long, global = true)]
    precision: Option<Dtype>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Beam-irradiance prior from a top-of-atmosphere spectrum and transmittances.
    Prior(PriorArgs),
    /// Guided projection of a multispectral image onto a band grid.
    Gmp(GmpArgs),
    /// Synthetic paired dataset.
    Synth(SynthArgs),
    /// Train the neural operator on a dataset directory.
    Train(TrainArgs),
    /// Full three-stage reconstruction of one multispectral image.
    Infer(InferArgs),
    /// Metrics of a reconstruction against ground truth.
    Eval(EvalArgs),
    /// Error maps and spectra as PNG and CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct PriorArgs {
    /// Top-of-atmosphere spectrum CSV (`wavelength_nm,value`).
    #[arg(long)]
    e_on: PathBuf,
    /// Transmittance table as KIND=CSV (ozone, no2, mixed_gas, water_vapor, aerosol).
    #[arg(long = "factor")]
    factors: Vec<String>,
    /// Analytic Rayleigh transmittance at this airmass.
    #[arg(long)]
    rayleigh: Option<f64>,
    /// Output grid as start:stop:count in nm.
    #[arg(long)]
    grid: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SensorArgs {
    /// SRF database CSV (or a directory of them).
    #[arg(long)]
    srf: PathBuf,
    /// Sensor name; defaults to the image's SRF name or the only sensor in the file.
    #[arg(long)]
    sensor: Option<String>,
    /// Band grid start:stop:count. `infer` defaults to the training grid; otherwise the SRF
    /// samples are used verbatim as the matrix.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct GmpArgs {
    #[arg(long)]
    msi: PathBuf,
    #[command(flatten)]
    sensor: SensorArgs,
    /// Prior spectrum CSV, broadcast to every pixel.
    #[arg(long, conflicts_with = "zero_prior", required_unless_present = "zero_prior")]
    prior: Option<PathBuf>,
    /// Use the zero prior (minimum-norm solution).
    #[arg(long)]
    zero_prior: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    scenes: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 31)]
    bands: usize,
    /// SRF database to draw sensors from; a synthetic one is generated otherwise.
    #[arg(long)]
    srf: Option<PathBuf>,
    /// Sensors in the generated database.
    #[arg(long, default_value_t = 28)]
    sensors: usize,
    /// Bands per generated sensor.
    #[arg(long, default_value_t = 4)]
    m_bands: usize,
    /// Beam-irradiance CSV; the built-in reference beam otherwise.
    #[arg(long)]
    art: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// Trailing scenes held out for the validation loss.
    #[arg(long, default_value_t = 0)]
    val: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 32)]
    patch: usize,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_sam: f64,
    /// Degraded-domain penalty weight, used with --no-refinement.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    no_art_prior: bool,
    #[arg(long)]
    no_refinement: bool,
    #[arg(long, default_value_t = 16)]
    modes: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    t_contract: usize,
    #[arg(long, default_value_t = 4)]
    t_transform: usize,
    /// Beam-irradiance CSV; defaults to the dataset's beam.csv.
    #[arg(long)]
    art: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    msi: PathBuf,
    #[command(flatten)]
    sensor: SensorArgs,
    /// Beam-irradiance CSV used as the stage-1 prior.
    #[arg(long, conflicts_with = "zero_prior")]
    art: Option<PathBuf>,
    #[arg(long)]
    zero_prior: bool,
    #[arg(long)]
    no_refinement: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Also write the metrics to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Pixel as ROW,COL whose spectra go to spectra.csv; defaults to the centre.
    #[arg(long = "pixel", value_parser = parse_pixel)]
    pixels: Vec<(usize, usize)>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_pixel(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or_else(|| format!("`{s}` is not ROW,COL"))?;
    Ok((r.trim().parse().map_err(|e| format!("{e}"))?, c.trim().parse().map_err(|e| format!("{e}"))?))
}

fn start_manifest(command: &str, common: &Common, precision: Dtype) -> Manifest {
    let mut m = Manifest::new(command);
    m.set("seed", common.seed).set("threads", rayon::current_num_threads()).set("precision", precision);
    m
}

fn finish(manifest: &mut Manifest, output: &Path) -> Result<()> {
    let path = manifest_path(output);
    manifest.write(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_srf(args: &SensorArgs, msi: &MsiImage, fallback_grid: Option<&[f64]>) -> Result<SrfMatrix> {
    let db = load_srf_database(&args.srf)?;
    let sensor = match &args.sensor {
        Some(name) => find_sensor(&db, name)?,
        None => match find_sensor(&db, msi.srf_name()) {
            Ok(s) => s,
            Err(_) if db.len() == 1 => &db[0],
            Err(e) => return Err(e.into()),
        },
    };
    Ok(match (&args.grid, fallback_grid) {
        (Some(spec), _) => discretize_srf(sensor, &parse_grid(spec)?)?,
        (None, Some(grid)) => discretize_srf(sensor, grid)?,
        (None, None) => tabulated_srf(sensor)?,
    })
}

fn cmd_prior(a: &PriorArgs, common: &Common) -> Result<()> {
    let grid = parse_grid(&a.grid)?;
    let e_on = SpectrumTable::load(&a.e_on).with_context(|| format!("reading {}", a.e_on.display()))?;
    let mut factors = Vec::new();
    for f in &a.factors {
        let (kind, path) =
            f.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("factor `{f}` is not KIND=CSV")))?;
        factors.push(TransmittanceFactor::table(kind.parse::<TransmittanceKind>()?, SpectrumTable::load(path)?));
    }
    if let Some(airmass) = a.rayleigh {
        factors.push(TransmittanceFactor::rayleigh(airmass));
    }
    let beam = compose_beam_irradiance(&e_on, &factors, &grid)?;
    write_text(&a.out, &beam.to_csv())?;
    let mut m = start_manifest("prior", common, common.precision.unwrap_or(Dtype::F64));
    m.path("input.e_on", &a.e_on)
        .set("factors", a.factors.join(";"))
        .set("rayleigh_airmass", a.rayleigh.map_or("none".into(), |v| v.to_string()))
        .set("grid", &a.grid)
        .set("rows", grid.len())
        .path("output", &a.out);
    finish(&mut m, &a.out)
}

fn cmd_gmp(a: &GmpArgs, common: &Common) -> Result<()> {
    let dtype = common.precision.unwrap_or(Dtype::F64);
    let x = read_msi(&a.msi)?;
    let s = load_srf(&a.sensor, &x, None)?;
    let z = match &a.prior {
        Some(p) => Some(build_prior_cube(&SpectrumTable::load(p)?, s.grid(), x.n_pixels())?),
        None => None,
    };
    let r = stage1_upsample(&x, &s, z.as_ref())?;
    write_hsi(&r.y_star, &a.out, dtype)?;
    let mut m = start_manifest("gmp", common, dtype);
    m.path("input.msi", &a.msi).path("input.srf", &a.sensor.srf).set("sensor", s.name());
    match &a.prior {
        Some(p) => m.path("input.prior", p),
        None => m.set("prior", "zero"),
    };
    m.set("bands", s.c_bands())
        .set("pixels", x.n_pixels())
        .set("fallback_count", r.fallback_count)
        .set("feasibility_residual", format!("{:e}", r.feasibility_residual))
        .path("output", &a.out);
    finish(&mut m, &a.out)
}

fn cmd_synth(a: &SynthArgs, common: &Common) -> Result<()> {
    let dtype = common.precision.unwrap_or(Dtype::F64);
    let db = match &a.srf {
        Some(p) => load_srf_database(p)?,
        None => synthetic_sensor_database(common.seed, a.sensors, a.m_bands),
    };
    let beam = match &a.art {
        Some(p) => SpectrumTable::load(p)?,
        None => beam_irradiance(&linspace(300.0, 2600.0, 461))?,
    };
    let scenes = synth_dataset(common.seed, a.scenes, a.size, a.bands, &db, &beam)?;
    let written = dataset::write_dataset(&a.out, &scenes, &beam, dtype)?;
    let mut m = start_manifest("synth", common, dtype);
    m.set("scenes", a.scenes).set("size", a.size).set("bands", a.bands).set("sensors_in_database", db.len());
    if let Some(p) = &a.srf {
        m.path("input.srf", p);
    }
    if let Some(p) = &a.art {
        m.path("input.art", p);
    }
    m.set("files", written.len()).path("output", &a.out);
    finish(&mut m, &a.out)
}

fn cmd_train(a: &TrainArgs, common: &Common) -> Result<()> {
    let precision = common.precision.unwrap_or(Dtype::F64);
    let scenes = dataset::read_dataset(&a.data)?;
    if a.val >= scenes.len() {
        bail!(Error::InvalidConfig(format!("--val {} leaves no training scenes out of {}", a.val, scenes.len())));
    }
    let beam = match &a.art {
        Some(p) => SpectrumTable::load(p)?,
        None => dataset::read_beam(&a.data)?,
    };
    let config = TrainConfig {
        lambda_sam: a.lambda_sam,
        ablation_alpha: a.alpha,
        use_art_prior: !a.no_art_prior,
        use_refinement: !a.no_refinement,
        learning_rate: a.lr,
        epochs: a.epochs,
        batch: a.batch,
        patch: a.patch,
        stride: a.stride,
        seed: common.seed,
        precision,
        operator: OperatorConfig {
            d_modes: a.modes,
            hidden: a.hidden,
            t_contract: a.t_contract,
            t_transform: a.t_transform,
            seed: common.seed,
            ..Default::default()
        },
    };
    let (tr, val) = scenes.split_at(scenes.len() - a.val);
    let outcome = train(&config, tr, val, &beam)?;
    let grid = tr[0].y.grid().iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
    let extra = vec![
        ("use_art_prior".to_string(), config.use_art_prior.to_string()),
        ("use_refinement".to_string(), config.use_refinement.to_string()),
        ("grid".to_string(), grid),
    ];
    match &outcome.model {
        Model::F32(p) => write_checkpoint(p, &extra, &a.out)?,
        Model::F64(p) => write_checkpoint(p, &extra, &a.out)?,
    }
    let mut curve = String::from("epoch,train_loss,val_loss\n");
    for e in &outcome.curve {
        curve.push_str(&format!("{},{},{}\n", e.epoch, e.train, e.val.map_or(String::new(), |v| v.to_string())));
    }
    let mut curve_path = a.out.clone().into_os_string();
    curve_path.push(".loss.csv");
    let curve_path = PathBuf::from(curve_path);
    write_text(&curve_path, &curve)?;

    let mut m = start_manifest("train", common, precision);
    m.path("input.data", &a.data)
        .set("train_scenes", tr.len())
        .set("val_scenes", val.len())
        .set("epochs", config.epochs)
        .set("batch", config.batch)
        .set("patch", config.patch)
        .set("stride", config.stride())
        .set("learning_rate", config.learning_rate)
        .set("lambda_sam", config.lambda_sam)
        .set("ablation_alpha", config.ablation_alpha)
        .set("use_art_prior", config.use_art_prior)
        .set("use_refinement", config.use_refinement)
        .set("d_modes", config.operator.d_modes)
        .set("hidden", config.operator.hidden)
        .set("t_contract", config.operator.t_contract)
        .set("t_transform", config.operator.t_transform)
        .set("parameters", outcome.model.num_parameters());
    if let Some(last) = outcome.curve.last() {
        m.set("final_train_loss", last.train);
        if let Some(v) = last.val {
            m.set("final_val_loss", v);
        }
    }
    if !val.is_empty() {
        let prior = config.use_art_prior.then_some(&beam);
        m.metrics(&evaluate_scenes(Some(&outcome.model), val, prior, config.use_refinement)?);
    }
    m.path("output", &a.out).path("output.loss_curve", &curve_path);
    finish(&mut m, &a.out)
}

fn load_model(path: &Path, precision: Option<Dtype>) -> Result<(Model, Vec<(String, String)>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match precision.unwrap_or(checkpoint_dtype(&bytes)?) {
        Dtype::F32 => {
            let (p, extra) = decode_checkpoint::<f32>(&bytes)?;
            (Model::F32(p), extra)
        }
        Dtype::F64 => {
            let (p, extra) = decode_checkpoint::<f64>(&bytes)?;
            (Model::F64(p), extra)
        }
    })
}

fn meta<'a>(extra: &'a [(String, String)], key: &str) -> Option<&'a str> {
    extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn cmd_infer(a: &InferArgs, common: &Common) -> Result<()> {
    let (model, extra) = load_model(&a.checkpoint, common.precision)?;
    let x = read_msi(&a.msi)?;
    let trained_grid: Option<Vec<f64>> = meta(&extra, "grid")
        .map(|g| g.split(',').map(str::parse).collect::<std::result::Result<_, _>>())
        .transpose()
        .map_err(|e| Error::Format(format!("checkpoint grid: {e}")))?;
    let s = load_srf(&a.sensor, &x, trained_grid.as_deref())?;
    let prior = match (&a.art, a.zero_prior) {
        (Some(p), _) => Some(SpectrumTable::load(p)?),
        (None, true) => None,
        (None, false) if meta(&extra, "use_art_prior") == Some("false") => None,
        (None, false) => {
            bail!(Error::InvalidConfig("model was trained with the beam prior: pass --art or --zero-prior".into()))
        }
    };
    let z = prior.as_ref().map(|e| build_prior_cube(e, s.grid(), x.n_pixels())).transpose()?;
    let refine = !a.no_refinement;
    let r = match &model {
        Model::F32(p) => ssrno::pipeline::reconstruct(&x, &s, z.as_ref(), Some(p), refine)?,
        Model::F64(p) => ssrno::pipeline::reconstruct(&x, &s, z.as_ref(), Some(p), refine)?,
    };
    let dtype = model.dtype();
    write_hsi(&r.output, &a.out, dtype)?;
    let mut m = start_manifest("infer", common, dtype);
    m.path("input.checkpoint", &a.checkpoint)
        .path("input.msi", &a.msi)
        .path("input.srf", &a.sensor.srf)
        .set("sensor", s.name());
    match &a.art {
        Some(p) => m.path("input.art", p),
        None => m.set("prior", "zero"),
    };
    m.set("refinement", refine)
        .set("bands", s.c_bands())
        .set("fallback_count", r.fallback_count)
        .set("feasibility_residual", format!("{:e}", r.feasibility_residual))
        .path("output", &a.out);
    finish(&mut m, &a.out)
}

fn cmd_eval(a: &EvalArgs, common: &Common) -> Result<()> {
    let pred = read_hsi(&a.pred)?;
    let truth = read_hsi(&a.truth)?;
    let r = evaluate(&pred, &truth)?;
    let text = format!("mrae={}\npsnr={}\nsam={}\nssim={}\n", r.mrae, r.psnr, r.sam, r.ssim);
    print!("{text}");
    if let Some(out) = &a.out {
        write_text(out, &text)?;
        let mut m = start_manifest("eval", common, common.precision.unwrap_or(Dtype::F64));
        m.path("input.pred", &a.pred).path("input.truth", &a.truth).metrics(&r).path("output", out);
        finish(&mut m, out)?;
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs, common: &Common) -> Result<()> {
    let pred = read_hsi(&a.pred)?;
    let truth = read_hsi(&a.truth)?;
    let pixels = if a.pixels.is_empty() { vec![(truth.height() / 2, truth.width() / 2)] } else { a.pixels.clone() };
    let written = report::write_report(&pred, &truth, &pixels, &a.out)?;
    let mut m = start_manifest("report", common, common.precision.unwrap_or(Dtype::F64));
    m.path("input.pred", &a.pred)
        .path("input.truth", &a.truth)
        .set("pixels", pixels.iter().map(|(r, c)| format!("{r},{c}")).collect::<Vec<_>>().join(";"))
        .metrics(&evaluate(&pred, &truth)?)
        .set("files", written.len())
        .path("output", &a.out);
    finish(&mut m, &a.out)
}

/// Exit code per error class; 2 is left to argument parsing.
fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return if err.chain().any(|c| c.is::<std::io::Error>()) { 3 } else { 1 };
    };
    match e {
        Error::Io(_) => 3,
        Error::Format(_) | Error::Parse { .. } | Error::TruncatedPayload { .. } | Error::NegativeSensitivity { .. } => {
            4
        }
        Error::ShapeMismatch(_) | Error::GridMismatch(_) => 5,
        Error::OutOfRange(_)
        | Error::InvalidConfig(_)
        | Error::PatchTooLarge { .. }
        | Error::InvalidTransmittance { .. } => 6,
        Error::NotPositiveDefinite { .. }
        | Error::RankDeficient { .. }
        | Error::DegenerateBand { .. }
        | Error::FeasibilityViolation { .. }
        | Error::NoConvergence { .. }
        | Error::NonFiniteValue(_)
        | Error::EmptySamples
        | Error::EmptySpectrum => 7,
        Error::UnknownSensor(_) => 8,
        Error::NonFiniteLoss { .. } => 9,
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            bail!(Error::InvalidConfig("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    let c = &cli.common;
    match &cli.command {
        Command::Prior(a) => cmd_prior(a, c),
        Command::Gmp(a) => cmd_gmp(a, c),
        Command::Synth(a) => cmd_synth(a, c),
        Command::Train(a) => cmd_train(a, c),
        Command::Infer(a) => cmd_infer(a, c),
        Command::Eval(a) => cmd_eval(a, c),
        Command::Report(a) => cmd_report(a, c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixels_parse() {
        assert_eq!(parse_pixel("3, 4"), Ok((3, 4)));
        assert!(parse_pixel("3").is_err());
    }

    #[test]
    fn error_classes_have_distinct_codes() {
        let codes = [
            exit_code(&Error::Format("x".into()).into()),
            exit_code(&Error::GridMismatch("x".into()).into()),
            exit_code(&Error::OutOfRange("x".into()).into()),
            exit_code(&Error::RankDeficient { smallest: 0.0, largest: 1.0 }.into()),
            exit_code(&Error::UnknownSensor("x".into()).into()),
            exit_code(&Error::NonFiniteLoss { epoch: 0, step: 0, detail: String::new() }.into()),
            exit_code(&std::io::Error::other("x").into()),
        ];
        let mut sorted = codes.to_vec();
        sorted.dedup();
        assert_eq!(sorted.len(), codes.len());
        assert!(codes.iter().all(|c| *c != 0 && *c != 2));
        let wrapped = anyhow::Error::from(Error::UnknownSensor("x".into())).context("loading");
        assert_eq!(exit_code(&wrapped), 8);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
