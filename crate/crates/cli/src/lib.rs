//! Command-line driver: one subcommand per pipeline stage plus `run-all`,
//! a synthetic pair generator and a noise-weight scan.
//!
//! Every subcommand reads the files written by the stage before it, so the
//! stages can be run one at a time and produce the same bytes as `run-all`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gcxgc_core::io::{
    load_grid, read_aoi, read_mask, save_grid, write_aoi, write_mask, GridEncoding, LuminancePolicy,
};
use gcxgc_core::metrics::SsimParams;
use gcxgc_core::pipeline::{
    self, AtStage, PipelineConfig, PipelineInputs, Stage, StageError, ALIGNED_IMAGE,
    ALIGNED_SIDECAR, PEAKS_REF, PEAKS_TARGET, QUANT_TABLE, REGISTRATION_REPORT, SCORES, TRANSFORM,
    WARPED_MASK,
};
use gcxgc_core::registration::scan_noise_weight;
use gcxgc_core::synthetic::{synthetic_pair, GroundTruthSpec, PairSpec};
use gcxgc_core::warp::GridGeometry;
use gcxgc_core::{
    AreaOfInterest, Connectivity, Error, Grid, KernelForm, Mode, PeakSet, RegistrationConfig,
    TemplateMask, Transform,
};

pub type CliResult<T> = std::result::Result<T, StageError>;

/// Default file names written by `synth`.
pub const SYNTH_REFERENCE: &str = "reference.png";
pub const SYNTH_TARGET: &str = "target.png";
pub const SYNTH_MASK: &str = "template.mask";
pub const SYNTH_AOI: &str = "area.aoi";
pub const SYNTH_TRUTH: &str = "truth.json";
pub const SYNTH_PEAKS_REF: &str = "truth_peaks_ref.csv";
pub const SYNTH_PEAKS_TARGET: &str = "truth_peaks_target.csv";
pub const W_SCAN: &str = "w_scan.json";

#[derive(Debug, Parser)]
#[command(
    name = "gcxgc",
    version,
    about = "Align GCxGC chromatograms and quantify template masks"
)]
pub struct Cli {
    /// Flat TOML document supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract peak centroids from the reference and/or target grid.
    Extract {
        #[command(flatten)]
        inputs: InputFlags,
        #[command(flatten)]
        extraction: ExtractFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Register the reference peaks onto the target peaks.
    Register {
        #[command(flatten)]
        peaks: PeakFiles,
        #[command(flatten)]
        registration: RegistrationFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Push the template mask through a fitted transform.
    WarpMask {
        #[arg(long, value_name = "FILE")]
        transform: Option<PathBuf>,
        #[command(flatten)]
        inputs: InputFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Resample the target grid onto the reference geometry.
    WarpImage {
        #[arg(long, value_name = "FILE")]
        transform: Option<PathBuf>,
        #[command(flatten)]
        inputs: InputFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// CC and SSIM of the aligned grid (and the unaligned target) against the reference.
    Score {
        #[arg(long, value_name = "FILE")]
        aligned: Option<PathBuf>,
        #[command(flatten)]
        inputs: InputFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Volumes and family percentages of the target under the warped mask.
    Quantify {
        #[arg(long, value_name = "FILE")]
        warped_mask: Option<PathBuf>,
        #[command(flatten)]
        inputs: InputFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Every stage in sequence.
    RunAll {
        #[command(flatten)]
        inputs: InputFlags,
        #[command(flatten)]
        extraction: ExtractFlags,
        #[command(flatten)]
        registration: RegistrationFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Write a seeded synthetic reference/target pair with mask, AOI and ground truth.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        n_peaks: usize,
        /// Identity deformation instead of the default similarity + field + outliers.
        #[arg(long)]
        identity: bool,
        #[arg(long, default_value_t = 0.5)]
        noise_sd: f64,
        /// Add a hyperbolic bleeding trace to both grids.
        #[arg(long)]
        bleeding: bool,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Final objective for w = 0, 0.1, ..., 0.9.
    ScanW {
        #[command(flatten)]
        peaks: PeakFiles,
        #[command(flatten)]
        registration: RegistrationFlags,
        #[command(flatten)]
        out: OutFlags,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct InputFlags {
    /// Reference grid (CSV, PNG, BMP or JPEG).
    #[arg(long, value_name = "FILE")]
    pub reference: Option<PathBuf>,
    /// Target grid.
    #[arg(long, value_name = "FILE")]
    pub target: Option<PathBuf>,
    /// Template mask drawn on the reference.
    #[arg(long, value_name = "FILE")]
    pub mask: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub aoi_ref: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub aoi_target: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExtractFlags {
    /// h for both grids.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub h_ref: Option<f64>,
    #[arg(long)]
    pub h_target: Option<f64>,
    /// Pixel adjacency, 4 or 8.
    #[arg(long)]
    pub connectivity: Option<u8>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RegistrationFlags {
    /// Uniform noise weight in [0, 1).
    #[arg(long)]
    pub w: Option<f64>,
    /// Kernel width (default 2).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Smoothness weight (default 2).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// hybrid, rigid or nonrigid.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// as-printed or squared.
    #[arg(long)]
    pub kernel: Option<KernelForm>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PeakFiles {
    /// Defaults to peaks_ref.csv in the output directory.
    #[arg(long, value_name = "FILE")]
    pub reference_peaks: Option<PathBuf>,
    /// Defaults to peaks_target.csv in the output directory.
    #[arg(long, value_name = "FILE")]
    pub target_peaks: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutFlags {
    /// Directory for outputs and for the default inputs of later stages.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Merged view of the config file and the command line.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub reference: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub aoi_ref: Option<PathBuf>,
    pub aoi_target: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub h: Option<f64>,
    pub h_ref: Option<f64>,
    pub h_target: Option<f64>,
    pub connectivity: Option<u8>,
    pub w: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub mode: Option<Mode>,
    pub kernel: Option<KernelForm>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
}

fn over<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

impl InputFlags {
    fn apply(&self, s: &mut Settings) {
        over(&mut s.reference, &self.reference);
        over(&mut s.target, &self.target);
        over(&mut s.mask, &self.mask);
        over(&mut s.aoi_ref, &self.aoi_ref);
        over(&mut s.aoi_target, &self.aoi_target);
    }
}

impl ExtractFlags {
    fn apply(&self, s: &mut Settings) {
        over(&mut s.h, &self.h);
        over(&mut s.h_ref, &self.h_ref);
        over(&mut s.h_target, &self.h_target);
        over(&mut s.connectivity, &self.connectivity);
    }
}

impl RegistrationFlags {
    fn apply(&self, s: &mut Settings) {
        over(&mut s.w, &self.w);
        over(&mut s.beta, &self.beta);
        over(&mut s.lambda, &self.lambda);
        over(&mut s.mode, &self.mode);
        over(&mut s.kernel, &self.kernel);
        over(&mut s.max_iter, &self.max_iter);
    }
}

impl OutFlags {
    fn apply(&self, s: &mut Settings) {
        over(&mut s.out_dir, &self.out_dir);
    }
}

fn invalid(message: impl Into<String>) -> StageError {
    StageError {
        stage: Stage::Load,
        error: Error::InvalidParameter(message.into()),
    }
}

impl Settings {
    /// Parses a flat TOML document. Relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> CliResult<Settings> {
        let mut s: Settings = toml::from_str(text).map_err(|e| StageError {
            stage: Stage::Load,
            error: Error::Parse {
                what: "config",
                line: e
                    .span()
                    .map_or(0, |r| text[..r.start].lines().count().max(1)),
                message: e.message().to_string(),
            },
        })?;
        for slot in [
            &mut s.reference,
            &mut s.target,
            &mut s.mask,
            &mut s.aoi_ref,
            &mut s.aoi_target,
            &mut s.out_dir,
        ] {
            if let Some(p) = slot.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> CliResult<Settings> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io {
                path: path.into(),
                source: e,
            })
            .at(Stage::Load)?;
        Settings::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn h_for(&self, specific: Option<f64>, which: &str) -> CliResult<f64> {
        specific
            .or(self.h)
            .ok_or_else(|| invalid(format!("--h or --h-{which} is required")))
    }

    pub fn connectivity(&self) -> CliResult<Connectivity> {
        match self.connectivity {
            None | Some(8) => Ok(Connectivity::Eight),
            Some(4) => Ok(Connectivity::Four),
            Some(c) => Err(invalid(format!("connectivity must be 4 or 8, got {c}"))),
        }
    }

    pub fn registration(&self) -> RegistrationConfig<f64> {
        let mut cfg = RegistrationConfig::default();
        if let Some(w) = self.w {
            cfg.w = w;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(k) = self.kernel {
            cfg.kernel = k;
        }
        if let Some(n) = self.max_iter {
            cfg.max_iter = n;
        }
        cfg
    }

    pub fn pipeline(&self) -> CliResult<PipelineConfig> {
        let mut cfg = PipelineConfig::new(
            self.h_for(self.h_ref, "ref")?,
            self.h_for(self.h_target, "target")?,
        );
        cfg.connectivity = self.connectivity()?;
        cfg.registration = self.registration();
        cfg.validate().at(Stage::Load)?;
        Ok(cfg)
    }

    fn required<'a>(&self, slot: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
        slot.as_deref()
            .ok_or_else(|| invalid(format!("--{flag} is required")))
    }
}

fn load(path: &Path) -> CliResult<Grid<f64>> {
    load_grid(path, &LuminancePolicy::default()).at(Stage::Load)
}

fn load_aoi(path: Option<&PathBuf>) -> CliResult<Option<AreaOfInterest>> {
    path.map(|p| read_aoi(p)).transpose().at(Stage::Load)
}

fn load_mask(path: &Path) -> CliResult<TemplateMask> {
    read_mask(path).at(Stage::Load)
}

fn load_peaks(path: &Path) -> CliResult<PeakSet> {
    PeakSet::read_csv(path).at(Stage::Load)
}

fn load_transform(path: &Path) -> CliResult<Transform<f64>> {
    Transform::read(path).at(Stage::Load)
}

/// Writes `bytes` to `dir/name`, creating `dir` if needed.
fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
    let path = dir.join(name);
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(&path, bytes))
        .map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })
        .at(Stage::Write)?;
    Ok(path)
}

fn or_default(explicit: &Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| dir.join(name))
}

/// What a command produced: written files and an optional stdout document.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub stdout: Option<String>,
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Extract {
            inputs,
            extraction,
            out,
        } => {
            inputs.apply(&mut s);
            extraction.apply(&mut s);
            out.apply(&mut s);
            extract(&s)
        }
        Command::Register {
            peaks,
            registration,
            out,
        } => {
            registration.apply(&mut s);
            out.apply(&mut s);
            register(&s, &peaks)
        }
        Command::WarpMask {
            transform,
            inputs,
            out,
        } => {
            inputs.apply(&mut s);
            out.apply(&mut s);
            warp_mask(&s, &transform)
        }
        Command::WarpImage {
            transform,
            inputs,
            out,
        } => {
            inputs.apply(&mut s);
            out.apply(&mut s);
            warp_image(&s, &transform)
        }
        Command::Score {
            aligned,
            inputs,
            out,
        } => {
            inputs.apply(&mut s);
            out.apply(&mut s);
            score(&s, &aligned)
        }
        Command::Quantify {
            warped_mask,
            inputs,
            out,
        } => {
            inputs.apply(&mut s);
            out.apply(&mut s);
            quantify_cmd(&s, &warped_mask)
        }
        Command::RunAll {
            inputs,
            extraction,
            registration,
            out,
        } => {
            inputs.apply(&mut s);
            extraction.apply(&mut s);
            registration.apply(&mut s);
            out.apply(&mut s);
            run_all(&s)
        }
        Command::Synth {
            seed,
            n_peaks,
            identity,
            noise_sd,
            bleeding,
            out,
        } => {
            over(&mut s.seed, &seed);
            out.apply(&mut s);
            let mut spec = PairSpec {
                n_peaks,
                noise_sd,
                bleeding,
                ..PairSpec::default()
            };
            if identity {
                spec.truth = GroundTruthSpec::identity();
            }
            synth(&s, &spec)
        }
        Command::ScanW {
            peaks,
            registration,
            out,
        } => {
            registration.apply(&mut s);
            out.apply(&mut s);
            scan_w(&s, &peaks)
        }
    }
}

pub fn extract(s: &Settings) -> CliResult<Outcome> {
    let dir = s.out_dir();
    let conn = s.connectivity()?;
    let mut done = Outcome::default();
    if let Some(path) = &s.reference {
        let h = s.h_for(s.h_ref, "ref")?;
        let grid = load(path)?;
        let aoi = load_aoi(s.aoi_ref.as_ref())?;
        let peaks = pipeline::extract(&grid, h, aoi.as_ref(), conn).at(Stage::ExtractReference)?;
        done.written.push(write(&dir, PEAKS_REF, peaks.to_csv())?);
    }
    if let Some(path) = &s.target {
        let h = s.h_for(s.h_target, "target")?;
        let grid = load(path)?;
        let aoi = load_aoi(s.aoi_target.as_ref())?;
        let peaks = pipeline::extract(&grid, h, aoi.as_ref(), conn).at(Stage::ExtractTarget)?;
        done.written
            .push(write(&dir, PEAKS_TARGET, peaks.to_csv())?);
    }
    if done.written.is_empty() {
        return Err(invalid("extract needs --reference and/or --target"));
    }
    Ok(done)
}

pub fn register(s: &Settings, files: &PeakFiles) -> CliResult<Outcome> {
    let dir = s.out_dir();
    let reference = load_peaks(&or_default(&files.reference_peaks, &dir, PEAKS_REF))?;
    let target = load_peaks(&or_default(&files.target_peaks, &dir, PEAKS_TARGET))?;
    let cfg = s.registration();
    cfg.validate().at(Stage::Load)?;
    let reg = pipeline::register_peaks(&reference, &target, &cfg).at(Stage::Register)?;
    Ok(Outcome {
        written: vec![
            write(&dir, REGISTRATION_REPORT, &reg.report_json)?,
            write(&dir, TRANSFORM, &reg.transform_json)?,
        ],
        stdout: None,
    })
}

pub fn warp_mask(s: &Settings, transform: &Option<PathBuf>) -> CliResult<Outcome> {
    let dir = s.out_dir();
    let t = load_transform(&or_default(transform, &dir, TRANSFORM))?;
    let mask = load_mask(s.required(&s.mask, "mask")?)?;
    let (warped, text) = pipeline::warp_mask_text(&t, &mask).at(Stage::WarpMask)?;
    let stdout = (!warped.warnings.is_empty()).then(|| {
        serde_json::to_string_pretty(&warped.warnings).expect("warnings serialize") + "\n"
    });
    Ok(Outcome {
        written: vec![write(&dir, WARPED_MASK, text)?],
        stdout,
    })
}

pub fn warp_image(s: &Settings, transform: &Option<PathBuf>) -> CliResult<Outcome> {
    let dir = s.out_dir();
    let t = load_transform(&or_default(transform, &dir, TRANSFORM))?;
    let target = load(s.required(&s.target, "target")?)?;
    let reference = load(s.required(&s.reference, "reference")?)?;
    let aligned = pipeline::align_image(
        &t,
        &target,
        &GridGeometry::of(&reference),
        GridEncoding::Png16,
    )
    .at(Stage::WarpImage)?;
    Ok(Outcome {
        written: vec![
            write(&dir, ALIGNED_IMAGE, &aligned.bytes)?,
            write(&dir, ALIGNED_SIDECAR, &aligned.sidecar)?,
        ],
        stdout: None,
    })
}

pub fn score(s: &Settings, aligned: &Option<PathBuf>) -> CliResult<Outcome> {
    let dir = s.out_dir();
    let reference = load(s.required(&s.reference, "reference")?)?;
    let aligned = load(&or_default(aligned, &dir, ALIGNED_IMAGE))?;
    let target = s.target.as_deref().map(load).transpose()?;
    let aoi = load_aoi(s.aoi_ref.as_ref())?;
    let report = pipeline::score_pair(
        &reference,
        &aligned,
        target.as_ref(),
        aoi.as_ref(),
        &SsimParams::default(),
    )
    .at(Stage::Score)?;
    let json = report.to_json();
    Ok(Outcome {
        written: vec![write(&dir, SCORES, &json)?],
        stdout: Some(json),
    })
}

pub fn quantify_cmd(s: &Settings, warped_mask: &Option<PathBuf>) -> CliResult<Outcome> {
    let dir = s.out_dir();
    let target = load(s.required(&s.target, "target")?)?;
    let warped = load_mask(&or_default(warped_mask, &dir, WARPED_MASK))?;
    let reference = match (&s.reference, &s.mask) {
        (Some(r), Some(m)) => Some((load(r)?, load_mask(m)?)),
        _ => None,
    };
    let (_, set) = pipeline::quant_files(&target, &warped, reference.as_ref().map(|(g, m)| (g, m)))
        .at(Stage::Quantify)?;
    let written = set
        .files
        .iter()
        .map(|(name, bytes)| write(&dir, name, bytes))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Outcome {
        written,
        stdout: set
            .get(QUANT_TABLE)
            .map(|t| String::from_utf8_lossy(t).into_owned()),
    })
}

pub fn run_all(s: &Settings) -> CliResult<Outcome> {
    let cfg = s.pipeline()?;
    let inputs = PipelineInputs {
        reference: load(s.required(&s.reference, "reference")?)?,
        target: load(s.required(&s.target, "target")?)?,
        mask: s.mask.as_deref().map(load_mask).transpose()?,
        aoi_ref: load_aoi(s.aoi_ref.as_ref())?,
        aoi_target: load_aoi(s.aoi_target.as_ref())?,
    };
    let out = pipeline::run_all(&inputs, &cfg)?;
    let dir = s.out_dir();
    let written = out
        .artifacts
        .files
        .iter()
        .map(|(name, bytes)| write(&dir, name, bytes))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Outcome {
        written,
        stdout: Some(out.registered.report_json),
    })
}

pub fn synth(s: &Settings, spec: &PairSpec) -> CliResult<Outcome> {
    let dir = s.out_dir();
    let pair = synthetic_pair(s.seed.unwrap_or(0), spec).at(Stage::Load)?;
    fs::create_dir_all(&dir)
        .map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })
        .at(Stage::Write)?;
    let reference = dir.join(SYNTH_REFERENCE);
    let target = dir.join(SYNTH_TARGET);
    save_grid(&pair.reference, &reference).at(Stage::Write)?;
    save_grid(&pair.target, &target).at(Stage::Write)?;
    let mask = dir.join(SYNTH_MASK);
    write_mask(&pair.mask, &mask).at(Stage::Write)?;
    let aoi = dir.join(SYNTH_AOI);
    write_aoi(&pair.aoi, &aoi).at(Stage::Write)?;
    Ok(Outcome {
        written: vec![
            reference,
            target,
            mask,
            aoi,
            write(&dir, SYNTH_TRUTH, pair.truth.to_json())?,
            write(&dir, SYNTH_PEAKS_REF, pair.reference_peaks.to_csv())?,
            write(&dir, SYNTH_PEAKS_TARGET, pair.target_peaks.to_csv())?,
        ],
        stdout: None,
    })
}

pub fn scan_w(s: &Settings, files: &PeakFiles) -> CliResult<Outcome> {
    let dir = s.out_dir();
    let reference = load_peaks(&or_default(&files.reference_peaks, &dir, PEAKS_REF))?;
    let target = load_peaks(&or_default(&files.target_peaks, &dir, PEAKS_TARGET))?;
    let cfg = s.registration();
    cfg.validate().at(Stage::Load)?;
    let entries = scan_noise_weight(&target.points, &reference.points, &cfg).at(Stage::Register)?;
    let json = serde_json::to_string_pretty(&entries).expect("scan serializes") + "\n";
    let mut table = format!(
        "{:>4} {:>14} {:>12} {:>9} {:>10}\n",
        "w", "objective", "sigma2", "s", "t"
    );
    for e in &entries {
        table += &format!(
            "{:>4.1} {:>14.6} {:>12.4e} {:>9.5} {:>10.4}\n",
            e.w, e.objective, e.sigma2, e.scale, e.shift
        );
    }
    Ok(Outcome {
        written: vec![write(&dir, W_SCAN, json)?],
        stdout: Some(table),
    })
}
