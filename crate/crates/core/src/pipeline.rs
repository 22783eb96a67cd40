//! Stage functions shared by the command-line driver and the HTTP service.
//!
//! Every stage returns its serialized artifact as bytes so that both front
//! ends write exactly the same files for the same inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::{
    decode_grid, encode_grid, mask_to_string, AreaOfInterest, GridEncoding, LuminancePolicy,
    TemplateMask,
};
use crate::metrics::{score, AlignmentScore, SsimParams};
use crate::morphology::Connectivity;
use crate::peaks::{extract_peaks_with, HParameter, Peaks};
use crate::quantify::{family_table, quantify, QuantReport};
use crate::registration::{
    register, RegistrationConfig, RegistrationReport, RegistrationResult, Transform,
};
use crate::warp::{warp_image, warp_mask, GridGeometry, WarpWarning, WarpedMask};

/// Pipeline stage names used in error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Load,
    ExtractReference,
    ExtractTarget,
    Register,
    WarpMask,
    WarpImage,
    Score,
    Quantify,
    Write,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().expect("stage is a string"))
    }
}

/// An error tagged with the stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl StageError {
    /// `{"stage": ..., "category": ..., "message": ...}` on one line.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "stage": self.stage,
            "category": self.error.category(),
            "message": self.error.to_string(),
        })
        .to_string()
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

fn default_window() -> usize {
    8
}

fn default_k1() -> f64 {
    0.01
}

fn default_k2() -> f64 {
    0.03
}

/// Everything besides file paths that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub h_ref: f64,
    pub h_target: f64,
    #[serde(default)]
    pub connectivity: Connectivity,
    #[serde(default)]
    pub registration: RegistrationConfig<f64>,
    #[serde(default = "default_window")]
    pub ssim_window: usize,
    #[serde(default = "default_k1")]
    pub ssim_k1: f64,
    #[serde(default = "default_k2")]
    pub ssim_k2: f64,
    /// SSIM dynamic range; data range of the pair when absent.
    #[serde(default)]
    pub ssim_range: Option<f64>,
}

impl PipelineConfig {
    pub fn new(h_ref: f64, h_target: f64) -> Self {
        PipelineConfig {
            h_ref,
            h_target,
            connectivity: Connectivity::Eight,
            registration: RegistrationConfig::default(),
            ssim_window: default_window(),
            ssim_k1: default_k1(),
            ssim_k2: default_k2(),
            ssim_range: None,
        }
    }

    pub fn ssim_params(&self) -> SsimParams<f64> {
        SsimParams {
            window: self.ssim_window,
            k1: self.ssim_k1,
            k2: self.ssim_k2,
            dynamic_range: self.ssim_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        HParameter::new(self.h_ref)?;
        HParameter::new(self.h_target)?;
        self.registration.validate()?;
        if self.ssim_window == 0 {
            return Err(Error::InvalidParameter(
                "ssim_window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Input data of a full run.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub reference: Grid<f64>,
    pub target: Grid<f64>,
    pub mask: Option<TemplateMask<f64>>,
    pub aoi_ref: Option<AreaOfInterest<f64>>,
    pub aoi_target: Option<AreaOfInterest<f64>>,
}

pub fn extract(
    grid: &Grid<f64>,
    h: f64,
    aoi: Option<&AreaOfInterest<f64>>,
    connectivity: Connectivity,
) -> Result<Peaks<f64>> {
    extract_peaks_with(grid, HParameter::new(h)?, aoi, connectivity)
}

/// Registration outcome with its two serialized documents.
pub struct Registered {
    pub result: RegistrationResult<f64>,
    pub report_json: String,
    pub transform_json: String,
}

pub fn register_peaks(
    reference: &Peaks<f64>,
    target: &Peaks<f64>,
    cfg: &RegistrationConfig<f64>,
) -> Result<Registered> {
    let result = register(&target.points, &reference.points, cfg)?;
    let report_json = RegistrationReport::from_result(&result).to_json();
    let transform_json = result.transform.to_json();
    Ok(Registered {
        result,
        report_json,
        transform_json,
    })
}

pub fn warp_mask_text(
    transform: &Transform<f64>,
    mask: &TemplateMask<f64>,
) -> Result<(WarpedMask<f64>, String)> {
    let warped = warp_mask(transform, mask)?;
    let text = mask_to_string(&warped.mask);
    Ok((warped, text))
}

/// Aligned image on the reference geometry plus its encoded bytes and sidecar.
pub struct AlignedImage {
    pub grid: Grid<f64>,
    /// `grid` as it reads back from `bytes`.
    pub stored: Grid<f64>,
    pub bytes: Vec<u8>,
    pub sidecar: String,
}

pub fn align_image(
    transform: &Transform<f64>,
    target: &Grid<f64>,
    geometry: &GridGeometry<f64>,
    encoding: GridEncoding,
) -> Result<AlignedImage> {
    let grid = warp_image(transform, target, geometry)?;
    let (bytes, meta) = encode_grid(&grid, encoding)?;
    let stored = decode_grid(&bytes, encoding, &LuminancePolicy::default(), Some(&meta))?;
    Ok(AlignedImage {
        grid,
        stored,
        bytes,
        sidecar: meta.to_json(),
    })
}

/// Scores of the aligned image and, when the target shares the reference
/// geometry, of the unaligned target for comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub aligned: AlignmentScore,
    pub unaligned: Option<AlignmentScore>,
}

impl ScoreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scores serialize") + "\n"
    }
}

pub fn score_pair(
    reference: &Grid<f64>,
    aligned: &Grid<f64>,
    target: Option<&Grid<f64>>,
    aoi: Option<&AreaOfInterest<f64>>,
    params: &SsimParams<f64>,
) -> Result<ScoreReport> {
    let aligned_score = score(reference, aligned, aoi, params)?;
    let unaligned = match target {
        Some(t) if t.same_shape(reference) && t.axes() == reference.axes() => {
            Some(score(reference, t, aoi, params)?)
        }
        _ => None,
    };
    Ok(ScoreReport {
        aligned: aligned_score,
        unaligned,
    })
}

/// Serialized quantification documents.
pub struct QuantArtifacts {
    pub report: QuantReport,
    pub families_csv: String,
    pub blobs_csv: String,
}

pub fn quantify_text(grid: &Grid<f64>, mask: &TemplateMask<f64>) -> Result<QuantArtifacts> {
    let report = quantify(grid, mask)?;
    Ok(QuantArtifacts {
        families_csv: report.families_csv(),
        blobs_csv: report.blobs_csv(),
        report,
    })
}

/// Quantification files for the target under the warped mask. The family
/// table has an "Aligned" column and, when the reference grid and its
/// template are given, a "Reference" column before it.
pub fn quant_files(
    target: &Grid<f64>,
    warped: &TemplateMask<f64>,
    reference: Option<(&Grid<f64>, &TemplateMask<f64>)>,
) -> Result<(QuantReport, ArtifactSet)> {
    let q = quantify_text(target, warped)?;
    let table = match reference {
        Some((grid, mask)) => {
            let reference_q = quantify(grid, mask)?;
            family_table(&[("Reference", &reference_q), ("Aligned", &q.report)])
        }
        None => family_table(&[("Aligned", &q.report)]),
    };
    let mut set = ArtifactSet::default();
    set.push(QUANT, q.families_csv);
    set.push(QUANT_BLOBS, q.blobs_csv);
    set.push(QUANT_TABLE, table);
    Ok((q.report, set))
}

/// Named output files of a run, in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtifactSet {
    pub files: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    pub fn push(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }
}

pub const PEAKS_REF: &str = "peaks_ref.csv";
pub const PEAKS_TARGET: &str = "peaks_target.csv";
pub const REGISTRATION_REPORT: &str = "registration.json";
pub const TRANSFORM: &str = "transform.json";
pub const WARPED_MASK: &str = "warped.mask";
pub const ALIGNED_IMAGE: &str = "aligned.png";
pub const ALIGNED_SIDECAR: &str = "aligned.png.meta.json";
pub const SCORES: &str = "scores.json";
pub const QUANT: &str = "quant.csv";
pub const QUANT_BLOBS: &str = "quant_blobs.csv";
pub const QUANT_TABLE: &str = "quant_table.txt";
pub const WARNINGS: &str = "warnings.json";

#[derive(Debug, Serialize)]
struct Warnings<'a> {
    mask: &'a [WarpWarning],
    quantification: Vec<String>,
}

/// Products of a full run, kept in memory alongside their serializations.
pub struct RunOutput {
    pub reference_peaks: Peaks<f64>,
    pub target_peaks: Peaks<f64>,
    pub registered: Registered,
    /// Aligned image as stored in the artifact set.
    pub aligned: Grid<f64>,
    pub scores: ScoreReport,
    pub warped_mask: Option<WarpedMask<f64>>,
    pub quant: Option<QuantReport>,
    pub artifacts: ArtifactSet,
}

/// Extract, register, warp the mask and the target image, score and quantify.
pub fn run_all(
    inputs: &PipelineInputs,
    cfg: &PipelineConfig,
) -> std::result::Result<RunOutput, StageError> {
    cfg.validate().at(Stage::Load)?;
    let mut files = ArtifactSet::default();
    let reference_peaks = extract(
        &inputs.reference,
        cfg.h_ref,
        inputs.aoi_ref.as_ref(),
        cfg.connectivity,
    )
    .at(Stage::ExtractReference)?;
    let target_peaks = extract(
        &inputs.target,
        cfg.h_target,
        inputs.aoi_target.as_ref(),
        cfg.connectivity,
    )
    .at(Stage::ExtractTarget)?;
    files.push(PEAKS_REF, reference_peaks.to_csv());
    files.push(PEAKS_TARGET, target_peaks.to_csv());

    let registered =
        register_peaks(&reference_peaks, &target_peaks, &cfg.registration).at(Stage::Register)?;
    files.push(REGISTRATION_REPORT, registered.report_json.clone());
    files.push(TRANSFORM, registered.transform_json.clone());
    let transform = &registered.result.transform;

    let warped = match &inputs.mask {
        Some(mask) => {
            let (w, text) = warp_mask_text(transform, mask).at(Stage::WarpMask)?;
            files.push(WARPED_MASK, text);
            Some(w)
        }
        None => None,
    };

    let aligned = align_image(
        transform,
        &inputs.target,
        &GridGeometry::of(&inputs.reference),
        GridEncoding::Png16,
    )
    .at(Stage::WarpImage)?;
    files.push(ALIGNED_IMAGE, aligned.bytes);
    files.push(ALIGNED_SIDECAR, aligned.sidecar);

    let scores = score_pair(
        &inputs.reference,
        &aligned.stored,
        Some(&inputs.target),
        inputs.aoi_ref.as_ref(),
        &cfg.ssim_params(),
    )
    .at(Stage::Score)?;
    files.push(SCORES, scores.to_json());

    let mut quant_warnings = Vec::new();
    let quant = match (&inputs.mask, &warped) {
        (Some(mask), Some(w)) => {
            let (report, set) =
                quant_files(&inputs.target, &w.mask, Some((&inputs.reference, mask)))
                    .at(Stage::Quantify)?;
            files.files.extend(set.files);
            quant_warnings.extend(report.warnings.iter().cloned());
            Some(report)
        }
        _ => None,
    };
    let warnings = Warnings {
        mask: warped.as_ref().map_or(&[], |w| w.warnings.as_slice()),
        quantification: quant_warnings,
    };
    files.push(
        WARNINGS,
        serde_json::to_string_pretty(&warnings).expect("warnings serialize") + "\n",
    );

    Ok(RunOutput {
        reference_peaks,
        target_peaks,
        registered,
        aligned: aligned.stored,
        scores,
        warped_mask: warped,
        quant,
        artifacts: files,
    })
}
