//! Perceptual score, RMSE regions, and batch reports over image directories.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image_io::{list_images, load_color, load_gray, rmse, rmse_color};
use crate::msd::{ma_score, Regressor};
use crate::niqe::{niqe_score, MvgModel};

/// `((10 − ma) + niqe) / 2`; lower is better.
pub fn perceptual_score(ma: f64, niqe: f64) -> Result<f64> {
    if !ma.is_finite() || !niqe.is_finite() {
        return Err(Error::NonFinite(format!("ma = {ma}, niqe = {niqe}")));
    }
    Ok(((10.0 - ma) + niqe) / 2.0)
}

/// RMSE stratum. Ordered `R1 < R2 < R3 < OutOfRange`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    R1,
    R2,
    R3,
    OutOfRange,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::R1 => "1",
            Region::R2 => "2",
            Region::R3 => "3",
            Region::OutOfRange => "out-of-range",
        })
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Region 1: ≤ 11.5, Region 2: (11.5, 12.5], Region 3: (12.5, 16], beyond: out of range.
pub fn region_of(rmse: f64) -> Result<Region> {
    if rmse.is_nan() || rmse < 0.0 {
        return Err(Error::invalid(format!("rmse must be >= 0, got {rmse}")));
    }
    Ok(if rmse <= 11.5 {
        Region::R1
    } else if rmse <= 12.5 {
        Region::R2
    } else if rmse <= 16.0 {
        Region::R3
    } else {
        Region::OutOfRange
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageReport {
    pub image: String,
    pub niqe: Option<f64>,
    pub ma: Option<f64>,
    pub perceptual: Option<f64>,
    pub rmse: Option<f64>,
    pub region: Option<Region>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub images: usize,
    pub failed: usize,
    pub niqe: Option<f64>,
    pub ma: Option<f64>,
    pub perceptual: Option<f64>,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub rows: Vec<ImageReport>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RmseSpace {
    #[default]
    Luma,
    Rgb,
}

impl std::str::FromStr for RmseSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "luma" => Ok(RmseSpace::Luma),
            "rgb" => Ok(RmseSpace::Rgb),
            other => Err(Error::invalid(format!(
                "unknown RMSE space `{other}` (expected luma or rgb)"
            ))),
        }
    }
}

pub struct ScoreOptions<'a> {
    pub niqe: &'a MvgModel,
    pub forest: Option<&'a dyn Regressor>,
    /// Pixels shaved from every side before RMSE.
    pub crop: usize,
    pub rmse_space: RmseSpace,
}

fn rmse_pair(sr: &Path, hr: &Path, opts: &ScoreOptions<'_>) -> Result<f64> {
    match opts.rmse_space {
        RmseSpace::Luma => rmse(
            &load_gray(sr)?.shave(opts.crop)?,
            &load_gray(hr)?.shave(opts.crop)?,
        ),
        RmseSpace::Rgb => rmse_color(
            &load_color(sr)?.shave(opts.crop)?,
            &load_color(hr)?.shave(opts.crop)?,
        ),
    }
}

/// Scores one image. Failures are recorded in the `error` field; whatever can
/// still be computed is kept.
pub fn score_image(sr: &Path, hr: Option<&Path>, opts: &ScoreOptions<'_>) -> ImageReport {
    let mut errors = Vec::new();
    let mut report = ImageReport {
        image: sr
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| sr.display().to_string()),
        niqe: None,
        ma: None,
        perceptual: None,
        rmse: None,
        region: None,
        error: None,
    };
    match load_gray(sr) {
        Ok(img) => {
            match niqe_score(&img, opts.niqe) {
                Ok(v) => report.niqe = Some(v),
                Err(e) => errors.push(format!("niqe: {e}")),
            }
            if let Some(forest) = opts.forest {
                match ma_score(&img, forest, forest.n_features()) {
                    Ok(v) => report.ma = Some(v),
                    Err(e) => errors.push(format!("ma: {e}")),
                }
            }
            if let (Some(ma), Some(niqe)) = (report.ma, report.niqe) {
                match perceptual_score(ma, niqe) {
                    Ok(v) => report.perceptual = Some(v),
                    Err(e) => errors.push(format!("perceptual: {e}")),
                }
            }
        }
        Err(e) => errors.push(e.to_string()),
    }
    if let Some(hr) = hr {
        match rmse_pair(sr, hr, opts).and_then(|r| Ok((r, region_of(r)?))) {
            Ok((r, region)) => {
                report.rmse = Some(r);
                report.region = Some(region);
            }
            Err(e) => errors.push(format!("rmse: {e}")),
        }
    }
    if !errors.is_empty() {
        report.error = Some(errors.join("; "));
    }
    report
}

fn stem_key(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Pairs SR and HR files by file stem; every file must have exactly one partner.
pub fn pair_files(sr: &[PathBuf], hr: &[PathBuf]) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut by_stem: BTreeMap<String, &PathBuf> = BTreeMap::new();
    for h in hr {
        if by_stem.insert(stem_key(h), h).is_some() {
            return Err(Error::invalid(format!(
                "ambiguous reference file stem `{}`",
                stem_key(h)
            )));
        }
    }
    let mut pairs = Vec::with_capacity(sr.len());
    for s in sr {
        match by_stem.remove(&stem_key(s)) {
            Some(h) => pairs.push((s.clone(), h.clone())),
            None => {
                return Err(Error::invalid(format!(
                    "no reference image for {}",
                    s.display()
                )))
            }
        }
    }
    if let Some((stem, _)) = by_stem.into_iter().next() {
        return Err(Error::invalid(format!(
            "reference image `{stem}` has no SR counterpart"
        )));
    }
    Ok(pairs)
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(rows: &[ImageReport]) -> Aggregate {
    Aggregate {
        images: rows.len(),
        failed: rows.iter().filter(|r| r.error.is_some()).count(),
        niqe: mean_of(rows.iter().map(|r| r.niqe)),
        ma: mean_of(rows.iter().map(|r| r.ma)),
        perceptual: mean_of(rows.iter().map(|r| r.perceptual)),
        rmse: mean_of(rows.iter().map(|r| r.rmse)),
    }
}

/// Scores every image of `sr_dir` (sorted by file name), optionally against
/// same-named references in `hr_dir`.
pub fn batch_report(
    sr_dir: &Path,
    hr_dir: Option<&Path>,
    opts: &ScoreOptions<'_>,
) -> Result<BatchReport> {
    let sr = list_images(sr_dir)?;
    if sr.is_empty() {
        return Err(Error::invalid(format!("no images in {}", sr_dir.display())));
    }
    let jobs: Vec<(PathBuf, Option<PathBuf>)> = match hr_dir {
        Some(dir) => pair_files(&sr, &list_images(dir)?)?
            .into_iter()
            .map(|(s, h)| (s, Some(h)))
            .collect(),
        None => sr.into_iter().map(|s| (s, None)).collect(),
    };
    Ok(batch_report_files(&jobs, opts))
}

pub fn batch_report_files(
    jobs: &[(PathBuf, Option<PathBuf>)],
    opts: &ScoreOptions<'_>,
) -> BatchReport {
    let rows: Vec<ImageReport> = jobs
        .par_iter()
        .map(|(s, h)| score_image(s, h.as_deref(), opts))
        .collect();
    let aggregate = aggregate(&rows);
    BatchReport { rows, aggregate }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CSV_COLUMNS: [&str; 7] = [
    "image",
    "niqe",
    "ma",
    "perceptual",
    "rmse",
    "region",
    "error",
];

/// Label of the trailing aggregate row in CSV output.
pub const MEAN_ROW: &str = "(mean)";

impl BatchReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.image.clone(),
                fmt_opt(r.niqe),
                fmt_opt(r.ma),
                fmt_opt(r.perceptual),
                fmt_opt(r.rmse),
                r.region.map(|g| g.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        let a = &self.aggregate;
        w.write_record([
            MEAN_ROW.to_string(),
            fmt_opt(a.niqe),
            fmt_opt(a.ma),
            fmt_opt(a.perceptual),
            fmt_opt(a.rmse),
            String::new(),
            if a.failed > 0 {
                format!("{} of {} images failed", a.failed, a.images)
            } else {
                String::new()
            },
        ])
        .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn has_errors(&self) -> bool {
        self.aggregate.failed > 0
    }
}
