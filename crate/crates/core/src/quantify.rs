//! Chemical-family quantification by integrating a chromatogram under a mask.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::io::TemplateMask;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlobVolume {
    pub name: String,
    pub family: String,
    pub pixels: usize,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyShare {
    pub family: String,
    pub volume: f64,
    pub weight_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantReport {
    pub blobs: Vec<BlobVolume>,
    /// Families in first-appearance order of the mask.
    pub families: Vec<FamilyShare>,
    pub total_volume: f64,
    pub warnings: Vec<String>,
}

impl QuantReport {
    pub fn family(&self, name: &str) -> Option<&FamilyShare> {
        self.families.iter().find(|f| f.family == name)
    }

    pub fn percent_of(&self, family: &str) -> f64 {
        self.family(family).map_or(0.0, |f| f.weight_percent)
    }

    /// `family,volume,weight_percent`, one row per family.
    pub fn families_csv(&self) -> String {
        let mut out = String::from("family,volume,weight_percent\n");
        for f in &self.families {
            writeln!(
                out,
                "{},{},{}",
                csv_field(&f.family),
                f.volume,
                f.weight_percent
            )
            .unwrap();
        }
        out
    }

    /// `blob,family,pixels,volume`, one row per blob in mask order.
    pub fn blobs_csv(&self) -> String {
        let mut out = String::from("blob,family,pixels,volume\n");
        for b in &self.blobs {
            writeln!(
                out,
                "{},{},{},{}",
                csv_field(&b.name),
                csv_field(&b.family),
                b.pixels,
                b.volume
            )
            .unwrap();
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Integrates `grid` under every blob. A pixel belongs to the first blob (in
/// mask order) whose polygon contains its centre; later claims are reported
/// as overlap warnings.
pub fn quantify<T: Scalar>(grid: &Grid<T>, mask: &TemplateMask<T>) -> Result<QuantReport> {
    let (rows, cols) = grid.shape();
    let mut owner: Vec<Option<usize>> = vec![None; rows * cols];
    let mut sums = vec![T::zero(); mask.len()];
    let mut counts = vec![0usize; mask.len()];
    let mut warnings = Vec::new();
    let axes = grid.axes();
    for (bi, blob) in mask.blobs().iter().enumerate() {
        let (lo, hi) = blob.polygon.bounds();
        let (r_lo, c_lo) = axes.to_pixel(lo);
        let (r_hi, c_hi) = axes.to_pixel(hi);
        let Some((r0, r1)) = index_span(r_lo, r_hi, rows) else {
            continue;
        };
        let Some((c0, c1)) = index_span(c_lo, c_hi, cols) else {
            continue;
        };
        let mut overlapped: Vec<usize> = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                if !blob.polygon.contains(grid.retention_of(r, c)) {
                    continue;
                }
                let i = r * cols + c;
                match owner[i] {
                    Some(prev) => {
                        if !overlapped.contains(&prev) {
                            overlapped.push(prev);
                        }
                    }
                    None => owner[i] = Some(bi),
                }
            }
        }
        for prev in overlapped {
            warnings.push(format!(
                "blob {:?} overlaps blob {:?}; shared pixels assigned to {:?}",
                blob.name,
                mask.blobs()[prev].name,
                mask.blobs()[prev].name
            ));
        }
    }
    for (i, o) in owner.iter().enumerate() {
        if let Some(bi) = o {
            sums[*bi] = sums[*bi] + grid.values()[i];
            counts[*bi] += 1;
        }
    }
    let area = grid.pixel_area();
    let blobs: Vec<BlobVolume> = mask
        .blobs()
        .iter()
        .zip(sums.iter().zip(&counts))
        .map(|(b, (&s, &n))| BlobVolume {
            name: b.name.clone(),
            family: b.family.clone(),
            pixels: n,
            volume: (s * area).as_f64(),
        })
        .collect();
    let total: f64 = blobs.iter().map(|b| b.volume).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVolume);
    }
    let families = mask
        .families()
        .into_iter()
        .map(|fam| {
            let volume: f64 = blobs
                .iter()
                .filter(|b| b.family == fam)
                .map(|b| b.volume)
                .sum();
            FamilyShare {
                family: fam.to_string(),
                volume,
                weight_percent: 100.0 * volume / total,
            }
        })
        .collect();
    Ok(QuantReport {
        blobs,
        families,
        total_volume: total,
        warnings,
    })
}

/// Inclusive pixel index range covering continuous positions `[lo, hi]`,
/// or `None` when it misses the grid.
fn index_span<T: Scalar>(lo: T, hi: T, n: usize) -> Option<(usize, usize)> {
    let max = T::from_usize_lossy(n - 1);
    if hi < T::zero() || lo > max {
        return None;
    }
    let a = lo.max(T::zero()).floor().to_usize()?;
    let b = hi.min(max).ceil().to_usize()?;
    Some((a, b.min(n - 1)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyDifference {
    pub family: String,
    pub a: f64,
    pub b: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportComparison {
    pub families: Vec<FamilyDifference>,
    pub max_abs_diff: f64,
}

/// Per-family `|a - b|` of weight percent over the union of families
/// (a missing family counts as 0 %).
pub fn compare_reports(a: &QuantReport, b: &QuantReport) -> ReportComparison {
    let mut names: Vec<&str> = a.families.iter().map(|f| f.family.as_str()).collect();
    for f in &b.families {
        if !names.contains(&f.family.as_str()) {
            names.push(&f.family);
        }
    }
    let families: Vec<FamilyDifference> = names
        .into_iter()
        .map(|n| {
            let (pa, pb) = (a.percent_of(n), b.percent_of(n));
            FamilyDifference {
                family: n.to_string(),
                a: pa,
                b: pb,
                abs_diff: (pa - pb).abs(),
            }
        })
        .collect();
    let max_abs_diff = families.iter().map(|d| d.abs_diff).fold(0.0, f64::max);
    ReportComparison {
        families,
        max_abs_diff,
    }
}

/// Text table with one weight-percent column per labelled report, one
/// decimal, families in order of first appearance across the reports.
pub fn family_table(columns: &[(&str, &QuantReport)]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for (_, r) in columns {
        for f in &r.families {
            if !names.contains(&f.family.as_str()) {
                names.push(&f.family);
            }
        }
    }
    let first = names
        .iter()
        .map(|n| n.len())
        .chain(["Chemical family".len()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = columns.iter().map(|(l, _)| l.len().max(6)).collect();
    let mut out = String::new();
    let span: usize = widths.iter().map(|w| w + 2).sum();
    writeln!(out, "{:first$}  {:^span$}", "", "Weight percent").unwrap();
    write!(out, "{:first$}", "Chemical family").unwrap();
    for ((label, _), w) in columns.iter().zip(&widths) {
        write!(out, "  {label:>w$}").unwrap();
    }
    out.push('\n');
    writeln!(out, "{}", "-".repeat(first + span)).unwrap();
    for n in names {
        write!(out, "{n:first$}").unwrap();
        for ((_, r), w) in columns.iter().zip(&widths) {
            write!(out, "  {:>w$.1}", r.percent_of(n)).unwrap();
        }
        out.push('\n');
    }
    out
}
