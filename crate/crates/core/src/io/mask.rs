//! Line-oriented text formats for template masks and areas of interest.
//!
//! Mask document:
//!
//! ```text
//! gcxgc-mask 1
//! # comment lines and blank lines are ignored
//! blob<TAB>nC10<TAB>n-paraffins<TAB>12.5,3.1 13.0,3.1 12.75,3.6
//! ```
//!
//! Area-of-interest document:
//!
//! ```text
//! gcxgc-aoi 1
//! label<TAB>saturates + aromatics
//! polygon<TAB>0,0 10,0 10,5 0,5
//! ```
//!
//! Vertices are `axis1,axis2` pairs in retention units separated by single
//! spaces. Numbers are written in shortest round-trip form so that
//! `read(write(x)) == x` holds bit-for-bit.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};
use crate::scalar::Scalar;

pub const MASK_MAGIC: &str = "gcxgc-mask";
pub const AOI_MAGIC: &str = "gcxgc-aoi";
pub const FORMAT_VERSION: u32 = 1;

/// Named polygonal region tagged with a chemical family.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob<T: Scalar> {
    pub name: String,
    pub family: String,
    pub polygon: Polygon<T>,
}

/// Ordered set of blobs with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateMask<T: Scalar> {
    blobs: Vec<Blob<T>>,
}

fn check_text_field(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidParameter(format!("{kind} must not be empty")));
    }
    if s.chars().any(char::is_control) || s.trim() != s {
        return Err(Error::InvalidParameter(format!(
            "{kind} {s:?} contains control characters or surrounding whitespace"
        )));
    }
    Ok(())
}

impl<T: Scalar> TemplateMask<T> {
    /// Validates name uniqueness and field syntax. Polygons are validated on
    /// construction of each [`Polygon`].
    pub fn new(blobs: Vec<Blob<T>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for b in &blobs {
            check_text_field("blob name", &b.name)?;
            check_text_field("family", &b.family)?;
            if !seen.insert(b.name.as_str()) {
                return Err(Error::DuplicateBlob(b.name.clone()));
            }
        }
        Ok(TemplateMask { blobs })
    }

    pub fn blobs(&self) -> &[Blob<T>] {
        &self.blobs
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Blob<T>> {
        self.blobs.iter().find(|b| b.name == name)
    }

    /// Families in first-appearance order.
    pub fn families(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for b in &self.blobs {
            if !out.contains(&b.family.as_str()) {
                out.push(&b.family);
            }
        }
        out
    }

    pub fn into_blobs(self) -> Vec<Blob<T>> {
        self.blobs
    }
}

/// Area of interest drawn by the analyst.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaOfInterest<T: Scalar> {
    pub polygon: Polygon<T>,
    pub label: String,
}

impl<T: Scalar> AreaOfInterest<T> {
    pub fn new(polygon: Polygon<T>, label: impl Into<String>) -> Self {
        AreaOfInterest {
            polygon,
            label: label.into(),
        }
    }

    pub fn contains(&self, p: Point<T>) -> bool {
        self.polygon.contains(p)
    }
}

fn format_vertices<T: Scalar>(poly: &Polygon<T>) -> String {
    poly.vertices()
        .iter()
        .map(|v| format!("{},{}", v[0], v[1]))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_vertices<T: Scalar>(what: &'static str, line: usize, s: &str) -> Result<Vec<Point<T>>> {
    s.split_whitespace()
        .map(|pair| {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| Error::parse(what, line, format!("vertex {pair:?} lacks ','")))?;
            let parse = |x: &str| {
                x.parse::<T>()
                    .map_err(|_| Error::parse(what, line, format!("bad number {x:?}")))
            };
            Ok([parse(a)?, parse(b)?])
        })
        .collect()
}

/// Non-comment, non-blank lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn check_header(what: &'static str, magic: &str, first: Option<(usize, &str)>) -> Result<()> {
    let (line, text) = first.ok_or_else(|| Error::parse(what, 1, "empty document"))?;
    let mut parts = text.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::parse(
            what,
            line,
            format!("expected header {magic:?}"),
        ));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(what, line, "missing format version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::parse(
            what,
            line,
            format!("unsupported version {version}"),
        ));
    }
    Ok(())
}

pub fn mask_to_string<T: Scalar>(mask: &TemplateMask<T>) -> String {
    let mut out = format!("{MASK_MAGIC} {FORMAT_VERSION}\n");
    for b in mask.blobs() {
        out.push_str(&format!(
            "blob\t{}\t{}\t{}\n",
            b.name,
            b.family,
            format_vertices(&b.polygon)
        ));
    }
    out
}

pub fn parse_mask<T: Scalar>(text: &str) -> Result<TemplateMask<T>> {
    const WHAT: &str = "mask";
    let mut lines = content_lines(text);
    check_header(WHAT, MASK_MAGIC, lines.next())?;
    let mut blobs = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 4 || fields[0] != "blob" {
            return Err(Error::parse(
                WHAT,
                line,
                "expected 'blob<TAB>name<TAB>family<TAB>vertices'",
            ));
        }
        let vertices = parse_vertices(WHAT, line, fields[3])?;
        let polygon = Polygon::new(vertices).map_err(|e| match e {
            Error::InvalidPolygon(m) => {
                Error::InvalidPolygon(format!("blob {:?} (line {line}): {m}", fields[1]))
            }
            other => other,
        })?;
        blobs.push(Blob {
            name: fields[1].to_string(),
            family: fields[2].to_string(),
            polygon,
        });
    }
    TemplateMask::new(blobs)
}

pub fn read_mask<T: Scalar>(path: &Path) -> Result<TemplateMask<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mask(&text)
}

pub fn write_mask<T: Scalar>(mask: &TemplateMask<T>, path: &Path) -> Result<()> {
    fs::write(path, mask_to_string(mask)).map_err(|e| Error::io(path, e))
}

pub fn aoi_to_string<T: Scalar>(aoi: &AreaOfInterest<T>) -> String {
    format!(
        "{AOI_MAGIC} {FORMAT_VERSION}\nlabel\t{}\npolygon\t{}\n",
        aoi.label,
        format_vertices(&aoi.polygon)
    )
}

pub fn parse_aoi<T: Scalar>(text: &str) -> Result<AreaOfInterest<T>> {
    const WHAT: &str = "area of interest";
    let mut lines = content_lines(text);
    check_header(WHAT, AOI_MAGIC, lines.next())?;
    let mut label = None;
    let mut polygon = None;
    for (line, l) in lines {
        match l.split_once('\t') {
            Some(("label", v)) if label.is_none() => label = Some(v.to_string()),
            Some(("polygon", v)) if polygon.is_none() => {
                polygon = Some(Polygon::new(parse_vertices(WHAT, line, v)?)?)
            }
            _ => return Err(Error::parse(WHAT, line, "unexpected record")),
        }
    }
    let polygon = polygon.ok_or_else(|| Error::parse(WHAT, 1, "missing polygon record"))?;
    let label = label.unwrap_or_default();
    if label.chars().any(char::is_control) {
        return Err(Error::parse(WHAT, 1, "label contains control characters"));
    }
    Ok(AreaOfInterest { polygon, label })
}

pub fn read_aoi<T: Scalar>(path: &Path) -> Result<AreaOfInterest<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_aoi(&text)
}

pub fn write_aoi<T: Scalar>(aoi: &AreaOfInterest<T>, path: &Path) -> Result<()> {
    if aoi.label.chars().any(char::is_control) {
        return Err(Error::InvalidParameter(
            "label contains control characters".into(),
        ));
    }
    fs::write(path, aoi_to_string(aoi)).map_err(|e| Error::io(path, e))
}
