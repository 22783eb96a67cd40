//! Directory-per-session persistence.
//!
//! ```text
//! <root>/<session id>/session.json
//!                    /reference.<ext>   (+ .meta.json sidecar)
//!                    /target.<ext>      (+ .meta.json sidecar)
//!                    /template.mask     (optional)
//!                    /aoi_ref.aoi, aoi_target.aoi (optional)
//!                    /artifacts/<pipeline artifact names>
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use base64::Engine;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use gcxgc_core::io::{
    aoi_to_string, load_grid, mask_to_string, parse_aoi, parse_mask, read_aoi, read_mask,
    sidecar_path, GridEncoding, GridMetadata, LuminancePolicy,
};
use gcxgc_core::pipeline::{ArtifactSet, PipelineInputs};
use gcxgc_core::{AreaOfInterest, Error, Grid, TemplateMask};

use crate::error::{ApiError, ApiResult};

const SESSION_FILE: &str = "session.json";
const TEMPLATE_FILE: &str = "template.mask";
const ARTIFACT_DIR: &str = "artifacts";

/// Which chromatogram of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Reference,
    Target,
}

impl Which {
    /// Accepts `ref`/`reference` and `target`.
    pub fn parse(s: &str) -> ApiResult<Which> {
        match s {
            "ref" | "reference" => Ok(Which::Reference),
            "target" => Ok(Which::Target),
            _ => Err(ApiError::not_found(format!("no chromatogram {s:?}"))),
        }
    }

    fn aoi_file(self) -> &'static str {
        match self {
            Which::Reference => "aoi_ref.aoi",
            Which::Target => "aoi_target.aoi",
        }
    }
}

/// Uploaded grid: file extension, base64 file bytes and optional sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridUpload {
    pub format: String,
    pub data: String,
    #[serde(default)]
    pub meta: Option<GridMetadata>,
}

impl GridUpload {
    pub fn new(format: &str, bytes: &[u8], meta: Option<GridMetadata>) -> Self {
        GridUpload {
            format: format.to_string(),
            data: base64::engine::general_purpose::STANDARD.encode(bytes),
            meta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub reference: GridUpload,
    pub target: GridUpload,
    /// Template mask in the textual mask format.
    #[serde(default)]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionFile {
    reference: String,
    target: String,
}

pub struct Session {
    pub id: Uuid,
    dir: PathBuf,
    files: SessionFile,
    writer: Mutex<()>,
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes through a temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

impl Session {
    /// Exclusive access to the session directory.
    pub fn lock(&self) -> MutexGuard<'_, ()> {
        self.writer.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn grid_path(&self, which: Which) -> PathBuf {
        self.dir.join(match which {
            Which::Reference => &self.files.reference,
            Which::Target => &self.files.target,
        })
    }

    pub fn template_path(&self) -> PathBuf {
        self.dir.join(TEMPLATE_FILE)
    }

    pub fn aoi_path(&self, which: Which) -> PathBuf {
        self.dir.join(which.aoi_file())
    }

    pub fn artifact_path(&self, name: &str) -> PathBuf {
        self.dir.join(ARTIFACT_DIR).join(name)
    }

    pub fn has_template(&self) -> bool {
        self.template_path().exists()
    }

    pub fn load_grid(&self, which: Which) -> Result<Grid<f64>, Error> {
        load_grid(&self.grid_path(which), &LuminancePolicy::default())
    }

    pub fn load_template(&self) -> Result<Option<TemplateMask>, Error> {
        let path = self.template_path();
        path.exists().then(|| read_mask(&path)).transpose()
    }

    pub fn load_aoi(&self, which: Which) -> Result<Option<AreaOfInterest>, Error> {
        let path = self.aoi_path(which);
        path.exists().then(|| read_aoi(&path)).transpose()
    }

    /// Everything a pipeline run needs, read from disk.
    pub fn inputs(&self) -> Result<PipelineInputs, Error> {
        Ok(PipelineInputs {
            reference: self.load_grid(Which::Reference)?,
            target: self.load_grid(Which::Target)?,
            mask: self.load_template()?,
            aoi_ref: self.load_aoi(Which::Reference)?,
            aoi_target: self.load_aoi(Which::Target)?,
        })
    }

    pub fn store_aoi(&self, which: Which, aoi: &AreaOfInterest) -> Result<(), Error> {
        write_atomic(&self.aoi_path(which), aoi_to_string(aoi).as_bytes())
    }

    /// Writes `set` into the artifact directory, replacing files of the same name.
    pub fn store_artifacts(&self, set: &ArtifactSet) -> Result<(), Error> {
        let dir = self.dir.join(ARTIFACT_DIR);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for (name, bytes) in &set.files {
            write_atomic(&dir.join(name), bytes)?;
        }
        Ok(())
    }

    /// Drops every artifact of a previous run.
    pub fn clear_artifacts(&self) -> Result<(), Error> {
        let dir = self.dir.join(ARTIFACT_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        Ok(())
    }

    pub fn read_artifact(&self, name: &str) -> Option<Vec<u8>> {
        fs::read(self.artifact_path(name)).ok()
    }
}

/// All sessions under one root directory.
pub struct Store {
    root: PathBuf,
    sessions: RwLock<HashMap<Uuid, Arc<Session>>>,
}

fn grid_file_name(stem: &str, format: &str) -> ApiResult<String> {
    let ext = format.to_ascii_lowercase();
    let name = format!("{stem}.{ext}");
    GridEncoding::from_path(Path::new(&name)).map_err(ApiError::invalid)?;
    Ok(name)
}

impl Store {
    /// Opens `root`, creating it if needed, and loads every session found in it.
    pub fn open(root: &Path) -> Result<Store, Error> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(root).map_err(|e| io_err(root, e))? {
            let entry = entry.map_err(|e| io_err(root, e))?;
            let Some(id) = entry
                .file_name()
                .to_str()
                .and_then(|s| Uuid::parse_str(s).ok())
            else {
                continue;
            };
            let file = entry.path().join(SESSION_FILE);
            let Ok(text) = fs::read_to_string(&file) else {
                continue;
            };
            let files: SessionFile = serde_json::from_str(&text)?;
            sessions.insert(
                id,
                Arc::new(Session {
                    id,
                    dir: entry.path(),
                    files,
                    writer: Mutex::new(()),
                }),
            );
        }
        Ok(Store {
            root: root.to_path_buf(),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<Session>> {
        Uuid::parse_str(id)
            .ok()
            .and_then(|id| self.sessions.read().unwrap().get(&id).cloned())
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))
    }

    /// Validates the uploads, then persists them as a new session.
    pub fn create(&self, req: &CreateSession) -> ApiResult<Arc<Session>> {
        let files = SessionFile {
            reference: grid_file_name("reference", &req.reference.format)?,
            target: grid_file_name("target", &req.target.format)?,
        };
        let decode = |u: &GridUpload| {
            base64::engine::general_purpose::STANDARD
                .decode(u.data.as_bytes())
                .map_err(|e| ApiError::invalid(Error::InvalidParameter(format!("base64: {e}"))))
        };
        let uploads = [
            (
                &files.reference,
                decode(&req.reference)?,
                &req.reference.meta,
            ),
            (&files.target, decode(&req.target)?, &req.target.meta),
        ];
        let mask = req
            .mask
            .as_deref()
            .map(parse_mask::<f64>)
            .transpose()
            .map_err(ApiError::invalid)?;

        let id = Uuid::new_v4();
        let dir = self.root.join(id.to_string());
        let session = Session {
            id,
            dir: dir.clone(),
            files: files.clone(),
            writer: Mutex::new(()),
        };
        let persist = || -> Result<(), Error> {
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
            for (name, bytes, meta) in &uploads {
                let path = dir.join(name);
                write_atomic(&path, bytes)?;
                if let Some(meta) = meta {
                    write_atomic(&sidecar_path(&path), meta.to_json().as_bytes())?;
                }
            }
            if let Some(mask) = &mask {
                write_atomic(&dir.join(TEMPLATE_FILE), mask_to_string(mask).as_bytes())?;
            }
            Ok(())
        };
        let checked = persist().and_then(|_| {
            let r = session.load_grid(Which::Reference)?;
            let t = session.load_grid(Which::Target)?;
            r.validate_intensities()?;
            t.validate_intensities()
        });
        if let Err(e) = checked {
            let _ = fs::remove_dir_all(&dir);
            return Err(e.into());
        }
        write_atomic(
            &dir.join(SESSION_FILE),
            serde_json::to_string_pretty(&files)
                .expect("session file serializes")
                .as_bytes(),
        )?;
        let session = Arc::new(session);
        self.sessions.write().unwrap().insert(id, session.clone());
        Ok(session)
    }
}

/// Parses an AOI document, mapping failures to 422.
pub fn parse_aoi_body(text: &str) -> ApiResult<AreaOfInterest> {
    parse_aoi(text).map_err(ApiError::invalid)
}
