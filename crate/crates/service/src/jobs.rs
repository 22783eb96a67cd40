//! Registration jobs and their state machine.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use gcxgc_core::pipeline::PipelineConfig;
use gcxgc_core::{Connectivity, Error, KernelForm, Mode, RegistrationConfig};

/// Job states in the only order they can be visited. `Done` and `Error`
/// are terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Error,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Error)
    }
}

/// Body of `POST /sessions/{id}/register`; the same keys as the command-line
/// config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
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
}

impl RegisterRequest {
    pub fn pipeline(&self) -> Result<PipelineConfig, Error> {
        let h = |specific: Option<f64>, which: &str| {
            specific
                .or(self.h)
                .ok_or_else(|| Error::InvalidParameter(format!("h or h_{which} is required")))
        };
        let mut cfg = PipelineConfig::new(h(self.h_ref, "ref")?, h(self.h_target, "target")?);
        cfg.connectivity = match self.connectivity {
            None | Some(8) => Connectivity::Eight,
            Some(4) => Connectivity::Four,
            Some(c) => {
                return Err(Error::InvalidParameter(format!(
                    "connectivity must be 4 or 8, got {c}"
                )))
            }
        };
        let d = RegistrationConfig::default();
        cfg.registration = RegistrationConfig {
            w: self.w.unwrap_or(d.w),
            beta: self.beta.unwrap_or(d.beta),
            lambda: self.lambda.unwrap_or(d.lambda),
            mode: self.mode.unwrap_or(d.mode),
            kernel: self.kernel.unwrap_or(d.kernel),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Public view of a job.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub id: Uuid,
    pub session: Uuid,
    pub status: JobStatus,
    /// Every state the job has been in, oldest first.
    pub history: Vec<JobStatus>,
    pub request: RegisterRequest,
    /// Registration report and scores once done.
    pub summary: Option<Value>,
    /// `{"stage", "category", "message"}` on failure.
    pub error: Option<Value>,
}

#[derive(Default)]
pub struct JobTable {
    jobs: Mutex<HashMap<Uuid, Job>>,
}

impl JobTable {
    pub fn insert(&self, session: Uuid, request: RegisterRequest) -> Job {
        let job = Job {
            id: Uuid::new_v4(),
            session,
            status: JobStatus::Pending,
            history: vec![JobStatus::Pending],
            request,
            summary: None,
            error: None,
        };
        self.jobs.lock().unwrap().insert(job.id, job.clone());
        job
    }

    pub fn get(&self, id: &Uuid) -> Option<Job> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    pub fn for_session(&self, session: Uuid) -> Vec<Uuid> {
        let jobs = self.jobs.lock().unwrap();
        let mut ids: Vec<_> = jobs
            .values()
            .filter(|j| j.session == session)
            .map(|j| j.id)
            .collect();
        ids.sort();
        ids
    }

    /// Moves a job forward. Returns `false`, leaving the job untouched, for
    /// any transition that is not strictly forward out of a live state.
    pub fn advance(
        &self,
        id: &Uuid,
        status: JobStatus,
        summary: Option<Value>,
        error: Option<Value>,
    ) -> bool {
        let mut jobs = self.jobs.lock().unwrap();
        let Some(job) = jobs.get_mut(id) else {
            return false;
        };
        if job.status.is_terminal() || status <= job.status {
            return false;
        }
        job.status = status;
        job.history.push(status);
        job.summary = summary.or(job.summary.take());
        job.error = error.or(job.error.take());
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_only_move_forward() {
        let table = JobTable::default();
        let job = table.insert(Uuid::new_v4(), RegisterRequest::default());
        assert!(!table.advance(&job.id, JobStatus::Pending, None, None));
        assert!(table.advance(&job.id, JobStatus::Running, None, None));
        assert!(!table.advance(&job.id, JobStatus::Pending, None, None));
        assert!(table.advance(&job.id, JobStatus::Done, None, None));
        assert!(!table.advance(&job.id, JobStatus::Error, None, None));
        let seen = table.get(&job.id).unwrap();
        assert_eq!(
            seen.history,
            [JobStatus::Pending, JobStatus::Running, JobStatus::Done]
        );
    }

    #[test]
    fn request_defaults_follow_registration_defaults() {
        let req: RegisterRequest = serde_json::from_str(r#"{"h": 4}"#).unwrap();
        assert_eq!(req.pipeline().unwrap(), PipelineConfig::new(4.0, 4.0));
        let bad: RegisterRequest = serde_json::from_str(r#"{"w": 0.2}"#).unwrap();
        assert_eq!(bad.pipeline().unwrap_err().category(), "invalid_parameter");
        assert!(serde_json::from_str::<RegisterRequest>(r#"{"h": 1, "x": 2}"#).is_err());
    }
}
