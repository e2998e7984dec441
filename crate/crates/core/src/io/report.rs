//! Evaluation report over one or two traces.
//!
//! One trace: synchrony between its two characters. Two traces: the same
//! per trace, plus per-character synchrony between the traces (over their
//! common length) and the Fréchet distance between their distance-feature
//! populations.

use ndarray::s;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::metrics::{dmss_report, fdd, DmssConfig, DmssReport, FramePair, JointProxies, MetricsError};
use crate::motion::{CharacterId, PerCharacter};
use crate::trace::MotionTrace;

pub const REPORT_FORMAT: &str = "dyadic-eval-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMetrics {
    pub label: String,
    pub frames: usize,
    pub duration_s: f64,
    /// Character I against character II.
    pub dyadic_dmss: DmssReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossMetrics {
    pub frames_compared: usize,
    /// Each character of the first trace against the same character of the
    /// second.
    pub dmss: PerCharacter<DmssReport>,
    pub fdd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub dmss_config: DmssConfig,
    pub traces: Vec<TraceMetrics>,
    pub cross: Option<CrossMetrics>,
}

fn report_finite(r: &DmssReport) -> bool {
    r.mean.is_finite() && r.windows.iter().all(|w| w.score.map_or(true, f64::is_finite))
}

impl EvalReport {
    pub fn all_finite(&self) -> bool {
        self.traces.iter().all(|t| report_finite(&t.dyadic_dmss))
            && self.cross.as_ref().map_or(true, |c| {
                c.fdd.is_finite() && CharacterId::BOTH.iter().all(|&w| report_finite(c.dmss.get(w)))
            })
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serializes to JSON");
        bytes.push(b'\n');
        bytes
    }
}

fn frame_pairs(trace: &MotionTrace) -> Vec<FramePair> {
    let a = trace.stitched(CharacterId::I);
    let b = trace.stitched(CharacterId::II);
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| FramePair {
            first: x.to_vec(),
            second: y.to_vec(),
        })
        .collect()
}

/// Builds the report for one or two labelled traces.
pub fn eval_report(traces: &[(&str, &MotionTrace)], config: &DmssConfig) -> Result<EvalReport, IoError> {
    if traces.is_empty() || traces.len() > 2 {
        return Err(IoError::Validation {
            location: "arguments".into(),
            message: format!("expected one or two traces, got {}", traces.len()),
        });
    }
    let mut per_trace = Vec::with_capacity(traces.len());
    for (label, t) in traces {
        let skel = &t.header.skeleton;
        let selector = config.selector(skel)?;
        let a = t.stitched(CharacterId::I);
        let b = t.stitched(CharacterId::II);
        per_trace.push(TraceMetrics {
            label: (*label).to_string(),
            frames: t.total_frames(),
            duration_s: t.duration_s(),
            dyadic_dmss: dmss_report(a.view(), b.view(), &selector, config)?,
        });
    }
    let cross = match traces {
        [(_, x), (_, y)] => {
            if x.header.skeleton != y.header.skeleton {
                return Err(MetricsError::SkeletonMismatch.into());
            }
            let skel = &x.header.skeleton;
            let selector = config.selector(skel)?;
            let n = x.total_frames().min(y.total_frames());
            let dmss = PerCharacter::try_from_fn(|who| {
                let a = x.stitched(who);
                let b = y.stitched(who);
                dmss_report(a.slice(s![..n, ..]), b.slice(s![..n, ..]), &selector, config)
            })?;
            let proxies = JointProxies::for_skeleton(skel)?;
            Some(CrossMetrics {
                frames_compared: n,
                dmss,
                fdd: fdd(&frame_pairs(x), &frame_pairs(y), &proxies)?,
            })
        }
        _ => None,
    };
    Ok(EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        dmss_config: config.clone(),
        traces: per_trace,
        cross,
    })
}
