use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    feature_series, oneness, peer_eval_sd, segment_metrics, segment_substages, stage_report, AnalyticsError,
    OnenessRatings, OnenessResult, PeerEvalStats, SegmentMeans, SessionLog, StageSpan, SubstageBoundaries,
    SubstageConfig,
};
use crate::features::{FeatureDump, WindowConfig};
use crate::participant::{ParticipantId, GROUP_SIZE};

/// Questionnaire data supplied next to a session log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ratings {
    #[serde(default)]
    pub oneness: Option<OnenessRatings>,
    /// One 100-point allocation per rater.
    #[serde(default)]
    pub peer: Vec<[u32; GROUP_SIZE]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub stages: Vec<StageSpan>,
    pub substages: Option<SubstageBoundaries>,
    pub substage_metrics: Vec<(&'static str, (u32, u32), Option<SegmentMeans>)>,
    pub oneness: Option<OnenessResult>,
    pub peer: Option<PeerEvalStats>,
    pub features: Vec<FeatureDump>,
    /// Parts that could not be computed, and why.
    pub notes: Vec<String>,
}

impl AnalysisReport {
    /// Computes everything the log and ratings allow. Missing marks or
    /// ratings skip the dependent tables; bad ratings are errors.
    pub fn build(
        log: &SessionLog,
        ratings: Option<&Ratings>,
        window: &WindowConfig,
        substage: &SubstageConfig,
    ) -> Result<Self, AnalyticsError> {
        let mut notes = Vec::new();
        let stages = stage_report(log).unwrap_or_else(|e| {
            notes.push(format!("stage report skipped: {e}"));
            Vec::new()
        });
        let features = feature_series(log, window);
        let substages = segment_substages(log, substage)
            .map_err(|e| notes.push(format!("substages skipped: {e}")))
            .ok();
        let substage_metrics = substages.map(|b| segment_metrics(&features, &b)).unwrap_or_default();
        let oneness = ratings.and_then(|r| r.oneness.as_ref()).map(oneness).transpose()?;
        let peer = match ratings {
            Some(r) if !r.peer.is_empty() => Some(peer_eval_sd(&r.peer)?),
            _ => None,
        };
        Ok(AnalysisReport { stages, substages, substage_metrics, oneness, peer, features, notes })
    }
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::Other, e)
}

/// Writes `stage_report.csv`, `substages.csv`, `oneness.csv`, `peer_sd.csv`
/// (when rated) and `features.ndjson` into `dir`.
pub fn write_report(dir: &Path, report: &AnalysisReport) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut w = csv::Writer::from_path(dir.join("stage_report.csv")).map_err(csv_err)?;
    w.write_record(["stage", "start_s", "end_s", "voiced_s", "duration_min", "scr"]).map_err(csv_err)?;
    for s in &report.stages {
        w.write_record([
            s.stage.name().to_string(),
            s.start.to_string(),
            s.end.to_string(),
            s.voiced_s.to_string(),
            format!("{:.2}", s.duration_minutes),
            format!("{:.2}", s.scr),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    written.push("stage_report.csv".to_string());

    let mut w = csv::Writer::from_path(dir.join("substages.csv")).map_err(csv_err)?;
    w.write_record(["segment", "start_s", "end_s", "ticks", "mean_scr", "mean_h_speech", "mean_h_turn"])
        .map_err(csv_err)?;
    for (name, (start, end), m) in &report.substage_metrics {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        w.write_record([
            name.to_string(),
            start.to_string(),
            end.to_string(),
            m.map_or(0, |m| m.ticks).to_string(),
            f(m.map(|m| m.scr)),
            f(m.map(|m| m.h_speech)),
            f(m.map(|m| m.h_turn)),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    written.push("substages.csv".to_string());

    if let Some(o) = &report.oneness {
        let mut w = csv::Writer::from_path(dir.join("oneness.csv")).map_err(csv_err)?;
        let mut header = vec!["member".to_string()];
        header.extend(ParticipantId::ALL.iter().map(|p| p.to_string()));
        header.push("min".into());
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in o.pairwise.iter().enumerate() {
            let mut rec = vec![ParticipantId::from_slot(i).to_string()];
            rec.extend(row.iter().map(|v| v.map(|v| format!("{v:.1}")).unwrap_or_default()));
            rec.push(format!("{:.1}", o.per_member_min[i]));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let mut group = vec!["group".to_string()];
        group.extend(std::iter::repeat(String::new()).take(GROUP_SIZE));
        group.push(format!("{:.3}", o.group));
        w.write_record(&group).map_err(csv_err)?;
        w.flush()?;
        written.push("oneness.csv".to_string());
    }

    if let Some(p) = &report.peer {
        let mut w = csv::Writer::from_path(dir.join("peer_sd.csv")).map_err(csv_err)?;
        w.write_record(["rater", "sd"]).map_err(csv_err)?;
        for (i, sd) in p.per_rater_sd.iter().enumerate() {
            w.write_record([i.to_string(), format!("{sd:.2}")]).map_err(csv_err)?;
        }
        w.write_record(["mean".to_string(), format!("{:.2}", p.mean_sd)]).map_err(csv_err)?;
        w.flush()?;
        written.push("peer_sd.csv".to_string());
    }

    let mut dump = String::new();
    for f in &report.features {
        dump.push_str(&serde_json::to_string(f).expect("feature dumps serialize"));
        dump.push('\n');
    }
    std::fs::write(dir.join("features.ndjson"), dump)?;
    written.push("features.ndjson".to_string());
    Ok(written)
}
