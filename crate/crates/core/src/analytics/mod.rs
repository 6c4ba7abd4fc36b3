//! Post-hoc measures over a finished session log: stage durations and
//! coverage, substage feature means, oneness and peer-evaluation spread.

mod report;

pub use report::{write_report, AnalysisReport, Ratings};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{evaluate_window, FeatureDump, WindowConfig};
use crate::ingest::{non_silent, DiarizationFrame, EventKind, ReplayRecord, SessionEvent, SpeechActivityMatrix};
use crate::participant::{ParticipantId, Stage, GROUP_SIZE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("no {0} stage mark in the session log")]
    MissingStageMark(Stage),
    #[error("no countdown alert in the norming/performing stage")]
    MissingCountdownAlert,
    #[error("segment {0} contains no ticks")]
    EmptySegment(&'static str),
    #[error("oneness rating {scale}[{i}][{j}] is missing")]
    IncompleteRatings { scale: &'static str, i: usize, j: usize },
    #[error("oneness rating {scale}[{i}][{j}] = {value} is outside 1..=7")]
    RatingOutOfRange { scale: &'static str, i: usize, j: usize, value: u8 },
    #[error("rater {rater} allocates {sum} points, expected 100")]
    BadAllocation { rater: usize, sum: u32 },
    #[error("session log: {0}")]
    Log(String),
}

/// Frames and events recovered from a session log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    pub matrix: SpeechActivityMatrix,
    pub events: Vec<SessionEvent>,
}

impl SessionLog {
    pub fn from_records(records: &[ReplayRecord]) -> Result<Self, AnalyticsError> {
        let mut speakers = Vec::new();
        let mut events = Vec::new();
        for r in records {
            match r {
                ReplayRecord::Frame(DiarizationFrame { t, speaker }) => {
                    if *t as usize != speakers.len() {
                        return Err(AnalyticsError::Log(format!("frame t={t} out of sequence")));
                    }
                    speakers.push(*speaker);
                }
                ReplayRecord::Event(e) => events.push(e.clone()),
            }
        }
        Ok(SessionLog { matrix: SpeechActivityMatrix::from_speakers(speakers), events })
    }

    /// One past the last second of data.
    pub fn end(&self) -> u32 {
        self.matrix.len() as u32
    }

    fn first(&self, pred: impl Fn(&EventKind) -> bool) -> Option<u32> {
        self.events.iter().find(|e| pred(&e.kind)).map(|e| e.t)
    }

    fn stage_mark(&self, stage: Stage) -> Option<u32> {
        self.first(|k| matches!(k, EventKind::StageMark { stage: s } if *s == stage))
    }

    fn session_end(&self) -> u32 {
        self.first(|k| matches!(k, EventKind::SessionEnd)).unwrap_or(self.end()).min(self.end())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpan {
    pub stage: Stage,
    pub start: u32,
    pub end: u32,
    pub voiced_s: u32,
    pub duration_minutes: f64,
    /// Non-silent seconds over the whole span; 0 for an empty span.
    pub scr: f64,
}

/// Per-stage duration and coverage, each stage running from its mark to the
/// next mark (Adjourning to the session end).
pub fn stage_report(log: &SessionLog) -> Result<Vec<StageSpan>, AnalyticsError> {
    let marks: Vec<u32> = Stage::ALL
        .iter()
        .map(|&s| log.stage_mark(s).ok_or(AnalyticsError::MissingStageMark(s)))
        .collect::<Result<_, _>>()?;
    let end = log.session_end();
    Ok(Stage::ALL
        .iter()
        .enumerate()
        .map(|(i, &stage)| {
            let start = marks[i].min(end);
            let stop = marks.get(i + 1).copied().unwrap_or(end).clamp(start, end);
            let len = stop - start;
            let voiced = if len == 0 { 0 } else { non_silent(log.matrix.slice(start..=stop - 1)) };
            StageSpan {
                stage,
                start,
                end: stop,
                voiced_s: voiced,
                duration_minutes: f64::from(len) / 60.0,
                scr: if len == 0 { 0.0 } else { f64::from(voiced) / f64::from(len) },
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstageConfig {
    /// Span within which three different speakers must talk for the
    /// regular discussion to count as started.
    pub exchange_span_s: u32,
    pub min_speakers: usize,
}

impl Default for SubstageConfig {
    fn default() -> Self {
        SubstageConfig { exchange_span_s: 120, min_speakers: 3 }
    }
}

/// Half-open `[start, end)` spans inside the norming/performing stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstageBoundaries {
    pub initialization: (u32, u32),
    pub regular: (u32, u32),
    pub countdown: (u32, u32),
}

impl SubstageBoundaries {
    pub fn named(&self) -> [(&'static str, (u32, u32)); 3] {
        [("initialization", self.initialization), ("regular", self.regular), ("countdown", self.countdown)]
    }
}

/// Splits norming/performing into initialization, regular work and the
/// final countdown.
///
/// Regular work starts at the first speech onset after silence (or at the
/// stage start) from which `min_speakers` different people speak within
/// `exchange_span_s`. If that never happens before the countdown, the
/// initialization runs up to the countdown. The countdown ends at task
/// completion, the session end or the adjourning mark, whichever is first.
pub fn segment_substages(log: &SessionLog, cfg: &SubstageConfig) -> Result<SubstageBoundaries, AnalyticsError> {
    let t0 = log
        .stage_mark(Stage::NormingPerforming)
        .ok_or(AnalyticsError::MissingStageMark(Stage::NormingPerforming))?;
    let t2 = log
        .events
        .iter()
        .find(|e| e.t >= t0 && matches!(e.kind, EventKind::CountdownAlert))
        .map(|e| e.t)
        .ok_or(AnalyticsError::MissingCountdownAlert)?;
    let mut t_end = log.session_end();
    if let Some(t) = log.first(|k| matches!(k, EventKind::TaskComplete)).filter(|&t| t >= t2) {
        t_end = t_end.min(t);
    }
    if let Some(t) = log.stage_mark(Stage::Adjourning).filter(|&t| t >= t2) {
        t_end = t_end.min(t);
    }
    let t_end = t_end.max(t2);

    let rows = log.matrix.speakers();
    let voiced = |t: u32| rows.get(t as usize).copied().flatten();
    let t1 = (t0..t2)
        .filter(|&t| voiced(t).is_some() && (t == t0 || voiced(t - 1).is_none()))
        .find(|&s| {
            let stop = (s + cfg.exchange_span_s).min(t2);
            let mut seen = [false; GROUP_SIZE];
            (s..stop).filter_map(voiced).for_each(|p| seen[p.slot()] = true);
            seen.iter().filter(|&&b| b).count() >= cfg.min_speakers
        })
        .unwrap_or(t2);
    Ok(SubstageBoundaries { initialization: (t0, t1), regular: (t1, t2), countdown: (t2, t_end) })
}

/// Window features for every second of the log.
pub fn feature_series(log: &SessionLog, cfg: &WindowConfig) -> Vec<FeatureDump> {
    (0..log.end())
        .map(|t| evaluate_window(&log.matrix, t, cfg).expect("t is within the matrix").dump())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeans {
    pub ticks: usize,
    pub scr: f64,
    pub h_speech: f64,
    pub h_turn: f64,
}

/// Means of the per-tick window values whose window ends in `[start, end)`.
pub fn segment_mean(
    series: &[FeatureDump],
    (start, end): (u32, u32),
    name: &'static str,
) -> Result<SegmentMeans, AnalyticsError> {
    let ticks: Vec<&FeatureDump> = series.iter().filter(|d| d.t >= start && d.t < end).collect();
    if ticks.is_empty() {
        return Err(AnalyticsError::EmptySegment(name));
    }
    let n = ticks.len() as f64;
    let mean = |f: fn(&FeatureDump) -> f64| ticks.iter().map(|d| f(d)).sum::<f64>() / n;
    Ok(SegmentMeans { ticks: ticks.len(), scr: mean(|d| d.scr), h_speech: mean(|d| d.h_speech), h_turn: mean(|d| d.h_turn) })
}

/// Means for each substage. Empty substages (for instance no initialization
/// when discussion starts straight away) come back as `None`.
pub fn segment_metrics(
    series: &[FeatureDump],
    b: &SubstageBoundaries,
) -> Vec<(&'static str, (u32, u32), Option<SegmentMeans>)> {
    b.named().into_iter().map(|(name, span)| (name, span, segment_mean(series, span, name).ok())).collect()
}

/// Pairwise closeness ratings. `ios[i][j]` is what member i reports about
/// member j; the diagonal is ignored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OnenessRatings {
    pub ios: [[Option<u8>; GROUP_SIZE]; GROUP_SIZE],
    pub we_scale: [[Option<u8>; GROUP_SIZE]; GROUP_SIZE],
}

impl OnenessRatings {
    pub fn uniform(value: u8) -> Self {
        let m = [[Some(value); GROUP_SIZE]; GROUP_SIZE];
        OnenessRatings { ios: m, we_scale: m }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnenessResult {
    /// Diagonal is `None`.
    pub pairwise: [[Option<f64>; GROUP_SIZE]; GROUP_SIZE],
    pub per_member_min: [f64; GROUP_SIZE],
    pub group: f64,
}

/// Oneness_ij = (IOS_ij + We_ij)/2; each member's lowest rating of the
/// others; group oneness is the mean of those minima.
pub fn oneness(r: &OnenessRatings) -> Result<OnenessResult, AnalyticsError> {
    let mut pairwise = [[None; GROUP_SIZE]; GROUP_SIZE];
    for i in 0..GROUP_SIZE {
        for j in (0..GROUP_SIZE).filter(|&j| j != i) {
            let get = |scale: &'static str, m: &[[Option<u8>; GROUP_SIZE]; GROUP_SIZE]| {
                let v = m[i][j].ok_or(AnalyticsError::IncompleteRatings { scale, i, j })?;
                if !(1..=7).contains(&v) {
                    return Err(AnalyticsError::RatingOutOfRange { scale, i, j, value: v });
                }
                Ok(f64::from(v))
            };
            pairwise[i][j] = Some((get("ios", &r.ios)? + get("we_scale", &r.we_scale)?) / 2.0);
        }
    }
    let per_member_min: [f64; GROUP_SIZE] =
        std::array::from_fn(|i| pairwise[i].iter().flatten().copied().fold(f64::INFINITY, f64::min));
    let group = per_member_min.iter().sum::<f64>() / GROUP_SIZE as f64;
    Ok(OnenessResult { pairwise, per_member_min, group })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerEvalStats {
    pub per_rater_sd: Vec<f64>,
    pub mean_sd: f64,
}

/// Population SD of each rater's 100-point allocation across the members.
pub fn peer_eval_sd(allocations: &[[u32; GROUP_SIZE]]) -> Result<PeerEvalStats, AnalyticsError> {
    let per_rater_sd = allocations
        .iter()
        .enumerate()
        .map(|(rater, a)| {
            let sum: u32 = a.iter().sum();
            if sum != 100 {
                return Err(AnalyticsError::BadAllocation { rater, sum });
            }
            let mean = 100.0 / GROUP_SIZE as f64;
            let var = a.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / GROUP_SIZE as f64;
            Ok(var.sqrt())
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let mean_sd = if per_rater_sd.is_empty() { 0.0 } else { per_rater_sd.iter().sum::<f64>() / per_rater_sd.len() as f64 };
    Ok(PeerEvalStats { per_rater_sd, mean_sd })
}

/// Relabels ratings so member `perm[i]` takes the place of member `i`.
pub fn permute_ratings(r: &OnenessRatings, perm: &[ParticipantId; GROUP_SIZE]) -> OnenessRatings {
    let map = |m: &[[Option<u8>; GROUP_SIZE]; GROUP_SIZE]| {
        let mut out = [[None; GROUP_SIZE]; GROUP_SIZE];
        for i in 0..GROUP_SIZE {
            for j in 0..GROUP_SIZE {
                out[perm[i].slot()][perm[j].slot()] = m[i][j];
            }
        }
        out
    };
    OnenessRatings { ios: map(&r.ios), we_scale: map(&r.we_scale) }
}
