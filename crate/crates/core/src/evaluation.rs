//! Recall at tolerance, slice failure flags and per-log summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::SelectorKind;
use crate::geometry::PoseError;
use crate::selection::PlacePartition;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("cannot compute recall over zero frames")]
    EmptyInput,
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("results line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A frame counts as localized when both errors are within tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceBin {
    pub t_tol: f64,
    pub r_tol: f64,
}

impl ToleranceBin {
    pub fn new(t_tol: f64, r_tol: f64) -> Result<Self, EvaluationError> {
        let bin = Self { t_tol, r_tol };
        bin.validate()?;
        Ok(bin)
    }

    pub fn validate(&self) -> Result<(), EvaluationError> {
        if !(self.t_tol > 0.0 && self.r_tol > 0.0 && self.t_tol.is_finite() && self.r_tol.is_finite()) {
            return Err(EvaluationError::Config(format!(
                "tolerance bin ({} m, {} deg) must be positive",
                self.t_tol, self.r_tol
            )));
        }
        Ok(())
    }

    pub fn admits(&self, e: &PoseError<f64>) -> bool {
        e.translation_err <= self.t_tol && e.rotation_err <= self.r_tol
    }

    /// Short label such as `0.25m_2deg`.
    pub fn label(&self) -> String {
        format!("{}m_{}deg", self.t_tol, self.r_tol)
    }
}

pub fn default_bins() -> Vec<ToleranceBin> {
    vec![
        ToleranceBin {
            t_tol: 0.25,
            r_tol: 2.0,
        },
        ToleranceBin { t_tol: 0.5, r_tol: 5.0 },
        ToleranceBin {
            t_tol: 5.0,
            r_tol: 10.0,
        },
    ]
}

/// Minimum acceptable recall (percent) per bin; a slice below it has failed.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureThresholds {
    pub min_recall_pct: Vec<f64>,
}

impl Default for FailureThresholds {
    fn default() -> Self {
        Self {
            min_recall_pct: vec![30.0, 50.0, 70.0],
        }
    }
}

impl FailureThresholds {
    pub fn validate(&self, num_bins: usize) -> Result<(), EvaluationError> {
        if self.min_recall_pct.len() != num_bins {
            return Err(EvaluationError::Config(format!(
                "{} failure thresholds for {num_bins} tolerance bins",
                self.min_recall_pct.len()
            )));
        }
        if self.min_recall_pct.iter().any(|t| !(*t > 0.0 && *t <= 100.0)) {
            return Err(EvaluationError::Config(
                "failure thresholds must lie in (0, 100]".into(),
            ));
        }
        if self.min_recall_pct.windows(2).any(|w| w[1] < w[0]) {
            return Err(EvaluationError::Config(
                "failure thresholds must be non-decreasing".into(),
            ));
        }
        Ok(())
    }

    /// Strictly below the threshold is a failure; the boundary passes.
    pub fn is_failure(&self, bin: usize, recall_pct: f64) -> bool {
        recall_pct < self.min_recall_pct[bin]
    }
}

/// Percentage of frames within `bin`. Failed frames carry infinite error.
pub fn recall_at(errors: &[PoseError<f64>], bin: &ToleranceBin) -> Result<f64, EvaluationError> {
    if errors.is_empty() {
        return Err(EvaluationError::EmptyInput);
    }
    let hits = errors.iter().filter(|e| bin.admits(e)).count();
    Ok(100.0 * hits as f64 / errors.len() as f64)
}

/// One query frame as localized by one selector.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub selector: SelectorKind,
    pub log: String,
    pub slice: usize,
    pub frame: usize,
    pub camera: usize,
    pub success: bool,
    pub inliers: usize,
    pub matched: usize,
    /// Localization pipelines run to produce this frame's pose.
    pub localizations: usize,
    pub error: PoseError<f64>,
}

pub const RECORDS_HEADER: &str = "selector,log,slice,frame,camera,status,inliers,matched,localizations,t_err,r_err";

#[derive(Serialize, Deserialize)]
struct RecordRow {
    selector: String,
    log: String,
    slice: usize,
    frame: usize,
    camera: usize,
    status: String,
    inliers: usize,
    matched: usize,
    localizations: usize,
    t_err: f64,
    r_err: f64,
}

pub fn records_to_csv(records: &[FrameRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(RecordRow {
            selector: r.selector.to_string(),
            log: r.log.clone(),
            slice: r.slice,
            frame: r.frame,
            camera: r.camera,
            status: if r.success { "success" } else { "failed" }.into(),
            inliers: r.inliers,
            matched: r.matched,
            localizations: r.localizations,
            t_err: r.error.translation_err,
            r_err: r.error.rotation_err,
        })
        .expect("writing to memory");
    }
    if records.is_empty() {
        return format!("{RECORDS_HEADER}\n");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 fields")
}

pub fn records_from_csv(text: &str) -> Result<Vec<FrameRecord>, EvaluationError> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    if !rd.headers().is_ok_and(|h| h.iter().eq(RECORDS_HEADER.split(','))) {
        return Err(EvaluationError::Parse {
            line: 1,
            message: format!("expected header `{RECORDS_HEADER}`"),
        });
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| EvaluationError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| EvaluationError::Parse { line, message };
        let row: RecordRow = row.deserialize(None).map_err(|e| err(e.to_string()))?;
        let success = match row.status.as_str() {
            "success" => true,
            "failed" => false,
            other => return Err(err(format!("bad status `{other}`"))),
        };
        out.push(FrameRecord {
            selector: row.selector.parse().map_err(err)?,
            log: row.log,
            slice: row.slice,
            frame: row.frame,
            camera: row.camera,
            success,
            inliers: row.inliers,
            matched: row.matched,
            localizations: row.localizations,
            error: PoseError {
                translation_err: row.t_err,
                rotation_err: row.r_err,
            },
        });
    }
    Ok(out)
}

/// Recall of one selector on one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRecall {
    pub selector: SelectorKind,
    pub log: String,
    pub slice_id: usize,
    pub frame_count: usize,
    pub recall_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceReport {
    pub selector: SelectorKind,
    pub log: String,
    pub slice_id: usize,
    pub frame_count: usize,
    pub recall_pct: Vec<f64>,
    pub failed: Vec<bool>,
}

/// Groups records into (selector, log, slice) cells, sorted by that key.
fn group<K: Ord>(records: &[FrameRecord], key: impl Fn(&FrameRecord) -> K) -> BTreeMap<K, Vec<&FrameRecord>> {
    let mut groups: BTreeMap<K, Vec<&FrameRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
}

fn recalls(records: &[&FrameRecord], bins: &[ToleranceBin]) -> Vec<f64> {
    let errors: Vec<PoseError<f64>> = records.iter().map(|r| r.error).collect();
    bins.iter()
        .map(|b| recall_at(&errors, b).expect("groups are non-empty"))
        .collect()
}

pub fn slice_recalls(records: &[FrameRecord], bins: &[ToleranceBin]) -> Vec<SliceRecall> {
    group(records, |r| (r.selector, r.log.clone(), r.slice))
        .into_iter()
        .map(|((selector, log, slice_id), rs)| SliceRecall {
            selector,
            log,
            slice_id,
            frame_count: rs.len(),
            recall_pct: recalls(&rs, bins),
        })
        .collect()
}

pub fn classify_slices(recalls: &[SliceRecall], thresholds: &FailureThresholds) -> Vec<SliceReport> {
    recalls
        .iter()
        .map(|s| SliceReport {
            selector: s.selector,
            log: s.log.clone(),
            slice_id: s.slice_id,
            frame_count: s.frame_count,
            failed: s
                .recall_pct
                .iter()
                .enumerate()
                .map(|(b, r)| thresholds.is_failure(b, *r))
                .collect(),
            recall_pct: s.recall_pct.clone(),
        })
        .collect()
}

/// One row of the per-log table: frame-weighted recall plus failed-slice tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub selector: SelectorKind,
    pub log: String,
    pub slices: usize,
    pub frames: usize,
    pub recall_pct: Vec<f64>,
    pub failed_slices: Vec<usize>,
}

impl SummaryRow {
    pub fn failed_pct(&self, bin: usize) -> f64 {
        100.0 * self.failed_slices[bin] as f64 / self.slices as f64
    }
}

pub const ALL_LOGS: &str = "all";

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub bins: Vec<ToleranceBin>,
    pub slices: Vec<SliceReport>,
    /// Per (selector, log); when there is more than one log, followed by one
    /// [`ALL_LOGS`] row per selector.
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    /// Row for `selector` in `log`; [`ALL_LOGS`] finds the whole-run row,
    /// which for a single-log run is that log's row.
    pub fn row(&self, selector: SelectorKind, log: &str) -> Option<&SummaryRow> {
        let find = |log: &str| self.rows.iter().find(|r| r.selector == selector && r.log == log);
        find(log).or_else(|| {
            let mut own = self.rows.iter().filter(|r| r.selector == selector);
            match (log == ALL_LOGS, own.next(), own.next()) {
                (true, Some(only), None) => Some(only),
                _ => None,
            }
        })
    }

    /// One whole-run row per selector, in selector order.
    pub fn overall(&self) -> impl Iterator<Item = &SummaryRow> {
        let mut selectors: Vec<_> = self.rows.iter().map(|r| r.selector).collect();
        selectors.dedup();
        selectors.into_iter().filter_map(|k| self.row(k, ALL_LOGS))
    }

    pub fn failed_slices(&self, selector: SelectorKind, bin: usize) -> usize {
        self.row(selector, ALL_LOGS).map_or(0, |r| r.failed_slices[bin])
    }
}

/// Aggregates raw per-frame records into slice reports and per-log rows.
pub fn summarize(
    records: &[FrameRecord],
    bins: &[ToleranceBin],
    thresholds: &FailureThresholds,
) -> Result<Summary, EvaluationError> {
    for b in bins {
        b.validate()?;
    }
    thresholds.validate(bins.len())?;
    let slices = classify_slices(&slice_recalls(records, bins), thresholds);

    let row = |selector: SelectorKind, log: &str, rs: &[&FrameRecord]| {
        let in_row = |s: &&SliceReport| s.selector == selector && (log == ALL_LOGS || s.log == log);
        SummaryRow {
            selector,
            log: log.to_string(),
            slices: slices.iter().filter(in_row).count(),
            frames: rs.len(),
            recall_pct: recalls(rs, bins),
            failed_slices: (0..bins.len())
                .map(|b| slices.iter().filter(in_row).filter(|s| s.failed[b]).count())
                .collect(),
        }
    };
    let mut rows: Vec<SummaryRow> = group(records, |r| (r.selector, r.log.clone()))
        .into_iter()
        .map(|((selector, log), rs)| row(selector, &log, &rs))
        .collect();
    let logs: BTreeMap<&str, ()> = records.iter().map(|r| (r.log.as_str(), ())).collect();
    if logs.len() > 1 {
        rows.extend(
            group(records, |r| r.selector)
                .into_iter()
                .map(|(selector, rs)| row(selector, ALL_LOGS, &rs)),
        );
    }
    Ok(Summary {
        bins: bins.to_vec(),
        slices,
        rows,
    })
}

pub fn slices_csv(summary: &Summary) -> String {
    let mut out = String::from("selector,log,slice,bin_t,bin_r,recall_pct,failed\n");
    for s in &summary.slices {
        for (b, bin) in summary.bins.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},{}",
                s.selector, s.log, s.slice_id, bin.t_tol, bin.r_tol, s.recall_pct[b], s.failed[b]
            );
        }
    }
    out
}

pub fn summary_csv(summary: &Summary) -> String {
    let mut out = String::from("selector,log,slices,frames");
    for bin in &summary.bins {
        let _ = write!(out, ",recall_{}", bin.label());
    }
    for bin in &summary.bins {
        let _ = write!(out, ",failed_{0},failed_pct_{0}", bin.label());
    }
    out.push('\n');
    for r in &summary.rows {
        let _ = write!(out, "{},{},{},{}", r.selector, r.log, r.slices, r.frames);
        for v in &r.recall_pct {
            let _ = write!(out, ",{v:.4}");
        }
        for b in 0..summary.bins.len() {
            let _ = write!(out, ",{},{:.2}", r.failed_slices[b], r.failed_pct(b));
        }
        out.push('\n');
    }
    out
}

/// Recall within each place, per selector, for plotting along the route.
pub fn place_recall_csv(records: &[FrameRecord], partition: &PlacePartition, bin: &ToleranceBin) -> String {
    let mut out = String::from("selector,place,start,end,frames,recall_pct\n");
    for (selector, rs) in group(records, |r| r.selector) {
        for place in &partition.places {
            let errors: Vec<_> = rs.iter().filter(|r| place.contains(r.frame)).map(|r| r.error).collect();
            if let Ok(recall) = recall_at(&errors, bin) {
                let _ = writeln!(
                    out,
                    "{selector},{},{},{},{},{recall:.4}",
                    place.place_id,
                    place.start_index,
                    place.end_index,
                    errors.len()
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(t: f64, r: f64) -> PoseError<f64> {
        PoseError {
            translation_err: t,
            rotation_err: r,
        }
    }

    fn rec(selector: SelectorKind, log: &str, slice: usize, frame: usize, err: PoseError<f64>) -> FrameRecord {
        FrameRecord {
            selector,
            log: log.into(),
            slice,
            frame,
            camera: 0,
            success: err.translation_err.is_finite(),
            inliers: 10,
            matched: 20,
            localizations: 1,
            error: err,
        }
    }

    #[test]
    fn recall_counts() {
        let bin = ToleranceBin::new(0.25, 2.0).unwrap();
        let r = recall_at(&[e(0.1, 1.0), e(0.3, 1.0), e(0.2, 1.0)], &bin).unwrap();
        assert!((r - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(recall_at(&[e(0.1, 3.0)], &bin).unwrap(), 0.0);
        assert_eq!(recall_at(&[PoseError::failed(); 3], &bin).unwrap(), 0.0);
        assert_eq!(recall_at(&[], &bin), Err(EvaluationError::EmptyInput));
        assert!(ToleranceBin::new(0.0, 2.0).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        let th = FailureThresholds::default();
        assert!(th.is_failure(0, 29.9));
        assert!(!th.is_failure(0, 30.0));
        assert!(th.validate(3).is_ok());
        assert!(FailureThresholds {
            min_recall_pct: vec![50.0, 30.0, 70.0]
        }
        .validate(3)
        .is_err());
        assert!(FailureThresholds {
            min_recall_pct: vec![0.0, 30.0, 70.0]
        }
        .validate(3)
        .is_err());
        assert!(th.validate(2).is_err());
    }

    #[test]
    fn single_slice_summary_equals_slice() {
        let records: Vec<_> = (0..10)
            .map(|i| rec(SelectorKind::DynamicCam, "urban", 0, i, e(i as f64 * 0.1, 1.0)))
            .collect();
        let s = summarize(&records, &default_bins(), &FailureThresholds::default()).unwrap();
        assert_eq!(s.slices.len(), 1);
        let row = s.row(SelectorKind::DynamicCam, "urban").unwrap();
        assert_eq!(row.recall_pct, s.slices[0].recall_pct);
        assert_eq!(row.recall_pct, vec![30.0, 60.0, 100.0]);
        assert_eq!(row.failed_slices, vec![0, 0, 0]);
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.row(SelectorKind::DynamicCam, ALL_LOGS), Some(row));
        assert_eq!(summary_csv(&s).lines().count(), 2);
    }

    #[test]
    fn failed_slice_tallies_match_recount() {
        let mut records = Vec::new();
        for slice in 0..8 {
            let good = if slice % 3 == 0 { 2 } else { 8 };
            for f in 0..10 {
                let err = if f < good { e(0.1, 0.5) } else { PoseError::failed() };
                records.push(rec(
                    SelectorKind::StaticCam,
                    if slice < 4 { "a" } else { "b" },
                    slice,
                    slice * 10 + f,
                    err,
                ));
                records.push(rec(
                    SelectorKind::DynamicCam,
                    if slice < 4 { "a" } else { "b" },
                    slice,
                    slice * 10 + f,
                    e(0.1, 0.5),
                ));
            }
        }
        let s = summarize(&records, &default_bins(), &FailureThresholds::default()).unwrap();
        // slices 0, 3, 6 recall 20% < 30
        assert_eq!(s.failed_slices(SelectorKind::StaticCam, 0), 3);
        assert_eq!(s.failed_slices(SelectorKind::DynamicCam, 0), 0);
        assert_eq!(s.row(SelectorKind::StaticCam, "a").unwrap().failed_slices[0], 2);
        assert_eq!(s.row(SelectorKind::StaticCam, "b").unwrap().failed_slices[0], 1);
        let all = s.row(SelectorKind::StaticCam, ALL_LOGS).unwrap();
        assert_eq!(all.slices, 8);
        assert!((all.failed_pct(0) - 37.5).abs() < 1e-12);
        // rows sorted by selector then log, "all" rows last
        let keys: Vec<_> = s.rows.iter().map(|r| (r.selector, r.log.as_str())).collect();
        assert_eq!(
            keys,
            vec![
                (SelectorKind::StaticCam, "a"),
                (SelectorKind::StaticCam, "b"),
                (SelectorKind::DynamicCam, "a"),
                (SelectorKind::DynamicCam, "b"),
                (SelectorKind::StaticCam, ALL_LOGS),
                (SelectorKind::DynamicCam, ALL_LOGS),
            ]
        );
        let csv = slices_csv(&s);
        assert_eq!(csv.lines().count(), 1 + 16 * 3);
        assert_eq!(summary_csv(&s).lines().count(), 7);
    }

    #[test]
    fn records_round_trip() {
        let records = vec![
            rec(SelectorKind::OracleCam, "highway", 2, 7, e(0.012345678901, 0.5)),
            rec(SelectorKind::Num3DPoints, "urban", 0, 1, PoseError::failed()),
        ];
        let csv = records_to_csv(&records);
        assert_eq!(records_from_csv(&csv).unwrap(), records);
        let bad = csv.replace("success", "maybe");
        assert!(matches!(
            records_from_csv(&bad),
            Err(EvaluationError::Parse { line: 2, .. })
        ));
        assert!(records_from_csv("nope\n").is_err());
    }

    #[test]
    fn place_series() {
        let part = crate::selection::partition_places(20, 10, 10).unwrap();
        let records: Vec<_> = (0..20)
            .map(|i| {
                rec(
                    SelectorKind::DynamicCam,
                    "x",
                    0,
                    i,
                    if i < 10 { e(0.1, 1.0) } else { PoseError::failed() },
                )
            })
            .collect();
        let csv = place_recall_csv(&records, &part, &default_bins()[0]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[1], "dynamic,0,0,10,10,100.0000");
        assert_eq!(lines[2], "dynamic,1,10,20,10,0.0000");
    }

    proptest! {
        #[test]
        fn recall_monotone_over_nested_bins(errs in proptest::collection::vec((0.0f64..8.0, 0.0f64..15.0), 1..100)) {
            let errors: Vec<_> = errs.iter().map(|&(t, r)| e(t, r)).collect();
            let rs: Vec<f64> = default_bins().iter().map(|b| recall_at(&errors, b).unwrap()).collect();
            prop_assert!(rs[0] <= rs[1] && rs[1] <= rs[2]);
            prop_assert!(rs.iter().all(|r| (0.0..=100.0).contains(r)));
        }
    }
}
