//! End-to-end stages: simulate → train → query → report.
//!
//! Every stage is a pure function of its inputs and a [`PipelineConfig`];
//! all randomness flows from the master seed, so identical configs give
//! identical artifacts.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{select_by_statistic, select_oracle, select_random, select_static, SelectorKind};
use crate::evaluation::{
    place_recall_csv, slices_csv, summarize, summary_csv, EvaluationError, FailureThresholds, FrameRecord, Summary,
    ToleranceBin,
};
use crate::geometry::{pose_error, PoseError, Rig};
use crate::localizer::{localize_pnp_ransac, localize_rig_pnp, LocalizationCounter, LocalizationResult, RansacConfig};
use crate::seed::derive_seed;
use crate::selection::{
    lookup_camera, partition_places, select_cameras, CostFunction, KdeConfig, PlacePartition, PoseErrorSampleSet,
    SelectionError, SelectionTable,
};
use crate::simulator::{
    cell_seed, generate_traverse, generate_world, run_localization_batch, BatchResults, CameraQualityProfile,
    SimulationError, Traverse, TraverseRole, WorldConfig,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("selector `{0}` needs {1}")]
    MissingInput(SelectorKind, &'static str),
    #[error("static selection line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A named run of consecutive slices sharing an environment type.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpec {
    pub name: String,
    pub slices: usize,
}

/// Every stage seed is derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub master: u64,
}

impl Seeds {
    fn stage(&self, tag: u64) -> u64 {
        derive_seed(self.master, &[tag])
    }
    pub fn world(&self) -> u64 {
        self.stage(1)
    }
    pub fn map(&self) -> u64 {
        self.stage(2)
    }
    pub fn training(&self) -> u64 {
        self.stage(3)
    }
    pub fn query(&self) -> u64 {
        self.stage(4)
    }
    pub fn train_ransac(&self) -> u64 {
        self.stage(5)
    }
    pub fn query_ransac(&self) -> u64 {
        self.stage(6)
    }
    pub fn kde(&self) -> u64 {
        self.stage(7)
    }
    pub fn random_selector(&self) -> u64 {
        self.stage(8)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub world: WorldConfig,
    pub rig: Rig<f64>,
    pub profile: CameraQualityProfile,
    pub place_width: usize,
    pub place_stride: usize,
    pub cost: CostFunction<f64>,
    pub kde: KdeConfig<f64>,
    pub ransac: RansacConfig<f64>,
    pub selectors: Vec<SelectorKind>,
    pub bins: Vec<ToleranceBin>,
    pub thresholds: FailureThresholds,
    pub slice_frames: usize,
    pub logs: Vec<LogSpec>,
    pub condition_shift: f64,
    pub seeds: Seeds,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |m: String| PipelineError::Config(m);
        self.world.validate()?;
        self.profile.validate()?;
        if self.profile.num_regions() != self.world.num_regions() || self.profile.num_cameras() != self.rig.len() {
            return Err(cfg(format!(
                "profile covers {} regions x {} cameras; world needs {} x {}",
                self.profile.num_regions(),
                self.profile.num_cameras(),
                self.world.num_regions(),
                self.rig.len()
            )));
        }
        partition_places(self.world.num_frames(), self.place_width, self.place_stride)?;
        self.cost.validate()?;
        self.kde.validate()?;
        self.ransac.validate().map_err(|e| cfg(e.to_string()))?;
        for b in &self.bins {
            b.validate()?;
        }
        self.thresholds.validate(self.bins.len())?;
        if self.bins.is_empty() {
            return Err(cfg("at least one tolerance bin is required".into()));
        }
        if self.slice_frames == 0 {
            return Err(cfg("slice_frames must be > 0".into()));
        }
        if !self.logs.is_empty() {
            let covered: usize = self.logs.iter().map(|l| l.slices).sum();
            if covered != self.num_slices() {
                return Err(cfg(format!(
                    "logs cover {covered} slices but the route has {}",
                    self.num_slices()
                )));
            }
            if self
                .logs
                .iter()
                .any(|l| l.name.is_empty() || l.name.contains([',', '\n']))
            {
                return Err(cfg("log names must be non-empty and free of commas".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.condition_shift) {
            return Err(cfg(format!(
                "condition_shift must lie in [0, 1], got {}",
                self.condition_shift
            )));
        }
        Ok(())
    }

    /// Whole slices on the route; a trailing partial slice joins the last one.
    pub fn num_slices(&self) -> usize {
        (self.world.num_frames() / self.slice_frames).max(1)
    }

    pub fn slice_of(&self, frame: usize) -> usize {
        (frame / self.slice_frames).min(self.num_slices() - 1)
    }

    pub fn slice_frames_range(&self, slice: usize) -> std::ops::Range<usize> {
        let start = slice * self.slice_frames;
        let end = if slice + 1 == self.num_slices() {
            self.world.num_frames()
        } else {
            start + self.slice_frames
        };
        start..end
    }

    pub fn log_of(&self, slice: usize) -> &str {
        let mut first = 0;
        for log in &self.logs {
            if slice < first + log.slices {
                return &log.name;
            }
            first += log.slices;
        }
        "default"
    }

    /// The four-camera, ten-slice worst-case coverage scenario with every
    /// selector enabled and default selection, RANSAC and evaluation settings.
    pub fn worst_case(master_seed: u64) -> Self {
        let sc = crate::simulator::scenarios::WorstCaseScenario::new(0);
        Self {
            world: sc.world,
            rig: sc.rig,
            profile: sc.profile,
            place_width: 40,
            place_stride: 10,
            cost: CostFunction::default(),
            kde: KdeConfig::default(),
            ransac: RansacConfig::default(),
            selectors: SelectorKind::ALL.to_vec(),
            bins: crate::evaluation::default_bins(),
            thresholds: FailureThresholds::default(),
            slice_frames: sc.slice_frames,
            logs: vec![LogSpec {
                name: "synthetic".into(),
                slices: 10,
            }],
            condition_shift: 0.0,
            seeds: Seeds { master: master_seed },
        }
    }

    pub fn partition(&self, traverse: &Traverse) -> Result<PlacePartition, PipelineError> {
        let mut p = partition_places(traverse.len(), self.place_width, self.place_stride)?;
        p.assign_centers(&traverse.poses());
        Ok(p)
    }
}

pub struct Traverses {
    pub map: Traverse,
    pub training: Traverse,
    pub query: Traverse,
}

/// Builds the world and its map, training and query traverses.
pub fn simulate(cfg: &PipelineConfig) -> Result<Traverses, PipelineError> {
    cfg.validate()?;
    let world_cfg = WorldConfig {
        rng_seed: cfg.seeds.world(),
        ..cfg.world.clone()
    };
    let mut world = generate_world(&world_cfg, &cfg.rig, &cfg.profile)?;
    let map = generate_traverse(&world, TraverseRole::Map, cfg.seeds.map(), 0.0)?;
    world.apply_map(&map);
    let training = generate_traverse(&world, TraverseRole::Training, cfg.seeds.training(), 0.0)?;
    let query = generate_traverse(&world, TraverseRole::Query, cfg.seeds.query(), cfg.condition_shift)?;
    Ok(Traverses { map, training, query })
}

/// Per-slice camera picked from pooled training errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticSelection {
    pub cameras: Vec<usize>,
}

pub const STATIC_FORMAT_VERSION: &str = "placecam-static v1";

impl fmt::Display for StaticSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{STATIC_FORMAT_VERSION}")?;
        writeln!(f, "slices {}", self.cameras.len())?;
        for (s, c) in self.cameras.iter().enumerate() {
            writeln!(f, "slice {s} {c}")?;
        }
        Ok(())
    }
}

impl FromStr for StaticSelection {
    type Err = PipelineError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let err = |line: usize, message: &str| PipelineError::Parse {
            line,
            message: message.to_string(),
        };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first() != Some(&STATIC_FORMAT_VERSION) {
            return Err(err(1, "missing static selection header"));
        }
        let n: usize = lines
            .get(1)
            .and_then(|l| l.strip_prefix("slices "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(2, "expected `slices <n>`"))?;
        if lines.len() != n + 2 {
            return Err(err(lines.len(), "slice count does not match the number of slice lines"));
        }
        let cameras = (0..n)
            .map(|s| {
                let toks: Vec<&str> = lines[s + 2].split_whitespace().collect();
                match toks[..] {
                    ["slice", id, cam] if id.parse() == Ok(s) => cam.parse().map_err(|_| err(s + 3, "bad camera id")),
                    _ => Err(err(s + 3, "expected `slice <i> <camera>`")),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(StaticSelection { cameras })
    }
}

pub struct TrainingOutput {
    pub table: SelectionTable,
    pub statics: StaticSelection,
    pub batch: BatchResults,
}

fn sample(e: &PoseError<f64>, cf: &CostFunction<f64>) -> f64 {
    // Failed localizations enter the density at the cost ceiling.
    if e.translation_err.is_finite() {
        e.translation_err
    } else {
        cf.x_max
    }
}

/// Localizes every training frame with every camera and builds the per-place
/// selection table and the per-slice static choice.
pub fn train(cfg: &PipelineConfig, training: &Traverse) -> Result<TrainingOutput, PipelineError> {
    cfg.validate()?;
    check_traverse(cfg, training)?;
    let ransac = cfg.ransac.with_seed(cfg.seeds.train_ransac());
    let batch = run_localization_batch(training, &cfg.rig, &ransac);
    let partition = cfg.partition(training)?;
    let kde = cfg.kde.with_seed(cfg.seeds.kde());
    let cams = cfg.rig.len();

    let sets = |id: usize, frames: std::ops::Range<usize>| -> Result<Vec<PoseErrorSampleSet<f64>>, SelectionError> {
        (0..cams)
            .map(|c| {
                let s = batch.cells[frames.clone()]
                    .iter()
                    .map(|row| sample(&row[c].error, &cfg.cost))
                    .collect();
                PoseErrorSampleSet::new(c, id, s)
            })
            .collect()
    };
    let place_sets = partition
        .places
        .iter()
        .map(|p| sets(p.place_id, p.start_index..p.end_index))
        .collect::<Result<Vec<_>, _>>()?;
    let table = select_cameras(&partition, &place_sets, &cfg.cost, &kde)?;

    // Static choices use a separate seed branch so they never alias place ids.
    let static_kde = kde.with_seed(derive_seed(kde.rng_seed, &[u64::MAX]));
    let cameras = (0..cfg.num_slices())
        .map(|s| select_static(&sets(s, cfg.slice_frames_range(s))?, &cfg.cost, &static_kde))
        .collect::<Result<_, _>>()?;
    Ok(TrainingOutput {
        table,
        statics: StaticSelection { cameras },
        batch,
    })
}

fn check_traverse(cfg: &PipelineConfig, t: &Traverse) -> Result<(), PipelineError> {
    if t.len() != cfg.world.num_frames() {
        return Err(PipelineError::Config(format!(
            "traverse has {} frames, config expects {}",
            t.len(),
            cfg.world.num_frames()
        )));
    }
    if t.rig != cfg.rig {
        return Err(PipelineError::Config(
            "traverse rig differs from the configured rig".into(),
        ));
    }
    Ok(())
}

pub struct QueryOutput {
    pub records: Vec<FrameRecord>,
    /// Localization pipelines run over the whole traverse.
    pub localizations: usize,
}

/// What a query run may draw on besides the traverse.
#[derive(Debug, Clone, Copy, Default)]
pub struct QueryInputs<'a> {
    /// Needed by the dynamic selector.
    pub table: Option<&'a SelectionTable>,
    /// Needed by the static selector.
    pub statics: Option<&'a StaticSelection>,
    /// Output of [`query_batch`] for this traverse. When present, single-camera
    /// localizations are read from it instead of being recomputed; they would
    /// come out identical because both use the same per-cell seeds.
    pub cached: Option<&'a BatchResults>,
}

/// Every camera localized in every query frame, seeded exactly as [`query`]
/// seeds its single-camera localizations.
pub fn query_batch(cfg: &PipelineConfig, traverse: &Traverse) -> BatchResults {
    run_localization_batch(traverse, &cfg.rig, &cfg.ransac.with_seed(cfg.seeds.query_ransac()))
}

/// Runs one selector over every query frame.
///
/// Single-camera localizations are seeded per (frame, camera), so every
/// selector that picks the same camera for a frame gets the same result.
/// Each frame's record counts the localization pipelines the selector asked
/// for, whether or not they were served from `inputs.cached`.
pub fn query(
    cfg: &PipelineConfig,
    traverse: &Traverse,
    inputs: &QueryInputs<'_>,
    kind: SelectorKind,
) -> Result<QueryOutput, PipelineError> {
    let QueryInputs { table, statics, cached } = *inputs;
    cfg.validate()?;
    check_traverse(cfg, traverse)?;
    if cached.is_some_and(|b| b.num_frames() != traverse.len() || b.cells.iter().any(|r| r.len() != cfg.rig.len())) {
        return Err(PipelineError::Config(
            "cached query batch does not match the traverse".into(),
        ));
    }
    match kind {
        SelectorKind::DynamicCam => {
            let t = table.ok_or(PipelineError::MissingInput(kind, "a selection table"))?;
            if t.num_cameras != cfg.rig.len() {
                return Err(PipelineError::Config(format!(
                    "selection table has {} cameras, rig has {}",
                    t.num_cameras,
                    cfg.rig.len()
                )));
            }
        }
        SelectorKind::StaticCam => {
            let s = statics.ok_or(PipelineError::MissingInput(kind, "a static selection"))?;
            if s.cameras.len() != cfg.num_slices() || s.cameras.iter().any(|c| *c >= cfg.rig.len()) {
                return Err(PipelineError::Config(
                    "static selection does not match the route and rig".into(),
                ));
            }
        }
        _ => {}
    }

    let counter = LocalizationCounter::new();
    let base = cfg.ransac.with_seed(cfg.seeds.query_ransac());
    let rig = &cfg.rig;
    let localize = |tally: &LocalizationCounter, frame: usize, cam: usize| -> LocalizationResult<f64> {
        tally.record();
        if let Some(b) = cached {
            return b.cells[frame][cam].result.clone();
        }
        let corrs = &traverse.frames[frame].observations[cam];
        localize_pnp_ransac(
            corrs,
            &rig.cameras()[cam],
            &base.with_seed(cell_seed(base.rng_seed, frame, cam)),
        )
    };
    let error_of = |frame: usize, r: &LocalizationResult<f64>| match &r.pose {
        Some(p) if r.is_success() => pose_error(p, &traverse.frames[frame].pose),
        _ => PoseError::failed(),
    };

    let records = traverse
        .frames
        .par_iter()
        .map(|frame| {
            let i = frame.index;
            let slice = cfg.slice_of(i);
            let tally = LocalizationCounter::new();
            let (camera, error, result) = match kind {
                SelectorKind::RandomCam => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seeds.random_selector(), &[i as u64]));
                    let c = select_random(rig, &mut rng);
                    let r = localize(&tally, i, c);
                    (c, error_of(i, &r), r)
                }
                SelectorKind::StaticCam | SelectorKind::DynamicCam => {
                    let c = match (kind, table, statics) {
                        (SelectorKind::DynamicCam, Some(t), _) => lookup_camera(t, &frame.pose),
                        (_, _, Some(s)) => s.cameras[slice],
                        _ => unreachable!("checked above"),
                    };
                    let r = localize(&tally, i, c);
                    (c, error_of(i, &r), r)
                }
                SelectorKind::Num3DPoints | SelectorKind::InlierCount | SelectorKind::InlierRatio => {
                    let all: Vec<_> = (0..rig.len()).map(|c| localize(&tally, i, c)).collect();
                    let choice = select_by_statistic(&all, kind);
                    let r = all[choice.camera].clone();
                    let e = if choice.all_failed {
                        PoseError::failed()
                    } else {
                        error_of(i, &r)
                    };
                    (choice.camera, e, r)
                }
                SelectorKind::OracleCam => {
                    let all: Vec<_> = (0..rig.len()).map(|c| localize(&tally, i, c)).collect();
                    let errors: Vec<_> = all.iter().map(|r| error_of(i, r)).collect();
                    let c = select_oracle(&errors);
                    (c, errors[c], all[c].clone())
                }
                SelectorKind::MultiCamRigPnP => {
                    tally.record();
                    let views: Vec<_> = rig
                        .cameras()
                        .iter()
                        .map(|cam| (cam, frame.observations[cam.camera_id].as_slice()))
                        .collect();
                    let seed = cell_seed(base.rng_seed, i, rig.len());
                    let r = localize_rig_pnp(&views, rig, &base.with_seed(seed));
                    (0, error_of(i, &r), r)
                }
            };
            counter.add(tally.get());
            FrameRecord {
                selector: kind,
                log: cfg.log_of(slice).to_string(),
                slice,
                frame: i,
                camera,
                success: result.is_success() && error.translation_err.is_finite(),
                inliers: result.inlier_count,
                matched: result.num_matched_points,
                localizations: tally.get(),
                error,
            }
        })
        .collect();
    Ok(QueryOutput {
        records,
        localizations: counter.get(),
    })
}

pub struct Report {
    pub summary: Summary,
    pub slices_csv: String,
    pub summary_csv: String,
    pub places_csv: String,
}

/// Aggregates per-frame records from any number of selectors.
pub fn report(cfg: &PipelineConfig, records: &[FrameRecord]) -> Result<Report, PipelineError> {
    let summary = summarize(records, &cfg.bins, &cfg.thresholds)?;
    let num_frames = records.iter().map(|r| r.frame + 1).max().unwrap_or(0);
    let places_csv = match partition_places(num_frames, cfg.place_width, cfg.place_stride) {
        Ok(partition) => place_recall_csv(records, &partition, &cfg.bins[0]),
        Err(_) => String::from("selector,place,start,end,frames,recall_pct\n"),
    };
    Ok(Report {
        slices_csv: slices_csv(&summary),
        summary_csv: summary_csv(&summary),
        places_csv,
        summary,
    })
}

/// One-line description of a report row per selector, for console output.
pub fn describe(summary: &Summary) -> String {
    let mut out = String::new();
    for row in summary.overall() {
        let _ = write!(out, "{:<8}", row.selector.name());
        for (b, bin) in summary.bins.iter().enumerate() {
            let _ = write!(
                out,
                "  {}: {:6.2}% ({}/{} slices failed)",
                bin.label(),
                row.recall_pct[b],
                row.failed_slices[b],
                row.slices
            );
        }
        out.push('\n');
    }
    out
}
