//! Per-place camera choice and its text serialization.
//!
//! ```text
//! placecam-selection v1
//! cost p=2 x_max=2
//! kde kernel=gaussian h=0.1 n=10000 seed=42 mode=mc
//! cameras 4
//! places 7
//! place <id> <start> <end> <cx> <cy> <cz> chosen <cam> costs <c_0> .. <c_k> counts <n_0> .. <n_k>
//! ```
//!
//! Numbers are written in shortest round-trip form, so `parse(to_text(t)) == t`.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::kde::expected_cost_with_mode;
use super::{CostFunction, ExpectationMode, KdeConfig, Kernel, PlacePartition, PoseErrorSampleSet, SelectionError};
use crate::geometry::Pose;
use crate::seed::derive_seed;

pub const TABLE_FORMAT_VERSION: &str = "placecam-selection v1";

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceSelection {
    pub place_id: usize,
    pub start_index: usize,
    pub end_index: usize,
    pub center: Vector3<f64>,
    pub chosen_camera: usize,
    pub expected_costs: Vec<f64>,
    pub sample_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTable {
    pub cost: CostFunction<f64>,
    pub kde: KdeConfig<f64>,
    pub num_cameras: usize,
    pub places: Vec<PlaceSelection>,
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin_camera(costs: &[f64]) -> Option<usize> {
    costs
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, c)| match best {
            Some((_, b)) if *c >= b => best,
            _ => Some((i, *c)),
        })
        .map(|(i, _)| i)
}

/// Picks the minimum-expected-cost camera for every place.
///
/// `error_sets[place][camera]` holds that camera's training errors inside the
/// place. Cameras without samples are charged the cost ceiling. Each
/// (place, camera) estimate uses its own RNG stream derived from the KDE seed.
pub fn select_cameras(
    partition: &PlacePartition,
    error_sets: &[Vec<PoseErrorSampleSet<f64>>],
    cf: &CostFunction<f64>,
    cfg: &KdeConfig<f64>,
) -> Result<SelectionTable, SelectionError> {
    cf.validate()?;
    cfg.validate()?;
    if error_sets.len() != partition.places.len() {
        return Err(SelectionError::Config(format!(
            "{} places but error sets for {}",
            partition.places.len(),
            error_sets.len()
        )));
    }
    let num_cameras = error_sets.iter().map(Vec::len).max().unwrap_or(0);
    if num_cameras == 0 {
        return Err(SelectionError::Config("no cameras in error sets".into()));
    }

    let places = partition
        .places
        .par_iter()
        .zip(error_sets.par_iter())
        .map(|(place, sets)| {
            if sets.iter().all(|s| s.is_empty()) {
                return Err(SelectionError::NoDataForPlace(place.place_id));
            }
            let mut costs = vec![cf.ceiling(); num_cameras];
            let mut counts = vec![0; num_cameras];
            for (cam, set) in sets.iter().enumerate() {
                counts[cam] = set.len();
                if set.is_empty() {
                    continue;
                }
                let seed = derive_seed(cfg.rng_seed, &[place.place_id as u64, cam as u64]);
                costs[cam] = expected_cost_with_mode(set, cf, &cfg.with_seed(seed))?;
            }
            Ok(PlaceSelection {
                place_id: place.place_id,
                start_index: place.start_index,
                end_index: place.end_index,
                center: *place.center_pose.translation(),
                chosen_camera: argmin_camera(&costs).expect("non-empty"),
                expected_costs: costs,
                sample_counts: counts,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SelectionTable {
        cost: *cf,
        kde: *cfg,
        num_cameras,
        places,
    })
}

/// Camera chosen for the place whose centre is nearest the query position.
pub fn lookup_camera(table: &SelectionTable, query_pose: &Pose<f64>) -> usize {
    nearest_place(table, query_pose).map_or(0, |p| p.chosen_camera)
}

fn nearest_place<'a>(table: &'a SelectionTable, query_pose: &Pose<f64>) -> Option<&'a PlaceSelection> {
    let q = query_pose.translation();
    table
        .places
        .iter()
        .fold(None, |best: Option<(&PlaceSelection, f64)>, p| {
            let d = (p.center - q).norm_squared();
            match best {
                Some((_, bd)) if d >= bd => best,
                _ => Some((p, d)),
            }
        })
        .map(|(p, _)| p)
}

impl SelectionTable {
    /// Checks that every place records the argmin of its costs.
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.places.is_empty() {
            return Err(SelectionError::Inconsistent("table has no places".into()));
        }
        for p in &self.places {
            if p.expected_costs.len() != self.num_cameras || p.sample_counts.len() != self.num_cameras {
                return Err(SelectionError::Inconsistent(format!(
                    "place {} lists {} costs for {} cameras",
                    p.place_id,
                    p.expected_costs.len(),
                    self.num_cameras
                )));
            }
            if argmin_camera(&p.expected_costs) != Some(p.chosen_camera) {
                return Err(SelectionError::Inconsistent(format!(
                    "place {} chooses camera {} but the minimum-cost camera is {:?}",
                    p.place_id,
                    p.chosen_camera,
                    argmin_camera(&p.expected_costs)
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let k = &self.kde;
        writeln!(s, "{TABLE_FORMAT_VERSION}").unwrap();
        writeln!(s, "cost p={} x_max={}", self.cost.p, self.cost.x_max).unwrap();
        writeln!(
            s,
            "kde kernel={} h={} n={} seed={} mode={}",
            k.kernel.name(),
            k.bandwidth,
            k.mc_samples,
            k.rng_seed,
            k.mode.name()
        )
        .unwrap();
        writeln!(s, "cameras {}", self.num_cameras).unwrap();
        writeln!(s, "places {}", self.places.len()).unwrap();
        for p in &self.places {
            write!(
                s,
                "place {} {} {} {} {} {} chosen {} costs",
                p.place_id, p.start_index, p.end_index, p.center.x, p.center.y, p.center.z, p.chosen_camera
            )
            .unwrap();
            for c in &p.expected_costs {
                write!(s, " {c}").unwrap();
            }
            s.push_str(" counts");
            for n in &p.sample_counts {
                write!(s, " {n}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

struct LineParser<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> LineParser<'a> {
    fn err(&self, message: impl Into<String>) -> SelectionError {
        SelectionError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SelectionError> {
        match self.tokens.next() {
            Some(t) if t == kw => Ok(()),
            other => Err(self.err(format!("expected `{kw}`, found {other:?}"))),
        }
    }

    fn value<T: FromStr>(&mut self, what: &str) -> Result<T, SelectionError> {
        let tok = self.tokens.next().ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse().map_err(|_| self.err(format!("bad {what}: {tok:?}")))
    }

    fn keyed<T: FromStr>(&mut self, key: &str) -> Result<T, SelectionError> {
        let tok = self.tokens.next().ok_or_else(|| self.err(format!("missing {key}=")))?;
        let rest = tok
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected {key}=..., found {tok:?}")))?;
        rest.parse()
            .map_err(|_| self.err(format!("bad value for {key}: {rest:?}")))
    }

    fn finish(mut self) -> Result<(), SelectionError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected trailing token {t:?}"))),
        }
    }
}

impl FromStr for SelectionTable {
    type Err = SelectionError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        fn take<'t>(
            lines: &mut impl Iterator<Item = (usize, &'t str)>,
            what: &str,
        ) -> Result<(usize, &'t str), SelectionError> {
            lines.next().ok_or_else(|| SelectionError::Parse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
        }
        let mut next = |what: &str| take(&mut lines, what);
        let (n, header) = next("header")?;
        if header.trim() != TABLE_FORMAT_VERSION {
            return Err(SelectionError::Parse {
                line: n,
                message: format!("expected `{TABLE_FORMAT_VERSION}`, found {header:?}"),
            });
        }
        fn parser((line, text): (usize, &str)) -> LineParser<'_> {
            LineParser {
                line,
                tokens: text.split_whitespace(),
            }
        }

        let mut p = parser(next("cost line")?);
        p.keyword("cost")?;
        let cost = CostFunction {
            p: p.keyed("p")?,
            x_max: p.keyed("x_max")?,
        };
        p.finish()?;

        let mut p = parser(next("kde line")?);
        p.keyword("kde")?;
        let kernel_name: String = p.keyed("kernel")?;
        let kernel = Kernel::from_name(&kernel_name).ok_or_else(|| p.err(format!("unknown kernel {kernel_name:?}")))?;
        let bandwidth = p.keyed("h")?;
        let mc_samples = p.keyed("n")?;
        let rng_seed = p.keyed("seed")?;
        let mode_name: String = p.keyed("mode")?;
        let mode =
            ExpectationMode::from_name(&mode_name).ok_or_else(|| p.err(format!("unknown mode {mode_name:?}")))?;
        p.finish()?;
        let kde = KdeConfig {
            kernel,
            bandwidth,
            mc_samples,
            rng_seed,
            mode,
        };

        let mut p = parser(next("cameras line")?);
        p.keyword("cameras")?;
        let num_cameras: usize = p.value("camera count")?;
        p.finish()?;
        let mut p = parser(next("places line")?);
        p.keyword("places")?;
        let num_places: usize = p.value("place count")?;
        p.finish()?;

        let mut places = Vec::with_capacity(num_places);
        for _ in 0..num_places {
            let mut p = parser(next("place line")?);
            p.keyword("place")?;
            let place_id = p.value("place id")?;
            let start_index = p.value("start index")?;
            let end_index = p.value("end index")?;
            let center = Vector3::new(p.value("center x")?, p.value("center y")?, p.value("center z")?);
            p.keyword("chosen")?;
            let chosen_camera = p.value("chosen camera")?;
            p.keyword("costs")?;
            let expected_costs = (0..num_cameras)
                .map(|_| p.value::<f64>("expected cost"))
                .collect::<Result<Vec<_>, _>>()?;
            p.keyword("counts")?;
            let sample_counts = (0..num_cameras)
                .map(|_| p.value::<usize>("sample count"))
                .collect::<Result<Vec<_>, _>>()?;
            p.finish()?;
            places.push(PlaceSelection {
                place_id,
                start_index,
                end_index,
                center,
                chosen_camera,
                expected_costs,
                sample_counts,
            });
        }
        for (n, l) in lines {
            if !l.trim().is_empty() {
                return Err(SelectionError::Parse {
                    line: n,
                    message: "unexpected content after the last place".into(),
                });
            }
        }
        let table = SelectionTable {
            cost,
            kde,
            num_cameras,
            places,
        };
        table.validate()?;
        Ok(table)
    }
}
