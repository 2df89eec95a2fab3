//! Small end-to-end worlds with a known best camera.

use placecam::baselines::SelectorKind;
use placecam::evaluation::{records_from_csv, records_to_csv, ALL_LOGS};
use placecam::pipeline::{
    query, query_batch, report, simulate, train, PipelineConfig, QueryInputs, TrainingOutput, Traverses,
};
use placecam::simulator::scenarios::GOOD;
use placecam::simulator::{CameraQuality, CameraQualityProfile, WorldConfig};

/// 400 m route, four cameras, `quality(region, camera)` per region.
fn small(master: u64, region_length_m: f64, quality: impl Fn(usize, usize) -> CameraQuality) -> PipelineConfig {
    let mut cfg = PipelineConfig::worst_case(master);
    cfg.world = WorldConfig {
        trajectory_length_m: 400.0,
        landmarks_per_region: (15.0 * region_length_m) as usize,
        region_length_m,
        ..WorldConfig::default()
    };
    let regions = cfg.world.num_regions();
    let mut profile = CameraQualityProfile::uniform(regions, 4, GOOD);
    for r in 0..regions {
        for c in 0..4 {
            profile.set(r, c, quality(r, c));
        }
    }
    cfg.profile = profile;
    cfg.slice_frames = 100;
    cfg.logs = Vec::new();
    cfg
}

fn run(cfg: &PipelineConfig) -> (Traverses, TrainingOutput) {
    let t = simulate(cfg).unwrap();
    let trained = train(cfg, &t.training).unwrap();
    (t, trained)
}

const SHARP: CameraQuality = CameraQuality {
    visible_landmark_fraction: 0.8,
    pixel_noise_sigma_px: 0.5,
    outlier_fraction: 0.1,
    dropout_probability: 0.0,
};

const DROPPED: CameraQuality = CameraQuality {
    dropout_probability: 1.0,
    ..SHARP
};

const FLAKY: CameraQuality = CameraQuality {
    dropout_probability: 0.3,
    ..GOOD
};

#[test]
fn degraded_region_is_routed_around() {
    // Camera 0 is the best camera everywhere except region 10 (frames 200..220),
    // where it never localizes.
    let mut cfg = small(21, 20.0, |r, c| match (r, c) {
        (10, 0) => DROPPED,
        (_, 0) => SHARP,
        _ => FLAKY,
    });
    cfg.place_width = 20;
    cfg.place_stride = 10;
    cfg.slice_frames = 400;
    let (_, trained) = run(&cfg);
    let r = 200..220;
    for p in &trained.table.places {
        if p.start_index >= r.start && p.end_index <= r.end {
            assert_ne!(p.chosen_camera, 0, "place {} inside the degraded region", p.place_id);
        } else if p.end_index <= r.start || p.start_index >= r.end {
            assert_eq!(
                p.chosen_camera, 0,
                "place {} outside: costs {:?}",
                p.place_id, p.expected_costs
            );
        }
    }
    // The slice-level choice keeps the globally best camera despite losing region 10.
    assert_eq!(trained.statics.cameras, vec![0]);
    let inside = trained.table.places.iter().find(|p| p.start_index == 200).unwrap();
    assert_ne!(inside.chosen_camera, trained.statics.cameras[0]);
}

#[test]
fn statistic_selectors_avoid_dropped_camera() {
    let cfg = small(
        4,
        40.0,
        |r, c| if c == 2 && (3..=5).contains(&r) { DROPPED } else { GOOD },
    );
    let t = simulate(&cfg).unwrap();
    let batch = query_batch(&cfg, &t.query);
    let inputs = QueryInputs {
        cached: Some(&batch),
        ..QueryInputs::default()
    };
    for kind in [
        SelectorKind::Num3DPoints,
        SelectorKind::InlierCount,
        SelectorKind::InlierRatio,
    ] {
        let out = query(&cfg, &t.query, &inputs, kind).unwrap();
        let dropout_frames: Vec<_> = out.records.iter().filter(|r| (120..240).contains(&r.frame)).collect();
        let avoided = dropout_frames.iter().filter(|r| r.camera != 2).count();
        assert!(
            avoided * 100 >= dropout_frames.len() * 99,
            "{kind}: {avoided}/{}",
            dropout_frames.len()
        );
    }
}

#[test]
fn perfect_world() {
    let mut cfg = small(8, 40.0, |_, _| CameraQuality::PERFECT);
    cfg.world.map_point_sigma_m = 0.0;
    let (t, trained) = run(&cfg);
    for p in &trained.table.places {
        assert!(p.expected_costs.iter().all(|c| *c < 0.02), "{:?}", p.expected_costs);
        assert!(p.chosen_camera < 4);
    }
    let inputs = QueryInputs {
        table: Some(&trained.table),
        ..QueryInputs::default()
    };
    let out = query(&cfg, &t.query, &inputs, SelectorKind::DynamicCam).unwrap();
    let rep = report(&cfg, &out.records).unwrap();
    assert_eq!(
        rep.summary.row(SelectorKind::DynamicCam, ALL_LOGS).unwrap().recall_pct[0],
        100.0
    );
}

#[test]
fn selectors_on_a_mixed_world() {
    let cfg = small(13, 40.0, |r, c| {
        if (r + c) % 3 == 0 {
            placecam::simulator::scenarios::BAD
        } else {
            GOOD
        }
    });
    let (t, trained) = run(&cfg);
    let batch = query_batch(&cfg, &t.query);
    let cached = QueryInputs {
        table: Some(&trained.table),
        statics: Some(&trained.statics),
        cached: Some(&batch),
    };
    let uncached = QueryInputs { cached: None, ..cached };

    let mut records = Vec::new();
    let mut by_kind = std::collections::BTreeMap::new();
    for kind in SelectorKind::ALL {
        let out = query(&cfg, &t.query, &cached, kind).unwrap();
        assert!(out.records.iter().all(|r| r.camera < cfg.rig.len()));
        by_kind.insert(kind, out.records.clone());
        records.extend(out.records);
    }

    // Oracle error is the per-frame minimum over cameras, so no single-camera
    // selector ever has a smaller translation error.
    let oracle = &by_kind[&SelectorKind::OracleCam];
    for (i, o) in oracle.iter().enumerate() {
        let min = (0..4)
            .map(|c| batch.get(i, c).error.translation_err)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(o.error.translation_err, min);
        for (kind, rs) in &by_kind {
            if *kind != SelectorKind::MultiCamRigPnP {
                assert!(
                    o.error.translation_err <= rs[i].error.translation_err,
                    "{kind} frame {i}"
                );
            }
        }
    }

    // The cache changes nothing but speed; uncached runs count real localizer calls.
    for kind in [
        SelectorKind::DynamicCam,
        SelectorKind::InlierCount,
        SelectorKind::MultiCamRigPnP,
    ] {
        let out = query(&cfg, &t.query, &uncached, kind).unwrap();
        assert_eq!(out.records, by_kind[&kind]);
        let per_frame = if kind.is_statistic() { 4 } else { 1 };
        assert_eq!(out.localizations, per_frame * t.query.len());
        assert!(out.records.iter().all(|r| r.localizations == per_frame));
    }

    // Report rows come out sorted and agree with an independent recount.
    let csv = records_to_csv(&records);
    let parsed = records_from_csv(&csv).unwrap();
    assert_eq!(parsed, records);
    let rep = report(&cfg, &parsed).unwrap();
    let keys: Vec<_> = rep.summary.rows.iter().map(|r| r.selector).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for kind in SelectorKind::ALL {
        for (b, bin) in cfg.bins.iter().enumerate() {
            let mut failed = 0;
            for slice in 0..cfg.num_slices() {
                let rs: Vec<_> = parsed
                    .iter()
                    .filter(|r| r.selector == kind && r.slice == slice)
                    .collect();
                let ok = rs
                    .iter()
                    .filter(|r| r.error.translation_err <= bin.t_tol && r.error.rotation_err <= bin.r_tol)
                    .count();
                if (ok as f64) * 100.0 / (rs.len() as f64) < cfg.thresholds.min_recall_pct[b] {
                    failed += 1;
                }
            }
            assert_eq!(rep.summary.failed_slices(kind, b), failed, "{kind} bin {b}");
        }
    }
}
