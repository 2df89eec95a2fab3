use std::fmt::{self, Write as _};
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{CameraQuality, CameraQualityProfile, SimulationError, World, DROPOUT_KEEP};
use crate::geometry::{CameraModel, Pose, Rig};
use crate::localizer::Correspondence;
use crate::seed::derive_seed;

pub const TRAVERSE_FORMAT_VERSION: &str = "placecam-traverse v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraverseRole {
    Map,
    Training,
    Query,
}

impl TraverseRole {
    pub fn name(&self) -> &'static str {
        match self {
            TraverseRole::Map => "map",
            TraverseRole::Training => "training",
            TraverseRole::Query => "query",
        }
    }
}

impl FromStr for TraverseRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "map" => Ok(TraverseRole::Map),
            "training" => Ok(TraverseRole::Training),
            "query" => Ok(TraverseRole::Query),
            other => Err(format!("unknown traverse role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: usize,
    /// Ground-truth world-from-body pose.
    pub pose: Pose<f64>,
    /// Correspondences per camera, indexed by camera id.
    pub observations: Vec<Vec<Correspondence<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Traverse {
    pub role: TraverseRole,
    pub world_seed: u64,
    pub rng_seed: u64,
    pub condition_shift: f64,
    pub image_spacing_m: f64,
    pub rig: Rig<f64>,
    pub profile: CameraQualityProfile,
    pub frames: Vec<Frame>,
}

impl Traverse {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose<f64>> {
        self.frames.iter().map(|f| f.pose).collect()
    }
}

/// Generates one pass along the world's trajectory.
///
/// The map traverse is purely geometric: every visible landmark is observed
/// without noise. Training and query traverses match only mapped landmarks,
/// against their mapped (perturbed) positions, with region-dependent quality.
pub fn generate_traverse(
    world: &World,
    role: TraverseRole,
    rng_seed: u64,
    condition_shift: f64,
) -> Result<Traverse, SimulationError> {
    if !(0.0..=1.0).contains(&condition_shift) {
        return Err(SimulationError::Config(format!(
            "condition_shift must lie in [0, 1], got {condition_shift}"
        )));
    }
    let cfg = &world.config;
    let frames = (0..world.num_frames())
        .map(|index| {
            let s = cfg.frame_distance(index);
            let pose = cfg.pose_at(s);
            let region = cfg.region_of_distance(s);
            let observations = world
                .rig
                .cameras()
                .iter()
                .map(|cam| {
                    let quality = match role {
                        TraverseRole::Map => CameraQuality::PERFECT,
                        _ => world.profile.get(region, cam.camera_id).shifted(condition_shift),
                    };
                    let seed = derive_seed(rng_seed, &[index as u64, cam.camera_id as u64]);
                    observe(world, role, cam, &pose, s, &quality, seed)
                })
                .collect();
            Frame {
                index,
                pose,
                observations,
            }
        })
        .collect();
    Ok(Traverse {
        role,
        world_seed: cfg.rng_seed,
        rng_seed,
        condition_shift,
        image_spacing_m: cfg.image_spacing_m,
        rig: world.rig.clone(),
        profile: world.profile.clone(),
        frames,
    })
}

fn observe(
    world: &World,
    role: TraverseRole,
    cam: &CameraModel<f64>,
    body_pose: &Pose<f64>,
    s: f64,
    quality: &CameraQuality,
    seed: u64,
) -> Vec<Correspondence<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dropout = rng.random_bool(quality.dropout_probability);
    let noise = (quality.pixel_noise_sigma_px > 0.0)
        .then(|| Normal::new(0.0, quality.pixel_noise_sigma_px).expect("sigma validated"));
    let camera_from_world = cam.camera_from_world(body_pose);
    let range = world.config.max_range_m;
    let (w, h) = (cam.width as f64, cam.height as f64);

    let mut out = Vec::new();
    for i in world.landmarks_in_x(s - range, s + range) {
        let lm = &world.landmarks[i];
        if role != TraverseRole::Map && !world.mapped[i] {
            continue;
        }
        let p_cam = camera_from_world.transform_point(&lm.position);
        if p_cam.norm() > range {
            continue;
        }
        let Some(pixel) = cam.project_camera_point(&p_cam).pixel() else {
            continue;
        };
        if !cam.in_bounds(&pixel) {
            continue;
        }
        if rng.random::<f64>() >= quality.visible_landmark_fraction {
            continue;
        }
        let pixel = if rng.random::<f64>() < quality.outlier_fraction {
            Vector2::new(rng.random_range(0.0..w), rng.random_range(0.0..h))
        } else if let Some(n) = &noise {
            pixel + Vector2::new(n.sample(&mut rng), n.sample(&mut rng))
        } else {
            pixel
        };
        let world_point = match role {
            TraverseRole::Map => lm.position,
            _ => world.map_points[i],
        };
        // Noise can push a pixel off the sensor; such matches never happen.
        if let Ok(c) = Correspondence::new(cam, pixel, world_point, lm.id) {
            out.push(c);
        }
    }
    if dropout {
        out.truncate(DROPOUT_KEEP);
    }
    out
}

fn fmt_floats(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        let _ = write!(out, " {v}");
    }
}

impl fmt::Display for Traverse {
    /// Line-oriented text:
    ///
    /// ```text
    /// placecam-traverse v1
    /// role <map|training|query>
    /// seeds <world> <traverse>
    /// condition_shift <x>
    /// image_spacing_m <x>
    /// cameras <k>
    /// camera <id> <fx> <fy> <cx> <cy> <width> <height> <12 extrinsic numbers>
    /// regions <r>
    /// quality <region> <camera> <visible> <sigma_px> <outlier> <dropout>
    /// frames <n>
    /// frame <i> <12 pose numbers>
    /// obs <i> <camera> <landmark> <u> <v> <X> <Y> <Z>
    /// end
    /// ```
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let _ = writeln!(out, "{TRAVERSE_FORMAT_VERSION}");
        let _ = writeln!(out, "role {}", self.role.name());
        let _ = writeln!(out, "seeds {} {}", self.world_seed, self.rng_seed);
        let _ = writeln!(out, "condition_shift {}", self.condition_shift);
        let _ = writeln!(out, "image_spacing_m {}", self.image_spacing_m);
        let _ = writeln!(out, "cameras {}", self.rig.len());
        for cam in self.rig.cameras() {
            let _ = write!(
                out,
                "camera {} {} {} {} {} {} {} {}",
                cam.camera_id, cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, cam.extrinsic
            );
            out.push('\n');
        }
        let _ = writeln!(out, "regions {}", self.profile.num_regions());
        for r in 0..self.profile.num_regions() {
            for c in 0..self.profile.num_cameras() {
                let q = self.profile.get(r, c);
                let _ = write!(out, "quality {r} {c}");
                fmt_floats(
                    &mut out,
                    [
                        q.visible_landmark_fraction,
                        q.pixel_noise_sigma_px,
                        q.outlier_fraction,
                        q.dropout_probability,
                    ],
                );
                out.push('\n');
            }
        }
        let _ = writeln!(out, "frames {}", self.frames.len());
        for frame in &self.frames {
            let _ = writeln!(out, "frame {} {}", frame.index, frame.pose);
            for (cam, corrs) in frame.observations.iter().enumerate() {
                for c in corrs {
                    let _ = write!(out, "obs {} {cam} {}", frame.index, c.landmark_id);
                    fmt_floats(
                        &mut out,
                        [c.pixel.x, c.pixel.y, c.world_point.x, c.world_point.y, c.world_point.z],
                    );
                    out.push('\n');
                }
            }
        }
        out.push_str("end\n");
        f.write_str(&out)
    }
}

struct Lines<'a> {
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> SimulationError {
        SimulationError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<Vec<&'a str>, SimulationError> {
        let (i, l) = self.iter.next().ok_or_else(|| self.err("unexpected end of input"))?;
        self.line = i + 1;
        Ok(l.split_whitespace().collect())
    }

    fn peek_keyword(&mut self) -> Option<&'a str> {
        self.iter.peek().and_then(|(_, l)| l.split_whitespace().next())
    }

    fn keyed(&mut self, key: &str, arity: usize) -> Result<Vec<&'a str>, SimulationError> {
        let toks = self.next()?;
        if toks.first() != Some(&key) || toks.len() != arity + 1 {
            return Err(self.err(format!("expected `{key}` with {arity} value(s)")));
        }
        Ok(toks[1..].to_vec())
    }

    fn single<N: FromStr>(&mut self, key: &str) -> Result<N, SimulationError> {
        let t = self.keyed(key, 1)?;
        self.num(t[0])
    }

    fn num<N: FromStr>(&self, tok: &str) -> Result<N, SimulationError> {
        tok.parse().map_err(|_| self.err(format!("bad number `{tok}`")))
    }
}

impl FromStr for Traverse {
    type Err = SimulationError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = Lines {
            iter: text.lines().enumerate().peekable(),
            line: 0,
        };
        let header = lines.next()?;
        if header.join(" ") != TRAVERSE_FORMAT_VERSION {
            return Err(lines.err(format!("expected header `{TRAVERSE_FORMAT_VERSION}`")));
        }
        let role: TraverseRole = lines.keyed("role", 1)?[0].parse().map_err(|e: String| lines.err(e))?;
        let seeds = lines.keyed("seeds", 2)?;
        let (world_seed, rng_seed) = (lines.num(seeds[0])?, lines.num(seeds[1])?);
        let condition_shift: f64 = lines.single("condition_shift")?;
        let image_spacing_m: f64 = lines.single("image_spacing_m")?;

        let k: usize = lines.single("cameras")?;
        let mut cameras = Vec::with_capacity(k);
        for _ in 0..k {
            let t = lines.keyed("camera", 19)?;
            let f: Vec<f64> = t[1..5].iter().map(|s| lines.num(s)).collect::<Result<_, _>>()?;
            let ext: Vec<f64> = t[7..].iter().map(|s| lines.num(s)).collect::<Result<_, _>>()?;
            let extrinsic = Pose::from_slice(&ext).map_err(|e| lines.err(e.to_string()))?;
            let cam = CameraModel::new(
                lines.num(t[0])?,
                f[0],
                f[1],
                f[2],
                f[3],
                lines.num(t[5])?,
                lines.num(t[6])?,
                extrinsic,
            )
            .map_err(|e| lines.err(e.to_string()))?;
            cameras.push(cam);
        }
        let rig = Rig::new(cameras).map_err(|e| lines.err(e.to_string()))?;

        let r: usize = lines.single("regions")?;
        let mut profile = CameraQualityProfile::perfect(r, k);
        for region in 0..r {
            for cam in 0..k {
                let t = lines.keyed("quality", 6)?;
                if lines.num::<usize>(t[0])? != region || lines.num::<usize>(t[1])? != cam {
                    return Err(lines.err(format!("expected quality for region {region} camera {cam}")));
                }
                let q = CameraQuality {
                    visible_landmark_fraction: lines.num(t[2])?,
                    pixel_noise_sigma_px: lines.num(t[3])?,
                    outlier_fraction: lines.num(t[4])?,
                    dropout_probability: lines.num(t[5])?,
                };
                q.validate().map_err(|e| lines.err(e.to_string()))?;
                profile.set(region, cam, q);
            }
        }

        let n: usize = lines.single("frames")?;
        let mut frames = Vec::with_capacity(n);
        for index in 0..n {
            let t = lines.keyed("frame", 13)?;
            if lines.num::<usize>(t[0])? != index {
                return Err(lines.err(format!("frame indices must be contiguous; expected {index}")));
            }
            let vals: Vec<f64> = t[1..].iter().map(|s| lines.num(s)).collect::<Result<_, _>>()?;
            let pose = Pose::from_slice(&vals).map_err(|e| lines.err(e.to_string()))?;
            let mut observations = vec![Vec::new(); k];
            while lines.peek_keyword() == Some("obs") {
                let t = lines.keyed("obs", 8)?;
                if lines.num::<usize>(t[0])? != index {
                    return Err(lines.err(format!("observation belongs to frame {}, not {index}", t[0])));
                }
                let cam_id: usize = lines.num(t[1])?;
                let cam = rig
                    .camera(cam_id)
                    .ok_or_else(|| lines.err(format!("unknown camera {cam_id}")))?;
                let v: Vec<f64> = t[3..].iter().map(|s| lines.num(s)).collect::<Result<_, _>>()?;
                let c = Correspondence::new(
                    cam,
                    Vector2::new(v[0], v[1]),
                    Vector3::new(v[2], v[3], v[4]),
                    lines.num(t[2])?,
                )
                .map_err(|e| lines.err(e.to_string()))?;
                observations[cam_id].push(c);
            }
            frames.push(Frame {
                index,
                pose,
                observations,
            });
        }
        if lines.next()? != ["end"] {
            return Err(lines.err("expected `end`"));
        }
        Ok(Traverse {
            role,
            world_seed,
            rng_seed,
            condition_shift,
            image_spacing_m,
            rig,
            profile,
            frames,
        })
    }
}
