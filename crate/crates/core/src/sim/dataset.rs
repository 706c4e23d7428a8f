use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sensors::{measure_gyro, measure_mag, measure_range, measure_rss};
use super::{validate_anchors, Anchor, Area, Profile, SensorNoiseConfig, TruePose, World};
use crate::error::{Error, Result};
use crate::heading::UwbFeature;
use crate::so2::{wrap_angle, Angle};

/// One synchronized epoch of sensor data, ordered by anchor id.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub ranges: Vec<f64>,
    pub rss: Vec<f64>,
    /// rad/s, held over `[t, t_next)`.
    pub gyro: f64,
    pub mag_heading: Option<f64>,
    pub gt_heading: f64,
}

impl SampleRecord {
    pub fn feature(&self) -> Result<UwbFeature> {
        UwbFeature::new(self.ranges.clone(), self.rss.clone())
    }

    pub fn gt_angle(&self) -> Angle {
        Angle::new(self.gt_heading)
    }
}

/// Everything needed to reproduce or interpret a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub anchors: Vec<Anchor>,
    pub world: World,
    pub noise: SensorNoiseConfig,
    pub trajectory_seed: u64,
    pub profile: Option<Profile>,
    pub duration: f64,
    pub rate_hz: f64,
    pub columns: Vec<String>,
}

impl DatasetMeta {
    pub fn anchor_ids(&self) -> Vec<u32> {
        self.anchors.iter().map(|a| a.id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub records: Vec<SampleRecord>,
}

fn columns(m: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    c.extend((0..m).map(|i| format!("range_{i}")));
    c.extend((0..m).map(|i| format!("rss_{i}")));
    c.extend(["gyro", "mag", "gt_theta"].map(String::from));
    c
}

/// Samples every sensor at every pose.
///
/// Draw order per epoch, from a single stream seeded by `noise.seed`: for
/// each anchor in id order a range variate then an RSS variate; then the
/// gyro; then the magnetometer.
pub fn build_dataset(
    trajectory: &[TruePose],
    world: &World,
    noise: &SensorNoiseConfig,
    trajectory_seed: u64,
    profile: Option<Profile>,
) -> Result<Dataset> {
    if trajectory.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    noise.validate()?;
    world.pattern.validate()?;
    let anchors = validate_anchors(&world.anchors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let n = trajectory.len();
    let default_dt = if n > 1 {
        trajectory[1].t - trajectory[0].t
    } else {
        0.1
    };
    let mut records = Vec::with_capacity(n);
    for (k, pose) in trajectory.iter().enumerate() {
        let mut ranges = Vec::with_capacity(anchors.len());
        let mut rss = Vec::with_capacity(anchors.len());
        for a in &anchors {
            ranges.push(measure_range(pose, a, noise, &mut rng));
            rss.push(measure_rss(
                pose,
                a,
                &world.pattern,
                &world.path_loss,
                noise,
                &mut rng,
            ));
        }
        let dt = trajectory
            .get(k + 1)
            .map_or(default_dt, |next| next.t - pose.t);
        let gyro = measure_gyro(pose, noise, dt, &mut rng);
        let mag = measure_mag(pose, noise, &mut rng);
        records.push(SampleRecord {
            t: pose.t,
            ranges,
            rss,
            gyro,
            mag_heading: Some(mag),
            gt_heading: wrap_angle(pose.heading),
        });
    }
    let (t0, t1) = (trajectory[0].t, trajectory[n - 1].t);
    let meta = DatasetMeta {
        columns: columns(anchors.len()),
        anchors,
        world: world.clone(),
        noise: noise.clone(),
        trajectory_seed,
        profile,
        duration: t1 - t0,
        rate_hz: if n > 1 {
            (n - 1) as f64 / (t1 - t0)
        } else {
            0.0
        },
    };
    Ok(Dataset { meta, records })
}

/// `train.csv` ↦ `train.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

impl Dataset {
    pub fn anchors(&self) -> usize {
        self.meta.anchors.len()
    }

    pub fn duration(&self) -> f64 {
        self.meta.duration
    }

    pub fn features(&self) -> Result<Vec<UwbFeature>> {
        self.records.iter().map(SampleRecord::feature).collect()
    }

    /// Writes the CSV table and its companion metadata file.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(&self.meta.columns)?;
        for r in &self.records {
            let mut row: Vec<String> = Vec::with_capacity(self.meta.columns.len());
            row.push(r.t.to_string());
            row.extend(r.ranges.iter().map(f64::to_string));
            row.extend(r.rss.iter().map(f64::to_string));
            row.push(r.gyro.to_string());
            row.push(r.mag_heading.map_or(String::new(), |m| m.to_string()));
            row.push(r.gt_heading.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        fs::write(
            meta_path(csv_path),
            serde_json::to_string_pretty(&self.meta)?,
        )?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<Self> {
        let mpath = meta_path(csv_path);
        let meta: DatasetMeta = serde_json::from_str(
            &fs::read_to_string(&mpath).map_err(|e| Error::data(&mpath, e.to_string()))?,
        )
        .map_err(|e| Error::data(&mpath, e.to_string()))?;
        let m = meta.anchors.len();
        let expected = columns(m);
        let mut rdr =
            csv::Reader::from_path(csv_path).map_err(|e| Error::data(csv_path, e.to_string()))?;
        let header: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header != expected {
            return Err(Error::data(
                csv_path,
                format!("unexpected header {header:?}"),
            ));
        }
        let parse = |s: &str, line: usize| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::data(csv_path, format!("line {line}: {e}")))
        };
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            if row.len() != expected.len() {
                return Err(Error::data(
                    csv_path,
                    format!("line {line}: expected {} fields", expected.len()),
                ));
            }
            let vals: Vec<&str> = row.iter().collect();
            let t = parse(vals[0], line)?;
            let ranges = vals[1..=m]
                .iter()
                .map(|s| parse(s, line))
                .collect::<Result<Vec<_>>>()?;
            let rss = vals[m + 1..=2 * m]
                .iter()
                .map(|s| parse(s, line))
                .collect::<Result<Vec<_>>>()?;
            let gyro = parse(vals[2 * m + 1], line)?;
            let mag = vals[2 * m + 2].trim();
            let mag_heading = if mag.is_empty() {
                None
            } else {
                Some(parse(mag, line)?)
            };
            let gt_heading = parse(vals[2 * m + 3], line)?;
            if let Some(prev) = records.last().map(|r: &SampleRecord| r.t) {
                if t <= prev {
                    return Err(Error::data(
                        csv_path,
                        format!("line {line}: timestamps must increase"),
                    ));
                }
            }
            records.push(SampleRecord {
                t,
                ranges,
                rss,
                gyro,
                mag_heading,
                gt_heading,
            });
        }
        if records.is_empty() {
            return Err(Error::data(csv_path, "no data rows"));
        }
        Ok(Dataset { meta, records })
    }
}

/// Convenience: trajectory plus dataset in one call.
pub fn simulate(
    world: &World,
    noise: &SensorNoiseConfig,
    area: &Area,
    duration: f64,
    rate_hz: f64,
    profile: Profile,
    trajectory_seed: u64,
) -> Result<Dataset> {
    let traj = super::generate_trajectory(area, duration, rate_hz, profile, trajectory_seed)?;
    build_dataset(&traj, world, noise, trajectory_seed, Some(profile))
}
