use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle, m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Default for Area {
    fn default() -> Self {
        Area {
            min: [0.0, 0.0],
            max: [4.0, 2.0],
        }
    }
}

impl Area {
    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }

    fn validate(&self) -> Result<()> {
        let ok = self.min.iter().chain(&self.max).all(|v| v.is_finite())
            && self.width() > 0.0
            && self.height() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("degenerate area {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Smooth bounded wandering with an independent, drifting heading.
    SmoothRandom,
    /// Drive the inset perimeter of the area, turning in place at corners.
    WaypointLoop,
    /// Rotate at a fixed point.
    SpinInPlace,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-random" => Ok(Profile::SmoothRandom),
            "waypoint-loop" => Ok(Profile::WaypointLoop),
            "spin-in-place" => Ok(Profile::SpinInPlace),
            other => Err(Error::InvalidArgument(format!("unknown profile {other:?}"))),
        }
    }
}

/// Ground-truth pose. `heading` is continuous (not wrapped) and `rate` is
/// held constant over `[t, t + dt)`, so `heading(k+1) = heading(k) + rate(k)·dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruePose {
    pub t: f64,
    pub position: [f64; 2],
    pub heading: f64,
    pub rate: f64,
}

pub fn generate_trajectory(
    area: &Area,
    duration: f64,
    rate_hz: f64,
    profile: Profile,
    seed: u64,
) -> Result<Vec<TruePose>> {
    area.validate()?;
    if !(duration.is_finite() && duration > 0.0 && rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::InvalidArgument(
            "duration and rate must be positive".into(),
        ));
    }
    let dt = 1.0 / rate_hz;
    let n = (duration * rate_hz).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses = match profile {
        Profile::SmoothRandom => smooth_random(area, n, dt, &mut rng),
        Profile::WaypointLoop => waypoint_loop(area, n, dt, &mut rng),
        Profile::SpinInPlace => spin_in_place(area, n, dt, duration, &mut rng),
    };
    Ok(poses)
}

struct Harmonics {
    amp: [f64; 3],
    freq: [f64; 3],
    phase: [f64; 3],
}

impl Harmonics {
    fn random(rng: &mut ChaCha8Rng, amp: (f64, f64), freq_hz: (f64, f64)) -> Self {
        let mut h = Harmonics {
            amp: [0.0; 3],
            freq: [0.0; 3],
            phase: [0.0; 3],
        };
        for i in 0..3 {
            h.amp[i] = rng.random_range(amp.0..amp.1);
            h.freq[i] = TAU * rng.random_range(freq_hz.0..freq_hz.1);
            h.phase[i] = rng.random_range(0.0..TAU);
        }
        h
    }

    fn eval(&self, t: f64) -> f64 {
        (0..3)
            .map(|i| self.amp[i] * (self.freq[i] * t + self.phase[i]).sin())
            .sum()
    }

    /// Evaluation normalized into [−1, 1].
    fn unit(&self, t: f64) -> f64 {
        self.eval(t) / self.amp.iter().sum::<f64>()
    }
}

fn smooth_random(area: &Area, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Vec<TruePose> {
    let hx = Harmonics::random(rng, (0.3, 1.0), (0.005, 0.04));
    let hy = Harmonics::random(rng, (0.3, 1.0), (0.005, 0.04));
    let hr = Harmonics::random(rng, (0.1, 0.4), (0.005, 0.05));
    let drift = rng.random_range(0.1..0.25) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let c = area.center();
    let (ax, ay) = (0.45 * area.width(), 0.45 * area.height());
    let mut heading = rng.random_range(-PI..PI);
    (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            let rate = drift + hr.eval(t);
            let pose = TruePose {
                t,
                position: [c[0] + ax * hx.unit(t), c[1] + ay * hy.unit(t)],
                heading,
                rate,
            };
            heading += rate * dt;
            pose
        })
        .collect()
}

fn waypoint_loop(area: &Area, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Vec<TruePose> {
    const SPEED: f64 = 0.3;
    const TURN_RATE: f64 = 0.5;
    let mx = 0.15 * area.width();
    let my = 0.15 * area.height();
    let mut corners = [
        [area.min[0] + mx, area.min[1] + my],
        [area.max[0] - mx, area.min[1] + my],
        [area.max[0] - mx, area.max[1] - my],
        [area.min[0] + mx, area.max[1] - my],
    ];
    let ccw = rng.random_bool(0.5);
    if !ccw {
        corners.reverse();
    }
    corners.rotate_left(rng.random_range(0..4));
    let turn = if ccw { FRAC_PI_2 } else { -FRAC_PI_2 };

    // Each leg: (start, velocity, steps) straight, then a turn of `turn_steps`.
    let turn_steps = ((FRAC_PI_2 / TURN_RATE) / dt).round().max(1.0) as usize;
    let turn_rate = turn / (turn_steps as f64 * dt);
    let legs: Vec<([f64; 2], [f64; 2], usize)> = (0..4)
        .map(|i| {
            let (a, b) = (corners[i], corners[(i + 1) % 4]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let steps = ((len / SPEED) / dt).round().max(1.0) as usize;
            let v = [
                (b[0] - a[0]) / (steps as f64 * dt),
                (b[1] - a[1]) / (steps as f64 * dt),
            ];
            (a, v, steps)
        })
        .collect();
    let first = legs[0].1;
    let mut heading = first[1].atan2(first[0]);

    let mut out = Vec::with_capacity(n);
    let mut leg = 0;
    let mut step_in_phase = 0;
    let mut turning = false;
    let mut pos = legs[0].0;
    for k in 0..n {
        let (start, v, steps) = legs[leg];
        let rate = if turning { turn_rate } else { 0.0 };
        if !turning {
            let s = step_in_phase as f64 * dt;
            pos = [start[0] + v[0] * s, start[1] + v[1] * s];
        }
        out.push(TruePose {
            t: k as f64 * dt,
            position: pos,
            heading,
            rate,
        });
        heading += rate * dt;
        step_in_phase += 1;
        if !turning && step_in_phase == steps {
            pos = corners[(leg + 1) % 4];
            turning = true;
            step_in_phase = 0;
        } else if turning && step_in_phase == turn_steps {
            turning = false;
            step_in_phase = 0;
            leg = (leg + 1) % 4;
        }
    }
    out
}

fn spin_in_place(
    area: &Area,
    n: usize,
    dt: f64,
    duration: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<TruePose> {
    let c = area.center();
    let rate = (2.5 * TAU / duration).max(0.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut heading = rng.random_range(-PI..PI);
    (0..n)
        .map(|k| {
            let pose = TruePose {
                t: k as f64 * dt,
                position: c,
                heading,
                rate,
            };
            heading += rate * dt;
            pose
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_in_place_turns_twice() {
        for duration in [10.0, 300.0] {
            let tr = generate_trajectory(&Area::default(), duration, 10.0, Profile::SpinInPlace, 3)
                .unwrap();
            assert!(tr.iter().all(|p| p.position == tr[0].position));
            let sweep = (tr.last().unwrap().heading - tr[0].heading).abs();
            assert!(sweep >= 2.0 * TAU, "sweep {sweep}");
        }
    }

    #[test]
    fn smooth_random_is_deterministic() {
        let a =
            generate_trajectory(&Area::default(), 60.0, 10.0, Profile::SmoothRandom, 17).unwrap();
        let b =
            generate_trajectory(&Area::default(), 60.0, 10.0, Profile::SmoothRandom, 17).unwrap();
        let c =
            generate_trajectory(&Area::default(), 60.0, 10.0, Profile::SmoothRandom, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 601);
    }

    #[test]
    fn stored_rate_matches_heading_differences() {
        for profile in [
            Profile::SmoothRandom,
            Profile::WaypointLoop,
            Profile::SpinInPlace,
        ] {
            let tr = generate_trajectory(&Area::default(), 120.0, 100.0, profile, 5).unwrap();
            let dt = 0.01;
            let worst = tr
                .windows(2)
                .map(|w| ((w[1].heading - w[0].heading) / dt - w[0].rate).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-6, "{profile:?}: {worst}");
            assert!(tr
                .windows(2)
                .all(|w| (w[1].heading - w[0].heading).abs() < PI));
            assert!(tr.windows(2).all(|w| w[1].t > w[0].t));
        }
    }

    #[test]
    fn poses_stay_in_area() {
        let area = Area::default();
        for profile in [Profile::SmoothRandom, Profile::WaypointLoop] {
            let tr = generate_trajectory(&area, 300.0, 10.0, profile, 9).unwrap();
            assert!(tr.iter().all(|p| area.contains(p.position)), "{profile:?}");
        }
        let tr = generate_trajectory(&area, 300.0, 10.0, Profile::WaypointLoop, 9).unwrap();
        assert!(tr.iter().any(|p| p.rate != 0.0));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let flat = Area {
            min: [0.0, 0.0],
            max: [4.0, 0.0],
        };
        assert!(generate_trajectory(&flat, 10.0, 10.0, Profile::SmoothRandom, 0).is_err());
        assert!(
            generate_trajectory(&Area::default(), 0.0, 10.0, Profile::SmoothRandom, 0).is_err()
        );
        assert!(
            generate_trajectory(&Area::default(), 10.0, -1.0, Profile::SmoothRandom, 0).is_err()
        );
        assert!("zigzag".parse::<Profile>().is_err());
        assert_eq!(
            "waypoint-loop".parse::<Profile>().unwrap(),
            Profile::WaypointLoop
        );
    }
}
