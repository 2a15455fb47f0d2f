//! Trapezoidal, curvature-limited speed profile over the drive path and the
//! parking maneuver.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::maneuver::{Gear, ParkingManeuver};
use super::smooth::{SmoothPath, SAMPLE_SPACING};
use crate::geometry::{wrap_angle, Point2, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileLimits {
    pub v_max: f64,
    pub a_max: f64,
    /// Lateral acceleration bound used for the curvature limit, m/s².
    pub a_lat_max: f64,
}

impl Default for ProfileLimits {
    fn default() -> Self {
        Self { v_max: 1.0, a_max: 0.5, a_lat_max: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Drive,
    Park,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Drive => "drive",
            Phase::Park => "park",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefSample {
    pub t: f64,
    /// Body pose; heading is flipped by π while reversing.
    pub pose: Pose2D,
    /// Signed speed, negative in reverse.
    pub v: f64,
    pub gear: Gear,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub samples: Vec<RefSample>,
}

impl ReferenceTrajectory {
    /// A motionless trajectory holding `pose`.
    pub fn stationary(pose: Pose2D) -> Self {
        Self {
            samples: vec![RefSample { t: 0.0, pose, v: 0.0, gear: Gear::Forward, phase: Phase::Park }],
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn terminal(&self) -> Pose2D {
        self.samples.last().expect("trajectory is nonempty").pose
    }

    pub fn points(&self) -> Vec<Point2> {
        self.samples.iter().map(|s| s.pose.position()).collect()
    }

    /// Reference at time `t`, linearly interpolated and clamped to the ends.
    pub fn sample_at(&self, t: f64) -> RefSample {
        let s = &self.samples;
        if t <= s[0].t {
            return s[0];
        }
        if t >= self.duration() {
            return *s.last().unwrap();
        }
        let i = s.partition_point(|x| x.t <= t);
        let (a, b) = (s[i - 1], s[i]);
        let f = (t - a.t) / (b.t - a.t);
        let pa = a.pose.position().lerp(b.pose.position(), f);
        let theta = a.pose.theta + f * wrap_angle(b.pose.theta - a.pose.theta);
        RefSample {
            t,
            pose: Pose2D::new(pa.x, pa.y, theta),
            v: a.v + f * (b.v - a.v),
            gear: a.gear,
            phase: a.phase,
        }
    }

    /// Writes `t,x,y,theta,v,gear,phase` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "x", "y", "theta", "v", "gear", "phase"])?;
        for s in &self.samples {
            wr.write_record([
                format!("{:.4}", s.t),
                format!("{:.4}", s.pose.x),
                format!("{:.4}", s.pose.y),
                format!("{:.5}", s.pose.theta),
                format!("{:.4}", s.v),
                s.gear.as_str().to_string(),
                s.phase.as_str().to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

struct Raw {
    point: Point2,
    motion: f64,
    gear: Gear,
    phase: Phase,
}

/// Time-parameterizes the drive path followed by the maneuver. Speed is zero
/// at both ends and at every gear change.
pub fn time_parameterize(path: &SmoothPath, maneuver: Option<&ParkingManeuver>, limits: &ProfileLimits) -> ReferenceTrajectory {
    let mut raw: Vec<Raw> = path
        .samples
        .iter()
        .map(|s| Raw { point: s.point, motion: s.heading, gear: Gear::Forward, phase: Phase::Drive })
        .collect();
    if let Some(m) = maneuver {
        for (p, h, gear) in m.sample(SAMPLE_SPACING) {
            if raw.last().is_some_and(|r| r.point.distance(p) < 1e-9 && r.gear == gear) {
                continue;
            }
            raw.push(Raw { point: p, motion: h, gear, phase: Phase::Park });
        }
    }
    if raw.is_empty() {
        return ReferenceTrajectory { samples: Vec::new() };
    }
    let n = raw.len();
    let ds: Vec<f64> = raw.windows(2).map(|w| w[0].point.distance(w[1].point)).collect();

    let mut cap = vec![limits.v_max; n];
    for i in 0..n {
        let kappa = curvature(&raw, &ds, i);
        if kappa > 1e-9 {
            cap[i] = cap[i].min((limits.a_lat_max / kappa).sqrt());
        }
        let gear_change = i + 1 < n && raw[i + 1].gear != raw[i].gear;
        if i == 0 || i == n - 1 || gear_change || (i > 0 && raw[i - 1].gear != raw[i].gear && ds[i - 1] < 1e-12) {
            cap[i] = 0.0;
        }
    }
    let mut v = cap.clone();
    for i in 1..n {
        v[i] = v[i].min((v[i - 1] * v[i - 1] + 2.0 * limits.a_max * ds[i - 1]).sqrt());
    }
    for i in (0..n - 1).rev() {
        v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * limits.a_max * ds[i]).sqrt());
    }

    let mut samples = Vec::with_capacity(n);
    let mut t = 0.0;
    for i in 0..n {
        if i > 0 {
            let d = ds[i - 1];
            if d < 1e-12 {
                // Gear change in place.
                samples.push(body_sample(&raw[i], t, v[i]));
                continue;
            }
            t += 2.0 * d / (v[i - 1] + v[i]).max(1e-9);
        }
        samples.push(body_sample(&raw[i], t, v[i]));
    }
    // Coincident gear-change samples share a timestamp; keep the later one.
    samples.dedup_by(|b, a| b.t <= a.t && {
        *a = *b;
        true
    });
    ReferenceTrajectory { samples }
}

fn body_sample(r: &Raw, t: f64, speed: f64) -> RefSample {
    let heading = match r.gear {
        Gear::Forward => r.motion,
        Gear::Reverse => r.motion + std::f64::consts::PI,
    };
    RefSample {
        t,
        pose: Pose2D::new(r.point.x, r.point.y, heading),
        v: r.gear.sign() * speed,
        gear: r.gear,
        phase: r.phase,
    }
}

fn curvature(raw: &[Raw], ds: &[f64], i: usize) -> f64 {
    let n = raw.len();
    if n < 3 {
        return 0.0;
    }
    let (a, b) = if i == 0 { (0, 1) } else if i == n - 1 { (n - 2, n - 1) } else { (i - 1, i + 1) };
    let len: f64 = ds[a..b].iter().sum();
    if len < 1e-9 || raw[a].gear != raw[b].gear {
        return 0.0;
    }
    wrap_angle(raw[b].motion - raw[a].motion).abs() / len
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::smooth::PathSample;

    fn straight(len: f64) -> SmoothPath {
        let n = (len / 0.05).round() as usize;
        SmoothPath {
            segments: Vec::new(),
            samples: (0..=n)
                .map(|k| {
                    let s = len * k as f64 / n as f64;
                    PathSample { point: Point2::new(s, 0.0), heading: 0.0, s }
                })
                .collect(),
        }
    }

    #[test]
    fn trapezoid_duration() {
        let lim = ProfileLimits { v_max: 1.0, a_max: 1.0, a_lat_max: 0.5 };
        let tr = time_parameterize(&straight(10.0), None, &lim);
        assert!((tr.duration() - 11.0).abs() < 1e-6, "{}", tr.duration());
        assert_eq!(tr.samples[0].v, 0.0);
        assert_eq!(tr.samples.last().unwrap().v, 0.0);
    }

    #[test]
    fn zero_length_path() {
        let sp = SmoothPath {
            segments: Vec::new(),
            samples: vec![PathSample { point: Point2::new(1.0, 2.0), heading: 0.0, s: 0.0 }],
        };
        let tr = time_parameterize(&sp, None, &ProfileLimits::default());
        assert_eq!(tr.samples.len(), 1);
        assert_eq!(tr.duration(), 0.0);
    }

    #[test]
    fn interpolation_clamps() {
        let tr = time_parameterize(&straight(2.0), None, &ProfileLimits::default());
        assert_eq!(tr.sample_at(-1.0).pose, tr.samples[0].pose);
        assert_eq!(tr.sample_at(1e9).pose, tr.terminal());
        let mid = tr.sample_at(tr.duration() / 2.0);
        assert!((mid.pose.x - 1.0).abs() < 0.05);
    }
}
