//! Recorded person trajectories and the level-4 library.
//!
//! On disk a trajectory is UTF-8 text: a `t,x,y` header followed by one
//! `t,x,y` row per waypoint, `t` in seconds with three decimals and `x`, `y`
//! in meters with four decimals.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: &str = "t,x,y";
/// Largest spatial gap allowed between consecutive waypoints.
pub const MAX_GAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub name: String,
    pub points: Vec<Waypoint>,
}

impl TrajectoryFile {
    /// Validates and wraps a waypoint list.
    pub fn new(name: impl Into<String>, points: Vec<Waypoint>) -> Result<Self> {
        let name = name.into();
        let fail = |reason: String| Error::Trajectory { name: name.clone(), reason };
        if points.len() < 2 {
            return Err(fail(format!("needs at least 2 waypoints, got {}", points.len())));
        }
        for (i, w) in points.iter().enumerate() {
            if !(w.t.is_finite() && w.x.is_finite() && w.y.is_finite()) {
                return Err(fail(format!("waypoint {i} is not finite")));
            }
        }
        for (i, pair) in points.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            if b.t <= a.t {
                return Err(fail(format!("time not increasing at waypoint {}", i + 1)));
            }
            let gap = (b.x - a.x).hypot(b.y - a.y);
            if gap > MAX_GAP {
                return Err(fail(format!(
                    "gap of {gap:.3} m before waypoint {} exceeds {MAX_GAP} m",
                    i + 1
                )));
            }
        }
        Ok(Self { name, points })
    }

    /// Path length in meters.
    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum()
    }

    pub fn duration(&self) -> f64 {
        self.points.last().unwrap().t - self.points[0].t
    }

    /// The same path walked backwards, with time re-based to start at zero.
    pub fn reversed(&self) -> Self {
        let end = self.points.last().unwrap().t;
        let points = self
            .points
            .iter()
            .rev()
            .map(|w| Waypoint { t: end - w.t, x: w.x, y: w.y })
            .collect();
        Self {
            name: format!("{}_reversed", self.name),
            points,
        }
    }

    /// Suffix starting at waypoint `start`, rigidly moved so that waypoint
    /// sits at the origin and the path leaves along +x.
    pub fn anchored_at(&self, start: usize) -> Self {
        let start = start.min(self.points.len() - 2);
        let origin = self.points[start];
        // heading toward the first waypoint far enough away to define a direction
        let ahead = self.points[start + 1..]
            .iter()
            .find(|w| (w.x - origin.x).hypot(w.y - origin.y) > 1e-6)
            .copied()
            .unwrap_or(self.points[start + 1]);
        let heading = (ahead.y - origin.y).atan2(ahead.x - origin.x);
        let (s, c) = heading.sin_cos();
        let points = self.points[start..]
            .iter()
            .map(|w| {
                let dx = w.x - origin.x;
                let dy = w.y - origin.y;
                Waypoint {
                    t: w.t - origin.t,
                    x: c * dx + s * dy,
                    y: -s * dx + c * dy,
                }
            })
            .collect();
        Self {
            name: self.name.clone(),
            points,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 24 + 8);
        out.push_str(HEADER);
        out.push('\n');
        for w in &self.points {
            let _ = writeln!(out, "{:.3},{:.4},{:.4}", w.t, w.x, w.y);
        }
        out
    }

    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let fail = |reason: String| Error::Trajectory { name: name.to_string(), reason };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            Some((_, h)) => return Err(fail(format!("expected header `{HEADER}`, found `{h}`"))),
            None => return Err(fail("empty file".into())),
        }
        let mut points = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> = if fields.len() == 3 {
                fields.iter().map(|f| f.parse().ok()).collect()
            } else {
                None
            };
            let Some(v) = parsed else {
                return Err(fail(format!("malformed row on line {}: `{line}`", lineno + 1)));
            };
            points.push(Waypoint { t: v[0], x: v[1], y: v[2] });
        }
        Self::new(name, points)
    }
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryFile> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trajectory".into());
    TrajectoryFile::parse(&name, &text)
}

pub fn save_trajectory(traj: &TrajectoryFile, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, traj.to_text())?;
    Ok(())
}

const BUNDLED: &[(&str, &str)] = &[
    ("lobby_loop", include_str!("../../data/trajectories/lobby_loop.csv")),
    ("corridor_zigzag", include_str!("../../data/trajectories/corridor_zigzag.csv")),
    ("kitchen_detour", include_str!("../../data/trajectories/kitchen_detour.csv")),
    ("office_s_bend", include_str!("../../data/trajectories/office_s_bend.csv")),
    ("atrium_wander", include_str!("../../data/trajectories/atrium_wander.csv")),
    ("hallway_uturn", include_str!("../../data/trajectories/hallway_uturn.csv")),
    ("lab_figure_eight", include_str!("../../data/trajectories/lab_figure_eight.csv")),
    ("garden_path", include_str!("../../data/trajectories/garden_path.csv")),
    ("parking_sweep", include_str!("../../data/trajectories/parking_sweep.csv")),
    ("plaza_spiral", include_str!("../../data/trajectories/plaza_spiral.csv")),
];

/// Trajectories available to curriculum level 4. Every added trajectory is
/// stored together with its reverse.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryLibrary {
    trajectories: Vec<TrajectoryFile>,
}

impl TrajectoryLibrary {
    /// The trajectories shipped with the crate.
    pub fn bundled() -> Self {
        let mut lib = Self::default();
        for (name, text) in BUNDLED {
            let traj = TrajectoryFile::parse(name, text).expect("bundled trajectory is valid");
            lib.add(traj);
        }
        lib
    }

    /// Loads every `*.csv` in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        paths.sort();
        let mut lib = Self::default();
        for p in paths {
            lib.add(load_trajectory(&p)?);
        }
        Ok(lib)
    }

    pub fn add(&mut self, traj: TrajectoryFile) {
        let rev = traj.reversed();
        self.trajectories.push(traj);
        self.trajectories.push(rev);
    }

    pub fn trajectories(&self) -> &[TrajectoryFile] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Summed length of the forward trajectories (reverses not counted twice).
    pub fn total_length(&self) -> f64 {
        self.trajectories.iter().step_by(2).map(TrajectoryFile::length).sum()
    }
}
