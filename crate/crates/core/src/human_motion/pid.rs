//! Waypoint tracking for the simulated person.

use serde::{Deserialize, Serialize};

use super::trajectory::TrajectoryFile;
use super::MotionCommand;
use crate::geometry::{wrap_angle, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub heading: PidGains,
    pub speed: PidGains,
    /// Target walking speed, m/s.
    pub cruise_speed: f64,
    /// A waypoint counts as reached inside this radius.
    pub advance_radius: f64,
    pub max_speed: f64,
    pub max_turn_rate: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            heading: PidGains { kp: 2.0, ki: 0.0, kd: 0.2 },
            speed: PidGains { kp: 1.0, ki: 0.0, kd: 0.0 },
            cruise_speed: 0.5,
            advance_radius: 0.3,
            max_speed: 1.0,
            max_turn_rate: 1.5,
        }
    }
}

/// Scalar PID with a derivative on the error signal.
#[derive(Debug, Clone, Default)]
struct Pid {
    integral: f64,
    prev_error: Option<f64>,
}

impl Pid {
    fn update(&mut self, gains: &PidGains, error: f64, dt: f64) -> f64 {
        self.integral += error * dt;
        let derivative = match self.prev_error {
            Some(prev) if dt > 0.0 => (error - prev) / dt,
            _ => 0.0,
        };
        self.prev_error = Some(error);
        gains.kp * error + gains.ki * self.integral + gains.kd * derivative
    }
}

/// Single-target PID step: heading error drives ω, distance drives v.
///
/// Stateless variant of what [`PidTracker`] does each step (no integral or
/// derivative memory).
pub fn pid_track(person: &Pose, target: (f64, f64), cfg: &TrackerConfig) -> MotionCommand {
    let dx = target.0 - person.x;
    let dy = target.1 - person.y;
    let heading_error = wrap_angle(dy.atan2(dx) - person.phi);
    let distance = dx.hypot(dy);
    command_from_errors(heading_error, distance, cfg.heading.kp * heading_error, cfg)
}

fn command_from_errors(
    heading_error: f64,
    distance: f64,
    omega_raw: f64,
    cfg: &TrackerConfig,
) -> MotionCommand {
    let omega = omega_raw.clamp(-cfg.max_turn_rate, cfg.max_turn_rate);
    // slow down while facing away from the target
    let alignment = heading_error.cos().max(0.0);
    let v = (cfg.speed.kp * distance).min(cfg.cruise_speed) * alignment;
    MotionCommand::new(v.clamp(0.0, cfg.max_speed), omega)
}

/// Follows a trajectory waypoint by waypoint.
#[derive(Debug, Clone)]
pub struct PidTracker {
    trajectory: TrajectoryFile,
    cfg: TrackerConfig,
    next: usize,
    heading_pid: Pid,
    speed_pid: Pid,
}

impl PidTracker {
    pub fn new(trajectory: TrajectoryFile, cfg: TrackerConfig) -> Self {
        Self {
            trajectory,
            cfg,
            next: 1,
            heading_pid: Pid::default(),
            speed_pid: Pid::default(),
        }
    }

    pub fn trajectory(&self) -> &TrajectoryFile {
        &self.trajectory
    }

    pub fn finished(&self) -> bool {
        self.next >= self.trajectory.points.len()
    }

    pub fn command(&mut self, person: &Pose, dt: f64) -> MotionCommand {
        let pts = &self.trajectory.points;
        while self.next < pts.len() {
            let w = pts[self.next];
            if (w.x - person.x).hypot(w.y - person.y) > self.cfg.advance_radius {
                break;
            }
            self.next += 1;
        }
        if self.finished() {
            return MotionCommand::STOP;
        }
        let w = pts[self.next];
        let dx = w.x - person.x;
        let dy = w.y - person.y;
        let heading_error = wrap_angle(dy.atan2(dx) - person.phi);
        // distance left along the remaining path, so speed only drops at the end
        let remaining = dx.hypot(dy)
            + pts[self.next..]
                .windows(2)
                .map(|p| (p[1].x - p[0].x).hypot(p[1].y - p[0].y))
                .sum::<f64>();
        let omega = self.heading_pid.update(&self.cfg.heading, heading_error, dt);
        let speed_gains = self.cfg.speed;
        let v_drive = self.speed_pid.update(&speed_gains, remaining, dt);
        let mut cmd = command_from_errors(heading_error, remaining, omega, &self.cfg);
        cmd.v = cmd.v.min(v_drive.max(0.0));
        cmd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::human_motion::Waypoint;
    use crate::sim::step_unicycle;

    #[test]
    fn ahead_target_goes_straight() {
        let cfg = TrackerConfig::default();
        let cmd = pid_track(&Pose::new(0.0, 0.0, 0.0), (2.0, 0.0), &cfg);
        assert_eq!(cmd.omega, 0.0);
        assert!(cmd.v > 0.0);
    }

    #[test]
    fn left_target_turns_left() {
        let cfg = TrackerConfig::default();
        let cmd = pid_track(&Pose::new(0.0, 0.0, 0.0), (0.0, 2.0), &cfg);
        assert!(cmd.omega > 0.0);
        let cmd = pid_track(&Pose::new(0.0, 0.0, 0.0), (0.0, -2.0), &cfg);
        assert!(cmd.omega < 0.0);
    }

    #[test]
    fn straight_line_cross_track() {
        // start 0.3 m off a line along +x and converge onto it
        let pts: Vec<Waypoint> = (0..60)
            .map(|i| Waypoint { t: i as f64 * 0.25, x: i as f64 * 0.125, y: 0.0 })
            .collect();
        let traj = TrajectoryFile::new("line", pts).unwrap();
        let mut tracker = PidTracker::new(traj, TrackerConfig::default());
        let mut p = Pose::new(0.0, 0.3, 0.0);
        for step in 0..60 {
            let cmd = tracker.command(&p, 0.2);
            p = step_unicycle(&p, cmd, 0.2);
            if step >= 10 && !tracker.finished() {
                assert!(p.y.abs() < 0.1, "step {step}: cross-track {}", p.y);
            }
        }
    }
}
