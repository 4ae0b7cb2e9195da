// The four levels of simulated person motion, plus writing a trajectory
// file and tracking it with the PID walker.
//
//     cargo run --example person_motion

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use followahead::geometry::Pose;
use followahead::human_motion::{
    load_trajectory, sample_motion, save_trajectory, MotionPlan, PidTracker, TrackerConfig, TrajectoryFile,
    TrajectoryLibrary, Waypoint,
};
use followahead::sim::step_unicycle;

fn walk(plan: &mut MotionPlan, steps: usize) -> (Pose, f64) {
    let mut p = Pose::new(0.0, 0.0, 0.0);
    let mut length = 0.0;
    for _ in 0..steps {
        let next = step_unicycle(&p, plan.next_command(&p, 0.2), 0.2);
        length += next.distance_to(&p);
        p = next;
    }
    (p, length)
}

fn main() -> followahead::Result<()> {
    let library = TrajectoryLibrary::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for level in 1..=4 {
        let mut plan = sample_motion(level, &mut rng, &library)?;
        let (end, length) = walk(&mut plan, 100);
        println!(
            "level {level}: walked {length:5.2} m in 20 s, ends at ({:6.2}, {:6.2}) heading {:6.1} deg",
            end.x,
            end.y,
            end.phi.to_degrees()
        );
    }

    // a hand-made L-shaped path, saved and loaded back
    let mut points = Vec::new();
    for k in 0..=40 {
        let s = k as f64 * 0.1;
        let (x, y) = if s <= 2.0 { (s, 0.0) } else { (2.0, s - 2.0) };
        points.push(Waypoint { t: s / 0.5, x, y });
    }
    let path = std::env::temp_dir().join("followahead_l_turn.csv");
    save_trajectory(&TrajectoryFile::new("l_turn", points)?, &path)?;
    let traj = load_trajectory(&path)?;
    println!("\n{} waypoints, {:.2} m, {:.1} s in {}", traj.points.len(), traj.length(), traj.duration(), path.display());

    let mut tracker = MotionPlan::Track(PidTracker::new(traj, TrackerConfig::default()));
    let (end, _) = walk(&mut tracker, 60);
    println!("PID walker ends at ({:.2}, {:.2}), target corner path end (2.00, 2.00)", end.x, end.y);
    Ok(())
}
