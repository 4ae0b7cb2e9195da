// Timed-elastic-band planning around a walking person.
//
//     cargo run --example plan_band

use followahead::geometry::Pose;
use followahead::planner::{command_toward, extract_command, plan, DynamicObstacle, PlannerConfig};

fn main() -> followahead::Result<()> {
    let cfg = PlannerConfig::default();
    let robot = Pose::new(0.0, 0.0, 0.0);
    let goal = Pose::new(3.0, 0.0, 0.0);
    // the person stands right on the straight line to the goal
    let person = Pose::new(1.5, 0.05, std::f64::consts::PI);

    let band = plan(&robot, &goal, &person, (0.0, 0.0), &cfg)?;
    let obstacle = DynamicObstacle::fixed(person.x, person.y);
    println!("{} poses over {:.2} s, {} iterations{}", band.poses.len(), band.duration(), band.iterations, if band.degraded { " (hit the cap)" } else { "" });
    println!("closest approach to the person: {:.3} m", band.min_clearance(&obstacle));
    let mut t = 0.0;
    for (k, p) in band.poses.iter().enumerate() {
        println!("  t={t:5.2}  x={:6.3}  y={:6.3}  theta={:6.1} deg", p.x, p.y, p.theta.to_degrees());
        t += band.dts.get(k).copied().unwrap_or(0.0);
    }
    let cmd = extract_command(&band, &cfg);
    println!("first command: v={:.3} m/s omega={:.3} rad/s", cmd.v, cmd.omega);

    // the same person now walking toward the robot at 0.6 m/s
    let (_, cmd) = command_toward(&robot, &goal, &person, (-0.6, 0.0), &cfg)?;
    println!("with the person approaching: v={:.3} omega={:.3}", cmd.v, cmd.omega);
    Ok(())
}
