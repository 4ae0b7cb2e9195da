// Person-frame geometry and the follow-ahead reward.
//
//     cargo run --example reward_geometry

use followahead::geometry::{person_robot_angle, relative_to_world, world_to_relative, Pose, RelativeState};
use followahead::reward::{is_terminal, step_reward};

fn main() -> followahead::Result<()> {
    let human = Pose::new(2.0, 1.0, 90f64.to_radians());

    // robot 1.5 m straight ahead of a person walking along +y
    let robot = Pose::new(2.0, 2.5, 90f64.to_radians());
    let rel = world_to_relative(&robot, &human);
    let alpha = person_robot_angle(&rel)?;
    println!("relative state  x={:.3} y={:.3} phi={:.3}", rel.x, rel.y, rel.phi);
    println!("alpha={:.1} deg  reward={:.3}", alpha.to_degrees(), step_reward(rel.norm(), alpha.to_degrees()).total);

    // the same placement, rotated 45 degrees to the person's left
    let left = relative_to_world(&RelativeState::from_polar(1.5, 45f64.to_radians(), 0.0), &human);
    println!("ahead-left pose ({:.3}, {:.3})", left.x, left.y);

    println!("\n   D \\ alpha     0      30      90     180");
    for d in [0.4, 1.0, 1.5, 2.5, 4.0, 5.5] {
        let row: Vec<String> = [0.0, 30.0, 90.0, 180.0]
            .iter()
            .map(|a| format!("{:7.3}", step_reward(d, *a).total))
            .collect();
        println!("{d:5.1}     {}   {:?}", row.join(" "), is_terminal(d));
    }
    Ok(())
}
