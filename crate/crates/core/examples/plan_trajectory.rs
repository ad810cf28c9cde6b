//! Forward kinematics at home and a planned move to each color area.
//!
//!     cargo run --release --example plan_trajectory -- orange

use puppeteer::pipeline::ColorTarget;
use puppeteer::robot::{
    forward_kinematics, jacobian, plan_trajectory, KinematicParams, PlanOptions, TargetTable,
    Q_HOME,
};

fn main() {
    let params = KinematicParams::panda();
    let home = forward_kinematics(&Q_HOME, &params).expect("home within limits");
    let p = home.position;
    println!("home flange at ({:.4}, {:.4}, {:.4}) m", p.x, p.y, p.z);
    let j = jacobian(&Q_HOME, &params).expect("home within limits");
    let sv = j.svd(false, false).singular_values;
    println!("jacobian singular values at home: {:.3?}", sv.as_slice());

    let table = TargetTable::default_for(&params, &Q_HOME);
    let opts = PlanOptions::default();
    let colors: Vec<ColorTarget> = match std::env::args().nth(1) {
        Some(name) => {
            vec![ColorTarget::from_name(&name).unwrap_or_else(|| panic!("unknown color {name}"))]
        }
        None => ColorTarget::ALL.to_vec(),
    };
    for color in colors {
        let goal = table.position(color).expect("every color has a target");
        match plan_trajectory(&Q_HOME, color, &table, &params, &opts) {
            Ok(traj) => {
                let last = traj.final_q().expect("non-empty");
                let reached = forward_kinematics(&last, &params).expect("planned within limits");
                let max_step = traj
                    .waypoints
                    .windows(2)
                    .flat_map(|w| w[0].q.iter().zip(&w[1].q).map(|(a, b)| (a - b).abs()))
                    .fold(0.0, f64::max);
                println!(
                    "{:>7}: {} waypoints over {:.3} s, endpoint error {:.2e} m, largest joint step {:.4} rad",
                    color.name(),
                    traj.len(),
                    traj.duration(),
                    (reached.position - goal).norm(),
                    max_step
                );
            }
            Err(err) => println!("{:>7}: {err}", color.name()),
        }
    }
}
