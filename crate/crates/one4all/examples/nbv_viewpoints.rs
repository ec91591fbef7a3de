//! Generate the viewpoint ring a sweep uses around a target object and show
//! the look-at accuracy of every pose.
//!
//! Run with: `cargo run -p one4all --example nbv_viewpoints`

use one4all::sim::arm::{nbv_viewpoints, NBV_DEFAULT_RADIUS_M};
use one4all::sim::geom::Vec3;

fn main() {
    let target = Vec3::new(0.55, -0.1, 0.38);
    for k in [1usize, 6, 12] {
        let poses = nbv_viewpoints(target, k, NBV_DEFAULT_RADIUS_M);
        println!("k = {:>2}: {} viewpoints on a {:.2} m ring", k, poses.len(), NBV_DEFAULT_RADIUS_M);
        for (i, pose) in poses.iter().enumerate() {
            let to_target = target.sub(pose.position).normalized();
            let look_err_deg = pose.orientation.forward().angle_to(to_target).to_degrees();
            let azimuth = pose.position.sub(target).y.atan2(pose.position.sub(target).x);
            println!(
                "  view {:>2}: azimuth {:>7.2} deg, position ({:+.3}, {:+.3}, {:+.3}), look-at error {:.2e} deg",
                i,
                azimuth.to_degrees(),
                pose.position.x,
                pose.position.y,
                pose.position.z,
                look_err_deg
            );
        }
        println!();
    }
}
