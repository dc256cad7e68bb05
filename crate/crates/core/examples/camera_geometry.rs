//! Pinhole projection, depth back-projection and the SE(3) exponential.
//!
//! `cargo run --release --example camera_geometry`

use dynavo::geometry::{backproject, huber, project, se3_exp, se3_log};
use dynavo::{CameraIntrinsics, DepthRange, Twist};
use nalgebra::{Vector2, Vector3};

fn main() {
    let intr = CameraIntrinsics::tum_freiburg3();
    let range = DepthRange::default();

    let point = Vector3::new(0.3, -0.2, 2.5);
    let pixel = project(&point, &intr).unwrap();
    println!("point {:?} projects to ({:.3}, {:.3})", point.as_slice(), pixel.x, pixel.y);

    // a depth sensor reports raw units; 5000 per meter for this camera
    let raw = point.z * intr.depth_scale;
    let back = backproject(&pixel, raw, &intr, &range).unwrap();
    println!("back-projected from raw depth {raw}: error {:.2e} m", (back - point).norm());
    println!("zero depth is invalid: {:?}", backproject(&Vector2::new(320.0, 240.0), 0.0, &intr, &range).err());

    let twist = Twist::new(Vector3::new(0.02, -0.05, 0.01), Vector3::new(0.1, 0.0, -0.03));
    let pose = se3_exp(&twist);
    let back = se3_log(&pose);
    println!(
        "exp/log round trip: rotation error {:.2e}, translation error {:.2e}",
        (back.rotation() - twist.rotation()).norm(),
        (back.translation() - twist.translation()).norm()
    );
    println!("pose moves the point to {:?}", pose.apply(&point).as_slice());

    // robust cost on squared pixel residuals, delta = 2 px
    for r in [0.5f64, 2.0, 3.0, 10.0] {
        println!("huber({r} px) = {:.3}", huber(r * r, 2.0));
    }
}
