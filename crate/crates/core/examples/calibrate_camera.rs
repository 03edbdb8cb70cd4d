//! Fit the image-to-ground map from four surveyed markers, then move points
//! back and forth between the image and the ground plane.
//!
//!     cargo run --example calibrate_camera

use matafkit::geometry::{fit_homography, invert, project_to_image, project_to_plane, ImagePoint, WorldPoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // pixel position of each marker and its surveyed ground position (m)
    let pairs = [
        (ImagePoint::new(112.0, 640.0), WorldPoint::new(20.0, 30.0)),
        (ImagePoint::new(1210.0, 655.0), WorldPoint::new(85.0, 30.0)),
        (ImagePoint::new(1010.0, 140.0), WorldPoint::new(80.0, 120.0)),
        (ImagePoint::new(290.0, 128.0), WorldPoint::new(25.0, 125.0)),
    ];
    let fit = fit_homography(&pairs)?;
    println!("h = {:?}", fit.homography.coefficients());
    println!("reprojection rms = {:.3e} m over {} pairs", fit.rms_error_m, fit.n_pairs);

    let head = ImagePoint::new(640.0, 400.0);
    let ground = project_to_plane(&fit.homography, head)?;
    println!("pixel ({}, {}) -> ground ({:.3}, {:.3}) m", head.u, head.v, ground.x, ground.y);
    let back = project_to_image(&fit.homography, ground)?;
    println!("and back -> pixel ({:.9}, {:.9})", back.u, back.v);

    let inv = invert(&fit.homography)?;
    println!("inverse h = {:?}", inv.coefficients());
    Ok(())
}
