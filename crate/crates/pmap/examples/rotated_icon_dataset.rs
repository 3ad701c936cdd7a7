//! Generate a rotated-icon dataset — the standard synthetic benchmark for a
//! one-dimensional circular manifold — and round-trip it through the binary
//! dataset format.

use pmap::data::{generate_icon, generate_rotated_dataset, rotate_image};
use pmap::{Dataset, Result};

fn main() -> Result<()> {
    // A deterministic asymmetric icon: rotations of it are pairwise distinct,
    // so the sample cloud really is a circle in pixel space.
    let side = 16;
    let icon = generate_icon(side, 42)?;
    println!(
        "icon: {side}x{side} pixels in [{:.3}, {:.3}]",
        icon.pixels().iter().cloned().fold(f64::INFINITY, f64::min),
        icon.pixels().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );

    // A quarter turn moves pixels far in Euclidean distance even though the
    // intrinsic (angle) distance is small compared to the full circle.
    let quarter = rotate_image(&icon, std::f64::consts::FRAC_PI_2);
    let dist: f64 = icon
        .pixels()
        .iter()
        .zip(&quarter)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    println!("pixel-space distance to the quarter turn: {dist:.3}");

    let set = generate_rotated_dataset(&icon, 256, 7)?;
    println!(
        "dataset: {} samples x {} features, angles in [{:.3}, {:.3})",
        set.dataset.n_samples(),
        set.dataset.n_features(),
        set.angles.iter().cloned().fold(f64::INFINITY, f64::min),
        set.angles.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );

    // Save and reload: the format is exact (raw little-endian f64), so the
    // round trip is bit-identical.
    let dir = std::env::temp_dir().join("pmap_example_dataset");
    std::fs::create_dir_all(&dir).ok();
    let path = dir.join("rotations.pmap");
    set.dataset.save(&path)?;
    let reloaded = Dataset::load(&path)?;
    assert_eq!(reloaded.data(), set.dataset.data(), "round trip must be exact");
    println!(
        "saved to {} ({} bytes) and reloaded bit-identically",
        path.display(),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0)
    );
    Ok(())
}
