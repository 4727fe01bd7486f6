//! Prints the exact Euclidean distance transform and the gamma field of a
//! small mask.
//!
//! ```bash
//! cargo run --example distance_transform
//! ```

use ppad::imaging::BinaryMask;
use ppad::synth::{distance_transform, gamma_field};

fn main() -> ppad::Result<()> {
    // an L-shaped blob touching the top border
    let mask = BinaryMask::from_fn(12, 8, |x, y| (x < 9 && y < 5) || (2..5).contains(&x));
    let d = distance_transform(&mask)?;
    println!("distance to the complement (max {:.3}):", d.max());
    for y in 0..8 {
        let row: Vec<String> = (0..12).map(|x| format!("{:4.2}", d.get(x, y))).collect();
        println!("  {}", row.join(" "));
    }
    let g = gamma_field(&mask, 3.0)?;
    println!("gamma field for w = 3:");
    for y in 0..8 {
        let row: Vec<String> = (0..12).map(|x| format!("{:4.2}", g.get(x, y))).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
