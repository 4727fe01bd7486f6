//! Generates irregular masks inside each of the five view regions and prints
//! every pipeline stage's size.
//!
//! ```bash
//! cargo run --example mask_generation -- [seed]
//! ```

use ppad::imaging::BinaryMask;
use ppad::maskgen::{generate_mask_traced, signed_area, MaskSpec};
use ppad::prompts::ViewKind;

fn main() -> ppad::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let n = 96;
    for kind in ViewKind::ALL {
        let region = BinaryMask::from_fn(n, n, |x, y| kind.contains(x, y, n, n));
        let t = generate_mask_traced(&MaskSpec::new(region.clone(), seed))?;
        println!(
            "{kind:<11} attempt {:>2}  points {:>2}  hull {:>2} (area {:>7.1})  curve {:>4}  mask {:>5} px = {:.3} of region",
            t.attempts,
            t.points.len(),
            t.hull.len(),
            signed_area(&t.hull),
            t.curve.len(),
            t.mask.count(),
            t.mask.count() as f64 / region.count() as f64,
        );
    }

    // coarse ASCII view of one mask
    let t = generate_mask_traced(&MaskSpec::new(BinaryMask::full(48, 24), seed))?;
    for y in 0..24 {
        let row: String = (0..48).map(|x| if t.mask.get(x, y) { '#' } else { '.' }).collect();
        println!("{row}");
    }
    Ok(())
}
