//! Verifies the hand-written backward pass against central finite differences
//! for every parameter group of a chosen variant, and prints the per-group
//! worst relative error. Run with `cargo run --example gradient_check`,
//! optionally passing a variant label (default "A-R,M-R").

use relward::model::{ModelConfig, Variant};
use relward::train::grad_check;
use relward::Result;

fn main() -> Result<()> {
    let label = std::env::args().nth(1).unwrap_or_else(|| "A-R,M-R".to_string());
    let variant: Variant = label.parse()?;
    let config = ModelConfig::tiny().with_variant(variant);
    println!("checking analytic gradients for variant {variant} on a small geometry\n");

    let report = grad_check(config, 42, 1e-4)?;
    for line in report.lines() {
        println!("{line}");
    }
    println!();
    if report.passed() {
        println!("all {} parameter groups agree with finite differences", report.groups.len());
    } else {
        println!("DISAGREEMENT: the backward pass does not match finite differences");
        std::process::exit(2);
    }
    Ok(())
}
