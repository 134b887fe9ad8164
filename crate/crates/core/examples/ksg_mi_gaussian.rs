//! Estimate mutual information of correlated Gaussian pairs and compare to
//! the closed form -0.5 ln(1 - rho^2).
//!
//! Run: cargo run --example ksg_mi_gaussian

use causalts::mutual_info::ksg_mi;
use causalts::rng::Xoshiro256;
use causalts::synth::analytic_mi_gaussian;

fn main() -> causalts::Result<()> {
    let n = 4000;
    let k = 4;
    println!("{:>6} {:>12} {:>12} {:>10}", "rho", "estimate", "analytic", "error");
    for rho in [0.0, 0.3, 0.5, 0.7, 0.9] {
        let mut rng = Xoshiro256::for_stage(2024, "example-gaussian");
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let a = rng.normal();
                let b = rng.normal();
                (a, rho * a + (1.0 - rho * rho).sqrt() * b)
            })
            .collect();
        let est = ksg_mi(&pairs, k, 2024)?;
        let truth = analytic_mi_gaussian(rho)?;
        println!("{rho:>6.2} {est:>12.4} {truth:>12.4} {:>10.4}", est - truth);
    }
    Ok(())
}
