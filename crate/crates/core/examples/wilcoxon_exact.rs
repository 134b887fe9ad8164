//! Exact signed-rank p-values versus literal enumeration of all sign
//! patterns, plus the normal approximation for a larger sample.
//!
//! Run: cargo run --example wilcoxon_exact

use causalts::granger::{wilcoxon_signed_rank, Alternative};
use causalts::rng::Xoshiro256;
use causalts::synth::{brute_wilcoxon, Tail};

fn main() -> causalts::Result<()> {
    let mut rng = Xoshiro256::for_stage(7, "example-wilcoxon");

    println!("small samples (exact branch):");
    for trial in 0..5 {
        let n = 6 + trial;
        let a: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.normal() + 0.8).collect();
        let exact = wilcoxon_signed_rank(&a, &b, Alternative::Less)?;
        let brute = brute_wilcoxon(&a, &b, Tail::Less)?;
        println!(
            "  n={n}: W={:.1} p={:.6} brute={:.6} equal={}",
            exact.w,
            exact.p,
            brute,
            exact.p == brute
        );
    }

    let n = 200;
    let a: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.normal() + 0.2).collect();
    let approx = wilcoxon_signed_rank(&a, &b, Alternative::Less)?;
    println!(
        "large sample (normal branch): n={n} W={:.1} p={:.3e} exact_branch={}",
        approx.w, approx.p, approx.exact
    );
    Ok(())
}
