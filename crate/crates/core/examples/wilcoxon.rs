//! Paired signed-rank test on per-round accuracies of two methods.

use remarnet::eval::wilcoxon_signed_rank;

fn main() -> remarnet::Result<()> {
    let joint = [0.985, 0.99, 0.97, 0.995, 0.985, 0.98, 0.99, 0.975];
    let single = [0.965, 0.99, 0.955, 0.98, 0.97, 0.985, 0.975, 0.96];
    // Eight pairs, one of them tied: seven nonzero differences, small enough
    // for exact enumeration.
    println!("{}", wilcoxon_signed_rank(&joint, &single, 12)?);
    // Forcing the normal approximation on the same data.
    println!("{}", wilcoxon_signed_rank(&joint, &single, 0)?);
    Ok(())
}
