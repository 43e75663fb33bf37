//! Check the analytic gradient of the full joint loss against central
//! finite differences on a four-sample micro network, in both
//! normalization modes.

use remarnet::gradcheck::{GradCheckOptions, MicroInstance};
use remarnet::model::Mode;

fn main() -> remarnet::Result<()> {
    for mode in [Mode::Train, Mode::Eval] {
        let report = MicroInstance::new(1, 4, mode)?.check(&GradCheckOptions::default())?;
        println!("{mode:?} normalization: {} coordinates checked", report.checked);
        for (group, err) in &report.per_group {
            println!("  {group:<9} max relative error {err:.2e}");
        }
        println!("  {}", if report.passed() { "passed" } else { "FAILED" });
    }
    Ok(())
}
