//! Finite-difference check of the full render-and-loss gradient of a
//! multi-space model, plus the same check with a deliberately broken
//! backward pass.

use mirrorfield::autodiff::GradFault;
use mirrorfield::gradcheck::{gradcheck, GradcheckConfig};

fn main() -> anyhow::Result<()> {
    let good = gradcheck(&GradcheckConfig::default())?;
    println!("correct backward: {} probes, max rel err {:.2e}, pass = {}", good.probes.len(), good.max_rel_err, good.passed);
    let bad = gradcheck(&GradcheckConfig {
        fault: Some(GradFault::SigmoidScale(0.9)),
        ..GradcheckConfig::default()
    })?;
    println!("broken backward:  max rel err {:.2e}, pass = {}", bad.max_rel_err, bad.passed);
    Ok(())
}
