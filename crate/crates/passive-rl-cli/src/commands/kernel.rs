//! `validate-kernel`: check a named kernel's constants and report its error
//! bounds.
//!
//! `[kernel]` declares `name` (one of the stock kernels), `dim`, and
//! optionally `bandwidth`, `holder_const`, `n`, `delta`, `state_measure`,
//! `action_measure`. The bias bound needs bandwidth and smoothness; the L1
//! bound additionally needs `n` and `delta`. Unset bounds are left empty in
//! the report rather than guessed.
//!
//! Artifacts: `kernel_report.csv` (single row), `run_meta.csv`.

use passive_rl::density::{kde_bias_bound, kde_l1_bound, kernels};
use passive_rl::{Error, Result};

use crate::commands::master_seed;
use crate::config::Config;
use crate::outio::OutDir;

pub fn run(config: &Config, out: &OutDir, seed_flag: Option<u64>) -> Result<()> {
    let seed = master_seed(config, seed_flag)?;
    let sec = config.section("kernel")?;
    let name = sec.require_str("name")?.to_string();
    let dim = sec.usize_or("dim", 1)?;
    let mut kernel = kernels::by_name(&name, dim)
        .ok_or_else(|| Error::invalid(format!("unknown kernel `{name}` (stock kernels: epanechnikov, box, quartic, triangle)")))?;

    let bandwidth = sec.opt_f64("bandwidth")?;
    let holder = sec.opt_f64("holder_const")?;
    if let Some(b) = bandwidth {
        kernel = kernel.with_bandwidth(b)?;
    }
    if let Some(l) = holder {
        kernel = kernel.with_holder_const(l)?;
    }

    let bias = if bandwidth.is_some() && holder.is_some() {
        Some(kde_bias_bound(&kernel)?)
    } else {
        None
    };
    let l1 = match (bias, sec.opt_usize("n")?, sec.opt_f64("delta")?) {
        (Some(_), Some(n), Some(delta)) => {
            let state_measure = sec.f64_or("state_measure", 1.0)?;
            let action_measure = sec.f64_or("action_measure", 1.0)?;
            Some(kde_l1_bound(&kernel, state_measure, action_measure, n, delta)?)
        }
        _ => None,
    };

    config.reject_unconsumed()?;
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let report = format!(
        "name,dim,beta,c_k,bandwidth,bias_bound,l1_bound\n{name},{dim},{},{},{},{},{}\n",
        kernel.beta(),
        kernel.c_k(),
        fmt_opt(bandwidth),
        fmt_opt(bias),
        fmt_opt(l1),
    );
    out.write("kernel_report.csv", &report)?;
    out.write_run_meta("validate-kernel", seed, &config.echo(), &[])?;
    Ok(())
}
