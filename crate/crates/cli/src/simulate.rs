use std::path::Path;

use muit_core::sim::{sweep, to_csv, SweepSpec};

use crate::Failure;

pub fn run(spec: Option<&Path>, out: Option<&Path>, n: Option<Vec<usize>>, passivation: Option<bool>, seed: Option<u64>) -> Result<(), Failure> {
    let mut s = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Env(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<SweepSpec>(&text).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?
        }
        None => SweepSpec::default(),
    };
    if let Some(n) = n {
        s.n = n;
    }
    if let Some(p) = passivation {
        s.workload.passivation = p;
    }
    if let Some(seed) = seed {
        s.workload.seed = seed;
    }
    if s.n.is_empty() {
        return Err(Failure::Domain("no concurrency levels given".into()));
    }
    let reports = sweep(&s).map_err(|e| Failure::Domain(e.to_string()))?;
    let csv = to_csv(&reports);
    match out {
        Some(path) => std::fs::write(path, csv).map_err(|e| Failure::Env(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    Ok(())
}
