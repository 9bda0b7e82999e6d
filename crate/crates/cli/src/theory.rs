use std::io::Write;

use utep_core::theorylab::{verify_all, TheoryConfig};

use crate::args::TheoryArgs;
use crate::CliError;

/// Prints one JSON report per check, one per line. Fails when any check
/// records a violation; the report then carries the first violating
/// instance.
pub fn cmd_verify_theory(args: &TheoryArgs, out: &mut impl Write) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let cfg = TheoryConfig {
        trials: args.trials,
        seed: args.seed,
        corrupt: args.corrupt,
    };
    let reports = verify_all(&cfg);
    for r in &reports {
        let line = serde_json::to_string(r).expect("report serializes");
        writeln!(out, "{line}").map_err(|e| CliError::Io {
            path: "stdout".into(),
            msg: e.to_string(),
        })?;
    }
    let failing: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} ({} failures)", r.name, r.failures))
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("theory checks failed: {}", failing.join(", "))))
    }
}
