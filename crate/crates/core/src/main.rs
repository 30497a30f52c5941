use std::fs;
use std::process::ExitCode;

use clip21::data::{serialize_libsvm, synthetic_classification};
use clip21::harness::config::SynthArgs;
use clip21::harness::{parse_invocation, run_experiment, Invocation};
use clip21::Error;

fn synth(args: &SynthArgs) -> Result<(), Error> {
    let ds = synthetic_classification(args.samples, args.dim, args.positive_frac, args.separation, args.seed)?;
    fs::write(&args.out, serialize_libsvm(&ds))?;
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let inv = match parse_invocation(&argv) {
        Ok(inv) => inv,
        Err(e) => {
            // clap prints help/version to stdout and errors to stderr
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = inv.and_then(|inv| match inv {
        Invocation::Synth(s) => synth(&s),
        Invocation::Run(cfg) => {
            let outcome = run_experiment(&cfg)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for c in &outcome.grid {
                match c.outcome {
                    Ok(g) => eprintln!("grid gamma={:.6e} final_grad_norm_sq={:.6e}", c.gamma, g),
                    Err(k) => eprintln!("grid gamma={:.6e} diverged at iteration {k}", c.gamma),
                }
            }
            println!("{}", outcome.summary);
            Ok(())
        }
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
