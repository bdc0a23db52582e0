use ssan::gradcheck::GradcheckSuite;
use ssan_tensor::OpKind;

use crate::Failure;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Run only this check; repeatable.
    #[arg(long = "op")]
    ops: Vec<String>,
    /// Print the check names and exit.
    #[arg(long)]
    list: bool,
    /// Flip the sign of this operation's backward rule.
    #[arg(long, hide = true, value_parser = parse_op)]
    inject_fault: Option<OpKind>,
}

fn parse_op(name: &str) -> Result<OpKind, String> {
    OpKind::from_name(name).ok_or_else(|| format!("unknown operation {:?}", name))
}

pub fn run(a: Args) -> Result<(), Failure> {
    let suite = GradcheckSuite::default();
    if a.list {
        for name in suite.names() {
            println!("{}", name);
        }
        return Ok(());
    }
    println!("check\ttolerance\tmax_rel_error\tchecked\tskipped\tstatus");
    let results = suite.run(&a.ops, a.inject_fault, |r| {
        println!(
            "{}\t{:e}\t{:.3e}\t{}\t{}\t{}",
            r.name,
            r.tolerance,
            r.report.max_rel_error,
            r.report.checked,
            r.report.skipped,
            if r.passed() { "pass" } else { "FAIL" }
        );
    })?;
    let failed: Vec<String> = results.iter().filter(|r| !r.passed()).map(|r| r.name.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Checks(failed))
    }
}
