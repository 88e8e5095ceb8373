//! One PASS/FAIL line per acceptance criterion; exits nonzero on failure.

use cablekit::validation::{criteria, evaluate};

fn main() {
    let mut failed = 0;
    for c in criteria() {
        let outcome = evaluate(&c, 0);
        println!("{}", outcome.line());
        failed += !outcome.passed as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
