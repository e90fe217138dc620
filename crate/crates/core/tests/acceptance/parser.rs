use std::panic;
use std::process::Command;

use emdirac::model::{parse_model, Bindings, Program};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{fuzz_input, random_expr, reference_eval};
use crate::{Outcome, Verdict};

const MODEL: &str = "\
[grid]
dims = 9
spacing = 0.25

[particle]
charge = 1
mass = 1
position = 0.25, 0, 0
momentum = 0, 0.1, 0

[potential]
V = 0.5 * r^2

[integrator]
dt = 2.5e-4
steps = 200
scheme = leapfrog

[fields]
preset = random
seed = 3
";

fn fuzz(count: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let crashes = (0..count)
        .filter(|_| {
            let bytes = fuzz_input(&mut rng);
            panic::catch_unwind(|| {
                let _ = parse_model(&String::from_utf8_lossy(&bytes));
            })
            .is_err()
        })
        .count();
    panic::set_hook(hook);
    crashes
}

fn dual_evaluation(trees: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd0a1);
    let mut mismatches = 0;
    let mut errors = 0;
    for _ in 0..trees {
        let e = random_expr(&mut rng, 6);
        let prog = Program::compile(&e);
        for _ in 0..8 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let b = Bindings::at(x);
            let same = match (prog.eval(&b), reference_eval(&e, &b)) {
                (Ok(a), Ok(w)) => a.to_bits() == w.to_bits(),
                (Err(a), Err(w)) => {
                    errors += 1;
                    a == w
                }
                _ => false,
            };
            if !same {
                mismatches += 1;
            }
        }
    }
    (mismatches, errors)
}

fn reports_match() -> Result<(bool, usize), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let model = dir.path().join("model.txt");
    std::fs::write(&model, MODEL)?;
    let mut outputs = Vec::new();
    for (run, format) in [(0, "json"), (1, "json"), (2, "csv"), (3, "csv")] {
        let report = dir.path().join(format!("report{run}.{format}"));
        let status = Command::new(env!("CARGO_BIN_EXE_emdirac"))
            .args(["verify", "--seed", "7", "--format", format, "--model"])
            .arg(&model)
            .arg("--report")
            .arg(&report)
            .output()?
            .status;
        if status.code().is_none_or(|c| c > 1) {
            return Err(format!("verify exited with {status}").into());
        }
        outputs.push(std::fs::read(&report)?);
    }
    Ok((outputs[0] == outputs[1] && outputs[2] == outputs[3], outputs[0].len()))
}

pub fn robustness() -> Outcome {
    let crashes = fuzz(100_000);
    let (mismatches, errors) = dual_evaluation(1000);
    let (identical, size) = reports_match()?;
    Ok(Verdict::new(
        crashes == 0 && mismatches == 0 && identical,
        format!(
            "{crashes} crashes in 100000 fuzz inputs; {mismatches} evaluator mismatches over 1000 trees x 8 points ({errors} agreeing errors); reruns byte-identical: {identical} ({size} byte JSON)"
        ),
    ))
}
