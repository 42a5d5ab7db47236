//! Solves two small second-order cone feasibility problems directly.
//!
//! cargo run --example cone_feasibility

use cellfree::cone::{min_max_violation, ConeProblem, SocConstraint, SolverOptions, SparseRow, SparseVec};

/// `‖(x0, x1) - center‖ ≤ radius`.
fn disc(center: [f64; 2], radius: f64) -> SocConstraint {
    SocConstraint {
        rows: (0..2).map(|j| SparseRow { coef: SparseVec::new([(j, 1.0)]), b: -center[j] }).collect(),
        c: SparseVec::new([]),
        d: radius,
    }
}

fn main() {
    let opts = SolverOptions::default();
    for (name, constraints) in [
        ("overlapping discs", vec![disc([1.0, 1.0], 1.0), disc([2.0, 1.5], 1.0)]),
        ("separated discs", vec![disc([1.0, 1.0], 0.5), disc([3.0, 3.0], 0.5)]),
    ] {
        let mut problem = ConeProblem::new(2, constraints);
        problem.upper_bound = 4.0;
        let report = min_max_violation(&problem, &[0.5, 0.5], &opts);
        println!(
            "{name}: {:?} after {} iterations, witness ({:.3}, {:.3}), max violation {:.2e}, lower bound {:.3e}",
            report.status, report.iterations, report.witness[0], report.witness[1], report.max_violation, report.lower_bound
        );
    }
}
