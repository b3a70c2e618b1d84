//! Runs the level sweep on the two-mode planar example and prints one line
//! per level and objective.
//!
//! ```text
//! cargo run --release -p metalyap --example sweep [c_max]
//! ```

use metalyap::{certify, CertifyOptions, Objective, Outcome, SwitchedSystem};

fn main() {
    let c_max: usize = std::env::args().nth(1).map(|s| s.parse().expect("c_max")).unwrap_or(13);
    let sys = SwitchedSystem::two_mode_example();
    let opts = CertifyOptions::default();
    println!("{:>3} {:>5} {:>5} {:>16} {:>6} {:>9} {:>11} {:>12}", "c", "order", "obj", "status", "iters", "time_s", "max_margin", "P11");
    for c in 1..=c_max {
        for obj in Objective::ALL {
            let out = certify(&sys, c, obj, &opts).expect("certify");
            let (iters, time, margin, p11) = match &out {
                Outcome::Certified(cert) => (cert.solver.iterations, cert.solver.runtime_secs, cert.solver.max_margin, cert.p[(0, 0)]),
                Outcome::Rejected(r) => (r.iterations, r.runtime_secs, r.max_margin, f64::NAN),
            };
            println!("{c:>3} {:>5} {obj:>5} {:>16} {iters:>6} {time:>9.4} {margin:>11.3e} {p11:>12.6}", 2 * c, out.status().to_string());
        }
    }
}
