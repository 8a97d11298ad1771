//! Timing probe for the synthesis pipeline (not part of the test suite).

use std::time::Instant;

use sentinel_core::model::benchmark_plant;
use sentinel_core::sdp::SdpOptions;
use sentinel_core::synthesis::{design_at, synthesize, SynthesisOptions};

fn main() {
    let model = benchmark_plant(0.1, 1.0);
    println!("threads: {}", rayon::current_num_threads());

    for c3 in [0.15, 0.5, 0.9, 0.95] {
        let t = Instant::now();
        let d = design_at(&model, &[1, 2, 3, 4], c3, &SdpOptions::default()).unwrap();
        match d {
            Some(d) => println!(
                "c3={c3:.2}  gamma={:.6}  mu={:.6} mu1={:.6}  {:?}",
                d.certificate.gamma,
                d.mu,
                d.mu1,
                t.elapsed()
            ),
            None => println!("c3={c3:.2}  infeasible  {:?}", t.elapsed()),
        }
    }

    let t = Instant::now();
    let d = design_at(&model, &[1], 0.5, &SdpOptions::default()).unwrap();
    println!("card-1 at 0.5: {:?} in {:?}", d.map(|x| x.certificate.gamma), t.elapsed());

    let t = Instant::now();
    let design = synthesize(&model, &[1, 2, 3, 4], &SynthesisOptions::default()).unwrap();
    println!(
        "full synthesis: c3={} gamma={:.6} in {:?}",
        design.c3,
        design.certificate.gamma,
        t.elapsed()
    );
}
