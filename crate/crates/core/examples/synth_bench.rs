//! Dev scratch: timing and robustness of recovery synthesis across d and k.

use qsp_recovery::rng::SplitMix64;
use qsp_recovery::su2::PhaseSequence;
use qsp_recovery::synth::{composite_xy_defects, higher_order_recovery, SynthConfig};
use qsp_recovery::verify::{fit_order, log_spaced, residual_curve};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let d: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let k: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let grover = args.get(4).map(|s| s == "grover").unwrap_or(false);

    let seq = if grover {
        PhaseSequence::new(vec![std::f64::consts::PI / 3.0; 4]).unwrap()
    } else {
        let mut rng = SplitMix64::new(seed);
        PhaseSequence::random_uniform(d, &mut rng)
    };
    let cfg = SynthConfig::with_seed(seed);

    let t0 = Instant::now();
    match higher_order_recovery(&seq, k, &cfg) {
        Ok(plan) => {
            let t_synth = t0.elapsed();
            println!(
                "d={} k={} len={} atoms={} synth={:.2?}",
                seq.d(),
                k,
                plan.w_len(),
                plan.atoms.len(),
                t_synth
            );
            let flat = plan.flatten();
            let t1 = Instant::now();
            let defects: Vec<String> = composite_xy_defects(&seq, &flat, k)
                .iter()
                .map(|d| format!("{d:.3e}"))
                .collect();
            println!("defects={defects:?} check={:.2?}", t1.elapsed());
            let eps = log_spaced(1e-4, 1e-2, 13);
            let t2 = Instant::now();
            let curve = residual_curve(&seq, Some(&flat), 512, &eps);
            let slope = fit_order(&curve);
            println!(
                "slope={slope:?} max_res={:.3e} curve={:.2?}",
                curve.residuals.iter().copied().fold(0.0, f64::max),
                t2.elapsed()
            );
        }
        Err(e) => println!("FAILED after {:.2?}: {e}", t0.elapsed()),
    }
}
