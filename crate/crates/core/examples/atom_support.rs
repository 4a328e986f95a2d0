//! Dev scratch: print the order-j X/Y coefficient support of the stage-atom
//! families.

use qsp_recovery::rng::SplitMix64;
use qsp_recovery::series::{expand, extract_error_polys};
use qsp_recovery::su2::PhaseSequence;
use qsp_recovery::synth::{atom_phases, AtomKind, Gadget};
use std::f64::consts::PI;

fn report(label: &str, phases: Vec<f64>, order: usize) {
    let seq = PhaseSequence::new(phases).unwrap();
    let exp = expand(&seq, order);
    let lower: f64 = exp.layers[..order - 1]
        .iter()
        .map(|l| l.xy_max())
        .fold(0.0, f64::max);
    let (dx, dy) = extract_error_polys(&exp.layers[order - 1]).unwrap();
    let fmt = |p: &qsp_recovery::series::ErrorPoly| -> String {
        (0..=p.degree(1e-12).unwrap_or(0))
            .map(|i| format!("{:+.3e}", p.coeff(i).re))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("{label}: lower_leak={lower:.1e}");
    println!("  x: {}", fmt(&dx));
    println!("  y: {}", fmt(&dy));
}

fn main() {
    let mut rng = SplitMix64::new(0xfeed);
    for order in 2..=3usize {
        println!("== order {order} ==");
        for s in 1..=3usize {
            let alphas: Vec<f64> = (0..s).map(|_| rng.uniform(-PI, PI)).collect();
            let delta = rng.uniform(-PI, PI);
            let g = Gadget {
                s,
                alphas,
                beta: 2.0 * (2.0 * delta).sin(),
                delta,
            };
            for kind in [AtomKind::Doubled, AtomKind::FlipPair] {
                report(
                    &format!("{kind:?} s={s}"),
                    atom_phases(kind, &g, order, 0.0),
                    order,
                );
            }
        }
    }
}
