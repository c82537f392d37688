use eam_core::dynamics::*;
use eam_core::sequence::SequenceKind;

fn main() {
    let grid: Vec<f64> = (0..28).map(|i| i as f64 * 0.25).collect();
    for spins in [25usize, 50] {
        for kind in [SequenceKind::Echo, SequenceKind::Eam] {
            let spec = DecaySpec {
                trials: 24,
                seed: 1,
                tau_grid: grid.clone(),
                ..DecaySpec::new(Placement::Cube { spins }, kind, grid.clone())
            };
            let t0 = std::time::Instant::now();
            let c = decay_curve(&spec).unwrap();
            println!(
                "spins={spins} {kind:?}: T2={:.3} censored={} dt={:.1}s env=[{}]",
                c.t2.value,
                c.t2.censored,
                t0.elapsed().as_secs_f64(),
                c.envelope.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
            );
        }
    }
}
