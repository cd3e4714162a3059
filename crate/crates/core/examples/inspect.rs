//! Prints scenario, ground truth and analysis for one seed.

use ctg_core::analysis::{analyze, AnalysisConfig};
use ctg_core::synth::{generate, random_scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let noise: f64 = args.next().map_or(Ok(0.0), |s| s.parse())?;
    let s = random_scenario(seed, noise);
    let (rec, gt) = generate(&s)?;
    let a = analyze(&rec, &AnalysisConfig::default())?;
    println!("{s:#?}\n{gt:#?}");
    println!("baseline {:?}", a.baseline);
    println!(
        "variability {:?}",
        a.variability
            .minutes
            .iter()
            .map(|m| (
                m.minute,
                (m.amplitude_bpm * 10.0).round() / 10.0,
                m.oscillations_per_min,
                m.assessable
            ))
            .collect::<Vec<_>>()
    );
    println!("accels {:#?}", a.accelerations);
    println!("decels {:#?}", a.decelerations);
    println!("contractions {:#?}", a.contractions);
    println!("sinusoidal {:#?}", a.sinusoidal);
    Ok(())
}
