//! Compares analyzer verdicts with synthetic ground truth over many seeds.

use ctg_core::analysis::{analyze, AnalysisConfig};
use ctg_core::classify::Feature;
use ctg_core::synth::{generate, random_scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map_or(Ok(200), |s| s.parse())?;
    let noise: f64 = args.next().map_or(Ok(0.0), |s| s.parse())?;
    let cfg = AnalysisConfig::default();
    let start = std::time::Instant::now();
    let mut agree = 0;
    for seed in 0..n {
        let s = random_scenario(seed, noise);
        let (rec, gt) = generate(&s)?;
        let a = analyze(&rec, &cfg)?;
        let o = a.overall(&cfg.classify)?;
        let mut bad = Vec::new();
        for f in Feature::ALL {
            let got = o.features[f.index()].class;
            if got != gt.class_of(f) {
                bad.push(format!("{f}: got {got} want {}", gt.class_of(f)));
            }
        }
        if bad.is_empty() && o.class == gt.overall {
            agree += 1;
        } else {
            println!("seed {seed}: {}", bad.join("; "));
        }
    }
    println!("{agree}/{n} in {:.1?}", start.elapsed());
    Ok(())
}
