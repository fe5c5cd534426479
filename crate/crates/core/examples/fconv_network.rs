//! The two network architectures: layer stacks, parameter counts, the exact
//! symmetry of the convolutional output and a gradient check.
//!
//! cargo run --release --example fconv_network

use edm_pose::nn::gradcheck::{gradient_check, GradCheckOptions};
use edm_pose::nn::{count_params, Model, ModelConfig};
use edm_pose::{build_edm, Result, Units};

fn main() -> Result<()> {
    for cfg in [ModelConfig::fconn(), ModelConfig::fconv()] {
        println!("{}: {} parameters", cfg.arch, count_params(&cfg));
        for (name, layer) in cfg.layers() {
            println!("  {name:<9} {}", layer.kind());
        }
    }

    let cfg = ModelConfig::fconv();
    let model = Model::<f32>::init(cfg, 3)?;
    let pts: Vec<[f64; 2]> = (0..14).map(|i| [(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()]).collect();
    let input = build_edm(&pts, Units::Dimensionless)?;
    let y = model.infer(&model.batch_input(&[&input])?)?;
    let z = y.data();
    let asym = (0..14)
        .flat_map(|i| (0..14).map(move |j| (i, j)))
        .map(|(i, j)| (z[i * 14 + j] - z[j * 14 + i]).abs())
        .fold(0.0f32, f32::max);
    let min = z.iter().cloned().fold(f32::INFINITY, f32::min);
    println!("untrained fconv output: max asymmetry {asym}, min entry {min}");

    let opts = GradCheckOptions { coords_per_kind: 40, ..Default::default() };
    let report = gradient_check(ModelConfig::fconv(), &opts)?;
    for (kind, r) in &report.kinds {
        println!("  {kind:<10} {} coordinates, max relative error {:.2e}", r.checked, r.max_rel_error);
    }
    Ok(())
}
