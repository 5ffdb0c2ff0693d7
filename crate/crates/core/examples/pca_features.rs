//! Reduce 512-dim frame features to a handful of principal components.
//!
//!     cargo run --example pca_features

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use robosumm::numerics::{pca_fit, pca_project};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.05)?;
    let latent = Normal::new(0.0, 1.0)?;
    // 300 samples on a 3-dimensional subspace of R^512, plus noise.
    let basis: Vec<Vec<f64>> = (0..3).map(|_| (0..512).map(|_| latent.sample(&mut rng) / 22.6).collect()).collect();
    let x: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            let z: Vec<f64> = (0..3).map(|k| latent.sample(&mut rng) * (3 - k) as f64).collect();
            (0..512).map(|j| (0..3).map(|k| z[k] * basis[k][j]).sum::<f64>() + noise.sample(&mut rng)).collect()
        })
        .collect();
    let model = pca_fit(&x, 6)?;
    let total: f64 = model.explained_variance.iter().sum();
    for (i, v) in model.explained_variance.iter().enumerate() {
        println!("component {i}: variance {v:.4} ({:.1}% of the top 6)", 100.0 * v / total);
    }
    let y = pca_project(&model, &x)?;
    println!("projected {} rows to {} dims; first row {:?}", y.len(), y[0].len(), &y[0][..3]);
    Ok(())
}
