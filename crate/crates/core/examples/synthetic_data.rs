//! Generate a synthetic music-rating dataset and write it to disk.
//!
//! `cargo run --example synthetic_data -- /tmp/music`

use multicf::synth::{generate_synthetic, SynthConfig};

fn main() -> multicf::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "out/synthetic".into());
    let config = SynthConfig {
        users: 2000,
        artists: 80,
        seed: 42,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&config)?;
    println!(
        "{} items ({} artists), {} train / {} validation / {} test ratings",
        config.num_items(),
        data.taxonomy.artists().len(),
        data.train.len(),
        data.validation.len(),
        data.test.len()
    );
    println!("mean training score {:.2}", data.train.mean_score().unwrap_or(0.0));
    data.write_to(&dir, &config)?;
    println!("written to {dir}");
    Ok(())
}
