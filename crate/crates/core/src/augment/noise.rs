use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::sim::{ColumnMeta, SensorKind, SensorTable};

/// Adds i.i.d. `N(0, sigma²)` noise (kg/s) to every mass-flow column.
///
/// Columns are perturbed in table order from a single seeded stream; every
/// other column is copied bit for bit.
pub fn inject_noise(table: &SensorTable, sigma: f64, seed: u64) -> SensorTable {
    assert!(sigma >= 0.0 && sigma.is_finite(), "noise std must be finite and non-negative");
    let mut out = SensorTable::new(table.time.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid std"));
    for (i, meta) in table.columns().iter().enumerate() {
        let mut values = table.column_at(i).to_vec();
        if let (SensorKind::MassFlow, Some(n)) = (meta.kind, normal.as_ref()) {
            for v in &mut values {
                *v += n.sample(&mut rng);
            }
        }
        out.push_column(ColumnMeta::clone(meta), values)
            .expect("same layout as the input table");
    }
    out
}
