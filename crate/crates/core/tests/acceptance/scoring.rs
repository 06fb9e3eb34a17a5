use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use skintone_core::classifiers::loss::{loss, ordinal_multiplier};
use skintone_core::classifiers::{LossConfig, LossKind};
use skintone_core::metrics::evaluate;
use skintone_core::{MstLabel, NUM_CLASSES};

use crate::{ensure, Outcome};

fn label(v: i64) -> MstLabel {
    MstLabel::new(v).unwrap()
}

/// Top-two logit gap; the multiplier's argmax must stay fixed under the FD perturbation.
fn top_gap(z: &[f64; NUM_CLASSES]) -> f64 {
    let mut s = *z;
    s.sort_by(|a, b| b.total_cmp(a));
    s[0] - s[1]
}

pub fn ordinal_loss() -> Outcome {
    ensure!(ordinal_multiplier(label(6), label(6)) == 1.0, "multiplier at zero distance");
    let m3 = ordinal_multiplier(label(2), label(5));
    ensure!((m3 - 1.9).abs() < 1e-12, "multiplier at distance 3 is {m3}");
    ensure!((ordinal_multiplier(label(8), label(5)) - 1.9).abs() < 1e-12, "multiplier is not symmetric");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 2.0).unwrap();
    let h = 1e-6;
    let kinds = [LossKind::Ce, LossKind::WeightedCe, LossKind::OrdinalCe, LossKind::WeightedOrdinalCe];
    let (mut draws, mut worst) = (0, 0.0f64);
    while draws < 100 {
        let z: [f64; NUM_CLASSES] = std::array::from_fn(|_| normal.sample(&mut rng));
        if top_gap(&z) < 1e-3 {
            continue;
        }
        let target = MstLabel::from_index(rng.random_range(0..NUM_CLASSES));
        let kind = kinds[draws % kinds.len()];
        let cfg = LossConfig {
            kind,
            class_weights: kind.is_weighted().then(|| std::array::from_fn(|_| rng.random_range(0.2..3.0))),
        };
        let (_, grad) = loss(&z, target, &cfg).map_err(|e| e.to_string())?;
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for k in 0..NUM_CLASSES {
            let (mut up, mut down) = (z, z);
            up[k] += h;
            down[k] -= h;
            let fd = (loss(&up, target, &cfg).unwrap().0 - loss(&down, target, &cfg).unwrap().0) / (2.0 * h);
            diff2 += (grad[k] - fd).powi(2);
            norm2 += fd * fd;
        }
        let rel = diff2.sqrt() / norm2.sqrt().max(1e-12);
        worst = worst.max(rel);
        ensure!(rel <= 1e-5, "draw {draws} ({kind:?}): relative gradient error {rel:.2e}");
        draws += 1;
    }
    Ok(format!("multipliers 1 and 1.9; 100 FD draws, worst relative error {worst:.1e}"))
}

pub fn random_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let truth: Vec<MstLabel> = (0..n).map(|i| MstLabel::from_index(i % NUM_CLASSES)).collect();
    let predicted: Vec<MstLabel> = (0..n).map(|_| MstLabel::from_index(rng.random_range(0..NUM_CLASSES))).collect();
    let r = evaluate(&truth, &predicted).map_err(|e| e.to_string())?;
    ensure!((r.acc - 0.10).abs() <= 0.01, "random acc {}", r.acc);
    // Within one tone: 3 of 10 predictions for eight interior classes, 2 of 10 at the ends.
    let analytic = (8.0 * 0.3 + 2.0 * 0.2) / 10.0;
    ensure!((r.ooacc - analytic).abs() <= 0.01, "random ooacc {} vs {analytic}", r.ooacc);

    for set in 0..1000 {
        let len = rng.random_range(1..200);
        let t: Vec<MstLabel> = (0..len).map(|_| MstLabel::from_index(rng.random_range(0..NUM_CLASSES))).collect();
        let p: Vec<MstLabel> = t
            .iter()
            .map(|l| {
                if rng.random_bool(0.3) {
                    *l
                } else {
                    MstLabel::from_index(rng.random_range(0..NUM_CLASSES))
                }
            })
            .collect();
        let r = evaluate(&t, &p).map_err(|e| e.to_string())?;
        ensure!(r.acc <= r.ooacc, "set {set}: acc {} > ooacc {}", r.acc, r.ooacc);
    }
    Ok(format!("acc {:.4}, ooacc {:.4} (analytic {analytic:.2}); acc <= ooacc on 1000 sets", r.acc, r.ooacc))
}
