// calibration: epoch timing + UEP behavior for the K=7, L=2, n=24 config
use std::time::Instant;
use uepae::codec::*;
use uepae::eval::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lambda: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let samples: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200_000);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(15);
    let cfg = CodecConfig {
        k1: 7,
        k2: 7,
        subblock_bits: 7,
        n: 24,
        lambda,
        snr_train_db: 0.0,
        learning_rate: 0.0006,
        batch_size: 500,
        epochs,
        train_samples: samples,
        val_samples: 20_000,
        patience: 10,
        seed: 11,
        ..CodecConfig::default()
    };
    let t0 = Instant::now();
    let mut last = Instant::now();
    let trained = train_model_with::<f32>(&cfg, |r| {
        println!(
            "epoch {:3}  train {:.5}  val {:.5}  ({:.1}s)",
            r.epoch,
            r.train_loss,
            r.val_loss,
            last.elapsed().as_secs_f64()
        );
        last = Instant::now();
    })
    .unwrap();
    println!("total train: {:.1}s over {} epochs", t0.elapsed().as_secs_f64(), trained.history.len());

    let t1 = Instant::now();
    let opts = EvalOptions::new(5.0, 1_000_000, 0, 99);
    let point = estimate_error_probs(&trained.model, &opts).unwrap();
    println!(
        "eval 1e6 trials in {:.1}s: P1 = {:.4e} [{:.3e},{:.3e}]  P2 = {:.4e} [{:.3e},{:.3e}]",
        t1.elapsed().as_secs_f64(),
        point.p1_hat, point.ci1.0, point.ci1.1,
        point.p2_hat, point.ci2.0, point.ci2.1
    );
    let consistent = point.converse_consistent(trained.model.config());
    println!("converse consistent: {consistent}");
}
