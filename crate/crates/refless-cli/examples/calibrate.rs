//! Scratch harness: run the synthetic end-to-end protocol and print
//! per-fold per-quality Spearman rho plus wall time. Not part of the
//! test suite; used to pick the shipped acceptance configuration.

use std::time::Instant;

use refless::encoders::{EncoderKind, EncoderSpec, Pooling};
use refless::heads::Flavor;
use refless::runner::config::GridPoint;
use refless::runner::{
    run_experiment, BaselineSection, DatasetSource, ExperimentConfig, QeSection, SynthSection,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let d: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(24);
    let layers: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(42);
    let flavor = match args.get(6).map(String::as_str) {
        Some("m-5") => Flavor::M5,
        Some("s-1") => Flavor::S1,
        _ => Flavor::M1,
    };
    let kind = match args.get(7).map(String::as_str) {
        Some("bigru") => EncoderKind::BigruAttention,
        _ => EncoderKind::PretrainedTransformer,
    };

    let datasets = ["sa", "sb", "sc"]
        .iter()
        .map(|id| DatasetSource {
            id: id.to_string(),
            path: None,
            references: None,
            synth: Some(SynthSection {
                n_topics: 20,
                n_systems: 20,
                sentences_per_text: 8,
                systems: None,
                noise_cap: 0.25,
            }),
        })
        .collect();
    let encoder = match kind {
        EncoderKind::PretrainedTransformer => EncoderSpec {
            kind,
            d,
            max_tokens: 160,
            layers,
            n_heads: 2,
            hidden: 0,
            embed_dim: 0,
            att_dim: 0,
            pretrained_id: None,
            pooling: Pooling::ClsPooler,
            seed: 0,
        },
        EncoderKind::BigruAttention => EncoderSpec {
            kind,
            d,
            max_tokens: 160,
            layers,
            n_heads: 0,
            hidden: d / 2,
            embed_dim: 16,
            att_dim: 16,
            pretrained_id: None,
            pooling: Pooling::ClsRaw,
            seed: 0,
        },
    };
    let config = ExperimentConfig {
        seed,
        dev_fraction: 0.1,
        datasets,
        qe: Some(QeSection {
            flavor,
            encoder,
            grid: vec![GridPoint {
                lr,
                epochs,
                batch_size: 16,
            }],
            encoder_mode: Default::default(),
            loss_weights: [1.0; 5],
            vocab_min_count: 2,
        }),
        baselines: BaselineSection::default(),
    };

    let out = std::env::temp_dir().join(format!("refless-calibrate-{seed}-{d}-{epochs}"));
    let _ = std::fs::remove_dir_all(&out);
    let start = Instant::now();
    let outcome = run_experiment(&config, &out, None, true).expect("run");
    let elapsed = start.elapsed();
    println!(
        "d={d} layers={layers} epochs={epochs} lr={lr} flavor={flavor} kind={kind:?} time={:.1}s",
        elapsed.as_secs_f64()
    );
    let mut min_rho = f64::INFINITY;
    for e in &outcome.merged_report.entries {
        println!(
            "  {} q{} rho={:+.3} tau={:+.3} r={:+.3}",
            e.dataset_id, e.quality, e.rho, e.tau, e.r
        );
        min_rho = min_rho.min(e.rho);
    }
    println!("MIN RHO = {min_rho:.3}");
}
