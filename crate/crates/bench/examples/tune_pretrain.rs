use aptsep_core::corpus::*;
use aptsep_core::dsp::*;
use aptsep_core::eval::*;
use aptsep_core::models::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(300);

    let manifest = CorpusManifest::load(std::path::Path::new("runs/desk/corpus/manifest.json")).unwrap();
    let cache = CorpusCache::load(&manifest).unwrap();
    let dsp = DspConfig::default();
    let seen = manifest.split_view(Split::Seen);

    let cfg = PretrainConfig { sed_epochs: 40, uss_epochs: epochs, lr, batch: 4, threads: 2 };
    let t = Instant::now();
    let (sed, uss, stats) = pretrain_backbone(&seen, &cache, &dsp, 64, &cfg, 11).unwrap();
    println!("pretrain wall: {:.1}s, heldout acc {:.2}", t.elapsed().as_secs_f64(), stats.sed_heldout_accuracy);
    let losses = &stats.uss_epoch_losses;
    for i in (0..losses.len()).step_by((losses.len() / 12).max(1)) {
        println!("  epoch {i}: loss {:.5}", losses[i]);
    }
    println!("  final: {:.5}", losses.last().unwrap());

    let emb = enrollment_embeddings(&sed, &seen, &cache, &dsp).unwrap();
    let pairs = fixed_test_pairs(&seen, &cache, 8000, 999).unwrap();
    let mut sdrs = Vec::new();
    let mut wins = 0;
    for ex in &pairs {
        let est = separate(&uss, &ex.mixture, emb.get(&ex.target_entry).unwrap()).unwrap();
        sdrs.push(sdr(&ex.target, &est).unwrap());
        let est2 = separate(&uss, &ex.mixture, emb.get(&ex.interferer_entry).unwrap()).unwrap();
        if sdrs.last().unwrap() > &sdr(&ex.target, &est2).unwrap() { wins += 1; }
    }
    let mean = sdrs.iter().sum::<f64>() / sdrs.len() as f64;
    println!("seen test: avg SDR {:.2} dB, median {:.2}, matching-prompt wins {}/{}",
        mean, median(&sdrs).unwrap(), wins, pairs.len());
}
