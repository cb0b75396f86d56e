use aptsep_core::apt::*;
use aptsep_core::corpus::*;
use aptsep_core::dsp::*;
use aptsep_core::eval::*;
use aptsep_core::models::*;
use std::path::Path;

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb + 1e-12)
}

fn class_mean(emb: &std::collections::BTreeMap<(usize, usize), Vec<f32>>, class: usize, d: usize) -> Vec<f32> {
    let rows: Vec<Vec<f32>> = emb.iter().filter(|((c, _), _)| *c == class).map(|(_, e)| e.clone()).collect();
    let mut acc = vec![0.0f64; d];
    for r in &rows { for (a, &v) in acc.iter_mut().zip(r) { *a += v as f64; } }
    acc.iter().map(|&v| (v / rows.len() as f64) as f32).collect()
}

fn main() {
    let dsp = DspConfig::default();
    let manifest = CorpusManifest::load(Path::new("runs/desk/corpus/manifest.json")).unwrap();
    let cache = CorpusCache::load(&manifest).unwrap();
    let sed = SedModel::from_checkpoint(&load_checkpoint(Path::new("runs/desk/checkpoints/sed.ckpt")).unwrap(), &dsp).unwrap();
    let uss = UssModel::from_checkpoint(&load_checkpoint(Path::new("runs/desk/checkpoints/uss.ckpt")).unwrap(), &dsp).unwrap();
    let emb = enrollment_embeddings(&sed, &manifest, &cache, &dsp).unwrap();
    let d = sed.dims.embed_dim;

    let seen: Vec<usize> = manifest.classes.iter().filter(|c| c.split == Split::Seen).map(|c| c.class_id).collect();
    let unseen: Vec<usize> = manifest.classes.iter().filter(|c| c.split == Split::Unseen).map(|c| c.class_id).collect();
    let seen_means: Vec<(usize, Vec<f32>)> = seen.iter().map(|&c| (c, class_mean(&emb, c, d))).collect();

    let bank = PromptBank::load(Path::new("runs/desk/banks/initial_full_s42.json")).unwrap();
    let tuned = PromptBank::load(Path::new("runs/desk/banks/tuned_full_s42.json")).unwrap();

    let unseen_view = manifest.split_view(Split::Unseen);
    let pairs = fixed_test_pairs(&unseen_view, &cache, 8000, 12345).unwrap();

    for &u in &unseen {
        let mean_u = class_mean(&emb, u, d);
        let mut best = (0usize, -1.0f64);
        for (c, m) in &seen_means {
            let cs = cosine(&mean_u, m);
            if cs > best.1 { best = (*c, cs); }
        }
        // energy ratio of separated output on this class's first test mixture
        let ex = pairs.iter().find(|e| e.target_class == u).unwrap();
        let est_i = separate(&uss, &ex.mixture, bank.row(u).unwrap()).unwrap();
        let est_t = separate(&uss, &ex.mixture, tuned.row(u).unwrap()).unwrap();
        let energy = |w: &Waveform| w.samples.iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
        let e_mix = energy(&ex.mixture);
        println!(
            "class {u:>2}: nearest seen {} (cos {:.3}); out/mix energy init {:.4} tuned {:.4}; prompt moved L2 {:.3}",
            best.0, best.1,
            energy(&est_i) / e_mix,
            energy(&est_t) / e_mix,
            bank.row(u).unwrap().iter().zip(tuned.row(u).unwrap()).map(|(&a,&b)| ((a-b) as f64).powi(2)).sum::<f64>().sqrt(),
        );
    }
}
