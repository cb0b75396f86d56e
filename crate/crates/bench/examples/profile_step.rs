use aptsep_core::corpus::*;
use aptsep_core::dsp::*;
use aptsep_core::models::*;
use aptsep_core::grad::Tensor;
use std::time::Instant;

fn main() {
    let dir = std::env::temp_dir().join("aptsep_profile");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = CorpusConfig { samples_per_class: 4, ..Default::default() };
    let manifest = build_corpus(&cfg, &dir, 1).unwrap();
    let cache = CorpusCache::load(&manifest).unwrap();
    let dsp = DspConfig::default();
    let dims = UssDims::from_dsp(&dsp, 64);
    let model = UssModel::init(dims, 3);
    let mut stream = MixtureStream::new(&manifest, Pool::Train, 8000, 5).unwrap();
    let ex = stream.next_example(&cache).unwrap();

    // stft cost
    let t = Instant::now();
    for _ in 0..100 { let _ = prepare_sep_input(&ex.mixture, &dims).unwrap(); }
    println!("prepare_sep_input: {:.2} ms", t.elapsed().as_secs_f64() * 10.0);

    let input = prepare_sep_input(&ex.mixture, &dims).unwrap();
    let prompt = vec![0.1f32; 64];
    let target = Tensor::from_vec(ex.target.samples.clone());

    // forward only (waveform mode, no grads)
    let mut wave_graph = build_sep_graph(&dims, SepMode::Waveform, TrainSet::NONE).unwrap();
    let b = bind_sep(&wave_graph, &model, &input, &prompt, None).unwrap();
    let t = Instant::now();
    for _ in 0..50 { let _ = wave_graph.graph.evaluate(&b).unwrap(); }
    println!("separate fwd: {:.2} ms", t.elapsed().as_secs_f64() * 20.0);

    // loss fwd+bwd prompt-only
    let mut loss_graph = build_sep_graph(&dims, SepMode::Loss, TrainSet::PROMPT_ONLY).unwrap();
    let b = bind_sep(&loss_graph, &model, &input, &prompt, Some(&target)).unwrap();
    let t = Instant::now();
    for _ in 0..50 {
        let _ = loss_graph.graph.evaluate(&b).unwrap();
        let _ = loss_graph.graph.backpropagate(&Tensor::scalar(1.0)).unwrap();
    }
    println!("loss fwd+bwd prompt-only: {:.2} ms", t.elapsed().as_secs_f64() * 20.0);

    // loss fwd+bwd joint
    let mut joint_graph = build_sep_graph(&dims, SepMode::Loss, TrainSet::JOINT).unwrap();
    let b = bind_sep(&joint_graph, &model, &input, &prompt, Some(&target)).unwrap();
    let t = Instant::now();
    for _ in 0..50 {
        let _ = joint_graph.graph.evaluate(&b).unwrap();
        let _ = joint_graph.graph.backpropagate(&Tensor::scalar(1.0)).unwrap();
    }
    println!("loss fwd+bwd joint: {:.2} ms", t.elapsed().as_secs_f64() * 20.0);

    // sed forward
    let sed = SedModel::init(SedDims::from_dsp(&dsp, 64, 8), (0..8).collect(), 2);
    let crop = center_crop(cache.get(0,0).unwrap(), 8000).unwrap();
    let t = Instant::now();
    for _ in 0..50 { let _ = sed_forward(&sed, &crop, &dsp).unwrap(); }
    println!("sed fwd: {:.2} ms", t.elapsed().as_secs_f64() * 20.0);
}
