//! Shared fixtures for the criterion benchmarks: a tiny in-memory corpus
//! and model stack sized like the default pipeline.

use aptsep_core::corpus::{
    build_corpus, ClassSpec, CorpusCache, CorpusConfig, CorpusManifest, GeneratorKind,
    MixtureExample, MixtureStream, Pool, Split,
};
use aptsep_core::dsp::DspConfig;
use aptsep_core::models::{UssDims, UssModel};

pub struct BenchStack {
    pub manifest: CorpusManifest,
    pub cache: CorpusCache,
    pub dsp: DspConfig,
    pub model: UssModel,
    pub example: MixtureExample,
}

/// Build a two-class corpus in a temp directory plus a default-size
/// separator and one mixture example.
pub fn bench_stack() -> BenchStack {
    let dir = std::env::temp_dir().join("aptsep_bench_fixtures");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = CorpusConfig {
        classes: vec![
            ClassSpec {
                class_id: 0,
                kind: GeneratorKind::HarmonicTone { f0_lo: 200.0, f0_hi: 260.0, harmonics: 3 },
                split: Split::Seen,
            },
            ClassSpec {
                class_id: 1,
                kind: GeneratorKind::BandpassNoise { f_lo: 1500.0, f_hi: 1900.0 },
                split: Split::Seen,
            },
        ],
        samples_per_class: 4,
        sample_rate: 8000,
        clip_seconds: 2.0,
    };
    let manifest = build_corpus(&cfg, &dir, 9).unwrap();
    let cache = CorpusCache::load(&manifest).unwrap();
    let dsp = DspConfig::default();
    let model = UssModel::init(UssDims::from_dsp(&dsp, 64), 3);
    let mut stream = MixtureStream::new(&manifest, Pool::Train, dsp.clip_len(), 5).unwrap();
    let example = stream.next_example(&cache).unwrap();
    BenchStack { manifest, cache, dsp, model, example }
}
