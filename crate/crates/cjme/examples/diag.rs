// scratch diagnostic
use cjme::cli::train::{train_model, TrainSettings};
use cjme::dataio::{gen_synthetic, Dominance, Split, SynthConfig};
use cjme::inference::{select_modality, AlphaPolarity, ChosenModality, InferenceConfig, ModalityMode};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(40);
    let attn_hidden: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(64);
    let bundle = gen_synthetic(&SynthConfig { audio_dominant_fraction: 0.3, ..SynthConfig::default() }).unwrap();
    let mut settings = TrainSettings::defaults_for(8);
    settings.epochs = epochs;
    settings.attention_hidden = attn_hidden;
    let t0 = std::time::Instant::now();
    let ckpt = train_model(&bundle, &settings).unwrap().checkpoint;
    let secs = t0.elapsed().as_secs_f64();
    let attn = ckpt.attention.as_ref().unwrap();
    let cfg = InferenceConfig { attention_threshold: 0.7, alpha_polarity: AlphaPolarity::Inverted, modality: ModalityMode::Select, ..Default::default() };
    let (mut agree, mut both, mut total) = (0, 0, 0);
    for e in bundle.examples.iter().filter(|e| e.split == Split::Test) {
        let truth = match e.dominant { Some(Dominance::Audio) => ChosenModality::Audio, Some(Dominance::Video) => ChosenModality::Video, _ => continue };
        let d = select_modality(attn, &ckpt.projection, e, &cfg).unwrap();
        total += 1;
        if d == truth { agree += 1; }
        if d == ChosenModality::Both { both += 1; }
    }
    println!("epochs={epochs} attn_hidden={attn_hidden}: agree {agree}/{total} ({:.3}) both={both} train={secs:.1}s", agree as f64 / total as f64);
}
