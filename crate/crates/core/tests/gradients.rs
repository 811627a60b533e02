use rand::Rng;

use avse::gan::{darken, synth_lip_image, Discriminator, GanConfig, Generator, Translator};
use avse::model::{AvModel, LipEmbeddingSequence, ModelConfig};
use avse::tensor::{init, Adam, AdamConfig, NamedTensorStore, ParamSource, Tape, Tensor};

fn rand_t(dims: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut rng = init::seeded(seed);
    Tensor::from_fn(dims, |_| rng.random_range(lo..hi))
}

fn generator_loss(g: &Generator, x: &Tensor, target: &Tensor) -> f64 {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let y = g.translate(&mut tape, xv, &ParamSource::Constants).unwrap();
    let l = tape.mse(y, target).unwrap();
    tape.value(l).item()
}

#[test]
fn generator_matches_finite_differences() {
    let cfg = GanConfig { base_channels: 2, residual_blocks: 1, ..GanConfig::default() };
    let mut g = Generator::new(&cfg, "g.", 3).unwrap();
    let x = rand_t(&[8, 8, 1], -1.0, 1.0, 4);
    let target = rand_t(&[8, 8, 1], -0.5, 0.5, 5);

    let store = g.weights().unwrap().clone();
    let mut tape = Tape::new();
    let params = ParamSource::trainable(&mut tape, &store);
    let xv = tape.input(x.clone());
    let y = g.translate(&mut tape, xv, &params).unwrap();
    let loss = tape.mse(y, &target).unwrap();
    let analytic = tape.backward(loss, &store).unwrap();

    let eps = 1e-6;
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in &names {
        for j in 0..store.get(name).unwrap().numel() {
            let orig = store.get(name).unwrap().data()[j];
            g.weights_mut().get_mut(name).unwrap().data_mut()[j] = orig + eps;
            let up = generator_loss(&g, &x, &target);
            g.weights_mut().get_mut(name).unwrap().data_mut()[j] = orig - eps;
            let down = generator_loss(&g, &x, &target);
            g.weights_mut().get_mut(name).unwrap().data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.get(name).unwrap().data()[j];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
    }
    let rel = diff2.sqrt() / a2.sqrt().max(n2.sqrt());
    assert!(rel < 1e-3, "generator rel err {rel:.2e}");
}

fn nonzero_names(grads: &NamedTensorStore) -> Vec<String> {
    grads
        .iter()
        .filter(|(_, t)| t.data().iter().any(|&v| v != 0.0))
        .map(|(n, _)| n.to_string())
        .collect()
}

#[test]
fn every_mask_network_parameter_receives_gradient() {
    for audio_only in [false, true] {
        let model = AvModel::new(ModelConfig::toy().with_audio_only(audio_only), 7).unwrap();
        let store = model.weights().clone();
        let mut reached = std::collections::BTreeSet::new();
        for batch in 0..3 {
            let mag = rand_t(&[30, 622], 0.0, 20.0, 10 + batch);
            let emb = LipEmbeddingSequence::new(rand_t(&[10, 512], -1.0, 1.0, 20 + batch)).unwrap();
            let mut rng = init::seeded(30 + batch);
            let target = Tensor::from_fn(&[30, 622], |_| if rng.random_bool(0.3) { 1.0 } else { 0.0 });
            let mut tape = Tape::new();
            let params = ParamSource::trainable(&mut tape, &store);
            let f = model.record(&mut tape, &mag, Some(&emb), &params).unwrap();
            let loss = tape.bce(f.mask, &target).unwrap();
            reached.extend(nonzero_names(&tape.backward(loss, &store).unwrap()));
        }
        let missing: Vec<&str> = store.names().filter(|n| !reached.contains(*n)).collect();
        assert!(missing.is_empty(), "audio_only={audio_only}: no gradient for {missing:?}");
    }
}

fn patch_score(d: &Discriminator, img: &Tensor) -> f64 {
    let m = d.forward(&avse::gan::LipImage::new(img.clone()).unwrap()).unwrap();
    m.data().iter().sum::<f64>() / m.numel() as f64
}

#[test]
fn discriminator_learns_to_separate_domains() {
    let cfg = GanConfig { base_channels: 4, ..GanConfig::default() };
    let mut d = Discriminator::new(&cfg, "d.", 11).unwrap();
    let mut adam = Adam::new(AdamConfig { lr: 1e-3, beta1: 0.5, ..Default::default() }).unwrap();
    let mut rng = init::seeded(12);
    for _ in 0..60 {
        let real = synth_lip_image(32, &mut rng);
        let fake = darken(&synth_lip_image(32, &mut rng));
        let store = d.weights().clone();
        let mut tape = Tape::new();
        let params = ParamSource::trainable(&mut tape, &store);
        let r = tape.input(real.tensor().clone());
        let f = tape.input(fake.tensor().clone());
        let pr = d.record(&mut tape, r, &params).unwrap();
        let pf = d.record(&mut tape, f, &params).unwrap();
        let ones = Tensor::from_fn(tape.value(pr).dims(), |_| 1.0);
        let zeros = Tensor::zeros(tape.value(pf).dims());
        let lr = tape.mse(pr, &ones).unwrap();
        let lf = tape.mse(pf, &zeros).unwrap();
        let loss = tape.add(lr, lf).unwrap();
        let grads = tape.backward(loss, &store).unwrap();
        adam.step(d.weights_mut(), &grads).unwrap();
    }
    let mut hits = 0;
    let trials = 40;
    for _ in 0..trials / 2 {
        let real = synth_lip_image(32, &mut rng);
        let fake = darken(&synth_lip_image(32, &mut rng));
        hits += (patch_score(&d, real.tensor()) > 0.5) as usize;
        hits += (patch_score(&d, fake.tensor()) <= 0.5) as usize;
    }
    let acc = hits as f64 / trials as f64;
    assert!(acc > 0.9, "discriminator accuracy {acc}");
}
