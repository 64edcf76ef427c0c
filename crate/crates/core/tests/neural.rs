use xlcrf::corpus::{LabeledSentence, Sentence, TagSet};
use xlcrf::neural::gradcheck::{epsilon_sweep, grad_check, GradCheckOptions};
use xlcrf::neural::{Dims, NeuralConfig, NeuralModel, ScorerKind};

fn dims() -> Dims {
    Dims {
        r1: 6,
        r2: 5,
        r3: 4,
        q: 7,
        d_char: 4,
        d_char_embed: 3,
        d_word: 3,
        lstm_layers: 2,
        lstm_hidden: 4,
    }
}

fn config(scorer: ScorerKind, tag_emissions: bool) -> NeuralConfig {
    NeuralConfig {
        dims: dims(),
        scorer,
        xling_tag_emissions: tag_emissions,
        seed: 11,
    }
}

fn ls(words: &[&str], tags: &[usize], lang: &str) -> LabeledSentence {
    LabeledSentence {
        sentence: Sentence::new(words.iter().map(|w| w.to_string()).collect(), lang).unwrap(),
        tags: tags.to_vec(),
    }
}

fn corpus() -> Vec<LabeledSentence> {
    vec![
        ls(&["Maria", "mora", "en", "Vigo", "."], &[1, 0, 0, 3, 0], "gl"),
        ls(&["Banco", "Pastor", "abre"], &[5, 6, 0], "gl"),
        ls(&["Juan", "vive", "en", "Madrid"], &[1, 0, 0, 3], "es"),
    ]
}

fn build(cfg: NeuralConfig, tagset: TagSet) -> NeuralModel {
    let data = corpus();
    let refs: Vec<&LabeledSentence> = data.iter().collect();
    NeuralModel::from_corpus(cfg, tagset, vec!["gl".into(), "es".into()], &refs).unwrap()
}

fn tensor<'a>(m: &'a NeuralModel, name: &str) -> &'a [f64] {
    m.params.find(name).unwrap().tensor.slice(&m.params.values)
}

fn set_tensor(m: &mut NeuralModel, name: &str, f: impl Fn(usize) -> f64) {
    let t = m.params.find(name).unwrap().tensor;
    for (j, v) in t.slice_mut(&mut m.params.values).iter_mut().enumerate() {
        *v = f(j);
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step written out with explicit indices: rows `[i, f, g, o]`
/// of a `4h x input` matrix.
fn reference_step(w_ih: &[f64], w_hh: &[f64], b: &[f64], x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hid = h.len();
    let inp = x.len();
    let pre = |row: usize| -> f64 {
        let mut z = b[row];
        for j in 0..inp {
            z += w_ih[row * inp + j] * x[j];
        }
        for j in 0..hid {
            z += w_hh[row * hid + j] * h[j];
        }
        z
    };
    let mut h_new = vec![0.0; hid];
    let mut c_new = vec![0.0; hid];
    for u in 0..hid {
        let i = sigmoid(pre(u));
        let f = sigmoid(pre(hid + u));
        let g = pre(2 * hid + u).tanh();
        let o = sigmoid(pre(3 * hid + u));
        c_new[u] = f * c[u] + i * g;
        h_new[u] = o * c_new[u].tanh();
    }
    (h_new, c_new)
}

/// Three explicit steps, no loop over time.
fn reference_three(m: &NeuralModel, prefix: &str, xs: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
    let w_ih = tensor(m, &format!("{prefix}.w_ih"));
    let w_hh = tensor(m, &format!("{prefix}.w_hh"));
    let b = tensor(m, &format!("{prefix}.bias"));
    let hid = w_hh.len() / (4 * (b.len() / 4));
    let zero = vec![0.0; hid];
    let (h0, c0) = reference_step(w_ih, w_hh, b, &xs[0], &zero, &zero);
    let (h1, c1) = reference_step(w_ih, w_hh, b, &xs[1], &h0, &c0);
    let (h2, _) = reference_step(w_ih, w_hh, b, &xs[2], &h1, &c1);
    [h0, h1, h2]
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

#[test]
fn single_character_word_is_one_lstm_step() {
    let m = build(config(ScorerKind::Mono, false), TagSet::default());
    let d = dims();
    let embed = tensor(&m, "char.embed");
    let id = m.char_encoder.char_id('a');
    assert_ne!(id, 0);
    let x = &embed[id * d.d_char_embed..(id + 1) * d.d_char_embed];
    let zero = vec![0.0; d.d_char];
    let (h, _) = reference_step(
        tensor(&m, "char.lstm.w_ih"),
        tensor(&m, "char.lstm.w_hh"),
        tensor(&m, "char.lstm.bias"),
        x,
        &zero,
        &zero,
    );
    let w = m.encode_word("a", "gl").unwrap();
    for (a, b) in w[..d.d_char].iter().zip(&h) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn unknown_words_and_characters_fall_back() {
    let m = build(config(ScorerKind::Mono, false), TagSet::default());
    let w = m.encode_word("ßüñ", "gl").unwrap();
    let unk_row = &tensor(&m, "word.gl")[..dims().d_word];
    assert_eq!(&w[dims().d_char..], unk_row);
}

#[test]
fn sentence_encoder_matches_straight_line_reference() {
    let m = build(config(ScorerKind::Xling, false), TagSet::default());
    let words = ["Juan", "en", "Vigo"];
    let s = Sentence::new(words.iter().map(|w| w.to_string()).collect(), "es").unwrap();
    let got = m.encode_sentence(&s).unwrap();

    let omega: [Vec<f64>; 3] = [
        m.encode_word(words[0], "es").unwrap(),
        m.encode_word(words[1], "es").unwrap(),
        m.encode_word(words[2], "es").unwrap(),
    ];
    let f1 = reference_three(&m, "bilstm.0.fwd", &omega);
    let rev = [omega[2].clone(), omega[1].clone(), omega[0].clone()];
    let b1 = reference_three(&m, "bilstm.0.bwd", &rev);
    let layer1 = [concat(&f1[0], &b1[2]), concat(&f1[1], &b1[1]), concat(&f1[2], &b1[0])];
    let f2 = reference_three(&m, "bilstm.1.fwd", &layer1);
    let rev2 = [layer1[2].clone(), layer1[1].clone(), layer1[0].clone()];
    let b2 = reference_three(&m, "bilstm.1.bwd", &rev2);
    let top = [concat(&f2[0], &b2[2]), concat(&f2[1], &b2[1]), concat(&f2[2], &b2[0])];

    let p = tensor(&m, "sent.proj");
    let pb = tensor(&m, "sent.proj_bias");
    let width = top[0].len();
    assert_eq!(got.len(), 3);
    for i in 0..3 {
        assert_eq!(got[i].len(), dims().r2);
        for r in 0..dims().r2 {
            let mut v = pb[r];
            for j in 0..width {
                v += p[r * width + j] * top[i][j];
            }
            assert!((got[i][r] - v).abs() < 1e-12, "row {i} col {r}");
        }
    }
}

#[test]
fn direction_symmetry() {
    let m = build(config(ScorerKind::Mono, false), TagSet::default());
    let h = dims().lstm_hidden;
    let mut swapped = m.clone();
    for layer in 0..dims().lstm_layers {
        for part in ["w_ih", "w_hh", "bias"] {
            let f = m.params.find(&format!("bilstm.{layer}.fwd.{part}")).unwrap().tensor;
            let b = m.params.find(&format!("bilstm.{layer}.bwd.{part}")).unwrap().tensor;
            let fv = f.slice(&m.params.values).to_vec();
            let bv = b.slice(&m.params.values).to_vec();
            f.slice_mut(&mut swapped.params.values).copy_from_slice(&bv);
            b.slice_mut(&mut swapped.params.values).copy_from_slice(&fv);
        }
    }
    // Deeper layers and the projection read [forward; backward], whose
    // halves trade places.
    let swap_halves = |m: &mut NeuralModel, name: &str| {
        let t = m.params.find(name).unwrap().tensor;
        for r in 0..t.rows {
            let row = t.row_mut(&mut m.params.values, r);
            let (a, b) = row.split_at_mut(h);
            a.swap_with_slice(b);
        }
    };
    for layer in 1..dims().lstm_layers {
        swap_halves(&mut swapped, &format!("bilstm.{layer}.fwd.w_ih"));
        swap_halves(&mut swapped, &format!("bilstm.{layer}.bwd.w_ih"));
    }
    swap_halves(&mut swapped, "sent.proj");

    let words: Vec<String> = ["Maria", "mora", "en", "Vigo"].iter().map(|w| w.to_string()).collect();
    let fwd = Sentence::new(words.clone(), "gl").unwrap();
    let rev = Sentence::new(words.into_iter().rev().collect(), "gl").unwrap();
    let a = m.encode_sentence(&fwd).unwrap();
    let mut b = swapped.encode_sentence(&rev).unwrap();
    b.reverse();
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_weights_give_zero_sentence_rows() {
    let mut m = build(config(ScorerKind::Mono, false), TagSet::default());
    for info in m.params.infos.clone() {
        if info.name.starts_with("bilstm") || info.name == "sent.proj_bias" {
            info.tensor.slice_mut(&mut m.params.values).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let s = Sentence::new(vec!["Vigo".into()], "gl").unwrap();
    let rows = m.encode_sentence(&s).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].iter().all(|&v| v == 0.0));
}

#[test]
fn mono_lattice_scalar_oracle() {
    let tagset = TagSet::new(["x".to_string()]).unwrap();
    let m = build(config(ScorerKind::Mono, false), tagset);
    let s = Sentence::new(vec!["Juan".into(), "vive".into()], "es").unwrap();
    let lat = m.mono_lattice(&s).unwrap();
    let rows = m.encode_sentence(&s).unwrap();
    let d = dims();
    let (a, o, w) = (tensor(&m, "transitions"), tensor(&m, "mono.tag_embed"), tensor(&m, "mono.W"));
    let k = 3;
    let emission = |i: usize, t: usize| {
        let mut total = 0.0;
        for r in 0..d.r1 {
            for c in 0..d.r2 {
                total += o[t * d.r1 + r] * w[r * d.r2 + c] * rows[i][c];
            }
        }
        total
    };
    for t in 0..k {
        assert!((lat.score(0, None, t) - (a[k * k + t] + emission(0, t))).abs() < 1e-12);
        for p in 0..k {
            assert!((lat.score(1, Some(p), t) - (a[p * k + t] + emission(1, t))).abs() < 1e-12);
        }
    }
    assert_eq!(lat.prev_count(0), 1);
    assert_eq!(lat.prev_count(1), k);
}

#[test]
fn mono_zero_interaction_leaves_transitions() {
    let mut m = build(config(ScorerKind::Mono, false), TagSet::default());
    set_tensor(&mut m, "mono.W", |_| 0.0);
    set_tensor(&mut m, "transitions", |j| j as f64 * 0.01);
    let s = Sentence::new(vec!["Juan".into(), "vive".into()], "es").unwrap();
    let lat = m.mono_lattice(&s).unwrap();
    let k = 9;
    assert_eq!(lat.score(0, None, 2), (k * k + 2) as f64 * 0.01);
    assert_eq!(lat.score(1, Some(3), 4), (3 * k + 4) as f64 * 0.01);
}

#[test]
fn xling_lattice_scalar_oracle_and_invariance() {
    let tagset = TagSet::new(["x".to_string()]).unwrap();
    let m = build(config(ScorerKind::Xling, false), tagset);
    let s = Sentence::new(vec!["Maria".into(), "mora".into()], "gl").unwrap();
    let lat = m.xling_lattice(&s, "gl").unwrap();
    let rows = m.encode_sentence(&s).unwrap();
    let d = dims();
    let a = tensor(&m, "transitions");
    let l = &tensor(&m, "xling.lang_embed")[..d.r3];
    let (uu, u, b) = (tensor(&m, "xling.U"), tensor(&m, "xling.u"), tensor(&m, "xling.b"));
    let k = 3;
    for i in 0..2 {
        let x: Vec<f64> = rows[i].iter().chain(l).copied().collect();
        let mut e = 0.0;
        for r in 0..d.q {
            let mut z = b[r];
            for (c, xv) in x.iter().enumerate() {
                z += uu[r * x.len() + c] * xv;
            }
            e += u[r] * z.tanh();
        }
        for t in 0..k {
            for p in 0..lat.prev_count(i) {
                let prev = if i == 0 { None } else { Some(p) };
                let row = if i == 0 { k } else { p };
                let score = lat.score(i, prev, t);
                assert!((score - (a[row * k + t] + e)).abs() < 1e-12);
                // Emission part is the same for every (t', t).
                assert!((score - a[row * k + t] - e).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn xling_language_dependence() {
    let mut m = build(config(ScorerKind::Xling, false), TagSet::default());
    let s = Sentence::new(vec!["Vigo".into(), "en".into()], "gl").unwrap();
    assert_ne!(
        m.xling_lattice(&s, "gl").unwrap().flat(),
        m.xling_lattice(&s, "es").unwrap().flat()
    );
    // Word tables are per language too; blank them so only l(ℓ) could differ.
    set_tensor(&mut m, "word.gl", |_| 0.0);
    set_tensor(&mut m, "word.es", |_| 0.0);
    assert_ne!(
        m.xling_lattice(&s, "gl").unwrap().flat(),
        m.xling_lattice(&s, "es").unwrap().flat()
    );
    let r3 = dims().r3;
    set_tensor(&mut m, "xling.lang_embed", |j| ((j % r3) as f64) * 0.05);
    assert_eq!(
        m.xling_lattice(&s, "gl").unwrap().flat(),
        m.xling_lattice(&s, "es").unwrap().flat()
    );
}

#[test]
fn xling_zero_u_leaves_transitions() {
    let mut m = build(config(ScorerKind::Xling, false), TagSet::default());
    set_tensor(&mut m, "xling.u", |_| 0.0);
    set_tensor(&mut m, "transitions", |j| (j as f64).sin());
    let s = Sentence::new(vec!["Vigo".into()], "gl").unwrap();
    let lat = m.xling_lattice(&s, "gl").unwrap();
    for t in 0..9 {
        assert_eq!(lat.score(0, None, t), ((81 + t) as f64).sin());
    }
}

#[test]
fn sharing_receives_source_gradients() {
    let m = build(config(ScorerKind::Xling, false), TagSet::default());
    assert!(std::ptr::eq(m.char_encoder_for("gl").unwrap(), m.char_encoder_for("es").unwrap()));
    assert!(std::ptr::eq(m.transitions_for("gl").unwrap(), m.transitions_for("es").unwrap()));
    let source_only = vec![corpus()[2].clone()];
    let (_, g) = m.loss_and_gradients(&source_only).unwrap();
    let nonzero = |group: &str| m.params.group_coords(group).iter().any(|&j| g[j] != 0.0);
    assert!(nonzero("char_lstm"));
    assert!(nonzero("char_embed"));
    assert!(nonzero("transitions"));
    // The target language's word table is untouched by a source sentence.
    let gl = m.params.find("word.gl").unwrap().tensor;
    assert!(gl.slice(&g).iter().all(|&v| v == 0.0));
}

fn check(cfg: NeuralConfig) {
    let m = build(cfg, TagSet::default());
    let examples = corpus();
    let report = grad_check(&m, &examples[..1], &GradCheckOptions::default()).unwrap();
    println!("{}", report.render());
    assert!(report.max_rel_err <= 1e-4, "{}", report.render());
    let mut groups: Vec<_> = report.per_group_errors.iter().map(|g| g.group.clone()).collect();
    assert_eq!(groups, m.params.groups());
    groups.dedup();
    assert_eq!(groups.len(), report.per_group_errors.len());
}

#[test]
fn gradients_mono() {
    check(config(ScorerKind::Mono, false));
}

#[test]
fn gradients_xling() {
    check(config(ScorerKind::Xling, false));
}

#[test]
fn gradients_xling_tag_emissions() {
    check(config(ScorerKind::Xling, true));
}

#[test]
fn corrupted_group_is_reported() {
    let m = build(config(ScorerKind::Xling, true), TagSet::default());
    for group in m.params.groups() {
        let opts = GradCheckOptions {
            corrupt_group: Some(group.clone()),
            ..Default::default()
        };
        let report = grad_check(&m, &corpus()[..1], &opts).unwrap();
        assert_eq!(report.worst_coordinate.group, group);
        assert!(report.max_rel_err > 1e-2);
    }
}

#[test]
fn epsilon_sweep_is_v_shaped() {
    let m = build(config(ScorerKind::Mono, false), TagSet::default());
    let opts = GradCheckOptions {
        floor: 1e-12,
        ..Default::default()
    };
    let eps = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
    let sweep = epsilon_sweep(&m, &corpus()[..1], &eps, &opts).unwrap();
    for (e, err) in &sweep {
        println!("epsilon {e:e}: max rel err {err:.3e}");
    }
    let best = (0..sweep.len())
        .min_by(|&a, &b| sweep[a].1.total_cmp(&sweep[b].1))
        .unwrap();
    assert!(best > 0 && best < sweep.len() - 1, "minimum at an end of the sweep");
    assert!(sweep[0].1 > sweep[best].1 && sweep[sweep.len() - 1].1 > sweep[best].1);
}
