use approx::assert_relative_eq;

use super::*;
use crate::kgraph::{ConceptId, GraphBuilder, RelationId};
use crate::numerics::{grad_check, Tape, Tensor};

fn cfg(dim: usize) -> KgaeConfig {
    KgaeConfig {
        dim,
        ..KgaeConfig::default()
    }
}

fn chain() -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    b.add_triple("a", "r0", "b");
    b.add_triple("b", "r1", "c");
    b.add_triple("c", "r0", "a");
    b.add_triple("a", "r1", "c");
    b.build()
}

fn set_identity(p: &mut AutoencoderParams<f64>, name: &str) {
    let d = p.dim;
    let t = p.store.get_mut(name).unwrap();
    *t = Tensor::zeros(&[d, d]);
    for i in 0..d {
        t.data_mut()[i * d + i] = 1.0;
    }
}

fn zero(p: &mut AutoencoderParams<f64>, name: &str) {
    let t = p.store.get_mut(name).unwrap();
    *t = Tensor::zeros(t.shape());
}

#[test]
fn single_node_no_edges_composes_self_transform() {
    let mut b = GraphBuilder::new();
    b.add_concept("solo");
    b.add_relation("r");
    let g = b.build();
    let mut p = AutoencoderParams::<f64>::init(&g, &cfg(3), &mut RngStream::new(1)).unwrap();
    *p.store.get_mut("g").unwrap() = Tensor::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
    let h = rgcn_forward(&g, &p, &[]).unwrap();
    let w1 = p.store.get("layer1.self").unwrap();
    let w2 = p.store.get("layer2.self").unwrap();
    let relu = |t: Tensor<f64>| t.map(|x| x.max(0.0));
    let x = p.store.get("g").unwrap().clone();
    let want = relu(relu(x.matmul(w1).unwrap()).matmul(w2).unwrap());
    for (a, b) in h.data().iter().zip(want.data()) {
        assert_relative_eq!(*a, *b, epsilon = 1e-12);
    }
}

#[test]
fn two_neighbors_average_under_identity() {
    // a -r-> c and b -r-> c with identity relation weights and zero self
    // weights: one layer gives c = ReLU((g_a + g_b) / 2).
    let mut b = GraphBuilder::new();
    b.add_triple("a", "r", "c");
    b.add_triple("b", "r", "c");
    let g = b.build();
    let mut c = cfg(2);
    c.inverse_relations = false;
    let mut p = AutoencoderParams::<f64>::init(&g, &c, &mut RngStream::new(2)).unwrap();
    let mut feats = Tensor::zeros(&[3, 2]);
    feats.row_mut(g.concept_id("a").unwrap().index()).copy_from_slice(&[1.0, -3.0]);
    feats.row_mut(g.concept_id("b").unwrap().index()).copy_from_slice(&[2.0, 1.0]);
    *p.store.get_mut("g").unwrap() = feats;
    let msg = MessageGraph::for_params(&p, g.triples()).unwrap();
    set_identity(&mut p, "layer1.rel0");
    zero(&mut p, "layer1.self");
    let mut tape = Tape::new();
    let x = tape.param(&p.store, "g").unwrap();
    let w = tape.param(&p.store, "layer1.rel0").unwrap();
    let agg = tape.spmm(msg.adjacency[0].clone(), x).unwrap();
    let m = tape.matmul(agg, w).unwrap();
    let h = tape.relu(m);
    let c_row = tape.value(h).row(g.concept_id("c").unwrap().index()).to_vec();
    assert_relative_eq!(c_row[0], 1.5, epsilon = 1e-12);
    assert_relative_eq!(c_row[1], 0.0, epsilon = 1e-12);
}

#[test]
fn distmult_hand_value() {
    let g = chain();
    let mut p = AutoencoderParams::<f64>::init(&g, &cfg(2), &mut RngStream::new(3)).unwrap();
    *p.store.get_mut("r_diag").unwrap() = Tensor::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.5]]).unwrap();
    let s = distmult_score(&[1.0, 1.0], RelationId(0), &[1.0, 3.0], &p).unwrap();
    assert_relative_eq!(s, 1.0 / (1.0 + (-7.0f64).exp()), epsilon = 1e-12);
    assert_relative_eq!(s, 0.999_088_948_8, epsilon = 1e-9);
    assert!(matches!(distmult_score(&[1.0, 1.0], RelationId(5), &[1.0, 1.0], &p), Err(KgaeError::UnknownRelation(5))));
    assert!(distmult_score(&[1.0], RelationId(0), &[1.0, 1.0], &p).is_err());
}

#[test]
fn loss_at_half_scores_is_ln2() {
    let g = chain();
    let p = AutoencoderParams::<f64>::init(&g, &cfg(4), &mut RngStream::new(4)).unwrap();
    let samples = [
        TripleSample {
            triple: g.triples()[0],
            positive: true,
        },
        TripleSample {
            triple: Triple::new(1, 0, 1),
            positive: false,
        },
    ];
    let h = Tensor::zeros(&[g.num_concepts(), 4]);
    let l = autoencoder_loss(&samples, &p, &h).unwrap();
    assert_relative_eq!(l, std::f64::consts::LN_2, epsilon = 1e-12);
}

#[test]
fn loss_invariant_to_duplicating_sample_set() {
    let g = chain();
    let p = AutoencoderParams::<f64>::init(&g, &cfg(4), &mut RngStream::new(5)).unwrap();
    let set = sample_negatives(g.triples(), &g, &mut RngStream::new(6)).unwrap();
    let h = rgcn_forward(&g, &p, g.triples()).unwrap();
    let once = autoencoder_loss(&set.samples, &p, &h).unwrap();
    let twice: Vec<_> = set.samples.iter().chain(&set.samples).copied().collect();
    assert_relative_eq!(once, autoencoder_loss(&twice, &p, &h).unwrap(), epsilon = 1e-12);
}

#[test]
fn non_message_edges_do_not_affect_embeddings() {
    let g = chain();
    let p = AutoencoderParams::<f64>::init(&g, &cfg(4), &mut RngStream::new(7)).unwrap();
    let subset = &g.triples()[..2];
    let h1 = rgcn_forward(&g, &p, subset).unwrap();
    // Same message set evaluated against a graph with extra edges.
    let mut b = GraphBuilder::new();
    for t in g.labeled_triples() {
        b.add_triple(&t.0, &t.1, &t.2);
    }
    b.add_triple("b", "r0", "a");
    let g2 = b.build();
    let h2 = rgcn_forward(&g2, &p, subset).unwrap();
    assert_eq!(h1, h2);
}

#[test]
fn permutation_equivariance() {
    let g = chain();
    let p = AutoencoderParams::<f64>::init(&g, &cfg(3), &mut RngStream::new(8)).unwrap();
    let h = rgcn_forward(&g, &p, g.triples()).unwrap();
    let perm = [2usize, 0, 1];
    let mut q = p.clone();
    let gfeat = p.store.get("g").unwrap();
    let mut permuted = Tensor::zeros(gfeat.shape());
    for (old, &new) in perm.iter().enumerate() {
        permuted.row_mut(new).copy_from_slice(gfeat.row(old));
    }
    *q.store.get_mut("g").unwrap() = permuted;
    let edges: Vec<Triple> = g
        .triples()
        .iter()
        .map(|t| Triple {
            head: ConceptId(perm[t.head.index()] as u32),
            rel: t.rel,
            tail: ConceptId(perm[t.tail.index()] as u32),
        })
        .collect();
    let hp = rgcn_forward(&g, &q, &edges).unwrap();
    for (old, &new) in perm.iter().enumerate() {
        for (a, b) in h.row(old).iter().zip(hp.row(new)) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }
}

#[test]
fn dimension_mismatch_rejected() {
    let g = chain();
    let p = AutoencoderParams::<f64>::init(&g, &cfg(3), &mut RngStream::new(9)).unwrap();
    let mut b = GraphBuilder::new();
    b.add_triple("x", "r0", "y");
    let other = b.build();
    assert!(matches!(rgcn_forward(&other, &p, other.triples()), Err(KgaeError::Dimension(_))));
}

#[test]
fn zero_epochs_returns_initialization() {
    let g = chain();
    let mut c = cfg(4);
    c.epochs = 0;
    let rng = RngStream::new(10);
    let (p, report) = pretrain_kgae::<f64>(&g, &c, &mut rng.clone()).unwrap();
    let init = AutoencoderParams::<f64>::init(&g, &c, &mut rng.derive(INIT_STREAM)).unwrap();
    assert!(p.store.values_equal(&init.store));
    assert!(report.epochs.is_empty());
}

#[test]
fn pretraining_is_deterministic_and_finite() {
    let g = chain();
    let mut c = cfg(4);
    c.epochs = 5;
    let (a, ra) = pretrain_kgae::<f64>(&g, &c, &mut RngStream::new(11)).unwrap();
    let (b, rb) = pretrain_kgae::<f64>(&g, &c, &mut RngStream::new(11)).unwrap();
    assert!(a.store.values_equal(&b.store));
    assert_eq!(ra.to_jsonl(), rb.to_jsonl());
    assert!(ra.epochs.iter().all(|m| m.loss.is_finite()));
    let line = ra.to_jsonl().lines().next().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert!(v.get("epoch").is_some() && v.get("loss").is_some() && v.get("auc").is_some());
}

#[test]
fn auc_handles_ties_and_extremes() {
    assert_eq!(roc_auc(&[0.9, 0.8], &[0.1, 0.2]), Some(1.0));
    assert_eq!(roc_auc(&[0.1], &[0.9]), Some(0.0));
    assert_eq!(roc_auc(&[0.5, 0.5], &[0.5]), Some(0.5));
    assert_eq!(roc_auc(&[], &[0.5]), None);
}

#[test]
fn exported_features_round_trip() {
    let g = chain();
    let p = AutoencoderParams::<f64>::init(&g, &cfg(3), &mut RngStream::new(12)).unwrap();
    let f = export_concept_features(&g, &p).unwrap();
    assert_eq!((f.len(), f.dim()), (3, 3));
    let dir = tempfile::tempdir().unwrap();
    f.save(dir.path()).unwrap();
    assert_eq!(ConceptFeatures::<f64>::load(dir.path()).unwrap(), f);
}

#[test]
fn gradients_match_finite_differences() {
    let g = chain();
    let p = AutoencoderParams::<f64>::init(&g, &cfg(3), &mut RngStream::new(13)).unwrap();
    let msg = MessageGraph::for_params(&p, g.triples()).unwrap();
    let set = sample_negatives(g.triples(), &g, &mut RngStream::new(14)).unwrap();
    let report = grad_check(
        |tape: &mut Tape<f64>, store| -> Result<_, KgaeError> {
            let q = AutoencoderParams {
                store: store.clone(),
                ..p.clone()
            };
            let x = tape.param(store, "g")?;
            let h = rgcn_forward_tape(tape, &q, &msg, x)?;
            let r = tape.param(store, "r_diag")?;
            let logits = distmult_logits(tape, h, r, &set.samples)?;
            autoencoder_loss_tape(tape, &set.samples, logits)
        },
        &p.store,
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    for name in ["g", "r_diag", "layer1.self", "layer2.rel0", "layer1.rel3"] {
        assert!(report.get(name).is_some(), "{name}");
    }
}
