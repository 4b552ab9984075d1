use super::*;
use crate::synth::{generate, SynthConfig};
use crate::util::argmax;
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synth(m: usize, n: usize, d: usize, noise: f64, seed: u64) -> crate::synth::SynthData {
    generate(&SynthConfig {
        languages: (0..m).map(|i| format!("l{i}")).collect(),
        n,
        d,
        noise,
        seed,
        shuffle: true,
    })
    .unwrap()
}

/// Fraction of source words whose best-scoring target under `a b^T` is the
/// planted translation.
fn planted_accuracy(src: &EmbeddingSpace, tgt: &EmbeddingSpace, a: &Coupling, b: &Coupling) -> f64 {
    let scores = a.matrix.dot(&b.matrix.t());
    let hits = scores
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(j, row)| {
            let k = argmax(row.iter().copied()).unwrap();
            let id = |w: &str| w.split('_').nth(1).unwrap().to_string();
            id(&src.words()[*j]) == id(&tgt.words()[k])
        })
        .count();
    hits as f64 / src.len() as f64
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[test]
fn gw_initialization_recovers_planted_isometry() {
    let data = synth(2, 80, 8, 1e-3, 1);
    let state = gw_initialize(&data.spaces, &PipelineConfig::default()).unwrap();
    assert_eq!(state.maps[0], OrthogonalMap::identity(8));
    let acc = planted_accuracy(&state.spaces[1], &state.spaces[0], &state.couplings[1], &state.couplings[0]);
    assert!(acc >= 0.95, "{acc}");
    assert_eq!(state.gw_reports.len(), 1);
}

#[test]
fn refinement_aligns_synthetic_languages() {
    let data = synth(3, 120, 10, 1e-2, 2);
    let cfg = PipelineConfig {
        outer_iters: 5,
        ..Default::default()
    };
    let state = align(&data.spaces, &cfg).unwrap();
    assert!(state.history.len() <= 5);
    for i in 0..3 {
        for k in 0..3 {
            if i != k {
                let acc = planted_accuracy(&state.spaces[i], &state.spaces[k], &state.couplings[i], &state.couplings[k]);
                assert!(acc >= 0.95, "{i}->{k}: {acc}");
            }
        }
    }
    for (i, q) in state.maps.iter().enumerate() {
        assert!(q.orthogonality_error() <= ORTHOGONALITY_TOLERANCE);
        let expected = q.apply(state.centered(i).view());
        assert!(max_abs(&(&expected - state.spaces[i].vectors())) <= 1e-8);
    }
    for w in state.history.windows(2) {
        assert!(w[1].objective <= w[0].objective * 1.01, "{:?}", state.history);
    }
}

#[test]
fn identical_languages_are_a_fixed_point() {
    let data = synth(1, 40, 5, 0.0, 3);
    let space = &data.spaces[0];
    let copy = |tag: &str| {
        EmbeddingSpace::new(tag, space.words().to_vec(), space.vectors().clone()).unwrap()
    };
    let spaces = vec![copy("a"), copy("b"), copy("c")];
    let cfg = PipelineConfig {
        outer_iters: 3,
        early_stop: 0.0,
        ot: SinkhornConfig {
            epsilon: crate::ot::Epsilon::MedianRelative(1e-3),
            ..Default::default()
        },
        ..Default::default()
    };
    let init = gw_initialize(&spaces, &cfg).unwrap();
    let first = barycenter_align(init, &PipelineConfig { outer_iters: 1, ..cfg.clone() }).unwrap();
    let y = first.barycenter.as_ref().unwrap();
    let cost = squared_euclidean_cost(first.spaces[0].vectors().view(), y.support.view()).unwrap();
    let eps = 1e-3 * crate::ot::median(cost.iter().copied());
    let slack = eps * ((space.len() * y.len()) as f64).ln();
    assert!(first.history[0].objective <= slack, "{} vs {slack}", first.history[0].objective);
    let later = barycenter_align(first.clone(), &cfg).unwrap();
    for (a, b) in first.maps.iter().zip(&later.maps) {
        assert!(max_abs(&(a.matrix() - b.matrix())) <= 1e-6);
    }
}

#[test]
fn transitivity_of_composed_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = synth(3, 20, 6, 1e-2, 4);
    let mut state = gw_initialize(&data.spaces, &PipelineConfig::default()).unwrap();
    for q in state.maps.iter_mut() {
        *q = random_orthogonal(6, &mut rng);
    }
    let via = state.map_between(0, 1).dot(&state.map_between(1, 2));
    assert!(max_abs(&(&via - &state.map_between(0, 2))) <= 1e-12);
}

#[test]
fn pipeline_rejects_bad_input() {
    let data = synth(2, 10, 3, 1e-2, 5);
    assert!(gw_initialize(&data.spaces[..1], &PipelineConfig::default()).is_err());
    let bad = PipelineConfig {
        pivot_index: 2,
        ..Default::default()
    };
    assert!(gw_initialize(&data.spaces, &bad).is_err());
    let other = synth(1, 10, 4, 1e-2, 6);
    let mixed = vec![data.spaces[0].clone(), other.spaces[0].clone()];
    assert!(gw_initialize(&mixed, &PipelineConfig::default()).is_err());
    let dup = vec![data.spaces[0].clone(), data.spaces[0].clone()];
    assert!(gw_initialize(&dup, &PipelineConfig::default()).is_err());
}

fn perm_coupling(n: usize) -> Coupling {
    let mass = ndarray::Array1::from_elem(n, 1.0 / n as f64);
    Coupling {
        matrix: Array2::from_diag(&mass),
        row_marginal: mass.clone(),
        col_marginal: mass,
    }
}

#[test]
fn arithmetic_mean_closed_forms() {
    let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
    let id = OrthogonalMap::identity(2);
    let single = arithmetic_mean_pivot(&[x.view()], &[perm_coupling(3)], std::slice::from_ref(&id)).unwrap();
    assert_eq!(single, x);
    let neg = -&x;
    let mean = arithmetic_mean_pivot(&[x.view(), neg.view()], &[perm_coupling(3), perm_coupling(3)], &[id.clone(), id.clone()])
        .unwrap();
    assert!(max_abs(&mean) == 0.0);
}

#[test]
fn arithmetic_mean_collapses_a_bimodal_pair() {
    // Two 1-d languages with the same three words; the second reflects the
    // first. The mean pivot is the entrywise average and collapses the two
    // clusters onto the origin, while the Wasserstein barycenter keeps them.
    let a = array![[-2.0], [-1.8], [2.0]];
    let b = array![[2.0], [1.8], [-2.0]];
    let id = OrthogonalMap::identity(1);
    let mean = arithmetic_mean_pivot(&[a.view(), b.view()], &[perm_coupling(3), perm_coupling(3)], &[id.clone(), id])
        .unwrap();
    assert!(max_abs(&(&mean - &((&a + &b) / 2.0))) == 0.0);
    let inputs = [DiscreteDistribution::uniform(a.clone()), DiscreteDistribution::uniform(b.clone())];
    let bary = crate::barycenter::compute_barycenter(
        &inputs,
        &BarycenterConfig {
            support_size: Some(3),
            optimize_weights: false,
            restarts: 5,
            ..Default::default()
        },
        &SinkhornConfig {
            epsilon: crate::ot::Epsilon::MedianRelative(1e-3),
            ..Default::default()
        },
    )
    .unwrap();
    let mut y: Vec<f64> = bary.distribution.support.column(0).to_vec();
    y.sort_by(f64::total_cmp);
    // sorted quantiles (-2, -1.8, 2) and (-2, 1.8, 2) average to (-2, 0, 2)
    assert!((y[0] + 2.0).abs() < 1e-3 && y[1].abs() < 1e-3 && (y[2] - 2.0).abs() < 1e-3, "{y:?}");
    // every word of the mean pivot sits at the origin, so nearest neighbours
    // are all ties; the barycenter keeps three separated points
    assert!(mean.iter().all(|v| v.abs() < 1e-12));
    assert!(y[1] - y[0] > 1.0 && y[2] - y[1] > 1.0);
}

#[test]
fn tree_spec_round_trip() {
    let spec: TreeSpec = TreeSpec::INDO_EUROPEAN.parse().unwrap();
    assert_eq!(spec.to_string(), TreeSpec::INDO_EUROPEAN);
    assert_eq!(spec.leaves(), vec!["en", "de", "fr", "it", "es", "pt"]);
    assert_eq!(TreeSpec::preset_or_inline("indo-european").unwrap(), spec);
    assert_eq!(" ( a , b ) ".parse::<TreeSpec>().unwrap(), TreeSpec::star(&["a", "b"]));
    for bad in ["(a,b", "(a,,b)", "a,b", "()", "(a,b))"] {
        assert!(bad.parse::<TreeSpec>().is_err(), "{bad}");
    }
}

#[test]
fn tree_must_cover_languages() {
    let data = synth(3, 10, 3, 1e-2, 7);
    let cfg = PipelineConfig::default();
    for bad in ["(l0,l1)", "(l0,l1,l2,l3)", "(l0,(l1,l1),l2)", "l0"] {
        let spec: TreeSpec = bad.parse().unwrap();
        assert!(matches!(hierarchical_align(&data.spaces, &spec, &cfg), Err(Error::Tree(_))), "{bad}");
    }
}

#[test]
fn star_tree_matches_flat_alignment() {
    let data = synth(3, 60, 6, 1e-2, 8);
    let cfg = PipelineConfig {
        outer_iters: 3,
        ..Default::default()
    };
    let flat = align(&data.spaces, &cfg).unwrap();
    let tree = hierarchical_align(&data.spaces, &TreeSpec::star(&["l0", "l1", "l2"]), &cfg).unwrap();
    tree.validate().unwrap();
    let via_tree = translate_via_tree(&tree, "l0", "l2").unwrap();
    let direct = flat.couplings[0].matrix.dot(&flat.couplings[2].matrix.t());
    let direct = &direct / direct.sum();
    assert!(max_abs(&(&via_tree.matrix - &direct)) <= 1e-9);
    let same = translate_via_tree(&tree, "l1", "l1").unwrap();
    assert_eq!(same.matrix, Array2::from_diag(&flat.masses[1]));
    assert!(translate_via_tree(&tree, "l1", "zz").is_err());
}

#[test]
fn two_family_tree_translates_across_families() {
    let data = synth(4, 80, 8, 1e-2, 9);
    let cfg = PipelineConfig {
        outer_iters: 3,
        ..Default::default()
    };
    let spec: TreeSpec = "((l0,l1),(l2,l3))".parse().unwrap();
    let tree = hierarchical_align(&data.spaces, &spec, &cfg).unwrap();
    tree.validate().unwrap();
    assert_eq!(tree.nodes.len(), 7);
    let joint = translate_via_tree(&tree, "l0", "l3").unwrap();
    assert!((joint.matrix.sum() - 1.0).abs() < 1e-12);
    let (src, tgt) = (&data.spaces[0], &data.spaces[3]);
    let hits = joint
        .matrix
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(j, row)| {
            let k = argmax(row.iter().copied()).unwrap();
            src.words()[*j].split('_').nth(1) == tgt.words()[k].split('_').nth(1)
        })
        .count();
    assert!(hits as f64 / 80.0 >= 0.9, "{hits}");
    for n in 0..tree.nodes.len() {
        assert!(tree.map_to_root(n).orthogonality_error() <= ORTHOGONALITY_TOLERANCE);
    }
}
