use ipgdn::graphio::{Graph, Splits};
use ipgdn::hsic::{independence_loss, independence_loss_value};
use ipgdn::layers::{disentangle_layer, RoutingGraph, RoutingSettings};
use ipgdn::tensor::{Matrix, Tape};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct LayerCase {
    n: usize,
    channels: usize,
    width: usize,
    iterations: usize,
    features: Vec<f64>,
    edges: Vec<(usize, usize)>,
    weight: Vec<f64>,
    bias: Vec<f64>,
    perm: Vec<usize>,
}

const IN_WIDTH: usize = 4;

fn layer_case() -> impl Strategy<Value = LayerCase> {
    (2usize..10, 1usize..4, 2usize..4, 1usize..5).prop_flat_map(|(n, channels, width, iterations)| {
        let out = channels * width;
        (
            prop::collection::vec(-1.0f64..1.0, n * IN_WIDTH),
            prop::collection::vec((0..n, 0..n), 0..3 * n),
            prop::collection::vec(-1.0f64..1.0, IN_WIDTH * out),
            prop::collection::vec(0.0f64..1.0, out),
            Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
        )
            .prop_map(move |(features, edges, weight, bias, perm)| LayerCase {
                n,
                channels,
                width,
                iterations,
                features,
                edges,
                weight,
                bias,
                perm,
            })
    })
}

fn run_layer(case: &LayerCase, features: Matrix, edges: &[(usize, usize)], bias: &[f64]) -> Matrix {
    let graph = Graph::new(features.clone(), edges, vec![None; case.n], 1, Splits::default()).unwrap();
    let routing = RoutingGraph::from_graph(&graph);
    let out = case.channels * case.width;
    let mut tape = Tape::new();
    let h = tape.constant(features);
    let w = tape.constant(Matrix::from_vec(IN_WIDTH, out, case.weight.clone()).unwrap());
    let b = tape.constant(Matrix::from_vec(1, out, bias.to_vec()).unwrap());
    let settings = RoutingSettings {
        channels: case.channels,
        iterations: case.iterations,
        dropout: 0.0,
        training: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = disentangle_layer(&mut tape, h, &routing, w, b, settings, &mut rng).unwrap();
    tape.value(layer.representation).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn relabeling_nodes_permutes_layer_output(case in layer_case()) {
        let features = Matrix::from_vec(case.n, IN_WIDTH, case.features.clone()).unwrap();
        let base = run_layer(&case, features.clone(), &case.edges, &case.bias);

        // Node v becomes perm[v].
        let mut moved = Matrix::zeros(case.n, IN_WIDTH);
        for v in 0..case.n {
            moved.row_mut(case.perm[v]).copy_from_slice(features.row(v));
        }
        let edges: Vec<(usize, usize)> = case.edges.iter().map(|&(u, v)| (case.perm[u], case.perm[v])).collect();
        let relabeled = run_layer(&case, moved, &edges, &case.bias);
        for v in 0..case.n {
            for (a, b) in base.row(v).iter().zip(relabeled.row(case.perm[v])) {
                prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn positive_feature_scaling_is_absorbed_without_bias(case in layer_case(), c in 0.01f64..100.0) {
        let zero_bias = vec![0.0; case.bias.len()];
        let features = Matrix::from_vec(case.n, IN_WIDTH, case.features.clone()).unwrap();
        let base = run_layer(&case, features.clone(), &case.edges, &zero_bias);
        let scaled = run_layer(&case, features.scale(c), &case.edges, &zero_bias);
        prop_assert!(base.max_abs_diff(&scaled) < 1e-10);
    }

    #[test]
    fn anchors_are_unit_or_zero(case in layer_case()) {
        let features = Matrix::from_vec(case.n, IN_WIDTH, case.features.clone()).unwrap();
        let rep = run_layer(&case, features, &case.edges, &case.bias);
        for v in 0..case.n {
            for block in rep.row(v).chunks(case.width) {
                let norm = block.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12, "{norm}");
            }
        }
    }

    #[test]
    fn tape_penalty_matches_trace_formula(
        (rows, channels, d, data) in (1usize..6, 1usize..5, 2usize..6)
            .prop_flat_map(|(r, m, d)| (Just(r), Just(m), Just(d), prop::collection::vec(-2.0f64..2.0, r * m * d))),
        pick in prop::collection::vec(any::<prop::sample::Index>(), 0..6),
    ) {
        let h = Matrix::from_vec(rows, channels * d, data).unwrap();
        let nodes: Vec<usize> = pick.iter().map(|i| i.index(rows)).collect();
        let expected = independence_loss_value(&h, channels, &nodes).unwrap();
        let mut tape = Tape::new();
        let t = tape.constant(h);
        let loss = independence_loss(&mut tape, t, channels, &nodes).unwrap();
        let got = tape.value(loss).get(0, 0);
        prop_assert!((got - expected).abs() <= 1e-10 * expected.max(1.0), "{got} vs {expected}");
        prop_assert!(got >= -1e-12);
    }
}
