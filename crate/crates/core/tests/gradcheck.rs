mod common;

use common::{check_network, gradcheck_networks, random_input};
use leafcnn::network::Network;

#[test]
fn analytic_gradients_match_finite_differences() {
    for (name, spec, dropout) in gradcheck_networks() {
        assert!(spec.parameter_count().unwrap() <= 10_000, "{name} too large");
        let input_shape = spec.input.shape();
        let net = Network::init(spec, 17).unwrap();
        for (k, label) in [0usize, 1, 2].into_iter().enumerate() {
            let x = random_input(&input_shape, 100 + k as u64);
            let r = check_network(&net, &x, label, dropout, 60, 1e-3);
            assert!(r.checked > 0, "{name}: nothing checked");
            assert_eq!(r.passed, r.checked, "{name} label {label}: {:#?}", r.failures);
        }
    }
}
