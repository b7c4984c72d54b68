mod support;

use aswa_core::models::{init_embeddings, ModelKind};

#[test]
fn analytic_gradients_match_finite_differences() {
    let kg = support::five_entity_kg();
    for model in ModelKind::ALL {
        let mut params = init_embeddings(model, 5, 4, 8, 17).unwrap();
        // push the logits away from zero so the check is not trivially flat
        for x in params
            .entity
            .as_mut_slice()
            .iter_mut()
            .chain(params.relation.as_mut_slice())
        {
            *x *= 3.0;
        }
        let err = support::gradient_check(&kg, model, &params, 1e-5);
        assert!(err < 1e-4, "{model}: max relative error {err}");
    }
}
