mod common;

use blocklru::recurrence::ArchKind;

#[test]
fn full_model_gradients_match_finite_differences() {
    for kind in [ArchKind::Hlru, ArchKind::Bdlru] {
        for seed in [0, 1] {
            let err = common::model_gradcheck(kind, seed);
            assert!(err < 1e-4, "{kind} seed {seed}: relative error {err:e}");
        }
    }
}
