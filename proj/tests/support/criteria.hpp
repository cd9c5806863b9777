#pragma once

// Property checks shared by the unit tests and the acceptance binary. Each one
// runs a full randomized suite and reports the worst value it saw.

#include <string>

namespace gazeseg::criteria {

struct Check {
    bool pass = false;
    double worst = 0.0;  // largest error, or failure count, depending on the check
    std::string detail;
};

// Finite differences over every tensor op, the losses and the composed MGP head.
Check gradient_suite(int seeds = 20);
// mgp() against the straight-line transcription on random parameterizations.
Check mgp_oracle(int cases = 10);
// Filter accuracy on traces with known labels, then threshold monotonicity.
Check filter_accuracy(int traces = 50);
Check filter_monotonicity(int traces = 100);
// Background preservation, identity mix and label consistency on random pairs.
Check gazemix_invariants(int pairs = 100);
Check bilinear_hand_oracle();
// l_seg / l_all algebra and CE of a uniform softmax.
Check loss_algebra(int cases = 50);
// Teacher blend identity after every step of a short run, plus gamma 0 and 1.
Check ema_contract(int steps = 50);
// dice / jaccard / hd95 / asd against exhaustive loops on random 16x16 masks.
Check metrics_oracle(int pairs = 50);

}  // namespace gazeseg::criteria
