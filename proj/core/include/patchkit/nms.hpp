#pragma once

#include <span>

#include "patchkit/detector.hpp"

namespace patchkit {

// Drops candidates with confidence <= tau_det, then greedily keeps the most
// confident remaining candidate and suppresses same-class candidates whose IoU
// with it exceeds tau_nms. Ties go to the lower index.
DetectorOutput greedy_nms(std::span<const Detection> candidates, double tau_nms, double tau_det);

}  // namespace patchkit
