#include "patchkit/nms.hpp"

#include <algorithm>
#include <numeric>

namespace patchkit {

DetectorOutput greedy_nms(std::span<const Detection> candidates, double tau_nms, double tau_det) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (candidates[i].confidence > tau_det) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (candidates[a].confidence != candidates[b].confidence)
            return candidates[a].confidence > candidates[b].confidence;
        return a < b;
    });

    DetectorOutput out;
    std::vector<bool> suppressed(order.size(), false);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (suppressed[i]) continue;
        const Detection& keep = candidates[order[i]];
        out.detections.push_back(keep);
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            if (suppressed[j]) continue;
            const Detection& other = candidates[order[j]];
            if (other.label == keep.label && iou(keep.box, other.box) > tau_nms) suppressed[j] = true;
        }
    }
    return out;
}

}  // namespace patchkit
