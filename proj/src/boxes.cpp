#include "svd/boxes.hpp"

#include <algorithm>

namespace svd {

double iou(const Box& a, const Box& b) {
    const double ix = std::min(a[2], b[2]) - std::max(a[0], b[0]);
    const double iy = std::min(a[3], b[3]) - std::max(a[1], b[1]);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    const double uni = box_area(a) + box_area(b) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

} // namespace svd
