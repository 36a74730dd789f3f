#pragma once

#include <algorithm>
#include <cstdint>

#include "spotgcn/common.hpp"

namespace spotgcn {

// IoU of two inclusive frame-index intervals, counted in frames:
// |[a0,a1] ∩ [b0,b1]| / |[a0,a1] ∪ [b0,b1]|.
inline double interval_iou(std::int64_t a0, std::int64_t a1, std::int64_t b0, std::int64_t b1) {
  require(a0 <= a1 && b0 <= b1, Errc::invalid_argument, "inverted interval");
  const std::int64_t inter = std::min(a1, b1) - std::max(a0, b0) + 1;
  if (inter <= 0) return 0.0;
  const std::int64_t uni = (a1 - a0 + 1) + (b1 - b0 + 1) - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace spotgcn
