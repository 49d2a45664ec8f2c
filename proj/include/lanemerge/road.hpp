#pragma once

#include <algorithm>
#include <cmath>

namespace lanemerge {

// Straight multi-lane road along +x. Lane 0 is the rightmost lane and lane
// centers increase in y by one lane width.
struct Road {
  int lane_count = 3;
  double lane_width = 3.7;

  double lane_center(int lane) const { return lane * lane_width; }

  int lane_of(double y) const {
    const int lane = static_cast<int>(std::lround(y / lane_width));
    return std::clamp(lane, 0, lane_count - 1);
  }

  bool has_lane(int lane) const { return lane >= 0 && lane < lane_count; }
};

}  // namespace lanemerge
