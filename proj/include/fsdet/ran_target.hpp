#pragma once

#include <array>

namespace fsdet {

/// RAN regression target (c, dx, dy, sw, sh), all channels in [0,1].
/// dx, dy hold half of the center-offset term so every channel shares the
/// logistic output range.
struct RanTarget {
    double c = 0.0;
    double dx = 0.5;
    double dy = 0.5;
    double sw = 0.5;
    double sh = 0.5;

    std::array<double, 5> as_array() const { return {c, dx, dy, sw, sh}; }
    static RanTarget from_array(const std::array<double, 5>& a) { return {a[0], a[1], a[2], a[3], a[4]}; }

    bool operator==(const RanTarget&) const = default;
};

}  // namespace fsdet
