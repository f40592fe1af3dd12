#pragma once

#include <vector>

namespace ssbt::defence {

// Median is the n/2-th order statistic (upper median for even sizes), which
// keeps anomaly indices reproducible across platforms.
float median_upper(std::vector<float> values);

// Median absolute deviation around the upper median.
float mad(const std::vector<float>& values);

// Positive when `value` is abnormally small within its group:
// (median - value) / (1.4826 * MAD). Returns 0 for degenerate groups
// (fewer than 3 values or zero spread).
float small_side_anomaly_index(float value, const std::vector<float>& group);

}  // namespace ssbt::defence
