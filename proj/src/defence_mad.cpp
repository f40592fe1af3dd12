#include "ssbt/defence/mad.hpp"

#include <algorithm>
#include <cmath>

#include "ssbt/errors.hpp"

namespace ssbt::defence {

float median_upper(std::vector<float> values) {
    if (values.empty()) throw ConfigError("median_upper: empty input");
    auto mid = values.begin() + long(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

float mad(const std::vector<float>& values) {
    float med = median_upper(values);
    std::vector<float> dev(values.size());
    for (size_t i = 0; i < values.size(); ++i) dev[i] = std::fabs(values[i] - med);
    return median_upper(std::move(dev));
}

float small_side_anomaly_index(float value, const std::vector<float>& group) {
    if (group.size() < 3) return 0.0f;
    float med = median_upper(group);
    float spread = 1.4826f * mad(group);
    if (spread < 1e-12f) return 0.0f;
    return (med - value) / spread;
}

}  // namespace ssbt::defence
