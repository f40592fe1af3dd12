#pragma once

#include <map>
#include <string>
#include <vector>

namespace ssbt {

// One row of the long-format results table.
struct ResultRow {
    std::string run_id;
    std::string dataset;
    std::string attack_kind;  // "none" for clean runs
    std::string axis;         // "" outside sweeps
    double axis_value = 0.0;
    double cda = 0.0;
    double asr = 0.0;
    double fpr = 0.0;
    uint64_t seed = 0;
};

inline constexpr const char* kResultsSchema =
    "run_id,dataset,attack_kind,axis,axis_value,cda,asr,fpr,seed";

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::string& path);

// Minimal line chart: one polyline per named series, points sorted by x.
void write_metric_svg(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::map<std::string, std::vector<std::pair<double, double>>>& series);

}  // namespace ssbt
