#include "ssbt/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ssbt/errors.hpp"

namespace ssbt {

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("write_results_csv: cannot create " + path);
    out << kResultsSchema << "\n";
    for (const auto& r : rows)
        out << r.run_id << ',' << r.dataset << ',' << r.attack_kind << ',' << r.axis << ','
            << r.axis_value << ',' << r.cda << ',' << r.asr << ',' << r.fpr << ',' << r.seed
            << "\n";
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_results_csv: cannot open " + path);
    std::string header;
    std::getline(in, header);
    if (header != kResultsSchema)
        throw IoError("read_results_csv: schema mismatch in " + path + " (got '" + header + "')");
    std::vector<ResultRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ResultRow r;
        std::string field;
        auto next = [&]() {
            if (!std::getline(ls, field, ',')) throw IoError("read_results_csv: short row");
            return field;
        };
        r.run_id = next();
        r.dataset = next();
        r.attack_kind = next();
        r.axis = next();
        r.axis_value = std::stod(next());
        r.cda = std::stod(next());
        r.asr = std::stod(next());
        r.fpr = std::stod(next());
        r.seed = std::stoull(next());
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_metric_svg(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::map<std::string, std::vector<std::pair<double, double>>>& series) {
    std::ofstream out(path);
    if (!out) throw IoError("write_metric_svg: cannot create " + path);

    const int width = 560, height = 400, ml = 60, mr = 20, mt = 40, mb = 50;
    const int pw = width - ml - mr, ph = height - mt - mb;

    double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = 1e-9;
    for (const auto& [name, pts] : series)
        for (auto [x, y] : pts) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymax = std::max(ymax, y);
        }
    if (series.empty() || xmin > xmax) {
        xmin = 0;
        xmax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    ymax = std::max(1.0, ymax);  // metrics live in [0,1]

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << width / 2 << "' y='22' text-anchor='middle' font-size='15'>" << title
        << "</text>\n";
    // axes
    out << "<line x1='" << ml << "' y1='" << mt + ph << "' x2='" << ml + pw << "' y2='" << mt + ph
        << "' stroke='black'/>\n";
    out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + ph
        << "' stroke='black'/>\n";
    for (int i = 0; i <= 5; ++i) {
        double y = ymin + (ymax - ymin) * i / 5.0;
        out << "<text x='" << ml - 6 << "' y='" << py(y) + 4
            << "' text-anchor='end' font-size='10'>" << y << "</text>\n";
        out << "<line x1='" << ml << "' y1='" << py(y) << "' x2='" << ml + pw << "' y2='" << py(y)
            << "' stroke='#dddddd'/>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        double x = xmin + (xmax - xmin) * i / 5.0;
        out << "<text x='" << px(x) << "' y='" << mt + ph + 16
            << "' text-anchor='middle' font-size='10'>" << x << "</text>\n";
    }
    out << "<text x='" << ml + pw / 2 << "' y='" << height - 12
        << "' text-anchor='middle' font-size='12'>" << x_label << "</text>\n";
    out << "<text x='16' y='" << mt + ph / 2
        << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 " << mt + ph / 2
        << ")'>" << y_label << "</text>\n";

    int idx = 0;
    for (const auto& [name, pts] : series) {
        auto sorted = pts;
        std::sort(sorted.begin(), sorted.end());
        const char* color = palette[idx % 5];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (auto [x, y] : sorted) out << px(x) << "," << py(y) << " ";
        out << "'/>\n";
        for (auto [x, y] : sorted)
            out << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='3' fill='" << color
                << "'/>\n";
        out << "<text x='" << ml + pw - 6 << "' y='" << mt + 14 + 14 * idx
            << "' text-anchor='end' font-size='11' fill='" << color << "'>" << name
            << "</text>\n";
        idx++;
    }
    out << "</svg>\n";
}

}  // namespace ssbt
