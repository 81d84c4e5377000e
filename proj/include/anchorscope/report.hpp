#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "discovery.hpp"
#include "evalqa.hpp"

namespace anchorscope {
namespace report {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// All artifacts are deterministic functions of their inputs (no timestamps,
/// fixed float formatting), so reruns with one config are byte-identical.

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail("cannot open for writing: " + path.string());
    f << content;
    if (!f) fail("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::string mlp_csv(const std::vector<discovery::MlpLayerDiff>& mlp) {
    std::string out = "layer,mean_diff,count\n";
    for (const auto& m : mlp)
        out += std::to_string(m.layer) + "," + format_fixed(m.mean_diff, 6) + "," +
               std::to_string(m.count) + "\n";
    return out;
}

/// Matrix layout: one row per layer, one column per head.
inline std::string head_csv(const std::vector<discovery::HeadDiff>& heads, int n_layer,
                            int n_head) {
    if (static_cast<int>(heads.size()) != n_layer * n_head)
        fail("head diff list does not fill an L x H matrix");
    std::string out = "layer";
    for (int h = 0; h < n_head; ++h) out += ",h" + std::to_string(h);
    out += "\n";
    for (int l = 0; l < n_layer; ++l) {
        out += std::to_string(l);
        for (int h = 0; h < n_head; ++h)
            out += "," + format_fixed(heads[static_cast<std::size_t>(l * n_head + h)].mean_diff, 6);
        out += "\n";
    }
    return out;
}

inline std::string eval_csv(const std::vector<evalqa::EvalResult>& rows) {
    std::string out =
        "schema_version,model,dataset,split,condition,count,anchored_rate,accuracy,other_rate\n";
    for (const auto& r : rows)
        out += std::to_string(evalqa::kResultSchemaVersion) + "," + r.model + "," + r.dataset +
               "," + r.split + "," + r.condition + "," + std::to_string(r.count) + "," +
               format_fixed(r.anchored_rate, 2) + "," + format_fixed(r.accuracy, 2) + "," +
               format_fixed(r.other_rate, 2) + "\n";
    return out;
}

inline nlohmann::ordered_json loci_json(const std::string& model,
                                        const std::vector<discovery::DatasetScan>& scans) {
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["model"] = model;
    j["datasets"] = nlohmann::ordered_json::array();
    for (const auto& ds : scans) {
        nlohmann::ordered_json d;
        d["name"] = ds.dataset;
        d["threshold"] = ds.threshold;
        d["total"] = ds.total;
        d["anchored"] = ds.anchored;
        d["anchored_rate"] = ds.anchored_rate();
        d["flagged_layers"] = ds.flagged_layers;
        d["loci"] = nlohmann::ordered_json::array();
        for (const auto& l : ds.loci)
            d["loci"].push_back({{"layer", l.layer},
                                 {"dim", l.dim},
                                 {"frequency", l.frequency},
                                 {"mean_contrib", l.mean_contrib},
                                 {"mean_diff", l.mean_diff},
                                 {"selected", l.selected},
                                 {"samples", l.samples}});
        j["datasets"].push_back(std::move(d));
    }
    return j;
}

inline nlohmann::ordered_json circuit_json(const discovery::BiasCircuit& c) {
    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["threshold"] = c.threshold;
    j["dataset_count"] = c.dataset_count;
    j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : c.nodes) {
        nlohmann::ordered_json node;
        node["kind"] = n.is_head ? "head" : "mlp";
        node["layer"] = n.layer;
        if (n.is_head) node["head"] = n.head;
        node["score"] = n.score;
        node["probability"] = n.probability;
        j["nodes"].push_back(std::move(node));
    }
    return j;
}

inline void expect_schema(const nlohmann::json& j, const std::string& what) {
    if (!j.contains("schema_version"))
        fail(what + " has no schema_version field");
    if (j.at("schema_version").get<int>() != kSchemaVersion)
        fail(what + " has schema version " + j.at("schema_version").dump() + "; this tool reads " +
             std::to_string(kSchemaVersion) + " (regenerate the run directory)");
}

namespace detail {

/// Symmetric diverging color scale centered at zero: blue for negative,
/// white at zero, red for positive.
inline std::string diverging_color(double v, double maxabs) {
    double t = maxabs > 0.0 ? v / maxabs : 0.0;
    t = std::max(-1.0, std::min(1.0, t));
    int r = 255, g = 255, b = 255;
    if (t >= 0) {
        g = static_cast<int>(255 - 191 * t);
        b = static_cast<int>(255 - 207 * t);
    } else {
        r = static_cast<int>(255 + 204 * t);
        g = static_cast<int>(255 + 153 * t);
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

} // namespace detail

/// Standalone SVG heatmap; `values` is row-major rows x cols.
inline std::string heatmap_svg(const std::vector<double>& values, int rows, int cols,
                               const std::string& title, const std::string& col_prefix) {
    if (static_cast<int>(values.size()) != rows * cols) fail("heatmap values do not fill the grid");
    const int cell = 22, left = 56, top = 40, gap = 2;
    const int width = left + cols * cell + 120;
    const int height = top + rows * cell + 24;
    double maxabs = 0.0;
    for (double v : values) maxabs = std::max(maxabs, std::abs(v));

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"11\">\n";
    s << "<text x=\"" << left << "\" y=\"16\" font-size=\"13\">" << title << "</text>\n";
    for (int c = 0; c < cols; ++c)
        s << "<text x=\"" << left + c * cell + 3 << "\" y=\"" << top - 6 << "\">" << col_prefix
          << c << "</text>\n";
    for (int r = 0; r < rows; ++r) {
        s << "<text x=\"8\" y=\"" << top + r * cell + 15 << "\">L" << r << "</text>\n";
        for (int c = 0; c < cols; ++c) {
            const double v = values[static_cast<std::size_t>(r * cols + c)];
            s << "<rect x=\"" << left + c * cell << "\" y=\"" << top + r * cell << "\" width=\""
              << cell - gap << "\" height=\"" << cell - gap << "\" fill=\""
              << detail::diverging_color(v, maxabs) << "\"><title>" << "L" << r << " " << col_prefix
              << c << ": " << format_fixed(v, 4) << "</title></rect>\n";
        }
    }
    s << "<text x=\"" << left + cols * cell + 10 << "\" y=\"" << top + 15
      << "\" fill=\"#400000\">+" << format_fixed(maxabs, 2) << "</text>\n";
    s << "<text x=\"" << left + cols * cell + 10 << "\" y=\"" << top + 35
      << "\" fill=\"#000040\">-" << format_fixed(maxabs, 2) << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

inline std::string heatmap_svg(const std::vector<discovery::HeadDiff>& heads, int n_layer,
                               int n_head, const std::string& title) {
    std::vector<double> v;
    v.reserve(heads.size());
    for (const auto& h : heads) v.push_back(h.mean_diff);
    return heatmap_svg(v, n_layer, n_head, title, "H");
}

inline std::string heatmap_svg(const std::vector<discovery::MlpLayerDiff>& mlp,
                               const std::string& title) {
    std::vector<double> v;
    v.reserve(mlp.size());
    for (const auto& m : mlp) v.push_back(m.mean_diff);
    return heatmap_svg(v, static_cast<int>(mlp.size()), 1, title, "MLP");
}

/// Parse a head_diff.csv matrix back into values (for report regeneration).
inline std::vector<std::vector<double>> parse_csv_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream ss(text);
    std::string line;
    bool header = true;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        bool label = true;
        while (std::getline(ls, cell, ',')) {
            if (label) {
                label = false;
                continue;
            }
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail("bad numeric cell in CSV: " + cell);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) fail("CSV matrix has no data rows");
    for (const auto& r : rows)
        if (r.size() != rows.front().size()) fail("CSV matrix rows have uneven width");
    return rows;
}

} // namespace report
} // namespace anchorscope
