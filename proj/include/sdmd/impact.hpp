#pragma once

#include "sdmd/csv.hpp"
#include "sdmd/error.hpp"
#include "sdmd/structured.hpp"
#include "sdmd/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sdmd {

/// Normalized Frobenius impact: ||block||_F / (p * q).
inline double impact_score(const Matrix& block)
{
    if (block.rows() < 1 || block.cols() < 1) throw data_error("impact_score: empty matrix");
    if (!block.allFinite()) throw data_error("impact_score: non-finite entries");
    return block.stableNorm() / (static_cast<double>(block.rows()) * static_cast<double>(block.cols()));
}

/**
 * When a target row counts as impacted. A row qualifies if its largest
 * absolute entry is >= the threshold and nonzero; relative thresholds are
 * a fraction of the largest absolute entry of the whole block.
 */
struct ThresholdRule {
    enum class Kind { absolute, relative };
    Kind kind = Kind::relative;
    double value = 0.01;

    static ThresholdRule absolute(double tau) { return {Kind::absolute, tau}; }
    static ThresholdRule relative(double rho) { return {Kind::relative, rho}; }

    void validate() const
    {
        if (!std::isfinite(value)) throw config_error("threshold rule parameter must be finite");
        if (kind == Kind::absolute && value < 0.0) throw config_error("absolute threshold must be >= 0");
        if (kind == Kind::relative && !(value > 0.0 && value <= 1.0))
            throw config_error("relative threshold must be in (0, 1]");
    }

    bool operator==(const ThresholdRule&) const = default;
};

inline nlohmann::json to_json(const ThresholdRule& r)
{
    return {{r.kind == ThresholdRule::Kind::absolute ? "absolute" : "relative", r.value}};
}

inline ThresholdRule threshold_rule_from_json(const nlohmann::json& j)
{
    if (j.is_object() && j.size() == 1) {
        const auto& [key, val] = *j.items().begin();
        if (!val.is_number()) throw config_error("threshold rule value must be a number");
        ThresholdRule r;
        if (key == "absolute") r = ThresholdRule::absolute(val.get<double>());
        else if (key == "relative") r = ThresholdRule::relative(val.get<double>());
        else throw config_error("unknown threshold rule '" + key + "'");
        r.validate();
        return r;
    }
    throw config_error("threshold rule must be {\"relative\": rho} or {\"absolute\": tau}");
}

inline Labels impacted_targets(const Matrix& block, const Labels& row_labels, const ThresholdRule& rule)
{
    rule.validate();
    if (static_cast<Eigen::Index>(row_labels.size()) != block.rows())
        throw data_error("impacted_targets: " + std::to_string(row_labels.size()) + " labels for " +
                         std::to_string(block.rows()) + " rows");
    Labels out;
    if (block.size() == 0) return out;
    const double tau = rule.kind == ThresholdRule::Kind::absolute ? rule.value : rule.value * block.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
        const double m = block.row(i).cwiseAbs().maxCoeff();
        if (m > 0.0 && m >= tau) out.push_back(row_labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

struct ImpactEntry {
    std::string block_id;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    double fro_norm = 0.0;
    double score = 0.0;
    Labels impacted_targets;
    std::size_t impacted_count = 0;
};

struct ImpactReport {
    std::vector<ImpactEntry> entries;
    ThresholdRule rule;
    /// Block ids by descending score; ties by ascending block id.
    std::vector<std::string> ranking;

    const ImpactEntry& entry(const std::string& id) const
    {
        for (const auto& e : entries)
            if (e.block_id == id) return e;
        throw config_error("no impact entry for block '" + id + "'");
    }
};

/// A labeled block selected for impact analysis.
struct NamedBlock {
    std::string id;
    Labels row_labels;
    Labels col_labels;
    Matrix block;
};

inline ImpactReport impact_report(const std::vector<NamedBlock>& blocks, const ThresholdRule& rule)
{
    rule.validate();
    if (blocks.empty()) throw data_error("impact_report: no learned blocks");
    ImpactReport rep;
    rep.rule = rule;
    for (const auto& b : blocks) {
        ImpactEntry e;
        e.block_id = b.id;
        e.rows = b.block.rows();
        e.cols = b.block.cols();
        e.fro_norm = b.block.stableNorm();
        e.score = impact_score(b.block);
        e.impacted_targets = impacted_targets(b.block, b.row_labels, rule);
        e.impacted_count = e.impacted_targets.size();
        rep.entries.push_back(std::move(e));
    }
    std::vector<const ImpactEntry*> order;
    for (const auto& e : rep.entries) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const ImpactEntry* a, const ImpactEntry* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->block_id < b->block_id;
    });
    for (const auto* e : order) rep.ranking.push_back(e->block_id);
    return rep;
}

/**
 * Resolves a block selector against a structured model: "stage" picks the
 * stage's composite learned block, "stage:group" one group's column slice.
 */
inline NamedBlock select_block(const StructuredModel& model, const std::string& selector)
{
    const auto colon = selector.find(':');
    const std::string stage = selector.substr(0, colon);
    if (!model.has_stage(stage)) {
        std::string avail;
        for (const auto& s : model.stages) avail += (avail.empty() ? "" : ", ") + s.spec.stage_id;
        throw config_error("unknown block '" + selector + "'; available blocks: " + avail);
    }
    const auto& st = model.stage(stage);
    if (colon == std::string::npos) return {selector, st.row_labels, st.col_labels, st.block};
    const std::string group = selector.substr(colon + 1);
    if (!st.learned(group)) {
        std::string avail;
        for (const auto& sp : st.spans) avail += (avail.empty() ? "" : ", ") + stage + ":" + std::get<0>(sp);
        throw config_error("unknown block '" + selector + "'; stage '" + stage + "' has groups: " + avail);
    }
    return {selector, st.row_labels, st.group_labels(group), st.group_block(group)};
}

/// One entry per learned stage block, or per selector when given.
inline ImpactReport impact_report(const StructuredModel& model, const ThresholdRule& rule,
                                  const std::vector<std::string>& selectors = {})
{
    std::vector<NamedBlock> blocks;
    if (selectors.empty()) {
        for (const auto& s : model.stages) blocks.push_back(select_block(model, s.spec.stage_id));
    } else {
        for (const auto& sel : selectors) blocks.push_back(select_block(model, sel));
    }
    return impact_report(blocks, rule);
}

inline nlohmann::json to_json(const ImpactReport& rep)
{
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : rep.entries) {
        entries.push_back({{"block_id", e.block_id},
                           {"rows", e.rows},
                           {"cols", e.cols},
                           {"fro_norm", e.fro_norm},
                           {"score", e.score},
                           {"impacted_targets", e.impacted_targets},
                           {"impacted_count", e.impacted_count}});
    }
    return {{"entries", entries}, {"threshold_rule", to_json(rep.rule)}, {"ranking", rep.ranking}};
}

// ---------------------------------------------------------------------------
// Heatmaps

struct HeatmapOptions {
    /// Symmetric color bound; unset means +-max|entry| (or +-1 for an all-zero matrix).
    std::optional<double> bound;
    std::string title;
    /// Free-form text embedded as SVG metadata (e.g. config hash).
    std::string metadata;
};

namespace detail {

inline std::string xml_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

inline std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

} // namespace detail

/// Blue-white-red color for t in [-1, 1] (clamped), white at 0.
inline std::string diverging_color(double t)
{
    t = std::clamp(t, -1.0, 1.0);
    int r = 255, g = 255, b = 255;
    const double a = std::abs(t);
    if (t > 0) {
        r = static_cast<int>(std::lround(255 + a * (178 - 255)));
        g = static_cast<int>(std::lround(255 + a * (24 - 255)));
        b = static_cast<int>(std::lround(255 + a * (43 - 255)));
    } else if (t < 0) {
        r = static_cast<int>(std::lround(255 + a * (33 - 255)));
        g = static_cast<int>(std::lround(255 + a * (102 - 255)));
        b = static_cast<int>(std::lround(255 + a * (172 - 255)));
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

/// Standalone SVG heatmap: one cell per entry, row/column labels and a color bar.
inline std::string heatmap_svg(const csv::LabeledMatrix& lm, const HeatmapOptions& opt = {})
{
    const Matrix& m = lm.values;
    if (m.size() == 0) throw data_error("heatmap: empty matrix");
    if (static_cast<Eigen::Index>(lm.row_labels.size()) != m.rows() ||
        static_cast<Eigen::Index>(lm.col_labels.size()) != m.cols())
        throw data_error("heatmap: label counts do not match matrix shape");
    double bound = opt.bound ? *opt.bound : m.cwiseAbs().maxCoeff();
    if (!(bound > 0.0) || !std::isfinite(bound)) bound = 1.0;

    const auto longest = [](const Labels& ls) {
        std::size_t n = 1;
        for (const auto& l : ls) n = std::max(n, l.size());
        return static_cast<double>(n);
    };
    const double cell = std::clamp(600.0 / static_cast<double>(std::max(m.rows(), m.cols())), 4.0, 24.0);
    const double font = std::max(3.0, 0.75 * cell);
    const double left = 10.0 + 0.6 * font * longest(lm.row_labels);
    const double top = 30.0 + 0.6 * font * longest(lm.col_labels);
    const double gw = cell * static_cast<double>(m.cols());
    const double gh = cell * static_cast<double>(m.rows());
    const double bar_x = left + gw + 20.0;
    const double bar_h = std::max(gh, 100.0);
    const double width = bar_x + 20.0 + 80.0;
    const double height = top + bar_h + 20.0;

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::fmt("%.1f", width) << "\" height=\""
       << detail::fmt("%.1f", height) << "\" font-family=\"sans-serif\">\n";
    if (!opt.metadata.empty()) os << "<metadata>" << detail::xml_escape(opt.metadata) << "</metadata>\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    if (!opt.title.empty())
        os << "<text x=\"" << detail::fmt("%.1f", left) << "\" y=\"16\" font-size=\"13\">"
           << detail::xml_escape(opt.title) << "</text>\n";

    os << "<g shape-rendering=\"crispEdges\">\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            os << "<rect x=\"" << detail::fmt("%.2f", left + cell * static_cast<double>(j)) << "\" y=\""
               << detail::fmt("%.2f", top + cell * static_cast<double>(i)) << "\" width=\"" << detail::fmt("%.2f", cell)
               << "\" height=\"" << detail::fmt("%.2f", cell) << "\" fill=\"" << diverging_color(m(i, j) / bound)
               << "\"><title>" << detail::xml_escape(lm.row_labels[static_cast<std::size_t>(i)]) << " / "
               << detail::xml_escape(lm.col_labels[static_cast<std::size_t>(j)]) << ": " << format_double(m(i, j))
               << "</title></rect>\n";
        }
    }
    os << "</g>\n";

    for (Eigen::Index i = 0; i < m.rows(); ++i)
        os << "<text x=\"" << detail::fmt("%.2f", left - 4.0) << "\" y=\""
           << detail::fmt("%.2f", top + cell * (static_cast<double>(i) + 0.5) + 0.35 * font) << "\" font-size=\""
           << detail::fmt("%.2f", font) << "\" text-anchor=\"end\">"
           << detail::xml_escape(lm.row_labels[static_cast<std::size_t>(i)]) << "</text>\n";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double x = left + cell * (static_cast<double>(j) + 0.5) + 0.35 * font;
        const double y = top - 4.0;
        os << "<text x=\"" << detail::fmt("%.2f", x) << "\" y=\"" << detail::fmt("%.2f", y) << "\" font-size=\""
           << detail::fmt("%.2f", font) << "\" transform=\"rotate(-90 " << detail::fmt("%.2f", x) << ' '
           << detail::fmt("%.2f", y) << ")\">" << detail::xml_escape(lm.col_labels[static_cast<std::size_t>(j)])
           << "</text>\n";
    }

    // Color bar: +bound at the top, -bound at the bottom.
    os << "<defs><linearGradient id=\"divbar\" x1=\"0\" y1=\"0\" x2=\"0\" y2=\"1\">"
       << "<stop offset=\"0\" stop-color=\"" << diverging_color(1.0) << "\"/>"
       << "<stop offset=\"0.5\" stop-color=\"" << diverging_color(0.0) << "\"/>"
       << "<stop offset=\"1\" stop-color=\"" << diverging_color(-1.0) << "\"/>"
       << "</linearGradient></defs>\n";
    os << "<rect x=\"" << detail::fmt("%.2f", bar_x) << "\" y=\"" << detail::fmt("%.2f", top)
       << "\" width=\"16\" height=\"" << detail::fmt("%.2f", bar_h)
       << "\" fill=\"url(#divbar)\" stroke=\"#333333\" stroke-width=\"0.5\"/>\n";
    const double ticks[3] = {bound, 0.0, -bound};
    for (int k = 0; k < 3; ++k) {
        const double y = top + bar_h * 0.5 * k;
        os << "<text x=\"" << detail::fmt("%.2f", bar_x + 20.0) << "\" y=\"" << detail::fmt("%.2f", y + 4.0)
           << "\" font-size=\"10\">" << detail::fmt("%.3g", ticks[k]) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void render_heatmap(const csv::LabeledMatrix& lm, const std::string& path, const HeatmapOptions& opt = {})
{
    const std::string doc = heatmap_svg(lm, opt);
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write heatmap to '" + path + "'");
    out << doc;
    if (!out) throw io_error("failed writing heatmap to '" + path + "'");
}

} // namespace sdmd
