#pragma once

#include "sdmd/csv.hpp"
#include "sdmd/error.hpp"
#include "sdmd/rng.hpp"
#include "sdmd/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

namespace sdmd {

/// Where a sample sits in the experimental design.
struct SampleKey {
    std::string condition;
    int timepoint = 0;
    int replicate = 0;

    auto operator<=>(const SampleKey&) const = default;
};

struct Sample {
    std::string name;
    SampleKey key;
    Vector values;
};

/// Sample name -> (condition, timepoint, replicate).
using ConditionManifest = std::map<std::string, SampleKey>;

inline ConditionManifest manifest_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw config_error("manifest must be a JSON object");
    ConditionManifest m;
    for (const auto& [name, entry] : j.items()) {
        if (!entry.is_object() || !entry.contains("condition") || !entry.contains("timepoint") ||
            !entry.contains("replicate"))
            throw config_error("manifest entry '" + name +
                               "' needs condition, timepoint and replicate");
        const auto& c = entry.at("condition");
        const auto& t = entry.at("timepoint");
        const auto& r = entry.at("replicate");
        if (!c.is_string() || !t.is_number_integer() || !r.is_number_integer())
            throw config_error("manifest entry '" + name + "' has wrongly typed fields");
        m.emplace(name, SampleKey{c.get<std::string>(), t.get<int>(), r.get<int>()});
    }
    return m;
}

inline nlohmann::json manifest_to_json(const ConditionManifest& m)
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, key] : m)
        j[name] = {{"condition", key.condition}, {"timepoint", key.timepoint}, {"replicate", key.replicate}};
    return j;
}

/**
 * Labeled variables x (condition, timepoint, replicate) measurements.
 *
 * Construction validates every invariant and sorts samples by
 * (condition, timepoint, replicate); instances are immutable afterwards.
 */
class SnapshotEnsemble {
public:
    SnapshotEnsemble(Labels variable_ids, std::vector<Sample> samples)
        : variable_ids_(std::move(variable_ids)), samples_(std::move(samples))
    {
        std::sort(samples_.begin(), samples_.end(),
                  [](const Sample& a, const Sample& b) { return a.key < b.key; });
        validate();
    }

    const Labels& variable_ids() const noexcept { return variable_ids_; }
    const std::vector<Sample>& samples() const noexcept { return samples_; }
    std::size_t num_variables() const noexcept { return variable_ids_.size(); }

    std::vector<std::string> conditions() const
    {
        std::vector<std::string> out;
        for (const auto& s : samples_)
            if (out.empty() || out.back() != s.key.condition) out.push_back(s.key.condition);
        return out;
    }

    std::vector<int> timepoints(const std::string& condition) const
    {
        std::set<int> tps;
        for (const auto& s : samples_)
            if (s.key.condition == condition) tps.insert(s.key.timepoint);
        return {tps.begin(), tps.end()};
    }

    std::vector<int> replicates(const std::string& condition) const
    {
        std::set<int> reps;
        for (const auto& s : samples_)
            if (s.key.condition == condition) reps.insert(s.key.replicate);
        return {reps.begin(), reps.end()};
    }

    const Sample* find(const SampleKey& key) const
    {
        auto it = std::lower_bound(samples_.begin(), samples_.end(), key,
                                   [](const Sample& s, const SampleKey& k) { return s.key < k; });
        return (it != samples_.end() && it->key == key) ? &*it : nullptr;
    }

    /// Variables x samples matrix in sample order.
    Matrix matrix() const
    {
        Matrix m(static_cast<Eigen::Index>(num_variables()), static_cast<Eigen::Index>(samples_.size()));
        for (std::size_t j = 0; j < samples_.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = samples_[j].values;
        return m;
    }

private:
    void validate() const
    {
        std::unordered_set<std::string> seen;
        for (const auto& id : variable_ids_)
            if (!seen.insert(id).second) throw data_error("duplicate variable id: " + id);

        const auto d = static_cast<Eigen::Index>(variable_ids_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            const auto& s = samples_[i];
            if (s.values.size() != d)
                throw data_error("sample '" + s.name + "' has " + std::to_string(s.values.size()) +
                                 " values, expected " + std::to_string(d));
            if (!s.values.allFinite()) throw data_error("sample '" + s.name + "' has non-finite values");
            if (i > 0 && samples_[i - 1].key == s.key)
                throw data_error("duplicate (condition, timepoint, replicate) for samples '" +
                                 samples_[i - 1].name + "' and '" + s.name + "'");
        }

        // Every replicate present at one timepoint must be present at all of them.
        std::map<std::string, std::map<int, std::set<int>>> reps;
        for (const auto& s : samples_) reps[s.key.condition][s.key.timepoint].insert(s.key.replicate);
        for (const auto& [cond, by_time] : reps) {
            std::set<int> all;
            for (const auto& [t, r] : by_time) all.insert(r.begin(), r.end());
            for (const auto& [t, r] : by_time) {
                if (r != all) {
                    for (int rep : all)
                        if (!r.count(rep))
                            throw data_error("incomplete replicate series: condition '" + cond +
                                             "' replicate " + std::to_string(rep) +
                                             " missing at timepoint " + std::to_string(t));
                }
            }
        }
    }

    Labels variable_ids_;
    std::vector<Sample> samples_;
};

/**
 * Parses a CSV expression table (header "id,<sample>,...", one row per
 * variable) and attaches design metadata from the manifest.
 */
inline SnapshotEnsemble load_expression_table(std::istream& table, const ConditionManifest& manifest,
                                              const std::string& source = "table")
{
    const auto rows = csv::read_records(table);
    if (rows.empty()) throw data_error(source + ": empty table");
    const auto& header = rows.front();
    if (header.size() < 2) throw data_error(source + ": header has no sample columns");
    const std::vector<std::string> names(header.begin() + 1, header.end());

    {
        std::unordered_set<std::string> seen;
        for (const auto& n : names)
            if (!seen.insert(n).second) throw data_error(source + ": duplicate sample name: " + n);
    }
    for (const auto& n : names)
        if (!manifest.count(n)) throw data_error("unmapped sample: '" + n + "' is not in the manifest");
    {
        std::unordered_set<std::string> in_table(names.begin(), names.end());
        for (const auto& [n, key] : manifest)
            if (!in_table.count(n)) throw data_error("manifest sample '" + n + "' is missing from the table");
    }

    Labels ids;
    std::vector<Sample> samples(names.size());
    const auto nvars = static_cast<Eigen::Index>(rows.size() - 1);
    for (std::size_t j = 0; j < names.size(); ++j) {
        samples[j].name = names[j];
        samples[j].key = manifest.at(names[j]);
        samples[j].values.resize(nvars);
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size())
            throw data_error(source + ": line " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                             " fields, expected " + std::to_string(header.size()));
        ids.push_back(row[0]);
        for (std::size_t j = 0; j < names.size(); ++j) {
            double v = 0.0;
            if (!parse_double(row[j + 1], v))
                throw data_error(source + ": non-numeric cell '" + row[j + 1] + "' (variable '" + row[0] +
                                 "', sample '" + names[j] + "')");
            if (!std::isfinite(v))
                throw data_error(source + ": non-finite cell (variable '" + row[0] + "', sample '" + names[j] + "')");
            samples[j].values(static_cast<Eigen::Index>(r - 1)) = v;
        }
    }
    return SnapshotEnsemble(std::move(ids), std::move(samples));
}

/// Writes the ensemble back in the table layout, samples in normalized order.
inline void write_expression_table(std::ostream& out, const SnapshotEnsemble& ens)
{
    out << "id";
    for (const auto& s : ens.samples()) out << ',' << csv::escape(s.name);
    out << '\n';
    for (std::size_t i = 0; i < ens.num_variables(); ++i) {
        out << csv::escape(ens.variable_ids()[i]);
        for (const auto& s : ens.samples()) out << ',' << format_double(s.values(static_cast<Eigen::Index>(i)));
        out << '\n';
    }
}

inline ConditionManifest manifest_of(const SnapshotEnsemble& ens)
{
    ConditionManifest m;
    for (const auto& s : ens.samples()) m.emplace(s.name, s.key);
    return m;
}

namespace detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b)
{
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::string nearest(const std::string& target, const Labels& pool)
{
    std::string best;
    std::size_t best_d = static_cast<std::size_t>(-1);
    for (const auto& p : pool) {
        const auto d = edit_distance(target, p);
        if (d < best_d) {
            best_d = d;
            best = p;
        }
    }
    return best;
}

} // namespace detail

/// Restricts the ensemble to `ids`, in that order.
inline SnapshotEnsemble select_variables(const SnapshotEnsemble& ens, const Labels& ids)
{
    std::map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < ens.num_variables(); ++i)
        index.emplace(ens.variable_ids()[i], static_cast<Eigen::Index>(i));

    std::vector<Eigen::Index> rows;
    for (const auto& id : ids) {
        auto it = index.find(id);
        if (it == index.end()) {
            std::string msg = "unknown variable id: " + id;
            if (ens.num_variables() > 0) msg += " (did you mean '" + detail::nearest(id, ens.variable_ids()) + "'?)";
            throw data_error(msg);
        }
        rows.push_back(it->second);
    }

    std::vector<Sample> samples = ens.samples();
    for (auto& s : samples) {
        Vector v(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) v(static_cast<Eigen::Index>(k)) = s.values(rows[k]);
        s.values = std::move(v);
    }
    return SnapshotEnsemble(ids, std::move(samples));
}

/// Optional log2(x + 1) preprocessing of every value.
inline SnapshotEnsemble log2p1_transform(const SnapshotEnsemble& ens)
{
    std::vector<Sample> samples = ens.samples();
    for (auto& s : samples) {
        if ((s.values.array() <= -1.0).any())
            throw data_error("log2(x+1) needs values > -1 (sample '" + s.name + "')");
        s.values = (s.values.array() + 1.0).log() / std::log(2.0);
    }
    return SnapshotEnsemble(ens.variable_ids(), std::move(samples));
}

enum class PerturbationDistribution { gaussian, uniform };

/// Artificial snapshot enrichment for temporally sparse data.
struct AugmentationConfig {
    std::size_t count_per_pair = 25;
    /// Perturbation std = magnitude * ||column||_2 / sqrt(d).
    double magnitude = 1e-2;
    PerturbationDistribution distribution = PerturbationDistribution::gaussian;
    std::uint64_t seed = 0;

    /// Gaussian draws are clamped at this many standard deviations.
    static constexpr double clamp_sigmas = 6.0;

    bool operator==(const AugmentationConfig&) const = default;

    void validate() const
    {
        if (count_per_pair > 0 && !(magnitude > 0.0 && std::isfinite(magnitude)))
            throw config_error("augmentation magnitude must be positive when count_per_pair > 0");
    }
};

inline const char* to_string(PerturbationDistribution d)
{
    return d == PerturbationDistribution::gaussian ? "gaussian" : "uniform";
}

inline nlohmann::json to_json(const AugmentationConfig& c)
{
    return {{"count", c.count_per_pair},
            {"magnitude", c.magnitude},
            {"distribution", to_string(c.distribution)},
            {"seed", c.seed}};
}

inline AugmentationConfig augmentation_from_json(const nlohmann::json& j)
{
    AugmentationConfig c;
    if (!j.is_object()) throw config_error("augmentation must be an object");
    if (j.contains("count")) {
        if (!j["count"].is_number_integer() || j["count"].get<long long>() < 0)
            throw config_error("augmentation.count must be a nonnegative integer");
        c.count_per_pair = j["count"].get<std::size_t>();
    }
    if (j.contains("magnitude")) {
        if (!j["magnitude"].is_number()) throw config_error("augmentation.magnitude must be a number");
        c.magnitude = j["magnitude"].get<double>();
    }
    if (j.contains("distribution")) {
        const auto d = j["distribution"].get<std::string>();
        if (d == "gaussian") c.distribution = PerturbationDistribution::gaussian;
        else if (d == "uniform") c.distribution = PerturbationDistribution::uniform;
        else throw config_error("augmentation.distribution must be 'gaussian' or 'uniform', got '" + d + "'");
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
            throw config_error("augmentation.seed must be an integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    c.validate();
    return c;
}

struct ColumnProvenance {
    std::string condition;
    int replicate = 0;
    int from_timepoint = 0;
    int to_timepoint = 0;
    bool augmented = false;
    /// Index of the original column an augmented column perturbs; -1 for originals.
    std::ptrdiff_t source = -1;

    bool operator==(const ColumnProvenance&) const = default;
};

/// Column-aligned (past, future) matrices; future column j is the successor of past column j.
struct SnapshotPair {
    Labels labels;
    Matrix past;
    Matrix future;
    std::vector<ColumnProvenance> provenance;
    std::optional<AugmentationConfig> augmentation;

    Eigen::Index cols() const noexcept { return past.cols(); }
    Eigen::Index rows() const noexcept { return past.rows(); }

    void validate() const
    {
        if (past.cols() != future.cols())
            throw data_error("snapshot pair column mismatch: past has " + std::to_string(past.cols()) +
                             ", future has " + std::to_string(future.cols()));
        if (past.rows() != future.rows())
            throw data_error("snapshot pair row mismatch: past has " + std::to_string(past.rows()) +
                             ", future has " + std::to_string(future.rows()));
        if (static_cast<Eigen::Index>(labels.size()) != past.rows())
            throw data_error("snapshot pair has " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(past.rows()) + " rows");
        if (static_cast<Eigen::Index>(provenance.size()) != past.cols())
            throw data_error("snapshot pair provenance length does not match column count");
        if (!past.allFinite() || !future.allFinite()) throw data_error("snapshot pair has non-finite entries");
        for (std::size_t j = 0; j < provenance.size(); ++j) {
            const auto& p = provenance[j];
            if (p.augmented && (p.source < 0 || static_cast<std::size_t>(p.source) >= provenance.size() ||
                                provenance[static_cast<std::size_t>(p.source)].augmented))
                throw data_error("augmented column " + std::to_string(j) + " has no valid source column");
        }
    }
};

/**
 * One (past, future) column per replicate and consecutive timepoint pair of
 * `condition`. Columns are ordered by (replicate, timepoint).
 */
inline SnapshotPair build_snapshot_pairs(const SnapshotEnsemble& ens, const std::string& condition)
{
    const auto tps = ens.timepoints(condition);
    if (tps.empty()) throw data_error("unknown condition: " + condition);
    if (tps.size() < 2)
        throw data_error("condition '" + condition + "' has a single timepoint; at least two are needed");
    const auto reps = ens.replicates(condition);

    const auto d = static_cast<Eigen::Index>(ens.num_variables());
    const auto m = static_cast<Eigen::Index>(reps.size() * (tps.size() - 1));
    SnapshotPair pair;
    pair.labels = ens.variable_ids();
    pair.past.resize(d, m);
    pair.future.resize(d, m);
    Eigen::Index col = 0;
    for (int rep : reps) {
        for (std::size_t t = 0; t + 1 < tps.size(); ++t) {
            const Sample* a = ens.find({condition, tps[t], rep});
            const Sample* b = ens.find({condition, tps[t + 1], rep});
            pair.past.col(col) = a->values;
            pair.future.col(col) = b->values;
            pair.provenance.push_back({condition, rep, tps[t], tps[t + 1], false, -1});
            ++col;
        }
    }
    return pair;
}

/// Pairs consecutive columns of a single trajectory (d x (T+1)).
inline SnapshotPair pair_from_trajectory(const Matrix& trajectory, Labels labels,
                                         const std::string& condition = "sim", int replicate = 0)
{
    if (trajectory.cols() < 2) throw data_error("trajectory needs at least two columns");
    SnapshotPair pair;
    pair.labels = std::move(labels);
    const auto m = trajectory.cols() - 1;
    pair.past = trajectory.leftCols(m);
    pair.future = trajectory.rightCols(m);
    for (Eigen::Index t = 0; t < m; ++t)
        pair.provenance.push_back({condition, replicate, static_cast<int>(t), static_cast<int>(t + 1), false, -1});
    pair.validate();
    return pair;
}

/// Concatenates pairs column-wise; labels must agree.
inline SnapshotPair concat_pairs(const std::vector<SnapshotPair>& pairs)
{
    if (pairs.empty()) throw data_error("no snapshot pairs to concatenate");
    SnapshotPair out;
    out.labels = pairs.front().labels;
    Eigen::Index m = 0;
    for (const auto& p : pairs) {
        if (p.labels != out.labels) throw data_error("cannot concatenate snapshot pairs with different labels");
        if (p.augmentation) throw data_error("concatenate pairs before augmenting them");
        m += p.cols();
    }
    out.past.resize(static_cast<Eigen::Index>(out.labels.size()), m);
    out.future.resize(out.past.rows(), m);
    Eigen::Index col = 0;
    for (const auto& p : pairs) {
        out.past.middleCols(col, p.cols()) = p.past;
        out.future.middleCols(col, p.cols()) = p.future;
        out.provenance.insert(out.provenance.end(), p.provenance.begin(), p.provenance.end());
        col += p.cols();
    }
    return out;
}

namespace detail {

inline void perturb_column(Xoshiro256& rng, const AugmentationConfig& cfg, Eigen::Ref<Vector> col)
{
    const auto d = col.size();
    if (d == 0) return;
    const double sigma = cfg.magnitude * col.norm() / std::sqrt(static_cast<double>(d));
    const double bound = AugmentationConfig::clamp_sigmas * sigma;
    for (Eigen::Index i = 0; i < d; ++i) {
        double delta = 0.0;
        if (cfg.distribution == PerturbationDistribution::gaussian) {
            delta = std::clamp(sigma * rng.gaussian(), -bound, bound);
        } else {
            // Uniform on [-sqrt(3) sigma, sqrt(3) sigma] has standard deviation sigma.
            const double half = std::sqrt(3.0) * sigma;
            delta = rng.uniform(-half, half);
        }
        col(i) += delta;
    }
}

} // namespace detail

/**
 * Appends `count_per_pair` perturbed copies of every original column.
 *
 * Output layout is [originals | copy 1 of every column | copy 2 ... ]. Past and
 * future perturbations are drawn independently, each scaled by its own column
 * norm. Draw order is fixed (copy, column, past entries, future entries), so
 * the result is a pure function of (pair, cfg).
 */
inline SnapshotPair augment_pairs(const SnapshotPair& pair, const AugmentationConfig& cfg)
{
    pair.validate();
    cfg.validate();
    if (pair.augmentation) throw data_error("snapshot pair is already augmented");
    SnapshotPair out = pair;
    if (cfg.count_per_pair == 0) return out;

    const auto m = pair.cols();
    const auto total = m * static_cast<Eigen::Index>(1 + cfg.count_per_pair);
    out.past.conservativeResize(Eigen::NoChange, total);
    out.future.conservativeResize(Eigen::NoChange, total);

    Xoshiro256 rng(cfg.seed);
    Eigen::Index col = m;
    for (std::size_t k = 0; k < cfg.count_per_pair; ++k) {
        for (Eigen::Index j = 0; j < m; ++j, ++col) {
            out.past.col(col) = pair.past.col(j);
            out.future.col(col) = pair.future.col(j);
            detail::perturb_column(rng, cfg, out.past.col(col));
            detail::perturb_column(rng, cfg, out.future.col(col));
            auto prov = pair.provenance[static_cast<std::size_t>(j)];
            prov.augmented = true;
            prov.source = j;
            out.provenance.push_back(prov);
        }
    }
    out.augmentation = cfg;
    return out;
}

/// Debug dump: two records (past, future) per column with provenance fields.
inline void write_pair_dump(std::ostream& out, const SnapshotPair& pair)
{
    out << "column,side,condition,replicate,step,augmented,source";
    for (const auto& l : pair.labels) out << ',' << csv::escape(l);
    out << '\n';
    for (Eigen::Index j = 0; j < pair.cols(); ++j) {
        const auto& p = pair.provenance[static_cast<std::size_t>(j)];
        for (int side = 0; side < 2; ++side) {
            const Matrix& m = side == 0 ? pair.past : pair.future;
            out << j << ',' << (side == 0 ? "past" : "future") << ',' << csv::escape(p.condition) << ','
                << p.replicate << ',' << p.from_timepoint << "->" << p.to_timepoint << ',' << (p.augmented ? 1 : 0)
                << ',' << p.source;
            for (Eigen::Index i = 0; i < m.rows(); ++i) out << ',' << format_double(m(i, j));
            out << '\n';
        }
    }
}

} // namespace sdmd
