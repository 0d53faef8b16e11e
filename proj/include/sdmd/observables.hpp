#pragma once

#include "sdmd/data.hpp"
#include "sdmd/error.hpp"
#include "sdmd/types.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace sdmd {

enum class DictionaryKind { identity, polynomial, state_plus_constant };

struct DictionaryDescriptor {
    DictionaryKind kind = DictionaryKind::identity;
    int degree = 0; // polynomial only

    bool operator==(const DictionaryDescriptor&) const = default;

    static DictionaryDescriptor identity() { return {DictionaryKind::identity, 0}; }
    static DictionaryDescriptor polynomial(int d) { return {DictionaryKind::polynomial, d}; }
    static DictionaryDescriptor state_plus_constant() { return {DictionaryKind::state_plus_constant, 0}; }
};

/// Config form: "identity" | {"polynomial": d} | "state_plus_constant".
inline nlohmann::json to_json(const DictionaryDescriptor& d)
{
    switch (d.kind) {
        case DictionaryKind::identity: return "identity";
        case DictionaryKind::state_plus_constant: return "state_plus_constant";
        case DictionaryKind::polynomial: return {{"polynomial", d.degree}};
    }
    return nullptr;
}

inline DictionaryDescriptor dictionary_from_json(const nlohmann::json& j)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "identity") return DictionaryDescriptor::identity();
        if (s == "state_plus_constant") return DictionaryDescriptor::state_plus_constant();
        throw config_error("unknown dictionary '" + s + "'");
    }
    if (j.is_object() && j.size() == 1 && j.contains("polynomial") && j["polynomial"].is_number_integer())
        return DictionaryDescriptor::polynomial(j["polynomial"].get<int>());
    throw config_error("dictionary must be \"identity\", \"state_plus_constant\" or {\"polynomial\": d}");
}

/**
 * Finite observable basis psi used to lift states before fitting.
 *
 * Polynomial dictionaries hold every monomial of total degree 1..d (no
 * constant term), in graded lexicographic order: degree 1 first, and within a
 * degree, index tuples i1 <= i2 <= ... in lexicographic order. For ids (a, b)
 * and d = 2 that is a, b, a^2, a*b, b^2.
 */
class ObservableDictionary {
public:
    const DictionaryDescriptor& descriptor() const noexcept { return desc_; }
    DictionaryKind kind() const noexcept { return desc_.kind; }
    Eigen::Index input_dim() const noexcept { return input_dim_; }
    Eigen::Index output_dim() const noexcept { return static_cast<Eigen::Index>(labels_.size()); }
    const Labels& labels() const noexcept { return labels_; }
    const Labels& input_labels() const noexcept { return input_labels_; }

    /// Monomials as sorted variable-index tuples (polynomial kind only).
    const std::vector<std::vector<int>>& monomials() const noexcept { return monomials_; }

    Matrix lift(const Matrix& states) const
    {
        if (states.rows() != input_dim_)
            throw data_error("lift: state has " + std::to_string(states.rows()) + " rows, dictionary expects " +
                             std::to_string(input_dim_));
        if (!states.allFinite()) throw data_error("lift: non-finite state entries");
        switch (desc_.kind) {
            case DictionaryKind::identity: return states;
            case DictionaryKind::state_plus_constant: {
                Matrix out(input_dim_ + 1, states.cols());
                out.topRows(input_dim_) = states;
                out.row(input_dim_).setOnes();
                return out;
            }
            case DictionaryKind::polynomial: {
                Matrix out(output_dim(), states.cols());
                for (std::size_t k = 0; k < monomials_.size(); ++k) {
                    auto row = out.row(static_cast<Eigen::Index>(k));
                    row.setOnes();
                    for (int idx : monomials_[k]) row.array() *= states.row(idx).array();
                }
                return out;
            }
        }
        return states;
    }

    Vector lift(const Vector& state) const { return lift(Matrix(state)).col(0); }

    friend ObservableDictionary make_dictionary(const DictionaryDescriptor&, const Labels&);

private:
    DictionaryDescriptor desc_;
    Eigen::Index input_dim_ = 0;
    Labels input_labels_;
    Labels labels_;
    std::vector<std::vector<int>> monomials_;
};

namespace detail {

inline void enumerate_monomials(int n, int degree, int start, std::vector<int>& cur,
                                std::vector<std::vector<int>>& out)
{
    if (static_cast<int>(cur.size()) == degree) {
        out.push_back(cur);
        return;
    }
    for (int i = start; i < n; ++i) {
        cur.push_back(i);
        enumerate_monomials(n, degree, i, cur, out);
        cur.pop_back();
    }
}

inline std::string monomial_label(const std::vector<int>& mono, const Labels& ids)
{
    std::string out;
    std::size_t k = 0;
    while (k < mono.size()) {
        std::size_t run = 1;
        while (k + run < mono.size() && mono[k + run] == mono[k]) ++run;
        if (!out.empty()) out += '*';
        out += ids[static_cast<std::size_t>(mono[k])];
        if (run > 1) out += '^' + std::to_string(run);
        k += run;
    }
    return out;
}

} // namespace detail

inline ObservableDictionary make_dictionary(const DictionaryDescriptor& desc, const Labels& variable_ids)
{
    if (variable_ids.empty()) throw config_error("dictionary needs at least one variable id");
    if (desc.kind == DictionaryKind::polynomial && desc.degree < 2)
        throw config_error("polynomial dictionary degree must be >= 2, got " + std::to_string(desc.degree));

    ObservableDictionary dict;
    dict.desc_ = desc;
    dict.input_dim_ = static_cast<Eigen::Index>(variable_ids.size());
    dict.input_labels_ = variable_ids;
    switch (desc.kind) {
        case DictionaryKind::identity: dict.labels_ = variable_ids; break;
        case DictionaryKind::state_plus_constant:
            dict.labels_ = variable_ids;
            dict.labels_.push_back("1");
            break;
        case DictionaryKind::polynomial: {
            const int n = static_cast<int>(variable_ids.size());
            for (int deg = 1; deg <= desc.degree; ++deg) {
                std::vector<int> cur;
                detail::enumerate_monomials(n, deg, 0, cur, dict.monomials_);
            }
            for (const auto& mono : dict.monomials_)
                dict.labels_.push_back(detail::monomial_label(mono, variable_ids));
            break;
        }
    }
    return dict;
}

/// Lifts both sides of a pair; row labels become observable labels.
inline SnapshotPair lift_pair(const ObservableDictionary& dict, const SnapshotPair& pair)
{
    pair.validate();
    if (pair.labels != dict.input_labels())
        throw data_error("lift_pair: pair variables do not match the dictionary's input variables");
    SnapshotPair out = pair;
    out.labels = dict.labels();
    out.past = dict.lift(pair.past);
    out.future = dict.lift(pair.future);
    return out;
}

} // namespace sdmd
