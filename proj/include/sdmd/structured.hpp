#pragma once

#include "sdmd/data.hpp"
#include "sdmd/error.hpp"
#include "sdmd/ridge.hpp"
#include "sdmd/types.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sdmd {

struct Group {
    std::string id;
    Labels members;

    bool operator==(const Group&) const = default;
};

/// Ordered, disjoint grouping of observable labels into components.
class Partition {
public:
    Partition() = default;

    explicit Partition(std::vector<Group> groups) : groups_(std::move(groups))
    {
        std::set<std::string> ids;
        std::map<std::string, std::string> owner;
        for (const auto& g : groups_) {
            if (g.id.empty()) throw config_error("partition group with empty id");
            if (!ids.insert(g.id).second) throw config_error("duplicate partition group: " + g.id);
            if (g.members.empty()) throw config_error("partition group '" + g.id + "' has no members");
            for (const auto& m : g.members) {
                auto [it, inserted] = owner.emplace(m, g.id);
                if (!inserted)
                    throw config_error("label '" + m + "' belongs to both groups '" + it->second + "' and '" + g.id + "'");
            }
        }
        owner_ = std::move(owner);
    }

    const std::vector<Group>& groups() const noexcept { return groups_; }

    bool contains(const std::string& id) const
    {
        return std::any_of(groups_.begin(), groups_.end(), [&](const Group& g) { return g.id == id; });
    }

    const Group& group(const std::string& id) const
    {
        for (const auto& g : groups_)
            if (g.id == id) return g;
        throw config_error("unknown group: " + id);
    }

    /// Group owning `label`, if any.
    std::optional<std::string> owner(const std::string& label) const
    {
        auto it = owner_.find(label);
        if (it == owner_.end()) return std::nullopt;
        return it->second;
    }

    bool operator==(const Partition& o) const { return groups_ == o.groups_; }

private:
    std::vector<Group> groups_;
    std::map<std::string, std::string> owner_;
};

/// Reference to a block learned by an earlier stage: columns of `group` in stage `stage`.
struct KnownRef {
    std::string stage;
    std::string group;

    bool operator==(const KnownRef&) const = default;
};

struct StageSpec {
    std::string stage_id;
    std::string condition;
    std::string target_group;
    std::vector<KnownRef> known;
    std::vector<std::string> learn;
    /// Unset: kDefaultLambdaScale * sigma_max(learned past)^2, the same rule in every stage.
    std::optional<double> lambda;

    bool operator==(const StageSpec&) const = default;
};

/// Result of one stage: a composite block over the learned groups, in declared order.
struct LearnedStage {
    StageSpec spec;
    Labels row_labels;
    Labels col_labels;
    /// (group id, first column, width) for each learned group.
    std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> spans;
    Matrix block;
    double lambda = 0.0;
    double residual_fro = 0.0;
    Eigen::Index column_count = 0;
    Eigen::Index rank = 0;
    std::optional<std::string> warning;
    /// Stages whose blocks were frozen into this one.
    std::vector<std::string> consumed;

    bool learned(const std::string& group) const
    {
        return std::any_of(spans.begin(), spans.end(), [&](const auto& s) { return std::get<0>(s) == group; });
    }

    Matrix group_block(const std::string& group) const
    {
        for (const auto& [g, start, width] : spans)
            if (g == group) return block.middleCols(start, width);
        throw config_error("stage '" + spec.stage_id + "' did not learn group '" + group + "'");
    }

    Labels group_labels(const std::string& group) const
    {
        for (const auto& [g, start, width] : spans)
            if (g == group)
                return Labels(col_labels.begin() + start, col_labels.begin() + start + width);
        throw config_error("stage '" + spec.stage_id + "' did not learn group '" + group + "'");
    }
};

struct StructuredModel {
    Partition partition;
    std::vector<LearnedStage> stages;

    const LearnedStage& stage(const std::string& id) const
    {
        for (const auto& s : stages)
            if (s.spec.stage_id == id) return s;
        throw config_error("unknown stage: " + id);
    }

    bool has_stage(const std::string& id) const
    {
        return std::any_of(stages.begin(), stages.end(), [&](const LearnedStage& s) { return s.spec.stage_id == id; });
    }

    /// Provenance DAG as (consumer, consumed) edges.
    std::vector<std::pair<std::string, std::string>> edges() const
    {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& s : stages)
            for (const auto& c : s.consumed) out.emplace_back(s.spec.stage_id, c);
        return out;
    }
};

/// A frozen term block * past subtracted from the regression target.
struct KnownTerm {
    Matrix block;
    Matrix past;
};

struct ResidualFit {
    Matrix block;
    double residual_fro = 0.0;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
    double lambda = 0.0;
};

/// Target minus every frozen contribution.
inline Matrix frozen_residual(const std::vector<KnownTerm>& known, const Matrix& target_future)
{
    Matrix r = target_future;
    for (std::size_t i = 0; i < known.size(); ++i) {
        const auto& k = known[i];
        if (k.past.cols() != target_future.cols())
            throw data_error("known term " + std::to_string(i) + " has " + std::to_string(k.past.cols()) +
                             " columns, target has " + std::to_string(target_future.cols()));
        if (k.block.rows() != target_future.rows() || k.block.cols() != k.past.rows())
            throw data_error("known term " + std::to_string(i) + " block is " + std::to_string(k.block.rows()) + "x" +
                             std::to_string(k.block.cols()) + ", not conformable with its past (" +
                             std::to_string(k.past.rows()) + " rows) and target (" +
                             std::to_string(target_future.rows()) + " rows)");
        r.noalias() -= k.block * k.past;
    }
    return r;
}

/// As fit_residual_block, also reporting residual and solver diagnostics.
inline ResidualFit fit_residual_block_detailed(const std::vector<KnownTerm>& known, const Matrix& target_future,
                                               const Matrix& learn_past, std::optional<double> lambda)
{
    if (learn_past.rows() == 0) throw data_error("fit_residual_block: empty learned past matrix");
    if (learn_past.cols() != target_future.cols())
        throw data_error("fit_residual_block: learned past has " + std::to_string(learn_past.cols()) +
                         " columns, target has " + std::to_string(target_future.cols()));
    const Matrix r = frozen_residual(known, target_future);
    ResidualFit fit;
    fit.lambda = lambda ? *lambda : default_lambda(learn_past);
    auto sol = ridge_solve(r, learn_past, fit.lambda);
    fit.block = std::move(sol.coef);
    fit.rank = sol.rank;
    fit.rank_deficient = sol.rank_deficient;
    fit.residual_fro = (r - fit.block * learn_past).norm();
    return fit;
}

/**
 * Learns the interaction block B minimizing ||R - B L||_F^2 + lambda ||B||_F^2,
 * where R = target_future - sum(known block * known past) and L = learn_past.
 */
inline Matrix fit_residual_block(const std::vector<KnownTerm>& known, const Matrix& target_future,
                                 const Matrix& learn_past, double lambda)
{
    return fit_residual_block_detailed(known, target_future, learn_past, lambda).block;
}

namespace detail {

inline std::vector<StageSpec> order_stages(const std::vector<StageSpec>& hierarchy)
{
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < hierarchy.size(); ++i) {
        const auto& id = hierarchy[i].stage_id;
        if (id.empty()) throw config_error("stage with empty stage_id");
        if (!index.emplace(id, i).second) throw config_error("duplicate stage id: " + id);
    }
    for (const auto& s : hierarchy)
        for (const auto& k : s.known)
            if (!index.count(k.stage))
                throw config_error("unresolved stage reference: stage '" + s.stage_id + "' uses unknown stage '" +
                                   k.stage + "'");

    // DFS with colors; reports the first cycle found in declaration order.
    std::vector<int> color(hierarchy.size(), 0);
    std::vector<std::size_t> stack;
    std::vector<std::size_t> post;
    std::function<void(std::size_t)> visit = [&](std::size_t u) {
        color[u] = 1;
        stack.push_back(u);
        for (const auto& k : hierarchy[u].known) {
            const auto v = index.at(k.stage);
            if (color[v] == 1) {
                std::string cyc;
                auto it = std::find(stack.begin(), stack.end(), v);
                for (; it != stack.end(); ++it) cyc += hierarchy[*it].stage_id + " -> ";
                cyc += hierarchy[v].stage_id;
                throw config_error("cycle detected: " + cyc);
            }
            if (color[v] == 0) visit(v);
        }
        stack.pop_back();
        color[u] = 2;
        post.push_back(u);
    };
    for (std::size_t i = 0; i < hierarchy.size(); ++i)
        if (color[i] == 0) visit(i);

    std::vector<StageSpec> ordered;
    ordered.reserve(post.size());
    for (auto i : post) ordered.push_back(hierarchy[i]);
    return ordered;
}

inline Matrix gather_rows(const Matrix& m, const std::unordered_map<std::string, Eigen::Index>& index,
                          const Labels& labels, const std::string& what)
{
    Matrix out(static_cast<Eigen::Index>(labels.size()), m.cols());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = index.find(labels[i]);
        if (it == index.end()) throw data_error(what + ": label '" + labels[i] + "' is absent from the data");
        out.row(static_cast<Eigen::Index>(i)) = m.row(it->second);
    }
    return out;
}

} // namespace detail

/**
 * Structured DMD over a hierarchy of stages.
 *
 * Stages run in dependency order (declaration order where unconstrained).
 * Each stage regresses the next-step observables of its target group on the
 * learned groups' past observables after subtracting every frozen block's
 * contribution; frozen blocks are aligned to the stage's data by label.
 */
inline StructuredModel staged_fit(const std::vector<StageSpec>& hierarchy,
                                  const std::map<std::string, SnapshotPair>& datasets, const Partition& partition)
{
    if (hierarchy.empty()) throw config_error("hierarchy has no stages");
    const auto ordered = detail::order_stages(hierarchy);

    StructuredModel model;
    model.partition = partition;
    for (const auto& spec : ordered) {
        const std::string where = "stage '" + spec.stage_id + "'";
        auto dit = datasets.find(spec.condition);
        if (dit == datasets.end()) throw config_error(where + ": no data for condition '" + spec.condition + "'");
        const SnapshotPair& data = dit->second;
        data.validate();

        std::unordered_map<std::string, Eigen::Index> row_of;
        for (std::size_t i = 0; i < data.labels.size(); ++i) row_of.emplace(data.labels[i], static_cast<Eigen::Index>(i));
        for (const auto& l : data.labels)
            if (!partition.owner(l))
                throw config_error(where + ": label '" + l + "' of condition '" + spec.condition +
                                   "' belongs to no partition group");

        if (!partition.contains(spec.target_group))
            throw config_error(where + ": unknown target group '" + spec.target_group + "'");
        const Labels& target_labels = partition.group(spec.target_group).members;
        const Matrix target = detail::gather_rows(data.future, row_of, target_labels, where + " target group");

        LearnedStage out;
        out.spec = spec;
        out.row_labels = target_labels;

        std::vector<KnownTerm> known;
        std::set<std::string> known_groups;
        for (const auto& ref : spec.known) {
            const LearnedStage& src = model.stage(ref.stage);
            if (src.spec.target_group != spec.target_group)
                throw config_error(where + ": frozen block from stage '" + ref.stage + "' targets group '" +
                                   src.spec.target_group + "', not '" + spec.target_group + "'");
            if (!src.learned(ref.group))
                throw config_error(where + ": stage '" + ref.stage + "' did not learn group '" + ref.group + "'");
            if (!known_groups.insert(ref.group).second)
                throw config_error(where + ": group '" + ref.group + "' is frozen twice");
            known.push_back({src.group_block(ref.group),
                             detail::gather_rows(data.past, row_of, src.group_labels(ref.group),
                                                 where + " frozen block " + ref.stage + ":" + ref.group)});
            if (std::find(out.consumed.begin(), out.consumed.end(), ref.stage) == out.consumed.end())
                out.consumed.push_back(ref.stage);
        }

        if (spec.learn.empty()) throw config_error(where + ": no groups to learn");
        Eigen::Index width = 0;
        std::set<std::string> seen;
        for (const auto& g : spec.learn) {
            if (!partition.contains(g)) throw config_error(where + ": unknown learned group '" + g + "'");
            if (known_groups.count(g))
                throw config_error(where + ": group '" + g + "' is both frozen and learned");
            if (!seen.insert(g).second) throw config_error(where + ": group '" + g + "' is learned twice");
            const auto& members = partition.group(g).members;
            out.spans.emplace_back(g, width, static_cast<Eigen::Index>(members.size()));
            out.col_labels.insert(out.col_labels.end(), members.begin(), members.end());
            width += static_cast<Eigen::Index>(members.size());
        }
        const Matrix learn_past = detail::gather_rows(data.past, row_of, out.col_labels, where + " learned groups");

        auto fit = fit_residual_block_detailed(known, target, learn_past, spec.lambda);
        out.block = std::move(fit.block);
        out.lambda = fit.lambda;
        out.residual_fro = fit.residual_fro;
        out.column_count = data.cols();
        out.rank = fit.rank;
        if (fit.rank_deficient)
            out.warning = "rank-deficient learned past (rank " + std::to_string(fit.rank) + " < " +
                          std::to_string(learn_past.rows()) + "); minimum-norm block returned";
        model.stages.push_back(std::move(out));
    }
    return model;
}

/// Next-step target observables of `stage_id`: sum of frozen and learned blocks times group slices.
inline Vector compose_step(const StructuredModel& model, const std::string& stage_id,
                           const std::map<std::string, Vector>& group_state)
{
    const LearnedStage& st = model.stage(stage_id);
    auto slice = [&](const std::string& g, Eigen::Index width) -> const Vector& {
        auto it = group_state.find(g);
        if (it == group_state.end()) throw data_error("compose_step: missing state slice for group '" + g + "'");
        if (it->second.size() != width)
            throw data_error("compose_step: slice for group '" + g + "' has length " +
                             std::to_string(it->second.size()) + ", expected " + std::to_string(width));
        return it->second;
    };

    Vector out = Vector::Zero(static_cast<Eigen::Index>(st.row_labels.size()));
    for (const auto& ref : st.spec.known) {
        const Matrix b = model.stage(ref.stage).group_block(ref.group);
        out.noalias() += b * slice(ref.group, b.cols());
    }
    for (const auto& [g, start, width] : st.spans) out.noalias() += st.block.middleCols(start, width) * slice(g, width);
    return out;
}

/// ||target_future - sum of all blocks * pasts||_F for a stage on its training pair.
inline double recompute_stage_residual(const StructuredModel& model, const std::string& stage_id,
                                       const SnapshotPair& data)
{
    const LearnedStage& st = model.stage(stage_id);
    std::unordered_map<std::string, Eigen::Index> row_of;
    for (std::size_t i = 0; i < data.labels.size(); ++i) row_of.emplace(data.labels[i], static_cast<Eigen::Index>(i));
    Matrix r = detail::gather_rows(data.future, row_of, st.row_labels, "residual");
    for (const auto& ref : st.spec.known) {
        const auto& src = model.stage(ref.stage);
        r -= src.group_block(ref.group) * detail::gather_rows(data.past, row_of, src.group_labels(ref.group), "residual");
    }
    r -= st.block * detail::gather_rows(data.past, row_of, st.col_labels, "residual");
    return r.norm();
}

} // namespace sdmd
