#include "sdmd/impact.hpp"
#include "sdmd/rng.hpp"
#include "sdmd/structured.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace sdmd;

namespace {

Labels numbered(const std::string& prefix, int n)
{
    Labels out;
    for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

/**
 * Ten host rows h0..h9 and single-variable components a and b. The host
 * block is a random stable map, each component decays on its own, and the
 * host <- component couplings are the columns passed in.
 */
struct Planted {
    Matrix transition;
    Labels labels;
    Partition partition;
};

Planted planted(const Vector& couple_a, const Vector& couple_b)
{
    const int n = 10;
    Planted p;
    p.transition = Matrix::Zero(n + 2, n + 2);
    p.transition.topLeftCorner(n, n) = oracle::random_stable(n, 0.9, 5);
    p.transition.block(0, n, n, 1) = couple_a;
    p.transition.block(0, n + 1, n, 1) = couple_b;
    p.transition(n, n) = 0.95;
    p.transition(n + 1, n + 1) = 0.85;
    p.labels = numbered("h", n);
    p.labels.push_back("a");
    p.labels.push_back("b");
    p.partition = Partition({{"H", numbered("h", n)}, {"A", {"a"}}, {"B", {"b"}}});
    return p;
}

/// Trajectories with the listed components switched on; others start (and stay) at zero.
SnapshotPair condition_data(const Planted& p, const std::string& cond, bool a_on, bool b_on, std::uint64_t seed)
{
    std::vector<SnapshotPair> parts;
    for (int r = 0; r < 4; ++r) {
        Vector x0 = oracle::random_matrix(12, 1, seed + std::uint64_t(r)).col(0);
        if (!a_on) x0(10) = 0.0;
        if (!b_on) x0(11) = 0.0;
        parts.push_back(pair_from_trajectory(oracle::rollout(p.transition, x0, 6), p.labels, cond, r));
    }
    return concat_pairs(parts);
}

StructuredModel fit_planted(const Planted& p)
{
    const std::map<std::string, SnapshotPair> data{{"host", condition_data(p, "host", false, false, 10)},
                                                   {"with_a", condition_data(p, "with_a", true, false, 20)},
                                                   {"with_b", condition_data(p, "with_b", false, true, 30)}};
    const std::vector<StageSpec> h{{"K_H", "host", "H", {}, {"H"}, 1e-12},
                                   {"K_HA", "with_a", "H", {{"K_H", "H"}}, {"A"}, 1e-12},
                                   {"K_HB", "with_b", "H", {{"K_H", "H"}}, {"B"}, 1e-12}};
    return staged_fit(h, data, p.partition);
}

Vector planted_column(const std::vector<int>& support, double gain, std::uint64_t seed)
{
    Xoshiro256 g(seed);
    Vector v = Vector::Zero(10);
    for (int i : support) v(i) = gain * (g.uniform01() < 0.5 ? -1.0 : 1.0) * g.uniform(0.5, 1.5);
    return v;
}

csv::LabeledMatrix labeled(const Matrix& m)
{
    return {numbered("r", int(m.rows())), numbered("c", int(m.cols())), m};
}

int count(const std::string& s, const std::string& needle)
{
    int n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
    return n;
}

} // namespace

TEST(ImpactScore, HandValues)
{
    EXPECT_EQ(impact_score(Matrix::Zero(3, 4)), 0.0);
    EXPECT_DOUBLE_EQ(impact_score(Matrix::Ones(2, 2)), 0.5);
    EXPECT_DOUBLE_EQ(impact_score(Matrix::Constant(1, 3, 2.0)), std::sqrt(12.0) / 3.0);
}

TEST(ImpactScore, Errors)
{
    EXPECT_THROW(impact_score(Matrix(0, 3)), Error);
    Matrix m = Matrix::Ones(2, 2);
    m(1, 1) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(impact_score(m), Error);
}

TEST(ImpactScore, HomogeneityAndPositivity)
{
    const Matrix k = oracle::random_matrix(5, 3, 1);
    for (double c : {-3.0, -0.5, 0.0, 1e-7, 2.0, 1e5}) EXPECT_NEAR(impact_score(c * k), std::abs(c) * impact_score(k), 1e-15 * (1 + std::abs(c)));
    EXPECT_GT(impact_score(k), 0.0);
    Matrix one = Matrix::Zero(4, 4);
    one(2, 3) = 1e-300;
    EXPECT_GT(impact_score(one), 0.0);
}

TEST(ImpactedTargets, ZeroAndHandExample)
{
    const Labels l3{"row1", "row2", "row3"};
    EXPECT_TRUE(impacted_targets(Matrix::Zero(3, 2), l3, ThresholdRule::absolute(0.1)).empty());
    EXPECT_TRUE(impacted_targets(Matrix::Zero(3, 2), l3, ThresholdRule::relative(0.01)).empty());
    const Matrix d = Vector((Vector(3) << 1, 0.001, 0).finished()).asDiagonal();
    EXPECT_EQ(impacted_targets(d, l3, ThresholdRule::relative(0.01)), Labels{"row1"});
    EXPECT_EQ(impacted_targets(d, l3, ThresholdRule::absolute(0.001)), (Labels{"row1", "row2"}));
    // A zero row never counts, even at threshold zero.
    EXPECT_EQ(impacted_targets(d, l3, ThresholdRule::absolute(0.0)), (Labels{"row1", "row2"}));
}

TEST(ImpactedTargets, RelativeRuleIsScaleInvariant)
{
    const Matrix k = oracle::random_matrix(20, 3, 2);
    const Labels l = numbered("g", 20);
    const auto base = impacted_targets(k, l, ThresholdRule::relative(0.3));
    for (double c : {1e-9, 0.25, 4.0, 1e12}) EXPECT_EQ(impacted_targets(c * k, l, ThresholdRule::relative(0.3)), base);
}

TEST(ImpactedTargets, InvalidRules)
{
    const Labels l{"a"};
    const Matrix m = Matrix::Ones(1, 1);
    EXPECT_THROW(impacted_targets(m, l, ThresholdRule::relative(0.0)), Error);
    EXPECT_THROW(impacted_targets(m, l, ThresholdRule::relative(1.5)), Error);
    EXPECT_THROW(impacted_targets(m, l, ThresholdRule::absolute(-1.0)), Error);
    EXPECT_THROW(impacted_targets(m, Labels{"a", "b"}, ThresholdRule::absolute(1.0)), Error);
}

TEST(ImpactedTargets, RecoversPlantedSupportFromFit)
{
    const std::vector<int> support{0, 1, 3, 4, 6, 7, 9};
    const auto p = planted(planted_column(support, 0.3, 1), planted_column({2}, 0.3, 2));
    const auto model = fit_planted(p);
    const auto& st = model.stage("K_HA");
    EXPECT_LT((st.block - p.transition.block(0, 10, 10, 1)).norm(), 1e-8);
    Labels expected;
    for (int i : support) expected.push_back("h" + std::to_string(i));
    EXPECT_EQ(impacted_targets(st.block, st.row_labels, ThresholdRule::relative(0.05)), expected);
}

TEST(ImpactReport, SingleZeroBlock)
{
    const auto rep = impact_report({{"Z", {"a", "b"}, {"c"}, Matrix::Zero(2, 1)}}, ThresholdRule{});
    ASSERT_EQ(rep.entries.size(), 1u);
    EXPECT_EQ(rep.entries[0].score, 0.0);
    EXPECT_EQ(rep.entries[0].impacted_count, 0u);
    EXPECT_EQ(rep.ranking, Labels{"Z"});
}

TEST(ImpactReport, PlantedHighBlockRanksFirst)
{
    const auto p = planted(planted_column({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, 0.5, 3), planted_column({4, 8}, 0.01, 4));
    const auto rep = impact_report(fit_planted(p), ThresholdRule::relative(0.01), {"K_HA", "K_HB"});
    EXPECT_EQ(rep.ranking, (Labels{"K_HA", "K_HB"}));
    EXPECT_GT(rep.entry("K_HA").impacted_count, rep.entry("K_HB").impacted_count);
    for (const auto& e : rep.entries) {
        EXPECT_EQ(e.score, e.fro_norm / double(e.rows * e.cols));
        EXPECT_EQ(e.impacted_count, e.impacted_targets.size());
    }
}

TEST(ImpactReport, TiesBrokenById)
{
    const Matrix m = Matrix::Ones(2, 2);
    const auto rep = impact_report({{"zeta", {"a", "b"}, {"c", "d"}, m},
                                    {"alpha", {"a", "b"}, {"c", "d"}, -m},
                                    {"mid", {"a", "b"}, {"c", "d"}, 2 * m}},
                                   ThresholdRule{});
    EXPECT_EQ(rep.ranking, (Labels{"mid", "alpha", "zeta"}));
}

TEST(ImpactReport, RankingIgnoresBlockOrder)
{
    std::vector<NamedBlock> blocks;
    for (int i = 0; i < 6; ++i)
        blocks.push_back({"b" + std::to_string(i), numbered("r", 3), numbered("c", 2),
                          oracle::random_matrix(3, 2, std::uint64_t(i)) * (i % 3)});
    const auto base = impact_report(blocks, ThresholdRule{}).ranking;
    std::reverse(blocks.begin(), blocks.end());
    EXPECT_EQ(impact_report(blocks, ThresholdRule{}).ranking, base);
    std::rotate(blocks.begin(), blocks.begin() + 2, blocks.end());
    EXPECT_EQ(impact_report(blocks, ThresholdRule{}).ranking, base);
}

TEST(ImpactReport, SelectorsAndUnknownBlock)
{
    const auto model = fit_planted(planted(planted_column({1}, 0.2, 5), planted_column({2}, 0.2, 6)));
    const auto all = impact_report(model, ThresholdRule{});
    EXPECT_EQ(all.entries.size(), 3u);
    const auto sliced = impact_report(model, ThresholdRule{}, {"K_HA:A"});
    EXPECT_EQ(sliced.entries.at(0).block_id, "K_HA:A");
    try {
        impact_report(model, ThresholdRule{}, {"K_XY"});
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("K_XY"), std::string::npos);
        EXPECT_NE(msg.find("K_H, K_HA, K_HB"), std::string::npos) << msg;
    }
    EXPECT_THROW(impact_report(model, ThresholdRule{}, {"K_HA:B"}), Error);
}

TEST(ImpactReport, JsonRecordsRule)
{
    const auto rep = impact_report({{"Z", {"a"}, {"c"}, Matrix::Ones(1, 1)}}, ThresholdRule::absolute(0.2));
    const auto j = to_json(rep);
    EXPECT_EQ(j["threshold_rule"], nlohmann::json::parse(R"({"absolute": 0.2})"));
    EXPECT_EQ(threshold_rule_from_json(j["threshold_rule"]), ThresholdRule::absolute(0.2));
    EXPECT_EQ(j["entries"][0]["impacted_count"], 1);
    EXPECT_THROW(threshold_rule_from_json(nlohmann::json::parse(R"({"fraction": 0.2})")), Error);
}

TEST(Heatmap, DeterministicBytes)
{
    const auto lm = labeled(oracle::random_matrix(4, 6, 8));
    HeatmapOptions opt;
    opt.title = "K <test> & co";
    EXPECT_EQ(heatmap_svg(lm, opt), heatmap_svg(lm, opt));
    const auto dir = std::filesystem::temp_directory_path() / "sdmd_heatmap_test";
    std::filesystem::create_directories(dir);
    render_heatmap(lm, (dir / "a.svg").string(), opt);
    render_heatmap(lm, (dir / "b.svg").string(), opt);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(slurp(dir / "a.svg"), slurp(dir / "b.svg"));
    EXPECT_NE(slurp(dir / "a.svg").find("K &lt;test&gt; &amp; co"), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(Heatmap, StructureCellsLabelsAndColorBar)
{
    const auto svg = heatmap_svg(labeled(oracle::random_matrix(3, 5, 9)));
    EXPECT_EQ(count(svg, "<title>"), 15);
    EXPECT_EQ(count(svg, ">r2</text>"), 1);
    EXPECT_EQ(count(svg, ">c4</text>"), 1);
    EXPECT_NE(svg.find("linearGradient"), std::string::npos);
    EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}

TEST(Heatmap, ZeroMatrixUsesUnitScale)
{
    const auto svg = heatmap_svg(labeled(Matrix::Zero(1, 1)));
    EXPECT_EQ(count(svg, "fill=\"#ffffff\"><title>"), 1);
    EXPECT_NE(svg.find(">1</text>"), std::string::npos);
    EXPECT_NE(svg.find(">-1</text>"), std::string::npos);
}

TEST(Heatmap, OppositeExtremesForSignedDiagonal)
{
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 1;
    d(1, 1) = -1;
    const auto svg = heatmap_svg(labeled(d));
    EXPECT_EQ(diverging_color(1.0), "#b2182b");
    EXPECT_EQ(diverging_color(-1.0), "#2166ac");
    EXPECT_EQ(diverging_color(0.0), "#ffffff");
    EXPECT_EQ(count(svg, "fill=\"#b2182b\"><title>"), 1);
    EXPECT_EQ(count(svg, "fill=\"#2166ac\"><title>"), 1);
    EXPECT_EQ(count(svg, "fill=\"#ffffff\"><title>"), 2);
}

TEST(Heatmap, ExplicitBoundClampsAndScales)
{
    Matrix m(1, 2);
    m << 0.5, 4.0;
    HeatmapOptions opt;
    opt.bound = 1.0;
    const auto svg = heatmap_svg(labeled(m), opt);
    EXPECT_EQ(count(svg, "fill=\"" + diverging_color(0.5) + "\"><title>"), 1);
    EXPECT_EQ(count(svg, "fill=\"#b2182b\"><title>"), 1);
}

TEST(Heatmap, Errors)
{
    EXPECT_THROW(heatmap_svg(labeled(Matrix(0, 0))), Error);
    EXPECT_THROW(heatmap_svg({{"a"}, {"b", "c"}, Matrix::Ones(2, 2)}), Error);
    try {
        render_heatmap(labeled(Matrix::Ones(1, 1)), "/proc/definitely/not/here.svg");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
}
