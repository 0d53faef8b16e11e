#include "sdmd/koopman.hpp"
#include "sdmd/observables.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace sdmd;

TEST(MakeDictionary, IdentityLabelsAreIds)
{
    const auto d = make_dictionary(DictionaryDescriptor::identity(), {"a", "b", "c"});
    EXPECT_EQ(d.output_dim(), 3);
    EXPECT_EQ(d.labels(), (Labels{"a", "b", "c"}));
}

TEST(MakeDictionary, StatePlusConstant)
{
    const auto d = make_dictionary(DictionaryDescriptor::state_plus_constant(), {"a", "b", "c"});
    EXPECT_EQ(d.output_dim(), 4);
    EXPECT_EQ(d.labels().back(), "1");
}

TEST(MakeDictionary, PolynomialDegreeTwoOverTwoIds)
{
    const auto d = make_dictionary(DictionaryDescriptor::polynomial(2), {"x1", "x2"});
    EXPECT_EQ(d.output_dim(), 5);
    EXPECT_EQ(d.labels(), (Labels{"x1", "x2", "x1^2", "x1*x2", "x2^2"}));
}

TEST(MakeDictionary, PolynomialMatchesBruteForceEnumeration)
{
    for (int n = 1; n <= 4; ++n) {
        for (int deg = 2; deg <= 4; ++deg) {
            Labels ids;
            for (int i = 0; i < n; ++i) ids.push_back("v" + std::to_string(i));
            const auto d = make_dictionary(DictionaryDescriptor::polynomial(deg), ids);
            const auto expected = oracle::monomial_exponents(n, deg);
            ASSERT_EQ(static_cast<std::size_t>(d.output_dim()), expected.size()) << n << " " << deg;
            for (std::size_t k = 0; k < expected.size(); ++k) {
                std::vector<int> e(static_cast<std::size_t>(n), 0);
                for (int idx : d.monomials()[k]) ++e[static_cast<std::size_t>(idx)];
                EXPECT_EQ(e, expected[k]) << "monomial " << k << " n=" << n << " d=" << deg;
            }
        }
    }
}

TEST(MakeDictionary, Errors)
{
    EXPECT_THROW(make_dictionary(DictionaryDescriptor::polynomial(1), {"a"}), Error);
    EXPECT_THROW(make_dictionary(DictionaryDescriptor::identity(), {}), Error);
}

TEST(MakeDictionary, DeterministicLabels)
{
    const Labels ids{"p", "q", "r"};
    EXPECT_EQ(make_dictionary(DictionaryDescriptor::polynomial(3), ids).labels(),
              make_dictionary(DictionaryDescriptor::polynomial(3), ids).labels());
    const auto labels = make_dictionary(DictionaryDescriptor::polynomial(3), ids).labels();
    EXPECT_EQ(std::set<std::string>(labels.begin(), labels.end()).size(), labels.size());
}

TEST(Lift, IdentityReturnsInput)
{
    const auto d = make_dictionary(DictionaryDescriptor::identity(), {"a", "b"});
    const Matrix x = Matrix::Random(2, 7);
    EXPECT_EQ(d.lift(x), x);
}

TEST(Lift, StatePlusConstantAppendsOnes)
{
    const auto d = make_dictionary(DictionaryDescriptor::state_plus_constant(), {"a", "b"});
    const Matrix x = Matrix::Random(2, 3);
    const Matrix y = d.lift(x);
    EXPECT_EQ(y.topRows(2), x);
    EXPECT_EQ(y.row(2), Eigen::RowVectorXd::Ones(3));
}

TEST(Lift, PolynomialHandOracle)
{
    const auto d = make_dictionary(DictionaryDescriptor::polynomial(2), {"x1", "x2"});
    const Vector y = d.lift(Vector((Vector(2) << 2, 3).finished()));
    EXPECT_EQ(y, (Vector(5) << 2, 3, 4, 6, 9).finished());
}

TEST(Lift, ColumnwiseIndependence)
{
    const auto d = make_dictionary(DictionaryDescriptor::polynomial(3), {"a", "b", "c"});
    const Matrix x = Matrix::Random(3, 6);
    const Matrix whole = d.lift(x);
    for (Eigen::Index j = 0; j < x.cols(); ++j) EXPECT_EQ(whole.col(j), d.lift(Vector(x.col(j))));
}

TEST(Lift, DimensionMismatch)
{
    const auto d = make_dictionary(DictionaryDescriptor::identity(), {"a", "b"});
    EXPECT_THROW(d.lift(Matrix(Matrix::Zero(3, 2))), Error);
}

TEST(Lift, IdentityFitEqualsStateSpaceFit)
{
    // eDMD with psi(x) = x reduces to plain DMD on the raw snapshots.
    const Matrix a = oracle::random_stable(4, 0.9, 3);
    const Matrix traj = oracle::rollout(a, Vector::Ones(4), 12);
    const auto pair = pair_from_trajectory(traj, {"a", "b", "c", "d"});
    const auto d = make_dictionary(DictionaryDescriptor::identity(), pair.labels);
    const auto model = fit_koopman(pair, d, 1e-9);
    const Matrix direct = ridge_solve(pair.future, pair.past, 1e-9).coef;
    EXPECT_EQ(model.matrix, direct);
}

TEST(DictionaryDescriptor, JsonForms)
{
    EXPECT_EQ(dictionary_from_json("identity"), DictionaryDescriptor::identity());
    EXPECT_EQ(dictionary_from_json(nlohmann::json::parse(R"({"polynomial": 3})")), DictionaryDescriptor::polynomial(3));
    EXPECT_EQ(dictionary_from_json(to_json(DictionaryDescriptor::state_plus_constant())),
              DictionaryDescriptor::state_plus_constant());
    EXPECT_THROW(dictionary_from_json("rbf"), Error);
}
