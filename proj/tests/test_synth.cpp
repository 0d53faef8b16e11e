#include "sdmd/koopman.hpp"
#include "sdmd/synth.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using namespace sdmd;

namespace {

/// Two-mass equations of motion written out directly (independent of oscillator_generator).
Vector rk4_oscillator(const OscillatorParams& p, Vector x, double total, int n)
{
    auto f = [&](const Vector& s) {
        Vector d(4);
        d(0) = s(1);
        d(1) = (-p.k * s(0) + p.k_c * (s(2) - s(0))) / p.m;
        d(2) = s(3);
        d(3) = (-p.k * s(2) - p.k_c * (s(2) - s(0))) / p.m;
        return d;
    };
    const double h = total / n;
    for (int i = 0; i < n; ++i) {
        const Vector k1 = f(x);
        const Vector k2 = f(x + 0.5 * h * k1);
        const Vector k3 = f(x + 0.5 * h * k2);
        const Vector k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

bool same_bytes(const Matrix& a, const Matrix& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * std::size_t(a.size())) == 0;
}

} // namespace

TEST(Expm, ZeroAndDiagonal)
{
    EXPECT_EQ(expm(Matrix::Zero(3, 3)), Matrix(Matrix::Identity(3, 3)));
    const Vector d = (Vector(3) << -2.0, 0.3, 5.0).finished();
    const Matrix e = expm(Matrix(d.asDiagonal()));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(e(i, i) / std::exp(d(i)), 1.0, 1e-13);
    EXPECT_NEAR(e(0, 1), 0.0, 1e-15);
}

TEST(Expm, RotationGenerator)
{
    for (double th : {0.1, 1.0, 7.5}) {
        Matrix a(2, 2);
        a << 0, -th, th, 0;
        const Matrix e = expm(a);
        EXPECT_NEAR(e(0, 0), std::cos(th), 1e-13);
        EXPECT_NEAR(e(1, 0), std::sin(th), 1e-13);
        EXPECT_NEAR(e(0, 1), -std::sin(th), 1e-13);
    }
}

TEST(Expm, MatchesRk4OnRandomGenerator)
{
    const Matrix a = oracle::random_matrix(5, 5, 12) * 0.4;
    const Matrix e = expm(a);
    for (int j = 0; j < 5; ++j) {
        const Vector ref = oracle::rk4_linear(a, Vector::Unit(5, j), 1.0, 2000);
        EXPECT_LT((e.col(j) - ref).norm() / ref.norm(), 1e-11);
    }
}

TEST(Expm, Errors)
{
    EXPECT_THROW(expm(Matrix::Ones(2, 3)), Error);
    Matrix bad = Matrix::Ones(2, 2);
    bad(0, 0) = std::nan("");
    EXPECT_THROW(expm(bad), Error);
}

TEST(Oscillators, DecoupledMatchesCosine)
{
    OscillatorParams p;
    p.k = 2.0;
    p.m = 0.5;
    p.dt = 0.05;
    p.steps = 400;
    const Matrix traj = simulate_oscillators(p);
    ASSERT_EQ(traj.rows(), 4);
    ASSERT_EQ(traj.cols(), 401);
    const double w = std::sqrt(p.k / p.m);
    for (int t = 0; t <= p.steps; ++t) {
        EXPECT_NEAR(traj(0, t), std::cos(w * p.dt * t), 1e-10) << t;
        EXPECT_EQ(traj(2, t), 0.0);
        EXPECT_EQ(traj(3, t), 0.0);
    }
}

TEST(Oscillators, EnergyConserved)
{
    for (double kc : {0.0, 0.5, 2.0}) {
        OscillatorParams p;
        p.k_c = kc;
        p.x0 = {1.0, -0.3, 0.2, 0.7};
        const Matrix traj = simulate_oscillators(p);
        const double e0 = oscillator_energy(p, traj.col(0));
        for (int t = 1; t <= p.steps; ++t)
            ASSERT_LT(std::abs(oscillator_energy(p, traj.col(t)) - e0) / e0, 1e-9) << "k_c=" << kc << " t=" << t;
    }
}

TEST(Oscillators, MatchesFineStepRk4)
{
    OscillatorParams p;
    p.k_c = 0.5;
    p.x0 = {1.0, 0.0, -0.4, 0.25};
    const Matrix traj = simulate_oscillators(p);
    Vector x = traj.col(0);
    for (int t = 0; t < p.steps; ++t) {
        x = rk4_oscillator(p, x, p.dt, 1000);
        ASSERT_LT((traj.col(t + 1) - x).cwiseAbs().maxCoeff(), 1e-8) << t;
    }
}

TEST(Oscillators, Validation)
{
    OscillatorParams p;
    p.m = 0;
    EXPECT_THROW(simulate_oscillators(p), Error);
    p = {};
    p.k_c = -1;
    EXPECT_THROW(simulate_oscillators(p), Error);
    p = {};
    p.dt = 3.5; // dt * sqrt(k/m) > pi
    EXPECT_THROW(simulate_oscillators(p), Error);
    p = {};
    p.steps = 0;
    EXPECT_THROW(simulate_oscillators(p), Error);
}

TEST(Oscillators, FitRecoversPropagator)
{
    OscillatorParams p;
    p.k_c = 0.5;
    p.x0 = {1.0, 0.0, 0.3, -0.2};
    const auto pair = pair_from_trajectory(simulate_oscillators(p), oscillator_labels());
    const auto model = fit_koopman(pair, make_dictionary(DictionaryDescriptor::identity(), pair.labels), 1e-12);
    const Matrix truth = oscillator_transition(p);
    EXPECT_LT((model.matrix - truth).norm() / truth.norm(), 1e-8);
}

TEST(BlockSystem, AllZeroBlocksKeepStateConstant)
{
    BlockSystemSpec s;
    s.group_dims = {2, 3};
    s.blocks[{0, 1}] = BlockInit::zero();
    const auto res = simulate_block_system(s, 10);
    for (int t = 1; t <= 10; ++t) EXPECT_EQ(res.trajectory.col(t), res.trajectory.col(0));
    EXPECT_EQ(res.labels, (Labels{"b0.0", "b0.1", "b1.0", "b1.1", "b1.2"}));
}

TEST(BlockSystem, SeedDeterminism)
{
    BlockSystemSpec s;
    s.group_dims = {3, 2};
    s.blocks[{0, 0}] = BlockInit::random(0.3, 0.5);
    s.blocks[{0, 1}] = BlockInit::random(0.3);
    s.noise_sigma = 1e-3;
    s.seed = 77;
    const auto a = simulate_block_system(s, 30);
    const auto b = simulate_block_system(s, 30);
    EXPECT_TRUE(same_bytes(a.trajectory, b.trajectory));
    EXPECT_TRUE(same_bytes(a.transition, b.transition));
    s.seed = 78;
    EXPECT_FALSE(same_bytes(a.trajectory, simulate_block_system(s, 30).trajectory));
}

TEST(BlockSystem, SpectralRadiusCapAndBlocks)
{
    BlockSystemSpec s;
    s.group_dims = {4, 2};
    s.blocks[{0, 0}] = BlockInit::random(1.0);
    s.blocks[{1, 0}] = BlockInit::random(1.0);
    s.spectral_radius_cap = 0.9;
    const auto res = simulate_block_system(s, 2);
    EXPECT_LE(spectral_radius(res.transition), 0.9 + 1e-12);
    EXPECT_EQ(res.blocks.size(), 4u);
    EXPECT_EQ(res.blocks.at({1, 0}), res.transition.block(4, 0, 2, 4));
    // Unlisted block (0, 1) is exactly zero.
    EXPECT_EQ(res.blocks.at({0, 1}), Matrix(Matrix::Zero(4, 2)));
}

TEST(BlockSystem, Validation)
{
    BlockSystemSpec s;
    EXPECT_THROW(simulate_block_system(s, 1), Error);
    s.group_dims = {2, 0};
    EXPECT_THROW(simulate_block_system(s, 1), Error);
    s.group_dims = {2};
    s.blocks[{0, 1}] = BlockInit::random(1.0);
    EXPECT_THROW(simulate_block_system(s, 1), Error);
    s.blocks.clear();
    s.blocks[{0, 0}] = BlockInit::random(1.0, 0.0);
    EXPECT_THROW(simulate_block_system(s, 1), Error);
    s.blocks.clear();
    s.spectral_radius_cap = 1.5;
    EXPECT_THROW(simulate_block_system(s, 1), Error);
}

TEST(BlockSystem, FitRecoversTransition)
{
    BlockSystemSpec s;
    s.group_dims = {3, 3};
    s.blocks[{0, 0}] = BlockInit::random(0.3);
    s.blocks[{0, 1}] = BlockInit::random(0.3, 0.5);
    s.blocks[{1, 1}] = BlockInit::random(0.3);
    s.spectral_radius_cap = 0.98;
    s.seed = 3;
    std::vector<SnapshotPair> parts;
    for (int r = 0; r < 3; ++r) {
        const auto res = simulate_block_system(s, 4, oracle::random_matrix(6, 1, 50 + r).col(0));
        parts.push_back(pair_from_trajectory(res.trajectory, res.labels, "b", r));
    }
    const auto pair = concat_pairs(parts);
    const auto model = fit_koopman(pair, make_dictionary(DictionaryDescriptor::identity(), pair.labels), 1e-12);
    const Matrix truth = assemble_block_transition(s);
    EXPECT_LT((model.matrix - truth).norm() / truth.norm(), 1e-8);
}

TEST(ToyRnaseq, DefaultShape)
{
    const auto toy = make_toy_rnaseq({});
    EXPECT_EQ(toy.ensemble.num_variables(), 429u + 5u);
    EXPECT_EQ(toy.ensemble.conditions().size(), 6u);
    for (const auto& c : toy.ensemble.conditions()) {
        EXPECT_EQ(toy.ensemble.timepoints(c), (std::vector<int>{0, 1}));
        EXPECT_EQ(toy.ensemble.replicates(c), (std::vector<int>{1, 2, 3, 4}));
        EXPECT_EQ(build_snapshot_pairs(toy.ensemble, c).cols(), 4);
    }
    EXPECT_EQ(toy.partition.groups().size(), 6u);
    EXPECT_EQ(toy.partition.group("H").members.size(), 429u);
    EXPECT_EQ(toy.partition.group("R").members, Labels{"icaR"});
    EXPECT_EQ(toy.gene_ids.front(), "g0001");
    EXPECT_EQ(toy.gene_ids.back(), "g0429");
}

TEST(ToyRnaseq, IdentityDynamicsWithoutNoise)
{
    ToyRnaseqSpec spec;
    spec.n_genes = 30;
    spec.noise_sigma = 0.0;
    spec.host_decay_min = spec.host_decay_max = 1.0;
    spec.host_offdiag_gain = 0.0;
    spec.circuit_decay = 1.0;
    spec.planted.clear();
    const auto toy = make_toy_rnaseq(spec);
    for (const auto& c : toy.ensemble.conditions()) {
        const auto pair = build_snapshot_pairs(toy.ensemble, c);
        EXPECT_EQ(pair.past, pair.future) << c;
    }
}

TEST(ToyRnaseq, PlantedCouplingShapes)
{
    const auto toy = make_toy_rnaseq({});
    const auto nnz = [](const Matrix& m) { return (m.array() != 0.0).count(); };
    const auto& r = toy.couplings.at("R");
    const auto& p = toy.couplings.at("P");
    EXPECT_EQ(r.rows(), 429);
    EXPECT_NEAR(double(nnz(r)) / 429.0, 0.95, 0.04);
    EXPECT_NEAR(double(nnz(p)) / 429.0, 0.6, 0.06);
    EXPECT_EQ(nnz(toy.couplings.at("Y")), 0);
    EXPECT_NEAR(r.cwiseAbs().maxCoeff(), 0.75, 0.01);
}

TEST(ToyRnaseq, AbsentComponentsAreZero)
{
    const auto toy = make_toy_rnaseq({});
    const auto pair = build_snapshot_pairs(toy.ensemble, "wt");
    const Eigen::Index n = 429;
    EXPECT_LT(pair.past.bottomRows(5).cwiseAbs().maxCoeff(), 1e-5); // only measurement noise
    EXPECT_GT(build_snapshot_pairs(toy.ensemble, "ara_icar").past.row(n + 3).minCoeff(), 0.4);
}

TEST(ToyRnaseq, SeedDeterminism)
{
    ToyRnaseqSpec spec;
    spec.n_genes = 40;
    const auto a = make_toy_rnaseq(spec);
    const auto b = make_toy_rnaseq(spec);
    EXPECT_TRUE(same_bytes(a.ensemble.matrix(), b.ensemble.matrix()));
    spec.seed = 1;
    EXPECT_FALSE(same_bytes(a.ensemble.matrix(), make_toy_rnaseq(spec).ensemble.matrix()));
}

TEST(ToyRnaseq, Validation)
{
    ToyRnaseqSpec spec;
    spec.timepoints = 1;
    EXPECT_THROW(make_toy_rnaseq(spec), Error);
    spec = {};
    spec.conditions.push_back({"bad", {"Q"}});
    EXPECT_THROW(make_toy_rnaseq(spec), Error);
    spec = {};
    spec.groups.push_back({"H", "host"});
    EXPECT_THROW(make_toy_rnaseq(spec), Error);
}
