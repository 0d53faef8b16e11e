#pragma once

#include "sdmd/data.hpp"
#include "sdmd/error.hpp"
#include "sdmd/rng.hpp"
#include "sdmd/structured.hpp"
#include "sdmd/types.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sdmd {

/// Truncation tolerance of the Taylor series inside expm.
inline constexpr double kExpmSeriesTolerance = 1e-14;

/**
 * Matrix exponential by scaling and squaring.
 *
 * A is scaled by 2^-s so that ||A||_1 / 2^s <= 1/2, the Taylor series is
 * summed until a term's 1-norm drops below kExpmSeriesTolerance times the
 * partial sum's, then the result is squared s times.
 */
inline Matrix expm(const Matrix& a)
{
    if (a.rows() != a.cols()) throw data_error("expm: matrix must be square");
    if (!a.allFinite()) throw numerical_error("expm: non-finite matrix");
    const auto n = a.rows();
    auto norm1 = [](const Matrix& m) { return m.size() ? m.cwiseAbs().colwise().sum().maxCoeff() : 0.0; };

    const double an = norm1(a);
    int s = 0;
    if (an > 0.5) s = static_cast<int>(std::ceil(std::log2(an / 0.5)));
    const Matrix b = a / std::ldexp(1.0, s);

    Matrix sum = Matrix::Identity(n, n);
    Matrix term = Matrix::Identity(n, n);
    for (int k = 1; k <= 100; ++k) {
        term = term * b / static_cast<double>(k);
        sum += term;
        if (norm1(term) <= kExpmSeriesTolerance * norm1(sum)) break;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

// ---------------------------------------------------------------------------
// Two-mass coupled oscillator

/// State layout is (x1, v1, x2, v2).
struct OscillatorParams {
    double m = 1.0;
    double k = 1.0;
    double k_c = 0.0;
    double dt = 0.1;
    int steps = 200;
    std::array<double, 4> x0{1.0, 0.0, 0.0, 0.0};

    void validate() const
    {
        if (!(m > 0.0)) throw config_error("oscillator mass must be positive");
        if (!(k > 0.0)) throw config_error("oscillator wall spring constant must be positive");
        if (!(k_c >= 0.0)) throw config_error("oscillator coupling constant must be >= 0");
        if (!(dt > 0.0)) throw config_error("oscillator timestep must be positive");
        if (steps < 1) throw config_error("oscillator steps must be positive");
        if (!(dt * std::sqrt((k + 2.0 * k_c) / m) < std::numbers::pi))
            throw config_error("oscillator timestep does not resolve the fastest mode");
        for (double v : x0)
            if (!std::isfinite(v)) throw config_error("oscillator initial state must be finite");
    }
};

/// Continuous-time generator of m x1'' = -k x1 + k_c (x2 - x1), m x2'' = -k x2 - k_c (x2 - x1).
inline Matrix oscillator_generator(const OscillatorParams& p)
{
    Matrix a = Matrix::Zero(4, 4);
    a(0, 1) = 1.0;
    a(1, 0) = -(p.k + p.k_c) / p.m;
    a(1, 2) = p.k_c / p.m;
    a(2, 3) = 1.0;
    a(3, 0) = p.k_c / p.m;
    a(3, 2) = -(p.k + p.k_c) / p.m;
    return a;
}

inline Matrix oscillator_transition(const OscillatorParams& p)
{
    p.validate();
    return expm(oscillator_generator(p) * p.dt);
}

/// Exact discrete propagation x_{t+1} = exp(A dt) x_t; returns 4 x (steps + 1).
inline Matrix simulate_oscillators(const OscillatorParams& p)
{
    const Matrix e = oscillator_transition(p);
    Matrix traj(4, p.steps + 1);
    traj.col(0) = Eigen::Map<const Vector>(p.x0.data(), 4);
    for (int t = 0; t < p.steps; ++t) traj.col(t + 1) = e * traj.col(t);
    return traj;
}

inline double oscillator_energy(const OscillatorParams& p, const Eigen::Ref<const Vector>& x)
{
    const double d = x(2) - x(0);
    return 0.5 * p.m * (x(1) * x(1) + x(3) * x(3)) + 0.5 * p.k * (x(0) * x(0) + x(2) * x(2)) + 0.5 * p.k_c * d * d;
}

inline Labels oscillator_labels() { return {"x1", "v1", "x2", "v2"}; }

// ---------------------------------------------------------------------------
// Planted block-linear systems

struct BlockInit {
    enum class Kind { zero, random };
    Kind kind = Kind::zero;
    double gain = 0.0;
    double density = 1.0;

    static BlockInit zero() { return {}; }
    static BlockInit random(double gain, double density = 1.0) { return {Kind::random, gain, density}; }
};

/**
 * x_{t+1} = T x_t + noise with T = I + D, where D is assembled from the
 * listed blocks (unlisted blocks are zero). T is rescaled when its spectral
 * radius exceeds the cap. Random entries are gain * (+-1) * U(0.5, 1.5),
 * each present with probability `density`.
 */
struct BlockSystemSpec {
    std::vector<int> group_dims;
    std::map<std::pair<int, int>, BlockInit> blocks;
    double spectral_radius_cap = 1.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    Eigen::Index dim() const
    {
        Eigen::Index n = 0;
        for (int d : group_dims) n += d;
        return n;
    }

    Eigen::Index offset(int g) const
    {
        Eigen::Index o = 0;
        for (int i = 0; i < g; ++i) o += group_dims[static_cast<std::size_t>(i)];
        return o;
    }

    void validate() const
    {
        if (group_dims.empty()) throw config_error("block system needs at least one group");
        for (int d : group_dims)
            if (d < 1) throw config_error("block system group dimensions must be positive");
        if (!(spectral_radius_cap > 0.0 && spectral_radius_cap <= 1.0))
            throw config_error("spectral radius cap must be in (0, 1]");
        if (!(noise_sigma >= 0.0)) throw config_error("noise sigma must be >= 0");
        const int ng = static_cast<int>(group_dims.size());
        for (const auto& [rc, b] : blocks) {
            if (rc.first < 0 || rc.first >= ng || rc.second < 0 || rc.second >= ng)
                throw config_error("block system block index out of range");
            if (b.kind == BlockInit::Kind::random && !(b.density > 0.0 && b.density <= 1.0))
                throw config_error("block density must be in (0, 1]");
        }
    }
};

struct BlockSystemResult {
    Matrix trajectory;
    Matrix transition;
    /// Ground-truth blocks of the transition, keyed by (row group, col group).
    std::map<std::pair<int, int>, Matrix> blocks;
    Labels labels;
};

inline double spectral_radius(const Matrix& m)
{
    Eigen::EigenSolver<Matrix> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline Matrix assemble_block_transition(const BlockSystemSpec& spec)
{
    spec.validate();
    const auto n = spec.dim();
    Matrix t = Matrix::Identity(n, n);
    Xoshiro256 rng(derive_seed(spec.seed, 0));
    for (const auto& [rc, b] : spec.blocks) {
        if (b.kind != BlockInit::Kind::random) continue;
        const auto r0 = spec.offset(rc.first);
        const auto c0 = spec.offset(rc.second);
        for (int i = 0; i < spec.group_dims[static_cast<std::size_t>(rc.first)]; ++i) {
            for (int j = 0; j < spec.group_dims[static_cast<std::size_t>(rc.second)]; ++j) {
                const double u = rng.uniform01();
                const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
                const double mag = rng.uniform(0.5, 1.5);
                if (u < b.density) t(r0 + i, c0 + j) += b.gain * sign * mag;
            }
        }
    }
    const double rho = spectral_radius(t);
    if (rho > spec.spectral_radius_cap) t *= spec.spectral_radius_cap / rho;
    return t;
}

inline Labels block_system_labels(const BlockSystemSpec& spec)
{
    Labels out;
    for (std::size_t g = 0; g < spec.group_dims.size(); ++g)
        for (int i = 0; i < spec.group_dims[g]; ++i) out.push_back("b" + std::to_string(g) + "." + std::to_string(i));
    return out;
}

inline BlockSystemResult simulate_block_system(const BlockSystemSpec& spec, int steps,
                                               const std::optional<Vector>& x0 = std::nullopt)
{
    if (steps < 1) throw config_error("block system steps must be positive");
    BlockSystemResult res;
    res.transition = assemble_block_transition(spec);
    res.labels = block_system_labels(spec);
    const auto n = spec.dim();
    const int ng = static_cast<int>(spec.group_dims.size());
    for (int r = 0; r < ng; ++r)
        for (int c = 0; c < ng; ++c)
            res.blocks[{r, c}] = res.transition.block(spec.offset(r), spec.offset(c), spec.group_dims[static_cast<std::size_t>(r)],
                                                      spec.group_dims[static_cast<std::size_t>(c)]);

    Vector start(n);
    if (x0) {
        if (x0->size() != n) throw config_error("block system x0 has wrong length");
        start = *x0;
    } else {
        Xoshiro256 rng(derive_seed(spec.seed, 2));
        for (Eigen::Index i = 0; i < n; ++i) start(i) = rng.gaussian();
    }
    Xoshiro256 noise(derive_seed(spec.seed, 1));
    res.trajectory.resize(n, steps + 1);
    res.trajectory.col(0) = start;
    for (int t = 0; t < steps; ++t) {
        Vector next = res.transition * res.trajectory.col(t);
        if (spec.noise_sigma > 0.0)
            for (Eigen::Index i = 0; i < n; ++i) next(i) += spec.noise_sigma * noise.gaussian();
        res.trajectory.col(t + 1) = next;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Toy host + circuit expression data

/// Coupling of one circuit component onto host genes.
struct PlantedCoupling {
    double gain = 0.0;
    double density = 1.0;
};

struct ToyGroup {
    std::string id;
    std::string label;
};

struct ToyCondition {
    std::string id;
    std::vector<std::string> present;
};

/**
 * Host genes plus single-variable circuit components measured across design
 * conditions. Each replicate starts from the host baseline profile perturbed
 * by `host_variation` (relative) and circuit levels drawn from U(0.5, 1.5)
 * when present (0 when absent); it then follows the planted linear dynamics
 * and every sample receives additive measurement noise.
 */
struct ToyRnaseqSpec {
    int n_genes = 429;
    std::vector<ToyGroup> groups = {
        {"I", "IPTG"}, {"A", "arabinose"}, {"P", "phlF"}, {"R", "icaR"}, {"Y", "yfp"}};
    std::vector<ToyCondition> conditions = {{"wt", {}},
                                            {"iptg", {"I"}},
                                            {"ara", {"A"}},
                                            {"iptg_phlf", {"I", "P", "Y"}},
                                            {"ara_icar", {"A", "R", "Y"}},
                                            {"nand", {"I", "A", "P", "R", "Y"}}};
    std::map<std::string, PlantedCoupling> planted = {
        {"I", {0.01, 1.0}}, {"A", {0.01, 1.0}}, {"P", {0.5, 0.6}}, {"R", {0.5, 0.95}}};
    int timepoints = 2;
    int replicates = 4;
    double noise_sigma = 1e-6;
    double host_variation = 1e-4;
    /// Host self-dynamics: diagonal in [host_decay_min, host_decay_max] plus sparse off-diagonal terms.
    double host_decay_min = 0.8;
    double host_decay_max = 1.0;
    double host_offdiag_gain = 0.02;
    double host_offdiag_density = 0.01;
    double circuit_decay = 0.9;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (n_genes < 1) throw config_error("toy data needs at least one gene");
        if (timepoints < 2) throw config_error("toy data needs at least two timepoints");
        if (replicates < 1) throw config_error("toy data needs at least one replicate");
        if (!(noise_sigma >= 0.0) || !(host_variation >= 0.0)) throw config_error("noise levels must be >= 0");
        std::map<std::string, int> ids;
        for (const auto& g : groups) {
            if (g.id.empty() || g.id == "H") throw config_error("toy circuit group id must be nonempty and not 'H'");
            if (!ids.emplace(g.id, 0).second) throw config_error("duplicate toy group " + g.id);
        }
        for (const auto& c : conditions)
            for (const auto& g : c.present)
                if (!ids.count(g)) throw config_error("condition '" + c.id + "' uses unknown group '" + g + "'");
        for (const auto& [g, pc] : planted) {
            if (!ids.count(g)) throw config_error("planted coupling for unknown group '" + g + "'");
            if (!(pc.density > 0.0 && pc.density <= 1.0)) throw config_error("planted density must be in (0, 1]");
        }
    }
};

struct ToyRnaseqDataset {
    SnapshotEnsemble ensemble;
    Partition partition;
    /// Host-to-host transition.
    Matrix host_transition;
    /// Planted host <- circuit coupling per group (n_genes x 1).
    std::map<std::string, Matrix> couplings;
    Labels gene_ids;
};

inline std::string toy_gene_id(int i)
{
    char buf[16];
    std::snprintf(buf, sizeof(buf), "g%04d", i + 1);
    return buf;
}

inline ToyRnaseqDataset make_toy_rnaseq(const ToyRnaseqSpec& spec)
{
    spec.validate();
    const Eigen::Index n = spec.n_genes;
    const Eigen::Index nc = static_cast<Eigen::Index>(spec.groups.size());

    Labels ids;
    for (int i = 0; i < spec.n_genes; ++i) ids.push_back(toy_gene_id(i));
    const Labels gene_ids = ids;
    for (const auto& g : spec.groups) ids.push_back(g.label);

    Xoshiro256 model_rng(derive_seed(spec.seed, 10));
    Matrix th = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) th(i, i) = model_rng.uniform(spec.host_decay_min, spec.host_decay_max);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double u = model_rng.uniform01();
            if (u < spec.host_offdiag_density) th(i, j) += spec.host_offdiag_gain * model_rng.uniform(-1.0, 1.0);
        }
    const double rho = spectral_radius(th);
    if (rho > 1.0) th /= rho;

    std::map<std::string, Matrix> couplings;
    Xoshiro256 couple_rng(derive_seed(spec.seed, 11));
    for (const auto& g : spec.groups) {
        Matrix b = Matrix::Zero(n, 1);
        auto it = spec.planted.find(g.id);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double u = couple_rng.uniform01();
            const double sign = couple_rng.uniform01() < 0.5 ? -1.0 : 1.0;
            const double mag = couple_rng.uniform(0.5, 1.5);
            if (it != spec.planted.end() && u < it->second.density) b(i, 0) = it->second.gain * sign * mag;
        }
        couplings.emplace(g.id, std::move(b));
    }

    Matrix full = Matrix::Zero(n + nc, n + nc);
    full.topLeftCorner(n, n) = th;
    for (Eigen::Index c = 0; c < nc; ++c) {
        full.block(0, n + c, n, 1) = couplings.at(spec.groups[static_cast<std::size_t>(c)].id);
        full(n + c, n + c) = spec.circuit_decay;
    }

    Vector baseline(n);
    Xoshiro256 base_rng(derive_seed(spec.seed, 12));
    for (Eigen::Index i = 0; i < n; ++i) baseline(i) = std::exp(0.5 * base_rng.gaussian());

    Xoshiro256 state_rng(derive_seed(spec.seed, 13));
    Xoshiro256 noise_rng(derive_seed(spec.seed, 14));
    std::vector<Sample> samples;
    for (const auto& cond : spec.conditions) {
        for (int r = 1; r <= spec.replicates; ++r) {
            Vector x(n + nc);
            for (Eigen::Index i = 0; i < n; ++i) x(i) = baseline(i) * (1.0 + spec.host_variation * state_rng.gaussian());
            for (Eigen::Index c = 0; c < nc; ++c) {
                const double level = state_rng.uniform(0.5, 1.5);
                const auto& gid = spec.groups[static_cast<std::size_t>(c)].id;
                const bool present = std::find(cond.present.begin(), cond.present.end(), gid) != cond.present.end();
                x(n + c) = present ? level : 0.0;
            }
            for (int t = 0; t < spec.timepoints; ++t) {
                Sample s;
                s.name = cond.id + "_t" + std::to_string(t) + "_r" + std::to_string(r);
                s.key = {cond.id, t, r};
                s.values = x;
                if (spec.noise_sigma > 0.0)
                    for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values(i) += spec.noise_sigma * noise_rng.gaussian();
                samples.push_back(std::move(s));
                x = full * x;
            }
        }
    }

    std::vector<Group> groups{{"H", gene_ids}};
    for (const auto& g : spec.groups) groups.push_back({g.id, {g.label}});

    return ToyRnaseqDataset{SnapshotEnsemble(ids, std::move(samples)), Partition(std::move(groups)), th,
                            std::move(couplings), gene_ids};
}

/**
 * The six-model NAND build-up: host, each inducer, each inducer + inverter +
 * reporter, then the full circuit with every earlier block frozen.
 */
inline std::vector<StageSpec> nand_hierarchy(std::optional<double> lambda = std::nullopt)
{
    return {
        {"K_H", "wt", "H", {}, {"H"}, lambda},
        {"K_HI", "iptg", "H", {{"K_H", "H"}}, {"I"}, lambda},
        {"K_HA", "ara", "H", {{"K_H", "H"}}, {"A"}, lambda},
        {"K_HIPY", "iptg_phlf", "H", {{"K_H", "H"}, {"K_HI", "I"}}, {"P", "Y"}, lambda},
        {"K_HARY", "ara_icar", "H", {{"K_H", "H"}, {"K_HA", "A"}}, {"R", "Y"}, lambda},
        {"K_HAIRPY", "nand", "H", {{"K_H", "H"}, {"K_HI", "I"}, {"K_HA", "A"}, {"K_HIPY", "P"}, {"K_HARY", "R"}}, {"Y"}, lambda},
    };
}

} // namespace sdmd
