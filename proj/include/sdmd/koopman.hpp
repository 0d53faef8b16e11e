#pragma once

#include "sdmd/data.hpp"
#include "sdmd/error.hpp"
#include "sdmd/observables.hpp"
#include "sdmd/ridge.hpp"
#include "sdmd/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace sdmd {

struct FitMeta {
    double lambda = 0.0;
    std::optional<AugmentationConfig> augmentation;
    double residual_fro = 0.0;
    Eigen::Index column_count = 0;
    Eigen::Index rank = 0;
    std::optional<std::string> warning;
};

/// Approximate Koopman matrix: rows are future observables, columns past observables.
struct KoopmanModel {
    Matrix matrix;
    Labels row_labels;
    Labels col_labels;
    ObservableDictionary dictionary;
    FitMeta fit_meta;
};

/**
 * Fits K minimizing ||Psi(X_f) - K Psi(X_p)||_F^2 + lambda ||K||_F^2.
 *
 * A zero lambda on rank-deficient lifted data returns the minimum-norm
 * solution and records a warning in fit_meta instead of failing.
 */
inline KoopmanModel fit_koopman(const SnapshotPair& pair, const ObservableDictionary& dict, double lambda)
{
    pair.validate();
    if (pair.cols() < 1) throw data_error("fit_koopman: snapshot pair has no columns");
    if (pair.rows() != dict.input_dim())
        throw data_error("fit_koopman: pair has " + std::to_string(pair.rows()) + " rows, dictionary expects " +
                         std::to_string(dict.input_dim()));

    const Matrix past = dict.lift(pair.past);
    const Matrix future = dict.lift(pair.future);
    auto sol = ridge_solve(future, past, lambda);

    KoopmanModel model{std::move(sol.coef), dict.labels(), dict.labels(), dict, {}};
    model.fit_meta.lambda = lambda;
    model.fit_meta.augmentation = pair.augmentation;
    model.fit_meta.residual_fro = (future - model.matrix * past).norm();
    model.fit_meta.column_count = pair.cols();
    model.fit_meta.rank = sol.rank;
    if (sol.rank_deficient)
        model.fit_meta.warning = "rank-deficient lifted snapshots (rank " + std::to_string(sol.rank) + " < " +
                                 std::to_string(past.rows()) + "); minimum-norm solution returned";
    return model;
}

/// Same fit with lambda = kDefaultLambdaScale * sigma_max(Psi(X_p))^2.
inline KoopmanModel fit_koopman(const SnapshotPair& pair, const ObservableDictionary& dict)
{
    if (pair.rows() != dict.input_dim()) return fit_koopman(pair, dict, 0.0); // reports the mismatch
    return fit_koopman(pair, dict, default_lambda(dict.lift(pair.past)));
}

/// Rolls the lifted state forward: column 0 = psi(x0), column t+1 = K * column t.
inline Matrix predict(const KoopmanModel& model, const Vector& x0, int steps)
{
    if (steps < 1) throw config_error("predict: steps must be positive");
    if (x0.size() != model.dictionary.input_dim())
        throw data_error("predict: x0 has length " + std::to_string(x0.size()) + ", dictionary expects " +
                         std::to_string(model.dictionary.input_dim()));
    Matrix out(model.matrix.rows(), steps + 1);
    out.col(0) = model.dictionary.lift(x0);
    for (int t = 0; t < steps; ++t) out.col(t + 1) = model.matrix * out.col(t);
    return out;
}

/// ||Psi(X_f) - K Psi(X_p)||_F / ||Psi(X_f)||_F on the given pair.
inline double one_step_residual(const KoopmanModel& model, const SnapshotPair& pair)
{
    pair.validate();
    if (pair.rows() != model.dictionary.input_dim())
        throw data_error("one_step_residual: pair dimension does not match the model dictionary");
    const Matrix past = model.dictionary.lift(pair.past);
    const Matrix future = model.dictionary.lift(pair.future);
    const double denom = future.norm();
    if (denom == 0.0) throw numerical_error("one_step_residual: future snapshot matrix has zero norm");
    return (future - model.matrix * past).norm() / denom;
}

struct SpectrumResult {
    std::vector<std::complex<double>> eigenvalues;
    /// Right eigenvectors, column i paired with eigenvalues[i], unit 2-norm.
    Eigen::MatrixXcd modes;
    /// max_i ||K v_i - lambda_i v_i|| / ||K||_F.
    double pairing_residual = 0.0;
    /// Eigenvector matrix is numerically singular (reciprocal condition below kDefectiveTolerance).
    bool defective = false;

    static constexpr double kDefectiveTolerance = 1e-8;
};

/**
 * Eigendecomposition of K sorted by descending modulus (ties: larger
 * imaginary part first, then larger real part). Each mode is scaled to unit
 * norm with its largest-magnitude component real and positive.
 */
inline SpectrumResult spectrum(const Matrix& k)
{
    if (k.rows() != k.cols() || k.rows() == 0) throw data_error("spectrum: matrix must be square and nonempty");
    if (!k.allFinite()) throw numerical_error("spectrum: non-finite matrix");

    Eigen::EigenSolver<Matrix> es(k, true);
    if (es.info() != Eigen::Success) throw numerical_error("spectrum: eigen-decomposition did not converge");
    const Eigen::VectorXcd vals = es.eigenvalues();
    const Eigen::MatrixXcd vecs = es.eigenvectors();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(vals.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double ma = std::abs(vals(a));
        const double mb = std::abs(vals(b));
        if (ma != mb) return ma > mb;
        if (vals(a).imag() != vals(b).imag()) return vals(a).imag() > vals(b).imag();
        return vals(a).real() > vals(b).real();
    });

    SpectrumResult res;
    res.modes.resize(k.rows(), k.cols());
    const double kn = k.norm();
    for (std::size_t c = 0; c < order.size(); ++c) {
        const auto src = order[c];
        Eigen::VectorXcd v = vecs.col(src);
        const double n = v.norm();
        if (n > 0.0) v /= n;
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (std::abs(v(imax)) > 0.0) v *= std::conj(v(imax)) / std::abs(v(imax));
        res.modes.col(static_cast<Eigen::Index>(c)) = v;
        res.eigenvalues.push_back(vals(src));
        const double r = (k.cast<std::complex<double>>() * v - vals(src) * v).norm();
        res.pairing_residual = std::max(res.pairing_residual, kn > 0.0 ? r / kn : r);
    }

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(res.modes);
    const auto& s = svd.singularValues();
    res.defective = s(0) == 0.0 || s(s.size() - 1) / s(0) < SpectrumResult::kDefectiveTolerance;
    return res;
}

inline SpectrumResult spectrum(const KoopmanModel& model) { return spectrum(model.matrix); }

} // namespace sdmd
