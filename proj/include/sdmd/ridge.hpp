#pragma once

#include "sdmd/error.hpp"
#include "sdmd/types.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace sdmd {

/// Relative cutoff below which singular values count as zero in an unregularized solve.
inline constexpr double kRankTolerance = 1e-12;

/// Scale of the default ridge parameter: lambda = kDefaultLambdaScale * sigma_max(P)^2.
inline constexpr double kDefaultLambdaScale = 1e-6;

struct RidgeSolution {
    Matrix coef;
    Eigen::Index rank = 0;
    double sigma_max = 0.0;
    /// Set when lambda == 0 and the regressors do not determine coef uniquely.
    bool rank_deficient = false;
};

inline double sigma_max(const Matrix& m)
{
    if (m.size() == 0) return 0.0;
    Eigen::BDCSVD<Matrix> svd(m);
    return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

inline double default_lambda(const Matrix& regressors)
{
    const double s = sigma_max(regressors);
    return kDefaultLambdaScale * s * s;
}

/**
 * Solves min_B ||Y - B X||_F^2 + lambda ||B||_F^2 for B (p x q), with
 * Y = target (p x m) and X = regressors (q x m).
 *
 * Uses the thin SVD X = U S V^T and the filter factors s / (s^2 + lambda), so
 * B = Y V diag(s / (s^2 + lambda)) U^T. With lambda == 0 singular values below
 * kRankTolerance * s_max are dropped, which yields the minimum-norm solution.
 */
inline RidgeSolution ridge_solve(const Matrix& target, const Matrix& regressors, double lambda)
{
    if (regressors.rows() == 0) throw data_error("ridge solve: regressor matrix has no rows");
    if (regressors.cols() == 0) throw data_error("ridge solve: no snapshot columns");
    if (target.cols() != regressors.cols())
        throw data_error("ridge solve: target has " + std::to_string(target.cols()) + " columns, regressors have " +
                         std::to_string(regressors.cols()));
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw config_error("ridge parameter lambda must be finite and >= 0");
    if (!target.allFinite() || !regressors.allFinite()) throw data_error("ridge solve: non-finite entries");

    Eigen::BDCSVD<Matrix> svd(regressors, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();

    RidgeSolution sol;
    sol.sigma_max = s.size() ? s(0) : 0.0;
    const double cutoff = kRankTolerance * sol.sigma_max;

    Vector filter = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > cutoff && s(i) > 0.0) ++sol.rank;
        if (lambda == 0.0) {
            if (s(i) > cutoff && s(i) > 0.0) filter(i) = 1.0 / s(i);
        } else {
            filter(i) = s(i) / (s(i) * s(i) + lambda);
        }
    }
    sol.rank_deficient = lambda == 0.0 && sol.rank < regressors.rows();
    sol.coef = (target * svd.matrixV()) * filter.asDiagonal() * svd.matrixU().transpose();
    return sol;
}

} // namespace sdmd
