#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace sdmd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<std::string>;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Shortest decimal string that parses back to exactly the same double.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Parses a complete decimal numeral; returns false on trailing garbage.
inline bool parse_double(std::string_view text, double& out)
{
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

/// Relative Frobenius distance ||a - b|| / ||b||.
inline double relative_error(const Matrix& a, const Matrix& b)
{
    const double denom = b.norm();
    return denom == 0.0 ? (a - b).norm() : (a - b).norm() / denom;
}

} // namespace sdmd
