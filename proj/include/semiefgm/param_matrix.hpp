#pragma once

#include "errors.hpp"
#include "linalg.hpp"

namespace semiefgm {

enum class DiagMode { fixed_one, free };
enum class Role { truth, estimate };

/// Symmetric p x p parameter matrix. Off-diagonals carry edge weights
/// (zero means no edge); the diagonal carries node weights.
struct ParamMatrix {
    Matrix theta;
    DiagMode diag_mode = DiagMode::fixed_one;
    Role role = Role::estimate;

    Index p() const { return theta.rows(); }

    static ParamMatrix identity(Index p, Role role)
    {
        return {Matrix::Identity(p, p), DiagMode::fixed_one, role};
    }

    void validate() const
    {
        detail::require(theta.rows() == theta.cols(), "ParamMatrix: theta must be square");
        detail::require(symmetry_error(theta) <= 1e-12, "ParamMatrix: theta must be symmetric");
        if (diag_mode == DiagMode::fixed_one)
            for (Index s = 0; s < p(); ++s)
                detail::require(theta(s, s) == 1.0, "ParamMatrix: fixed_one diagonal must be exactly 1");
    }

    /// Number of unordered pairs s < t with |theta_st| > threshold.
    Index edge_count(double threshold = 0.0) const
    {
        Index count = 0;
        for (Index s = 0; s < p(); ++s)
            for (Index t = s + 1; t < p(); ++t)
                if (std::abs(theta(s, t)) > threshold) ++count;
        return count;
    }
};

} // namespace semiefgm
