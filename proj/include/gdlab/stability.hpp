#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdlab/problems.hpp"

namespace gdlab {

enum class FixedPointClass { Stable, Unstable, Marginal };

const char* to_string(FixedPointClass c);

/// Spectrum of the GD-map Jacobian at a fixed point plus the resulting
/// classification. The strict label follows the eigenvalue moduli with a
/// tolerance band around 1; the manifold-aware label additionally exempts
/// modulus-1 directions lying in the Hessian nullspace (the flat
/// directions created by homogeneity), so it is binary.
struct StabilityReport {
    std::vector<double> eigenvalues;  // of I - h Hessian, ascending
    FixedPointClass classification = FixedPointClass::Marginal;
    FixedPointClass manifold_aware = FixedPointClass::Stable;  // never Marginal
    double empirical_c = 0.0;  // lambda_max(Hessian) / (|X|_F^2 + |Y|_F^2)

    std::string csv_row() const;  // lambda_min,lambda_max,classification,manifold_aware,empirical_c
};

/// Jacobian of one GD step u -> u - h grad f(u): the symmetric matrix
/// I - h Hessian, assembled in the vec(X)-then-vec(Y) ordering.
Matrix gd_jacobian(const Problem& p, const FactorState& s, double h);

/// Classify a (numerical) fixed point. Requires the gradient norm below
/// 1e-8 (1 + |state|_F); tol is the modulus band around 1.
StabilityReport classify_fixed_point(const Problem& p, const FactorState& s, double h,
                                     double tol = 1e-8);

/// Closed-form Jacobian spectrum at a fixed point (x, y) of the rank-1
/// factorization of a non-negative diagonal target: for each diagonal
/// entry mu_i the pair 1 + roots of t^2 + h u^2 t + h^2 (mu^2 - mu_i^2)
/// with mu^2 = (x.x)(y.y). Returned ascending, 2n values.
std::vector<double> rank1_diagonal_spectrum(const Matrix& x, const Matrix& y,
                                            const Matrix& diag_target, double h);

/// A representative fixed point supported on one diagonal block:
/// |x| = sqrt(mu_i * norm_ratio), |y| = sqrt(mu_i / norm_ratio), x and y
/// colinear with all block mass on the block's first coordinate.
FactorState fixed_point_family(const Matrix& diag_target, std::size_t block_index,
                               double norm_ratio);

/// Numeric and closed-form traces of the factorization Hessian M:
/// Tr(M) = n (|X|_F^2 + |Y|_F^2) everywhere, and at critical points
/// Tr(M^2) = 2 |X|^2 |Y|^2 + n (|X^T X|^2 + |Y^T Y|^2) + 2d |A - X Y^T|^2.
struct HessianTraces {
    double tr_numeric = 0.0;
    double tr2_numeric = 0.0;
    double tr_closed = 0.0;
    double tr2_closed = 0.0;
};

HessianTraces hessian_traces(const Matrix& a, const FactorState& s);

/// Change of variables X = U R, Y = V S that turns factorization of A
/// into factorization of its singular value matrix D.
struct RotatedProblem {
    Matrix d;
    Matrix u;
    Matrix v;
    FactorState rotated_init;  // R0 = U^T X0, S0 = V^T Y0
};

RotatedProblem rotate_to_diagonal(const Matrix& a, const FactorState& s0);

/// Largest Hessian eigenvalue, via dense eigendecomposition for small
/// systems and shifted power iteration (matrix-free) otherwise.
double lambda_max_hessian(const Problem& p, const FactorState& s, std::uint64_t seed = 12345);

/// lambda_max(Hessian) / (|X|_F^2 + |Y|_F^2) at a numerical minimum; the
/// stability route then bounds the joint norm by 2 / (h empirical_c).
double empirical_c(const Problem& p, const FactorState& s);

}  // namespace gdlab
