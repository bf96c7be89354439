#pragma once

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "gdlab/matrix.hpp"

namespace gdlab {

// The five objective families. All of them factor a target through the
// product X Y^T with X, Y in R^{n x d}; the scalar family is the n = 1
// shape, the rank-one isotropic family the d = 1 shape against mu * I.

struct ScalarFactorization {
    double mu;
    std::size_t d;
    ScalarFactorization(double mu_, std::size_t d_);
};

struct RankOneIsotropic {
    double mu;
    std::size_t n;
    RankOneIsotropic(double mu_, std::size_t n_);
};

struct GeneralFactorization {
    Matrix a;  // square target
    std::size_t d;
    GeneralFactorization(Matrix a_, std::size_t d_);
};

struct MatrixSensing {
    std::vector<Matrix> sensors;  // each n x n
    std::vector<double> b;        // one measurement per sensor
    std::size_t d;
    MatrixSensing(std::vector<Matrix> sensors_, std::vector<double> b_, std::size_t d_);
};

struct MatrixCompletion {
    Matrix a;                        // square target
    std::vector<std::uint8_t> mask;  // row-major n*n, nonzero = observed
    std::size_t d;
    MatrixCompletion(Matrix a_, std::vector<std::uint8_t> mask_, std::size_t d_);
};

using Problem = std::variant<ScalarFactorization, RankOneIsotropic, GeneralFactorization,
                             MatrixSensing, MatrixCompletion>;

/// The GD iterate: the pair of factor matrices, each n x d.
struct FactorState {
    Matrix x;
    Matrix y;
};

std::size_t state_rows(const Problem& p);
std::size_t state_cols(const Problem& p);
void check_shapes(const Problem& p, const FactorState& s);

bool is_factorization_family(const Problem& p);

/// Materialized target A for the factorization families (scalar target is
/// 1x1, isotropic is mu * I); throws for sensing/completion.
Matrix target_matrix(const Problem& p);

double loss(const Problem& p, const FactorState& s);

/// Gradient pair (G_X, G_Y), same shapes as the state.
std::pair<Matrix, Matrix> gradient(const Problem& p, const FactorState& s);

double gradient_fro_norm(const Problem& p, const FactorState& s);

/// Loss and gradient from one residual evaluation.
struct LossGrad {
    double loss = 0.0;
    Matrix gx;
    Matrix gy;
};

LossGrad loss_and_gradient(const Problem& p, const FactorState& s);

/// Full second-derivative matrix, 2nd x 2nd, in the column-stacked
/// vec(X)-then-vec(Y) ordering. Factorization families only.
Matrix hessian(const Problem& p, const FactorState& s);

/// Action of the Hessian on a tangent pair, without assembling the
/// matrix. Supported for all five families.
std::pair<Matrix, Matrix> hessian_apply(const Problem& p, const FactorState& s,
                                        const Matrix& dx, const Matrix& dy);

/// Closed-form Hessian eigenvalue multiset for the scalar family:
/// +/-(mu - x.y) each repeated d-1 times plus the two roots
/// (u^2 +/- sqrt(u^4 + 4(mu - x.y)^2 - 8(mu - x.y) x.y)) / 2.
/// Returned ascending, exactly 2d values.
std::vector<double> hessian_spectrum_closed_form(const Problem& p, const FactorState& s);

struct MinLoss {
    double value = 0.0;
    bool known = false;
};

/// Global minimum of the objective: 0 when d >= rank(A), otherwise half
/// the tail energy of A's singular values. Unknown for sensing and
/// completion (reported as 0 with known = false).
MinLoss min_loss(const Problem& p);

}  // namespace gdlab
