#pragma once

#include <optional>
#include <string>

#include "gdlab/problems.hpp"

namespace gdlab {

/// Per-iterate scalar diagnostics. Fields that are undefined for a family
/// are NaN; use defined() to test.
struct Diagnostics {
    double loss = 0.0;
    double u_sq = 0.0;       // |X|_F^2 + |Y|_F^2
    double xty = 0.0;        // Tr(X Y^T)
    double s = 0.0;          // per-step multiplier, scalar family only
    double V = 0.0;          // x.x (vector families)
    double W = 0.0;          // y.y
    double U = 0.0;          // x.y
    double cos_align = 0.0;  // U / sqrt(V W)
    double fro_x = 0.0;
    double fro_y = 0.0;
    double gap_fro = 0.0;     // | |X|_F - |Y|_F |
    double balance_sq = 0.0;  // |X - Q Y|_F^2 with Q fixed by the target
};

bool defined(double diagnostic_field);

enum class BoundKind { Scalar, Rank1, User };

struct BoundReport {
    double h_bound = 0.0;
    BoundKind kind = BoundKind::User;
    double balance_limit_norm_sq = 0.0;  // 2 / (c h)
    double balance_limit_gap_sq = 0.0;   // 2 / (c h) - 2 sum mu_i
};

/// Largest admissible learning rate for the scalar family:
/// min{ 4 / (|x0|^2 + |y0|^2 + 4 mu), 1 / (3 mu) }.
double scalar_lr_bound(double norm_x0, double norm_y0, double mu);

/// Largest admissible learning rate for rank-1 isotropic targets:
/// min{ 4 / (|x0|^2 + |y0|^2 + 4 sqrt(7) mu), 1 / (2 sqrt(7) mu) }.
double rank1_lr_bound(double norm_x0, double norm_y0, double mu);

/// Limit-point bounds implied by a converged run at learning rate h:
/// joint norm below 2/(c h) and squared gap below 2/(c h) - 2 mu_sum.
BoundReport balancing_bound(double h, double mu_sum, double c = 1.0,
                            BoundKind kind = BoundKind::User);

/// One-step contraction factor of x.y - mu in the scalar family:
/// s = 1 - h u^2 - h^2 (x.y)(mu - x.y).
double s_factor(const FactorState& s, double mu, double h);

/// Squared one-step multiplier of V W - U^2 in the rank-1 isotropic
/// family: r = (1 - h (V + W) + h^2 (V W - mu^2))^2.
double alignment_factor(double V, double W, double mu, double h);

struct CorollaryCheck {
    bool holds = false;
    double lhs = 0.0;  // final |x - y|^2
    double rhs = 0.0;  // half initial |x0 - y0|^2 plus 2 mu
};

/// Unbalanced-to-balanced shrinkage check; the caller asserts the
/// hypotheses (init near an unbalanced minimum, h at the scalar bound).
CorollaryCheck corollary_balance_check(const FactorState& init, const FactorState& final_state,
                                       double mu);

enum class RegionLabel {
    P2Ball,             // u^2 <= 2/h
    P1OneStepDecrease,  // 2/h < u^2 < 4/h, x.y > mu or x.y < -h mu u^2/(4 - h u^2)
    P1TwoStepDecrease,  // 2/h < u^2 < 4/h otherwise
    Beyond4OverH,       // u^2 >= 4/h
};

const char* to_string(RegionLabel label);

/// State-space partition driving the two-phase convergence argument.
/// Scalar family only.
RegionLabel region_label(const FactorState& s, double mu, double h);

/// Orthogonal pair (U, V) from the target's singular value
/// decomposition; fixes the rotation Q = U V^T used by balance_sq.
struct RotationPair {
    Matrix u;
    Matrix v;
};

/// Populate every diagnostic defined for the family. The rotation is
/// required for the general family and ignored elsewhere.
Diagnostics diagnostics(const Problem& p, const FactorState& s, double h,
                        const RotationPair* rotation = nullptr);

}  // namespace gdlab
