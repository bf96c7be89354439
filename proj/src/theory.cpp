#include "gdlab/theory.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gdlab {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
const double kSqrt7 = std::sqrt(7.0);

double sq(double v) { return v * v; }

void require_vector_pair(const FactorState& s, const char* what) {
    const bool row_pair = s.x.rows() == 1 && s.y.rows() == 1;
    const bool col_pair = s.x.cols() == 1 && s.y.cols() == 1;
    if (!row_pair && !col_pair)
        throw std::invalid_argument(std::string(what) + ": state is not a vector pair");
}

}  // namespace

bool defined(double diagnostic_field) { return !std::isnan(diagnostic_field); }

double scalar_lr_bound(double norm_x0, double norm_y0, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("scalar_lr_bound: mu must be positive");
    const double u0_sq = sq(norm_x0) + sq(norm_y0);
    return std::min(4.0 / (u0_sq + 4.0 * mu), 1.0 / (3.0 * mu));
}

double rank1_lr_bound(double norm_x0, double norm_y0, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("rank1_lr_bound: mu must be positive");
    const double u0_sq = sq(norm_x0) + sq(norm_y0);
    return std::min(4.0 / (u0_sq + 4.0 * kSqrt7 * mu), 1.0 / (2.0 * kSqrt7 * mu));
}

BoundReport balancing_bound(double h, double mu_sum, double c, BoundKind kind) {
    if (!(h > 0.0)) throw std::invalid_argument("balancing_bound: h must be positive");
    if (!(c > 0.0)) throw std::invalid_argument("balancing_bound: c must be positive");
    BoundReport report;
    report.h_bound = h;
    report.kind = kind;
    report.balance_limit_norm_sq = 2.0 / (c * h);
    report.balance_limit_gap_sq = 2.0 / (c * h) - 2.0 * mu_sum;
    return report;
}

double s_factor(const FactorState& s, double mu, double h) {
    require_vector_pair(s, "s_factor");
    const double u = frobenius_dot(s.x, s.y);
    const double u_sq = frobenius_dot(s.x, s.x) + frobenius_dot(s.y, s.y);
    return 1.0 - h * u_sq - h * h * u * (mu - u);
}

double alignment_factor(double V, double W, double mu, double h) {
    return sq(1.0 - h * (V + W) + h * h * (V * W - mu * mu));
}

CorollaryCheck corollary_balance_check(const FactorState& init, const FactorState& final_state,
                                       double mu) {
    require_vector_pair(init, "corollary_balance_check");
    require_vector_pair(final_state, "corollary_balance_check");
    CorollaryCheck check;
    check.lhs = sq((final_state.x - final_state.y).frobenius_norm());
    check.rhs = 0.5 * sq((init.x - init.y).frobenius_norm()) + 2.0 * mu;
    check.holds = check.lhs < check.rhs;
    return check;
}

const char* to_string(RegionLabel label) {
    switch (label) {
        case RegionLabel::P2Ball: return "P2-ball";
        case RegionLabel::P1OneStepDecrease: return "P1-one-step-decrease";
        case RegionLabel::P1TwoStepDecrease: return "P1-two-step-decrease";
        case RegionLabel::Beyond4OverH: return "beyond-4/h";
    }
    return "unknown";
}

RegionLabel region_label(const FactorState& s, double mu, double h) {
    require_vector_pair(s, "region_label");
    if (!(h > 0.0)) throw std::invalid_argument("region_label: h must be positive");
    const double u = frobenius_dot(s.x, s.y);
    const double u_sq = frobenius_dot(s.x, s.x) + frobenius_dot(s.y, s.y);
    if (u_sq <= 2.0 / h) return RegionLabel::P2Ball;
    if (u_sq >= 4.0 / h) return RegionLabel::Beyond4OverH;
    const double lower = -h * mu * u_sq / (4.0 - h * u_sq);
    if (u > mu || u < lower) return RegionLabel::P1OneStepDecrease;
    return RegionLabel::P1TwoStepDecrease;
}

Diagnostics diagnostics(const Problem& p, const FactorState& s, double h,
                        const RotationPair* rotation) {
    check_shapes(p, s);
    Diagnostics d;
    d.loss = loss(p, s);
    d.fro_x = s.x.frobenius_norm();
    d.fro_y = s.y.frobenius_norm();
    d.u_sq = sq(d.fro_x) + sq(d.fro_y);
    d.xty = frobenius_dot(s.x, s.y);
    d.gap_fro = std::abs(d.fro_x - d.fro_y);
    d.s = kNan;
    d.V = kNan;
    d.W = kNan;
    d.U = kNan;
    d.cos_align = kNan;
    d.balance_sq = kNan;

    const bool vector_family = std::holds_alternative<ScalarFactorization>(p) ||
                               std::holds_alternative<RankOneIsotropic>(p);
    if (vector_family) {
        d.V = frobenius_dot(s.x, s.x);
        d.W = frobenius_dot(s.y, s.y);
        d.U = d.xty;
        const double vw = d.V * d.W;
        d.cos_align = vw > 0.0 ? d.U / std::sqrt(vw) : kNan;
        d.balance_sq = sq((s.x - s.y).frobenius_norm());
        if (const auto* sc = std::get_if<ScalarFactorization>(&p)) d.s = s_factor(s, sc->mu, h);
    } else if (std::holds_alternative<GeneralFactorization>(p)) {
        if (rotation == nullptr)
            throw std::invalid_argument("diagnostics: rotation required for the general family");
        const Matrix q = rotation->u * rotation->v.transposed();
        d.balance_sq = sq((s.x - q * s.y).frobenius_norm());
    }
    return d;
}

}  // namespace gdlab
