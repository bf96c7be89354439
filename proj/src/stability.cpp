#include "gdlab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gdlab/rng.hpp"

namespace gdlab {

namespace {

double sq(double v) { return v * v; }

double state_norm(const FactorState& s) {
    return std::sqrt(sq(s.x.frobenius_norm()) + sq(s.y.frobenius_norm()));
}

void require_fixed_point(const Problem& p, const FactorState& s, const char* what) {
    const double g = gradient_fro_norm(p, s);
    if (g >= 1e-8 * (1.0 + state_norm(s)))
        throw std::invalid_argument(std::string(what) + ": state is not a fixed point (|grad| = " +
                                    std::to_string(g) + ")");
}

std::vector<double> diag_entries(const Matrix& d) {
    if (!d.is_diagonal(0.0)) throw std::invalid_argument("target must be diagonal");
    std::vector<double> mu(d.rows());
    for (std::size_t i = 0; i < d.rows(); ++i) {
        mu[i] = d(i, i);
        if (mu[i] < 0.0) throw std::invalid_argument("target diagonal must be non-negative");
    }
    return mu;
}

// Dominant eigenvalue of the shifted operator H + sigma I by power
// iteration; the shift makes the spectrum positive so the dominant
// eigenvalue is lambda_max + sigma.
double power_lambda_max(const Problem& p, const FactorState& s, std::uint64_t seed) {
    const std::size_t n = state_rows(p);
    const std::size_t d = state_cols(p);
    SeededRng rng(seed);
    FactorState v{gaussian_matrix(n, d, rng), gaussian_matrix(n, d, rng)};

    auto normalize = [](FactorState& f) {
        const double nn = state_norm(f);
        if (nn < 1e-300) return false;
        f.x *= 1.0 / nn;
        f.y *= 1.0 / nn;
        return true;
    };
    if (!normalize(v)) return 0.0;

    // Phase 1 sizes the shift from the largest observed |H v|.
    double bound = 0.0;
    for (int it = 0; it < 50; ++it) {
        auto [hx, hy] = hessian_apply(p, s, v.x, v.y);
        FactorState w{std::move(hx), std::move(hy)};
        bound = std::max(bound, state_norm(w));
        if (!normalize(w)) return 0.0;
        v = std::move(w);
    }
    if (bound == 0.0) return 0.0;
    const double sigma = 2.0 * bound;

    double rho = 0.0;
    for (int it = 0; it < 4000; ++it) {
        auto [hx, hy] = hessian_apply(p, s, v.x, v.y);
        FactorState w{std::move(hx), std::move(hy)};
        w.x += sigma * v.x;
        w.y += sigma * v.y;
        const double next_rho = frobenius_dot(v.x, w.x) + frobenius_dot(v.y, w.y);
        if (!normalize(w)) return -sigma;
        v = std::move(w);
        if (it > 10 && std::abs(next_rho - rho) <= 1e-13 * std::max(1.0, std::abs(next_rho))) {
            rho = next_rho;
            break;
        }
        rho = next_rho;
    }
    return rho - sigma;
}

}  // namespace

const char* to_string(FixedPointClass c) {
    switch (c) {
        case FixedPointClass::Stable: return "Stable";
        case FixedPointClass::Unstable: return "Unstable";
        case FixedPointClass::Marginal: return "Marginal";
    }
    return "unknown";
}

std::string StabilityReport::csv_row() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%s,%s,%.17g", eigenvalues.front(),
                  eigenvalues.back(), to_string(classification), to_string(manifold_aware),
                  empirical_c);
    return buf;
}

Matrix gd_jacobian(const Problem& p, const FactorState& s, double h) {
    Matrix j = hessian(p, s);
    j *= -h;
    for (std::size_t i = 0; i < j.rows(); ++i) j(i, i) += 1.0;
    return j;
}

StabilityReport classify_fixed_point(const Problem& p, const FactorState& s, double h,
                                     double tol) {
    require_fixed_point(p, s, "classify_fixed_point");
    const EigResult eig = sym_eig(hessian(p, s));
    const std::size_t dim = eig.values.size();

    StabilityReport report;
    report.eigenvalues.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) report.eigenvalues[i] = 1.0 - h * eig.values[i];
    std::sort(report.eigenvalues.begin(), report.eigenvalues.end());

    bool any_above = false, all_below = true;
    for (double lambda : report.eigenvalues) {
        const double m = std::abs(lambda);
        if (m > 1.0 + tol) any_above = true;
        if (m >= 1.0 - tol) all_below = false;
    }
    report.classification = any_above     ? FixedPointClass::Unstable
                            : (all_below) ? FixedPointClass::Stable
                                          : FixedPointClass::Marginal;

    // Zero Hessian eigenvalues come from the flat minimum manifold; their
    // unit-modulus Jacobian directions do not destabilize the dynamics.
    const double lam_max = std::max(std::abs(eig.values.front()), std::abs(eig.values.back()));
    const double null_band = 1e-8 * std::max(1.0, lam_max);
    bool unstable_outside_manifold = false;
    for (double lam : eig.values) {
        if (std::abs(lam) < null_band) continue;
        if (std::abs(1.0 - h * lam) > 1.0 + tol) unstable_outside_manifold = true;
    }
    report.manifold_aware =
        unstable_outside_manifold ? FixedPointClass::Unstable : FixedPointClass::Stable;

    const double u_sq = sq(s.x.frobenius_norm()) + sq(s.y.frobenius_norm());
    report.empirical_c = u_sq > 0.0 ? eig.values.back() / u_sq : 0.0;
    return report;
}

std::vector<double> rank1_diagonal_spectrum(const Matrix& x, const Matrix& y,
                                            const Matrix& diag_target, double h) {
    const auto mu = diag_entries(diag_target);
    const std::size_t n = mu.size();
    if (x.rows() != n || x.cols() != 1 || y.rows() != n || y.cols() != 1)
        throw std::invalid_argument("rank1_diagonal_spectrum: x, y must be n x 1");
    const Problem p{GeneralFactorization{diag_target, 1}};
    const FactorState s{x, y};
    require_fixed_point(p, s, "rank1_diagonal_spectrum");

    const double v = frobenius_dot(x, x);
    const double w = frobenius_dot(y, y);
    const double u_sq = v + w;
    const double mu_sq = v * w;

    std::vector<double> out;
    out.reserve(2 * n);
    for (double mu_i : mu) {
        // Roots of t^2 + h u^2 t + h^2 (mu^2 - mu_i^2); real at genuine
        // fixed points since u^4 >= 4 mu^2.
        const double disc = std::max(0.0, sq(h * u_sq) - 4.0 * h * h * (mu_sq - sq(mu_i)));
        const double root = std::sqrt(disc);
        out.push_back(1.0 + 0.5 * (-h * u_sq - root));
        out.push_back(1.0 + 0.5 * (-h * u_sq + root));
    }
    std::sort(out.begin(), out.end());
    return out;
}

FactorState fixed_point_family(const Matrix& diag_target, std::size_t block_index,
                               double norm_ratio) {
    const auto mu = diag_entries(diag_target);
    if (!(norm_ratio > 0.0))
        throw std::invalid_argument("fixed_point_family: norm_ratio must be positive");

    // Blocks are runs of equal diagonal values in positional order.
    std::vector<std::pair<double, std::size_t>> blocks;  // (value, first index)
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (blocks.empty() || mu[i] != blocks.back().first) blocks.push_back({mu[i], i});
    }
    if (block_index >= blocks.size())
        throw std::invalid_argument("fixed_point_family: block index out of range");
    const auto [mu_i, first] = blocks[block_index];
    if (!(mu_i > 0.0))
        throw std::invalid_argument("fixed_point_family: requested block has zero target value");

    const std::size_t n = mu.size();
    FactorState s{Matrix(n, 1), Matrix(n, 1)};
    s.x(first, 0) = std::sqrt(mu_i * norm_ratio);
    s.y(first, 0) = std::sqrt(mu_i / norm_ratio);
    return s;
}

HessianTraces hessian_traces(const Matrix& a, const FactorState& s) {
    if (a.rows() != a.cols() || s.x.rows() != a.rows())
        throw std::invalid_argument("hessian_traces: shape mismatch");
    const std::size_t n = a.rows();
    const std::size_t d = s.x.cols();
    const Problem p{GeneralFactorization{a, d}};
    const Matrix m = hessian(p, s);

    HessianTraces t;
    for (std::size_t i = 0; i < m.rows(); ++i) t.tr_numeric += m(i, i);
    t.tr2_numeric = sq(m.frobenius_norm());  // Tr(M^2) for symmetric M

    const double fx2 = sq(s.x.frobenius_norm());
    const double fy2 = sq(s.y.frobenius_norm());
    const double res = sq((a - s.x * s.y.transposed()).frobenius_norm());
    t.tr_closed = static_cast<double>(n) * (fx2 + fy2);
    // The residual block enters both diagonal blocks of M^2, hence the
    // factor 2d on |A - X Y^T|^2.
    t.tr2_closed = 2.0 * fx2 * fy2 +
                   static_cast<double>(n) * (sq((s.x.transposed() * s.x).frobenius_norm()) +
                                             sq((s.y.transposed() * s.y).frobenius_norm())) +
                   2.0 * static_cast<double>(d) * res;
    return t;
}

RotatedProblem rotate_to_diagonal(const Matrix& a, const FactorState& s0) {
    if (a.rows() != a.cols()) throw std::invalid_argument("rotate_to_diagonal: A must be square");
    if (s0.x.rows() != a.rows() || s0.y.rows() != a.rows())
        throw std::invalid_argument("rotate_to_diagonal: state rows must match A");
    const SvdResult dec = svd(a);
    RotatedProblem out;
    out.d = dec.d();
    out.u = dec.u;
    out.v = dec.v;
    out.rotated_init = FactorState{dec.u.transposed() * s0.x, dec.v.transposed() * s0.y};
    return out;
}

double lambda_max_hessian(const Problem& p, const FactorState& s, std::uint64_t seed) {
    const std::size_t dim = 2 * state_rows(p) * state_cols(p);
    if (is_factorization_family(p) && dim <= 400) {
        const EigResult eig = sym_eig(hessian(p, s));
        return eig.values.back();
    }
    return power_lambda_max(p, s, seed);
}

double empirical_c(const Problem& p, const FactorState& s) {
    require_fixed_point(p, s, "empirical_c");
    const double u_sq = sq(s.x.frobenius_norm()) + sq(s.y.frobenius_norm());
    if (!(u_sq > 0.0)) throw std::invalid_argument("empirical_c: zero state");
    const double lam = lambda_max_hessian(p, s);
    if (is_factorization_family(p)) {
        const std::size_t dim = 2 * state_rows(p) * state_cols(p);
        if (dim <= 400) {
            // A minimum must not have appreciably negative curvature.
            const EigResult eig = sym_eig(hessian(p, s));
            if (eig.values.front() < -1e-8 * std::max(1.0, lam))
                throw std::invalid_argument("empirical_c: state is a saddle, not a minimum");
        }
    }
    return lam / u_sq;
}

}  // namespace gdlab
