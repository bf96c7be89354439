#include "gdlab/problems.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gdlab {

namespace {

double dot(const Matrix& a, const Matrix& b) { return frobenius_dot(a, b); }

double sq(double v) { return v * v; }

}  // namespace

ScalarFactorization::ScalarFactorization(double mu_, std::size_t d_) : mu(mu_), d(d_) {
    if (!(mu > 0.0)) throw std::invalid_argument("ScalarFactorization: mu must be positive");
    if (d == 0) throw std::invalid_argument("ScalarFactorization: d must be >= 1");
}

RankOneIsotropic::RankOneIsotropic(double mu_, std::size_t n_) : mu(mu_), n(n_) {
    if (!(mu > 0.0)) throw std::invalid_argument("RankOneIsotropic: mu must be positive");
    if (n == 0) throw std::invalid_argument("RankOneIsotropic: n must be >= 1");
}

GeneralFactorization::GeneralFactorization(Matrix a_, std::size_t d_) : a(std::move(a_)), d(d_) {
    if (a.rows() != a.cols()) throw std::invalid_argument("GeneralFactorization: A must be square");
    if (a.rows() == 0 || d == 0) throw std::invalid_argument("GeneralFactorization: empty dimensions");
    if (!a.is_finite()) throw std::invalid_argument("GeneralFactorization: non-finite target");
}

MatrixSensing::MatrixSensing(std::vector<Matrix> sensors_, std::vector<double> b_, std::size_t d_)
    : sensors(std::move(sensors_)), b(std::move(b_)), d(d_) {
    if (sensors.empty()) throw std::invalid_argument("MatrixSensing: no sensors");
    if (sensors.size() != b.size())
        throw std::invalid_argument("MatrixSensing: sensors and measurements differ in count");
    const std::size_t n = sensors.front().rows();
    for (const Matrix& m : sensors)
        if (m.rows() != n || m.cols() != n)
            throw std::invalid_argument("MatrixSensing: sensors must be square and equally sized");
    if (d == 0) throw std::invalid_argument("MatrixSensing: d must be >= 1");
}

MatrixCompletion::MatrixCompletion(Matrix a_, std::vector<std::uint8_t> mask_, std::size_t d_)
    : a(std::move(a_)), mask(std::move(mask_)), d(d_) {
    if (a.rows() != a.cols()) throw std::invalid_argument("MatrixCompletion: A must be square");
    if (mask.size() != a.size())
        throw std::invalid_argument("MatrixCompletion: mask size must match A");
    if (d == 0) throw std::invalid_argument("MatrixCompletion: d must be >= 1");
}

std::size_t state_rows(const Problem& p) {
    return std::visit(
        [](const auto& fam) -> std::size_t {
            using T = std::decay_t<decltype(fam)>;
            if constexpr (std::is_same_v<T, ScalarFactorization>) return 1;
            else if constexpr (std::is_same_v<T, RankOneIsotropic>) return fam.n;
            else if constexpr (std::is_same_v<T, GeneralFactorization>) return fam.a.rows();
            else if constexpr (std::is_same_v<T, MatrixSensing>) return fam.sensors.front().rows();
            else return fam.a.rows();
        },
        p);
}

std::size_t state_cols(const Problem& p) {
    return std::visit(
        [](const auto& fam) -> std::size_t {
            using T = std::decay_t<decltype(fam)>;
            if constexpr (std::is_same_v<T, RankOneIsotropic>) return 1;
            else return fam.d;
        },
        p);
}

void check_shapes(const Problem& p, const FactorState& s) {
    const std::size_t n = state_rows(p);
    const std::size_t d = state_cols(p);
    if (s.x.rows() != n || s.x.cols() != d || s.y.rows() != n || s.y.cols() != d)
        throw std::invalid_argument("FactorState shape does not match problem");
}

bool is_factorization_family(const Problem& p) {
    return std::holds_alternative<ScalarFactorization>(p) ||
           std::holds_alternative<RankOneIsotropic>(p) ||
           std::holds_alternative<GeneralFactorization>(p);
}

Matrix target_matrix(const Problem& p) {
    if (const auto* sc = std::get_if<ScalarFactorization>(&p)) {
        Matrix a(1, 1);
        a(0, 0) = sc->mu;
        return a;
    }
    if (const auto* r1 = std::get_if<RankOneIsotropic>(&p)) {
        Matrix a = Matrix::identity(r1->n);
        a *= r1->mu;
        return a;
    }
    if (const auto* g = std::get_if<GeneralFactorization>(&p)) return g->a;
    throw std::invalid_argument("target_matrix: family has no explicit target");
}

namespace {

// Residual R with G_X = -R Y and G_Y = -R^T X, shared by the three
// factorization families and completion.
Matrix residual(const Problem& p, const FactorState& s) {
    if (const auto* c = std::get_if<MatrixCompletion>(&p)) {
        Matrix r = c->a - s.x * s.y.transposed();
        for (std::size_t i = 0; i < r.size(); ++i)
            if (!c->mask[i]) r.data()[i] = 0.0;
        return r;
    }
    if (const auto* g = std::get_if<GeneralFactorization>(&p)) {
        Matrix r = s.x * s.y.transposed();
        r *= -1.0;
        r += g->a;
        return r;
    }
    return target_matrix(p) - s.x * s.y.transposed();
}

std::vector<double> sensing_residuals(const MatrixSensing& sen, const FactorState& s) {
    const Matrix m = s.x * s.y.transposed();
    std::vector<double> r(sen.sensors.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = sen.b[i] - dot(sen.sensors[i], m);
    return r;
}

}  // namespace

double loss(const Problem& p, const FactorState& s) {
    check_shapes(p, s);
    if (const auto* sc = std::get_if<ScalarFactorization>(&p)) {
        return 0.5 * sq(sc->mu - dot(s.x, s.y));
    }
    if (const auto* r1 = std::get_if<RankOneIsotropic>(&p)) {
        const double u = dot(s.x, s.y);
        const double v = dot(s.x, s.x);
        const double w = dot(s.y, s.y);
        const double n = static_cast<double>(r1->n);
        return 0.5 * (n * sq(r1->mu) - 2.0 * r1->mu * u + v * w);
    }
    if (const auto* sen = std::get_if<MatrixSensing>(&p)) {
        const auto r = sensing_residuals(*sen, s);
        double acc = 0.0;
        for (double v : r) acc += v * v;
        return acc / (2.0 * static_cast<double>(r.size()));
    }
    const Matrix r = residual(p, s);
    return 0.5 * sq(r.frobenius_norm());
}

std::pair<Matrix, Matrix> gradient(const Problem& p, const FactorState& s) {
    check_shapes(p, s);
    if (const auto* sen = std::get_if<MatrixSensing>(&p)) {
        const auto r = sensing_residuals(*sen, s);
        const std::size_t n = state_rows(p);
        Matrix scaled(n, n);
        const double inv_m = 1.0 / static_cast<double>(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            const Matrix& a = sen->sensors[i];
            for (std::size_t k = 0; k < scaled.size(); ++k)
                scaled.data()[k] += inv_m * r[i] * a.data()[k];
        }
        Matrix gx = scaled * s.y;
        Matrix gy = scaled.transposed() * s.x;
        gx *= -1.0;
        gy *= -1.0;
        return {std::move(gx), std::move(gy)};
    }
    const Matrix r = residual(p, s);
    Matrix gx = r * s.y;
    Matrix gy = r.transposed() * s.x;
    gx *= -1.0;
    gy *= -1.0;
    return {std::move(gx), std::move(gy)};
}

double gradient_fro_norm(const Problem& p, const FactorState& s) {
    const auto [gx, gy] = gradient(p, s);
    return std::sqrt(sq(gx.frobenius_norm()) + sq(gy.frobenius_norm()));
}

LossGrad loss_and_gradient(const Problem& p, const FactorState& s) {
    check_shapes(p, s);
    LossGrad out;
    if (const auto* sen = std::get_if<MatrixSensing>(&p)) {
        const auto r = sensing_residuals(*sen, s);
        const std::size_t n = state_rows(p);
        const double inv_m = 1.0 / static_cast<double>(r.size());
        Matrix scaled(n, n);
        double acc = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            acc += r[i] * r[i];
            const Matrix& a = sen->sensors[i];
            for (std::size_t k = 0; k < scaled.size(); ++k)
                scaled.data()[k] += inv_m * r[i] * a.data()[k];
        }
        out.loss = 0.5 * inv_m * acc;
        out.gx = scaled * s.y;
        out.gy = scaled.transposed() * s.x;
        out.gx *= -1.0;
        out.gy *= -1.0;
        return out;
    }
    const Matrix r = residual(p, s);
    out.loss = 0.5 * sq(r.frobenius_norm());
    out.gx = r * s.y;
    out.gy = r.transposed() * s.x;
    out.gx *= -1.0;
    out.gy *= -1.0;
    return out;
}

Matrix hessian(const Problem& p, const FactorState& s) {
    check_shapes(p, s);
    if (!is_factorization_family(p))
        throw std::invalid_argument("hessian: supported for factorization families only");
    const std::size_t n = state_rows(p);
    const std::size_t d = state_cols(p);
    const Matrix a = target_matrix(p);
    const Matrix e = s.x * s.y.transposed() - a;  // XY^T - A
    const Matrix ytY = s.y.transposed() * s.y;
    const Matrix xtX = s.x.transposed() * s.x;

    const std::size_t nd = n * d;
    Matrix h(2 * nd, 2 * nd);
    // vec index of X(i,j) is j*n+i; Y entries follow after nd.
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t l = 0; l < d; ++l) {
            const double yy = ytY(j, l);
            const double xx = xtX(j, l);
            for (std::size_t i = 0; i < n; ++i) {
                h(j * n + i, l * n + i) = yy;
                h(nd + j * n + i, nd + l * n + i) = xx;
            }
        }
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < d; ++l)
                for (std::size_t k = 0; k < n; ++k) {
                    double v = s.x(i, l) * s.y(k, j);
                    if (j == l) v += e(i, k);
                    h(j * n + i, nd + l * n + k) = v;
                    h(nd + l * n + k, j * n + i) = v;
                }
    return h;
}

std::pair<Matrix, Matrix> hessian_apply(const Problem& p, const FactorState& s,
                                        const Matrix& dx, const Matrix& dy) {
    check_shapes(p, s);
    if (dx.rows() != s.x.rows() || dx.cols() != s.x.cols() || dy.rows() != s.y.rows() ||
        dy.cols() != s.y.cols())
        throw std::invalid_argument("hessian_apply: tangent shape mismatch");

    if (const auto* sen = std::get_if<MatrixSensing>(&p)) {
        const std::size_t n = state_rows(p);
        const double inv_m = 1.0 / static_cast<double>(sen->sensors.size());
        const auto r = sensing_residuals(*sen, s);
        const Matrix dm = dx * s.y.transposed() + s.x * dy.transposed();
        Matrix s_r(n, n);   // sum of r_i A_i / m
        Matrix s_dr(n, n);  // sum of dr_i A_i / m
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double dri = -dot(sen->sensors[i], dm);
            for (std::size_t k = 0; k < s_r.size(); ++k) {
                s_r.data()[k] += inv_m * r[i] * sen->sensors[i].data()[k];
                s_dr.data()[k] += inv_m * dri * sen->sensors[i].data()[k];
            }
        }
        // d(-S Y) = -dS Y - S dY with S = sum r_i A_i / m.
        Matrix hx = s_dr * s.y + s_r * dy;
        Matrix hy = s_dr.transposed() * s.x + s_r.transposed() * dx;
        hx *= -1.0;
        hy *= -1.0;
        return {std::move(hx), std::move(hy)};
    }
    if (const auto* c = std::get_if<MatrixCompletion>(&p)) {
        Matrix r = c->a - s.x * s.y.transposed();
        Matrix dm = dx * s.y.transposed() + s.x * dy.transposed();
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (!c->mask[i]) {
                r.data()[i] = 0.0;
                dm.data()[i] = 0.0;
            }
        }
        Matrix hx = dm * s.y - r * dy;
        Matrix hy = dm.transposed() * s.x - r.transposed() * dx;
        return {std::move(hx), std::move(hy)};
    }
    const Matrix a = target_matrix(p);
    const Matrix e = s.x * s.y.transposed() - a;
    Matrix hx = dx * (s.y.transposed() * s.y) + s.x * (dy.transposed() * s.y) + e * dy;
    Matrix hy = dy * (s.x.transposed() * s.x) + s.y * (dx.transposed() * s.x) + e.transposed() * dx;
    return {std::move(hx), std::move(hy)};
}

std::vector<double> hessian_spectrum_closed_form(const Problem& p, const FactorState& s) {
    check_shapes(p, s);
    const auto* sc = std::get_if<ScalarFactorization>(&p);
    if (sc == nullptr)
        throw std::invalid_argument(
            "hessian_spectrum_closed_form: supported for the scalar family only");
    const double u = dot(s.x, s.y);
    const double usq = dot(s.x, s.x) + dot(s.y, s.y);
    const double delta = sc->mu - u;
    const double disc = std::max(0.0, usq * usq + 4.0 * delta * delta - 8.0 * delta * u);
    std::vector<double> vals;
    vals.reserve(2 * sc->d);
    for (std::size_t i = 0; i + 1 < sc->d; ++i) {
        vals.push_back(delta);
        vals.push_back(-delta);
    }
    vals.push_back(0.5 * (usq + std::sqrt(disc)));
    vals.push_back(0.5 * (usq - std::sqrt(disc)));
    std::sort(vals.begin(), vals.end());
    return vals;
}

MinLoss min_loss(const Problem& p) {
    if (std::holds_alternative<ScalarFactorization>(p)) return {0.0, true};
    if (const auto* r1 = std::get_if<RankOneIsotropic>(&p)) {
        // Best rank-1 approximation of mu * I captures a single mu.
        return {0.5 * sq(r1->mu) * static_cast<double>(r1->n - 1), true};
    }
    if (const auto* g = std::get_if<GeneralFactorization>(&p)) {
        if (g->d >= g->a.rows()) return {0.0, true};
        const auto sv = svd(g->a).singular_values;
        double tail = 0.0;
        for (std::size_t i = g->d; i < sv.size(); ++i) tail += sq(sv[i]);
        return {0.5 * tail, true};
    }
    return {0.0, false};
}

}  // namespace gdlab
