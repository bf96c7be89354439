#include "gdlab/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace gdlab {

namespace {

double sq(double v) { return v * v; }

struct StepEval {
    double loss = 0.0;
    double grad_sq = 0.0;
    FactorState next;
};

// One evaluation shared by the convergence test and the update itself:
// the residual that defines the loss also carries the gradient blocks.
StepEval step_eval(const Problem& p, const FactorState& s, double h) {
    StepEval ev;
    if (const auto* sc = std::get_if<ScalarFactorization>(&p)) {
        const double u = frobenius_dot(s.x, s.y);
        const double usq = frobenius_dot(s.x, s.x) + frobenius_dot(s.y, s.y);
        const double eps = sc->mu - u;
        ev.loss = 0.5 * eps * eps;
        ev.grad_sq = eps * eps * usq;
        ev.next = s;
        const std::size_t d = s.x.size();
        for (std::size_t i = 0; i < d; ++i) {
            ev.next.x.data()[i] = s.x.data()[i] + h * eps * s.y.data()[i];
            ev.next.y.data()[i] = s.y.data()[i] + h * eps * s.x.data()[i];
        }
        return ev;
    }
    if (const auto* r1 = std::get_if<RankOneIsotropic>(&p)) {
        const double u = frobenius_dot(s.x, s.y);
        const double v = frobenius_dot(s.x, s.x);
        const double w = frobenius_dot(s.y, s.y);
        const double mu = r1->mu;
        ev.loss = 0.5 * (static_cast<double>(r1->n) * mu * mu - 2.0 * mu * u + v * w);
        ev.next = s;
        double gsq = 0.0;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double rx = mu * s.y.data()[i] - w * s.x.data()[i];  // (A - xy^T) y
            const double ry = mu * s.x.data()[i] - v * s.y.data()[i];  // (A - xy^T)^T x
            gsq += rx * rx + ry * ry;
            ev.next.x.data()[i] = s.x.data()[i] + h * rx;
            ev.next.y.data()[i] = s.y.data()[i] + h * ry;
        }
        ev.grad_sq = gsq;
        return ev;
    }
    // General, sensing, completion: one fused residual evaluation.
    LossGrad lg = loss_and_gradient(p, s);
    ev.loss = lg.loss;
    ev.grad_sq = sq(lg.gx.frobenius_norm()) + sq(lg.gy.frobenius_norm());
    ev.next = s;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        ev.next.x.data()[i] = s.x.data()[i] - h * lg.gx.data()[i];
        ev.next.y.data()[i] = s.y.data()[i] - h * lg.gy.data()[i];
    }
    return ev;
}

bool state_finite(const FactorState& s) { return s.x.is_finite() && s.y.is_finite(); }

double state_u_sq(const FactorState& s) {
    return sq(s.x.frobenius_norm()) + sq(s.y.frobenius_norm());
}

constexpr std::size_t kRunMaxPeriod = 64;
constexpr double kRunPeriodTol = 1e-9;

}  // namespace

void GDConfig::validate() const {
    if (!(h > 0.0)) throw std::invalid_argument("GDConfig: h must be positive");
    if (max_iters < 1) throw std::invalid_argument("GDConfig: max_iters must be >= 1");
    if (!(grad_tol > 0.0)) throw std::invalid_argument("GDConfig: grad_tol must be positive");
    if (!(diverge_threshold > grad_tol))
        throw std::invalid_argument("GDConfig: diverge_threshold must exceed grad_tol");
    if (record_stride < 1) throw std::invalid_argument("GDConfig: record_stride must be >= 1");
}

bool is_converged(const Outcome& o) { return std::holds_alternative<Converged>(o); }
bool is_diverged(const Outcome& o) { return std::holds_alternative<Diverged>(o); }

std::string outcome_string(const Outcome& o) {
    if (const auto* c = std::get_if<Converged>(&o)) return "Converged@" + std::to_string(c->iters);
    if (const auto* d = std::get_if<Diverged>(&o)) return "Diverged@" + std::to_string(d->iters);
    if (const auto* pe = std::get_if<Periodic>(&o))
        return "Periodic(p=" + std::to_string(pe->period) + ")@" + std::to_string(pe->iters);
    return "MaxItersReached";
}

FactorState gd_step(const Problem& p, const FactorState& s, double h) {
    check_shapes(p, s);
    if (!(h > 0.0)) throw std::invalid_argument("gd_step: h must be positive");
    StepEval ev = step_eval(p, s, h);
    if (!state_finite(ev.next)) throw std::overflow_error("gd_step: non-finite iterate");
    return std::move(ev.next);
}

Trajectory run(const Problem& p, const FactorState& init, const GDConfig& cfg) {
    cfg.validate();
    check_shapes(p, init);

    std::optional<RotationPair> rotation;
    if (std::holds_alternative<GeneralFactorization>(p)) {
        const SvdResult dec = svd(target_matrix(p));
        rotation = RotationPair{dec.u, dec.v};
    }
    const RotationPair* rot = rotation ? &*rotation : nullptr;

    Trajectory traj;
    auto record = [&](std::size_t iter, const FactorState& s) {
        if (!traj.points.empty() && traj.points.back().iter == iter) return;
        traj.points.push_back({iter, diagnostics(p, s, cfg.h, rot)});
    };

    // Cycle certification starts after the transient has been skipped and
    // needs a full window of consecutive states.
    const std::size_t transient_skip = cfg.max_iters / 2;
    const std::size_t window_len = 3 * kRunMaxPeriod;
    std::deque<FactorState> window;

    FactorState state = init;
    double prev_loss = std::numeric_limits<double>::infinity();
    std::size_t last_increase = 0;
    for (std::size_t k = 0; k <= cfg.max_iters; ++k) {
        const StepEval ev = step_eval(p, state, cfg.h);
        const double u_sq = state_u_sq(state);
        // Last-ulp jitter near zero must not count as an increase.
        if (k > 0 && ev.loss > prev_loss * (1.0 + 1e-12)) last_increase = k;
        prev_loss = ev.loss;

        if (!state_finite(state) || !std::isfinite(ev.loss) || ev.loss > cfg.diverge_threshold ||
            u_sq > cfg.diverge_threshold) {
            traj.outcome = Diverged{k};
            if (state_finite(state)) record(k, state);
            traj.final_state = state;
            return traj;
        }
        if (k % cfg.record_stride == 0) record(k, state);
        if (ev.grad_sq < cfg.grad_tol * cfg.grad_tol) {
            traj.outcome = Converged{k};
            traj.monotone_from = last_increase;
            record(k, state);
            traj.final_state = state;
            return traj;
        }
        if (k >= transient_skip) {
            window.push_back(state);
            if (window.size() > window_len) window.pop_front();
            if (window.size() == window_len && k % window_len == 0) {
                const std::vector<FactorState> tail(window.begin(), window.end());
                const auto period = detect_period(tail, kRunMaxPeriod, kRunPeriodTol);
                // Period 1 is a fixed point and belongs to the gradient
                // criterion; only genuine cycles are certified here.
                if (period && *period >= 2) {
                    traj.outcome = Periodic{*period, k};
                    record(k, state);
                    traj.final_state = state;
                    return traj;
                }
            }
        }
        if (k == cfg.max_iters) break;
        state = ev.next;
    }
    traj.outcome = MaxItersReached{};
    record(cfg.max_iters, state);
    traj.final_state = state;
    return traj;
}

std::optional<std::size_t> detect_period(const std::vector<FactorState>& tail,
                                         std::size_t max_period, double tol) {
    if (max_period < 1) throw std::invalid_argument("detect_period: max_period must be >= 1");
    if (tail.size() < 3 * max_period)
        throw std::invalid_argument("detect_period: window shorter than 3 * max_period");
    for (std::size_t p = 1; p <= max_period; ++p) {
        bool ok = true;
        for (std::size_t k = 0; k + p < tail.size() && ok; ++k) {
            const double ref = std::sqrt(state_u_sq(tail[k]));
            const double dist = std::sqrt(sq((tail[k + p].x - tail[k].x).frobenius_norm()) +
                                          sq((tail[k + p].y - tail[k].y).frobenius_norm()));
            ok = dist < tol * (1.0 + ref);
        }
        if (ok) return p;
    }
    return std::nullopt;
}

FactorState refine_periodic_orbit(const Problem& p, const FactorState& guess, std::size_t period,
                                  double h) {
    const auto* sc = std::get_if<ScalarFactorization>(&p);
    if (sc == nullptr || sc->d != 1)
        throw std::invalid_argument("refine_periodic_orbit: scalar d = 1 family required");
    if (period < 1 || period > 8)
        throw std::invalid_argument("refine_periodic_orbit: period must be in [1, 8]");
    check_shapes(p, guess);

    auto iterate = [&](double x, double y, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            const double eps = sc->mu - x * y;
            const double nx = x + h * eps * y;
            const double ny = y + h * eps * x;
            x = nx;
            y = ny;
        }
        return std::pair<double, double>{x, y};
    };
    auto residual = [&](double x, double y) {
        const auto [fx, fy] = iterate(x, y, period);
        return std::pair<double, double>{fx - x, fy - y};
    };

    double x = guess.x(0, 0);
    double y = guess.y(0, 0);
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        const auto [rx, ry] = residual(x, y);
        if (std::sqrt(rx * rx + ry * ry) < 1e-12) {
            converged = true;
            break;
        }
        const double delta = 1e-7 * (1.0 + std::sqrt(x * x + y * y));
        const auto [rxp, ryp] = residual(x + delta, y);
        const auto [rxm, rym] = residual(x - delta, y);
        const auto [rxq, ryq] = residual(x, y + delta);
        const auto [rxr, ryr] = residual(x, y - delta);
        const double j00 = (rxp - rxm) / (2.0 * delta);
        const double j10 = (ryp - rym) / (2.0 * delta);
        const double j01 = (rxq - rxr) / (2.0 * delta);
        const double j11 = (ryq - ryr) / (2.0 * delta);
        const double det = j00 * j11 - j01 * j10;
        if (!std::isfinite(det) || std::abs(det) < 1e-300)
            throw std::runtime_error("refine_periodic_orbit: singular Newton system");
        x -= (j11 * rx - j01 * ry) / det;
        y -= (-j10 * rx + j00 * ry) / det;
        if (!std::isfinite(x) || !std::isfinite(y))
            throw std::runtime_error("refine_periodic_orbit: Newton iterate blew up");
    }
    const auto [rx, ry] = residual(x, y);
    if (!converged && std::sqrt(rx * rx + ry * ry) >= 1e-10)
        throw std::runtime_error("refine_periodic_orbit: Newton did not converge in 100 steps");

    // Distinctness from the shorter images guards against collapsing to a
    // divisor period.
    for (std::size_t j = 1; j < period; ++j) {
        const auto [jx, jy] = iterate(x, y, j);
        if (std::sqrt(sq(jx - x) + sq(jy - y)) < 1e-6)
            throw std::runtime_error("refine_periodic_orbit: orbit collapsed to period " +
                                     std::to_string(j));
    }

    FactorState z = guess;
    z.x(0, 0) = x;
    z.y(0, 0) = y;
    return z;
}

std::optional<std::size_t> detect_phase_transition(const Trajectory& traj) {
    if (!is_converged(traj.outcome)) return std::nullopt;
    if (traj.monotone_from) return traj.monotone_from;
    // Trajectories not produced by run() fall back to the recorded grid.
    const auto& pts = traj.points;
    std::size_t start = 0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (pts[i + 1].diag.loss > pts[i].diag.loss * (1.0 + 1e-12)) start = pts[i + 1].iter;
    }
    return start;
}

std::pair<Matrix, Matrix> modified_equation_rhs(const Problem& p, const FactorState& s, double h) {
    if (!is_factorization_family(p))
        throw std::invalid_argument("modified_equation_rhs: factorization families only");
    const auto [gx, gy] = gradient(p, s);
    const auto [hgx, hgy] = hessian_apply(p, s, gx, gy);
    Matrix rx = gx;
    Matrix ry = gy;
    rx *= -1.0;
    ry *= -1.0;
    rx -= 0.5 * h * hgx;
    ry -= 0.5 * h * hgy;
    return {std::move(rx), std::move(ry)};
}

Trajectory integrate_modified_equation(const Problem& p, const FactorState& init, double h,
                                       double T, double dt) {
    if (!(T > 0.0)) throw std::invalid_argument("integrate_modified_equation: T must be positive");
    if (!(dt > 0.0) || dt > h / 10.0 + 1e-15 * h)
        throw std::invalid_argument("integrate_modified_equation: need 0 < dt <= h/10");
    check_shapes(p, init);

    const std::size_t steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-12));
    const std::size_t stride = std::max<std::size_t>(1, steps / 2000);

    Trajectory traj;
    auto record = [&](std::size_t k, const FactorState& s) {
        if (!traj.points.empty() && traj.points.back().iter == k) return;
        traj.points.push_back({k, diagnostics(p, s, h, nullptr)});
    };

    auto axpy = [](const FactorState& s, double a, const std::pair<Matrix, Matrix>& t) {
        FactorState r = s;
        for (std::size_t i = 0; i < r.x.size(); ++i) {
            r.x.data()[i] += a * t.first.data()[i];
            r.y.data()[i] += a * t.second.data()[i];
        }
        return r;
    };
    auto rk4_step = [&](const FactorState& s, double step) {
        const auto k1 = modified_equation_rhs(p, s, h);
        const auto k2 = modified_equation_rhs(p, axpy(s, 0.5 * step, k1), h);
        const auto k3 = modified_equation_rhs(p, axpy(s, 0.5 * step, k2), h);
        const auto k4 = modified_equation_rhs(p, axpy(s, step, k3), h);
        FactorState r = s;
        for (std::size_t i = 0; i < r.x.size(); ++i) {
            r.x.data()[i] += step / 6.0 *
                             (k1.first.data()[i] + 2.0 * k2.first.data()[i] +
                              2.0 * k3.first.data()[i] + k4.first.data()[i]);
            r.y.data()[i] += step / 6.0 *
                             (k1.second.data()[i] + 2.0 * k2.second.data()[i] +
                              2.0 * k3.second.data()[i] + k4.second.data()[i]);
        }
        return r;
    };
    auto state_dist = [](const FactorState& a, const FactorState& b) {
        return std::sqrt(sq((a.x - b.x).frobenius_norm()) + sq((a.y - b.y).frobenius_norm()));
    };

    // Each dt-sized output step is integrated with step-doubling error
    // control; the early transient from an unbalanced start is far
    // stiffer than h/10 can resolve on its own.
    FactorState state = init;
    double sub = dt;
    auto advance = [&](double span) -> bool {
        double remaining = span;
        while (remaining > 1e-15 * span) {
            sub = std::min(sub, remaining);
            const FactorState full = rk4_step(state, sub);
            const FactorState half = rk4_step(rk4_step(state, 0.5 * sub), 0.5 * sub);
            if (!state_finite(half) || !state_finite(full)) return false;
            const double err = state_dist(full, half) / 15.0;
            const double tol = 1e-13 * (1.0 + std::sqrt(state_u_sq(half)));
            if (err <= tol || sub <= 1e-8 * dt) {
                state = half;
                remaining -= sub;
                const double grow = err > 0.0 ? 0.9 * std::pow(tol / err, 0.2) : 2.0;
                sub *= std::clamp(grow, 0.5, 2.0);
            } else {
                sub *= std::max(0.1, 0.9 * std::pow(tol / err, 0.2));
            }
        }
        return true;
    };

    double t = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        if (k % stride == 0) record(k, state);
        const double span = std::min(dt, T - t);
        if (!advance(span)) {
            traj.outcome = Diverged{k};
            traj.final_state = state;
            return traj;
        }
        t += span;
    }
    record(steps, state);
    traj.outcome = MaxItersReached{};  // horizon reached
    traj.final_state = state;
    return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    out << "iter,loss,u_sq,xty,s_k,V,W,U,cos_align,fro_x,fro_y,gap_fro\n";
    char buf[40];
    auto cell = [&](double v) {
        if (std::isnan(v)) {
            out << "nan";
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf;
        }
    };
    for (const TrajectoryPoint& pt : traj.points) {
        out << pt.iter;
        const Diagnostics& d = pt.diag;
        for (double v : {d.loss, d.u_sq, d.xty, d.s, d.V, d.W, d.U, d.cos_align, d.fro_x, d.fro_y,
                         d.gap_fro}) {
            out << ',';
            cell(v);
        }
        out << '\n';
    }
}

}  // namespace gdlab
