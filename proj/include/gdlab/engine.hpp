#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

#include "gdlab/problems.hpp"
#include "gdlab/theory.hpp"

namespace gdlab {

struct GDConfig {
    double h = 0.0;
    std::size_t max_iters = 1'000'000;
    double grad_tol = 1e-10;
    double diverge_threshold = 1e12;  // on loss and on u^2
    std::size_t record_stride = 100;
    std::uint64_t seed = 0;  // recorded in outputs; the run itself is deterministic

    void validate() const;
};

struct Converged {
    std::size_t iters = 0;
};
struct Diverged {
    std::size_t iters = 0;
};
struct Periodic {
    std::size_t period = 0;
    std::size_t iters = 0;
};
struct MaxItersReached {};

using Outcome = std::variant<Converged, Diverged, Periodic, MaxItersReached>;

bool is_converged(const Outcome& o);
bool is_diverged(const Outcome& o);
std::string outcome_string(const Outcome& o);

struct TrajectoryPoint {
    std::size_t iter = 0;
    Diagnostics diag;
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;  // strictly increasing iteration indices
    FactorState final_state;
    Outcome outcome = MaxItersReached{};
    // Iteration after the last full-resolution loss increase, tracked by
    // run() so that stride-sampled recording cannot hide the searching
    // phase; 0 for fully monotone runs.
    std::optional<std::size_t> monotone_from;

    const Diagnostics& final_diag() const { return points.back().diag; }
};

/// One simultaneous GD update of both factors from the same iterate.
/// Throws on a non-finite result instead of returning it.
FactorState gd_step(const Problem& p, const FactorState& s, double h);

/// Iterate GD until the gradient norm falls below grad_tol (Converged),
/// loss or joint norm exceeds the divergence threshold or turns
/// non-finite (Diverged), a short cycle is certified in the tail
/// (Periodic), or the budget runs out. Diagnostics are recorded every
/// record_stride iterations plus the final iterate.
Trajectory run(const Problem& p, const FactorState& init, const GDConfig& cfg);

/// Smallest period p <= max_period with
/// |tail[k+p] - tail[k]|_F < tol (1 + |tail[k]|_F) across the window,
/// or nullopt. The window must hold at least 3 * max_period states.
std::optional<std::size_t> detect_period(const std::vector<FactorState>& tail,
                                         std::size_t max_period, double tol);

/// Newton refinement of a period-p orbit of the GD map for the scalar
/// d = 1 family. The result z satisfies |psi^p(z) - z| < 1e-10 and is
/// distinct from its first p-1 forward images.
FactorState refine_periodic_orbit(const Problem& p, const FactorState& guess, std::size_t period,
                                  double h);

/// Start of the terminal monotone stretch of the recorded loss series:
/// the smallest recorded iteration index after which loss never
/// increases, 0 for fully monotone runs, nullopt unless Converged.
std::optional<std::size_t> detect_phase_transition(const Trajectory& traj);

/// First-order modified vector field -grad f - (h/2) Hess f grad f.
/// Factorization families only.
std::pair<Matrix, Matrix> modified_equation_rhs(const Problem& p, const FactorState& s, double h);

/// Classical RK4 integration of the modified equation up to time T with
/// step dt (dt <= h/10 required); GD step k corresponds to time k h.
Trajectory integrate_modified_equation(const Problem& p, const FactorState& init, double h,
                                       double T, double dt);

/// Trajectory CSV, one row per recorded iterate:
/// iter,loss,u_sq,xty,s_k,V,W,U,cos_align,fro_x,fro_y,gap_fro
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace gdlab
