#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gdlab/harness.hpp"
#include "gdlab/rng.hpp"
#include "gdlab/theory.hpp"

using namespace gdlab;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("gdlab_test_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("every builtin scenario id resolves to a valid config") {
    for (const std::string& id : builtin_scenario_ids()) {
        const ExperimentConfig cfg = builtin_scenario(id);
        CHECK(cfg.scenario == id);
        CHECK_NOTHROW(cfg.validate());
        CHECK_NOTHROW(scenario_description(id));
    }
    CHECK_THROWS_AS(builtin_scenario("nope"), std::invalid_argument);
}

TEST_CASE("fig2 scenario matches its caption") {
    const ExperimentConfig cfg = builtin_scenario("fig2");
    CHECK(cfg.family == Family::Scalar);
    CHECK(cfg.d == 10);
    CHECK(cfg.mu == 1.0);
    CHECK(cfg.norm_x0 == 18.0);
    CHECK(cfg.norm_y0 == 0.09);
    CHECK(cfg.lr_base == LrBase::ScalarBound);

    const Problem p = build_problem(cfg);
    const FactorState init = build_init(cfg);
    CHECK(init.x.frobenius_norm() == doctest::Approx(18.0).epsilon(1e-12));
    CHECK(init.y.frobenius_norm() == doctest::Approx(0.09).epsilon(1e-12));
    double base = 0.0;
    const auto hs = resolve_learning_rates(cfg, p, init, &base);
    REQUIRE(hs.size() == 1);
    CHECK(hs[0] == doctest::Approx(4.0 / 328.0081).epsilon(1e-12));
    CHECK(base == hs[0]);
}

TEST_CASE("appE scenario carries the bound and its 5% excess") {
    const ExperimentConfig cfg = builtin_scenario("appE-stability-limit");
    REQUIRE(cfg.h_list.size() == 2);
    const double hb = 4.0 / (400.0 + 0.0049 + 4.0);
    CHECK(cfg.h_list[1] == doctest::Approx(hb).epsilon(1e-14));
    CHECK(cfg.h_list[0] == doctest::Approx(1.05 * hb).epsilon(1e-14));
    CHECK(cfg.exact_init);
    CHECK(cfg.x0_value == 20.0);
    CHECK(cfg.y0_value == 0.07);
}

TEST_CASE("completion with full observation equals the general objective") {
    const Problem completion = build_completion(6, 2, 2, 1.0, 5);
    const auto& c = std::get<MatrixCompletion>(completion);
    const Problem general{GeneralFactorization{c.a, 2}};
    SeededRng rng(131);
    for (int t = 0; t < 5; ++t) {
        const FactorState s{gaussian_matrix(6, 2, rng), gaussian_matrix(6, 2, rng)};
        CHECK(loss(completion, s) == doctest::Approx(loss(general, s)).epsilon(1e-13));
    }
}

TEST_CASE("completion mask hits the requested fraction within one entry") {
    const Problem completion = build_completion(10, 2, 2, 0.6, 7);
    const auto& c = std::get<MatrixCompletion>(completion);
    std::size_t observed = 0;
    for (auto m : c.mask) observed += m;
    CHECK(observed == 60);

    // Target is exactly rank 2.
    const auto sv = svd(c.a).singular_values;
    CHECK(sv[1] > 1e-8);
    CHECK(sv[2] < 1e-10 * sv[0]);
}

TEST_CASE("single-sensor sensing reduces to a trace fit") {
    const std::size_t n = 4;
    Matrix a = Matrix::identity(n);
    a *= 1.0 / static_cast<double>(n);
    const double b = 0.7;
    const Problem p{MatrixSensing{{a}, {b}, 2}};
    SeededRng rng(137);
    const FactorState s{gaussian_matrix(n, 2, rng), gaussian_matrix(n, 2, rng)};
    const double trace_fit = b - frobenius_dot(s.x, s.y) / static_cast<double>(n);
    CHECK(loss(p, s) == doctest::Approx(0.5 * trace_fit * trace_fit).epsilon(1e-12));
}

TEST_CASE("sensing data dimensions follow the config") {
    const Problem p = build_sensing(100, 6, 10, 31);
    const auto& sen = std::get<MatrixSensing>(p);
    CHECK(sen.sensors.size() == 10);
    CHECK(sen.b.size() == 10);
    CHECK(sen.sensors.front().rows() == 100);
    for (double v : sen.b) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("config validation rejects bad learning-rate specs") {
    ExperimentConfig cfg;
    cfg.family = Family::Scalar;
    cfg.lr_base = LrBase::Explicit;
    cfg.h_list = {};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.h_list = {0.1, -0.2};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.h_list = {0.1};
    cfg.h_fractions = {1.5};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config file round trip and unknown keys") {
    const auto dir = temp_dir("config");
    const auto path = (dir / "exp.cfg").string();
    {
        std::ofstream out(path);
        out << "# comment\n";
        out << "family = scalar\n";
        out << "d = 10\n";
        out << "mu = 1\n";
        out << "norm_x0 = 18\n";
        out << "norm_y0 = 0.09\n";
        out << "init_seed = 42\n";
        out << "lr_base = scalar-bound\n";
        out << "h_fractions = 1\n";
        out << "record_stride = 10\n";
    }
    const ExperimentConfig cfg = parse_config_file(path);
    CHECK(cfg.family == Family::Scalar);
    CHECK(cfg.d == 10);
    CHECK(cfg.norm_x0 == 18.0);
    CHECK(cfg.lr_base == LrBase::ScalarBound);

    {
        std::ofstream out(path, std::ios::app);
        out << "no_such_key = 1\n";
    }
    CHECK_THROWS(parse_config_file(path));
}

TEST_CASE("fig2 experiment run: files, outcome, and near-perfect balancing") {
    ExperimentConfig cfg = builtin_scenario("fig2");
    const auto dir = temp_dir("fig2");
    cfg.out_dir = dir.string();
    const ExperimentResult result = run_experiment(cfg);

    REQUIRE(result.summary.rows.size() == 1);
    const SweepRow& row = result.summary.rows.front();
    CHECK(is_converged(row.outcome));
    CHECK(std::abs(row.final.xty - 1.0) < 1e-8);
    CHECK(std::sqrt(row.final_balance_sq) < 1.0);
    REQUIRE(row.norm_bound_ok.has_value());
    CHECK(*row.norm_bound_ok);
    REQUIRE(row.gap_bound_ok.has_value());
    CHECK(*row.gap_bound_ok);
    REQUIRE(row.phase2_start.has_value());
    CHECK(*row.phase2_start > 0);
    REQUIRE(row.stability_ok.has_value());
    CHECK(*row.stability_ok);

    CHECK(std::filesystem::exists(dir / "fig2" / "traj_h0.csv"));
    CHECK(std::filesystem::exists(dir / "fig2" / "summary.csv"));
    CHECK(std::filesystem::exists(dir / "fig2" / "manifest.txt"));
    const std::string summary = slurp((dir / "fig2" / "summary.csv").string());
    CHECK(summary.find("# h_bound=") != std::string::npos);
}

TEST_CASE("reruns are byte-identical apart from the manifest timestamp") {
    ExperimentConfig cfg = builtin_scenario("appE-stability-limit");
    cfg.gd.max_iters = 200000;
    const auto dir1 = temp_dir("idem1");
    const auto dir2 = temp_dir("idem2");
    cfg.out_dir = dir1.string();
    run_experiment(cfg);
    cfg.out_dir = dir2.string();
    run_experiment(cfg);
    const std::string base = "appE-stability-limit";
    CHECK(slurp((dir1 / base / "traj_h0.csv").string()) ==
          slurp((dir2 / base / "traj_h0.csv").string()));
    CHECK(slurp((dir1 / base / "traj_h1.csv").string()) ==
          slurp((dir2 / base / "traj_h1.csv").string()));
    CHECK(slurp((dir1 / base / "summary.csv").string()) ==
          slurp((dir2 / base / "summary.csv").string()));
}

TEST_CASE("appE experiment: diverged above the bound, converged at it") {
    ExperimentConfig cfg = builtin_scenario("appE-stability-limit");
    cfg.gd.max_iters = 200000;
    const auto dir = temp_dir("appE");
    cfg.out_dir = dir.string();
    const ExperimentResult result = run_experiment(cfg);
    REQUIRE(result.summary.rows.size() == 2);
    CHECK(result.summary.rows[0].h > result.summary.rows[1].h);
    CHECK(is_diverged(result.summary.rows[0].outcome));
    CHECK(is_converged(result.summary.rows[1].outcome));
}

TEST_CASE("fig1 sweep runs and converges at all three rates") {
    ExperimentConfig cfg = builtin_scenario("fig1");
    const auto dir = temp_dir("fig1");
    cfg.out_dir = dir.string();
    const ExperimentResult result = run_experiment(cfg);
    REQUIRE(result.summary.rows.size() == 3);
    for (const SweepRow& row : result.summary.rows) CHECK(is_converged(row.outcome));
    // The bound-rate run searches first; the smallest rate is classical.
    REQUIRE(result.summary.rows.front().phase2_start.has_value());
    CHECK(*result.summary.rows.front().phase2_start > 0);
    REQUIRE(result.summary.rows.back().phase2_start.has_value());
    CHECK(*result.summary.rows.back().phase2_start == 0);
}

TEST_CASE("orbit scan finds and deduplicates period-2 orbits") {
    const auto orbits = scan_orbits(1.0, 1.9, 120, 141);
    bool period2 = false;
    for (const Orbit& orbit : orbits) {
        CHECK(orbit.residual < 1e-10);
        if (orbit.period == 2) period2 = true;
    }
    CHECK(period2);
    // Canonical representatives are unique.
    for (std::size_t i = 0; i < orbits.size(); ++i)
        for (std::size_t j = i + 1; j < orbits.size(); ++j) {
            const bool same_period = orbits[i].period == orbits[j].period;
            const bool same_point =
                std::abs(orbits[i].cycle.front().first - orbits[j].cycle.front().first) < 1e-8 &&
                std::abs(orbits[i].cycle.front().second - orbits[j].cycle.front().second) < 1e-8;
            const bool duplicate = same_period && same_point;
            CHECK_FALSE(duplicate);
        }
}

TEST_CASE("small-rate orbit scan comes back empty") {
    const auto orbits = scan_orbits(1.0, 0.1, 60, 5);
    CHECK(orbits.empty());
}

}  // TEST_SUITE
