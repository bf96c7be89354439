#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "gdlab/rng.hpp"

using namespace gdlab;

TEST_SUITE("rng") {

TEST_CASE("sample_with_norm hits the requested norm") {
    SeededRng rng(1);
    const auto v = sample_with_norm(10, 18.0, rng);
    double len = 0.0;
    for (double x : v) len += x * x;
    CHECK(std::sqrt(len) == doctest::Approx(18.0).epsilon(1e-12));
}

TEST_CASE("zero norm gives the zero vector") {
    SeededRng rng(2);
    const auto v = sample_with_norm(5, 0.0, rng);
    for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("negative norm is rejected") {
    SeededRng rng(3);
    CHECK_THROWS_AS(sample_with_norm(4, -1.0, rng), std::invalid_argument);
}

TEST_CASE("identical seeds give identical draws") {
    SeededRng a(99), b(99);
    const auto va = sample_with_norm(8, 2.5, a);
    const auto vb = sample_with_norm(8, 2.5, b);
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(va[i] == vb[i]);
}

TEST_CASE("direction uniformity smoke test over 1e4 draws") {
    SeededRng rng(4);
    const std::size_t dim = 3;
    const std::size_t draws = 10000;
    double mean[3] = {0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < draws; ++k) {
        const auto v = sample_with_norm(dim, 1.0, rng);
        for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
    }
    // Coordinates of a unit direction in R^3 have variance 1/3.
    const double se = std::sqrt(1.0 / 3.0 / static_cast<double>(draws));
    for (std::size_t i = 0; i < dim; ++i) {
        mean[i] /= static_cast<double>(draws);
        CHECK(std::abs(mean[i]) < 4.0 * se);
    }
}

TEST_CASE("gaussian moments look sane") {
    SeededRng rng(5);
    double m1 = 0.0, m2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        m1 += g;
        m2 += g * g;
    }
    m1 /= n;
    m2 /= n;
    CHECK(std::abs(m1) < 0.03);
    CHECK(m2 == doctest::Approx(1.0).epsilon(0.05));
}

}  // TEST_SUITE
