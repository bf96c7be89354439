#include "gdlab/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gdlab {

double SeededRng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
}

std::vector<double> sample_with_norm(std::size_t dim, double norm, SeededRng& rng) {
    if (dim == 0) throw std::invalid_argument("sample_with_norm: dim must be >= 1");
    if (norm < 0.0) throw std::invalid_argument("sample_with_norm: negative norm");
    std::vector<double> v(dim);
    if (norm == 0.0) return v;
    double len = 0.0;
    do {
        len = 0.0;
        for (double& x : v) {
            x = rng.gaussian();
            len += x * x;
        }
        len = std::sqrt(len);
    } while (len < 1e-300);
    for (double& x : v) x *= norm / len;
    return v;
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, SeededRng& rng) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = rng.gaussian();
    return m;
}

Matrix matrix_with_fro_norm(std::size_t rows, std::size_t cols, double norm, SeededRng& rng) {
    if (norm < 0.0) throw std::invalid_argument("matrix_with_fro_norm: negative norm");
    Matrix m(rows, cols);
    if (norm == 0.0) return m;
    double len = 0.0;
    do {
        len = 0.0;
        for (double& x : m.data()) {
            x = rng.gaussian();
            len += x * x;
        }
        len = std::sqrt(len);
    } while (len < 1e-300);
    m *= norm / len;
    return m;
}

}  // namespace gdlab
