#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "gdlab/matrix.hpp"

namespace gdlab {

/// Deterministic random source. Identical seeds give identical streams
/// within one build; callers own their instance (no shared state).
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (distribution is the contract, not
    /// the bit pattern across implementations).
    double gaussian();

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Vector with the requested Euclidean norm and uniformly random
/// direction (normalized Gaussian draw). norm == 0 gives the zero vector.
std::vector<double> sample_with_norm(std::size_t dim, double norm, SeededRng& rng);

/// Matrix with i.i.d. standard normal entries.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, SeededRng& rng);

/// Matrix with Gaussian direction scaled to the requested Frobenius norm.
Matrix matrix_with_fro_norm(std::size_t rows, std::size_t cols, double norm, SeededRng& rng);

}  // namespace gdlab
