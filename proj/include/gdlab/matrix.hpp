#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace gdlab {

/// Dense real matrix, row-major, value semantics. Sized for desk-scale
/// problems (n up to a few thousand); no sparse or complex support.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);
    static Matrix diagonal(const std::vector<double>& entries);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const double& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix transposed() const;
    double frobenius_norm() const;
    double max_abs() const;
    bool is_finite() const;
    bool is_diagonal(double tol = 0.0) const;

    Matrix& operator+=(const Matrix& rhs);
    Matrix& operator-=(const Matrix& rhs);
    Matrix& operator*=(double s);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix lhs, const Matrix& rhs);
Matrix operator-(Matrix lhs, const Matrix& rhs);
Matrix operator*(double s, Matrix m);
Matrix operator*(const Matrix& a, const Matrix& b);

/// Frobenius inner product Tr(b^T a).
double frobenius_dot(const Matrix& a, const Matrix& b);

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending,
/// eigenvectors as orthonormal columns.
struct EigResult {
    std::vector<double> values;
    Matrix vectors;
};

/// Cyclic Jacobi eigensolver. Input must be square, finite, and symmetric
/// to within sym_tol (relative to the largest entry); throws otherwise.
EigResult sym_eig(const Matrix& m, double sym_tol = 1e-10);

/// Singular value decomposition A = U D V^T of a square matrix via
/// one-sided Jacobi. Singular values are non-negative and descending;
/// U, V orthogonal (rank-deficient inputs get completed bases).
struct SvdResult {
    Matrix u;
    std::vector<double> singular_values;
    Matrix v;

    Matrix d() const { return Matrix::diagonal(singular_values); }
};

SvdResult svd(const Matrix& a);

// Text format: first line "rows cols", then one whitespace-separated row
// per line, 17 significant digits on write.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);
void save_matrix(const std::string& path, const Matrix& m);
Matrix load_matrix(const std::string& path);

}  // namespace gdlab
