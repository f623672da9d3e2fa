#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qnorm {

// Dense row-major matrix of doubles. Rows index batch samples, columns
// index neurons. Values are immutable by convention once an operation has
// produced them; gradients are allowed to overflow to Inf (explosion is a
// measurable outcome, not an error), so only externally supplied data is
// checked for finiteness.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("Matrix: rows and cols must be >= 1");
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("Matrix: rows and cols must be >= 1");
        if (data_.size() != rows * cols)
            throw std::invalid_argument(
                "Matrix: data length " + std::to_string(data_.size()) +
                " != " + std::to_string(rows) + "x" + std::to_string(cols));
    }

    // Construction from external input: NaN/Inf rejected.
    static Matrix from_external(std::size_t rows, std::size_t cols,
                                std::vector<double> data) {
        Matrix m(rows, cols, std::move(data));
        for (double v : m.data_)
            if (!std::isfinite(v))
                throw std::invalid_argument(
                    "Matrix: non-finite entry in external input");
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double operator()(std::size_t r, std::size_t c) const {
        return data_[r * cols_ + c];
    }
    double& operator()(std::size_t r, std::size_t c) {
        return data_[r * cols_ + c];
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// C = A * B with a fixed left-to-right summation order over the inner
// index for every output element (i-k-j loop; per (i,j) the partial sums
// accumulate in ascending k, identical to the naive i-j-k loop).
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                    a.shape_str() + " x " + b.shape_str());
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* crow = &c(i, 0);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.data().data() + k * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            t(j, i) = m(i, j);
    return t;
}

}  // namespace qnorm
