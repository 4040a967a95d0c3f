#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedtdd/error.hpp"

namespace fedtdd {

// Dense row-major matrix of doubles. Windows, series and covariance blocks
// all use this one type; shape checks happen at the operation boundaries.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::vector<double> column(std::size_t c) const {
        std::vector<double> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    // Rows [r0, r1) as a new matrix.
    Matrix slice_rows(std::size_t r0, std::size_t r1) const {
        require(r0 <= r1 && r1 <= rows_, "Matrix::slice_rows: range out of bounds");
        Matrix out(r1 - r0, cols_);
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = 0; c < cols_; ++c) out(r - r0, c) = (*this)(r, c);
        return out;
    }

    // Gather the given columns, in the given order.
    Matrix slice_cols(const std::vector<std::size_t>& idx) const {
        Matrix out(rows_, idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
            require(idx[j] < cols_, "Matrix::slice_cols: column index out of bounds");
            for (std::size_t r = 0; r < rows_; ++r) out(r, j) = (*this)(r, idx[j]);
        }
        return out;
    }

    void set_column(std::size_t c, const std::vector<double>& v) {
        require(v.size() == rows_, "Matrix::set_column: length mismatch");
        for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
    }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

using Window = Matrix;

inline Matrix concat_cols(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "concat_cols: row count mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c);
        for (std::size_t c = 0; c < b.cols(); ++c) out(r, a.cols() + c) = b(r, c);
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    Matrix out(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

// Binary observation mask paired with a Window: 1 = observed, 0 = missing.
class Mask {
public:
    Mask() = default;
    Mask(std::size_t rows, std::size_t cols, std::uint8_t fill = 1)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mask ones(std::size_t rows, std::size_t cols) { return Mask(rows, cols, 1); }
    static Mask zeros(std::size_t rows, std::size_t cols) { return Mask(rows, cols, 0); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::uint8_t& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    std::uint8_t operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    bool same_shape(const Matrix& m) const { return rows_ == m.rows() && cols_ == m.cols(); }

    std::size_t count_observed() const {
        std::size_t n = 0;
        for (auto v : data_) n += v;
        return n;
    }

    std::size_t observed_in_column(std::size_t c) const {
        std::size_t n = 0;
        for (std::size_t r = 0; r < rows_; ++r) n += (*this)(r, c);
        return n;
    }

    bool all_ones() const { return count_observed() == data_.size(); }
    bool all_zeros() const { return count_observed() == 0; }

    Mask slice_cols(const std::vector<std::size_t>& idx) const {
        Mask out(rows_, idx.size(), 0);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            require(idx[j] < cols_, "Mask::slice_cols: column index out of bounds");
            for (std::size_t r = 0; r < rows_; ++r) out(r, j) = (*this)(r, idx[j]);
        }
        return out;
    }

    bool operator==(const Mask& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> data_;
};

inline Mask concat_cols(const Mask& a, const Mask& b) {
    require(a.rows() == b.rows(), "concat_cols: row count mismatch");
    Mask out(a.rows(), a.cols() + b.cols(), 0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c);
        for (std::size_t c = 0; c < b.cols(); ++c) out(r, a.cols() + c) = b(r, c);
    }
    return out;
}

// Copy of `w` with unobserved entries zeroed. Pipeline code works on these
// copies so it can never read a value the mask says is missing.
inline Window masked_fill_zero(const Window& w, const Mask& m) {
    require(m.same_shape(w), "masked_fill_zero: shape mismatch");
    Window out = w;
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c)
            if (!m(r, c)) out(r, c) = 0.0;
    return out;
}

}  // namespace fedtdd
