#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ctha/errors.hpp"

#include "json.hpp"

namespace ctha {

using Vector = std::vector<double>;

/// Small dense row-major matrix. Layer counts are tiny (n <= 16 in every
/// experiment), so a plain contiguous buffer beats pulling in a linear
/// algebra dependency; everything we need is products, row/column sums and
/// elementwise passes.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const noexcept { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Matrix operator*(const Matrix& rhs) const {
        if (cols_ != rhs.rows_)
            throw ShapeError("matrix product: " + shape_str() + " x " + rhs.shape_str());
        Matrix out(rows_, rhs.cols_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t k = 0; k < cols_; ++k) {
                const double a = at(i, k);
                if (a == 0.0) continue;
                for (std::size_t j = 0; j < rhs.cols_; ++j)
                    out.at(i, j) += a * rhs.at(k, j);
            }
        return out;
    }

    double row_abs_sum(std::size_t i) const {
        double s = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) s += std::abs(at(i, j));
        return s;
    }

    double col_abs_sum(std::size_t j) const {
        double s = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) s += std::abs(at(i, j));
        return s;
    }

    Vector row(std::size_t i) const {
        Vector r(cols_);
        for (std::size_t j = 0; j < cols_; ++j) r[j] = at(i, j);
        return r;
    }

    void set_row(std::size_t i, const Vector& v) {
        if (v.size() != cols_) throw ShapeError("set_row: length mismatch");
        for (std::size_t j = 0; j < cols_; ++j) at(i, j) = v[j];
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Matrices appear in experiment reports as JSON arrays of row arrays.
inline void to_json(nlohmann::json& j, const Matrix& m) {
    j = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) j.push_back(m.row(i));
}

inline void from_json(const nlohmann::json& j, Matrix& m) {
    if (!j.is_array()) throw ShapeError("matrix json: expected array of arrays");
    const std::size_t rows = j.size();
    const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
    m = Matrix(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const auto& rj = j.at(i);
        if (!rj.is_array() || rj.size() != cols)
            throw ShapeError("matrix json: ragged rows");
        for (std::size_t k = 0; k < cols; ++k) m.at(i, k) = rj.at(k).get<double>();
    }
}

}  // namespace ctha
