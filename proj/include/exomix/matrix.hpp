#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exomix/error.hpp"

namespace exomix {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return values_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {values_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {values_.data() + i * cols_, cols_}; }

    std::vector<double> column(std::size_t j) const
    {
        std::vector<double> out(rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            out[i] = (*this)(i, j);
        return out;
    }

    const std::vector<double>& values() const noexcept { return values_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// The mixture sample: n observations of r coordinates, all finite.
class DataMatrix {
public:
    DataMatrix() = default;

    explicit DataMatrix(Matrix values, std::vector<std::string> names = {})
        : values_(std::move(values)), names_(std::move(names))
    {
        if (values_.cols() == 0)
            throw InvalidData("data matrix needs at least one coordinate");
        for (double v : values_.values())
            if (!std::isfinite(v))
                throw InvalidData("data matrix contains a non-finite entry");
        if (names_.empty())
            for (std::size_t k = 0; k < values_.cols(); ++k)
                names_.push_back("V" + std::to_string(k + 1));
        if (names_.size() != values_.cols())
            throw LengthMismatch("coordinate name count does not match column count");
    }

    static DataMatrix from_columns(const std::vector<std::vector<double>>& columns,
                                   std::vector<std::string> names = {})
    {
        if (columns.empty())
            throw InvalidData("data matrix needs at least one coordinate");
        const std::size_t n = columns.front().size();
        Matrix m(n, columns.size());
        for (std::size_t k = 0; k < columns.size(); ++k) {
            if (columns[k].size() != n)
                throw LengthMismatch("coordinate columns differ in length");
            for (std::size_t i = 0; i < n; ++i)
                m(i, k) = columns[k][i];
        }
        return DataMatrix(std::move(m), std::move(names));
    }

    std::size_t n() const noexcept { return values_.rows(); }
    std::size_t r() const noexcept { return values_.cols(); }

    double operator()(std::size_t i, std::size_t k) const noexcept { return values_(i, k); }
    std::span<const double> row(std::size_t i) const noexcept { return values_.row(i); }
    std::vector<double> column(std::size_t k) const { return values_.column(k); }

    const Matrix& values() const noexcept { return values_; }
    const std::vector<std::string>& names() const noexcept { return names_; }

    /// Index of a named coordinate; throws SchemaMismatch when absent.
    std::size_t index_of(const std::string& name) const
    {
        for (std::size_t k = 0; k < names_.size(); ++k)
            if (names_[k] == name)
                return k;
        throw SchemaMismatch("no coordinate named '" + name + "'");
    }

    DataMatrix select_rows(std::span<const std::size_t> rows) const
    {
        Matrix m(rows.size(), r());
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t k = 0; k < r(); ++k)
                m(i, k) = values_(rows[i], k);
        return DataMatrix(std::move(m), names_);
    }

private:
    Matrix values_;
    std::vector<std::string> names_;
};

} // namespace exomix
