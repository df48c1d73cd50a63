#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcirc {

/// Exact rational scalar. All combinatorial and elimination arithmetic in the
/// pipeline runs on Rat so that rank decisions and coefficient identities are
/// never made in floating point.
using Rat = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

/// Exact conversion: every finite double is a dyadic rational.
inline Rat rat_from_double(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("rat_from_double: non-finite value");
    return Rat(x);
}

inline double rat_to_double(const Rat& r) { return r.convert_to<double>(); }

inline bool rat_is_integer(const Rat& r) { return denominator(r) == 1; }

inline std::string rat_to_string(const Rat& r) {
    if (rat_is_integer(r)) return numerator(r).str();
    return numerator(r).str() + "/" + denominator(r).str();
}

/// Dense matrix of rationals. Circuit incidence structures are tiny, so a
/// row-major vector-of-rows with Gauss-Jordan elimination is all we need.
class RatMat {
public:
    RatMat() = default;
    RatMat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), a_(rows * cols) {}

    static RatMat identity(std::size_t n) {
        RatMat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    Rat& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
    const Rat& operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

    RatMat transposed() const {
        RatMat t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    RatMat operator*(const RatMat& o) const {
        if (cols_ != o.rows_) throw std::invalid_argument("RatMat: dimension mismatch in product");
        RatMat r(rows_, o.cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t k = 0; k < cols_; ++k) {
                if ((*this)(i, k) == 0) continue;
                for (std::size_t j = 0; j < o.cols_; ++j) r(i, j) += (*this)(i, k) * o(k, j);
            }
        return r;
    }

    bool operator==(const RatMat& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && a_ == o.a_;
    }

    /// Reduced row echelon form in place; returns pivot column indices.
    std::vector<std::size_t> rref() {
        std::vector<std::size_t> pivots;
        std::size_t r = 0;
        for (std::size_t c = 0; c < cols_ && r < rows_; ++c) {
            std::size_t p = r;
            while (p < rows_ && (*this)(p, c) == 0) ++p;
            if (p == rows_) continue;
            if (p != r)
                for (std::size_t j = 0; j < cols_; ++j) std::swap((*this)(p, j), (*this)(r, j));
            Rat inv = Rat(1) / (*this)(r, c);
            for (std::size_t j = 0; j < cols_; ++j) (*this)(r, j) *= inv;
            for (std::size_t i = 0; i < rows_; ++i) {
                if (i == r || (*this)(i, c) == 0) continue;
                Rat f = (*this)(i, c);
                for (std::size_t j = 0; j < cols_; ++j) (*this)(i, j) -= f * (*this)(r, j);
            }
            pivots.push_back(c);
            ++r;
        }
        return pivots;
    }

    std::size_t rank() const {
        RatMat tmp(*this);
        return tmp.rref().size();
    }

    /// Basis of the right kernel (columns x such that A x = 0).
    std::vector<std::vector<Rat>> kernel() const {
        RatMat tmp(*this);
        auto pivots = tmp.rref();
        std::vector<bool> is_pivot(cols_, false);
        for (auto c : pivots) is_pivot[c] = true;
        std::vector<std::vector<Rat>> basis;
        for (std::size_t free = 0; free < cols_; ++free) {
            if (is_pivot[free]) continue;
            std::vector<Rat> v(cols_);
            v[free] = 1;
            for (std::size_t pi = 0; pi < pivots.size(); ++pi) v[pivots[pi]] = -tmp(pi, free);
            basis.push_back(std::move(v));
        }
        return basis;
    }

    /// Solve A x = b exactly. Throws if inconsistent; free variables are set to zero.
    std::vector<Rat> solve(const std::vector<Rat>& b) const {
        if (b.size() != rows_) throw std::invalid_argument("RatMat::solve: rhs size mismatch");
        RatMat aug(rows_, cols_ + 1);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) aug(i, j) = (*this)(i, j);
            aug(i, cols_) = b[i];
        }
        auto pivots = aug.rref();
        if (!pivots.empty() && pivots.back() == cols_)
            throw std::domain_error("RatMat::solve: inconsistent system");
        std::vector<Rat> x(cols_);
        for (std::size_t pi = 0; pi < pivots.size(); ++pi) x[pivots[pi]] = aug(pi, cols_);
        return x;
    }

    /// Exact inverse; throws if singular.
    RatMat inverse() const {
        if (rows_ != cols_) throw std::invalid_argument("RatMat::inverse: not square");
        RatMat aug(rows_, 2 * cols_);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) aug(i, j) = (*this)(i, j);
            aug(i, cols_ + i) = 1;
        }
        auto pivots = aug.rref();
        if (pivots.size() != rows_) throw std::domain_error("RatMat::inverse: singular matrix");
        for (std::size_t i = 0; i < rows_; ++i)
            if (pivots[i] != i) throw std::domain_error("RatMat::inverse: singular matrix");
        RatMat inv(rows_, cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) inv(i, j) = aug(i, cols_ + j);
        return inv;
    }

    Rat determinant() const {
        if (rows_ != cols_) throw std::invalid_argument("RatMat::determinant: not square");
        RatMat tmp(*this);
        Rat det = 1;
        std::size_t n = rows_;
        for (std::size_t c = 0; c < n; ++c) {
            std::size_t p = c;
            while (p < n && tmp(p, c) == 0) ++p;
            if (p == n) return 0;
            if (p != c) {
                for (std::size_t j = 0; j < n; ++j) std::swap(tmp(p, j), tmp(c, j));
                det = -det;
            }
            det *= tmp(c, c);
            Rat inv = Rat(1) / tmp(c, c);
            for (std::size_t i = c + 1; i < n; ++i) {
                if (tmp(i, c) == 0) continue;
                Rat f = tmp(i, c) * inv;
                for (std::size_t j = c; j < n; ++j) tmp(i, j) -= f * tmp(c, j);
            }
        }
        return det;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<Rat> a_;
};

}  // namespace qcirc
