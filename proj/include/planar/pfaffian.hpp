#pragma once

// Dense skew-symmetric matrices and their Pfaffians.
//
// The Pfaffian is computed by reducing A to skew-tridiagonal form with
// Gaussian elimination and partial pivoting (Parlett-Reid). Every row/column
// interchange flips the sign, every elimination step leaves the Pfaffian
// unchanged, and the Pfaffian of the tridiagonal remainder is the product of
// its (2k, 2k+1) entries. O(n^3), and the sign is retained, which the torus
// sector combination relies on.

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "planar/errors.hpp"

namespace planar {

template <typename T>
class SkewMatrix {
public:
    SkewMatrix() = default;
    explicit SkewMatrix(int n) : n_(n), a_(static_cast<std::size_t>(n) * n, T{}) {
        if (n < 0) throw ConfigError("matrix dimension must be non-negative");
    }

    int size() const { return n_; }
    T operator()(int i, int j) const { return a_[idx(i, j)]; }

    // Sets A(i,j) = v and A(j,i) = -v.
    void set(int i, int j, T v) {
        if (i == j) throw ConfigError("skew matrix diagonal is fixed at zero");
        a_[idx(i, j)] = v;
        a_[idx(j, i)] = -v;
    }
    void add(int i, int j, T v) {
        if (i == j) throw ConfigError("skew matrix diagonal is fixed at zero");
        a_[idx(i, j)] += v;
        a_[idx(j, i)] -= v;
    }

    // Wraps raw row-major storage; the skew check is left to the consumer.
    static SkewMatrix from_dense(int n, std::vector<T> data) {
        if (data.size() != static_cast<std::size_t>(n) * n) throw ConfigError("dense data size mismatch");
        SkewMatrix m;
        m.n_ = n;
        m.a_ = std::move(data);
        return m;
    }

    // Largest |A + A^T| entry relative to the largest |A| entry.
    double skew_defect() const {
        double scale = 0.0, defect = 0.0;
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) {
                scale = std::max(scale, static_cast<double>(std::abs(a_[idx(i, j)])));
                defect = std::max(defect, static_cast<double>(std::abs(a_[idx(i, j)] + a_[idx(j, i)])));
            }
        return scale > 0 ? defect / scale : defect;
    }

    std::vector<T>& data() { return a_; }
    const std::vector<T>& data() const { return a_; }

private:
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }

    int n_ = 0;
    std::vector<T> a_;
};

inline constexpr double skew_tolerance = 1e-14;

// Pf(A) as sign * exp(log_abs); sign is a unit-modulus scalar (+-1 for reals).
template <typename T>
struct LogPfaffian {
    T sign{};
    double log_abs = -INFINITY;
    bool odd_dimension = false;

    T value() const { return odd_dimension ? T{} : sign * static_cast<T>(std::exp(log_abs)); }
};

template <typename T>
LogPfaffian<T> log_pfaffian(SkewMatrix<T> a) {
    if (a.skew_defect() > skew_tolerance) throw ConfigError("pfaffian input is not skew-symmetric");
    const int n = a.size();
    LogPfaffian<T> out;
    if (n % 2 != 0) {
        out.odd_dimension = true;
        return out;
    }
    out.sign = T{1};
    out.log_abs = 0.0;
    if (n == 0) return out;

    auto& m = a.data();
    auto at = [&](int i, int j) -> T& { return m[static_cast<std::size_t>(i) * n + j]; };

    for (int k = 0; k + 1 < n; k += 2) {
        // Pivot: largest entry in column k below row k.
        int piv = k + 1;
        double best = std::abs(at(k + 1, k));
        for (int i = k + 2; i < n; ++i)
            if (std::abs(at(i, k)) > best) {
                best = std::abs(at(i, k));
                piv = i;
            }
        if (piv != k + 1) {
            for (int j = 0; j < n; ++j) std::swap(at(k + 1, j), at(piv, j));
            for (int i = 0; i < n; ++i) std::swap(at(i, k + 1), at(i, piv));
            out.sign = -out.sign;
        }
        const T pivot = at(k, k + 1);
        if (pivot == T{}) {
            out.sign = T{};
            out.log_abs = -INFINITY;
            return out;
        }
        const double mag = std::abs(pivot);
        out.log_abs += std::log(mag);
        out.sign *= pivot / static_cast<T>(mag);

        if (k + 2 < n) {
            // Eliminate row k beyond column k+1 using column k+1; apply the
            // congruence to the trailing block: A += tau u^T - u tau^T with
            // tau_i = A(k,i)/A(k,k+1), u_i = A(i,k+1).
            std::vector<T> tau(n - k - 2), u(n - k - 2);
            for (int i = k + 2; i < n; ++i) {
                tau[i - k - 2] = at(k, i) / pivot;
                u[i - k - 2] = at(i, k + 1);
            }
            for (int i = k + 2; i < n; ++i) {
                const T ti = tau[i - k - 2], ui = u[i - k - 2];
                T* row = &at(i, 0);
                for (int j = k + 2; j < n; ++j) row[j] += ti * u[j - k - 2] - ui * tau[j - k - 2];
            }
        }
    }
    return out;
}

// Pf(A). Odd dimensions return 0 (use log_pfaffian to see the flag); non-skew
// input throws ConfigError.
template <typename T>
T pfaffian(const SkewMatrix<T>& a) {
    return log_pfaffian(a).value();
}

}  // namespace planar
