#pragma once

// Binned accumulation and jackknife error estimates.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "planar/errors.hpp"

namespace planar {

inline constexpr int min_jackknife_bins = 20;

// Per-bin running sums of a fixed-length vector of primary observables.
// Records are assigned to bins in contiguous blocks.
class BinnedAccumulator {
public:
    BinnedAccumulator(int bins, std::size_t width) : sums_(bins, std::vector<double>(width, 0.0)), counts_(bins, 0) {
        if (bins < 1) throw ConfigError("need at least one bin");
    }

    int bins() const { return static_cast<int>(counts_.size()); }
    std::size_t width() const { return sums_.empty() ? 0 : sums_[0].size(); }

    void add(int bin, const std::vector<double>& x) {
        auto& s = sums_.at(bin);
        if (x.size() != s.size()) throw ConfigError("observable vector width mismatch");
        for (std::size_t k = 0; k < x.size(); ++k) s[k] += x[k];
        ++counts_[bin];
    }

    long count(int bin) const { return counts_.at(bin); }
    long total() const {
        long n = 0;
        for (long c : counts_) n += c;
        return n;
    }
    const std::vector<double>& sum(int bin) const { return sums_.at(bin); }

    // Mean over all bins.
    std::vector<double> mean() const { return mean_excluding(-1); }

    // Mean over all bins except `skip`.
    std::vector<double> mean_excluding(int skip) const {
        std::vector<double> m(width(), 0.0);
        long n = 0;
        for (int b = 0; b < bins(); ++b) {
            if (b == skip) continue;
            for (std::size_t k = 0; k < m.size(); ++k) m[k] += sums_[b][k];
            n += counts_[b];
        }
        if (n == 0) throw NumericError("no records accumulated");
        for (double& v : m) v /= static_cast<double>(n);
        return m;
    }

    void merge(const BinnedAccumulator& o) {
        if (o.bins() != bins() || o.width() != width()) throw ConfigError("accumulator shapes differ");
        for (int b = 0; b < bins(); ++b) {
            for (std::size_t k = 0; k < width(); ++k) sums_[b][k] += o.sums_[b][k];
            counts_[b] += o.counts_[b];
        }
    }

private:
    std::vector<std::vector<double>> sums_;
    std::vector<long> counts_;
};

struct JackknifeResult {
    std::vector<double> value;
    std::vector<double> error;
    std::vector<std::vector<double>> samples;  // [bin][k], leave-one-bin-out estimates
};

// Jackknife spread of leave-one-out estimates.
inline double jackknife_error(const std::vector<double>& loo) {
    const double n = static_cast<double>(loo.size());
    if (loo.size() < 2) return 0.0;
    double avg = 0.0;
    for (double x : loo) avg += x / n;
    double s = 0.0;
    for (double x : loo) s += (x - avg) * (x - avg);
    return std::sqrt(s * (n - 1.0) / n);
}

// Derived quantities f(mean) with errors from delete-one-bin jackknife.
inline JackknifeResult jackknife(const BinnedAccumulator& acc,
                                 const std::function<std::vector<double>(const std::vector<double>&)>& f) {
    const int nb = acc.bins();
    if (nb < min_jackknife_bins)
        throw ConfigError("jackknife needs at least " + std::to_string(min_jackknife_bins) + " bins, got " +
                          std::to_string(nb));
    for (int b = 0; b < nb; ++b)
        if (acc.count(b) == 0) throw ConfigError("empty jackknife bin");
    JackknifeResult r;
    r.value = f(acc.mean());
    const std::size_t m = r.value.size();
    std::vector<std::vector<double>> loo(nb);
    std::vector<double> avg(m, 0.0);
    for (int b = 0; b < nb; ++b) {
        loo[b] = f(acc.mean_excluding(b));
        if (loo[b].size() != m) throw NumericError("jackknife estimator changed output size");
        for (std::size_t k = 0; k < m; ++k) avg[k] += loo[b][k] / nb;
    }
    r.error.assign(m, 0.0);
    for (int b = 0; b < nb; ++b)
        for (std::size_t k = 0; k < m; ++k) r.error[k] += (loo[b][k] - avg[k]) * (loo[b][k] - avg[k]);
    for (double& e : r.error) e = std::sqrt(e * (nb - 1.0) / nb);
    r.samples = std::move(loo);
    return r;
}

// Mean and jackknife error of a scalar stream.
inline std::pair<double, double> jackknife_mean(const std::vector<double>& xs, int bins = min_jackknife_bins) {
    if (static_cast<int>(xs.size()) < bins) throw ConfigError("fewer samples than bins");
    BinnedAccumulator acc(bins, 1);
    for (std::size_t i = 0; i < xs.size(); ++i)
        acc.add(static_cast<int>(i * static_cast<std::size_t>(bins) / xs.size()), {xs[i]});
    auto r = jackknife(acc, [](const std::vector<double>& m) { return m; });
    return {r.value[0], r.error[0]};
}

inline int bin_of(long index, long total, int bins) {
    return static_cast<int>((static_cast<long double>(index) * bins) / total);
}

}  // namespace planar
