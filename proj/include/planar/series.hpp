#pragma once

// Correlation data as a function of separation.

#include <cstddef>
#include <string>
#include <vector>

namespace planar {

enum class Channel { plain, staggered };

inline std::string channel_name(Channel c) { return c == Channel::plain ? "plain" : "staggered"; }

struct CorrelationSeries {
    std::string observable;
    Channel channel = Channel::plain;
    std::vector<int> r;
    std::vector<double> mean;
    std::vector<double> error;
    std::vector<long> n;
    // Leave-one-bin-out estimates [bin][point]; empty for exact data.
    std::vector<std::vector<double>> replicas;

    std::size_t size() const { return r.size(); }
    void push(int ri, double m, double e, long count) {
        r.push_back(ri);
        mean.push_back(m);
        error.push_back(e);
        n.push_back(count);
    }
};

// Binder cumulant at one (L, beta) point.
struct BinderValue {
    double U = 0.0;
    double error = 0.0;
};

}  // namespace planar
