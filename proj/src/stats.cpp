#include "dsilab/stats.hpp"

#include "dsilab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsi {

MeanSe mean_se(std::span<const double> x) {
    MeanSe out;
    out.count = x.size();
    if (x.empty()) return out;
    out.mean = pairwise_sum(x) / static_cast<double>(x.size());
    if (x.size() > 1) {
        std::vector<double> dev(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - out.mean;
            dev[i] = d * d;
        }
        out.variance = pairwise_sum(dev) / static_cast<double>(x.size() - 1);
        out.se = std::sqrt(out.variance / static_cast<double>(x.size()));
    }
    return out;
}

namespace {

double sorted_quantile(const std::vector<double>& s, double q) {
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
}

} // namespace

double quantile(std::span<const double> x, double q) {
    if (x.empty()) throw std::invalid_argument("quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must lie in [0, 1]");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    return sorted_quantile(s, q);
}

Summary summarize(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("summarize: empty sample");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    Summary out;
    out.mean = pairwise_sum(x) / static_cast<double>(x.size());
    out.median = sorted_quantile(s, 0.5);
    out.q05 = sorted_quantile(s, 0.05);
    out.q95 = sorted_quantile(s, 0.95);
    out.q99 = sorted_quantile(s, 0.99);
    out.min = s.front();
    out.max = s.back();
    return out;
}

double fraction_at_least(std::span<const double> x, double threshold) {
    if (x.empty()) return 0.0;
    const auto n = std::count_if(x.begin(), x.end(), [&](double v) { return v >= threshold; });
    return static_cast<double>(n) / static_cast<double>(x.size());
}

} // namespace dsi
