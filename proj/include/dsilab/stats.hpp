#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dsi {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;          // standard error of the mean
    double variance = 0.0;    // unbiased sample variance
    std::size_t count = 0;
};

/// Mean, unbiased variance and standard error with pairwise reductions.
MeanSe mean_se(std::span<const double> x);

/// Linear-interpolation quantile (type 7) of an unsorted sample.
double quantile(std::span<const double> x, double q);

struct Summary {
    double mean = 0.0;
    double median = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;
    double q99 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

Summary summarize(std::span<const double> x);

/// Fraction of entries satisfying x >= threshold.
double fraction_at_least(std::span<const double> x, double threshold);

} // namespace dsi
