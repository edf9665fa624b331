#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qpattern {

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

double mean(std::span<const double> xs);
/// Unbiased sample variance; zero for fewer than two samples.
double sample_variance(std::span<const double> xs);

/// Batch-means estimate of the mean of a (possibly autocorrelated) series.
/// Trailing samples that do not fill a batch are dropped.
Estimate batch_means(std::span<const double> series, std::size_t n_batches = 10);

/// Mean and standard error of independent batch values.
Estimate mean_of_batches(std::span<const double> batch_values);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_stderr = 0.0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);
/// Weighted least squares with weights w_i (e.g. 1/se_i^2).
LinearFit weighted_linear_fit(std::span<const double> x, std::span<const double> y,
                              std::span<const double> w);

/// Total-variation distance between two probability vectors.
double total_variation(std::span<const double> p, std::span<const double> q);

std::vector<double> normalized(std::span<const double> weights);

}  // namespace qpattern
