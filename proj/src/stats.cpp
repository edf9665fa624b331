#include "qpattern/stats.hpp"

#include <cmath>
#include <numeric>

#include "qpattern/error.hpp"

namespace qpattern {

double mean(std::span<const double> xs) {
    if (xs.empty()) {
        return 0.0;
    }
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) {
        return 0.0;
    }
    double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - m) * (x - m);
    }
    return ss / static_cast<double>(xs.size() - 1);
}

Estimate mean_of_batches(std::span<const double> batch_values) {
    Estimate e;
    e.value = mean(batch_values);
    if (batch_values.size() > 1) {
        e.std_error = std::sqrt(sample_variance(batch_values) /
                                static_cast<double>(batch_values.size()));
    }
    return e;
}

Estimate batch_means(std::span<const double> series, std::size_t n_batches) {
    require(n_batches >= 2, "batch_means: need at least two batches");
    std::size_t per_batch = series.size() / n_batches;
    require(per_batch >= 1, "batch_means: series shorter than the batch count");
    std::vector<double> batches(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        batches[b] = mean(series.subspan(b * per_batch, per_batch));
    }
    return mean_of_batches(batches);
}

LinearFit weighted_linear_fit(std::span<const double> x, std::span<const double> y,
                              std::span<const double> w) {
    require(x.size() == y.size() && x.size() == w.size(), "linear_fit: size mismatch");
    require(x.size() >= 2, "linear_fit: need at least two points");
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    require(sxx > 0.0, "linear_fit: degenerate abscissae");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double r = y[i] - fit.intercept - fit.slope * x[i];
        ss_res += w[i] * r * r;
    }
    fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 0.0;
    if (x.size() > 2) {
        double dof = static_cast<double>(x.size() - 2);
        fit.slope_stderr = std::sqrt(ss_res / dof / sxx);
    }
    return fit;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    std::vector<double> w(x.size(), 1.0);
    return weighted_linear_fit(x, y, w);
}

double total_variation(std::span<const double> p, std::span<const double> q) {
    require(p.size() == q.size(), "total_variation: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += std::abs(p[i] - q[i]);
    }
    return 0.5 * s;
}

std::vector<double> normalized(std::span<const double> weights) {
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    require(total > 0.0, "normalized: weights sum to zero");
    std::vector<double> out(weights.begin(), weights.end());
    for (double& v : out) {
        v /= total;
    }
    return out;
}

}  // namespace qpattern
