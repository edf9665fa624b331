#include "qpattern/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qpattern/error.hpp"

namespace qpattern {

double ModelSpec::b(std::size_t c, std::size_t m) const {
    std::size_t nm = grid.n_modes();
    if (b_multipliers.size() == 1) {
        return b_multipliers[0];
    }
    if (b_multipliers.size() == nm) {
        return b_multipliers[m];
    }
    return b_multipliers[c * nm + m];
}

double ModelSpec::lambda(std::size_t c, std::size_t m) const {
    double q = grid.wavenumber(m);
    return d(c) * q * q + a(c);
}

double ModelSpec::omega() const {
    double w = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < grid.n_comp; ++c) {
        for (std::size_t m = 0; m < grid.n_modes(); ++m) {
            w = std::min(w, lambda(c, m));
        }
    }
    return w;
}

void ModelSpec::validate() const {
    grid.validate();
    auto sized = [&](std::size_t s) { return s == 1 || s == grid.n_comp; };
    require(sized(diffusion.size()), "model: diffusion needs 1 or n_comp entries");
    require(sized(damping.size()), "model: damping needs 1 or n_comp entries");
    for (double v : diffusion) {
        require(v > 0.0 && std::isfinite(v), "model: diffusion must be positive");
    }
    for (double v : damping) {
        require(v >= 0.0 && std::isfinite(v), "model: damping must be non-negative");
    }
    std::size_t nm = grid.n_modes();
    std::size_t nb = b_multipliers.size();
    require(nb == 1 || nb == nm || nb == nm * grid.n_comp,
            "model: b_multipliers needs 1, n_modes or n_comp*n_modes entries");
    for (double v : b_multipliers) {
        require(std::isfinite(v) && v >= 0.0, "model: b_multipliers must be finite and >= 0");
    }
    require(sigma >= 0.0 && std::isfinite(sigma), "model: sigma must be >= 0");
    require(reaction.n_comp() == grid.n_comp, "model: reaction arity does not match n_comp");
}

AssumptionReport validate_assumptions(const ModelSpec& spec, std::optional<double> kappa) {
    AssumptionReport r;
    r.omega = spec.omega();
    r.omega_positive = r.omega > 0.0;
    if (!r.omega_positive) {
        r.warnings.push_back("omega <= 0: the linear semigroup does not decay on the lowest mode");
    }
    r.kappa = kappa ? kappa : spec.kappa_bound;
    if (r.kappa) {
        r.kappa_in_range = *r.kappa > 0.0 && *r.kappa < r.omega;
        if (!r.kappa_in_range) {
            std::ostringstream os;
            os.precision(6);
            os << "kappa = " << *r.kappa << " not in (0, omega = " << r.omega << ")";
            r.warnings.push_back(os.str());
        }
    }
    r.b_min = *std::min_element(spec.b_multipliers.begin(), spec.b_multipliers.end());
    r.b_max = *std::max_element(spec.b_multipliers.begin(), spec.b_multipliers.end());
    r.b_bounded = r.b_min > 0.0 && std::isfinite(r.b_max);
    if (!r.b_bounded) {
        r.warnings.push_back("noise multipliers are not bounded away from zero");
    }
    return r;
}

double reaction_lipschitz(const ModelSpec& spec, const std::vector<Field>& states) {
    const std::size_t nc = spec.grid.n_comp;
    std::vector<double> u(nc), jac(nc * nc);
    double kappa = 0.0;
    for (const auto& f : states) {
        require_same_grid(f.grid, spec.grid);
        for (std::size_t j = 0; j < spec.grid.n_grid; ++j) {
            for (std::size_t c = 0; c < nc; ++c) {
                u[c] = f.at(c, j);
            }
            spec.reaction.jacobian(u, jac);
            for (std::size_t c = 0; c < nc; ++c) {
                double row = 0.0;
                for (std::size_t i = 0; i < nc; ++i) {
                    row += std::abs(jac[c * nc + i]);
                }
                kappa = std::max(kappa, row);
            }
        }
    }
    return kappa;
}

}  // namespace qpattern
