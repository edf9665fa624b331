#include "qpattern/polynomial.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "qpattern/error.hpp"

namespace qpattern {

namespace {

double ipow(double x, unsigned p) {
    double r = 1.0;
    while (p > 0) {
        if (p & 1u) {
            r *= x;
        }
        x *= x;
        p >>= 1;
    }
    return r;
}

std::string format_number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Polynomial::Polynomial(std::size_t n_comp, std::vector<std::vector<Monomial>> terms)
    : n_comp_(n_comp), terms_(std::move(terms)) {
    require(terms_.size() == n_comp_, "polynomial: one term list per component required");
    for (const auto& list : terms_) {
        for (const auto& m : list) {
            require(m.powers.size() == n_comp_, "polynomial: monomial arity mismatch");
            require(std::isfinite(m.coeff), "polynomial: non-finite coefficient");
        }
    }
    compile();
}

void Polynomial::compile() {
    max_power_.assign(n_comp_, 0);
    power_offset_.assign(n_comp_ + 1, 0);
    comp_begin_.assign(n_comp_ + 1, 0);
    flat_coeff_.clear();
    flat_power_.clear();
    for (std::size_t c = 0; c < n_comp_; ++c) {
        comp_begin_[c] = flat_coeff_.size();
        for (const auto& m : terms_[c]) {
            flat_coeff_.push_back(m.coeff);
            for (std::size_t i = 0; i < n_comp_; ++i) {
                max_power_[i] = std::max(max_power_[i], m.powers[i]);
            }
        }
    }
    comp_begin_[n_comp_] = flat_coeff_.size();
    for (std::size_t i = 0; i < n_comp_; ++i) {
        power_offset_[i + 1] = power_offset_[i] + max_power_[i] + 1;
    }
    // Each monomial becomes n_comp indices into the table of powers.
    for (std::size_t c = 0; c < n_comp_; ++c) {
        for (const auto& m : terms_[c]) {
            for (std::size_t i = 0; i < n_comp_; ++i) {
                flat_power_.push_back(static_cast<unsigned>(power_offset_[i] + m.powers[i]));
            }
        }
    }
}

Polynomial Polynomial::zero(std::size_t n_comp) {
    return Polynomial(n_comp, std::vector<std::vector<Monomial>>(n_comp));
}

bool Polynomial::is_zero() const noexcept {
    for (const auto& list : terms_) {
        for (const auto& m : list) {
            if (m.coeff != 0.0) {
                return false;
            }
        }
    }
    return true;
}

std::size_t Polynomial::degree() const noexcept {
    std::size_t d = 0;
    for (const auto& list : terms_) {
        for (const auto& m : list) {
            std::size_t total = 0;
            for (unsigned p : m.powers) {
                total += p;
            }
            d = std::max(d, total);
        }
    }
    return d;
}

void Polynomial::evaluate(std::span<const double> u, std::span<double> out) const {
    constexpr std::size_t kStack = 64;
    std::array<double, kStack> stack_table;
    thread_local std::vector<double> heap_table;
    if (n_comp_ == 0) {
        return;
    }
    const std::size_t table_size = power_offset_[n_comp_];
    double* table = stack_table.data();
    if (table_size > kStack) {
        heap_table.resize(table_size);
        table = heap_table.data();
    }
    for (std::size_t i = 0; i < n_comp_; ++i) {
        double* row = table + power_offset_[i];
        row[0] = 1.0;
        for (unsigned p = 1; p <= max_power_[i]; ++p) {
            row[p] = row[p - 1] * u[i];
        }
    }
    const unsigned* idx = flat_power_.data();
    for (std::size_t c = 0; c < n_comp_; ++c) {
        double s = 0.0;
        for (std::size_t t = comp_begin_[c]; t < comp_begin_[c + 1]; ++t) {
            double v = flat_coeff_[t];
            for (std::size_t i = 0; i < n_comp_; ++i) {
                v *= table[*idx++];
            }
            s += v;
        }
        out[c] = s;
    }
}

void Polynomial::jacobian(std::span<const double> u, std::span<double> out) const {
    for (std::size_t c = 0; c < n_comp_; ++c) {
        for (std::size_t i = 0; i < n_comp_; ++i) {
            double s = 0.0;
            for (const auto& m : terms_[c]) {
                if (m.powers[i] == 0) {
                    continue;
                }
                double t = m.coeff * m.powers[i] * ipow(u[i], m.powers[i] - 1);
                for (std::size_t k = 0; k < n_comp_; ++k) {
                    if (k != i && m.powers[k] != 0) {
                        t *= ipow(u[k], m.powers[k]);
                    }
                }
                s += t;
            }
            out[c * n_comp_ + i] = s;
        }
    }
}

void Polynomial::add_linear(std::size_t c, double coeff) {
    require(c < n_comp_, "polynomial: component out of range");
    Monomial m{coeff, std::vector<unsigned>(n_comp_, 0)};
    m.powers[c] = 1;
    terms_[c].push_back(std::move(m));
    compile();
}

std::vector<Monomial> Polynomial::parse_component(const std::string& text, std::size_t n_comp) {
    std::vector<Monomial> out;
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
            ++pos;
        }
    };
    auto error = [&](const std::string& why) {
        fail(ErrorKind::parse_error,
             "polynomial '" + text + "' at column " + std::to_string(pos + 1) + ": " + why);
    };
    auto parse_number = [&](double& value) -> bool {
        std::size_t start = pos;
        while (pos < text.size() &&
               (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.' ||
                text[pos] == 'e' || text[pos] == 'E' ||
                ((text[pos] == '-' || text[pos] == '+') && pos > start &&
                 (text[pos - 1] == 'e' || text[pos - 1] == 'E')))) {
            ++pos;
        }
        if (pos == start) {
            return false;
        }
        auto res = std::from_chars(text.data() + start, text.data() + pos, value);
        if (res.ec != std::errc() || res.ptr != text.data() + pos) {
            error("malformed number");
        }
        return true;
    };

    skip_ws();
    if (pos < text.size() && text[pos] == '0' && text.find_first_not_of("0. \t") == std::string::npos) {
        return out;
    }
    bool first = true;
    while (true) {
        skip_ws();
        if (pos >= text.size()) {
            if (first) {
                error("empty expression");
            }
            break;
        }
        double sign = 1.0;
        if (text[pos] == '+' || text[pos] == '-') {
            sign = text[pos] == '-' ? -1.0 : 1.0;
            ++pos;
            skip_ws();
        } else if (!first) {
            error("expected '+' or '-'");
        }
        first = false;
        Monomial m{sign, std::vector<unsigned>(n_comp, 0)};
        double value = 1.0;
        bool have_factor = false;
        if (parse_number(value)) {
            m.coeff *= value;
            have_factor = true;
        }
        while (true) {
            skip_ws();
            if (pos < text.size() && text[pos] == '*') {
                ++pos;
                skip_ws();
            }
            if (pos >= text.size()) {
                break;
            }
            std::size_t var = n_comp;
            if (text[pos] == 'u') {
                ++pos;
                std::size_t start = pos;
                while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
                    ++pos;
                }
                if (pos == start) {
                    error("variable 'u' needs an index");
                }
                var = std::stoul(text.substr(start, pos - start));
            } else if (text[pos] == 'x' || text[pos] == 'y') {
                var = text[pos] == 'x' ? 0 : 1;
                ++pos;
            } else {
                break;
            }
            if (var >= n_comp) {
                error("variable index exceeds component count");
            }
            unsigned power = 1;
            skip_ws();
            if (pos < text.size() && text[pos] == '^') {
                ++pos;
                skip_ws();
                std::size_t start = pos;
                while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
                    ++pos;
                }
                if (pos == start) {
                    error("exponent must be a non-negative integer");
                }
                power = static_cast<unsigned>(std::stoul(text.substr(start, pos - start)));
            }
            m.powers[var] += power;
            have_factor = true;
        }
        if (!have_factor) {
            error("expected a coefficient or variable");
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::string Polynomial::to_string() const {
    std::ostringstream os;
    for (std::size_t c = 0; c < n_comp_; ++c) {
        if (c > 0) {
            os << "; ";
        }
        if (terms_[c].empty()) {
            os << "0";
        }
        bool first = true;
        for (const auto& m : terms_[c]) {
            os << (first ? "" : " + ") << format_number(m.coeff);
            first = false;
            for (std::size_t i = 0; i < n_comp_; ++i) {
                if (m.powers[i] > 0) {
                    os << " u" << i;
                    if (m.powers[i] > 1) {
                        os << "^" << m.powers[i];
                    }
                }
            }
        }
    }
    return os.str();
}

}  // namespace qpattern
