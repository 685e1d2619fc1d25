#include "fedrl/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedrl {

namespace {

void check_window(const RateWindow& w) {
    if (w.H < 1) throw std::invalid_argument("horizon must be positive");
    if (w.N_lo < 0 || w.N_hi <= w.N_lo) throw std::invalid_argument("rate window requires 0 <= N_lo < N_hi");
    if (!(w.iota > 0.0)) throw std::invalid_argument("iota must be positive");
}

}  // namespace

void BonusConstants::validate(int H) const {
    if (!(c_b > 0.0) || !(c_b_R > 0.0) || !(c_b_R2 > 0.0))
        throw std::invalid_argument("bonus constants must be positive");
    if (!(beta > 0.0) || beta > H) throw std::invalid_argument("beta must lie in (0, H]");
}

double eta(std::int64_t t, int H) {
    if (t < 1) throw std::invalid_argument("eta: t must be >= 1, got " + std::to_string(t));
    return static_cast<double>(H + 1) / static_cast<double>(H + t);
}

double eta_weight(std::int64_t i, std::int64_t t, int H) {
    if (i < 0 || i > t) throw std::invalid_argument("eta_weight: requires 0 <= i <= t");
    if (i == 0) return t == 0 ? 1.0 : 0.0;
    double w = eta(i, H);
    for (std::int64_t j = i + 1; j <= t; ++j) w *= 1.0 - eta(j, H);
    return w;
}

double eta_complement(std::int64_t n1, std::int64_t n2, int H) {
    if (n1 < 1 || n1 > n2) throw std::invalid_argument("eta_complement: requires 1 <= n1 <= n2");
    double prod = 1.0;
    for (std::int64_t t = n1; t <= n2; ++t) prod *= 1.0 - eta(t, H);
    return prod;
}

double alpha_rate(const RateWindow& w) {
    check_window(w);
    return 1.0 - eta_complement(w.N_lo + 1, w.N_hi, w.H);
}

double hoeffding_bonus(const RateWindow& w, const BonusConstants& c) {
    check_window(w);
    const double h3 = static_cast<double>(w.H) * w.H * w.H;
    // Walk t downwards so the running complement product is shared.
    double tail = 1.0;  // prod_{j=t+1}^{N_hi} (1 - eta_j)
    double total = 0.0;
    for (std::int64_t t = w.N_hi; t > w.N_lo; --t) {
        const double e = eta(t, w.H);
        total += e * tail * c.c_b * std::sqrt(h3 * w.iota / static_cast<double>(t));
        tail *= 1.0 - e;
    }
    return total;
}

double beta_R(double mu_R, double sigma_R, double mu_A, double sigma_A, std::int64_t N, int H, double iota,
              double c_b_R) {
    if (N < 1) throw std::invalid_argument("beta_R: N must be >= 1");
    const double var_ref = std::max(0.0, sigma_R - mu_R * mu_R);
    const double var_adv = std::max(0.0, sigma_A - mu_A * mu_A);
    return c_b_R * std::sqrt(iota / static_cast<double>(N)) * (std::sqrt(var_ref) + std::sqrt(H * var_adv));
}

double reference_bonus(const RateWindow& w, double beta_R_prev, double beta_R_new, const BonusConstants& c) {
    check_window(w);
    const double h2_iota = static_cast<double>(w.H) * w.H * w.iota;
    const std::int64_t last = w.N_hi;
    const double eta_last = eta(last, w.H);
    const double b_last = (1.0 - 1.0 / eta_last) * beta_R_prev + beta_R_new / eta_last +
                          c.c_b_R2 * h2_iota / static_cast<double>(last);
    double total = eta_last * b_last;
    double tail = 1.0 - eta_last;
    for (std::int64_t t = last - 1; t > w.N_lo; --t) {
        const double e = eta(t, w.H);
        total += e * tail * (beta_R_prev + c.c_b_R2 * h2_iota / static_cast<double>(t));
        tail *= 1.0 - e;
    }
    return total;
}

double iota_theory(int S, int A, std::int64_t T1, double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("iota_theory: p must lie in (0,1)");
    if (T1 < 1) throw std::invalid_argument("iota_theory: T1 must be >= 1");
    return std::log(28.0 * S * A * static_cast<double>(T1) / p);
}

}  // namespace fedrl
