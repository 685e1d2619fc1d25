#pragma once

#include <cstdint>

namespace fedrl {

// Visit-count window of one (s,a,h) over one round: counts before and after.
struct RateWindow {
    int H = 1;
    std::int64_t N_lo = 0;
    std::int64_t N_hi = 1;
    double iota = 1.0;
};

struct BonusConstants {
    double c_b = 1.4142135623730951;  // sqrt(2)
    double c_b_R = 2.0;
    double c_b_R2 = 1.0;
    double beta = 0.05;

    // Throws std::invalid_argument unless all are positive and beta <= H.
    void validate(int H) const;
};

// eta_t = (H+1)/(H+t), t >= 1.
double eta(std::int64_t t, int H);

// eta_i^t = eta_i * prod_{j=i+1}^t (1 - eta_j); eta_0^0 = 1, eta_0^t = 0.
double eta_weight(std::int64_t i, std::int64_t t, int H);

// prod_{t=n1}^{n2} (1 - eta_t), 1 <= n1 <= n2.
double eta_complement(std::int64_t n1, std::int64_t n2, int H);

// 1 - eta_complement(N_lo + 1, N_hi).
double alpha_rate(const RateWindow& w);

// sum_{t=N_lo+1}^{N_hi} eta_t^{N_hi} * c_b * sqrt(H^3 iota / t).
double hoeffding_bonus(const RateWindow& w, const BonusConstants& c);

// Variance-aware reference bonus coefficient. Empirical variances are clamped
// at zero before the square roots.
double beta_R(double mu_R, double sigma_R, double mu_A, double sigma_A, std::int64_t N, int H, double iota,
              double c_b_R);

// Cumulative reference bonus over the window. Interior indices use the
// start-of-round coefficient; the final index carries the telescoping
// correction towards the end-of-round coefficient.
double reference_bonus(const RateWindow& w, double beta_R_prev, double beta_R_new, const BonusConstants& c);

// log(28 S A T1 / p), 0 < p < 1.
double iota_theory(int S, int A, std::int64_t T1, double p);

}  // namespace fedrl
