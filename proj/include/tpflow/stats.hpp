#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tpflow {

/// Single-pass mean/variance accumulator (Welford recurrence) with the
/// pairwise merge used for parallel reduction. The merge reproduces the
/// sequential result over the union of the sample sets to roundoff.
class Welford {
public:
    void add(double x) {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }

    void merge(const Welford& other) {
        if (other.n_ == 0) return;
        if (n_ == 0) {
            *this = other;
            return;
        }
        const double delta = other.mean_ - mean_;
        const long long n = n_ + other.n_;
        mean_ += delta * static_cast<double>(other.n_) / static_cast<double>(n);
        m2_ += other.m2_ + delta * delta * static_cast<double>(n_) *
                               static_cast<double>(other.n_) / static_cast<double>(n);
        n_ = n;
    }

    long long count() const { return n_; }
    double mean() const { return mean_; }
    double m2() const { return m2_; }

    /// Unbiased sample variance; 0 when fewer than two samples.
    double variance() const { return n_ >= 2 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

private:
    long long n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Per-sample finite-volume moments of one (cell, phase): the realized
/// fraction and the characteristic-function-weighted averages of rho, u, p.
struct PhaseMoments {
    double theta = 0.0;  ///< I[X], fraction of the cell covered by the phase
    double xrho = 0.0;   ///< I[X rho]
    double xu = 0.0;     ///< I[X u]
    double xp = 0.0;     ///< I[X p]
};

/// Streaming per-cell per-phase accumulator over ensemble samples.
class FieldAccumulator {
public:
    FieldAccumulator() = default;
    explicit FieldAccumulator(std::size_t cells) : cells_(cells), w_(cells * kSlots) {}

    std::size_t cells() const { return cells_; }

    void add_sample(const std::vector<std::array<PhaseMoments, 2>>& sample) {
        if (sample.size() != cells_) throw std::invalid_argument("stats: sample/cell count mismatch");
        for (std::size_t i = 0; i < cells_; ++i) {
            for (int k = 0; k < 2; ++k) {
                const PhaseMoments& m = sample[i][k];
                at(i, k, 0).add(m.theta);
                at(i, k, 1).add(m.xrho);
                at(i, k, 2).add(m.xu);
                at(i, k, 3).add(m.xp);
            }
        }
    }

    void merge(const FieldAccumulator& other) {
        if (other.cells_ != cells_) throw std::invalid_argument("stats: accumulator shape mismatch");
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i].merge(other.w_[i]);
    }

    const Welford& at(std::size_t cell, int phase, int var) const {
        return w_[(cell * 2 + static_cast<std::size_t>(phase)) * 4 + static_cast<std::size_t>(var)];
    }
    Welford& at(std::size_t cell, int phase, int var) {
        return w_[(cell * 2 + static_cast<std::size_t>(phase)) * 4 + static_cast<std::size_t>(var)];
    }

private:
    static constexpr std::size_t kSlots = 8;  // 2 phases x 4 variables
    std::size_t cells_ = 0;
    std::vector<Welford> w_;
};

/// Favre-normalized ensemble statistics of one (cell, phase). Means of
/// weighted variables are divided by alpha; variances are the plain second
/// moments of the weighted variables (the Reynolds choice).
struct FavreCell {
    double alpha = 0.0;
    double alpha_var = 0.0;
    double rho = 0.0;
    double rho_var = 0.0;
    double u = 0.0;
    double u_var = 0.0;
    double p = 0.0;
    double p_var = 0.0;
};

struct FavreStats {
    std::vector<std::array<FavreCell, 2>> cells;
};

/// Threshold below which a Favre mean is extended by zero instead of divided.
inline constexpr double favre_alpha_eps = 1e-12;

inline FavreStats favre_finalize(const FieldAccumulator& acc) {
    FavreStats out;
    out.cells.resize(acc.cells());
    for (std::size_t i = 0; i < acc.cells(); ++i) {
        for (int k = 0; k < 2; ++k) {
            FavreCell& c = out.cells[i][static_cast<std::size_t>(k)];
            c.alpha = acc.at(i, k, 0).mean();
            c.alpha_var = acc.at(i, k, 0).variance();
            const bool present = c.alpha > favre_alpha_eps;
            c.rho = present ? acc.at(i, k, 1).mean() / c.alpha : 0.0;
            c.u = present ? acc.at(i, k, 2).mean() / c.alpha : 0.0;
            c.p = present ? acc.at(i, k, 3).mean() / c.alpha : 0.0;
            c.rho_var = acc.at(i, k, 1).variance();
            c.u_var = acc.at(i, k, 2).variance();
            c.p_var = acc.at(i, k, 3).variance();
        }
    }
    return out;
}

/// L1 distance dx * sum_i |a_i - b_i| between two per-cell fields.
inline double cauchy_rate(const std::vector<double>& a, const std::vector<double>& b, double dx) {
    if (a.size() != b.size()) throw std::invalid_argument("stats: field size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
    return dx * sum;
}

}  // namespace tpflow
