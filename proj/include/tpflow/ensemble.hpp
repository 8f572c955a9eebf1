#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tpflow/front_tracking.hpp"
#include "tpflow/microscale.hpp"
#include "tpflow/stats.hpp"

namespace tpflow {

struct SamplerConfig {
    enum class Kind { uniform, random_nsub, gp } kind = Kind::uniform;
    int n_sub = 256;  ///< sub-volumes per generation volume (upper bound in random mode)
    GpConfig gp;
};

struct EnsembleConfig {
    std::vector<MacroCellSpec> cells;  ///< contiguous macro cells with initial data
    SamplerConfig sampler;
    FtConfig ft;
    int samples = 64;
    double t_end = 0.1;
    std::uint64_t seed = 0;
    std::vector<double> output_times;  ///< sorted; defaults to {t_end}
    int workers = 1;
    bool record_time_series = false;   ///< equispaced stepping only
};

/// Ensemble mean/variance of per-sample domain means, one entry per phase.
struct SeriesPoint {
    double t = 0.0;
    std::array<double, 2> alpha{}, rho{}, u{}, p{};
    std::array<double, 2> alpha_var{}, rho_var{}, u_var{}, p_var{};
};

struct EnsembleResult {
    std::vector<double> mesh;               ///< cell edges
    std::vector<double> output_times;
    std::vector<FavreStats> stats;          ///< per output time
    std::vector<std::vector<double>> lambda;  ///< per output time, per cell
    std::vector<SeriesPoint> series;
    std::uint64_t total_collisions = 0;
    double wall_seconds = 0.0;
};

/// Coalesce adjacent macro cells carrying identical fractions and states into
/// generation volumes, so the sampler sees homogeneous regions whole.
inline std::vector<MacroCellSpec> merge_volumes(const std::vector<MacroCellSpec>& cells) {
    std::vector<MacroCellSpec> out;
    for (const MacroCellSpec& c : cells) {
        if (!out.empty() && out.back().alpha1 == c.alpha1 && out.back().phase1 == c.phase1 &&
            out.back().phase2 == c.phase2)
            out.back().xhi = c.xhi;
        else
            out.push_back(c);
    }
    return out;
}

/// Monte-Carlo estimate of the interface density: expected interface count
/// per cell divided by the cell width. Interfaces sitting exactly on a cell
/// edge count toward the right cell.
inline std::vector<double> estimate_interface_density(const std::vector<PhaseLayout>& layouts,
                                                      const std::vector<double>& mesh) {
    if (layouts.empty() || mesh.size() < 2)
        throw std::invalid_argument("ensemble: need layouts and a mesh");
    std::vector<double> lambda(mesh.size() - 1, 0.0);
    for (const PhaseLayout& l : layouts) {
        for (std::size_t i = 1; i + 1 < l.edges.size(); ++i) {
            const double x = l.edges[i];
            if (x < mesh.front() || x >= mesh.back()) continue;
            const auto it = std::upper_bound(mesh.begin(), mesh.end(), x);
            const std::size_t cell = static_cast<std::size_t>(it - mesh.begin()) - 1;
            lambda[cell] += 1.0;
        }
    }
    for (std::size_t c = 0; c + 1 < mesh.size(); ++c)
        lambda[c] /= static_cast<double>(layouts.size()) * (mesh[c + 1] - mesh[c]);
    return lambda;
}

namespace ensemble_detail {

// Everything one sample contributes, stored so aggregation can run in
// sample-index order regardless of which worker produced it.
struct SampleData {
    std::vector<std::vector<std::array<PhaseMoments, 2>>> moments;  // per output time
    std::vector<std::vector<double>> iface_counts;                  // per output time, per cell
    std::vector<std::array<double, 8>> series;                      // per step: a,r,u,p x 2 phases
    std::vector<double> series_times;
    std::uint64_t collisions = 0;
};

inline MicroRealization draw_realization(const EnsembleConfig& cfg,
                                         const std::vector<MacroCellSpec>& volumes,
                                         std::uint64_t sample) {
    if (cfg.sampler.kind == SamplerConfig::Kind::gp) {
        RngStream rng(cfg.seed, sample, 0);
        return generate_gp(volumes, cfg.sampler.gp, rng, sample);
    }
    MicroRealization out;
    out.stream_id = sample;
    out.edges.push_back(volumes.front().xlo);
    for (std::size_t v = 0; v < volumes.size(); ++v) {
        RngStream rng(cfg.seed, sample, v + 1);
        int n = cfg.sampler.n_sub;
        if (cfg.sampler.kind == SamplerConfig::Kind::random_nsub)
            n = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(cfg.sampler.n_sub)));
        const int n1 = micro_detail::phase1_count(volumes[v].alpha1, n);
        append_cell_from_mask(out, volumes[v], micro_detail::sample_subset(n, n1, rng));
    }
    return out;
}

inline std::vector<double> interface_counts(const FrontConfiguration& cfg,
                                            const std::vector<double>& mesh) {
    std::vector<double> counts(mesh.size() - 1, 0.0);
    const double t = cfg.time();
    for (const Front& f : cfg.fronts()) {
        if (!f.is_material_interface()) continue;
        const double x = f.position(t);
        if (x < mesh.front() || x >= mesh.back()) continue;
        const auto it = std::upper_bound(mesh.begin(), mesh.end(), x);
        counts[static_cast<std::size_t>(it - mesh.begin()) - 1] += 1.0;
    }
    return counts;
}

inline std::array<double, 8> domain_means(const std::vector<std::array<PhaseMoments, 2>>& m) {
    std::array<double, 8> out{};
    for (int k = 0; k < 2; ++k) {
        double theta = 0, xr = 0, xu = 0, xp = 0;
        for (const auto& cell : m) {
            theta += cell[static_cast<std::size_t>(k)].theta;
            xr += cell[static_cast<std::size_t>(k)].xrho;
            xu += cell[static_cast<std::size_t>(k)].xu;
            xp += cell[static_cast<std::size_t>(k)].xp;
        }
        const double n = static_cast<double>(m.size());
        out[static_cast<std::size_t>(k)] = theta / n;
        if (theta > favre_alpha_eps) {
            out[static_cast<std::size_t>(2 + k)] = xr / theta;
            out[static_cast<std::size_t>(4 + k)] = xu / theta;
            out[static_cast<std::size_t>(6 + k)] = xp / theta;
        }
    }
    return out;
}

inline SampleData run_sample(const EnsembleConfig& cfg, const std::vector<MacroCellSpec>& volumes,
                             const std::vector<double>& mesh, std::uint64_t sample) {
    const MicroRealization real = draw_realization(cfg, volumes, sample);
    FrontConfiguration front = init_fronts(real.edges, real.state, cfg.ft);

    SampleData data;
    const double dx = mesh[1] - mesh[0];
    std::size_t next_out = 0;

    auto record = [&](const ResampleResult& rs, double t) {
        if (cfg.record_time_series) {
            data.series.push_back(domain_means(phase_moments(rs, mesh, cfg.ft.phases)));
            data.series_times.push_back(t);
        }
        while (next_out < cfg.output_times.size() &&
               std::abs(cfg.output_times[next_out] - t) <= 1e-12 * (1.0 + std::abs(t))) {
            data.moments.push_back(phase_moments(rs, mesh, cfg.ft.phases));
            data.iface_counts.push_back(interface_counts(rs.config, mesh));
            ++next_out;
        }
    };

    double t = 0.0;
    {
        ResampleResult rs = resample(front, mesh, cfg.ft);
        record(rs, t);
        front = std::move(rs.config);
    }
    while (t < cfg.t_end) {
        double dt = stepper(front, t, cfg.t_end, dx, cfg.ft);
        if (next_out < cfg.output_times.size()) dt = std::min(dt, cfg.output_times[next_out] - t);
        evolve(front, t + dt, cfg.ft);
        t += dt;
        ResampleResult rs = resample(front, mesh, cfg.ft);
        record(rs, t);
        front = std::move(rs.config);
    }
    data.collisions = front.collisions();
    return data;
}

}  // namespace ensemble_detail

/// Run the Monte-Carlo driver: generate independent realizations on merged
/// volumes, evolve each through the front tracker with periodic resampling,
/// and accumulate statistics. Results are independent of the worker count;
/// per-sample failures abort the run with the sample's stream identity.
inline EnsembleResult run_ensemble(const EnsembleConfig& cfg_in) {
    EnsembleConfig cfg = cfg_in;
    if (cfg.cells.empty() || cfg.samples < 1 || !(cfg.t_end > 0.0))
        throw std::invalid_argument("ensemble: invalid configuration");
    if (cfg.output_times.empty()) cfg.output_times = {cfg.t_end};
    for (std::size_t i = 0; i < cfg.output_times.size(); ++i)
        if (cfg.output_times[i] < 0.0 || cfg.output_times[i] > cfg.t_end ||
            (i > 0 && cfg.output_times[i] <= cfg.output_times[i - 1]))
            throw std::invalid_argument("ensemble: output times must be sorted within [0, t_end]");
    if (cfg.record_time_series && cfg.ft.step_mode != FtConfig::StepMode::equispaced)
        throw std::invalid_argument("ensemble: time series need equispaced stepping");

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> mesh;
    mesh.reserve(cfg.cells.size() + 1);
    mesh.push_back(cfg.cells.front().xlo);
    for (const MacroCellSpec& c : cfg.cells) {
        if (std::abs(c.xlo - mesh.back()) > 1e-12)
            throw std::invalid_argument("ensemble: macro cells must be contiguous");
        mesh.push_back(c.xhi);
    }

    const std::vector<MacroCellSpec> volumes = merge_volumes(cfg.cells);
    const std::size_t n_samples = static_cast<std::size_t>(cfg.samples);
    std::vector<ensemble_detail::SampleData> samples(n_samples);

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex err_mutex;
    std::string err_message;

    auto worker = [&]() {
        for (;;) {
            const std::size_t l = next.fetch_add(1);
            if (l >= n_samples || failed.load()) return;
            try {
                samples[l] = ensemble_detail::run_sample(cfg, volumes, mesh, l);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(err_mutex);
                failed.store(true);
                if (err_message.empty())
                    err_message = "ensemble: sample " + std::to_string(l) + " (seed " +
                                  std::to_string(cfg.seed) + ", stream " + std::to_string(l) +
                                  ") failed: " + e.what();
                return;
            }
        }
    };

    const int n_workers = std::max(1, cfg.workers);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failed.load()) throw std::runtime_error(err_message);

    // Aggregate in sample-index order so the result is schedule-independent.
    EnsembleResult out;
    out.mesh = mesh;
    out.output_times = cfg.output_times;
    const std::size_t n_cells = mesh.size() - 1;
    const std::size_t n_out = cfg.output_times.size();
    for (const auto& s : samples)
        if (s.moments.size() != n_out)
            throw std::runtime_error("ensemble: sample missed an output time");

    std::vector<FieldAccumulator> acc(n_out, FieldAccumulator(n_cells));
    std::vector<std::vector<double>> lambda(n_out, std::vector<double>(n_cells, 0.0));
    for (std::size_t l = 0; l < n_samples; ++l) {
        for (std::size_t o = 0; o < n_out; ++o) {
            acc[o].add_sample(samples[l].moments[o]);
            for (std::size_t c = 0; c < n_cells; ++c)
                lambda[o][c] += samples[l].iface_counts[o][c];
        }
        out.total_collisions += samples[l].collisions;
    }
    for (std::size_t o = 0; o < n_out; ++o) {
        out.stats.push_back(favre_finalize(acc[o]));
        for (std::size_t c = 0; c < n_cells; ++c)
            lambda[o][c] /= static_cast<double>(n_samples) * (mesh[c + 1] - mesh[c]);
    }
    out.lambda = std::move(lambda);

    if (cfg.record_time_series) {
        const std::size_t n_steps = samples[0].series.size();
        for (const auto& s : samples)
            if (s.series.size() != n_steps)
                throw std::runtime_error("ensemble: samples disagree on step count");
        for (std::size_t j = 0; j < n_steps; ++j) {
            std::array<Welford, 8> w;
            for (std::size_t l = 0; l < n_samples; ++l)
                for (std::size_t v = 0; v < 8; ++v) w[v].add(samples[l].series[j][v]);
            SeriesPoint pt;
            pt.t = samples[0].series_times[j];
            for (int k = 0; k < 2; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                pt.alpha[kk] = w[kk].mean();
                pt.alpha_var[kk] = w[kk].variance();
                pt.rho[kk] = w[2 + kk].mean();
                pt.rho_var[kk] = w[2 + kk].variance();
                pt.u[kk] = w[4 + kk].mean();
                pt.u_var[kk] = w[4 + kk].variance();
                pt.p[kk] = w[6 + kk].mean();
                pt.p_var[kk] = w[6 + kk].variance();
            }
            out.series.push_back(pt);
        }
    }

    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace tpflow
