#include "posl/simgen.hpp"

#include "posl/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace posl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Shared ARMA recursion on deviations from the offset. `dev` and `eps` hold the most recent
// values first.
struct ArmaState {
    std::deque<double> dev;
    std::deque<double> eps;

    double mean_part(std::span<const double> ar, std::span<const double> ma) const {
        double m = 0.0;
        for (std::size_t j = 0; j < ar.size() && j < dev.size(); ++j) m += ar[j] * dev[j];
        for (std::size_t j = 0; j < ma.size() && j < eps.size(); ++j) m += ma[j] * eps[j];
        return m;
    }

    void push(double d, double e, std::size_t keep) {
        dev.push_front(d);
        eps.push_front(e);
        if (dev.size() > keep) dev.pop_back();
        if (eps.size() > keep) eps.pop_back();
    }
};

std::size_t order(const ArimaSpec& s) { return std::max(s.ar_coeffs.size(), s.ma_coeffs.size()); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t purpose) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ (purpose * 0x632be59bd9b4e019ULL));
}

std::mt19937_64 make_rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return std::mt19937_64(seq);
}

bool is_stationary(std::span<const double> ar) {
    if (ar.empty()) return true;
    const auto p = static_cast<Eigen::Index>(ar.size());
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index j = 0; j < p; ++j) companion(0, j) = ar[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 1; j < p; ++j) companion(j, j - 1) = 1.0;
    const Eigen::VectorXcd eig = companion.eigenvalues();
    return eig.cwiseAbs().maxCoeff() < 1.0;
}

void validate(const ArimaSpec& spec) {
    if (!(spec.innovation_sd > 0.0)) throw Error(ErrorCode::InvalidArgument, "innovation sd must be positive");
    const auto needed = 10 * static_cast<int>(spec.ar_coeffs.size() + spec.ma_coeffs.size());
    if (spec.burn_in < needed) {
        throw Error(ErrorCode::InvalidArgument, "burn-in " + std::to_string(spec.burn_in) + " below " + std::to_string(needed));
    }
    if (!is_stationary(spec.ar_coeffs)) throw Error(ErrorCode::NonStationarySpec, "AR polynomial has a root inside the unit circle");
}

void validate(const MarSpec& spec) {
    if (spec.components.empty()) throw Error(ErrorCode::InvalidMixture, "mixture has no components");
    double total = 0.0;
    for (const auto& c : spec.components) {
        if (!(c.mixing_prob > 0.0)) throw Error(ErrorCode::InvalidMixture, "mixing probabilities must be positive");
        if (!c.spec.ma_coeffs.empty()) throw Error(ErrorCode::InvalidMixture, "mixture components must be pure AR");
        validate(c.spec);
        total += c.mixing_prob;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidMixture, "mixing probabilities must sum to 1");
}

void TruthTrace::set(SubjectId id, Time first_time, std::vector<double> values) {
    traces_[id] = {first_time, std::move(values)};
}

std::optional<double> TruthTrace::at(SubjectId id, Time t) const {
    const auto it = traces_.find(id);
    if (it == traces_.end()) return std::nullopt;
    const auto& [first, values] = it->second;
    if (t < first || t >= first + static_cast<Time>(values.size())) return std::nullopt;
    return values[static_cast<std::size_t>(t - first)];
}

std::vector<double> gen_baseline(std::uint64_t seed) {
    auto rng = make_rng(seed);
    std::bernoulli_distribution w1(0.5);
    std::uniform_real_distribution<double> w2(19.0, 90.0);
    std::uniform_real_distribution<double> w3(0.0, 2.0);
    const double a = w1(rng) ? 1.0 : 0.0;
    const double b = w2(rng);
    const double c = w3(rng);
    return {a, b, c};
}

double offset(std::span<const double> x) {
    if (x.size() != 3) throw Error(ErrorCode::DimensionMismatch, "offset expects (W1, W2, W3)");
    return 0.5 * x[0] + 0.02 * x[1] + 0.5 * x[2];
}

namespace {

// switch_time == length gives the unswitched series.
SimSeries run_arma(const ArimaSpec& spec_a, const ArimaSpec& spec_b, int switch_time, int length,
                   std::uint64_t seed, double offset_value) {
    if (length < 1) throw Error(ErrorCode::InvalidArgument, "series length must be >= 1");
    validate(spec_a);
    validate(spec_b);
    auto rng = make_rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t keep = std::max<std::size_t>({order(spec_a), order(spec_b), 1});

    ArmaState state;
    SimSeries out;
    out.y.reserve(static_cast<std::size_t>(length));
    out.psi0.reserve(static_cast<std::size_t>(length));
    for (int step = -spec_a.burn_in + 1; step <= length; ++step) {
        const ArimaSpec& s = step <= switch_time ? spec_a : spec_b;
        const double mean = state.mean_part(s.ar_coeffs, s.ma_coeffs);
        const double e = s.innovation_sd * noise(rng);
        const double d = mean + e;
        state.push(d, e, keep);
        if (step >= 1) {
            out.y.push_back(offset_value + d);
            out.psi0.push_back(offset_value + mean);
        }
    }
    return out;
}

}  // namespace

SimSeries gen_arima(const ArimaSpec& spec, int length, std::uint64_t seed, double offset_value) {
    return run_arma(spec, spec, length, length, seed, offset_value);
}

SimSeries gen_interrupted(const ArimaSpec& spec_a, const ArimaSpec& spec_b, int switch_time, int length,
                          std::uint64_t seed, double offset_value) {
    if (switch_time < 1 || switch_time >= length) {
        throw Error(ErrorCode::InvalidArgument, "switch time must lie in [1, length)");
    }
    return run_arma(spec_a, spec_b, switch_time, length, seed, offset_value);
}

SimSeries gen_mar(const MarSpec& spec, int length, std::uint64_t seed) {
    validate(spec);
    if (length < 1) throw Error(ErrorCode::InvalidArgument, "series length must be >= 1");
    auto rng = make_rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> pick(0.0, 1.0);

    std::size_t keep = 1;
    int burn_in = 0;
    for (const auto& c : spec.components) {
        keep = std::max(keep, c.spec.ar_coeffs.size());
        burn_in = std::max(burn_in, c.spec.burn_in);
    }
    const bool single = spec.components.size() == 1;

    ArmaState state;
    SimSeries out;
    for (int step = -burn_in + 1; step <= length; ++step) {
        std::size_t k = 0;
        if (!single) {
            const double u = pick(rng);
            double cum = 0.0;
            k = spec.components.size() - 1;
            for (std::size_t j = 0; j < spec.components.size(); ++j) {
                cum += spec.components[j].mixing_prob;
                if (u < cum) {
                    k = j;
                    break;
                }
            }
        }
        double expected = 0.0;
        for (const auto& c : spec.components) expected += c.mixing_prob * state.mean_part(c.spec.ar_coeffs, {});
        const auto& comp = spec.components[k].spec;
        const double mean = state.mean_part(comp.ar_coeffs, {});
        const double e = comp.innovation_sd * noise(rng);
        const double d = mean + e;
        state.push(d, e, keep);
        if (step >= 1) {
            out.y.push_back(spec.level + d);
            out.psi0.push_back(spec.level + expected);
            out.components.push_back(static_cast<int>(k));
        }
    }
    return out;
}

ArimaSpec default_ar5() { return {{0.4, 0.2, 0.1, 0.05, 0.05}, {}, 1.0, 200}; }

ArimaSpec default_ma5() { return {{}, {0.8, 0.6, 0.4, 0.2, 0.1}, 1.0, 200}; }

MarSpec default_mar_historical() {
    return {{{0.7, {{0.2, 0.1}, {}, 1.0, 200}}, {0.3, {{0.2, 0.1}, {}, 2.0, 200}}}, 2.0};
}

MarSpec default_mar_target() {
    return {{{0.7, {{0.6, 0.25}, {}, 0.5, 200}}, {0.3, {{0.6, 0.25}, {}, 1.0, 200}}}, 2.0};
}

Simulation build_simulation(int which, int n_historical, int tau, std::uint64_t seed, const SimulationParams& params) {
    if (which < 1 || which > 4) throw Error(ErrorCode::InvalidArgument, "simulation must be 1..4");
    if (n_historical < 1) throw Error(ErrorCode::InvalidArgument, "need at least one historical series");
    if (tau < 2) throw Error(ErrorCode::InvalidArgument, "tau must be >= 2");

    const bool with_x = which == 2 || which == 3;
    const auto make_record = [&](SubjectId id, const std::vector<double>& x, const SimSeries& s) {
        PanelRecord r;
        r.subject_id = id;
        r.baseline = x;
        for (int k = 0; k < tau; ++k) {
            r.times.push_back(k + 1);
            r.covariates.emplace_back();
            r.outcomes.push_back(s.y[static_cast<std::size_t>(k)]);
        }
        return r;
    };

    Simulation sim;
    sim.which = which;
    std::vector<PanelRecord> historical;
    for (SubjectId id = 1; id <= n_historical + 1; ++id) {
        const bool is_target = id == n_historical + 1;
        const auto series_seed = derive_seed(seed, static_cast<std::uint64_t>(id), 1);
        const std::vector<double> x = with_x ? gen_baseline(derive_seed(seed, static_cast<std::uint64_t>(id), 2))
                                             : std::vector<double>{};
        const double off = with_x ? offset(x) : 0.0;
        SimSeries s;
        if (which == 4) {
            s = gen_mar(is_target ? params.mar_target : params.mar_historical, tau, series_seed);
        } else if (!is_target) {
            s = gen_arima(params.historical, tau, series_seed, off);
        } else if (which == 3) {
            s = gen_interrupted(params.target, params.historical, tau / 2, tau, series_seed, off);
        } else {
            s = gen_arima(params.target, tau, series_seed, off);
        }
        sim.truth.set(id, 1, s.psi0);
        auto record = make_record(id, x, s);
        if (is_target) {
            sim.target = std::move(record);
        } else {
            historical.push_back(std::move(record));
        }
    }
    sim.historical = Panel(std::move(historical), tau);
    return sim;
}

}  // namespace posl
